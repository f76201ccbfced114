use heston_deepcal::heston::QuadratureConfig;
use heston_deepcal::nn::TrainConfig;
use heston_deepcal::optim::ParamBounds;
use heston_deepcal::surrogate::*;

fn main() {
    let spec = SamplingSpec {
        bounds: ParamBounds::new([1.0, 0.02, 0.2, -0.8, 0.02], [3.0, 0.09, 0.6, -0.1, 0.09]).unwrap(),
        maturity_range: (0.1, 1.0),
        moneyness_range: (-0.2, 0.2),
        n_samples: 150,
        scheme: SamplingScheme::UniformRandom,
        seed: 42,
    };
    let set = gen_synthetic(&spec, &QuadratureConfig::default()).unwrap();
    let constant: Vec<SurrogateSample> = set.samples.iter().map(|s| SurrogateSample { price: 0.25, ..*s }).collect();
    for epochs in [600usize, 2000, 5000, 10000] {
        let cfg = TrainConfig { epochs, seed: 3, ..TrainConfig::default() };
        let (_, rmse) = train_surrogate(&constant, &SurrogateArch::default(), &cfg).unwrap();
        println!("epochs={epochs}: val rmse {rmse:.3e}");
    }
}
