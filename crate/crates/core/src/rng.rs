//! Counter-based random source shared by every seeded component.
//!
//! All randomness in this crate (Monte Carlo paths, DE populations, weight
//! initialization, shuffles) flows through one explicitly specified
//! generator so results are reproducible bit-for-bit across runs, thread
//! counts, and platforms.
//!
//! The generator is the SplitMix64 output function applied to
//! `key + counter * GOLDEN_GAMMA`: draw `i` of a stream is a pure function
//! of `(key, i)`, which is what makes per-path/per-block parallelism safe.
//! Normals are produced by the inverse-CDF transform (Wichura's AS 241,
//! accurate to ~1e-15), so a uniform stream maps deterministically to a
//! normal stream.

/// Weyl-sequence increment used by SplitMix64 (2^64 / golden ratio).
pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer: a bijective avalanching mix on 64 bits.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A deterministic stream of draws identified by `(key, counter)`.
#[derive(Debug, Clone)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    /// Root stream for a seed.
    pub fn new(seed: u64) -> Self {
        Self {
            key: mix64(seed),
            counter: 0,
        }
    }

    /// Independent substream `stream` of `seed` (used per MC path, per DE run,
    /// etc.). Distinct `(seed, stream)` pairs give unrelated sequences.
    pub fn substream(seed: u64, stream: u64) -> Self {
        Self {
            key: mix64(mix64(seed) ^ stream.wrapping_mul(GOLDEN_GAMMA)),
            counter: 0,
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let out = mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN_GAMMA)));
        self.counter = self.counter.wrapping_add(1);
        out
    }

    /// Uniform draw strictly inside (0, 1): 53 mantissa bits centered on the
    /// cell midpoint, so 0.0 and 1.0 are never produced (safe to feed the
    /// inverse normal CDF).
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Uniform draw on [lo, hi).
    #[inline]
    pub fn next_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal draw via the inverse-CDF transform.
    #[inline]
    pub fn next_normal(&mut self) -> f64 {
        inverse_normal_cdf(self.next_f64())
    }

    /// Uniform integer in [0, n) by fixed-point multiplication (Lemire).
    /// The tiny modulo bias (< 2^-64 * n) is irrelevant here and the mapping
    /// is branch-free and deterministic.
    #[inline]
    pub fn next_below(&mut self, n: usize) -> usize {
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, slice: &mut [T]) {
        for i in (1..slice.len()).rev() {
            let j = self.next_below(i + 1);
            slice.swap(i, j);
        }
    }
}

/// Inverse of the standard normal CDF (Wichura 1988, algorithm AS 241,
/// routine PPND16). Absolute error is below 1e-15 over (0, 1).
pub fn inverse_normal_cdf(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "inverse_normal_cdf requires p in (0,1)");
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        // Central region: rational approximation in r = 0.180625 - q^2.
        let r = 0.180625 - q * q;
        const A: [f64; 8] = [
            3.387_132_872_796_366_608e0,
            1.331_416_678_917_843_774_5e2,
            1.971_590_950_306_551_442_7e3,
            1.373_169_376_550_946_112_5e4,
            4.592_195_393_154_987_145_7e4,
            6.726_577_092_700_870_085_3e4,
            3.343_057_558_358_812_810_5e4,
            2.509_080_928_730_122_672_7e3,
        ];
        const B: [f64; 8] = [
            1.0,
            4.231_333_070_160_091_125_2e1,
            6.871_870_074_920_579_083e2,
            5.394_196_021_424_751_107_7e3,
            2.121_379_430_158_659_586_7e4,
            3.930_789_580_009_271_061e4,
            2.872_908_573_572_194_267_4e4,
            5.226_495_278_852_854_561e3,
        ];
        q * poly(&A, r) / poly(&B, r)
    } else {
        // Tails: rational approximations in r = sqrt(-ln(min(p, 1-p))).
        let mut r = if q < 0.0 { p } else { 1.0 - p };
        r = (-r.ln()).sqrt();
        let x = if r <= 5.0 {
            let r = r - 1.6;
            const C: [f64; 8] = [
                1.423_437_110_749_683_577_34e0,
                4.630_337_846_156_545_295_9e0,
                5.769_497_221_460_691_405_5e0,
                3.647_848_324_763_204_605_04e0,
                1.270_458_252_452_368_382_58e0,
                2.417_807_251_774_506_117_7e-1,
                2.272_384_498_926_918_458_33e-2,
                7.745_450_142_783_414_076_4e-4,
            ];
            const D: [f64; 8] = [
                1.0,
                2.053_191_626_637_758_821_87e0,
                1.676_384_830_183_803_849_4e0,
                6.897_673_349_851_000_045_5e-1,
                1.481_039_764_274_800_745_9e-1,
                1.519_866_656_361_645_719_66e-2,
                5.475_938_084_995_344_946e-4,
                1.050_750_071_644_416_843_24e-9,
            ];
            poly(&C, r) / poly(&D, r)
        } else {
            let r = r - 5.0;
            const E: [f64; 8] = [
                6.657_904_643_501_103_777_2e0,
                5.463_784_911_164_114_369_9e0,
                1.784_826_539_917_291_335_8e0,
                2.965_605_718_285_048_912_3e-1,
                2.653_218_952_657_612_309_3e-2,
                1.242_660_947_388_078_438_6e-3,
                2.711_555_568_743_487_578_15e-5,
                2.010_334_399_292_288_132_65e-7,
            ];
            const F: [f64; 8] = [
                1.0,
                5.998_322_065_558_879_376_9e-1,
                1.369_298_809_227_358_053_1e-1,
                1.487_536_129_085_061_485_25e-2,
                7.868_691_311_456_132_591e-4,
                1.846_318_317_510_054_681_8e-5,
                1.421_511_758_316_445_888_7e-7,
                2.044_263_103_389_939_785_64e-15,
            ];
            poly(&E, r) / poly(&F, r)
        };
        if q < 0.0 {
            -x
        } else {
            x
        }
    }
}

#[inline]
fn poly(coeffs: &[f64; 8], x: f64) -> f64 {
    // Horner evaluation, highest degree last in the table.
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Standard normal CDF via erfc (used by the Black-Scholes pricer).
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}
