//! Fixed Gauss-Legendre rules and adaptive Gauss-Kronrod integration.

#![allow(clippy::excessive_precision)]

use crate::scalar::Real;

const GL8_NODES: [f64; 4] = [
    0.183_434_642_495_649_804_939_476_1,
    0.525_532_409_916_328_985_817_739_0,
    0.796_666_477_413_626_739_591_553_9,
    0.960_289_856_497_536_231_683_560_9,
];
const GL8_WEIGHTS: [f64; 4] = [
    0.362_683_783_378_361_982_965_150_4,
    0.313_706_645_877_887_287_337_962_2,
    0.222_381_034_453_374_470_544_356_0,
    0.101_228_536_290_376_259_152_531_4,
];

const GL16_NODES: [f64; 8] = [
    0.095_012_509_837_637_440_185_319_3,
    0.281_603_550_779_258_913_230_460_5,
    0.458_016_777_657_227_386_342_419_4,
    0.617_876_244_402_643_748_446_671_8,
    0.755_404_408_355_003_033_895_101_2,
    0.865_631_202_387_831_743_880_467_9,
    0.944_575_023_073_232_576_077_988_4,
    0.989_400_934_991_649_932_596_154_2,
];
const GL16_WEIGHTS: [f64; 8] = [
    0.189_450_610_455_068_496_285_396_7,
    0.182_603_415_044_923_588_866_763_7,
    0.169_156_519_395_002_538_189_312_1,
    0.149_595_988_816_576_732_081_501_7,
    0.124_628_971_255_533_872_052_476_3,
    0.095_158_511_682_492_784_809_925_1,
    0.062_253_523_938_647_892_862_843_8,
    0.027_152_459_411_754_094_851_780_6,
];

// Kronrod 15-point abscissae; odd positions (1, 3, 5) and the centre are the
// embedded 7-point Gauss nodes.
const GK15_NODES: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const GK15_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const G7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

fn symmetric_rule<T: Real, F: FnMut(T) -> T>(a: T, b: T, nodes: &[f64], weights: &[f64], mut f: F) -> T {
    let mid = (a + b) * T::half();
    let half = (b - a) * T::half();
    let mut acc = T::zero();
    for (&x, &w) in nodes.iter().zip(weights) {
        let dx = half * T::lit(x);
        acc += T::lit(w) * (f(mid - dx) + f(mid + dx));
    }
    acc * half
}

/// 16-point Gauss-Legendre rule on `[a, b]`.
pub fn gauss_legendre<T: Real, F: FnMut(T) -> T>(a: T, b: T, f: F) -> T {
    symmetric_rule(a, b, &GL16_NODES, &GL16_WEIGHTS, f)
}

/// 8-point Gauss-Legendre rule on `[a, b]`.
pub fn gauss_legendre8<T: Real, F: FnMut(T) -> T>(a: T, b: T, f: F) -> T {
    symmetric_rule(a, b, &GL8_NODES, &GL8_WEIGHTS, f)
}

/// Nodes and weights of the 16-point rule mapped to `[a, b]`.
pub fn gauss_legendre_nodes<T: Real>(a: T, b: T) -> [(T, T); 16] {
    let mid = (a + b) * T::half();
    let half = (b - a) * T::half();
    let mut out = [(T::zero(), T::zero()); 16];
    for (k, (&x, &w)) in GL16_NODES.iter().zip(&GL16_WEIGHTS).enumerate() {
        let dx = half * T::lit(x);
        let wk = half * T::lit(w);
        out[2 * k] = (mid - dx, wk);
        out[2 * k + 1] = (mid + dx, wk);
    }
    out
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral<T> {
    pub value: T,
    pub abs_error: T,
    pub evaluations: usize,
}

fn gk15<T: Real, F: FnMut(T) -> T>(a: T, b: T, f: &mut F) -> (T, T) {
    let mid = (a + b) * T::half();
    let half = (b - a) * T::half();
    let fc = f(mid);
    let mut kronrod = fc * T::lit(GK15_WEIGHTS[7]);
    let mut gauss = fc * T::lit(G7_WEIGHTS[3]);
    for j in 0..7 {
        let dx = half * T::lit(GK15_NODES[j]);
        let s = f(mid - dx) + f(mid + dx);
        kronrod += T::lit(GK15_WEIGHTS[j]) * s;
        if j % 2 == 1 {
            gauss += T::lit(G7_WEIGHTS[j / 2]) * s;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Adaptive Gauss-Kronrod (7/15) integration of `f` over `[a, b]`.
///
/// Intervals are bisected until the Kronrod-Gauss difference on each piece
/// falls below its share of `max(abs_tol, rel_tol·|I|)`.
pub fn integrate<T: Real, F: FnMut(T) -> T>(mut f: F, a: T, b: T, abs_tol: T, rel_tol: T) -> Integral<T> {
    const MAX_DEPTH: u32 = 40;
    let (whole, err) = gk15(a, b, &mut f);
    let mut evaluations = 15;
    let target = abs_tol.max(rel_tol * whole.abs());
    if err <= target || b == a {
        return Integral { value: whole, abs_error: err, evaluations };
    }
    // depth-first stack of (lo, hi, estimate, error, depth)
    let mut stack = vec![(a, b, whole, err, 0u32)];
    let mut value = T::zero();
    let mut abs_error = T::zero();
    let width = b - a;
    while let Some((lo, hi, est, e, depth)) = stack.pop() {
        let share = target * ((hi - lo) / width).abs();
        if e <= share || depth >= MAX_DEPTH {
            value += est;
            abs_error += e;
            continue;
        }
        let mid = (lo + hi) * T::half();
        let (left, el) = gk15(lo, mid, &mut f);
        let (right, er) = gk15(mid, hi, &mut f);
        evaluations += 30;
        stack.push((mid, hi, right, er, depth + 1));
        stack.push((lo, mid, left, el, depth + 1));
    }
    Integral { value, abs_error, evaluations }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_is_exact_for_polynomials() {
        // degree 31 is the limit for 16 points
        let v = gauss_legendre(-1.0_f64, 2.0, |x| x.powi(30));
        let exact = (2.0_f64.powi(31) + 1.0) / 31.0;
        assert!((v / exact - 1.0).abs() < 1e-13);
        let v8 = gauss_legendre8(0.0_f64, 1.0, |x| x.powi(15));
        assert!((v8 - 1.0 / 16.0).abs() < 1e-15);
        let nodes = gauss_legendre_nodes(0.0_f64, 3.0);
        let s: f64 = nodes.iter().map(|&(x, w)| w * x * x).sum();
        assert!((s - 9.0).abs() < 1e-13);
    }

    #[test]
    fn kronrod_handles_peaked_integrands() {
        let r = integrate(|x: f64| (-(x * x) / 2e-4).exp(), -1.0, 1.0, 1e-12, 1e-12);
        let exact = (2e-4 * std::f64::consts::PI).sqrt() * libm::erf(1.0 / (2e-4_f64).sqrt());
        assert!((r.value - exact).abs() < 1e-11, "{} vs {exact}", r.value);
        assert!(r.evaluations > 15);
    }

    #[test]
    fn kronrod_smooth_single_panel() {
        let r = integrate(|x: f64| x.cos(), 0.0, 1.0, 1e-10, 0.0);
        assert!((r.value - 1.0_f64.sin()).abs() < 1e-14);
        assert_eq!(r.evaluations, 15);
    }
}
