//! Gaussian special functions and adaptive quadrature.

use crate::error::{Error, Result};

pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Gaussian tails beyond this are dropped by the quadrature (mass < 1e-31).
pub const TAIL_CUTOFF: f64 = 12.0;

/// Ordered, disjoint union of intervals on the half-line `[0, +inf]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalUnion {
    intervals: Vec<(f64, f64)>,
}

impl IntervalUnion {
    pub fn new(intervals: Vec<(f64, f64)>) -> Result<Self> {
        let mut prev_end = f64::NEG_INFINITY;
        for (j, &(a, b)) in intervals.iter().enumerate() {
            if a.is_nan() || b.is_nan() || !a.is_finite() {
                return Err(Error::InvalidInput(format!("interval {j} has a non-finite left end ({a}, {b})")));
            }
            if a < 0.0 {
                return Err(Error::InvalidInput(format!("interval {j} starts below zero ({a}, {b})")));
            }
            if a >= b {
                return Err(Error::InvalidInput(format!("interval {j} is empty ({a}, {b})")));
            }
            if a <= prev_end {
                return Err(Error::InvalidInput(format!(
                    "interval {j} overlaps or touches its predecessor ({a} <= {prev_end})"
                )));
            }
            if b == f64::INFINITY && j + 1 != intervals.len() {
                return Err(Error::InvalidInput("only the last interval may be unbounded".into()));
            }
            prev_end = b;
        }
        Ok(Self { intervals })
    }

    /// `[0, +inf)`.
    pub fn half_line() -> Self {
        Self { intervals: vec![(0.0, f64::INFINITY)] }
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains(&self, t: f64) -> bool {
        self.intervals.iter().any(|&(a, b)| t >= a && t <= b)
    }

    /// Gaussian mass of the symmetric set `-S ∪ S`.
    pub fn symmetric_mass(&self) -> f64 {
        // upper-tail differences keep precision for far-out intervals
        2.0 * self.intervals.iter().map(|&(a, b)| std_normal_cdf(-a) - std_normal_cdf(-b)).sum::<f64>()
    }
}

/// φ(x), defined on the extended line (φ(±inf) = 0).
#[inline]
pub fn npdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// φ(x) for finite `x`.
pub fn std_normal_pdf(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::InvalidInput(format!("pdf argument must be finite, got {x}")));
    }
    Ok(npdf(x))
}

/// Φ(x) through erfc; accurate to a few ulp in the lower tail.
#[inline]
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// 2Φ(x) − 1 without the subtraction.
#[inline]
pub fn two_cdf_minus_one(x: f64) -> f64 {
    libm::erf(x * FRAC_1_SQRT_2)
}

/// Φ⁻¹(u) for u in (0, 1).
pub fn std_normal_quantile(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::InvalidInput(format!("quantile requires u in (0,1), got {u}")));
    }
    if u > 0.5 {
        // 1 - u is exact here
        return Ok(-lower_quantile(1.0 - u));
    }
    Ok(lower_quantile(u))
}

/// Φ⁻¹ on the closed interval, mapping 0 and 1 to ∓inf.
pub fn std_normal_quantile_ext(u: f64) -> Result<f64> {
    if u == 0.0 {
        Ok(f64::NEG_INFINITY)
    } else if u == 1.0 {
        Ok(f64::INFINITY)
    } else {
        std_normal_quantile(u)
    }
}

fn lower_quantile(u: f64) -> f64 {
    let mut x = acklam(u);
    for _ in 0..2 {
        let pdf = npdf(x);
        if pdf == 0.0 {
            break;
        }
        x -= (std_normal_cdf(x) - u) / pdf;
    }
    x
}

// Acklam's rational approximation, relative error about 1.15e-9.
fn acklam(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] =
        [7.784_695_709_041_462e-3, 3.224_671_290_700_398e-1, 2.445_134_137_142_996, 3.754_408_661_907_416];
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// P(G₁ ≤ x, G₂ ≤ y) for a standard bivariate normal with correlation `corr`.
///
/// Uses Φ₂ = Φ(x)Φ(y) + (2π)⁻¹ ∫₀^{asin ρ} exp(−(x² − 2xy sinθ + y²)/(2cos²θ)) dθ,
/// integrated by adaptive Gauss–Kronrod.
pub fn bivariate_normal_cdf(x: f64, y: f64, corr: f64) -> Result<f64> {
    if x.is_nan() || y.is_nan() || corr.is_nan() {
        return Err(Error::InvalidInput("bivariate cdf got NaN".into()));
    }
    if corr.abs() > 1.0 {
        return Err(Error::InvalidInput(format!("correlation {corr} outside [-1, 1]")));
    }
    if x == f64::NEG_INFINITY || y == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    if x == f64::INFINITY {
        return Ok(std_normal_cdf(y));
    }
    if y == f64::INFINITY {
        return Ok(std_normal_cdf(x));
    }
    if corr == 1.0 {
        return Ok(std_normal_cdf(x.min(y)));
    }
    if corr == -1.0 {
        return Ok((std_normal_cdf(x) - std_normal_cdf(-y)).max(0.0));
    }
    let base = std_normal_cdf(x) * std_normal_cdf(y);
    let upper = corr.asin();
    if upper == 0.0 {
        return Ok(base);
    }
    let (xx, yy, xy) = (x * x, y * y, x * y);
    let integrand = |theta: f64| {
        let (s, c) = theta.sin_cos();
        let c2 = c * c;
        if c2 == 0.0 {
            return if x == y && s > 0.0 { (-0.5 * xx).exp() } else { 0.0 };
        }
        (-(xx - 2.0 * xy * s + yy) / (2.0 * c2)).exp()
    };
    let integral = integrate(integrand, 0.0, upper, 1e-16, 1e-14)?;
    Ok((base + integral / (2.0 * std::f64::consts::PI)).clamp(0.0, 1.0))
}

/// ∫_domain f(t)φ(t) dt with tails truncated at |t| = 12.
pub fn expectation_over_gaussian<F: Fn(f64) -> f64>(f: F, domain: &IntervalUnion) -> Result<f64> {
    let g = |t: f64| f(t) * npdf(t);
    let mut pieces = Vec::with_capacity(domain.intervals.len());
    for &(a, b) in &domain.intervals {
        let lo = a.min(TAIL_CUTOFF);
        let hi = b.min(TAIL_CUTOFF);
        if hi > lo {
            pieces.push((lo, hi));
        }
    }
    // a coarse pass fixes the absolute scale for the relative target
    let mut scale = 0.0;
    for &(a, b) in &pieces {
        scale += gk15(&g, a, b).0.abs();
    }
    let abs_tol = (1e-13 * scale).max(1e-300);
    let total_len: f64 = pieces.iter().map(|(a, b)| b - a).sum();
    let mut sum = 0.0;
    for &(a, b) in &pieces {
        sum += integrate(g, a, b, abs_tol * (b - a) / total_len, 1e-13)?;
    }
    if !sum.is_finite() {
        return Err(Error::NonConvergence("integrand produced a non-finite value".into()));
    }
    Ok(sum)
}

/// Closed form of I_k(α) = ∫₀^α f_k(t)φ(t) dt with f₁ = Φ(τt), f₂ = φ(τt),
/// f₃ = tΦ(τt), f₄ = t²Φ(τt).
pub fn i_k(alpha: f64, k: u8, rho_g: f64) -> Result<f64> {
    if alpha.is_nan() || alpha < 0.0 {
        return Err(Error::InvalidInput(format!("I_k needs alpha >= 0, got {alpha}")));
    }
    if !(rho_g.abs() < 1.0) {
        return Err(Error::InvalidInput(format!("I_k needs |rho_g| < 1, got {rho_g}")));
    }
    let sigma = (1.0 - rho_g * rho_g).sqrt();
    let tau = rho_g / sigma;
    let phi0 = INV_SQRT_2PI;
    let i2 = || sigma * phi0 * (std_normal_cdf(alpha / sigma) - 0.5);
    let i1 = || -> Result<f64> {
        Ok(std_normal_cdf(alpha)
            - 0.5
            - (bivariate_normal_cdf(alpha, 0.0, rho_g)? - bivariate_normal_cdf(0.0, 0.0, rho_g)?))
    };
    let inf = alpha == f64::INFINITY;
    let pdf_a = npdf(alpha);
    let pdf_a_cdf_ta = if inf { 0.0 } else { pdf_a * std_normal_cdf(tau * alpha) };
    match k {
        1 => i1(),
        2 => Ok(i2()),
        3 => Ok(tau * i2() - (pdf_a_cdf_ta - 0.5 * phi0)),
        4 => {
            let a_term = if inf { 0.0 } else { alpha * pdf_a_cdf_ta };
            let tail = if inf { 0.0 } else { pdf_a * npdf(tau * alpha) };
            Ok(i1()? - a_term + rho_g * sigma * (phi0 * phi0 - tail))
        }
        _ => Err(Error::InvalidInput(format!("I_k index must be 1..4, got {k}"))),
    }
}

// Gauss–Kronrod 7/15 nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod on a finite interval. Accepts a panel when its
/// error estimate is below `max(abs_tol·len/L, rel_tol·|panel|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidInput(format!("integration limits must be finite: [{a}, {b}]")));
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let len = hi - lo;
    let mut stack = vec![(lo, hi, 0u32)];
    let mut total = 0.0;
    let mut comp = 0.0;
    while let Some((x0, x1, depth)) = stack.pop() {
        let (val, err) = gk15(&f, x0, x1);
        if !val.is_finite() {
            return Err(Error::NonConvergence(format!("non-finite integrand on [{x0}, {x1}]")));
        }
        let tol = (abs_tol * (x1 - x0) / len).max(rel_tol * val.abs());
        if err <= tol || depth >= 50 || (x1 - x0) <= 1e-15 * len {
            if depth >= 50 && err > tol.max(1e-12) {
                return Err(Error::NonConvergence(format!(
                    "quadrature did not converge on [{x0}, {x1}] (err {err:e})"
                )));
            }
            // Kahan sum over accepted panels
            let y = val - comp;
            let t = total + y;
            comp = (t - total) - y;
            total = t;
        } else {
            let mid = 0.5 * (x0 + x1);
            stack.push((mid, x1, depth + 1));
            stack.push((x0, mid, depth + 1));
        }
    }
    Ok(sign * total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn pdf_values() {
        assert_abs_diff_eq!(std_normal_pdf(0.0).unwrap(), 0.398_942_280_4, epsilon = 1e-10);
        assert_abs_diff_eq!(std_normal_pdf(1.0).unwrap(), 0.241_970_724_5, epsilon = 1e-10);
        assert_eq!(npdf(2.3), npdf(-2.3));
        assert!(std_normal_pdf(f64::INFINITY).is_err());
        assert!(std_normal_pdf(f64::NAN).is_err());
        // normalization by quadrature
        let mass = integrate(npdf, -TAIL_CUTOFF, TAIL_CUTOFF, 1e-15, 1e-14).unwrap();
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn cdf_values() {
        assert_eq!(std_normal_cdf(0.0), 0.5);
        assert_eq!(std_normal_cdf(f64::INFINITY), 1.0);
        assert_eq!(std_normal_cdf(f64::NEG_INFINITY), 0.0);
        assert_abs_diff_eq!(std_normal_cdf(1.0), 0.841_344_746_1, epsilon = 1e-10);
        let quad = 0.5 + integrate(npdf, 0.0, 1.0, 1e-16, 1e-15).unwrap();
        assert_abs_diff_eq!(std_normal_cdf(1.0), quad, epsilon = 1e-15);
    }

    #[test]
    fn quantile_values() {
        assert_eq!(std_normal_quantile(0.5).unwrap(), 0.0);
        // the 10-digit literal for Φ(1) maps to 1 + 1.3e-10; full precision maps to 1
        let x = std_normal_quantile(0.841_344_746_1).unwrap();
        assert!((std_normal_cdf(x) - 0.841_344_746_1).abs() <= 1e-13);
        assert_abs_diff_eq!(x, 1.0, epsilon = 2e-10);
        assert_abs_diff_eq!(std_normal_quantile(std_normal_cdf(1.0)).unwrap(), 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(std_normal_quantile((1.0 + 0.682_689_492_1) / 2.0).unwrap(), 1.0, epsilon = 1e-10);
        for u in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(std_normal_quantile(u).is_err());
        }
        assert_eq!(std_normal_quantile_ext(0.0).unwrap(), f64::NEG_INFINITY);
        assert_eq!(std_normal_quantile_ext(1.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn quantile_round_trip_in_tails() {
        for &u in &[1e-300, 1e-100, 1e-20, 1e-8, 0.01, 0.3, 0.7, 0.99, 1.0 - 1e-12] {
            let x = std_normal_quantile(u).unwrap();
            assert!((std_normal_cdf(x) - u).abs() <= 1e-13 * u.max(1e-3), "u = {u}");
        }
    }

    #[test]
    fn bivariate_special_cases() {
        assert_abs_diff_eq!(bivariate_normal_cdf(0.0, 0.0, 0.0).unwrap(), 0.25, epsilon = 1e-15);
        for &rho in &[-0.999f64, -0.7, -0.2, 0.3, 0.8, 0.9999] {
            let want = 0.25 + rho.asin() / (2.0 * std::f64::consts::PI);
            assert_abs_diff_eq!(bivariate_normal_cdf(0.0, 0.0, rho).unwrap(), want, epsilon = 1e-14);
            assert_abs_diff_eq!(
                bivariate_normal_cdf(0.7, f64::INFINITY, rho).unwrap(),
                std_normal_cdf(0.7),
                epsilon = 1e-15
            );
        }
        assert!(bivariate_normal_cdf(0.0, 0.0, 1.01).is_err());
        assert_eq!(bivariate_normal_cdf(0.3, -0.2, 1.0).unwrap(), std_normal_cdf(-0.2));
    }

    // Independent route: ∫_{-∞}^{x} φ(t) Φ((y − ρt)/√(1−ρ²)) dt.
    fn bvn_oracle(x: f64, y: f64, rho: f64) -> f64 {
        let s = (1.0 - rho * rho).sqrt();
        integrate(|t| npdf(t) * std_normal_cdf((y - rho * t) / s), -TAIL_CUTOFF - 2.0, x, 1e-17, 1e-15).unwrap()
    }

    #[test]
    fn bivariate_matches_conditional_integral() {
        for &(x, y, rho) in &[
            (0.5, -0.3, 0.4),
            (1.2, 1.1, 0.95),
            (-1.0, 2.0, -0.6),
            (2.5, 0.0, 0.999),
            (0.0, 0.0, -0.9999),
            (-3.0, -2.0, 0.2),
        ] {
            let got = bivariate_normal_cdf(x, y, rho).unwrap();
            assert_abs_diff_eq!(got, bvn_oracle(x, y, rho), epsilon = 1e-12);
        }
    }

    #[test]
    fn expectation_examples() {
        let half = IntervalUnion::half_line();
        assert_abs_diff_eq!(expectation_over_gaussian(|_| 1.0, &half).unwrap(), 0.5, epsilon = 1e-14);
        let unit = IntervalUnion::new(vec![(0.0, 1.0)]).unwrap();
        let got = expectation_over_gaussian(|t| t * t, &unit).unwrap();
        // Φ(1) − φ(1) − 1/2 = 0.0993740215
        assert_abs_diff_eq!(got, 0.099_374_021_5, epsilon = 1e-10);
        assert_abs_diff_eq!(got, std_normal_cdf(1.0) - npdf(1.0) - 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(expectation_over_gaussian(|t| t * t, &half).unwrap(), 0.5, epsilon = 1e-13);
    }

    #[test]
    fn non_integrable_reports_error() {
        let near_zero = IntervalUnion::new(vec![(0.0, 1.0)]).unwrap();
        assert!(expectation_over_gaussian(|t| 1.0 / t, &near_zero).is_err());
    }

    #[test]
    fn interval_union_validation() {
        assert!(IntervalUnion::new(vec![(0.0, 1.0), (2.0, f64::INFINITY)]).is_ok());
        assert!(IntervalUnion::new(vec![]).is_ok());
        assert!(IntervalUnion::new(vec![(1.0, 1.0)]).is_err());
        assert!(IntervalUnion::new(vec![(0.0, 2.0), (1.0, 3.0)]).is_err());
        assert!(IntervalUnion::new(vec![(0.0, 1.0), (1.0, 3.0)]).is_err());
        assert!(IntervalUnion::new(vec![(0.0, f64::INFINITY), (5.0, 6.0)]).is_err());
        assert!(IntervalUnion::new(vec![(-1.0, 1.0)]).is_err());
        assert!(IntervalUnion::new(vec![(f64::NAN, 1.0)]).is_err());
    }

    #[test]
    fn i_k_examples() {
        assert_abs_diff_eq!(i_k(f64::INFINITY, 2, 0.0).unwrap(), 0.199_471_140_2, epsilon = 1e-10);
        let quad = expectation_over_gaussian(|_| INV_SQRT_2PI, &IntervalUnion::half_line()).unwrap();
        assert_abs_diff_eq!(i_k(f64::INFINITY, 2, 0.0).unwrap(), quad, epsilon = 1e-14);
        for k in 1..=4 {
            assert!(i_k(0.0, k, 0.3).unwrap().abs() < 1e-16, "k = {k}");
        }
        let tau = 0.5 / 0.75f64.sqrt();
        let dom = IntervalUnion::new(vec![(0.0, 1.0)]).unwrap();
        let quad = expectation_over_gaussian(|t| t * t * std_normal_cdf(tau * t), &dom).unwrap();
        assert_abs_diff_eq!(i_k(1.0, 4, 0.5).unwrap(), quad, epsilon = 1e-12);
        assert!(i_k(1.0, 1, 1.0).is_err());
        assert!(i_k(1.0, 5, 0.2).is_err());
        assert!(i_k(-1.0, 1, 0.2).is_err());
    }
}
