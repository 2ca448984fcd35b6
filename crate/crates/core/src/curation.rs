//! Pruning rules, oracle geometry and the curation constants (p, γ, β, β̃).

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::special_fn::{
    expectation_over_gaussian, i_k, npdf, std_normal_cdf, std_normal_quantile_ext, two_cdf_minus_one, IntervalUnion,
    INV_SQRT_2PI,
};

/// Tolerance between the closed-form and quadrature routes for the constants.
pub const CONSTANTS_TOL: f64 = 1e-8;
const GRAM_TOL: f64 = 1e-12;

/// Symmetric keep rule: q(t) = 1 iff |t| ∈ S.
#[derive(Debug, Clone, PartialEq)]
pub struct PruningFunction {
    pub half_support: IntervalUnion,
}

impl PruningFunction {
    pub fn new(half_support: IntervalUnion) -> Self {
        Self { half_support }
    }

    /// q ≡ 1.
    pub fn keep_all() -> Self {
        Self::new(IntervalUnion::half_line())
    }

    pub fn q(&self, t: f64) -> bool {
        self.half_support.contains(t.abs())
    }

    /// Gaussian mass of `-S ∪ S`.
    pub fn keep_fraction(&self) -> f64 {
        self.half_support.symmetric_mass()
    }
}

/// Keep large margins: `|t| ≥ α`.
pub fn make_keep_easy(alpha: f64) -> Result<PruningFunction> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidInput(format!("keep-easy threshold must be in (0, inf), got {alpha}")));
    }
    Ok(PruningFunction::new(IntervalUnion::new(vec![(alpha, f64::INFINITY)])?))
}

/// Keep small margins: `|t| ≤ α`. `α = inf` keeps everything.
pub fn make_keep_hard(alpha: f64) -> Result<PruningFunction> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidInput(format!("keep-hard threshold must be positive, got {alpha}")));
    }
    Ok(PruningFunction::new(IntervalUnion::new(vec![(0.0, alpha)])?))
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidInput(format!("keep fraction must be in (0, 1], got {p}")));
    }
    Ok(())
}

/// α_min(p) = Φ⁻¹((1+p)/2), the keep-hard threshold with keep fraction p.
pub fn alpha_min(p: f64) -> Result<f64> {
    check_p(p)?;
    std_normal_quantile_ext((1.0 + p) / 2.0)
}

/// α_max(p) = Φ⁻¹(1 − p/2), the keep-easy threshold with keep fraction p.
pub fn alpha_max(p: f64) -> Result<f64> {
    check_p(p)?;
    std_normal_quantile_ext(1.0 - p / 2.0)
}

pub fn keep_hard_for_p(p: f64) -> Result<PruningFunction> {
    make_keep_hard(alpha_min(p)?)
}

pub fn keep_easy_for_p(p: f64) -> Result<PruningFunction> {
    let a = alpha_max(p)?;
    if a <= 0.0 {
        return Ok(PruningFunction::keep_all());
    }
    make_keep_easy(a)
}

/// q_{p,u}: keep-hard mass (1−u)p in the center plus keep-easy mass pu in the tails.
pub fn make_qpu(p: f64, u: f64) -> Result<PruningFunction> {
    check_p(p)?;
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::InvalidInput(format!("u must be in [0, 1], got {u}")));
    }
    let a = std_normal_quantile_ext((1.0 + (1.0 - u) * p) / 2.0)?;
    let b = std_normal_quantile_ext(1.0 - p * u / 2.0)?;
    let mut iv = Vec::with_capacity(2);
    if a >= b {
        iv.push((0.0, f64::INFINITY));
    } else {
        if a > 0.0 {
            iv.push((0.0, a));
        }
        if b < f64::INFINITY {
            iv.push((b, f64::INFINITY));
        }
    }
    Ok(PruningFunction::new(IntervalUnion::new(iv)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurationMode {
    LabelAgnostic,
    LabelAware,
}

impl CurationMode {
    pub fn label(self) -> &'static str {
        match self {
            CurationMode::LabelAgnostic => "label_agnostic",
            CurationMode::LabelAware => "label_aware",
        }
    }
}

/// Cosines between truth w_*, generator w_g and oracle w_o.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometrySpec {
    /// w_g · w_*
    pub rho: f64,
    /// w_o · w_g
    pub rho_g: f64,
    /// w_o · w_*
    pub rho_star: f64,
}

impl GeometrySpec {
    pub fn new(rho: f64, rho_g: f64, rho_star: f64) -> Result<Self> {
        for (name, v) in [("rho", rho), ("rho_g", rho_g), ("rho_star", rho_star)] {
            if !(-1.0..=1.0).contains(&v) {
                return Err(Error::InfeasibleGeometry(format!("{name} = {v} outside [-1, 1]")));
            }
        }
        let g = Self { rho, rho_g, rho_star };
        let det = g.gram_det();
        if det < -GRAM_TOL {
            return Err(Error::InfeasibleGeometry(format!(
                "Gram matrix of (rho={rho}, rho_g={rho_g}, rho_star={rho_star}) is not PSD (det = {det:.6})"
            )));
        }
        Ok(g)
    }

    /// Orthogonal pruner used as the random-pruning baseline.
    pub fn random_pruning(rho: f64) -> Result<Self> {
        Self::new(rho, 0.0, 0.0)
    }

    pub fn gram_det(&self) -> f64 {
        let (r, g, s) = (self.rho, self.rho_g, self.rho_star);
        1.0 - r * r - g * g - s * s + 2.0 * r * g * s
    }

    pub fn sigma_perp(&self) -> f64 {
        (1.0 - self.rho_g * self.rho_g).max(0.0).sqrt()
    }

    /// ρ_g/√(1−ρ_g²), infinite when |ρ_g| = 1.
    pub fn tau(&self) -> f64 {
        let s = self.sigma_perp();
        if s == 0.0 {
            self.rho_g.signum() * f64::INFINITY
        } else {
            self.rho_g / s
        }
    }

    pub fn cos_xi(&self) -> Option<f64> {
        let den = self.sigma_perp() * (1.0 - self.rho_star * self.rho_star).max(0.0).sqrt();
        (den > 0.0).then(|| (self.rho - self.rho_g * self.rho_star) / den)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurationConstants {
    pub p: f64,
    pub gamma: f64,
    /// β = β₂
    pub beta: f64,
    /// β̃ = β₁
    pub beta_tilde: f64,
}

impl CurationConstants {
    pub fn max_abs_diff(&self, o: &Self) -> f64 {
        [
            (self.p - o.p).abs(),
            (self.gamma - o.gamma).abs(),
            (self.beta - o.beta).abs(),
            (self.beta_tilde - o.beta_tilde).abs(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Σ over intervals of `g(a) − g(b)` for a tail functional g.
fn tail_sum(q: &PruningFunction, g: impl Fn(f64) -> f64) -> f64 {
    q.half_support.intervals().iter().map(|&(a, b)| g(a) - g(b)).sum()
}

fn upper(x: f64) -> f64 {
    std_normal_cdf(-x)
}

// ∫_z^∞ t²φ(t) dt
fn second_moment_tail(z: f64) -> f64 {
    if z == f64::INFINITY {
        0.0
    } else {
        upper(z) + z * npdf(z)
    }
}

/// (p, γ) of q under label-agnostic curation; independent of geometry.
pub fn agnostic_p_gamma(q: &PruningFunction) -> (f64, f64) {
    (2.0 * tail_sum(q, upper), 2.0 * tail_sum(q, second_moment_tail))
}

/// Closed-form constants (interval sums of Gaussian primitives).
pub fn constants_closed_form(
    q: &PruningFunction,
    mode: CurationMode,
    geom: &GeometrySpec,
) -> Result<CurationConstants> {
    let rg = geom.rho_g;
    let (p_ag, gamma_ag) = agnostic_p_gamma(q);
    let first_moment = 2.0 * tail_sum(q, npdf);
    if rg.abs() == 1.0 {
        return Ok(match (mode, rg > 0.0) {
            (CurationMode::LabelAgnostic, _) => {
                CurationConstants { p: p_ag, gamma: gamma_ag, beta: 0.0, beta_tilde: rg * first_moment }
            }
            (CurationMode::LabelAware, true) => {
                CurationConstants { p: p_ag, gamma: gamma_ag, beta: 0.0, beta_tilde: first_moment }
            }
            (CurationMode::LabelAware, false) => CurationConstants { p: 0.0, gamma: 0.0, beta: 0.0, beta_tilde: 0.0 },
        });
    }
    let sigma = geom.sigma_perp();
    let tau = geom.tau();
    let ivs = q.half_support.intervals();
    match mode {
        CurationMode::LabelAgnostic => {
            let beta = 4.0 * sigma * INV_SQRT_2PI * tail_sum(q, |z| upper(z / sigma));
            let h = |alpha: f64| -> Result<f64> {
                let i2 = i_k(alpha, 2, rg)?;
                let edge = if alpha == f64::INFINITY { 0.0 } else { two_cdf_minus_one(tau * alpha) * npdf(alpha) };
                Ok(2.0 * tau * i2 - edge)
            };
            let mut bt = 0.0;
            for &(a, b) in ivs {
                bt += h(b)? - h(a)?;
            }
            Ok(CurationConstants { p: p_ag, gamma: gamma_ag, beta, beta_tilde: 2.0 * bt })
        }
        CurationMode::LabelAware => {
            let mut s = [0.0; 4];
            for &(a, b) in ivs {
                for (k, acc) in s.iter_mut().enumerate() {
                    let k = k as u8 + 1;
                    *acc += i_k(b, k, rg)? - i_k(a, k, rg)?;
                }
            }
            Ok(CurationConstants { p: 2.0 * s[0], gamma: 2.0 * s[3], beta: 2.0 * s[1], beta_tilde: 2.0 * s[2] })
        }
    }
}

/// Constants by direct quadrature of the defining expectations over −S ∪ S.
pub fn constants_quadrature(q: &PruningFunction, mode: CurationMode, geom: &GeometrySpec) -> Result<CurationConstants> {
    let tau = geom.tau();
    let dom = &q.half_support;
    if dom.is_empty() {
        return Ok(CurationConstants { p: 0.0, gamma: 0.0, beta: 0.0, beta_tilde: 0.0 });
    }
    // t > 0 on every quadrature node, so the |ρ_g| = 1 limits are plain steps
    let cdf_tau = |t: f64| {
        if tau.is_infinite() {
            if tau > 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            std_normal_cdf(tau * t)
        }
    };
    let pdf_tau = |t: f64| if tau.is_infinite() { 0.0 } else { npdf(tau * t) };
    let odd_tau = |t: f64| if tau.is_infinite() { tau.signum() } else { two_cdf_minus_one(tau * t) };
    let e = |f: &dyn Fn(f64) -> f64| expectation_over_gaussian(f, dom);
    Ok(match mode {
        CurationMode::LabelAgnostic => CurationConstants {
            p: e(&|_| 2.0)?,
            gamma: e(&|t| 2.0 * t * t)?,
            beta: e(&|t| 4.0 * pdf_tau(t))?,
            beta_tilde: e(&|t| 2.0 * t * odd_tau(t))?,
        },
        CurationMode::LabelAware => CurationConstants {
            p: e(&|t| 2.0 * cdf_tau(t))?,
            gamma: e(&|t| 2.0 * t * t * cdf_tau(t))?,
            beta: e(&|t| 2.0 * pdf_tau(t))?,
            beta_tilde: e(&|t| 2.0 * t * cdf_tau(t))?,
        },
    })
}

/// Closed form checked against quadrature; fails if they differ by more than 1e-8.
pub fn constants_verified(q: &PruningFunction, mode: CurationMode, geom: &GeometrySpec) -> Result<CurationConstants> {
    let closed = constants_closed_form(q, mode, geom)?;
    let quad = constants_quadrature(q, mode, geom)?;
    let gap = closed.max_abs_diff(&quad);
    if !(gap <= CONSTANTS_TOL) {
        return Err(Error::ConstantsMismatch(format!(
            "gap {gap:e} for {mode:?}, rho_g = {}: closed {closed:?} vs quadrature {quad:?}",
            geom.rho_g
        )));
    }
    Ok(closed)
}

/// Curation constants; debug builds also cross-check against quadrature.
pub fn constants(q: &PruningFunction, mode: CurationMode, geom: &GeometrySpec) -> Result<CurationConstants> {
    if cfg!(debug_assertions) {
        constants_verified(q, mode, geom)
    } else {
        constants_closed_form(q, mode, geom)
    }
}

/// Kept second moments in the plane spanned by w_o and the unit vector v that
/// completes it to span(w_o, w_g): γ_v = E[k G_v²] and γ_ov = E[k G_o G_v].
/// Label-agnostic keeping ignores G_v, so there γ_v = p and γ_ov = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneMoments {
    pub gamma_v: f64,
    pub gamma_ov: f64,
}

impl PlaneMoments {
    pub fn isotropic(p: f64) -> Self {
        PlaneMoments { gamma_v: p, gamma_ov: 0.0 }
    }

    pub fn max_abs_diff(&self, o: &Self) -> f64 {
        (self.gamma_v - o.gamma_v).abs().max((self.gamma_ov - o.gamma_ov).abs())
    }
}

pub fn plane_moments_closed_form(q: &PruningFunction, mode: CurationMode, geom: &GeometrySpec) -> Result<PlaneMoments> {
    let c = constants_closed_form(q, mode, geom)?;
    let sigma = geom.sigma_perp();
    if mode == CurationMode::LabelAgnostic || sigma == 0.0 {
        return Ok(PlaneMoments::isotropic(c.p));
    }
    // 2∫_S t φ(t) φ(τt) dt, using φ(t)φ(τt) = φ(0) φ(t/σ)
    let gamma_ov = 2.0 * sigma * sigma * INV_SQRT_2PI * tail_sum(q, |z| npdf(z / sigma));
    Ok(PlaneMoments { gamma_v: c.p - geom.tau() * gamma_ov, gamma_ov })
}

pub fn plane_moments_quadrature(q: &PruningFunction, mode: CurationMode, geom: &GeometrySpec) -> Result<PlaneMoments> {
    let sigma = geom.sigma_perp();
    if mode == CurationMode::LabelAgnostic || sigma == 0.0 {
        return Ok(PlaneMoments::isotropic(constants_quadrature(q, mode, geom)?.p));
    }
    let tau = geom.tau();
    let dom = &q.half_support;
    if dom.is_empty() {
        return Ok(PlaneMoments::isotropic(0.0));
    }
    // kept iff G_v > −τt for t > 0; the t < 0 half mirrors it
    Ok(PlaneMoments {
        gamma_v: expectation_over_gaussian(|t| 2.0 * (std_normal_cdf(tau * t) - tau * t * npdf(tau * t)), dom)?,
        gamma_ov: expectation_over_gaussian(|t| 2.0 * t * npdf(tau * t), dom)?,
    })
}

/// Plane moments; debug builds also cross-check against quadrature.
pub fn plane_moments(q: &PruningFunction, mode: CurationMode, geom: &GeometrySpec) -> Result<PlaneMoments> {
    let closed = plane_moments_closed_form(q, mode, geom)?;
    if cfg!(debug_assertions) {
        let quad = plane_moments_quadrature(q, mode, geom)?;
        let gap = closed.max_abs_diff(&quad);
        if !(gap <= CONSTANTS_TOL) {
            return Err(Error::ConstantsMismatch(format!(
                "plane moments gap {gap:e} for {mode:?}, rho_g = {}: closed {closed:?} vs quadrature {quad:?}",
                geom.rho_g
            )));
        }
    }
    Ok(closed)
}

/// Lens boundaries (γ_min(p), γ_max(p)).
pub fn gamma_bounds(p: f64) -> Result<(f64, f64)> {
    let a_min = alpha_min(p)?;
    let a_max = alpha_max(p)?;
    let gmin = if a_min.is_infinite() { p } else { p - 2.0 * a_min * npdf(a_min) };
    let gmax = p + 2.0 * a_max * npdf(a_max);
    Ok((gmin, gmax))
}

/// γ of q_{p,u} under label-agnostic curation.
pub fn qpu_gamma(p: f64, u: f64) -> Result<f64> {
    Ok(agnostic_p_gamma(&make_qpu(p, u)?).1)
}

/// Bisection for u with γ(q_{p,u}) = target.
pub fn solve_u_for_gamma(p: f64, gamma_target: f64) -> Result<f64> {
    let (gmin, gmax) = gamma_bounds(p)?;
    let slack = 1e-12;
    if !(gamma_target >= gmin - slack && gamma_target <= gmax + slack) {
        return Err(Error::InvalidInput(format!("gamma {gamma_target} outside the lens [{gmin}, {gmax}] at p = {p}")));
    }
    if gamma_target <= gmin {
        return Ok(0.0);
    }
    if gamma_target >= gmax {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if qpu_gamma(p, mid)? < gamma_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let u = 0.5 * (lo + hi);
    let got = qpu_gamma(p, u)?;
    if (got - gamma_target).abs() > 1e-10 {
        return Err(Error::Numerical(format!("bisection stalled: gamma(q_p,u) = {got} vs target {gamma_target}")));
    }
    Ok(u)
}

/// j = γβ/(pβ̃).
pub fn j_ratio(c: &CurationConstants) -> Result<f64> {
    if !(c.p > 0.0) {
        return Err(Error::InvalidInput(format!("j needs p > 0, got {}", c.p)));
    }
    if c.beta_tilde == 0.0 {
        return Err(Error::InvalidInput("j undefined: beta_tilde = 0 (orthogonal oracle)".into()));
    }
    Ok(c.gamma * c.beta / (c.p * c.beta_tilde))
}

/// Interval endpoint that accepts `"inf"` (or null) for +inf in config files.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Endpoint(pub f64);

impl Serialize for Endpoint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0 == f64::INFINITY {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Endpoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> de::Visitor<'de> for V {
            type Value = Endpoint;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a number, \"inf\" or null")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Endpoint, E> {
                Ok(Endpoint(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Endpoint, E> {
                Ok(Endpoint(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Endpoint, E> {
                Ok(Endpoint(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Endpoint, E> {
                match v.to_ascii_lowercase().as_str() {
                    "inf" | "+inf" | "infinity" | "+infinity" => Ok(Endpoint(f64::INFINITY)),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }
            fn visit_unit<E: de::Error>(self) -> std::result::Result<Endpoint, E> {
                Ok(Endpoint(f64::INFINITY))
            }
            fn visit_none<E: de::Error>(self) -> std::result::Result<Endpoint, E> {
                Ok(Endpoint(f64::INFINITY))
            }
        }
        d.deserialize_any(V)
    }
}

/// Strategy literal as it appears in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case", deny_unknown_fields)]
pub enum Strategy {
    KeepHard { p: f64 },
    KeepEasy { p: f64 },
    Qpu { p: f64, u: f64 },
    Intervals { half_support: Vec<[Endpoint; 2]> },
    All,
}

impl Strategy {
    pub fn label(&self) -> &'static str {
        match self {
            Strategy::KeepHard { .. } => "keep_hard",
            Strategy::KeepEasy { .. } => "keep_easy",
            Strategy::Qpu { .. } => "qpu",
            Strategy::Intervals { .. } => "intervals",
            Strategy::All => "all",
        }
    }

    pub fn u(&self) -> Option<f64> {
        match self {
            Strategy::Qpu { u, .. } => Some(*u),
            _ => None,
        }
    }

    /// Returns a copy with the keep fraction replaced (ignored for `intervals`/`all`).
    pub fn with_p(&self, p: f64) -> Strategy {
        match self {
            Strategy::KeepHard { .. } => Strategy::KeepHard { p },
            Strategy::KeepEasy { .. } => Strategy::KeepEasy { p },
            Strategy::Qpu { u, .. } => Strategy::Qpu { p, u: *u },
            other => other.clone(),
        }
    }

    pub fn with_u(&self, u: f64) -> Strategy {
        match self {
            Strategy::Qpu { p, .. } => Strategy::Qpu { p: *p, u },
            other => other.clone(),
        }
    }

    pub fn to_pruning(&self) -> Result<PruningFunction> {
        match self {
            Strategy::KeepHard { p } => keep_hard_for_p(*p),
            Strategy::KeepEasy { p } => keep_easy_for_p(*p),
            Strategy::Qpu { p, u } => make_qpu(*p, *u),
            Strategy::Intervals { half_support } => {
                Ok(PruningFunction::new(IntervalUnion::new(half_support.iter().map(|[a, b]| (a.0, b.0)).collect())?))
            }
            Strategy::All => Ok(PruningFunction::keep_all()),
        }
    }
}
