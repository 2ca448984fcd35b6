//! Test-error predictions for classification and regression under curation.

use serde::Serialize;

use crate::curation::{
    constants, j_ratio, keep_easy_for_p, keep_hard_for_p, make_qpu, plane_moments, CurationConstants, CurationMode,
    GeometrySpec, PlaneMoments, PruningFunction,
};
use crate::error::{Error, Result};
use crate::spectral::{ridgeless_limits, spectral_point, RidgelessLimits};

/// Largest overshoot of m0²/ν0 above 1 that is attributed to rounding.
const BAND_TOL: f64 = 1e-8;
const PLANE_TOL: f64 = 1e-12;

/// Which definition of ω produced a classification prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
pub enum OmegaConvention {
    /// ω = ρ − ρ_g ρ_*
    Unscaled,
    /// ω = β(ρ − ρ_g ρ_*)/√(1 − ρ_g²)
    #[default]
    Scaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassificationPrediction {
    pub m0: f64,
    pub nu0: f64,
    pub omega: f64,
    pub omega_tilde: f64,
    pub error: f64,
    pub convention: OmegaConvention,
}

pub fn omega(geom: &GeometrySpec, c: &CurationConstants, conv: OmegaConvention) -> Result<f64> {
    let num = geom.rho - geom.rho_g * geom.rho_star;
    match conv {
        OmegaConvention::Unscaled => Ok(num),
        OmegaConvention::Scaled => {
            let sp = geom.sigma_perp();
            if sp == 0.0 {
                if num.abs() > PLANE_TOL {
                    return Err(Error::InfeasibleGeometry(format!(
                        "|rho_g| = 1 but rho - rho_g*rho_star = {num:e}: degenerate plane"
                    )));
                }
                return Ok(0.0);
            }
            Ok(c.beta * num / sp)
        }
    }
}

/// (1/π)·arccos(|a|/√b), refusing values that leave the band by more than rounding.
fn arccos_error(a: f64, b: f64) -> Result<f64> {
    if !(b > 0.0) || !b.is_finite() || !a.is_finite() {
        return Err(Error::Numerical(format!("second moment must be positive and finite, got {b:e} (first {a:e})")));
    }
    let ratio2 = a * a / b;
    if ratio2 > 1.0 + BAND_TOL {
        return Err(Error::OutOfBand(format!("m0^2/nu0 = {ratio2} exceeds 1")));
    }
    let ratio = ratio2.sqrt().min(1.0);
    Ok(ratio.acos() / std::f64::consts::PI)
}

pub fn classification_error(
    geom: &GeometrySpec,
    c: &CurationConstants,
    phi: f64,
    lambda: f64,
) -> Result<ClassificationPrediction> {
    classification_error_with(geom, c, phi, lambda, OmegaConvention::Scaled)
}

pub fn classification_error_with(
    geom: &GeometrySpec,
    c: &CurationConstants,
    phi: f64,
    lambda: f64,
    convention: OmegaConvention,
) -> Result<ClassificationPrediction> {
    let sp = spectral_point(c, phi, lambda)?;
    let omega = omega(geom, c, convention)?;
    let omega_tilde = c.beta_tilde * geom.rho_star;
    let m0 = omega * sp.m + omega_tilde * sp.m_tilde;
    let nu0 = c.p * phi * sp.m_prime + sp.r_prime - 2.0 * phi * sp.m_prime * sp.r / (1.0 + phi * sp.m);
    let error = arccos_error(m0, nu0)?;
    Ok(ClassificationPrediction { m0, nu0, omega, omega_tilde, error, convention })
}

type Mat2 = [[f64; 2]; 2];

fn inv2(a: &Mat2) -> Result<Mat2> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    if !(det > 0.0) || !det.is_finite() {
        return Err(Error::Numerical(format!("2x2 block is singular (det = {det:e})")));
    }
    Ok([[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]])
}

fn mul2(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn quad2(x: [f64; 2], a: &Mat2, y: [f64; 2]) -> f64 {
    x[0] * (a[0][0] * y[0] + a[0][1] * y[1]) + x[1] * (a[1][0] * y[0] + a[1][1] * y[1])
}

/// (β̃, β) and the coordinates of w_* on (w_o, v).
fn plane_vectors(geom: &GeometrySpec, c: &CurationConstants) -> Result<([f64; 2], [f64; 2])> {
    let num = geom.rho - geom.rho_g * geom.rho_star;
    let sp = geom.sigma_perp();
    let w_v = if sp == 0.0 {
        if num.abs() > PLANE_TOL {
            return Err(Error::InfeasibleGeometry(format!(
                "|rho_g| = 1 but rho - rho_g*rho_star = {num:e}: degenerate plane"
            )));
        }
        0.0
    } else {
        num / sp
    };
    Ok(([c.beta_tilde, c.beta], [geom.rho_star, w_v]))
}

fn moment_block(c: &CurationConstants, pm: &PlaneMoments) -> Mat2 {
    [[c.gamma, pm.gamma_ov], [pm.gamma_ov, pm.gamma_v]]
}

/// Classification error with the full kept second-moment block on the
/// (w_o, v) plane. Label-aware keeping depends on G_v, which deforms the kept
/// covariance along v as well as along w_o; with [`PlaneMoments::isotropic`]
/// this reduces to [`classification_error`].
pub fn classification_error_plane(
    geom: &GeometrySpec,
    c: &CurationConstants,
    pm: &PlaneMoments,
    phi: f64,
    lambda: f64,
) -> Result<ClassificationPrediction> {
    let sp = spectral_point(c, phi, lambda)?;
    let (cv, wv) = plane_vectors(geom, c)?;
    let mb = moment_block(c, pm);
    let scale = 1.0 / (1.0 + phi * sp.m);
    let a = [[mb[0][0] * scale + lambda, mb[0][1] * scale], [mb[1][0] * scale, mb[1][1] * scale + lambda]];
    let res = inv2(&a)?;
    let k = phi * sp.m_prime * scale * scale;
    let inner = [[1.0 + mb[0][0] * k, mb[0][1] * k], [mb[1][0] * k, 1.0 + mb[1][1] * k]];
    let res_prime = mul2(&mul2(&res, &inner), &res);
    let m0 = quad2(cv, &res, wv);
    let r = quad2(cv, &res, cv);
    let r_prime = quad2(cv, &res_prime, cv);
    let nu0 = c.p * phi * sp.m_prime + r_prime - 2.0 * phi * sp.m_prime * r * scale;
    let error = arccos_error(m0, nu0)?;
    Ok(ClassificationPrediction {
        m0,
        nu0,
        omega: cv[1] * wv[1],
        omega_tilde: cv[0] * wv[0],
        error,
        convention: OmegaConvention::Scaled,
    })
}

/// Constants, plane moments and the plane law in one call.
pub fn predict_classification(
    q: &PruningFunction,
    mode: CurationMode,
    geom: &GeometrySpec,
    phi: f64,
    lambda: f64,
) -> Result<ClassificationPrediction> {
    let c = constants(q, mode, geom)?;
    let pm = plane_moments(q, mode, geom)?;
    classification_error_plane(geom, &c, &pm, phi, lambda)
}

/// λ → 0 classification error from the ridgeless limits.
pub fn classification_error_ridgeless(geom: &GeometrySpec, c: &CurationConstants, phi: f64) -> Result<f64> {
    let omega = omega(geom, c, OmegaConvention::Scaled)?;
    let omega_tilde = c.beta_tilde * geom.rho_star;
    match ridgeless_limits(c, phi)? {
        RidgelessLimits::UnderParam { m, m_prime, m_tilde, r, r_prime, .. } => {
            let m0 = omega * m + omega_tilde * m_tilde;
            let nu0 = c.p * phi * m_prime + r_prime - 2.0 * phi * m_prime * r / (1.0 + phi * m);
            arccos_error(m0, nu0)
        }
        RidgelessLimits::OverParam { c0, c1, .. } => {
            let r0 = c.beta * c.beta + c.beta_tilde * c.beta_tilde / c1;
            let a = c0 * (omega + omega_tilde / c1);
            let b = c0 * (c.p * phi - r0);
            arccos_error(a, b)
        }
    }
}

/// Data-rich (φ → 0 after λ → 0) classification error.
#[allow(non_snake_case)]
pub fn data_rich_F(geom: &GeometrySpec, c: &CurationConstants) -> Result<f64> {
    if c.beta == 0.0 && c.beta_tilde == 0.0 {
        return Err(Error::InvalidInput("beta = beta_tilde = 0: data-rich limit undefined".into()));
    }
    if !(c.p > 0.0 && c.gamma > 0.0) {
        return Err(Error::InvalidInput(format!("need p, gamma > 0, got {}, {}", c.p, c.gamma)));
    }
    // (β/p)√(1−ρ_*²)cos ξ = ω/p, which stays defined at ρ_* = ±1
    let omega = omega(geom, c, OmegaConvention::Scaled)?;
    let a = omega / c.p + c.beta_tilde * geom.rho_star / c.gamma;
    let b = (c.beta / c.p).powi(2) + (c.beta_tilde / c.gamma).powi(2);
    arccos_error(a, b)
}

/// Data-rich limit of [`classification_error_plane`]: the direction M⁻¹c.
#[allow(non_snake_case)]
pub fn data_rich_F_plane(geom: &GeometrySpec, c: &CurationConstants, pm: &PlaneMoments) -> Result<f64> {
    if c.beta == 0.0 && c.beta_tilde == 0.0 {
        return Err(Error::InvalidInput("beta = beta_tilde = 0: data-rich limit undefined".into()));
    }
    let (cv, wv) = plane_vectors(geom, c)?;
    let inv = inv2(&moment_block(c, pm))?;
    let dir = [inv[0][0] * cv[0] + inv[0][1] * cv[1], inv[1][0] * cv[0] + inv[1][1] * cv[1]];
    arccos_error(dir[0] * wv[0] + dir[1] * wv[1], dir[0] * dir[0] + dir[1] * dir[1])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyEntry {
    pub name: &'static str,
    pub constants: CurationConstants,
    pub j: Option<f64>,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyReport {
    pub p: f64,
    pub entries: Vec<StrategyEntry>,
    pub argmin: &'static str,
    /// Strategy expected to win: keep-hard when ρ ≥ ρ_*, keep-easy otherwise.
    pub predicted: &'static str,
    pub matches_prediction: bool,
}

/// Data-rich error of keep-easy, keep-hard and the q_{p,1/2} blend at equal p.
pub fn compare_strategies(geom: &GeometrySpec, p: f64, mode: CurationMode) -> Result<StrategyReport> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidInput(format!("p must be in (0, 1), got {p}")));
    }
    let geom = GeometrySpec::new(geom.rho, geom.rho_g, geom.rho_star)?;
    let candidates =
        [("keep_easy", keep_easy_for_p(p)?), ("keep_hard", keep_hard_for_p(p)?), ("qpu_0.5", make_qpu(p, 0.5)?)];
    let mut entries = Vec::with_capacity(3);
    for (name, q) in candidates {
        let c = constants(&q, mode, &geom)?;
        let error = data_rich_F_plane(&geom, &c, &plane_moments(&q, mode, &geom)?)?;
        entries.push(StrategyEntry { name, constants: c, j: j_ratio(&c).ok(), error });
    }
    let argmin = entries.iter().min_by(|a, b| a.error.total_cmp(&b.error)).map(|e| e.name).unwrap_or("none");
    let predicted = if geom.rho >= geom.rho_star { "keep_hard" } else { "keep_easy" };
    Ok(StrategyReport { p, entries, argmin, predicted, matches_prediction: argmin == predicted })
}

/// Regression geometry: ‖w_*‖ = 1, ‖w_g‖ = r, cosines as in [`GeometrySpec`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionGeometry {
    pub norm_wg: f64,
    pub geom: GeometrySpec,
}

impl RegressionGeometry {
    pub fn new(norm_wg: f64, rho: f64, rho_g: f64, rho_star: f64) -> Result<Self> {
        if !(norm_wg > 0.0 && norm_wg.is_finite()) {
            return Err(Error::InvalidInput(format!("generator norm must be positive, got {norm_wg}")));
        }
        Ok(Self { norm_wg, geom: GeometrySpec::new(rho, rho_g, rho_star)? })
    }

    /// ‖w_g^∥‖², the part along w_o.
    pub fn par_sq(&self) -> f64 {
        (self.geom.rho_g * self.norm_wg).powi(2)
    }

    pub fn perp_sq(&self) -> f64 {
        (1.0 - self.geom.rho_g * self.geom.rho_g) * self.norm_wg * self.norm_wg
    }

    pub fn a(&self) -> f64 {
        let g = &self.geom;
        self.perp_sq() - self.norm_wg * (g.rho - g.rho_g * g.rho_star)
    }

    pub fn b(&self) -> f64 {
        let g = &self.geom;
        self.par_sq() - self.norm_wg * g.rho_g * g.rho_star
    }

    /// ‖w_g − w_*‖².
    pub fn c_sq(&self) -> f64 {
        let r = self.norm_wg;
        (1.0 + r * r - 2.0 * r * self.geom.rho).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegressionPrediction {
    pub bias_b: f64,
    pub variance_v: f64,
    /// c² − 2λ(m·a + m̃·b)
    pub shift_correction: f64,
    pub total: f64,
}

pub fn regression_error(
    rg: &RegressionGeometry,
    c: &CurationConstants,
    phi: f64,
    lambda: f64,
    sigma: f64,
) -> Result<RegressionPrediction> {
    if !(sigma >= 0.0) {
        return Err(Error::InvalidInput(format!("noise level must be nonnegative, got {sigma}")));
    }
    let sp = spectral_point(c, phi, lambda)?;
    let bias_b = lambda * lambda * (sp.m_prime * rg.perp_sq() + sp.m_tilde_prime * rg.par_sq());
    let variance_v = sigma * sigma * phi * sp.m_bar_prime;
    let shift_correction = rg.c_sq() - 2.0 * lambda * (sp.m * rg.a() + sp.m_tilde * rg.b());
    Ok(RegressionPrediction { bias_b, variance_v, shift_correction, total: bias_b + variance_v + shift_correction })
}

/// λ → 0 regression error.
pub fn regression_error_ridgeless(rg: &RegressionGeometry, c: &CurationConstants, phi: f64, sigma: f64) -> Result<f64> {
    if !(sigma >= 0.0) {
        return Err(Error::InvalidInput(format!("noise level must be nonnegative, got {sigma}")));
    }
    let s2 = sigma * sigma;
    match ridgeless_limits(c, phi)? {
        RidgelessLimits::UnderParam { .. } => Ok(s2 * phi / (c.p - phi) + rg.c_sq()),
        RidgelessLimits::OverParam { c0, c1, m_bar_prime, .. } => {
            Ok(s2 * phi * m_bar_prime + (rg.perp_sq() + rg.par_sq() / c1) * c0 + rg.c_sq()
                - 2.0 * (rg.a() + rg.b() / c1) * c0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CollapseMitigation {
    pub mitigates: bool,
    pub uncurated_limit: f64,
    pub curated_limit: f64,
}

/// Compares the long-run error c² of uncurated training with ‖w_* − w_g^∥‖²,
/// reached when ‖w_*−w_g^∥‖ < ‖w_*−w_g‖ ≤ ‖w_*−w_g^⊥‖. The right inequality is
/// an equality whenever ρ_g = 0, so it is taken non-strict.
pub fn collapse_mitigation(rg: &RegressionGeometry) -> CollapseMitigation {
    let g = &rg.geom;
    let r = rg.norm_wg;
    let c2 = rg.c_sq();
    let dist_par = (1.0 + rg.par_sq() - 2.0 * r * g.rho_g * g.rho_star).max(0.0);
    let dist_perp = (1.0 + rg.perp_sq() - 2.0 * r * (g.rho - g.rho_g * g.rho_star)).max(0.0);
    let lens = dist_par < c2 && c2 <= dist_perp;
    let curated_limit = if lens { dist_par } else { c2 };
    CollapseMitigation { mitigates: curated_limit < c2, uncurated_limit: c2, curated_limit }
}

/// Leading-order optimal keep fraction p₀ = φ/(√t·√(2 ln(1/φ))) for the
/// over-parametrized ridgeless loss along the keep-easy boundary, t = −D/E.
pub fn optimal_p_asymptotic(phi: f64, t: f64) -> Result<f64> {
    if !(phi > 0.0 && phi < 1.0) {
        return Err(Error::InvalidInput(format!("phi must be in (0, 1), got {phi}")));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidInput(format!("t = {t}: no interior optimum")));
    }
    Ok(phi / (t.sqrt() * (2.0 * (1.0 / phi).ln()).sqrt()))
}

/// t = −D/E with D = ‖w_g^⊥‖² − 2a and E = ‖w_g^∥‖² − 2b.
pub fn optimal_p_t(rg: &RegressionGeometry) -> f64 {
    let d = rg.perp_sq() - 2.0 * rg.a();
    let e = rg.par_sq() - 2.0 * rg.b();
    -d / e
}
