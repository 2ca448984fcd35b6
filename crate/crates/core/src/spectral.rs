//! Stieltjes transform of the pruned sample covariance and derived spectral
//! functions, evaluated at z = −λ.

use serde::Serialize;

use crate::curation::CurationConstants;
use crate::error::{Error, Result};

/// Closest |φ − p| accepted by the ridgeless limits.
pub const THRESHOLD_GAP: f64 = 1e-9;

fn check_inputs(p: f64, phi: f64, lambda: f64) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidInput(format!("p must be in (0, 1], got {p}")));
    }
    if !(phi > 0.0 && phi.is_finite()) {
        return Err(Error::InvalidInput(format!("phi must be positive, got {phi}")));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "lambda must be positive, got {lambda} (use the ridgeless limits for lambda = 0)"
        )));
    }
    Ok(())
}

/// Positive root of φλm² + (p − φ + λ)m − 1 = 0, i.e. 1/m = λ + p/(1 + φm).
pub fn stieltjes_m(p: f64, phi: f64, lambda: f64) -> Result<f64> {
    check_inputs(p, phi, lambda)?;
    let a = p - phi + lambda;
    let disc = (a * a + 4.0 * phi * lambda).sqrt();
    Ok(if a > 0.0 { 2.0 / (a + disc) } else { (disc - a) / (2.0 * phi * lambda) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralPoint {
    pub z: f64,
    pub m: f64,
    pub m_prime: f64,
    pub m_bar: f64,
    pub m_bar_prime: f64,
    pub s: f64,
    pub m_tilde: f64,
    pub m_tilde_prime: f64,
    pub r: f64,
    pub r_prime: f64,
    pub p: f64,
    pub gamma: f64,
    pub beta: f64,
    pub beta_tilde: f64,
    pub phi: f64,
}

impl SpectralPoint {
    /// Residual of 1/m = −z + p/(1 + φm).
    pub fn residual(&self) -> f64 {
        1.0 / self.m - (-self.z + self.p / (1.0 + self.phi * self.m))
    }
}

pub fn spectral_point(c: &CurationConstants, phi: f64, lambda: f64) -> Result<SpectralPoint> {
    if !(c.gamma >= 0.0) {
        return Err(Error::InvalidInput(format!("gamma must be nonnegative, got {}", c.gamma)));
    }
    let m = stieltjes_m(c.p, phi, lambda)?;
    let z = -lambda;
    let m_bar = z * m;
    let one_m_bar = 1.0 + m_bar;
    let m_prime = m * m / (1.0 - one_m_bar * one_m_bar * phi / c.p);
    let inv_m = 1.0 / m;
    let m_bar_prime = c.p / ((phi + inv_m) * (phi + inv_m) - c.p * phi);
    let d = 1.0 + phi * m;
    let s = c.gamma / d;
    let m_tilde = 1.0 / (s - z);
    debug_assert!(s - z > 0.0);
    let m_tilde_prime = m_tilde * m_tilde * (c.gamma * phi * m_prime / (d * d) + 1.0);
    let (b2, bt2) = (c.beta * c.beta, c.beta_tilde * c.beta_tilde);
    Ok(SpectralPoint {
        z,
        m,
        m_prime,
        m_bar,
        m_bar_prime,
        s,
        m_tilde,
        m_tilde_prime,
        r: b2 * m + bt2 * m_tilde,
        r_prime: b2 * m_prime + bt2 * m_tilde_prime,
        p: c.p,
        gamma: c.gamma,
        beta: c.beta,
        beta_tilde: c.beta_tilde,
        phi,
    })
}

/// λ → 0 limits. Under-parametrized values are plain limits; the
/// over-parametrized ones are scaled by −z or z².
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum RidgelessLimits {
    /// φ < p
    UnderParam { m: f64, m_prime: f64, m_bar_prime: f64, m_tilde: f64, m_tilde_prime: f64, r: f64, r_prime: f64 },
    /// φ > p
    OverParam {
        c0: f64,
        c1: f64,
        neg_z_m: f64,
        z2_m_prime: f64,
        m_bar_prime: f64,
        neg_z_m_tilde: f64,
        z2_m_tilde_prime: f64,
        neg_z_r: f64,
        z2_r_prime: f64,
    },
}

pub fn ridgeless_limits(c: &CurationConstants, phi: f64) -> Result<RidgelessLimits> {
    let p = c.p;
    check_inputs(p, phi, 1.0)?;
    if (phi - p).abs() < THRESHOLD_GAP {
        return Err(Error::InterpolationThreshold((phi - p).abs()));
    }
    if !(c.gamma > 0.0) {
        return Err(Error::InvalidInput(format!("ridgeless limits need gamma > 0, got {}", c.gamma)));
    }
    let (b2, bt2, g) = (c.beta * c.beta, c.beta_tilde * c.beta_tilde, c.gamma);
    Ok(if phi < p {
        let gap = p - phi;
        let m = 1.0 / gap;
        let m_prime = p / gap.powi(3);
        let m_tilde = (p / g) / gap;
        let m_tilde_prime = (p / (g * g)) * (p * gap + phi * g) / gap.powi(3);
        RidgelessLimits::UnderParam {
            m,
            m_prime,
            m_bar_prime: 1.0 / gap,
            m_tilde,
            m_tilde_prime,
            r: b2 * m + bt2 * m_tilde,
            r_prime: b2 * m_prime + bt2 * m_tilde_prime,
        }
    } else {
        let c0 = 1.0 - p / phi;
        let c1 = g / phi + c0;
        let tilde = c0 / c1;
        RidgelessLimits::OverParam {
            c0,
            c1,
            neg_z_m: c0,
            z2_m_prime: c0,
            m_bar_prime: (p / phi) / (phi - p),
            neg_z_m_tilde: tilde,
            z2_m_tilde_prime: tilde,
            neg_z_r: b2 * c0 + bt2 * tilde,
            z2_r_prime: b2 * c0 + bt2 * tilde,
        }
    })
}

/// Solves p − φ − t = −λφ Σ_i w_i/(t c_i + λ) for t > 0, a discrete-spectrum
/// generalization of the isotropic fixed point (there t = 1/m − λ).
pub fn general_t_solver(spectrum: &[(f64, f64)], p: f64, phi: f64, lambda: f64) -> Result<f64> {
    check_inputs(p, phi, lambda)?;
    if spectrum.is_empty() {
        return Err(Error::InvalidInput("empty spectrum".into()));
    }
    let mut wsum = 0.0;
    for &(e, w) in spectrum {
        if !(e > 0.0 && e.is_finite() && w > 0.0 && w.is_finite()) {
            return Err(Error::InvalidInput(format!("spectrum entries must be positive, got ({e}, {w})")));
        }
        wsum += w;
    }
    if (wsum - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!("spectrum weights sum to {wsum}, not 1")));
    }
    let f = |t: f64| {
        let trace: f64 = spectrum.iter().map(|&(e, w)| w / (t * e + lambda)).sum();
        p - phi - t + lambda * phi * trace
    };
    // F is decreasing with F(0) = p > 0 and F(p) ≤ 0
    let (mut lo, mut hi) = (0.0f64, p);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    let res = f(t);
    if !(res.abs() <= 1e-12) {
        return Err(Error::NonConvergence(format!("t(z) residual {res:e} after bisection")));
    }
    Ok(t)
}
