//! Finite-size Monte Carlo: Gaussian data, curation, ridge fits, exact errors,
//! resolvent and margin probes, and iterated self-training.
//!
//! Samples are stored as columns (a d×n matrix) so kept samples can be
//! gathered contiguously.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::curation::{
    constants, plane_moments, CurationConstants, CurationMode, GeometrySpec, PlaneMoments, PruningFunction,
};
use crate::error::{Error, Result};
use crate::laws::{classification_error_plane, RegressionGeometry};
use crate::spectral::spectral_point;

const PURPOSE_TRAIN: u8 = 1;
const PURPOSE_TEST: u8 = 2;
const PURPOSE_SCALAR: u8 = 3;
const PURPOSE_NOISE: u8 = 4;

/// Counter-based stream: key from the seed, stream from (trial, round,
/// purpose), position from the row index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey {
    pub seed: u64,
    pub trial: u64,
    pub round: u64,
    pub purpose: u8,
}

impl StreamKey {
    pub fn new(seed: u64, trial: u64, round: u64, purpose: u8) -> Self {
        Self { seed, trial, round, purpose }
    }

    fn stream_id(&self) -> u64 {
        (self.trial << 24) | ((self.round & 0xFFFF) << 8) | self.purpose as u64
    }

    /// Generator positioned at the start of `row`; each row owns 2³² words.
    pub fn row_rng(&self, row: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        let mut state = self.seed;
        for chunk in key.chunks_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.stream_id());
        rng.set_word_pos((row as u128) << 32);
        rng
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Target {
    Classification,
    Regression { norm_wg: f64, sigma: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub d: usize,
    pub lambda: f64,
    pub mode: CurationMode,
    pub q: PruningFunction,
    pub geometry: GeometrySpec,
    pub target: Target,
    pub trials: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn phi(&self) -> f64 {
        self.d as f64 / self.n as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 || self.d < 3 {
            return Err(Error::InvalidInput(format!("need n >= 1 and d >= 3, got n = {}, d = {}", self.n, self.d)));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.trials < 1 {
            return Err(Error::InvalidInput("trials must be >= 1".into()));
        }
        if let Target::Regression { norm_wg, sigma } = self.target {
            if !(sigma >= 0.0) {
                return Err(Error::InvalidInput(format!("sigma must be nonnegative, got {sigma}")));
            }
            RegressionGeometry::new(norm_wg, self.geometry.rho, self.geometry.rho_g, self.geometry.rho_star)?;
        }
        Ok(())
    }

    fn norm_wg(&self) -> f64 {
        match self.target {
            Target::Classification => 1.0,
            Target::Regression { norm_wg, .. } => norm_wg,
        }
    }
}

/// Unit vectors on the first three coordinates with w_g·w_* = ρ,
/// w_o·w_g = ρ_g and w_o·w_* = ρ_*.
pub fn construct_vectors(geom: &GeometrySpec, d: usize) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    if d < 3 {
        return Err(Error::InvalidInput(format!("need d >= 3, got {d}")));
    }
    let g = GeometrySpec::new(geom.rho, geom.rho_g, geom.rho_star)?;
    let s = (1.0 - g.rho * g.rho).max(0.0).sqrt();
    let y = if s > 0.0 { (g.rho_g - g.rho * g.rho_star) / s } else { 0.0 };
    let z = (1.0 - g.rho_star * g.rho_star - y * y).max(0.0).sqrt();
    let mut w_star = DVector::zeros(d);
    let mut w_g = DVector::zeros(d);
    let mut w_o = DVector::zeros(d);
    w_star[0] = 1.0;
    w_g[0] = g.rho;
    w_g[1] = s;
    w_o[0] = g.rho_star;
    w_o[1] = y;
    w_o[2] = z;
    Ok((w_star, w_g, w_o))
}

/// Training sample: `xt` holds one sample per column.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub xt: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.xt.ncols()
    }
}

/// Gaussian inputs (d×n) from the counter stream.
pub fn sample_inputs(n: usize, d: usize, key: StreamKey) -> DMatrix<f64> {
    let mut xt = DMatrix::zeros(d, n);
    for (i, mut col) in xt.column_iter_mut().enumerate() {
        let mut rng = key.row_rng(i as u64);
        for v in col.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
    }
    xt
}

/// Labels from the generator: sign(x·w_g), or x·w_g + σ·η with η from the
/// noise stream paired with `key`.
pub fn label(xt: &DMatrix<f64>, w_g: &DVector<f64>, target: Target, key: StreamKey) -> DVector<f64> {
    let scores = xt.tr_mul(w_g);
    match target {
        Target::Classification => scores.map(sign),
        Target::Regression { sigma, .. } => {
            let noise = StreamKey { purpose: PURPOSE_NOISE, ..key };
            DVector::from_iterator(
                scores.len(),
                scores.iter().enumerate().map(|(i, &s)| {
                    if sigma == 0.0 {
                        return s;
                    }
                    let eta: f64 = noise.row_rng(i as u64).sample(StandardNormal);
                    s + sigma * eta
                }),
            )
        }
    }
}

/// Inputs and generator labels for one trial.
pub fn sample_dataset(cfg: &ExperimentConfig, w_g: &DVector<f64>, key: StreamKey) -> Dataset {
    let xt = sample_inputs(cfg.n, cfg.d, key);
    let y = label(&xt, w_g, cfg.target, key);
    Dataset { xt, y }
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Keep mask: q(x·w_o) = 1, plus label agreement with sign(x·w_o) in label-aware mode.
pub fn apply_curation(ds: &Dataset, w_o: &DVector<f64>, q: &PruningFunction, mode: CurationMode) -> Result<Vec<bool>> {
    if (w_o.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!("oracle direction must have unit norm, got {}", w_o.norm())));
    }
    let t = ds.xt.tr_mul(w_o);
    let mask: Vec<bool> = t
        .iter()
        .zip(ds.y.iter())
        .map(|(&ti, &yi)| {
            q.q(ti)
                && match mode {
                    CurationMode::LabelAgnostic => true,
                    CurationMode::LabelAware => sign(yi) == sign(ti),
                }
        })
        .collect();
    if !mask.iter().any(|&k| k) {
        return Err(Error::EmptyKeptSet);
    }
    Ok(mask)
}

fn kept_columns(xt: &DMatrix<f64>, mask: &[bool]) -> DMatrix<f64> {
    let idx: Vec<usize> = mask.iter().enumerate().filter(|(_, &k)| k).map(|(i, _)| i).collect();
    xt.select_columns(idx.iter())
}

/// S + λI with S = X⊤DX/n, plus the right-hand side X⊤Dy/n.
fn normal_equations(ds: &Dataset, mask: &[bool], lambda: f64) -> (DMatrix<f64>, DVector<f64>) {
    let n = ds.n() as f64;
    let d = ds.xt.nrows();
    let xk = kept_columns(&ds.xt, mask);
    let yk = DVector::from_iterator(xk.ncols(), mask.iter().zip(ds.y.iter()).filter(|(k, _)| **k).map(|(_, &y)| y));
    let mut a = DMatrix::identity(d, d) * lambda;
    a.gemm(1.0 / n, &xk, &xk.transpose(), 1.0);
    let b = (&xk * yk) / n;
    (a, b)
}

fn cholesky(a: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(a).ok_or_else(|| Error::Numerical("S + lambda I is not positive definite".into()))
}

/// Ridge solution of (X⊤DX/n + λI)w = X⊤Dy/n.
pub fn ridge_fit(ds: &Dataset, mask: &[bool], lambda: f64) -> Result<DVector<f64>> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidInput(format!("lambda must be positive, got {lambda}")));
    }
    let (a, b) = normal_equations(ds, mask, lambda);
    let chol = cholesky(a.clone())?;
    let w = chol.solve(&b);
    let bn = b.norm();
    let resid = (&a * &w - &b).norm();
    if resid > 1e-10 * bn {
        return Err(Error::Numerical(format!("ridge residual {resid:e} exceeds 1e-10 * {bn:e}")));
    }
    Ok(w)
}

/// (1/π)·arccos of the angle to w_*; returns (0.5, true) for ŵ = 0.
pub fn exact_classification_error(w_hat: &DVector<f64>, w_star: &DVector<f64>) -> (f64, bool) {
    let nh = w_hat.norm();
    if nh == 0.0 {
        return (0.5, true);
    }
    let cos = (w_hat.dot(w_star) / (nh * w_star.norm())).clamp(-1.0, 1.0);
    (cos.acos() / std::f64::consts::PI, false)
}

/// ‖ŵ − w_*‖².
pub fn exact_regression_error(w_hat: &DVector<f64>, w_star: &DVector<f64>) -> f64 {
    (w_hat - w_star).norm_squared()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialResult {
    pub kept_count: usize,
    pub w_hat_cosine: f64,
    pub w_hat_norm: f64,
    pub test_error: f64,
    pub regression_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialSummary {
    pub mean: f64,
    pub std_error: f64,
    pub kept_fraction_mean: f64,
    pub skipped: usize,
    pub per_trial: Vec<TrialResult>,
}

/// Pairwise summation, fixed order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(xs) / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn fit_trial(
    cfg: &ExperimentConfig,
    vecs: &(DVector<f64>, DVector<f64>, DVector<f64>),
    trial: u64,
) -> Result<(TrialResult, DVector<f64>)> {
    let (w_star, w_g, w_o) = vecs;
    let key = StreamKey::new(cfg.seed, trial, 0, PURPOSE_TRAIN);
    let ds = sample_dataset(cfg, w_g, key);
    let mask = apply_curation(&ds, w_o, &cfg.q, cfg.mode)?;
    let w_hat = ridge_fit(&ds, &mask, cfg.lambda)?;
    let (test_error, _) = exact_classification_error(&w_hat, w_star);
    let norm = w_hat.norm();
    let result = TrialResult {
        kept_count: mask.iter().filter(|&&k| k).count(),
        w_hat_cosine: if norm > 0.0 { w_hat.dot(w_star) / norm } else { 0.0 },
        w_hat_norm: norm,
        test_error,
        regression_error: match cfg.target {
            Target::Regression { .. } => Some(exact_regression_error(&w_hat, w_star)),
            Target::Classification => None,
        },
    };
    Ok((result, w_hat))
}

fn scaled_vectors(cfg: &ExperimentConfig) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    let (w_star, w_g, w_o) = construct_vectors(&cfg.geometry, cfg.d)?;
    Ok((w_star, w_g * cfg.norm_wg(), w_o))
}

/// Independent trials in parallel; trial t uses stream (seed, t). Trials whose
/// curation keeps nothing are counted in `skipped`.
pub fn run_trials(cfg: &ExperimentConfig) -> Result<TrialSummary> {
    cfg.validate()?;
    let vecs = scaled_vectors(cfg)?;
    let outcomes: Vec<Result<TrialResult>> =
        (0..cfg.trials as u64).into_par_iter().map(|t| fit_trial(cfg, &vecs, t).map(|(r, _)| r)).collect();
    let mut per_trial = Vec::with_capacity(cfg.trials);
    let mut skipped = 0;
    for o in outcomes {
        match o {
            Ok(r) => per_trial.push(r),
            Err(Error::EmptyKeptSet) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    let metric: Vec<f64> = per_trial.iter().map(|r| r.regression_error.unwrap_or(r.test_error)).collect();
    let (mean, std_error) = mean_se(&metric);
    let kept: Vec<f64> = per_trial.iter().map(|r| r.kept_count as f64 / cfg.n as f64).collect();
    Ok(TrialSummary { mean, std_error, kept_fraction_mean: mean_se(&kept).0, skipped, per_trial })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollapseConfig {
    pub base: ExperimentConfig,
    pub rounds: usize,
    pub curate_each_round: bool,
    pub fresh_inputs_each_round: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CollapseRound {
    pub round: usize,
    /// Error of the generator used in this round (round 0: the initial one).
    pub error: f64,
    pub rho: f64,
    pub rho_g: f64,
    pub kept_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollapseSeries {
    pub rounds: Vec<CollapseRound>,
    /// Set when a fit came out as ŵ = 0 and the series stopped early.
    pub halted: Option<String>,
}

/// Iterated self-training for repetition `rep`. Row 0 describes the initial
/// generator; row t the fit of round t, which becomes the next generator.
pub fn collapse_loop(cc: &CollapseConfig, rep: u64) -> Result<CollapseSeries> {
    let cfg = &cc.base;
    cfg.validate()?;
    if cc.rounds > 1000 {
        return Err(Error::InvalidInput(format!("at most 1000 rounds, got {}", cc.rounds)));
    }
    if cfg.target != Target::Classification {
        return Err(Error::InvalidInput("collapse loop runs in classification mode".into()));
    }
    let (w_star, mut w_g, w_o) = construct_vectors(&cfg.geometry, cfg.d)?;
    let keep_all = PruningFunction::keep_all();
    let mut rows = vec![CollapseRound {
        round: 0,
        error: exact_classification_error(&w_g, &w_star).0,
        rho: w_g.dot(&w_star),
        rho_g: w_o.dot(&w_g),
        kept_fraction: 1.0,
    }];
    let mut fixed_inputs = None;
    for round in 1..=cc.rounds {
        let key_round = if cc.fresh_inputs_each_round { (round - 1) as u64 } else { 0 };
        let key = StreamKey::new(cfg.seed, rep, key_round, PURPOSE_TRAIN);
        let xt = match (&fixed_inputs, cc.fresh_inputs_each_round) {
            (Some(x), false) => Clone::clone(x),
            _ => {
                let x = sample_inputs(cfg.n, cfg.d, key);
                if !cc.fresh_inputs_each_round {
                    fixed_inputs = Some(x.clone());
                }
                x
            }
        };
        let y = label(&xt, &w_g, cfg.target, key);
        let ds = Dataset { xt, y };
        let mask = if cc.curate_each_round {
            apply_curation(&ds, &w_o, &cfg.q, cfg.mode)?
        } else {
            apply_curation(&ds, &w_o, &keep_all, CurationMode::LabelAgnostic)?
        };
        let w_hat = ridge_fit(&ds, &mask, cfg.lambda)?;
        let (error, degenerate) = exact_classification_error(&w_hat, &w_star);
        if degenerate {
            return Ok(CollapseSeries { rounds: rows, halted: Some(format!("w_hat = 0 at round {round}")) });
        }
        w_g = &w_hat / w_hat.norm();
        rows.push(CollapseRound {
            round,
            error,
            rho: w_g.dot(&w_star),
            rho_g: w_o.dot(&w_g),
            kept_fraction: mask.iter().filter(|&&k| k).count() as f64 / cfg.n as f64,
        });
    }
    Ok(CollapseSeries { rounds: rows, halted: None })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResolventReport {
    pub trace_mean: f64,
    pub parallel_mean: f64,
    pub perp_mean: f64,
    pub m: f64,
    pub m_tilde: f64,
    pub s: f64,
    /// |tr R/d − m|
    pub trace_gap: f64,
    /// |w_o⊤Rw_o − m̃|
    pub parallel_gap: f64,
    /// |w_o⊤Rw_o − s|, the alternative convention
    pub parallel_gap_s: f64,
    /// |u⊤Ru − m| for a unit u ⊥ w_o
    pub perp_gap: f64,
}

/// Resolvent R = (S + λI)⁻¹ against its deterministic equivalent m Π⊥ + m̃ Π.
pub fn resolvent_probe(cfg: &ExperimentConfig) -> Result<ResolventReport> {
    cfg.validate()?;
    let vecs = construct_vectors(&cfg.geometry, cfg.d)?;
    let (_, w_g, w_o) = &vecs;
    let c = constants(&cfg.q, cfg.mode, &cfg.geometry)?;
    let sp = spectral_point(&c, cfg.phi(), cfg.lambda)?;
    let d = cfg.d;
    let mut u = DVector::zeros(d);
    u[d - 1] = 1.0;
    let per: Vec<Result<(f64, f64, f64)>> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| {
            let ds = sample_dataset(cfg, w_g, StreamKey::new(cfg.seed, t, 0, PURPOSE_TRAIN));
            let mask = apply_curation(&ds, w_o, &cfg.q, cfg.mode)?;
            let (a, _) = normal_equations(&ds, &mask, cfg.lambda);
            let r = cholesky(a)?.inverse();
            Ok((r.trace() / d as f64, w_o.dot(&(&r * w_o)), u.dot(&(&r * &u))))
        })
        .collect();
    let per: Vec<(f64, f64, f64)> = per.into_iter().collect::<Result<_>>()?;
    let avg = |f: fn(&(f64, f64, f64)) -> f64| pairwise_sum(&per.iter().map(f).collect::<Vec<_>>()) / per.len() as f64;
    let (tr, par, perp) = (avg(|x| x.0), avg(|x| x.1), avg(|x| x.2));
    Ok(ResolventReport {
        trace_mean: tr,
        parallel_mean: par,
        perp_mean: perp,
        m: sp.m,
        m_tilde: sp.m_tilde,
        s: sp.s,
        trace_gap: (tr - sp.m).abs(),
        parallel_gap: (par - sp.m_tilde).abs(),
        parallel_gap_s: (par - sp.s).abs(),
        perp_gap: (perp - sp.m).abs(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarginReport {
    /// ŵ·w_* and ‖ŵ‖² of the probed fit
    pub m: f64,
    pub nu: f64,
    pub first_emp: f64,
    pub first_se: f64,
    pub first_pred: f64,
    pub second_emp: f64,
    pub second_se: f64,
    pub second_pred: f64,
    pub first_z: f64,
    pub second_z: f64,
    pub first_rel_gap: f64,
    pub second_rel_gap: f64,
    /// Asymptotic m and ν from the theory, m0/(1+φm(−λ)) and ν0/(1+φm(−λ))².
    pub m_theory: f64,
    pub nu_theory: f64,
}

/// Test margins y·x⊤ŵ of the trial-0 fit against the folded-Gaussian law
/// m|G₁| + √(ν−m²)G₂ (mean m√(2/π), second moment ν).
pub fn margin_probe(cfg: &ExperimentConfig, n_test: usize) -> Result<MarginReport> {
    cfg.validate()?;
    if cfg.target != Target::Classification {
        return Err(Error::InvalidInput("margin probe needs a classification config".into()));
    }
    if n_test < 2 {
        return Err(Error::InvalidInput("need at least 2 test points".into()));
    }
    let vecs = construct_vectors(&cfg.geometry, cfg.d)?;
    let (_, w_hat) = fit_trial(cfg, &vecs, 0)?;
    let w_star = &vecs.0;
    let key = StreamKey::new(cfg.seed, 0, 0, PURPOSE_TEST);
    const BLOCK: usize = 4096;
    let blocks: Vec<(Vec<f64>, Vec<f64>)> = (0..n_test.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let lo = b * BLOCK;
            let hi = (lo + BLOCK).min(n_test);
            let mut x = vec![0.0; cfg.d];
            let mut firsts = Vec::with_capacity(hi - lo);
            let mut seconds = Vec::with_capacity(hi - lo);
            for i in lo..hi {
                let mut rng = key.row_rng(i as u64);
                for v in x.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                let xs: f64 = x.iter().zip(w_star.iter()).map(|(a, b)| a * b).sum();
                let xh: f64 = x.iter().zip(w_hat.iter()).map(|(a, b)| a * b).sum();
                let margin = sign(xs) * xh;
                firsts.push(margin);
                seconds.push(margin * margin);
            }
            (firsts, seconds)
        })
        .collect();
    let firsts: Vec<f64> = blocks.iter().flat_map(|b| b.0.iter().copied()).collect();
    let seconds: Vec<f64> = blocks.iter().flat_map(|b| b.1.iter().copied()).collect();
    let (first_emp, first_se) = mean_se(&firsts);
    let (second_emp, second_se) = mean_se(&seconds);
    let m = w_hat.dot(w_star);
    let nu = w_hat.norm_squared();
    let first_pred = m * (2.0 / std::f64::consts::PI).sqrt();
    let second_pred = nu;
    let c = constants(&cfg.q, cfg.mode, &cfg.geometry)?;
    let phi = cfg.phi();
    let pm = plane_moments(&cfg.q, cfg.mode, &cfg.geometry)?;
    let pred = classification_error_plane(&cfg.geometry, &c, &pm, phi, cfg.lambda)?;
    let delta = 1.0 + phi * spectral_point(&c, phi, cfg.lambda)?.m;
    Ok(MarginReport {
        m,
        nu,
        first_emp,
        first_se,
        first_pred,
        second_emp,
        second_se,
        second_pred,
        first_z: (first_emp - first_pred) / first_se,
        second_z: (second_emp - second_pred) / second_se,
        first_rel_gap: (first_emp - first_pred).abs() / first_pred.abs(),
        second_rel_gap: (second_emp - second_pred).abs() / second_pred.abs(),
        m_theory: pred.m0 / delta,
        nu_theory: pred.nu0 / (delta * delta),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloConstants {
    pub estimate: CurationConstants,
    pub std_error: CurationConstants,
    pub plane: PlaneMoments,
    pub plane_std_error: PlaneMoments,
}

/// Monte Carlo estimates of (p, γ, β, β̃) from scalar draws of the oracle
/// margin G_o and the orthogonal generator component G_⊥:
/// p = E[k], γ = E[kG_o²], β̃ = E[k·y·G_o], β = E[k·y·G_⊥],
/// plus γ_v = E[kG_⊥²] and γ_ov = E[kG_oG_⊥].
pub fn monte_carlo_constants(
    q: &PruningFunction,
    mode: CurationMode,
    geom: &GeometrySpec,
    draws: usize,
    seed: u64,
) -> Result<MonteCarloConstants> {
    if draws < 2 {
        return Err(Error::InvalidInput("need at least 2 draws".into()));
    }
    let rg = geom.rho_g;
    let sp = geom.sigma_perp();
    const BLOCK: usize = 1 << 14;
    let key = StreamKey::new(seed, 0, 0, PURPOSE_SCALAR);
    let blocks: Vec<[Vec<f64>; 6]> = (0..draws.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let lo = b * BLOCK;
            let hi = (lo + BLOCK).min(draws);
            let mut rng = key.row_rng(b as u64);
            let mut out: [Vec<f64>; 6] = Default::default();
            for _ in lo..hi {
                let go: f64 = rng.sample(StandardNormal);
                let gp: f64 = rng.sample(StandardNormal);
                let y = sign(rg * go + sp * gp);
                let keep = q.q(go)
                    && match mode {
                        CurationMode::LabelAgnostic => true,
                        CurationMode::LabelAware => y == sign(go),
                    };
                let k = if keep { 1.0 } else { 0.0 };
                out[0].push(k);
                out[1].push(k * go * go);
                out[2].push(k * y * gp);
                out[3].push(k * y * go);
                out[4].push(k * gp * gp);
                out[5].push(k * go * gp);
            }
            out
        })
        .collect();
    let stat = |j: usize| {
        let all: Vec<f64> = blocks.iter().flat_map(|b| b[j].iter().copied()).collect();
        mean_se(&all)
    };
    let (p, gamma, beta, bt) = (stat(0), stat(1), stat(2), stat(3));
    let (gv, gov) = (stat(4), stat(5));
    Ok(MonteCarloConstants {
        estimate: CurationConstants { p: p.0, gamma: gamma.0, beta: beta.0, beta_tilde: bt.0 },
        std_error: CurationConstants { p: p.1, gamma: gamma.1, beta: beta.1, beta_tilde: bt.1 },
        plane: PlaneMoments { gamma_v: gv.0, gamma_ov: gov.0 },
        plane_std_error: PlaneMoments { gamma_v: gv.1, gamma_ov: gov.1 },
    })
}
