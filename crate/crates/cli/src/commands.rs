//! The six subcommands. Grid points run on the rayon pool and rows come back
//! in grid order.

use curation_laws::curation::{constants, gamma_bounds, plane_moments, qpu_gamma, CurationMode};
use curation_laws::laws::{classification_error, classification_error_plane, regression_error};
use curation_laws::simulator::{
    collapse_loop, margin_probe, resolvent_probe, run_trials, CollapseConfig, CollapseSeries,
};
use rayon::prelude::*;

use crate::config::{Config, Point, ProbeKind, Task};
use crate::output::{Cell, Table};
use crate::CliError;

/// Below this |theory| the comparison switches to absolute error.
pub const NEAR_ZERO_FLOOR: f64 = 1e-2;

const PREFIX: [&str; 12] =
    ["n", "d", "phi", "mode", "strategy", "p_keep", "u", "rho", "rho_g", "rho_star", "lambda", "sigma"];

fn header(extra: &[&'static str]) -> Vec<&'static str> {
    PREFIX.iter().chain(extra).copied().collect()
}

fn prefix(pt: &Point) -> Vec<Cell> {
    let strategy = pt.effective_strategy().unwrap_or_else(|_| pt.strategy.clone());
    let p_keep =
        pt.pruning().ok().zip(pt.geometry().ok()).and_then(|(q, g)| constants(&q, pt.mode, &g).ok()).map(|c| c.p);
    vec![
        pt.n.into(),
        pt.d.into(),
        pt.phi().into(),
        pt.mode.label().into(),
        strategy.label().into(),
        Cell::opt(p_keep),
        Cell::opt(pt.u_value()),
        pt.rho.into(),
        pt.rho_g.into(),
        pt.rho_star.into(),
        pt.lambda.into(),
        pt.sigma.into(),
    ]
}

/// Prefix, then either the computed cells or blanks, then the error column.
fn row(pt: &Point, width: usize, cells: Result<Vec<Cell>, String>) -> Vec<Cell> {
    let mut r = prefix(pt);
    match cells {
        Ok(c) => {
            debug_assert_eq!(c.len(), width);
            r.extend(c);
            r.push(Cell::Empty);
        }
        Err(e) => {
            r.extend(std::iter::repeat_n(Cell::Empty, width));
            r.push(Cell::Text(e));
        }
    }
    r
}

fn sweep<T: Send>(cfg: &Config, f: impl Fn(&Point) -> T + Sync) -> Result<Vec<(Point, T)>, CliError> {
    let pts = cfg.points()?;
    Ok(pts
        .into_par_iter()
        .map(|p| {
            let v = f(&p);
            (p, v)
        })
        .collect())
}

fn regression_needs_agnostic(pt: &Point) -> Result<(), String> {
    if pt.mode == CurationMode::LabelAware {
        return Err("the regression law covers label-agnostic curation only".into());
    }
    Ok(())
}

/// The headline prediction: classification error or regression total.
pub fn theory_value(pt: &Point) -> Result<f64, String> {
    let q = pt.pruning()?;
    let g = pt.geometry()?;
    let s = |e: curation_laws::Error| e.to_string();
    match pt.task {
        Task::Classification => {
            let c = constants(&q, pt.mode, &g).map_err(s)?;
            let pm = plane_moments(&q, pt.mode, &g).map_err(s)?;
            Ok(classification_error_plane(&g, &c, &pm, pt.phi(), pt.lambda).map_err(s)?.error)
        }
        Task::Regression => {
            regression_needs_agnostic(pt)?;
            let c = constants(&q, pt.mode, &g).map_err(s)?;
            let rg = pt.regression_geometry()?;
            Ok(regression_error(&rg, &c, pt.phi(), pt.lambda, pt.sigma).map_err(s)?.total)
        }
    }
}

pub fn theory(cfg: &Config) -> Result<Table, CliError> {
    let s = |e: curation_laws::Error| e.to_string();
    match cfg.task {
        Task::Classification => {
            let extra = [
                "gamma",
                "beta",
                "beta_tilde",
                "gamma_v",
                "gamma_ov",
                "m0",
                "nu0",
                "test_error",
                "test_error_isotropic",
            ];
            let mut t = Table::new(header(&[&extra[..], &["error"]].concat()));
            for (pt, cells) in sweep(cfg, |pt| -> Result<Vec<Cell>, String> {
                let q = pt.pruning()?;
                let g = pt.geometry()?;
                let c = constants(&q, pt.mode, &g).map_err(s)?;
                let pm = plane_moments(&q, pt.mode, &g).map_err(s)?;
                let pred = classification_error_plane(&g, &c, &pm, pt.phi(), pt.lambda).map_err(s)?;
                let iso = classification_error(&g, &c, pt.phi(), pt.lambda).ok().map(|p| p.error);
                Ok(vec![
                    c.gamma.into(),
                    c.beta.into(),
                    c.beta_tilde.into(),
                    pm.gamma_v.into(),
                    pm.gamma_ov.into(),
                    pred.m0.into(),
                    pred.nu0.into(),
                    pred.error.into(),
                    Cell::opt(iso),
                ])
            })? {
                t.push(row(&pt, extra.len(), cells));
            }
            Ok(t)
        }
        Task::Regression => {
            let extra = ["norm_wg", "gamma", "bias", "variance", "shift_correction", "total"];
            let mut t = Table::new(header(&[&extra[..], &["error"]].concat()));
            for (pt, cells) in sweep(cfg, |pt| -> Result<Vec<Cell>, String> {
                regression_needs_agnostic(pt)?;
                let q = pt.pruning()?;
                let c = constants(&q, pt.mode, &pt.geometry()?).map_err(s)?;
                let rg = pt.regression_geometry()?;
                let r = regression_error(&rg, &c, pt.phi(), pt.lambda, pt.sigma).map_err(s)?;
                Ok(vec![
                    pt.norm_wg.into(),
                    c.gamma.into(),
                    r.bias_b.into(),
                    r.variance_v.into(),
                    r.shift_correction.into(),
                    r.total.into(),
                ])
            })? {
                t.push(row(&pt, extra.len(), cells));
            }
            Ok(t)
        }
    }
}

pub fn simulate(cfg: &Config) -> Result<Table, CliError> {
    let extra = ["empirical_mean", "empirical_se", "kept_fraction", "skipped_trials"];
    let mut t = Table::new(header(&[&extra[..], &["error"]].concat()));
    let (trials, seed) = (cfg.trials(), cfg.seed());
    for (pt, cells) in sweep(cfg, |pt| -> Result<Vec<Cell>, String> {
        let s = run_trials(&pt.experiment(trials, seed)?).map_err(|e| e.to_string())?;
        Ok(vec![s.mean.into(), s.std_error.into(), s.kept_fraction_mean.into(), s.skipped.into()])
    })? {
        t.push(row(&pt, extra.len(), cells));
    }
    Ok(t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub table: Table,
    pub rel_errs: Vec<f64>,
    pub failures: Vec<String>,
}

impl CompareReport {
    pub fn mean_rel_err(&self) -> f64 {
        self.rel_errs.iter().sum::<f64>() / self.rel_errs.len().max(1) as f64
    }

    pub fn max_rel_err(&self) -> f64 {
        self.rel_errs.iter().copied().fold(0.0, f64::max)
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "compare: {} points compared, mean rel err {:.4}, max rel err {:.4}",
            self.rel_errs.len(),
            self.mean_rel_err(),
            self.max_rel_err()
        );
        for f in &self.failures {
            s.push_str(&format!("\n  failed: {f}"));
        }
        s
    }

    /// Row failures take precedence over the tolerance check.
    pub fn verdict(&self, tolerance: f64) -> Result<(), CliError> {
        if !self.failures.is_empty() {
            return Err(CliError::Runtime(format!("{} grid points failed", self.failures.len())));
        }
        let max = self.max_rel_err();
        if max > tolerance {
            return Err(CliError::Tolerance(format!("max rel err {max:.4} > {tolerance}")));
        }
        Ok(())
    }
}

pub fn scaled_error(theory: f64, empirical: f64) -> f64 {
    let diff = (theory - empirical).abs();
    if theory.abs() < NEAR_ZERO_FLOOR {
        diff
    } else {
        diff / theory.abs()
    }
}

pub fn compare(cfg: &Config) -> Result<CompareReport, CliError> {
    let extra = ["theory", "empirical_mean", "empirical_se", "rel_err", "skipped_trials"];
    let mut table = Table::new(header(&extra));
    let (trials, seed) = (cfg.trials(), cfg.seed());
    let mut rel_errs = Vec::new();
    let mut failures = Vec::new();
    for (pt, res) in sweep(cfg, |pt| -> Result<_, String> {
        let theory = theory_value(pt)?;
        let s = run_trials(&pt.experiment(trials, seed)?).map_err(|e| e.to_string())?;
        Ok((theory, s))
    })? {
        let mut r = prefix(&pt);
        match res {
            Ok((theory, s)) => {
                let rel = scaled_error(theory, s.mean);
                rel_errs.push(rel);
                r.extend([theory.into(), s.mean.into(), s.std_error.into(), rel.into(), s.skipped.into()]);
            }
            Err(e) => {
                failures.push(format!("n={} p={:?} strategy={}: {e}", pt.n, pt.p, pt.strategy.label()));
                r.extend(std::iter::repeat_n(Cell::Empty, extra.len()));
            }
        }
        table.push(r);
    }
    Ok(CompareReport { table, rel_errs, failures })
}

pub const COLLAPSE_HEADER: [&str; 12] = [
    "point",
    "repetition",
    "round",
    "n",
    "d",
    "strategy",
    "mode",
    "error_uncurated",
    "error_curated",
    "rho_uncurated",
    "rho_curated",
    "kept_fraction",
];

pub fn collapse(cfg: &Config) -> Result<Table, CliError> {
    if cfg.task != Task::Classification {
        return Err(CliError::Config("collapse runs classification only".into()));
    }
    let rounds = cfg.fixed.rounds.unwrap_or(20);
    let reps = cfg.fixed.repetitions.unwrap_or(1);
    let fresh = cfg.fixed.fresh_inputs.unwrap_or(true);
    let mut t = Table::new(COLLAPSE_HEADER.iter().chain(&["error"]).copied().collect());
    if rounds == 0 {
        return Ok(t);
    }
    let pts = cfg.points()?;
    let jobs: Vec<(usize, usize)> = (0..pts.len()).flat_map(|i| (0..reps).map(move |r| (i, r))).collect();
    let runs: Vec<Result<(CollapseSeries, CollapseSeries), String>> = jobs
        .par_iter()
        .map(|&(i, rep)| {
            let base = pts[i].experiment(1, cfg.seed())?;
            let arm = |curate| {
                collapse_loop(
                    &CollapseConfig {
                        base: base.clone(),
                        rounds,
                        curate_each_round: curate,
                        fresh_inputs_each_round: fresh,
                    },
                    rep as u64,
                )
                .map_err(|e| e.to_string())
            };
            Ok((arm(false)?, arm(true)?))
        })
        .collect();
    for (&(i, rep), run) in jobs.iter().zip(runs) {
        let pt = &pts[i];
        let strategy = pt.effective_strategy().unwrap_or_else(|_| pt.strategy.clone());
        let lead = |round: usize| -> Vec<Cell> {
            vec![
                i.into(),
                rep.into(),
                round.into(),
                pt.n.into(),
                pt.d.into(),
                strategy.label().into(),
                pt.mode.label().into(),
            ]
        };
        match run {
            Ok((plain, curated)) => {
                for (a, b) in plain.rounds.iter().zip(&curated.rounds) {
                    let mut r = lead(a.round);
                    r.extend([
                        a.error.into(),
                        b.error.into(),
                        a.rho.into(),
                        b.rho.into(),
                        b.kept_fraction.into(),
                        Cell::Empty,
                    ]);
                    t.push(r);
                }
                let done = plain.rounds.len().min(curated.rounds.len());
                let halted = [plain.halted, curated.halted].into_iter().flatten().collect::<Vec<_>>();
                if !halted.is_empty() {
                    let mut r = lead(done);
                    r.extend(std::iter::repeat_n(Cell::Empty, 5));
                    r.push(Cell::Text(format!("series truncated: {}", halted.join("; "))));
                    t.push(r);
                }
            }
            Err(e) => {
                let mut r = lead(0);
                r.extend(std::iter::repeat_n(Cell::Empty, 5));
                r.push(Cell::Text(e));
                t.push(r);
            }
        }
    }
    Ok(t)
}

pub const LENS_U: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

pub fn lens(cfg: &Config) -> Result<Table, CliError> {
    let grid = cfg.lens_grid();
    let mut t = Table::new(vec![
        "p",
        "gamma_min",
        "gamma_max",
        "gamma_u0",
        "gamma_u25",
        "gamma_u50",
        "gamma_u75",
        "gamma_u100",
        "error",
    ]);
    for p in grid {
        let cells = (|| -> Result<Vec<Cell>, String> {
            let (lo, hi) = gamma_bounds(p).map_err(|e| e.to_string())?;
            let mut v = vec![lo.into(), hi.into()];
            for u in LENS_U {
                v.push(qpu_gamma(p, u).map_err(|e| e.to_string())?.into());
            }
            Ok(v)
        })();
        let mut r = vec![Cell::Num(p)];
        match cells {
            Ok(c) => {
                r.extend(c);
                r.push(Cell::Empty);
            }
            Err(e) => {
                r.extend(std::iter::repeat_n(Cell::Empty, 7));
                r.push(Cell::Text(e));
            }
        }
        t.push(r);
    }
    Ok(t)
}

pub fn probe(cfg: &Config) -> Result<Table, CliError> {
    if cfg.task != Task::Classification {
        return Err(CliError::Config("probes run classification only".into()));
    }
    let (trials, seed) = (cfg.trials(), cfg.seed());
    match cfg.fixed.probe.unwrap_or_default() {
        ProbeKind::Resolvent => {
            let extra = [
                "trace_mean",
                "m",
                "trace_gap",
                "parallel_mean",
                "m_tilde",
                "s",
                "parallel_gap",
                "parallel_gap_s",
                "perp_mean",
                "perp_gap",
            ];
            let mut t = Table::new(header(&[&extra[..], &["error"]].concat()));
            for (pt, cells) in sweep(cfg, |pt| -> Result<Vec<Cell>, String> {
                let r = resolvent_probe(&pt.experiment(trials, seed)?).map_err(|e| e.to_string())?;
                Ok(vec![
                    r.trace_mean.into(),
                    r.m.into(),
                    r.trace_gap.into(),
                    r.parallel_mean.into(),
                    r.m_tilde.into(),
                    r.s.into(),
                    r.parallel_gap.into(),
                    r.parallel_gap_s.into(),
                    r.perp_mean.into(),
                    r.perp_gap.into(),
                ])
            })? {
                t.push(row(&pt, extra.len(), cells));
            }
            Ok(t)
        }
        ProbeKind::Margin => {
            let n_test = cfg.fixed.n_test.unwrap_or(100_000);
            let extra = [
                "m_fit",
                "nu_fit",
                "first_emp",
                "first_se",
                "first_pred",
                "first_z",
                "second_emp",
                "second_se",
                "second_pred",
                "second_z",
                "m_theory",
                "nu_theory",
            ];
            let mut t = Table::new(header(&[&extra[..], &["error"]].concat()));
            for (pt, cells) in sweep(cfg, |pt| -> Result<Vec<Cell>, String> {
                let r = margin_probe(&pt.experiment(trials, seed)?, n_test).map_err(|e| e.to_string())?;
                Ok(vec![
                    r.m.into(),
                    r.nu.into(),
                    r.first_emp.into(),
                    r.first_se.into(),
                    r.first_pred.into(),
                    r.first_z.into(),
                    r.second_emp.into(),
                    r.second_se.into(),
                    r.second_pred.into(),
                    r.second_z.into(),
                    r.m_theory.into(),
                    r.nu_theory.into(),
                ])
            })? {
                t.push(row(&pt, extra.len(), cells));
            }
            Ok(t)
        }
    }
}
