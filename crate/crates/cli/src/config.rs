//! Config file schema, flag overrides and the expanded sweep grid.

use std::path::Path;

use curation_laws::curation::{CurationMode, GeometrySpec, PruningFunction, Strategy};
use curation_laws::laws::RegressionGeometry;
use curation_laws::simulator::{ExperimentConfig, Target};
use serde::{Deserialize, Serialize};

use crate::{CliError, Command};

pub const MAX_GRID_POINTS: usize = 100_000;
pub const DEFAULT_LENS_GRID: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    #[default]
    Classification,
    Regression,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    #[default]
    Resolvent,
    Margin,
}

/// Named value lists; the sweep is their Cartesian product.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axes {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategy: Option<Vec<Strategy>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_g: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_star: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<Vec<CurationMode>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fixed {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategy: Option<Strategy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_g: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_star: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<CurationMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u: Option<f64>,
    /// ‖w_g‖ for regression.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norm_wg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rounds: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repetitions: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fresh_inputs: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_test: Option<usize>,
    /// Keep fractions for `lens`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub task: Task,
    #[serde(default)]
    pub axes: Axes,
    #[serde(default)]
    pub fixed: Fixed,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub out: Option<String>,
    pub tolerance: Option<f64>,
}

impl Config {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    /// Applies flag overrides and fills every default, so the result is the
    /// complete description of the run.
    pub fn merged(mut self, o: &Overrides) -> Result<Self, CliError> {
        if let Some(s) = o.seed {
            self.seed = Some(s);
        }
        if let Some(t) = o.trials {
            self.trials = Some(t);
        }
        if let Some(out) = &o.out {
            self.output = Some(out.clone());
        }
        if let Some(t) = o.tolerance {
            self.fixed.tolerance = Some(t);
        }
        self.trials.get_or_insert(50);
        self.seed.get_or_insert(0);
        let a = &self.axes;
        let f = &mut self.fixed;
        macro_rules! default_unless_axis {
            ($($field:ident = $value:expr),* $(,)?) => {
                $(if a.$field.is_none() && f.$field.is_none() {
                    f.$field = Some($value);
                })*
            };
        }
        default_unless_axis!(
            rho = 1.0,
            rho_g = 1.0,
            rho_star = 1.0,
            lambda = 1e-6,
            sigma = 0.0,
            mode = CurationMode::LabelAgnostic,
        );
        if a.strategy.is_none() && f.strategy.is_none() {
            f.strategy = Some(Strategy::All);
        }
        f.norm_wg.get_or_insert(1.0);
        f.tolerance.get_or_insert(0.05);
        self.validate()?;
        Ok(self)
    }

    /// Fills the settings only one subcommand reads, so the echoed config
    /// shows what actually ran.
    pub fn with_command_defaults(mut self, cmd: Command) -> Self {
        let f = &mut self.fixed;
        match cmd {
            Command::Collapse => {
                f.rounds.get_or_insert(20);
                f.repetitions.get_or_insert(1);
                f.fresh_inputs.get_or_insert(true);
            }
            Command::Probe => {
                let kind = *f.probe.get_or_insert_default();
                if kind == ProbeKind::Margin {
                    f.n_test.get_or_insert(100_000);
                }
            }
            Command::Lens => {
                if f.p_grid.is_none() && self.axes.p.is_none() && f.p.is_none() {
                    f.p_grid = Some(DEFAULT_LENS_GRID.to_vec());
                }
            }
            Command::Theory | Command::Simulate | Command::Compare => {}
        }
        self
    }

    /// Keep fractions for `lens`: p_grid, else the p axis, else fixed p.
    pub fn lens_grid(&self) -> Vec<f64> {
        self.fixed
            .p_grid
            .clone()
            .or_else(|| self.axes.p.clone())
            .or_else(|| self.fixed.p.map(|p| vec![p]))
            .unwrap_or_else(|| DEFAULT_LENS_GRID.to_vec())
    }

    pub fn trials(&self) -> usize {
        self.trials.unwrap_or(50)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn tolerance(&self) -> f64 {
        self.fixed.tolerance.unwrap_or(0.05)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        let (a, f) = (&self.axes, &self.fixed);
        macro_rules! no_overlap {
            ($($field:ident),*) => {
                $(if a.$field.is_some() && f.$field.is_some() {
                    return bad(format!("'{}' appears in both axes and fixed", stringify!($field)));
                })*
            };
        }
        no_overlap!(n, p, strategy, rho, rho_g, rho_star, lambda, sigma, mode, u);
        macro_rules! nonempty {
            ($($field:ident),*) => {
                $(if a.$field.as_ref().is_some_and(|v| v.is_empty()) {
                    return bad(format!("axis '{}' is empty", stringify!($field)));
                })*
            };
        }
        nonempty!(n, p, strategy, rho, rho_g, rho_star, lambda, sigma, mode, u);

        let cosine = |name: &str, v: f64| {
            if (-1.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(CliError::Config(format!("{name} = {v} outside [-1, 1]")))
            }
        };
        for (name, axis, fixed) in
            [("rho", &a.rho, f.rho), ("rho_g", &a.rho_g, f.rho_g), ("rho_star", &a.rho_star, f.rho_star)]
        {
            for v in values(axis, fixed) {
                cosine(name, v)?;
            }
        }
        for v in values(&a.n, f.n) {
            if v < 1 {
                return bad("n must be >= 1".into());
            }
        }
        if let Some(d) = f.d {
            if d < 3 {
                return bad(format!("d must be >= 3, got {d}"));
            }
        }
        for v in values(&a.p, f.p) {
            if !(v > 0.0 && v <= 1.0) {
                return bad(format!("p = {v} outside (0, 1]"));
            }
        }
        for v in values(&a.u, f.u) {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("u = {v} outside [0, 1]"));
            }
        }
        for v in values(&a.lambda, f.lambda) {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("lambda = {v} must be positive"));
            }
        }
        for v in values(&a.sigma, f.sigma) {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("sigma = {v} must be nonnegative"));
            }
        }
        for s in values(&a.strategy, f.strategy.clone()) {
            s.to_pruning().map_err(|e| CliError::Config(format!("strategy {}: {e}", s.label())))?;
        }
        if let Some(r) = f.norm_wg {
            if !(r > 0.0 && r.is_finite()) {
                return bad(format!("norm_wg = {r} must be positive"));
            }
        }
        if let Some(t) = f.tolerance {
            if !(t >= 0.0) {
                return bad(format!("tolerance = {t} must be nonnegative"));
            }
        }
        if self.trials() < 1 {
            return bad("trials must be >= 1".into());
        }
        if let Some(g) = &f.p_grid {
            if g.is_empty() {
                return bad("p_grid is empty".into());
            }
            for &p in g {
                if !(p > 0.0 && p <= 1.0) {
                    return bad(format!("p_grid value {p} outside (0, 1]"));
                }
            }
        }
        let size = self.grid_size();
        if size > MAX_GRID_POINTS {
            return bad(format!("grid has {size} points, limit is {MAX_GRID_POINTS}"));
        }
        Ok(())
    }

    pub fn grid_size(&self) -> usize {
        let a = &self.axes;
        [
            a.n.as_ref().map(Vec::len),
            a.p.as_ref().map(Vec::len),
            a.strategy.as_ref().map(Vec::len),
            a.rho.as_ref().map(Vec::len),
            a.rho_g.as_ref().map(Vec::len),
            a.rho_star.as_ref().map(Vec::len),
            a.lambda.as_ref().map(Vec::len),
            a.sigma.as_ref().map(Vec::len),
            a.mode.as_ref().map(Vec::len),
            a.u.as_ref().map(Vec::len),
        ]
        .into_iter()
        .flatten()
        .fold(1usize, |acc, k| acc.saturating_mul(k))
    }

    /// Grid points in row-major order over the axes
    /// n, p, strategy, rho, rho_g, rho_star, lambda, sigma, mode, u (u fastest).
    pub fn points(&self) -> Result<Vec<Point>, CliError> {
        let (a, f) = (&self.axes, &self.fixed);
        let need = |name: &str| CliError::Config(format!("'{name}' must be given in axes or fixed"));
        let d = f.d.ok_or_else(|| need("d"))?;
        let ns = axis_or_fixed(&a.n, f.n).ok_or_else(|| need("n"))?;
        let ps: Vec<Option<f64>> = opt_axis(&a.p, f.p);
        let strategies = axis_or_fixed(&a.strategy, f.strategy.clone()).ok_or_else(|| need("strategy"))?;
        let rhos = axis_or_fixed(&a.rho, f.rho).ok_or_else(|| need("rho"))?;
        let rho_gs = axis_or_fixed(&a.rho_g, f.rho_g).ok_or_else(|| need("rho_g"))?;
        let rho_stars = axis_or_fixed(&a.rho_star, f.rho_star).ok_or_else(|| need("rho_star"))?;
        let lambdas = axis_or_fixed(&a.lambda, f.lambda).ok_or_else(|| need("lambda"))?;
        let sigmas = axis_or_fixed(&a.sigma, f.sigma).ok_or_else(|| need("sigma"))?;
        let modes = axis_or_fixed(&a.mode, f.mode).ok_or_else(|| need("mode"))?;
        let us: Vec<Option<f64>> = opt_axis(&a.u, f.u);
        let mut out = Vec::with_capacity(self.grid_size());
        for &n in &ns {
            for &p in &ps {
                for s in &strategies {
                    for &rho in &rhos {
                        for &rho_g in &rho_gs {
                            for &rho_star in &rho_stars {
                                for &lambda in &lambdas {
                                    for &sigma in &sigmas {
                                        for &mode in &modes {
                                            for &u in &us {
                                                out.push(Point {
                                                    n,
                                                    d,
                                                    p,
                                                    u,
                                                    strategy: s.clone(),
                                                    rho,
                                                    rho_g,
                                                    rho_star,
                                                    lambda,
                                                    sigma,
                                                    mode,
                                                    norm_wg: f.norm_wg.unwrap_or(1.0),
                                                    task: self.task,
                                                });
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

fn values<T: Clone>(axis: &Option<Vec<T>>, fixed: Option<T>) -> Vec<T> {
    axis.clone().unwrap_or_default().into_iter().chain(fixed).collect()
}

fn axis_or_fixed<T: Clone>(axis: &Option<Vec<T>>, fixed: Option<T>) -> Option<Vec<T>> {
    axis.clone().or_else(|| fixed.map(|v| vec![v]))
}

fn opt_axis(axis: &Option<Vec<f64>>, fixed: Option<f64>) -> Vec<Option<f64>> {
    match axis {
        Some(v) => v.iter().copied().map(Some).collect(),
        None => vec![fixed],
    }
}

/// One fully specified grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub n: usize,
    pub d: usize,
    /// Keep-fraction override applied to the strategy.
    pub p: Option<f64>,
    /// Blend override applied to a `qpu` strategy.
    pub u: Option<f64>,
    pub strategy: Strategy,
    pub rho: f64,
    pub rho_g: f64,
    pub rho_star: f64,
    pub lambda: f64,
    pub sigma: f64,
    pub mode: CurationMode,
    pub norm_wg: f64,
    pub task: Task,
}

impl Point {
    pub fn phi(&self) -> f64 {
        self.d as f64 / self.n as f64
    }

    /// The strategy after the p and u overrides.
    pub fn effective_strategy(&self) -> Result<Strategy, String> {
        let mut s = self.strategy.clone();
        if let Some(p) = self.p {
            if matches!(s, Strategy::All | Strategy::Intervals { .. }) {
                return Err(format!("strategy '{}' has no keep fraction to set", s.label()));
            }
            s = s.with_p(p);
        }
        if let Some(u) = self.u {
            if !matches!(s, Strategy::Qpu { .. }) {
                return Err(format!("strategy '{}' has no blend parameter u", s.label()));
            }
            s = s.with_u(u);
        }
        Ok(s)
    }

    pub fn pruning(&self) -> Result<PruningFunction, String> {
        self.effective_strategy()?.to_pruning().map_err(|e| e.to_string())
    }

    pub fn geometry(&self) -> Result<GeometrySpec, String> {
        GeometrySpec::new(self.rho, self.rho_g, self.rho_star).map_err(|e| e.to_string())
    }

    pub fn regression_geometry(&self) -> Result<RegressionGeometry, String> {
        RegressionGeometry::new(self.norm_wg, self.rho, self.rho_g, self.rho_star).map_err(|e| e.to_string())
    }

    pub fn target(&self) -> Target {
        match self.task {
            Task::Classification => Target::Classification,
            Task::Regression => Target::Regression { norm_wg: self.norm_wg, sigma: self.sigma },
        }
    }

    pub fn experiment(&self, trials: usize, seed: u64) -> Result<ExperimentConfig, String> {
        Ok(ExperimentConfig {
            n: self.n,
            d: self.d,
            lambda: self.lambda,
            mode: self.mode,
            q: self.pruning()?,
            geometry: self.geometry()?,
            target: self.target(),
            trials,
            seed,
        })
    }

    /// The strategy's u, when it has one.
    pub fn u_value(&self) -> Option<f64> {
        self.effective_strategy().ok().and_then(|s| s.u())
    }
}
