//! Pass/fail bookkeeping for the acceptance run.

use std::time::Instant;

/// Relative error, or absolute error when the reference is below `floor`.
pub fn scaled_error(theory: f64, empirical: f64, floor: f64) -> f64 {
    let diff = (empirical - theory).abs();
    if theory.abs() < floor {
        diff
    } else {
        diff / theory.abs()
    }
}

pub struct Board {
    results: Vec<(String, bool)>,
    started: Instant,
}

impl Default for Board {
    fn default() -> Self {
        Self::new()
    }
}

impl Board {
    pub fn new() -> Self {
        Self { results: Vec::new(), started: Instant::now() }
    }

    /// Prints one PASS/FAIL line.
    pub fn record(&mut self, id: &str, title: &str, pass: bool, detail: &str) {
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("{tag} {id} {title}: {detail} [{:.0}s]", self.started.elapsed().as_secs_f64());
        self.results.push((id.to_string(), pass));
    }

    /// Indented diagnostic line under the current criterion.
    pub fn note(&self, line: impl AsRef<str>) {
        println!("    {}", line.as_ref());
    }

    pub fn failed(&self) -> Vec<&str> {
        self.results.iter().filter(|r| !r.1).map(|r| r.0.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.results.len()
    }

    pub fn is_empty(&self) -> bool {
        self.results.is_empty()
    }
}
