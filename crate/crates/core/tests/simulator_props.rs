use curation_laws::curation::{
    constants, keep_easy_for_p, keep_hard_for_p, CurationMode, GeometrySpec, PruningFunction,
};
use curation_laws::simulator::*;
use proptest::prelude::*;
use proptest::test_runner::RngSeed;
use std::f64::consts::PI;

fn fixed(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, rng_seed: RngSeed::Fixed(0x5eed), failure_persistence: None, ..ProptestConfig::default() }
}

fn config(n: usize, d: usize, q: PruningFunction, mode: CurationMode, trials: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        n,
        d,
        lambda: 1e-2,
        mode,
        q,
        geometry: GeometrySpec::new(0.9, 0.7, 0.8).unwrap(),
        target: Target::Classification,
        trials,
        seed,
    }
}

fn run_with_threads(cfg: &ExperimentConfig, threads: usize) -> TrialSummary {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| run_trials(cfg).unwrap())
}

proptest! {
    #![proptest_config(fixed(6))]

    #[test]
    fn results_independent_of_thread_count(seed in any::<u64>(), p in 0.2f64..0.9, aware in any::<bool>()) {
        let mode = if aware { CurationMode::LabelAware } else { CurationMode::LabelAgnostic };
        let cfg = config(300, 40, keep_hard_for_p(p).unwrap(), mode, 6, seed);
        let a = run_with_threads(&cfg, 1);
        let b = run_with_threads(&cfg, 4);
        prop_assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        prop_assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
        prop_assert_eq!(a.per_trial, b.per_trial);
    }
}

#[test]
fn kept_fraction_concentrates() {
    let n = 2000;
    let g = GeometrySpec::new(0.9, 0.7, 0.8).unwrap();
    let (_, w_g, w_o) = construct_vectors(&g, 5).unwrap();
    for (q, mode) in [
        (keep_hard_for_p(0.3).unwrap(), CurationMode::LabelAgnostic),
        (keep_easy_for_p(0.5).unwrap(), CurationMode::LabelAware),
    ] {
        let p = constants(&q, mode, &g).unwrap().p;
        let band = 4.0 * (p * (1.0 - p) / n as f64).sqrt();
        let cfg = config(n, 5, q.clone(), mode, 1, 11);
        let inside = (0..400u64)
            .filter(|&t| {
                let ds = sample_dataset(&cfg, &w_g, StreamKey::new(11, t, 0, 1));
                let kept = apply_curation(&ds, &w_o, &q, mode).unwrap().iter().filter(|&&k| k).count();
                (kept as f64 / n as f64 - p).abs() <= band
            })
            .count();
        assert!(inside as f64 >= 0.99 * 400.0, "{inside}/400 inside the band");
    }
}

#[test]
fn standard_error_scales_with_trials() {
    let q = keep_hard_for_p(0.5).unwrap();
    let small = run_trials(&config(200, 40, q.clone(), CurationMode::LabelAgnostic, 100, 5)).unwrap();
    let large = run_trials(&config(200, 40, q, CurationMode::LabelAgnostic, 200, 5)).unwrap();
    let ratio = small.std_error / large.std_error;
    assert!((ratio - 2f64.sqrt()).abs() <= 0.3, "{ratio}");
    // the first 100 trials of the larger run are the smaller run
    assert_eq!(&large.per_trial[..100], &small.per_trial[..]);
}

#[test]
fn standalone_generator_and_oracle_errors() {
    let g = GeometrySpec::new(0.6, 0.3, 0.75).unwrap();
    let (w_star, w_g, w_o) = construct_vectors(&g, 50).unwrap();
    assert!((exact_classification_error(&w_g, &w_star).0 - 0.6f64.acos() / PI).abs() <= 1e-14);
    assert!((exact_classification_error(&w_o, &w_star).0 - 0.75f64.acos() / PI).abs() <= 1e-14);
    // no pruning and plenty of data: the fit inherits the generator's error
    let mut cfg = config(20_000, 10, PruningFunction::keep_all(), CurationMode::LabelAgnostic, 10, 3);
    cfg.geometry = g;
    cfg.lambda = 1e-6;
    let s = run_trials(&cfg).unwrap();
    let want = 0.6f64.acos() / PI;
    assert!((s.mean - want).abs() <= 0.01, "{} vs {want}", s.mean);
}

#[test]
fn fits_pass_the_residual_check_across_regimes() {
    for (n, d, lambda) in [(50, 200, 1e-6), (200, 200, 1e-6), (400, 40, 1e-8), (100, 300, 10.0)] {
        let mut cfg = config(n, d, keep_easy_for_p(0.6).unwrap(), CurationMode::LabelAware, 3, 9);
        cfg.lambda = lambda;
        let s = run_trials(&cfg).unwrap();
        assert_eq!(s.per_trial.len() + s.skipped, 3);
    }
}

#[test]
fn collapse_arms_share_the_first_fit_inputs() {
    let base = config(400, 50, keep_hard_for_p(0.5).unwrap(), CurationMode::LabelAware, 1, 21);
    let arm = |curate| CollapseConfig {
        base: base.clone(),
        rounds: 3,
        curate_each_round: curate,
        fresh_inputs_each_round: true,
    };
    let a = collapse_loop(&arm(true), 0).unwrap();
    let b = collapse_loop(&arm(false), 0).unwrap();
    assert_eq!(a.rounds[0], b.rounds[0]);
    assert_eq!(a.rounds.len(), 4);
    let empty = collapse_loop(&CollapseConfig { rounds: 0, ..arm(true) }, 0).unwrap();
    assert_eq!(empty.rounds.len(), 1);
}

#[test]
fn label_aware_simulation_follows_plane_law() {
    use curation_laws::curation::make_qpu;
    use curation_laws::laws::predict_classification;
    let cases = [
        ((0.6, 0.3, 0.75), PruningFunction::keep_all()),
        ((0.9, 0.7, 0.8), keep_easy_for_p(0.5).unwrap()),
        ((0.9, 0.7, 0.8), keep_hard_for_p(0.5).unwrap()),
        ((0.6, 0.3, 0.75), make_qpu(0.5, 0.5).unwrap()),
    ];
    for ((rho, rho_g, rho_star), q) in cases {
        let g = GeometrySpec::new(rho, rho_g, rho_star).unwrap();
        let cfg = ExperimentConfig {
            n: 800,
            d: 400,
            lambda: 1e-2,
            mode: CurationMode::LabelAware,
            q: q.clone(),
            geometry: g,
            target: Target::Classification,
            trials: 20,
            seed: 1,
        };
        let s = run_trials(&cfg).unwrap();
        let theory = predict_classification(&q, CurationMode::LabelAware, &g, 0.5, 1e-2).unwrap().error;
        // finite-size bias at n = 800 is a few 1e-3
        assert!(
            (s.mean - theory).abs() <= 4.0 * s.std_error + 5e-3,
            "{:?}: theory {theory} vs {} ± {}",
            g,
            s.mean,
            s.std_error
        );
    }
}
