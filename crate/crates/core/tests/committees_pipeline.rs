use heca_core::committees::{
    committee_path, committee_round, fit_committee, select_lambda, window_at, CommitteeConfig, FitCache,
};
use heca_core::panel::{ForecastPanel, Period};
use heca_core::ridge_qp::DEFAULT_EPSILON;
use heca_core::subset_select::Backend;
use heca_core::synthetic::{emit_synthetic, SyntheticSpec};
use heca_core::HecaError;
use nalgebra::DMatrix;

fn config(lag: usize, grid: Vec<f64>) -> CommitteeConfig {
    CommitteeConfig {
        window: 8,
        val_window: 2,
        lambda_grid: grid,
        lag,
        epsilon: DEFAULT_EPSILON,
        backend: Backend::BranchBound,
    }
}

fn small_grid() -> Vec<f64> {
    (1..=10).map(|g| g as f64 / 10.0).collect()
}

fn exact_panel(horizon: usize) -> ForecastPanel {
    let spec: SyntheticSpec = format!("experts=5,oracle=2,noise=0,seed=11,horizon={horizon}").parse().unwrap();
    emit_synthetic(&spec).unwrap()
}

fn with_target(panel: &ForecastPanel, target: Vec<Option<f64>>) -> ForecastPanel {
    let mask = DMatrix::from_element(panel.len(), panel.num_experts(), true);
    ForecastPanel::new(
        panel.periods().to_vec(),
        panel.experts().to_vec(),
        panel.values().clone(),
        mask,
        target,
    )
    .unwrap()
}

#[test]
fn three_member_committee_recovers_the_core_group() {
    let p = exact_panel(20);
    let cfg = config(2, small_grid());
    for t in cfg.first_forecast_round()..p.len() {
        let r = committee_round(&p, t, &cfg, None).unwrap();
        assert_eq!(r.members[2], vec![0, 1, 2]);
        for j in 0..3 {
            assert!((r.weights[2][j] - 1.0 / 3.0).abs() <= 1e-6);
        }
        assert!((r.yhat[2] - p.target()[t].unwrap()).abs() <= 1e-9);
        // oracles alone forecast the target exactly
        assert!(r.members[0] == vec![3] || r.members[0] == vec![4]);
        assert!((r.yhat[0] - p.target()[t].unwrap()).abs() <= 1e-12);
    }
}

#[test]
fn cached_path_equals_independent_rounds() {
    let spec: SyntheticSpec = "experts=6,horizon=24,noise=0.3,seed=5".parse().unwrap();
    let p = emit_synthetic(&spec).unwrap();
    let cfg = config(1, small_grid());
    let t0 = cfg.first_forecast_round();
    let path = committee_path(&p, t0..=p.len() - 1, &cfg).unwrap();
    for (k, t) in (t0..p.len()).enumerate() {
        let fresh = committee_round(&p, t, &cfg, None).unwrap();
        assert_eq!(path[k], fresh);
        for c in 1..=6 {
            assert_eq!(select_lambda(&p, t, c, &cfg).unwrap(), fresh.lambda_hat[c - 1]);
            let fit = fit_committee(&p, t, c, fresh.lambda_hat[c - 1], &cfg).unwrap();
            assert_eq!(fit.weights, fresh.weights[c - 1]);
        }
    }
    let mut cache = FitCache::new();
    committee_round(&p, t0, &cfg, Some(&mut cache)).unwrap();
    let n = cache.len();
    assert!(n > 0);
    cache.retain_from(t0 + 1);
    assert!(cache.len() < n);
}

#[test]
fn forecasts_only_use_targets_realized_by_then() {
    let spec: SyntheticSpec = "experts=5,horizon=20,noise=0.5,seed=9".parse().unwrap();
    let p = emit_synthetic(&spec).unwrap();
    for lag in [1, 2] {
        let cfg = config(lag, small_grid());
        let t = cfg.first_forecast_round() + 3;
        let base = committee_round(&p, t, &cfg, None).unwrap();
        // every target from t-l+1 on is unknown when forecasting row t
        let mut target = p.target().to_vec();
        for v in target.iter_mut().skip(t + 1 - lag) {
            *v = Some(v.unwrap() + 100.0);
        }
        let moved = committee_round(&with_target(&p, target), t, &cfg, None).unwrap();
        assert_eq!(base, moved);
        // the most recent usable target does matter
        let mut target = p.target().to_vec();
        target[t - lag] = Some(target[t - lag].unwrap() + 100.0);
        let w = window_at(&with_target(&p, target), t, &cfg).unwrap();
        assert_eq!(*w.targets().last().unwrap(), p.target()[t - lag].unwrap() + 100.0);
    }
}

#[test]
fn weights_stay_on_the_simplex() {
    let spec: SyntheticSpec = "experts=7,horizon=22,noise=1.0,seed=3".parse().unwrap();
    let p = emit_synthetic(&spec).unwrap();
    let cfg = config(1, small_grid());
    for r in committee_path(&p, cfg.first_forecast_round()..=p.len() - 1, &cfg).unwrap() {
        for (c, w) in r.weights.iter().enumerate() {
            assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
            assert!(w.iter().all(|v| (0.0..=1.0).contains(v)));
            assert_eq!(w.iter().filter(|v| **v > 0.0).count(), c + 1);
            assert_eq!(r.members[c].len(), c + 1);
        }
    }
}

#[test]
fn identical_experts_give_identical_committees() {
    let n = 16;
    let periods: Vec<Period> = (0..n).map(|t| Period::from_quarter_index(8000 + t as i64)).collect();
    let f: Vec<f64> = (0..n).map(|t| (t as f64 * 0.7).sin()).collect();
    let values = DMatrix::from_fn(n, 4, |t, _| f[t]);
    let target = (0..n).map(|t| Some(f[t] + 0.1 * (t % 3) as f64)).collect();
    let p = ForecastPanel::new(
        periods,
        (0..4).map(|j| format!("e{j}")).collect(),
        values,
        DMatrix::from_element(n, 4, true),
        target,
    )
    .unwrap();
    let cfg = config(1, small_grid());
    let r = committee_round(&p, n - 1, &cfg, None).unwrap();
    for c in 0..4 {
        assert!((r.yhat[c] - f[n - 1]).abs() <= 1e-12);
    }
}

#[test]
fn heavy_single_intensity_gives_the_simple_average() {
    let spec: SyntheticSpec = "experts=6,horizon=14,noise=0.4,seed=21".parse().unwrap();
    let p = emit_synthetic(&spec).unwrap();
    let cfg = config(1, vec![1e8]);
    let t = p.len() - 1;
    let r = committee_round(&p, t, &cfg, None).unwrap();
    let avg = p.values().row(t).iter().sum::<f64>() / 6.0;
    assert!((r.yhat[5] - avg).abs() <= 1e-6);
    assert_eq!(r.lambda_hat, vec![1e8; 6]);
}

/// Unconstrained two-expert fit `b = (b1, 1 - b1)` with shrinkage toward a
/// half, clamped to `[0, 1]`; the objective is a 1-D convex quadratic.
fn two_expert_weight(y: &[f64], f: &DMatrix<f64>, lambda: f64) -> f64 {
    let (mut a, mut b) = (0.0, 0.0);
    for t in 0..y.len() {
        let d = f[(t, 0)] - f[(t, 1)];
        let e = y[t] - f[(t, 1)];
        a += d * d;
        b += d * e;
    }
    ((b + lambda) / (a + 2.0 * lambda)).clamp(0.0, 1.0)
}

#[test]
fn equal_weights_optimal_at_validation_round_picks_largest_intensity() {
    let n = 14;
    let periods: Vec<Period> = (0..n).map(|t| Period::Label(format!("p{t}"))).collect();
    let f1: Vec<f64> = (0..n).map(|t| 1.0 + (t as f64).cos()).collect();
    let f2: Vec<f64> = (0..n).map(|t| 0.5 * (t as f64 * 1.3).sin()).collect();
    let values = DMatrix::from_fn(n, 2, |t, j| if j == 0 { f1[t] } else { f2[t] });
    let mut target: Vec<Option<f64>> = (0..n).map(|t| Some(0.8 * f1[t] + 0.2 * f2[t])).collect();
    let cfg = CommitteeConfig { val_window: 1, ..config(1, small_grid()) };
    let t = n - 1;
    let u = t - cfg.lag;
    target[u] = Some(0.5 * (f1[u] + f2[u]));
    let p = ForecastPanel::new(
        periods,
        vec!["a".into(), "b".into()],
        values,
        DMatrix::from_element(n, 2, true),
        target,
    )
    .unwrap();

    // validation curve recomputed independently
    let w = window_at(&p, u, &cfg).unwrap();
    let curve: Vec<f64> = cfg
        .lambda_grid
        .iter()
        .map(|&l| {
            let b1 = two_expert_weight(w.targets(), w.forecasts(), l);
            (p.target()[u].unwrap() - b1 * f1[u] - (1.0 - b1) * f2[u]).powi(2)
        })
        .collect();
    assert!(curve.windows(2).all(|c| c[1] <= c[0]));
    assert!(curve[9] < curve[0]);
    assert_eq!(select_lambda(&p, t, 2, &cfg).unwrap(), 1.0);
    let fit = fit_committee(&p, u, 2, 0.4, &cfg).unwrap();
    assert!((fit.weights[0] - two_expert_weight(w.targets(), w.forecasts(), 0.4)).abs() <= 1e-10);
    // a single member has no free weight: every intensity ties
    assert_eq!(select_lambda(&p, t, 1, &cfg).unwrap(), 0.1);
}

#[test]
fn burn_in_and_config_errors() {
    let p = exact_panel(12);
    let cfg = config(1, small_grid());
    let first = cfg.first_forecast_round();
    assert_eq!(first, 10);
    assert!(matches!(
        committee_round(&p, first - 1, &cfg, None),
        Err(HecaError::BurnIn { round: 9, first_feasible: 10 })
    ));
    assert!(matches!(window_at(&p, 6, &cfg), Err(HecaError::BurnIn { first_feasible: 8, .. })));
    let bad = CommitteeConfig { lambda_grid: vec![0.2, 0.1], ..cfg.clone() };
    assert!(matches!(committee_round(&p, 11, &bad, None), Err(HecaError::Validation(_))));
    let bad = CommitteeConfig { lag: 0, ..cfg };
    assert!(matches!(bad.validate(), Err(HecaError::Validation(_))));
}
