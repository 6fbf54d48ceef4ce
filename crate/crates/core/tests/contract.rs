use std::sync::OnceLock;

use maketake::{
    derived_constants, inventory_incentive, solve_value_grid, spread_surface, value_monte_carlo,
    GridConfig, IncentiveSurface, ModelParams, OptionSpec, Side, SpreadTable,
};
use proptest::prelude::*;

fn atm() -> Vec<OptionSpec> {
    vec![OptionSpec::reference_book()[0].clone()]
}

fn surface(params: &ModelParams, specs: &[OptionSpec]) -> IncentiveSurface {
    let grid = solve_value_grid(params, specs, &GridConfig::default()).unwrap();
    IncentiveSurface::new(grid, params, specs).unwrap()
}

fn reference() -> &'static IncentiveSurface {
    static S: OnceLock<IncentiveSurface> = OnceLock::new();
    S.get_or_init(|| surface(&ModelParams::default(), &OptionSpec::reference_book()))
}

fn spreads_for(omega: f64, specs: &[OptionSpec]) -> SpreadTable {
    let p = ModelParams {
        omega,
        ..ModelParams::default()
    };
    spread_surface(&surface(&p, specs), 0.0).unwrap()
}

#[test]
fn finite_differences_agree_with_feynman_kac() {
    let p = ModelParams::default();
    let specs = atm();
    let s = surface(&p, &specs);
    for (t, q) in [(0.0, 0.0), (50.0, 10.0), (80.0, -25.0)] {
        let fd = s.grid().value_at(t, q).unwrap();
        let mc = value_monte_carlo(&p, &specs, t, q, 20_000, 3).unwrap();
        let z = (fd - mc.mean) / mc.stderr;
        // 99% two-sided
        assert!(
            z.abs() < 2.576,
            "t={t} Q={q}: fd {fd} mc {} se {}",
            mc.mean,
            mc.stderr
        );
    }
}

#[test]
fn refinement_barely_moves_the_value() {
    let p = ModelParams::default();
    let specs = atm();
    let coarse = GridConfig::default();
    let fine = GridConfig {
        dt: coarse.dt / 2.0,
        h_q: coarse.h_q / 2.0,
        ..coarse.clone()
    };
    let a = solve_value_grid(&p, &specs, &coarse)
        .unwrap()
        .value_at(0.0, 0.0)
        .unwrap();
    let b = solve_value_grid(&p, &specs, &fine)
        .unwrap()
        .value_at(0.0, 0.0)
        .unwrap();
    assert!(((a - b) / b).abs() < 1e-3, "{a} vs {b}");
}

#[test]
fn values_are_positive_and_bounded() {
    let s = reference();
    let g = s.grid();
    let c = s.consts();
    let edge = g.q_edge();
    for (m, &t) in g.times().iter().enumerate() {
        let tau = g.horizon() - t;
        let lo = (-c.kappa * edge * edge * tau).exp();
        let hi = (2.0 * c.total_c_hat() * tau).exp();
        for &v in g.slice(m) {
            assert!(v > 0.0 && v.is_finite());
            assert!(
                v >= lo * (1.0 - 1e-9) && v <= hi * (1.0 + 1e-9),
                "t={t}: {v}"
            );
        }
    }
}

#[test]
fn ask_and_bid_mirror_each_other() {
    let s = reference();
    let n_q = s.grid().n_q();
    for m in [0, s.grid().times().len() / 2] {
        for k in 0..3 {
            for j in 0..n_q {
                let a = s.incentive_at_node(m, j, k, Side::Ask);
                let b = s.incentive_at_node(m, n_q - 1 - j, k, Side::Bid);
                match (a, b) {
                    (Some(a), Some(b)) => assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0)),
                    (None, None) => {}
                    other => panic!("side availability differs at j={j}: {other:?}"),
                }
            }
        }
    }
}

#[test]
fn long_inventory_pays_more_for_sells() {
    let s = reference();
    let q_bar = s.params().q_bar_f64();
    for q in [1.0, 5.0, 20.0, 39.0] {
        for k in 0..3 {
            let ask = s.trade_incentive(k, Side::Ask, 0.0, q).unwrap();
            let bid = s.trade_incentive(k, Side::Bid, 0.0, q).unwrap();
            assert!(ask >= bid, "Q={q} k={k}: {ask} < {bid}");
        }
    }
    assert!(s.trade_incentive(0, Side::Bid, 0.0, q_bar).is_err());
}

#[test]
fn spreads_respect_the_bounds_and_skew() {
    let s = reference();
    let table = spread_surface(s, 0.0).unwrap();
    let d_max = s.params().delta_max;
    // the cap gate makes the value step at the cap and, through the jump
    // terms, one trade inside it; monotonicity is checked clear of both
    let max_delta = s.specs().iter().map(|o| o.delta).fold(0.0, f64::max);
    let reach = s.params().q_bar_f64() - 2.0 * max_delta;
    let inner: Vec<usize> = (0..table.q.len())
        .filter(|&j| table.q[j].abs() <= reach)
        .collect();
    let zero = table.q.iter().position(|&q| q == 0.0).unwrap();
    for o in &table.options {
        for side in [&o.ask, &o.bid] {
            assert!(side.iter().flatten().all(|d| d.abs() <= d_max));
        }
        let ask: Vec<f64> = inner.iter().map(|&j| o.ask[j].unwrap()).collect();
        let bid: Vec<f64> = inner.iter().map(|&j| o.bid[j].unwrap()).collect();
        assert!(
            ask.windows(2).all(|w| w[1] <= w[0] + 1e-12),
            "ask not non-increasing"
        );
        assert!(
            bid.windows(2).all(|w| w[1] >= w[0] - 1e-12),
            "bid not non-decreasing"
        );
        let (a, b) = (o.ask[zero].unwrap(), o.bid[zero].unwrap());
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}

#[test]
fn liquidity_penalty_tightens_spreads() {
    let specs = OptionSpec::reference_book();
    let tables: Vec<SpreadTable> = [0.0, 0.1, 0.2]
        .iter()
        .map(|&w| spreads_for(w, &specs))
        .collect();
    for pair in tables.windows(2) {
        let (loose, tight) = (&pair[0], &pair[1]);
        for (lo, ti) in loose.options.iter().zip(&tight.options) {
            for (l, t) in lo.ask.iter().zip(&ti.ask).chain(lo.bid.iter().zip(&ti.bid)) {
                if let (Some(l), Some(t)) = (l, t) {
                    assert!(t <= l, "{t} > {l}");
                }
            }
        }
    }
}

#[test]
fn valuing_flow_raises_the_incentive() {
    let base = OptionSpec::reference_book();
    let plain = surface(&ModelParams::default(), &base);
    for k in 0..3 {
        let mut specs = base.clone();
        specs[k].weight = 0.1;
        let valued = surface(&ModelParams::default(), &specs);
        for q in [-20.0, 0.0, 20.0] {
            for side in Side::ALL {
                let z0 = plain.trade_incentive(k, side, 0.0, q).unwrap();
                let z1 = valued.trade_incentive(k, side, 0.0, q).unwrap();
                assert!(z1 > z0, "k={k} Q={q} {side}: {z1} <= {z0}");
            }
        }
    }
}

#[test]
fn bound_audit_stays_inside_delta_max() {
    let s = reference();
    assert!(s.bound_audit() < s.params().delta_max);
}

#[test]
fn tiny_delta_max_fails_the_audit() {
    let p = ModelParams {
        delta_max: 0.5,
        ..ModelParams::default()
    };
    let specs = OptionSpec::reference_book();
    let grid = solve_value_grid(&p, &specs, &GridConfig::default()).unwrap();
    let err = IncentiveSurface::new(grid, &p, &specs).unwrap_err();
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn constants_follow_the_parameters() {
    let p = ModelParams::default();
    let c = derived_constants(&p, &OptionSpec::reference_book()).unwrap();
    assert!((c.b - 1.0).abs() < 1e-15);
    assert!((c.a - 2.0).abs() < 1e-15);
    assert!((c.beta() - 1.0).abs() < 1e-15);
}

proptest! {
    #[test]
    fn inventory_incentive_slope(gamma in 1e-4..10.0f64, eta in 1e-4..10.0f64, q in -100.0..100.0f64) {
        let p = ModelParams { gamma, eta, ..ModelParams::default() };
        let slope = -gamma / (gamma + eta);
        prop_assert!((inventory_incentive(q, &p) - slope * q).abs() <= 4.0 * f64::EPSILON * q.abs());
    }
}
