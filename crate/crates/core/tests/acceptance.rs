//! Acceptance criteria.
//!
//! Every criterion is evaluated once (a shared default sweep on a 129² grid
//! drives most of them) and reported as one line, in order, by
//! `acceptance_report`. Each criterion also has its own test so a failure is
//! attributed precisely. Thresholds are pinned here and cross-checked against
//! the library defaults so they cannot drift silently.

use chanflow::harness::{self, Config, PointResult, PointStatus, Summary};
use chanflow::selftest;
use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

const GRID: usize = 129;

const COUETTE_TIME: Duration = Duration::from_secs(5);
const COUETTE_RESIDUAL_TOL: f64 = 1e-10;
const EULER_TOL: f64 = 0.0;
const NS_TOL: f64 = 1e-12;

const SELFTEST_TIME: Duration = Duration::from_secs(120);
const SECOND_ORDER: (f64, f64) = (3.2, 4.8);
const FIRST_ORDER_MIN: f64 = 1.8;

const IDENTITY_TOL: f64 = 1e-8;
const BC_TOL: f64 = 1e-6;
const GAUGE_TOL: f64 = 1e-6;

const CONTRACTION_MAX: f64 = 0.5;
const CONTRACTION_EPS_MAX: f64 = 1e-2;
const MAX_ITERATIONS: usize = 15;
const POINT_TIME_S: f64 = 30.0;

const BOUND_RATIO_MAX: f64 = 1.0;

const RHO_SLOPE_MIN: f64 = 0.85;
const GAP_SLOPE_MIN: f64 = 0.425;
const SWEEP_TIME: Duration = Duration::from_secs(600);

const AUDIT_SPREAD_MAX: f64 = 10.0;

struct Criterion {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

struct Baseline {
    cfg: Config,
    summary: Summary,
    elapsed: Duration,
}

fn default_config() -> Config {
    let mut cfg = Config::default();
    cfg.grid.nodes = vec![GRID];
    cfg
}

fn baseline() -> &'static Baseline {
    static B: OnceLock<Baseline> = OnceLock::new();
    B.get_or_init(|| {
        let cfg = default_config();
        let t = Instant::now();
        let r = harness::run_sweep(&cfg).expect("default sweep runs");
        let elapsed = t.elapsed();
        let summary = Summary::build(&cfg, r.points, true);
        Baseline { cfg, summary, elapsed }
    })
}

fn check<'a>(s: &'a Summary, name: &str) -> &'a harness::Check {
    s.checks.iter().find(|c| c.name == name).unwrap_or_else(|| panic!("check {name} missing"))
}

fn ok_points(s: &Summary) -> impl Iterator<Item = &PointResult> {
    s.points.iter().filter(|p| p.status == PointStatus::Ok)
}

fn criterion_1() -> Criterion {
    let t = Instant::now();
    let c = selftest::couette_oracle(GRID, 1e-2).expect("couette oracle runs");
    let elapsed = t.elapsed();
    let exact = selftest::background_oracles(GRID).expect("background oracles run");
    let euler = exact
        .iter()
        .filter(|e| e.name.starts_with("euler"))
        .map(|e| e.value)
        .fold(0.0, f64::max);
    let ns = exact.iter().filter(|e| e.name.starts_with("ns")).map(|e| e.value).fold(0.0, f64::max);
    let pass = c.iterations == 1
        && c.remainder_max == 0.0
        && c.residual <= COUETTE_RESIDUAL_TOL
        && euler <= EULER_TOL
        && ns <= NS_TOL
        && elapsed <= COUETTE_TIME;
    Criterion {
        id: 1,
        name: "exact solutions",
        pass,
        detail: format!(
            "couette: {} iteration(s), remainder {:.1e}, full residual {:.1e} (<= {COUETTE_RESIDUAL_TOL:.0e}), {:.2}s (<= {}s); euler {:.1e}, ns {:.1e} (<= {NS_TOL:.0e})",
            c.iterations,
            c.remainder_max,
            c.residual,
            elapsed.as_secs_f64(),
            COUETTE_TIME.as_secs(),
            euler,
            ns
        ),
    }
}

fn criterion_2() -> Criterion {
    let t = Instant::now();
    let r = selftest::run_selftest(GRID).expect("selftest runs");
    let elapsed = t.elapsed();
    let windows_ok = r.orders.iter().all(|o| match o.max_ratio {
        Some(m) => o.min_ratio == SECOND_ORDER.0 && m == SECOND_ORDER.1,
        None => o.min_ratio == FIRST_ORDER_MIN,
    });
    let orders_ok = r.orders.iter().all(|o| o.pass);
    let (lo, hi) = r
        .orders
        .iter()
        .filter(|o| o.max_ratio.is_some())
        .flat_map(|o| o.ratios.iter().copied())
        .fold((f64::INFINITY, 0.0f64), |(a, b), x| (a.min(x), b.max(x)));
    let first = r
        .orders
        .iter()
        .filter(|o| o.max_ratio.is_none())
        .flat_map(|o| o.ratios.iter().copied())
        .fold(f64::INFINITY, f64::min);
    let failing: Vec<&str> = r.orders.iter().filter(|o| !o.pass).map(|o| o.name.as_str()).collect();
    Criterion {
        id: 2,
        name: "convergence orders",
        pass: windows_ok && orders_ok && elapsed <= SELFTEST_TIME,
        detail: format!(
            "{} studies; second-order ratios in [{lo:.3}, {hi:.3}] (window [{}, {}]), first-order min {first:.3} (>= {FIRST_ORDER_MIN}); {:.1}s (<= {}s){}",
            r.orders.len(),
            SECOND_ORDER.0,
            SECOND_ORDER.1,
            elapsed.as_secs_f64(),
            SELFTEST_TIME.as_secs(),
            if failing.is_empty() { String::new() } else { format!("; failing {}", failing.join(", ")) }
        ),
    }
}

fn criterion_3() -> Criterion {
    let s = &baseline().summary;
    let (i, b, g) = (check(s, "identities"), check(s, "boundary_conditions"), check(s, "gauge"));
    Criterion {
        id: 3,
        name: "discrete consistency",
        pass: i.pass && b.pass && g.pass,
        detail: format!(
            "identities {} [{}] (<= {IDENTITY_TOL:.0e}); bc {} [{}] (<= {BC_TOL:.0e}); gauge {} [{}] (<= {GAUGE_TOL:.0e})",
            if i.pass { "ok" } else { "FAIL" },
            i.detail,
            if b.pass { "ok" } else { "FAIL" },
            b.detail,
            if g.pass { "ok" } else { "FAIL" },
            g.detail
        ),
    }
}

fn criterion_4() -> Criterion {
    let s = &baseline().summary;
    let c = check(s, "contraction");
    let slowest = ok_points(s).map(|p| p.elapsed_s).fold(0.0, f64::max);
    let all_converged = ok_points(s).all(|p| p.converged && p.iteration_count() <= MAX_ITERATIONS);
    Criterion {
        id: 4,
        name: "picard contraction",
        pass: c.pass && all_converged && slowest <= POINT_TIME_S,
        detail: format!(
            "{} (ratio <= {CONTRACTION_MAX}, <= {MAX_ITERATIONS} iterations); slowest point {slowest:.1}s (<= {POINT_TIME_S}s)",
            c.detail
        ),
    }
}

fn criterion_5() -> Criterion {
    let s = &baseline().summary;
    let c = check(s, "uniform_bound");
    Criterion {
        id: 5,
        name: "uniform bound",
        pass: c.pass,
        detail: format!("{} (<= {BOUND_RATIO_MAX})", c.detail),
    }
}

fn criterion_6() -> Criterion {
    let b = baseline();
    let c = check(&b.summary, "rates");
    let slopes: Vec<String> = b
        .summary
        .fits
        .iter()
        .filter(|f| f.gated)
        .map(|f| format!("{} {}", f.name, f.slope.map_or("-".into(), |v| format!("{v:.3}"))))
        .collect();
    Criterion {
        id: 6,
        name: "gap rates",
        pass: c.pass && b.elapsed <= SWEEP_TIME,
        detail: format!(
            "{}: {} (rho >= {RHO_SLOPE_MIN}, velocity >= {GAP_SLOPE_MIN}); sweep {:.1}s (<= {}s)",
            c.detail,
            slopes.join(", "),
            b.elapsed.as_secs_f64(),
            SWEEP_TIME.as_secs()
        ),
    }
}

fn criterion_7() -> Criterion {
    let s = &baseline().summary;
    let c = check(s, "audit_spread");
    Criterion {
        id: 7,
        name: "estimate audits",
        pass: c.pass,
        detail: format!("{} (<= {AUDIT_SPREAD_MAX}x)", c.detail),
    }
}

fn serialized(s: &Summary) -> (String, String, String) {
    (
        serde_json::to_string_pretty(s).expect("summary serializes"),
        harness::gaps_csv(&s.points),
        harness::audits_csv(&s.audits),
    )
}

fn criterion_8() -> Criterion {
    let b = baseline();
    let again = harness::run_sweep(&b.cfg).expect("repeat sweep runs");
    let again = Summary::build(&b.cfg, again.points, true);
    let identical = serialized(&b.summary) == serialized(&again);

    let mut cfg = b.cfg.clone();
    let victim = cfg.sweep.eps[cfg.sweep.eps.len() / 2];
    cfg.sweep.inject_failure = vec![victim];
    let injected = harness::run_sweep(&cfg).expect("injected sweep runs");
    let victim_failed = injected
        .points
        .iter()
        .any(|p| p.eps == victim && p.status == PointStatus::Failed);
    let others_unchanged = injected.points.len() == b.summary.points.len()
        && injected.points.iter().zip(&b.summary.points).filter(|(p, _)| p.eps != victim).all(|(p, q)| {
            serde_json::to_string(p).expect("point serializes") == serde_json::to_string(q).expect("point serializes")
        });
    Criterion {
        id: 8,
        name: "determinism and isolation",
        pass: identical && victim_failed && others_unchanged,
        detail: format!(
            "repeat run byte-identical: {identical}; failure injected at eps={victim}: point failed {victim_failed}, other points unchanged {others_unchanged}"
        ),
    }
}

fn criteria() -> &'static [Criterion] {
    static C: OnceLock<Vec<Criterion>> = OnceLock::new();
    C.get_or_init(|| {
        faer::set_global_parallelism(faer::Parallelism::None);
        vec![
            criterion_1(),
            criterion_2(),
            criterion_3(),
            criterion_4(),
            criterion_5(),
            criterion_6(),
            criterion_7(),
            criterion_8(),
        ]
    })
}

fn criterion(id: usize) -> &'static Criterion {
    &criteria()[id - 1]
}

fn assert_criterion(id: usize) {
    let c = criterion(id);
    assert!(c.pass, "criterion {} ({}) failed: {}", c.id, c.name, c.detail);
}

#[test]
fn acceptance_report() {
    let mut out = String::from("\n");
    for c in criteria() {
        out.push_str(&format!(
            "criterion {} [{}] {}: {}\n",
            c.id,
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        ));
    }
    let mut stdout = std::io::stdout().lock();
    stdout.write_all(out.as_bytes()).expect("stdout is writable");
    stdout.flush().expect("stdout is writable");
}

#[test]
fn thresholds_are_pinned() {
    let th = Config::default().sweep.thresholds;
    assert_eq!(th.identity_tol, IDENTITY_TOL);
    assert_eq!(th.bc_tol, BC_TOL);
    assert_eq!(th.gauge_tol, GAUGE_TOL);
    assert_eq!(th.contraction_max, CONTRACTION_MAX);
    assert_eq!(th.contraction_eps_max, CONTRACTION_EPS_MAX);
    assert_eq!(th.max_iterations, MAX_ITERATIONS);
    assert_eq!(th.bound_ratio_max, BOUND_RATIO_MAX);
    assert_eq!(th.rho_slope_min, RHO_SLOPE_MIN);
    assert_eq!(th.gap_slope_min, GAP_SLOPE_MIN);
    assert_eq!(th.audit_spread_max, AUDIT_SPREAD_MAX);
    assert_eq!(selftest::SECOND_ORDER, SECOND_ORDER);
    assert_eq!(selftest::FIRST_ORDER_MIN, FIRST_ORDER_MIN);
    assert_eq!(selftest::NS_ROUNDOFF, NS_TOL);
}

#[test]
fn criterion_1_exact_solutions() {
    assert_criterion(1);
}

#[test]
fn criterion_2_convergence_orders() {
    assert_criterion(2);
}

#[test]
fn criterion_3_discrete_consistency() {
    assert_criterion(3);
}

#[test]
fn criterion_4_picard_contraction() {
    assert_criterion(4);
}

#[test]
fn criterion_5_uniform_bound() {
    assert_criterion(5);
}

#[test]
fn criterion_6_gap_rates() {
    assert_criterion(6);
}

#[test]
fn criterion_7_estimate_audits() {
    assert_criterion(7);
}

#[test]
fn criterion_8_determinism_and_isolation() {
    assert_criterion(8);
}
