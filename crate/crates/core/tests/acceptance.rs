//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs as a plain binary (`harness = false`) so the lines
//! show up in `cargo test` output.
//!
//! Run alone with `cargo test --release --test acceptance`.

use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use gastree::engine::{
    self, fit_baseline, simulate, FitOptions, GasParams, LeafParams, ModelSpec, SimulatedData, StateGenerator,
};
use gastree::evaluation::{self, dm_test, variable_importance, LossKind, NW_LAGS};
use gastree::forest::{fit_forest, forest_filter, BootstrapPlan, Resample};
use gastree::score::oracle::copula_score_oracle;
use gastree::score::{log_density, raw_score, scaled_score, Family, Obs};
use gastree::series::SeriesView;
use gastree::tree::{grow, threshold_grid, tune_depth, GrowConfig, Node, RegimeTree, TuneInput};

// Tolerances and thresholds.
const FD_REL_TOL: f64 = 1e-4;
const ORACLE_TOL: f64 = 1e-8;
const MARTINGALE_SE: f64 = 4.0;
const RECOVERY_MAE: f64 = 0.03;
const NU_TOL: f64 = 2.0;
const DEGENERACY_REL: f64 = 1e-12;
const REGIME_SPLIT_RATE: f64 = 0.90;
const REGIME_DEPTH_RATE: f64 = 0.80;
const GAIN_RATE: f64 = 0.90;
const GAIN_T: f64 = -2.0;
const NULL_REJECT_MAX: f64 = 0.15;
const DM_SIZE_RANGE: (f64, f64) = (0.03, 0.08);
const IMPORTANCE_RATE: f64 = 0.90;

struct Gate {
    failed: Vec<usize>,
}

impl Gate {
    fn check(&mut self, id: usize, name: &str, budget: Option<Duration>, body: impl FnOnce() -> (bool, String)) {
        let t0 = Instant::now();
        let (ok, detail) = body();
        let took = t0.elapsed();
        let in_time = budget.is_none_or(|b| took <= b);
        let pass = ok && in_time;
        let budget_note = budget.map_or_else(String::new, |b| format!(", budget {}s", b.as_secs()));
        println!(
            "{} criterion {id:>2}: {name} | {detail} [{:.1}s{budget_note}]",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64()
        );
        if !pass {
            self.failed.push(id);
        }
    }
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| if x == y { 0.0 } else { (x - y).abs() / x.abs().max(y.abs()) })
        .fold(0.0, f64::max)
}

/// Plain simulation with one leaf and no state variables.
fn simulate_plain(family: Family, leaf: LeafParams, nu: Option<f64>, t: usize, seed: u64) -> SimulatedData {
    simulate(
        &ModelSpec::new(family),
        &GasParams::single(leaf, nu),
        |_| 0,
        t,
        seed,
        &StateGenerator::new(0, 0.0),
    )
    .expect("simulation")
}

// Two-regime DGP used by the tree and forest criteria: Z1 <= 0 selects a
// high-variance, reactive block; Z1 > 0 a calm one. α differs threefold.
fn regime_params() -> GasParams {
    GasParams {
        leaves: vec![LeafParams::new(0.40, 0.50, 0.15), LeafParams::new(0.02, 0.75, 0.05)],
        nu: None,
    }
}

fn simulate_regime(t: usize, k: usize, seed: u64) -> SimulatedData {
    simulate(
        &ModelSpec::new(Family::NormalScale),
        &regime_params(),
        |r| usize::from(r[0] > 0.0),
        t,
        seed,
        &StateGenerator::new(k, 0.5),
    )
    .expect("simulation")
}

fn split_input(d: &SimulatedData) -> TuneInput<'_> {
    let n = d.y.len();
    TuneInput {
        y: d.y.view(),
        z: &d.z,
        names: &d.names,
        proxy: d.proxy.as_deref(),
        est_end: 3 * n / 10,
        val_end: 6 * n / 10,
    }
}

// 1. Analytic raw scores against central differences of the log density,
// and the copula closed form against the matrix oracle.
fn score_correctness() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_fd: f64 = 0.0;
    let mut bad = 0;
    for family in [
        Family::NormalScale,
        Family::StudentTScale,
        Family::StudentTCopula,
        Family::ExpDuration,
    ] {
        for _ in 0..50 {
            let (y, f, nu) = match family {
                Family::NormalScale => (Obs::Scalar(rng.random_range(-3.0..3.0)), rng.random_range(0.2..4.0), None),
                Family::StudentTScale => (
                    Obs::Scalar(rng.random_range(-4.0..4.0)),
                    rng.random_range(0.2..4.0),
                    Some(rng.random_range(2.5..30.0)),
                ),
                Family::ExpDuration => (Obs::Scalar(rng.random_range(0.01..5.0)), rng.random_range(0.2..4.0), None),
                Family::StudentTCopula => (
                    Obs::Pair(rng.random_range(0.01..0.99), rng.random_range(0.01..0.99)),
                    rng.random_range(-3.0..3.0),
                    Some(rng.random_range(2.5..30.0)),
                ),
            };
            let h = 1e-5 * f64::max(1.0, f64::abs(f));
            let fd = (log_density(family, y, f + h, nu).unwrap() - log_density(family, y, f - h, nu).unwrap())
                / (2.0 * h);
            let a = raw_score(family, y, f, nu).unwrap();
            // Relative error, floored so that scores passing through zero
            // do not divide by nothing.
            let scale = a.abs().max(fd.abs()).max(1e-3);
            let e = (a - fd).abs() / scale;
            worst_fd = worst_fd.max(e);
            if e > FD_REL_TOL {
                bad += 1;
            }
        }
    }
    let mut worst_oracle: f64 = 0.0;
    for _ in 0..1000 {
        let u = (rng.random_range(0.001..0.999), rng.random_range(0.001..0.999));
        let rt = rng.random_range(-4.0..4.0);
        let nu = rng.random_range(2.2..50.0);
        let closed = scaled_score(Family::StudentTCopula, Obs::Pair(u.0, u.1), rt, Some(nu)).unwrap();
        let oracle = copula_score_oracle(u, rt, nu).unwrap().scaled_score;
        worst_oracle = worst_oracle.max((closed - oracle).abs());
    }
    (
        bad == 0 && worst_oracle <= ORACLE_TOL,
        format!("200 FD points, max rel err {worst_fd:.1e} (tol {FD_REL_TOL:e}); 1000 copula points, max |closed-oracle| {worst_oracle:.1e} (tol {ORACLE_TOL:e})"),
    )
}

// 2. E[s_t] = 0 under the model.
fn martingale() -> (bool, String) {
    let points: Vec<(Family, f64, Option<f64>)> = vec![
        (Family::NormalScale, 0.5, None),
        (Family::NormalScale, 2.0, None),
        (Family::StudentTScale, 1.0, Some(5.0)),
        (Family::StudentTScale, 0.3, Some(12.0)),
        (Family::ExpDuration, 1.0, None),
        (Family::ExpDuration, 3.0, None),
        (Family::StudentTCopula, 0.0, Some(6.0)),
        (Family::StudentTCopula, 1.5, Some(10.0)),
        (Family::StudentTCopula, -2.0, Some(4.0)),
    ];
    let n = 100_000;
    let mut worst: f64 = 0.0;
    for (i, &(family, f, nu)) in points.iter().enumerate() {
        // β = α = 0 keeps f fixed at ω.
        let d = simulate_plain(family, LeafParams::new(f, 0.0, 0.0), nu, n, 100 + i as u64);
        let s: Vec<f64> = match d.y.view() {
            SeriesView::Univariate(v) => v.iter().map(|&y| scaled_score(family, Obs::Scalar(y), f, nu).unwrap()).collect(),
            SeriesView::Bivariate(v) => v
                .iter()
                .map(|p| scaled_score(family, Obs::Pair(p[0], p[1]), f, nu).unwrap())
                .collect(),
        };
        let m = evaluation::mean(&s);
        let sd = (s.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64).sqrt();
        worst = worst.max((m / (sd / (n as f64).sqrt())).abs());
    }
    (
        worst <= MARTINGALE_SE,
        format!("{} family/parameter points x 1e5 draws, max |mean|/se = {worst:.2} (limit {MARTINGALE_SE})", points.len()),
    )
}

// 3. Maximum-likelihood recovery.
fn recovery() -> (bool, String) {
    let reps = 20;
    let t = 20_000;
    let cases = [
        (Family::NormalScale, LeafParams::new(0.05, 0.90, 0.05), None),
        (Family::StudentTScale, LeafParams::new(0.02, 0.95, 0.05), Some(8.0)),
        (Family::ExpDuration, LeafParams::new(0.05, 0.90, 0.05), None),
    ];
    let mut ok = true;
    let mut notes = Vec::new();
    for (family, truth, nu) in cases {
        let spec = ModelSpec::new(family);
        let mut mae = [0.0; 3];
        let mut nu_err: f64 = 0.0;
        for r in 0..reps {
            let d = simulate_plain(family, truth, nu, t, 1000 + r);
            let f0 = engine::initial_state(family, d.y.view()).unwrap();
            let fit = fit_baseline(&spec, d.y.view(), f0, &FitOptions::default()).unwrap();
            let l = fit.params.leaves[0];
            mae[0] += (l.omega - truth.omega).abs() / reps as f64;
            mae[1] += (l.beta - truth.beta).abs() / reps as f64;
            mae[2] += (l.alpha - truth.alpha).abs() / reps as f64;
            if let (Some(a), Some(b)) = (fit.params.nu, nu) {
                nu_err += (a - b).abs() / reps as f64;
            }
        }
        ok &= mae.iter().all(|&m| m <= RECOVERY_MAE) && nu_err <= NU_TOL;
        let nu_note = if nu.is_some() { format!(" |nu|={nu_err:.2}") } else { String::new() };
        notes.push(format!("{family} MAE w={:.4} b={:.4} a={:.4}{nu_note}", mae[0], mae[1], mae[2]));
    }
    (ok, notes.join("; "))
}

// 4. Degenerate trees and forests reproduce their simpler counterparts.
fn degeneracy() -> (bool, String) {
    let family = Family::NormalScale;
    let spec = ModelSpec::new(family);
    let d = simulate_regime(1500, 2, 7);
    let y = d.y.view();
    let f0 = engine::initial_state(family, y).unwrap();
    let base = fit_baseline(&spec, y, f0, &FitOptions::default()).unwrap().params;
    let gas = engine::filter(&spec, &base, &vec![0; y.len()], y, f0).unwrap().f;

    let single = RegimeTree::single(family, &base);
    let e1 = max_rel(&gas, &single.filter(y, &d.names, &d.z, f0).unwrap().f);

    let mut equal = RegimeTree::single(family, &base);
    equal_leaf_split(&mut equal, "Z1", 0.0);
    let e2 = max_rel(&gas, &equal.filter(y, &d.names, &d.z, f0).unwrap().f);

    let cfg = GrowConfig {
        max_depth: 2,
        ..GrowConfig::default()
    };
    let grown = grow(&spec, y, &d.z, &d.names, &[0, 1], &cfg).unwrap();
    let tree_path = grown.tree.filter(y, &d.names, &d.z, f0).unwrap().f;
    let plan = BootstrapPlan {
        n_trees: 1,
        feature_fraction: 1.0,
        resample: Resample::Identity,
        ..BootstrapPlan::default()
    };
    let forest = fit_forest(&spec, y, &d.z, &d.names, &[0, 1], &plan, &cfg).unwrap();
    let e3 = max_rel(&tree_path, &forest_filter(&forest, y, &d.names, &d.z, f0).unwrap().f);
    (
        e1 <= DEGENERACY_REL && e2 <= DEGENERACY_REL && e3 <= DEGENERACY_REL,
        format!("max rel diff: single-leaf tree {e1:.1e}, equal-leaf tree {e2:.1e}, one-tree forest {e3:.1e}"),
    )
}

/// Root split into two children carrying identical blocks.
fn equal_leaf_split(tree: &mut RegimeTree, var: &str, thr: f64) {
    let leaf = tree.leaves[0];
    tree.nodes = vec![
        Node::Split {
            variable: var.to_string(),
            threshold: thr,
            left: 1,
            right: 2,
        },
        Node::Leaf { leaf: 0 },
        Node::Leaf { leaf: 1 },
    ];
    tree.leaves = vec![leaf, leaf];
    tree.validate().unwrap();
}

// 5. The grower finds the regime variable near its median and validation
// tuning stops at one split.
fn regime_recovery() -> (bool, String) {
    let spec = ModelSpec::new(Family::NormalScale);
    let reps = 50;
    let (mut hit, mut m1) = (0, 0);
    for r in 0..reps {
        let d = simulate_regime(6000, 3, 5000 + r);
        let input = split_input(&d);
        let res = tune_depth(&spec, &input, &[0, 1, 2], &[0, 1, 2, 3, 4, 5, 6], &GrowConfig::default(), LossKind::Qlike)
            .unwrap();
        let z1: Vec<f64> = d.z[..input.est_end].iter().map(|r| r[0]).collect();
        let grid = threshold_grid(&z1);
        let first = &res.growth.trace[0];
        // Median is grid position 9 (0-based) of 19; one step either way.
        if first.variable == "Z1" && first.threshold >= grid[8] && first.threshold <= grid[10] {
            hit += 1;
        }
        if res.max_depth == 1 {
            m1 += 1;
        }
    }
    let (a, b) = (hit as f64 / reps as f64, m1 as f64 / reps as f64);
    (
        a >= REGIME_SPLIT_RATE && b >= REGIME_DEPTH_RATE,
        format!("Z1 split within one grid step of the median {hit}/{reps} (need {REGIME_SPLIT_RATE}); M=1 chosen {m1}/{reps} (need {REGIME_DEPTH_RATE})"),
    )
}

/// DM statistic of the tuned tree against plain GAS on the test segment.
fn tree_vs_gas(d: &SimulatedData) -> f64 {
    let spec = ModelSpec::new(Family::NormalScale);
    let input = split_input(d);
    let (e, v) = (input.est_end, input.val_end);
    let y = d.y.view();
    let res = tune_depth(&spec, &input, &[0, 1, 2], &[0, 1, 2, 3, 4, 5, 6], &GrowConfig::default(), LossKind::Qlike)
        .unwrap();
    let f0 = res.growth.f0;
    let gas = fit_baseline(&spec, y.head(e), f0, &FitOptions::default()).unwrap().params;
    let fg = engine::filter(&spec, &gas, &vec![0; y.len()], y, f0).unwrap();
    let ft = res.tree.filter(y, &d.names, &d.z, f0).unwrap();
    let proxy = &d.proxy.as_ref().unwrap()[v..];
    let lg = evaluation::losses(LossKind::Qlike, Family::NormalScale, &fg.f[v..], &fg.loglik[v..], Some(proxy)).unwrap();
    let lt = evaluation::losses(LossKind::Qlike, Family::NormalScale, &ft.f[v..], &ft.loglik[v..], Some(proxy)).unwrap();
    dm_test(&lt, &lg, NW_LAGS).unwrap().t_stat.unwrap_or(0.0)
}

// 6. Out-of-sample gain of the tree on the regime DGP and no spurious gain
// or loss without regimes.
fn forecast_gain() -> (bool, String) {
    let reps = 25;
    let mut wins = 0;
    let mut rejections = 0;
    for r in 0..reps {
        if tree_vs_gas(&simulate_regime(6000, 3, 7000 + r)) < GAIN_T {
            wins += 1;
        }
        let plain = simulate(
            &ModelSpec::new(Family::NormalScale),
            &GasParams::single(LeafParams::new(0.05, 0.90, 0.05), None),
            |_| 0,
            6000,
            8000 + r,
            &StateGenerator::new(3, 0.5),
        )
        .unwrap();
        if tree_vs_gas(&plain).abs() > 1.96 {
            rejections += 1;
        }
    }
    let (a, b) = (wins as f64 / reps as f64, rejections as f64 / reps as f64);
    (
        a >= GAIN_RATE && b <= NULL_REJECT_MAX,
        format!("regime DGP: tree t < {GAIN_T} in {wins}/{reps} (need {GAIN_RATE}); no-regime DGP: |t| > 1.96 in {rejections}/{reps} (max {NULL_REJECT_MAX})"),
    )
}

// 7. Size of the DM test with MA(1) loss differentials.
fn dm_size() -> (bool, String) {
    let reps = 1000;
    let n = 2400;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut rejected = 0;
    for _ in 0..reps {
        let e: Vec<f64> = (0..=n).map(|_| rng.sample(StandardNormal)).collect();
        let base: Vec<f64> = (0..n).map(|_| 1.0 + rng.random::<f64>()).collect();
        let a: Vec<f64> = (0..n).map(|t| base[t] + e[t + 1] + 0.5 * e[t]).collect();
        if dm_test(&a, &base, NW_LAGS).unwrap().t_stat.unwrap().abs() > 1.959_963_984_540_054 {
            rejected += 1;
        }
    }
    let rate = rejected as f64 / reps as f64;
    (
        rate >= DM_SIZE_RANGE.0 && rate <= DM_SIZE_RANGE.1,
        format!("rejection rate {rate:.3} over {reps} replications of n={n} (range {:?})", DM_SIZE_RANGE),
    )
}

// 8. Leave-one-out importance ranks the regime variable first.
fn importance() -> (bool, String) {
    let spec = ModelSpec::new(Family::NormalScale);
    let reps = 20;
    let mut top = 0;
    for r in 0..reps {
        let d = simulate_regime(3000, 6, 9000 + r);
        let plan = BootstrapPlan {
            n_trees: 50,
            master_seed: r,
            ..BootstrapPlan::default()
        };
        let cfg = GrowConfig {
            max_depth: 1,
            ..GrowConfig::default()
        };
        let imp = variable_importance(&spec, &split_input(&d), &[0, 1, 2, 3, 4, 5], &plan, &cfg, LossKind::Qlike)
            .unwrap();
        let best = imp
            .iter()
            .max_by(|a, b| a.delta_loss.total_cmp(&b.delta_loss))
            .unwrap();
        if best.variable == "Z1" {
            top += 1;
        }
    }
    (
        top as f64 / reps as f64 >= IMPORTANCE_RATE,
        format!("Z1 has the largest delta loss among 6 variables in {top}/{reps} (need {IMPORTANCE_RATE}); B=50"),
    )
}

fn cli(args: &[&str]) -> i32 {
    let mut v = vec!["gastree"];
    v.extend_from_slice(args);
    gastree::cli::main_with_args(v)
}

fn files_under(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

// 9. Two complete CLI runs give byte-identical artifacts.
fn determinism() -> (bool, String) {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let config = root.join("run.toml");
    std::fs::write(
        &config,
        r#"
family = "normal_scale"
seed = 3
m_grid = [1, 2]

[data]
path = "sim/simulated.csv"
y = ["y"]
proxy = "rv"
state = [{ name = "Z1", source = "Z1" }, { name = "Z2", source = "Z2" }, { name = "Z3", source = "Z3" }]

[forest]
n_trees = 4
block_length = 50

[simulate]
t = 2000
leaves = [[0.40, 0.50, 0.15], [0.02, 0.75, 0.05]]
split_variable = "Z1"
"#,
    )
    .unwrap();
    let c = config.to_str().unwrap();
    // Both runs fit on the same data file; each also simulates its own copy
    // for comparison.
    let mut codes = vec![cli(&["simulate", "--config", c, "--out", root.join("sim").to_str().unwrap()])];
    for run in ["a", "b"] {
        let out = root.join(run);
        let o = |s: &str| out.join(s).to_string_lossy().into_owned();
        codes.push(cli(&["simulate", "--config", c, "--out", &o("sim")]));
        for v in ["gas", "tree", "forest"] {
            codes.push(cli(&["fit", "--config", c, "--out", &o(v), "--set", &format!("variant={v}")]));
        }
        codes.push(cli(&["evaluate", "--config", c, "--out", &o("eval"), &o("gas"), &o("tree"), &o("forest")]));
        codes.push(cli(&["profile", "--config", c, "--out", &o("profile"), "--model", &o("forest"), "--variable", "Z1"]));
    }
    let a = files_under(&root.join("a"));
    let b = files_under(&root.join("b"));
    let same = !a.is_empty() && a == b;
    (
        codes.iter().all(|&c| c == 0) && same,
        format!(
            "{} files per run, identical: {same}; {} of {} commands exited non-zero",
            a.len(),
            codes.iter().filter(|&&c| c != 0).count(),
            codes.len()
        ),
    )
}

/// Type-6 empirical quantile of integer data at level num/20, as an exact
/// rational numerator over 20, converted once to f64.
fn exact_quantile(sorted: &[i64], num: i64) -> f64 {
    let n = sorted.len() as i64;
    let h20 = (n + 1) * num; // 20 · h
    let lo = h20 / 20;
    let rem = h20 % 20;
    if lo < 1 {
        return sorted[0] as f64;
    }
    if lo >= n {
        return sorted[sorted.len() - 1] as f64;
    }
    let a = sorted[lo as usize - 1];
    let b = sorted[lo as usize];
    (20 * a + rem * (b - a)) as f64 / 20.0
}

fn exact_grid(values: &[i64]) -> Vec<f64> {
    let mut s = values.to_vec();
    s.sort_unstable();
    let mut g: Vec<f64> = (1..20).map(|k| exact_quantile(&s, k)).collect();
    g.dedup();
    g
}

// 10. Threshold grids are the exact 5%..95% quantiles, conditional on the
// rows of the leaf being split.
fn grid_fidelity() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut checked = 0;
    let mut mismatches = 0;
    for n in [19usize, 20, 21, 99, 100, 199, 1000, 1237] {
        let v: Vec<i64> = (0..n).map(|_| rng.random_range(-500..500)).collect();
        let got = threshold_grid(&v.iter().map(|&x| x as f64).collect::<Vec<_>>());
        checked += 1;
        if got != exact_grid(&v) {
            mismatches += 1;
        }
    }
    // Hand-checked anchor: 1..100 gives 5.05 at 5% and 50.5 at the median.
    let anchor = threshold_grid(&(1..=100).map(f64::from).collect::<Vec<_>>());
    let anchor_ok = anchor.len() == 19 && anchor[0] == 5.05 && anchor[9] == 50.5 && anchor[18] == 95.95;

    // Conditional grids: every split of a grown tree sits on the exact grid
    // of the rows reaching its node.
    let spec = ModelSpec::new(Family::NormalScale);
    let d = simulate_regime(2500, 2, 11);
    let z: Vec<Vec<f64>> = d.z.iter().map(|r| r.iter().map(|x| (x * 20.0).round()).collect()).collect();
    let cfg = GrowConfig {
        max_depth: 3,
        ..GrowConfig::default()
    };
    let tree = grow(&spec, d.y.view(), &z, &d.names, &[0, 1], &cfg).unwrap().tree;
    let mut splits = 0;
    let mut on_grid = 0;
    let rows: Vec<usize> = (0..z.len()).collect();
    let mut stack = vec![(0usize, rows)];
    while let Some((node, rows)) = stack.pop() {
        if let Node::Split {
            variable,
            threshold,
            left,
            right,
        } = &tree.nodes[node]
        {
            let c = d.names.iter().position(|n| n == variable).unwrap();
            let vals: Vec<i64> = rows.iter().map(|&t| z[t][c] as i64).collect();
            splits += 1;
            if exact_grid(&vals).contains(threshold) {
                on_grid += 1;
            }
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&t| z[t][c] <= *threshold);
            stack.push((*left, l));
            stack.push((*right, r));
        }
    }
    (
        mismatches == 0 && anchor_ok && splits > 0 && on_grid == splits,
        format!("{checked} integer samples, {mismatches} grid mismatches; anchor ok: {anchor_ok}; {on_grid}/{splits} tree splits on their conditional grid"),
    )
}

fn main() {
    // `cargo test` passes harness flags such as `--nocapture`; a filter
    // argument selects criteria by number.
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let run = |id: usize| wanted.is_empty() || wanted.contains(&id);
    let mut g = Gate { failed: Vec::new() };
    let secs = Duration::from_secs;
    let all: Vec<(usize, &str, Option<Duration>, fn() -> (bool, String))> = vec![
        (1, "score correctness", Some(secs(10)), score_correctness),
        (2, "martingale property", Some(secs(30)), martingale),
        (3, "parameter recovery", Some(secs(120)), recovery),
        (4, "degeneracy equivalences", None, degeneracy),
        (5, "regime recovery", Some(secs(300)), regime_recovery),
        (6, "directional forecast gain", None, forecast_gain),
        (7, "DM size", None, dm_size),
        (8, "importance discrimination", None, importance),
        (9, "CLI determinism", None, determinism),
        (10, "threshold-grid fidelity", None, grid_fidelity),
    ];
    for (id, name, budget, f) in all {
        if run(id) {
            g.check(id, name, budget, f);
        }
    }
    if g.failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {:?}", g.failed);
        std::process::exit(1);
    }
}
