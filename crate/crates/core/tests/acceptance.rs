//! End-to-end acceptance checks. Runs sequentially so the timing bounds are
//! not disturbed by other tests, and prints one PASS/FAIL line per criterion.

mod common;

use std::fs;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgin_core::channel::{outage_from_threshold, outage_threshold, pointing_loss_pdf, LinkParams};
use sgin_core::geometry::{ConstellationSpec, WalkerPattern};
use sgin_core::hierfl::{
    run_training, synthetic_tasks, tree_aggregate, Contribution, DeviceId, ModelVector, RoundRoute, SyntheticSpec,
};
use sgin_core::routing::{self, chu_liu_edmonds, d_merge, exact_dst_oracle, taeer, RoutingError, TreeEdge};
use sgin_core::sim::{compare_algorithms, Algorithm, RunMetrics, Scenario};
use sgin_core::ScenarioConfig;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || {
        format!("took {:.2} s, limit {limit_s} s", elapsed.as_secs_f64())
    })
}

fn msa_exactness() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut solvable = 0;
    for i in 0..500 {
        let n = rng.gen_range(2..=8);
        let p = rng.gen_range(0.1..0.9);
        let spanning = rng.gen_bool(0.8);
        let g = common::random_digraph(&mut rng, n, p, 50, spanning);
        let brute = common::brute_force_msa(&g, 0);
        let got = match chu_liu_edmonds(&g, 0) {
            Ok(t) => Some(t.total_cost),
            Err(RoutingError::Stranded(_)) => None,
            Err(e) => return Err(format!("instance {i}: {e}")),
        };
        ensure(got == brute, || {
            format!("instance {i}: {got:?} vs brute force {brute:?}")
        })?;
        solvable += got.is_some() as usize;
    }
    within(start.elapsed(), 30.0)?;
    Ok(format!(
        "500 digraphs ({solvable} with an arborescence) match enumeration in {:.2} s",
        start.elapsed().as_secs_f64()
    ))
}

fn heuristic_sandwich() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut done = 0;
    while done < 200 {
        let n = rng.gen_range(2..=9);
        let p = rng.gen_range(0.2..0.8);
        let g = common::random_digraph(&mut rng, n, p, 50, true);
        let k = rng.gen_range(1..=4usize.min(n));
        let terms = rand::seq::index::sample(&mut rng, n, k).into_vec();
        let root = terms[0];
        let (t, m) = match (taeer(&g, &terms, root), d_merge(&g, &terms, root)) {
            (Ok(t), Ok(m)) => (t.total_cost, m.total_cost),
            // some terminal cannot reach the chosen root; draw another instance
            (Err(RoutingError::Unreachable(_)), Err(RoutingError::Unreachable(_))) => continue,
            other => return Err(format!("inconsistent results {other:?}")),
        };
        let opt = exact_dst_oracle(&g, &terms, root).map_err(|e| e.to_string())?;
        ensure(opt <= t && t <= m, || {
            format!("instance {done}: opt {opt}, TAEER {t}, D-Merge {m}")
        })?;
        done += 1;
    }
    within(start.elapsed(), 60.0)?;
    Ok(format!(
        "200 instances satisfy oracle ≤ TAEER ≤ D-Merge in {:.2} s",
        start.elapsed().as_secs_f64()
    ))
}

/// `∫_0^Γ0 f(ϑ) dϑ`, substituting `ϑ = exp(-s²)` to remove the endpoint singularities.
fn cdf_by_quadrature(gamma0: f64, p: &LinkParams<f64>) -> f64 {
    let a = p.pointing_exponent();
    let s0 = (-gamma0.ln()).sqrt();
    let s_max = s0.max((60.0 / a).sqrt()) + 1.0;
    let integrand = |s: f64| {
        let theta = (-s * s).exp();
        if theta <= 0.0 {
            return 0.0;
        }
        pointing_loss_pdf(theta, p).unwrap() * 2.0 * s * theta
    };
    common::integrate(&integrand, s0, s_max, 1e-12)
}

fn outage_closed_form() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut draws = 0;
    while draws < 1000 {
        let p = LinkParams::<f64> {
            sigma_p: rng.gen_range(0.02..0.08),
            theta_3db: rng.gen_range(0.08..0.2),
            snr_th_db: rng.gen_range(-125.0..-95.0),
            ..LinkParams::default()
        };
        let p_t = rng.gen_range(p.p_t_min_w..p.p_t_max_w);
        let d = rng.gen_range(200.0..8000.0);
        let gamma0 = outage_threshold(p_t, d, &p).map_err(|e| e.to_string())?;
        if !(gamma0 > 0.0 && gamma0 < 1.0) {
            continue;
        }
        let err = (outage_from_threshold(gamma0, &p) - cdf_by_quadrature(gamma0, &p)).abs();
        worst = worst.max(err);
        ensure(err <= 1e-6, || format!("draw {draws}: Γ0 = {gamma0}, error {err:e}"))?;
        draws += 1;
    }
    let p = LinkParams::<f64>::default();
    let mass = cdf_by_quadrature(1.0 - 1e-300, &p);
    ensure((mass - 1.0).abs() <= 1e-6, || format!("PDF integrates to {mass}"))?;
    Ok(format!("1000 draws, worst error {worst:.1e}; PDF mass {mass:.9}"))
}

fn random_tree(rng: &mut ChaCha8Rng, n: usize) -> Vec<TreeEdge<f64>> {
    (1..n)
        .map(|v| TreeEdge {
            child: v,
            parent: rng.gen_range(0..v),
            edge: 0,
            weight: 1.0,
        })
        .collect()
}

fn aggregation_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..100 {
        let nodes = rng.gen_range(1..50);
        let dim = rng.gen_range(1..20);
        let edges = random_tree(&mut rng, nodes);
        let contributions: Vec<Contribution<f64>> = (0..rng.gen_range(1..80))
            .map(|i| Contribution {
                device_id: DeviceId { cluster: i, device: 0 },
                terminal: rng.gen_range(0..nodes),
                weight: rng.gen_range(0.0..1.0),
                delta: ModelVector((0..dim).map(|_| rng.gen_range(-100.0..100.0)).collect()),
            })
            .collect();
        let tree = tree_aggregate(0, &edges, dim, &contributions).map_err(|e| e.to_string())?;
        let items: Vec<(f64, Vec<f64>)> = contributions.iter().map(|c| (c.weight, c.delta.0.clone())).collect();
        let flat = common::flat_sum(&items, dim);
        let scale = flat.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let err = tree.0.iter().zip(&flat).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        ensure(err <= 1e-12 * scale, || {
            format!("tree {case}: relative error {:e}", err / scale)
        })?;
    }

    let spec = SyntheticSpec {
        local_steps: 1,
        batch_size: None,
        learning_rate: 0.01,
        heterogeneity: 1.0,
        ..SyntheticSpec::default()
    };
    let devices: Vec<(DeviceId, f64)> = (0..9)
        .map(|i| (DeviceId { cluster: i, device: 0 }, 1.0 / 9.0))
        .collect();
    let tasks = synthetic_tasks(&spec, &devices, 7);
    let oracle: Vec<common::LeastSquares> = tasks
        .iter()
        .map(|t| (t.weight, t.features.clone(), t.targets.clone()))
        .collect();
    let mut route_rng = ChaCha8Rng::seed_from_u64(5);
    let mut model = ModelVector::zeros(spec.dim);
    let mut x = vec![0.0; spec.dim];
    let mut worst: f64 = 0.0;
    for step in 0..50 {
        let edges = random_tree(&mut route_rng, 12);
        let terminals: Vec<usize> = (0..devices.len()).map(|_| route_rng.gen_range(0..12)).collect();
        let route = RoundRoute {
            root: 0,
            edges,
            terminals,
            energy_j: 0.0,
        };
        let trace = run_training(&tasks, model.clone(), 1, step, |_| Ok(route.clone())).map_err(|e| e.to_string())?;
        model = trace.model;
        x = common::centralized_gd_step(&x, &oracle, spec.learning_rate);
        let err = model.0.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(err);
        ensure(err <= 1e-10, || format!("step {step}: deviation {err:e}"))?;
    }
    Ok(format!(
        "100 trees match the flat sum; 50 GD steps agree to {worst:.1e}"
    ))
}

fn energy(m: &RunMetrics) -> f64 {
    m.avg_energy_per_slot_j
}

fn paper_ordering() -> Check {
    let start = Instant::now();
    let mut summary = Vec::new();
    for mut cfg in [ScenarioConfig::walker_delta_80(), ScenarioConfig::walker_star_80()] {
        cfg.simulation.rounds = 60;
        cfg.simulation.rho = 0.1;
        cfg.algorithms = Algorithm::ALL.to_vec();
        let label = cfg.constellation.label();
        let runs = compare_algorithms(&cfg).map_err(|e| e.to_string())?;
        let (t, m, o) = (&runs[0], &runs[1], &runs[2]);
        for r in &runs {
            ensure(r.completed_rounds >= 50, || {
                format!("{label} {}: only {} completed rounds", r.algorithm, r.completed_rounds)
            })?;
        }
        ensure(energy(t) <= energy(m) && energy(m) < energy(o), || {
            format!(
                "{label}: energies TAEER {:.1}, D-Merge {:.1}, Orbit-Greedy {:.1}",
                energy(t),
                energy(m),
                energy(o)
            )
        })?;
        let ratio = energy(o) / energy(t);
        ensure(ratio >= 2.0, || format!("{label}: Orbit-Greedy/TAEER = {ratio:.2}"))?;
        ensure(m.avg_outage_pct >= t.avg_outage_pct, || {
            format!(
                "{label}: outage D-Merge {:.3}% < TAEER {:.3}%",
                m.avg_outage_pct, t.avg_outage_pct
            )
        })?;
        summary.push(format!(
            "{label}: {:.1}/{:.1}/{:.1} J, ratio {ratio:.2}, outage {:.2}%/{:.2}%",
            energy(t),
            energy(m),
            energy(o),
            t.avg_outage_pct,
            m.avg_outage_pct
        ));
    }
    within(start.elapsed(), 300.0)?;
    Ok(format!(
        "{} ({:.1} s)",
        summary.join("; "),
        start.elapsed().as_secs_f64()
    ))
}

fn large_frame_solve() -> Check {
    let spec = ConstellationSpec::walker(800, 20, 1, 500.0, 45.0, WalkerPattern::Delta).map_err(|e| e.to_string())?;
    let mut cfg = ScenarioConfig::with_constellation(spec);
    cfg.link.frames_per_slot = 1;
    let scenario = Scenario::new(cfg).map_err(|e| e.to_string())?;
    let ctx = scenario.round_context(0).map_err(|e| e.to_string())?;
    let g = ctx.routed.frame_graph(0);
    let start = Instant::now();
    let tree = routing::taeer(&g, &ctx.terminals, ctx.root).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    within(elapsed, 1.0)?;
    Ok(format!(
        "{} nodes, {} edges, {} terminals solved in {:.4} s (tree cost {:.1})",
        g.node_count(),
        g.edges().len(),
        ctx.terminals.len(),
        elapsed.as_secs_f64(),
        tree.total_cost
    ))
}

fn outage_threshold_trend() -> Check {
    let thresholds = [-125.0, -120.0, -115.0, -110.0, -105.0, -100.0];
    let mut summary = Vec::new();
    for base in [ScenarioConfig::walker_delta_80(), ScenarioConfig::walker_star_80()] {
        let label = base.constellation.label();
        let mut series: Vec<Vec<f64>> = vec![Vec::new(); Algorithm::ALL.len()];
        for th in thresholds {
            let mut cfg = base.clone();
            cfg.simulation.rounds = 50;
            cfg.link.snr_th_db = th;
            cfg.algorithms = Algorithm::ALL.to_vec();
            for (k, r) in compare_algorithms(&cfg).map_err(|e| e.to_string())?.iter().enumerate() {
                ensure(r.completed_rounds > 0, || {
                    format!("{label} {} at {th} dB: no round completed", r.algorithm)
                })?;
                series[k].push(r.avg_outage_pct);
            }
        }
        for (alg, s) in Algorithm::ALL.iter().zip(&series) {
            ensure(s.windows(2).all(|w| w[1] >= w[0]), || format!("{label} {alg}: {s:?}"))?;
        }
        summary.push(format!(
            "{label} TAEER {:.3}% → {:.3}%",
            series[0][0],
            series[0][thresholds.len() - 1]
        ));
    }
    Ok(format!(
        "{} thresholds from -125 to -100 dB; {}",
        thresholds.len(),
        summary.join("; ")
    ))
}

fn byte_identical_runs() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = Vec::new();
    for run in ["first", "second"] {
        let out = dir.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_sgin"))
            .args(["run-scenario", "--seed", "7", "--out"])
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(status.status.success(), || {
            String::from_utf8_lossy(&status.stderr).into_owned()
        })?;
        let read = |name: &str| fs::read(out.join(name)).map_err(|e| format!("{name}: {e}"));
        files.push((read("metrics.json")?, read("rounds.csv")?));
    }
    ensure(files[0] == files[1], || "metric files differ between runs".to_string())?;
    Ok(format!(
        "metrics.json ({} bytes) and rounds.csv ({} bytes) identical",
        files[0].0.len(),
        files[0].1.len()
    ))
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn() -> Check);
    let criteria: [Criterion; 8] = [
        ("MSA exactness", msa_exactness),
        ("heuristic sandwich", heuristic_sandwich),
        ("outage closed form", outage_closed_form),
        ("aggregation equivalence", aggregation_equivalence),
        ("energy and outage ordering", paper_ordering),
        ("800-satellite frame solve", large_frame_solve),
        ("outage grows with SNR threshold", outage_threshold_trend),
        ("deterministic run-scenario", byte_identical_runs),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS criterion {}: {name} — {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {}: {name} — {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
