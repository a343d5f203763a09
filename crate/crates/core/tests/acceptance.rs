//! Acceptance criteria. Each test prints a single `criterion N: PASS|FAIL`
//! line and then asserts it.

use std::fs;
use std::io::Write;
use std::time::{Duration, Instant};

use advmorph::body::PerturbationVector as Pv;
use advmorph::desearch::{crossover, crossover_with, mutate, search, Fitness};
use advmorph::env::{reward_ant, reward_humanoid, reward_walker2d, NoisePolicy};
use advmorph::eval::RolloutFitness;
use advmorph::harness::{
    default_suites, emit_reports, run_suite, run_sweep, search_seed, ExperimentConfig,
};
use advmorph::{AttackKind, DeConfig, GaitConstants, RobotBody, ToyWalker, ToyWalkerSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: u32, ok: bool, detail: String) {
    let line = format!(
        "criterion {n}: {} ({detail})\n",
        if ok { "PASS" } else { "FAIL" }
    );
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
}

fn within(start: Instant, limit: Duration) -> bool {
    start.elapsed() < limit
}

fn deterministic_biped() -> ToyWalker {
    let mut spec = ToyWalkerSpec::biped();
    spec.gait = GaitConstants::default().with_sigma(0.0);
    ToyWalker::new(spec).unwrap()
}

#[test]
fn criterion_1_sphere_suite() {
    let start = Instant::now();
    let spec = default_suites().remove(0);
    assert_eq!((spec.dim, spec.population, spec.generations), (7, 14, 100));
    let out = run_suite(&spec);
    let fast = within(start, Duration::from_secs(30));
    let ok = out.passed && fast;
    report(
        1,
        ok,
        format!(
            "{}/100 seeds below 1e-2, need 95; {:.2?}",
            out.passes,
            start.elapsed()
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_2_grid_oracle() {
    let start = Instant::now();
    let walker = deterministic_biped();
    let body: &RobotBody = walker.body();
    let eps = 0.05;
    let fitness = RolloutFitness {
        env: &walker,
        policy: &NoisePolicy,
        body,
        kind: AttackKind::Length,
        epsilon: eps,
        episodes: 5,
        horizon: 1000,
        master_seed: 11,
    };

    let mut grid_min = f64::INFINITY;
    for code in 0..3usize.pow(7) {
        let mut c = code;
        let delta: Vec<f64> = (0..7)
            .map(|_| {
                let d = [-eps, 0.0, eps][c % 3];
                c /= 3;
                d
            })
            .collect();
        grid_min = grid_min.min(fitness.evaluate(&delta, 0).unwrap());
    }

    let de = DeConfig::new(14, 7, eps, search_seed(0, AttackKind::Length, eps));
    let result = search(&fitness, &de, &body.attack_mask(AttackKind::Length)).unwrap();
    let g_best = fitness
        .estimate(result.delta_best.deltas(), 0)
        .unwrap()
        .mean;
    let ok = g_best <= grid_min * 1.01 && within(start, Duration::from_secs(120));
    report(
        2,
        ok,
        format!(
            "DE {g_best:.4} vs grid minimum {grid_min:.4}; {:.2?}",
            start.elapsed()
        ),
    );
    assert!(ok);
}

fn sweep_config(extra: &str) -> ExperimentConfig {
    let json =
        format!(r#"{{"kinds":["length"],"epsilons":[0.0,0.01,0.05],"eval":{{"runs":50}}{extra}}}"#);
    serde_json::from_str(&json).unwrap()
}

#[test]
fn criterion_3_attack_effectiveness() {
    let start = Instant::now();
    let r = run_sweep(&sweep_config("")).unwrap();
    let g: Vec<f64> = [0.0, 0.01, 0.05]
        .iter()
        .map(|&e| r.cell(e, AttackKind::Length).unwrap().grand_mean.unwrap())
        .collect();
    let ok =
        g[2] < 0.5 * g[0] && g[0] > g[1] && g[1] > g[2] && within(start, Duration::from_secs(300));
    report(
        3,
        ok,
        format!(
            "grand means {:.3} > {:.3} > {:.3}; {:.2?}",
            g[0],
            g[1],
            g[2],
            start.elapsed()
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_4_symmetry_breaking() {
    let walker = ToyWalker::new(ToyWalkerSpec::biped()).unwrap();
    let body = walker.body();
    let eps = 0.05;
    let mut broken = 0;
    for master in 0..10u64 {
        let seed = search_seed(master, AttackKind::Length, eps);
        let fitness = RolloutFitness {
            env: &walker,
            policy: &NoisePolicy,
            body,
            kind: AttackKind::Length,
            epsilon: eps,
            episodes: 50,
            horizon: 1000,
            master_seed: seed,
        };
        let de = DeConfig::new(14, 7, eps, seed);
        let r = search(&fitness, &de, &body.attack_mask(AttackKind::Length)).unwrap();
        let d = r.delta_best.deltas();
        if body
            .length()
            .mirror_pairs()
            .iter()
            .any(|&(a, b)| d[a] * d[b] < 0.0)
        {
            broken += 1;
        }
    }
    let ok = broken >= 8;
    report(
        4,
        ok,
        format!("{broken}/10 seeds with an opposite-signed pair"),
    );
    assert!(ok);
}

struct Feasible<'a> {
    eps: f64,
    mask: &'a [bool],
}

impl Fitness<f64> for Feasible<'_> {
    type Error = std::convert::Infallible;
    fn evaluate(&self, x: &[f64], _block: u32) -> Result<f64, Self::Error> {
        assert!(x.iter().all(|v| v.abs() <= self.eps));
        assert!(x.iter().zip(self.mask).all(|(&v, &m)| m || v == 0.0));
        Ok(x.iter()
            .enumerate()
            .map(|(i, v)| (v - 0.3 * i as f64).powi(2))
            .sum())
    }
}

#[test]
fn criterion_5_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut failures = Vec::new();

    // Feasibility and monotone best trace on a deterministic objective that
    // pushes against the box.
    for seed in 0..20 {
        let mask: Vec<bool> = (0..6).map(|i| i != 2).collect();
        let f = Feasible {
            eps: 0.4,
            mask: &mask,
        };
        let mut cfg = DeConfig::new(8, 6, 0.4, seed);
        cfg.generations = 30;
        let r = search(&f, &cfg, &mask).unwrap();
        if r.best_trace.windows(2).any(|w| w[1] > w[0]) {
            failures.push(format!("trace not monotone for seed {seed}"));
        }
        if r.delta_best.max_norm() > 0.4 {
            failures.push(format!("infeasible best for seed {seed}"));
        }
    }

    for _ in 0..1000 {
        let dim = rng.random_range(1..12);
        let eps: f64 = rng.random_range(0.001..0.9);
        let mask: Vec<bool> = (0..dim).map(|_| rng.random_bool(0.8)).collect();
        let raw: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();

        let once = Pv::clamp(&raw, eps, &mask);
        let twice = Pv::clamp(once.deltas(), eps, &mask);
        if once != twice || once.max_norm() > eps {
            failures.push("clamp".into());
        }

        let target: Vec<f64> = (0..dim).map(|_| rng.random()).collect();
        let mutant: Vec<f64> = target.iter().map(|t| t + 1.0).collect();
        let forced = rng.random_range(0..dim);
        let draws: Vec<f64> = (0..dim).map(|_| 1.0).collect();
        let trial = crossover_with(&target, &mutant, 0.0, forced, &draws);
        if trial[forced] != mutant[forced] {
            failures.push("forced index".into());
        }

        let shape = ToyWalkerSpec::biped().body.length().clone();
        let d = Pv::sample_initial(7, 0.09, shape.attackable(), &mut rng);
        let adv = advmorph::body::apply_perturbation(&shape, &d).unwrap();
        let back = adv.recover_delta();
        if back
            .iter()
            .zip(d.deltas())
            .any(|(a, b)| (a - b).abs() > 1e-12)
        {
            failures.push("round trip".into());
        }

        let v: f64 = rng.random_range(-3.0..3.0);
        let u: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let u2: f64 = u.iter().map(|x| x * x).sum();
        if (reward_walker2d(v, &u) - (v - 1e-3 * u2 + 1.0)).abs() > 1e-12 {
            failures.push("reward".into());
        }
    }

    let ok = failures.is_empty();
    report(
        5,
        ok,
        if ok {
            "feasibility, clamp, forced index, monotone trace, round trip, rewards".into()
        } else {
            failures.join(", ")
        },
    );
    assert!(ok);
}

fn strip_timestamp(bytes: &[u8]) -> String {
    String::from_utf8(bytes.to_vec())
        .unwrap()
        .lines()
        .filter(|l| !l.trim_start().starts_with("\"generated_at\""))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn criterion_6_reproducibility() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let cfg = sweep_config(r#","master_seed":6"#);
    for d in &dirs {
        let r = run_sweep(&cfg).unwrap();
        emit_reports(&r, d.path()).unwrap();
    }
    let read = |i: usize, name: &str| fs::read(dirs[i].path().join(name)).unwrap();
    let rewards = read(0, "rewards.csv") == read(1, "rewards.csv");
    let result =
        strip_timestamp(&read(0, "result.json")) == strip_timestamp(&read(1, "result.json"));
    let ok = rewards && result;
    report(
        6,
        ok,
        format!("rewards.csv identical: {rewards}, result.json identical: {result}"),
    );
    assert!(ok);
}

#[test]
fn criterion_7_formula_checks() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut bad = 0;
    for _ in 0..1000 {
        let v: f64 = rng.random_range(-5.0..5.0);
        let n = rng.random_range(0..10);
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let f: Vec<f64> = (0..n).map(|_| rng.random_range(-40.0..40.0)).collect();
        let mut u2 = 0.0;
        for x in &u {
            u2 += x * x;
        }
        let mut f2 = 0.0;
        for x in &f {
            f2 += x * x;
        }
        let checks = [
            (reward_walker2d(v, &u), v - 0.001 * u2 + 1.0),
            (reward_ant(v, &u, &f), v - 0.5 * u2 - 0.0005 * f2 + 1.0),
            (
                reward_humanoid(v, &u, &f),
                5.0 * v - 0.1 * u2 - 0.0000005 * f2 + 4.0,
            ),
        ];
        bad += checks.iter().filter(|(a, b)| (a - b).abs() > 1e-12).count();

        let dim = rng.random_range(1..10);
        let best: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r1: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r2: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let scale: f64 = rng.random_range(0.0..2.0);
        let m = mutate(&best, &r1, &r2, scale);
        for j in 0..dim {
            if (m[j] - (best[j] + scale * (r1[j] - r2[j]))).abs() > 1e-12 {
                bad += 1;
            }
        }

        let target: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cr: f64 = rng.random();
        let seed = rng.random::<u64>();
        let trial = crossover(&target, &m, cr, &mut ChaCha8Rng::seed_from_u64(seed));
        // Replay the same stream: forced index first, then one draw per gene.
        let mut replay = ChaCha8Rng::seed_from_u64(seed);
        let forced = replay.random_range(0..dim);
        for j in 0..dim {
            let r: f64 = replay.random();
            let want = if r <= cr || j == forced {
                m[j]
            } else {
                target[j]
            };
            if trial[j] != want {
                bad += 1;
            }
        }
    }
    let ok = bad == 0;
    report(7, ok, format!("{bad} mismatches over 1000 cases"));
    assert!(ok);
}
