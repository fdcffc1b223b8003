//! Acceptance criteria 1-9. Runs without the libtest harness and prints one
//! PASS/FAIL line per criterion; exits nonzero if any fails.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use isac_opt::bnb::{self, BnbOptions};
use isac_opt::channel::GeometryConfig;
use isac_opt::cli::{self, MethodTag, Scenario, SweepParam};
use isac_opt::instance::{InstanceParams, ProblemInstance, Solution};
use isac_opt::{mps, reform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn FnOnce() -> Outcome + 'a>);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

/// N=3, Q=2, U=2, C=3 with default physics; the angle spread gives three
/// distinct sensing directions.
fn oracle_instance(seed: u64) -> ProblemInstance {
    let geo = GeometryConfig {
        n_antennas: 3,
        n_users: 2,
        user_angles_deg: vec![30.0, 40.0],
        user_distances_m: vec![40.0; 2],
        angle_uncertainty_deg: 8.0,
        n_angle_samples: 3,
        seed,
        ..GeometryConfig::default()
    };
    let params = InstanceParams {
        phase_bits: 2,
        ..InstanceParams::default()
    };
    ProblemInstance::generate(&geo, &params).unwrap()
}

fn opt(inst: &ProblemInstance, symmetry_break: bool) -> Solution {
    let model = reform::build_milp(inst).unwrap();
    let opts = BnbOptions {
        symmetry_break,
        ..BnbOptions::default()
    };
    bnb::solve(&model, inst, &opts).unwrap()
}

fn tuples(n: usize, l: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..l.pow(n as u32)).map(move |mut k| {
        (0..n)
            .map(|_| {
                let d = k % l;
                k /= l;
                d
            })
            .collect()
    })
}

fn max_feasible_count(inst: &ProblemInstance) -> usize {
    tuples(inst.n_antennas, inst.phases.len())
        .map(|idx| {
            let w = inst.beamformer(&idx);
            inst.com_snrs(&w).iter().filter(|&&s| s >= inst.snr_threshold).count()
        })
        .max()
        .unwrap_or(0)
}

struct OracleRun {
    seed: u64,
    opt: Solution,
    es: Solution,
    inst: ProblemInstance,
}

fn oracle_batch() -> (Vec<OracleRun>, Duration) {
    let mut out = Vec::new();
    let mut bnb_time = Duration::ZERO;
    for seed in 1..=50 {
        let inst = oracle_instance(seed);
        let t = Instant::now();
        let o = opt(&inst, true);
        bnb_time += t.elapsed();
        let es = bnb::exhaustive_search(&inst, 1e6).unwrap();
        out.push(OracleRun { seed, opt: o, es, inst });
    }
    (out, bnb_time)
}

fn criterion_1(runs: &[OracleRun], bnb_time: Duration) -> Outcome {
    let mut worst = 0.0f64;
    for r in runs {
        let d = (r.opt.f - r.es.f).abs();
        worst = worst.max(d);
        ensure(d <= 1e-6, || format!("seed {}: B&B {} vs ES {}", r.seed, r.opt.f, r.es.f))?;
    }
    ensure(bnb_time < Duration::from_secs(300), || format!("B&B took {bnb_time:?}"))?;
    Ok(format!("50/50 match ES, max |diff| {worst:.2e}, B&B total {:.2} s", bnb_time.as_secs_f64()))
}

fn criterion_2() -> Outcome {
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for seed in 0..10u64 {
        let (mut geo, params) = common::random_setup(4, 3, 5, 33, seed);
        geo.angle_uncertainty_deg = 8.0;
        let inst = ProblemInstance::generate(&geo, &params).unwrap();
        let model = reform::build_milp(&inst).unwrap();
        let c3: Vec<_> = (0..inst.n_users())
            .map(|u| model.rows.iter().find(|r| r.name == format!("c3_{u}")).unwrap())
            .collect();
        let c5: Vec<_> = (0..inst.sen_matrices.len())
            .map(|k| model.rows.iter().find(|r| r.name == format!("c5_{k}")).unwrap())
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..1000 {
            let idx: Vec<usize> = (0..inst.n_antennas).map(|_| rng.gen_range(0..inst.phases.len())).collect();
            let mu: Vec<bool> = (0..inst.n_users()).map(|_| rng.gen_bool(0.5)).collect();
            let x = reform::encode_point(&model, &idx, &mu, 0.0);
            let w = inst.beamformer(&idx);
            for (u, row) in c3.iter().enumerate() {
                let exact = inst.com_matrices[u].quad_form(&w).re - if mu[u] { inst.snr_threshold } else { 0.0 };
                let d = (row.activity(&x) - row.rhs - exact).abs();
                worst = worst.max(d);
                ensure(d <= 1e-9, || format!("seed {seed}, C3 user {u}: off by {d:e}"))?;
            }
            for (k, row) in c5.iter().enumerate() {
                let exact = inst.sen_matrices[k].quad_form(&w).re;
                let d = (row.activity(&x) - row.rhs - exact).abs();
                worst = worst.max(d);
                ensure(d <= 1e-9, || format!("seed {seed}, C5 angle {k}: off by {d:e}"))?;
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} assignments, max |row - w^H M w| {worst:.2e}"))
}

fn criterion_3(runs: &[OracleRun]) -> Outcome {
    let mut max_sen = 0.0f64;
    for r in runs {
        let best = max_feasible_count(&r.inst);
        ensure(r.opt.f_com == best, || format!("seed {}: f_com {} vs enumerated {best}", r.seed, r.opt.f_com))?;
        ensure(r.es.f_com == best, || format!("seed {}: ES f_com {} vs {best}", r.seed, r.es.f_com))?;
        let sen = r.inst.rho_sen * r.opt.tau;
        max_sen = max_sen.max(sen);
        ensure(sen < 1.0, || format!("seed {}: rho_sen tau = {sen}", r.seed))?;
        ensure(r.opt.f.floor() as usize == r.opt.f_com, || format!("seed {}: floor({}) != {}", r.seed, r.opt.f, r.opt.f_com))?;
    }
    Ok(format!("50/50 instances, max rho_sen*tau {max_sen:.4}"))
}

fn first_admitting(records: &[cli::Record]) -> Option<f64> {
    records.iter().filter(|r| r.solution.f_com >= 1).map(|r| r.value).fold(None, |a: Option<f64>, v| Some(a.map_or(v, |a| a.min(v))))
}

fn criterion_4() -> Outcome {
    let mut lines = Vec::new();
    for seed in 1..=10u64 {
        let p = cli::preset(Scenario::II, seed);
        let runs: Vec<Vec<cli::Record>> = p
            .runs
            .iter()
            .map(|r| cli::run_sweep(&r.config, &r.label, false).unwrap())
            .collect();
        let (g30, g60, g60d8) = (&runs[0], &runs[1], &runs[2]);
        let (a, b) = (first_admitting(g30), first_admitting(g60));
        let ok = match (a, b) {
            (Some(a), Some(b)) => b >= a,
            (_, None) => true,
            (None, Some(_)) => false,
        };
        ensure(ok, || format!("seed {seed}: first admitting P_tx {a:?} (Gamma 30) vs {b:?} (Gamma 60)"))?;
        for (x, y) in g60.iter().zip(g60d8) {
            ensure(x.solution.f_com == y.solution.f_com, || {
                format!("seed {seed} P_tx {}: f_com {} -> {}", x.value, x.solution.f_com, y.solution.f_com)
            })?;
            ensure(y.solution.f_sen <= x.solution.f_sen * (1.0 + 1e-9) + 1e-12, || {
                format!("seed {seed} P_tx {}: f_sen {} -> {}", x.value, x.solution.f_sen, y.solution.f_sen)
            })?;
        }
        lines.push(format!("{}/{}", a.map_or("-".into(), |v| v.to_string()), b.map_or("-".into(), |v| v.to_string())));
    }
    Ok(format!("first admitting P_tx (Gamma 30/60) per seed: {}", lines.join(" ")))
}

fn criterion_5() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 1..=5u64 {
        let base = &cli::preset(Scenario::III, seed).runs[0].config;
        let zero = base.at(SweepParam::GammaTh, 0.0).unwrap().instance().unwrap();
        // Largest SNR any constant-modulus beamformer can give any user.
        let delta = zero.phases.magnitude();
        let reach = zero
            .com_matrices
            .iter()
            .map(|m| {
                let g = m.rank_one_factor().unwrap();
                (delta * g.iter().map(|z| z.norm()).sum::<f64>()).powi(2)
            })
            .fold(0.0, f64::max);
        let huge = base.at(SweepParam::GammaTh, 1e6 * reach).unwrap().instance().unwrap();
        let (a, b) = (opt(&zero, true), opt(&huge, true));
        ensure(b.f_com == 0, || format!("seed {seed}: {} users admitted at infeasible threshold", b.f_com))?;
        let d = (a.f_sen - b.f_sen).abs();
        worst = worst.max(d);
        ensure(d <= 1e-6, || format!("seed {seed}: f_sen {} vs {}", a.f_sen, b.f_sen))?;
    }
    Ok(format!("5 seeds, max |f_sen(Gamma=0) - f_sen(infeasible)| {worst:.2e}"))
}

fn criterion_6() -> Outcome {
    let p = cli::preset(Scenario::IV, 1);
    let run = &p.runs[0];
    let records = cli::run_sweep(&run.config, &run.label, false).unwrap();
    let methods = [MethodTag::Bl2, MethodTag::Bl3, MethodTag::Rand];
    for r in records.iter().filter(|r| r.method == MethodTag::Opt) {
        for m in methods {
            let b = records.iter().find(|x| x.value == r.value && x.method == m).unwrap();
            ensure(r.solution.f >= b.solution.f - 1e-6, || {
                format!("d={}: OPT {} < {} {}", r.value, r.solution.f, m.label(), b.solution.f)
            })?;
        }
    }
    let gains = cli::same_region_gains(&records, MethodTag::Opt, &methods);
    let mut parts = Vec::new();
    for g in &gains {
        ensure(g.points > 0 && g.mean_f_gain > 0.0, || {
            format!("OPT vs {}: {} points, mean gain {}", g.baseline.label(), g.points, g.mean_f_gain)
        })?;
        parts.push(format!("{} {:+.2}% ({} pts)", g.baseline.label(), 100.0 * g.mean_f_gain, g.points));
    }
    Ok(format!("dominance at 16 points; mean same-region f gain: {}", parts.join(", ")))
}

fn criterion_7(runs: &[OracleRun]) -> Outcome {
    let mut worst = 0.0f64;
    for r in runs.iter().take(20) {
        let off = opt(&r.inst, false);
        let d = (off.f - r.opt.f).abs();
        worst = worst.max(d);
        ensure(d <= 1e-9, || format!("seed {}: {} with fix vs {} without", r.seed, r.opt.f, off.f))?;
    }
    Ok(format!("20/20 equal, max |diff| {worst:.2e}"))
}

fn criterion_8() -> Outcome {
    let powers = [20.0, 24.0, 28.0, 32.0, 36.0, 40.0];
    for seed in 1..=10u64 {
        let mut base = cli::Config::default();
        base.geometry.seed = seed;
        base.instance.phase_bits = 2;
        let mut prev = f64::NEG_INFINITY;
        for p in powers {
            let inst = base.at(SweepParam::PTx, p).unwrap().instance().unwrap();
            let f = opt(&inst, true).f;
            ensure(f >= prev - 1e-9 * prev.abs().max(1.0), || format!("seed {seed}: f drops to {f} at {p} dBm from {prev}"))?;
            prev = f;
        }
    }
    Ok("10 seeds x 6 power points (N=6, Q=2) nondecreasing".into())
}

fn criterion_9(runs: &[OracleRun]) -> Outcome {
    let mut models: Vec<_> = runs.iter().map(|r| reform::build_milp(&r.inst).unwrap()).collect();
    models.push(reform::build_milp(&cli::Config::default().instance().unwrap()).unwrap());
    models.push(reform::apply_symmetry_breaking(models[0].clone()).unwrap());
    for (k, m) in models.iter().enumerate() {
        let back = mps::parse_mps(&mps::write_mps(m)).map_err(|e| e.to_string())?;
        if let Some(d) = common::model_diff(m, &back) {
            return Err(format!("model {k}: {d}"));
        }
    }
    let golden = include_str!("data/toy.mps");
    ensure(mps::write_mps(&common::toy_model()) == golden, || "toy model differs from golden file".into())?;
    Ok(format!("{} models re-parse identically; toy golden file byte-equal", models.len()))
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(e) => Err(e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    }
}

fn main() {
    panic::set_hook(Box::new(|_| {}));
    let (runs, bnb_time) = oracle_batch();
    let criteria: Vec<Criterion> = vec![
        ("oracle equivalence", Box::new(|| criterion_1(&runs, bnb_time))),
        ("linearization exactness", Box::new(criterion_2)),
        ("lexicographic hierarchy", Box::new(|| criterion_3(&runs))),
        ("threshold and uncertainty ordering", Box::new(criterion_4)),
        ("infeasible-threshold collapse", Box::new(criterion_5)),
        ("dominance and gains", Box::new(criterion_6)),
        ("symmetry-breaking soundness", Box::new(|| criterion_7(&runs))),
        ("power monotonicity", Box::new(criterion_8)),
        ("MPS round trip", Box::new(|| criterion_9(&runs))),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.into_iter().enumerate() {
        let t = Instant::now();
        let r = guarded(f);
        let secs = t.elapsed().as_secs_f64();
        match r {
            Ok(detail) => println!("criterion {} ({name}): PASS [{secs:.1} s] {detail}", k + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} ({name}): FAIL [{secs:.1} s] {why}", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
