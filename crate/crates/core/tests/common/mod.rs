#![allow(dead_code)]

use isac_opt::channel::GeometryConfig;
use isac_opt::instance::{InstanceParams, ProblemInstance};
use isac_opt::model::{MilpModel, Relation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Small instance with seed-drawn geometry, power and threshold, so that
/// seeded batches cover admitted, partially admitted and empty regimes.
pub fn random_instance(n: usize, bits: u32, users: usize, samples: usize, seed: u64) -> ProblemInstance {
    let (geo, params) = random_setup(n, bits, users, samples, seed);
    ProblemInstance::generate(&geo, &params).unwrap()
}

pub fn random_setup(n: usize, bits: u32, users: usize, samples: usize, seed: u64) -> (GeometryConfig, InstanceParams) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0xA5A5);
    let geo = GeometryConfig {
        n_antennas: n,
        n_users: users,
        tx_power_dbm: rng.gen_range(22.0..40.0),
        user_angles_deg: (0..users).map(|_| rng.gen_range(20.0..160.0)).collect(),
        user_distances_m: (0..users).map(|_| rng.gen_range(15.0..80.0)).collect(),
        target_angle_deg: rng.gen_range(30.0..150.0),
        angle_uncertainty_deg: if samples > 1 { rng.gen_range(2.0..10.0) } else { 0.0 },
        n_angle_samples: samples,
        seed,
        ..GeometryConfig::default()
    };
    let params = InstanceParams {
        phase_bits: bits,
        snr_threshold: rng.gen_range(5.0..100.0),
        ..InstanceParams::default()
    };
    (geo, params)
}

/// The documented toy model behind `tests/data/toy.mps`.
pub fn toy_model() -> MilpModel {
    let mut m = MilpModel::new("toy");
    m.add_var("x", 0.0, 1.0, true, 3.0);
    m.add_var("y", 0.0, 1.0, true, 2.0);
    m.add_var("t", 0.0, f64::INFINITY, false, 0.5);
    m.add_row("cap", vec![(0, 1.0), (1, 1.0)], Relation::Le, 1.0);
    m.add_row("link", vec![(2, 1.0), (0, -4.0)], Relation::Le, 0.0);
    m.add_row("floor", vec![(1, 2.0), (2, 1.0)], Relation::Ge, -0.25);
    m
}

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-15 * a.abs().max(b.abs())
}

/// First structural or numeric difference between two models (1e-15
/// relative on coefficients), if any.
pub fn model_diff(a: &MilpModel, b: &MilpModel) -> Option<String> {
    if a.n_vars() != b.n_vars() || a.n_rows() != b.n_rows() {
        return Some(format!("counts {}x{} vs {}x{}", a.n_rows(), a.n_vars(), b.n_rows(), b.n_vars()));
    }
    for (x, y) in a.vars.iter().zip(&b.vars) {
        if x.name != y.name || x.integer != y.integer || !close(x.lower, y.lower) || !close(x.upper, y.upper) {
            return Some(format!("variable {x:?} vs {y:?}"));
        }
    }
    for (j, (x, y)) in a.objective.iter().zip(&b.objective).enumerate() {
        if !close(*x, *y) {
            return Some(format!("objective {j}: {x} vs {y}"));
        }
    }
    for (r, s) in a.rows.iter().zip(&b.rows) {
        if r.name != s.name || r.relation != s.relation || !close(r.rhs, s.rhs) {
            return Some(format!("row {} header differs", r.name));
        }
        let sorted = |c: &[(usize, f64)]| {
            let mut v: Vec<(usize, f64)> = c.iter().filter(|e| e.1 != 0.0).copied().collect();
            v.sort_by_key(|e| e.0);
            v
        };
        let (rc, sc) = (sorted(&r.coeffs), sorted(&s.coeffs));
        if rc.len() != sc.len() || rc.iter().zip(&sc).any(|(p, q)| p.0 != q.0 || !close(p.1, q.1)) {
            return Some(format!("row {} coefficients differ", r.name));
        }
    }
    None
}
