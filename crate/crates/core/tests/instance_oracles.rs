mod common;

use std::cmp::Ordering;

use isac_opt::channel::{self, GeometryConfig};
use isac_opt::instance::{self, lex_compare, InstanceParams, PhaseSet, ProblemInstance};
use isac_opt::linalg::{CMatrix, C64};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn to_nalgebra(m: &CMatrix) -> DMatrix<C64> {
    let n = m.dim();
    DMatrix::from_fn(n, n, |i, j| m[(i, j)])
}

#[test]
fn target_matrix_spectrum() {
    let geo = GeometryConfig::default();
    let alpha = channel::reflection_coefficient(geo.carrier_freq_ghz, geo.radar_cross_section, geo.target_distance_m).unwrap();
    let noise = geo.noise_sen_mw();
    for n in 1..=8 {
        for theta in [35.0, 90.0, 120.0, 171.5] {
            let g = channel::target_snr_matrix(theta, alpha, noise, n);
            let mut eig: Vec<f64> = to_nalgebra(&g).symmetric_eigen().eigenvalues.iter().copied().collect();
            eig.sort_by(|a, b| b.total_cmp(a));
            let top = alpha * n as f64 / noise;
            assert!((eig[0] - top).abs() <= 1e-9 * top, "n={n} theta={theta}: {} vs {top}", eig[0]);
            for e in &eig[1..] {
                assert!(e.abs() <= 1e-9 * top, "n={n}: residual eigenvalue {e}");
            }
        }
    }
}

#[test]
fn user_matrices_are_rank_one_psd() {
    let inst = common::random_instance(5, 2, 4, 3, 11);
    for h in &inst.com_matrices {
        let mut eig: Vec<f64> = to_nalgebra(h).symmetric_eigen().eigenvalues.iter().copied().collect();
        eig.sort_by(|a, b| b.total_cmp(a));
        let tr = h.trace().re;
        assert!((eig[0] - tr).abs() <= 1e-9 * tr);
        assert!(eig[1..].iter().all(|e| e.abs() <= 1e-9 * tr));
    }
}

#[test]
fn sensing_snr_never_exceeds_tau_bound() {
    let inst = common::random_instance(6, 3, 1, 33, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let delta = inst.phases.magnitude();
    for _ in 0..10_000 {
        let w: Vec<C64> = (0..6)
            .map(|_| C64::from_polar(delta, rng.gen_range(0.0..std::f64::consts::TAU)))
            .collect();
        for s in inst.sen_snrs(&w) {
            assert!(s <= inst.tau_max * (1.0 + 1e-12), "{s} > {}", inst.tau_max);
        }
    }
}

#[test]
fn fine_quantization_approaches_tau_bound() {
    let n = 6;
    let theta = 120.0;
    let geo = GeometryConfig {
        n_antennas: n,
        angle_uncertainty_deg: 0.0,
        target_angle_deg: theta,
        ..GeometryConfig::default()
    };
    let a = channel::steering_vector(theta, n);
    let mut prev = 0.0;
    for q in 1..=8 {
        let params = InstanceParams {
            phase_bits: q,
            ..InstanceParams::default()
        };
        let inst = ProblemInstance::generate(&geo, &params).unwrap();
        let idx: Vec<usize> = a.iter().map(|&z| inst.phases.nearest(z)).collect();
        let w = inst.beamformer(&idx);
        let ratio = inst.sen_snrs(&w)[0] / inst.tau_max;
        assert!(ratio <= 1.0 + 1e-12);
        if q >= 3 {
            assert!(ratio >= prev - 1e-12, "q={q}: {ratio} < {prev}");
        }
        prev = ratio;
    }
    assert!(prev > 0.999, "ratio at 8 bits: {prev}");
}

#[test]
fn default_hierarchy_weight() {
    let geo = GeometryConfig::default();
    let alpha = channel::reflection_coefficient(71.0, 1.0, 20.0).unwrap();
    let (rc, rs) = instance::hierarchy_weights(geo.noise_sen_mw(), alpha, 10, geo.tx_power_mw()).unwrap();
    assert_eq!(rc, 1.0);
    assert!((rs - 0.89).abs() < 0.01, "rho_sen = {rs}");
    let tau = instance::tau_upper_bound(alpha, 10, geo.tx_power_mw(), geo.noise_sen_mw());
    assert!((rs * tau - 0.5).abs() < 1e-12);
}

#[test]
fn beampattern_peaks_at_steered_angle() {
    let n = 8;
    for theta0 in [40.0, 75.3, 120.0, 150.0] {
        let w = channel::steering_vector(theta0, n);
        let angles: Vec<f64> = (0..721).map(|k| k as f64 * 0.25).collect();
        let p = instance::beampattern(&w, &angles, 1.0, 1.0, n).unwrap();
        let k = (0..p.len()).max_by(|&i, &j| p[i].total_cmp(&p[j])).unwrap();
        let nearest = (theta0 / 0.25_f64).round() as usize;
        assert_eq!(k, nearest, "theta0={theta0}");
    }
}

fn hermitian(n: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    let mut m = CMatrix::zeros(n);
    for _ in 0..2 {
        let v: Vec<C64> = (0..n).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let o = CMatrix::outer(&v, rng.gen_range(0.1..3.0));
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] += o[(i, j)];
            }
        }
    }
    m
}

/// Admission and tau by trying every subset directly.
fn subset_oracle(inst: &ProblemInstance, w: &[C64]) -> (usize, f64) {
    let u = inst.n_users();
    let snr = inst.com_snrs(w);
    let tau = inst.sen_snrs(w).into_iter().fold(f64::INFINITY, f64::min).min(inst.tau_max);
    let mut best = (0, tau, f64::NEG_INFINITY);
    for mask in 0u32..(1 << u) {
        let set: Vec<usize> = (0..u).filter(|k| mask >> k & 1 == 1).collect();
        if inst.couple_admission && !set.is_empty() && set.len() != u {
            continue;
        }
        if set.iter().all(|&k| snr[k] >= inst.snr_threshold) {
            let f = inst.rho_com * set.len() as f64 + inst.rho_sen * tau;
            if f > best.2 {
                best = (set.len(), tau, f);
            }
        }
    }
    (best.0, best.1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quad_form_matches_double_loop(seed in any::<u64>(), n in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = hermitian(n, &mut rng);
        let w: Vec<C64> = (0..n).map(|_| C64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))).collect();
        let mut naive = C64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                naive += w[i].conj() * m[(i, j)] * w[j];
            }
        }
        let fast = m.quad_form(&w);
        prop_assert!((fast - naive).norm() <= 1e-12 * (1.0 + naive.norm()));
        prop_assert!(fast.im.abs() <= 1e-12 * (1.0 + fast.re.abs()));
    }

    #[test]
    fn closed_form_admission_matches_subsets(seed in 0u64..400, couple in any::<bool>()) {
        let (geo, mut params) = common::random_setup(4, 2, 4, 3, seed);
        params.couple_admission = couple;
        let inst = ProblemInstance::generate(&geo, &params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let idx: Vec<usize> = (0..4).map(|_| rng.gen_range(0..inst.phases.len())).collect();
        let w = inst.beamformer(&idx);
        let (mu, tau) = inst.optimal_mu_tau(&w);
        let (count, tau_ref) = subset_oracle(&inst, &w);
        prop_assert_eq!(mu.iter().filter(|&&m| m).count(), count);
        prop_assert!((tau - tau_ref).abs() <= 1e-12 * (1.0 + tau_ref));
    }

    #[test]
    fn lex_order_agrees_with_weighted_objective(seed in 0u64..200, a in any::<u64>(), b in any::<u64>()) {
        let inst = common::random_instance(4, 2, 3, 3, seed);
        let draw = |s: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(s);
            let idx: Vec<usize> = (0..4).map(|_| r.gen_range(0..inst.phases.len())).collect();
            inst.evaluate_phases(&idx)
        };
        let (sa, sb) = (draw(a), draw(b));
        let by_f = sa.f.total_cmp(&sb.f);
        let lex = lex_compare(&sa, &sb);
        if (sa.f - sb.f).abs() > 1e-12 {
            prop_assert_eq!(lex, by_f);
        } else {
            prop_assert_eq!(lex == Ordering::Equal || sa.f_com == sb.f_com, true);
        }
    }

    #[test]
    fn phase_rotation_preserves_objective(seed in 0u64..300, shift in 0usize..8) {
        let inst = common::random_instance(4, 3, 3, 3, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 7);
        let l = inst.phases.len();
        let idx: Vec<usize> = (0..4).map(|_| rng.gen_range(0..l)).collect();
        let rot: Vec<usize> = idx.iter().map(|&p| (p + shift) % l).collect();
        let (s0, s1) = (inst.evaluate_phases(&idx), inst.evaluate_phases(&rot));
        prop_assert_eq!(s0.f_com, s1.f_com);
        prop_assert!((s0.f - s1.f).abs() <= 1e-12 * (1.0 + s0.f.abs()));
    }
}

#[test]
fn all_served_objective() {
    let o = instance::objective(&[true; 5], 0.0, 1.0, 0.3);
    assert_eq!(o.f, 5.0);
    assert_eq!(o.f_com, 5);
}

#[test]
fn nonuniform_alphabet_is_accepted_by_instances() {
    let set = PhaseSet::from_angles(vec![0.0, 0.5, 2.0], 1.0).unwrap();
    assert!(!set.is_uniform());
    assert_eq!(set.bits(), None);
}
