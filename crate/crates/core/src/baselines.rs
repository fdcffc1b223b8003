//! Comparison methods: BL2 (conservative inner approximation), BL3
//! (successive convex approximation with projection and randomization)
//! and RAND (uniform random phase search).

use std::fmt;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bnb::{self, BnbOptions, SearchHooks};
use crate::error::{Error, Result};
use crate::instance::{ProblemInstance, Solution, SolveStats, SolveStatus};
use crate::linalg::{CMatrix, C64};
use crate::lp::{self, LpOptions, LpStatus};
use crate::model::{MilpModel, Relation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    #[serde(rename = "BL2")]
    Bl2,
    #[serde(rename = "BL3")]
    Bl3,
    #[serde(rename = "RAND")]
    Rand,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Bl2 => "BL2",
            Method::Bl3 => "BL3",
            Method::Rand => "RAND",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BaselineReport {
    pub method: Method,
    pub solution: Solution,
    pub iterations: usize,
    pub trials_used: usize,
    pub repair_success: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bl3Options {
    pub max_iters: usize,
    pub tol: f64,
    pub trials: usize,
    pub polygon_sides: usize,
    pub seed: u64,
}

impl Default for Bl3Options {
    fn default() -> Self {
        Self {
            max_iters: 50,
            tol: 1e-4,
            trials: 10_000,
            polygon_sides: 16,
            seed: 0,
        }
    }
}

fn factor(m: &CMatrix) -> Result<Vec<C64>> {
    m.rank_one_factor()
        .ok_or_else(|| Error::InvalidInput("empty SNR matrix".into()))
}

/// `Re(g^H s_l)` for every antenna-independent symbol: the contribution of
/// choosing phase `l` at antenna `n` to `Re(g^H w)`.
fn projection_coeffs(g: &[C64], symbols: &[C64]) -> Vec<Vec<f64>> {
    g.iter()
        .map(|gn| symbols.iter().map(|s| (gn.conj() * s).re).collect())
        .collect()
}

fn phases_from_x(values: &[f64], n: usize, l: usize) -> Vec<usize> {
    (0..n)
        .map(|a| {
            (0..l)
                .max_by(|&p, &q| values[a * l + p].total_cmp(&values[a * l + q]).then(q.cmp(&p)))
                .unwrap_or(0)
        })
        .collect()
}

fn baseline_stats(iterations: usize, lp_iterations: usize, start: Instant, status: SolveStatus) -> SolveStats {
    SolveStats {
        nodes: iterations,
        lp_iterations,
        wall_time: start.elapsed(),
        gap: f64::NAN,
        status,
    }
}

/// BL2: every quadratic constraint is replaced by the linear condition on
/// `Re(g^H w)`. Two binary programs: the admitted count first, then the
/// sensing floor with the count held as a lower bound.
pub fn bl2_inner_approx(instance: &ProblemInstance, opts: &BnbOptions) -> Result<BaselineReport> {
    let start = Instant::now();
    let n = instance.n_antennas;
    let symbols = instance.phases.symbols().to_vec();
    let l = symbols.len();
    let users = instance.n_users();
    let sqrt_gamma = instance.snr_threshold.max(0.0).sqrt();

    let mut model = MilpModel::new("bl2");
    for a in 0..n {
        for p in 0..l {
            model.add_var(format!("x_{a}_{p}"), 0.0, 1.0, true, 0.0);
        }
    }
    let mu0 = model.n_vars();
    for u in 0..users {
        model.add_var(format!("mu_{u}"), 0.0, 1.0, true, instance.rho_com);
    }
    let sen: Vec<Vec<Vec<f64>>> = instance
        .sen_matrices
        .iter()
        .map(|m| factor(m).map(|b| projection_coeffs(&b, &symbols)))
        .collect::<Result<_>>()?;
    let reach = |c: &Vec<Vec<f64>>| -> f64 {
        c.iter()
            .map(|row| row.iter().fold(0.0f64, |acc, v| acc.max(v.abs())))
            .sum()
    };
    let t_bound = sen.iter().map(reach).fold(0.0, f64::max).max(1e-12);
    let t = model.add_var("t", -t_bound, t_bound, false, 0.0);

    for a in 0..n {
        model.add_row(format!("d2_{a}"), (0..l).map(|p| (a * l + p, 1.0)).collect(), Relation::Eq, 1.0);
    }
    for (u, m) in instance.com_matrices.iter().enumerate() {
        let c = projection_coeffs(&factor(m)?, &symbols);
        // Re(g^H w) >= sqrt(gamma) mu - slack (1 - mu); the slack makes the
        // row vacuous for rejected users.
        let slack: f64 = c
            .iter()
            .map(|row| row.iter().fold(0.0f64, |acc, v| acc.max(-v)))
            .sum();
        let mut coeffs: Vec<(usize, f64)> = Vec::new();
        for (a, row) in c.iter().enumerate() {
            for (p, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    coeffs.push((a * l + p, v));
                }
            }
        }
        coeffs.push((mu0 + u, -(sqrt_gamma + slack)));
        model.add_row(format!("com_{u}"), coeffs, Relation::Ge, -slack);
    }
    for (k, c) in sen.iter().enumerate() {
        let mut coeffs: Vec<(usize, f64)> = Vec::new();
        for (a, row) in c.iter().enumerate() {
            for (p, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    coeffs.push((a * l + p, v));
                }
            }
        }
        coeffs.push((t, -1.0));
        model.add_row(format!("sen_{k}"), coeffs, Relation::Ge, 0.0);
    }
    if instance.couple_admission {
        for u in 1..users {
            model.add_row(
                format!("couple_{u}"),
                vec![(mu0 + u - 1, 1.0), (mu0 + u, -1.0)],
                Relation::Eq,
                0.0,
            );
        }
    }

    let first = bnb::solve_milp(&model, opts, SearchHooks::default())?;
    let values = first
        .values
        .ok_or_else(|| Error::FeasibilityViolation("BL2 admission stage found no point".into()))?;
    // Stage 2: keep the admitted count, maximize the sensing margin.
    let count: f64 = (0..users).map(|u| values[mu0 + u].round()).sum();
    if users > 0 {
        model.add_row("keep_count", (0..users).map(|u| (mu0 + u, 1.0)).collect(), Relation::Ge, count);
    }
    model.objective.iter_mut().for_each(|c| *c = 0.0);
    model.objective[t] = 1.0;
    let second = bnb::solve_milp(&model, opts, SearchHooks::default())?;
    let values2 = second.values.unwrap_or(values);

    let phase_index = phases_from_x(&values2, n, l);
    let w = instance.beamformer(&phase_index);
    let snrs = instance.com_snrs(&w);
    let mut admitted: Vec<bool> = (0..users)
        .map(|u| values2[mu0 + u] > 0.5 && snrs[u] >= instance.snr_threshold)
        .collect();
    if instance.couple_admission && !admitted.iter().all(|&m| m) {
        admitted.iter_mut().for_each(|m| *m = false);
    }
    let margin = sen
        .iter()
        .map(|c| phase_index.iter().enumerate().map(|(a, &p)| c[a][p]).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    let tau = if margin.is_finite() { margin.max(0.0).powi(2) } else { 0.0 };
    let status = if first.status == SolveStatus::Optimal && second.status == SolveStatus::Optimal {
        SolveStatus::Optimal
    } else {
        SolveStatus::NodeLimit
    };
    let stats = baseline_stats(
        first.nodes + second.nodes,
        first.lp_iterations + second.lp_iterations,
        start,
        status,
    );
    let solution = instance.solution(phase_index, admitted, tau, stats);
    instance.check_feasible(&solution)?;
    Ok(BaselineReport {
        method: Method::Bl2,
        solution,
        iterations: first.nodes + second.nodes,
        trials_used: 0,
        repair_success: true,
    })
}

/// Linear minorant of `w^H M w` at `wk`: coefficients on `(Re w_n, Im w_n)`
/// and the constant, so that the minorant is `coeffs . [Re w; Im w] - constant`.
pub fn minorant(m: &CMatrix, wk: &[C64]) -> (Vec<(f64, f64)>, f64) {
    let n = wk.len();
    let v: Vec<C64> = (0..n)
        .map(|i| (0..n).map(|j| m[(i, j)] * wk[j]).sum())
        .collect();
    let constant = m.quad_form(wk).re;
    (v.iter().map(|vi| (2.0 * vi.re, 2.0 * vi.im)).collect(), constant)
}

/// Value of the minorant built at `wk`, evaluated at `w`.
pub fn minorant_value(m: &CMatrix, wk: &[C64], w: &[C64]) -> f64 {
    let (c, k) = minorant(m, wk);
    c.iter().zip(w).map(|((a, b), z)| a * z.re + b * z.im).sum::<f64>() - k
}

/// Result of one SCA run over a fixed admitted set.
#[derive(Debug, Clone)]
pub struct ScaTrace {
    pub w: Vec<C64>,
    /// Subproblem optimum per iteration.
    pub objectives: Vec<f64>,
    pub lp_iterations: usize,
}

/// SCA over continuous `w` for the users in `set`: maximize the sensing
/// floor while penalizing communication shortfall, with the modulus
/// constraint replaced by a circumscribed polygon.
pub fn sca(instance: &ProblemInstance, set: &[usize], opts: &Bl3Options) -> Result<ScaTrace> {
    let n = instance.n_antennas;
    let delta = instance.phases.magnitude();
    let sides = opts.polygon_sides.max(3);
    let gamma = instance.snr_threshold;
    let penalty = 1e3 * (1.0 + instance.tau_max / gamma.max(1.0));
    let box_bound = 1.1 * delta;

    // Start from the sensing-matched constant-modulus beamformer.
    let centre = &instance.sen_matrices[instance.sen_matrices.len() / 2];
    let b = factor(centre)?;
    let mut wk: Vec<C64> = b
        .iter()
        .map(|z| if z.norm() > 0.0 { z / z.norm() * delta } else { C64::new(delta, 0.0) })
        .collect();

    let mut objectives = Vec::new();
    let mut lp_iterations = 0;
    for _ in 0..opts.max_iters.max(1) {
        let mut model = MilpModel::new("bl3");
        for a in 0..n {
            model.add_var(format!("re_{a}"), -box_bound, box_bound, false, 0.0);
            model.add_var(format!("im_{a}"), -box_bound, box_bound, false, 0.0);
        }
        let lins: Vec<(Vec<(f64, f64)>, f64)> = instance.sen_matrices.iter().map(|m| minorant(m, &wk)).collect();
        let reach = |c: &(Vec<(f64, f64)>, f64)| -> f64 {
            c.0.iter().map(|(a, b)| (a.abs() + b.abs()) * box_bound).sum::<f64>() + c.1.abs()
        };
        let t_bound = lins.iter().map(reach).fold(instance.tau_max, f64::max) * 2.0;
        let t = model.add_var("t", -t_bound, t_bound, false, instance.rho_sen);
        for a in 0..n {
            for k in 0..sides {
                let phi = 2.0 * std::f64::consts::PI * k as f64 / sides as f64;
                model.add_row(
                    format!("mod_{a}_{k}"),
                    vec![(2 * a, phi.cos()), (2 * a + 1, phi.sin())],
                    Relation::Le,
                    delta,
                );
            }
        }
        for &u in set {
            let lin = minorant(&instance.com_matrices[u], &wk);
            let s = model.add_var(format!("s_{u}"), 0.0, gamma + reach(&lin), false, -penalty);
            let mut coeffs = lin_coeffs(&lin.0);
            coeffs.push((s, 1.0));
            model.add_row(format!("com_{u}"), coeffs, Relation::Ge, gamma + lin.1);
        }
        for (k, lin) in lins.iter().enumerate() {
            let mut coeffs = lin_coeffs(&lin.0);
            coeffs.push((t, -1.0));
            model.add_row(format!("sen_{k}"), coeffs, Relation::Ge, lin.1);
        }
        let res = lp::solve_lp(&model, &[], None, &LpOptions::default())?;
        lp_iterations += res.iterations;
        if res.status != LpStatus::Optimal {
            return Err(Error::LpFailure(format!("SCA subproblem: {:?}", res.status)));
        }
        wk = (0..n).map(|a| C64::new(res.x[2 * a], res.x[2 * a + 1])).collect();
        let done = objectives
            .last()
            .is_some_and(|&prev: &f64| (res.objective - prev).abs() <= opts.tol * prev.abs().max(1.0));
        objectives.push(res.objective);
        if done {
            break;
        }
    }
    Ok(ScaTrace {
        w: wk,
        objectives,
        lp_iterations,
    })
}

fn lin_coeffs(c: &[(f64, f64)]) -> Vec<(usize, f64)> {
    let mut out = Vec::with_capacity(2 * c.len());
    for (a, &(re, im)) in c.iter().enumerate() {
        if re != 0.0 {
            out.push((2 * a, re));
        }
        if im != 0.0 {
            out.push((2 * a + 1, im));
        }
    }
    out
}

fn set_feasible(instance: &ProblemInstance, set: &[usize], w: &[C64]) -> bool {
    set.iter()
        .all(|&u| instance.com_matrices[u].quad_form(w).re >= instance.snr_threshold)
}

/// BL3: SCA, phase projection, randomized repair and drop-worst admission.
pub fn bl3_sca(instance: &ProblemInstance, opts: &Bl3Options) -> Result<BaselineReport> {
    let start = Instant::now();
    let n = instance.n_antennas;
    let l = instance.phases.len();
    let delta = instance.phases.magnitude();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    // Order users by the best SNR any constant-modulus beamformer could give.
    let mut order: Vec<(usize, f64)> = instance
        .com_matrices
        .iter()
        .enumerate()
        .map(|(u, m)| {
            let g = factor(m)?;
            let s: f64 = g.iter().map(|z| z.norm()).sum();
            Ok((u, (delta * s).powi(2)))
        })
        .collect::<Result<_>>()?;
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut set: Vec<usize> = order.iter().map(|&(u, _)| u).collect();

    let mut iterations = 0;
    let mut lp_iterations = 0;
    let mut trials_used = 0;
    let mut repaired = true;
    let phase_index = loop {
        let trace = sca(instance, &set, opts)?;
        iterations += trace.objectives.len();
        lp_iterations += trace.lp_iterations;
        let projected: Vec<usize> = trace.w.iter().map(|&z| instance.phases.nearest(z)).collect();
        let w = instance.beamformer(&projected);
        if set_feasible(instance, &set, &w) {
            break projected;
        }
        let mut best: Option<(f64, Vec<usize>)> = None;
        let mut cand = projected.clone();
        for _ in 0..opts.trials {
            trials_used += 1;
            cand.copy_from_slice(&projected);
            for idx in cand.iter_mut() {
                if rng.gen_range(0..n) == 0 {
                    *idx = rng.gen_range(0..l);
                }
            }
            let w = instance.beamformer(&cand);
            if !set_feasible(instance, &set, &w) {
                continue;
            }
            let f = instance.evaluate_phases(&cand).f;
            if best.as_ref().is_none_or(|(bf, _)| f > *bf) {
                best = Some((f, cand.clone()));
            }
        }
        if let Some((_, idx)) = best {
            break idx;
        }
        if set.is_empty() {
            repaired = false;
            break projected;
        }
        if instance.couple_admission {
            set.clear();
        } else {
            let snrs = instance.com_snrs(&w);
            let worst = set
                .iter()
                .enumerate()
                .min_by(|a, b| snrs[*a.1].total_cmp(&snrs[*b.1]).then(b.0.cmp(&a.0)))
                .map(|(pos, _)| pos)
                .expect("nonempty set");
            set.remove(worst);
        }
    };
    let w = instance.beamformer(&phase_index);
    let (admitted, tau) = bnb::optimal_mu_tau_given_w(&w, instance);
    let stats = baseline_stats(iterations, lp_iterations, start, SolveStatus::Heuristic);
    let solution = instance.solution(phase_index, admitted, tau, stats);
    instance.check_feasible(&solution)?;
    Ok(BaselineReport {
        method: Method::Bl3,
        solution,
        iterations,
        trials_used,
        repair_success: repaired,
    })
}

/// RAND: best of `trials` uniformly drawn phase tuples, each completed with
/// the closed-form `(mu, tau)`.
pub fn rand_baseline<R: Rng + ?Sized>(instance: &ProblemInstance, trials: usize, rng: &mut R) -> Result<BaselineReport> {
    if trials == 0 {
        return Err(Error::InvalidInput("RAND needs at least one trial".into()));
    }
    let start = Instant::now();
    let n = instance.n_antennas;
    let l = instance.phases.len();
    let mut best: Option<Solution> = None;
    let mut idx = vec![0usize; n];
    for _ in 0..trials {
        for v in idx.iter_mut() {
            *v = rng.gen_range(0..l);
        }
        let sol = instance.evaluate_phases(&idx);
        if best.as_ref().is_none_or(|b| sol.f > b.f) {
            best = Some(sol);
        }
    }
    let mut solution = best.expect("trials >= 1");
    solution.stats = baseline_stats(trials, 0, start, SolveStatus::Heuristic);
    Ok(BaselineReport {
        method: Method::Rand,
        solution,
        iterations: trials,
        trials_used: trials,
        repair_success: true,
    })
}
