//! Exact MILP encoding of the joint admission / discrete-phase problem.
//!
//! Each antenna selects one alphabet entry through a one-hot binary vector
//! `x_n`. The lifted outer product `W = w w^H` never appears as variables:
//! for `n < m` the products `x_n x_m^T` are carried by continuous blocks
//! `Y_{n,m}` whose row and column sums are tied back to `x_n` and `x_m`,
//! and every quadratic form `w^H M w` becomes the affine expression
//!
//! ```text
//! delta^2 * sum_n Re M[n,n] + sum_{n<m} sum_{r,c} 2 Re(M[m,n] s_r conj(s_c)) y[n,m,r,c]
//! ```
//!
//! which is exact whenever `x` is integral.

use crate::error::{Error, Result};
use crate::instance::{ProblemInstance, Solution, SolveStats};
use crate::linalg::{CMatrix, C64};
use crate::model::{Layout, MilpModel, Relation};

/// Tolerance on binaries when reading an LP/MILP point back.
pub const INTEGRALITY_TOL: f64 = 1e-6;

/// Constant term and `y` coefficients of the linearized `w^H M w`.
pub fn quadratic_row_terms(m: &CMatrix, layout: &Layout, symbols: &[C64]) -> (f64, Vec<(usize, f64)>) {
    let delta2 = symbols.first().map(|s| s.norm_sqr()).unwrap_or(0.0);
    let constant = delta2 * (0..m.dim()).map(|n| m[(n, n)].re).sum::<f64>();
    let mut coeffs = Vec::with_capacity(layout.n_pairs() * symbols.len().pow(2));
    for (n, k) in layout.pairs() {
        let mkn = m[(k, n)];
        for (r, sr) in symbols.iter().enumerate() {
            for (c, sc) in symbols.iter().enumerate() {
                let coef = 2.0 * (mkn * sr * sc.conj()).re;
                if coef != 0.0 {
                    coeffs.push((layout.y(n, k, r, c), coef));
                }
            }
        }
    }
    (constant, coeffs)
}

/// Builds the MILP for `instance`.
pub fn build_milp(instance: &ProblemInstance) -> Result<MilpModel> {
    let n = instance.n_antennas;
    let l = instance.phases.len();
    let u_count = instance.n_users();
    let layout = Layout {
        n_antennas: n,
        n_phases: l,
        n_users: u_count,
        uniform_alphabet: instance.phases.is_uniform(),
    };
    let symbols = instance.phases.symbols();
    let mut model = MilpModel::new("isac");

    for a in 0..n {
        for p in 0..l {
            model.add_var(format!("x_{a}_{p}"), 0.0, 1.0, true, 0.0);
        }
    }
    for (a, b) in layout.pairs() {
        for r in 0..l {
            for c in 0..l {
                model.add_var(format!("y_{a}_{b}_{r}_{c}"), 0.0, 1.0, false, 0.0);
            }
        }
    }
    for u in 0..u_count {
        model.add_var(format!("mu_{u}"), 0.0, 1.0, true, instance.rho_com);
    }
    model.add_var("tau", 0.0, instance.tau_max, false, instance.rho_sen);
    debug_assert_eq!(model.n_vars(), layout.n_columns());

    for a in 0..n {
        let coeffs = (0..l).map(|p| (layout.x(a, p), 1.0)).collect();
        model.add_row(format!("d2_{a}"), coeffs, Relation::Eq, 1.0);
    }
    // Column sums of Y_{n,m} reproduce x_m.
    for (a, b) in layout.pairs() {
        for c in 0..l {
            let mut coeffs: Vec<_> = (0..l).map(|r| (layout.y(a, b, r, c), 1.0)).collect();
            coeffs.push((layout.x(b, c), -1.0));
            model.add_row(format!("h1_{a}_{b}_{c}"), coeffs, Relation::Eq, 0.0);
        }
    }
    // Row sums of Y_{n,m} reproduce x_n.
    for (a, b) in layout.pairs() {
        for r in 0..l {
            let mut coeffs: Vec<_> = (0..l).map(|c| (layout.y(a, b, r, c), 1.0)).collect();
            coeffs.push((layout.x(a, r), -1.0));
            model.add_row(format!("h2_{a}_{b}_{r}"), coeffs, Relation::Eq, 0.0);
        }
    }
    for (u, h) in instance.com_matrices.iter().enumerate() {
        let (constant, mut coeffs) = quadratic_row_terms(h, &layout, symbols);
        coeffs.push((layout.mu(u), -instance.snr_threshold));
        model.add_row(format!("c3_{u}"), coeffs, Relation::Ge, -constant);
    }
    for (k, g) in instance.sen_matrices.iter().enumerate() {
        let (constant, mut coeffs) = quadratic_row_terms(g, &layout, symbols);
        coeffs.push((layout.tau(), -1.0));
        model.add_row(format!("c5_{k}"), coeffs, Relation::Ge, -constant);
    }
    if instance.couple_admission {
        for u in 1..u_count {
            let coeffs = vec![(layout.mu(u - 1), 1.0), (layout.mu(u), -1.0)];
            model.add_row(format!("couple_{}", u - 1), coeffs, Relation::Eq, 0.0);
        }
    }

    let overflow = model
        .rows
        .iter()
        .find(|r| !r.rhs.is_finite() || r.coeffs.iter().any(|(_, a)| !a.is_finite()));
    if let Some(row) = overflow {
        return Err(Error::CoefficientOverflow(row.name.clone()));
    }
    if model.objective.iter().any(|c| !c.is_finite()) {
        return Err(Error::CoefficientOverflow("objective".into()));
    }
    model.layout = Some(layout);
    Ok(model)
}

/// Exact MILP point for a phase assignment: one-hot `x`, `y = x_n x_m^T`.
pub fn encode_point(model: &MilpModel, phase_index: &[usize], admitted: &[bool], tau: f64) -> Vec<f64> {
    let layout = model.layout.as_ref().expect("structured model");
    let mut v = vec![0.0; model.n_vars()];
    for (a, &p) in phase_index.iter().enumerate() {
        v[layout.x(a, p)] = 1.0;
    }
    for (a, b) in layout.pairs() {
        v[layout.y(a, b, phase_index[a], phase_index[b])] = 1.0;
    }
    for (u, &m) in admitted.iter().enumerate() {
        v[layout.mu(u)] = if m { 1.0 } else { 0.0 };
    }
    v[layout.tau()] = tau;
    v
}

fn layout_of(model: &MilpModel) -> Result<&Layout> {
    model
        .layout
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("model carries no ISAC layout".into()))
}

fn binary_value(model: &MilpModel, values: &[f64], col: usize) -> Result<bool> {
    let v = values[col];
    if (v - v.round()).abs() > INTEGRALITY_TOL || !(-INTEGRALITY_TOL..=1.0 + INTEGRALITY_TOL).contains(&v) {
        return Err(Error::IntegralityViolation {
            name: model.vars[col].name.clone(),
            value: v,
        });
    }
    Ok(v.round() == 1.0)
}

/// Decodes an (integral) MILP point into a Solution and re-verifies the
/// original constraints.
pub fn reconstruct_solution(
    model: &MilpModel,
    values: &[f64],
    instance: &ProblemInstance,
    stats: SolveStats,
) -> Result<Solution> {
    let layout = layout_of(model)?;
    if values.len() != model.n_vars() {
        return Err(Error::DimensionMismatch {
            expected: model.n_vars(),
            found: values.len(),
        });
    }
    let mut phase_index = Vec::with_capacity(layout.n_antennas);
    for a in 0..layout.n_antennas {
        let mut chosen = None;
        for p in 0..layout.n_phases {
            if binary_value(model, values, layout.x(a, p))? {
                if chosen.is_some() {
                    return Err(Error::FeasibilityViolation(format!("antenna {a} selects two phases")));
                }
                chosen = Some(p);
            }
        }
        phase_index.push(
            chosen.ok_or_else(|| Error::FeasibilityViolation(format!("antenna {a} selects no phase")))?,
        );
    }
    let admitted = (0..layout.n_users)
        .map(|u| binary_value(model, values, layout.mu(u)))
        .collect::<Result<Vec<_>>>()?;
    let tau = values[layout.tau()].max(0.0);
    let sol = instance.solution(phase_index, admitted, tau, stats);

    // Lifted placeholder must equal the outer product.
    let symbols = instance.phases.symbols();
    let tol = 1e-9 * instance.phases.magnitude().powi(2).max(1.0);
    for (a, b) in layout.pairs() {
        let mut lifted = C64::new(0.0, 0.0);
        for (r, sr) in symbols.iter().enumerate() {
            for (c, sc) in symbols.iter().enumerate() {
                lifted += sr * sc.conj() * values[layout.y(a, b, r, c)];
            }
        }
        let direct = sol.beamformer[a] * sol.beamformer[b].conj();
        if (lifted - direct).norm() > tol {
            return Err(Error::FeasibilityViolation(format!(
                "lifted entry ({a},{b}) differs from w_n w_m^* by {}",
                (lifted - direct).norm()
            )));
        }
    }
    instance.check_feasible(&sol)?;
    Ok(sol)
}

/// Fixes `x[0, 0] = 1`. Sound for uniform alphabets, whose global rotations
/// map feasible points to feasible points with the same objective.
pub fn apply_symmetry_breaking(mut model: MilpModel) -> Result<MilpModel> {
    let layout = layout_of(&model)?;
    if !layout.uniform_alphabet {
        return Err(Error::NonUniformAlphabet);
    }
    let col = layout.x(0, 0);
    model.vars[col].lower = 1.0;
    model.vars[col].upper = 1.0;
    Ok(model)
}
