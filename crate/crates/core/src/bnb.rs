//! Branch-and-bound over the LP relaxation, plus the exhaustive-search
//! oracle used to verify it on small instances.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::instance::{ProblemInstance, Solution, SolveStats, SolveStatus};
use crate::linalg::C64;
use crate::lp::{LpEngine, LpOptions, LpProblem, LpStatus};
use crate::model::MilpModel;
use crate::reform;

/// Integrality tolerance for branching decisions.
pub const INT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeOrder {
    /// Best bound first, diving depth-first until an incumbent exists.
    BestBound,
    DepthFirst,
}

#[derive(Debug, Clone)]
pub struct BnbOptions {
    /// Absolute optimality gap.
    pub gap: f64,
    pub node_limit: Option<usize>,
    pub time_limit: Option<Duration>,
    pub symmetry_break: bool,
    pub node_order: NodeOrder,
    pub lp: LpOptions,
}

impl Default for BnbOptions {
    fn default() -> Self {
        Self {
            gap: 1e-6,
            node_limit: None,
            time_limit: None,
            symmetry_break: false,
            node_order: NodeOrder::BestBound,
            lp: LpOptions::default(),
        }
    }
}

/// One open subproblem: the root bounds plus the listed fixings.
#[derive(Debug, Clone)]
pub struct SearchNode {
    pub fixings: Vec<(usize, f64, f64)>,
    /// LP bound inherited from the parent (upper bound for this subtree).
    pub bound: f64,
    pub depth: usize,
    seq: usize,
}

impl PartialEq for SearchNode {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for SearchNode {}

impl PartialOrd for SearchNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SearchNode {
    // Max-heap on bound; ties go to the deeper, then the older node.
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

/// Result of a generic MILP solve.
#[derive(Debug, Clone)]
pub struct MilpOutcome {
    pub status: SolveStatus,
    /// Best integral point found, if any.
    pub values: Option<Vec<f64>>,
    pub objective: f64,
    /// Proven upper bound on the optimum.
    pub bound: f64,
    pub nodes: usize,
    pub lp_iterations: usize,
    pub wall_time: Duration,
}

impl MilpOutcome {
    pub fn gap(&self) -> f64 {
        if self.values.is_none() {
            return f64::INFINITY;
        }
        (self.bound - self.objective).max(0.0)
    }
}

/// Maps a node's LP point to a feasible integral point, if it can.
pub type Heuristic<'h> = &'h mut dyn FnMut(&[f64]) -> Option<Vec<f64>>;

/// Hooks that let a caller inject problem knowledge into the generic search.
#[derive(Default)]
pub struct SearchHooks<'h> {
    pub heuristic: Option<Heuristic<'h>>,
    /// Branching priority per column (lower branches first).
    pub priority: Option<Vec<u32>>,
}

fn fractionality(v: f64) -> f64 {
    (v - v.floor()).min(v.ceil() - v)
}

/// Most fractional integer column in the lowest priority class; ties go to
/// the lowest index.
fn pick_branch(model: &MilpModel, x: &[f64], priority: Option<&[u32]>) -> Option<usize> {
    let mut best: Option<(u32, f64, usize)> = None;
    for (j, var) in model.vars.iter().enumerate() {
        if !var.integer {
            continue;
        }
        let f = fractionality(x[j]);
        if f <= INT_TOL {
            continue;
        }
        let p = priority.map(|p| p[j]).unwrap_or(0);
        let better = match best {
            None => true,
            Some((bp, bf, _)) => p < bp || (p == bp && f > bf + 1e-12),
        };
        if better {
            best = Some((p, f, j));
        }
    }
    best.map(|(_, _, j)| j)
}

/// Branch-and-bound for a maximization MILP with bounded variables.
pub fn solve_milp(model: &MilpModel, opts: &BnbOptions, mut hooks: SearchHooks<'_>) -> Result<MilpOutcome> {
    let start = Instant::now();
    let prob = LpProblem::new(model);
    let (root_lo, root_hi) = prob.default_bounds();
    if let Some(v) = model
        .vars
        .iter()
        .find(|v| !v.lower.is_finite() || !v.upper.is_finite())
    {
        return Err(Error::InvalidInput(format!(
            "branch-and-bound needs finite bounds, {} is unbounded",
            v.name
        )));
    }
    let mut engine = LpEngine::new(&prob, opts.lp.clone());

    let mut incumbent: Option<Vec<f64>> = None;
    let mut incumbent_obj = f64::NEG_INFINITY;
    let mut nodes = 0usize;
    let mut lp_iterations = 0usize;
    let mut seq = 0usize;

    let mut heap: BinaryHeap<SearchNode> = BinaryHeap::new();
    // Best-bound search keeps diving into the up child while it survives,
    // so consecutive LPs differ by one bound.
    let mut plunge: Option<SearchNode> = None;
    let mut stack: Vec<SearchNode> = Vec::new();
    let root = SearchNode {
        fixings: Vec::new(),
        bound: f64::INFINITY,
        depth: 0,
        seq,
    };
    stack.push(root);

    let mut lo = root_lo.clone();
    let mut hi = root_hi.clone();
    let mut limit_status: Option<SolveStatus> = None;
    let mut pruned_bound = f64::NEG_INFINITY;

    let offer = |point: Vec<f64>, inc: &mut Option<Vec<f64>>, inc_obj: &mut f64| {
        let obj = model.objective_value(&point);
        if obj > *inc_obj {
            *inc_obj = obj;
            *inc = Some(point);
        }
    };

    loop {
        let diving = opts.node_order == NodeOrder::DepthFirst || incumbent.is_none();
        if !diving && !stack.is_empty() {
            heap.extend(stack.drain(..));
        }
        let node = if let Some(n) = plunge.take() {
            n
        } else if let Some(n) = stack.pop() {
            n
        } else if let Some(n) = heap.pop() {
            n
        } else {
            break;
        };
        if node.bound <= incumbent_obj + opts.gap {
            pruned_bound = pruned_bound.max(node.bound);
            continue;
        }
        if let Some(limit) = opts.node_limit {
            if nodes >= limit {
                limit_status = Some(SolveStatus::NodeLimit);
                stack.push(node);
                break;
            }
        }
        if let Some(limit) = opts.time_limit {
            if start.elapsed() >= limit {
                limit_status = Some(SolveStatus::TimeLimit);
                stack.push(node);
                break;
            }
        }
        nodes += 1;

        lo.copy_from_slice(&root_lo);
        hi.copy_from_slice(&root_hi);
        for &(j, l, u) in &node.fixings {
            lo[j] = lo[j].max(l);
            hi[j] = hi[j].min(u);
        }
        engine.set_bounds(&lo, &hi);
        let res = engine.solve();
        lp_iterations += res.iterations;
        match res.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => {
                return Err(Error::LpFailure("relaxation unbounded despite finite bounds".into()))
            }
            LpStatus::IterationLimit => {
                return Err(Error::LpFailure(format!(
                    "iteration limit at node {nodes} (depth {})",
                    node.depth
                )))
            }
        }
        let value = res.objective.min(node.bound);

        if let Some(h) = hooks.heuristic.as_mut() {
            if let Some(point) = h(&res.x) {
                offer(point, &mut incumbent, &mut incumbent_obj);
            }
        }
        if value <= incumbent_obj + opts.gap {
            pruned_bound = pruned_bound.max(value);
            continue;
        }
        let Some(j) = pick_branch(model, &res.x, hooks.priority.as_deref()) else {
            let mut point = res.x.clone();
            for (k, var) in model.vars.iter().enumerate() {
                if var.integer {
                    point[k] = point[k].round();
                }
            }
            offer(point, &mut incumbent, &mut incumbent_obj);
            continue;
        };
        let v = res.x[j];
        let mut down = node.fixings.clone();
        down.push((j, f64::NEG_INFINITY, v.floor()));
        let mut up = node.fixings;
        up.push((j, v.ceil(), f64::INFINITY));
        // The down child is popped first in both modes: fixing a phase
        // indicator to zero disturbs the parent basis far less.
        for (k, fixings) in [up, down].into_iter().enumerate() {
            seq += 1;
            let child = SearchNode {
                fixings,
                bound: value,
                depth: node.depth + 1,
                seq,
            };
            if diving {
                stack.push(child);
            } else if k == 1 {
                plunge = Some(child);
            } else {
                heap.push(child);
            }
        }
    }

    let open_bound = heap
        .iter()
        .chain(stack.iter())
        .chain(plunge.iter())
        .map(|n| n.bound)
        .fold(f64::NEG_INFINITY, f64::max);
    let status = limit_status.unwrap_or(SolveStatus::Optimal);
    // Pruned subtrees may still hide up to `gap` of improvement.
    let bound = open_bound
        .max(incumbent_obj)
        .max(pruned_bound.min(incumbent_obj + opts.gap));
    Ok(MilpOutcome {
        status,
        objective: incumbent_obj,
        values: incumbent,
        bound,
        nodes,
        lp_iterations,
        wall_time: start.elapsed(),
    })
}

/// Best `(mu, tau)` for a fixed beamformer.
pub fn optimal_mu_tau_given_w(w: &[C64], instance: &ProblemInstance) -> (Vec<bool>, f64) {
    instance.optimal_mu_tau(w)
}

/// Rounds a node's LP point to a phase tuple (argmax per antenna) and
/// completes it with the closed-form `(mu, tau)`.
pub fn rounding_heuristic(model: &MilpModel, instance: &ProblemInstance, lp_x: &[f64]) -> Option<Vec<f64>> {
    let layout = model.layout.as_ref()?;
    let phases: Vec<usize> = (0..layout.n_antennas)
        .map(|a| {
            let mut best = 0;
            for p in 1..layout.n_phases {
                if lp_x[layout.x(a, p)] > lp_x[layout.x(a, best)] + 1e-12 {
                    best = p;
                }
            }
            best
        })
        .collect();
    for (a, &p) in phases.iter().enumerate() {
        let col = layout.x(a, p);
        if model.vars[col].upper < 1.0 {
            return None;
        }
        // A fixed-to-one column elsewhere on this antenna makes the tuple
        // globally infeasible (symmetry breaking).
        if (0..layout.n_phases).any(|q| q != p && model.vars[layout.x(a, q)].lower > 0.0) {
            return None;
        }
    }
    let w = instance.beamformer(&phases);
    let (admitted, tau) = instance.optimal_mu_tau(&w);
    Some(reform::encode_point(model, &phases, &admitted, tau.min(instance.tau_max)))
}

/// Solves the structured model to global optimality and decodes the result.
pub fn solve(model: &MilpModel, instance: &ProblemInstance, opts: &BnbOptions) -> Result<Solution> {
    let model = if opts.symmetry_break {
        reform::apply_symmetry_breaking(model.clone())?
    } else {
        model.clone()
    };
    let layout = model
        .layout
        .clone()
        .ok_or_else(|| Error::InvalidInput("model carries no ISAC layout".into()))?;
    let mut priority = vec![2u32; model.n_vars()];
    for a in 0..layout.n_antennas {
        for p in 0..layout.n_phases {
            priority[layout.x(a, p)] = 0;
        }
    }
    for u in 0..layout.n_users {
        priority[layout.mu(u)] = 1;
    }
    let mut heuristic = |x: &[f64]| rounding_heuristic(&model, instance, x);
    let outcome = solve_milp(
        &model,
        opts,
        SearchHooks {
            heuristic: Some(&mut heuristic),
            priority: Some(priority),
        },
    )?;
    // mu = 0, tau = 0 with any phases is feasible, so an incumbent always exists.
    let values = outcome
        .values
        .as_ref()
        .ok_or_else(|| Error::FeasibilityViolation("no feasible point found".into()))?;
    // Snap to the exact encoding of the incumbent's phase tuple.
    let exact = rounding_heuristic(&model, instance, values).unwrap_or_else(|| values.clone());
    let stats = SolveStats {
        nodes: outcome.nodes,
        lp_iterations: outcome.lp_iterations,
        wall_time: outcome.wall_time,
        gap: (outcome.bound - model.objective_value(&exact)).max(0.0),
        status: outcome.status,
    };
    reform::reconstruct_solution(&model, &exact, instance, stats)
}

/// Number of phase tuples the oracle enumerates (`L^N`), as a float.
pub fn candidate_count(instance: &ProblemInstance) -> f64 {
    (instance.phases.len() as f64).powi(instance.n_antennas as i32)
}

/// Globally optimal solution by enumerating every phase tuple and
/// completing each with the closed-form `(mu, tau)`.
pub fn exhaustive_search(instance: &ProblemInstance, max_candidates: f64) -> Result<Solution> {
    let count = candidate_count(instance);
    if count > max_candidates {
        return Err(Error::GuardExceeded {
            candidates: count,
            guard: max_candidates,
        });
    }
    let start = Instant::now();
    let n = instance.n_antennas;
    let l = instance.phases.len();
    let symbols = instance.phases.symbols();
    let mut idx = vec![0usize; n];
    let mut w: Vec<C64> = vec![symbols[0]; n];
    let mut best: Option<Solution> = None;
    let mut evaluated = 0usize;
    loop {
        let (admitted, tau) = instance.optimal_mu_tau(&w);
        evaluated += 1;
        let f = instance.rho_com * admitted.iter().filter(|&&m| m).count() as f64 + instance.rho_sen * tau;
        if best.as_ref().is_none_or(|b| f > b.f) {
            best = Some(instance.solution(idx.clone(), admitted, tau, SolveStats::default()));
        }
        // odometer, last antenna fastest
        let mut k = n;
        loop {
            if k == 0 {
                let mut sol = best.expect("at least one candidate");
                sol.stats = SolveStats {
                    nodes: evaluated,
                    lp_iterations: 0,
                    wall_time: start.elapsed(),
                    gap: 0.0,
                    status: SolveStatus::Optimal,
                };
                return Ok(sol);
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < l {
                w[k] = symbols[idx[k]];
                break;
            }
            idx[k] = 0;
            w[k] = symbols[0];
        }
    }
}
