//! Best-first branch-and-bound over the simplex relaxation.
//!
//! Nodes are kept in a priority queue keyed by `(bound, id)`, so exploration is
//! deterministic. Until the first incumbent is found the search dives, taking
//! the child nearest to the fractional value first. Branching picks the most
//! fractional integer variable, lowest index on ties.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::model::MilpModel;
use crate::simplex::{solve_data, Basis, LpData, LpOptions, LpStatus};

#[derive(Clone, Debug)]
pub struct MilpOptions {
    /// Relative gap `(incumbent - bound) / max(1, |incumbent|)` at which the search stops.
    pub gap_target: f64,
    pub time_limit: Option<Duration>,
    pub node_limit: usize,
    pub integrality_tol: f64,
    pub lp: LpOptions,
}

impl Default for MilpOptions {
    fn default() -> Self {
        Self {
            gap_target: 1e-3,
            time_limit: None,
            node_limit: 200_000,
            integrality_tol: 1e-6,
            lp: LpOptions::default(),
        }
    }
}

impl MilpOptions {
    pub fn with_gap(gap_target: f64) -> Self {
        Self {
            gap_target,
            ..Self::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MilpStatus {
    /// Incumbent proven within the gap target.
    Optimal,
    Infeasible,
    Unbounded,
    /// A limit was hit with an incumbent in hand.
    Feasible,
    /// A limit was hit before any incumbent was found; only the bound is known.
    Unknown,
}

#[derive(Clone, Debug)]
pub struct MilpSolution {
    pub status: MilpStatus,
    /// Incumbent values, empty when there is none.
    pub x: Vec<f64>,
    pub objective: f64,
    pub best_bound: f64,
    pub gap: f64,
    /// Nodes explored below the root.
    pub nodes: usize,
    /// Global lower bound after each processed node.
    pub bound_trace: Vec<f64>,
}

impl MilpSolution {
    pub fn has_incumbent(&self) -> bool {
        !self.x.is_empty()
    }
}

pub fn solve_milp(
    model: &MilpModel,
    gap_target: f64,
    time_limit: Option<Duration>,
) -> MilpSolution {
    let opts = MilpOptions {
        gap_target,
        time_limit,
        ..MilpOptions::default()
    };
    solve_milp_with(model, &opts)
}

struct Node {
    id: usize,
    bound: f64,
    depth: usize,
    changes: Vec<(usize, f64, f64)>,
    basis: Option<Arc<Basis>>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap; invert so the smallest (bound, id) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.id.cmp(&self.id))
    }
}

fn relative_gap(incumbent: f64, bound: f64) -> f64 {
    ((incumbent - bound) / incumbent.abs().max(1.0)).max(0.0)
}

pub fn solve_milp_with(model: &MilpModel, opts: &MilpOptions) -> MilpSolution {
    let start = Instant::now();
    let data = LpData::from_model(model);
    let n = data.n;
    let ints: Vec<usize> = (0..n)
        .filter(|&j| model.vars()[j].kind.is_integral())
        .collect();
    let mut root_lower = data.lower.clone();
    let mut root_upper = data.upper.clone();
    for &j in &ints {
        root_lower[j] = root_lower[j].ceil();
        root_upper[j] = root_upper[j].floor();
    }
    let itol = opts.integrality_tol;

    let mut inc_x: Vec<f64> = Vec::new();
    let mut inc_obj = f64::INFINITY;
    let mut trace = Vec::new();
    let mut nodes = 0usize;
    let mut next_id = 1usize;
    let mut heap = BinaryHeap::new();
    let mut dive: Option<Node> = Some(Node {
        id: 0,
        bound: f64::NEG_INFINITY,
        depth: 0,
        changes: Vec::new(),
        basis: None,
    });
    let mut lower = root_lower.clone();
    let mut upper = root_upper.clone();
    let mut global_bound = f64::NEG_INFINITY;
    let mut limit_hit = false;
    let mut root_unbounded = false;

    let prune_tol = |inc: f64| (opts.gap_target * inc.abs().max(1.0)).max(1e-9 * (1.0 + inc.abs()));

    loop {
        let node = match dive.take() {
            Some(nd) => nd,
            None => match heap.pop() {
                Some(nd) => nd,
                None => break,
            },
        };
        if node.id != 0 {
            if nodes >= opts.node_limit || opts.time_limit.is_some_and(|t| start.elapsed() >= t) {
                heap.push(node);
                limit_hit = true;
                break;
            }
            nodes += 1;
        }
        if inc_x.len() == n && node.bound >= inc_obj - prune_tol(inc_obj) {
            continue;
        }

        lower.copy_from_slice(&root_lower);
        upper.copy_from_slice(&root_upper);
        for &(j, l, u) in &node.changes {
            lower[j] = l;
            upper[j] = u;
        }
        let lp = solve_data(&data, &lower, &upper, &opts.lp, node.basis.as_deref());
        match lp.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => {
                record_bound(&mut trace, &mut global_bound, &heap, dive.as_ref(), inc_obj);
                continue;
            }
            LpStatus::Unbounded => {
                if node.id == 0 {
                    root_unbounded = true;
                    break;
                }
                continue;
            }
            LpStatus::IterationLimit => {
                // Keep the node's inherited bound; it cannot be resolved further.
                limit_hit = true;
                continue;
            }
        }
        let bound = lp.objective.max(node.bound);
        let basis = lp.basis.map(Arc::new);

        if node.id == 0 && !ints.is_empty() {
            if let Some((x, obj)) =
                round_and_fix(&data, &root_lower, &root_upper, &ints, &lp.x, opts)
            {
                if obj < inc_obj {
                    inc_obj = obj;
                    inc_x = x;
                }
            }
        }

        let mut branch: Option<(usize, f64)> = None;
        let mut best_frac = 0.0;
        for &j in &ints {
            let v = lp.x[j];
            let f = v - v.floor();
            let dist = f.min(1.0 - f);
            if dist > itol && dist > best_frac {
                best_frac = dist;
                branch = Some((j, v));
            }
        }

        match branch {
            None => {
                if lp.objective < inc_obj {
                    let mut x = lp.x.clone();
                    for &j in &ints {
                        x[j] = x[j].round();
                    }
                    inc_obj =
                        data.offset + data.cost.iter().zip(&x).map(|(c, v)| c * v).sum::<f64>();
                    inc_x = x;
                }
            }
            Some((j, v)) => {
                if !(inc_x.len() == n && bound >= inc_obj - prune_tol(inc_obj)) {
                    let mut down = node.changes.clone();
                    down.push((j, lower[j], v.floor()));
                    let mut up = node.changes.clone();
                    up.push((j, v.ceil(), upper[j]));
                    let mk = |changes, id| Node {
                        id,
                        bound,
                        depth: node.depth + 1,
                        changes,
                        basis: basis.clone(),
                    };
                    let (first, second) = if v - v.floor() < 0.5 {
                        (down, up)
                    } else {
                        (up, down)
                    };
                    let a = mk(first, next_id);
                    let b = mk(second, next_id + 1);
                    next_id += 2;
                    if inc_x.is_empty() {
                        heap.push(b);
                        dive = Some(a);
                    } else {
                        heap.push(a);
                        heap.push(b);
                    }
                }
            }
        }
        record_bound(&mut trace, &mut global_bound, &heap, dive.as_ref(), inc_obj);
        if inc_x.len() == n && relative_gap(inc_obj, global_bound) <= opts.gap_target {
            break;
        }
    }

    if root_unbounded {
        return MilpSolution {
            status: MilpStatus::Unbounded,
            x: Vec::new(),
            objective: f64::NEG_INFINITY,
            best_bound: f64::NEG_INFINITY,
            gap: f64::INFINITY,
            nodes,
            bound_trace: trace,
        };
    }
    let has_inc = inc_x.len() == n;
    let open_min = heap
        .iter()
        .map(|nd| nd.bound)
        .chain(dive.as_ref().map(|d| d.bound))
        .fold(f64::INFINITY, f64::min);
    let mut best_bound = open_min.min(inc_obj).max(global_bound);
    if !has_inc && heap.is_empty() && dive.is_none() && !limit_hit {
        best_bound = f64::INFINITY;
    }
    if has_inc {
        best_bound = best_bound.min(inc_obj);
    }
    let gap = if has_inc {
        relative_gap(inc_obj, best_bound)
    } else {
        f64::INFINITY
    };
    let status = match (has_inc, limit_hit && gap > opts.gap_target) {
        (true, false) => MilpStatus::Optimal,
        (true, true) => MilpStatus::Feasible,
        (false, true) => MilpStatus::Unknown,
        (false, false) => MilpStatus::Infeasible,
    };
    MilpSolution {
        status,
        objective: if has_inc { inc_obj } else { f64::INFINITY },
        x: inc_x,
        best_bound,
        gap,
        nodes,
        bound_trace: trace,
    }
}

fn record_bound(
    trace: &mut Vec<f64>,
    global: &mut f64,
    heap: &BinaryHeap<Node>,
    dive: Option<&Node>,
    inc: f64,
) {
    let open = heap
        .peek()
        .map(|n| n.bound)
        .into_iter()
        .chain(dive.map(|d| d.bound))
        .fold(f64::INFINITY, f64::min);
    let b = open.min(inc);
    if b > *global {
        *global = b;
    }
    trace.push(*global);
}

/// Fixes every integer variable to the rounded relaxation value and solves the
/// remaining LP.
fn round_and_fix(
    data: &LpData,
    lower: &[f64],
    upper: &[f64],
    ints: &[usize],
    x: &[f64],
    opts: &MilpOptions,
) -> Option<(Vec<f64>, f64)> {
    let mut lo = lower.to_vec();
    let mut hi = upper.to_vec();
    for &j in ints {
        let v = x[j].round().clamp(lower[j], upper[j]);
        lo[j] = v;
        hi[j] = v;
    }
    let lp = solve_data(data, &lo, &hi, &opts.lp, None);
    (lp.status == LpStatus::Optimal).then_some((lp.x, lp.objective))
}
