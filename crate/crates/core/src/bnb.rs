//! Best-first branch-and-bound for the integer problem at desk scale.
//!
//! Nodes carry integer bounds on pooled rows. Each node is bounded by the
//! row-generation relaxation under those bounds, priced over every implicit
//! row so the bound is valid for the whole node. Branching splits the most
//! fractional weight into `x_i ≤ ⌊x̃_i⌋` and `x_i ≥ ⌈x̃_i⌉`. Incumbents come
//! from local search, first from its usual start and then from greedy
//! roundings of node solutions.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};
use crate::instance::{Design, FactorPoint, ModelSpec};
use crate::localsearch::{local_search, LocalSearchOptions};
use crate::math;
use crate::relax::{node_bound, BoundOptions, NodeBounds, NodeRelaxation, NodeSolution, RowPool};

pub const DEFAULT_EPS_GAP: f64 = 1e-6;
pub const DEFAULT_NODE_CAP: usize = 100_000;
/// Weights this close to an integer count as integral.
const INTEGRALITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub node_cap: usize,
    /// Prune nodes whose bound is within this of the incumbent.
    pub eps_gap: f64,
    /// Node relaxations use `min(bound.relax.eps_kw, eps_gap / (10 s))`.
    pub bound: BoundOptions,
    pub local: LocalSearchOptions,
    /// Round and improve a node solution every this many explored nodes;
    /// `0` disables it.
    pub heuristic_every: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            node_cap: DEFAULT_NODE_CAP,
            eps_gap: DEFAULT_EPS_GAP,
            bound: BoundOptions::default(),
            local: LocalSearchOptions::default(),
            heuristic_every: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Every open node was pruned.
    Proven,
    NodeCap,
    /// The caller's stop check fired.
    Interrupted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeStatus {
    Branched,
    /// Bound within `eps_gap` of the incumbent.
    Pruned,
    /// Relaxation solution already integral.
    Integral,
    Infeasible,
    /// Still open when the search stopped.
    Open,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeRecord {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    /// `None` for infeasible nodes.
    pub bound: Option<f64>,
    pub status: NodeStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proof {
    pub optimal_ldet: f64,
    pub nodes_explored: usize,
    /// Largest open bound minus the incumbent, floored at zero.
    pub final_gap: f64,
    pub upper_bound: f64,
    pub root_bound: f64,
    pub stop: StopReason,
}

impl Proof {
    pub fn is_optimal(&self) -> bool {
        self.stop == StopReason::Proven
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub design: Design,
    pub proof: Proof,
    /// Incumbent ldet each time it improved.
    pub incumbents: Vec<f64>,
    pub nodes: Vec<NodeRecord>,
}

struct Open {
    bound: f64,
    depth: usize,
    id: usize,
    bounds: NodeBounds,
    sol: NodeSolution,
}

impl PartialEq for Open {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Open {}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Open {
    // max-heap: higher bound, then deeper, then older
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.id.cmp(&self.id))
    }
}

struct Incumbent {
    design: Design,
    ldet: f64,
    history: Vec<f64>,
}

impl Incumbent {
    fn offer(&mut self, design: Design, ldet: f64) {
        if ldet > self.ldet {
            self.design = design;
            self.ldet = ldet;
            self.history.push(ldet);
        }
    }
}

/// Solves to proven optimality or until the node cap.
pub fn solve_exact(spec: &ModelSpec, s: u64, opts: &SolveOptions) -> Result<SolveReport> {
    solve_exact_with(spec, s, opts, || false)
}

/// Same, polling `stop` before each node; a `true` ends the search with
/// the incumbent.
pub fn solve_exact_with<F>(spec: &ModelSpec, s: u64, opts: &SolveOptions, mut stop: F) -> Result<SolveReport>
where
    F: FnMut() -> bool,
{
    let m = spec.row_dim();
    if s < m as u64 {
        return Err(Error::Infeasible { budget: s, rows: m });
    }
    let sf = s as f64;
    let mut bound_opts = opts.bound.clone();
    bound_opts.relax.eps_kw = bound_opts.relax.eps_kw.min(opts.eps_gap / (10.0 * sf));

    let (design, trace) = local_search(spec, s, &opts.local)?;
    let mut inc = Incumbent {
        ldet: trace.final_ldet(),
        history: alloc::vec![trace.final_ldet()],
        design,
    };

    let mut nodes = Vec::new();
    let root_bounds = NodeBounds::default();
    let root = match node_bound(spec, s, RowPool::initial(spec)?, &root_bounds, &bound_opts)? {
        NodeRelaxation::Solved(sol) => sol,
        NodeRelaxation::Infeasible => return Err(Error::RankDeficient),
    };
    let root_bound = root.bound;
    nodes.push(NodeRecord {
        id: 0,
        parent: None,
        depth: 0,
        bound: Some(root.bound),
        status: NodeStatus::Open,
    });
    let mut heap = BinaryHeap::new();
    heap.push(Open {
        bound: root.bound,
        depth: 0,
        id: 0,
        bounds: root_bounds,
        sol: root,
    });

    let mut explored = 0;
    // bounds of nodes closed as integral, which still count toward the gap
    let mut closed_max = f64::NEG_INFINITY;
    let mut stop_reason = StopReason::Proven;
    while let Some(node) = heap.peek() {
        if node.bound <= inc.ldet + opts.eps_gap {
            break;
        }
        if explored >= opts.node_cap {
            stop_reason = StopReason::NodeCap;
            break;
        }
        if stop() {
            stop_reason = StopReason::Interrupted;
            break;
        }
        let node = heap.pop().expect("peeked");
        explored += 1;

        if opts.heuristic_every > 0 && explored % opts.heuristic_every == 0 {
            if let Some(d) = round_to_design(spec, s, &node.sol)? {
                if let Ok(info) = d.info(spec) {
                    inc.offer(d.clone(), info.ldet());
                    let local = LocalSearchOptions {
                        initial: Some(d),
                        restarts: 0,
                        ..opts.local.clone()
                    };
                    let (d2, t2) = local_search(spec, s, &local)?;
                    inc.offer(d2, t2.final_ldet());
                }
            }
        }

        let Some(i) = branching_index(&node.sol) else {
            // integral relaxation solution
            let d = integral_design(spec, s, &node.sol)?;
            if let Ok(info) = d.info(spec) {
                inc.offer(d, info.ldet());
            }
            closed_max = closed_max.max(node.bound);
            nodes[node.id].status = NodeStatus::Integral;
            continue;
        };
        if node.bound <= inc.ldet + opts.eps_gap {
            nodes[node.id].status = NodeStatus::Pruned;
            continue;
        }
        nodes[node.id].status = NodeStatus::Branched;
        let point = node.sol.pool.points()[i].clone();
        let x = node.sol.weights[i];
        let fl = math::floor(x) as u32;
        let children = [(0, fl), (fl + 1, s as u32)];
        for (lo, hi) in children {
            let mut bounds = node.bounds.clone();
            bounds.tighten(&point, lo, hi);
            let id = nodes.len();
            let depth = node.depth + 1;
            let rel = node_bound(spec, s, node.sol.pool.clone(), &bounds, &bound_opts)?;
            match rel {
                NodeRelaxation::Infeasible => nodes.push(NodeRecord {
                    id,
                    parent: Some(node.id),
                    depth,
                    bound: None,
                    status: NodeStatus::Infeasible,
                }),
                NodeRelaxation::Solved(sol) => {
                    let bound = sol.bound.min(node.bound);
                    let open = bound > inc.ldet + opts.eps_gap;
                    nodes.push(NodeRecord {
                        id,
                        parent: Some(node.id),
                        depth,
                        bound: Some(bound),
                        status: if open { NodeStatus::Open } else { NodeStatus::Pruned },
                    });
                    if open {
                        heap.push(Open {
                            bound,
                            depth,
                            id,
                            bounds,
                            sol,
                        });
                    }
                }
            }
        }
    }

    let open_max = heap
        .iter()
        .filter(|n| n.bound > inc.ldet + opts.eps_gap || stop_reason != StopReason::Proven)
        .map(|n| n.bound)
        .fold(f64::NEG_INFINITY, f64::max);
    for n in heap.iter() {
        if nodes[n.id].status == NodeStatus::Open && stop_reason == StopReason::Proven {
            nodes[n.id].status = NodeStatus::Pruned;
        }
    }
    let upper = open_max.max(closed_max).max(inc.ldet);
    let final_gap = (upper - inc.ldet).max(0.0);
    if stop_reason == StopReason::Proven && final_gap > opts.eps_gap {
        // an integral node closed with a loose bound
        stop_reason = StopReason::NodeCap;
    }
    Ok(SolveReport {
        proof: Proof {
            optimal_ldet: inc.ldet,
            nodes_explored: explored,
            final_gap,
            upper_bound: upper,
            root_bound,
            stop: stop_reason,
        },
        design: inc.design,
        incumbents: inc.history,
        nodes,
    })
}

fn fractionality(x: f64) -> f64 {
    let f = x - math::floor(x);
    f.min(1.0 - f)
}

/// Pool index with the most fractional weight, ties to the smallest point.
fn branching_index(sol: &NodeSolution) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &x) in sol.weights.iter().enumerate() {
        let f = fractionality(x);
        if f <= INTEGRALITY_TOL {
            continue;
        }
        let better = match best {
            None => true,
            Some((j, fj)) => f > fj || (f == fj && sol.pool.points()[i] < sol.pool.points()[j]),
        };
        if better {
            best = Some((i, f));
        }
    }
    best.map(|(i, _)| i)
}

fn integral_design(spec: &ModelSpec, s: u64, sol: &NodeSolution) -> Result<Design> {
    let pairs: Vec<(FactorPoint, u32)> = sol
        .pool
        .points()
        .iter()
        .zip(&sol.weights)
        .map(|(p, &x)| (p.clone(), math::floor(x + 0.5) as u32))
        .filter(|&(_, k)| k > 0)
        .collect();
    let d = Design::from_pairs(spec, pairs)?;
    if d.budget() != s {
        return Err(Error::InvalidDesign(alloc::format!(
            "rounded weights sum to {}, expected {s}",
            d.budget()
        )));
    }
    Ok(d)
}

/// Floors every weight, then hands the leftover units to the largest
/// fractional parts (ties to the smaller point).
fn round_to_design(spec: &ModelSpec, s: u64, sol: &NodeSolution) -> Result<Option<Design>> {
    let points = sol.pool.points();
    let mut counts: Vec<u64> = sol.weights.iter().map(|&x| math::floor(x + 1e-9) as u64).collect();
    let used: u64 = counts.iter().sum();
    if used > s {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = sol.weights[a] - counts[a] as f64;
        let fb = sol.weights[b] - counts[b] as f64;
        fb.total_cmp(&fa).then(points[a].cmp(&points[b]))
    });
    for &i in order.iter().cycle().take((s - used) as usize) {
        counts[i] += 1;
    }
    let pairs = points
        .iter()
        .zip(counts)
        .filter(|&(_, k)| k > 0)
        .map(|(p, k)| (p.clone(), k as u32));
    Ok(Some(Design::from_pairs(spec, pairs)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::brute_force_optimum;

    #[test]
    fn smallest_instance_is_proven() {
        let spec = ModelSpec::linear(1, 2).unwrap();
        let r = solve_exact(&spec, 2, &SolveOptions::default()).unwrap();
        assert!(r.proof.is_optimal());
        assert!(r.proof.optimal_ldet.abs() < 1e-12);
        assert_eq!(r.design.support_len(), 2);
    }

    #[test]
    fn matches_brute_force_on_two_factors() {
        let spec = ModelSpec::linear(2, 2).unwrap();
        for s in 3..=5 {
            let r = solve_exact(&spec, s, &SolveOptions::default()).unwrap();
            let (_, best) = brute_force_optimum(&spec, s).unwrap();
            assert!(r.proof.is_optimal());
            assert!((r.proof.optimal_ldet - best).abs() < 1e-9, "s={s}");
            assert!(r.proof.final_gap <= 1e-6);
        }
    }

    #[test]
    fn node_cap_reports_incumbent() {
        let spec = ModelSpec::quadratic(2, 3).unwrap();
        let opts = SolveOptions {
            node_cap: 0,
            ..SolveOptions::default()
        };
        let r = solve_exact(&spec, 8, &opts).unwrap();
        assert!(r.proof.optimal_ldet.is_finite());
        if !r.proof.is_optimal() {
            assert_eq!(r.proof.stop, StopReason::NodeCap);
            assert!(r.proof.final_gap > 0.0);
        }
    }

    #[test]
    fn trace_bounds_never_increase_downward() {
        let spec = ModelSpec::quadratic(2, 3).unwrap();
        let r = solve_exact(&spec, 7, &SolveOptions::default()).unwrap();
        for n in &r.nodes {
            if let (Some(p), Some(b)) = (n.parent, n.bound) {
                assert!(b <= r.nodes[p].bound.unwrap() + 1e-12);
            }
        }
        assert!(r.incumbents.windows(2).all(|w| w[0] <= w[1]));
    }
}
