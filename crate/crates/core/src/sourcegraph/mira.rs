//! Passive-aggressive cost updates from ranking feedback.
//!
//! Only edges that separate the trees of a constraint move. A prefer
//! constraint spreads the violation δ = cost(a) − cost(b) + γ evenly over the
//! symmetric difference of the two edge sets, so the margin is met exactly
//! unless clamping at zero gets in the way.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{EdgeOrigin, GraphError, QueryTree, SourceGraph};
use crate::EdgeId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum RankingConstraint {
    /// `better` must cost at least γ less than `worse`.
    Prefer { better: QueryTree, worse: QueryTree },
    /// The query must end up costlier than θ_q.
    Suppress { query: QueryTree },
    /// The query must end up at or below θ_q.
    Promote { query: QueryTree },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintOutcome {
    /// Already satisfied; nothing changed.
    Passive,
    Updated,
    /// Costs hit zero before the constraint could be met.
    ClampLimited,
}

/// Lowers the edges in `set` by `total` in aggregate, evenly where possible;
/// an edge that would go negative stops at zero and the rest absorb its
/// share. Returns the amount that could not be removed.
fn lower_evenly(costs: &mut BTreeMap<EdgeId, f64>, set: &[EdgeId], total: f64) -> f64 {
    let mut active: Vec<&EdgeId> = set.iter().collect();
    let mut remaining = total;
    while !active.is_empty() && remaining > 0.0 {
        let share = remaining / active.len() as f64;
        let (low, high): (Vec<&EdgeId>, Vec<&EdgeId>) = active.iter().partition(|e| costs[**e] <= share);
        if low.is_empty() {
            for e in &high {
                let c = costs.get_mut(*e).unwrap();
                *c = (*c - share).max(0.0);
            }
            return 0.0;
        }
        for e in low {
            remaining -= costs[e];
            costs.insert(e.clone(), 0.0);
        }
        active = high;
    }
    remaining.max(0.0)
}

fn tree_cost(costs: &BTreeMap<EdgeId, f64>, t: &QueryTree) -> f64 {
    t.edges.iter().map(|e| costs[e]).sum()
}

fn check_edges(graph: &SourceGraph, t: &QueryTree) -> Result<(), GraphError> {
    match t.edges.iter().find(|e| !graph.edges.contains_key(*e)) {
        Some(e) => Err(GraphError::UnknownEdge(e.clone())),
        None => Ok(()),
    }
}

/// Applies the constraints in order and returns the new graph together with
/// what happened to each constraint.
pub fn mira_update(
    graph: &SourceGraph,
    constraints: &[RankingConstraint],
) -> Result<(SourceGraph, Vec<ConstraintOutcome>), GraphError> {
    let mut costs: BTreeMap<EdgeId, f64> = graph.edges.iter().map(|(id, e)| (id.clone(), e.cost)).collect();
    let mut touched: BTreeSet<EdgeId> = BTreeSet::new();
    let mut outcomes = Vec::with_capacity(constraints.len());
    let gamma = graph.config.margin;
    let ceiling = graph.config.query_ceiling;
    for (i, c) in constraints.iter().enumerate() {
        let outcome = match c {
            RankingConstraint::Prefer { better, worse } => {
                check_edges(graph, better)?;
                check_edges(graph, worse)?;
                let a_only: Vec<EdgeId> = better.edges.difference(&worse.edges).cloned().collect();
                let b_only: Vec<EdgeId> = worse.edges.difference(&better.edges).cloned().collect();
                if a_only.is_empty() && b_only.is_empty() {
                    return Err(GraphError::Unsatisfiable(i, "both queries use the same edges".into()));
                }
                let (ca, cb) = (tree_cost(&costs, better), tree_cost(&costs, worse));
                if ca <= cb - gamma {
                    ConstraintOutcome::Passive
                } else {
                    let delta = ca - cb + gamma;
                    let step = delta / (a_only.len() + b_only.len()) as f64;
                    for e in &b_only {
                        *costs.get_mut(e).unwrap() += step;
                    }
                    let left = lower_evenly(&mut costs, &a_only, step * a_only.len() as f64);
                    touched.extend(a_only.iter().chain(&b_only).cloned());
                    if left > 1e-12 {
                        ConstraintOutcome::ClampLimited
                    } else {
                        ConstraintOutcome::Updated
                    }
                }
            }
            RankingConstraint::Suppress { query } => {
                check_edges(graph, query)?;
                let cq = tree_cost(&costs, query);
                if cq > ceiling {
                    ConstraintOutcome::Passive
                } else if query.edges.is_empty() {
                    return Err(GraphError::Unsatisfiable(i, "a single-source query has no edges to raise".into()));
                } else {
                    let step = (ceiling - cq) / query.edges.len() as f64;
                    for e in &query.edges {
                        *costs.get_mut(e).unwrap() += step;
                    }
                    // nudge by one ulp at a time until strictly above the ceiling
                    while tree_cost(&costs, query) <= ceiling {
                        for e in &query.edges {
                            let c = costs.get_mut(e).unwrap();
                            *c = c.next_up();
                        }
                    }
                    touched.extend(query.edges.iter().cloned());
                    ConstraintOutcome::Updated
                }
            }
            RankingConstraint::Promote { query } => {
                check_edges(graph, query)?;
                let cq = tree_cost(&costs, query);
                if cq <= ceiling {
                    ConstraintOutcome::Passive
                } else {
                    let edges: Vec<EdgeId> = query.edges.iter().cloned().collect();
                    lower_evenly(&mut costs, &edges, cq - ceiling);
                    while tree_cost(&costs, query) > ceiling {
                        for e in &edges {
                            let c = costs.get_mut(e).unwrap();
                            if *c > 0.0 {
                                *c = c.next_down().max(0.0);
                            }
                        }
                    }
                    touched.extend(edges);
                    ConstraintOutcome::Updated
                }
            }
        };
        outcomes.push(outcome);
    }
    let mut out = graph.clone();
    for id in touched {
        let e = out.edges.get_mut(&id).unwrap();
        if e.cost != costs[&id] {
            e.cost = costs[&id];
            e.origin = EdgeOrigin::Learned;
        }
    }
    Ok((out, outcomes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sourcegraph::tests::graph;

    fn three() -> SourceGraph {
        graph(&["A", "B", "C", "D"], &[("A", "B", 1.0), ("B", "C", 1.0), ("C", "D", 1.0)])
    }

    fn t(g: &SourceGraph, edges: &[&str]) -> QueryTree {
        g.tree(edges.iter().map(|e| EdgeId::from(*e)), []).unwrap()
    }

    #[test]
    fn prefer_spreads_the_violation() {
        let g = three();
        let (a, b) = (t(&g, &["BC", "CD"]), t(&g, &["AB"]));
        let (g2, out) = mira_update(&g, &[RankingConstraint::Prefer { better: a.clone(), worse: b.clone() }]).unwrap();
        assert_eq!(out, vec![ConstraintOutcome::Updated]);
        let c = |e: &str| g2.edges[&EdgeId::from(e)].cost;
        assert!((c("BC") - 1.0 / 3.0).abs() < 1e-12);
        assert!((c("CD") - 1.0 / 3.0).abs() < 1e-12);
        assert!((c("AB") - 5.0 / 3.0).abs() < 1e-12);
        let (ca, cb) = (g2.cost_of(&a.edges).unwrap(), g2.cost_of(&b.edges).unwrap());
        assert!(ca <= cb - 1.0 + 1e-9);
        assert_eq!(g2.edges[&EdgeId::from("AB")].origin, EdgeOrigin::Learned);
    }

    #[test]
    fn satisfied_preference_is_passive() {
        let mut g = three();
        g.edges.get_mut(&EdgeId::from("AB")).unwrap().cost = 4.0;
        let (a, b) = (t(&g, &["BC"]), t(&g, &["AB"]));
        let (g2, out) = mira_update(&g, &[RankingConstraint::Prefer { better: a, worse: b }]).unwrap();
        assert_eq!(out, vec![ConstraintOutcome::Passive]);
        assert_eq!(g2, g);
    }

    #[test]
    fn identical_edge_sets_cannot_be_ordered() {
        let g = three();
        let a = t(&g, &["AB"]);
        let r = mira_update(&g, &[RankingConstraint::Prefer { better: a.clone(), worse: a }]);
        assert!(matches!(r, Err(GraphError::Unsatisfiable(0, _))));
        assert_eq!(mira_update(&g, &[]).unwrap().0, g);
    }

    #[test]
    fn suppress_at_the_ceiling_moves_just_past_it() {
        let mut g = three();
        for e in g.edges.values_mut() {
            e.cost = 5.0;
        }
        let q = t(&g, &["AB", "BC"]);
        assert_eq!(q.cost, g.config.query_ceiling);
        let (g2, _) = mira_update(&g, &[RankingConstraint::Suppress { query: q.clone() }]).unwrap();
        let cost = g2.cost_of(&q.edges).unwrap();
        assert!(cost > 10.0 && cost < 10.0 + 1e-12);
        assert_eq!(g2.edges[&EdgeId::from("CD")].cost, 5.0);
    }

    #[test]
    fn promote_lowers_to_the_ceiling() {
        let mut g = three();
        g.edges.get_mut(&EdgeId::from("AB")).unwrap().cost = 9.0;
        g.edges.get_mut(&EdgeId::from("BC")).unwrap().cost = 0.5;
        let q = t(&g, &["AB", "BC", "CD"]);
        let (g2, out) = mira_update(&g, &[RankingConstraint::Promote { query: q.clone() }]).unwrap();
        assert_eq!(out, vec![ConstraintOutcome::Updated]);
        assert!(g2.cost_of(&q.edges).unwrap() <= 10.0);
        assert!(g2.edges.values().all(|e| e.cost >= 0.0));
        // the 0.5 excess is split evenly over the three edges
        assert!((g2.edges[&EdgeId::from("BC")].cost - (0.5 - 0.5 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn clamping_is_reported() {
        let mut g = three();
        g.edges.get_mut(&EdgeId::from("BC")).unwrap().cost = 0.1;
        let (a, b) = (t(&g, &["BC"]), t(&g, &["AB"]));
        g.edges.get_mut(&EdgeId::from("AB")).unwrap().cost = 0.0;
        let a = g.recost(&a).unwrap();
        let b = g.recost(&b).unwrap();
        // δ = 1.1 over two edges: AB rises 0.55, BC can only fall 0.1
        let (g2, out) = mira_update(&g, &[RankingConstraint::Prefer { better: a, worse: b }]).unwrap();
        assert_eq!(out, vec![ConstraintOutcome::ClampLimited]);
        assert_eq!(g2.edges[&EdgeId::from("BC")].cost, 0.0);
    }
}
