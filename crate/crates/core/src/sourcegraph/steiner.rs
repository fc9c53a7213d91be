//! Top-k Steiner trees over the source graph.
//!
//! Exact search enumerates every subtree grown from one terminal by a binary
//! include/exclude split on frontier edges, which visits each subtree once.
//! A tree is kept when it spans the terminals and every leaf is a terminal;
//! a cost bound against the current k-th best and a reachability check cut
//! the search.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use super::{rank_order, GraphError, QueryTree, SourceGraph};
use crate::{EdgeId, SourceId};

/// Largest node count the exact search accepts.
pub const EXACT_NODE_BOUND: usize = 12;
const PATHS_PER_PAIR: usize = 3;

/// Read-only view of the graph restricted to a subset of edges.
struct View<'g> {
    g: &'g SourceGraph,
    edges: Vec<&'g EdgeId>,
    adj: BTreeMap<&'g SourceId, Vec<(&'g EdgeId, &'g SourceId)>>,
}

impl<'g> View<'g> {
    fn new(g: &'g SourceGraph, allowed: impl Fn(&EdgeId) -> bool) -> Self {
        let mut adj: BTreeMap<&SourceId, Vec<(&EdgeId, &SourceId)>> = BTreeMap::new();
        let mut edges = Vec::new();
        for (id, e) in &g.edges {
            if !allowed(id) {
                continue;
            }
            let (a, b) = e.endpoints.nodes();
            adj.entry(a).or_default().push((id, b));
            adj.entry(b).or_default().push((id, a));
            edges.push(id);
        }
        View { g, edges, adj }
    }

    fn neighbours(&self, n: &SourceId) -> &[(&'g EdgeId, &'g SourceId)] {
        self.adj.get(n).map_or(&[], Vec::as_slice)
    }

    fn node_count(&self, terminals: &BTreeSet<SourceId>) -> usize {
        let mut nodes: BTreeSet<&SourceId> = self.adj.keys().copied().collect();
        nodes.extend(terminals.iter());
        nodes.len()
    }

    fn cost(&self, e: &EdgeId) -> f64 {
        self.g.edges[e].cost
    }

    fn connected(&self, terminals: &BTreeSet<SourceId>) -> bool {
        let Some(start) = terminals.iter().next() else { return true };
        let mut seen = BTreeSet::from([start]);
        let mut stack = vec![start];
        while let Some(n) = stack.pop() {
            for (_, m) in self.neighbours(n) {
                if seen.insert(*m) {
                    stack.push(m);
                }
            }
        }
        terminals.iter().all(|t| seen.contains(t))
    }
}

fn check_terminals(g: &SourceGraph, terminals: &BTreeSet<SourceId>) -> Result<(), GraphError> {
    if terminals.is_empty() {
        return Err(GraphError::NoTerminals);
    }
    match terminals.iter().find(|t| !g.nodes.contains(*t)) {
        Some(t) => Err(GraphError::UnknownNode(t.clone())),
        None => Ok(()),
    }
}

struct TopK {
    k: usize,
    best: Vec<QueryTree>,
}

impl TopK {
    fn bound(&self) -> f64 {
        if self.best.len() < self.k {
            f64::INFINITY
        } else {
            self.best[self.k - 1].cost
        }
    }

    fn offer(&mut self, t: QueryTree) {
        if self.best.iter().any(|b| b.edges == t.edges && b.nodes == t.nodes) {
            return;
        }
        let pos = self.best.partition_point(|b| rank_order(b, &t) == Ordering::Less);
        if pos < self.k {
            self.best.insert(pos, t);
            self.best.truncate(self.k);
        }
    }
}

struct Search<'a, 'g> {
    view: &'a View<'g>,
    terminals: &'a BTreeSet<SourceId>,
    top: TopK,
}

impl<'a, 'g> Search<'a, 'g> {
    fn leaves_ok(&self, nodes: &BTreeSet<&SourceId>, edges: &BTreeSet<&EdgeId>) -> bool {
        if nodes.len() == 1 {
            return true;
        }
        let mut degree: BTreeMap<&SourceId, usize> = BTreeMap::new();
        for e in edges {
            let (a, b) = self.view.g.edges[*e].endpoints.nodes();
            *degree.entry(a).or_default() += 1;
            *degree.entry(b).or_default() += 1;
        }
        degree.iter().all(|(n, d)| *d > 1 || self.terminals.contains(*n))
    }

    /// Whether every missing terminal is reachable from the tree through
    /// edges that are not excluded.
    fn reachable(&self, nodes: &BTreeSet<&'g SourceId>, excluded: &BTreeSet<&EdgeId>) -> bool {
        let mut seen: BTreeSet<&SourceId> = nodes.clone();
        let mut stack: Vec<&SourceId> = nodes.iter().copied().collect();
        while let Some(n) = stack.pop() {
            if self.view.g.is_service(n) && !nodes.contains(n) {
                continue;
            }
            for (e, m) in self.view.neighbours(n) {
                if !excluded.contains(e) && seen.insert(*m) {
                    stack.push(m);
                }
            }
        }
        self.terminals.iter().all(|t| seen.contains(t))
    }

    fn frontier_edge(
        &self,
        nodes: &BTreeSet<&'g SourceId>,
        degree: &BTreeMap<&'g SourceId, usize>,
        excluded: &BTreeSet<&EdgeId>,
    ) -> Option<(&'g EdgeId, &'g SourceId)> {
        let mut best: Option<(&EdgeId, &SourceId)> = None;
        for n in nodes {
            // a service in the tree is a leaf: it only grows while alone
            if self.view.g.is_service(n) && degree.get(n).copied().unwrap_or(0) > 0 {
                continue;
            }
            for (e, m) in self.view.neighbours(n) {
                if nodes.contains(m) || excluded.contains(e) {
                    continue;
                }
                if best.is_none_or(|(b, _)| *e < b) {
                    best = Some((e, m));
                }
            }
        }
        best
    }

    fn grow(
        &mut self,
        nodes: &mut BTreeSet<&'g SourceId>,
        edges: &mut BTreeSet<&'g EdgeId>,
        degree: &mut BTreeMap<&'g SourceId, usize>,
        excluded: &mut BTreeSet<&'g EdgeId>,
        cost: f64,
    ) {
        if cost > self.top.bound() + 1e-9 {
            return;
        }
        if self.terminals.iter().all(|t| nodes.contains(t)) {
            if self.leaves_ok(nodes, edges) && !nodes.iter().all(|n| self.view.g.is_service(n)) {
                let edge_ids: BTreeSet<EdgeId> = edges.iter().map(|e| (*e).clone()).collect();
                let exact = self.view.g.cost_of(&edge_ids).expect("edges resolve");
                self.top.offer(QueryTree {
                    nodes: nodes.iter().map(|n| (*n).clone()).collect(),
                    edges: edge_ids,
                    cost: exact,
                });
            }
            return;
        }
        if !self.reachable(nodes, excluded) {
            return;
        }
        let Some((e, m)) = self.frontier_edge(nodes, degree, excluded) else {
            return;
        };
        let (a, b) = self.view.g.edges[e].endpoints.nodes();
        // include e
        nodes.insert(m);
        edges.insert(e);
        *degree.entry(a).or_default() += 1;
        *degree.entry(b).or_default() += 1;
        self.grow(nodes, edges, degree, excluded, cost + self.view.cost(e));
        *degree.get_mut(a).unwrap() -= 1;
        *degree.get_mut(b).unwrap() -= 1;
        edges.remove(e);
        nodes.remove(m);
        // exclude e
        excluded.insert(e);
        self.grow(nodes, edges, degree, excluded, cost);
        excluded.remove(e);
    }
}

fn exact_on(view: &View, terminals: &BTreeSet<SourceId>, k: usize) -> Result<Vec<QueryTree>, GraphError> {
    let nodes = view.node_count(terminals);
    if nodes > EXACT_NODE_BOUND {
        return Err(GraphError::TooLarge {
            nodes,
            bound: EXACT_NODE_BOUND,
        });
    }
    if !view.connected(terminals) {
        return Err(GraphError::Disconnected);
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    // grow from a materialised terminal when there is one
    let root = terminals
        .iter()
        .find(|t| !view.g.is_service(t))
        .unwrap_or_else(|| terminals.iter().next().unwrap());
    let mut search = Search {
        view,
        terminals,
        top: TopK { k, best: Vec::new() },
    };
    let root: &SourceId = view.g.nodes.get(root).expect("terminal is a node");
    search.grow(
        &mut BTreeSet::from([root]),
        &mut BTreeSet::new(),
        &mut BTreeMap::new(),
        &mut BTreeSet::new(),
        0.0,
    );
    Ok(search.top.best)
}

/// The `k` cheapest valid trees spanning `terminals`, ties broken by the
/// sorted edge-id sequence.
pub fn steiner_topk_exact(
    graph: &SourceGraph,
    terminals: &BTreeSet<SourceId>,
    k: usize,
) -> Result<Vec<QueryTree>, GraphError> {
    check_terminals(graph, terminals)?;
    exact_on(&View::new(graph, |_| true), terminals, k)
}

/// Dijkstra from `sources` avoiding banned edges and never passing through a
/// service. Returns per-node distance and predecessor edge.
fn dijkstra<'g>(
    view: &View<'g>,
    sources: &BTreeSet<&'g SourceId>,
    banned_edges: &BTreeSet<&EdgeId>,
    banned_nodes: &BTreeSet<&SourceId>,
    blocked_services: &BTreeSet<&SourceId>,
) -> BTreeMap<&'g SourceId, (f64, Option<(&'g EdgeId, &'g SourceId)>)> {
    #[derive(PartialEq)]
    struct Item<'a>(f64, &'a SourceId);
    impl Eq for Item<'_> {}
    impl PartialOrd for Item<'_> {
        fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
            Some(self.cmp(o))
        }
    }
    impl Ord for Item<'_> {
        fn cmp(&self, o: &Self) -> Ordering {
            self.0.total_cmp(&o.0).then_with(|| self.1.cmp(o.1))
        }
    }
    let mut dist: BTreeMap<&SourceId, (f64, Option<(&EdgeId, &SourceId)>)> = BTreeMap::new();
    let mut heap = BinaryHeap::new();
    for s in sources {
        dist.insert(s, (0.0, None));
        heap.push(Reverse(Item(0.0, s)));
    }
    let mut done = BTreeSet::new();
    while let Some(Reverse(Item(d, n))) = heap.pop() {
        if !done.insert(n) {
            continue;
        }
        // services are dead ends unless they are where the path starts
        if view.g.is_service(n) && (!sources.contains(n) || blocked_services.contains(n)) {
            continue;
        }
        for (e, m) in view.neighbours(n) {
            if banned_edges.contains(e) || banned_nodes.contains(m) || done.contains(m) {
                continue;
            }
            let nd = d + view.cost(e);
            let better = match dist.get(m) {
                None => true,
                Some((old, Some((pe, _)))) => nd < *old || (nd == *old && *e < *pe),
                Some((_, None)) => false,
            };
            if better {
                dist.insert(m, (nd, Some((e, n))));
                heap.push(Reverse(Item(nd, m)));
            }
        }
    }
    dist
}

type Path<'g> = (f64, Vec<&'g EdgeId>, Vec<&'g SourceId>);

fn trace<'g>(
    dist: &BTreeMap<&'g SourceId, (f64, Option<(&'g EdgeId, &'g SourceId)>)>,
    target: &'g SourceId,
) -> Option<Path<'g>> {
    let (cost, _) = *dist.get(target)?;
    let mut edges = Vec::new();
    let mut nodes = vec![target];
    let mut cur = target;
    while let Some((_, Some((e, p)))) = dist.get(cur) {
        edges.push(*e);
        nodes.push(*p);
        cur = p;
    }
    edges.reverse();
    nodes.reverse();
    Some((cost, edges, nodes))
}

/// Up to `k` loopless shortest paths from `s` to `t` (Yen).
fn k_shortest_paths<'g>(view: &View<'g>, s: &'g SourceId, t: &'g SourceId, k: usize) -> Vec<Path<'g>> {
    let no_services: BTreeSet<&SourceId> = BTreeSet::new();
    let single = |src: &'g SourceId, be: &BTreeSet<&EdgeId>, bn: &BTreeSet<&SourceId>| {
        trace(&dijkstra(view, &BTreeSet::from([src]), be, bn, &no_services), t)
    };
    let Some(first) = single(s, &BTreeSet::new(), &BTreeSet::new()) else {
        return Vec::new();
    };
    let mut found: Vec<Path> = vec![first];
    let mut candidates: Vec<Path> = Vec::new();
    while found.len() < k {
        let last = found.last().unwrap().clone();
        for i in 0..last.1.len() {
            let spur = last.2[i];
            let root_edges = &last.1[..i];
            let root_nodes = &last.2[..i];
            let mut banned_edges: BTreeSet<&EdgeId> = BTreeSet::new();
            for p in &found {
                if p.1.len() > i && &p.1[..i] == root_edges {
                    banned_edges.insert(p.1[i]);
                }
            }
            let banned_nodes: BTreeSet<&SourceId> = root_nodes.iter().copied().collect();
            if view.g.is_service(spur) && spur != s {
                continue;
            }
            let Some((_, spur_edges, spur_nodes)) = single(spur, &banned_edges, &banned_nodes) else {
                continue;
            };
            let mut edges: Vec<&EdgeId> = root_edges.to_vec();
            edges.extend(spur_edges);
            let mut nodes: Vec<&SourceId> = root_nodes.to_vec();
            nodes.extend(spur_nodes);
            let cost: f64 = edges.iter().map(|e| view.cost(e)).sum();
            if !found.iter().chain(&candidates).any(|p| p.1 == edges) {
                candidates.push((cost, edges, nodes));
            }
        }
        if candidates.is_empty() {
            break;
        }
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        found.push(candidates.remove(0));
    }
    found
}

/// Shortest-path heuristic: start from `start`, repeatedly attach the
/// nearest missing terminal, then strip non-terminal leaves.
fn shortest_path_heuristic<'g>(
    view: &View<'g>,
    start: &'g SourceId,
    terminals: &BTreeSet<&'g SourceId>,
    banned: &BTreeSet<&EdgeId>,
) -> Option<BTreeSet<&'g EdgeId>> {
    let mut nodes: BTreeSet<&SourceId> = BTreeSet::from([start]);
    let mut edges: BTreeSet<&EdgeId> = BTreeSet::new();
    while terminals.iter().any(|t| !nodes.contains(t)) {
        // services already bound cannot be extended from
        let blocked: BTreeSet<&SourceId> = nodes
            .iter()
            .copied()
            .filter(|n| view.g.is_service(n) && (nodes.len() > 1))
            .collect();
        let dist = dijkstra(view, &nodes, banned, &BTreeSet::new(), &blocked);
        let next = terminals
            .iter()
            .filter(|t| !nodes.contains(*t))
            .filter_map(|t| dist.get(*t).map(|(d, _)| (*d, *t)))
            .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)))?;
        let (_, path_edges, path_nodes) = trace(&dist, next.1)?;
        edges.extend(path_edges);
        nodes.extend(path_nodes);
    }
    loop {
        let mut degree: BTreeMap<&SourceId, usize> = BTreeMap::new();
        for e in &edges {
            let (a, b) = view.g.edges[*e].endpoints.nodes();
            *degree.entry(a).or_default() += 1;
            *degree.entry(b).or_default() += 1;
        }
        let strip: Vec<&EdgeId> = edges
            .iter()
            .copied()
            .filter(|e| {
                let (a, b) = view.g.edges[*e].endpoints.nodes();
                (degree[a] == 1 && !terminals.contains(a)) || (degree[b] == 1 && !terminals.contains(b))
            })
            .collect();
        if strip.is_empty() {
            return Some(edges);
        }
        for e in strip {
            edges.remove(e);
        }
    }
}

/// Top-k search on a pruned candidate graph: the union of the three
/// shortest paths between every terminal pair plus cheap edges touching a
/// terminal. Small candidate graphs are searched exactly; larger ones fall
/// back to shortest-path heuristics with edge-ban variants.
pub fn steiner_topk_pruned(
    graph: &SourceGraph,
    terminals: &BTreeSet<SourceId>,
    k: usize,
) -> Result<Vec<QueryTree>, GraphError> {
    check_terminals(graph, terminals)?;
    let full = View::new(graph, |_| true);
    let term: Vec<&SourceId> = full
        .g
        .nodes
        .iter()
        .filter(|n| terminals.contains(*n))
        .collect();
    let mut keep: BTreeSet<&EdgeId> = BTreeSet::new();
    for (i, a) in term.iter().enumerate() {
        for b in &term[i + 1..] {
            for (_, edges, _) in k_shortest_paths(&full, a, b, PATHS_PER_PAIR) {
                keep.extend(edges);
            }
        }
    }
    for id in &full.edges {
        let e = &graph.edges[*id];
        if e.cost <= graph.config.edge_ceiling && terminals.iter().any(|t| e.endpoints.touches(t)) {
            keep.insert(id);
        }
    }
    let pruned = View::new(graph, |id| keep.contains(id));
    if !pruned.connected(terminals) {
        if full.node_count(terminals) <= EXACT_NODE_BOUND {
            return exact_on(&full, terminals, k);
        }
        return Err(GraphError::Disconnected);
    }
    if pruned.node_count(terminals) <= EXACT_NODE_BOUND {
        return exact_on(&pruned, terminals, k);
    }
    let term_set: BTreeSet<&SourceId> = term.iter().copied().collect();
    let mut top = TopK { k, best: Vec::new() };
    let mut seen: BTreeSet<BTreeSet<EdgeId>> = BTreeSet::new();
    let mut offer = |edges: BTreeSet<&EdgeId>, top: &mut TopK| {
        if !seen.insert(edges.iter().map(|e| (*e).clone()).collect()) {
            return;
        }
        let Ok(tree) = graph.tree(edges.into_iter().cloned(), terminals.iter().cloned()) else {
            return;
        };
        if graph.validate_tree(&tree).is_ok() {
            top.offer(tree);
        }
    };
    let none = BTreeSet::new();
    let mut bases = Vec::new();
    for t in &term {
        if let Some(edges) = shortest_path_heuristic(&pruned, t, &term_set, &none) {
            bases.push(edges.clone());
            offer(edges, &mut top);
        }
    }
    for base in bases {
        for e in &base {
            let banned = BTreeSet::from([*e]);
            for t in &term {
                if let Some(edges) = shortest_path_heuristic(&pruned, t, &term_set, &banned) {
                    offer(edges, &mut top);
                }
            }
        }
    }
    Ok(top.best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sourcegraph::tests::graph;

    fn terms(t: &[&str]) -> BTreeSet<SourceId> {
        t.iter().map(|s| SourceId::from(*s)).collect()
    }

    fn summary(trees: &[QueryTree]) -> Vec<(Vec<String>, f64)> {
        trees
            .iter()
            .map(|t| (t.edges.iter().map(|e| e.to_string()).collect(), t.cost))
            .collect()
    }

    fn four() -> SourceGraph {
        graph(
            &["A", "B", "C", "D"],
            &[("A", "B", 1.0), ("B", "C", 2.0), ("A", "C", 4.0), ("C", "D", 1.0), ("B", "D", 5.0)],
        )
    }

    #[test]
    fn four_node_example() {
        let got = steiner_topk_exact(&four(), &terms(&["A", "C"]), 2).unwrap();
        assert_eq!(
            summary(&got),
            vec![(vec!["AB".to_string(), "BC".into()], 3.0), (vec!["AC".to_string()], 4.0)]
        );
        let pruned = steiner_topk_pruned(&four(), &terms(&["A", "C"]), 2).unwrap();
        assert_eq!(pruned, got);
    }

    #[test]
    fn single_terminal_is_a_trivial_tree() {
        let got = steiner_topk_exact(&four(), &terms(&["B"]), 3).unwrap();
        assert_eq!(got, vec![QueryTree::single("B".into())]);
        assert_eq!(steiner_topk_pruned(&four(), &terms(&["B"]), 3).unwrap(), got);
    }

    #[test]
    fn disconnected_terminals() {
        let g = graph(&["A", "B", "C"], &[("A", "B", 1.0)]);
        assert!(matches!(steiner_topk_exact(&g, &terms(&["A", "C"]), 1), Err(GraphError::Disconnected)));
        assert!(matches!(steiner_topk_pruned(&g, &terms(&["A", "C"]), 1), Err(GraphError::Disconnected)));
        assert!(matches!(steiner_topk_exact(&g, &terms(&[]), 1), Err(GraphError::NoTerminals)));
        assert!(matches!(steiner_topk_exact(&g, &terms(&["Q"]), 1), Err(GraphError::UnknownNode(_))));
    }

    #[test]
    fn fewer_trees_than_asked() {
        let g = graph(&["A", "B"], &[("A", "B", 1.0)]);
        assert_eq!(steiner_topk_exact(&g, &terms(&["A", "B"]), 5).unwrap().len(), 1);
    }

    #[test]
    fn exact_refuses_large_graphs() {
        let names: Vec<String> = (0..14).map(|i| format!("N{i:02}")).collect();
        let n: Vec<&str> = names.iter().map(String::as_str).collect();
        let links: Vec<(&str, &str, f64)> = (0..13).map(|i| (n[i], n[i + 1], 1.0)).collect();
        let g = graph(&n, &links);
        assert!(matches!(
            steiner_topk_exact(&g, &terms(&["N00", "N13"]), 1),
            Err(GraphError::TooLarge { nodes: 14, .. })
        ));
        let got = steiner_topk_pruned(&g, &terms(&["N00", "N13"]), 1).unwrap();
        assert_eq!(got[0].cost, 13.0);
        g.validate_tree(&got[0]).unwrap();
    }

    #[test]
    fn zero_cost_ties_keep_paths_simple() {
        let g = graph(
            &["A", "B", "C", "D"],
            &[("A", "B", 0.0), ("B", "C", 0.0), ("A", "C", 0.0), ("C", "D", 1.0), ("B", "D", 1.0)],
        );
        let v = View::new(&g, |_| true);
        let (a, d) = (g.nodes.get(&SourceId::from("A")).unwrap(), g.nodes.get(&SourceId::from("D")).unwrap());
        for (cost, edges, nodes) in k_shortest_paths(&v, a, d, 3) {
            assert_eq!(cost, 1.0);
            assert_eq!(nodes.len(), edges.len() + 1);
            assert_eq!(nodes.iter().collect::<BTreeSet<_>>().len(), nodes.len());
        }
        let got = steiner_topk_pruned(&g, &terms(&["A", "D"]), 3).unwrap();
        assert_eq!(got, steiner_topk_exact(&g, &terms(&["A", "D"]), 3).unwrap());
    }

    #[test]
    fn yen_orders_paths() {
        let g = four();
        let v = View::new(&g, |_| true);
        let a = SourceId::from("A");
        let c = SourceId::from("C");
        let (a, c) = (g.nodes.get(&a).unwrap(), g.nodes.get(&c).unwrap());
        let paths = k_shortest_paths(&v, a, c, 3);
        let costs: Vec<f64> = paths.iter().map(|p| p.0).collect();
        assert_eq!(costs, vec![3.0, 4.0, 7.0]);
    }
}
