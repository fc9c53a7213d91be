//! Integration learner: the weighted association graph over sources and
//! services, top-k Steiner search for candidate queries, and margin-based
//! cost updates from feedback.

mod explain;
mod mira;
mod steiner;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, SourceKind};
use crate::{EdgeId, SourceId};

pub use explain::{explain_pasted_tuples, resolve_attribution, AttributedCell, PastedTuple};
pub use mira::{mira_update, ConstraintOutcome, RankingConstraint};
pub use steiner::{steiner_topk_exact, steiner_topk_pruned, EXACT_NODE_BOUND};

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("unknown node `{0}`")]
    UnknownNode(SourceId),
    #[error("unknown edge `{0}`")]
    UnknownEdge(EdgeId),
    #[error("invalid query tree: {0}")]
    InvalidTree(String),
    #[error("no terminals given")]
    NoTerminals,
    #[error("terminals are not connected in the graph")]
    Disconnected,
    #[error("graph has {nodes} nodes, exact search handles at most {bound}")]
    TooLarge { nodes: usize, bound: usize },
    #[error("constraint {0} cannot be satisfied: {1}")]
    Unsatisfiable(usize, String),
    #[error("no candidate query reproduces the pasted tuples")]
    NoExplanation,
    #[error("pasted value `{value}` was not found in any source")]
    ValueNotFound { value: String },
    #[error(transparent)]
    Engine(#[from] Box<crate::engine::EngineError>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    /// θ_e: edges costlier than this are never proposed.
    pub edge_ceiling: f64,
    /// θ_q: queries costlier than this are never proposed.
    pub query_ceiling: f64,
    /// c0: cost of a freshly derived edge.
    pub default_cost: f64,
    /// γ: margin a preferred query must win by.
    pub margin: f64,
    pub k: usize,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            edge_ceiling: 5.0,
            query_ceiling: 10.0,
            default_cost: 1.0,
            margin: 1.0,
            k: 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeKind {
    Equijoin,
    ForeignKey,
    ServiceCall,
    RecordLink,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeOrigin {
    Default,
    Declared,
    Learned,
}

/// What an edge connects. Link pairs are `(left attribute, right attribute)`;
/// binding pairs are `(source attribute, service input)` in input order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Endpoints {
    Link {
        left: SourceId,
        right: SourceId,
        pairs: Vec<(String, String)>,
    },
    Binding {
        source: SourceId,
        service: SourceId,
        bindings: Vec<(String, String)>,
    },
}

impl Endpoints {
    pub fn nodes(&self) -> (&SourceId, &SourceId) {
        match self {
            Endpoints::Link { left, right, .. } => (left, right),
            Endpoints::Binding { source, service, .. } => (source, service),
        }
    }

    pub fn touches(&self, node: &SourceId) -> bool {
        let (a, b) = self.nodes();
        a == node || b == node
    }

    pub fn other(&self, node: &SourceId) -> Option<&SourceId> {
        let (a, b) = self.nodes();
        if a == node {
            Some(b)
        } else if b == node {
            Some(a)
        } else {
            None
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssociationEdge {
    pub id: EdgeId,
    pub endpoints: Endpoints,
    pub kind: EdgeKind,
    pub cost: f64,
    pub origin: EdgeOrigin,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceGraph {
    pub nodes: BTreeSet<SourceId>,
    pub services: BTreeSet<SourceId>,
    pub edges: BTreeMap<EdgeId, AssociationEdge>,
    pub config: GraphConfig,
}

/// A candidate query: a tree of sources joined by graph edges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryTree {
    pub nodes: BTreeSet<SourceId>,
    pub edges: BTreeSet<EdgeId>,
    pub cost: f64,
}

impl QueryTree {
    pub fn single(node: SourceId) -> Self {
        QueryTree {
            nodes: BTreeSet::from([node]),
            edges: BTreeSet::new(),
            cost: 0.0,
        }
    }

    /// Content-derived identifier, stable across sessions.
    pub fn id(&self) -> String {
        if self.edges.is_empty() {
            let nodes: Vec<&str> = self.nodes.iter().map(SourceId::as_str).collect();
            format!("q[{}]", nodes.join(","))
        } else {
            let edges: Vec<&str> = self.edges.iter().map(EdgeId::as_str).collect();
            format!("q[{}]", edges.join("|"))
        }
    }

    pub(crate) fn rank_key(&self) -> (f64, Vec<&EdgeId>) {
        (self.cost, self.edges.iter().collect())
    }
}

pub(crate) fn rank_order(a: &QueryTree, b: &QueryTree) -> std::cmp::Ordering {
    let (ca, ea) = a.rank_key();
    let (cb, eb) = b.rank_key();
    ca.total_cmp(&cb).then_with(|| ea.cmp(&eb)).then_with(|| a.nodes.cmp(&b.nodes))
}

impl SourceGraph {
    pub fn empty(config: GraphConfig) -> Self {
        SourceGraph {
            nodes: BTreeSet::new(),
            services: BTreeSet::new(),
            edges: BTreeMap::new(),
            config,
        }
    }

    /// Node set of the catalog with no edges yet.
    pub fn from_catalog_nodes(catalog: &Catalog, config: GraphConfig) -> Self {
        SourceGraph {
            nodes: catalog.sources.keys().cloned().collect(),
            services: catalog
                .sources
                .values()
                .filter(|d| d.kind == SourceKind::Service)
                .map(|d| d.id.clone())
                .collect(),
            edges: BTreeMap::new(),
            config,
        }
    }

    pub fn edge(&self, id: &EdgeId) -> Result<&AssociationEdge, GraphError> {
        self.edges.get(id).ok_or_else(|| GraphError::UnknownEdge(id.clone()))
    }

    pub fn is_service(&self, node: &SourceId) -> bool {
        self.services.contains(node)
    }

    /// Sum of edge costs, added in edge-id order so the result is reproducible.
    pub fn cost_of<'a>(&self, edges: impl IntoIterator<Item = &'a EdgeId>) -> Result<f64, GraphError> {
        let mut ids: Vec<&EdgeId> = edges.into_iter().collect();
        ids.sort();
        ids.iter().try_fold(0.0, |acc, id| Ok(acc + self.edge(id)?.cost))
    }

    /// Builds a tree from edges (plus any isolated `extra` node), costed
    /// against this graph. Validity is not checked.
    pub fn tree(
        &self,
        edges: impl IntoIterator<Item = EdgeId>,
        extra: impl IntoIterator<Item = SourceId>,
    ) -> Result<QueryTree, GraphError> {
        let edges: BTreeSet<EdgeId> = edges.into_iter().collect();
        let mut nodes: BTreeSet<SourceId> = extra.into_iter().collect();
        for id in &edges {
            let (a, b) = self.edge(id)?.endpoints.nodes();
            nodes.insert(a.clone());
            nodes.insert(b.clone());
        }
        let cost = self.cost_of(&edges)?;
        Ok(QueryTree { nodes, edges, cost })
    }

    /// Re-costs a tree against the current edge costs.
    pub fn recost(&self, tree: &QueryTree) -> Result<QueryTree, GraphError> {
        Ok(QueryTree {
            cost: self.cost_of(&tree.edges)?,
            ..tree.clone()
        })
    }

    /// Checks the tree invariants: resolvable members, connected and acyclic,
    /// services appear only as leaves bound by exactly one edge, at least one
    /// materialised source, and a cost equal to the edge sum.
    pub fn validate_tree(&self, tree: &QueryTree) -> Result<(), GraphError> {
        let invalid = |m: String| Err(GraphError::InvalidTree(m));
        if tree.nodes.is_empty() {
            return invalid("no nodes".into());
        }
        for n in &tree.nodes {
            if !self.nodes.contains(n) {
                return Err(GraphError::UnknownNode(n.clone()));
            }
        }
        if tree.edges.len() + 1 != tree.nodes.len() {
            return invalid(format!("{} edges for {} nodes", tree.edges.len(), tree.nodes.len()));
        }
        let mut degree: BTreeMap<&SourceId, usize> = BTreeMap::new();
        let mut parent: BTreeMap<&SourceId, &SourceId> = tree.nodes.iter().map(|n| (n, n)).collect();
        fn find<'a>(p: &mut BTreeMap<&'a SourceId, &'a SourceId>, mut x: &'a SourceId) -> &'a SourceId {
            while p[x] != x {
                x = p[x];
            }
            x
        }
        for id in &tree.edges {
            let e = self.edge(id)?;
            let (a, b) = e.endpoints.nodes();
            if !tree.nodes.contains(a) || !tree.nodes.contains(b) {
                return invalid(format!("edge `{id}` leaves the tree"));
            }
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra == rb {
                return invalid(format!("edge `{id}` closes a cycle"));
            }
            parent.insert(ra, rb);
            *degree.entry(a).or_default() += 1;
            *degree.entry(b).or_default() += 1;
        }
        for n in &tree.nodes {
            if self.is_service(n) && degree.get(n).copied().unwrap_or(0) != 1 {
                return invalid(format!("service `{n}` must be bound by exactly one edge"));
            }
        }
        if tree.nodes.iter().all(|n| self.is_service(n)) {
            return invalid("a query needs at least one materialised source".into());
        }
        let cost = self.cost_of(&tree.edges)?;
        if cost != tree.cost {
            return invalid(format!("cost {} differs from edge sum {cost}", tree.cost));
        }
        Ok(())
    }

    /// One-edge extensions of `current`, cheapest first.
    pub fn column_completions(&self, current: &QueryTree) -> Vec<(EdgeId, QueryTree)> {
        let mut out = Vec::new();
        for (id, e) in &self.edges {
            if current.edges.contains(id) || e.cost > self.config.edge_ceiling {
                continue;
            }
            let (a, b) = e.endpoints.nodes();
            let new_node = match (current.nodes.contains(a), current.nodes.contains(b)) {
                (true, false) => b,
                (false, true) => a,
                _ => continue,
            };
            let mut ext = current.clone();
            ext.nodes.insert(new_node.clone());
            ext.edges.insert(id.clone());
            let Ok(cost) = self.cost_of(&ext.edges) else { continue };
            ext.cost = cost;
            if cost > self.config.query_ceiling || self.validate_tree(&ext).is_err() {
                continue;
            }
            out.push((id.clone(), ext));
        }
        out.sort_by(|(ia, a), (ib, b)| a.cost.total_cmp(&b.cost).then_with(|| ia.cmp(ib)));
        out
    }

    /// Graphviz rendering for inspection.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("graph sources {\n");
        for n in &self.nodes {
            let shape = if self.is_service(n) { "box" } else { "ellipse" };
            let _ = writeln!(s, "  \"{n}\" [shape={shape}];");
        }
        for e in self.edges.values() {
            let (a, b) = e.endpoints.nodes();
            let kind = match e.kind {
                EdgeKind::Equijoin => "eq",
                EdgeKind::ForeignKey => "fk",
                EdgeKind::ServiceCall => "svc",
                EdgeKind::RecordLink => "rl",
            };
            let _ = writeln!(s, "  \"{a}\" -- \"{b}\" [label=\"{kind} {:.3}\", tooltip=\"{}\"];", e.cost, e.id);
        }
        s.push_str("}\n");
        s
    }
}

fn same_name(a: &str, b: &str) -> bool {
    a.trim().eq_ignore_ascii_case(b.trim())
}

/// Association edges implied by the catalog: shared typed attributes,
/// declared links and service bindings, all at the default cost.
pub fn derive_edges(catalog: &Catalog) -> Vec<AssociationEdge> {
    let c0 = catalog.graph.config.default_cost;
    let mut edges = Vec::new();
    let tables: Vec<_> = catalog.sources.values().filter(|d| d.kind != SourceKind::Service).collect();
    for (i, a) in tables.iter().enumerate() {
        for b in &tables[i + 1..] {
            let mut eq = Vec::new();
            let mut rl = Vec::new();
            for x in &a.schema {
                for y in &b.schema {
                    if x.semantic_type.is_none() || x.semantic_type != y.semantic_type {
                        continue;
                    }
                    let pair = (x.name.clone(), y.name.clone());
                    if same_name(&x.name, &y.name) {
                        eq.push(pair);
                    } else {
                        rl.push(pair);
                    }
                }
            }
            let link = |prefix: &str, kind, pairs| AssociationEdge {
                id: EdgeId::new(format!("{prefix}:{}~{}", a.id, b.id)),
                endpoints: Endpoints::Link {
                    left: a.id.clone(),
                    right: b.id.clone(),
                    pairs,
                },
                kind,
                cost: c0,
                origin: EdgeOrigin::Default,
            };
            if !eq.is_empty() {
                edges.push(link("eq", EdgeKind::Equijoin, eq));
            }
            if !rl.is_empty() {
                edges.push(link("rl", EdgeKind::RecordLink, rl));
            }
        }
    }
    for (x, y) in &catalog.declared_links {
        let (l, r) = if x.source <= y.source { (x, y) } else { (y, x) };
        edges.push(AssociationEdge {
            id: EdgeId::new(format!("fk:{}.{}~{}.{}", l.source, l.attribute, r.source, r.attribute)),
            endpoints: Endpoints::Link {
                left: l.source.clone(),
                right: r.source.clone(),
                pairs: vec![(l.attribute.clone(), r.attribute.clone())],
            },
            kind: EdgeKind::ForeignKey,
            cost: c0,
            origin: EdgeOrigin::Declared,
        });
    }
    for (service, sig) in &catalog.services {
        for src in &tables {
            let mut used = BTreeSet::new();
            let mut bindings = Vec::new();
            for input in &sig.inputs {
                let candidates = src
                    .schema
                    .iter()
                    .filter(|a| a.semantic_type.is_some() && a.semantic_type == input.semantic_type)
                    .filter(|a| !used.contains(&a.position));
                let chosen = candidates.min_by_key(|a| (!same_name(&a.name, &input.name), a.position));
                match chosen {
                    Some(a) => {
                        used.insert(a.position);
                        bindings.push((a.name.clone(), input.name.clone()));
                    }
                    None => break,
                }
            }
            if bindings.len() == sig.inputs.len() {
                edges.push(AssociationEdge {
                    id: EdgeId::new(format!("svc:{}>{}", src.id, service)),
                    endpoints: Endpoints::Binding {
                        source: src.id.clone(),
                        service: service.clone(),
                        bindings,
                    },
                    kind: EdgeKind::ServiceCall,
                    cost: c0,
                    origin: EdgeOrigin::Default,
                });
            }
        }
    }
    edges.sort_by(|a, b| a.id.cmp(&b.id));
    edges
}
