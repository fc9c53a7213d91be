use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{EngineError, ResultRow};
use crate::catalog::Catalog;
use crate::services::ServiceRegistry;
use crate::{EdgeId, RowId, SourceId, Value};

/// Identifies one service answer: the call and which candidate was used.
/// `candidate` is `None` when the call produced nothing for the row.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CallFingerprint {
    pub service: SourceId,
    pub inputs: Vec<Value>,
    pub candidate: Option<usize>,
}

/// How a result tuple was derived.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum ProvExpr {
    Leaf {
        source: SourceId,
        row: RowId,
    },
    /// Cells of `left` followed by cells of `right`.
    Join {
        edge: EdgeId,
        left: Box<ProvExpr>,
        right: Box<ProvExpr>,
    },
    /// Cells of `input` followed by the service outputs.
    ServiceCall {
        edge: EdgeId,
        input: Box<ProvExpr>,
        call: CallFingerprint,
    },
    /// `child` laid out in a union schema: output column `i` takes child
    /// column `layout[i]`, or null.
    UnionBranch {
        query: String,
        layout: Vec<Option<usize>>,
        child: Box<ProvExpr>,
    },
    Alt {
        alternatives: Vec<ProvExpr>,
    },
}

impl ProvExpr {
    /// Wraps several derivations of the same tuple, flattening nested
    /// alternatives and dropping duplicates.
    pub fn alt(derivations: impl IntoIterator<Item = ProvExpr>) -> ProvExpr {
        let mut set = BTreeSet::new();
        for d in derivations {
            match d {
                ProvExpr::Alt { alternatives } => set.extend(alternatives),
                other => {
                    set.insert(other);
                }
            }
        }
        let mut alternatives: Vec<ProvExpr> = set.into_iter().collect();
        if alternatives.len() == 1 {
            alternatives.pop().unwrap()
        } else {
            ProvExpr::Alt { alternatives }
        }
    }

    /// Query ids named by union branches anywhere in the expression.
    pub fn queries(&self, out: &mut BTreeSet<String>) {
        match self {
            ProvExpr::Leaf { .. } => {}
            ProvExpr::Join { left, right, .. } => {
                left.queries(out);
                right.queries(out);
            }
            ProvExpr::ServiceCall { input, .. } => input.queries(out),
            ProvExpr::UnionBranch { query, child, .. } => {
                out.insert(query.clone());
                child.queries(out);
            }
            ProvExpr::Alt { alternatives } => alternatives.iter().for_each(|a| a.queries(out)),
        }
    }

    /// Every source row the tuple depends on.
    pub fn leaves(&self, out: &mut BTreeSet<(SourceId, RowId)>) {
        match self {
            ProvExpr::Leaf { source, row } => {
                out.insert((source.clone(), *row));
            }
            ProvExpr::Join { left, right, .. } => {
                left.leaves(out);
                right.leaves(out);
            }
            ProvExpr::ServiceCall { input, .. } => input.leaves(out),
            ProvExpr::UnionBranch { child, .. } => child.leaves(out),
            ProvExpr::Alt { alternatives } => alternatives.iter().for_each(|a| a.leaves(out)),
        }
    }

    /// Node/edge rendering for explanation views. Edges follow the data,
    /// from an input to the operator that consumes it.
    pub fn to_graph(&self) -> ProvGraph {
        let mut g = ProvGraph::default();
        self.push(&mut g);
        g
    }

    fn push(&self, g: &mut ProvGraph) -> usize {
        let id = g.nodes.len();
        let (kind, label, detail) = match self {
            ProvExpr::Leaf { source, row } => ("leaf", source.to_string(), serde_json::json!({ "row": row })),
            ProvExpr::Join { edge, .. } => ("join", edge.to_string(), serde_json::Value::Null),
            ProvExpr::ServiceCall { edge, call, .. } => (
                "service_call",
                call.service.to_string(),
                serde_json::json!({ "edge": edge, "inputs": call.inputs, "candidate": call.candidate }),
            ),
            ProvExpr::UnionBranch { query, .. } => ("union_branch", query.clone(), serde_json::Value::Null),
            ProvExpr::Alt { .. } => ("alt", String::from("alternatives"), serde_json::Value::Null),
        };
        g.nodes.push(ProvNode {
            id,
            kind: kind.to_string(),
            label,
            detail,
        });
        let children: Vec<&ProvExpr> = match self {
            ProvExpr::Leaf { .. } => vec![],
            ProvExpr::Join { left, right, .. } => vec![left, right],
            ProvExpr::ServiceCall { input, .. } => vec![input],
            ProvExpr::UnionBranch { child, .. } => vec![child],
            ProvExpr::Alt { alternatives } => alternatives.iter().collect(),
        };
        for c in children {
            let cid = c.push(g);
            g.edges.push((cid, id));
        }
        id
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProvNode {
    pub id: usize,
    pub kind: String,
    pub label: String,
    #[serde(skip_serializing_if = "serde_json::Value::is_null", default)]
    pub detail: serde_json::Value,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProvGraph {
    pub nodes: Vec<ProvNode>,
    pub edges: Vec<(usize, usize)>,
}

/// Recomputes the tuple a provenance expression describes from catalog rows
/// and cached service answers. No service is called.
pub fn replay(prov: &ProvExpr, catalog: &Catalog, services: &ServiceRegistry) -> Result<Vec<Value>, EngineError> {
    match prov {
        ProvExpr::Leaf { source, row } => catalog
            .table(source)
            .and_then(|t| t.row(*row))
            .map(<[Value]>::to_vec)
            .ok_or_else(|| EngineError::DanglingLeaf {
                source_id: source.clone(),
                row: *row,
            }),
        ProvExpr::Join { left, right, .. } => {
            let mut cells = replay(left, catalog, services)?;
            cells.extend(replay(right, catalog, services)?);
            Ok(cells)
        }
        ProvExpr::ServiceCall { input, call, .. } => {
            let mut cells = replay(input, catalog, services)?;
            let width = catalog
                .service(&call.service)
                .ok_or_else(|| EngineError::UnknownSource(call.service.clone()))?
                .outputs
                .len();
            match call.candidate {
                None => cells.extend(std::iter::repeat_n(None, width)),
                Some(i) => {
                    let answers =
                        services
                            .cached(&call.service, &call.inputs)
                            .ok_or_else(|| EngineError::EvictedCache {
                                service: call.service.clone(),
                                inputs: call.inputs.clone(),
                            })?;
                    let out = answers.get(i).ok_or_else(|| EngineError::EvictedCache {
                        service: call.service.clone(),
                        inputs: call.inputs.clone(),
                    })?;
                    cells.extend(out.iter().cloned());
                }
            }
            Ok(cells)
        }
        ProvExpr::UnionBranch { layout, child, .. } => {
            let cells = replay(child, catalog, services)?;
            Ok(layout.iter().map(|i| i.and_then(|i| cells.get(i).cloned().flatten())).collect())
        }
        ProvExpr::Alt { alternatives } => {
            let mut iter = alternatives.iter();
            let first = replay(iter.next().ok_or(EngineError::AltMismatch)?, catalog, services)?;
            for a in iter {
                if replay(a, catalog, services)? != first {
                    return Err(EngineError::AltMismatch);
                }
            }
            Ok(first)
        }
    }
}

/// Groups result rows by the queries that produced them. A row reached by
/// two queries is listed under both.
pub fn responsible_queries(rows: &[ResultRow]) -> Result<BTreeMap<String, Vec<usize>>, EngineError> {
    let mut out: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, row) in rows.iter().enumerate() {
        let mut ids = row.queries.clone();
        row.prov.queries(&mut ids);
        if ids.is_empty() {
            return Err(EngineError::ProvenanceMissing(i));
        }
        for q in ids {
            out.entry(q).or_default().push(i);
        }
    }
    Ok(out)
}
