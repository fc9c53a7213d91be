use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{steiner_topk_pruned, GraphError, QueryTree, SourceGraph};
use crate::catalog::Catalog;
use crate::engine::similarity::{normalized_similarity, tuple_similarity};
use crate::engine::{evaluate, ResultTable};
use crate::services::ServiceRegistry;
use crate::SourceId;

/// A pasted value and, when known, the source attribute it was copied from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributedCell {
    pub value: String,
    #[serde(default)]
    pub source: Option<SourceId>,
    #[serde(default)]
    pub attribute: Option<String>,
}

impl AttributedCell {
    pub fn new(value: impl Into<String>, source: impl Into<SourceId>, attribute: impl Into<String>) -> Self {
        AttributedCell {
            value: value.into(),
            source: Some(source.into()),
            attribute: Some(attribute.into()),
        }
    }

    pub fn bare(value: impl Into<String>) -> Self {
        AttributedCell {
            value: value.into(),
            source: None,
            attribute: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PastedTuple {
    pub cells: Vec<AttributedCell>,
}

/// Largest candidate list fetched while looking for trees that reproduce
/// the tuples.
const MAX_CANDIDATES: usize = 64;

/// Resolves the attribution of a cell, checking that the value occurs in the
/// claimed column, or finding the first column that holds it. A cell with a
/// source but no attribute is looked up in that source only.
pub fn resolve_attribution(
    cell: &AttributedCell,
    catalog: &Catalog,
    threshold: f64,
) -> Result<(SourceId, String), GraphError> {
    let holds = |source: &SourceId, attribute: &str| {
        let (Some(desc), Some(table)) = (catalog.source(source), catalog.table(source)) else {
            return false;
        };
        let Some(pos) = desc.schema.iter().position(|a| a.name.eq_ignore_ascii_case(attribute)) else {
            return false;
        };
        table
            .rows
            .iter()
            .any(|r| r[pos].as_deref().is_some_and(|v| normalized_similarity(v, &cell.value) >= threshold))
    };
    match (&cell.source, &cell.attribute) {
        (Some(s), Some(a)) if catalog.is_service(s) => {
            let sig = catalog.service(s).ok_or_else(|| GraphError::UnknownNode(s.clone()))?;
            if sig.outputs.iter().any(|o| o.name.eq_ignore_ascii_case(a)) {
                Ok((s.clone(), a.clone()))
            } else {
                Err(GraphError::ValueNotFound { value: cell.value.clone() })
            }
        }
        (Some(s), Some(a)) => {
            if holds(s, a) {
                Ok((s.clone(), a.clone()))
            } else {
                Err(GraphError::ValueNotFound { value: cell.value.clone() })
            }
        }
        (Some(s), None) => {
            let desc = catalog.source(s).ok_or_else(|| GraphError::UnknownNode(s.clone()))?;
            desc.schema
                .iter()
                .find(|a| holds(s, &a.name))
                .map(|a| (s.clone(), a.name.clone()))
                .ok_or_else(|| GraphError::ValueNotFound { value: cell.value.clone() })
        }
        _ => {
            for (id, desc) in &catalog.sources {
                if catalog.is_service(id) {
                    continue;
                }
                if let Some(a) = desc.schema.iter().find(|a| holds(id, &a.name)) {
                    return Ok((id.clone(), a.name.clone()));
                }
            }
            Err(GraphError::ValueNotFound { value: cell.value.clone() })
        }
    }
}

fn contains(table: &ResultTable, cols: &[(SourceId, String)], tuple: &PastedTuple, threshold: f64) -> bool {
    let Ok(idx) = cols
        .iter()
        .map(|(s, a)| table.column(s, a))
        .collect::<Result<Vec<usize>, _>>()
    else {
        return false;
    };
    let pasted: Vec<_> = tuple.cells.iter().map(|c| Some(c.value.clone())).collect();
    table.rows.iter().any(|r| {
        let got: Vec<_> = idx.iter().map(|&i| r.cells[i].clone()).collect();
        tuple_similarity(&got, &pasted) >= threshold
    })
}

/// The cheapest queries whose results contain every pasted tuple. Sources
/// the cells were copied from are the Steiner terminals; candidate trees
/// that do not reproduce the tuples are dropped before ranking.
pub fn explain_pasted_tuples(
    tuples: &[PastedTuple],
    graph: &SourceGraph,
    catalog: &Catalog,
    services: &ServiceRegistry,
    k: usize,
    link_threshold: f64,
) -> Result<Vec<QueryTree>, GraphError> {
    let mut attributions = Vec::with_capacity(tuples.len());
    let mut terminals = BTreeSet::new();
    for t in tuples {
        let cols: Vec<(SourceId, String)> = t
            .cells
            .iter()
            .map(|c| resolve_attribution(c, catalog, link_threshold))
            .collect::<Result<_, _>>()?;
        terminals.extend(cols.iter().map(|(s, _)| s.clone()));
        attributions.push(cols);
    }
    if terminals.is_empty() {
        return Err(GraphError::NoTerminals);
    }
    let mut m = k.max(1);
    loop {
        let candidates = steiner_topk_pruned(graph, &terminals, m)?;
        let exhausted = candidates.len() < m || m >= MAX_CANDIDATES;
        let mut kept = Vec::new();
        for tree in candidates {
            let table = match evaluate(&tree, graph, catalog, services, link_threshold) {
                Ok(t) => t,
                Err(e) => {
                    log::debug!("candidate {} failed to evaluate: {e}", tree.id());
                    continue;
                }
            };
            if tuples
                .iter()
                .zip(&attributions)
                .all(|(t, cols)| contains(&table, cols, t, link_threshold))
            {
                kept.push(tree);
                if kept.len() == k {
                    return Ok(kept);
                }
            }
        }
        if exhausted {
            if kept.is_empty() {
                return Err(GraphError::NoExplanation);
            }
            return Ok(kept);
        }
        m = (m * 2).min(MAX_CANDIDATES);
    }
}
