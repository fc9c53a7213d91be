//! Turns a CSV, TSV or HTML document into a catalog source.

use std::collections::BTreeSet;

use crate::catalog::{AttributeSpec, Catalog, CatalogError, MaterializedTable, Origin, SourceDescriptor, SourceKind, StoredDocument};
use crate::extractor::{apply_rule, infer_document_model, DocumentFormat, DocumentModel, ExtractError, ExtractionRule};
use crate::typist::recognize_column;
use crate::SourceId;

pub const ALL_RECORDS_EXTRACTOR: &str = "all-records";

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
}

/// Source id for a document name: the file stem, lowercased, with runs of
/// other characters turned into `-`.
pub fn source_id_for(name: &str) -> SourceId {
    let stem = std::path::Path::new(name)
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or(name);
    let mut id = String::new();
    for ch in stem.chars() {
        if ch.is_ascii_alphanumeric() || ch == '_' {
            id.push(ch.to_ascii_lowercase());
        } else if !id.ends_with('-') {
            id.push('-');
        }
    }
    let id = id.trim_matches('-');
    SourceId::from(if id.is_empty() { "document" } else { id })
}

fn column_names(model: &DocumentModel) -> Vec<String> {
    let mut seen = BTreeSet::new();
    (0..model.arity)
        .map(|i| {
            let base = model
                .header
                .as_ref()
                .and_then(|h| h.get(i))
                .map(|h| h.trim().to_string())
                .filter(|h| !h.is_empty())
                .unwrap_or_else(|| format!("Column {}", i + 1));
            let mut name = base.clone();
            let mut n = 2;
            while !seen.insert(name.to_lowercase()) {
                name = format!("{base} {n}");
                n += 1;
            }
            name
        })
        .collect()
}

/// Registers every record of the document as a row of source `id`, with
/// column types recognised against the catalog's type models. The document
/// itself is kept so later pastes can be generalised against it.
pub fn ingest_document(
    catalog: &mut Catalog,
    id: SourceId,
    format: DocumentFormat,
    content: &[u8],
    origin: Origin,
    type_threshold: f64,
) -> Result<SourceId, IngestError> {
    let model = infer_document_model(content, format)?;
    if model.records.is_empty() {
        return Err(ExtractError::NoRecords.into());
    }
    let table = apply_rule(&ExtractionRule::all_records(&model), &model)?;
    let schema = column_names(&model)
        .into_iter()
        .enumerate()
        .map(|(i, name)| {
            let values: Vec<&str> = table.rows.iter().filter_map(|r| r[i].as_deref()).collect();
            let semantic_type = recognize_column(&values, catalog.types.values(), type_threshold)
                .ok()
                .and_then(|r| r.accepted_top().map(|h| h.type_id.clone()));
            AttributeSpec {
                name,
                semantic_type,
                position: i,
            }
        })
        .collect();
    let mut descriptor = SourceDescriptor::new(id.clone(), SourceKind::Document, schema, origin);
    descriptor.extractor_id = Some(ALL_RECORDS_EXTRACTOR.to_string());
    catalog.register_source(descriptor, MaterializedTable::new(id.clone(), table.rows))?;
    catalog.store_document(
        &id,
        StoredDocument {
            format,
            content: model.raw,
        },
    )?;
    Ok(id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::typist::learn_type;

    #[test]
    fn csv_becomes_a_typed_source() {
        let mut c = Catalog::default();
        c.register_type(learn_type("Zip5", &["19104", "33063", "90292"]).unwrap());
        let doc = "Site,Zip\nA,19103\nB,33066\nC,90210\n";
        let id = ingest_document(&mut c, "sites".into(), DocumentFormat::Csv, doc.as_bytes(), Origin::Declared, 0.5)
            .unwrap();
        let d = c.source(&id).unwrap();
        let names: Vec<&str> = d.schema.iter().map(|a| a.name.as_str()).collect();
        assert_eq!(names, ["Site", "Zip"]);
        assert_eq!(d.schema[1].semantic_type.as_ref().map(|t| t.as_str()), Some("Zip5"));
        assert_eq!(d.schema[0].semantic_type, None);
        assert_eq!(c.table(&id).unwrap().len(), 3);
        assert!(c.documents.contains_key(&id));
    }

    #[test]
    fn headerless_columns_get_positional_names() {
        let mut c = Catalog::default();
        let id = ingest_document(&mut c, "t".into(), DocumentFormat::Tsv, b"a\tb\nc\td\n", Origin::Declared, 0.5).unwrap();
        let names: Vec<String> = c.source(&id).unwrap().schema.iter().map(|a| a.name.clone()).collect();
        assert_eq!(names, ["Column 1", "Column 2"]);
    }

    #[test]
    fn ids_from_names() {
        assert_eq!(source_id_for("fixtures/shelters.html").as_str(), "shelters");
        assert_eq!(source_id_for("My Contacts (2).csv").as_str(), "my-contacts-2");
        assert_eq!(source_id_for("???").as_str(), "document");
    }

    #[test]
    fn empty_document_is_rejected() {
        let mut c = Catalog::default();
        let err = ingest_document(&mut c, "e".into(), DocumentFormat::Csv, b"", Origin::Declared, 0.5).unwrap_err();
        assert!(matches!(err, IngestError::Extract(_)));
        assert!(c.sources.is_empty());
    }
}
