use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value as Json};

use super::{Grid, SessionError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    Csv,
    Json,
    Geojson,
}

impl FromStr for ExportFormat {
    type Err = SessionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            "geojson" => Ok(ExportFormat::Geojson),
            other => Err(SessionError::BadFormat(other.to_string())),
        }
    }
}

impl ExportFormat {
    pub fn content_type(self) -> &'static str {
        match self {
            ExportFormat::Csv => "text/csv",
            ExportFormat::Json => "application/json",
            ExportFormat::Geojson => "application/geo+json",
        }
    }
}

fn geo_column(grid: &Grid, names: &[&str]) -> Option<usize> {
    grid.columns.iter().position(|c| {
        c.semantic_type
            .as_ref()
            .is_some_and(|t| names.contains(&t.as_str().to_ascii_lowercase().as_str()))
    })
}

fn to_csv(grid: &Grid) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(grid.labels()).expect("in-memory write");
    for r in &grid.rows {
        w.write_record(r.cells.iter().map(|c| c.as_deref().unwrap_or("")))
            .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn to_geojson(grid: &Grid) -> Result<Json, SessionError> {
    let (Some(lat), Some(lon)) = (
        geo_column(grid, &["latitude", "lat"]),
        geo_column(grid, &["longitude", "lon", "lng"]),
    ) else {
        return Err(SessionError::NoGeoColumns);
    };
    let number = |v: &Option<String>| v.as_deref().and_then(|s| s.trim().parse::<f64>().ok());
    let features: Vec<Json> = grid
        .rows
        .iter()
        .map(|r| {
            let geometry = match (number(&r.cells[lon]), number(&r.cells[lat])) {
                (Some(x), Some(y)) => json!({ "type": "Point", "coordinates": [x, y] }),
                _ => Json::Null,
            };
            let properties: Map<String, Json> = grid
                .columns
                .iter()
                .zip(&r.cells)
                .enumerate()
                .filter(|(i, _)| *i != lat && *i != lon)
                .map(|(_, (c, v))| (c.label.clone(), v.clone().map_or(Json::Null, Json::String)))
                .collect();
            json!({ "type": "Feature", "geometry": geometry, "properties": properties })
        })
        .collect();
    Ok(json!({ "type": "FeatureCollection", "features": features }))
}

/// Serialises the output grid. GeoJSON needs one latitude- and one
/// longitude-typed column and emits a Point per row.
pub fn export_grid(grid: &Grid, format: ExportFormat) -> Result<Vec<u8>, SessionError> {
    if grid.rows.is_empty() || grid.columns.is_empty() {
        return Err(SessionError::EmptyGrid);
    }
    Ok(match format {
        ExportFormat::Csv => to_csv(grid),
        ExportFormat::Json => {
            let doc = json!({ "columns": grid.labels(), "rows": grid.cells() });
            serde_json::to_vec_pretty(&doc).expect("json")
        }
        ExportFormat::Geojson => serde_json::to_vec_pretty(&to_geojson(grid)?).expect("json"),
    })
}
