use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::html::{self, Element, Node};
use super::ExtractError;
use crate::typist::tokenize;
use crate::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocumentFormat {
    Csv,
    Tsv,
    Html,
}

impl std::str::FromStr for DocumentFormat {
    type Err = ExtractError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(DocumentFormat::Csv),
            "tsv" => Ok(DocumentFormat::Tsv),
            "html" | "htm" => Ok(DocumentFormat::Html),
            other => Err(ExtractError::UnknownFormat(other.to_string())),
        }
    }
}

impl std::fmt::Display for DocumentFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DocumentFormat::Csv => "csv",
            DocumentFormat::Tsv => "tsv",
            DocumentFormat::Html => "html",
        })
    }
}

/// A leaf text run together with the structural position it came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub value: String,
    pub marker: String,
}

/// A record is the cell range `start..end` plus its aligned field values.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub start: usize,
    pub end: usize,
    pub fields: Vec<Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vote {
    pub expert: String,
    pub confidence: f64,
}

/// One segmentation hypothesis and the experts that proposed it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentationHypothesis {
    pub records: usize,
    pub votes: Vec<Vote>,
    pub chosen: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DocumentModel {
    pub format: DocumentFormat,
    pub cells: Vec<Cell>,
    pub records: Vec<Record>,
    pub arity: usize,
    pub header: Option<Vec<String>>,
    pub expert_votes: Vec<SegmentationHypothesis>,
    /// Document text used by landmark rules.
    pub raw: String,
}

impl DocumentModel {
    pub fn record_values(&self, i: usize) -> &[Value] {
        &self.records[i].fields
    }
}

#[derive(Clone, Debug)]
struct Proposal {
    expert: &'static str,
    confidence: f64,
    records: Vec<Record>,
    header: Option<Vec<String>>,
}

pub const DELIMITER_EXPERT: &str = "delimiter";
pub const HTML_TABLE_EXPERT: &str = "html-table";
pub const REPEATED_TAG_EXPERT: &str = "repeated-tag";
pub const DATA_TYPE_EXPERT: &str = "data-type";

fn non_empty(s: &str) -> Value {
    let t = html::collapse(s);
    (!t.is_empty()).then_some(t)
}

fn delimiter_expert(raw: &str, delimiter: u8) -> Result<(Vec<Cell>, Proposal), ExtractError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(delimiter)
        .from_reader(raw.as_bytes());
    let mut cells = Vec::new();
    let mut records = Vec::new();
    for (r, row) in reader.records().enumerate() {
        let row = row.map_err(|e| ExtractError::Unparseable(e.to_string()))?;
        if row.iter().all(|c| c.trim().is_empty()) {
            continue;
        }
        let start = cells.len();
        let mut fields = Vec::with_capacity(row.len());
        for (c, value) in row.iter().enumerate() {
            let v = non_empty(value);
            if let Some(text) = &v {
                cells.push(Cell {
                    value: text.clone(),
                    marker: format!("r{r}c{c}"),
                });
            }
            fields.push(v);
        }
        records.push(Record {
            start,
            end: cells.len(),
            fields,
        });
    }
    Ok((
        cells,
        Proposal {
            expert: DELIMITER_EXPERT,
            confidence: 0.6,
            records,
            header: None,
        },
    ))
}

/// Leaf cells of an HTML tree and the cell range covered by each element,
/// keyed by element address.
struct HtmlCells<'a> {
    cells: Vec<Cell>,
    ranges: HashMap<*const Element, (usize, usize)>,
    _root: &'a Element,
}

impl<'a> HtmlCells<'a> {
    fn new(root: &'a Element) -> Self {
        let mut me = HtmlCells {
            cells: Vec::new(),
            ranges: HashMap::new(),
            _root: root,
        };
        let mut path = Vec::new();
        me.visit(root, &mut path);
        me
    }

    fn visit(&mut self, e: &Element, path: &mut Vec<String>) {
        let start = self.cells.len();
        let mut seen: HashMap<&str, usize> = HashMap::new();
        for child in &e.children {
            match child {
                Node::Text(t) => self.cells.push(Cell {
                    value: t.clone(),
                    marker: path.join("/"),
                }),
                Node::Element(c) => {
                    let n = seen.entry(c.tag.as_str()).or_default();
                    path.push(format!("{}[{}]", c.tag, n));
                    *n += 1;
                    self.visit(c, path);
                    path.pop();
                }
            }
        }
        self.ranges.insert(e as *const Element, (start, self.cells.len()));
    }

    fn range(&self, e: &Element) -> (usize, usize) {
        self.ranges[&(e as *const Element)]
    }

    fn text(&self, e: &Element) -> Value {
        let (s, t) = self.range(e);
        let joined: Vec<&str> = self.cells[s..t].iter().map(|c| c.value.as_str()).collect();
        non_empty(&joined.join(" "))
    }
}

fn collect<'a>(root: &'a Element, pred: &impl Fn(&Element) -> bool, skip: &[&str], out: &mut Vec<&'a Element>) {
    for c in root.child_elements() {
        if pred(c) {
            out.push(c);
        }
        if !skip.contains(&c.tag.as_str()) {
            collect(c, pred, skip, out);
        }
    }
}

fn table_rows(table: &Element) -> Vec<&Element> {
    let mut rows = Vec::new();
    collect(table, &|e| e.tag == "tr", &["table"], &mut rows);
    rows
}

fn html_table_expert(root: &Element, cells: &HtmlCells) -> Option<Proposal> {
    let mut tables = Vec::new();
    collect(root, &|e| e.tag == "table", &[], &mut tables);
    let is_data = |tr: &&&Element| tr.child_elements().any(|c| c.tag == "td");
    let table = tables
        .iter()
        .enumerate()
        .max_by_key(|(i, t)| (table_rows(t).iter().filter(is_data).count(), std::cmp::Reverse(*i)))
        .map(|(_, t)| *t)?;
    let rows = table_rows(table);
    let mut header = None;
    let mut records = Vec::new();
    for tr in rows {
        let slots: Vec<&Element> = tr.child_elements().filter(|c| c.tag == "td" || c.tag == "th").collect();
        if slots.is_empty() {
            continue;
        }
        if !slots.iter().any(|c| c.tag == "td") {
            if records.is_empty() && header.is_none() {
                header = Some(slots.iter().map(|c| cells.text(c).unwrap_or_default()).collect());
            }
            continue;
        }
        let (start, end) = cells.range(tr);
        records.push(Record {
            start,
            end,
            fields: slots.iter().map(|c| cells.text(c)).collect(),
        });
    }
    if records.is_empty() {
        return None;
    }
    Some(Proposal {
        expert: HTML_TABLE_EXPERT,
        confidence: 0.9,
        records,
        header,
    })
}

fn trim_separators(s: &str) -> &str {
    s.trim_matches(|c: char| c.is_whitespace() || matches!(c, ',' | ';' | '|' | ':' | '-' | '·' | '•'))
}

fn repeated_tag_expert(root: &Element, cells: &HtmlCells) -> Option<Proposal> {
    fn walk<'a>(e: &'a Element, cells: &HtmlCells, best: &mut Option<(usize, Vec<&'a Element>)>) {
        if e.tag == "table" || e.tag == "script" {
            return;
        }
        let mut groups: Vec<((&str, Option<&str>), Vec<&'a Element>)> = Vec::new();
        for c in e.child_elements() {
            let key = (c.tag.as_str(), c.attr("class"));
            match groups.iter_mut().find(|(k, _)| *k == key) {
                Some((_, g)) => g.push(c),
                None => groups.push((key, vec![c])),
            }
        }
        for (_, g) in groups {
            let with_text = g.iter().filter(|e| cells.text(e).is_some()).count();
            if with_text >= 2 && best.as_ref().is_none_or(|(n, _)| with_text > *n) {
                *best = Some((with_text, g));
            }
        }
        for c in e.child_elements() {
            walk(c, cells, best);
        }
    }
    let mut best = None;
    walk(root, cells, &mut best);
    let (_, items) = best?;
    let records = items
        .into_iter()
        .map(|item| {
            let (start, end) = cells.range(item);
            let fields = cells.cells[start..end]
                .iter()
                .filter_map(|c| non_empty(trim_separators(&c.value)))
                .map(Some)
                .collect();
            Record { start, end, fields }
        })
        .collect();
    Some(Proposal {
        expert: REPEATED_TAG_EXPERT,
        confidence: 0.7,
        records,
        header: None,
    })
}

/// Whether the first record reads as column labels rather than data: every
/// label is present and digit-free, and at least one column below it is
/// numeric or shares a token pattern the label does not have.
fn first_record_is_header(records: &[Record]) -> bool {
    let Some((first, rest)) = records.split_first() else {
        return false;
    };
    if rest.is_empty() || first.fields.iter().any(|f| f.is_none()) {
        return false;
    }
    let labels: Vec<&str> = first.fields.iter().map(|f| f.as_deref().unwrap()).collect();
    if labels.iter().any(|l| l.chars().any(|c| c.is_ascii_digit())) {
        return false;
    }
    (0..labels.len()).any(|c| {
        let below: Vec<&str> = rest
            .iter()
            .filter_map(|r| r.fields.get(c).and_then(|v| v.as_deref()))
            .collect();
        if below.is_empty() {
            return false;
        }
        let digits = below.iter().filter(|v| v.chars().any(|ch| ch.is_ascii_digit())).count();
        if digits * 2 >= below.len() {
            return true;
        }
        let pattern = tokenize(below[0]);
        below.len() >= 2 && below.iter().all(|v| tokenize(v) == pattern) && tokenize(labels[c]) != pattern
    })
}

fn data_type_expert(proposals: &[Proposal]) -> Option<Proposal> {
    let base = proposals
        .iter()
        .enumerate()
        .max_by(|(i, a), (j, b)| a.confidence.total_cmp(&b.confidence).then(j.cmp(i)))
        .map(|(_, p)| p)?;
    let mut records = base.records.clone();
    let mut header = base.header.clone();
    if header.is_none() && first_record_is_header(&records) {
        let first = records.remove(0);
        header = Some(first.fields.into_iter().map(Option::unwrap_or_default).collect());
    }
    Some(Proposal {
        expert: DATA_TYPE_EXPERT,
        confidence: 0.8,
        records,
        header,
    })
}

type Boundaries = Vec<(usize, usize)>;

fn combine(proposals: Vec<Proposal>) -> (Proposal, Vec<SegmentationHypothesis>) {
    let mut groups: Vec<(Boundaries, Vec<usize>)> = Vec::new();
    for (i, p) in proposals.iter().enumerate() {
        let key: Boundaries = p.records.iter().map(|r| (r.start, r.end)).collect();
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => members.push(i),
            None => groups.push((key, vec![i])),
        }
    }
    let score = |members: &[usize]| members.iter().map(|&i| proposals[i].confidence).sum::<f64>();
    // registration order doubles as group order, so the earliest group wins ties
    let winner = (0..groups.len())
        .max_by(|&a, &b| {
            let (ga, gb) = (&groups[a], &groups[b]);
            score(&ga.1)
                .total_cmp(&score(&gb.1))
                .then(ga.0.len().cmp(&gb.0.len()))
                .then(b.cmp(&a))
        })
        .expect("at least one proposal");
    let hypotheses = groups
        .iter()
        .enumerate()
        .map(|(g, (key, members))| SegmentationHypothesis {
            records: key.len(),
            votes: members
                .iter()
                .map(|&i| Vote {
                    expert: proposals[i].expert.to_string(),
                    confidence: proposals[i].confidence,
                })
                .collect(),
            chosen: g == winner,
        })
        .collect();
    // the most confident member supplies field alignment and header
    let members = &groups[winner].1;
    let lead = *members
        .iter()
        .max_by(|&&a, &&b| proposals[a].confidence.total_cmp(&proposals[b].confidence).then(b.cmp(&a)))
        .unwrap();
    let mut chosen = proposals[lead].clone();
    if chosen.header.is_none() {
        chosen.header = members.iter().find_map(|&i| proposals[i].header.clone());
    }
    (chosen, hypotheses)
}

/// Builds the relational model of a document by running every applicable
/// expert and keeping the segmentation with the strongest combined vote.
pub fn infer_document_model(raw: &[u8], format: DocumentFormat) -> Result<DocumentModel, ExtractError> {
    let text = std::str::from_utf8(raw).map_err(|e| ExtractError::Unparseable(e.to_string()))?;
    if text.trim().is_empty() {
        return Err(ExtractError::EmptyDocument);
    }
    let (cells, mut proposals) = match format {
        DocumentFormat::Csv | DocumentFormat::Tsv => {
            let delim = if format == DocumentFormat::Csv { b',' } else { b'\t' };
            let (cells, p) = delimiter_expert(text, delim)?;
            (cells, vec![p])
        }
        DocumentFormat::Html => {
            let root = html::parse(text).map_err(|e| ExtractError::Unparseable(e.to_string()))?;
            let hc = HtmlCells::new(&root);
            let proposals: Vec<Proposal> = [html_table_expert(&root, &hc), repeated_tag_expert(&root, &hc)]
                .into_iter()
                .flatten()
                .collect();
            (hc.cells, proposals)
        }
    };
    proposals.retain(|p| !p.records.is_empty());
    if let Some(p) = data_type_expert(&proposals) {
        proposals.push(p);
    }
    proposals.retain(|p| !p.records.is_empty());
    if proposals.is_empty() {
        return Err(ExtractError::NoRecords);
    }
    let (chosen, expert_votes) = combine(proposals);
    let mut records = chosen.records;
    let arity = records.iter().map(|r| r.fields.len()).max().unwrap_or(0);
    for r in &mut records {
        r.fields.resize(arity, None);
    }
    let header = chosen.header.map(|mut h| {
        h.resize(arity, String::new());
        h
    });
    Ok(DocumentModel {
        format,
        cells,
        records,
        arity,
        header,
        expert_votes,
        raw: text.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(s: &str) -> Value {
        Some(s.to_string())
    }

    fn table(rows: usize) -> String {
        let mut s = String::from("<html><body><h1>Shelters</h1><table><tr><th>Name</th><th>Street</th><th>City</th></tr>");
        for i in 0..rows {
            s.push_str(&format!("<tr><td>Shelter {i}</td><td>{} Main St</td><td>Town{}</td></tr>\n", 100 + i, i % 3));
        }
        s + "</table></body></html>"
    }

    #[test]
    fn html_table_with_twelve_rows() {
        let m = infer_document_model(table(12).as_bytes(), DocumentFormat::Html).unwrap();
        assert_eq!(m.records.len(), 12);
        assert_eq!(m.arity, 3);
        assert_eq!(m.header.as_deref(), Some(&["Name".to_string(), "Street".into(), "City".into()][..]));
        assert_eq!(m.records[0].fields, vec![v("Shelter 0"), v("100 Main St"), v("Town0")]);
        let chosen: Vec<_> = m.expert_votes.iter().filter(|h| h.chosen).collect();
        assert_eq!(chosen.len(), 1);
        let experts: Vec<&str> = chosen[0].votes.iter().map(|v| v.expert.as_str()).collect();
        assert_eq!(experts, [HTML_TABLE_EXPERT, DATA_TYPE_EXPERT]);
    }

    #[test]
    fn single_cell_csv() {
        let m = infer_document_model(b"x", DocumentFormat::Csv).unwrap();
        assert_eq!(m.records.len(), 1);
        assert_eq!(m.arity, 1);
        assert_eq!(m.header, None);
    }

    #[test]
    fn empty_document_is_an_error() {
        assert!(matches!(
            infer_document_model(b"  \n", DocumentFormat::Csv),
            Err(ExtractError::EmptyDocument)
        ));
        assert!(matches!(
            infer_document_model(b"<p>just text", DocumentFormat::Html),
            Err(ExtractError::NoRecords)
        ));
        assert!(matches!(
            infer_document_model(b"<table><tr", DocumentFormat::Html),
            Err(ExtractError::Unparseable(_))
        ));
        assert!(infer_document_model(&[0xff, 0xfe], DocumentFormat::Csv).is_err());
    }

    #[test]
    fn csv_header_is_detected_by_the_data_type_expert() {
        let m = infer_document_model(b"Name,Phone\nA,954-555-0100\nB,954-555-0101\n", DocumentFormat::Csv).unwrap();
        assert_eq!(m.header, Some(vec!["Name".to_string(), "Phone".into()]));
        assert_eq!(m.records.len(), 2);
        let m = infer_document_model(b"Ann,Bob\nCid,Dee\n", DocumentFormat::Csv).unwrap();
        assert_eq!(m.header, None);
        assert_eq!(m.records.len(), 2);
    }

    #[test]
    fn tsv_fields_pad_to_common_arity() {
        let m = infer_document_model(b"a\tb\tc\nd\te\n", DocumentFormat::Tsv).unwrap();
        assert_eq!(m.arity, 3);
        assert_eq!(m.records[1].fields, vec![v("d"), v("e"), None]);
    }

    #[test]
    fn list_outside_tables() {
        let doc = "<ul class=nav><li>Home</li></ul>\
            <div class=list><div class=item><b>Alpha</b>, 1 Oak St, Margate</div>\
            <div class=item><b>Beta</b>, 2 Elm St, Davie</div>\
            <div class=item><b>Gamma</b>, 3 Ash St, Weston</div></div>";
        let m = infer_document_model(doc.as_bytes(), DocumentFormat::Html).unwrap();
        assert_eq!(m.records.len(), 3);
        assert_eq!(m.records[1].fields, vec![v("Beta"), v("2 Elm St, Davie")]);
    }

    #[test]
    fn records_do_not_overlap() {
        let m = infer_document_model(table(5).as_bytes(), DocumentFormat::Html).unwrap();
        for w in m.records.windows(2) {
            assert!(w[0].end <= w[1].start);
        }
    }

    #[test]
    fn format_tags_parse() {
        assert_eq!("HTML".parse::<DocumentFormat>().unwrap(), DocumentFormat::Html);
        assert!("pdf".parse::<DocumentFormat>().is_err());
    }
}
