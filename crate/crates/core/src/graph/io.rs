//! Text and JSON serialisation of attributed graphs.
//!
//! - edges: one `u v` pair per line, 0-indexed, whitespace separated
//! - attributes: headerless CSV, one row per node
//! - labels: one integer per line

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::AttributedGraph;
use crate::{Error, Result};

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

pub fn read_edges(reader: impl BufRead, context: &str) -> Result<Vec<(usize, usize)>> {
    let mut edges = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::parse(context, e.to_string()))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let mut endpoint = || -> Result<usize> {
            let tok = tokens
                .next()
                .ok_or_else(|| Error::parse(context, format!("line {}: expected two endpoints", lineno + 1)))?;
            tok.parse()
                .map_err(|_| Error::parse(context, format!("line {}: bad endpoint {tok:?}", lineno + 1)))
        };
        let (u, v) = (endpoint()?, endpoint()?);
        if tokens.next().is_some() {
            return Err(Error::parse(
                context,
                format!("line {}: more than two fields", lineno + 1),
            ));
        }
        edges.push((u, v));
    }
    Ok(edges)
}

pub fn read_attributes(reader: impl Read, context: &str) -> Result<Array2<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut data = Vec::new();
    let mut n_cols = None;
    let mut n_rows = 0;
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::parse(context, e.to_string()))?;
        match n_cols {
            None => n_cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(Error::parse(
                    context,
                    format!("row {} has {} columns, expected {c}", row + 1, record.len()),
                ))
            }
            _ => {}
        }
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::parse(context, format!("row {}: bad number {field:?}", row + 1)))?;
            if !v.is_finite() {
                return Err(Error::parse(
                    context,
                    format!("row {}: non-finite attribute {field:?}", row + 1),
                ));
            }
            data.push(v);
        }
        n_rows += 1;
    }
    let n_cols = n_cols.ok_or_else(|| Error::parse(context, "empty attribute file"))?;
    if n_cols == 0 {
        return Err(Error::parse(context, "attribute rows have no columns"));
    }
    Array2::from_shape_vec((n_rows, n_cols), data).map_err(|e| Error::parse(context, e.to_string()))
}

pub fn read_labels(reader: impl BufRead, context: &str) -> Result<Vec<usize>> {
    let mut labels = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::parse(context, e.to_string()))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        labels.push(
            line.parse()
                .map_err(|_| Error::parse(context, format!("line {}: bad label {line:?}", lineno + 1)))?,
        );
    }
    Ok(labels)
}

pub fn load_labels(path: &Path) -> Result<Vec<usize>> {
    read_labels(open(path)?, &path.display().to_string())
}

/// Loads a graph from an edge list, an attribute CSV and optional labels.
/// The node count is the number of attribute rows.
pub fn load_graph(edges: &Path, attrs: &Path, labels: Option<&Path>) -> Result<AttributedGraph> {
    let attributes = read_attributes(open(attrs)?, &attrs.display().to_string())?;
    let edge_list = read_edges(open(edges)?, &edges.display().to_string())?;
    let labels = labels.map(load_labels).transpose()?;
    AttributedGraph::new(attributes, edge_list, labels)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut w = create(path)?;
    for l in labels {
        writeln!(w, "{l}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

impl AttributedGraph {
    pub fn write_edges(&self, path: &Path) -> Result<()> {
        let mut w = create(path)?;
        for (u, v) in &self.edges {
            writeln!(w, "{u} {v}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_attributes(&self, path: &Path) -> Result<()> {
        let mut w = create(path)?;
        for row in self.attributes.rows() {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", line.join(",")).map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn to_document(&self) -> GraphDocument {
        GraphDocument {
            n: self.n_nodes(),
            d: self.attr_dim(),
            edges: self.edges.iter().map(|&(u, v)| [u, v]).collect(),
            attributes: self.attributes.rows().into_iter().map(|r| r.to_vec()).collect(),
            labels: self.labels.clone(),
            format_version: GraphDocument::FORMAT_VERSION,
        }
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let mut w = create(path)?;
        serde_json::to_writer(&mut w, &self.to_document())?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let doc: GraphDocument = serde_json::from_reader(open(path)?)?;
        doc.into_graph()
    }
}

/// Single-document JSON form of a graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphDocument {
    pub n: usize,
    pub d: usize,
    pub edges: Vec<[usize; 2]>,
    pub attributes: Vec<Vec<f64>>,
    pub labels: Option<Vec<usize>>,
    pub format_version: u32,
}

impl GraphDocument {
    pub const FORMAT_VERSION: u32 = 1;

    pub fn into_graph(self) -> Result<AttributedGraph> {
        if self.format_version != Self::FORMAT_VERSION {
            return Err(Error::parse(
                "graph document",
                format!("unsupported format_version {}", self.format_version),
            ));
        }
        if self.attributes.len() != self.n || self.attributes.iter().any(|r| r.len() != self.d) {
            return Err(Error::parse("graph document", "attribute matrix does not match n × d"));
        }
        let flat: Vec<f64> = self.attributes.into_iter().flatten().collect();
        let attributes = Array2::from_shape_vec((self.n, self.d), flat)
            .map_err(|e| Error::parse("graph document", e.to_string()))?;
        AttributedGraph::new(attributes, self.edges.into_iter().map(|[u, v]| (u, v)), self.labels)
    }
}
