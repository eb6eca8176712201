//! Text formats: edge lists with a JSON marks sidecar, degree and weight
//! tables, and CSV exports of trajectories, pools and traces.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Attributes, DegreeSequence, DiGraph, GraphMode, IrdSpec, VertexMark};
use crate::recursion::GraphState;

/// Marks and provenance stored next to an edge list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSidecar {
    pub n: usize,
    pub mode: GraphMode,
    pub marks: Vec<VertexMark>,
}

/// Writes one `tail head` line per edge, grouped by head.
pub fn write_edge_list<W: Write>(g: &DiGraph, w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    for (tail, head) in g.edges() {
        writeln!(w, "{tail} {head}")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `tail head` lines; blank lines and lines starting with `#` are skipped.
pub fn read_edge_list<R: Read>(r: R) -> Result<Vec<(usize, usize)>> {
    let mut edges = Vec::new();
    for (lineno, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let mut field = || -> Result<usize> {
            it.next()
                .ok_or_else(|| Error::Parse(format!("line {}: expected two vertex ids", lineno + 1)))?
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
        };
        let edge = (field()?, field()?);
        if it.next().is_some() {
            return Err(Error::Parse(format!("line {}: expected two vertex ids", lineno + 1)));
        }
        edges.push(edge);
    }
    Ok(edges)
}

pub fn save_graph(g: &DiGraph, edges: &Path, sidecar: &Path) -> Result<()> {
    write_edge_list(g, File::create(edges)?)?;
    let meta = GraphSidecar { n: g.n(), mode: g.mode(), marks: g.marks().to_vec() };
    serde_json::to_writer_pretty(BufWriter::new(File::create(sidecar)?), &meta)?;
    Ok(())
}

/// Loads an edge list. Without a sidecar the vertex count is one more than
/// the largest id and the graph is taken as raw.
pub fn load_graph(edges: &Path, sidecar: Option<&Path>) -> Result<DiGraph> {
    let list = read_edge_list(File::open(edges)?)?;
    match sidecar {
        Some(path) => {
            let meta: GraphSidecar = serde_json::from_reader(BufReader::new(File::open(path)?))?;
            if meta.marks.len() != meta.n {
                return Err(Error::DimensionMismatch { expected: meta.n, found: meta.marks.len() });
            }
            DiGraph::from_edges(meta.n, &list, Some(meta.marks), meta.mode)
        }
        None => {
            let n = list.iter().map(|&(a, b)| a.max(b) + 1).max().unwrap_or(0);
            DiGraph::from_edges(n, &list, None, GraphMode::Raw)
        }
    }
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

/// Rows of named numeric columns, with `required` columns split off.
fn read_table<R: Read>(r: R, required: [&str; 2]) -> Result<Vec<([f64; 2], Attributes)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let headers = rdr.headers()?.clone();
    let idx = required.map(|name| headers.iter().position(|h| h == name));
    let idx = match idx {
        [Some(a), Some(b)] => [a, b],
        _ => return Err(Error::Parse(format!("CSV header must contain {} and {}", required[0], required[1]))),
    };
    let mut rows = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut vals = [0.0; 2];
        let mut attrs = Attributes::new();
        for (col, (name, raw)) in headers.iter().zip(rec.iter()).enumerate() {
            let x: f64 = raw.parse().map_err(|e| Error::Parse(format!("row {}, column {name}: {e}", row + 1)))?;
            match idx.iter().position(|&i| i == col) {
                Some(k) => vals[k] = x,
                None => attrs.set(name, x),
            }
        }
        rows.push((vals, attrs));
    }
    Ok(rows)
}

fn degree(x: f64, row: usize) -> Result<usize> {
    if x >= 0.0 && x.fract() == 0.0 && x < u32::MAX as f64 {
        Ok(x as usize)
    } else {
        Err(Error::Parse(format!("row {}: degree {x} is not a nonnegative integer", row + 1)))
    }
}

/// CSV with columns `d_minus,d_plus` plus optional attribute columns.
pub fn read_degree_csv<R: Read>(r: R) -> Result<DegreeSequence> {
    let rows = read_table(r, ["d_minus", "d_plus"])?;
    let mut pairs = Vec::with_capacity(rows.len());
    let mut attrs = Vec::with_capacity(rows.len());
    for (i, ([dm, dp], a)) in rows.into_iter().enumerate() {
        pairs.push((degree(dm, i)?, degree(dp, i)?));
        attrs.push(a);
    }
    if attrs.iter().all(Attributes::is_empty) {
        attrs.clear();
    }
    DegreeSequence::with_attrs(pairs, attrs)
}

/// Reads a degree sequence from CSV, or JSON when the extension is `.json`.
pub fn load_degree_sequence(path: &Path) -> Result<DegreeSequence> {
    let f = File::open(path)?;
    if is_json(path) {
        let seq: DegreeSequence = serde_json::from_reader(BufReader::new(f))?;
        seq.validate()?;
        Ok(seq)
    } else {
        read_degree_csv(f)
    }
}

/// CSV with columns `w_minus,w_plus` plus optional attribute columns.
pub fn read_ird_csv<R: Read>(r: R, theta: f64) -> Result<IrdSpec> {
    let rows = read_table(r, ["w_minus", "w_plus"])?;
    let mut spec = IrdSpec::new(rows.iter().map(|(w, _)| (w[0], w[1])).collect(), theta);
    if rows.iter().any(|(_, a)| !a.is_empty()) {
        spec.attrs = rows.into_iter().map(|(_, a)| a).collect();
    }
    spec.validate()?;
    Ok(spec)
}

/// Reads an IRD spec from JSON, or from CSV with the given `theta`.
pub fn load_ird_spec(path: &Path, theta: Option<f64>) -> Result<IrdSpec> {
    let f = File::open(path)?;
    if is_json(path) {
        let spec: IrdSpec = serde_json::from_reader(BufReader::new(f))?;
        spec.validate()?;
        Ok(spec)
    } else {
        let theta = theta.ok_or_else(|| Error::InvalidIrdSpec("theta is required alongside a weight CSV".into()))?;
        read_ird_csv(f, theta)
    }
}

/// `step,vertex,value` rows of `R`.
pub fn write_trajectory_csv<W: Write>(states: &[GraphState], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["step", "vertex", "value"])?;
    for s in states {
        for (i, r) in s.r.iter().enumerate() {
            wtr.serialize((s.k, i, r))?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// `step,mean,variance,min,max` rows of `R`.
pub fn write_trajectory_summary_csv<W: Write>(states: &[GraphState], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["step", "mean", "variance", "min", "max"])?;
    for s in states {
        let n = s.r.len().max(1) as f64;
        let mean = s.r.iter().sum::<f64>() / n;
        let var = s.r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let min = s.r.iter().copied().fold(f64::INFINITY, f64::min);
        let max = s.r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        wtr.serialize((s.k, mean, var, min, max))?;
    }
    wtr.flush()?;
    Ok(())
}

/// One `value` per row.
pub fn write_samples_csv<W: Write>(values: &[f64], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["value"])?;
    for v in values {
        wtr.serialize([v])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_samples_csv<R: Read>(r: R) -> Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.deserialize::<(f64,)>().map(|row| Ok(row?.0)).collect()
}

/// A plot-ready row of a distance trace or bound curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    pub value: f64,
    pub stderr: f64,
}

pub fn write_trace_csv<W: Write>(rows: &[TraceRow], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for row in rows {
        wtr.serialize(row)?;
    }
    if rows.is_empty() {
        wtr.write_record(["k", "value", "stderr"])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_trace_csv<R: Read>(r: R) -> Result<Vec<TraceRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
}
