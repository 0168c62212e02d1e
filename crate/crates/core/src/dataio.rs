//! CSV input, variable selection, quantile normalization and output tables.
//!
//! All numbers are written with Rust's shortest round-trip `Display` form,
//! comma separated, independent of locale. Row and column positions in parse
//! errors are 1-based file positions.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::dist::SufficientStats;
use crate::error::{Error, Result};
use crate::graphs::max_edges;
use crate::sampler::SampleRecord;
use crate::spd::SymMatrix;

/// Observations in rows, variables in columns.
#[derive(Clone, Debug, PartialEq)]
pub struct DataMatrix {
    m: usize,
    p: usize,
    values: Vec<f64>,
    column_names: Option<Vec<String>>,
}

impl DataMatrix {
    pub fn new(m: usize, p: usize, values: Vec<f64>, column_names: Option<Vec<String>>) -> Result<Self> {
        if values.len() != m * p {
            return Err(Error::DimensionMismatch { expected: m * p, found: values.len() });
        }
        if let Some(names) = &column_names {
            if names.len() != p {
                return Err(Error::DimensionMismatch { expected: p, found: names.len() });
            }
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite value at row {}, column {}", pos / p + 1, pos % p + 1)));
        }
        Ok(DataMatrix { m, p, values, column_names })
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn cols(&self) -> usize {
        self.p
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.p + c]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn column_names(&self) -> Option<&[String]> {
        self.column_names.as_deref()
    }

    /// Column names, or `V1..Vp` when the input had no header.
    pub fn names_or_default(&self) -> Vec<String> {
        match &self.column_names {
            Some(n) => n.clone(),
            None => (1..=self.p).map(|j| format!("V{j}")).collect(),
        }
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.m).map(|r| self.get(r, c)).collect()
    }

    /// Sample variances with denominator `m − 1`.
    pub fn column_variances(&self) -> Vec<f64> {
        let denom = self.m.saturating_sub(1).max(1) as f64;
        (0..self.p)
            .map(|c| {
                let col = self.column(c);
                let mean = col.iter().sum::<f64>() / self.m as f64;
                col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / denom
            })
            .collect()
    }

    pub fn select_columns(&self, cols: &[usize]) -> Result<DataMatrix> {
        if let Some(&bad) = cols.iter().find(|&&c| c >= self.p) {
            return Err(Error::InvalidIndex { index: bad, order: self.p });
        }
        let values = (0..self.m).flat_map(|r| cols.iter().map(move |&c| (r, c))).map(|(r, c)| self.get(r, c)).collect();
        let names = self.column_names.as_ref().map(|n| cols.iter().map(|&c| n[c].clone()).collect());
        DataMatrix::new(self.m, cols.len(), values, names)
    }

    pub fn sufficient_stats(&self) -> SufficientStats {
        SufficientStats::from_rows(self.m, self.p, &self.values).expect("shape checked on construction")
    }
}

fn parse_cell(token: &str) -> Option<f64> {
    token.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads a rectangular numeric CSV. A first row in which no field parses as
/// a number is taken as a header of column names.
pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<DataMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_matrix_from(file).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// [`read_matrix_csv`] on any reader.
pub fn read_matrix_from(reader: impl std::io::Read) -> Result<DataMatrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
    let mut names = None;
    let mut values = Vec::new();
    let mut width = None;
    let mut m = 0;
    for (line, rec) in rdr.records().enumerate() {
        let row = line + 1;
        let rec = rec.map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io("<input>", io),
            other => Error::Parse { row, col: 0, token: format!("{other:?}") },
        })?;
        if rec.iter().all(|t| t.trim().is_empty()) {
            continue;
        }
        if line == 0 && rec.iter().all(|t| parse_cell(t).is_none()) {
            names = Some(rec.iter().map(|t| t.trim().to_string()).collect::<Vec<_>>());
            width = Some(rec.len());
            continue;
        }
        let expected = *width.get_or_insert(rec.len());
        if rec.len() != expected {
            return Err(Error::RaggedRows { row, expected, found: rec.len() });
        }
        for (c, token) in rec.iter().enumerate() {
            let v = parse_cell(token).ok_or_else(|| Error::Parse { row, col: c + 1, token: token.to_string() })?;
            values.push(v);
        }
        m += 1;
    }
    if m == 0 {
        return Err(Error::Parse { row: if names.is_some() { 2 } else { 1 }, col: 1, token: String::new() });
    }
    DataMatrix::new(m, width.unwrap_or(0), values, names)
}

pub fn write_matrix_csv(data: &DataMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    if let Some(names) = data.column_names() {
        out.push_str(&names.join(","));
        out.push('\n');
    }
    for r in 0..data.rows() {
        push_row(&mut out, (0..data.cols()).map(|c| data.get(r, c)));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn push_row(out: &mut String, vals: impl Iterator<Item = f64>) {
    let cells: Vec<String> = vals.map(|v| v.to_string()).collect();
    out.push_str(&cells.join(","));
    out.push('\n');
}

/// The `k` columns with the largest sample variance, in original order; ties
/// go to the lower column index.
pub fn select_top_variance(data: &DataMatrix, k: usize) -> Result<DataMatrix> {
    let p = data.cols();
    if k < 2 || k > p {
        return Err(Error::BadK { k, p });
    }
    let var = data.column_variances();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| var[b].total_cmp(&var[a]).then(a.cmp(&b)));
    let mut keep = order[..k].to_vec();
    keep.sort_unstable();
    data.select_columns(&keep)
}

/// Average 1-based ranks; tied values share the mean of their positions.
fn average_ranks(col: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..col.len()).collect();
    idx.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
    let mut ranks = vec![0.0; col.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && col[idx[end]] == col[idx[start]] {
            end += 1;
        }
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Maps every value to `Φ⁻¹(r/(m+1))`, `r` its average rank in its column.
/// Constant columns become all zeros and are listed (0-based) in the second
/// return value.
pub fn quantile_normalize(data: &DataMatrix) -> Result<(DataMatrix, Vec<usize>)> {
    let (m, p) = (data.rows(), data.cols());
    if m < 2 {
        return Err(Error::InvalidParameter(format!("quantile normalization needs at least 2 rows, got {m}")));
    }
    let normal = Normal::standard();
    let denom = (m + 1) as f64;
    // evaluate the lower half only so that mirrored ranks give exactly opposite scores
    let score = |r: f64| {
        let mirrored = denom - r;
        if r < mirrored {
            normal.inverse_cdf(r / denom)
        } else if r > mirrored {
            -normal.inverse_cdf(mirrored / denom)
        } else {
            0.0
        }
    };
    let mut values = vec![0.0; m * p];
    let mut degenerate = Vec::new();
    for c in 0..p {
        let col = data.column(c);
        if col.iter().all(|&v| v == col[0]) {
            degenerate.push(c);
            continue;
        }
        for (r, rank) in average_ranks(&col).into_iter().enumerate() {
            values[r * p + c] = score(rank);
        }
    }
    Ok((DataMatrix::new(m, p, values, data.column_names.clone())?, degenerate))
}

fn create(path: &Path) -> Result<std::io::BufWriter<File>> {
    File::create(path).map(std::io::BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Incremental writer of `iter,num_edges,log_lik` rows.
pub struct TraceWriter {
    path: std::path::PathBuf,
    out: std::io::BufWriter<File>,
}

impl TraceWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut out = create(&path)?;
        writeln!(out, "iter,num_edges,log_lik").map_err(|e| Error::io(&path, e))?;
        Ok(TraceWriter { path, out })
    }

    pub fn push(&mut self, record: &SampleRecord) -> Result<()> {
        writeln!(self.out, "{},{},{}", record.iter, record.num_edges, record.log_lik).map_err(|e| Error::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn write_trace<'a>(records: impl IntoIterator<Item = &'a SampleRecord>, path: impl AsRef<Path>) -> Result<()> {
    let mut w = TraceWriter::create(path)?;
    for r in records {
        w.push(r)?;
    }
    w.finish()
}

/// `p x p` grid with variable names as header row and first column.
pub fn write_edge_prob_matrix(probs: &SymMatrix, names: &[String], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let p = probs.order();
    if names.len() != p {
        return Err(Error::DimensionMismatch { expected: p, found: names.len() });
    }
    let mut out = String::from(",");
    out.push_str(&names.join(","));
    out.push('\n');
    for (i, name) in names.iter().enumerate() {
        out.push_str(name);
        out.push(',');
        push_row(&mut out, (0..p).map(|j| probs.get(i, j)));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Edge-count tallies of post-burn-in records, indexed `0..=E_max`.
pub fn edge_count_histogram<'a>(records: impl IntoIterator<Item = &'a SampleRecord>, burn_in: u64) -> Vec<u64> {
    let mut hist: Vec<u64> = Vec::new();
    for r in records.into_iter().filter(|r| r.iter >= burn_in) {
        if hist.is_empty() {
            hist = vec![0; max_edges(r.graph.p()) + 1];
        }
        hist[r.num_edges] += 1;
    }
    hist
}

/// `num_edges,count` rows for every edge count `0..=E_max`.
pub fn write_histogram(counts: &[u64], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if counts.is_empty() {
        return Err(Error::NoSamples);
    }
    let mut out = String::from("num_edges,count\n");
    for (k, c) in counts.iter().enumerate() {
        out.push_str(&format!("{k},{c}\n"));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Thresholds `0.00, 0.01, …, 1.00`.
pub fn default_grid() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

/// Fraction of the unordered off-diagonal pairs with probability `≥ t`, per `t`.
pub fn reverse_cdf(probs: &SymMatrix, grid: &[f64]) -> Vec<(f64, f64)> {
    let p = probs.order();
    let vals: Vec<f64> = (0..p).flat_map(|i| (i + 1..p).map(move |j| (i, j))).map(|(i, j)| probs.get(i, j)).collect();
    let e_max = vals.len().max(1) as f64;
    grid.iter().map(|&t| (t, vals.iter().filter(|&&v| v >= t).count() as f64 / e_max)).collect()
}

pub fn write_reverse_cdf(probs: &SymMatrix, grid: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("t,fraction\n");
    for (t, f) in reverse_cdf(probs, grid) {
        out.push_str(&format!("{t},{f}\n"));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
