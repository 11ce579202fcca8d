//! CSV ingestion: the units file and the two distance formats.
//!
//! Units: `id,treatment,response`, one row per unit; ids are arbitrary
//! strings and row order fixes the internal unit order.
//!
//! Distances: either `src,dst,distance` (nonnegative reals) or
//! `src,dst,rank` (survey-style closeness ranks, 1 = closest, used directly
//! as distances). Pairs absent from the file are treated as infinitely far
//! apart: they can never be neighbors, and a unit listing fewer than K
//! finite partners is an error.

use std::collections::HashMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context};

use knnim::model::DistanceMatrix;

use crate::CliError;

/// Parsed units file.
pub struct UnitsTable {
    pub ids: Vec<String>,
    pub treatment: Vec<bool>,
    pub response: Vec<f64>,
    index: HashMap<String, usize>,
}

impl UnitsTable {
    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn treated_count(&self) -> usize {
        self.treatment.iter().filter(|&&t| t).count()
    }
}

pub fn read_units(path: &Path) -> Result<UnitsTable, CliError> {
    read_units_inner(path).map_err(CliError::input)
}

fn read_units_inner(path: &Path) -> anyhow::Result<UnitsTable> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("cannot open units file {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let expected = ["id", "treatment", "response"];
    if headers.iter().collect::<Vec<_>>() != expected {
        bail!(
            "units file {} must have header `id,treatment,response`, found `{}`",
            path.display(),
            headers.iter().collect::<Vec<_>>().join(",")
        );
    }

    let mut ids = Vec::new();
    let mut treatment = Vec::new();
    let mut response = Vec::new();
    let mut index = HashMap::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let line = row + 2;
        let id = record
            .get(0)
            .ok_or_else(|| anyhow!("line {line}: missing id"))?
            .to_string();
        if index.insert(id.clone(), ids.len()).is_some() {
            bail!("line {line}: duplicate unit id `{id}`");
        }
        let w: u8 = record
            .get(1)
            .unwrap_or_default()
            .parse()
            .with_context(|| format!("line {line}: treatment must be 0 or 1"))?;
        if w > 1 {
            bail!("line {line}: treatment must be 0 or 1, got {w}");
        }
        let y: f64 = record
            .get(2)
            .unwrap_or_default()
            .parse()
            .with_context(|| format!("line {line}: response must be a number"))?;
        if !y.is_finite() {
            bail!("line {line}: response must be finite, got {y}");
        }
        ids.push(id);
        treatment.push(w == 1);
        response.push(y);
    }
    if ids.len() < 2 {
        bail!("units file {} must list at least 2 units", path.display());
    }
    Ok(UnitsTable {
        ids,
        treatment,
        response,
        index,
    })
}

/// Read either distance format, returning `(src, dst, distance)` edges in
/// internal unit indices.
pub fn read_distances(
    path: &Path,
    units: &UnitsTable,
) -> Result<Vec<(usize, usize, f64)>, CliError> {
    read_distances_inner(path, units).map_err(CliError::input)
}

fn read_distances_inner(
    path: &Path,
    units: &UnitsTable,
) -> anyhow::Result<Vec<(usize, usize, f64)>> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("cannot open distances file {}", path.display()))?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let ranked = match headers.iter().map(String::as_str).collect::<Vec<_>>()[..] {
        ["src", "dst", "distance"] => false,
        ["src", "dst", "rank"] => true,
        _ => bail!(
            "distances file {} must have header `src,dst,distance` or `src,dst,rank`, found `{}`",
            path.display(),
            headers.join(",")
        ),
    };

    let mut edges = Vec::new();
    let mut seen = HashMap::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let line = row + 2;
        let src_id = record.get(0).unwrap_or_default();
        let dst_id = record.get(1).unwrap_or_default();
        let src = units
            .index_of(src_id)
            .ok_or_else(|| anyhow!("line {line}: unknown unit id `{src_id}`"))?;
        let dst = units
            .index_of(dst_id)
            .ok_or_else(|| anyhow!("line {line}: unknown unit id `{dst_id}`"))?;
        if src == dst {
            bail!("line {line}: self-distance for unit `{src_id}`");
        }
        if seen.insert((src, dst), line).is_some() {
            bail!("line {line}: duplicate pair `{src_id}` -> `{dst_id}`");
        }
        let value = if ranked {
            let rank: u64 = record
                .get(2)
                .unwrap_or_default()
                .parse()
                .with_context(|| format!("line {line}: rank must be a positive integer"))?;
            if rank == 0 {
                bail!("line {line}: rank must be at least 1");
            }
            rank as f64
        } else {
            let d: f64 = record
                .get(2)
                .unwrap_or_default()
                .parse()
                .with_context(|| format!("line {line}: distance must be a number"))?;
            if !d.is_finite() || d < 0.0 {
                bail!("line {line}: distance must be finite and nonnegative, got {d}");
            }
            d
        };
        edges.push((src, dst, value));
    }
    Ok(edges)
}

/// Assemble the dense matrix. Listed pairs keep their distance; missing
/// pairs get a value strictly beyond the largest listed distance so they
/// sort last and are never selected as neighbors. Every unit must list at
/// least `k` partners.
pub fn build_distance_matrix(
    units: &UnitsTable,
    edges: &[(usize, usize, f64)],
    k: usize,
) -> Result<DistanceMatrix, CliError> {
    let n = units.n();
    let mut out_degree = vec![0usize; n];
    let mut max_listed = 0.0f64;
    for &(src, _, d) in edges {
        out_degree[src] += 1;
        max_listed = max_listed.max(d);
    }
    if let Some(short) = (0..n).find(|&i| out_degree[i] < k) {
        return Err(CliError::design(anyhow!(
            "unit `{}` lists only {} partner(s) but k = {k} neighbors are required; \
             unlisted pairs are never neighbors",
            units.ids[short],
            out_degree[short]
        )));
    }
    let unlisted = max_listed + 1.0;
    let mut dense = vec![unlisted; n * n];
    for &(src, dst, d) in edges {
        dense[src * n + dst] = d;
    }
    DistanceMatrix::from_fn(n, |i, j| dense[i * n + j]).map_err(CliError::input)
}
