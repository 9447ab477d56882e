//! ε-nearest-neighbour network over a distance matrix.
//!
//! Every curve is a vertex. Vertex `i` gets a threshold `ε_i = λ · μ_i`, where
//! `μ_i` is its mean distance to all other curves. A pair is joined when its
//! distance is strictly below the threshold (see [`EdgeRule`] for how the two
//! endpoint thresholds combine) and weighted `1 - d / d_max`, with `d_max` the
//! largest distance among formed edges.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dtw::DistanceMatrix;
use crate::error::{Error, Result};
use crate::fmt::fmt_f64;

pub const DEFAULT_LAMBDA: f64 = 0.5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeRule {
    /// `d < ε_i || d < ε_j`
    #[default]
    Union,
    /// `d < ε_i && d < ε_j`
    Intersection,
    /// One threshold for every vertex: λ times the mean over all pairs.
    GlobalMean,
}

impl EdgeRule {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeRule::Union => "union",
            EdgeRule::Intersection => "intersection",
            EdgeRule::GlobalMean => "global-mean",
        }
    }
}

impl fmt::Display for EdgeRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EdgeRule {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "union" => Ok(EdgeRule::Union),
            "intersection" => Ok(EdgeRule::Intersection),
            "global-mean" | "global" => Ok(EdgeRule::GlobalMean),
            other => Err(format!(
                "unknown edge rule {other:?} (union|intersection|global-mean)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    pub lambda: f64,
    pub rule: EdgeRule,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            rule: EdgeRule::Union,
        }
    }
}

/// Undirected weighted edge with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    n: usize,
    edges: Vec<Edge>,
    curve_ids: Vec<u64>,
    config: GraphConfig,
    d_max: f64,
}

/// Metadata written next to the edge list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphMeta {
    pub lambda: f64,
    pub rule: EdgeRule,
    pub d_max: f64,
    pub n: usize,
    pub edge_count: usize,
    pub curve_ids: Vec<u64>,
}

impl WeightedGraph {
    /// Build a graph from explicit edges (vertex indices, any order).
    ///
    /// Rejects self-loops, duplicate pairs and weights outside `[0, 1]`.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut out: Vec<Edge> = Vec::new();
        for (u, v, w) in edges {
            if u == v || u >= n || v >= n {
                return Err(Error::Format(format!("bad edge ({u},{v}) for n={n}")));
            }
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::Format(format!("edge weight {w} outside [0,1]")));
            }
            out.push(Edge {
                a: u.min(v),
                b: u.max(v),
                weight: w,
            });
        }
        out.sort_by_key(|e| (e.a, e.b));
        if out.windows(2).any(|p| (p[0].a, p[0].b) == (p[1].a, p[1].b)) {
            return Err(Error::Format("duplicate edge".into()));
        }
        Ok(Self {
            n,
            edges: out,
            curve_ids: (0..n as u64).collect(),
            config: GraphConfig::default(),
            d_max: 0.0,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Edges sorted by `(a, b)`.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn curve_ids(&self) -> &[u64] {
        &self.curve_ids
    }

    pub fn config(&self) -> GraphConfig {
        self.config
    }

    pub fn d_max(&self) -> f64 {
        self.d_max
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.weight).sum()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        let key = (a.min(b), a.max(b));
        self.edges.binary_search_by_key(&key, |e| (e.a, e.b)).is_ok()
    }

    pub fn weight(&self, a: usize, b: usize) -> Option<f64> {
        let key = (a.min(b), a.max(b));
        self.edges
            .binary_search_by_key(&key, |e| (e.a, e.b))
            .ok()
            .map(|i| self.edges[i].weight)
    }

    pub fn meta(&self) -> GraphMeta {
        GraphMeta {
            lambda: self.config.lambda,
            rule: self.config.rule,
            d_max: self.d_max,
            n: self.n,
            edge_count: self.edges.len(),
            curve_ids: self.curve_ids.clone(),
        }
    }

    /// Edge list CSV `src_id,dst_id,weight`, endpoints as curve ids.
    pub fn write_edges_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["src_id", "dst_id", "weight"])?;
        for e in &self.edges {
            w.write_record([
                self.curve_ids[e.a].to_string(),
                self.curve_ids[e.b].to_string(),
                fmt_f64(e.weight),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_meta_json<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(crate::fmt::to_json_string(&self.meta())?.as_bytes())?;
        Ok(())
    }

    /// Rebuild a graph from its edge list and metadata.
    pub fn read<R1: Read, R2: Read>(edges_csv: R1, meta_json: R2) -> Result<Self> {
        let meta: GraphMeta = serde_json::from_reader(meta_json)?;
        if meta.curve_ids.len() != meta.n {
            return Err(Error::Format("graph metadata: curve id count != n".into()));
        }
        let index: std::collections::HashMap<u64, usize> =
            meta.curve_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let mut rdr = csv::Reader::from_reader(edges_csv);
        let mut edges = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let parse_id = |s: &str| -> Result<usize> {
                s.parse::<u64>()
                    .ok()
                    .and_then(|id| index.get(&id).copied())
                    .ok_or_else(|| Error::Format(format!("unknown curve id {s:?} in edge list")))
            };
            let weight: f64 = rec[2]
                .parse()
                .map_err(|_| Error::Format(format!("bad weight {:?}", &rec[2])))?;
            edges.push((parse_id(&rec[0])?, parse_id(&rec[1])?, weight));
        }
        let mut g = Self::from_edges(meta.n, edges)?;
        if g.edges.len() != meta.edge_count {
            return Err(Error::Format("edge count does not match metadata".into()));
        }
        g.curve_ids = meta.curve_ids;
        g.config = GraphConfig {
            lambda: meta.lambda,
            rule: meta.rule,
        };
        g.d_max = meta.d_max;
        Ok(g)
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidLambda(lambda));
    }
    Ok(())
}

/// Per-vertex thresholds `ε_i = λ · mean_{j≠i} d(i, j)`.
pub fn vertex_thresholds(dm: &DistanceMatrix, lambda: f64) -> Result<Vec<f64>> {
    let n = dm.n();
    if n < 2 {
        return Err(Error::TooFewCurves(n));
    }
    check_lambda(lambda)?;
    Ok((0..n)
        .map(|i| {
            let sum: f64 = dm.row(i).iter().sum();
            lambda * sum / (n - 1) as f64
        })
        .collect())
}

/// `λ` times the mean distance over all unordered pairs.
pub fn global_threshold(dm: &DistanceMatrix, lambda: f64) -> Result<f64> {
    let n = dm.n();
    if n < 2 {
        return Err(Error::TooFewCurves(n));
    }
    check_lambda(lambda)?;
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            sum += dm.get(i, j);
        }
    }
    Ok(lambda * sum / (n * (n - 1) / 2) as f64)
}

/// Build the ε-NN graph. Fails with [`Error::EmptyGraph`] when no pair falls
/// below its threshold.
pub fn build_graph(dm: &DistanceMatrix, config: GraphConfig) -> Result<WeightedGraph> {
    let n = dm.n();
    let thresholds = match config.rule {
        EdgeRule::GlobalMean => vec![global_threshold(dm, config.lambda)?; n],
        _ => vertex_thresholds(dm, config.lambda)?,
    };
    let joined = |i: usize, j: usize| {
        let d = dm.get(i, j);
        match config.rule {
            EdgeRule::Union | EdgeRule::GlobalMean => d < thresholds[i] || d < thresholds[j],
            EdgeRule::Intersection => d < thresholds[i] && d < thresholds[j],
        }
    };

    let pairs: Vec<(usize, usize)> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| ((i + 1)..n).filter(move |&j| joined(i, j)).map(move |j| (i, j)))
        .collect();
    if pairs.is_empty() {
        return Err(Error::EmptyGraph);
    }

    let d_max = pairs
        .iter()
        .map(|&(i, j)| dm.get(i, j))
        .fold(0.0f64, f64::max);
    let edges = pairs
        .into_iter()
        .map(|(a, b)| Edge {
            a,
            b,
            // all-zero edge distances: every edge is maximally similar
            weight: if d_max > 0.0 { 1.0 - dm.get(a, b) / d_max } else { 1.0 },
        })
        .collect();

    Ok(WeightedGraph {
        n,
        edges,
        curve_ids: dm.curve_ids().to_vec(),
        config,
        d_max,
    })
}
