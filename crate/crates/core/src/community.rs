//! Louvain community detection with a resolution parameter.
//!
//! Weighted modularity of a partition is
//!
//! ```text
//! Q = 1/(2m) Σ_ij [A_ij - k_i k_j / (2m)] δ(c_i, c_j)
//! ```
//!
//! The local-move phase isolates a vertex, scores inserting it into each
//! neighbouring community with [`delta_q`], and moves it when the best
//! neighbour beats re-insertion into its own community. Communities are then
//! collapsed into super-vertices (internal weight kept as a self-loop) and the
//! search repeats until a level makes no move.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netbuild::WeightedGraph;

/// Smallest net gain that counts as an improvement.
pub const MIN_GAIN: f64 = 1e-12;

/// Where the resolution parameter enters the gain.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResolutionMode {
    /// `γ` scales the link term `k_{j,in}`; smaller `γ` gives more communities.
    #[default]
    Literal,
    /// `γ` scales the degree null model (Reichardt–Bornholdt); larger `γ`
    /// gives more communities.
    Standard,
}

impl ResolutionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ResolutionMode::Literal => "literal",
            ResolutionMode::Standard => "standard",
        }
    }
}

impl fmt::Display for ResolutionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ResolutionMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "literal" => Ok(ResolutionMode::Literal),
            "standard" => Ok(ResolutionMode::Standard),
            other => Err(format!("unknown resolution mode {other:?} (literal|standard)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LouvainConfig {
    pub gamma: f64,
    pub mode: ResolutionMode,
}

impl Default for LouvainConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            mode: ResolutionMode::Literal,
        }
    }
}

/// Assignment of every vertex to one of `k` dense labels `0..k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Partition {
    labels: Vec<usize>,
    k: usize,
}

impl Partition {
    /// Relabel densely in order of first appearance.
    pub fn from_labels<L: Copy + Eq + std::hash::Hash>(raw: &[L]) -> Self {
        let mut map = std::collections::HashMap::new();
        let labels = raw
            .iter()
            .map(|l| {
                let next = map.len();
                *map.entry(*l).or_insert(next)
            })
            .collect();
        Self { labels, k: map.len() }
    }

    pub fn singletons(n: usize) -> Self {
        Self {
            labels: (0..n).collect(),
            k: n,
        }
    }

    pub fn whole(n: usize) -> Self {
        Self {
            labels: vec![0; n],
            k: usize::from(n > 0),
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, v: usize) -> usize {
        self.labels[v]
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Members of each cluster, ascending.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (v, &c) in self.labels.iter().enumerate() {
            out[c].push(v);
        }
        out
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.k];
        for &c in &self.labels {
            out[c] += 1;
        }
        out
    }

    /// Partition CSV `curve_id,cluster_label`.
    pub fn write_csv<W: Write>(&self, out: W, curve_ids: &[u64]) -> Result<()> {
        if curve_ids.len() != self.len() {
            return Err(Error::InvalidPartition(format!(
                "{} curve ids for {} vertices",
                curve_ids.len(),
                self.len()
            )));
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["curve_id", "cluster_label"])?;
        for (id, c) in curve_ids.iter().zip(&self.labels) {
            w.write_record([id.to_string(), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read a partition CSV; rows are matched to `curve_ids` order.
    pub fn read_csv<R: Read>(input: R, curve_ids: &[u64]) -> Result<Self> {
        let mut by_id = std::collections::HashMap::new();
        let mut rdr = csv::Reader::from_reader(input);
        for rec in rdr.records() {
            let rec = rec?;
            let id: u64 = rec[0]
                .parse()
                .map_err(|_| Error::Format(format!("bad curve id {:?}", &rec[0])))?;
            let label: usize = rec[1]
                .parse()
                .map_err(|_| Error::Format(format!("bad label {:?}", &rec[1])))?;
            by_id.insert(id, label);
        }
        let raw = curve_ids
            .iter()
            .map(|id| {
                by_id
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::InvalidPartition(format!("curve {id} has no label")))
            })
            .collect::<Result<Vec<_>>>()?;
        if by_id.len() != curve_ids.len() {
            return Err(Error::InvalidPartition("partition has extra curves".into()));
        }
        Ok(Self::from_labels(&raw))
    }
}

/// Adjacency form used inside Louvain.
///
/// Off-diagonal weights are stored in both directions; `self_loops[v]` holds
/// the diagonal entry `A_vv`, which for a collapsed community is the internal
/// weight counted in both directions.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelGraph {
    adj: Vec<Vec<(usize, f64)>>,
    self_loops: Vec<f64>,
    degree: Vec<f64>,
}

impl From<&WeightedGraph> for LevelGraph {
    fn from(g: &WeightedGraph) -> Self {
        let mut adj = vec![Vec::new(); g.n()];
        for e in g.edges() {
            adj[e.a].push((e.b, e.weight));
            adj[e.b].push((e.a, e.weight));
        }
        adj.iter_mut().for_each(|l| l.sort_by_key(|&(u, _)| u));
        Self::from_parts(adj, vec![0.0; g.n()])
    }
}

impl LevelGraph {
    fn from_parts(adj: Vec<Vec<(usize, f64)>>, self_loops: Vec<f64>) -> Self {
        let degree = adj
            .iter()
            .zip(&self_loops)
            .map(|(l, s)| s + l.iter().map(|&(_, w)| w).sum::<f64>())
            .collect();
        Self {
            adj,
            self_loops,
            degree,
        }
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.adj[v]
    }

    pub fn self_loop(&self, v: usize) -> f64 {
        self.self_loops[v]
    }

    /// `k_v = Σ_u A_vu`, self-loop included once.
    pub fn degree(&self, v: usize) -> f64 {
        self.degree[v]
    }

    /// `2m = Σ_uv A_uv`.
    pub fn two_m(&self) -> f64 {
        self.degree.iter().sum()
    }

    /// Modularity of an arbitrary (not necessarily dense) labelling.
    pub fn modularity(&self, labels: &[usize]) -> Result<f64> {
        if labels.len() != self.n() {
            return Err(Error::InvalidPartition(format!(
                "{} labels for {} vertices",
                labels.len(),
                self.n()
            )));
        }
        let two_m = self.two_m();
        if two_m <= 0.0 {
            return Err(Error::EmptyGraph);
        }
        let slots = labels.iter().max().map_or(0, |m| m + 1);
        let mut internal = vec![0.0; slots];
        let mut total = vec![0.0; slots];
        for v in 0..self.n() {
            let c = labels[v];
            total[c] += self.degree[v];
            internal[c] += self.self_loops[v];
            for &(u, w) in &self.adj[v] {
                if labels[u] == c {
                    internal[c] += w;
                }
            }
        }
        Ok(internal
            .iter()
            .zip(&total)
            .map(|(i, t)| i / two_m - (t / two_m) * (t / two_m))
            .sum())
    }

    /// Collapse each community of a dense labelling into one vertex.
    pub fn aggregate(&self, labels: &[usize], k: usize) -> LevelGraph {
        let mut members = vec![Vec::new(); k];
        for (v, &c) in labels.iter().enumerate() {
            members[c].push(v);
        }
        let mut acc = vec![0.0; k];
        let mut seen = vec![false; k];
        let mut touched = Vec::new();
        let mut adj = Vec::with_capacity(k);
        let mut self_loops = Vec::with_capacity(k);
        for (c, vs) in members.iter().enumerate() {
            let mut internal = 0.0;
            for &v in vs {
                internal += self.self_loops[v];
                for &(u, w) in &self.adj[v] {
                    let d = labels[u];
                    if d == c {
                        internal += w;
                    } else {
                        if !seen[d] {
                            seen[d] = true;
                            touched.push(d);
                        }
                        acc[d] += w;
                    }
                }
            }
            touched.sort_unstable();
            let row: Vec<(usize, f64)> = touched.iter().map(|&d| (d, acc[d])).collect();
            for &d in &touched {
                acc[d] = 0.0;
                seen[d] = false;
            }
            touched.clear();
            adj.push(row);
            self_loops.push(internal);
        }
        LevelGraph::from_parts(adj, self_loops)
    }
}

/// Newman modularity of a partition of `g`.
pub fn modularity(g: &WeightedGraph, p: &Partition) -> Result<f64> {
    LevelGraph::from(g).modularity(p.labels())
}

/// Community totals consumed by [`delta_q`].
///
/// `sigma_in[c]` is `Σ_{u,v ∈ c} A_uv` (ordered pairs, so internal edges count
/// twice and self-loops once); `sigma_tot[c]` is the summed degree of `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct CommunityAggregates {
    pub sigma_in: Vec<f64>,
    pub sigma_tot: Vec<f64>,
    pub two_m: f64,
}

impl CommunityAggregates {
    /// Totals for a labelling of a level graph.
    pub fn new(g: &LevelGraph, labels: &[usize]) -> Self {
        let slots = labels.iter().max().map_or(0, |m| m + 1);
        let mut sigma_in = vec![0.0; slots];
        let mut sigma_tot = vec![0.0; slots];
        for v in 0..g.n() {
            let c = labels[v];
            sigma_tot[c] += g.degree(v);
            sigma_in[c] += g.self_loop(v);
            for &(u, w) in g.neighbors(v) {
                if labels[u] == c {
                    sigma_in[c] += w;
                }
            }
        }
        Self {
            sigma_in,
            sigma_tot,
            two_m: g.two_m(),
        }
    }
}

/// Gain of inserting an isolated vertex into `target`.
///
/// `k_j` is the vertex degree and `k_j_in` the weight it adds to the target's
/// `Σ_in`, i.e. twice its link weight into the target. In literal mode:
///
/// ```text
/// ΔQ = [(Σ_in + γ k_j,in)/2m - ((Σ_tot + k_j)/2m)^2] - [Σ_in/2m - (Σ_tot/2m)^2 - (k_j/2m)^2]
/// ```
///
/// Standard mode moves `γ` onto the three squared terms instead. With `γ = 1`
/// both equal the exact modularity change.
pub fn delta_q(
    agg: &CommunityAggregates,
    target: usize,
    k_j: f64,
    k_j_in: f64,
    gamma: f64,
    mode: ResolutionMode,
) -> f64 {
    let two_m = agg.two_m;
    let sin = agg.sigma_in.get(target).copied().unwrap_or(0.0);
    let stot = agg.sigma_tot.get(target).copied().unwrap_or(0.0);
    let sq = |x: f64| (x / two_m) * (x / two_m);
    let (link, null) = match mode {
        ResolutionMode::Literal => (gamma, 1.0),
        ResolutionMode::Standard => (1.0, gamma),
    };
    let after = (sin + link * k_j_in) / two_m - null * sq(stot + k_j);
    let before = sin / two_m - null * sq(stot) - null * sq(k_j);
    after - before
}

/// A gain evaluation made during the local-move phase.
#[derive(Debug)]
pub struct MoveProbe<'a> {
    /// Coarsening level, 0 for the input graph.
    pub level: usize,
    pub graph: &'a LevelGraph,
    /// Current labels of the level graph; `labels[vertex]` holds a fresh label
    /// (`graph.n()`) because the vertex is isolated while it is scored.
    pub labels: &'a [usize],
    pub vertex: usize,
    pub target: usize,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LouvainResult {
    pub partition: Partition,
    /// Modularity of the flattened partition after each pass.
    pub q_history: Vec<f64>,
    /// Number of local-move passes run (the last one made no move).
    pub passes: usize,
    pub config: LouvainConfig,
}

impl LouvainResult {
    pub fn final_q(&self) -> f64 {
        self.q_history.last().copied().unwrap_or(0.0)
    }
}

pub fn louvain(g: &WeightedGraph, config: LouvainConfig) -> Result<LouvainResult> {
    louvain_observed(g, config, |_| {})
}

/// [`louvain`] that reports every gain evaluation to `observe`.
pub fn louvain_observed<F>(g: &WeightedGraph, config: LouvainConfig, mut observe: F) -> Result<LouvainResult>
where
    F: FnMut(&MoveProbe<'_>),
{
    if !(config.gamma.is_finite() && config.gamma >= 0.0) {
        return Err(Error::InvalidGrid(format!("gamma must be >= 0, got {}", config.gamma)));
    }
    let base = LevelGraph::from(g);
    if base.two_m() <= 0.0 {
        return Err(Error::EmptyGraph);
    }

    let mut flat: Vec<usize> = (0..g.n()).collect();
    let mut level_graph = base.clone();
    let mut q_history = Vec::new();
    let mut passes = 0;

    loop {
        let (labels, moved) = local_moves(&level_graph, passes, config, &mut observe);
        passes += 1;
        let dense = Partition::from_labels(&labels);
        for v in flat.iter_mut() {
            *v = dense.label(*v);
        }
        q_history.push(base.modularity(&flat)?);
        if !moved {
            break;
        }
        level_graph = level_graph.aggregate(dense.labels(), dense.k());
    }

    Ok(LouvainResult {
        partition: Partition::from_labels(&flat),
        q_history,
        passes,
        config,
    })
}

/// One local-move phase on a level graph, starting from singletons.
fn local_moves<F>(g: &LevelGraph, level: usize, config: LouvainConfig, observe: &mut F) -> (Vec<usize>, bool)
where
    F: FnMut(&MoveProbe<'_>),
{
    let n = g.n();
    let isolated = n;
    let mut labels: Vec<usize> = (0..n).collect();
    let mut agg = CommunityAggregates::new(g, &labels);
    let mut link = vec![0.0; n];
    let mut seen = vec![false; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut moved_any = false;

    loop {
        let mut moved = false;
        for j in 0..n {
            let own = labels[j];
            for &(u, w) in g.neighbors(j) {
                let c = labels[u];
                if !seen[c] {
                    seen[c] = true;
                    touched.push(c);
                }
                link[c] += w;
            }
            touched.sort_unstable();

            let k_j = g.degree(j);
            agg.sigma_tot[own] -= k_j;
            agg.sigma_in[own] -= 2.0 * link[own] + g.self_loop(j);
            labels[j] = isolated;

            let mut score = |c: usize, labels: &[usize]| {
                let gain = delta_q(&agg, c, k_j, 2.0 * link[c], config.gamma, config.mode);
                observe(&MoveProbe {
                    level,
                    graph: g,
                    labels,
                    vertex: j,
                    target: c,
                    gain,
                });
                gain
            };

            let stay = score(own, &labels);
            let mut best: Option<(usize, f64)> = None;
            for &c in &touched {
                if c == own {
                    continue;
                }
                let gain = score(c, &labels);
                if best.is_none_or(|(_, b)| gain > b) {
                    best = Some((c, gain));
                }
            }
            let target = match best {
                Some((c, gain)) if gain - stay > MIN_GAIN => c,
                _ => own,
            };

            labels[j] = target;
            agg.sigma_tot[target] += k_j;
            agg.sigma_in[target] += 2.0 * link[target] + g.self_loop(j);
            if target != own {
                moved = true;
            }
            for &c in &touched {
                link[c] = 0.0;
                seen[c] = false;
            }
            touched.clear();
        }
        if !moved {
            break;
        }
        moved_any = true;
    }
    (labels, moved_any)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Modularity as a literal double sum over a dense matrix.
    fn dense_modularity(n: usize, edges: &[(usize, usize, f64)], labels: &[usize]) -> f64 {
        let mut a = vec![vec![0.0; n]; n];
        for &(u, v, w) in edges {
            a[u][v] += w;
            a[v][u] += w;
        }
        let k: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
        let two_m: f64 = k.iter().sum();
        let mut q = 0.0;
        for i in 0..n {
            for j in 0..n {
                if labels[i] == labels[j] {
                    q += a[i][j] - k[i] * k[j] / two_m;
                }
            }
        }
        q / two_m
    }

    fn two_triangles() -> WeightedGraph {
        WeightedGraph::from_edges(
            6,
            [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0), (3, 4, 1.0), (4, 5, 1.0), (3, 5, 1.0)],
        )
        .unwrap()
    }

    #[test]
    fn whole_graph_has_zero_modularity() {
        let g = two_triangles();
        assert_eq!(modularity(&g, &Partition::whole(6)).unwrap(), 0.0);
    }

    #[test]
    fn triangles_have_half_modularity() {
        let g = two_triangles();
        let p = Partition::from_labels(&[0, 0, 0, 1, 1, 1]);
        assert!((modularity(&g, &p).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn singleton_modularity_is_minus_degree_squares() {
        let edges = [(0, 1, 0.5), (1, 2, 1.0), (2, 3, 0.25)];
        let g = WeightedGraph::from_edges(4, edges).unwrap();
        let k = [0.5, 1.5, 1.25, 0.25];
        let two_m: f64 = k.iter().sum();
        let expected = -k.iter().map(|x| x * x).sum::<f64>() / (two_m * two_m);
        let q = modularity(&g, &Partition::singletons(4)).unwrap();
        assert!((q - expected).abs() < 1e-15);
        assert!(q <= 0.0);
    }

    #[test]
    fn modularity_needs_weight() {
        let g = WeightedGraph::from_edges(2, [(0, 1, 0.0)]).unwrap();
        assert!(matches!(modularity(&g, &Partition::whole(2)), Err(Error::EmptyGraph)));
        assert!(matches!(louvain(&g, LouvainConfig::default()), Err(Error::EmptyGraph)));
    }

    #[test]
    fn gain_without_links_is_negative() {
        let agg = CommunityAggregates {
            sigma_in: vec![2.0],
            sigma_tot: vec![3.0],
            two_m: 10.0,
        };
        let k_j = 1.5;
        let gain = delta_q(&agg, 0, k_j, 0.0, 1.0, ResolutionMode::Literal);
        let expected = -(3.0 * k_j) / (2.0 * 25.0);
        assert!((gain - expected).abs() < 1e-15);
        // γ = 0 removes the link term entirely
        let zero = delta_q(&agg, 0, k_j, 4.0, 0.0, ResolutionMode::Literal);
        assert!((zero - expected).abs() < 1e-15);
    }

    #[test]
    fn gamma_zero_keeps_everything_isolated() {
        let g = two_triangles();
        let r = louvain(&g, LouvainConfig { gamma: 0.0, mode: ResolutionMode::Literal }).unwrap();
        assert_eq!(r.partition.k(), 6);
    }

    #[test]
    fn louvain_finds_the_triangles() {
        let r = louvain(&two_triangles(), LouvainConfig::default()).unwrap();
        assert_eq!(r.partition.labels(), &[0, 0, 0, 1, 1, 1]);
        assert!((r.final_q() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn single_edge_merges() {
        let g = WeightedGraph::from_edges(2, [(0, 1, 0.7)]).unwrap();
        let r = louvain(&g, LouvainConfig::default()).unwrap();
        assert_eq!(r.partition.k(), 1);
    }

    #[test]
    fn aggregation_conserves_weight() {
        let g = WeightedGraph::from_edges(5, [(0, 1, 0.5), (1, 2, 0.25), (2, 3, 1.0), (3, 4, 0.75), (0, 4, 0.1)])
            .unwrap();
        let lg = LevelGraph::from(&g);
        let labels = [0, 0, 1, 1, 1];
        let coarse = lg.aggregate(&labels, 2);
        assert!((coarse.two_m() - lg.two_m()).abs() < 1e-12);
        assert!((coarse.self_loop(0) - 1.0).abs() < 1e-15);
        assert!((coarse.self_loop(1) - 3.5).abs() < 1e-15);
        // modularity is preserved by collapsing
        let q_fine = lg.modularity(&labels).unwrap();
        let q_coarse = coarse.modularity(&[0, 1]).unwrap();
        assert!((q_fine - q_coarse).abs() < 1e-12);
    }

    #[test]
    fn partition_csv_round_trip() {
        let p = Partition::from_labels(&[3, 3, 7, 1]);
        assert_eq!(p.labels(), &[0, 0, 1, 2]);
        let ids = [10, 20, 30, 40];
        let mut buf = Vec::new();
        p.write_csv(&mut buf, &ids).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "curve_id,cluster_label\n10,0\n20,0\n30,1\n40,2\n"
        );
        assert_eq!(Partition::read_csv(buf.as_slice(), &ids).unwrap(), p);
        assert!(Partition::read_csv(buf.as_slice(), &[10, 20, 30]).is_err());
    }

    fn random_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize, f64)>)> {
        (2usize..25).prop_flat_map(|n| {
            let pairs: Vec<(usize, usize)> =
                (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
            let m = pairs.len();
            (
                Just(n),
                Just(pairs),
                prop::collection::vec(prop::option::weighted(0.3, 0.0f64..=1.0), m),
            )
                .prop_map(|(n, pairs, ws)| {
                    let edges = pairs
                        .into_iter()
                        .zip(ws)
                        .filter_map(|((i, j), w)| w.map(|w| (i, j, w)))
                        .collect();
                    (n, edges)
                })
        })
    }

    proptest! {
        #[test]
        fn modularity_matches_dense_sum((n, edges) in random_graph(), raw in prop::collection::vec(0usize..4, 25)) {
            let g = WeightedGraph::from_edges(n, edges.iter().copied()).unwrap();
            prop_assume!(g.total_weight() > 0.0);
            let p = Partition::from_labels(&raw[..n]);
            let q = modularity(&g, &p).unwrap();
            prop_assert!((q - dense_modularity(n, &edges, p.labels())).abs() < 1e-12);
        }

        #[test]
        fn gains_equal_modularity_differences((n, edges) in random_graph()) {
            let g = WeightedGraph::from_edges(n, edges).unwrap();
            prop_assume!(g.total_weight() > 0.0);
            let mut worst: f64 = 0.0;
            louvain_observed(&g, LouvainConfig::default(), |probe| {
                let before = probe.graph.modularity(probe.labels).unwrap();
                let mut after = probe.labels.to_vec();
                after[probe.vertex] = probe.target;
                let after = probe.graph.modularity(&after).unwrap();
                worst = worst.max(((after - before) - probe.gain).abs());
            }).unwrap();
            prop_assert!(worst <= 1e-9);
        }

        #[test]
        fn history_non_decreasing_and_weight_conserved((n, edges) in random_graph(), gamma in 0.0f64..=1.0) {
            let g = WeightedGraph::from_edges(n, edges).unwrap();
            prop_assume!(g.total_weight() > 0.0);
            let two_m = 2.0 * g.total_weight();
            let mut level_weights = Vec::new();
            let r = louvain_observed(&g, LouvainConfig { gamma: 1.0, mode: ResolutionMode::Literal }, |probe| {
                level_weights.push(probe.graph.two_m());
            }).unwrap();
            prop_assert!(r.q_history.windows(2).all(|w| w[1] >= w[0] - 1e-12));
            prop_assert!(level_weights.iter().all(|w| (w - two_m).abs() < 1e-9));
            // deterministic
            let again = louvain(&g, LouvainConfig { gamma: 1.0, mode: ResolutionMode::Literal }).unwrap();
            prop_assert_eq!(&again, &r);
            // any γ in [0,1] terminates with a valid partition
            let rg = louvain(&g, LouvainConfig { gamma, mode: ResolutionMode::Literal }).unwrap();
            prop_assert_eq!(rg.partition.len(), n);
        }
    }
}
