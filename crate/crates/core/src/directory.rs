//! Multi-layer typical-load-profile directory from a resolution sweep.
//!
//! Every γ of a descending grid is clustered, summarised by DBA profiles and
//! scored with VCN; each cluster-count interval then keeps its best-scoring
//! sweep point as one layer.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::centers::{extract_tlps, DbaConfig, TypicalLoadProfile};
use crate::community::{louvain, LouvainConfig, Partition, ResolutionMode};
use crate::dtw::{dtw_distance, DistanceMatrix, DtwParams};
use crate::error::{Error, Result};
use crate::fmt::fmt_f64;
use crate::netbuild::WeightedGraph;
use crate::validity::{vcn, ClusterStats};

/// Descending resolution grid `start, start - step, …` down to `end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaGrid {
    pub start: f64,
    pub end: f64,
    pub step: f64,
}

impl Default for GammaGrid {
    fn default() -> Self {
        Self {
            start: 1.0,
            end: 0.7,
            step: 0.01,
        }
    }
}

impl GammaGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        let GammaGrid { start, end, step } = *self;
        if !(start.is_finite() && end.is_finite() && step.is_finite()) {
            return Err(Error::InvalidGrid("grid bounds must be finite".into()));
        }
        if !(end > 0.0 && start >= end) {
            return Err(Error::InvalidGrid(format!("need start >= end > 0, got {start} and {end}")));
        }
        if step <= 0.0 {
            return Err(Error::InvalidGrid(format!("step must be positive, got {step}")));
        }
        // index-based to avoid accumulating the step
        let count = ((start - end) / step + 1e-9).floor() as usize + 1;
        Ok((0..count)
            .map(|i| {
                let g = start - i as f64 * step;
                (g * 1e12).round() / 1e12
            })
            .collect())
    }
}

/// Cluster-count interval `[lo, hi)`; `hi = None` is unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: usize,
    pub hi: Option<usize>,
}

impl Interval {
    pub fn contains(&self, k: usize) -> bool {
        k >= self.lo && self.hi.is_none_or(|h| k < h)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.hi {
            Some(h) => write!(f, "[{},{})", self.lo, h),
            None => write!(f, "[{},inf)", self.lo),
        }
    }
}

/// Consecutive intervals from ascending boundaries: `1,10,100` gives
/// `[1,10) [10,100) [100,inf)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Intervals(pub Vec<Interval>);

impl Default for Intervals {
    fn default() -> Self {
        Self::from_bounds(&[1, 10, 100]).expect("valid defaults")
    }
}

impl Intervals {
    pub fn from_bounds(bounds: &[usize]) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::InvalidIntervals("no boundaries".into()));
        }
        if bounds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidIntervals(format!("boundaries {bounds:?} must strictly increase")));
        }
        let mut out: Vec<Interval> = bounds
            .windows(2)
            .map(|w| Interval { lo: w[0], hi: Some(w[1]) })
            .collect();
        out.push(Interval { lo: *bounds.last().expect("non-empty"), hi: None });
        Ok(Self(out))
    }

    pub fn bounds(&self) -> Vec<usize> {
        self.0.iter().map(|i| i.lo).collect()
    }
}

impl FromStr for Intervals {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bounds = s
            .split(',')
            .map(|b| {
                b.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidIntervals(format!("bad boundary {b:?} in {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_bounds(&bounds)
    }
}

impl fmt::Display for Intervals {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b: Vec<String> = self.bounds().iter().map(|b| b.to_string()).collect();
        f.write_str(&b.join(","))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub mode: ResolutionMode,
    /// Distance used for VCN and variance.
    pub dtw: DtwParams,
    pub dba: DbaConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub gamma: f64,
    pub k: usize,
    /// `None` when k = 1.
    pub vcn: Option<f64>,
    pub q: f64,
    pub variance: f64,
    pub partition: Partition,
    pub tlps: Vec<TypicalLoadProfile>,
}

/// Mean over clusters of the mean squared DTW distance from members to the
/// cluster center.
pub fn within_cluster_variance<C, P>(partition: &Partition, curves: &[C], centers: &[P], params: DtwParams) -> Result<f64>
where
    C: AsRef<[f64]> + Sync,
    P: AsRef<[f64]> + Sync,
{
    if centers.len() != partition.k() || curves.len() != partition.len() {
        return Err(Error::InvalidPartition(format!(
            "{} centers and {} curves for a partition of {} into {}",
            centers.len(),
            curves.len(),
            partition.len(),
            partition.k()
        )));
    }
    let per_cluster = partition
        .clusters()
        .par_iter()
        .enumerate()
        .map(|(c, members)| {
            let mut sum = 0.0;
            for &i in members {
                let d = dtw_distance(curves[i].as_ref(), centers[c].as_ref(), params)?;
                sum += d * d;
            }
            Ok(sum / members.len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(per_cluster.iter().sum::<f64>() / per_cluster.len() as f64)
}

fn sweep_point<C>(g: &WeightedGraph, gamma: f64, curves: &[C], dm: &DistanceMatrix, cfg: SweepConfig) -> Result<SweepPoint>
where
    C: AsRef<[f64]> + Sync,
{
    let result = louvain(g, LouvainConfig { gamma, mode: cfg.mode })?;
    let partition = result.partition.clone();
    let tlps = extract_tlps(&partition, curves, dm, cfg.dba)?;
    let vcn = if partition.k() >= 2 {
        Some(vcn(&ClusterStats::new(curves, &partition, &tlps, cfg.dtw)?)?)
    } else {
        None
    };
    Ok(SweepPoint {
        gamma,
        k: partition.k(),
        vcn,
        q: result.final_q(),
        variance: within_cluster_variance(&partition, curves, &tlps, cfg.dtw)?,
        partition,
        tlps,
    })
}

/// One scored clustering per grid value, in grid order.
pub fn gamma_sweep<C>(g: &WeightedGraph, grid: &[f64], curves: &[C], dm: &DistanceMatrix, cfg: SweepConfig) -> Result<Vec<SweepPoint>>
where
    C: AsRef<[f64]> + Sync,
{
    if curves.len() != g.n() || dm.n() != g.n() {
        return Err(Error::InvalidPartition(format!(
            "graph of {} vertices, {} curves, {}-curve matrix",
            g.n(),
            curves.len(),
            dm.n()
        )));
    }
    grid.par_iter().map(|&gamma| sweep_point(g, gamma, curves, dm, cfg)).collect()
}

/// Plot-ready `gamma,k,vcn,Q,variance`; undefined VCN is written as `NaN`.
pub fn write_sweep_csv<W: Write>(out: W, sweep: &[SweepPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["gamma", "k", "vcn", "Q", "variance"])?;
    for p in sweep {
        w.write_record([
            fmt_f64(p.gamma),
            p.k.to_string(),
            p.vcn.map_or_else(|| "NaN".to_string(), fmt_f64),
            fmt_f64(p.q),
            fmt_f64(p.variance),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub interval: Interval,
    /// Index into the sweep of the chosen point.
    pub chosen: Option<usize>,
    pub point: Option<SweepPoint>,
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TlpDirectory {
    pub layers: Vec<Layer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSummary {
    pub interval: String,
    pub gamma: Option<f64>,
    pub k: Option<usize>,
    pub vcn: Option<f64>,
    pub q: Option<f64>,
    pub variance: Option<f64>,
    pub diagnostic: Option<String>,
}

impl TlpDirectory {
    pub fn summary(&self) -> Vec<LayerSummary> {
        self.layers
            .iter()
            .map(|l| LayerSummary {
                interval: l.interval.to_string(),
                gamma: l.point.as_ref().map(|p| p.gamma),
                k: l.point.as_ref().map(|p| p.k),
                vcn: l.point.as_ref().and_then(|p| p.vcn),
                q: l.point.as_ref().map(|p| p.q),
                variance: l.point.as_ref().map(|p| p.variance),
                diagnostic: l.diagnostic.clone(),
            })
            .collect()
    }

    pub fn non_empty(&self) -> impl Iterator<Item = &SweepPoint> {
        self.layers.iter().filter_map(|l| l.point.as_ref())
    }
}

/// Best-VCN sweep point per interval; ties go to the larger γ and k = 1
/// points are never chosen.
pub fn build_directory(sweep: &[SweepPoint], intervals: &Intervals) -> Result<TlpDirectory> {
    if sweep.is_empty() {
        return Err(Error::EmptyDirectory);
    }
    let iv = &intervals.0;
    for w in iv.windows(2) {
        if w[0].hi.is_none_or(|h| h > w[1].lo) {
            return Err(Error::InvalidIntervals(format!("{} overlaps {}", w[0], w[1])));
        }
    }
    let layers: Vec<Layer> = iv
        .iter()
        .map(|&interval| {
            let mut best: Option<usize> = None;
            for (i, p) in sweep.iter().enumerate() {
                let Some(v) = p.vcn else { continue };
                if !interval.contains(p.k) {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some(b) => {
                        let bv = sweep[b].vcn.expect("chosen points have VCN");
                        v > bv || (v == bv && p.gamma > sweep[b].gamma)
                    }
                };
                if better {
                    best = Some(i);
                }
            }
            Layer {
                interval,
                chosen: best,
                point: best.map(|b| sweep[b].clone()),
                diagnostic: best
                    .is_none()
                    .then(|| format!("no sweep point with k >= 2 in {interval}")),
            }
        })
        .collect();
    if layers.iter().all(|l| l.point.is_none()) {
        return Err(Error::EmptyDirectory);
    }
    Ok(TlpDirectory { layers })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_has_31_points() {
        let g = GammaGrid::default().values().unwrap();
        assert_eq!(g.len(), 31);
        assert_eq!(g[0], 1.0);
        assert_eq!(g[30], 0.7);
        assert_eq!(g[13], 0.87);
        assert!(g.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn single_point_grid() {
        let g = GammaGrid { start: 0.5, end: 0.5, step: 0.1 }.values().unwrap();
        assert_eq!(g, vec![0.5]);
        assert!(GammaGrid { start: 0.5, end: 0.0, step: 0.1 }.values().is_err());
        assert!(GammaGrid { start: 0.5, end: 0.6, step: 0.1 }.values().is_err());
        assert!(GammaGrid { start: 1.0, end: 0.5, step: 0.0 }.values().is_err());
    }

    #[test]
    fn interval_parsing() {
        let iv: Intervals = "1,10,100".parse().unwrap();
        assert_eq!(iv, Intervals::default());
        let shown: Vec<String> = iv.0.iter().map(|i| i.to_string()).collect();
        assert_eq!(shown, ["[1,10)", "[10,100)", "[100,inf)"]);
        assert!(iv.0[2].contains(297));
        assert!(!iv.0[0].contains(10));
        assert!("10,1".parse::<Intervals>().is_err());
        assert!("a".parse::<Intervals>().is_err());
        assert_eq!(iv.to_string(), "1,10,100");
    }

    fn point(gamma: f64, k: usize, vcn: Option<f64>, variance: f64) -> SweepPoint {
        SweepPoint {
            gamma,
            k,
            vcn,
            q: 0.0,
            variance,
            partition: Partition::singletons(k),
            tlps: Vec::new(),
        }
    }

    #[test]
    fn selection_rules() {
        let sweep = vec![
            point(1.0, 1, None, 9.0),
            point(0.9, 5, Some(0.4), 3.0),
            point(0.8, 6, Some(0.6), 2.0),
            point(0.7, 7, Some(0.6), 1.5),
            point(0.6, 40, Some(0.1), 0.5),
        ];
        let dir = build_directory(&sweep, &Intervals::default()).unwrap();
        assert_eq!(dir.layers[0].chosen, Some(2));
        assert_eq!(dir.layers[1].chosen, Some(4));
        assert_eq!(dir.layers[2].chosen, None);
        assert!(dir.layers[2].diagnostic.as_ref().unwrap().contains("[100,inf)"));
        assert_eq!(dir.non_empty().count(), 2);
    }

    #[test]
    fn one_point_one_interval() {
        let sweep = vec![point(1.0, 3, Some(-0.2), 1.0)];
        let iv = Intervals::from_bounds(&[1]).unwrap();
        let dir = build_directory(&sweep, &iv).unwrap();
        assert_eq!(dir.layers.len(), 1);
        assert_eq!(dir.layers[0].chosen, Some(0));
    }

    #[test]
    fn all_empty() {
        let sweep = vec![point(1.0, 1, None, 1.0)];
        assert!(matches!(build_directory(&sweep, &Intervals::default()), Err(Error::EmptyDirectory)));
        assert!(matches!(build_directory(&[], &Intervals::default()), Err(Error::EmptyDirectory)));
    }

    #[test]
    fn variance_anchors() {
        let p = DtwParams::default();
        let curves = vec![vec![0.1, 0.9], vec![0.1, 0.9], vec![0.5, 0.5]];
        let part = Partition::from_labels(&[0, 0, 1]);
        let centers = vec![vec![0.1, 0.9], vec![0.5, 0.5]];
        assert_eq!(within_cluster_variance(&part, &curves, &centers, p).unwrap(), 0.0);
        assert_eq!(within_cluster_variance(&Partition::singletons(3), &curves, &curves, p).unwrap(), 0.0);
        // one cluster, center [0.3, 0.7]: distances 0.4, 0.4, 0.4
        let v = within_cluster_variance(&Partition::whole(3), &curves, &[vec![0.3, 0.7]], p).unwrap();
        assert!((v - 0.16).abs() < 1e-12);
    }

    #[test]
    fn sweep_csv_format() {
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &[point(1.0, 1, None, 0.25), point(0.99, 2, Some(0.5), 0.125)]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "gamma,k,vcn,Q,variance\n1,1,NaN,0,0.25\n0.99,2,0.5,0,0.125\n"
        );
    }
}
