//! Internal cluster-validity indices under banded DTW distance.
//!
//! Davies–Bouldin, VCN, S_Dbw, Score Function and COP score a partition
//! against per-cluster centers; consumer entropy scores how consistently each
//! household's days fall into the same cluster. Lower DB, S_Dbw and COP and
//! higher VCN and SF indicate better clusterings.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::community::Partition;
use crate::dtw::{dtw_distance, DistanceMatrix, DtwParams};
use crate::error::{Error, Result};
use crate::fmt::fmt_f64;

/// Exponent form of the Score Function.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SfMode {
    /// `SF = 1 - exp(-exp(bcd - wcd))`
    #[default]
    Corrected,
    /// `SF = 1 - exp(-exp(bcd + wcd))`
    Literal,
}

/// Neighbourhood test inside the S_Dbw density.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SdbwMode {
    /// A point counts when `d(x, φ) <= stdev`.
    #[default]
    Corrected,
    /// A point counts when `d(x, φ) > stdev`.
    Literal,
}

macro_rules! mode_str {
    ($t:ty) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self {
                    Self::Corrected => "corrected",
                    Self::Literal => "literal",
                })
            }
        }

        impl FromStr for $t {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    "corrected" => Ok(Self::Corrected),
                    "literal" => Ok(Self::Literal),
                    other => Err(format!("unknown formula mode {other:?} (corrected|literal)")),
                }
            }
        }
    };
}
mode_str!(SfMode);
mode_str!(SdbwMode);

/// Which representative the centers are.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CenterMode {
    /// DTW barycenters.
    #[default]
    Averaged,
    Medoid,
}

impl fmt::Display for CenterMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CenterMode::Averaged => "averaged",
            CenterMode::Medoid => "medoid",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IndexModes {
    pub sf: SfMode,
    pub sdbw: SdbwMode,
}

/// Distances and per-cluster summaries shared by the indices.
#[derive(Debug, Clone)]
pub struct ClusterStats {
    pub n: usize,
    pub k: usize,
    pub labels: Vec<usize>,
    pub sizes: Vec<usize>,
    pub curves: Vec<Vec<f64>>,
    pub centers: Vec<Vec<f64>>,
    /// `to_center[x][j] = d(x, c̄_j)`
    pub to_center: Vec<Vec<f64>>,
    /// `center_dist[i][j] = d(c̄_i, c̄_j)`
    pub center_dist: Vec<Vec<f64>>,
    /// Pointwise mean of all curves.
    pub data_centroid: Vec<f64>,
    /// `d(x, D̄)` per curve.
    pub to_centroid: Vec<f64>,
    /// `d(c̄_i, D̄)` per cluster.
    pub center_to_centroid: Vec<f64>,
    /// `S_{c_i}`: mean member-to-center distance.
    pub scatter: Vec<f64>,
    /// `σ_{c_i}`: mean squared member-to-center distance.
    pub variance: Vec<f64>,
    /// `σ_D`: mean squared distance to the data centroid.
    pub data_variance: f64,
    /// `sqrt(Σ σ_{c_i}) / k`
    pub stdev: f64,
    pub params: DtwParams,
}

impl ClusterStats {
    pub fn new<C, P>(curves: &[C], partition: &Partition, centers: &[P], params: DtwParams) -> Result<Self>
    where
        C: AsRef<[f64]> + Sync,
        P: AsRef<[f64]> + Sync,
    {
        let n = curves.len();
        let k = partition.k();
        if partition.len() != n {
            return Err(Error::InvalidPartition(format!("{} labels for {n} curves", partition.len())));
        }
        if centers.len() != k {
            return Err(Error::InvalidPartition(format!("{} centers for {k} clusters", centers.len())));
        }
        if n == 0 {
            return Err(Error::TooFewCurves(0));
        }
        let len = curves[0].as_ref().len();
        let curves: Vec<Vec<f64>> = curves.iter().map(|c| c.as_ref().to_vec()).collect();
        let centers: Vec<Vec<f64>> = centers.iter().map(|c| c.as_ref().to_vec()).collect();

        let mut data_centroid = vec![0.0; len];
        for c in &curves {
            if c.len() != len {
                return Err(Error::LengthMismatch { left: len, right: c.len() });
            }
            data_centroid.iter_mut().zip(c).for_each(|(a, v)| *a += v);
        }
        data_centroid.iter_mut().for_each(|a| *a /= n as f64);

        let to_center = curves
            .par_iter()
            .map(|x| centers.iter().map(|c| dtw_distance(x, c, params)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let to_centroid = curves
            .par_iter()
            .map(|x| dtw_distance(x, &data_centroid, params))
            .collect::<Result<Vec<_>>>()?;
        let center_to_centroid = centers
            .iter()
            .map(|c| dtw_distance(c, &data_centroid, params))
            .collect::<Result<Vec<_>>>()?;
        let mut center_dist = vec![vec![0.0; k]; k];
        for i in 0..k {
            for j in (i + 1)..k {
                let d = dtw_distance(&centers[i], &centers[j], params)?;
                center_dist[i][j] = d;
                center_dist[j][i] = d;
            }
        }

        let labels = partition.labels().to_vec();
        let sizes = partition.sizes();
        let mut scatter = vec![0.0; k];
        let mut variance = vec![0.0; k];
        for (x, &c) in labels.iter().enumerate() {
            let d = to_center[x][c];
            scatter[c] += d;
            variance[c] += d * d;
        }
        for c in 0..k {
            scatter[c] /= sizes[c] as f64;
            variance[c] /= sizes[c] as f64;
        }
        let data_variance = to_centroid.iter().map(|d| d * d).sum::<f64>() / n as f64;
        let stdev = variance.iter().sum::<f64>().sqrt() / k as f64;

        Ok(Self {
            n,
            k,
            labels,
            sizes,
            curves,
            centers,
            to_center,
            center_dist,
            data_centroid,
            to_centroid,
            center_to_centroid,
            scatter,
            variance,
            data_variance,
            stdev,
            params,
        })
    }

    fn require_two(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::UndefinedForSingleCluster);
        }
        Ok(())
    }

    /// Mean distance from the members of cluster `i` to center `j`.
    fn mean_to_center(&self, i: usize, j: usize) -> f64 {
        let sum: f64 = self
            .labels
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c == i)
            .map(|(x, _)| self.to_center[x][j])
            .sum();
        sum / self.sizes[i] as f64
    }
}

/// Davies–Bouldin: mean over clusters of the worst `(S_i + S_j) / d(c̄_i, c̄_j)`.
pub fn davies_bouldin(s: &ClusterStats) -> Result<f64> {
    s.require_two()?;
    let mut total = 0.0;
    for i in 0..s.k {
        let mut worst = f64::NEG_INFINITY;
        for j in 0..s.k {
            if i == j {
                continue;
            }
            let d = s.center_dist[i][j];
            if d == 0.0 {
                return Err(Error::CoincidentCenters(i.min(j), i.max(j)));
            }
            worst = worst.max((s.scatter[i] + s.scatter[j]) / d);
        }
        total += worst;
    }
    Ok(total / s.k as f64)
}

/// VCN: mean over clusters of `(bd - wd) / max(bd, wd)`, where `wd` is the
/// mean member distance to the own center and `bd` the smallest mean member
/// distance to any other center.
pub fn vcn(s: &ClusterStats) -> Result<f64> {
    s.require_two()?;
    let mut total = 0.0;
    for i in 0..s.k {
        let wd = s.mean_to_center(i, i);
        let bd = (0..s.k)
            .filter(|&j| j != i)
            .map(|j| s.mean_to_center(i, j))
            .fold(f64::INFINITY, f64::min);
        let denom = bd.max(wd);
        if denom > 0.0 {
            total += (bd - wd) / denom;
        }
    }
    Ok(total / s.k as f64)
}

/// S_Dbw = Scat + Dens_bw.
pub fn s_dbw(s: &ClusterStats, mode: SdbwMode) -> Result<f64> {
    s.require_two()?;
    let k = s.k;
    let mean_var = s.variance.iter().sum::<f64>() / k as f64;
    let scat = if s.data_variance > 0.0 { mean_var / s.data_variance } else { 0.0 };

    let counts = |d: f64| match mode {
        SdbwMode::Corrected => d <= s.stdev,
        SdbwMode::Literal => d > s.stdev,
    };
    let center_density: Vec<f64> = (0..k)
        .map(|i| {
            s.labels
                .iter()
                .enumerate()
                .filter(|&(x, &c)| c == i && counts(s.to_center[x][i]))
                .count() as f64
        })
        .collect();
    if center_density.iter().all(|&d| d == 0.0) {
        return Err(Error::DegenerateDensity);
    }

    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| ((i + 1)..k).map(move |j| (i, j))).collect();
    let mid_density = pairs
        .par_iter()
        .map(|&(i, j)| {
            let mid: Vec<f64> = s.centers[i]
                .iter()
                .zip(&s.centers[j])
                .map(|(a, b)| (a + b) / 2.0)
                .collect();
            let mut count = 0.0;
            for (x, &c) in s.labels.iter().enumerate() {
                if (c == i || c == j) && counts(dtw_distance(&s.curves[x], &mid, s.params)?) {
                    count += 1.0;
                }
            }
            Ok(count)
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut dens = 0.0;
    for (&(i, j), &num) in pairs.iter().zip(&mid_density) {
        let denom = center_density[i].max(center_density[j]);
        if denom == 0.0 {
            if num != 0.0 {
                return Err(Error::DegenerateDensity);
            }
            continue;
        }
        // the double sum visits each unordered pair twice
        dens += 2.0 * num / denom;
    }
    Ok(scat + dens / (k * (k - 1)) as f64)
}

/// Score Function.
pub fn score_function(s: &ClusterStats, mode: SfMode) -> f64 {
    let bcd: f64 = (0..s.k)
        .map(|i| s.center_to_centroid[i] * s.sizes[i] as f64)
        .sum::<f64>()
        / (s.n * s.k) as f64;
    let wcd: f64 = s.scatter.iter().sum();
    let exponent = match mode {
        SfMode::Corrected => bcd - wcd,
        SfMode::Literal => bcd + wcd,
    };
    1.0 - (-exponent.exp()).exp()
}

/// COP: size-weighted ratio of mean member-to-center distance to the closest
/// outsider's farthest-member distance.
pub fn cop(s: &ClusterStats, dm: &DistanceMatrix) -> Result<f64> {
    s.require_two()?;
    if dm.n() != s.n {
        return Err(Error::InvalidPartition(format!("{}-curve matrix for {} curves", dm.n(), s.n)));
    }
    let clusters = {
        let mut out = vec![Vec::new(); s.k];
        for (x, &c) in s.labels.iter().enumerate() {
            out[c].push(x);
        }
        out
    };
    let mut total = 0.0;
    for (i, members) in clusters.iter().enumerate() {
        let numerator = s.scatter[i];
        let denominator = (0..s.n)
            .filter(|&m| s.labels[m] != i)
            .map(|m| members.iter().map(|&l| dm.get(m, l)).fold(f64::NEG_INFINITY, f64::max))
            .fold(f64::INFINITY, f64::min);
        let ratio = if numerator == 0.0 { 0.0 } else { numerator / denominator };
        total += members.len() as f64 * ratio;
    }
    Ok(total / s.n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseholdEntropy {
    pub household_id: String,
    pub days: usize,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    /// Sorted by household id.
    pub households: Vec<HouseholdEntropy>,
    pub mean: f64,
}

/// Shannon entropy (natural log) of each household's cluster distribution.
pub fn consumer_entropy<S: AsRef<str>>(partition: &Partition, household_ids: &[S]) -> Result<EntropyReport> {
    if household_ids.len() != partition.len() {
        return Err(Error::InvalidPartition(format!(
            "{} household ids for {} curves",
            household_ids.len(),
            partition.len()
        )));
    }
    let mut counts: BTreeMap<&str, BTreeMap<usize, usize>> = BTreeMap::new();
    for (h, &c) in household_ids.iter().zip(partition.labels()) {
        *counts.entry(h.as_ref()).or_default().entry(c).or_default() += 1;
    }
    let households: Vec<HouseholdEntropy> = counts
        .into_iter()
        .map(|(h, per)| {
            let days: usize = per.values().sum();
            let entropy = -per
                .values()
                .map(|&c| {
                    let p = c as f64 / days as f64;
                    p * p.ln()
                })
                .sum::<f64>();
            HouseholdEntropy {
                household_id: h.to_string(),
                days,
                // -0.0 for single-cluster households
                entropy: entropy.max(0.0),
            }
        })
        .collect();
    let mean = if households.is_empty() {
        0.0
    } else {
        households.iter().map(|h| h.entropy).sum::<f64>() / households.len() as f64
    };
    Ok(EntropyReport { households, mean })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub k: usize,
    pub center_mode: CenterMode,
    pub db: f64,
    pub vcn: f64,
    pub s_dbw: f64,
    pub sf: f64,
    pub cop: f64,
    pub mean_entropy: f64,
}

impl ValidityReport {
    pub const CSV_HEADER: [&'static str; 8] = ["k", "center_mode", "db", "vcn", "s_dbw", "sf", "cop", "mean_entropy"];

    pub fn csv_row(&self) -> Vec<String> {
        vec![
            self.k.to_string(),
            self.center_mode.to_string(),
            fmt_f64(self.db),
            fmt_f64(self.vcn),
            fmt_f64(self.s_dbw),
            fmt_f64(self.sf),
            fmt_f64(self.cop),
            fmt_f64(self.mean_entropy),
        ]
    }
}

/// Everything [`evaluate`] needs about one clustering.
pub struct Evaluation<'a, C, P, S> {
    pub curves: &'a [C],
    pub household_ids: &'a [S],
    pub partition: &'a Partition,
    pub centers: &'a [P],
    pub center_mode: CenterMode,
    pub dm: &'a DistanceMatrix,
}

/// All six measures for one clustering.
pub fn evaluate<C, P, S>(e: &Evaluation<'_, C, P, S>, params: DtwParams, modes: IndexModes) -> Result<ValidityReport>
where
    C: AsRef<[f64]> + Sync,
    P: AsRef<[f64]> + Sync,
    S: AsRef<str>,
{
    let stats = ClusterStats::new(e.curves, e.partition, e.centers, params)?;
    Ok(ValidityReport {
        k: stats.k,
        center_mode: e.center_mode,
        db: davies_bouldin(&stats)?,
        vcn: vcn(&stats)?,
        s_dbw: s_dbw(&stats, modes.sdbw)?,
        sf: score_function(&stats, modes.sf),
        cop: cop(&stats, e.dm)?,
        mean_entropy: consumer_entropy(e.partition, e.household_ids)?.mean,
    })
}
