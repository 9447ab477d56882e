//! Cluster representatives: medoids and DTW barycenter averaging (DBA).

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::community::Partition;
use crate::dtw::{dtw_path, CostMode, DistanceMatrix, DtwParams};
use crate::error::{Error, Result};
use crate::fmt::fmt_f64;

pub const DBA_MAX_ITERATIONS: usize = 30;
pub const DBA_TOLERANCE: f64 = 1e-6;

/// DBA settings.
///
/// Alignment always uses squared per-cell cost: the pooled arithmetic mean is
/// the least-squares update for a fixed alignment, so the within-cluster sum
/// of squared-cost DTW never increases between iterations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbaConfig {
    pub window: usize,
    pub max_iterations: usize,
    /// Stop once no coordinate moves by this much or more.
    pub tolerance: f64,
}

impl Default for DbaConfig {
    fn default() -> Self {
        Self {
            window: crate::dtw::DEFAULT_WINDOW,
            max_iterations: DBA_MAX_ITERATIONS,
            tolerance: DBA_TOLERANCE,
        }
    }
}

impl DbaConfig {
    pub fn with_window(window: usize) -> Self {
        Self {
            window,
            ..Self::default()
        }
    }

    fn dtw(&self) -> DtwParams {
        DtwParams::new(self.window, CostMode::Squared)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypicalLoadProfile {
    pub cluster_label: usize,
    pub values: Vec<f64>,
    pub iterations_used: usize,
    /// Sum over members of squared-cost DTW to the final center.
    pub cost: f64,
}

impl AsRef<[f64]> for TypicalLoadProfile {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DbaOutcome {
    pub center: Vec<f64>,
    pub iterations: usize,
    /// Within-cluster cost of the initial center followed by the cost after
    /// each update.
    pub cost_history: Vec<f64>,
}

/// Member minimizing the summed distance to the rest; ties go to the lowest
/// index.
pub fn medoid(cluster: &[usize], dm: &DistanceMatrix) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &j in cluster {
        let total: f64 = cluster.iter().map(|&i| dm.get(i, j)).sum();
        match best {
            Some((b, t)) if total > t || (total == t && j > b) => {}
            _ => best = Some((j, total)),
        }
    }
    best.map(|(j, _)| j).ok_or(Error::EmptyCluster)
}

fn align_cost<C: AsRef<[f64]>>(
    center: &[f64],
    members: &[C],
    params: DtwParams,
    pool: Option<(&mut [f64], &mut [usize])>,
) -> Result<f64> {
    let mut total = 0.0;
    match pool {
        None => {
            for m in members {
                total += dtw_path(center, m.as_ref(), params)?.0;
            }
        }
        Some((sums, counts)) => {
            for m in members {
                let m = m.as_ref();
                let (d, path) = dtw_path(center, m, params)?;
                total += d;
                for &(i, j) in &path.steps {
                    sums[i] += m[j] - center[i];
                    counts[i] += 1;
                }
            }
        }
    }
    Ok(total)
}

/// DTW barycenter averaging from `init`.
///
/// Each iteration aligns every member to the current center, pools the member
/// values mapped onto each center slot and replaces the slot by their mean.
pub fn dba<C: AsRef<[f64]>>(members: &[C], init: &[f64], config: DbaConfig) -> Result<DbaOutcome> {
    if members.is_empty() {
        return Err(Error::EmptyCluster);
    }
    let n = init.len();
    let params = config.dtw();
    let mut center = init.to_vec();
    let mut sums = vec![0.0; n];
    let mut counts = vec![0usize; n];
    let mut cost = align_cost(&center, members, params, Some((&mut sums, &mut counts)))?;
    let mut cost_history = vec![cost];
    let mut iterations = 0;

    while iterations < config.max_iterations {
        iterations += 1;
        let mut change: f64 = 0.0;
        for i in 0..n {
            debug_assert!(counts[i] > 0, "every slot lies on every path");
            // offsets from the current value keep exact fixed points exact
            let v = center[i] + sums[i] / counts[i] as f64;
            change = change.max((v - center[i]).abs());
            center[i] = v;
        }
        sums.iter_mut().for_each(|s| *s = 0.0);
        counts.iter_mut().for_each(|c| *c = 0);
        cost = align_cost(&center, members, params, Some((&mut sums, &mut counts)))?;
        cost_history.push(cost);
        if change < config.tolerance {
            break;
        }
    }
    Ok(DbaOutcome {
        center,
        iterations,
        cost_history,
    })
}

/// Within-cluster squared-cost DTW sum for a given center.
pub fn dba_cost<C: AsRef<[f64]>>(members: &[C], center: &[f64], window: usize) -> Result<f64> {
    align_cost(center, members, DtwParams::new(window, CostMode::Squared), None)
}

/// One medoid-initialised DBA profile per cluster, computed in parallel.
pub fn extract_tlps<C>(
    partition: &Partition,
    curves: &[C],
    dm: &DistanceMatrix,
    config: DbaConfig,
) -> Result<Vec<TypicalLoadProfile>>
where
    C: AsRef<[f64]> + Sync,
{
    if partition.len() != curves.len() || curves.len() != dm.n() {
        return Err(Error::InvalidPartition(format!(
            "partition of {} for {} curves and a {}-curve matrix",
            partition.len(),
            curves.len(),
            dm.n()
        )));
    }
    partition
        .clusters()
        .into_par_iter()
        .enumerate()
        .map(|(label, members)| {
            let seed = medoid(&members, dm)?;
            let member_curves: Vec<&[f64]> = members.iter().map(|&i| curves[i].as_ref()).collect();
            let out = dba(&member_curves, curves[seed].as_ref(), config)?;
            Ok(TypicalLoadProfile {
                cluster_label: label,
                values: out.center,
                iterations_used: out.iterations,
                cost: *out.cost_history.last().expect("history is never empty"),
            })
        })
        .collect()
}

/// Profile CSV `cluster_label,t0,…,t{n-1}`.
pub fn write_tlp_csv<W: Write>(out: W, tlps: &[TypicalLoadProfile]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let len = tlps.first().map_or(crate::ingest::SLOTS_PER_DAY, |t| t.values.len());
    let mut header = vec!["cluster_label".to_string()];
    header.extend((0..len).map(|t| format!("t{t}")));
    w.write_record(&header)?;
    for t in tlps {
        let mut row = vec![t.cluster_label.to_string()];
        row.extend(t.values.iter().map(|&v| fmt_f64(v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Read profile rows; iteration counts and costs are not stored and come back
/// as zero.
pub fn read_tlp_csv<R: Read>(input: R) -> Result<Vec<TypicalLoadProfile>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let cluster_label = rec[0]
            .parse()
            .map_err(|_| Error::Format(format!("bad cluster label {:?}", &rec[0])))?;
        let values = rec
            .iter()
            .skip(1)
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::Format("bad profile value".into()))?;
        out.push(TypicalLoadProfile {
            cluster_label,
            values,
            iterations_used: 0,
            cost: 0.0,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dtw::pairwise_distances;
    use proptest::prelude::*;

    #[test]
    fn singleton_medoid() {
        let dm = pairwise_distances(&[vec![0.0, 1.0], vec![1.0, 0.0]], DtwParams::default()).unwrap();
        assert_eq!(medoid(&[1], &dm).unwrap(), 1);
        assert!(matches!(medoid(&[], &dm), Err(Error::EmptyCluster)));
    }

    #[test]
    fn duplicate_dominates_medoid() {
        let a = vec![0.1, 0.5, 0.4];
        let b = vec![0.9, 0.0, 0.1];
        let dm = pairwise_distances(&[b, a.clone(), a], DtwParams::default()).unwrap();
        assert_eq!(medoid(&[0, 1, 2], &dm).unwrap(), 1);
    }

    #[test]
    fn identical_members_are_a_fixed_point() {
        let c = vec![0.1, 0.3, 0.2, 0.4];
        let out = dba(&[c.clone(), c.clone(), c.clone()], &c, DbaConfig::default()).unwrap();
        assert_eq!(out.center, c);
        assert_eq!(out.iterations, 1);
        assert_eq!(out.cost_history, vec![0.0, 0.0]);
    }

    #[test]
    fn constant_curves_average_to_midpoint() {
        let n = 96;
        let members = [vec![0.0; n], vec![2.0; n]];
        let out = dba(&members, &vec![1.0; n], DbaConfig::default()).unwrap();
        assert_eq!(out.center, vec![1.0; n]);
        assert_eq!(out.iterations, 1);
    }

    #[test]
    fn singleton_clusters_give_their_curve() {
        let curves = vec![vec![0.2, 0.3, 0.5], vec![0.5, 0.3, 0.2], vec![0.0, 1.0, 0.0]];
        let dm = pairwise_distances(&curves, DtwParams::default()).unwrap();
        let tlps = extract_tlps(&Partition::singletons(3), &curves, &dm, DbaConfig::default()).unwrap();
        assert_eq!(tlps.len(), 3);
        for (t, c) in tlps.iter().zip(&curves) {
            assert_eq!(&t.values, c);
            assert_eq!(t.cost, 0.0);
        }
    }

    #[test]
    fn tlp_csv_round_trip() {
        let t = TypicalLoadProfile {
            cluster_label: 3,
            values: vec![0.25, 0.5, 0.25],
            iterations_used: 2,
            cost: 0.1,
        };
        let mut buf = Vec::new();
        write_tlp_csv(&mut buf, std::slice::from_ref(&t)).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "cluster_label,t0,t1,t2\n3,0.25,0.5,0.25\n");
        let back = read_tlp_csv(buf.as_slice()).unwrap();
        assert_eq!(back[0].values, t.values);
        assert_eq!(back[0].cluster_label, 3);
    }

    fn cluster() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (2usize..16, 1usize..8).prop_flat_map(|(len, m)| {
            prop::collection::vec(prop::collection::vec(0.0f64..1.0, len), m)
        })
    }

    proptest! {
        #[test]
        fn cost_never_increases(members in cluster(), w in 1usize..5, seed in 0usize..8) {
            let init = members[seed % members.len()].clone();
            let out = dba(&members, &init, DbaConfig::with_window(w)).unwrap();
            for pair in out.cost_history.windows(2) {
                prop_assert!(pair[1] <= pair[0] * (1.0 + 1e-12) + 1e-15, "{:?}", out.cost_history);
            }
            prop_assert!(out.iterations <= DBA_MAX_ITERATIONS);
            prop_assert_eq!(out.center.len(), init.len());
        }

        #[test]
        fn medoid_matches_argmin(members in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 6), 2..12)) {
            let dm = pairwise_distances(&members, DtwParams::default()).unwrap();
            let idx: Vec<usize> = (0..members.len()).collect();
            let m = medoid(&idx, &dm).unwrap();
            let sums: Vec<f64> = idx.iter().map(|&j| idx.iter().map(|&i| dm.get(i, j)).sum()).collect();
            let min = sums.iter().cloned().fold(f64::INFINITY, f64::min);
            let expected = sums.iter().position(|&s| s == min).unwrap();
            prop_assert_eq!(m, expected);
        }
    }
}
