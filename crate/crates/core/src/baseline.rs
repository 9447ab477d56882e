//! K-medoids under a precomputed DTW distance matrix.
//!
//! Greedy farthest-point seeding (or seeded random), alternating
//! assignment/medoid-update rounds, then PAM swap refinement until no single
//! medoid/non-medoid exchange lowers the total cost.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::centers::medoid;
use crate::community::Partition;
use crate::dtw::DistanceMatrix;
use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 100;

/// Swaps must improve the cost by more than this.
const MIN_IMPROVEMENT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Init {
    #[default]
    Greedy,
    Random { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KMedoidsConfig {
    pub init: Init,
    pub max_iterations: usize,
}

impl Default for KMedoidsConfig {
    fn default() -> Self {
        Self {
            init: Init::Greedy,
            max_iterations: MAX_ITERATIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMedoidsResult {
    /// Curve index of each cluster's medoid, indexed by cluster label.
    pub medoids: Vec<usize>,
    pub partition: Partition,
    pub cost: f64,
    /// Alternation rounds plus accepted swaps.
    pub iterations: usize,
    pub cost_history: Vec<f64>,
}

fn greedy_seeds(dm: &DistanceMatrix, k: usize) -> Vec<usize> {
    let n = dm.n();
    let first = (0..n)
        .map(|i| (i, dm.row(i).iter().sum::<f64>()))
        .fold((0, f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b })
        .0;
    let mut chosen = vec![first];
    let mut nearest: Vec<f64> = (0..n).map(|i| dm.get(i, first)).collect();
    let mut taken = vec![false; n];
    taken[first] = true;
    while chosen.len() < k {
        let next = (0..n)
            .filter(|&i| !taken[i])
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if nearest[b] >= nearest[i] => Some(b),
                _ => Some(i),
            })
            .expect("k <= n");
        taken[next] = true;
        chosen.push(next);
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(dm.get(i, next));
        }
    }
    chosen
}

/// Nearest medoid position per curve. A medoid always belongs to itself so
/// duplicate medoids never leave a cluster empty.
fn assign(dm: &DistanceMatrix, medoids: &[usize]) -> Vec<usize> {
    (0..dm.n())
        .into_par_iter()
        .map(|i| {
            if let Some(own) = medoids.iter().position(|&m| m == i) {
                return own;
            }
            let mut best = 0;
            for (p, &m) in medoids.iter().enumerate().skip(1) {
                if dm.get(i, m) < dm.get(i, medoids[best]) {
                    best = p;
                }
            }
            best
        })
        .collect()
}

fn total_cost(dm: &DistanceMatrix, medoids: &[usize], assignment: &[usize]) -> f64 {
    assignment.iter().enumerate().map(|(i, &p)| dm.get(i, medoids[p])).sum()
}

/// Best single swap `(position, replacement, new cost)` if it improves on `cost`.
fn best_swap(dm: &DistanceMatrix, medoids: &[usize], cost: f64) -> Option<(usize, usize, f64)> {
    let n = dm.n();
    let k = medoids.len();
    // nearest and second-nearest medoid distances
    let near: Vec<(usize, f64, f64)> = (0..n)
        .map(|i| {
            let mut first = (usize::MAX, f64::INFINITY);
            let mut second = f64::INFINITY;
            for (p, &m) in medoids.iter().enumerate() {
                let d = dm.get(i, m);
                if d < first.1 {
                    second = first.1;
                    first = (p, d);
                } else if d < second {
                    second = d;
                }
            }
            (first.0, first.1, second)
        })
        .collect();
    let is_medoid: Vec<bool> = {
        let mut v = vec![false; n];
        medoids.iter().for_each(|&m| v[m] = true);
        v
    };
    let candidates: Vec<(usize, usize)> = (0..k)
        .flat_map(|p| (0..n).filter(|&o| !is_medoid[o]).map(move |o| (p, o)))
        .collect();
    let costs: Vec<f64> = candidates
        .par_iter()
        .map(|&(p, o)| {
            (0..n)
                .map(|i| {
                    let (np, nd, sd) = near[i];
                    let keep = if np == p { sd } else { nd };
                    keep.min(dm.get(i, o))
                })
                .sum()
        })
        .collect();
    let mut best: Option<(usize, usize, f64)> = None;
    for (&(p, o), &c) in candidates.iter().zip(&costs) {
        if c < cost - MIN_IMPROVEMENT && best.is_none_or(|b| c < b.2) {
            best = Some((p, o, c));
        }
    }
    best
}

pub fn k_medoids(dm: &DistanceMatrix, k: usize, config: KMedoidsConfig) -> Result<KMedoidsResult> {
    let n = dm.n();
    if k == 0 || k > n {
        return Err(Error::InvalidK { k, n });
    }
    let mut medoids = match config.init {
        Init::Greedy => greedy_seeds(dm, k),
        Init::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            sample(&mut rng, n, k).into_vec()
        }
    };
    let mut assignment = assign(dm, &medoids);
    let mut cost = total_cost(dm, &medoids, &assignment);
    let mut cost_history = vec![cost];
    let mut iterations = 0;

    while iterations < config.max_iterations {
        iterations += 1;
        let mut clusters = vec![Vec::new(); k];
        for (i, &p) in assignment.iter().enumerate() {
            clusters[p].push(i);
        }
        let updated = clusters
            .par_iter()
            .map(|c| medoid(c, dm))
            .collect::<Result<Vec<_>>>()?;
        let changed = updated != medoids;
        if changed {
            let next_assignment = assign(dm, &updated);
            let next_cost = total_cost(dm, &updated, &next_assignment);
            // the update never raises the cost; guard against float ties cycling
            if next_cost > cost - MIN_IMPROVEMENT {
                break;
            }
            medoids = updated;
            assignment = next_assignment;
            cost = next_cost;
            cost_history.push(cost);
        } else {
            break;
        }
    }

    while let Some((p, o, _)) = best_swap(dm, &medoids, cost) {
        medoids[p] = o;
        assignment = assign(dm, &medoids);
        cost = total_cost(dm, &medoids, &assignment);
        cost_history.push(cost);
        iterations += 1;
    }

    // order clusters by first appearance so labels match Partition numbering
    let mut order = Vec::with_capacity(k);
    for &p in &assignment {
        if !order.contains(&p) {
            order.push(p);
        }
    }
    let medoids: Vec<usize> = order.iter().map(|&p| medoids[p]).collect();
    Ok(KMedoidsResult {
        medoids,
        partition: Partition::from_labels(&assignment),
        cost,
        iterations,
        cost_history,
    })
}

/// K-medoids with the community count of a CICD partition.
pub fn match_cluster_counts(cicd: &Partition, dm: &DistanceMatrix, config: KMedoidsConfig) -> Result<KMedoidsResult> {
    if cicd.k() < 2 {
        return Err(Error::ComparisonSkipped(cicd.k()));
    }
    k_medoids(dm, cicd.k(), config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dtw::{pairwise_distances, DtwParams};
    use proptest::prelude::*;

    fn dm_of(curves: &[Vec<f64>]) -> DistanceMatrix {
        pairwise_distances(curves, DtwParams::default()).unwrap()
    }

    fn random_curves(n: usize, len: usize, seed: u64) -> Vec<Vec<f64>> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..len).map(|_| rng.random::<f64>()).collect()).collect()
    }

    #[test]
    fn k_equals_n() {
        let dm = dm_of(&random_curves(7, 6, 1));
        let r = k_medoids(&dm, 7, KMedoidsConfig::default()).unwrap();
        assert_eq!(r.cost, 0.0);
        assert_eq!(r.partition.k(), 7);
        let mut m = r.medoids.clone();
        m.sort_unstable();
        assert_eq!(m, (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn duplicate_groups_recovered() {
        let a = vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let b = vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0];
        let curves = vec![a.clone(), b.clone(), a.clone(), b, a];
        let r = k_medoids(&dm_of(&curves), 2, KMedoidsConfig::default()).unwrap();
        assert_eq!(r.cost, 0.0);
        assert_eq!(r.partition.labels(), &[0, 1, 0, 1, 0]);
        assert_eq!(r.partition.label(r.medoids[0]), 0);
        assert_eq!(r.partition.label(r.medoids[1]), 1);
    }

    #[test]
    fn invalid_k() {
        let dm = dm_of(&random_curves(3, 4, 2));
        assert!(matches!(k_medoids(&dm, 4, KMedoidsConfig::default()), Err(Error::InvalidK { k: 4, n: 3 })));
        assert!(matches!(
            match_cluster_counts(&Partition::whole(3), &dm, KMedoidsConfig::default()),
            Err(Error::ComparisonSkipped(1))
        ));
    }

    #[test]
    fn matched_count() {
        let dm = dm_of(&random_curves(12, 5, 3));
        let cicd = Partition::from_labels(&[0, 0, 1, 1, 2, 2, 3, 3, 4, 4, 0, 1]);
        let r = match_cluster_counts(&cicd, &dm, KMedoidsConfig::default()).unwrap();
        assert_eq!(r.partition.k(), 5);
    }

    fn brute_force_k2(dm: &DistanceMatrix) -> f64 {
        let n = dm.n();
        let mut best = f64::INFINITY;
        for a in 0..n {
            for b in (a + 1)..n {
                let c: f64 = (0..n).map(|i| dm.get(i, a).min(dm.get(i, b))).sum();
                best = best.min(c);
            }
        }
        best
    }

    proptest! {
        #[test]
        fn swap_local_optimum(n in 3usize..12, k in 2usize..4, seed in 0u64..1000, random in any::<bool>()) {
            let k = k.min(n);
            let dm = dm_of(&random_curves(n, 6, seed));
            let init = if random { Init::Random { seed } } else { Init::Greedy };
            let r = k_medoids(&dm, k, KMedoidsConfig { init, ..Default::default() }).unwrap();
            // independent swap check
            for p in 0..k {
                for o in 0..n {
                    if r.medoids.contains(&o) { continue; }
                    let mut m = r.medoids.clone();
                    m[p] = o;
                    let c: f64 = (0..n).map(|i| m.iter().map(|&x| dm.get(i, x)).fold(f64::INFINITY, f64::min)).sum();
                    prop_assert!(c >= r.cost - 1e-9);
                }
            }
            // nearest-medoid assignment, medoids in own cluster
            for i in 0..n {
                let own = dm.get(i, r.medoids[r.partition.label(i)]);
                let nearest = r.medoids.iter().map(|&x| dm.get(i, x)).fold(f64::INFINITY, f64::min);
                prop_assert_eq!(own, nearest);
            }
            for (c, &m) in r.medoids.iter().enumerate() {
                prop_assert_eq!(r.partition.label(m), c);
            }
            for w in r.cost_history.windows(2) {
                prop_assert!(w[1] <= w[0]);
            }
        }

        #[test]
        fn duplicate_groups_match_brute_force(sizes in prop::collection::vec(1usize..5, 2), shift in 0usize..3) {
            let a: Vec<f64> = (0..10).map(|t| if t == shift { 1.0 } else { 0.0 }).collect();
            let b: Vec<f64> = (0..10).map(|t| if t == 9 - shift { 1.0 } else { 0.0 }).collect();
            let mut curves = vec![a; sizes[0]];
            curves.extend(vec![b; sizes[1]]);
            let dm = dm_of(&curves);
            let r = k_medoids(&dm, 2, KMedoidsConfig::default()).unwrap();
            prop_assert_eq!(r.cost, brute_force_k2(&dm));
            prop_assert_eq!(r.cost, 0.0);
        }

        #[test]
        fn deterministic(seed in 0u64..100) {
            let dm = dm_of(&random_curves(15, 5, seed));
            let cfg = KMedoidsConfig { init: Init::Random { seed }, ..Default::default() };
            prop_assert_eq!(k_medoids(&dm, 3, cfg).unwrap(), k_medoids(&dm, 3, cfg).unwrap());
        }
    }
}
