//! Labelled synthetic load curves: template shapes plus clipped Gaussian noise.

use std::collections::HashMap;
use std::io::{Read, Write};

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::{LoadCurve, SLOTS_PER_DAY};

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub name: String,
    pub values: Vec<f64>,
}

impl Template {
    pub fn peak(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

const BASE_LOAD: f64 = 0.15;

/// Baseline plus Gaussian bumps `(center slot, height, width in slots)`,
/// wrapping around midnight.
fn shape(name: &str, bumps: &[(f64, f64, f64)]) -> Template {
    let n = SLOTS_PER_DAY as f64;
    let values = (0..SLOTS_PER_DAY)
        .map(|t| {
            let t = t as f64;
            BASE_LOAD
                + bumps
                    .iter()
                    .map(|&(c, h, w)| {
                        let d = (t - c).abs();
                        let d = d.min(n - d);
                        h * (-0.5 * (d / w).powi(2)).exp()
                    })
                    .sum::<f64>()
        })
        .collect();
    Template {
        name: name.to_string(),
        values,
    }
}

/// Morning-peak, evening-peak, double-peak, flat and night-shift shapes.
pub fn default_templates() -> Vec<Template> {
    vec![
        shape("morning-peak", &[(30.0, 1.0, 5.0)]),
        shape("evening-peak", &[(76.0, 1.0, 6.0)]),
        shape("double-peak", &[(30.0, 0.8, 4.0), (76.0, 0.8, 4.0)]),
        shape("flat", &[(48.0, 0.35, 1000.0)]),
        shape("night-shift", &[(8.0, 1.0, 7.0)]),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub templates: Vec<Template>,
    pub curves_per_template: usize,
    /// Noise standard deviation as a fraction of each template's peak.
    pub noise_sigma: f64,
    pub households: usize,
    pub days_per_household: usize,
    pub seed: u64,
}

impl SynthSpec {
    /// Default templates; households of `days_per_household` consecutive
    /// curves (the last one absorbs any remainder).
    pub fn new(curves_per_template: usize, noise_sigma: f64, days_per_household: usize, seed: u64) -> Self {
        let templates = default_templates();
        let total = templates.len() * curves_per_template;
        let days = days_per_household.max(1);
        Self {
            templates,
            curves_per_template,
            noise_sigma,
            households: total.div_ceil(days),
            days_per_household: days,
            seed,
        }
    }

    pub fn total_curves(&self) -> usize {
        self.templates.len() * self.curves_per_template
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSynthSpec(m));
        if self.templates.is_empty() {
            return bad("no templates".into());
        }
        if self.curves_per_template == 0 {
            return bad("curves_per_template must be at least 1".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma {} must be finite and >= 0", self.noise_sigma));
        }
        if self.days_per_household == 0 {
            return bad("days_per_household must be at least 1".into());
        }
        if self.households != self.total_curves().div_ceil(self.days_per_household) {
            return bad(format!(
                "{} households of {} days cannot hold {} curves",
                self.households,
                self.days_per_household,
                self.total_curves()
            ));
        }
        for t in &self.templates {
            if t.values.len() != SLOTS_PER_DAY || t.values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return bad(format!("template {:?} must hold {SLOTS_PER_DAY} non-negative values", t.name));
            }
            if t.peak() == 0.0 {
                return bad(format!("template {:?} is all zero", t.name));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    /// Ordered by template, then by index within the template.
    pub curves: Vec<LoadCurve>,
    /// Template index per curve.
    pub labels: Vec<usize>,
    pub template_names: Vec<String>,
}

fn first_day() -> NaiveDate {
    NaiveDate::from_ymd_opt(2015, 7, 6).expect("valid date")
}

pub fn generate(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let total = spec.total_curves();
    let width = spec.households.to_string().len().max(3);
    let curves: Vec<LoadCurve> = (0..total)
        .into_par_iter()
        .map(|c| {
            let template = &spec.templates[c / spec.curves_per_template];
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(c as u64);
            let samples = if spec.noise_sigma == 0.0 {
                template.values.clone()
            } else {
                let noise = Normal::new(0.0, spec.noise_sigma * template.peak()).expect("sigma is finite and positive");
                template
                    .values
                    .iter()
                    .map(|v| (v + noise.sample(&mut rng)).max(0.0))
                    .collect()
            };
            let household = c / spec.days_per_household;
            let day = (c % spec.days_per_household) as u64;
            LoadCurve {
                curve_id: c as u64,
                household_id: format!("h{household:0width$}"),
                date: first_day() + chrono::Days::new(day),
                samples,
            }
        })
        .collect();
    Ok(SynthCorpus {
        curves,
        labels: (0..total).map(|c| c / spec.curves_per_template).collect(),
        template_names: spec.templates.iter().map(|t| t.name.clone()).collect(),
    })
}

/// Labels CSV `curve_id,template`.
pub fn write_labels_csv<W: Write>(out: W, corpus: &SynthCorpus) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["curve_id", "template"])?;
    for (curve, &label) in corpus.curves.iter().zip(&corpus.labels) {
        w.write_record([curve.curve_id.to_string().as_str(), &corpus.template_names[label]])?;
    }
    w.flush()?;
    Ok(())
}

/// `(curve_id, template name)` rows.
pub fn read_labels_csv<R: Read>(input: R) -> Result<Vec<(u64, String)>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(Error::Format(format!("expected 2 label fields, got {}", rec.len())));
        }
        let id = rec[0]
            .parse()
            .map_err(|_| Error::Format(format!("bad curve id {:?}", &rec[0])))?;
        out.push((id, rec[1].to_string()));
    }
    Ok(out)
}

fn pairs(x: u64) -> f64 {
    (x * x.saturating_sub(1)) as f64 / 2.0
}

/// Adjusted Rand index between two labelings of the same items.
///
/// When both labelings are trivial (one cluster, or all singletons) the
/// index is taken to be 1.
pub fn adjusted_rand<A, B>(a: &[A], b: &[B]) -> Result<f64>
where
    A: Copy + Eq + std::hash::Hash,
    B: Copy + Eq + std::hash::Hash,
{
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    let mut table: HashMap<(A, B), u64> = HashMap::new();
    let mut rows: HashMap<A, u64> = HashMap::new();
    let mut cols: HashMap<B, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| pairs(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| pairs(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| pairs(c)).sum();
    let total = pairs(a.len() as u64);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_a * sum_b / total;
    let max = (sum_a + sum_b) / 2.0;
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::normalize;
    use proptest::prelude::*;

    #[test]
    fn noiseless_curves_equal_templates() {
        let spec = SynthSpec::new(3, 0.0, 5, 1);
        let corpus = generate(&spec).unwrap();
        assert_eq!(corpus.curves.len(), 15);
        for (c, &l) in corpus.curves.iter().zip(&corpus.labels) {
            assert_eq!(c.samples, spec.templates[l].values);
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let spec = SynthSpec::new(20, 0.1, 7, 42);
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = SynthSpec { seed: 43, ..spec.clone() };
        assert_ne!(generate(&spec).unwrap().curves, generate(&other).unwrap().curves);
    }

    #[test]
    fn label_counts_and_households() {
        let spec = SynthSpec::new(4, 0.2, 3, 9);
        let corpus = generate(&spec).unwrap();
        for t in 0..5 {
            assert_eq!(corpus.labels.iter().filter(|&&l| l == t).count(), 4);
        }
        assert_eq!(spec.households, 7);
        assert_eq!(corpus.curves[0].household_id, "h000");
        assert_eq!(corpus.curves[19].household_id, "h006");
        assert_eq!(corpus.curves[4].date, NaiveDate::from_ymd_opt(2015, 7, 7).unwrap());
        for c in &corpus.curves {
            assert!(c.samples.iter().all(|&v| v >= 0.0));
            let sum: f64 = normalize(c).unwrap().values.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn invalid_specs() {
        let mut spec = SynthSpec::new(0, 0.1, 1, 0);
        assert!(matches!(generate(&spec), Err(Error::InvalidSynthSpec(_))));
        spec = SynthSpec::new(2, -0.1, 1, 0);
        assert!(matches!(generate(&spec), Err(Error::InvalidSynthSpec(_))));
        spec = SynthSpec { households: 3, ..SynthSpec::new(2, 0.1, 1, 0) };
        assert!(matches!(generate(&spec), Err(Error::InvalidSynthSpec(_))));
    }

    #[test]
    fn labels_csv_round_trip() {
        let corpus = generate(&SynthSpec::new(1, 0.0, 1, 0)).unwrap();
        let mut buf = Vec::new();
        write_labels_csv(&mut buf, &corpus).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("curve_id,template\n0,morning-peak\n"));
        let rows = read_labels_csv(buf.as_slice()).unwrap();
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[4], (4, "night-shift".to_string()));
    }

    #[test]
    fn ari_anchors() {
        let a = [0, 0, 1, 1, 2, 2];
        assert_eq!(adjusted_rand(&a, &a).unwrap(), 1.0);
        assert_eq!(adjusted_rand(&a, &[5, 5, 3, 3, 9, 9]).unwrap(), 1.0);
        // classic worked example
        let x = [0, 0, 0, 1, 1, 1];
        let y = [0, 0, 1, 1, 2, 2];
        assert!((adjusted_rand(&x, &y).unwrap() - 0.24242424242424243).abs() < 1e-12);
    }

    /// Rand-style pair counting over every unordered pair.
    fn ari_pairs(a: &[usize], b: &[usize]) -> f64 {
        let n = a.len();
        let (mut both, mut only_a, mut only_b, mut neither) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            for j in (i + 1)..n {
                match (a[i] == a[j], b[i] == b[j]) {
                    (true, true) => both += 1.0,
                    (true, false) => only_a += 1.0,
                    (false, true) => only_b += 1.0,
                    (false, false) => neither += 1.0,
                }
            }
        }
        let total: f64 = both + only_a + only_b + neither;
        let same_a = both + only_a;
        let same_b = both + only_b;
        let expected = same_a * same_b / total;
        let max = (same_a + same_b) / 2.0;
        if max == expected {
            return 1.0;
        }
        (both - expected) / (max - expected)
    }

    proptest! {
        #[test]
        fn ari_matches_pair_counting(
            a in prop::collection::vec(0usize..4, 20),
            b in prop::collection::vec(0usize..5, 20),
        ) {
            let got = adjusted_rand(&a, &b).unwrap();
            prop_assert!((got - ari_pairs(&a, &b)).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&got));
            prop_assert!((got - adjusted_rand(&b, &a).unwrap()).abs() < 1e-12);
        }
    }
}
