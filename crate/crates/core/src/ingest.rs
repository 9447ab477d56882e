//! Raw meter readings to normalized daily load curves.
//!
//! Input is a UTF-8 CSV with header `household_id,timestamp,kwh`, one row per
//! 15-minute reading. Readings are grouped into household-days; only days with
//! exactly one reading in each of the 96 slots are kept. Each kept day is
//! scaled to unit sum.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::{NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt::fmt_f64;

/// Readings per day at 15-minute resolution.
pub const SLOTS_PER_DAY: usize = 96;

const SLOT_MINUTES: u32 = 15;
const HEADER: [&str; 3] = ["household_id", "timestamp", "kwh"];
const TIMESTAMP_FORMATS: [&str; 4] = [
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%d %H:%M",
];

#[derive(Debug, Clone, PartialEq)]
pub struct MeterReading {
    pub household_id: String,
    pub timestamp: NaiveDateTime,
    pub kwh: f64,
}

impl MeterReading {
    /// Slot index within the day, 0..96.
    pub fn slot(&self) -> usize {
        let t = self.timestamp.time();
        ((t.hour() * 60 + t.minute()) / SLOT_MINUTES) as usize
    }
}

/// A rejected input row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowDiagnostic {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedReadings {
    pub readings: Vec<MeterReading>,
    pub diagnostics: Vec<RowDiagnostic>,
}

/// One household-day of raw consumption.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadCurve {
    pub curve_id: u64,
    pub household_id: String,
    pub date: NaiveDate,
    pub samples: Vec<f64>,
}

/// Unit-sum version of a [`LoadCurve`]; shares its `curve_id`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedCurve {
    pub curve_id: u64,
    pub household_id: String,
    pub date: NaiveDate,
    pub values: Vec<f64>,
}

impl AsRef<[f64]> for NormalizedCurve {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// Counts of kept and dropped household-days.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipReport {
    pub complete_days: usize,
    pub skipped_incomplete: usize,
    pub skipped_zero: usize,
    pub skipped_duplicate: usize,
}

#[derive(Debug, Clone, Default)]
pub struct AssembledDays {
    pub curves: Vec<LoadCurve>,
    pub report: SkipReport,
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    TIMESTAMP_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

fn parse_row(record: &csv::StringRecord) -> std::result::Result<MeterReading, String> {
    if record.len() != HEADER.len() {
        return Err(format!("expected 3 fields, found {}", record.len()));
    }
    let household_id = record[0].to_string();
    if household_id.is_empty() {
        return Err("empty household_id".into());
    }
    let timestamp = parse_timestamp(&record[1])
        .ok_or_else(|| format!("unparseable timestamp {:?}", &record[1]))?;
    if timestamp.minute() % SLOT_MINUTES != 0 || timestamp.second() != 0 || timestamp.nanosecond() != 0 {
        return Err(format!("timestamp {} is not on a 15-minute boundary", &record[1]));
    }
    let kwh: f64 = record[2]
        .parse()
        .map_err(|_| format!("unparseable kwh {:?}", &record[2]))?;
    if !kwh.is_finite() {
        return Err(format!("non-finite kwh {}", &record[2]));
    }
    if kwh < 0.0 {
        return Err(format!("negative kwh {kwh}"));
    }
    Ok(MeterReading {
        household_id,
        timestamp,
        kwh,
    })
}

/// Parse the reading CSV. Bad rows become diagnostics; a bad header is fatal.
pub fn parse_readings<R: Read>(input: R) -> Result<ParsedReadings> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);

    let headers = rdr
        .headers()
        .map_err(|e| Error::Format(format!("unreadable header: {e}")))?
        .clone();
    if headers.iter().ne(HEADER.iter().copied()) {
        return Err(Error::Format(format!(
            "expected header `{}`, found `{}`",
            HEADER.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut out = ParsedReadings::default();
    for result in rdr.records() {
        match result {
            Ok(record) => {
                let line = record.position().map_or(0, |p| p.line());
                match parse_row(&record) {
                    Ok(r) => out.readings.push(r),
                    Err(message) => out.diagnostics.push(RowDiagnostic { line, message }),
                }
            }
            Err(e) => {
                if matches!(e.kind(), csv::ErrorKind::Io(_)) {
                    return Err(e.into());
                }
                let line = e.position().map_or(0, |p| p.line());
                out.diagnostics.push(RowDiagnostic {
                    line,
                    message: e.to_string(),
                });
            }
        }
    }
    Ok(out)
}

/// Group readings into household-days.
///
/// Days with a repeated slot are dropped as duplicates; days missing any slot
/// are dropped as incomplete. Curve ids follow sorted `(household_id, date)`
/// order, so the result does not depend on input order.
pub fn assemble_days(readings: &[MeterReading]) -> AssembledDays {
    let mut days: BTreeMap<(&str, NaiveDate), Vec<Option<f64>>> = BTreeMap::new();
    let mut duplicated: BTreeMap<(&str, NaiveDate), bool> = BTreeMap::new();

    for r in readings {
        let key = (r.household_id.as_str(), r.timestamp.date());
        let slots = days.entry(key).or_insert_with(|| vec![None; SLOTS_PER_DAY]);
        let slot = &mut slots[r.slot()];
        if slot.is_some() {
            duplicated.insert(key, true);
        }
        *slot = Some(r.kwh);
    }

    let mut out = AssembledDays::default();
    for (key, slots) in days {
        if duplicated.contains_key(&key) {
            out.report.skipped_duplicate += 1;
            continue;
        }
        let samples: Option<Vec<f64>> = slots.into_iter().collect();
        match samples {
            Some(samples) => {
                out.curves.push(LoadCurve {
                    curve_id: out.curves.len() as u64,
                    household_id: key.0.to_string(),
                    date: key.1,
                    samples,
                });
            }
            None => out.report.skipped_incomplete += 1,
        }
    }
    out.report.complete_days = out.curves.len();
    out
}

/// Scale a day to unit sum.
pub fn normalize(curve: &LoadCurve) -> Result<NormalizedCurve> {
    let total: f64 = curve.samples.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroConsumptionDay {
            household_id: curve.household_id.clone(),
            date: curve.date.to_string(),
        });
    }
    Ok(NormalizedCurve {
        curve_id: curve.curve_id,
        household_id: curve.household_id.clone(),
        date: curve.date,
        values: curve.samples.iter().map(|s| s / total).collect(),
    })
}

/// Normalize every curve, dropping all-zero days into `report.skipped_zero`.
pub fn normalize_all(curves: &[LoadCurve], report: &mut SkipReport) -> Vec<NormalizedCurve> {
    curves
        .iter()
        .filter_map(|c| match normalize(c) {
            Ok(n) => Some(n),
            Err(_) => {
                report.skipped_zero += 1;
                None
            }
        })
        .collect()
}

/// Write readings in the ingestion CSV format.
pub fn write_readings_csv<W: Write>(out: W, readings: &[MeterReading]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for r in readings {
        w.write_record([
            r.household_id.as_str(),
            &r.timestamp.format("%Y-%m-%dT%H:%M:%S").to_string(),
            &fmt_f64(r.kwh),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Expand a curve back into its 96 timestamped readings.
pub fn curve_readings(curve: &LoadCurve) -> Vec<MeterReading> {
    let start = curve.date.and_hms_opt(0, 0, 0).expect("midnight is valid");
    curve
        .samples
        .iter()
        .enumerate()
        .map(|(slot, &kwh)| MeterReading {
            household_id: curve.household_id.clone(),
            timestamp: start + chrono::Duration::minutes(slot as i64 * SLOT_MINUTES as i64),
            kwh,
        })
        .collect()
}

/// Normalized curve table: `curve_id,household_id,date,t0,…,t{n-1}`.
pub fn write_curves_csv<W: Write>(out: W, curves: &[NormalizedCurve]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let len = curves.first().map_or(SLOTS_PER_DAY, |c| c.values.len());
    let mut header = vec!["curve_id".to_string(), "household_id".into(), "date".into()];
    header.extend((0..len).map(|t| format!("t{t}")));
    w.write_record(&header)?;
    for c in curves {
        let mut row = vec![c.curve_id.to_string(), c.household_id.clone(), c.date.to_string()];
        row.extend(c.values.iter().map(|&v| fmt_f64(v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_curves_csv<R: Read>(input: R) -> Result<Vec<NormalizedCurve>> {
    let mut rdr = csv::Reader::from_reader(input);
    let width = rdr.headers()?.len();
    if width < 4 {
        return Err(Error::Format("curve table needs at least one value column".into()));
    }
    let mut curves = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let bad = |what: &str| Error::Format(format!("curve table: bad {what} in {:?}", rec.position()));
        let curve_id = rec[0].parse().map_err(|_| bad("curve_id"))?;
        let date = rec[2].parse().map_err(|_| bad("date"))?;
        let values = rec
            .iter()
            .skip(3)
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad("value"))?;
        curves.push(NormalizedCurve {
            curve_id,
            household_id: rec[1].to_string(),
            date,
            values,
        });
    }
    Ok(curves)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day_csv(household: &str, date: &str, slots: impl Iterator<Item = usize>, kwh: f64) -> String {
        let mut s = String::new();
        for slot in slots {
            let minutes = slot * 15;
            s.push_str(&format!(
                "{household},{date}T{:02}:{:02}:00,{kwh}\n",
                minutes / 60,
                minutes % 60
            ));
        }
        s
    }

    fn parse(body: &str) -> ParsedReadings {
        let text = format!("household_id,timestamp,kwh\n{body}");
        parse_readings(text.as_bytes()).unwrap()
    }

    #[test]
    fn parses_a_row() {
        let p = parse("h1,2015-07-06T00:00:00,0.25\n");
        assert!(p.diagnostics.is_empty());
        assert_eq!(p.readings.len(), 1);
        let r = &p.readings[0];
        assert_eq!(r.household_id, "h1");
        assert_eq!(r.timestamp.to_string(), "2015-07-06 00:00:00");
        assert_eq!(r.kwh, 0.25);
    }

    #[test]
    fn rejects_negative_kwh_with_line_number() {
        let p = parse("h1,2015-07-06T00:00:00,0.25\nh1,2015-07-06T00:15:00,-1\n");
        assert_eq!(p.readings.len(), 1);
        assert_eq!(p.diagnostics.len(), 1);
        assert_eq!(p.diagnostics[0].line, 3);
        assert!(p.diagnostics[0].message.contains("negative"));
    }

    #[test]
    fn rejects_misaligned_and_malformed_rows() {
        let p = parse("h1,2015-07-06T00:07:00,1\nh1,yesterday,1\nh1,2015-07-06T00:00:00\nh1,2015-07-06T00:00:00,NaN\n");
        assert!(p.readings.is_empty());
        assert_eq!(p.diagnostics.len(), 4);
        let lines: Vec<u64> = p.diagnostics.iter().map(|d| d.line).collect();
        assert_eq!(lines, vec![2, 3, 4, 5]);
    }

    #[test]
    fn empty_body_is_not_an_error() {
        let p = parse("");
        assert!(p.readings.is_empty());
        assert!(p.diagnostics.is_empty());
    }

    #[test]
    fn bad_header_is_fatal() {
        assert!(matches!(parse_readings("a,b,c\n".as_bytes()), Err(Error::Format(_))));
        assert!(matches!(parse_readings("".as_bytes()), Err(Error::Format(_))));
    }

    #[test]
    fn full_day_becomes_one_curve_in_time_order() {
        // reversed file order
        let body = day_csv("h1", "2015-07-06", (0..96).rev(), 0.5);
        let p = parse(&body);
        let days = assemble_days(&p.readings);
        assert_eq!(days.curves.len(), 1);
        assert_eq!(days.curves[0].samples, vec![0.5; 96]);
        assert_eq!(days.report.complete_days, 1);
    }

    #[test]
    fn incomplete_and_duplicate_days_are_reported() {
        let mut body = day_csv("h1", "2015-07-06", 0..95, 1.0);
        body += &day_csv("h1", "2015-07-07", (0..96).chain(std::iter::once(10)), 1.0);
        body += &day_csv("h2", "2015-07-06", 0..96, 1.0);
        let days = assemble_days(&parse(&body).readings);
        assert_eq!(
            days.report,
            SkipReport {
                complete_days: 1,
                skipped_incomplete: 1,
                skipped_zero: 0,
                skipped_duplicate: 1
            }
        );
        assert_eq!(days.curves[0].household_id, "h2");
    }

    #[test]
    fn two_households_two_days() {
        let mut body = String::new();
        for h in ["hb", "ha"] {
            for d in ["2015-07-07", "2015-07-06"] {
                body += &day_csv(h, d, 0..96, 1.0);
            }
        }
        let days = assemble_days(&parse(&body).readings);
        assert_eq!(days.curves.len(), 4);
        let keys: Vec<(u64, String, String)> = days
            .curves
            .iter()
            .map(|c| (c.curve_id, c.household_id.clone(), c.date.to_string()))
            .collect();
        assert_eq!(keys[0], (0, "ha".into(), "2015-07-06".into()));
        assert_eq!(keys[3], (3, "hb".into(), "2015-07-07".into()));
    }

    fn curve(samples: Vec<f64>) -> LoadCurve {
        LoadCurve {
            curve_id: 7,
            household_id: "h".into(),
            date: NaiveDate::from_ymd_opt(2015, 7, 6).unwrap(),
            samples,
        }
    }

    #[test]
    fn uniform_day_normalizes_to_one_ninety_sixth() {
        let n = normalize(&curve(vec![1.0; 96])).unwrap();
        assert_eq!(n.curve_id, 7);
        assert!(n.values.iter().all(|&v| (v - 1.0 / 96.0).abs() < 1e-15));
    }

    #[test]
    fn normalize_by_hand() {
        let mut s = vec![0.0; 96];
        s[0] = 2.0;
        s[1] = 1.0;
        s[50] = 1.0;
        let n = normalize(&curve(s)).unwrap();
        assert_eq!(n.values[0], 0.5);
        assert_eq!(n.values[1], 0.25);
    }

    #[test]
    fn zero_day_is_an_error_and_counted() {
        assert!(matches!(
            normalize(&curve(vec![0.0; 96])),
            Err(Error::ZeroConsumptionDay { .. })
        ));
        let mut report = SkipReport::default();
        let out = normalize_all(&[curve(vec![0.0; 96]), curve(vec![1.0; 96])], &mut report);
        assert_eq!(out.len(), 1);
        assert_eq!(report.skipped_zero, 1);
    }

    #[test]
    fn curves_csv_round_trip() {
        let c = normalize(&curve((0..96).map(|i| i as f64 + 1.0).collect())).unwrap();
        let mut buf = Vec::new();
        write_curves_csv(&mut buf, std::slice::from_ref(&c)).unwrap();
        let back = read_curves_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].curve_id, 7);
        assert_eq!(back[0].date, c.date);
        for (a, b) in back[0].values.iter().zip(&c.values) {
            assert!((a - b).abs() <= 1e-11 * b.abs());
        }
    }

    #[test]
    fn readings_round_trip_through_csv() {
        let c = curve((0..96).map(|i| (i % 7) as f64 * 0.125).collect());
        let mut buf = Vec::new();
        write_readings_csv(&mut buf, &curve_readings(&c)).unwrap();
        let p = parse_readings(buf.as_slice()).unwrap();
        assert!(p.diagnostics.is_empty());
        let days = assemble_days(&p.readings);
        assert_eq!(days.curves[0].samples, c.samples);
    }
}
