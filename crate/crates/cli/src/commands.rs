use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use loadnet_core::baseline::{k_medoids, match_cluster_counts, Init, KMedoidsConfig, KMedoidsResult};
use loadnet_core::centers::{extract_tlps, read_tlp_csv, write_tlp_csv, DbaConfig, TypicalLoadProfile};
use loadnet_core::community::{louvain, LouvainConfig, Partition};
use loadnet_core::directory::{build_directory, gamma_sweep, write_sweep_csv, SweepConfig, SweepPoint};
use loadnet_core::dtw::{pairwise_distances, DistanceMatrix};
use loadnet_core::fmt::{fmt_f64, to_json_string};
use loadnet_core::ingest::{
    assemble_days, curve_readings, normalize_all, parse_readings, read_curves_csv, write_curves_csv,
    write_readings_csv, NormalizedCurve,
};
use loadnet_core::netbuild::{build_graph, WeightedGraph};
use loadnet_core::synth::{generate, write_labels_csv, SynthSpec};
use loadnet_core::validity::{evaluate, CenterMode, Evaluation, ValidityReport};

use crate::config::{BaselineInit, Method, RunConfig};
use crate::error::{CliError, CliResult};
use crate::manifest::{Artifacts, Input};

fn create(path: &Path) -> CliResult<BufWriter<fs::File>> {
    fs::File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn open(path: &Path) -> CliResult<BufReader<fs::File>> {
    fs::File::open(path).map(BufReader::new).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = to_json_string(value).map_err(|e| CliError::Invalid(e.to_string()))?;
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn skip_if_current(a: &Artifacts, stage: &'static str, inputs: &[Input]) -> CliResult<bool> {
    if a.up_to_date(stage, inputs)? {
        println!("{stage}: up to date");
        return Ok(true);
    }
    Ok(false)
}

fn load_curves(input: &Input) -> CliResult<Vec<NormalizedCurve>> {
    Ok(read_curves_csv(open(&input.path)?)?)
}

fn load_matrix(a: &Artifacts) -> CliResult<(Input, Input)> {
    Ok((a.require("distances", "distances.bin")?, a.require("distances", "distances.ids.json")?))
}

fn read_matrix(bin: &Input, ids: &Input) -> CliResult<DistanceMatrix> {
    let dm = DistanceMatrix::read_binary(open(&bin.path)?)?;
    let ids = DistanceMatrix::read_ids_json(open(&ids.path)?)?;
    Ok(dm.with_curve_ids(ids)?)
}

fn check_ids(curves: &[NormalizedCurve], ids: &[u64]) -> CliResult<()> {
    if curves.len() != ids.len() || curves.iter().zip(ids).any(|(c, &i)| c.curve_id != i) {
        return Err(CliError::Stale("curve ids differ between curves.csv and the distance matrix".into()));
    }
    Ok(())
}

pub fn synth(a: &Artifacts) -> CliResult<()> {
    let cfg = a.cfg;
    if skip_if_current(a, "synth", &[])? {
        return Ok(());
    }
    let spec = SynthSpec::new(
        cfg.synth_curves_per_template,
        cfg.synth_noise,
        cfg.synth_days_per_household,
        cfg.synth_seed,
    );
    let corpus = generate(&spec)?;
    let readings: Vec<_> = corpus.curves.iter().flat_map(curve_readings).collect();
    let mut w = create(&a.path("synth.readings.csv"))?;
    write_readings_csv(&mut w, &readings)?;
    w.flush().map_err(|e| CliError::io(&a.path("synth.readings.csv"), e))?;
    write_labels_csv(create(&a.path("synth.labels.csv"))?, &corpus)?;
    a.write_manifest("synth", &[], &["synth.readings.csv", "synth.labels.csv"])?;
    println!(
        "synth: {} curves from {} templates, {} households",
        corpus.curves.len(),
        corpus.template_names.len(),
        spec.households
    );
    Ok(())
}

pub fn ingest(a: &Artifacts) -> CliResult<()> {
    let cfg = a.cfg;
    if cfg.input.is_empty() {
        return Err(CliError::Usage("no input files; pass --input <csv>[,<csv>...]".into()));
    }
    let inputs: Vec<Input> = cfg
        .input
        .iter()
        .map(|p| {
            if p.exists() {
                Ok(Input { path: p.clone(), producer: None })
            } else {
                Err(CliError::io(p, std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found")))
            }
        })
        .collect::<CliResult<_>>()?;
    if skip_if_current(a, "ingest", &inputs)? {
        return Ok(());
    }
    let mut readings = Vec::new();
    let mut diag = csv::Writer::from_writer(create(&a.path("ingest.diagnostics.csv"))?);
    diag.write_record(["file", "line", "message"]).map_err(loadnet_core::Error::from)?;
    let mut rejected = 0;
    for input in &inputs {
        let parsed = parse_readings(open(&input.path)?)?;
        for d in &parsed.diagnostics {
            diag.write_record([input.path.display().to_string(), d.line.to_string(), d.message.clone()])
                .map_err(loadnet_core::Error::from)?;
        }
        rejected += parsed.diagnostics.len();
        readings.extend(parsed.readings);
    }
    diag.flush().map_err(|e| CliError::io(&a.path("ingest.diagnostics.csv"), e))?;
    let assembled = assemble_days(&readings);
    let mut report = assembled.report;
    let curves = normalize_all(&assembled.curves, &mut report);
    write_curves_csv(create(&a.path("curves.csv"))?, &curves)?;
    write_json(&a.path("skip_report.json"), &report)?;
    a.write_manifest("ingest", &inputs, &["curves.csv", "skip_report.json", "ingest.diagnostics.csv"])?;
    println!(
        "ingest: {} curves ({} rows rejected; skipped {} incomplete, {} zero, {} duplicate days)",
        curves.len(),
        rejected,
        report.skipped_incomplete,
        report.skipped_zero,
        report.skipped_duplicate
    );
    Ok(())
}

pub fn distances(a: &Artifacts) -> CliResult<()> {
    let curves_in = a.require("ingest", "curves.csv")?;
    if skip_if_current(a, "distances", std::slice::from_ref(&curves_in))? {
        return Ok(());
    }
    let curves = load_curves(&curves_in)?;
    let ids: Vec<u64> = curves.iter().map(|c| c.curve_id).collect();
    let dm = pairwise_distances(&curves, a.cfg.dtw())?.with_curve_ids(ids)?;
    let mut w = create(&a.path("distances.bin"))?;
    dm.write_binary(&mut w)?;
    w.flush().map_err(|e| CliError::io(&a.path("distances.bin"), e))?;
    dm.write_ids_json(create(&a.path("distances.ids.json"))?)?;
    a.write_manifest("distances", &[curves_in], &["distances.bin", "distances.ids.json"])?;
    println!("distances: {} curves, {} pairs", dm.n(), dm.n() * dm.n().saturating_sub(1) / 2);
    Ok(())
}

pub fn graph(a: &Artifacts) -> CliResult<()> {
    let (bin, ids) = load_matrix(a)?;
    let inputs = [bin.clone(), ids.clone()];
    if skip_if_current(a, "graph", &inputs)? {
        return Ok(());
    }
    let dm = read_matrix(&bin, &ids)?;
    let g = build_graph(&dm, a.cfg.graph())?;
    g.write_edges_csv(create(&a.path("graph.edges.csv"))?)?;
    g.write_meta_json(create(&a.path("graph.meta.json"))?)?;
    a.write_manifest("graph", &inputs, &["graph.edges.csv", "graph.meta.json"])?;
    println!("graph: {} vertices, {} edges", g.n(), g.edges().len());
    Ok(())
}

fn load_graph(a: &Artifacts) -> CliResult<(WeightedGraph, [Input; 2])> {
    let edges = a.require("graph", "graph.edges.csv")?;
    let meta = a.require("graph", "graph.meta.json")?;
    let g = WeightedGraph::read(open(&edges.path)?, open(&meta.path)?)?;
    Ok((g, [edges, meta]))
}

pub fn cluster(a: &Artifacts) -> CliResult<()> {
    let (g, inputs) = load_graph(a)?;
    if skip_if_current(a, "cluster", &inputs)? {
        return Ok(());
    }
    let cfg = LouvainConfig {
        gamma: a.cfg.gamma,
        mode: a.cfg.gamma_mode,
    };
    let r = louvain(&g, cfg)?;
    r.partition.write_csv(create(&a.path("partition.csv"))?, g.curve_ids())?;
    write_json(
        &a.path("cluster.json"),
        &json!({
            "gamma": cfg.gamma,
            "gamma_mode": cfg.mode,
            "k": r.partition.k(),
            "modularity": r.final_q(),
            "q_history": r.q_history,
            "passes": r.passes,
            "sizes": r.partition.sizes(),
        }),
    )?;
    a.write_manifest("cluster", &inputs, &["partition.csv", "cluster.json"])?;
    println!("cluster: k = {}, Q = {}", r.partition.k(), fmt_f64(r.final_q()));
    Ok(())
}

fn dba_config(cfg: &RunConfig) -> DbaConfig {
    DbaConfig::with_window(cfg.window)
}

pub fn tlp(a: &Artifacts) -> CliResult<()> {
    let part_in = a.require("cluster", "partition.csv")?;
    let curves_in = a.require("ingest", "curves.csv")?;
    let (bin, ids) = load_matrix(a)?;
    let inputs = [part_in.clone(), curves_in.clone(), bin.clone(), ids.clone()];
    if skip_if_current(a, "tlp", &inputs)? {
        return Ok(());
    }
    let curves = load_curves(&curves_in)?;
    let dm = read_matrix(&bin, &ids)?;
    check_ids(&curves, dm.curve_ids())?;
    let partition = Partition::read_csv(open(&part_in.path)?, dm.curve_ids())?;
    let tlps = extract_tlps(&partition, &curves, &dm, dba_config(a.cfg))?;
    write_tlp_csv(create(&a.path("tlp.csv"))?, &tlps)?;
    let sizes = partition.sizes();
    let clusters: Vec<_> = tlps
        .iter()
        .map(|t| {
            json!({
                "cluster_label": t.cluster_label,
                "size": sizes[t.cluster_label],
                "iterations": t.iterations_used,
                "cost": t.cost,
            })
        })
        .collect();
    write_json(&a.path("tlp.json"), &json!({ "k": tlps.len(), "clusters": clusters }))?;
    a.write_manifest("tlp", &inputs, &["tlp.csv", "tlp.json"])?;
    println!("tlp: {} profiles", tlps.len());
    Ok(())
}

fn kmedoids_config(cfg: &RunConfig) -> KMedoidsConfig {
    KMedoidsConfig {
        init: match cfg.baseline_init {
            BaselineInit::Greedy => Init::Greedy,
            BaselineInit::Random => Init::Random { seed: cfg.baseline_seed },
        },
        ..KMedoidsConfig::default()
    }
}

pub fn baseline(a: &Artifacts) -> CliResult<()> {
    let (bin, ids) = load_matrix(a)?;
    let mut inputs = vec![bin.clone(), ids.clone()];
    if a.cfg.k.is_none() {
        inputs.push(a.require("cluster", "partition.csv")?);
    }
    if skip_if_current(a, "baseline", &inputs)? {
        return Ok(());
    }
    let dm = read_matrix(&bin, &ids)?;
    let cfg = kmedoids_config(a.cfg);
    let r: KMedoidsResult = match a.cfg.k {
        Some(k) => k_medoids(&dm, k, cfg)?,
        None => {
            let cicd = Partition::read_csv(open(&inputs[2].path)?, dm.curve_ids())?;
            match_cluster_counts(&cicd, &dm, cfg)?
        }
    };
    r.partition.write_csv(create(&a.path("baseline.partition.csv"))?, dm.curve_ids())?;
    let medoid_ids: Vec<u64> = r.medoids.iter().map(|&m| dm.curve_ids()[m]).collect();
    write_json(
        &a.path("baseline.json"),
        &json!({
            "k": r.partition.k(),
            "medoid_ids": medoid_ids,
            "cost": r.cost,
            "iterations": r.iterations,
            "init": a.cfg.raw("baseline_init"),
            "seed": a.cfg.baseline_seed,
        }),
    )?;
    a.write_manifest("baseline", &inputs, &["baseline.partition.csv", "baseline.json"])?;
    println!("baseline: k = {}, cost = {}", r.partition.k(), fmt_f64(r.cost));
    Ok(())
}

pub fn validate(a: &Artifacts) -> CliResult<()> {
    let cfg = a.cfg;
    let curves_in = a.require("ingest", "curves.csv")?;
    let (bin, ids) = load_matrix(a)?;
    let mut inputs = vec![curves_in.clone(), bin.clone(), ids.clone()];
    let want_cicd = matches!(cfg.method, Method::Cicd | Method::Both);
    let want_base = matches!(cfg.method, Method::Baseline | Method::Both);
    if want_cicd {
        inputs.push(a.require("cluster", "partition.csv")?);
        inputs.push(a.require("tlp", "tlp.csv")?);
    }
    if want_base {
        inputs.push(a.require("baseline", "baseline.partition.csv")?);
    }
    if skip_if_current(a, "validate", &inputs)? {
        return Ok(());
    }
    let curves = load_curves(&curves_in)?;
    let dm = read_matrix(&bin, &ids)?;
    check_ids(&curves, dm.curve_ids())?;
    let households: Vec<&str> = curves.iter().map(|c| c.household_id.as_str()).collect();
    let find = |name: &str| {
        inputs
            .iter()
            .find(|i| i.path.file_name().is_some_and(|f| f == name))
            .expect("required above")
            .path
            .clone()
    };

    let mut rows: Vec<(&str, ValidityReport)> = Vec::new();
    let score = |partition: &Partition, centers: &[Vec<f64>], mode: CenterMode| {
        evaluate(
            &Evaluation {
                curves: &curves,
                household_ids: &households,
                partition,
                centers,
                center_mode: mode,
                dm: &dm,
            },
            cfg.dtw(),
            cfg.index_modes(),
        )
    };
    if want_cicd {
        let partition = Partition::read_csv(open(&find("partition.csv"))?, dm.curve_ids())?;
        let tlps: Vec<TypicalLoadProfile> = read_tlp_csv(open(&find("tlp.csv"))?)?;
        if tlps.len() != partition.k() {
            return Err(CliError::Stale(format!(
                "tlp.csv has {} profiles for {} clusters; rerun `loadnet tlp`",
                tlps.len(),
                partition.k()
            )));
        }
        let centers: Vec<Vec<f64>> = tlps.into_iter().map(|t| t.values).collect();
        rows.push(("cicd", score(&partition, &centers, CenterMode::Averaged)?));
    }
    if want_base {
        let partition = Partition::read_csv(open(&find("baseline.partition.csv"))?, dm.curve_ids())?;
        let (centers, mode) = if cfg.force_dba {
            let tlps = extract_tlps(&partition, &curves, &dm, dba_config(cfg))?;
            (tlps.into_iter().map(|t| t.values).collect(), CenterMode::Averaged)
        } else {
            let medoids = partition
                .clusters()
                .iter()
                .map(|c| loadnet_core::centers::medoid(c, &dm).map(|m| curves[m].values.clone()))
                .collect::<loadnet_core::Result<Vec<_>>>()?;
            (medoids, CenterMode::Medoid)
        };
        rows.push(("baseline", score(&partition, &centers, mode)?));
    }
    if rows.len() == 2 && rows[0].1.k != rows[1].1.k {
        eprintln!(
            "validate: warning: cluster counts differ (cicd k = {}, baseline k = {})",
            rows[0].1.k, rows[1].1.k
        );
    }

    let mut w = csv::Writer::from_writer(create(&a.path("validity.csv"))?);
    let mut header = vec!["method"];
    header.extend(ValidityReport::CSV_HEADER);
    w.write_record(&header).map_err(loadnet_core::Error::from)?;
    for (method, r) in &rows {
        let mut rec = vec![method.to_string()];
        rec.extend(r.csv_row());
        w.write_record(&rec).map_err(loadnet_core::Error::from)?;
    }
    w.flush().map_err(|e| CliError::io(&a.path("validity.csv"), e))?;
    let json_rows: Vec<_> = rows.iter().map(|(m, r)| json!({ "method": m, "report": r })).collect();
    write_json(&a.path("validity.json"), &json_rows)?;
    a.write_manifest("validate", &inputs, &["validity.csv", "validity.json"])?;
    for (m, r) in &rows {
        println!(
            "validate: {m}: k = {}, DB = {}, VCN = {}, S_Dbw = {}, SF = {}, COP = {}, entropy = {}",
            r.k,
            fmt_f64(r.db),
            fmt_f64(r.vcn),
            fmt_f64(r.s_dbw),
            fmt_f64(r.sf),
            fmt_f64(r.cop),
            fmt_f64(r.mean_entropy)
        );
    }
    Ok(())
}

fn sweep_config(cfg: &RunConfig) -> SweepConfig {
    SweepConfig {
        mode: cfg.gamma_mode,
        dtw: cfg.dtw(),
        dba: dba_config(cfg),
    }
}

pub fn sweep(a: &Artifacts) -> CliResult<()> {
    let (g, graph_in) = load_graph(a)?;
    let curves_in = a.require("ingest", "curves.csv")?;
    let (bin, ids) = load_matrix(a)?;
    let mut inputs = graph_in.to_vec();
    inputs.extend([curves_in.clone(), bin.clone(), ids.clone()]);
    if skip_if_current(a, "sweep", &inputs)? {
        return Ok(());
    }
    let curves = load_curves(&curves_in)?;
    let dm = read_matrix(&bin, &ids)?;
    check_ids(&curves, dm.curve_ids())?;
    let grid = a.cfg.grid.values()?;
    let points = gamma_sweep(&g, &grid, &curves, &dm, sweep_config(a.cfg))?;
    write_sweep_csv(create(&a.path("sweep.csv"))?, &points)?;

    let mut w = csv::Writer::from_writer(create(&a.path("sweep.partitions.csv"))?);
    let mut header = vec!["curve_id".to_string()];
    header.extend(points.iter().map(|p| fmt_f64(p.gamma)));
    w.write_record(&header).map_err(loadnet_core::Error::from)?;
    for (i, id) in dm.curve_ids().iter().enumerate() {
        let mut rec = vec![id.to_string()];
        rec.extend(points.iter().map(|p| p.partition.label(i).to_string()));
        w.write_record(&rec).map_err(loadnet_core::Error::from)?;
    }
    w.flush().map_err(|e| CliError::io(&a.path("sweep.partitions.csv"), e))?;
    a.write_manifest("sweep", &inputs, &["sweep.csv", "sweep.partitions.csv"])?;
    let ks: Vec<usize> = points.iter().map(|p| p.k).collect();
    println!(
        "sweep: {} points, k from {} to {}",
        points.len(),
        ks.iter().min().copied().unwrap_or(0),
        ks.iter().max().copied().unwrap_or(0)
    );
    Ok(())
}

fn read_sweep(csv_path: &Path, partitions_path: &Path, ids: &[u64]) -> CliResult<Vec<SweepPoint>> {
    let bad = |m: String| CliError::Invalid(format!("{}: {m}", csv_path.display()));
    let mut points = Vec::new();
    let mut rdr = csv::Reader::from_reader(open(csv_path)?);
    for rec in rdr.records() {
        let rec = rec.map_err(loadnet_core::Error::from)?;
        let num = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(format!("bad number {:?}", &rec[i])));
        let vcn = num(2)?;
        points.push(SweepPoint {
            gamma: num(0)?,
            k: rec[1].parse().map_err(|_| bad(format!("bad k {:?}", &rec[1])))?,
            vcn: (!vcn.is_nan()).then_some(vcn),
            q: num(3)?,
            variance: num(4)?,
            partition: Partition::whole(0),
            tlps: Vec::new(),
        });
    }
    let mut labels: Vec<Vec<usize>> = vec![Vec::with_capacity(ids.len()); points.len()];
    let mut rdr = csv::Reader::from_reader(open(partitions_path)?);
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(loadnet_core::Error::from)?;
        if rec.len() != points.len() + 1 || rec[0].parse::<u64>().ok() != ids.get(row).copied() {
            return Err(CliError::Stale("sweep.partitions.csv does not match the sweep; rerun `loadnet sweep`".into()));
        }
        for (p, v) in rec.iter().skip(1).enumerate() {
            labels[p].push(v.parse().map_err(|_| bad(format!("bad label {v:?}")))?);
        }
    }
    for (p, l) in points.iter_mut().zip(labels) {
        if l.len() != ids.len() {
            return Err(CliError::Stale("sweep.partitions.csv is truncated; rerun `loadnet sweep`".into()));
        }
        p.partition = Partition::from_labels(&l);
    }
    Ok(points)
}

pub fn directory(a: &Artifacts) -> CliResult<()> {
    let sweep_in = a.require("sweep", "sweep.csv")?;
    let parts_in = a.require("sweep", "sweep.partitions.csv")?;
    let curves_in = a.require("ingest", "curves.csv")?;
    let (bin, ids) = load_matrix(a)?;
    let inputs = [sweep_in.clone(), parts_in.clone(), curves_in.clone(), bin.clone(), ids.clone()];
    if skip_if_current(a, "directory", &inputs)? {
        return Ok(());
    }
    let curves = load_curves(&curves_in)?;
    let dm = read_matrix(&bin, &ids)?;
    check_ids(&curves, dm.curve_ids())?;
    let points = read_sweep(&sweep_in.path, &parts_in.path, dm.curve_ids())?;
    let dir = build_directory(&points, &a.cfg.intervals)?;

    let mut outputs = vec!["directory.json".to_string()];
    let mut layers_json = Vec::new();
    for (i, (layer, summary)) in dir.layers.iter().zip(dir.summary()).enumerate() {
        let mut entry = serde_json::to_value(&summary).map_err(|e| CliError::Invalid(e.to_string()))?;
        if let Some(p) = &layer.point {
            let tlps = extract_tlps(&p.partition, &curves, &dm, dba_config(a.cfg))?;
            let tlp_name = format!("directory.layer{i}.tlp.csv");
            let part_name = format!("directory.layer{i}.partition.csv");
            write_tlp_csv(create(&a.path(&tlp_name))?, &tlps)?;
            p.partition.write_csv(create(&a.path(&part_name))?, dm.curve_ids())?;
            entry["tlp_csv"] = json!(tlp_name);
            entry["partition_csv"] = json!(part_name);
            outputs.push(tlp_name);
            outputs.push(part_name);
            println!(
                "directory: layer {} {}: gamma = {}, k = {}, VCN = {}, variance = {}",
                i,
                layer.interval,
                fmt_f64(p.gamma),
                p.k,
                p.vcn.map_or_else(|| "NaN".into(), fmt_f64),
                fmt_f64(p.variance)
            );
        } else if let Some(d) = &layer.diagnostic {
            println!("directory: layer {i} {}: empty ({d})", layer.interval);
        }
        layers_json.push(entry);
    }
    write_json(
        &a.path("directory.json"),
        &json!({ "intervals": a.cfg.intervals.to_string(), "layers": layers_json }),
    )?;
    let names: Vec<&str> = outputs.iter().map(String::as_str).collect();
    a.write_manifest("directory", &inputs, &names)?;
    Ok(())
}
