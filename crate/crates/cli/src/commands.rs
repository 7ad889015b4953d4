use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use boilgen_core::container::{Container, Layout};
use boilgen_core::dataset::{ja_to_lattice, read_predictions, StackSet};
use boilgen_core::diagnostics::{
    error_report, pooled_rmse_q_s, pooled_rmse_q_st, segment_regimes, DiagnosticsSeries, ErrorReport,
    FluxSettings,
};
use boilgen_core::ingest::{ingest_experimental, mask_files, read_thermocouple_csv, HeaterGeometry, InstanceMask, IngestSettings};
use boilgen_core::phase::{estimate_threshold, DensityHistogram, PhaseContourMap, PhaseSource, ThresholdMethod};
use boilgen_core::sim::{run, saturation_coexistence, FrameSeries, SimConfig};
use boilgen_core::units::{FluidProperties, LatticeConstants, UnitSystem};
use boilgen_core::ScalarGrid2D;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{RunConfig, Scale};
use crate::error::CliError;
use crate::output::{pgm16, write_atomic, write_container, write_csv};
use crate::{DatasetArgs, DiagnoseArgs, EvaluateArgs, IngestArgs, SimulateArgs, ThresholdArgs};

/// Dataset ids of each evaluation split.
pub fn split_ids(name: &str) -> Result<&'static [u32], CliError> {
    Ok(match name {
        "train" => &[1, 3, 4, 6],
        "test1" => &[2, 5],
        "test2" => &[7, 9],
        "test3" => &[8],
        "all" => &[1, 2, 3, 4, 5, 6, 7, 8, 9],
        other => return Err(CliError::Config(format!("unknown split {other:?}"))),
    })
}

fn thread_pool() -> Result<rayon::ThreadPool, CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("BOILGEN_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| CliError::Config(format!("BOILGEN_THREADS={v:?} is not a count")))?;
        b = b.num_threads(n);
    }
    b.build().map_err(|e| CliError::Config(e.to_string()))
}

fn read_container(path: &Path) -> Result<Container, CliError> {
    Container::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn read_series(path: &Path) -> Result<FrameSeries, CliError> {
    FrameSeries::from_container(&read_container(path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn stem(path: &Path) -> String {
    let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("output");
    name.split('.').next().unwrap_or(name).to_string()
}

fn config_hash(meta: &Value) -> Option<String> {
    meta.get("config_hash").and_then(Value::as_str).map(String::from)
}

pub fn simulate(mut config: RunConfig, args: &SimulateArgs) -> Result<(), CliError> {
    if args.desk {
        config.scale = Scale::Desk;
    }
    // resolve every campaign before writing anything
    let configs: Vec<(u32, SimConfig)> = args
        .datasets
        .iter()
        .map(|&id| config.campaign(id).map(|c| (id, c)))
        .collect::<Result<_, _>>()?;
    eprint!("{}", config.echo());
    fs::create_dir_all(&args.out)?;
    let stamp = config.stamp();
    let pool = thread_pool()?;
    let results: Vec<Result<(), CliError>> = pool.install(|| {
        configs
            .par_iter()
            .map(|(id, c)| {
                log::info!("dataset {id}: {} steps on {}x{}", c.total_steps(), c.width, c.height);
                let path = args.out.join(format!("dataset_{id}.boil"));
                match run(c) {
                    Ok(series) => {
                        write_container(series.to_container()?, &stamp, &path)?;
                        log::info!("dataset {id}: wrote {}", path.display());
                        Ok(())
                    }
                    Err(aborted) => {
                        let partial = args.out.join(format!("dataset_{id}.partial.boil"));
                        if !aborted.partial.is_empty() {
                            write_container(aborted.partial.to_container()?, &stamp, &partial)?;
                            log::warn!("dataset {id}: partial output in {}", partial.display());
                        }
                        Err(CliError::Solver(format!("dataset {id}: {}", aborted.error)))
                    }
                }
            })
            .collect()
    });
    results.into_iter().collect()
}

fn parse_method(name: &str) -> Result<Vec<ThresholdMethod>, CliError> {
    if name.eq_ignore_ascii_case("all") {
        return Ok(ThresholdMethod::ALL.to_vec());
    }
    Ok(vec![name.parse().map_err(CliError::from)?])
}

pub fn threshold(config: RunConfig, args: &ThresholdArgs) -> Result<(), CliError> {
    let methods = parse_method(&args.method)?;
    if args.save.is_some() && args.value.is_none() && methods.len() != 1 {
        return Err(CliError::Config("--save needs a single --method or an explicit --value".into()));
    }
    let hash = config.hash();
    let mut hist: Option<DensityHistogram> = None;
    for path in &args.inputs {
        let series = read_series(path)?;
        let mask = series.solid_mask();
        let h = hist.get_or_insert(DensityHistogram::for_liquid_density(
            series.metadata.solver.rho_l_coexistence,
        )?);
        for f in &series.frames {
            h.add_grid(&f.rho, &mask)?;
        }
    }
    let hist = hist.ok_or_else(|| CliError::Data("no frames".into()))?;
    let mut rows = Vec::new();
    for m in &methods {
        let v = match args.value {
            Some(v) => v,
            None => estimate_threshold(&hist, *m)?,
        };
        rows.push((m.name().to_string(), v));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "threshold", "config_hash"])?;
    for (m, v) in &rows {
        w.write_record([m.as_str(), &v.to_string(), &hash])?;
    }
    let table = w.into_inner().map_err(|e| CliError::Data(e.to_string()))?;
    print!("{}", String::from_utf8_lossy(&table));
    if let Some(out) = &args.out {
        write_csv(out, &hash, &table)?;
    }
    if let Some(save) = &args.save {
        let (method, value) = match args.value {
            Some(v) => ("explicit".to_string(), v),
            None => rows[0].clone(),
        };
        let body = json!({ "method": method, "threshold": value, "config_hash": hash });
        write_atomic(save, serde_json::to_string_pretty(&body)?.as_bytes())?;
    }
    Ok(())
}

fn resolve_threshold(spec: &str) -> Result<(f64, Value), CliError> {
    if let Ok(v) = spec.parse::<f64>() {
        return Ok((v, json!({ "method": "explicit", "threshold": v })));
    }
    let text = fs::read_to_string(spec).map_err(|e| CliError::Config(format!("threshold {spec}: {e}")))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("threshold {spec}: {e}")))?;
    let t = v
        .get("threshold")
        .and_then(Value::as_f64)
        .ok_or_else(|| CliError::Config(format!("threshold {spec}: no numeric \"threshold\"")))?;
    Ok((t, v))
}

fn split_inputs(
    inputs: &[PathBuf],
    split: Option<&str>,
    dir: Option<&Path>,
    suffix: &str,
) -> Result<Vec<PathBuf>, CliError> {
    match split {
        None if inputs.is_empty() => Err(CliError::Config("no inputs given".into())),
        None => Ok(inputs.to_vec()),
        Some(name) => {
            let dir = dir.ok_or_else(|| CliError::Config("--split needs a directory".into()))?;
            Ok(split_ids(name)?
                .iter()
                .map(|id| dir.join(format!("dataset_{id}{suffix}")))
                .collect())
        }
    }
}

pub fn dataset(mut config: RunConfig, args: &DatasetArgs) -> Result<(), CliError> {
    let mut threshold_source = Value::Null;
    if let Some(p) = args.p {
        config.dataset.p = p;
    }
    if args.mirror {
        config.dataset.mirror = true;
    }
    if let Some(spec) = &args.threshold {
        let (t, source) = resolve_threshold(spec)?;
        config.dataset.threshold = t;
        threshold_source = source;
    }
    let inputs = split_inputs(&args.inputs, args.split.as_deref(), args.dir.as_deref(), ".boil")?;
    eprint!("{}", config.echo());
    fs::create_dir_all(&args.out)?;
    let units = UnitSystem::default();
    let props = FluidProperties::simulation(&LatticeConstants::default());
    let mut stamp = config.stamp();
    stamp["threshold_source"] = threshold_source;
    for path in &inputs {
        let series = read_series(path)?;
        let set = StackSet::from_series(&series, &config.dataset, &units, &props)?;
        let out = args.out.join(format!("{}.stacks.boil", stem(path)));
        write_container(set.to_container()?, &stamp, &out)?;
        log::info!("{}: {} stacks -> {}", path.display(), set.stacks.len(), out.display());
    }
    Ok(())
}

pub fn ingest(mut config: RunConfig, args: &IngestArgs) -> Result<(), CliError> {
    if let Some(p) = args.p {
        config.dataset.p = p;
    }
    eprint!("{}", config.echo());
    let masks = mask_files(&args.masks)?
        .iter()
        .map(InstanceMask::read)
        .collect::<Result<Vec<_>, _>>()?;
    let readings = read_thermocouple_csv(&args.thermocouple)?;
    let settings = IngestSettings {
        p: config.dataset.p,
        heater: HeaterGeometry {
            line_row: args.line_row,
            x_start: args.x_start,
            x_end: args.x_end,
            length: args.length,
        },
    };
    let (mut set, geo) = ingest_experimental(
        &masks,
        &readings,
        &settings,
        &LatticeConstants::default(),
        &FluidProperties::experiment(),
    )?;
    log::info!(
        "required dimension {:.1} px, canvas {} px{}",
        geo.required_dimension,
        geo.canvas,
        if geo.padded { " (padded)" } else { "" }
    );
    if args.upscale > 1 {
        set.stacks = set
            .stacks
            .iter()
            .map(|s| s.upscale(args.upscale, None))
            .collect::<Result<_, _>>()?;
        set.metadata["upscale"] = json!(args.upscale);
    }
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_container(set.to_container()?, &config.stamp(), &args.out)?;
    log::info!("{} stacks -> {}", set.stacks.len(), args.out.display());
    Ok(())
}

/// Flux settings recorded with a stack set, or the desk-scale defaults.
fn stack_flux_settings(meta: &Value) -> Result<FluxSettings, CliError> {
    let coex = saturation_coexistence();
    match meta.get("simulation") {
        Some(sim) => {
            let config: SimConfig = serde_json::from_value(sim["config"].clone())?;
            let rho_l = sim["solver"]["rho_l_coexistence"].as_f64().unwrap_or(coex.rho_l);
            let rho_v = sim["solver"]["rho_v_coexistence"].as_f64().unwrap_or(coex.rho_v);
            Ok(FluxSettings::for_simulation(&config, rho_l, rho_v))
        }
        None => Ok(FluxSettings::for_simulation(
            &SimConfig::default().desk_scale(),
            coex.rho_l,
            coex.rho_v,
        )),
    }
}

fn stack_props(meta: &Value) -> Result<FluidProperties, CliError> {
    match meta.get("fluid") {
        Some(v) => Ok(serde_json::from_value(v.clone())?),
        None => Ok(FluidProperties::simulation(&LatticeConstants::default())),
    }
}

fn truth_frames(set: &StackSet) -> Result<(Vec<ScalarGrid2D>, Vec<ScalarGrid2D>), CliError> {
    let mut targets = Vec::with_capacity(set.stacks.len());
    let mut phis = Vec::with_capacity(set.stacks.len());
    for s in &set.stacks {
        targets.push(
            s.target
                .clone()
                .ok_or_else(|| CliError::Data("stack container has no targets".into()))?,
        );
        phis.push(s.contours[0].clone());
    }
    Ok((targets, phis))
}

pub fn diagnose(config: RunConfig, args: &DiagnoseArgs) -> Result<(), CliError> {
    let units = UnitSystem::default();
    let container = read_container(&args.input)?;
    let threshold = args.threshold.unwrap_or(config.dataset.threshold);
    let (mut diag, source) = match container.header.layout {
        Layout::Frames | Layout::FramesWithVelocity => {
            let series = FrameSeries::from_container(&container)?;
            (DiagnosticsSeries::from_series(&series, threshold, &units)?, "frames")
        }
        Layout::StacksWithTarget => {
            let set = StackSet::from_container(&container)?;
            let flux = stack_flux_settings(&set.metadata)?;
            let props = stack_props(&set.metadata)?;
            let (targets, phis) = truth_frames(&set)?;
            let temps: Vec<ScalarGrid2D> = targets.iter().map(|t| ja_to_lattice(t, &units, &props)).collect();
            let maps: Vec<PhaseContourMap> = phis
                .into_iter()
                .map(|phi| PhaseContourMap {
                    phi,
                    threshold_used: threshold,
                    source: PhaseSource::Simulation,
                })
                .collect();
            let frames = temps.iter().zip(&maps).map(|(t, m)| (t, flux.kappa_from_phase(&m.phi), m));
            (DiagnosticsSeries::compute(frames, &flux, &units)?, "stacks")
        }
        other => return Err(CliError::Data(format!("cannot diagnose a {other:?} container"))),
    };
    diag.regime = segment_regimes(
        &diag.void_fraction,
        config.diagnostics.f_eps,
        config.diagnostics.smoothing_window,
    );
    let hash = config.hash();
    fs::create_dir_all(&args.out)?;
    let name = stem(&args.input);
    let mut frames = Vec::new();
    diag.write_frames_csv(&mut frames)?;
    write_csv(&args.out.join(format!("{name}.frames.csv")), &hash, &frames)?;
    let mut local = Vec::new();
    diag.write_local_csv(&mut local)?;
    write_csv(&args.out.join(format!("{name}.local.csv")), &hash, &local)?;

    let onset = diag.void_fraction.iter().position(|&f| f >= config.diagnostics.f_eps);
    let peak = diag.void_fraction.iter().copied().fold(0.0, f64::max);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["input", "source", "frames", "q_st_w_cm2", "onset_frame", "peak_void_fraction", "config_hash"])?;
    w.write_record([
        args.input.display().to_string(),
        source.to_string(),
        diag.len().to_string(),
        diag.q_st.to_string(),
        onset.map_or(String::new(), |k| k.to_string()),
        peak.to_string(),
        hash.clone(),
    ])?;
    let summary = w.into_inner().map_err(|e| CliError::Data(e.to_string()))?;
    write_csv(&args.out.join(format!("{name}.summary.csv")), &hash, &summary)?;
    println!("q_ST = {:.6} W/cm^2 over {} frames", diag.q_st, diag.len());
    Ok(())
}

struct Pair {
    name: String,
    pred: PathBuf,
    truth: PathBuf,
}

fn evaluation_pairs(args: &EvaluateArgs) -> Result<Vec<Pair>, CliError> {
    match &args.split {
        Some(split) => {
            let pred_dir = args
                .pred_dir
                .as_ref()
                .ok_or_else(|| CliError::Config("--split needs --pred-dir".into()))?;
            let truth_dir = args
                .truth_dir
                .as_ref()
                .ok_or_else(|| CliError::Config("--split needs --truth-dir".into()))?;
            Ok(split_ids(split)?
                .iter()
                .map(|id| Pair {
                    name: format!("dataset_{id}"),
                    pred: pred_dir.join(format!("dataset_{id}.pred.boil")),
                    truth: truth_dir.join(format!("dataset_{id}.stacks.boil")),
                })
                .collect())
        }
        None => {
            if args.pred.is_empty() || args.pred.len() != args.truth.len() {
                return Err(CliError::Config("give matching --pred and --truth lists, or --split".into()));
            }
            Ok(args
                .pred
                .iter()
                .zip(&args.truth)
                .map(|(p, t)| Pair {
                    name: stem(t),
                    pred: p.clone(),
                    truth: t.clone(),
                })
                .collect())
        }
    }
}

fn report_json(name: &str, r: &ErrorReport) -> Value {
    json!({
        "name": name,
        "temperature_pct": r.temperature_pct,
        "delta_t_k": r.delta_t_k,
        "q_s_pred": r.q_s_pred,
        "q_s_truth": r.q_s_truth,
        "q_st_pred": r.q_st_pred,
        "q_st_truth": r.q_st_truth,
        "rmse_q_s": r.rmse_q_s,
        "rmse_q_st": r.rmse_q_st,
    })
}

pub fn evaluate(config: RunConfig, args: &EvaluateArgs) -> Result<(), CliError> {
    let pairs = evaluation_pairs(args)?;
    let units = UnitSystem::default();
    let mut loaded = Vec::with_capacity(pairs.len());
    let mut hashes = BTreeSet::new();
    for pair in &pairs {
        let pred = read_container(&pair.pred)?;
        let truth = read_container(&pair.truth)?;
        for (path, c) in [(&pair.pred, &pred), (&pair.truth, &truth)] {
            match config_hash(&c.metadata) {
                Some(h) => {
                    hashes.insert(h);
                }
                None => log::warn!("{} carries no config hash", path.display()),
            }
        }
        loaded.push((pred, truth));
    }
    if hashes.len() > 1 && !args.force {
        return Err(CliError::Data(format!(
            "inputs come from {} different configurations ({}); pass --force to compare anyway",
            hashes.len(),
            hashes.iter().map(|h| &h[..12]).collect::<Vec<_>>().join(", ")
        )));
    }
    let hash = config.hash();
    fs::create_dir_all(&args.out)?;
    let mut reports = Vec::new();
    let mut json_reports = Vec::new();
    for (pair, (pred, truth)) in pairs.iter().zip(&loaded) {
        let predictions = read_predictions(pred)?;
        let set = StackSet::from_container(truth)?;
        let (targets, phis) = truth_frames(&set)?;
        let flux = stack_flux_settings(&set.metadata)?;
        let props = stack_props(&set.metadata)?;
        let r = error_report(&predictions, &targets, &phis, &props, &flux, &units)
            .map_err(|e| CliError::Data(format!("{}: {e}", pair.name)))?;
        let mut maps = Container::new(
            Layout::Raster,
            r.mean_error_map.width(),
            r.mean_error_map.height(),
            0,
            2,
            json!({ "kind": "error_maps", "channels": ["mean_pct", "max_pct"], "name": pair.name }),
        )?;
        maps.push_sample([&r.mean_error_map, &r.max_error_map])?;
        let mut stamp = config.stamp();
        stamp["input_hashes"] = json!(hashes);
        write_container(maps, &stamp, &args.out.join(format!("{}.errors.boil", pair.name)))?;
        write_atomic(
            &args.out.join(format!("{}.error_mean.pgm", pair.name)),
            &pgm16(&r.mean_error_map, &hash),
        )?;
        write_atomic(
            &args.out.join(format!("{}.error_max.pgm", pair.name)),
            &pgm16(&r.max_error_map, &hash),
        )?;
        json_reports.push(report_json(&pair.name, &r));
        reports.push((pair.name.clone(), r));
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "name",
        "frames",
        "mean_pct_error",
        "max_pct_error",
        "mean_delta_t_error_k",
        "q_st_pred_w_cm2",
        "q_st_truth_w_cm2",
        "rmse_q_s",
        "rmse_q_st",
        "config_hash",
    ])?;
    for (name, r) in &reports {
        w.write_record([
            name.clone(),
            r.q_s_truth.len().to_string(),
            r.temperature_pct.all.mean.to_string(),
            r.temperature_pct.all.max.to_string(),
            r.delta_t_k.all.mean.to_string(),
            r.q_st_pred.to_string(),
            r.q_st_truth.to_string(),
            r.rmse_q_s.to_string(),
            r.rmse_q_st.to_string(),
            hash.clone(),
        ])?;
    }
    let only: Vec<ErrorReport> = reports.iter().map(|(_, r)| r.clone()).collect();
    let pooled_name = args.split.clone().unwrap_or_else(|| "pooled".into());
    let (pooled_s, pooled_st) = (pooled_rmse_q_s(&only), pooled_rmse_q_st(&only));
    w.write_record([
        pooled_name.clone(),
        only.iter().map(|r| r.q_s_truth.len()).sum::<usize>().to_string(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        String::new(),
        pooled_s.to_string(),
        pooled_st.to_string(),
        hash.clone(),
    ])?;
    let table = w.into_inner().map_err(|e| CliError::Data(e.to_string()))?;
    write_csv(&args.out.join("summary.csv"), &hash, &table)?;
    print!("{}", String::from_utf8_lossy(&table));
    let report = json!({
        "config_hash": hash,
        "input_hashes": hashes,
        "forced": args.force && hashes.len() > 1,
        "split": args.split,
        "datasets": json_reports,
        "pooled": { "name": pooled_name, "rmse_q_s": pooled_s, "rmse_q_st": pooled_st },
    });
    write_atomic(&args.out.join("report.json"), serde_json::to_string_pretty(&report)?.as_bytes())?;
    Ok(())
}
