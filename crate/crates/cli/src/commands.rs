//! Command implementations. Each returns the process exit code; verdicts
//! are encoded so shell pipelines can gate on stability: 0 stable,
//! 2 unstable, 3 not guaranteed, 4 simulation blow-up, 1 any error.

use crate::output::{
    append_concordance, read_concordance, scenario_hash, update_manifest, write_json, write_text,
    ConcordanceRow,
};
use crate::scenario::{InitialSpec, Scenario};
use crate::OutputFormat;
use anyhow::{anyhow, bail, Context, Result};
use cascade_core::policy::fit_policy;
use cascade_core::simulate::{classify_terminal_states, integrate, sync_metrics};
use cascade_core::stability::{audit, StabilityReport, Verdict};
use cascade_core::topology::{build_neighbor_graph, generate_ppp, spectrum, Region};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

pub fn verdict_exit_code(verdict: Verdict) -> i32 {
    match verdict {
        Verdict::Stable => 0,
        Verdict::Unstable => 2,
        Verdict::NotGuaranteed => 3,
    }
}

fn verdict_label(verdict: Verdict) -> &'static str {
    match verdict {
        Verdict::Stable => "stable",
        Verdict::Unstable => "unstable",
        Verdict::NotGuaranteed => "not-guaranteed",
    }
}

pub const DISCONNECTED_WARNING: &str = "graph disconnected; per-component analysis will apply";

fn ensure_out_dir(out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create output directory {}", out_dir.display()))
}

/// Parse a "WxH" region in meters.
fn parse_region(spec: &str) -> Result<Region<f64>> {
    let (w, h) = spec
        .split_once(['x', 'X'])
        .ok_or_else(|| anyhow!("region must be WIDTHxHEIGHT in meters, e.g. 1000x1000"))?;
    Ok(Region::new(w.trim().parse()?, h.trim().parse()?)?)
}

pub struct GenerateArgs {
    pub intensity_per_km2: f64,
    pub region: String,
    pub connection_probability: f64,
    pub seed: u64,
}

pub fn cmd_generate(
    args: &GenerateArgs,
    out_dir: &Path,
    format: Option<OutputFormat>,
) -> Result<i32> {
    ensure_out_dir(out_dir)?;
    let region = parse_region(&args.region)?;
    let sites = generate_ppp(args.intensity_per_km2 / 1e6, region, args.seed)?;
    let topology = build_neighbor_graph(sites, region, args.connection_probability, args.seed)?;
    let summary = spectrum(&topology.laplacian())?;
    let components = topology.connected_components();

    write_json(&out_dir.join("topology.json"), &topology)?;
    write_text(&out_dir.join("spectrum.csv"), &summary.to_csv())?;

    let lambda2 = summary.algebraic_connectivity.unwrap_or(0.0);
    println!(
        "generated {} sites, {} edges (P = {})",
        topology.n_cells(),
        topology.n_edges(),
        args.connection_probability
    );
    println!(
        "lambda_2 = {lambda2}, lambda_max = {}, components = {}",
        summary.spectral_radius,
        components.len()
    );
    if components.len() > 1 {
        eprintln!("warning: {DISCONNECTED_WARNING}");
    }
    match format {
        Some(OutputFormat::Json) => println!(
            "{}",
            serde_json::json!({
                "sites": topology.n_cells(),
                "edges": topology.n_edges(),
                "lambda2": lambda2,
                "lambda_max": summary.spectral_radius,
                "components": components.len(),
            })
        ),
        Some(OutputFormat::Csv) => print!("{}", summary.to_csv()),
        None => {}
    }

    let hash = scenario_hash(
        format!(
            "generate:intensity={};region={};P={};seed={}",
            args.intensity_per_km2, args.region, args.connection_probability, args.seed
        )
        .as_bytes(),
    );
    update_manifest(
        out_dir,
        &hash,
        args.seed,
        "generate",
        &format!(
            "{} sites, {} edges, {} components",
            topology.n_cells(),
            topology.n_edges(),
            components.len()
        ),
        &["topology.json".into(), "spectrum.csv".into()],
    )?;
    Ok(0)
}

/// Scenario loading shared by audit/simulate/sweep: applies the --seed
/// override and returns the provenance hash of the document driving the run.
fn load_scenario(path: &Path, seed_override: Option<u64>) -> Result<(Scenario, String, PathBuf)> {
    let (mut scenario, bytes) = Scenario::load(path)?;
    let mut hash = scenario_hash(&bytes);
    if let Some(seed) = seed_override {
        scenario.seed = seed;
        hash = scenario_hash(format!("{hash}+seed={seed}").as_bytes());
    }
    let dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    Ok((scenario, hash, dir))
}

fn print_audit_report(report: &StabilityReport<f64>) {
    println!("verdict: {}", verdict_label(report.verdict));
    println!("rationale: {}", report.rationale);
    if report.components.len() > 1 {
        eprintln!("warning: {DISCONNECTED_WARNING}");
    }
    for culprit in &report.culprits {
        println!("cell {}: {}", culprit.cell, culprit.reason);
    }
}

pub fn cmd_audit(
    scenario_path: &Path,
    seed_override: Option<u64>,
    out_dir: Option<&Path>,
    format: Option<OutputFormat>,
) -> Result<i32> {
    let (scenario, hash, scenario_dir) = load_scenario(scenario_path, seed_override)?;
    let out_dir = resolve_out_dir(out_dir, &scenario);
    ensure_out_dir(&out_dir)?;

    let topology = scenario.build_topology(&scenario_dir)?;
    let assignment = scenario.build_assignment(topology.n_cells())?;
    let report = audit(&topology, &assignment)?;

    write_json(&out_dir.join("stability_report.json"), &report)?;
    print_audit_report(&report);
    match format {
        Some(OutputFormat::Json) => println!("{}", serde_json::to_string(&report)?),
        Some(OutputFormat::Csv) => {
            println!("cell,reason");
            for culprit in &report.culprits {
                println!("{},{}", culprit.cell, culprit.reason);
            }
        }
        None => {}
    }
    update_manifest(
        &out_dir,
        &hash,
        scenario.seed,
        "audit",
        &format!(
            "{} ({} culprits)",
            verdict_label(report.verdict),
            report.culprits.len()
        ),
        &["stability_report.json".into()],
    )?;
    Ok(verdict_exit_code(report.verdict))
}

/// Everything one simulation run produces, reused by `simulate` and `sweep`.
struct SimRun {
    report: StabilityReport<f64>,
    synchronized: bool,
    blowup: bool,
    sync_time: Option<f64>,
    empirical_rate: Option<f64>,
    analytic_rate: Option<f64>,
    summary: String,
    wrote_radio_snapshot: bool,
}

fn run_simulation(
    scenario: &Scenario,
    scenario_dir: &Path,
    initial_override: Option<&InitialSpec>,
    out_dir: &Path,
) -> Result<SimRun> {
    ensure_out_dir(out_dir)?;
    let topology = scenario.build_topology(scenario_dir)?;
    let assignment = scenario.build_assignment(topology.n_cells())?;
    let config = scenario.sim_config()?;
    let (initial, radio_snapshot) = scenario.initial_loads(&topology, initial_override)?;

    let report = audit(&topology, &assignment)?;
    let trajectory = integrate(&config, &initial, &topology, &assignment)?;
    let metrics = sync_metrics(&trajectory, &config)?;
    let terminal = classify_terminal_states(&trajectory, &assignment, Some(&report))?;

    write_text(&out_dir.join("trajectory.csv"), &trajectory.to_csv())?;
    write_json(&out_dir.join("sync_metrics.json"), &metrics)?;
    write_json(&out_dir.join("terminal_states.json"), &terminal)?;
    let wrote_radio_snapshot = radio_snapshot.is_some();
    if let Some(snapshot) = &radio_snapshot {
        write_json(&out_dir.join("radio_snapshot.json"), snapshot)?;
        write_text(&out_dir.join("radio_snapshot.csv"), &snapshot.to_csv())?;
    }

    // Worst analytic mode rate, when the audit produced rates.
    let analytic_rate = match (report.uniform_rate, report.disagreement_rate) {
        (Some(u), Some(d)) => Some(u.max(d)),
        (Some(u), None) => Some(u),
        _ => None,
    };
    let summary = if metrics.blowup {
        "blow-up".to_string()
    } else if metrics.synchronized {
        format!(
            "synchronized at t={}",
            metrics.sync_time.expect("sync time present")
        )
    } else {
        let clusters = metrics
            .terminal_clusters
            .iter()
            .map(|c| format!("{:.3} ({} cells)", c.representative, c.members.len()))
            .collect::<Vec<_>>()
            .join(", ");
        format!("not synchronized; clusters: {clusters}")
    };
    Ok(SimRun {
        synchronized: metrics.synchronized,
        blowup: metrics.blowup,
        sync_time: metrics.sync_time,
        empirical_rate: metrics.empirical_rate,
        analytic_rate,
        summary,
        report,
        wrote_radio_snapshot,
    })
}

fn concordance_row(hash: &str, seed: u64, run: &SimRun) -> ConcordanceRow {
    let empirical_outcome = if run.blowup {
        "blowup"
    } else if run.synchronized {
        "synchronized"
    } else {
        "not-synchronized"
    };
    ConcordanceRow {
        scenario_hash: hash.to_string(),
        seed,
        analytic_verdict: verdict_label(run.report.verdict).to_string(),
        empirical_outcome: empirical_outcome.to_string(),
        analytic_rate: run.analytic_rate,
        empirical_rate: run.empirical_rate,
        sync_time: run.sync_time,
    }
}

fn print_sim_run(run: &SimRun) {
    println!("analytic verdict: {}", verdict_label(run.report.verdict));
    println!("simulation: {}", run.summary);
    if let (Some(empirical), Some(analytic)) = (run.empirical_rate, run.analytic_rate) {
        let relative = ((empirical - analytic) / analytic).abs() * 100.0;
        println!(
            "empirical rate {empirical} vs analytic worst mode {analytic} \
             (difference {relative:.1}%)"
        );
    }
}

pub fn cmd_simulate(
    scenario_path: &Path,
    seed_override: Option<u64>,
    initial_override: Option<&InitialSpec>,
    out_dir: Option<&Path>,
    format: Option<OutputFormat>,
) -> Result<i32> {
    let (scenario, hash, scenario_dir) = load_scenario(scenario_path, seed_override)?;
    let out_dir = resolve_out_dir(out_dir, &scenario);
    let run = run_simulation(&scenario, &scenario_dir, initial_override, &out_dir)?;
    print_sim_run(&run);
    match format {
        Some(OutputFormat::Json) => {
            let metrics = std::fs::read_to_string(out_dir.join("sync_metrics.json"))?;
            print!("{metrics}");
        }
        Some(OutputFormat::Csv) => {
            let trajectory = std::fs::read_to_string(out_dir.join("trajectory.csv"))?;
            print!("{trajectory}");
        }
        None => {}
    }
    append_concordance(&out_dir, &[concordance_row(&hash, scenario.seed, &run)])?;
    let mut produced: Vec<String> = vec![
        "trajectory.csv".into(),
        "sync_metrics.json".into(),
        "terminal_states.json".into(),
        crate::output::CONCORDANCE_FILE.into(),
    ];
    if run.wrote_radio_snapshot {
        produced.push("radio_snapshot.json".into());
        produced.push("radio_snapshot.csv".into());
    }
    update_manifest(
        &out_dir,
        &hash,
        scenario.seed,
        "simulate",
        &run.summary,
        &produced,
    )?;
    Ok(if run.blowup { 4 } else { 0 })
}

pub fn cmd_fit(
    samples_path: &Path,
    degree: usize,
    out_dir: &Path,
    format: Option<OutputFormat>,
) -> Result<i32> {
    ensure_out_dir(out_dir)?;
    let content = std::fs::read_to_string(samples_path)
        .with_context(|| format!("cannot read samples {}", samples_path.display()))?;
    let mut lines = content.lines();
    let header = lines
        .next()
        .ok_or_else(|| anyhow!("samples CSV is empty"))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let load_col = columns
        .iter()
        .position(|&c| c == "load")
        .ok_or_else(|| anyhow!("samples CSV is missing the 'load' column"))?;
    let rate_col = columns
        .iter()
        .position(|&c| c == "rate")
        .ok_or_else(|| anyhow!("samples CSV is missing the 'rate' column"))?;

    let mut samples: Vec<(f64, f64)> = Vec::new();
    for (number, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() <= load_col.max(rate_col) {
            bail!("samples CSV row {} has too few columns", number + 2);
        }
        samples.push((
            fields[load_col]
                .parse()
                .with_context(|| format!("row {} load", number + 2))?,
            fields[rate_col]
                .parse()
                .with_context(|| format!("row {} rate", number + 2))?,
        ));
    }

    let fit = fit_policy(&samples, degree)?;
    let mut policy_json = serde_json::to_value(&fit.policy)?;
    let object = policy_json
        .as_object_mut()
        .expect("policy serializes to an object");
    object.insert(
        "fit_residual_rms".to_string(),
        serde_json::json!(fit.residual_rms),
    );
    object.insert(
        "fit_equilibrium_correction".to_string(),
        serde_json::json!(fit.equilibrium_correction),
    );
    write_json(&out_dir.join("policy.json"), &policy_json)?;

    println!(
        "fitted degree-{degree} policy from {} samples; residual rms {}, equilibrium correction {}",
        samples.len(),
        fit.residual_rms,
        fit.equilibrium_correction
    );
    match format {
        Some(OutputFormat::Json) => println!("{policy_json}"),
        Some(OutputFormat::Csv) => {
            println!("k,coefficient");
            for (k, c) in fit.policy.coeffs().iter().enumerate() {
                println!("{k},{c}");
            }
        }
        None => {}
    }
    let hash = scenario_hash(content.as_bytes());
    update_manifest(
        out_dir,
        &hash,
        0,
        "fit",
        &format!("degree {degree}, residual rms {}", fit.residual_rms),
        &["policy.json".into()],
    )?;
    Ok(0)
}

pub struct SweepArgs {
    /// JSON pointer into the scenario document, e.g. /simulation/horizon.
    pub param: Option<String>,
    pub values: Option<String>,
    /// Inclusive seed range "lo..hi".
    pub seeds: Option<String>,
    pub jobs: usize,
}

pub fn cmd_sweep(
    scenario_path: &Path,
    seed_override: Option<u64>,
    args: &SweepArgs,
    out_dir: Option<&Path>,
) -> Result<i32> {
    let (scenario, base_hash, scenario_dir) = load_scenario(scenario_path, seed_override)?;
    let out_dir = resolve_out_dir(out_dir, &scenario);
    ensure_out_dir(&out_dir)?;
    let bytes = std::fs::read(scenario_path)?;
    let mut base_value: serde_json::Value = serde_json::from_slice(&bytes)?;
    if let Some(seed) = seed_override {
        base_value["seed"] = serde_json::json!(seed);
    }

    // Materialize the variant documents.
    let mut variants: Vec<(String, serde_json::Value)> = Vec::new();
    match (&args.param, &args.values, &args.seeds) {
        (Some(pointer), Some(values), None) => {
            let name = pointer.rsplit('/').next().unwrap_or("param");
            for raw in values.split(',') {
                let raw = raw.trim();
                let mut variant = base_value.clone();
                let slot = variant
                    .pointer_mut(pointer)
                    .ok_or_else(|| anyhow!("scenario has no value at pointer {pointer:?}"))?;
                *slot = raw
                    .parse::<f64>()
                    .map(serde_json::Value::from)
                    .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
                variants.push((format!("{name}-{raw}"), variant));
            }
        }
        (None, None, Some(range)) => {
            let (lo, hi) = range
                .split_once("..")
                .ok_or_else(|| anyhow!("seed range must be LO..HI (inclusive)"))?;
            let (lo, hi): (u64, u64) = (lo.trim().parse()?, hi.trim().parse()?);
            if hi < lo {
                bail!("empty seed range {range:?}");
            }
            for seed in lo..=hi {
                let mut variant = base_value.clone();
                variant["seed"] = serde_json::json!(seed);
                variants.push((format!("seed-{seed}"), variant));
            }
        }
        _ => bail!("sweep needs either --param with --values, or --seeds"),
    }

    // Independent variants run on worker threads; results keep input order.
    type VariantSlot = Mutex<Option<Result<(SimRun, u64)>>>;
    let results: Vec<VariantSlot> = variants.iter().map(|_| Mutex::new(None)).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    let jobs = args.jobs.max(1);
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(variants.len()) {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if index >= variants.len() {
                    break;
                }
                let (label, value) = &variants[index];
                let outcome = (|| -> Result<(SimRun, u64)> {
                    let scenario = Scenario::from_value(value.clone())?;
                    let variant_dir = out_dir.join("sweep").join(label);
                    let run = run_simulation(&scenario, &scenario_dir, None, &variant_dir)?;
                    Ok((run, scenario.seed))
                })();
                *results[index].lock().expect("result slot") = Some(outcome);
            });
        }
    });

    let mut rows = Vec::new();
    let mut failures = 0usize;
    for ((label, _), slot) in variants.iter().zip(&results) {
        let outcome = slot
            .lock()
            .expect("result slot")
            .take()
            .expect("variant ran");
        match outcome {
            Ok((run, seed)) => {
                println!(
                    "{label}: analytic {}, {}",
                    verdict_label(run.report.verdict),
                    run.summary
                );
                let hash = scenario_hash(format!("{base_hash}+variant={label}").as_bytes());
                rows.push(concordance_row(&hash, seed, &run));
            }
            Err(error) => {
                failures += 1;
                eprintln!("{label}: error: {error:#}");
            }
        }
    }
    append_concordance(&out_dir, &rows)?;
    update_manifest(
        &out_dir,
        &base_hash,
        scenario.seed,
        "sweep",
        &format!("{} variants, {failures} failed", variants.len()),
        &[crate::output::CONCORDANCE_FILE.into()],
    )?;
    Ok(if failures > 0 { 1 } else { 0 })
}

pub fn cmd_report(out_dir: &Path) -> Result<i32> {
    let manifest_path = out_dir.join(crate::output::MANIFEST_FILE);
    if let Ok(bytes) = std::fs::read(&manifest_path) {
        let manifest: crate::output::RunManifest = serde_json::from_slice(&bytes)?;
        println!(
            "manifest: tool {} scenario {}",
            manifest.tool_version, manifest.scenario_hash
        );
        for (command, summary) in &manifest.verdict_summary {
            println!("  {command}: {summary}");
        }
        println!("  produced: {}", manifest.produced.join(", "));
    } else {
        println!("no manifest in {}", out_dir.display());
    }

    match read_concordance(out_dir) {
        Ok(rows) => {
            let mut counts: std::collections::BTreeMap<(String, String), usize> =
                std::collections::BTreeMap::new();
            for row in &rows {
                *counts
                    .entry((row.analytic_verdict.clone(), row.empirical_outcome.clone()))
                    .or_default() += 1;
            }
            println!("concordance ({} runs):", rows.len());
            println!("  analytic,empirical,count");
            for ((analytic, empirical), count) in counts {
                println!("  {analytic},{empirical},{count}");
            }
        }
        Err(_) => println!("no concordance ledger in {}", out_dir.display()),
    }
    Ok(0)
}

fn resolve_out_dir(flag: Option<&Path>, scenario: &Scenario) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| scenario.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}
