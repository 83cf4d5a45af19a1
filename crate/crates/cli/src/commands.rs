//! One function per subcommand, each a thin layer over `hsi-core`.

use std::fmt;
use std::path::PathBuf;

use rayon::prelude::*;
use serde_json::{json, Value};

use hsi_core::bounds::{cross_term_trace, hsi_decompose, verify_loose_bound, Observable};
use hsi_core::circuit::{
    ansatz_state, optimize, select_target_subspace, Ansatz, SelectionRule, LAYOUT_VERSION,
};
use hsi_core::dynamics::{
    half_chain_entropy, quench_from_spectrum, steady_entropy_scaling, window_mean, QuenchSeries,
    TimeGrid, NEGLIGIBLE_SECTOR,
};
use hsi_core::ensemble::{run_ensemble_with, run_n_ensemble, sample_fields, EnsembleConfig, RunOptions};
use hsi_core::hamiltonian::DEFAULT_SITE_CAP;
use hsi_core::hilbert::make_product_state;
use hsi_core::spectra::{diagonalize, n_scaling, n_statistic, overlaps, SpectralData};
use hsi_core::{ModelSpec, Pauli, SectorMap};

use crate::config::{Command, ExperimentConfig};
use crate::output::{num, Csv, Run};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core { context: &'static str, source: hsi_core::Error },
    Io(std::io::Error),
}

impl CliError {
    /// 1 for bad input, 2 for numerical failure, 3 for a resource cap.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core { source, .. } if source.is_numerical() => 2,
            CliError::Core { source, .. } if source.is_resource_cap() => 3,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Core { context, source } => write!(f, "{context}: {source}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

trait Context<T> {
    fn ctx(self, context: &'static str) -> Result<T, CliError>;
}

impl<T> Context<T> for hsi_core::Result<T> {
    fn ctx(self, context: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Core { context, source })
    }
}

fn config<T>(r: Result<T, String>) -> Result<T, CliError> {
    r.map_err(CliError::Config)
}

pub fn run(command: Command, cfg: &ExperimentConfig, out: PathBuf) -> Result<PathBuf, CliError> {
    let run = Run::new(out)?;
    match command {
        Command::Spectrum => spectrum(cfg, run),
        Command::Quench => quench(cfg, run),
        Command::NScaling => nscaling(cfg, run),
        Command::Disorder => disorder(cfg, run),
        Command::Train => train(cfg, run),
        Command::Bounds => bounds(cfg, run),
    }
}

/// The configured model; disordered families get the fields of realization 0
/// of the configured ensemble, so a one-realization ensemble reproduces it.
fn model(cfg: &ExperimentConfig) -> Result<ModelSpec, CliError> {
    let family = config(cfg.model.family())?;
    let fields = family.disorder().map(|w| {
        sample_fields(w, cfg.model.sites, 0, cfg.ensemble.seed)
    });
    family
        .spec(cfg.model.sites, cfg.model.gamma, fields)
        .ctx("model")
}

fn solve(model: &ModelSpec) -> Result<SpectralData<f64>, CliError> {
    let op = model.operator(DEFAULT_SITE_CAP).ctx("model")?;
    eprintln!("diagonalizing {} L={} γ={}", model.name(), model.sites(), model.gamma());
    diagonalize(&op).ctx("eigensolver")
}

fn sector_header(label: i32) -> String {
    format!("P_{label}")
}

/// Columns `time, P_q…, entropy, survival` for the kept sectors.
fn series_csv(
    name: &'static str,
    grid: &TimeGrid<f64>,
    labels: &[i32],
    kept: &[i32],
    pq: &[Vec<f64>],
    entropy: &[f64],
    survival: &[f64],
) -> Csv {
    let cols: Vec<usize> = kept
        .iter()
        .map(|q| labels.iter().position(|l| l == q).expect("kept label exists"))
        .collect();
    let mut header = vec!["time".to_string()];
    header.extend(kept.iter().map(|&q| sector_header(q)));
    header.push("entropy".into());
    header.push("survival".into());
    let mut csv = Csv::new(name, header);
    for (t, &time) in grid.times().iter().enumerate() {
        let mut row = vec![num(time)];
        row.extend(cols.iter().map(|&k| num(pq[t][k])));
        row.push(num(entropy[t]));
        row.push(num(survival[t]));
        csv.row(row);
    }
    csv
}

fn kept_labels(labels: &[i32], pq: &[Vec<f64>]) -> Vec<i32> {
    labels
        .iter()
        .enumerate()
        .filter(|&(k, _)| pq.iter().any(|row| row[k] >= NEGLIGIBLE_SECTOR))
        .map(|(_, &q)| q)
        .collect()
}

fn series_summary(series: &QuenchSeries<f64>) -> Value {
    let kept = series.retained_labels(NEGLIGIBLE_SECTOR);
    let late: serde_json::Map<String, Value> = kept
        .iter()
        .map(|&q| (sector_header(q), json!(series.late_pq(q))))
        .collect();
    json!({
        "sector_kind": series.sector_kind,
        "kept_sectors": kept,
        "omitted_sectors": series.omitted_labels(),
        "late_populations": late,
        "late_entropy": series.late_entropy(),
        "late_survival": window_mean(&series.survival, series.grid.late_window()),
        "max_norm_deviation": series.max_norm_deviation(),
    })
}

fn write_series(run: &mut Run, file: &str, series: &QuenchSeries<f64>) -> Result<(), CliError> {
    let kept = series.retained_labels(NEGLIGIBLE_SECTOR);
    let csv = series_csv(
        "series",
        &series.grid,
        &series.labels,
        &kept,
        &series.pq,
        &series.entropy,
        &series.survival,
    );
    run.csv(file, &csv)?;
    Ok(())
}

fn spectrum(cfg: &ExperimentConfig, mut run: Run) -> Result<PathBuf, CliError> {
    let model = model(cfg)?;
    let kind = config(cfg.state())?;
    let spec = solve(&model)?;
    let psi = make_product_state(kind, model.sites()).ctx("initial state")?;
    let profile = overlaps(&psi, &spec).ctx("overlaps")?;
    let n = n_statistic(&profile, cfg.sweep.threshold).ctx("N statistic")?;
    let entropies: Vec<f64> = (0..spec.len())
        .into_par_iter()
        .map(|k| half_chain_entropy(&spec.eigenvector(k)))
        .collect::<hsi_core::Result<_>>()
        .ctx("eigenstate entropy")?;
    let mut csv = Csv::new(
        "spectrum",
        vec!["index".into(), "energy".into(), "entropy".into(), "weight".into()],
    );
    for k in 0..spec.len() {
        csv.row(vec![
            k.to_string(),
            num(spec.energies()[k]),
            num(entropies[k]),
            num(profile.weights()[k]),
        ]);
    }
    run.csv("spectrum.csv", &csv)?;
    let results = json!({
        "model": model,
        "initial_state": kind.label(),
        "n": n.count,
        "n_indices": n.indices,
        "captured_weight": n.captured,
        "weight_gap": n.weight_gap,
        "max_weight": profile.max_weight(),
        "states_above_0.9": profile.weights().iter().filter(|&&w| w > 0.9).count(),
        "residual_bound": spec.residual_bound(),
    });
    Ok(run.finish("spectrum", cfg, results)?)
}

fn quench(cfg: &ExperimentConfig, mut run: Run) -> Result<PathBuf, CliError> {
    let model = model(cfg)?;
    let kind = config(cfg.state())?;
    let grid = config(cfg.grid())?;
    let spec = solve(&model)?;
    let psi = make_product_state(kind, model.sites()).ctx("initial state")?;
    let map = SectorMap::new(model.natural_sectors(), spec.space());
    let series = quench_from_spectrum(&spec, &psi, &map, &grid).ctx("quench")?;
    write_series(&mut run, "quench.csv", &series)?;
    let n = n_statistic(&overlaps(&psi, &spec).ctx("overlaps")?, cfg.sweep.threshold)
        .ctx("N statistic")?;
    let mut results = series_summary(&series);
    results["model"] = json!(model);
    results["initial_state"] = json!(kind.label());
    results["n"] = json!(n.count);

    if cfg.sweep.entropy_scaling {
        let family = config(cfg.model.family())?;
        let mut csv = Csv::new(
            "entropy-scaling",
            vec!["gamma".into(), "sites".into(), "late_entropy".into()],
        );
        let mut fits = Vec::new();
        for &gamma in &cfg.sweep.gammas {
            eprintln!("entropy scaling at γ={gamma}");
            let s = steady_entropy_scaling(&family, kind, &cfg.sweep.sizes, gamma, &grid)
                .ctx("entropy scaling")?;
            for &(l, v) in &s.points {
                csv.row(vec![num(gamma), l.to_string(), num(v)]);
            }
            fits.push(json!({"gamma": gamma, "slope": s.slope, "intercept": s.intercept}));
        }
        run.csv("entropy_scaling.csv", &csv)?;
        results["entropy_scaling"] = json!(fits);
    }
    Ok(run.finish("quench", cfg, results)?)
}

fn ensemble_config(cfg: &ExperimentConfig, sites: usize, gamma: f64) -> Result<EnsembleConfig, CliError> {
    let family = config(cfg.model.family())?;
    let mut e = EnsembleConfig::new(family, sites, gamma, cfg.ensemble.seed);
    e.realizations = cfg.ensemble.realizations;
    e.grid = config(cfg.grid())?;
    e.threshold = cfg.sweep.threshold;
    Ok(e)
}

fn nscaling(cfg: &ExperimentConfig, mut run: Run) -> Result<PathBuf, CliError> {
    let family = config(cfg.model.family())?;
    let kind = config(cfg.state())?;
    let disordered = family.disorder().is_some_and(|w| w > 0.0);
    let mut rows_json = Vec::new();
    if disordered {
        let mut csv = Csv::new(
            "nscaling-ensemble",
            ["sites", "gamma", "mean_n", "se_n", "realizations"].map(String::from).to_vec(),
        );
        for &gamma in &cfg.sweep.gammas {
            for &sites in &cfg.sweep.sizes {
                eprintln!("ensemble N at L={sites} γ={gamma}");
                let e = ensemble_config(cfg, sites, gamma)?;
                let res = run_n_ensemble(&e, kind, 0).ctx("ensemble N")?;
                csv.row(vec![
                    sites.to_string(),
                    num(gamma),
                    num(res.mean_n),
                    num(res.se_n),
                    res.n_values.len().to_string(),
                ]);
                rows_json.push(json!(res));
            }
        }
        run.csv("nscaling.csv", &csv)?;
    } else {
        let rows = n_scaling(&family, kind, &cfg.sweep.sizes, &cfg.sweep.gammas, cfg.sweep.threshold)
            .ctx("N scaling")?;
        let mut csv = Csv::new(
            "nscaling",
            ["sites", "gamma", "n", "max_weight", "weight_gap"].map(String::from).to_vec(),
        );
        for r in &rows {
            csv.row(vec![
                r.sites.to_string(),
                num(r.gamma),
                r.n.to_string(),
                num(r.max_weight),
                num(r.weight_gap),
            ]);
        }
        run.csv("nscaling.csv", &csv)?;
        rows_json = rows.iter().map(|r| json!(r)).collect();
    }
    let results = json!({
        "family": family,
        "initial_state": kind.label(),
        "disorder_averaged": disordered,
        "rows": rows_json,
    });
    Ok(run.finish("nscaling", cfg, results)?)
}

fn disorder(cfg: &ExperimentConfig, mut run: Run) -> Result<PathBuf, CliError> {
    let kind = config(cfg.state())?;
    let e = ensemble_config(cfg, cfg.model.sites, cfg.model.gamma)?;
    let checkpoint = cfg.ensemble.checkpoint_dir.as_ref().map(PathBuf::from);
    let options = RunOptions {
        workers: 0,
        checkpoint_dir: checkpoint.as_deref(),
    };
    eprintln!(
        "ensemble of {} realizations, L={} γ={} W={}",
        e.realizations,
        e.sites,
        e.gamma,
        e.disorder()
    );
    let res = run_ensemble_with(&e, kind, &options).ctx("ensemble")?;
    let kept = kept_labels(&res.labels, &res.mean_pq);
    run.csv(
        "disorder.csv",
        &series_csv(
            "series",
            &e.grid,
            &res.labels,
            &kept,
            &res.mean_pq,
            &res.mean_entropy,
            &res.mean_survival,
        ),
    )?;
    run.csv(
        "disorder_se.csv",
        &series_csv(
            "series-se",
            &e.grid,
            &res.labels,
            &kept,
            &res.se_pq,
            &res.se_entropy,
            &res.se_survival,
        ),
    )?;
    let mut ncsv = Csv::new("realization-n", vec!["realization".into(), "n".into()]);
    for (r, n) in res.n_values.iter().enumerate() {
        ncsv.row(vec![r.to_string(), n.to_string()]);
    }
    run.csv("disorder_n.csv", &ncsv)?;
    let late: serde_json::Map<String, Value> = kept
        .iter()
        .map(|&q| (sector_header(q), json!(res.late_pq(q))))
        .collect();
    let results = json!({
        "family": e.family,
        "disorder": e.disorder(),
        "initial_state": kind.label(),
        "realizations": e.realizations,
        "sector_kind": res.sector_kind,
        "kept_sectors": kept,
        "late_populations": late,
        "late_entropy": res.late_entropy(),
        "mean_n": res.mean_n,
        "se_n": res.se_n,
    });
    Ok(run.finish("disorder", cfg, results)?)
}

fn train(cfg: &ExperimentConfig, mut run: Run) -> Result<PathBuf, CliError> {
    let model = model(cfg)?;
    let kind = config(cfg.state())?;
    let grid = config(cfg.grid())?;
    let rule = config(cfg.circuit.rule())?;
    let spec = solve(&model)?;
    let psi = make_product_state(kind, model.sites()).ctx("initial state")?;
    let provenance = format!("{} L={} γ={}", model.name(), model.sites(), model.gamma());
    let target = select_target_subspace(&spec, &psi, rule, &provenance).ctx("target subspace")?;
    let ansatz = Ansatz::new(model.sites(), cfg.circuit.layers).ctx("ansatz")?;
    eprintln!(
        "training {} layers ({} angles) toward {} eigenstates",
        ansatz.layers,
        ansatz.parameter_count(),
        target.len()
    );
    let result = optimize(&ansatz, &psi, &target, &cfg.circuit.optimizer()).ctx("optimizer")?;

    let mut hist = Csv::new("training", vec!["iteration".into(), "p".into()]);
    for (i, p) in result.history.iter().enumerate() {
        hist.row(vec![i.to_string(), num(*p)]);
    }
    run.csv("train_history.csv", &hist)?;
    run.json(
        "train_params.json",
        &json!({
            "layout_version": LAYOUT_VERSION,
            "layout": "per layer: Rx row, Ry row, Rz row over sites 0..L, then ZZ on (i, i+1) for i < L-1",
            "sites": ansatz.sites,
            "layers": ansatz.layers,
            "parameter_count": ansatz.parameter_count(),
            "theta": result.theta,
        }),
    )?;

    let map = SectorMap::new(model.natural_sectors(), spec.space());
    let trained = ansatz_state(&result.theta, &ansatz, &psi).ctx("trained state")?;
    let before = quench_from_spectrum(&spec, &psi, &map, &grid).ctx("quench")?;
    let after = quench_from_spectrum(&spec, &trained, &map, &grid).ctx("quench")?;
    write_series(&mut run, "train_quench_before.csv", &before)?;
    write_series(&mut run, "train_quench_after.csv", &after)?;

    let selection = match rule {
        SelectionRule::NSet { threshold } => json!({"rule": "n-set", "threshold": threshold}),
        SelectionRule::TopK { k } => json!({"rule": "top-k", "k": k}),
    };
    let results = json!({
        "model": model,
        "initial_state": kind.label(),
        "target": {"size": target.len(), "selection": selection, "provenance": target.provenance()},
        "initial_p": result.history[0],
        "final_p": result.best,
        "status": result.status,
        "iterations": result.history.len() - 1,
        "restart": result.restart,
        "before": series_summary(&before),
        "after": series_summary(&after),
    });
    Ok(run.finish("train", cfg, results)?)
}

fn bounds(cfg: &ExperimentConfig, mut run: Run) -> Result<PathBuf, CliError> {
    let model = model(cfg)?;
    let kind = config(cfg.state())?;
    let grid = config(cfg.grid())?;
    let spec = solve(&model)?;
    let sites = model.sites();
    let psi = make_product_state(kind, sites).ctx("initial state")?;
    let rule = SelectionRule::NSet {
        threshold: cfg.bounds.threshold,
    };
    let target = select_target_subspace(&spec, &psi, rule, model.name()).ctx("target subspace")?;
    let decomp = hsi_decompose(&psi, &target).ctx("decomposition")?;
    let axis = match cfg.bounds.axis.as_str() {
        "X" => Pauli::X,
        "Y" => Pauli::Y,
        _ => Pauli::Z,
    };
    let site = cfg.bounds.site.unwrap_or(sites / 2);
    let obs = Observable::single_site(sites, site, axis).ctx("observable")?;
    let report = verify_loose_bound(&decomp, &spec, &obs, &grid).ctx("loose bound")?;

    let header = [
        "time",
        "o_nonth",
        "o_th_inst",
        "cross_re",
        "cross_abs",
        "nonthermal",
        "thermal",
        "cross",
        "exact",
        "margin",
        "truncated_margin",
    ];
    let mut csv = Csv::new("bounds", header.map(String::from).to_vec());
    for (k, t) in report.terms.iter().enumerate() {
        csv.row(vec![
            num(t.time),
            num(t.o_nonth),
            num(t.o_th_inst),
            num(t.cross_amplitude.re),
            num(t.cross_amplitude.norm()),
            num(t.nonthermal),
            num(t.thermal),
            num(t.cross),
            num(t.exact),
            num(report.margin[k]),
            num(report.truncated_margin[k]),
        ]);
    }
    run.csv("bounds.csv", &csv)?;

    let mut results = json!({
        "model": model,
        "initial_state": kind.label(),
        "observable": report.observable,
        "subspace_size": target.len(),
        "delta": report.delta,
        "delta_squared": report.delta * report.delta,
        "min_margin": report.min_margin,
        "delta_est": report.delta_est,
        "o_th_late": report.o_th_late,
    });
    if matches!(model, ModelSpec::U1(_)) && axis == Pauli::Z && site == sites / 2 {
        eprintln!("cross-term trace over L = {:?}", cfg.sweep.sizes);
        let rows = cross_term_trace(kind, model.gamma(), &cfg.sweep.sizes, rule, &grid)
            .ctx("cross-term trace")?;
        let mut trace = Csv::new(
            "cross-term",
            ["sites", "delta", "subspace", "delta_est", "min_margin"].map(String::from).to_vec(),
        );
        for r in &rows {
            trace.row(vec![
                r.sites.to_string(),
                num(r.delta),
                r.subspace.to_string(),
                r.delta_est.map_or("NaN".to_string(), num),
                num(r.min_margin),
            ]);
        }
        run.csv("bounds_trace.csv", &trace)?;
        results["cross_term_trace"] = json!(rows);
    }
    Ok(run.finish("bounds", cfg, results)?)
}
