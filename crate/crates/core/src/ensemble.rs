//! Disorder ensembles: reproducible field sampling, realization runs on a
//! worker pool, and order-independent averages with standard errors.
//!
//! Every realization draws its fields from its own ChaCha stream keyed by
//! `(master seed, realization index)`, the `j`-th draw going to site `j`.
//! Results are gathered in index order before a compensated reduction, so
//! the output is bit-identical for any worker count.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{quench_from_spectrum, window_mean, TimeGrid};
use crate::error::{Error, Result};
use crate::hamiltonian::{ModelFamily, ModelSpec, DEFAULT_SITE_CAP};
use crate::hilbert::{make_product_state, ProductState, SectorKind, SectorMap};
use crate::scalar::KahanSum;
use crate::spectra::{diagonalize, n_statistic, overlaps, SpectralData};

pub const DEFAULT_REALIZATIONS: usize = 400;

/// Bumped whenever the checkpoint layout changes.
pub const CHECKPOINT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    /// A disordered family; its `disorder` field is the width `W`.
    pub family: ModelFamily,
    pub sites: usize,
    pub gamma: f64,
    pub realizations: usize,
    pub seed: u64,
    pub grid: TimeGrid<f64>,
    /// Weight threshold for the per-realization `N`.
    pub threshold: f64,
}

impl EnsembleConfig {
    pub fn new(family: ModelFamily, sites: usize, gamma: f64, seed: u64) -> Self {
        Self {
            family,
            sites,
            gamma,
            realizations: DEFAULT_REALIZATIONS,
            seed,
            grid: TimeGrid::standard(),
            threshold: 0.8,
        }
    }

    pub fn disorder(&self) -> f64 {
        self.family.disorder().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.family.disorder().is_none() {
            return Err(Error::InvalidParameter(format!(
                "ensembles need a disordered family, got `{}`",
                self.family.name()
            )));
        }
        if self.realizations == 0 {
            return Err(Error::InvalidParameter(
                "realization count must be at least 1".to_string(),
            ));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        Ok(())
    }

    /// The concrete Hamiltonian of one realization.
    pub fn model(&self, realization: usize) -> Result<ModelSpec> {
        let fields = sample_fields(self.disorder(), self.sites, realization, self.seed);
        self.family.spec(self.sites, self.gamma, Some(fields))
    }
}

/// Fields `h_j ~ U[−W, W]` for one realization.
pub fn sample_fields(width: f64, sites: usize, realization: usize, seed: u64) -> Vec<f64> {
    if width == 0.0 {
        return vec![0.0; sites];
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(realization as u64);
    (0..sites).map(|_| rng.random_range(-width..=width)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions<'a> {
    /// Worker threads; 0 uses the ambient rayon pool.
    pub workers: usize,
    /// Directory for per-realization checkpoints; existing matching files
    /// are reused instead of recomputed.
    pub checkpoint_dir: Option<&'a Path>,
}

/// Everything one realization contributes to the averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationRecord {
    pub index: usize,
    pub fields: Vec<f64>,
    pub n: usize,
    pub pq: Vec<Vec<f64>>,
    pub entropy: Vec<f64>,
    pub survival: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub config: EnsembleConfig,
    pub initial: ProductState,
    pub sector_kind: SectorKind,
    /// Sector labels, descending; columns of `mean_pq` and `se_pq`.
    pub labels: Vec<i32>,
    pub mean_pq: Vec<Vec<f64>>,
    pub se_pq: Vec<Vec<f64>>,
    pub mean_entropy: Vec<f64>,
    pub se_entropy: Vec<f64>,
    pub mean_survival: Vec<f64>,
    pub se_survival: Vec<f64>,
    /// Mean of the per-realization `N`.
    pub mean_n: f64,
    pub se_n: f64,
    pub n_values: Vec<usize>,
}

impl EnsembleResult {
    fn column(&self, label: i32) -> Option<usize> {
        self.labels.iter().position(|&q| q == label)
    }

    pub fn mean_pq_of(&self, label: i32) -> Vec<f64> {
        match self.column(label) {
            Some(k) => self.mean_pq.iter().map(|row| row[k]).collect(),
            None => vec![0.0; self.config.grid.len()],
        }
    }

    pub fn se_pq_of(&self, label: i32) -> Vec<f64> {
        match self.column(label) {
            Some(k) => self.se_pq.iter().map(|row| row[k]).collect(),
            None => vec![0.0; self.config.grid.len()],
        }
    }

    pub fn late_pq(&self, label: i32) -> f64 {
        window_mean(&self.mean_pq_of(label), self.config.grid.late_window())
    }

    pub fn late_entropy(&self) -> f64 {
        window_mean(&self.mean_entropy, self.config.grid.late_window())
    }
}

/// Per-realization `N` without the dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NEnsemble {
    pub sites: usize,
    pub gamma: f64,
    pub n_values: Vec<usize>,
    pub mean_n: f64,
    pub se_n: f64,
}

fn realization_spectrum(cfg: &EnsembleConfig, index: usize) -> Result<(ModelSpec, SpectralData)> {
    let model = cfg.model(index)?;
    let spectrum = diagonalize(&model.operator(DEFAULT_SITE_CAP)?)?;
    Ok((model, spectrum))
}

fn run_realization(
    cfg: &EnsembleConfig,
    kind: ProductState,
    index: usize,
) -> Result<RealizationRecord> {
    let (model, spectrum) = realization_spectrum(cfg, index)?;
    let initial = make_product_state(kind, cfg.sites)?;
    let n = n_statistic(&overlaps(&initial, &spectrum)?, cfg.threshold)?.count;
    let map = SectorMap::new(model.natural_sectors(), spectrum.space());
    let series = quench_from_spectrum(&spectrum, &initial, &map, &cfg.grid)?;
    let fields = match model {
        ModelSpec::Z2(s) => s.fields,
        ModelSpec::U1Disordered(s) => s.fields,
        ModelSpec::U1(_) => Vec::new(),
    };
    Ok(RealizationRecord {
        index,
        fields,
        n,
        pq: series.pq,
        entropy: series.entropy,
        survival: series.survival,
    })
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    schema: u32,
    fingerprint: String,
    record: RealizationRecord,
}

/// Identifies the inputs a record depends on; the realization count is left
/// out so a run can be extended.
fn fingerprint(cfg: &EnsembleConfig, kind: ProductState) -> Result<String> {
    let mut key = cfg.clone();
    key.realizations = 0;
    serde_json::to_string(&(key, kind)).map_err(|e| Error::InvalidParameter(e.to_string()))
}

fn checkpoint_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("realization-{index:05}.json"))
}

fn load_checkpoint(path: &Path, fingerprint: &str, index: usize) -> Result<Option<RealizationRecord>> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let bad = |reason: String| Error::Checkpoint {
        path: path.display().to_string(),
        reason,
    };
    let cp: Checkpoint = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    if cp.schema != CHECKPOINT_SCHEMA {
        return Err(bad(format!(
            "schema {} does not match {CHECKPOINT_SCHEMA}",
            cp.schema
        )));
    }
    if cp.fingerprint != fingerprint || cp.record.index != index {
        return Err(bad("written by a different configuration".to_string()));
    }
    Ok(Some(cp.record))
}

fn store_checkpoint(path: &Path, fingerprint: &str, record: &RealizationRecord) -> Result<()> {
    let cp = Checkpoint {
        schema: CHECKPOINT_SCHEMA,
        fingerprint: fingerprint.to_string(),
        record: record.clone(),
    };
    let text = serde_json::to_string(&cp).map_err(|e| Error::Checkpoint {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    // Write-then-rename so an interrupted run never leaves a torn file.
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, text)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn in_pool<R: Send>(workers: usize, job: impl FnOnce() -> R + Send) -> Result<R> {
    if workers == 0 {
        return Ok(job());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(job))
}

fn tag(cfg: &EnsembleConfig, index: usize) -> impl FnOnce(Error) -> Error {
    let seed = cfg.seed;
    move |e| Error::Realization {
        index,
        seed,
        source: Box::new(e),
    }
}

/// Mean and standard error `std/√R` (sample std; zero when `R = 1`).
pub fn mean_and_se(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.clone().collect::<KahanSum<f64>>().value() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss = values
        .map(|v| (v - mean) * (v - mean))
        .collect::<KahanSum<f64>>()
        .value();
    let var = ss / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Runs every realization and averages pointwise.
pub fn run_ensemble(cfg: &EnsembleConfig, kind: ProductState) -> Result<EnsembleResult> {
    run_ensemble_with(cfg, kind, &RunOptions::default())
}

pub fn run_ensemble_with(
    cfg: &EnsembleConfig,
    kind: ProductState,
    options: &RunOptions<'_>,
) -> Result<EnsembleResult> {
    cfg.validate()?;
    let fp = fingerprint(cfg, kind)?;
    if let Some(dir) = options.checkpoint_dir {
        fs::create_dir_all(dir)?;
    }
    let records: Vec<RealizationRecord> = in_pool(options.workers, || {
        (0..cfg.realizations)
            .into_par_iter()
            .map(|index| {
                let path = options.checkpoint_dir.map(|d| checkpoint_path(d, index));
                if let Some(p) = &path {
                    if let Some(rec) = load_checkpoint(p, &fp, index)? {
                        return Ok(rec);
                    }
                }
                let rec = run_realization(cfg, kind, index).map_err(tag(cfg, index))?;
                if let Some(p) = &path {
                    store_checkpoint(p, &fp, &rec)?;
                }
                Ok(rec)
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(aggregate(cfg, kind, &records))
}

fn aggregate(cfg: &EnsembleConfig, kind: ProductState, records: &[RealizationRecord]) -> EnsembleResult {
    let space = crate::hilbert::HilbertSpace::new(cfg.sites).expect("validated by the realizations");
    let sector_kind = match cfg.family {
        ModelFamily::Z2 { .. } => SectorKind::Parity,
        _ => SectorKind::Charge,
    };
    let labels = SectorMap::new(sector_kind, space).sector_labels();
    let times = cfg.grid.len();

    let series_stats = |get: &dyn Fn(&RealizationRecord) -> f64| mean_and_se(records.iter().map(get));
    let mut mean_pq = Vec::with_capacity(times);
    let mut se_pq = Vec::with_capacity(times);
    let (mut mean_entropy, mut se_entropy) = (Vec::with_capacity(times), Vec::with_capacity(times));
    let (mut mean_survival, mut se_survival) = (Vec::with_capacity(times), Vec::with_capacity(times));
    for t in 0..times {
        let (m, s): (Vec<f64>, Vec<f64>) = (0..labels.len())
            .map(|k| series_stats(&|r| r.pq[t][k]))
            .unzip();
        mean_pq.push(m);
        se_pq.push(s);
        let (m, s) = series_stats(&|r| r.entropy[t]);
        mean_entropy.push(m);
        se_entropy.push(s);
        let (m, s) = series_stats(&|r| r.survival[t]);
        mean_survival.push(m);
        se_survival.push(s);
    }
    let n_values: Vec<usize> = records.iter().map(|r| r.n).collect();
    let (mean_n, se_n) = mean_and_se(n_values.iter().map(|&n| n as f64));
    EnsembleResult {
        config: cfg.clone(),
        initial: kind,
        sector_kind,
        labels,
        mean_pq,
        se_pq,
        mean_entropy,
        se_entropy,
        mean_survival,
        se_survival,
        mean_n,
        se_n,
        n_values,
    }
}

/// Per-realization `N` only; skips the time evolution.
pub fn run_n_ensemble(cfg: &EnsembleConfig, kind: ProductState, workers: usize) -> Result<NEnsemble> {
    cfg.validate()?;
    let initial = make_product_state(kind, cfg.sites)?;
    let n_values: Vec<usize> = in_pool(workers, || {
        (0..cfg.realizations)
            .into_par_iter()
            .map(|index| {
                let run = || -> Result<usize> {
                    let (_, spectrum) = realization_spectrum(cfg, index)?;
                    Ok(n_statistic(&overlaps(&initial, &spectrum)?, cfg.threshold)?.count)
                };
                run().map_err(tag(cfg, index))
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let (mean_n, se_n) = mean_and_se(n_values.iter().map(|&n| n as f64));
    Ok(NEnsemble {
        sites: cfg.sites,
        gamma: cfg.gamma,
        n_values,
        mean_n,
        se_n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{quench_series, QuenchSeries};

    fn small(seed: u64, realizations: usize) -> EnsembleConfig {
        let mut cfg = EnsembleConfig::new(ModelFamily::u1_disordered(), 6, 0.9, seed);
        cfg.realizations = realizations;
        cfg.grid = TimeGrid::linear(0.0, 10.0, 21).unwrap();
        cfg
    }

    #[test]
    fn zero_width_gives_zero_fields() {
        assert_eq!(sample_fields(0.0, 5, 3, 42), vec![0.0; 5]);
    }

    #[test]
    fn fields_stay_in_support_and_are_reproducible() {
        for r in 0..50 {
            let f = sample_fields(2.4, 12, r, 7);
            assert!(f.iter().all(|h| h.abs() <= 2.4));
            assert_eq!(f, sample_fields(2.4, 12, r, 7));
        }
        assert_ne!(sample_fields(1.0, 8, 0, 7), sample_fields(1.0, 8, 1, 7));
        assert_ne!(sample_fields(1.0, 8, 0, 7), sample_fields(1.0, 8, 0, 8));
    }

    #[test]
    fn field_statistics_match_uniform() {
        let w = 4.8;
        let sites = 10;
        let draws: Vec<f64> = (0..10_000)
            .flat_map(|r| sample_fields(w, sites, r, 2024))
            .collect();
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        assert!(mean.abs() < 3.0 * w / (3.0 * n).sqrt(), "mean {mean}");
        let var = draws.iter().map(|h| h * h).sum::<f64>() / n;
        assert!((var - w * w / 3.0).abs() < 0.02 * w * w / 3.0, "var {var}");
    }

    #[test]
    fn single_realization_is_a_plain_quench() {
        let mut cfg = small(11, 1);
        cfg.family = ModelFamily::u1_disordered().with_disorder(0.0).unwrap();
        let res = run_ensemble(&cfg, ProductState::FlipOne).unwrap();
        let model = cfg.family.spec(6, 0.9, None).unwrap();
        let q: QuenchSeries<f64> = quench_series(&model, ProductState::FlipOne, &cfg.grid).unwrap();
        assert_eq!(res.labels, q.labels);
        assert_eq!(res.mean_pq, q.pq);
        assert_eq!(res.mean_entropy, q.entropy);
        assert_eq!(res.mean_survival, q.survival);
        assert!(res.se_entropy.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let cfg = small(5, 6);
        let one = run_ensemble_with(&cfg, ProductState::AntiFerro, &RunOptions { workers: 1, checkpoint_dir: None }).unwrap();
        let three = run_ensemble_with(&cfg, ProductState::AntiFerro, &RunOptions { workers: 3, checkpoint_dir: None }).unwrap();
        assert_eq!(one, three);
        let n1 = run_n_ensemble(&cfg, ProductState::AntiFerro, 1).unwrap();
        let n3 = run_n_ensemble(&cfg, ProductState::AntiFerro, 3).unwrap();
        assert_eq!(n1, n3);
        assert_eq!(n1.n_values, one.n_values);
    }

    #[test]
    fn populations_sum_to_one() {
        let res = run_ensemble(&small(3, 4), ProductState::Ferro).unwrap();
        for row in &res.mean_pq {
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn checkpoints_resume_identically() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(9, 3);
        let opts = RunOptions {
            workers: 1,
            checkpoint_dir: Some(dir.path()),
        };
        let first = run_ensemble_with(&cfg, ProductState::FlipOne, &opts).unwrap();
        assert!(checkpoint_path(dir.path(), 2).exists());
        let resumed = run_ensemble_with(&cfg, ProductState::FlipOne, &opts).unwrap();
        assert_eq!(first, resumed);

        let mut other = cfg.clone();
        other.seed = 10;
        let err = run_ensemble_with(&other, ProductState::FlipOne, &opts).unwrap_err();
        assert!(matches!(err, Error::Checkpoint { .. }));
    }

    #[test]
    fn standard_error_shrinks_like_inverse_sqrt() {
        let late = |r: usize| {
            let res = run_n_ensemble(&small(77, r), ProductState::AntiFerro, 0).unwrap();
            res.se_n
        };
        let ratio = late(64) / late(128);
        let expected = 2f64.sqrt();
        assert!((ratio / expected - 1.0).abs() < 0.3, "ratio {ratio}");
    }

    #[test]
    fn failures_name_the_realization() {
        let mut cfg = small(1, 2);
        cfg.sites = 16;
        match run_ensemble(&cfg, ProductState::Ferro).unwrap_err() {
            Error::Realization { seed, source, .. } => {
                assert_eq!(seed, 1);
                assert!(source.is_resource_cap());
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn clean_family_is_rejected() {
        let mut cfg = small(1, 2);
        cfg.family = ModelFamily::u1();
        assert!(run_ensemble(&cfg, ProductState::Ferro).is_err());
        cfg.family = ModelFamily::z2();
        cfg.realizations = 0;
        assert!(cfg.validate().is_err());
    }
}
