//! Quench dynamics by spectral decomposition, plus the dynamical diagnostics:
//! sector populations `P_Q(t)`, half-chain entanglement entropy and survival
//! probability.

use std::collections::BTreeMap;
use std::ops::Range;

use faer::Mat;
use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{ModelFamily, ModelSpec, DEFAULT_SITE_CAP};
use crate::hilbert::{make_product_state, ProductState, SectorKind, SectorMap, StateVector};
use crate::scalar::{KahanSum, Real};
use crate::spectra::{diagonalize, SpectralData};

/// Sectors whose population never exceeds this are dropped from reports.
pub const NEGLIGIBLE_SECTOR: f64 = 1e-6;

/// Times per batched synthesis; bounds the scratch matrices to
/// `dim × TIME_CHUNK`.
const TIME_CHUNK: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid<T: Real = f64> {
    times: Vec<T>,
}

impl<T: Real> TimeGrid<T> {
    pub fn new(times: Vec<T>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidParameter("time grid is empty".to_string()));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidParameter("non-finite time".to_string()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "times must be strictly ascending".to_string(),
            ));
        }
        Ok(Self { times })
    }

    /// `points` evenly spaced times from `start` to `end` inclusive.
    pub fn linear(start: f64, end: f64, points: usize) -> Result<Self> {
        if points == 0 {
            return Err(Error::InvalidParameter("time grid is empty".to_string()));
        }
        if points == 1 {
            return Self::new(vec![T::of(start)]);
        }
        let step = (end - start) / (points - 1) as f64;
        Self::new((0..points).map(|k| T::of(start + step * k as f64)).collect())
    }

    /// `t ∈ [0, 50]` with 501 points.
    pub fn standard() -> Self {
        Self::linear(0.0, 50.0, 501).expect("static grid")
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Final half of the grid, used for every late-time average.
    pub fn late_window(&self) -> Range<usize> {
        self.times.len() / 2..self.times.len()
    }
}

impl<T: Real> Default for TimeGrid<T> {
    fn default() -> Self {
        Self::standard()
    }
}

/// Mean of `series` over `window`.
pub fn window_mean<T: Real>(series: &[T], window: Range<usize>) -> T {
    let n = window.len();
    let s = series[window].iter().copied().collect::<KahanSum<T>>().value();
    s / T::of_usize(n.max(1))
}

fn phased<T: Real>(energies: &[T], coeffs: &[Complex<T>], t: T) -> Vec<Complex<T>> {
    coeffs
        .iter()
        .zip(energies)
        .map(|(c, &e)| *c * Complex::from_polar(T::one(), -(e * t)))
        .collect()
}

/// `Σ_n c_n e^{−iE_n t} |E_n⟩`. No renormalization is applied.
pub fn evolve<T: Real>(
    spectrum: &SpectralData<T>,
    coeffs: &[Complex<T>],
    t: T,
) -> Result<StateVector<T>> {
    if coeffs.len() != spectrum.len() {
        return Err(Error::DimensionMismatch {
            expected: spectrum.len(),
            found: coeffs.len(),
        });
    }
    if !t.is_finite() {
        return Err(Error::InvalidParameter("non-finite time".to_string()));
    }
    let amps = spectrum.synthesize(&phased(spectrum.energies(), coeffs, t));
    Ok(StateVector::from_raw(spectrum.space(), amps))
}

/// Evolved states on a batch of times, synthesized together.
pub fn evolve_many<T: Real>(
    spectrum: &SpectralData<T>,
    coeffs: &[Complex<T>],
    times: &[T],
) -> Result<Vec<StateVector<T>>> {
    if coeffs.len() != spectrum.len() {
        return Err(Error::DimensionMismatch {
            expected: spectrum.len(),
            found: coeffs.len(),
        });
    }
    let cols: Vec<_> = times
        .iter()
        .map(|&t| phased(spectrum.energies(), coeffs, t))
        .collect();
    Ok(spectrum
        .synthesize_many(&cols)
        .into_iter()
        .map(|a| StateVector::from_raw(spectrum.space(), a))
        .collect())
}

/// `P_Q = Σ_{i ∈ Q} |ψ_i|²` for every sector of `map`.
pub fn charge_distribution<T: Real>(
    state: &StateVector<T>,
    map: &SectorMap,
) -> Result<BTreeMap<i32, T>> {
    if map.space() != state.space() {
        return Err(Error::DimensionMismatch {
            expected: map.space().dim(),
            found: state.dim(),
        });
    }
    let amps = state.amplitudes();
    Ok(map
        .sectors()
        .iter()
        .map(|(&q, idx)| {
            let p = idx
                .iter()
                .map(|&i| amps[i].norm_sqr())
                .collect::<KahanSum<T>>()
                .value();
            (q, p)
        })
        .collect())
}

/// Von Neumann entropy (nats) of sites `0..cut` from the Schmidt spectrum of
/// the `2^cut × 2^(L−cut)` amplitude matrix.
pub fn entanglement_entropy<T: Real>(state: &StateVector<T>, cut: usize) -> Result<T> {
    let sites = state.space().sites();
    if cut == 0 || cut >= sites {
        return Err(Error::InvalidParameter(format!(
            "cut {cut} outside 1..={}",
            sites - 1
        )));
    }
    let rows = 1usize << cut;
    let cols = 1usize << (sites - cut);
    let amps = state.amplitudes();
    let m = Mat::<Complex<T>>::from_fn(rows, cols, |l, r| amps[l | (r << cut)]);
    let sv = m
        .singular_values()
        .map_err(|_| Error::EigenSolver { dim: rows.min(cols) })?;
    let entropy = sv
        .iter()
        .map(|&s| {
            let p = s * s;
            if p > T::zero() {
                -p * p.ln()
            } else {
                T::zero()
            }
        })
        .collect::<KahanSum<T>>()
        .value();
    Ok(entropy.max(T::zero()))
}

pub fn half_chain_entropy<T: Real>(state: &StateVector<T>) -> Result<T> {
    entanglement_entropy(state, state.space().sites() / 2)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuenchSeries<T: Real = f64> {
    pub grid: TimeGrid<T>,
    pub sector_kind: SectorKind,
    /// Every sector label, descending.
    pub labels: Vec<i32>,
    /// `pq[t][k]` is the population of `labels[k]` at time index `t`.
    pub pq: Vec<Vec<T>>,
    /// Half-chain entropy in nats.
    pub entropy: Vec<T>,
    /// `|⟨ψ0|ψ(t)⟩|²`.
    pub survival: Vec<T>,
    /// `| ‖ψ(t)‖ − 1 |`.
    pub norm_deviation: Vec<T>,
}

impl<T: Real> QuenchSeries<T> {
    fn column(&self, label: i32) -> Option<usize> {
        self.labels.iter().position(|&q| q == label)
    }

    /// `P_label(t)` over the grid; zeros for a label not in the map.
    pub fn pq_of(&self, label: i32) -> Vec<T> {
        match self.column(label) {
            Some(k) => self.pq.iter().map(|row| row[k]).collect(),
            None => vec![T::zero(); self.grid.len()],
        }
    }

    pub fn late_pq(&self, label: i32) -> T {
        window_mean(&self.pq_of(label), self.grid.late_window())
    }

    pub fn late_entropy(&self) -> T {
        window_mean(&self.entropy, self.grid.late_window())
    }

    /// Sectors whose time-maximum population reaches `threshold`.
    pub fn retained_labels(&self, threshold: f64) -> Vec<i32> {
        let thr = T::of(threshold);
        self.labels
            .iter()
            .enumerate()
            .filter(|&(k, _)| self.pq.iter().any(|row| row[k] >= thr))
            .map(|(_, &q)| q)
            .collect()
    }

    /// Sectors dropped as negligible (`max_t P_Q < 1e-6`).
    pub fn omitted_labels(&self) -> Vec<i32> {
        let kept = self.retained_labels(NEGLIGIBLE_SECTOR);
        self.labels
            .iter()
            .copied()
            .filter(|q| !kept.contains(q))
            .collect()
    }

    pub fn max_norm_deviation(&self) -> T {
        self.norm_deviation
            .iter()
            .copied()
            .fold(T::zero(), |a, b| a.max(b))
    }
}

/// Evolves `initial` under the spectrum and records all diagnostics.
pub fn quench_from_spectrum<T: Real>(
    spectrum: &SpectralData<T>,
    initial: &StateVector<T>,
    map: &SectorMap,
    grid: &TimeGrid<T>,
) -> Result<QuenchSeries<T>> {
    if map.space() != spectrum.space() {
        return Err(Error::DimensionMismatch {
            expected: spectrum.space().dim(),
            found: map.space().dim(),
        });
    }
    let coeffs = spectrum.coefficients(initial)?;
    let labels = map.sector_labels();

    let chunks: Vec<&[T]> = grid.times().chunks(TIME_CHUNK).collect();
    let rows: Vec<Vec<(Vec<T>, T, T, T)>> = chunks
        .par_iter()
        .map(|times| -> Result<Vec<(Vec<T>, T, T, T)>> {
            let states = evolve_many(spectrum, &coeffs, times)?;
            states
                .iter()
                .map(|psi| {
                    let dist = charge_distribution(psi, map)?;
                    let pq = labels.iter().map(|q| dist[q]).collect();
                    let s = half_chain_entropy(psi)?;
                    let surv = initial.inner(psi)?.norm_sqr();
                    let dev = (psi.norm() - T::one()).abs();
                    Ok((pq, s, surv, dev))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let n = grid.len();
    let mut series = QuenchSeries {
        grid: grid.clone(),
        sector_kind: map.kind(),
        labels,
        pq: Vec::with_capacity(n),
        entropy: Vec::with_capacity(n),
        survival: Vec::with_capacity(n),
        norm_deviation: Vec::with_capacity(n),
    };
    for (pq, s, surv, dev) in rows.into_iter().flatten() {
        series.pq.push(pq);
        series.entropy.push(s);
        series.survival.push(surv);
        series.norm_deviation.push(dev);
    }
    Ok(series)
}

/// Builds the model, diagonalizes it and quenches a product state.
pub fn quench_series<T: Real>(
    model: &ModelSpec,
    kind: ProductState,
    grid: &TimeGrid<T>,
) -> Result<QuenchSeries<T>> {
    Ok(quench_with_spectrum(model, kind, grid)?.1)
}

/// Same as [`quench_series`], also returning the spectrum for reuse.
pub fn quench_with_spectrum<T: Real>(
    model: &ModelSpec,
    kind: ProductState,
    grid: &TimeGrid<T>,
) -> Result<(SpectralData<T>, QuenchSeries<T>)> {
    let spectrum: SpectralData<T> = diagonalize(&model.operator(DEFAULT_SITE_CAP)?)?;
    let initial = make_product_state(kind, model.sites())?;
    let map = SectorMap::new(model.natural_sectors(), spectrum.space());
    let series = quench_from_spectrum(&spectrum, &initial, &map, grid)?;
    Ok((spectrum, series))
}

/// Least-squares `y = slope·x + intercept`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyScaling {
    pub gamma: f64,
    /// `(L, S∞(L))`.
    pub points: Vec<(usize, f64)>,
    /// Nats per site.
    pub slope: f64,
    pub intercept: f64,
}

/// Late-time half-chain entropy versus `L` with its linear fit.
pub fn steady_entropy_scaling(
    family: &ModelFamily,
    kind: ProductState,
    sizes: &[usize],
    gamma: f64,
    grid: &TimeGrid<f64>,
) -> Result<EntropyScaling> {
    let mut points = Vec::with_capacity(sizes.len());
    for &sites in sizes {
        if sites % 2 != 0 {
            return Err(Error::InvalidSize {
                sites,
                reason: "entropy scaling uses even L",
            });
        }
        let model = family.spec(sites, gamma, None)?;
        let series: QuenchSeries<f64> = quench_series(&model, kind, grid)?;
        points.push((sites, series.late_entropy()));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0 as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let (slope, intercept) = linear_fit(&xs, &ys);
    Ok(EntropyScaling {
        gamma,
        points,
        slope,
        intercept,
    })
}
