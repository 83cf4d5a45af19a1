//! Statevector simulation of the layered rotation/ZZ ansatz and its
//! training toward a target eigenstate subspace.
//!
//! Gates act in place with stride indexing; no circuit matrix is ever formed.
//! `R_α(θ) = exp(−iθσ_α/2)` and `ZZ(θ) = exp(−iθ σ^z_i σ^z_{i+1})`.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::Pauli;
use crate::hilbert::{inner_product, HilbertSpace, StateVector};
use crate::scalar::{cplx, czero, KahanSum, Real};
use crate::spectra::{n_statistic, overlaps, SpectralData};

/// Bumped whenever the parameter layout changes.
pub const LAYOUT_VERSION: u32 = 1;

/// One gate of the ansatz, addressed by its parameter slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Gate {
    Rotation { site: usize, axis: Pauli },
    /// ZZ on sites `(pair, pair + 1)`.
    Zz { pair: usize },
}

impl Gate {
    /// `(s, c)` in `∂P/∂θ = c·[P(θ + s) − P(θ − s)]`.
    pub fn shift_rule(self) -> (f64, f64) {
        match self {
            Gate::Rotation { .. } => (std::f64::consts::FRAC_PI_2, 0.5),
            Gate::Zz { .. } => (std::f64::consts::FRAC_PI_4, 1.0),
        }
    }

    /// Factor `g` in `U = exp(−i g θ G)` with `G² = I`.
    fn generator_scale(self) -> f64 {
        match self {
            Gate::Rotation { .. } => 0.5,
            Gate::Zz { .. } => 1.0,
        }
    }
}

/// `layers` composite layers, each an Rx row, an Ry row, an Rz row, then ZZ
/// on the open-chain pairs `(i, i+1)`, `i < L − 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ansatz {
    pub sites: usize,
    pub layers: usize,
}

impl Ansatz {
    pub fn new(sites: usize, layers: usize) -> Result<Self> {
        HilbertSpace::new(sites)?;
        if layers == 0 {
            return Err(Error::InvalidParameter(
                "the ansatz needs at least one layer".to_string(),
            ));
        }
        Ok(Self { sites, layers })
    }

    pub fn parameters_per_layer(&self) -> usize {
        4 * self.sites - 1
    }

    pub fn parameter_count(&self) -> usize {
        self.layers * self.parameters_per_layer()
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        (0..self.sites - 1).map(|i| (i, i + 1)).collect()
    }

    /// Gates in application order; gate `k` reads parameter `k`.
    pub fn gates(&self) -> Vec<Gate> {
        let mut gates = Vec::with_capacity(self.parameter_count());
        for _ in 0..self.layers {
            for axis in [Pauli::X, Pauli::Y, Pauli::Z] {
                gates.extend((0..self.sites).map(|site| Gate::Rotation { site, axis }));
            }
            gates.extend((0..self.sites - 1).map(|pair| Gate::Zz { pair }));
        }
        gates
    }

    fn check(&self, theta: &[f64], input: &StateVector<impl Real>) -> Result<()> {
        if theta.len() != self.parameter_count() {
            return Err(Error::DimensionMismatch {
                expected: self.parameter_count(),
                found: theta.len(),
            });
        }
        if input.space().sites() != self.sites {
            return Err(Error::DimensionMismatch {
                expected: 1 << self.sites,
                found: input.dim(),
            });
        }
        Ok(())
    }
}

fn rotate<T: Real>(amps: &mut [Complex<T>], site: usize, axis: Pauli, theta: T) {
    let half = theta * T::of(0.5);
    let (s, c) = half.sin_cos();
    let bit = 1usize << site;
    match axis {
        Pauli::X => {
            let mis = cplx(T::zero(), -s);
            for i in (0..amps.len()).filter(|i| i & bit == 0) {
                let (a, b) = (amps[i], amps[i | bit]);
                amps[i] = a.scale(c) + b * mis;
                amps[i | bit] = a * mis + b.scale(c);
            }
        }
        Pauli::Y => {
            for i in (0..amps.len()).filter(|i| i & bit == 0) {
                let (a, b) = (amps[i], amps[i | bit]);
                amps[i] = a.scale(c) - b.scale(s);
                amps[i | bit] = a.scale(s) + b.scale(c);
            }
        }
        Pauli::Z => {
            let down = cplx(c, -s);
            let up = cplx(c, s);
            for (i, a) in amps.iter_mut().enumerate() {
                *a = *a * if i & bit == 0 { down } else { up };
            }
        }
    }
}

fn zz<T: Real>(amps: &mut [Complex<T>], pair: usize, theta: T) {
    let (s, c) = theta.sin_cos();
    let aligned = cplx(c, -s);
    let anti = cplx(c, s);
    for (i, a) in amps.iter_mut().enumerate() {
        let same = ((i >> pair) ^ (i >> (pair + 1))) & 1 == 0;
        *a = *a * if same { aligned } else { anti };
    }
}

fn apply_gate<T: Real>(amps: &mut [Complex<T>], gate: Gate, theta: T) {
    match gate {
        Gate::Rotation { site, axis } => rotate(amps, site, axis, theta),
        Gate::Zz { pair } => zz(amps, pair, theta),
    }
}

/// Applies `R_axis(θ)` to `site` in place.
pub fn apply_rotation<T: Real>(
    state: &mut StateVector<T>,
    site: usize,
    axis: Pauli,
    theta: T,
) -> Result<()> {
    state.space().check_site(site)?;
    rotate(state.amplitudes_mut(), site, axis, theta);
    Ok(())
}

/// Applies `ZZ(θ)` to sites `(pair, pair + 1)` in place.
pub fn apply_zz<T: Real>(state: &mut StateVector<T>, pair: usize, theta: T) -> Result<()> {
    let sites = state.space().sites();
    if pair + 1 >= sites {
        return Err(Error::SiteOutOfRange {
            site: pair + 1,
            sites,
        });
    }
    zz(state.amplitudes_mut(), pair, theta);
    Ok(())
}

/// `U(θ)|input⟩`.
pub fn ansatz_state<T: Real>(
    theta: &[f64],
    ansatz: &Ansatz,
    input: &StateVector<T>,
) -> Result<StateVector<T>> {
    ansatz.check(theta, input)?;
    let mut out = input.clone();
    for (gate, &t) in ansatz.gates().into_iter().zip(theta) {
        apply_gate(out.amplitudes_mut(), gate, T::of(t));
    }
    Ok(out)
}

/// Orthonormal set `{|φ_i⟩}` spanning the subspace the circuit aims for.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSubspace<T: Real = f64> {
    vectors: Vec<StateVector<T>>,
    provenance: String,
}

impl<T: Real> TargetSubspace<T> {
    /// Rejects empty sets, mixed dimensions and Gram deviations above 1e-10.
    pub fn new(vectors: Vec<StateVector<T>>, provenance: impl Into<String>) -> Result<Self> {
        let first = vectors.first().ok_or(Error::EmptySelection)?;
        let dim = first.dim();
        if vectors.len() > dim {
            return Err(Error::InvalidParameter(format!(
                "{} vectors cannot be orthonormal in dimension {dim}",
                vectors.len()
            )));
        }
        if let Some(v) = vectors.iter().find(|v| v.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: v.dim(),
            });
        }
        let mut deviation = T::zero();
        for (i, a) in vectors.iter().enumerate() {
            for b in &vectors[i..] {
                let g = inner_product(a.amplitudes(), b.amplitudes());
                let target = if std::ptr::eq(a, b) { T::one() } else { T::zero() };
                deviation = deviation.max((g - cplx(target, T::zero())).norm());
            }
        }
        if deviation > T::tolerance(1e-10) {
            return Err(Error::NotOrthonormal {
                deviation: deviation.to_f64_lossy(),
            });
        }
        Ok(Self {
            vectors,
            provenance: provenance.into(),
        })
    }

    pub fn vectors(&self) -> &[StateVector<T>] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].dim()
    }

    /// Which Hamiltonian and rule produced the set.
    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    fn check(&self, state: &StateVector<T>) -> Result<()> {
        if state.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: state.dim(),
            });
        }
        Ok(())
    }

    /// `⟨φ_i|ψ⟩` for every target vector.
    pub fn overlaps(&self, state: &StateVector<T>) -> Result<Vec<Complex<T>>> {
        self.check(state)?;
        Ok(self
            .vectors
            .iter()
            .map(|phi| inner_product(phi.amplitudes(), state.amplitudes()))
            .collect())
    }

    /// `Σ_i |⟨φ_i|ψ⟩|²`, the squared norm of the projection.
    pub fn weight(&self, state: &StateVector<T>) -> Result<T> {
        Ok(self
            .overlaps(state)?
            .iter()
            .map(|c| c.norm_sqr())
            .collect::<KahanSum<T>>()
            .value())
    }

    /// Unnormalized projection `Σ_i |φ_i⟩⟨φ_i|ψ⟩`.
    pub fn project(&self, state: &StateVector<T>) -> Result<Vec<Complex<T>>> {
        let coeffs = self.overlaps(state)?;
        let mut out = vec![czero::<T>(); state.dim()];
        for (phi, c) in self.vectors.iter().zip(&coeffs) {
            for (o, a) in out.iter_mut().zip(phi.amplitudes()) {
                *o = *o + *a * *c;
            }
        }
        Ok(out)
    }
}

/// `P(θ) = Σ_i |⟨φ_i|U(θ)|input⟩|²`, clamped to `[0, 1]` against rounding.
pub fn overlap_objective<T: Real>(
    theta: &[f64],
    ansatz: &Ansatz,
    input: &StateVector<T>,
    target: &TargetSubspace<T>,
) -> Result<T> {
    target.check(input)?;
    let psi = ansatz_state(theta, ansatz, input)?;
    Ok(target.weight(&psi)?.max(T::zero()).min(T::one()))
}

/// Exact parameter-shift gradient; two circuit evaluations per parameter.
pub fn gradient<T: Real>(
    theta: &[f64],
    ansatz: &Ansatz,
    input: &StateVector<T>,
    target: &TargetSubspace<T>,
) -> Result<Vec<f64>> {
    ansatz.check(theta, input)?;
    target.check(input)?;
    let eval = |shifted: &[f64]| -> Result<f64> {
        let psi = ansatz_state(shifted, ansatz, input)?;
        Ok(target.weight(&psi)?.to_f64_lossy())
    };
    ansatz
        .gates()
        .par_iter()
        .enumerate()
        .map(|(k, gate)| {
            let (s, c) = gate.shift_rule();
            let mut shifted = theta.to_vec();
            shifted[k] = theta[k] + s;
            let plus = eval(&shifted)?;
            shifted[k] = theta[k] - s;
            let minus = eval(&shifted)?;
            Ok(c * (plus - minus))
        })
        .collect()
}

/// `Im⟨λ|G|ψ⟩` for the gate's generator `G`.
fn generator_im<T: Real>(lambda: &[Complex<T>], psi: &[Complex<T>], gate: Gate) -> T {
    let mut acc = KahanSum::new();
    match gate {
        Gate::Rotation { site, axis } => {
            let bit = 1usize << site;
            for (i, (l, p)) in lambda.iter().zip(psi).enumerate() {
                let term = match axis {
                    Pauli::X => l.conj() * psi[i ^ bit],
                    // σy|0⟩ = i|1⟩, σy|1⟩ = −i|0⟩
                    Pauli::Y => {
                        let src = psi[i ^ bit];
                        let v = if i & bit == 0 {
                            cplx(src.im, -src.re)
                        } else {
                            cplx(-src.im, src.re)
                        };
                        l.conj() * v
                    }
                    Pauli::Z => {
                        let v = l.conj() * p;
                        if i & bit == 0 {
                            v
                        } else {
                            -v
                        }
                    }
                };
                acc.add(term.im);
            }
        }
        Gate::Zz { pair } => {
            for (i, (l, p)) in lambda.iter().zip(psi).enumerate() {
                let v = (l.conj() * p).im;
                let same = ((i >> pair) ^ (i >> (pair + 1))) & 1 == 0;
                acc.add(if same { v } else { -v });
            }
        }
    }
    acc.value()
}

/// Gradient by reverse sweep: one forward pass, then each gate is undone on
/// both the state and the back-propagated projection. Agrees with
/// [`gradient`] to rounding and costs three circuit passes in total.
pub fn adjoint_gradient<T: Real>(
    theta: &[f64],
    ansatz: &Ansatz,
    input: &StateVector<T>,
    target: &TargetSubspace<T>,
) -> Result<(T, Vec<f64>)> {
    target.check(input)?;
    let psi_final = ansatz_state(theta, ansatz, input)?;
    let value = target.weight(&psi_final)?;
    let mut lambda = target.project(&psi_final)?;
    let mut psi = psi_final.into_amplitudes();
    let gates = ansatz.gates();
    let mut grad = vec![0.0; gates.len()];
    for (k, &gate) in gates.iter().enumerate().rev() {
        // ∂P/∂θ_k = 2 Re⟨λ_k|(−i g G)|ψ_k⟩ = 2g Im⟨λ_k|G|ψ_k⟩
        let g = gate.generator_scale();
        grad[k] = 2.0 * g * generator_im(&lambda, &psi, gate).to_f64_lossy();
        let back = T::of(-theta[k]);
        apply_gate(&mut psi, gate, back);
        apply_gate(&mut lambda, gate, back);
    }
    Ok((value, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub max_iterations: usize,
    /// Window length for both the convergence and the divergence test.
    pub patience: usize,
    /// Convergence when `P` moves less than this across the window.
    pub tol: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Extra runs from random angles; the best run wins.
    pub restarts: usize,
    pub restart_seed: u64,
    /// Random angles are drawn from `[−scale, scale]`.
    pub restart_scale: f64,
    /// Size of the seeded nudge applied when the gradient vanishes below
    /// `P = 1`. Symmetric inputs start on such a saddle: a basis state
    /// against parity eigenvectors has exactly zero first derivatives.
    pub saddle_kick: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.02,
            max_iterations: 2000,
            patience: 100,
            tol: 1e-6,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            restarts: 0,
            restart_seed: 0,
            restart_scale: std::f64::consts::PI,
            saddle_kick: 1e-2,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.patience > 0
            && self.tol >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && self.restart_scale >= 0.0
            && self.saddle_kick >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "invalid optimizer settings: {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainingStatus {
    Converged,
    MaxIterations,
    /// `P` fell at every step of a full patience window.
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingResult {
    /// Best parameters seen.
    pub theta: Vec<f64>,
    /// `P` at those parameters.
    pub best: f64,
    /// `P` before each update, starting with the initial angles.
    pub history: Vec<f64>,
    pub status: TrainingStatus,
    /// Which run produced `theta`; 0 is the identity start.
    pub restart: usize,
}

const MAX_KICKS: usize = 3;

fn adam<T: Real>(
    start: Vec<f64>,
    ansatz: &Ansatz,
    input: &StateVector<T>,
    target: &TargetSubspace<T>,
    cfg: &OptimizerConfig,
) -> Result<TrainingResult> {
    let mut theta = start;
    let n = theta.len();
    let (mut m, mut v) = (vec![0.0; n], vec![0.0; n]);
    let mut history = Vec::with_capacity(cfg.max_iterations + 1);
    let mut best = (f64::NEG_INFINITY, theta.clone());
    let mut status = TrainingStatus::MaxIterations;
    let ceiling = 1.0 - 1e-12;
    let mut kicks = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.restart_seed ^ 0x5eed);
    for step in 0..=cfg.max_iterations {
        let (value, grad) = adjoint_gradient(&theta, ansatz, input, target)?;
        let p = value.to_f64_lossy();
        history.push(p);
        if p > best.0 {
            best = (p, theta.clone());
        }
        let flat = grad.iter().all(|g| g.abs() <= f64::EPSILON);
        if p >= ceiling || (flat && (kicks >= MAX_KICKS || cfg.saddle_kick == 0.0)) {
            status = TrainingStatus::Converged;
            break;
        }
        if flat {
            kicks += 1;
            for t in theta.iter_mut() {
                *t += rng.random_range(-cfg.saddle_kick..=cfg.saddle_kick);
            }
            continue;
        }
        if history.len() > cfg.patience {
            let window = &history[history.len() - 1 - cfg.patience..];
            let (lo, hi) = window
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
            if hi - lo < cfg.tol {
                status = TrainingStatus::Converged;
                break;
            }
            if window.windows(2).all(|w| w[1] < w[0]) {
                status = TrainingStatus::Diverged;
                break;
            }
        }
        if step == cfg.max_iterations {
            break;
        }
        let t = (step + 1) as i32;
        let (c1, c2) = (1.0 - cfg.beta1.powi(t), 1.0 - cfg.beta2.powi(t));
        for k in 0..n {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * grad[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * grad[k] * grad[k];
            theta[k] += cfg.learning_rate * (m[k] / c1) / ((v[k] / c2).sqrt() + cfg.epsilon);
        }
    }
    Ok(TrainingResult {
        theta: best.1,
        best: best.0,
        history,
        status,
        restart: 0,
    })
}

/// Adam ascent on `P(θ)` from `θ = 0`, plus any configured random restarts.
pub fn optimize<T: Real>(
    ansatz: &Ansatz,
    input: &StateVector<T>,
    target: &TargetSubspace<T>,
    cfg: &OptimizerConfig,
) -> Result<TrainingResult> {
    cfg.validate()?;
    ansatz.check(&vec![0.0; ansatz.parameter_count()], input)?;
    target.check(input)?;
    let mut best = adam(vec![0.0; ansatz.parameter_count()], ansatz, input, target, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.restart_seed);
    for r in 1..=cfg.restarts {
        let start = (0..ansatz.parameter_count())
            .map(|_| rng.random_range(-cfg.restart_scale..=cfg.restart_scale))
            .collect();
        let mut run = adam(start, ansatz, input, target, cfg)?;
        if run.best > best.best {
            run.restart = r;
            best = run;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum SelectionRule {
    /// The eigenstates counted by `N` at this threshold.
    NSet { threshold: f64 },
    /// The `k` largest-weight eigenstates.
    TopK { k: usize },
}

impl Default for SelectionRule {
    fn default() -> Self {
        SelectionRule::NSet { threshold: 0.8 }
    }
}

/// Eigenstates of `spectrum` chosen by their weight in `reference`.
pub fn select_target_subspace<T: Real>(
    spectrum: &SpectralData<T>,
    reference: &StateVector<T>,
    rule: SelectionRule,
    provenance: &str,
) -> Result<TargetSubspace<T>> {
    let profile = overlaps(reference, spectrum)?;
    let indices: Vec<usize> = match rule {
        SelectionRule::NSet { threshold } => n_statistic(&profile, threshold)?.indices,
        SelectionRule::TopK { k } => profile.order().iter().take(k).copied().collect(),
    };
    if indices.is_empty() {
        return Err(Error::EmptySelection);
    }
    let vectors = indices.iter().map(|&n| spectrum.eigenvector(n)).collect();
    TargetSubspace::new(vectors, format!("{provenance}; {rule:?}"))
}
