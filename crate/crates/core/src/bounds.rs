//! Leakage decomposition of a state against a non-thermal subspace and the
//! resulting bounds on observable dynamics.
//!
//! Writing `|ψ⟩ = √(1−Δ²)|φ⟩ + Δ|φ⊥⟩` with `|φ⟩` in the target span, any
//! observable with `‖Ô‖ ≤ 1` obeys
//! `⟨Ô⟩(t) = (1−Δ²)O_nonth(t) + Δ²O_th(t) + 2Δ√(1−Δ²)·Re⟨φ(t)|Ô|φ⊥(t)⟩`,
//! and Cauchy–Schwarz caps the last term by `2Δ√(1−Δ²)`.

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{select_target_subspace, SelectionRule, TargetSubspace};
use crate::dynamics::{evolve_many, window_mean, TimeGrid};
use crate::error::{Error, Result};
use crate::hamiltonian::{HamiltonianSpecU1, HermitianOperator, Pauli, PauliString};
use crate::hilbert::{inner_product, make_product_state, norm_of, ProductState, StateVector};
use crate::scalar::{czero, Real};
use crate::spectra::{diagonalize, SpectralData};

/// Norm below which a component counts as absent.
const ABSENT: f64 = 1e-12;

/// Allowed overshoot of `‖Ô‖` above 1.
const NORM_SLACK: f64 = 1e-12;

/// Most negative loose-bound margin tolerated as rounding.
pub const MARGIN_FLOOR: f64 = -1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct HsiDecomposition<T: Real = f64> {
    /// Leakage amplitude `Δ = ‖(1 − Π)ψ‖`.
    pub delta: T,
    /// `√(1−Δ²) = ‖Πψ‖`, computed directly rather than from `Δ`.
    pub inside: T,
    /// Normalized in-subspace part; `None` when `Δ = 1`.
    pub phi: Option<StateVector<T>>,
    /// Normalized leaked part; `None` when `Δ = 0`.
    pub phi_perp: Option<StateVector<T>>,
    /// Unit phases removed from each component so that its leading nonzero
    /// amplitude is real and positive.
    pub phase_in: Complex<T>,
    pub phase_out: Complex<T>,
}

impl<T: Real> HsiDecomposition<T> {
    /// `Δ = 0`: the state lies in the subspace and `φ⊥` is undefined.
    pub fn is_inside(&self) -> bool {
        self.phi_perp.is_none()
    }

    /// `Δ = 1`: the state is orthogonal to the subspace and `φ` is undefined.
    pub fn is_orthogonal(&self) -> bool {
        self.phi.is_none()
    }

    /// `√(1−Δ²)·e^{iα}φ + Δ·e^{iβ}φ⊥`.
    pub fn reconstruct(&self) -> Vec<Complex<T>> {
        let dim = self
            .phi
            .as_ref()
            .or(self.phi_perp.as_ref())
            .map_or(0, |s| s.dim());
        let mut out = vec![czero::<T>(); dim];
        let parts = [
            (&self.phi, self.phase_in.scale(self.inside)),
            (&self.phi_perp, self.phase_out.scale(self.delta)),
        ];
        for (part, w) in parts {
            if let Some(v) = part {
                for (o, a) in out.iter_mut().zip(v.amplitudes()) {
                    *o = *o + *a * w;
                }
            }
        }
        out
    }

    /// Relative phase `e^{i(β−α)}` carried by the cross term.
    fn relative_phase(&self) -> Complex<T> {
        self.phase_out * self.phase_in.conj()
    }
}

/// Splits off the unit phase of the leading nonzero amplitude and
/// normalizes; `None` if the vector is numerically zero.
fn canonical<T: Real>(
    template: &StateVector<T>,
    mut amps: Vec<Complex<T>>,
) -> Option<(T, StateVector<T>, Complex<T>)> {
    let norm = norm_of(&amps);
    if norm <= T::of(ABSENT) {
        return None;
    }
    let biggest = amps.iter().fold(T::zero(), |m, a| m.max(a.norm()));
    let lead = amps
        .iter()
        .find(|a| a.norm() > biggest * T::of(ABSENT))
        .copied()
        .unwrap_or_else(|| Complex::new(T::one(), T::zero()));
    let phase = lead.unscale(lead.norm());
    let fix = phase.conj().unscale(norm);
    for a in &mut amps {
        *a = *a * fix;
    }
    let state = StateVector::normalized(template.space(), amps).ok()?;
    Some((norm, state, phase))
}

/// Projects `psi` onto `subspace` and its complement.
pub fn hsi_decompose<T: Real>(
    psi: &StateVector<T>,
    subspace: &TargetSubspace<T>,
) -> Result<HsiDecomposition<T>> {
    let norm = psi.norm();
    if (norm - T::one()).abs() > T::tolerance(1e-10) {
        return Err(Error::NotNormalized {
            norm: norm.to_f64_lossy(),
        });
    }
    let inner = subspace.project(psi)?;
    let outer: Vec<Complex<T>> = psi
        .amplitudes()
        .iter()
        .zip(&inner)
        .map(|(a, b)| *a - *b)
        .collect();
    let one = Complex::new(T::one(), T::zero());
    let (inside, phi, phase_in) = match canonical(psi, inner) {
        Some((n, s, p)) => (n, Some(s), p),
        None => (T::zero(), None, one),
    };
    let (delta, phi_perp, phase_out) = match canonical(psi, outer) {
        Some((n, s, p)) => (n, Some(s), p),
        None => (T::zero(), None, one),
    };
    Ok(HsiDecomposition {
        delta,
        inside,
        phi,
        phi_perp,
        phase_in,
        phase_out,
    })
}

/// A bounded observable: a Pauli string (norm exactly 1) or a dense
/// Hermitian matrix whose spectral norm has been checked.
#[derive(Debug, Clone)]
pub enum Observable<T: Real = f64> {
    Pauli(PauliString),
    Dense { op: HermitianOperator<T>, norm: T },
}

impl<T: Real> Observable<T> {
    pub fn pauli(string: PauliString) -> Self {
        Observable::Pauli(string)
    }

    pub fn single_site(sites: usize, site: usize, axis: Pauli) -> Result<Self> {
        Ok(Observable::Pauli(PauliString::single(sites, site, axis)?))
    }

    /// Accepts `op` only if its largest `|eigenvalue|` is at most `1 + 1e-12`.
    pub fn dense(op: HermitianOperator<T>) -> Result<Self> {
        let spec: SpectralData<T> = diagonalize(&op)?;
        let norm = spec
            .energies()
            .iter()
            .fold(T::zero(), |m, e| m.max(e.abs()));
        if norm > T::one() + T::tolerance(NORM_SLACK) {
            return Err(Error::NormViolation {
                norm: norm.to_f64_lossy(),
            });
        }
        Ok(Observable::Dense { op, norm })
    }

    pub fn norm(&self) -> T {
        match self {
            Observable::Pauli(_) => T::one(),
            Observable::Dense { norm, .. } => *norm,
        }
    }

    pub fn apply(&self, state: &StateVector<T>) -> Result<Vec<Complex<T>>> {
        match self {
            Observable::Pauli(p) => Ok(p.apply(state)?.into_amplitudes()),
            Observable::Dense { op, .. } => op.apply(state),
        }
    }

    /// `⟨bra|Ô|ket⟩`.
    pub fn bracket(&self, bra: &StateVector<T>, ket: &StateVector<T>) -> Result<Complex<T>> {
        Ok(inner_product(bra.amplitudes(), &self.apply(ket)?))
    }

    pub fn expectation(&self, state: &StateVector<T>) -> Result<T> {
        Ok(self.bracket(state, state)?.re)
    }

    pub fn label(&self) -> String {
        match self {
            Observable::Pauli(p) => p.to_string(),
            Observable::Dense { .. } => "dense".to_string(),
        }
    }
}

/// The three weighted pieces of `⟨Ô⟩(t)` and the exact value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectationTerms<T: Real = f64> {
    pub time: T,
    /// `O_nonth(t) = ⟨φ(t)|Ô|φ(t)⟩`; zero when `φ` is undefined.
    pub o_nonth: T,
    /// `O_th(t) = ⟨φ⊥(t)|Ô|φ⊥(t)⟩`; zero when `φ⊥` is undefined.
    pub o_th_inst: T,
    /// `e^{i(β−α)}⟨φ(t)|Ô|φ⊥(t)⟩`, the relative phase folded in.
    pub cross_amplitude: Complex<T>,
    /// `(1−Δ²)·O_nonth`.
    pub nonthermal: T,
    /// `Δ²·O_th`.
    pub thermal: T,
    /// `2Δ√(1−Δ²)·Re(cross_amplitude)`.
    pub cross: T,
    /// `⟨ψ(t)|Ô|ψ(t)⟩` evaluated directly.
    pub exact: T,
}

impl<T: Real> ExpectationTerms<T> {
    pub fn sum(&self) -> T {
        self.nonthermal + self.thermal + self.cross
    }
}

fn check_operator<T: Real>(spectrum: &SpectralData<T>, obs: &Observable<T>) -> Result<()> {
    if obs.norm() > T::one() + T::tolerance(NORM_SLACK) {
        return Err(Error::NormViolation {
            norm: obs.norm().to_f64_lossy(),
        });
    }
    if let Observable::Pauli(p) = obs {
        if p.sites() != spectrum.space().sites() {
            return Err(Error::DimensionMismatch {
                expected: spectrum.space().dim(),
                found: 1 << p.sites(),
            });
        }
    }
    Ok(())
}

fn coefficients_of<T: Real>(
    spectrum: &SpectralData<T>,
    state: &Option<StateVector<T>>,
) -> Result<Option<Vec<Complex<T>>>> {
    state.as_ref().map(|s| spectrum.coefficients(s)).transpose()
}

const TIME_CHUNK: usize = 32;

/// [`expectation_decomposition`] over many times.
pub fn decompose_over_times<T: Real>(
    decomp: &HsiDecomposition<T>,
    spectrum: &SpectralData<T>,
    obs: &Observable<T>,
    times: &[T],
) -> Result<Vec<ExpectationTerms<T>>> {
    check_operator(spectrum, obs)?;
    let c_in = coefficients_of(spectrum, &decomp.phi)?;
    let c_out = coefficients_of(spectrum, &decomp.phi_perp)?;
    let (a, d) = (decomp.inside, decomp.delta);
    let rel = decomp.relative_phase();
    let two = T::of(2.0);
    let psi0 = decomp.reconstruct();
    let c_psi = spectrum.coefficients(&StateVector::normalized(spectrum.space(), psi0)?)?;

    let chunks: Vec<&[T]> = times.chunks(TIME_CHUNK).collect();
    let rows: Vec<Vec<ExpectationTerms<T>>> = chunks
        .par_iter()
        .map(|ts| -> Result<Vec<ExpectationTerms<T>>> {
            let phi_t = c_in.as_ref().map(|c| evolve_many(spectrum, c, ts)).transpose()?;
            let perp_t = c_out.as_ref().map(|c| evolve_many(spectrum, c, ts)).transpose()?;
            let psi_t = evolve_many(spectrum, &c_psi, ts)?;
            ts.iter()
                .enumerate()
                .map(|(k, &time)| {
                    let phi = phi_t.as_ref().map(|v| &v[k]);
                    let perp = perp_t.as_ref().map(|v| &v[k]);
                    let o_nonth = phi.map(|s| obs.expectation(s)).transpose()?.unwrap_or(T::zero());
                    let o_th_inst = perp.map(|s| obs.expectation(s)).transpose()?.unwrap_or(T::zero());
                    let cross_amplitude = match (phi, perp) {
                        (Some(p), Some(q)) => obs.bracket(p, q)? * rel,
                        _ => czero(),
                    };
                    Ok(ExpectationTerms {
                        time,
                        o_nonth,
                        o_th_inst,
                        cross_amplitude,
                        nonthermal: a * a * o_nonth,
                        thermal: d * d * o_th_inst,
                        cross: two * a * d * cross_amplitude.re,
                        exact: obs.expectation(&psi_t[k])?,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// The three-term split of `⟨Ô⟩(t)` under the evolution in `spectrum`.
pub fn expectation_decomposition<T: Real>(
    decomp: &HsiDecomposition<T>,
    spectrum: &SpectralData<T>,
    obs: &Observable<T>,
    t: T,
) -> Result<ExpectationTerms<T>> {
    Ok(decompose_over_times(decomp, spectrum, obs, &[t])?[0])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub delta: f64,
    pub observable: String,
    pub terms: Vec<ExpectationTerms<f64>>,
    /// `2Δ√(1−Δ²) − |cross|` per time; a theorem guarantees `≥ 0`.
    pub margin: Vec<f64>,
    /// `2Δ − |⟨Ô⟩ − O_nonth|` per time, the truncated form; may go negative.
    pub truncated_margin: Vec<f64>,
    pub min_margin: f64,
    /// `max |⟨φ(t)|Ô|φ⊥(t)⟩|` over the late window; `None` when `Δ ∈ {0, 1}`.
    pub delta_est: Option<f64>,
    /// Late-window mean of `O_th(t)`; `None` when `φ⊥` is undefined.
    pub o_th_late: Option<f64>,
}

/// Evaluates the exact loose bound on every grid time.
///
/// A margin below `−1e-9` means the identity failed, which can only be a
/// bug; it is returned as [`Error::BoundViolation`].
pub fn verify_loose_bound(
    decomp: &HsiDecomposition<f64>,
    spectrum: &SpectralData<f64>,
    obs: &Observable<f64>,
    grid: &TimeGrid<f64>,
) -> Result<BoundReport> {
    let terms = decompose_over_times(decomp, spectrum, obs, grid.times())?;
    let (a, d) = (decomp.inside, decomp.delta);
    let cap = 2.0 * a * d;
    let margin: Vec<f64> = terms.iter().map(|t| cap - t.cross.abs()).collect();
    let truncated_margin = terms
        .iter()
        .map(|t| 2.0 * d - (t.exact - t.o_nonth).abs())
        .collect();
    let (worst, min_margin) = margin
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(i, m), (j, &x)| if x < m { (j, x) } else { (i, m) });
    if min_margin < MARGIN_FLOOR {
        return Err(Error::BoundViolation {
            time: terms[worst].time,
            margin: min_margin,
        });
    }
    let late = grid.late_window();
    let degenerate = decomp.is_inside() || decomp.is_orthogonal();
    let delta_est = (!degenerate).then(|| {
        terms[late.clone()]
            .iter()
            .map(|t| t.cross_amplitude.norm())
            .fold(0.0, f64::max)
    });
    let o_th_late = (!decomp.is_inside()).then(|| {
        let series: Vec<f64> = terms.iter().map(|t| t.o_th_inst).collect();
        window_mean(&series, late)
    });
    Ok(BoundReport {
        delta: d,
        observable: obs.label(),
        terms,
        margin,
        truncated_margin,
        min_margin,
        delta_est,
        o_th_late,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossTermRow {
    pub sites: usize,
    pub delta: f64,
    /// Target subspace size.
    pub subspace: usize,
    pub delta_est: Option<f64>,
    pub min_margin: f64,
}

/// Late-time cross-term size versus `L` for a product state quenched by the
/// clean `H_U1`, with `Ô = Z_{L/2}` and the subspace chosen by `rule`.
pub fn cross_term_trace(
    kind: ProductState,
    gamma: f64,
    sizes: &[usize],
    rule: SelectionRule,
    grid: &TimeGrid<f64>,
) -> Result<Vec<CrossTermRow>> {
    sizes
        .iter()
        .map(|&sites| {
            let op = HamiltonianSpecU1::new(sites, gamma).pauli_sum()?;
            let spectrum: SpectralData<f64> = diagonalize(&op)?;
            let psi = make_product_state(kind, sites)?;
            let target = select_target_subspace(&spectrum, &psi, rule, &format!("u1 L={sites} γ={gamma}"))?;
            let decomp = hsi_decompose(&psi, &target)?;
            let obs = Observable::single_site(sites, sites / 2, Pauli::Z)?;
            let report = verify_loose_bound(&decomp, &spectrum, &obs, grid)?;
            Ok(CrossTermRow {
                sites,
                delta: decomp.delta,
                subspace: target.len(),
                delta_est: report.delta_est,
                min_margin: report.min_margin,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::HilbertSpace;

    fn spectrum(sites: usize, gamma: f64) -> SpectralData<f64> {
        diagonalize(&HamiltonianSpecU1::new(sites, gamma).pauli_sum().unwrap()).unwrap()
    }

    #[test]
    fn inside_and_orthogonal_limits() {
        let spec = spectrum(4, 1.0);
        let space = HilbertSpace::new(4).unwrap();
        let f = make_product_state::<f64>(ProductState::Ferro, 4).unwrap();
        let target = TargetSubspace::new(vec![f.clone()], "F").unwrap();

        let d = hsi_decompose(&f, &target).unwrap();
        assert_eq!(d.delta, 0.0);
        assert!(d.is_inside() && !d.is_orthogonal());

        let other = StateVector::basis(space, 3).unwrap();
        let d = hsi_decompose(&other, &target).unwrap();
        assert_eq!(d.delta, 1.0);
        assert!(d.is_orthogonal());
        let obs = Observable::single_site(4, 0, Pauli::Z).unwrap();
        let grid = TimeGrid::linear(0.0, 5.0, 11).unwrap();
        let r = verify_loose_bound(&d, &spec, &obs, &grid).unwrap();
        assert!(r.terms.iter().all(|t| t.cross == 0.0));
        assert!(r.margin.iter().all(|&m| m == 0.0));
        assert_eq!(r.delta_est, None);
    }

    #[test]
    fn frozen_ferro_sector_keeps_z_at_one() {
        let spec = spectrum(6, 1.0);
        let f = make_product_state::<f64>(ProductState::Ferro, 6).unwrap();
        let target = TargetSubspace::new(vec![f.clone()], "F").unwrap();
        let d = hsi_decompose(&f, &target).unwrap();
        let obs = Observable::single_site(6, 0, Pauli::Z).unwrap();
        for t in [0.0, 1.3, 7.0, 40.0] {
            let terms = expectation_decomposition(&d, &spec, &obs, t).unwrap();
            assert!((terms.exact - 1.0).abs() < 1e-12);
            assert_eq!(terms.exact, terms.o_nonth);
            assert_eq!(terms.cross, 0.0);
        }
        let grid = TimeGrid::linear(0.0, 5.0, 11).unwrap();
        let r = verify_loose_bound(&d, &spec, &obs, &grid).unwrap();
        assert!(r.margin.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn flip_one_leakage_is_at_most_a_fifth() {
        let spec = spectrum(8, 0.9);
        let psi = make_product_state(ProductState::FlipOne, 8).unwrap();
        let target = select_target_subspace(&spec, &psi, SelectionRule::default(), "u1").unwrap();
        let d = hsi_decompose(&psi, &target).unwrap();
        assert!(d.delta * d.delta <= 0.2 + 1e-12);
        assert!((d.delta * d.delta + d.inside * d.inside - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dense_observable_norm_is_checked() {
        let op = HamiltonianSpecU1::new(4, 0.5).pauli_sum().unwrap().to_operator::<f64>();
        assert!(matches!(Observable::dense(op), Err(Error::NormViolation { .. })));
        let z = PauliString::single(3, 1, Pauli::Z).unwrap();
        let mut sum = crate::hamiltonian::PauliSum::new(HilbertSpace::new(3).unwrap());
        sum.push(0.5, z.ops()).unwrap();
        sum.push(0.5, &[(0, Pauli::X), (2, Pauli::Y)]).unwrap();
        let obs = Observable::dense(sum.to_operator::<f64>()).unwrap();
        assert!((obs.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn leading_amplitudes_are_real_positive() {
        let spec = spectrum(6, 0.9);
        let psi = make_product_state::<f64>(ProductState::FlipOne, 6)
            .unwrap()
            .with_global_phase(Complex::from_polar(1.0, 2.1));
        let target = select_target_subspace(&spec, &psi, SelectionRule::TopK { k: 3 }, "u1").unwrap();
        let d = hsi_decompose(&psi, &target).unwrap();
        for part in [&d.phi, &d.phi_perp] {
            let v = part.as_ref().unwrap();
            let lead = v.amplitudes().iter().find(|a| a.norm() > 1e-12).unwrap();
            assert!(lead.re > 0.0 && lead.im.abs() < 1e-15);
        }
        let rebuilt = d.reconstruct();
        for (a, b) in rebuilt.iter().zip(psi.amplitudes()) {
            assert!((a - b).norm() < 1e-10);
        }
    }
}
