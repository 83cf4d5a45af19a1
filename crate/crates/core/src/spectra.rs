//! Full Hermitian diagonalization, overlap profiles and the N-statistic.
//!
//! `diagonalize` first splits the operator into exactly decoupled blocks
//! (connected components of its nonzero pattern), diagonalizes each block
//! densely and merges the spectra in ascending order. Every eigenvector is
//! therefore supported on a single block, which also makes them pure in any
//! symmetry sector the Hamiltonian happens to conserve.

use faer::{Mat, Side};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{HermitianSource, ModelFamily, DEFAULT_SITE_CAP};
use crate::hilbert::{HilbertSpace, ProductState, StateVector};
use crate::scalar::{czero, KahanSum, Real};

/// Eigenpairs of one decoupled block, in block-local ascending order.
#[derive(Debug, Clone)]
pub struct EigenBlock<T: Real> {
    basis: Vec<usize>,
    energies: Vec<T>,
    re: Mat<T>,
    im: Option<Mat<T>>,
}

impl<T: Real> EigenBlock<T> {
    pub fn basis(&self) -> &[usize] {
        &self.basis
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn energies(&self) -> &[T] {
        &self.energies
    }

    #[inline]
    fn component(&self, row: usize, col: usize) -> Complex<T> {
        let im = self.im.as_ref().map_or(T::zero(), |m| m[(row, col)]);
        Complex::new(self.re[(row, col)], im)
    }
}

#[derive(Debug, Clone)]
pub struct SpectralData<T: Real = f64> {
    space: HilbertSpace,
    energies: Vec<T>,
    /// Global eigen-index → (block, column).
    locations: Vec<(usize, usize)>,
    blocks: Vec<EigenBlock<T>>,
    residual_bound: T,
}

pub fn diagonalize<T, H>(operator: &H) -> Result<SpectralData<T>>
where
    T: Real,
    H: HermitianSource<T> + ?Sized,
{
    let space = operator.space();
    let real = operator.is_real();
    let mut blocks = Vec::new();
    let mut residual_bound = T::zero();

    for basis in operator.decoupled_blocks() {
        let n = basis.len();
        let mut re = Mat::<T>::zeros(n, n);
        let mut im = (!real).then(|| Mat::<T>::zeros(n, n));
        operator.fill_block(&basis, re.as_mut(), im.as_mut().map(|m| m.as_mut()));

        let (energies, vre, vim, residual) = match im {
            None => real_block(&re)?,
            Some(im) => complex_block(&re, &im)?,
        };
        residual_bound = residual_bound.max(residual);
        blocks.push(EigenBlock {
            basis,
            energies,
            re: vre,
            im: vim,
        });
    }

    let mut locations: Vec<(usize, usize)> = blocks
        .iter()
        .enumerate()
        .flat_map(|(b, blk)| (0..blk.len()).map(move |c| (b, c)))
        .collect();
    locations.sort_by(|&(b1, c1), &(b2, c2)| {
        blocks[b1].energies[c1]
            .partial_cmp(&blocks[b2].energies[c2])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let energies = locations
        .iter()
        .map(|&(b, c)| blocks[b].energies[c])
        .collect();

    Ok(SpectralData {
        space,
        energies,
        locations,
        blocks,
        residual_bound,
    })
}

type BlockEig<T> = (Vec<T>, Mat<T>, Option<Mat<T>>, T);

fn real_block<T: Real>(a: &Mat<T>) -> Result<BlockEig<T>> {
    let n = a.nrows();
    let eig = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::EigenSolver { dim: n })?;
    let energies: Vec<T> = eig.S().column_vector().iter().copied().collect();
    let u = eig.U().to_owned();
    let mut r = a * &u;
    for (c, &e) in energies.iter().enumerate() {
        for i in 0..n {
            r[(i, c)] = r[(i, c)] - u[(i, c)] * e;
        }
    }
    Ok((energies, u, None, max_column_norm(&r, None)))
}

fn complex_block<T: Real>(re: &Mat<T>, im: &Mat<T>) -> Result<BlockEig<T>> {
    let n = re.nrows();
    let a = Mat::<Complex<T>>::from_fn(n, n, |i, j| Complex::new(re[(i, j)], im[(i, j)]));
    let eig = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::EigenSolver { dim: n })?;
    let energies: Vec<T> = eig.S().column_vector().iter().map(|z| z.re).collect();
    let u = eig.U().to_owned();
    let mut r = &a * &u;
    for (c, &e) in energies.iter().enumerate() {
        for i in 0..n {
            r[(i, c)] = r[(i, c)] - u[(i, c)].scale(e);
        }
    }
    let rre = Mat::<T>::from_fn(n, n, |i, j| r[(i, j)].re);
    let rim = Mat::<T>::from_fn(n, n, |i, j| r[(i, j)].im);
    let vre = Mat::<T>::from_fn(n, n, |i, j| u[(i, j)].re);
    let vim = Mat::<T>::from_fn(n, n, |i, j| u[(i, j)].im);
    Ok((energies, vre, Some(vim), max_column_norm(&rre, Some(&rim))))
}

fn max_column_norm<T: Real>(re: &Mat<T>, im: Option<&Mat<T>>) -> T {
    let mut worst = T::zero();
    for c in 0..re.ncols() {
        let mut s = T::zero();
        for i in 0..re.nrows() {
            let x = re[(i, c)];
            let y = im.map_or(T::zero(), |m| m[(i, c)]);
            s = s + x * x + y * y;
        }
        worst = worst.max(s.sqrt());
    }
    worst
}

impl<T: Real> SpectralData<T> {
    pub fn space(&self) -> HilbertSpace {
        self.space
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    /// Ascending eigenvalues.
    pub fn energies(&self) -> &[T] {
        &self.energies
    }

    pub fn blocks(&self) -> &[EigenBlock<T>] {
        &self.blocks
    }

    /// `max_n ‖H v_n − E_n v_n‖`.
    pub fn residual_bound(&self) -> T {
        self.residual_bound
    }

    pub fn spectral_range(&self) -> T {
        match (self.energies.first(), self.energies.last()) {
            (Some(&lo), Some(&hi)) => hi - lo,
            _ => T::zero(),
        }
    }

    /// `(block, column)` of global eigenvector `n`.
    pub fn location(&self, n: usize) -> (usize, usize) {
        self.locations[n]
    }

    /// Eigenvector `n` embedded in the full space.
    pub fn eigenvector(&self, n: usize) -> StateVector<T> {
        let (b, c) = self.locations[n];
        let blk = &self.blocks[b];
        let mut amps = vec![czero::<T>(); self.space.dim()];
        for (r, &i) in blk.basis.iter().enumerate() {
            amps[i] = blk.component(r, c);
        }
        StateVector::from_raw(self.space, amps)
    }

    fn check_dim(&self, state: &StateVector<T>) -> Result<()> {
        if state.dim() != self.space.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.space.dim(),
                found: state.dim(),
            });
        }
        Ok(())
    }

    /// `c_n = ⟨E_n|ψ⟩` in global eigen-order.
    pub fn coefficients(&self, state: &StateVector<T>) -> Result<Vec<Complex<T>>> {
        self.check_dim(state)?;
        let amps = state.amplitudes();
        let mut per_block: Vec<Vec<Complex<T>>> = Vec::with_capacity(self.blocks.len());
        for blk in &self.blocks {
            let n = blk.len();
            if blk.basis.iter().all(|&i| amps[i] == czero()) {
                per_block.push(vec![czero(); n]);
                continue;
            }
            let psi = Mat::<T>::from_fn(n, 2, |r, k| {
                let a = amps[blk.basis[r]];
                if k == 0 {
                    a.re
                } else {
                    a.im
                }
            });
            // V† ψ = (Vre^T − i Vim^T)(ψre + i ψim)
            let p = blk.re.transpose() * &psi;
            let q = blk.im.as_ref().map(|vim| vim.transpose() * &psi);
            per_block.push(
                (0..n)
                    .map(|c| {
                        let (mut re, mut im) = (p[(c, 0)], p[(c, 1)]);
                        if let Some(q) = &q {
                            re = re + q[(c, 1)];
                            im = im - q[(c, 0)];
                        }
                        Complex::new(re, im)
                    })
                    .collect(),
            );
        }
        Ok(self
            .locations
            .iter()
            .map(|&(b, c)| per_block[b][c])
            .collect())
    }

    /// `Σ_n coeffs[k][n] |E_n⟩` for each coefficient vector `k`.
    pub fn synthesize_many(&self, coeffs: &[Vec<Complex<T>>]) -> Vec<Vec<Complex<T>>> {
        let k = coeffs.len();
        let dim = self.space.dim();
        let mut out = vec![vec![czero::<T>(); dim]; k];
        if k == 0 {
            return out;
        }
        let mut global_of: Vec<Vec<usize>> =
            self.blocks.iter().map(|b| vec![0; b.len()]).collect();
        for (g, &(b, c)) in self.locations.iter().enumerate() {
            global_of[b][c] = g;
        }
        for (b, blk) in self.blocks.iter().enumerate() {
            let n = blk.len();
            let active = coeffs
                .iter()
                .any(|cv| global_of[b].iter().any(|&g| cv[g] != czero()));
            if !active {
                continue;
            }
            let cre = Mat::<T>::from_fn(n, k, |c, j| coeffs[j][global_of[b][c]].re);
            let cim = Mat::<T>::from_fn(n, k, |c, j| coeffs[j][global_of[b][c]].im);
            let mut pre = &blk.re * &cre;
            let mut pim = &blk.re * &cim;
            if let Some(vim) = &blk.im {
                pre = pre - vim * &cim;
                pim = pim + vim * &cre;
            }
            for (j, o) in out.iter_mut().enumerate() {
                for (r, &i) in blk.basis.iter().enumerate() {
                    o[i] = Complex::new(pre[(r, j)], pim[(r, j)]);
                }
            }
        }
        out
    }

    pub fn synthesize(&self, coeffs: &[Complex<T>]) -> Vec<Complex<T>> {
        self.synthesize_many(&[coeffs.to_vec()]).pop().unwrap_or_default()
    }

    /// `max |V†V − I|` over all blocks. Cubic in the block size.
    pub fn orthonormality_defect(&self) -> T {
        let mut worst = T::zero();
        for blk in &self.blocks {
            let mut g_re = blk.re.transpose() * &blk.re;
            let mut g_im = Mat::<T>::zeros(blk.len(), blk.len());
            if let Some(vim) = &blk.im {
                g_re = g_re + vim.transpose() * vim;
                g_im = blk.re.transpose() * vim - vim.transpose() * &blk.re;
            }
            for j in 0..blk.len() {
                for i in 0..blk.len() {
                    let target = if i == j { T::one() } else { T::zero() };
                    let d = Complex::new(g_re[(i, j)] - target, g_im[(i, j)]).norm();
                    worst = worst.max(d);
                }
            }
        }
        worst
    }
}

/// Spectral weights `|⟨E_n|ψ⟩|²` of one state.
#[derive(Debug, Clone)]
pub struct OverlapProfile<T: Real = f64> {
    weights: Vec<T>,
    energies: Vec<T>,
    source: String,
    order: Vec<usize>,
    cumulative_sorted: Vec<T>,
}

impl<T: Real> OverlapProfile<T> {
    /// Builds a profile from explicit weights (which must sum to one) and the
    /// matching ascending energies.
    pub fn from_weights(weights: Vec<T>, energies: Vec<T>, source: impl Into<String>) -> Result<Self> {
        if weights.len() != energies.len() {
            return Err(Error::DimensionMismatch {
                expected: energies.len(),
                found: weights.len(),
            });
        }
        if weights.iter().any(|w| !(*w >= T::zero())) {
            return Err(Error::InvalidParameter(
                "overlap weights must be non-negative".to_string(),
            ));
        }
        let total = weights.iter().copied().collect::<KahanSum<T>>().value();
        if (total - T::one()).abs() > T::tolerance(1e-10) {
            return Err(Error::NotNormalized {
                norm: total.to_f64_lossy().sqrt(),
            });
        }
        let mut order: Vec<usize> = (0..weights.len()).collect();
        order.sort_by(|&a, &b| {
            weights[b]
                .partial_cmp(&weights[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(
                    energies[a]
                        .partial_cmp(&energies[b])
                        .unwrap_or(std::cmp::Ordering::Equal),
                )
                .then(a.cmp(&b))
        });
        let mut acc = KahanSum::new();
        let cumulative_sorted = order
            .iter()
            .map(|&i| {
                acc.add(weights[i]);
                acc.value()
            })
            .collect();
        Ok(Self {
            weights,
            energies,
            source: source.into(),
            order,
            cumulative_sorted,
        })
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn energies(&self) -> &[T] {
        &self.energies
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Eigen-indices by descending weight (ties: ascending energy, index).
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn cumulative_sorted(&self) -> &[T] {
        &self.cumulative_sorted
    }

    pub fn max_weight(&self) -> T {
        self.order.first().map_or(T::zero(), |&i| self.weights[i])
    }
}

pub fn overlaps<T: Real>(state: &StateVector<T>, spectrum: &SpectralData<T>) -> Result<OverlapProfile<T>> {
    let coeffs = spectrum.coefficients(state)?;
    let weights = coeffs.iter().map(|c| c.norm_sqr()).collect();
    OverlapProfile::from_weights(weights, spectrum.energies().to_vec(), "state")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NStatistic<T: Real = f64> {
    /// Fewest eigenstates whose weights reach the threshold.
    pub count: usize,
    /// Their eigen-indices, by descending weight.
    pub indices: Vec<usize>,
    /// Weight actually captured.
    pub captured: T,
    /// Weight of the last included state minus that of the first excluded
    /// one; small values flag near-degenerate ambiguity.
    pub weight_gap: T,
}

/// Smallest number of largest weights summing to at least `threshold`.
///
/// The cumulative sums are compensated and compared with a slack of a few
/// ulps, so ten weights of 0.1 reach 0.8 after exactly eight terms.
pub fn n_statistic<T: Real>(profile: &OverlapProfile<T>, threshold: f64) -> Result<NStatistic<T>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "threshold must lie in (0, 1), got {threshold}"
        )));
    }
    let target = T::of(threshold) - T::epsilon() * T::of(64.0);
    let cum = &profile.cumulative_sorted;
    let count = cum
        .iter()
        .position(|&c| c >= target)
        .map_or(cum.len(), |p| p + 1);
    let indices: Vec<usize> = profile.order[..count].to_vec();
    let last = profile.weights[indices[count - 1]];
    let next = profile
        .order
        .get(count)
        .map_or(T::zero(), |&i| profile.weights[i]);
    Ok(NStatistic {
        count,
        captured: cum[count - 1],
        indices,
        weight_gap: last - next,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NScalingRow {
    pub sites: usize,
    pub gamma: f64,
    pub n: usize,
    pub max_weight: f64,
    pub weight_gap: f64,
}

/// `N(L, γ)` for a clean (zero-field) member of `family`.
pub fn n_scaling(
    family: &ModelFamily,
    kind: ProductState,
    sizes: &[usize],
    gammas: &[f64],
    threshold: f64,
) -> Result<Vec<NScalingRow>> {
    let mut rows = Vec::with_capacity(sizes.len() * gammas.len());
    for &gamma in gammas {
        for &sites in sizes {
            if sites % 2 != 0 {
                return Err(Error::InvalidSize {
                    sites,
                    reason: "N-scaling sweeps use even L",
                });
            }
            let model = family.spec(sites, gamma, None)?;
            let spectrum: SpectralData<f64> = diagonalize(&model.operator(DEFAULT_SITE_CAP)?)?;
            let state = crate::hilbert::make_product_state(kind, sites)?;
            let profile = overlaps(&state, &spectrum)?;
            let n = n_statistic(&profile, threshold)?;
            rows.push(NScalingRow {
                sites,
                gamma,
                n: n.count,
                max_weight: profile.max_weight(),
                weight_gap: n.weight_gap,
            });
        }
    }
    Ok(rows)
}
