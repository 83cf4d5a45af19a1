//! Pauli-string Hamiltonians on periodic chains and their dense materialization.
//!
//! Three models are provided:
//!
//! * `H_U1 = −Σ_j [X_jX_{j+1} + γ Y_jY_{j+1} + λ1 Z_jZ_{j+1}]
//!          − λ2 Σ_j [X_jX_{j+2} + Y_jY_{j+2} + Z_jZ_{j+2}] + h Σ_j Z_j`
//! * `H_Z2 = −Σ_j [X_jX_{j+1} + Δ1 Z_jZ_{j+1} + γ X_j] − Σ_j h_j Z_j`
//! * `H_dis = −Σ_j [X_jX_{j+1} + γ Y_jY_{j+1} + μ Z_jZ_{j+1}] − Σ_j h_j Z_j`
//!
//! Note the field term of `H_U1` enters with a plus sign while the other two
//! carry `−h_j`; both are kept exactly as written.

use std::fmt;

use faer::{Mat, MatMut};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{HilbertSpace, SectorKind, StateVector};
use crate::scalar::{czero, Real};

/// Largest chain the builders accept unless the caller raises it.
pub const DEFAULT_SITE_CAP: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl fmt::Display for Pauli {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pauli::X => "X",
            Pauli::Y => "Y",
            Pauli::Z => "Z",
        })
    }
}

/// `i^k` for `k = 0..4`.
#[inline]
fn ipow<T: Real>(k: u32, scale: T) -> Complex<T> {
    match k & 3 {
        0 => Complex::new(scale, T::zero()),
        1 => Complex::new(T::zero(), scale),
        2 => Complex::new(-scale, T::zero()),
        _ => Complex::new(T::zero(), -scale),
    }
}

/// Tensor product of single-site Paulis on distinct sites, stored as masks.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PauliString {
    sites: usize,
    ops: Vec<(usize, Pauli)>,
    flip: usize,
    phase_mask: usize,
    y_count: u32,
}

impl PauliString {
    pub fn new(sites: usize, ops: &[(usize, Pauli)]) -> Result<Self> {
        let mut sorted = ops.to_vec();
        sorted.sort_by_key(|&(s, _)| s);
        let (mut flip, mut phase_mask, mut y_count) = (0usize, 0usize, 0u32);
        for w in sorted.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::InvalidParameter(format!(
                    "site {} appears twice in a Pauli string",
                    w[0].0
                )));
            }
        }
        for &(site, p) in &sorted {
            if site >= sites {
                return Err(Error::SiteOutOfRange { site, sites });
            }
            let bit = 1usize << site;
            match p {
                Pauli::X => flip |= bit,
                Pauli::Y => {
                    flip |= bit;
                    phase_mask |= bit;
                    y_count += 1;
                }
                Pauli::Z => phase_mask |= bit,
            }
        }
        Ok(Self {
            sites,
            ops: sorted,
            flip,
            phase_mask,
            y_count,
        })
    }

    pub fn single(sites: usize, site: usize, axis: Pauli) -> Result<Self> {
        Self::new(sites, &[(site, axis)])
    }

    pub fn ops(&self) -> &[(usize, Pauli)] {
        &self.ops
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    #[inline]
    pub fn flip_mask(&self) -> usize {
        self.flip
    }

    /// Image of basis state `index`: `P|index⟩ = i^k |target⟩`.
    ///
    /// σ^y contributes `i` on bit 0 and `−i` on bit 1; σ^z contributes
    /// `(−1)^bit`.
    #[inline]
    pub fn act(&self, index: usize) -> (usize, u32) {
        let k = self.y_count + 2 * (index & self.phase_mask).count_ones();
        (index ^ self.flip, k & 3)
    }

    pub fn apply<T: Real>(&self, state: &StateVector<T>) -> Result<StateVector<T>> {
        check_space(self.sites, state)?;
        let mut out = vec![czero::<T>(); state.dim()];
        for (i, a) in state.amplitudes().iter().enumerate() {
            let (j, k) = self.act(i);
            out[j] = *a * ipow(k, T::one());
        }
        Ok(StateVector::from_raw(state.space(), out))
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ops.is_empty() {
            return f.write_str("I");
        }
        for (n, (s, p)) in self.ops.iter().enumerate() {
            if n > 0 {
                f.write_str("·")?;
            }
            write!(f, "{p}{s}")?;
        }
        Ok(())
    }
}

fn check_space<T: Real>(sites: usize, state: &StateVector<T>) -> Result<()> {
    if state.space().sites() != sites {
        return Err(Error::DimensionMismatch {
            expected: 1 << sites,
            found: state.dim(),
        });
    }
    Ok(())
}

/// Single-site Pauli action on a state.
pub fn apply_pauli<T: Real>(
    state: &StateVector<T>,
    site: usize,
    axis: Pauli,
) -> Result<StateVector<T>> {
    state.space().check_site(site)?;
    PauliString::single(state.space().sites(), site, axis)?.apply(state)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PauliTerm {
    pub coeff: f64,
    pub string: PauliString,
}

/// Real linear combination of Pauli strings; Hermitian by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PauliSum {
    space: HilbertSpace,
    terms: Vec<PauliTerm>,
}

impl PauliSum {
    pub fn new(space: HilbertSpace) -> Self {
        Self {
            space,
            terms: Vec::new(),
        }
    }

    pub fn push(&mut self, coeff: f64, ops: &[(usize, Pauli)]) -> Result<()> {
        if !coeff.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "non-finite coupling {coeff}"
            )));
        }
        if coeff != 0.0 {
            self.terms.push(PauliTerm {
                coeff,
                string: PauliString::new(self.space.sites(), ops)?,
            });
        }
        Ok(())
    }

    pub fn space(&self) -> HilbertSpace {
        self.space
    }

    pub fn terms(&self) -> &[PauliTerm] {
        &self.terms
    }

    /// `true` when every matrix element is real, i.e. each string has an
    /// even number of σ^y.
    pub fn is_real(&self) -> bool {
        self.terms.iter().all(|t| t.string.y_count % 2 == 0)
    }

    /// Matrix-free `H|ψ⟩`.
    pub fn apply<T: Real>(&self, state: &StateVector<T>) -> Result<Vec<Complex<T>>> {
        check_space(self.space.sites(), state)?;
        let mut out = vec![czero::<T>(); state.dim()];
        for term in &self.terms {
            let c = T::of(term.coeff);
            for (i, a) in state.amplitudes().iter().enumerate() {
                let (j, k) = term.string.act(i);
                out[j] = out[j] + *a * ipow(k, c);
            }
        }
        Ok(out)
    }

    /// Off-diagonal couplings of basis state `i`, summed per target so that
    /// exact cancellations (e.g. `XX + YY` on `|00⟩`) vanish.
    fn couplings(&self, i: usize, scratch: &mut Vec<(usize, Complex<f64>)>) {
        scratch.clear();
        for term in &self.terms {
            let (j, k) = term.string.act(i);
            let v = ipow(k, term.coeff);
            match scratch.iter_mut().find(|(t, _)| *t == j) {
                Some((_, acc)) => *acc += v,
                None => scratch.push((j, v)),
            }
        }
    }

    /// Dense matrix of the sum.
    pub fn to_operator<T: Real>(&self) -> HermitianOperator<T> {
        let dim = self.space.dim();
        let all: Vec<usize> = (0..dim).collect();
        let mut re = Mat::<T>::zeros(dim, dim);
        let mut im = (!self.is_real()).then(|| Mat::<T>::zeros(dim, dim));
        self.fill_block(&all, re.as_mut(), im.as_mut().map(|m| m.as_mut()));
        HermitianOperator {
            space: self.space,
            re,
            im,
        }
    }
}

/// Dense Hermitian matrix `re + i·im`; `im` is absent for real operators.
#[derive(Debug, Clone)]
pub struct HermitianOperator<T: Real = f64> {
    space: HilbertSpace,
    re: Mat<T>,
    im: Option<Mat<T>>,
}

impl<T: Real> HermitianOperator<T> {
    pub fn from_parts(space: HilbertSpace, re: Mat<T>, im: Option<Mat<T>>) -> Result<Self> {
        let dim = space.dim();
        let shape_ok = |m: &Mat<T>| m.nrows() == dim && m.ncols() == dim;
        if !shape_ok(&re) || im.as_ref().is_some_and(|m| !shape_ok(m)) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: re.nrows(),
            });
        }
        let op = Self { space, re, im };
        let scale = T::one().max(op.max_abs());
        if op.hermiticity_defect() > T::tolerance(1e-12) * scale {
            return Err(Error::InvalidParameter(
                "matrix is not Hermitian".to_string(),
            ));
        }
        Ok(op)
    }

    pub fn space(&self) -> HilbertSpace {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn is_real(&self) -> bool {
        self.im.is_none()
    }

    pub fn real_part(&self) -> &Mat<T> {
        &self.re
    }

    pub fn imag_part(&self) -> Option<&Mat<T>> {
        self.im.as_ref()
    }

    #[inline]
    pub fn entry(&self, row: usize, col: usize) -> Complex<T> {
        let im = self.im.as_ref().map_or(T::zero(), |m| m[(row, col)]);
        Complex::new(self.re[(row, col)], im)
    }

    pub fn max_abs(&self) -> T {
        let n = self.dim();
        let mut m = T::zero();
        for j in 0..n {
            for i in 0..n {
                m = m.max(self.entry(i, j).norm());
            }
        }
        m
    }

    /// `max |M − M†|`.
    pub fn hermiticity_defect(&self) -> T {
        let n = self.dim();
        let mut m = T::zero();
        for j in 0..n {
            for i in 0..=j {
                m = m.max((self.entry(i, j) - self.entry(j, i).conj()).norm());
            }
        }
        m
    }

    pub fn trace(&self) -> T {
        (0..self.dim()).map(|i| self.re[(i, i)]).fold(T::zero(), |a, b| a + b)
    }

    /// `max |[M, D]|` for the diagonal operator `D = diag(d)`.
    pub fn commutator_with_diagonal(&self, diag: &[T]) -> T {
        let n = self.dim();
        let mut m = T::zero();
        for j in 0..n {
            for i in 0..n {
                m = m.max((self.entry(i, j) * (diag[j] - diag[i])).norm());
            }
        }
        m
    }

    /// Dense `M|ψ⟩`.
    pub fn apply(&self, state: &StateVector<T>) -> Result<Vec<Complex<T>>> {
        if state.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: state.dim(),
            });
        }
        let n = self.dim();
        let amps = state.amplitudes();
        let mut out = vec![czero::<T>(); n];
        for (j, a) in amps.iter().enumerate() {
            if a.norm_sqr() == T::zero() {
                continue;
            }
            for (i, o) in out.iter_mut().enumerate() {
                *o = *o + self.entry(i, j) * a;
            }
        }
        Ok(out)
    }

    /// `⟨ψ|M|ψ⟩`, real for Hermitian `M`.
    pub fn expectation(&self, state: &StateVector<T>) -> Result<T> {
        let hv = self.apply(state)?;
        Ok(crate::hilbert::inner_product(state.amplitudes(), &hv).re)
    }
}

/// An operator the eigensolver can consume block by block without ever
/// holding the full `2^L × 2^L` matrix.
pub trait HermitianSource<T: Real> {
    fn space(&self) -> HilbertSpace;

    fn is_real(&self) -> bool;

    /// Partition of the basis into sets with no matrix element between
    /// them. Each set is ascending; sets are ordered by their first index.
    fn decoupled_blocks(&self) -> Vec<Vec<usize>>;

    /// Writes the submatrix on `basis × basis` into caller-provided buffers
    /// (zeroed by the caller). `im` must be provided for complex operators.
    fn fill_block(&self, basis: &[usize], re: MatMut<'_, T>, im: Option<MatMut<'_, T>>);
}

struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] as usize != x {
            let p = self.parent[x] as usize;
            self.parent[x] = self.parent[p];
            x = p;
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo as u32;
        }
    }

    fn into_blocks(mut self) -> Vec<Vec<usize>> {
        let n = self.parent.len();
        let mut slot = vec![usize::MAX; n];
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        for i in 0..n {
            let r = self.find(i);
            if slot[r] == usize::MAX {
                slot[r] = blocks.len();
                blocks.push(Vec::new());
            }
            blocks[slot[r]].push(i);
        }
        blocks
    }
}

impl<T: Real> HermitianSource<T> for PauliSum {
    fn space(&self) -> HilbertSpace {
        self.space
    }

    fn is_real(&self) -> bool {
        PauliSum::is_real(self)
    }

    fn decoupled_blocks(&self) -> Vec<Vec<usize>> {
        let dim = self.space.dim();
        let mut uf = UnionFind::new(dim);
        let mut scratch = Vec::new();
        for i in 0..dim {
            self.couplings(i, &mut scratch);
            for &(j, v) in &scratch {
                if j != i && v != Complex::new(0.0, 0.0) {
                    uf.union(i, j);
                }
            }
        }
        uf.into_blocks()
    }

    fn fill_block(&self, basis: &[usize], mut re: MatMut<'_, T>, mut im: Option<MatMut<'_, T>>) {
        let mut position = std::collections::HashMap::with_capacity(basis.len());
        for (p, &b) in basis.iter().enumerate() {
            position.insert(b, p);
        }
        let mut scratch = Vec::new();
        for (col, &i) in basis.iter().enumerate() {
            self.couplings(i, &mut scratch);
            for &(j, v) in &scratch {
                if let Some(&row) = position.get(&j) {
                    re[(row, col)] = re[(row, col)] + T::of(v.re);
                    if let Some(im) = im.as_mut() {
                        im[(row, col)] = im[(row, col)] + T::of(v.im);
                    }
                }
            }
        }
    }
}

impl<T: Real> HermitianSource<T> for HermitianOperator<T> {
    fn space(&self) -> HilbertSpace {
        self.space
    }

    fn is_real(&self) -> bool {
        HermitianOperator::is_real(self)
    }

    fn decoupled_blocks(&self) -> Vec<Vec<usize>> {
        let n = self.dim();
        let mut uf = UnionFind::new(n);
        for j in 0..n {
            for i in (j + 1)..n {
                if self.entry(i, j) != czero() {
                    uf.union(i, j);
                }
            }
        }
        uf.into_blocks()
    }

    fn fill_block(&self, basis: &[usize], mut re: MatMut<'_, T>, mut im: Option<MatMut<'_, T>>) {
        for (c, &j) in basis.iter().enumerate() {
            for (r, &i) in basis.iter().enumerate() {
                re[(r, c)] = self.re[(i, j)];
                if let (Some(dst), Some(src)) = (im.as_mut(), self.im.as_ref()) {
                    dst[(r, c)] = src[(i, j)];
                }
            }
        }
    }
}

/// `H_U1`: XYZ chain with NNN Heisenberg coupling; U(1) symmetric at γ = 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianSpecU1 {
    pub sites: usize,
    pub gamma: f64,
    #[serde(default = "defaults::lambda1")]
    pub lambda1: f64,
    #[serde(default = "defaults::lambda2")]
    pub lambda2: f64,
    #[serde(default = "defaults::h")]
    pub h: f64,
}

/// `H_Z2`: disordered transverse/longitudinal Ising chain; parity symmetric
/// at γ = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianSpecZ2 {
    pub sites: usize,
    pub gamma: f64,
    #[serde(default = "defaults::delta1")]
    pub delta1: f64,
    pub fields: Vec<f64>,
    #[serde(default = "defaults::z2_disorder")]
    pub disorder: f64,
}

/// Disordered XYZ chain with random longitudinal fields; U(1) symmetric at
/// γ = 1 for any fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianSpecU1Disordered {
    pub sites: usize,
    pub gamma: f64,
    #[serde(default = "defaults::mu")]
    pub mu: f64,
    pub fields: Vec<f64>,
    #[serde(default = "defaults::u1_disorder")]
    pub disorder: f64,
}

pub mod defaults {
    pub fn lambda1() -> f64 {
        0.2
    }
    pub fn lambda2() -> f64 {
        0.32
    }
    pub fn h() -> f64 {
        1e-7
    }
    pub fn delta1() -> f64 {
        0.84
    }
    pub fn z2_disorder() -> f64 {
        2.4
    }
    pub fn mu() -> f64 {
        0.8
    }
    pub fn u1_disorder() -> f64 {
        4.8
    }
}

impl HamiltonianSpecU1 {
    pub fn new(sites: usize, gamma: f64) -> Self {
        Self {
            sites,
            gamma,
            lambda1: defaults::lambda1(),
            lambda2: defaults::lambda2(),
            h: defaults::h(),
        }
    }

    pub fn pauli_sum(&self) -> Result<PauliSum> {
        if self.sites < 3 {
            return Err(Error::InvalidSize {
                sites: self.sites,
                reason: "next-nearest-neighbour terms need L >= 3",
            });
        }
        let space = HilbertSpace::new(self.sites)?;
        let l = self.sites;
        let mut sum = PauliSum::new(space);
        for j in 0..l {
            let k = (j + 1) % l;
            sum.push(-1.0, &[(j, Pauli::X), (k, Pauli::X)])?;
            sum.push(-self.gamma, &[(j, Pauli::Y), (k, Pauli::Y)])?;
            sum.push(-self.lambda1, &[(j, Pauli::Z), (k, Pauli::Z)])?;
        }
        for j in 0..l {
            let m = (j + 2) % l;
            for p in [Pauli::X, Pauli::Y, Pauli::Z] {
                sum.push(-self.lambda2, &[(j, p), (m, p)])?;
            }
        }
        for j in 0..l {
            sum.push(self.h, &[(j, Pauli::Z)])?;
        }
        Ok(sum)
    }
}

fn check_fields(sites: usize, fields: &[f64], width: f64) -> Result<()> {
    if fields.len() != sites {
        return Err(Error::FieldsLength {
            expected: sites,
            found: fields.len(),
        });
    }
    if !(width >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "disorder width must be >= 0, got {width}"
        )));
    }
    if let Some(h) = fields.iter().find(|h| !(h.abs() <= width)) {
        return Err(Error::InvalidParameter(format!(
            "field {h} outside [-{width}, {width}]"
        )));
    }
    Ok(())
}

impl HamiltonianSpecZ2 {
    pub fn new(sites: usize, gamma: f64, fields: Vec<f64>) -> Self {
        Self {
            sites,
            gamma,
            delta1: defaults::delta1(),
            fields,
            disorder: defaults::z2_disorder(),
        }
    }

    pub fn pauli_sum(&self) -> Result<PauliSum> {
        let space = HilbertSpace::new(self.sites)?;
        check_fields(self.sites, &self.fields, self.disorder)?;
        let l = self.sites;
        let mut sum = PauliSum::new(space);
        for j in 0..l {
            let k = (j + 1) % l;
            sum.push(-1.0, &[(j, Pauli::X), (k, Pauli::X)])?;
            sum.push(-self.delta1, &[(j, Pauli::Z), (k, Pauli::Z)])?;
            sum.push(-self.gamma, &[(j, Pauli::X)])?;
        }
        for (j, &h) in self.fields.iter().enumerate() {
            sum.push(-h, &[(j, Pauli::Z)])?;
        }
        Ok(sum)
    }
}

impl HamiltonianSpecU1Disordered {
    pub fn new(sites: usize, gamma: f64, fields: Vec<f64>) -> Self {
        Self {
            sites,
            gamma,
            mu: defaults::mu(),
            fields,
            disorder: defaults::u1_disorder(),
        }
    }

    pub fn pauli_sum(&self) -> Result<PauliSum> {
        let space = HilbertSpace::new(self.sites)?;
        check_fields(self.sites, &self.fields, self.disorder)?;
        let l = self.sites;
        let mut sum = PauliSum::new(space);
        for j in 0..l {
            let k = (j + 1) % l;
            sum.push(-1.0, &[(j, Pauli::X), (k, Pauli::X)])?;
            sum.push(-self.gamma, &[(j, Pauli::Y), (k, Pauli::Y)])?;
            sum.push(-self.mu, &[(j, Pauli::Z), (k, Pauli::Z)])?;
        }
        for (j, &h) in self.fields.iter().enumerate() {
            sum.push(-h, &[(j, Pauli::Z)])?;
        }
        Ok(sum)
    }
}

fn check_cap(sites: usize, cap: usize) -> Result<()> {
    if sites > cap {
        Err(Error::ExceedsCap { sites, cap })
    } else {
        Ok(())
    }
}

pub fn build_h_u1<T: Real>(spec: &HamiltonianSpecU1) -> Result<HermitianOperator<T>> {
    check_cap(spec.sites, DEFAULT_SITE_CAP)?;
    Ok(spec.pauli_sum()?.to_operator())
}

pub fn build_h_z2<T: Real>(spec: &HamiltonianSpecZ2) -> Result<HermitianOperator<T>> {
    check_cap(spec.sites, DEFAULT_SITE_CAP)?;
    Ok(spec.pauli_sum()?.to_operator())
}

pub fn build_h_u1_disordered<T: Real>(
    spec: &HamiltonianSpecU1Disordered,
) -> Result<HermitianOperator<T>> {
    check_cap(spec.sites, DEFAULT_SITE_CAP)?;
    Ok(spec.pauli_sum()?.to_operator())
}

/// One concrete Hamiltonian: model identity plus all parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ModelSpec {
    U1(HamiltonianSpecU1),
    Z2(HamiltonianSpecZ2),
    U1Disordered(HamiltonianSpecU1Disordered),
}

impl ModelSpec {
    pub fn sites(&self) -> usize {
        match self {
            ModelSpec::U1(s) => s.sites,
            ModelSpec::Z2(s) => s.sites,
            ModelSpec::U1Disordered(s) => s.sites,
        }
    }

    pub fn gamma(&self) -> f64 {
        match self {
            ModelSpec::U1(s) => s.gamma,
            ModelSpec::Z2(s) => s.gamma,
            ModelSpec::U1Disordered(s) => s.gamma,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::U1(_) => "u1",
            ModelSpec::Z2(_) => "z2",
            ModelSpec::U1Disordered(_) => "u1-disordered",
        }
    }

    /// Symmetry sectors used for `P_Q(t)`: parity for the Z2 model, charge
    /// otherwise.
    pub fn natural_sectors(&self) -> SectorKind {
        match self {
            ModelSpec::Z2(_) => SectorKind::Parity,
            _ => SectorKind::Charge,
        }
    }

    /// Matrix-free form, checked against `cap`.
    pub fn operator(&self, cap: usize) -> Result<PauliSum> {
        check_cap(self.sites(), cap)?;
        match self {
            ModelSpec::U1(s) => s.pauli_sum(),
            ModelSpec::Z2(s) => s.pauli_sum(),
            ModelSpec::U1Disordered(s) => s.pauli_sum(),
        }
    }

    pub fn build<T: Real>(&self, cap: usize) -> Result<HermitianOperator<T>> {
        Ok(self.operator(cap)?.to_operator())
    }
}

/// A model family with everything fixed except `L`, `γ` and the fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ModelFamily {
    U1 {
        #[serde(default = "defaults::lambda1")]
        lambda1: f64,
        #[serde(default = "defaults::lambda2")]
        lambda2: f64,
        #[serde(default = "defaults::h")]
        h: f64,
    },
    Z2 {
        #[serde(default = "defaults::delta1")]
        delta1: f64,
        #[serde(default = "defaults::z2_disorder")]
        disorder: f64,
    },
    U1Disordered {
        #[serde(default = "defaults::mu")]
        mu: f64,
        #[serde(default = "defaults::u1_disorder")]
        disorder: f64,
    },
}

impl ModelFamily {
    pub fn u1() -> Self {
        ModelFamily::U1 {
            lambda1: defaults::lambda1(),
            lambda2: defaults::lambda2(),
            h: defaults::h(),
        }
    }

    pub fn z2() -> Self {
        ModelFamily::Z2 {
            delta1: defaults::delta1(),
            disorder: defaults::z2_disorder(),
        }
    }

    pub fn u1_disordered() -> Self {
        ModelFamily::U1Disordered {
            mu: defaults::mu(),
            disorder: defaults::u1_disorder(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelFamily::U1 { .. } => "u1",
            ModelFamily::Z2 { .. } => "z2",
            ModelFamily::U1Disordered { .. } => "u1-disordered",
        }
    }

    pub fn disorder(&self) -> Option<f64> {
        match self {
            ModelFamily::U1 { .. } => None,
            ModelFamily::Z2 { disorder, .. } | ModelFamily::U1Disordered { disorder, .. } => {
                Some(*disorder)
            }
        }
    }

    /// Same family with the disorder width replaced; an error for `u1`.
    pub fn with_disorder(mut self, width: f64) -> Result<Self> {
        if !(width >= 0.0 && width.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "disorder width must be finite and >= 0, got {width}"
            )));
        }
        match &mut self {
            ModelFamily::U1 { .. } => {
                return Err(Error::InvalidParameter(
                    "the u1 model has no disorder".to_string(),
                ))
            }
            ModelFamily::Z2 { disorder, .. } | ModelFamily::U1Disordered { disorder, .. } => {
                *disorder = width
            }
        }
        Ok(self)
    }

    /// Concrete model; `fields` defaults to zeros for disordered families and
    /// is rejected for the clean one.
    pub fn spec(&self, sites: usize, gamma: f64, fields: Option<Vec<f64>>) -> Result<ModelSpec> {
        let zeros = || vec![0.0; sites];
        Ok(match *self {
            ModelFamily::U1 {
                lambda1,
                lambda2,
                h,
            } => {
                if fields.is_some() {
                    return Err(Error::InvalidParameter(
                        "the u1 model takes no random fields".to_string(),
                    ));
                }
                ModelSpec::U1(HamiltonianSpecU1 {
                    sites,
                    gamma,
                    lambda1,
                    lambda2,
                    h,
                })
            }
            ModelFamily::Z2 { delta1, disorder } => ModelSpec::Z2(HamiltonianSpecZ2 {
                sites,
                gamma,
                delta1,
                fields: fields.unwrap_or_else(zeros),
                disorder,
            }),
            ModelFamily::U1Disordered { mu, disorder } => {
                ModelSpec::U1Disordered(HamiltonianSpecU1Disordered {
                    sites,
                    gamma,
                    mu,
                    fields: fields.unwrap_or_else(zeros),
                    disorder,
                })
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{make_product_state, ProductState, SectorMap};

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn pauli_actions_on_single_site() {
        let space = HilbertSpace::new(2).unwrap();
        let zero = StateVector::<f64>::basis(space, 0).unwrap();
        let one = StateVector::<f64>::basis(space, 1).unwrap();

        let x = apply_pauli(&zero, 0, Pauli::X).unwrap();
        assert_eq!(x.amplitudes()[1], c(1.0, 0.0));
        let z = apply_pauli(&one, 0, Pauli::Z).unwrap();
        assert_eq!(z.amplitudes()[1], c(-1.0, 0.0));
        let y = apply_pauli(&zero, 0, Pauli::Y).unwrap();
        assert_eq!(y.amplitudes()[1], c(0.0, 1.0));
        let y1 = apply_pauli(&one, 0, Pauli::Y).unwrap();
        assert_eq!(y1.amplitudes()[0], c(0.0, -1.0));

        assert!(matches!(
            apply_pauli(&zero, 2, Pauli::X),
            Err(Error::SiteOutOfRange { .. })
        ));
    }

    #[test]
    fn yy_on_aligned_pair_is_real() {
        let s = PauliString::new(2, &[(0, Pauli::Y), (1, Pauli::Y)]).unwrap();
        // Y⊗Y |00⟩ = (i)(i)|11⟩ = −|11⟩ ; Y⊗Y |01⟩ = (−i)(i)|10⟩ = +|10⟩
        assert_eq!(s.act(0b00), (0b11, 2));
        assert_eq!(s.act(0b01), (0b10, 0));
    }

    fn diag_charge(space: HilbertSpace) -> Vec<f64> {
        SectorMap::charge(space)
            .labels()
            .iter()
            .map(|&q| q as f64)
            .collect()
    }

    fn diag_parity(space: HilbertSpace) -> Vec<f64> {
        SectorMap::parity(space)
            .labels()
            .iter()
            .map(|&q| q as f64)
            .collect()
    }

    #[test]
    fn u1_symmetric_limit_commutes_with_charge() {
        let h: HermitianOperator<f64> = build_h_u1(&HamiltonianSpecU1::new(4, 1.0)).unwrap();
        assert!(h.commutator_with_diagonal(&diag_charge(h.space())) <= 1e-12);
        let broken: HermitianOperator<f64> = build_h_u1(&HamiltonianSpecU1::new(4, 0.9)).unwrap();
        assert!(broken.commutator_with_diagonal(&diag_charge(h.space())) > 0.1);
    }

    #[test]
    fn u1_ferro_diagonal_element() {
        let h: HermitianOperator<f64> = build_h_u1(&HamiltonianSpecU1::new(4, 0.9)).unwrap();
        let expected = -4.0 * 0.2 - 4.0 * 0.32 + 4.0 * 1e-7;
        assert!((h.entry(0, 0).re - expected).abs() < 1e-14);
        assert!((expected - (-2.08 + 4e-7)).abs() < 1e-14);
    }

    #[test]
    fn z2_limits() {
        let fields = vec![0.3, -1.2, 2.0, 0.7, -0.1];
        let h: HermitianOperator<f64> =
            build_h_z2(&HamiltonianSpecZ2::new(5, 0.0, fields.clone())).unwrap();
        assert!(h.commutator_with_diagonal(&diag_parity(h.space())) <= 1e-12);
        let h: HermitianOperator<f64> =
            build_h_z2(&HamiltonianSpecZ2::new(4, 0.3, vec![0.0; 4])).unwrap();
        assert!((h.entry(0, 0).re - (-3.36)).abs() < 1e-14);
        assert!(h.commutator_with_diagonal(&diag_parity(h.space())) > 0.1);
        assert!(matches!(
            build_h_z2::<f64>(&HamiltonianSpecZ2::new(4, 0.3, vec![0.0; 3])),
            Err(Error::FieldsLength { .. })
        ));
    }

    #[test]
    fn disordered_limits() {
        let spec = HamiltonianSpecU1Disordered::new(4, 0.9, vec![0.1, -0.2, 0.3, -0.4]);
        let h: HermitianOperator<f64> = build_h_u1_disordered(&spec).unwrap();
        assert!((h.entry(0, 0).re - (-3.0)).abs() < 1e-14);
        let sym = HamiltonianSpecU1Disordered::new(5, 1.0, vec![4.1, -3.3, 0.2, 4.7, -2.2]);
        let h: HermitianOperator<f64> = build_h_u1_disordered(&sym).unwrap();
        assert!(h.commutator_with_diagonal(&diag_charge(h.space())) <= 1e-12);
        let bad = HamiltonianSpecU1Disordered::new(4, 0.9, vec![5.0, 0.0, 0.0, 0.0]);
        assert!(build_h_u1_disordered::<f64>(&bad).is_err());
    }

    #[test]
    fn builders_are_hermitian_and_traceless() {
        let ops: Vec<HermitianOperator<f64>> = vec![
            build_h_u1(&HamiltonianSpecU1::new(6, 0.3)).unwrap(),
            build_h_z2(&HamiltonianSpecZ2::new(6, 0.5, vec![1.0, -2.0, 0.5, 2.3, -0.7, 0.0]))
                .unwrap(),
            build_h_u1_disordered(&HamiltonianSpecU1Disordered::new(
                6,
                0.9,
                vec![4.0, -1.0, 0.5, 2.3, -4.7, 0.1],
            ))
            .unwrap(),
        ];
        for h in &ops {
            assert!(h.is_real());
            assert_eq!(h.hermiticity_defect(), 0.0);
            assert!(h.trace().abs() < 1e-10);
        }
    }

    #[test]
    fn cap_is_enforced() {
        assert!(matches!(
            build_h_u1::<f64>(&HamiltonianSpecU1::new(15, 0.9)),
            Err(Error::ExceedsCap { .. })
        ));
        let spec = ModelSpec::U1(HamiltonianSpecU1::new(8, 0.9));
        assert!(spec.operator(6).is_err());
        assert!(matches!(
            HamiltonianSpecU1::new(2, 0.9).pauli_sum(),
            Err(Error::InvalidSize { .. })
        ));
    }

    #[test]
    fn matrix_free_matches_dense() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for sites in [3usize, 5, 8] {
            let sums = [
                HamiltonianSpecU1::new(sites, 0.7).pauli_sum().unwrap(),
                HamiltonianSpecZ2::new(sites, 0.4, vec![0.5; sites])
                    .pauli_sum()
                    .unwrap(),
            ];
            for sum in &sums {
                let space = sum.space();
                let amps: Vec<_> = (0..space.dim())
                    .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                    .collect();
                let psi = StateVector::normalized(space, amps).unwrap();
                let dense: HermitianOperator<f64> = sum.to_operator();
                let a = sum.apply(&psi).unwrap();
                let b = dense.apply(&psi).unwrap();
                let err = a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
                assert!(err <= 1e-12, "L={sites}: {err}");
            }
        }
    }

    #[test]
    fn decoupled_blocks_follow_symmetry() {
        // γ = 1: charge sectors; γ ≠ 1: XX+γYY and NNN terms change Q by 0 or ±4,
        // so only parity survives.
        let sym = HamiltonianSpecU1::new(6, 1.0).pauli_sum().unwrap();
        let blocks = HermitianSource::<f64>::decoupled_blocks(&sym);
        assert_eq!(blocks.len(), 7);
        let broken = HamiltonianSpecU1::new(6, 0.9).pauli_sum().unwrap();
        let blocks = HermitianSource::<f64>::decoupled_blocks(&broken);
        assert_eq!(blocks.len(), 2);
        let dense: HermitianOperator<f64> = broken.to_operator();
        assert_eq!(HermitianSource::<f64>::decoupled_blocks(&dense), blocks);
        let z2 = HamiltonianSpecZ2::new(6, 0.2, vec![0.0; 6]).pauli_sum().unwrap();
        assert_eq!(HermitianSource::<f64>::decoupled_blocks(&z2).len(), 1);
    }

    #[test]
    fn complex_sum_materializes_imaginary_part() {
        let space = HilbertSpace::new(3).unwrap();
        let mut sum = PauliSum::new(space);
        sum.push(0.5, &[(1, Pauli::Y)]).unwrap();
        sum.push(-1.0, &[(0, Pauli::Z), (2, Pauli::Z)]).unwrap();
        assert!(!sum.is_real());
        let op: HermitianOperator<f64> = sum.to_operator();
        assert!(!op.is_real());
        assert_eq!(op.hermiticity_defect(), 0.0);
        let f = make_product_state::<f64>(ProductState::Ferro, 3).unwrap();
        let hv = op.apply(&f).unwrap();
        assert_eq!(hv[0b010], c(0.0, 0.5));
    }
}
