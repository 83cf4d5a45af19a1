//! Computational-basis conventions for a chain of `L` spin-1/2 sites.
//!
//! Basis index `i` encodes a bitstring with site 0 in the least-significant
//! bit. Bit 0 is spin-up (σ^z = +1), bit 1 is spin-down (σ^z = −1), so the
//! all-zeros state carries charge Q = +L.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{czero, KahanSum, Real};

/// Index arithmetic is done in `usize`; beyond this the dense pipeline is
/// hopeless anyway.
pub const MAX_SITES: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HilbertSpace {
    sites: usize,
}

impl HilbertSpace {
    pub fn new(sites: usize) -> Result<Self> {
        if sites < 2 {
            return Err(Error::InvalidSize {
                sites,
                reason: "at least two sites are required",
            });
        }
        if sites > MAX_SITES {
            return Err(Error::ExceedsCap {
                sites,
                cap: MAX_SITES,
            });
        }
        Ok(Self { sites })
    }

    #[inline]
    pub fn sites(&self) -> usize {
        self.sites
    }

    #[inline]
    pub fn dim(&self) -> usize {
        1usize << self.sites
    }

    #[inline]
    pub fn check_index(&self, index: usize) -> Result<()> {
        if index < self.dim() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index,
                dim: self.dim(),
            })
        }
    }

    #[inline]
    pub fn check_site(&self, site: usize) -> Result<()> {
        if site < self.sites {
            Ok(())
        } else {
            Err(Error::SiteOutOfRange {
                site,
                sites: self.sites,
            })
        }
    }
}

/// Total σ^z of a basis state: `L − 2·popcount(index)`.
pub fn charge_of(index: usize, space: HilbertSpace) -> Result<i32> {
    space.check_index(index)?;
    Ok(charge_unchecked(index, space.sites()))
}

/// Eigenvalue of the product of all σ^z: `(−1)^popcount(index)`.
pub fn parity_of(index: usize, space: HilbertSpace) -> Result<i32> {
    space.check_index(index)?;
    Ok(parity_unchecked(index))
}

#[inline]
pub(crate) fn charge_unchecked(index: usize, sites: usize) -> i32 {
    sites as i32 - 2 * index.count_ones() as i32
}

#[inline]
pub(crate) fn parity_unchecked(index: usize) -> i32 {
    if index.count_ones() % 2 == 0 {
        1
    } else {
        -1
    }
}

/// A normalized pure state in the full `2^L` computational basis.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector<T: Real = f64> {
    space: HilbertSpace,
    amplitudes: Vec<Complex<T>>,
}

impl<T: Real> StateVector<T> {
    /// Wraps amplitudes that must already have unit norm (to 1e-10).
    pub fn from_amplitudes(space: HilbertSpace, amplitudes: Vec<Complex<T>>) -> Result<Self> {
        if amplitudes.len() != space.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                found: amplitudes.len(),
            });
        }
        let state = Self { space, amplitudes };
        let norm = state.norm();
        if (norm - T::one()).abs() > T::tolerance(1e-10) {
            return Err(Error::NotNormalized {
                norm: norm.to_f64_lossy(),
            });
        }
        Ok(state)
    }

    /// Rescales arbitrary nonzero amplitudes to unit norm.
    pub fn normalized(space: HilbertSpace, mut amplitudes: Vec<Complex<T>>) -> Result<Self> {
        if amplitudes.len() != space.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                found: amplitudes.len(),
            });
        }
        let norm = norm_of(&amplitudes);
        if norm <= T::min_positive_value() {
            return Err(Error::NotNormalized { norm: 0.0 });
        }
        let inv = norm.recip();
        for a in &mut amplitudes {
            *a = a.scale(inv);
        }
        Ok(Self { space, amplitudes })
    }

    pub fn basis(space: HilbertSpace, index: usize) -> Result<Self> {
        space.check_index(index)?;
        let mut amplitudes = vec![czero::<T>(); space.dim()];
        amplitudes[index] = Complex::new(T::one(), T::zero());
        Ok(Self { space, amplitudes })
    }

    /// Internal constructor for results of unitary maps; no norm check.
    pub(crate) fn from_raw(space: HilbertSpace, amplitudes: Vec<Complex<T>>) -> Self {
        debug_assert_eq!(amplitudes.len(), space.dim());
        Self { space, amplitudes }
    }

    #[inline]
    pub fn space(&self) -> HilbertSpace {
        self.space
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    #[inline]
    pub fn amplitudes(&self) -> &[Complex<T>] {
        &self.amplitudes
    }

    #[inline]
    pub(crate) fn amplitudes_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex<T>> {
        self.amplitudes
    }

    pub fn norm(&self) -> T {
        norm_of(&self.amplitudes)
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Self) -> Result<Complex<T>> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(inner_product(&self.amplitudes, &other.amplitudes))
    }

    /// Multiplies every amplitude by the same unit phase.
    pub fn with_global_phase(mut self, phase: Complex<T>) -> Self {
        for a in &mut self.amplitudes {
            *a = *a * phase;
        }
        self
    }

    /// Index of the single nonzero amplitude, if this is a basis state.
    pub fn basis_index(&self) -> Option<usize> {
        let mut found = None;
        for (i, a) in self.amplitudes.iter().enumerate() {
            if a.norm_sqr() > T::zero() {
                if found.is_some() {
                    return None;
                }
                found = Some(i);
            }
        }
        found
    }
}

pub(crate) fn norm_of<T: Real>(amps: &[Complex<T>]) -> T {
    amps.iter()
        .map(|a| a.norm_sqr())
        .collect::<KahanSum<T>>()
        .value()
        .sqrt()
}

pub(crate) fn inner_product<T: Real>(bra: &[Complex<T>], ket: &[Complex<T>]) -> Complex<T> {
    let mut re = KahanSum::new();
    let mut im = KahanSum::new();
    for (b, k) in bra.iter().zip(ket) {
        let p = b.conj() * k;
        re.add(p.re);
        im.add(p.im);
    }
    Complex::new(re.value(), im.value())
}

/// Initial product states used throughout the quench experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProductState {
    /// All spins up, `|00…0⟩`.
    #[serde(rename = "F")]
    Ferro,
    /// `|0101…⟩`: spin-up on even sites.
    #[serde(rename = "AF")]
    AntiFerro,
    /// Ferromagnet with site `L/2` flipped down.
    #[serde(rename = "FlipOne")]
    FlipOne,
}

impl ProductState {
    pub fn basis_index(self, sites: usize) -> usize {
        match self {
            ProductState::Ferro => 0,
            ProductState::AntiFerro => (0..sites).filter(|s| s % 2 == 1).map(|s| 1 << s).sum(),
            ProductState::FlipOne => 1 << (sites / 2),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ProductState::Ferro => "F",
            ProductState::AntiFerro => "AF",
            ProductState::FlipOne => "FlipOne",
        }
    }
}

impl fmt::Display for ProductState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ProductState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "f" | "ferro" | "ferromagnetic" => Ok(ProductState::Ferro),
            "af" | "antiferro" | "antiferromagnetic" => Ok(ProductState::AntiFerro),
            "flipone" | "flip-one" | "flip_one" => Ok(ProductState::FlipOne),
            _ => Err(Error::UnknownStateKind(s.to_string())),
        }
    }
}

pub fn make_product_state<T: Real>(kind: ProductState, sites: usize) -> Result<StateVector<T>> {
    let space = HilbertSpace::new(sites)?;
    StateVector::basis(space, kind.basis_index(sites))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SectorKind {
    /// U(1) charge `Q = Σ σ^z`.
    Charge,
    /// Z2 parity `Π σ^z`.
    Parity,
}

/// Labels every basis state with its symmetry sector and groups indices per
/// sector. `ChargeMap` and `ParityMap` are the two instances.
#[derive(Debug, Clone)]
pub struct SectorMap {
    kind: SectorKind,
    space: HilbertSpace,
    labels: Vec<i32>,
    sectors: BTreeMap<i32, Vec<usize>>,
}

pub type ChargeMap = SectorMap;
pub type ParityMap = SectorMap;

impl SectorMap {
    pub fn charge(space: HilbertSpace) -> Self {
        Self::build(SectorKind::Charge, space)
    }

    pub fn parity(space: HilbertSpace) -> Self {
        Self::build(SectorKind::Parity, space)
    }

    pub fn new(kind: SectorKind, space: HilbertSpace) -> Self {
        Self::build(kind, space)
    }

    fn build(kind: SectorKind, space: HilbertSpace) -> Self {
        let labels: Vec<i32> = (0..space.dim())
            .map(|i| match kind {
                SectorKind::Charge => charge_unchecked(i, space.sites()),
                SectorKind::Parity => parity_unchecked(i),
            })
            .collect();
        let mut sectors: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
        for (i, &q) in labels.iter().enumerate() {
            sectors.entry(q).or_default().push(i);
        }
        Self {
            kind,
            space,
            labels,
            sectors,
        }
    }

    pub fn kind(&self) -> SectorKind {
        self.kind
    }

    pub fn space(&self) -> HilbertSpace {
        self.space
    }

    #[inline]
    pub fn label(&self, index: usize) -> i32 {
        self.labels[index]
    }

    pub fn labels(&self) -> &[i32] {
        &self.labels
    }

    /// Sector label → ascending basis indices.
    pub fn sectors(&self) -> &BTreeMap<i32, Vec<usize>> {
        &self.sectors
    }

    pub fn sector_size(&self, label: i32) -> usize {
        self.sectors.get(&label).map_or(0, Vec::len)
    }

    /// Sector labels in descending order (Q = L first).
    pub fn sector_labels(&self) -> Vec<i32> {
        self.sectors.keys().rev().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn binomial(n: usize, k: usize) -> usize {
        (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn product_state_indices() {
        let f = make_product_state::<f64>(ProductState::Ferro, 4).unwrap();
        assert_eq!(f.basis_index(), Some(0));
        let af = make_product_state::<f64>(ProductState::AntiFerro, 4).unwrap();
        // sites 1 and 3 down: bits 0b1010, reading site 0 first gives 0101
        assert_eq!(af.basis_index(), Some(0b1010));
        let flip = make_product_state::<f64>(ProductState::FlipOne, 12).unwrap();
        assert_eq!(flip.basis_index(), Some(1 << 6));
        assert_eq!(charge_of(1 << 6, flip.space()).unwrap(), 10);
    }

    #[test]
    fn charges_and_parities_of_reference_states() {
        let space = HilbertSpace::new(12).unwrap();
        let f = ProductState::Ferro.basis_index(12);
        let af = ProductState::AntiFerro.basis_index(12);
        let one = ProductState::FlipOne.basis_index(12);
        assert_eq!(charge_of(f, space).unwrap(), 12);
        assert_eq!(charge_of(af, space).unwrap(), 0);
        assert_eq!(charge_of(one, space).unwrap(), 10);
        assert_eq!(parity_of(f, space).unwrap(), 1);
        assert_eq!(parity_of(one, space).unwrap(), -1);
        assert_eq!(parity_of(af, space).unwrap(), 1);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            make_product_state::<f64>(ProductState::Ferro, 1),
            Err(Error::InvalidSize { .. })
        ));
        assert!(matches!(
            "Neel".parse::<ProductState>(),
            Err(Error::UnknownStateKind(_))
        ));
        let space = HilbertSpace::new(3).unwrap();
        assert!(charge_of(8, space).is_err());
        assert!(parity_of(8, space).is_err());
    }

    #[test]
    fn sector_sizes_are_binomial() {
        for sites in 2..=14 {
            let space = HilbertSpace::new(sites).unwrap();
            let map = SectorMap::charge(space);
            let total: usize = map.sectors().values().map(Vec::len).sum();
            assert_eq!(total, space.dim());
            for (&q, idx) in map.sectors() {
                let downs = (sites as i32 - q) / 2;
                assert_eq!(idx.len(), binomial(sites, downs as usize));
            }
            let parity = SectorMap::parity(space);
            assert_eq!(parity.sector_size(1), space.dim() / 2);
            assert_eq!(parity.sector_size(-1), space.dim() / 2);
        }
    }

    #[test]
    fn from_amplitudes_checks_norm() {
        let space = HilbertSpace::new(2).unwrap();
        let amps = vec![Complex::new(1.0, 0.0); 4];
        assert!(StateVector::<f64>::from_amplitudes(space, amps.clone()).is_err());
        let s = StateVector::<f64>::normalized(space, amps).unwrap();
        assert!((s.norm() - 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn charge_parity_consistent(sites in 2usize..=14, raw in any::<u64>()) {
            let space = HilbertSpace::new(sites).unwrap();
            let index = (raw as usize) % space.dim();
            let q = charge_of(index, space).unwrap();
            let p = parity_of(index, space).unwrap();
            let downs = (sites as i32 - q) / 2;
            prop_assert_eq!(p, if downs % 2 == 0 { 1 } else { -1 });
            prop_assert!(q >= -(sites as i32) && q <= sites as i32);
        }

        #[test]
        fn product_states_are_unit_basis_vectors(sites in 2usize..=12, k in 0usize..3) {
            let kind = [ProductState::Ferro, ProductState::AntiFerro, ProductState::FlipOne][k];
            let s = make_product_state::<f64>(kind, sites).unwrap();
            let nonzero: Vec<_> = s.amplitudes().iter().filter(|a| a.norm_sqr() > 0.0).collect();
            prop_assert_eq!(nonzero.len(), 1);
            prop_assert_eq!(*nonzero[0], Complex::new(1.0, 0.0));
        }
    }
}
