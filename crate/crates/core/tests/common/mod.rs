//! Test-only reference implementations. Hamiltonians are written out as dense
//! real matrices straight from bit arithmetic and diagonalized with nalgebra,
//! sharing no code with the library's Pauli-string and faer paths.
#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};

#[derive(Debug, Clone, Copy)]
pub enum Family {
    U1,
    Z2,
    U1Disordered,
}

fn z(state: usize, site: usize) -> f64 {
    if state >> site & 1 == 0 { 1.0 } else { -1.0 }
}

/// Dense matrix with default couplings; `fields` are the random `h_j`.
pub fn dense(family: Family, sites: usize, gamma: f64, fields: &[f64]) -> DMatrix<f64> {
    let dim = 1usize << sites;
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    for s in 0..dim {
        for j in 0..sites {
            let k = (j + 1) % sites;
            let flip = s ^ (1 << j) ^ (1 << k);
            let zz = z(s, j) * z(s, k);
            match family {
                Family::U1 | Family::U1Disordered => {
                    // XX, then YY = −zz on the flipped pair
                    h[(flip, s)] += -1.0;
                    h[(flip, s)] += -gamma * -zz;
                    let nn = if matches!(family, Family::U1) { 0.2 } else { 0.8 };
                    h[(s, s)] += -nn * zz;
                }
                Family::Z2 => {
                    h[(flip, s)] += -1.0;
                    h[(s, s)] += -0.84 * zz;
                    h[(s ^ (1 << j), s)] += -gamma;
                }
            }
        }
        match family {
            Family::U1 => {
                for j in 0..sites {
                    let m = (j + 2) % sites;
                    let flip = s ^ (1 << j) ^ (1 << m);
                    let zz = z(s, j) * z(s, m);
                    h[(flip, s)] += -0.32 * (1.0 - zz);
                    h[(s, s)] += -0.32 * zz;
                    h[(s, s)] += 1e-7 * z(s, j);
                }
            }
            Family::Z2 | Family::U1Disordered => {
                for (j, hj) in fields.iter().enumerate() {
                    h[(s, s)] += -hj * z(s, j);
                }
            }
        }
    }
    h
}

/// Eigenpairs as `(energy, full-length real eigenvector)`, ascending.
pub fn eigen(h: &DMatrix<f64>, sites: usize, parity_blocks: bool) -> Vec<(f64, Vec<f64>)> {
    let dim = h.nrows();
    let groups: Vec<Vec<usize>> = if parity_blocks {
        let mut g = vec![Vec::new(), Vec::new()];
        for s in 0..dim {
            g[(s.count_ones() % 2) as usize].push(s);
        }
        g
    } else {
        vec![(0..dim).collect()]
    };
    let _ = sites;
    let mut out = Vec::with_capacity(dim);
    for g in groups {
        let n = g.len();
        let block = DMatrix::from_fn(n, n, |r, c| h[(g[r], g[c])]);
        let e = SymmetricEigen::new(block);
        for k in 0..n {
            let mut v = vec![0.0; dim];
            for (r, &s) in g.iter().enumerate() {
                v[s] = e.eigenvectors[(r, k)];
            }
            out.push((e.eigenvalues[k], v));
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Fewest largest weights reaching `threshold`.
pub fn n_of(weights: &[f64], threshold: f64) -> usize {
    let mut w = weights.to_vec();
    w.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    for (k, x) in w.iter().enumerate() {
        acc += x;
        if acc >= threshold - 1e-12 {
            return k + 1;
        }
    }
    w.len()
}

/// `|⟨E_n|s⟩|²` for a basis state `s`.
pub fn basis_weights(eig: &[(f64, Vec<f64>)], s: usize) -> Vec<f64> {
    eig.iter().map(|(_, v)| v[s] * v[s]).collect()
}

pub mod props;

use nalgebra::Complex;

/// Amplitudes of `e^{−iHt}|s0⟩` at each time, one column per time.
pub fn evolve_basis(
    eig: &[(f64, Vec<f64>)],
    s0: usize,
    times: &[f64],
) -> (DMatrix<f64>, DMatrix<f64>) {
    let dim = eig.len();
    let v = DMatrix::from_fn(dim, dim, |s, n| eig[n].1[s]);
    let c: Vec<f64> = eig.iter().map(|(_, vec)| vec[s0]).collect();
    let cos = DMatrix::from_fn(dim, times.len(), |n, k| c[n] * (eig[n].0 * times[k]).cos());
    let sin = DMatrix::from_fn(dim, times.len(), |n, k| -c[n] * (eig[n].0 * times[k]).sin());
    (&v * cos, &v * sin)
}

pub fn charge(s: usize, sites: usize) -> i32 {
    sites as i32 - 2 * s.count_ones() as i32
}

/// `P_Q` per time column.
pub fn sector_populations(
    re: &DMatrix<f64>,
    im: &DMatrix<f64>,
    sites: usize,
) -> Vec<std::collections::BTreeMap<i32, f64>> {
    (0..re.ncols())
        .map(|k| {
            let mut p = std::collections::BTreeMap::new();
            for s in 0..re.nrows() {
                *p.entry(charge(s, sites)).or_insert(0.0) += re[(s, k)].powi(2) + im[(s, k)].powi(2);
            }
            p
        })
        .collect()
}

/// Half-chain entropy (sites `0..L/2` against the rest) per time column.
pub fn half_entropy(re: &DMatrix<f64>, im: &DMatrix<f64>, sites: usize) -> Vec<f64> {
    let half = 1usize << (sites / 2);
    let rest = re.nrows() / half;
    (0..re.ncols())
        .map(|k| {
            let m = DMatrix::from_fn(half, rest, |a, b| {
                let s = a + b * half;
                Complex::new(re[(s, k)], im[(s, k)])
            });
            m.singular_values()
                .iter()
                .map(|x| x * x)
                .filter(|&p| p > 1e-300)
                .map(|p| -p * p.ln())
                .sum()
        })
        .collect()
}

/// `0, 0.1, …, 50`.
pub fn standard_times() -> Vec<f64> {
    (0..=500).map(|k| k as f64 * 0.1).collect()
}

pub fn late(xs: &[f64]) -> f64 {
    let w = &xs[xs.len() / 2..];
    w.iter().sum::<f64>() / w.len() as f64
}

/// Energy gap below which two eigenvalues count as one level.
pub const LEVEL_TOL: f64 = 1e-9;

/// `N` over energy levels rather than eigenvectors: weights inside an exactly
/// degenerate level are pooled, which removes the dependence on how a solver
/// picks a basis of that level. `energies` must be ascending.
pub fn level_n(energies: &[f64], weights: &[f64], threshold: f64) -> usize {
    let mut pooled: Vec<f64> = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for (&e, &w) in energies.iter().zip(weights) {
        if e - last <= LEVEL_TOL {
            *pooled.last_mut().unwrap() += w;
        } else {
            pooled.push(w);
        }
        last = e;
    }
    n_of(&pooled, threshold)
}

/// `|⟨s0|e^{−iHt}|s0⟩|²` per time, from the parity block holding `s0`.
pub fn survival(h: &DMatrix<f64>, s0: usize, times: &[f64]) -> Vec<f64> {
    let parity = s0.count_ones() % 2;
    let basis: Vec<usize> = (0..h.nrows()).filter(|s| s.count_ones() % 2 == parity).collect();
    let n = basis.len();
    let block = DMatrix::from_fn(n, n, |r, c| h[(basis[r], basis[c])]);
    let e = SymmetricEigen::new(block);
    let row = basis.iter().position(|&s| s == s0).unwrap();
    let w: Vec<f64> = (0..n).map(|k| e.eigenvectors[(row, k)].powi(2)).collect();
    times
        .iter()
        .map(|&t| {
            let (mut re, mut im) = (0.0, 0.0);
            for (k, wk) in w.iter().enumerate() {
                let phase = e.eigenvalues[k] * t;
                re += wk * phase.cos();
                im -= wk * phase.sin();
            }
            re * re + im * im
        })
        .collect()
}
