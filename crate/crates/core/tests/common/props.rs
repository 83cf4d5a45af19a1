//! Invariant checks shared by the property tests and the acceptance run.
//! Each returns the worst deviation it saw.

use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use hsi_core::bounds::{hsi_decompose, verify_loose_bound, Observable};
use hsi_core::circuit::{gradient, overlap_objective, Ansatz, TargetSubspace};
use hsi_core::dynamics::{evolve, quench_series, QuenchSeries, TimeGrid};
use hsi_core::ensemble::{run_ensemble_with, EnsembleConfig, RunOptions};
use hsi_core::hamiltonian::{
    build_h_u1, build_h_u1_disordered, build_h_z2, HamiltonianSpecU1, HamiltonianSpecU1Disordered,
    HamiltonianSpecZ2,
};
use hsi_core::hilbert::{charge_of, parity_of, StateVector};
use hsi_core::spectra::{diagonalize, SpectralData};
use hsi_core::{HermitianOperatorF64, HilbertSpace, ModelFamily, Pauli, ProductState};

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn random_state(space: HilbertSpace, rng: &mut impl Rng) -> StateVector<f64> {
    let amps = (0..space.dim())
        .map(|_| Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    StateVector::normalized(space, amps).unwrap()
}

fn random_fields(sites: usize, width: f64, rng: &mut impl Rng) -> Vec<f64> {
    (0..sites).map(|_| rng.random_range(-width..=width)).collect()
}

fn spectrum_u1(sites: usize, gamma: f64) -> SpectralData<f64> {
    diagonalize(&HamiltonianSpecU1::new(sites, gamma).pauli_sum().unwrap()).unwrap()
}

/// Worst `|‖ψ(t)‖ − 1|` and `|Σ_Q P_Q − 1|` over quenches of every
/// reference state at `L = 8`.
pub fn norm_and_population_sum() -> (f64, f64) {
    let grid = TimeGrid::<f64>::standard();
    let mut norm: f64 = 0.0;
    let mut total: f64 = 0.0;
    for (family, gamma) in [(ModelFamily::u1(), 0.7), (ModelFamily::u1(), 1.0)] {
        let model = family.spec(8, gamma, None).unwrap();
        for kind in [ProductState::Ferro, ProductState::AntiFerro, ProductState::FlipOne] {
            let s: QuenchSeries<f64> = quench_series(&model, kind, &grid).unwrap();
            norm = norm.max(s.max_norm_deviation());
            for row in &s.pq {
                total = total.max((row.iter().sum::<f64>() - 1.0).abs());
            }
        }
    }
    (norm, total)
}

fn builders(seed: u64) -> Vec<HermitianOperatorF64> {
    let mut r = rng(seed);
    let f1 = random_fields(6, 2.4, &mut r);
    let f2 = random_fields(6, 4.8, &mut r);
    vec![
        build_h_u1(&HamiltonianSpecU1::new(6, r.random_range(0.0..1.0))).unwrap(),
        build_h_z2(&HamiltonianSpecZ2::new(6, r.random_range(0.0..1.0), f1)).unwrap(),
        build_h_u1_disordered(&HamiltonianSpecU1Disordered::new(6, r.random_range(0.0..1.0), f2))
            .unwrap(),
    ]
}

pub fn hermiticity(seeds: std::ops::Range<u64>) -> f64 {
    seeds
        .flat_map(builders)
        .map(|h| h.hermiticity_defect())
        .fold(0.0, f64::max)
}

/// `[H_U1(γ=1), Q]`, `[H_Z2(γ=0), parity]` and `[H_dis(γ=1), Q]`.
pub fn symmetric_commutators(seed: u64) -> f64 {
    let mut r = rng(seed);
    let space = HilbertSpace::new(6).unwrap();
    let q: Vec<f64> = (0..64).map(|i| charge_of(i, space).unwrap() as f64).collect();
    let p: Vec<f64> = (0..64).map(|i| parity_of(i, space).unwrap() as f64).collect();
    let u1: HermitianOperatorF64 = build_h_u1(&HamiltonianSpecU1::new(6, 1.0)).unwrap();
    let z2: HermitianOperatorF64 =
        build_h_z2(&HamiltonianSpecZ2::new(6, 0.0, random_fields(6, 2.4, &mut r))).unwrap();
    let dis: HermitianOperatorF64 = build_h_u1_disordered(&HamiltonianSpecU1Disordered::new(
        6,
        1.0,
        random_fields(6, 4.8, &mut r),
    ))
    .unwrap();
    u1.commutator_with_diagonal(&q)
        .max(z2.commutator_with_diagonal(&p))
        .max(dis.commutator_with_diagonal(&q))
}

/// Spectral evolution against `exp(−iHt)` from nalgebra's Padé
/// scaling-and-squaring, on a random `H_U1` and random state.
pub fn evolve_vs_matrix_exponential(sites: usize, t: f64, seed: u64) -> f64 {
    let mut r = rng(seed);
    let gamma = r.random_range(0.0..1.0);
    let op: HermitianOperatorF64 = build_h_u1(&HamiltonianSpecU1::new(sites, gamma)).unwrap();
    let spec: SpectralData<f64> = diagonalize(&op).unwrap();
    let psi = random_state(spec.space(), &mut r);
    let dim = op.dim();
    let gen = DMatrix::from_fn(dim, dim, |i, j| {
        let h = op.entry(i, j);
        Complex::new(h.im * t, -h.re * t)
    });
    let u = gen.exp();
    let v = DVector::from_iterator(dim, psi.amplitudes().iter().map(|a| Complex::new(a.re, a.im)));
    let expected = u * v;
    let coeffs = spec.coefficients(&psi).unwrap();
    let got = evolve(&spec, &coeffs, t).unwrap();
    got.amplitudes()
        .iter()
        .zip(expected.iter())
        .map(|(a, b)| ((a.re - b.re).powi(2) + (a.im - b.im).powi(2)).sqrt())
        .fold(0.0, f64::max)
}

/// Worst relative gap between shift-rule and central-difference gradients.
pub fn shift_vs_finite_difference(instances: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..instances {
        let mut r = rng(1000 + seed);
        let sites = r.random_range(2..=4);
        let ansatz = Ansatz::new(sites, r.random_range(1..=2)).unwrap();
        let space = HilbertSpace::new(sites).unwrap();
        let input = random_state(space, &mut r);
        let spec = spectrum_u1(sites.max(3), r.random_range(0.0..1.0));
        let target = if sites >= 3 {
            let k = r.random_range(1..spec.len());
            TargetSubspace::new((0..k).map(|n| spec.eigenvector(n)).collect(), "low").unwrap()
        } else {
            TargetSubspace::new(vec![random_state(space, &mut r)], "random").unwrap()
        };
        let theta: Vec<f64> = (0..ansatz.parameter_count())
            .map(|_| r.random_range(-3.0..3.0))
            .collect();
        let g = gradient(&theta, &ansatz, &input, &target).unwrap();
        let h = 1e-5;
        for (k, gk) in g.iter().enumerate() {
            let mut plus = theta.clone();
            let mut minus = theta.clone();
            plus[k] += h;
            minus[k] -= h;
            let fd = (overlap_objective(&plus, &ansatz, &input, &target).unwrap()
                - overlap_objective(&minus, &ansatz, &input, &target).unwrap())
                / (2.0 * h);
            let scale = gk.abs().max(fd.abs()).max(1e-3);
            worst = worst.max((gk - fd).abs() / scale);
        }
    }
    worst
}

/// A random run of consecutive eigenvectors.
fn random_target(spec: &SpectralData<f64>, r: &mut impl Rng) -> TargetSubspace<f64> {
    let dim = spec.len();
    let start = r.random_range(0..dim - 1);
    let k = r.random_range(1..=(dim - start).min(24));
    TargetSubspace::new(
        (start..start + k).map(|n| spec.eigenvector(n)).collect(),
        "random run",
    )
    .unwrap()
}

/// Smallest loose-bound margin over random `L = 8` instances.
pub fn loose_bound_margins(instances: u64) -> f64 {
    let grid = TimeGrid::<f64>::linear(0.0, 20.0, 41).unwrap();
    let mut worst = f64::INFINITY;
    for seed in 0..instances {
        let mut r = rng(2000 + seed);
        let spec = spectrum_u1(8, r.random_range(0.0..1.0));
        let target = random_target(&spec, &mut r);
        let psi = random_state(spec.space(), &mut r);
        let axis = [Pauli::X, Pauli::Y, Pauli::Z][r.random_range(0..3)];
        let obs = Observable::single_site(8, r.random_range(0..8), axis).unwrap();
        let d = hsi_decompose(&psi, &target).unwrap();
        let report = verify_loose_bound(&d, &spec, &obs, &grid).unwrap();
        worst = worst.min(report.min_margin);
    }
    worst
}

/// Worst `‖reconstruct − ψ‖_∞` over random instances with `L ≤ 10`.
pub fn reconstruction(instances: u64) -> f64 {
    let mut worst: f64 = 0.0;
    let spectra: Vec<SpectralData<f64>> = [4, 6, 8, 10].iter().map(|&l| spectrum_u1(l, 0.6)).collect();
    for seed in 0..instances {
        let mut r = rng(3000 + seed);
        let spec = &spectra[r.random_range(0..spectra.len())];
        let target = random_target(spec, &mut r);
        let psi = random_state(spec.space(), &mut r);
        let d = hsi_decompose(&psi, &target).unwrap();
        let back = d.reconstruct();
        let err = back
            .iter()
            .zip(psi.amplitudes())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        worst = worst.max(err);
    }
    worst
}

/// `|nonthermal + thermal + cross − ⟨Ô⟩|` at `L = 6`.
pub fn three_term_identity(instances: u64) -> f64 {
    let grid = TimeGrid::<f64>::linear(0.0, 30.0, 61).unwrap();
    let mut worst: f64 = 0.0;
    for seed in 0..instances {
        let mut r = rng(4000 + seed);
        let spec = spectrum_u1(6, r.random_range(0.0..1.0));
        let target = random_target(&spec, &mut r);
        let psi = random_state(spec.space(), &mut r);
        let obs = Observable::single_site(6, r.random_range(0..6), Pauli::Z).unwrap();
        let d = hsi_decompose(&psi, &target).unwrap();
        let report = verify_loose_bound(&d, &spec, &obs, &grid).unwrap();
        for t in &report.terms {
            worst = worst.max((t.sum() - t.exact).abs());
        }
    }
    worst
}

/// Serialized ensemble results for 1 and 3 workers, which must match byte
/// for byte.
pub fn ensemble_across_workers() -> (String, String) {
    let mut cfg = EnsembleConfig::new(ModelFamily::u1_disordered(), 6, 0.9, 7);
    cfg.realizations = 6;
    let run = |workers| {
        let r = run_ensemble_with(
            &cfg,
            ProductState::Ferro,
            &RunOptions {
                workers,
                checkpoint_dir: None,
            },
        )
        .unwrap();
        serde_json::to_string(&r).unwrap()
    };
    (run(1), run(3))
}
