#![allow(dead_code)]

use dpkf::privacy::kappa;
use dpkf::{build_global, query_from_rows, AdjacencySpec, GlobalModel, IndividualModel, PrivacySpec};
use nalgebra::{dmatrix, DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand::SeedableRng;

/// Ten identical two-state participants observed directly; the query sums
/// the first state of each.
pub fn syndromic(horizon: usize) -> (GlobalModel, AdjacencySpec, PrivacySpec) {
    let a = dmatrix![-0.4, 0.5; 0.6, 0.75];
    let w = dmatrix![1.0, 0.2; 0.2, 2.0] * 0.15;
    let models = (0..10)
        .map(|i| {
            IndividualModel::constant(
                i,
                a.clone(),
                DMatrix::identity(2, 2),
                w.clone(),
                DMatrix::identity(2, 2) * 0.4,
                DVector::zeros(2),
                DMatrix::identity(2, 2),
                horizon,
            )
            .unwrap()
        })
        .collect();
    let l = query_from_rows(&vec![dmatrix![1.0, 0.0]; 10], &[2; 10]).unwrap();
    let model = build_global(models, vec![l; horizon + 1]).unwrap();
    let mut rho = vec![5.0, 5.0];
    rho.extend([10.0; 8]);
    let adj = AdjacencySpec::new(rho).unwrap();
    (model, adj, kappa(3f64.ln(), 0.01).unwrap())
}

/// Scalar model with `a`, `c`, `σ_w²`, `σ_v²` replicated `n` times and the
/// query summing all states.
pub fn scalar_sum(n: usize, a: f64, c: f64, sw2: f64, sv2: f64, horizon: usize) -> GlobalModel {
    let models = (0..n)
        .map(|i| {
            IndividualModel::constant(
                i,
                dmatrix![a],
                dmatrix![c],
                dmatrix![sw2],
                dmatrix![sv2],
                DVector::zeros(1),
                dmatrix![sw2],
                horizon,
            )
            .unwrap()
        })
        .collect();
    let l = DMatrix::from_element(1, n, 1.0);
    build_global(models, vec![l; horizon + 1]).unwrap()
}

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut impl Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal))
}

/// Random symmetric positive definite matrix with eigenvalues at least `floor`.
pub fn random_spd(rng: &mut impl Rng, n: usize, floor: f64) -> DMatrix<f64> {
    let g = gaussian_matrix(rng, n, n);
    &g * g.transpose() * 0.5 + DMatrix::identity(n, n) * floor
}

pub fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

/// A random time-invariant instance with up to 5 participants of state
/// dimension up to 2 and a dense query row.
pub struct RandomInstance {
    pub model: GlobalModel,
    pub adj: AdjacencySpec,
    pub privacy: PrivacySpec,
}

pub fn random_instance(rng: &mut impl Rng, horizon: usize) -> RandomInstance {
    let n = rng.random_range(1..=5);
    let mut models = Vec::new();
    let mut rows = Vec::new();
    let mut dims = Vec::new();
    for i in 0..n {
        let m = rng.random_range(1..=2);
        let p = rng.random_range(1..=2);
        let mut a = gaussian_matrix(rng, m, m);
        let radius = a.clone().complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
        let target = rng.random_range(0.3..1.1);
        if radius > 0.0 {
            a *= target / radius;
        }
        let c = gaussian_matrix(rng, p, m);
        models.push(
            IndividualModel::constant(
                i,
                a,
                c,
                random_spd(rng, m, 0.1),
                random_spd(rng, p, 0.1),
                DVector::zeros(m),
                random_spd(rng, m, 0.5),
                horizon,
            )
            .unwrap(),
        );
        rows.push(DMatrix::from_fn(1, m, |_, _| rng.random_range(0.5..1.5)));
        dims.push(m);
    }
    let l = query_from_rows(&rows, &dims).unwrap();
    let model = build_global(models, vec![l; horizon + 1]).unwrap();
    let adj = AdjacencySpec::new((0..n).map(|_| log_uniform(rng, 0.5, 3.0)).collect()).unwrap();
    let privacy = kappa(log_uniform(rng, 0.3, 2.0), log_uniform(rng, 0.005, 0.1)).unwrap();
    RandomInstance { model, adj, privacy }
}
