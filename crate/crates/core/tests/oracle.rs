//! Cholesky-path inference checked against explicit dense inverses.

use hdmr_gpr::data::Points;
use hdmr_gpr::{BaseKernel, Covariance, HdmrKernelSpec, KernelFamily, Regressor};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_points(rng: &mut ChaCha8Rng, m: usize, dim: usize) -> Points {
    Points::new(dim, (0..m * dim).map(|_| rng.random::<f64>()).collect()).unwrap()
}

struct Dense {
    kinv: DMatrix<f64>,
    f: DVector<f64>,
}

impl Dense {
    fn new<K: Covariance>(cov: &K, x: &Points, f: &[f64], delta: f64) -> Self {
        let m = x.len();
        let k = DMatrix::from_fn(m, m, |i, j| cov.cov(x.row(i), x.row(j)) + if i == j { delta } else { 0.0 });
        Self {
            kinv: k.try_inverse().expect("invertible"),
            f: DVector::from_column_slice(f),
        }
    }

    fn kstar<K: Covariance>(cov: &K, x: &Points, q: &[f64]) -> DVector<f64> {
        DVector::from_iterator(x.len(), x.rows().map(|r| cov.cov(q, r)))
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

#[test]
fn mean_and_variance_match_dense_inverse_for_all_families() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for family in KernelFamily::ALL {
        for &m in &[1usize, 7, 30] {
            let x = random_points(&mut rng, m, 3);
            let f: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let spec = HdmrKernelSpec::uniform(3, 2, BaseKernel::new(family, 0.6).unwrap()).unwrap();
            let delta = 1e-3;
            let dense = Dense::new(&spec, &x, &f, delta);
            let gp = Regressor::train(spec.clone(), x.clone(), f.clone(), delta).unwrap();
            for _ in 0..20 {
                let q: Vec<f64> = (0..3).map(|_| rng.random_range(-0.2..1.2)).collect();
                let ks = Dense::kstar(&spec, &x, &q);
                let mean = ks.dot(&(&dense.kinv * &dense.f));
                let var = spec.cov(&q, &q) - ks.dot(&(&dense.kinv * &ks));
                let p = gp.predict(&q).unwrap();
                assert!(close(p.mean, mean, 1e-10), "{family} M={m}: {} vs {mean}", p.mean);
                assert!(
                    (gp.predict_variance_unclamped(&q).unwrap() - var).abs() <= 1e-10,
                    "{family} M={m}: variance {} vs {var}",
                    p.variance
                );
            }
        }
    }
}

#[test]
fn log_marginal_likelihood_matches_determinant_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let m = 50;
    let x = random_points(&mut rng, m, 4);
    let f: Vec<f64> = x.rows().map(|r| (3.0 * r[0]).sin() + r[1] * r[3]).collect();
    for family in KernelFamily::ALL {
        let spec = HdmrKernelSpec::uniform(4, 2, BaseKernel::new(family, 0.8).unwrap()).unwrap();
        let delta = 1e-2;
        let kmat = DMatrix::from_fn(m, m, |i, j| spec.cov(x.row(i), x.row(j)) + if i == j { delta } else { 0.0 });
        let fv = DVector::from_column_slice(&f);
        let quad = fv.dot(&(kmat.clone().try_inverse().unwrap() * &fv));
        let logdet = kmat.lu().determinant().ln();
        let oracle = -0.5 * quad - 0.5 * logdet - 0.5 * m as f64 * (2.0 * std::f64::consts::PI).ln();
        let gp = Regressor::train(spec, x.clone(), f.clone(), delta).unwrap();
        let got = gp.log_marginal_likelihood();
        assert!((got - oracle).abs() <= 1e-9 * oracle.abs().max(1.0), "{family}: {got} vs {oracle}");
    }
}
