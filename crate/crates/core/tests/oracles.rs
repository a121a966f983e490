//! Library results checked against independent implementations.

#![allow(clippy::needless_range_loop, clippy::excessive_precision)]

use binagg::aggregation::{assign_bins, sensitivity_vector};
use binagg::gdp::{self, GdpBudget, RandomSource};
use binagg::regression::{self, PrivatizedSummaries};
use binagg::{privtree, Region};
use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

/// Gauss-Jordan elimination with partial pivoting on plain vectors.
fn gauss_jordan(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        let p = a[col][col];
        for j in 0..n {
            a[col][j] /= p;
        }
        b[col] /= p;
        for i in 0..n {
            if i != col {
                let f = a[i][col];
                for j in 0..n {
                    a[i][j] -= f * a[col][j];
                }
                b[i] -= f * b[col];
            }
        }
    }
    b
}

fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|c| gauss_jordan(a.to_vec(), (0..n).map(|r| (r == c) as u8 as f64).collect()))
        .collect();
    (0..n).map(|r| (0..n).map(|c| cols[c][r]).collect()).collect()
}

struct Fixture {
    s: Vec<Vec<f64>>,
    t: Vec<f64>,
    w: Vec<f64>,
    dv: Vec<Vec<f64>>,
}

impl Fixture {
    fn random(k: usize, d: usize, seed: u64) -> Self {
        let mut rng = RandomSource::new(seed, 3);
        let beta: Vec<f64> = (0..d).map(|_| rng.uniform(-1.0, 2.0)).collect();
        let mut f = Fixture {
            s: vec![],
            t: vec![],
            w: vec![],
            dv: vec![],
        };
        for _ in 0..k {
            let c = 2 + rng.index(60);
            let row: Vec<f64> = (0..d).map(|_| c as f64 * rng.uniform(0.0, 1.0)).collect();
            let t = row.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>()
                + (c as f64).sqrt() * rng.standard_normal();
            f.s.push(row);
            f.t.push(t);
            f.w.push(1.0 / c as f64);
            f.dv.push((0..d).map(|_| rng.uniform(0.0, 2.0)).collect());
        }
        f
    }

    fn summaries(&self) -> PrivatizedSummaries {
        let k = self.t.len();
        let d = self.s[0].len();
        PrivatizedSummaries::from_parts(
            DMatrix::from_fn(k, d, |r, c| self.s[r][c]),
            DVector::from_vec(self.t.clone()),
            DVector::from_vec(self.w.clone()),
            DMatrix::from_fn(k, d, |r, c| self.dv[r][c]),
        )
        .unwrap()
    }

    fn gram(&self, correct: bool) -> (Vec<Vec<f64>>, Vec<f64>) {
        let d = self.s[0].len();
        let mut a = vec![vec![0.0; d]; d];
        let mut b = vec![0.0; d];
        for k in 0..self.t.len() {
            for i in 0..d {
                b[i] += self.w[k] * self.s[k][i] * self.t[k];
                for j in 0..d {
                    a[i][j] += self.w[k] * self.s[k][i] * self.s[k][j];
                }
                if correct {
                    a[i][i] -= self.w[k] * self.dv[k][i];
                }
            }
        }
        (a, b)
    }
}

#[test]
fn normal_cdf_matches_statrs() {
    let n = Normal::new(0.0, 1.0).unwrap();
    let mut x = -8.0;
    while x <= 8.0 {
        let ours = gdp::std_normal_cdf(x);
        let theirs = n.cdf(x);
        // statrs is only good to a few parts in 1e12
        assert!((ours - theirs).abs() <= 1e-9 * theirs, "x = {x}");
        x += 0.0625;
    }
}

#[test]
fn normal_cdf_matches_high_precision_values() {
    // 40-digit values from an arbitrary-precision library
    let table = [
        (-8.0, 6.220960574271784123515995172588188422489e-16),
        (-3.625, 1.444807258812357674408333729206747426111e-4),
        (-1.5, 6.680720126885806600449404097988607952290e-2),
        (-0.5, 0.3085375387259868963622953893916622601164),
        (2.0, 0.9772498680518207927997173628334665625282),
    ];
    for (x, v) in table {
        let ours = gdp::std_normal_cdf(x);
        assert!((ours - v).abs() <= 1e-13 * v, "x = {x}: {ours:e} vs {v:e}");
    }
    let delta = gdp::gdp_to_approx_dp(GdpBudget::new(1.0).unwrap(), 1.0)
        .unwrap()
        .delta;
    assert!((delta - 0.1269367375066439458008296247577668804151).abs() < 1e-14);
}

#[test]
fn normal_quantile_matches_statrs() {
    let n = Normal::new(0.0, 1.0).unwrap();
    for p in [1e-10, 1e-6, 0.001, 0.025, 0.2, 0.5, 0.7, 0.975, 0.999, 1.0 - 1e-9] {
        let ours = gdp::std_normal_quantile(p).unwrap();
        assert!((ours - n.inverse_cdf(p)).abs() < 1e-8, "p = {p}");
        assert!((gdp::std_normal_cdf(ours) - p).abs() <= 1e-14 + 1e-12 * p);
    }
}

#[test]
fn delta_curve_matches_statrs() {
    let n = Normal::new(0.0, 1.0).unwrap();
    for (mu, eps) in [(0.5, 0.1), (1.0, 1.0), (1.0, 3.0), (2.0, 0.5), (3.0, 4.0)] {
        let ours = gdp::gdp_to_approx_dp(GdpBudget::new(mu).unwrap(), eps)
            .unwrap()
            .delta;
        let theirs = n.cdf(-eps / mu + mu / 2.0) - eps.exp() * n.cdf(-eps / mu - mu / 2.0);
        assert!((ours - theirs).abs() < 1e-10, "mu {mu} eps {eps}");
        let back = gdp::gdp_to_epsilon(GdpBudget::new(mu).unwrap(), ours).unwrap();
        assert!((back - eps).abs() < 1e-7, "mu {mu} eps {eps} back {back}");
    }
}

#[test]
fn default_allocation_values() {
    let b = gdp::allocate(GdpBudget::new(1.0).unwrap(), [1.0, 3.0, 3.0, 3.0]).unwrap();
    assert!((b.mu_bin.value() - 1.0 / 28f64.sqrt()).abs() < 1e-12);
    assert!((b.mu_bin.value() - 0.188982).abs() < 1e-6);
    for m in [b.mu_c, b.mu_s, b.mu_t] {
        assert!((m.value() - 0.566947).abs() < 1e-6);
    }
    assert!((b.total().value() - 1.0).abs() < 1e-12);
}

#[test]
fn laplace_moments() {
    let mut rng = RandomSource::new(5, 0);
    let scale = 3.0;
    let n = 400_000;
    let xs: Vec<f64> = (0..n)
        .map(|_| gdp::sample_laplace(scale, &mut rng).unwrap())
        .collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    let abs = xs.iter().map(|x| x.abs()).sum::<f64>() / n as f64;
    // sd of the mean is sqrt(18 / n) ~ 0.0067
    assert!(mean.abs() < 0.03, "mean {mean}");
    assert!((var / 18.0 - 1.0).abs() < 0.03, "var {var}");
    assert!((abs / scale - 1.0).abs() < 0.01, "E|X| {abs}");
}

#[test]
fn gaussian_mechanism_scale() {
    let mut rng = RandomSource::new(9, 0);
    let mu = GdpBudget::new(0.5).unwrap();
    let n = 200_000;
    let xs: Vec<f64> = (0..n)
        .map(|_| gdp::gaussian_mechanism(10.0, 2.0, mu, &mut rng).unwrap())
        .collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    assert!((mean - 10.0).abs() < 0.05);
    assert!((var / 16.0 - 1.0).abs() < 0.02, "var {var}");
}

#[test]
fn debiased_and_naive_match_gauss_jordan() {
    for seed in 0..10 {
        let f = Fixture::random(25, 1 + seed as usize % 4, seed);
        let p = f.summaries();
        let (a, b) = f.gram(true);
        let oracle = gauss_jordan(a, b);
        let ours = regression::fit_debiased(&p).unwrap();
        for (o, e) in ours.iter().zip(&oracle) {
            assert!((o - e).abs() <= 1e-9 * e.abs().max(1.0), "seed {seed}");
        }
        let (a, b) = f.gram(false);
        let oracle = gauss_jordan(a, b);
        let naive = regression::fit_naive(&p).unwrap();
        let exact = regression::wls_exact(p.feature_sums(), p.weights(), p.label_sums()).unwrap();
        for j in 0..oracle.len() {
            assert!((naive[j] - oracle[j]).abs() <= 1e-9 * oracle[j].abs().max(1.0));
            assert!((exact[j] - oracle[j]).abs() <= 1e-9 * oracle[j].abs().max(1.0));
        }
    }
}

#[test]
fn sandwich_matches_brute_force() {
    for seed in 0..10 {
        let d = 1 + seed as usize % 3;
        let f = Fixture::random(30, d, 100 + seed);
        let p = f.summaries();
        let beta = regression::fit_debiased(&p).unwrap();
        let k = f.t.len() as f64;
        let (mut m, _) = f.gram(true);
        for row in &mut m {
            for v in row.iter_mut() {
                *v /= k;
            }
        }
        let mut h = vec![vec![0.0; d]; d];
        for b in 0..f.t.len() {
            let fitted: f64 = (0..d).map(|i| f.s[b][i] * beta[i]).sum();
            let q: Vec<f64> = (0..d)
                .map(|i| {
                    f.s[b][i] * f.w[b] * (f.t[b] - fitted) + f.w[b] * f.dv[b][i] * beta[i]
                })
                .collect();
            for i in 0..d {
                for j in 0..d {
                    h[i][j] += q[i] * q[j] / (k * (k - d as f64));
                }
            }
        }
        let mi = invert(&m);
        let cov = regression::covariance(&p, &beta).unwrap();
        for i in 0..d {
            for j in 0..d {
                let mut v = 0.0;
                for a in 0..d {
                    for b in 0..d {
                        v += mi[i][a] * h[a][b] * mi[b][j];
                    }
                }
                assert!((cov[(i, j)] - v).abs() <= 1e-9 * v.abs().max(1e-12), "seed {seed}");
            }
        }
    }
}

#[test]
fn naive_covariance_matches_inverse_gram() {
    let f = Fixture::random(20, 3, 77);
    let p = f.summaries();
    let beta = regression::fit_naive(&p).unwrap();
    let cov = regression::naive_covariance(&p, &beta, Some(2.5)).unwrap();
    let inv = invert(&f.gram(false).0);
    for i in 0..3 {
        for j in 0..3 {
            assert!((cov[(i, j)] - 2.5 * inv[i][j]).abs() <= 1e-9 * inv[i][j].abs().max(1e-12));
        }
    }
}

#[test]
fn sensitivity_is_largest_absolute_bound() {
    let r = Region::new(vec![-2.0, 0.5, -1.0], vec![1.0, 3.0, -0.25]).unwrap();
    assert_eq!(sensitivity_vector(&r), vec![2.0, 3.0, 1.0]);
}

#[test]
fn assignment_matches_linear_scan() {
    let mut rng = RandomSource::new(4, 0);
    let x = DMatrix::from_fn(3000, 2, |_, _| rng.uniform(0.0, 1.0).sqrt());
    let domain = Region::unit(2).unwrap();
    let cfg = privtree::PrivTreeConfig::for_epsilon(1.0, 0.0, 30).unwrap();
    let leaves = privtree::build(&x, &domain, &cfg, &mut rng).unwrap();
    let got = assign_bins(&x, &leaves).unwrap();
    for (j, &k) in got.iter().enumerate() {
        let p = [x[(j, 0)], x[(j, 1)]];
        let matching: Vec<usize> = leaves
            .iter()
            .enumerate()
            .filter(|(_, l)| {
                (0..2).all(|i| {
                    l.lower()[i] <= p[i] && (p[i] < l.upper()[i] || (p[i] == 1.0 && l.upper()[i] == 1.0))
                })
            })
            .map(|(i, _)| i)
            .collect();
        assert_eq!(matching, vec![k]);
    }
}
