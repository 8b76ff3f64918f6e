//! Solvers checked against independent reference computations.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use survsel::cox::{cox_partial_loglik, fit_cox_nr, SurvResponse};
use survsel::elnet::{
    fit_cox_elnet, fit_gaussian_elnet, fit_path, lambda_path, ElnetOptions, PenaltySpec, Target,
};
use survsel::glm::{fit_logistic, fit_ols};
use survsel::Error;

fn normal_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Normal equations solved by Gaussian elimination with partial pivoting.
fn ols_oracle(x: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
    let n = x.nrows();
    let p = x.ncols() + 1;
    let col = |i: usize, j: usize| if j == 0 { 1.0 } else { x[(i, j - 1)] };
    let mut a = vec![vec![0.0; p + 1]; p];
    for r in 0..p {
        for c in 0..p {
            a[r][c] = (0..n).map(|i| col(i, r) * col(i, c)).sum();
        }
        a[r][p] = (0..n).map(|i| col(i, r) * y[i]).sum();
    }
    for k in 0..p {
        let piv = (k..p).max_by(|&u, &v| a[u][k].abs().total_cmp(&a[v][k].abs())).unwrap();
        a.swap(k, piv);
        for r in k + 1..p {
            let f = a[r][k] / a[k][k];
            for c in k..=p {
                a[r][c] -= f * a[k][c];
            }
        }
    }
    let mut b = vec![0.0; p];
    for k in (0..p).rev() {
        let s: f64 = (k + 1..p).map(|c| a[k][c] * b[c]).sum();
        b[k] = (a[k][p] - s) / a[k][k];
    }
    b
}

fn naive_cox_loglik(beta: &[f64], x: &DMatrix<f64>, time: &[f64], status: &[bool]) -> f64 {
    let eta: Vec<f64> = (0..x.nrows()).map(|i| (0..x.ncols()).map(|j| x[(i, j)] * beta[j]).sum()).collect();
    let mut ll = 0.0;
    for i in 0..time.len() {
        if status[i] {
            let risk: f64 = (0..time.len()).filter(|&k| time[k] >= time[i]).map(|k| eta[k].exp()).sum();
            ll += eta[i] - risk.ln();
        }
    }
    ll
}

fn naive_cox_score(beta: &[f64], x: &DMatrix<f64>, time: &[f64], status: &[bool]) -> Vec<f64> {
    let p = x.ncols();
    let eta: Vec<f64> = (0..x.nrows()).map(|i| (0..p).map(|j| x[(i, j)] * beta[j]).sum()).collect();
    let mut g = vec![0.0; p];
    for i in 0..time.len() {
        if status[i] {
            let at_risk: Vec<usize> = (0..time.len()).filter(|&k| time[k] >= time[i]).collect();
            let s0: f64 = at_risk.iter().map(|&k| eta[k].exp()).sum();
            for j in 0..p {
                let s1: f64 = at_risk.iter().map(|&k| eta[k].exp() * x[(k, j)]).sum();
                g[j] += x[(i, j)] - s1 / s0;
            }
        }
    }
    g
}

fn survival_problem(rng: &mut ChaCha8Rng, n: usize, p: usize, censor: f64) -> (DMatrix<f64>, SurvResponse) {
    let x = normal_matrix(rng, n, p);
    let beta: Vec<f64> = (0..p).map(|j| 0.8 - 0.5 * j as f64).collect();
    let mut time = Vec::with_capacity(n);
    let mut status = Vec::with_capacity(n);
    for i in 0..n {
        let eta: f64 = (0..p).map(|j| x[(i, j)] * beta[j]).sum();
        let u: f64 = rng.random_range(f64::EPSILON..1.0);
        time.push(-u.ln() / eta.exp());
        status.push(rng.random::<f64>() >= censor);
    }
    status[0] = true;
    (x, SurvResponse::new(time, status).unwrap())
}

/// Largest KKT violation of the Gaussian elastic net, with the penalty on
/// `scale_j * beta_j`.
fn gaussian_kkt(x: &DMatrix<f64>, y: &[f64], fit: &survsel::elnet::GaussianElnetFit, lambda: f64, mix: f64, scale: &[f64]) -> f64 {
    let n = x.nrows();
    let resid: Vec<f64> = (0..n)
        .map(|i| y[i] - fit.intercept - (0..x.ncols()).map(|j| x[(i, j)] * fit.beta[j]).sum::<f64>())
        .collect();
    let mut worst: f64 = resid.iter().sum::<f64>().abs() / n as f64;
    for j in 0..x.ncols() {
        let g = (0..n).map(|i| x[(i, j)] * resid[i]).sum::<f64>() / n as f64;
        let s = scale[j];
        let b = fit.beta[j];
        let v = if b != 0.0 {
            (g - lambda * (mix * s * b.signum() + (1.0 - mix) * s * s * b)).abs()
        } else {
            (g.abs() - lambda * mix * s).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

fn population_sd(x: &DMatrix<f64>, j: usize) -> f64 {
    let n = x.nrows() as f64;
    let m = x.column(j).sum() / n;
    (x.column(j).iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt()
}

#[test]
fn ols_matches_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let x = normal_matrix(&mut rng, 60, 4);
        let y: Vec<f64> = (0..60).map(|i| x[(i, 0)] - 2.0 * x[(i, 3)] + rng.sample::<f64, _>(StandardNormal)).collect();
        let fit = fit_ols(&x, &y).unwrap();
        for (a, b) in fit.coef.iter().zip(ols_oracle(&x, &y)) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }
}

#[test]
fn ols_p_values_follow_t_distribution() {
    // two-point design where t and df are known in closed form
    let x = DMatrix::from_column_slice(6, 1, &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
    let y = [1.0, 2.0, 3.0, 3.0, 4.0, 5.0];
    let fit = fit_ols(&x, &y).unwrap();
    // slope 2, residual variance 1, se = sqrt(2/3), t = sqrt(6), df = 4
    assert!((fit.coef[1] - 2.0).abs() < 1e-12);
    assert!((fit.statistic[1] - 6f64.sqrt()).abs() < 1e-10);
    assert!((fit.p_value[1] - 0.070_483_996_910).abs() < 1e-9, "{}", fit.p_value[1]);
}

#[test]
fn gaussian_elnet_unpenalized_matches_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..10 {
        let x = normal_matrix(&mut rng, 100, 8);
        let y: Vec<f64> = (0..100).map(|i| 0.5 * x[(i, 1)] + rng.sample::<f64, _>(StandardNormal)).collect();
        let fit = fit_gaussian_elnet(&x, &y, &PenaltySpec::new(1.0, 0.0), &ElnetOptions::default()).unwrap();
        let oracle = ols_oracle(&x, &y);
        assert!((fit.intercept - oracle[0]).abs() < 1e-6);
        for j in 0..8 {
            assert!((fit.beta[j] - oracle[j + 1]).abs() < 1e-6);
        }
    }
}

#[test]
fn gaussian_elnet_kkt_both_scalings() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for k in 0..20 {
        let mut x = normal_matrix(&mut rng, 100, 8);
        for i in 0..100 {
            x[(i, 2)] *= 5.0;
            x[(i, 5)] = 0.3 * x[(i, 5)] + 1.0;
        }
        let y: Vec<f64> = (0..100).map(|i| x[(i, 0)] - 0.2 * x[(i, 2)] + rng.sample::<f64, _>(StandardNormal)).collect();
        let lambda = rng.random_range(0.001..0.5);
        let mix = if k % 2 == 0 { 1.0 } else { rng.random_range(0.1..1.0) };
        for standardize in [true, false] {
            let opts = ElnetOptions { standardize, ..ElnetOptions::default() };
            let fit = fit_gaussian_elnet(&x, &y, &PenaltySpec::new(mix, lambda), &opts).unwrap();
            let scale: Vec<f64> = (0..8).map(|j| if standardize { population_sd(&x, j) } else { 1.0 }).collect();
            let worst = gaussian_kkt(&x, &y, &fit, lambda, mix, &scale);
            assert!(worst < 1e-5, "kkt residual {worst} (standardize={standardize})");
        }
    }
}

#[test]
fn gaussian_objective_never_increases_across_passes() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let x = normal_matrix(&mut rng, 80, 6);
    let y: Vec<f64> = (0..80).map(|i| x[(i, 0)] + x[(i, 1)] + rng.sample::<f64, _>(StandardNormal)).collect();
    let (lambda, mix) = (0.05, 0.7);
    let sd: Vec<f64> = (0..6).map(|j| population_sd(&x, j)).collect();
    let ybar = y.iter().sum::<f64>() / 80.0;
    let means: Vec<f64> = (0..6).map(|j| x.column(j).sum() / 80.0).collect();
    let objective = |beta: &[f64]| {
        let b0 = ybar - means.iter().zip(beta).map(|(m, b)| m * b).sum::<f64>();
        let rss: f64 = (0..80)
            .map(|i| (y[i] - b0 - (0..6).map(|j| x[(i, j)] * beta[j]).sum::<f64>()).powi(2))
            .sum();
        let pen: f64 = (0..6)
            .map(|j| {
                let g = beta[j] * sd[j];
                mix * g.abs() + 0.5 * (1.0 - mix) * g * g
            })
            .sum();
        rss / 160.0 + lambda * pen
    };
    let mut prev = f64::INFINITY;
    for passes in 1..12 {
        let opts = ElnetOptions { tol: 1e-300, max_passes: passes, standardize: true };
        let beta = match fit_gaussian_elnet(&x, &y, &PenaltySpec::new(mix, lambda), &opts) {
            Err(Error::Convergence { last, .. }) => last,
            other => panic!("expected pass-budget error, got {other:?}"),
        };
        let obj = objective(&beta);
        assert!(obj <= prev + 1e-12, "pass {passes}: {obj} > {prev}");
        prev = obj;
    }
}

#[test]
fn standardization_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let x = normal_matrix(&mut rng, 120, 5);
    let y: Vec<f64> = (0..120).map(|i| x[(i, 0)] - x[(i, 4)] + rng.sample::<f64, _>(StandardNormal)).collect();
    let spec = PenaltySpec::new(0.8, 0.03);
    let base = fit_gaussian_elnet(&x, &y, &spec, &ElnetOptions::default()).unwrap();
    for c in [0.01, 3.0, 250.0] {
        let mut xs = x.clone();
        xs.column_mut(2).scale_mut(c);
        let fit = fit_gaussian_elnet(&xs, &y, &spec, &ElnetOptions::default()).unwrap();
        assert!((fit.beta[2] * c - base.beta[2]).abs() < 1e-8, "c={c}");
        assert!((fit.beta[0] - base.beta[0]).abs() < 1e-8);
    }

    let (xc, resp) = survival_problem(&mut rng, 150, 3, 0.3);
    let spec = PenaltySpec::new(1.0, 0.02);
    let base = fit_cox_elnet(&xc, &resp, &spec, &ElnetOptions::default()).unwrap();
    let mut xs = xc.clone();
    xs.column_mut(1).scale_mut(7.0);
    let fit = fit_cox_elnet(&xs, &resp, &spec, &ElnetOptions::default()).unwrap();
    assert!((fit.beta[1] * 7.0 - base.beta[1]).abs() < 1e-8);
}

#[test]
fn gaussian_path_is_continuous() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let x = normal_matrix(&mut rng, 100, 6);
    let y: Vec<f64> = (0..100).map(|i| x[(i, 0)] + 0.5 * x[(i, 1)] + rng.sample::<f64, _>(StandardNormal)).collect();
    let grid = lambda_path(&x, Target::Gaussian(&y), 1.0, &[], 100, 0.01, &ElnetOptions::default()).unwrap();
    let path = fit_path(&x, Target::Gaussian(&y), 1.0, &[], &grid, &ElnetOptions::default()).unwrap();
    assert!(path.coefs[0].iter().all(|&b| b == 0.0));
    let mut jumps: Vec<f64> = path
        .coefs
        .windows(2)
        .map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        .collect();
    let max = jumps.iter().cloned().fold(0.0, f64::max);
    jumps.sort_by(f64::total_cmp);
    let median = jumps[jumps.len() / 2];
    assert!(max <= 10.0 * median, "max jump {max}, median {median}");
}

#[test]
fn cox_loglik_matches_double_loop_with_ties() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..10 {
        let x = normal_matrix(&mut rng, 30, 3);
        let time: Vec<f64> = (0..30).map(|_| f64::from(rng.random_range(1..8u32))).collect();
        let mut status: Vec<bool> = (0..30).map(|_| rng.random_bool(0.7)).collect();
        status[0] = true;
        let beta: Vec<f64> = (0..3).map(|_| rng.random_range(-1.5..1.5)).collect();
        let resp = SurvResponse::new(time.clone(), status.clone()).unwrap();
        let ll = cox_partial_loglik(&beta, &x, &resp).unwrap();
        let oracle = naive_cox_loglik(&beta, &x, &time, &status);
        assert!((ll - oracle).abs() < 1e-10 * (1.0 + oracle.abs()), "{ll} vs {oracle}");
    }
}

#[test]
fn cox_single_covariate_matches_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    for k in 0..20 {
        let n = 20 + 1 + k;
        let (x, resp) = survival_problem(&mut rng, n.min(50), 1, 0.2);
        let fit = fit_cox_nr(&x, &resp, 1e-9, 100).unwrap();
        let f = |b: f64| naive_cox_loglik(&[b], &x, resp.time(), resp.status());
        let coarse = (-2000..=2000).map(|i| f64::from(i) * 0.01).max_by(|a, b| f(*a).total_cmp(&f(*b))).unwrap();
        let fine = (-1000..=1000)
            .map(|i| coarse + f64::from(i) * 1e-5)
            .max_by(|a, b| f(*a).total_cmp(&f(*b)))
            .unwrap();
        assert!((fit.coef[0] - fine).abs() < 1e-3, "{} vs {}", fit.coef[0], fine);
    }
}

#[test]
fn cox_standard_errors_match_numerical_hessian() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let (x, resp) = survival_problem(&mut rng, 80, 2, 0.2);
    let fit = fit_cox_nr(&x, &resp, 1e-9, 100).unwrap();
    let h = 1e-4;
    let ll = |b: &[f64]| naive_cox_loglik(b, &x, resp.time(), resp.status());
    let mut hess = [[0.0; 2]; 2];
    for a in 0..2 {
        for c in 0..2 {
            let at = |da: f64, dc: f64| {
                let mut b = fit.coef.clone();
                b[a] += da;
                b[c] += dc;
                ll(&b)
            };
            hess[a][c] = (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4.0 * h * h);
        }
    }
    // inverse of the negated 2x2 Hessian
    let det = hess[0][0] * hess[1][1] - hess[0][1] * hess[1][0];
    let var = [-hess[1][1] / det, -hess[0][0] / det];
    for j in 0..2 {
        let se = var[j].sqrt();
        assert!((fit.se[j] - se).abs() / se < 1e-4, "{} vs {}", fit.se[j], se);
    }
    let score = naive_cox_score(&fit.coef, &x, resp.time(), resp.status());
    assert!(score.iter().all(|g| g.abs() < 1e-9), "{score:?}");
}

#[test]
fn cox_rescaling_keeps_z_statistics() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let (x, resp) = survival_problem(&mut rng, 100, 2, 0.3);
    let fit = fit_cox_nr(&x, &resp, 1e-9, 100).unwrap();
    let mut xs = x.clone();
    xs.column_mut(0).scale_mut(-4.0);
    let scaled = fit_cox_nr(&xs, &resp, 1e-9, 100).unwrap();
    assert!((scaled.coef[0] * -4.0 - fit.coef[0]).abs() < 1e-8);
    assert!((scaled.statistic[0] + fit.statistic[0]).abs() < 1e-8);
    assert!((scaled.statistic[1] - fit.statistic[1]).abs() < 1e-8);
}

#[test]
fn cox_collinear_columns_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (x, resp) = survival_problem(&mut rng, 40, 1, 0.0);
    let mut x2 = DMatrix::zeros(40, 2);
    x2.set_column(0, &x.column(0));
    x2.set_column(1, &(x.column(0) * 2.0));
    let err = fit_cox_nr(&x2, &resp, 1e-9, 100).unwrap_err();
    assert!(matches!(err, Error::NonIdentifiable { .. } | Error::Singular), "{err:?}");
}

#[test]
fn penalized_cox_without_penalty_matches_newton_raphson() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..5 {
        let (x, resp) = survival_problem(&mut rng, 200, 3, 0.3);
        let nr = fit_cox_nr(&x, &resp, 1e-9, 100).unwrap();
        let pen = fit_cox_elnet(&x, &resp, &PenaltySpec::new(1.0, 0.0), &ElnetOptions::default()).unwrap();
        for j in 0..3 {
            assert!((nr.coef[j] - pen.beta[j]).abs() < 1e-4, "{} vs {}", nr.coef[j], pen.beta[j]);
        }
    }
}

#[test]
fn penalized_cox_kkt() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for k in 0..8 {
        let (x, resp) = survival_problem(&mut rng, 120, 4, 0.4);
        let grid = lambda_path(&x, Target::Cox(&resp), 1.0, &[], 10, 0.01, &ElnetOptions::default()).unwrap();
        let lambda = grid[3 + k % 6];
        let mix = if k % 2 == 0 { 1.0 } else { 0.5 };
        let fit = fit_cox_elnet(&x, &resp, &PenaltySpec::new(mix, lambda), &ElnetOptions::default()).unwrap();
        let score = naive_cox_score(&fit.beta, &x, resp.time(), resp.status());
        let n = x.nrows() as f64;
        for j in 0..4 {
            let s = population_sd(&x, j);
            let g = score[j] / n;
            let b = fit.beta[j];
            let v = if b != 0.0 {
                (g - lambda * (mix * s * b.signum() + (1.0 - mix) * s * s * b)).abs()
            } else {
                (g.abs() - lambda * mix * s).max(0.0)
            };
            assert!(v < 1e-5, "kkt residual {v} at column {j}");
        }
    }
}

#[test]
fn penalized_cox_is_empty_at_lambda_max() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let (x, resp) = survival_problem(&mut rng, 100, 3, 0.3);
    let grid = lambda_path(&x, Target::Cox(&resp), 1.0, &[], 20, 0.01, &ElnetOptions::default()).unwrap();
    for lambda in [grid[0], grid[0] * 3.0] {
        let fit = fit_cox_elnet(&x, &resp, &PenaltySpec::new(1.0, lambda), &ElnetOptions::default()).unwrap();
        assert!(fit.beta.iter().all(|&b| b == 0.0), "{:?}", fit.beta);
    }
    let fit = fit_cox_elnet(&x, &resp, &PenaltySpec::new(1.0, grid[2]), &ElnetOptions::default()).unwrap();
    assert!(fit.beta.iter().any(|&b| b != 0.0));
}

#[test]
fn logistic_matches_newton_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let n = 300;
    let x = normal_matrix(&mut rng, n, 2);
    let y: Vec<bool> = (0..n)
        .map(|i| {
            let eta = 0.3 + x[(i, 0)] - 0.5 * x[(i, 1)];
            rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp())
        })
        .collect();
    let fit = fit_logistic(&x, &y, 100, 1e-10).unwrap();
    // plain Newton-Raphson on the raw scale
    let mut b = [0.0f64; 3];
    for _ in 0..50 {
        let mut g = [0.0; 3];
        let mut h = [[0.0; 3]; 3];
        for i in 0..n {
            let row = [1.0, x[(i, 0)], x[(i, 1)]];
            let eta: f64 = (0..3).map(|k| row[k] * b[k]).sum();
            let mu = 1.0 / (1.0 + (-eta).exp());
            let yi = if y[i] { 1.0 } else { 0.0 };
            for a in 0..3 {
                g[a] += (yi - mu) * row[a];
                for c in 0..3 {
                    h[a][c] += mu * (1.0 - mu) * row[a] * row[c];
                }
            }
        }
        let m = nalgebra::Matrix3::from_fn(|r, c| h[r][c]);
        let step = m.try_inverse().unwrap() * nalgebra::Vector3::new(g[0], g[1], g[2]);
        for k in 0..3 {
            b[k] += step[k];
        }
    }
    for k in 0..3 {
        assert!((fit.coef[k] - b[k]).abs() < 1e-7, "{} vs {}", fit.coef[k], b[k]);
    }
}
