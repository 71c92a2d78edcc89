use proptest::collection::vec;
use proptest::prelude::*;

use nnkrylov::covariance::{CovarianceModel, NoiseParams};
use nnkrylov::fcgls::{run_fcgls, IdentityPreconditioner, SolverConfig};
use nnkrylov::harness::{history_csv, read_history_csv};
use nnkrylov::linop::{Conv2dPsf, CsrMatrix, DenseMatrix, DiagonalOperator, LinearMap};
use nnkrylov::nn::{bounded_step, run_nn_fcgls, NnObserver};
use nnkrylov::noise::{corrupt, NoiseSpec};
use nnkrylov::problems::trace_ray;
use nnkrylov::stopping::StopPolicy;
use nnkrylov::vector::{dot, norm2};

/// Dense `rows × cols` matrix with entries drawn from `entry`.
fn matrix(
    entry: impl Strategy<Value = f64> + Clone,
    max_rows: usize,
    max_cols: usize,
) -> impl Strategy<Value = DenseMatrix> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(move |(r, c)| {
        vec(entry.clone(), r * c).prop_map(move |data| DenseMatrix::new(r, c, data).unwrap())
    })
}

/// Nonnegative matrix with no zero column, a data vector and a feasible start.
fn nn_problem() -> impl Strategy<Value = (DenseMatrix, Vec<f64>, Vec<f64>)> {
    matrix(prop_oneof![Just(0.0), 0.0..1.0], 15, 10).prop_flat_map(|a| {
        let (m, n) = (a.rows(), a.cols());
        let mut data = a.data().to_vec();
        data[..n].iter_mut().for_each(|v| *v += 0.1);
        let a = DenseMatrix::new(m, n, data).unwrap();
        (
            Just(a),
            vec(-0.5..2.0, m),
            vec(prop_oneof![Just(0.0), 0.01..1.0], n),
        )
    })
}

fn adjoint_gap(op: &dyn LinearMap, x: &[f64], y: &[f64]) -> f64 {
    let lhs = dot(&op.apply(x).unwrap(), y);
    let rhs = dot(x, &op.apply_transpose(y).unwrap());
    (lhs - rhs).abs() / (1.0 + norm2(x) * norm2(y))
}

struct Checks {
    start_zeros: Vec<bool>,
    ok: bool,
}

impl NnObserver for Checks {
    fn cycle_start(&mut self, _k: usize, x0: &[f64], _d0: &[f64]) {
        let all_zero = x0.iter().all(|&v| v == 0.0);
        self.start_zeros = x0.iter().map(|&v| v == 0.0 && !all_zero).collect();
    }

    fn step(&mut self, _k: usize, alpha: f64, alpha_bar: f64, x: &[f64]) {
        self.ok &= (0.0..=alpha.max(0.0)).contains(&alpha_bar);
        self.ok &= x.iter().all(|&v| v >= 0.0);
        self.ok &= x
            .iter()
            .zip(&self.start_zeros)
            .all(|(&v, &z)| !z || v == 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn dense_adjoint_is_consistent(a in matrix(-1.0..1.0, 12, 12), seed in any::<u64>()) {
        let x: Vec<f64> = (0..a.cols()).map(|i| ((seed >> (i % 60)) & 7) as f64 - 3.5).collect();
        let y: Vec<f64> = (0..a.rows()).map(|i| ((i * 37 + 11) % 13) as f64 - 6.0).collect();
        prop_assert!(adjoint_gap(&a, &x, &y) < 1e-12);
    }

    #[test]
    fn sparse_matches_dense(triplets in vec((0usize..9, 0usize..7, -1.0f64..1.0), 0..40), x in vec(-1.0f64..1.0, 7)) {
        let s = CsrMatrix::from_triplets(9, 7, &triplets).unwrap();
        let mut dense = vec![0.0; 63];
        for &(i, j, v) in &triplets {
            dense[i * 7 + j] += v;
        }
        let d = DenseMatrix::new(9, 7, dense).unwrap();
        let (ys, yd) = (s.apply(&x).unwrap(), d.apply(&x).unwrap());
        for (p, q) in ys.iter().zip(&yd) {
            prop_assert!((p - q).abs() < 1e-12);
        }
        let y: Vec<f64> = (0..9).map(|i| i as f64 - 4.0).collect();
        prop_assert!(adjoint_gap(&s, &x, &y) < 1e-12);
    }

    #[test]
    fn convolution_preserves_constants_and_is_adjoint_consistent(
        rows in 1usize..8,
        cols in 1usize..8,
        weights in vec(0.01f64..1.0, 9),
        x in vec(-1.0f64..1.0, 64),
        y in vec(-1.0f64..1.0, 64),
    ) {
        let (pr, pc) = (rows.min(3), cols.min(3));
        let mut psf = weights[..pr * pc].to_vec();
        let total: f64 = psf.iter().sum();
        psf.iter_mut().for_each(|v| *v /= total);
        let op = Conv2dPsf::new(rows, cols, pr, pc, psf).unwrap();
        let n = rows * cols;
        for v in op.apply(&vec![1.0; n]).unwrap() {
            prop_assert!((v - 1.0).abs() < 1e-12);
        }
        prop_assert!(adjoint_gap(&op, &x[..n], &y[..n]) < 1e-12);
    }

    #[test]
    fn bounded_step_keeps_feasibility(
        alpha in 0.0f64..10.0,
        xd in vec((0.0f64..2.0, -3.0f64..3.0), 1..20),
    ) {
        let (x, d): (Vec<f64>, Vec<f64>) = xd.into_iter().unzip();
        let s = bounded_step(alpha, &x, &d);
        prop_assert!(s >= 0.0 && s <= alpha);
        for (xi, di) in x.iter().zip(&d) {
            prop_assert!(xi + s * di >= -1e-12);
        }
    }

    #[test]
    fn nn_fcgls_iterates_are_feasible((a, b, x0) in nn_problem(), m_max_in in 1usize..8) {
        let cfg = SolverConfig { m_max: 30, m_max_in, m_hat: m_max_in, ..SolverConfig::default() };
        let mut checks = Checks { start_zeros: Vec::new(), ok: true };
        if let Ok(run) = nnkrylov::nn::run_nn_fcgls_observed(&a, &b, &x0, &cfg, &StopPolicy::never(), None, &mut checks) {
            prop_assert!(run.history.x.iter().all(|&v| v >= 0.0));
            let tol = 1e-12 * norm2(&b);
            for w in run.history.records.windows(2) {
                if w[0].outer_k == w[1].outer_k && !w[0].restarted {
                    prop_assert!(w[1].residual_norm <= w[0].residual_norm + tol);
                }
            }
        }
        prop_assert!(checks.ok);
    }

    #[test]
    fn untruncated_fcgls_residuals_do_not_increase(a in matrix(-1.0..1.0, 12, 8), b in vec(-1.0f64..1.0, 12)) {
        let b = &b[..a.rows()];
        let cfg = SolverConfig { m_max: 8, ..SolverConfig::default() }.untruncated();
        let x0 = vec![0.0; a.cols()];
        if let Ok(h) = run_fcgls(&a, b, &mut IdentityPreconditioner, &x0, &cfg, &StopPolicy::never(), None) {
            for w in h.records.windows(2) {
                prop_assert!(w[1].residual_norm <= w[0].residual_norm + 1e-12 * norm2(b));
            }
        }
    }

    #[test]
    fn data_covariance_is_positive(b in vec(0.0f64..100.0, 1..30), sigma in 0.1f64..10.0, beta in 0.0f64..5.0) {
        let model = CovarianceModel::from_data(&b, NoiseParams { sigma, beta }).unwrap();
        prop_assert!(model.diag().iter().all(|&c| c > 0.0));
        let k = CovarianceModel::restart_dependent(NoiseParams { sigma, beta }).updated_from_forward(&b).unwrap();
        for (c, bi) in k.diag().iter().zip(&b) {
            prop_assert!((c - (bi + beta + sigma * sigma)).abs() < 1e-9);
        }
    }

    #[test]
    fn noise_is_deterministic_and_meets_its_level(b in vec(0.5f64..10.0, 2..50), level in 1e-3f64..0.2, seed in any::<u64>()) {
        let spec = NoiseSpec::gaussian_level(level, seed);
        let (p, q) = (corrupt(&b, &spec).unwrap(), corrupt(&b, &spec).unwrap());
        prop_assert_eq!(&p.b, &q.b);
        prop_assert!((p.level - level).abs() < 1e-9 * level.max(1.0));
        let direct: f64 = p.b.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        prop_assert!((p.eta_norm - direct).abs() < 1e-12 * (1.0 + direct));
    }

    #[test]
    fn poisson_data_is_nonnegative_integers_plus_gaussian(b in vec(0.0f64..50.0, 1..40), seed in any::<u64>()) {
        let spec = NoiseSpec::gaussian_poisson(0.0, 3.0, seed);
        let data = corrupt(&b, &spec).unwrap();
        for v in &data.b {
            prop_assert!(*v >= 0.0 && v.fract() == 0.0);
        }
    }

    #[test]
    fn ray_lengths_are_bounded_by_the_chord(n in 1usize..12, theta in 0.0f64..180.0, t in -1.0f64..1.0) {
        let offset = t * n as f64 / 2.0;
        let ray = trace_ray(n, theta, offset);
        let total: f64 = ray.iter().map(|&(_, l)| l).sum();
        prop_assert!(ray.iter().all(|&(p, l)| p < n * n && l > 0.0 && l <= std::f64::consts::SQRT_2 + 1e-12));
        prop_assert!(total <= n as f64 * std::f64::consts::SQRT_2 + 1e-9);
    }

    #[test]
    fn history_csv_round_trips((a, b, x0) in nn_problem()) {
        let cfg = SolverConfig { m_max: 12, m_max_in: 4, m_hat: 4, ..SolverConfig::default() };
        let truth = vec![0.5; a.cols()];
        if let Ok(run) = run_nn_fcgls(&a, &b, &x0, &cfg, &StopPolicy::never(), Some(&truth)) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("h.csv");
            std::fs::write(&path, history_csv(&run.history)).unwrap();
            let rows = read_history_csv(&path).unwrap();
            prop_assert_eq!(rows.len(), run.history.records.len());
            for (row, rec) in rows.iter().zip(&run.history.records) {
                prop_assert_eq!(row.iter, rec.m);
                prop_assert_eq!(row.res_norm, rec.residual_norm);
                prop_assert_eq!(row.rel_err, rec.relative_error);
                prop_assert_eq!(row.restart, rec.restarted);
            }
        }
    }

    #[test]
    fn diagonal_operator_is_symmetric(d in vec(0.0f64..3.0, 1..20)) {
        let n = d.len();
        let op = DiagonalOperator::new(d).unwrap();
        let x: Vec<f64> = (0..n).map(|i| i as f64 - 2.0).collect();
        prop_assert_eq!(op.apply(&x).unwrap(), op.apply_transpose(&x).unwrap());
    }
}
