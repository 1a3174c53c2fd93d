//! Non-negative matrix factorization with multiplicative updates.
//!
//! Factors a non-negative matrix `M` (hosts x processes) into `H * W` with
//! `H` (hosts x rank) and `W` (rank x processes), minimizing the squared
//! Frobenius reconstruction error. Multiplicative updates keep both factors
//! non-negative and make the objective non-increasing at every iteration.

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::events::HostProcessMatrix;

/// Denominator guard for the multiplicative updates.
const UPDATE_EPS: f64 = 1e-12;

/// Warm-start factors carried over from a previous factorization.
#[derive(Debug, Clone)]
pub struct WarmStart {
    pub host_features: Array2<f64>,
    pub process_loadings: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct NmfOptions {
    /// Latent dimension (number of host features).
    pub rank: usize,
    pub max_iterations: usize,
    /// Relative error-change threshold that stops iteration early.
    pub tolerance: f64,
    pub seed: u64,
    /// Previous factors to initialize from, when their shapes match.
    pub warm_start: Option<WarmStart>,
}

impl NmfOptions {
    pub fn new(rank: usize) -> Self {
        Self {
            rank,
            max_iterations: 200,
            tolerance: 1e-4,
            seed: 0,
            warm_start: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::InvalidParams("rank must be at least 1".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParams(
                "max_iterations must be at least 1".into(),
            ));
        }
        if self.tolerance < 0.0 {
            return Err(Error::InvalidParams("tolerance must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FactorizationResult {
    /// `H`: hosts x rank, one latent row per host.
    pub host_features: Array2<f64>,
    /// `W`: rank x processes.
    pub process_loadings: Array2<f64>,
    /// Squared Frobenius error before iteration 1 and after each iteration.
    pub error_trace: Vec<f64>,
    pub iterations_used: usize,
}

impl FactorizationResult {
    pub fn final_error(&self) -> f64 {
        *self.error_trace.last().expect("trace is never empty")
    }
}

/// Factorizes an interval's host-process matrix.
pub fn factorize(matrix: &HostProcessMatrix, opts: &NmfOptions) -> Result<FactorizationResult> {
    factorize_dense(&matrix.to_dense().view(), opts)
}

/// Factorizes a dense non-negative matrix.
pub fn factorize_dense(m: &ArrayView2<f64>, opts: &NmfOptions) -> Result<FactorizationResult> {
    opts.validate()?;
    let (rows, cols) = m.dim();
    if rows == 0 || cols == 0 {
        return Err(Error::Dimension(format!(
            "cannot factorize an empty {rows}x{cols} matrix"
        )));
    }
    if opts.rank > rows.min(cols) {
        return Err(Error::Dimension(format!(
            "rank {} exceeds min(rows, cols) = {}",
            opts.rank,
            rows.min(cols)
        )));
    }
    if m.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidInput(
            "matrix entries must be finite and non-negative".into(),
        ));
    }

    let (mut h, mut w) = initialize(m, opts);

    let mut error_trace = vec![objective(m, &h, &w)];
    let mut iterations_used = 0;
    for _ in 0..opts.max_iterations {
        // H <- H .* (M W^T) ./ (H W W^T + eps)
        let wwt = w.dot(&w.t());
        let numer_h = m.dot(&w.t());
        let denom_h = h.dot(&wwt);
        azip_update(&mut h, &numer_h, &denom_h);

        // W <- W .* (H^T M) ./ (H^T H W + eps)
        let hth = h.t().dot(&h);
        let numer_w = h.t().dot(m);
        let denom_w = hth.dot(&w);
        azip_update(&mut w, &numer_w, &denom_w);

        let err = objective(m, &h, &w);
        let prev = *error_trace.last().unwrap();
        error_trace.push(err);
        iterations_used += 1;
        let scale = error_trace[0].max(UPDATE_EPS);
        if (prev - err).abs() / scale < opts.tolerance {
            break;
        }
    }

    Ok(FactorizationResult {
        host_features: h,
        process_loadings: w,
        error_trace,
        iterations_used,
    })
}

fn azip_update(base: &mut Array2<f64>, numer: &Array2<f64>, denom: &Array2<f64>) {
    ndarray::Zip::from(base)
        .and(numer)
        .and(denom)
        .for_each(|b, &n, &d| *b *= n / (d + UPDATE_EPS));
}

fn initialize(m: &ArrayView2<f64>, opts: &NmfOptions) -> (Array2<f64>, Array2<f64>) {
    let (rows, cols) = m.dim();
    let k = opts.rank;
    if let Some(ws) = &opts.warm_start {
        if ws.host_features.dim() == (rows, k) && ws.process_loadings.dim() == (k, cols) {
            return (ws.host_features.clone(), ws.process_loadings.clone());
        }
    }
    let mean = m.sum() / (rows * cols) as f64;
    let scale = (mean / k as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    // (1 - u) maps the [0,1) draw onto (0,1] so no entry starts at zero.
    let mut draw = |_| (1.0 - rng.random::<f64>()) * scale;
    let h = Array2::from_shape_fn((rows, k), &mut draw);
    let w = Array2::from_shape_fn((k, cols), &mut draw);
    (h, w)
}

fn objective(m: &ArrayView2<f64>, h: &Array2<f64>, w: &Array2<f64>) -> f64 {
    let recon = h.dot(w);
    ndarray::Zip::from(m)
        .and(&recon)
        .fold(0.0, |acc, &a, &b| acc + (a - b) * (a - b))
}

/// Squared Frobenius norm of `M - H W`.
pub fn reconstruction_error(
    m: &ArrayView2<f64>,
    h: &ArrayView2<f64>,
    w: &ArrayView2<f64>,
) -> Result<f64> {
    let (rows, cols) = m.dim();
    let (hr, hk) = h.dim();
    let (wk, wc) = w.dim();
    if hr != rows || wc != cols || hk != wk {
        return Err(Error::Dimension(format!(
            "shapes do not conform: M is {rows}x{cols}, H is {hr}x{hk}, W is {wk}x{wc}"
        )));
    }
    Ok(objective(m, &h.to_owned(), &w.to_owned()))
}

/// Assigns each host the index of its largest latent feature.
///
/// Ties break toward the lowest column index.
pub fn latent_labels(h: &ArrayView2<f64>) -> Vec<usize> {
    h.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            let mut best_value = f64::NEG_INFINITY;
            for (j, &v) in row.iter().enumerate() {
                if v > best_value {
                    best = j;
                    best_value = v;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr2, Array1};

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.random::<f64>() * 10.0)
    }

    /// Brute-force oracle: entrywise sum of squared residuals by explicit loops.
    fn naive_error(m: &Array2<f64>, h: &Array2<f64>, w: &Array2<f64>) -> f64 {
        let (rows, cols) = m.dim();
        let k = h.ncols();
        let mut total = 0.0;
        for i in 0..rows {
            for j in 0..cols {
                let mut recon = 0.0;
                for r in 0..k {
                    recon += h[[i, r]] * w[[r, j]];
                }
                let d = m[[i, j]] - recon;
                total += d * d;
            }
        }
        total
    }

    #[test]
    fn rank_one_matrix_is_recovered() {
        let u = Array1::from_vec(vec![1.0, 2.0, 3.0, 0.5, 4.0]);
        let v = Array1::from_vec(vec![2.0, 0.25, 1.5, 3.0, 0.75, 1.0]);
        let m: Array2<f64> = u
            .view()
            .insert_axis(ndarray::Axis(1))
            .dot(&v.view().insert_axis(ndarray::Axis(0)));
        let mut opts = NmfOptions::new(1);
        opts.tolerance = 1e-10;
        opts.max_iterations = 500;
        let result = factorize_dense(&m.view(), &opts).unwrap();
        let relative = result.final_error().sqrt() / m.mapv(|v| v * v).sum().sqrt();
        assert!(relative <= 1e-3, "relative error {relative} too high");
    }

    #[test]
    fn error_trace_is_non_increasing() {
        let m = random_matrix(50, 100, 7);
        let mut opts = NmfOptions::new(10);
        opts.tolerance = 0.0;
        opts.max_iterations = 200;
        let result = factorize_dense(&m.view(), &opts).unwrap();
        assert_eq!(result.iterations_used, 200);
        for pair in result.error_trace.windows(2) {
            assert!(
                pair[1] <= pair[0] + 1e-9,
                "objective increased: {} -> {}",
                pair[0],
                pair[1]
            );
        }
        // The reported trace tail must be the true objective.
        let check = naive_error(&m, &result.host_features, &result.process_loadings);
        assert!((check - result.final_error()).abs() <= 1e-6 * check.max(1.0));
    }

    #[test]
    fn final_error_decreases_with_rank() {
        let m = random_matrix(50, 100, 11);
        let mut last = f64::INFINITY;
        for k in [2, 5, 10, 20] {
            let mut opts = NmfOptions::new(k);
            opts.seed = 3;
            opts.tolerance = 0.0;
            let err = factorize_dense(&m.view(), &opts).unwrap().final_error();
            assert!(err < last, "rank {k}: error {err} did not drop below {last}");
            last = err;
        }
    }

    #[test]
    fn factors_stay_non_negative() {
        let m = random_matrix(20, 30, 5);
        let result = factorize_dense(&m.view(), &NmfOptions::new(4)).unwrap();
        assert!(result.host_features.iter().all(|&v| v >= 0.0));
        assert!(result.process_loadings.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn same_seed_reproduces_factors() {
        let m = random_matrix(15, 25, 9);
        let opts = NmfOptions::new(3);
        let a = factorize_dense(&m.view(), &opts).unwrap();
        let b = factorize_dense(&m.view(), &opts).unwrap();
        assert_eq!(a.host_features, b.host_features);
        assert_eq!(a.process_loadings, b.process_loadings);
        assert_eq!(a.error_trace, b.error_trace);
    }

    #[test]
    fn scaled_input_scales_objective_quadratically() {
        // The seeded init scale is sqrt(mean/k), so scaling M by c scales the
        // whole trajectory by sqrt(c) and the objective by c^2.
        let m = random_matrix(12, 18, 21);
        let scaled = m.mapv(|v| 4.0 * v);
        let mut opts = NmfOptions::new(3);
        opts.tolerance = 0.0;
        opts.max_iterations = 50;
        let base = factorize_dense(&m.view(), &opts).unwrap();
        let big = factorize_dense(&scaled.view(), &opts).unwrap();
        for (a, b) in base.error_trace.iter().zip(&big.error_trace) {
            assert!((b - 16.0 * a).abs() <= 1e-6 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn warm_start_is_used_when_shapes_match() {
        let m = random_matrix(10, 12, 2);
        let mut opts = NmfOptions::new(3);
        opts.tolerance = 0.0;
        opts.max_iterations = 40;
        let first = factorize_dense(&m.view(), &opts).unwrap();

        let mut warm_opts = opts.clone();
        warm_opts.warm_start = Some(WarmStart {
            host_features: first.host_features.clone(),
            process_loadings: first.process_loadings.clone(),
        });
        warm_opts.max_iterations = 5;
        let second = factorize_dense(&m.view(), &warm_opts).unwrap();
        // Trace starts exactly where the previous run left off.
        assert_eq!(second.error_trace[0], first.final_error());
        assert!(second.final_error() <= first.final_error() + 1e-9);

        // Mismatched shapes fall back to the seeded init.
        let mut stale = warm_opts.clone();
        stale.rank = 2;
        let third = factorize_dense(&m.view(), &stale).unwrap();
        assert_eq!(third.host_features.ncols(), 2);
    }

    #[test]
    fn dimension_errors() {
        let m = random_matrix(4, 6, 0);
        assert!(matches!(
            factorize_dense(&m.view(), &NmfOptions::new(5)),
            Err(Error::Dimension(_))
        ));
        let empty = Array2::<f64>::zeros((0, 0));
        assert!(matches!(
            factorize_dense(&empty.view(), &NmfOptions::new(1)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn negative_entries_are_rejected() {
        let m = arr2(&[[1.0, -0.5], [0.0, 2.0]]);
        assert!(matches!(
            factorize_dense(&m.view(), &NmfOptions::new(1)),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn reconstruction_error_examples() {
        let h = arr2(&[[1.0, 0.0], [0.0, 2.0]]);
        let w = arr2(&[[3.0, 1.0], [0.5, 2.0]]);
        let m = h.dot(&w);
        let exact = reconstruction_error(&m.view(), &h.view(), &w.view()).unwrap();
        assert!(exact.abs() < 1e-12);

        let one = arr2(&[[1.0]]);
        let zero = arr2(&[[0.0]]);
        assert_eq!(
            reconstruction_error(&one.view(), &zero.view(), &zero.view()).unwrap(),
            1.0
        );

        let m = random_matrix(7, 9, 13);
        let h = random_matrix(7, 3, 14);
        let w = random_matrix(3, 9, 15);
        let fast = reconstruction_error(&m.view(), &h.view(), &w.view()).unwrap();
        let slow = naive_error(&m, &h, &w);
        assert!((fast - slow).abs() <= 1e-9 * slow.max(1.0));

        let bad = random_matrix(4, 9, 16);
        assert!(reconstruction_error(&m.view(), &bad.view(), &w.view()).is_err());
    }

    #[test]
    fn latent_labels_argmax_and_ties() {
        let h = arr2(&[[0.1, 0.9], [0.5, 0.5], [0.7, 0.2]]);
        assert_eq!(latent_labels(&h.view()), vec![1, 0, 0]);

        // Brute-force per-row scan oracle on a seeded matrix.
        let h = random_matrix(3, 5, 31);
        let labels = latent_labels(&h.view());
        for (i, &label) in labels.iter().enumerate() {
            for j in 0..5 {
                assert!(h[[i, label]] >= h[[i, j]]);
            }
        }
    }
}
