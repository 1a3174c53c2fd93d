//! Gaussian mixture models: construction, sampling, density evaluation and
//! the Monte-Carlo Jensen-Shannon distance used to calibrate drift magnitude.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.8378770664093453;

/// One weighted multivariate normal component.
#[derive(Debug, Clone)]
pub struct GaussianComponent {
    mean: Array1<f64>,
    covariance: Array2<f64>,
    weight: f64,
    /// Lower-triangular Cholesky factor of the covariance.
    chol: Array2<f64>,
    /// log of the normalizing constant of the density.
    log_norm: f64,
}

impl GaussianComponent {
    pub fn new(mean: Array1<f64>, covariance: Array2<f64>, weight: f64) -> Result<Self> {
        let dim = mean.len();
        if covariance.dim() != (dim, dim) {
            return Err(Error::Dimension(format!(
                "mean has {} coordinates but covariance is {:?}",
                dim,
                covariance.dim()
            )));
        }
        if !(weight > 0.0) {
            return Err(Error::InvalidParams("component weight must be positive".into()));
        }
        let chol = cholesky(&covariance)?;
        let log_det: f64 = 2.0 * chol.diag().iter().map(|d| d.ln()).sum::<f64>();
        let log_norm = -0.5 * (dim as f64 * LN_2PI + log_det);
        Ok(Self {
            mean,
            covariance,
            weight,
            chol,
            log_norm,
        })
    }

    /// Isotropic component with covariance `sigma^2 * I`.
    pub fn isotropic(mean: Array1<f64>, sigma: f64, weight: f64) -> Result<Self> {
        let dim = mean.len();
        let covariance = Array2::from_diag(&Array1::from_elem(dim, sigma * sigma));
        Self::new(mean, covariance, weight)
    }

    pub fn mean(&self) -> &Array1<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &Array2<f64> {
        &self.covariance
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_density(&self, x: &ArrayView1<f64>) -> f64 {
        let centered = x - &self.mean;
        // Solve L z = (x - mean) by forward substitution.
        let dim = self.dim();
        let mut z = Array1::<f64>::zeros(dim);
        for i in 0..dim {
            let mut acc = centered[i];
            for j in 0..i {
                acc -= self.chol[[i, j]] * z[j];
            }
            z[i] = acc / self.chol[[i, i]];
        }
        self.log_norm - 0.5 * z.iter().map(|v| v * v).sum::<f64>()
    }

    /// Draws one point from this component alone.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Array1<f64> {
        let dim = self.dim();
        let z = Array1::from_shape_fn(dim, |_| rng.sample::<f64, _>(StandardNormal));
        let mut out = self.mean.clone();
        for i in 0..dim {
            for j in 0..=i {
                out[i] += self.chol[[i, j]] * z[j];
            }
        }
        out
    }
}

/// Lower-triangular Cholesky factorization; fails on non-SPD input.
fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            if (a[[i, j]] - a[[j, i]]).abs() > 1e-9 * a[[i, j]].abs().max(1.0) {
                return Err(Error::NotPositiveDefinite);
            }
            let mut acc = a[[i, j]];
            for k in 0..j {
                acc -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if acc <= 0.0 {
                    return Err(Error::NotPositiveDefinite);
                }
                l[[i, j]] = acc.sqrt();
            } else {
                l[[i, j]] = acc / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// A weighted collection of Gaussian components describing a stable concept.
#[derive(Debug, Clone)]
pub struct MixtureModel {
    components: Vec<GaussianComponent>,
}

impl MixtureModel {
    pub fn new(components: Vec<GaussianComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidParams("mixture needs at least one component".into()));
        }
        let dim = components[0].dim();
        if components.iter().any(|c| c.dim() != dim) {
            return Err(Error::Dimension(
                "all mixture components must share a dimension".into(),
            ));
        }
        let total: f64 = components.iter().map(GaussianComponent::weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParams(format!(
                "component weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    /// Draws one point; returns it with the index of the source component.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> (Array1<f64>, usize) {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut idx = self.components.len() - 1;
        for (i, c) in self.components.iter().enumerate() {
            acc += c.weight();
            if u < acc {
                idx = i;
                break;
            }
        }
        (self.components[idx].sample(rng), idx)
    }

    pub fn log_density(&self, x: &ArrayView1<f64>) -> f64 {
        let terms: Vec<f64> = self
            .components
            .iter()
            .map(|c| c.weight().ln() + c.log_density(x))
            .collect();
        log_sum_exp(&terms)
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Value ranges for randomly generated mixture models.
#[derive(Debug, Clone)]
pub struct ModelRanges {
    pub mean_low: f64,
    pub mean_high: f64,
    pub sigma_low: f64,
    pub sigma_high: f64,
}

impl Default for ModelRanges {
    fn default() -> Self {
        Self {
            mean_low: 0.0,
            mean_high: 10.0,
            sigma_low: 0.3,
            sigma_high: 1.0,
        }
    }
}

/// Draws an equal-weight mixture with isotropic components: means uniform in
/// the mean range per coordinate, one sigma per component from the sigma
/// range.
pub fn random_mixture<R: Rng>(
    n_clusters: usize,
    n_features: usize,
    ranges: &ModelRanges,
    rng: &mut R,
) -> Result<MixtureModel> {
    if n_clusters == 0 {
        return Err(Error::InvalidParams("cluster count must be at least 1".into()));
    }
    if n_features == 0 {
        return Err(Error::InvalidParams("feature count must be at least 1".into()));
    }
    let weight = 1.0 / n_clusters as f64;
    let mut components = Vec::with_capacity(n_clusters);
    for _ in 0..n_clusters {
        let mean = Array1::from_shape_fn(n_features, |_| {
            rng.random_range(ranges.mean_low..ranges.mean_high)
        });
        let sigma = rng.random_range(ranges.sigma_low..ranges.sigma_high);
        components.push(GaussianComponent::isotropic(mean, sigma, weight)?);
    }
    MixtureModel::new(components)
}

/// Monte-Carlo estimate of the Jensen-Shannon distance (base-2 logs, so the
/// value lies in [0, 1]).
///
/// Half the samples come from each model; the divergence averages the two
/// Kullback-Leibler integrands against the equal mixture of `a` and `b`, and
/// the distance is the square root of the clamped divergence.
pub fn js_distance<R: Rng>(
    a: &MixtureModel,
    b: &MixtureModel,
    n_samples: usize,
    rng: &mut R,
) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension(format!(
            "mixtures have dimensions {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    if n_samples == 0 {
        return Err(Error::InvalidParams("n_samples must be at least 1".into()));
    }
    let n_a = n_samples / 2;
    let n_b = n_samples - n_a;
    let ln_half = 0.5f64.ln();

    let mut kl_a = 0.0;
    for _ in 0..n_a {
        let (x, _) = a.sample(rng);
        let la = a.log_density(&x.view());
        let lb = b.log_density(&x.view());
        let lm = log_sum_exp(&[la + ln_half, lb + ln_half]);
        kl_a += (la - lm) / std::f64::consts::LN_2;
    }
    let mut kl_b = 0.0;
    for _ in 0..n_b {
        let (x, _) = b.sample(rng);
        let la = a.log_density(&x.view());
        let lb = b.log_density(&x.view());
        let lm = log_sum_exp(&[la + ln_half, lb + ln_half]);
        kl_b += (lb - lm) / std::f64::consts::LN_2;
    }
    let divergence = 0.5 * (kl_a / n_a.max(1) as f64) + 0.5 * (kl_b / n_b.max(1) as f64);
    Ok(divergence.clamp(0.0, 1.0).sqrt())
}
