//! Drifted-stream synthesis: labeled latent-vector streams with a controlled
//! abrupt, gradual or incremental drift between two Gaussian-mixture
//! concepts, calibrated to a target Jensen-Shannon distance.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mixture::{js_distance, random_mixture, MixtureModel, ModelRanges};

/// How the stream transitions from the old concept to the new one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftType {
    /// The new concept replaces the old one instantly.
    Abrupt,
    /// Whole instances alternate between the concepts across the window,
    /// with the odds shifting toward the new one.
    Gradual,
    /// Each window instance blends rows from both concepts, the new
    /// concept's share ramping up linearly.
    Incremental,
}

impl std::fmt::Display for DriftType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DriftType::Abrupt => write!(f, "abrupt"),
            DriftType::Gradual => write!(f, "gradual"),
            DriftType::Incremental => write!(f, "incremental"),
        }
    }
}

impl std::str::FromStr for DriftType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "abrupt" => Ok(DriftType::Abrupt),
            "gradual" => Ok(DriftType::Gradual),
            "incremental" => Ok(DriftType::Incremental),
            other => Err(Error::InvalidParams(format!(
                "unknown drift type {other:?}; expected abrupt, gradual or incremental"
            ))),
        }
    }
}

/// Full description of a synthetic stream.
#[derive(Debug, Clone)]
pub struct StreamSpec {
    pub drift_type: DriftType,
    /// Window length in instances between the two stable concepts.
    pub drift_duration: u64,
    /// Target Jensen-Shannon distance between the concepts.
    pub drift_magnitude: f64,
    /// Acceptable deviation from the target distance.
    pub drift_precision: f64,
    pub clusters_before: usize,
    pub clusters_after: usize,
    pub latent_features: usize,
    /// Host latent vectors per instance.
    pub instance_size: usize,
    /// Instances emitted before the drift window opens.
    pub instances_before: u64,
    pub total_instances: u64,
    pub seed: u64,
}

impl StreamSpec {
    pub fn validate(&self) -> Result<()> {
        if self.drift_type == DriftType::Abrupt && self.drift_duration != 0 {
            return Err(Error::InvalidParams(
                "abrupt drift requires drift_duration = 0".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.drift_magnitude) {
            return Err(Error::InvalidParams("drift_magnitude must lie in [0, 1]".into()));
        }
        if self.drift_precision < 0.0 {
            return Err(Error::InvalidParams("drift_precision must be non-negative".into()));
        }
        if self.drift_magnitude + self.drift_precision > 1.0 + 1e-12 {
            return Err(Error::InvalidParams(
                "drift_magnitude + drift_precision must not exceed 1".into(),
            ));
        }
        if self.clusters_before == 0 || self.clusters_after == 0 {
            return Err(Error::InvalidParams("cluster counts must be at least 1".into()));
        }
        if self.latent_features == 0 {
            return Err(Error::InvalidParams("latent_features must be at least 1".into()));
        }
        if self.instance_size == 0 {
            return Err(Error::InvalidParams("instance_size must be at least 1".into()));
        }
        if self.instances_before == 0 {
            return Err(Error::InvalidParams("instances_before must be at least 1".into()));
        }
        if self.total_instances == 0 {
            return Err(Error::InvalidParams("total_instances must be at least 1".into()));
        }
        Ok(())
    }

    /// First instance index inside the drift window.
    pub fn drift_start(&self) -> u64 {
        self.instances_before
    }

    /// First instance index fully on the new concept.
    pub fn drift_end(&self) -> u64 {
        self.instances_before + self.drift_duration
    }
}

/// One interval's worth of host latent vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentInstance {
    pub index: u64,
    /// instance_size x latent_features.
    pub rows: Array2<f64>,
    /// Ground-truth source component per row; new-concept components are
    /// offset by `clusters_before` so labels stay globally distinct.
    pub labels: Option<Vec<usize>>,
}

/// A calibrated pre/post concept pair.
#[derive(Debug, Clone)]
pub struct ModelPair {
    pub pre: MixtureModel,
    pub post: MixtureModel,
    /// Jensen-Shannon distance measured on the accepted pair.
    pub measured_js: f64,
    pub attempts: usize,
}

/// Calibration knobs for [`calibrate_model_pair`].
#[derive(Debug, Clone)]
pub struct CalibrationOptions {
    /// Maximum number of post-concept redraws.
    pub max_attempts: usize,
    /// Monte-Carlo sample count per distance estimate.
    pub js_samples: usize,
    pub ranges: ModelRanges,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            max_attempts: 500,
            js_samples: 100_000,
            ranges: ModelRanges::default(),
        }
    }
}

/// Draws the pre-drift concept once, then redraws the post-drift concept
/// until the measured Jensen-Shannon distance lands within
/// `drift_magnitude +/- drift_precision` or the attempt budget runs out.
pub fn calibrate_model_pair<R: Rng>(
    spec: &StreamSpec,
    opts: &CalibrationOptions,
    rng: &mut R,
) -> Result<ModelPair> {
    spec.validate()?;
    if !(spec.drift_precision > 0.0) {
        return Err(Error::InvalidParams(
            "calibration needs drift_precision > 0".into(),
        ));
    }
    let pre = random_mixture(spec.clusters_before, spec.latent_features, &opts.ranges, rng)?;
    let mut closest = f64::INFINITY;
    for attempt in 1..=opts.max_attempts {
        let post = random_mixture(spec.clusters_after, spec.latent_features, &opts.ranges, rng)?;
        let measured = js_distance(&pre, &post, opts.js_samples, rng)?;
        if (measured - spec.drift_magnitude).abs() <= spec.drift_precision {
            return Ok(ModelPair {
                pre,
                post,
                measured_js: measured,
                attempts: attempt,
            });
        }
        if (measured - spec.drift_magnitude).abs() < (closest - spec.drift_magnitude).abs() {
            closest = measured;
        }
    }
    Err(Error::CalibrationBudget {
        attempts: opts.max_attempts,
        target: spec.drift_magnitude,
        precision: spec.drift_precision,
        closest,
    })
}

/// Sequential instance generator over an accepted concept pair.
///
/// Row index doubles as host identity downstream, so each host keeps a fixed
/// source component within each concept (largest-remainder allocation of the
/// component weights over the instance size). Detectors then see per-host
/// streams whose noise is the within-component spread rather than the full
/// between-component spread of the mixture.
#[derive(Debug)]
pub struct DriftStreamGenerator {
    spec: StreamSpec,
    pre: MixtureModel,
    post: MixtureModel,
    /// Host -> component index in the pre-drift concept.
    pre_assign: Vec<usize>,
    /// Host -> component index in the post-drift concept.
    post_assign: Vec<usize>,
    emitted: u64,
    rng: ChaCha8Rng,
}

/// Largest-remainder allocation of `size` rows over the component weights;
/// hosts are grouped by component in index order.
fn component_allocation(model: &MixtureModel, size: usize) -> Vec<usize> {
    let n = model.n_components();
    let mut counts: Vec<usize> = Vec::with_capacity(n);
    let mut remainders: Vec<(usize, f64)> = Vec::with_capacity(n);
    let mut assigned = 0;
    for (c, comp) in model.components().iter().enumerate() {
        let exact = comp.weight() * size as f64;
        let floor = exact.floor() as usize;
        counts.push(floor);
        assigned += floor;
        remainders.push((c, exact - exact.floor()));
    }
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for &(c, _) in remainders.iter().take(size - assigned) {
        counts[c] += 1;
    }
    let mut assign = Vec::with_capacity(size);
    for (c, &count) in counts.iter().enumerate() {
        assign.extend(std::iter::repeat_n(c, count));
    }
    assign
}

impl DriftStreamGenerator {
    /// Builds a generator around explicit concept models. The instance RNG
    /// is derived from the spec seed.
    pub fn with_models(spec: StreamSpec, pre: MixtureModel, post: MixtureModel) -> Result<Self> {
        spec.validate()?;
        if pre.dim() != spec.latent_features || post.dim() != spec.latent_features {
            return Err(Error::Dimension(
                "concept models must match latent_features".into(),
            ));
        }
        let rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(1));
        let pre_assign = component_allocation(&pre, spec.instance_size);
        let post_assign = component_allocation(&post, spec.instance_size);
        Ok(Self {
            spec,
            pre,
            post,
            pre_assign,
            post_assign,
            emitted: 0,
            rng,
        })
    }

    /// Calibrates a concept pair from the spec seed and wraps it.
    pub fn calibrated(spec: StreamSpec, opts: &CalibrationOptions) -> Result<(Self, ModelPair)> {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let pair = calibrate_model_pair(&spec, opts, &mut rng)?;
        let generator = Self::with_models(spec, pair.pre.clone(), pair.post.clone())?;
        Ok((generator, pair))
    }

    pub fn spec(&self) -> &StreamSpec {
        &self.spec
    }

    pub fn emitted(&self) -> u64 {
        self.emitted
    }

    /// Emits the next instance.
    pub fn next_instance(&mut self) -> Result<LatentInstance> {
        if self.emitted >= self.spec.total_instances {
            return Err(Error::StreamExhausted {
                emitted: self.emitted,
                total: self.spec.total_instances,
            });
        }
        let s = self.emitted;
        let size = self.spec.instance_size;

        // Which hosts draw from the post concept this instance.
        let mut from_post = vec![false; size];
        if s >= self.spec.drift_end() {
            from_post.fill(true);
        } else if s >= self.spec.drift_start() {
            let progress =
                (s - self.spec.instances_before) as f64 / self.spec.drift_duration as f64;
            match self.spec.drift_type {
                DriftType::Gradual => {
                    // One draw decides the whole instance's source.
                    let rnd: f64 = self.rng.random();
                    if rnd < progress {
                        from_post.fill(true);
                    }
                }
                DriftType::Incremental => {
                    // Exactly size - round((1 - progress) * size) hosts flip
                    // to the post concept, chosen fresh each instance.
                    let pre_rows = ((1.0 - progress) * size as f64).round() as usize;
                    let mut order: Vec<usize> = (0..size).collect();
                    order.shuffle(&mut self.rng);
                    for &host in order.iter().take(size - pre_rows) {
                        from_post[host] = true;
                    }
                }
                DriftType::Abrupt => unreachable!("abrupt windows are empty"),
            }
        }

        let mut rows = Array2::zeros((size, self.spec.latent_features));
        let mut labels = Vec::with_capacity(size);
        for host in 0..size {
            let (model, component, label) = if from_post[host] {
                let c = self.post_assign[host];
                (&self.post, c, self.spec.clusters_before + c)
            } else {
                let c = self.pre_assign[host];
                (&self.pre, c, c)
            };
            let x = model.components()[component].sample(&mut self.rng);
            rows.row_mut(host).assign(&x);
            labels.push(label);
        }
        self.emitted += 1;
        Ok(LatentInstance {
            index: s,
            rows,
            labels: Some(labels),
        })
    }

    /// Emits every remaining instance.
    pub fn collect_remaining(&mut self) -> Result<Vec<LatentInstance>> {
        let mut out = Vec::new();
        while self.emitted < self.spec.total_instances {
            out.push(self.next_instance()?);
        }
        Ok(out)
    }
}

/// Generates a full stream and writes the instance CSV plus a plain-text
/// manifest. Returns the instances and the accepted concept pair.
pub fn generate_stream(
    spec: &StreamSpec,
    opts: &CalibrationOptions,
    stream_path: &std::path::Path,
    manifest_path: &std::path::Path,
) -> Result<(Vec<LatentInstance>, ModelPair)> {
    let (mut generator, pair) = DriftStreamGenerator::calibrated(spec.clone(), opts)?;
    let instances = generator.collect_remaining()?;
    crate::io::write_latent_stream(stream_path, &instances)?;
    crate::io::write_manifest(manifest_path, spec, pair.measured_js)?;
    Ok((instances, pair))
}
