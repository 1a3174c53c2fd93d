//! DenStream micro-cluster maintenance and offline cluster extraction.
//!
//! Points merge into the nearest micro-cluster whose post-merge radius stays
//! within `epsilon`; micro-cluster statistics fade by `2^(-decay_rate * dt)`.
//! Micro-clusters heavy enough (`weight > beta * mu`) are *potential*; the
//! rest sit in an outlier buffer and are pruned periodically. Final clusters
//! come from weighted DBSCAN over the potential micro-cluster centers.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::dbscan::{dbscan_weighted, NOISE};
use crate::error::{Error, Result};

/// Compact summary of nearby stream points.
#[derive(Debug, Clone)]
pub struct MicroCluster {
    /// Weighted linear sum of member points.
    cf1: Array1<f64>,
    /// Weighted per-coordinate sum of squares.
    cf2: Array1<f64>,
    weight: f64,
    created_at: u64,
    last_update: u64,
}

impl MicroCluster {
    /// A fresh micro-cluster holding a single point of weight 1.
    pub fn from_point(x: &ArrayView1<f64>, t: u64) -> Self {
        Self {
            cf1: x.to_owned(),
            cf2: x.mapv(|v| v * v),
            weight: 1.0,
            created_at: t,
            last_update: t,
        }
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn created_at(&self) -> u64 {
        self.created_at
    }

    pub fn last_update(&self) -> u64 {
        self.last_update
    }

    pub fn dim(&self) -> usize {
        self.cf1.len()
    }

    pub fn center(&self) -> Array1<f64> {
        &self.cf1 / self.weight
    }

    /// Root-mean-square spread of the members around the center.
    pub fn radius(&self) -> f64 {
        radius_from_stats(&self.cf1, &self.cf2, self.weight)
    }

    pub fn distance_to(&self, x: &ArrayView1<f64>) -> f64 {
        let c = self.center();
        c.iter()
            .zip(x.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Fades the statistics to time `t`. Center and radius are unchanged
    /// because cf1, cf2 and weight all scale by the same factor.
    pub fn decay_to(&mut self, decay_rate: f64, t: u64) -> Result<()> {
        if t < self.last_update {
            return Err(Error::TimeOrder {
                t,
                last: self.last_update,
            });
        }
        let dt = (t - self.last_update) as f64;
        if dt > 0.0 {
            let factor = (-decay_rate * dt).exp2();
            self.cf1 *= factor;
            self.cf2 *= factor;
            self.weight *= factor;
        }
        self.last_update = t;
        Ok(())
    }

    /// Radius this micro-cluster would have after absorbing `x`.
    pub fn radius_with(&self, x: &ArrayView1<f64>) -> f64 {
        let cf1 = &self.cf1 + x;
        let cf2 = &self.cf2 + &x.mapv(|v| v * v);
        radius_from_stats(&cf1, &cf2, self.weight + 1.0)
    }

    fn absorb(&mut self, x: &ArrayView1<f64>) {
        self.cf1 += x;
        self.cf2 += &x.mapv(|v| v * v);
        self.weight += 1.0;
    }
}

fn radius_from_stats(cf1: &Array1<f64>, cf2: &Array1<f64>, weight: f64) -> f64 {
    let center_sq = cf1.iter().map(|v| (v / weight) * (v / weight)).sum::<f64>();
    let mean_sq = cf2.sum() / weight;
    (mean_sq - center_sq).max(0.0).sqrt()
}

/// DenStream configuration.
#[derive(Debug, Clone)]
pub struct DenStreamParams {
    /// Fading exponent: statistics scale by `2^(-decay_rate * dt)`.
    pub decay_rate: f64,
    /// Maximum micro-cluster radius.
    pub epsilon: f64,
    /// Potential-weight factor, in (0, 1].
    pub beta: f64,
    /// Density threshold.
    pub mu: f64,
    /// DBSCAN radius for offline clustering.
    pub offline_eps: f64,
    /// DBSCAN density threshold for offline clustering.
    pub offline_min_weight: f64,
}

impl DenStreamParams {
    /// Parameters with the offline stage defaulted to `2 * epsilon` / `mu`.
    pub fn new(decay_rate: f64, epsilon: f64, beta: f64, mu: f64) -> Result<Self> {
        let params = Self {
            decay_rate,
            epsilon,
            beta,
            mu,
            offline_eps: 2.0 * epsilon,
            offline_min_weight: mu,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.decay_rate > 0.0) {
            return Err(Error::InvalidParams("decay_rate must be positive".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParams("epsilon must be positive".into()));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::InvalidParams("beta must lie in (0, 1]".into()));
        }
        if !(self.mu > 0.0) {
            return Err(Error::InvalidParams("mu must be positive".into()));
        }
        if !(self.beta * self.mu > 1.0) {
            return Err(Error::InvalidParams(
                "beta * mu must exceed 1 for a finite pruning period".into(),
            ));
        }
        if !(self.offline_eps > 0.0) || !(self.offline_min_weight > 0.0) {
            return Err(Error::InvalidParams(
                "offline_eps and offline_min_weight must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Pruning period: the time an outlier micro-cluster needs to either
    /// reach potential weight or fade away.
    pub fn pruning_period(&self) -> u64 {
        let bm = self.beta * self.mu;
        let period = (bm / (bm - 1.0)).log2() / self.decay_rate;
        (period.ceil() as u64).max(1)
    }
}

/// What happened to a point handed to [`ClusterModel::merge_point`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MergeOutcome {
    AbsorbedByPotential,
    AbsorbedByOutlier,
    /// Absorbed by an outlier micro-cluster that then crossed the potential
    /// weight threshold.
    Promoted,
    NewOutlier,
}

/// Labeling of the potential micro-clusters produced by offline DBSCAN.
#[derive(Debug, Clone)]
pub struct FinalClusters {
    /// One label per potential micro-cluster; [`NOISE`] marks noise.
    pub labels: Vec<isize>,
}

impl FinalClusters {
    pub fn n_clusters(&self) -> usize {
        crate::dbscan::cluster_count(&self.labels)
    }
}

/// The online micro-cluster model.
#[derive(Debug, Clone)]
pub struct ClusterModel {
    params: DenStreamParams,
    pruning_period: u64,
    potential: Vec<MicroCluster>,
    outliers: Vec<MicroCluster>,
}

impl ClusterModel {
    pub fn new(params: DenStreamParams) -> Result<Self> {
        params.validate()?;
        let pruning_period = params.pruning_period();
        Ok(Self {
            params,
            pruning_period,
            potential: Vec::new(),
            outliers: Vec::new(),
        })
    }

    pub fn params(&self) -> &DenStreamParams {
        &self.params
    }

    pub fn pruning_period(&self) -> u64 {
        self.pruning_period
    }

    pub fn potential(&self) -> &[MicroCluster] {
        &self.potential
    }

    pub fn outliers(&self) -> &[MicroCluster] {
        &self.outliers
    }

    pub fn total_weight(&self) -> f64 {
        self.potential
            .iter()
            .chain(self.outliers.iter())
            .map(MicroCluster::weight)
            .sum()
    }

    /// Discards all micro-clusters, keeping the configuration.
    pub fn reset(&mut self) {
        self.potential.clear();
        self.outliers.clear();
    }

    /// Folds one point into the model at time `t`.
    ///
    /// Every micro-cluster is first decayed to `t`. The point then goes to
    /// the nearest potential micro-cluster if the merge keeps its radius
    /// within epsilon, otherwise to the nearest outlier micro-cluster under
    /// the same test, otherwise it seeds a new outlier micro-cluster.
    pub fn merge_point(&mut self, x: &ArrayView1<f64>, t: u64) -> Result<MergeOutcome> {
        if let Some(v) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                value: *v,
                context: "merge_point input".into(),
            });
        }
        if let Some(mc) = self.potential.first().or_else(|| self.outliers.first()) {
            if mc.dim() != x.len() {
                return Err(Error::Dimension(format!(
                    "point has {} features, model has {}",
                    x.len(),
                    mc.dim()
                )));
            }
        }
        self.decay_all(t)?;

        if let Some(idx) = nearest(&self.potential, x) {
            if self.potential[idx].radius_with(x) <= self.params.epsilon {
                self.potential[idx].absorb(x);
                return Ok(MergeOutcome::AbsorbedByPotential);
            }
        }
        if let Some(idx) = nearest(&self.outliers, x) {
            if self.outliers[idx].radius_with(x) <= self.params.epsilon {
                self.outliers[idx].absorb(x);
                if self.outliers[idx].weight() > self.params.beta * self.params.mu {
                    let promoted = self.outliers.swap_remove(idx);
                    self.potential.push(promoted);
                    return Ok(MergeOutcome::Promoted);
                }
                return Ok(MergeOutcome::AbsorbedByOutlier);
            }
        }
        self.outliers.push(MicroCluster::from_point(x, t));
        Ok(MergeOutcome::NewOutlier)
    }

    /// Removes potential micro-clusters that faded below `beta * mu` and
    /// outlier micro-clusters below their age-dependent weight floor.
    pub fn prune(&mut self, t: u64) -> Result<()> {
        self.decay_all(t)?;
        let floor = self.params.beta * self.params.mu;
        self.potential.retain(|mc| mc.weight() >= floor);
        let (decay, period) = (self.params.decay_rate, self.pruning_period as f64);
        self.outliers.retain(|mc| {
            let age = (t - mc.created_at()) as f64;
            let xi = ((-decay * (age + period)).exp2() - 1.0) / ((-decay * period).exp2() - 1.0);
            mc.weight() >= xi
        });
        Ok(())
    }

    /// Runs weighted DBSCAN over the potential micro-cluster centers.
    pub fn offline_cluster(&self) -> FinalClusters {
        if self.potential.is_empty() {
            return FinalClusters { labels: Vec::new() };
        }
        let dim = self.potential[0].dim();
        let centers = Array2::from_shape_fn((self.potential.len(), dim), |(i, j)| {
            self.potential[i].center()[j]
        });
        let weights: Vec<f64> = self.potential.iter().map(MicroCluster::weight).collect();
        let labels = dbscan_weighted(
            &centers.view(),
            &weights,
            self.params.offline_eps,
            self.params.offline_min_weight,
        );
        FinalClusters { labels }
    }

    /// Assigns each row of `points` the final-cluster label of the nearest
    /// non-noise potential micro-cluster within `offline_eps`, or noise.
    pub fn assign_points(&self, points: &ArrayView2<f64>, clusters: &FinalClusters) -> Vec<isize> {
        points
            .rows()
            .into_iter()
            .map(|row| {
                let mut best: Option<(f64, isize)> = None;
                for (mc, &label) in self.potential.iter().zip(&clusters.labels) {
                    if label == NOISE {
                        continue;
                    }
                    let d = mc.distance_to(&row);
                    if d <= self.params.offline_eps
                        && best.map_or(true, |(bd, _)| d < bd)
                    {
                        best = Some((d, label));
                    }
                }
                best.map_or(NOISE, |(_, label)| label)
            })
            .collect()
    }

    fn decay_all(&mut self, t: u64) -> Result<()> {
        let rate = self.params.decay_rate;
        for mc in self.potential.iter_mut().chain(self.outliers.iter_mut()) {
            mc.decay_to(rate, t)?;
        }
        Ok(())
    }
}

/// Index of the micro-cluster nearest to `x`. Ties break toward the earliest
/// creation time, then the lowest index.
fn nearest(clusters: &[MicroCluster], x: &ArrayView1<f64>) -> Option<usize> {
    clusters
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            a.distance_to(x)
                .partial_cmp(&b.distance_to(x))
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.created_at().cmp(&b.created_at()))
        })
        .map(|(i, _)| i)
}
