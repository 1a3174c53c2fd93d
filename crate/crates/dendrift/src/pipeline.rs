//! The end-to-end drift-aware profiling pipeline: per interval it acquires
//! host latent vectors (factorizing event logs, or reading a generated
//! stream), steps the drift state machine, retrains the cluster model on a
//! confirmed drift, folds the vectors into DenStream, prunes on schedule and
//! extracts final clusters for evaluation.

use std::collections::BTreeMap;
use std::time::Instant;

use ndarray::{Array2, ArrayView2};

use crate::denstream::{ClusterModel, DenStreamParams, FinalClusters};
use crate::drift::{Decision, DriftState, Mode};
use crate::error::{Error, Result};
use crate::events::{build_matrix_with_roster, roster_from_interval, EventRecord};
use crate::generator::LatentInstance;
use crate::io::TimelineRow;
use crate::nmf::{factorize, latent_labels, NmfOptions, WarmStart};

/// How the stable host set is chosen for event-log sources.
#[derive(Debug, Clone)]
pub enum RosterPolicy {
    /// Roster = hosts seen in the first processed interval.
    SeenInFirstInterval,
    /// Caller-provided roster.
    Explicit(Vec<String>),
}

/// When to run offline clustering.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OfflineSchedule {
    EveryInterval,
    OnDemand,
}

/// Minimum number of changed hosts that counts as a potential drift.
#[derive(Debug, Clone, Copy)]
pub enum DriftThreshold {
    Hosts(usize),
    /// Fraction of the roster, rounded, at least 1.
    Fraction(f64),
}

impl DriftThreshold {
    pub fn resolve(&self, n_hosts: usize) -> usize {
        match *self {
            DriftThreshold::Hosts(n) => n,
            DriftThreshold::Fraction(f) => ((f * n_hosts as f64).round() as usize).max(1),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Latent features per host (NMF rank for event-log sources).
    pub n_features: usize,
    /// Per-detector Page-Hinckley alarm threshold.
    pub change_threshold: f64,
    pub drift_threshold: DriftThreshold,
    /// Page-Hinckley minimal-magnitude term.
    pub pht_delta: f64,
    pub denstream: DenStreamParams,
    pub nmf_max_iterations: usize,
    pub nmf_tolerance: f64,
    pub nmf_seed: u64,
    pub roster: RosterPolicy,
    pub pruning: bool,
    pub offline: OfflineSchedule,
    /// When false the detectors still run and log, but a confirmed drift
    /// never resets anything (the plain-DenStream baseline).
    pub reset_on_drift: bool,
}

impl PipelineConfig {
    /// Scikit-style detector defaults over the given DenStream parameters.
    pub fn new(n_features: usize, denstream: DenStreamParams) -> Self {
        Self {
            n_features,
            change_threshold: 50.0,
            drift_threshold: DriftThreshold::Hosts(50),
            pht_delta: 0.005,
            denstream,
            nmf_max_iterations: 200,
            nmf_tolerance: 1e-4,
            nmf_seed: 0,
            roster: RosterPolicy::SeenInFirstInterval,
            pruning: true,
            offline: OfflineSchedule::EveryInterval,
            reset_on_drift: true,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_features == 0 {
            return Err(Error::InvalidParams("n_features must be at least 1".into()));
        }
        if let DriftThreshold::Hosts(0) = self.drift_threshold {
            return Err(Error::InvalidParams("drift_threshold must be at least 1".into()));
        }
        self.denstream.validate()
    }
}

/// Wall-clock cost of each pipeline stage, in milliseconds.
#[derive(Debug, Clone, Copy, Default)]
pub struct StageTimings {
    pub nmf_ms: f64,
    pub detection_ms: f64,
    pub clustering_ms: f64,
    pub offline_ms: f64,
}

/// Everything the pipeline observed in one interval.
#[derive(Debug, Clone)]
pub struct IntervalReport {
    pub interval: u64,
    /// Mode after the interval's decision.
    pub mode: Mode,
    pub changed_hosts: usize,
    pub decision: Decision,
    /// Whether this interval's decision reset the model and banks.
    pub reset_performed: bool,
    /// Final-cluster id per host, -1 for noise; present when offline
    /// clustering ran.
    pub assignments: Option<Vec<isize>>,
    /// Distinct final clusters found by offline clustering.
    pub n_clusters: Option<usize>,
    /// Majority-mapped clustering accuracy against the ground-truth labels.
    pub accuracy: Option<f64>,
    pub nmf_error: Option<f64>,
    pub timings: StageTimings,
    pub warnings: Vec<String>,
}

impl IntervalReport {
    pub fn timeline_row(&self, accuracy_baseline: Option<f64>) -> TimelineRow {
        TimelineRow {
            interval: self.interval,
            changed_hosts: self.changed_hosts,
            mode: self.mode,
            decision: self.decision,
            accuracy_dendrift: self.accuracy,
            accuracy_baseline,
            nmf_error: self.nmf_error,
        }
    }
}

/// Sequential per-interval pipeline state.
#[derive(Debug)]
pub struct Pipeline {
    config: PipelineConfig,
    model: ClusterModel,
    drift: Option<DriftState>,
    roster: Option<Vec<String>>,
    previous_factors: Option<WarmStart>,
    n_hosts: Option<usize>,
    last_interval: Option<u64>,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let model = ClusterModel::new(config.denstream.clone())?;
        Ok(Self {
            config,
            model,
            drift: None,
            roster: None,
            previous_factors: None,
            n_hosts: None,
            last_interval: None,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn cluster_model(&self) -> &ClusterModel {
        &self.model
    }

    pub fn drift_state(&self) -> Option<&DriftState> {
        self.drift.as_ref()
    }

    /// Host roster, once fixed by the first event interval.
    pub fn roster(&self) -> Option<&[String]> {
        self.roster.as_deref()
    }

    /// Runs offline clustering on demand.
    pub fn offline_now(&self) -> FinalClusters {
        self.model.offline_cluster()
    }

    /// Processes one interval of a latent-vector stream.
    pub fn process_latent(&mut self, instance: &LatentInstance) -> Result<IntervalReport> {
        self.step(
            instance.index,
            &instance.rows.view(),
            instance.labels.as_deref(),
            None,
            0.0,
            Vec::new(),
        )
    }

    /// Builds the count matrix for interval `t` from `events`, factorizes it
    /// and processes the resulting latent vectors. Ground-truth labels come
    /// from the argmax-feature convention.
    pub fn process_events(&mut self, events: &[EventRecord], t: u64) -> Result<IntervalReport> {
        if self.roster.is_none() {
            self.roster = Some(match &self.config.roster {
                RosterPolicy::SeenInFirstInterval => roster_from_interval(events, t),
                RosterPolicy::Explicit(hosts) => {
                    let mut hosts = hosts.clone();
                    hosts.sort();
                    hosts.dedup();
                    hosts
                }
            });
        }
        let roster = self.roster.clone().expect("roster fixed above");
        let (matrix, mut warnings) = build_matrix_with_roster(events, t, &roster);

        let nmf_started = Instant::now();
        let (latent, nmf_error) = if matrix.n_processes() == 0 {
            warnings.push(format!("interval {t}: no events; latent vectors are all zero"));
            (Array2::zeros((roster.len(), self.config.n_features)), None)
        } else {
            let mut opts = NmfOptions::new(self.config.n_features);
            opts.max_iterations = self.config.nmf_max_iterations;
            opts.tolerance = self.config.nmf_tolerance;
            opts.seed = self.config.nmf_seed;
            opts.warm_start = self.previous_factors.take();
            let result = factorize(&matrix, &opts)?;
            self.previous_factors = Some(WarmStart {
                host_features: result.host_features.clone(),
                process_loadings: result.process_loadings.clone(),
            });
            (result.host_features.clone(), Some(result.final_error()))
        };
        let nmf_ms = nmf_started.elapsed().as_secs_f64() * 1e3;

        let truth = latent_labels(&latent.view());
        let mut report = self.step(t, &latent.view(), Some(&truth), nmf_error, nmf_ms, warnings)?;
        report.nmf_error = nmf_error;
        Ok(report)
    }

    fn step(
        &mut self,
        t: u64,
        latent: &ArrayView2<f64>,
        truth: Option<&[usize]>,
        nmf_error: Option<f64>,
        nmf_ms: f64,
        warnings: Vec<String>,
    ) -> Result<IntervalReport> {
        if let Some(last) = self.last_interval {
            if t <= last {
                return Err(Error::OutOfOrder { t, last });
            }
        }
        let (rows, cols) = latent.dim();
        if cols != self.config.n_features {
            return Err(Error::Dimension(format!(
                "latent matrix has {cols} features, configured {}",
                self.config.n_features
            )));
        }
        match self.n_hosts {
            None => self.n_hosts = Some(rows),
            Some(n) if n != rows => {
                return Err(Error::Dimension(format!(
                    "interval {t} has {rows} hosts, previous intervals had {n}"
                )))
            }
            _ => {}
        }

        let drift = match &mut self.drift {
            Some(d) => d,
            None => {
                let threshold = self.config.drift_threshold.resolve(rows);
                self.drift.insert(DriftState::new(
                    rows,
                    self.config.n_features,
                    self.config.pht_delta,
                    self.config.change_threshold,
                    threshold,
                )?)
            }
        };

        let detect_started = Instant::now();
        let outcome = drift.step_mode(latent)?;
        let detection_ms = detect_started.elapsed().as_secs_f64() * 1e3;

        let reset_performed = outcome.decision == Decision::DriftConfirmed
            && self.config.reset_on_drift;
        if reset_performed {
            self.model.reset();
            drift.reset_banks();
        }

        let cluster_started = Instant::now();
        for row in latent.rows() {
            self.model.merge_point(&row, t)?;
        }
        if self.config.pruning && t % self.model.pruning_period() == 0 {
            self.model.prune(t)?;
        }
        let clustering_ms = cluster_started.elapsed().as_secs_f64() * 1e3;

        let offline_started = Instant::now();
        let (assignments, acc, n_clusters) = if self.config.offline == OfflineSchedule::EveryInterval
        {
            let clusters = self.model.offline_cluster();
            let assignments = self.model.assign_points(latent, &clusters);
            let acc = match truth {
                Some(labels) => Some(accuracy(&assignments, labels)?),
                None => None,
            };
            (Some(assignments), acc, Some(clusters.n_clusters()))
        } else {
            (None, None, None)
        };
        let offline_ms = offline_started.elapsed().as_secs_f64() * 1e3;

        self.last_interval = Some(t);
        Ok(IntervalReport {
            interval: t,
            mode: drift.mode(),
            changed_hosts: outcome.changed_hosts,
            decision: outcome.decision,
            reset_performed,
            assignments,
            n_clusters,
            accuracy: acc,
            nmf_error,
            timings: StageTimings {
                nmf_ms,
                detection_ms,
                clustering_ms,
                offline_ms,
            },
            warnings,
        })
    }
}

/// Majority-mapped clustering accuracy.
///
/// Each non-noise cluster maps to its most frequent true label (ties toward
/// the smallest label); a host scores when its cluster's mapped label equals
/// its own, and noise hosts never score.
pub fn accuracy(assignments: &[isize], truth: &[usize]) -> Result<f64> {
    if assignments.is_empty() {
        return Err(Error::InvalidInput("cannot score an empty host set".into()));
    }
    if assignments.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "{} assignments vs {} labels",
            assignments.len(),
            truth.len()
        )));
    }
    let mut counts: BTreeMap<isize, BTreeMap<usize, usize>> = BTreeMap::new();
    for (&cluster, &label) in assignments.iter().zip(truth) {
        if cluster != crate::dbscan::NOISE {
            *counts.entry(cluster).or_default().entry(label).or_insert(0) += 1;
        }
    }
    let mapped: BTreeMap<isize, usize> = counts
        .into_iter()
        .map(|(cluster, by_label)| {
            let majority = by_label
                .into_iter()
                .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                .map(|(label, _)| label)
                .expect("cluster seen at least once");
            (cluster, majority)
        })
        .collect();
    let correct = assignments
        .iter()
        .zip(truth)
        .filter(|&(&cluster, &label)| {
            cluster != crate::dbscan::NOISE && mapped[&cluster] == label
        })
        .count();
    Ok(correct as f64 / assignments.len() as f64)
}

/// Runs the pipeline over a labeled stream; with `with_baseline` a second,
/// never-resetting pass runs on the same stream and its accuracy lands in
/// the `accuracy_baseline` column.
pub fn run_experiment(
    config: &PipelineConfig,
    stream: &[LatentInstance],
    with_baseline: bool,
) -> Result<Vec<TimelineRow>> {
    if stream.iter().any(|i| i.labels.is_none()) {
        return Err(Error::InvalidInput(
            "experiment streams need ground-truth labels".into(),
        ));
    }
    let mut dendrift_config = config.clone();
    dendrift_config.reset_on_drift = true;
    dendrift_config.offline = OfflineSchedule::EveryInterval;
    let mut dendrift = Pipeline::new(dendrift_config)?;

    let mut baseline = if with_baseline {
        let mut baseline_config = config.clone();
        baseline_config.reset_on_drift = false;
        baseline_config.offline = OfflineSchedule::EveryInterval;
        Some(Pipeline::new(baseline_config)?)
    } else {
        None
    };

    let mut rows = Vec::with_capacity(stream.len());
    for instance in stream {
        let report = dendrift.process_latent(instance)?;
        let baseline_accuracy = match &mut baseline {
            Some(pipeline) => pipeline.process_latent(instance)?.accuracy,
            None => None,
        };
        rows.push(report.timeline_row(baseline_accuracy));
    }
    Ok(rows)
}
