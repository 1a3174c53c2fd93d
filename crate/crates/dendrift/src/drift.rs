//! Page-Hinckley detector banks and the normal/change mode machine that
//! separates concept drifts from outliers.
//!
//! One two-sided Page-Hinckley detector watches each (host, feature) cell.
//! A host counts as changed in an interval when at least one of its feature
//! detectors alarms. Two full banks run side by side: the primary bank drives
//! the mode machine, while the spare bank is fed only in normal mode so that
//! when a change period ends it still carries the pre-change concept and can
//! tell a drift (post-change data alarms it) from an outlier (it stays quiet).

use ndarray::ArrayView2;

use crate::error::{Error, Result};

/// Two-sided mean-centered Page-Hinckley detector over a scalar stream.
#[derive(Debug, Clone)]
pub struct PhtDetector {
    n: u64,
    running_mean: f64,
    cum_pos: f64,
    min_cum_pos: f64,
    cum_neg: f64,
    max_cum_neg: f64,
    delta: f64,
    threshold: f64,
}

impl PhtDetector {
    /// `delta` is the minimal magnitude of change, `threshold` the allowed
    /// cumulative deviation before alarming.
    pub fn new(delta: f64, threshold: f64) -> Self {
        Self {
            n: 0,
            running_mean: 0.0,
            cum_pos: 0.0,
            min_cum_pos: 0.0,
            cum_neg: 0.0,
            max_cum_neg: 0.0,
            delta,
            threshold,
        }
    }

    pub fn samples_seen(&self) -> u64 {
        self.n
    }

    /// Feeds one observation; returns true when the detector alarms.
    /// An alarming detector resets itself so it can detect the next change.
    pub fn update(&mut self, x: f64) -> Result<bool> {
        if !x.is_finite() {
            return Err(Error::NonFinite {
                value: x,
                context: "Page-Hinckley update".into(),
            });
        }
        self.n += 1;
        self.running_mean += (x - self.running_mean) / self.n as f64;
        self.cum_pos += x - self.running_mean - self.delta / 2.0;
        self.min_cum_pos = self.min_cum_pos.min(self.cum_pos);
        self.cum_neg += x - self.running_mean + self.delta / 2.0;
        self.max_cum_neg = self.max_cum_neg.max(self.cum_neg);
        let alarm = self.cum_pos - self.min_cum_pos >= self.threshold
            || self.max_cum_neg - self.cum_neg >= self.threshold;
        if alarm {
            self.reset();
        }
        Ok(alarm)
    }

    /// Clears all statistics back to the freshly constructed state.
    pub fn reset(&mut self) {
        self.n = 0;
        self.running_mean = 0.0;
        self.cum_pos = 0.0;
        self.min_cum_pos = 0.0;
        self.cum_neg = 0.0;
        self.max_cum_neg = 0.0;
    }
}

/// One Page-Hinckley detector per (host, feature) cell.
#[derive(Debug, Clone)]
pub struct DetectorBank {
    detectors: Vec<PhtDetector>,
    n_hosts: usize,
    n_features: usize,
}

impl DetectorBank {
    pub fn new(n_hosts: usize, n_features: usize, delta: f64, threshold: f64) -> Self {
        Self {
            detectors: vec![PhtDetector::new(delta, threshold); n_hosts * n_features],
            n_hosts,
            n_features,
        }
    }

    pub fn n_hosts(&self) -> usize {
        self.n_hosts
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Total samples absorbed across all detectors.
    pub fn total_samples(&self) -> u64 {
        self.detectors.iter().map(PhtDetector::samples_seen).sum()
    }

    /// Updates every detector with the matching cell of `latent` and returns
    /// the number of hosts with at least one alarming feature.
    pub fn count_changed_hosts(&mut self, latent: &ArrayView2<f64>) -> Result<usize> {
        if latent.dim() != (self.n_hosts, self.n_features) {
            return Err(Error::Dimension(format!(
                "latent matrix is {:?}, bank is {}x{}",
                latent.dim(),
                self.n_hosts,
                self.n_features
            )));
        }
        let mut changed = 0;
        for (host, row) in latent.rows().into_iter().enumerate() {
            let mut host_alarmed = false;
            for (feature, &x) in row.iter().enumerate() {
                let alarm = self.detectors[host * self.n_features + feature].update(x)?;
                host_alarmed |= alarm;
            }
            if host_alarmed {
                changed += 1;
            }
        }
        Ok(changed)
    }

    pub fn reset(&mut self) {
        for d in &mut self.detectors {
            d.reset();
        }
    }
}

/// Operating mode of the drift state machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Normal,
    Change,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Normal => write!(f, "normal"),
            Mode::Change => write!(f, "change"),
        }
    }
}

/// Outcome of one interval of the mode machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    StayNormal,
    /// A change period started or is still running.
    EnterChange,
    /// The change period ended and the spare bank saw the same concept as
    /// before it: a temporary disturbance, no retraining needed.
    OutlierConfirmed,
    /// The change period ended on a genuinely new concept; the caller must
    /// reset the cluster model and both banks.
    DriftConfirmed,
}

impl std::fmt::Display for Decision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Decision::StayNormal => write!(f, "stay-normal"),
            Decision::EnterChange => write!(f, "enter-change"),
            Decision::OutlierConfirmed => write!(f, "outlier-confirmed"),
            Decision::DriftConfirmed => write!(f, "drift-confirmed"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StepOutcome {
    pub decision: Decision,
    /// Changed hosts this interval; includes the spare bank's alarms on the
    /// interval a change period ends.
    pub changed_hosts: usize,
}

/// Primary and spare detector banks plus the normal/change mode flag.
#[derive(Debug, Clone)]
pub struct DriftState {
    mode: Mode,
    primary: DetectorBank,
    spare: DetectorBank,
    drift_threshold: usize,
}

impl DriftState {
    /// `change_threshold` is each detector's alarm threshold and
    /// `drift_threshold` the minimum number of changed hosts that counts as
    /// a potential drift.
    pub fn new(
        n_hosts: usize,
        n_features: usize,
        delta: f64,
        change_threshold: f64,
        drift_threshold: usize,
    ) -> Result<Self> {
        if drift_threshold == 0 {
            return Err(Error::InvalidParams("drift_threshold must be >= 1".into()));
        }
        if !(change_threshold > 0.0) {
            return Err(Error::InvalidParams("change_threshold must be positive".into()));
        }
        Ok(Self {
            mode: Mode::Normal,
            primary: DetectorBank::new(n_hosts, n_features, delta, change_threshold),
            spare: DetectorBank::new(n_hosts, n_features, delta, change_threshold),
            drift_threshold,
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn drift_threshold(&self) -> usize {
        self.drift_threshold
    }

    pub fn primary(&self) -> &DetectorBank {
        &self.primary
    }

    pub fn spare(&self) -> &DetectorBank {
        &self.spare
    }

    /// Advances the mode machine with one interval's latent matrix.
    ///
    /// Normal mode: a primary count at or above the drift threshold opens a
    /// change period (the spare is left untouched so it keeps the pre-change
    /// concept); otherwise the spare absorbs the interval too.
    ///
    /// Change mode: the primary count signals whether the change period is
    /// still running. Once it ends, the spare bank is brought up to date and
    /// its alarms decide between a confirmed drift and an outlier.
    pub fn step_mode(&mut self, latent: &ArrayView2<f64>) -> Result<StepOutcome> {
        let primary_count = self.primary.count_changed_hosts(latent)?;
        match self.mode {
            Mode::Normal => {
                if primary_count >= self.drift_threshold {
                    self.mode = Mode::Change;
                    Ok(StepOutcome {
                        decision: Decision::EnterChange,
                        changed_hosts: primary_count,
                    })
                } else {
                    self.spare.count_changed_hosts(latent)?;
                    Ok(StepOutcome {
                        decision: Decision::StayNormal,
                        changed_hosts: primary_count,
                    })
                }
            }
            Mode::Change => {
                if primary_count >= self.drift_threshold {
                    Ok(StepOutcome {
                        decision: Decision::EnterChange,
                        changed_hosts: primary_count,
                    })
                } else {
                    self.mode = Mode::Normal;
                    let spare_count = self.spare.count_changed_hosts(latent)?;
                    let combined = primary_count + spare_count;
                    let decision = if combined >= self.drift_threshold {
                        Decision::DriftConfirmed
                    } else {
                        Decision::OutlierConfirmed
                    };
                    Ok(StepOutcome {
                        decision,
                        changed_hosts: combined,
                    })
                }
            }
        }
    }

    /// Zeroes every detector in both banks and returns to normal mode.
    pub fn reset_banks(&mut self) {
        self.primary.reset();
        self.spare.reset();
        self.mode = Mode::Normal;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Independent simulation of the two-sided recurrence; returns the
    /// 1-based count of post-shift samples consumed before the alarm.
    fn oracle_step_delay(pre: f64, post: f64, n_pre: usize, delta: f64, threshold: f64) -> usize {
        let (mut n, mut mean) = (0u64, 0.0f64);
        let (mut up, mut up_min, mut down, mut down_max) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for i in 0..(n_pre + 10_000) {
            let x = if i < n_pre { pre } else { post };
            n += 1;
            mean += (x - mean) / n as f64;
            up += x - mean - delta / 2.0;
            up_min = up_min.min(up);
            down += x - mean + delta / 2.0;
            down_max = down_max.max(down);
            if up - up_min >= threshold || down_max - down >= threshold {
                return i + 1 - n_pre;
            }
        }
        panic!("oracle never alarmed");
    }

    #[test]
    fn constant_stream_never_alarms() {
        let mut d = PhtDetector::new(0.005, 50.0);
        for _ in 0..1000 {
            assert!(!d.update(5.0).unwrap());
        }
    }

    #[test]
    fn non_finite_sample_is_rejected() {
        let mut d = PhtDetector::new(0.005, 50.0);
        assert!(matches!(d.update(f64::NAN), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn step_detection_delay_matches_oracle() {
        // Frozen from the recurrence simulation below: a 0 -> 1 step after
        // 100 flat samples alarms on the 66th shifted sample at these
        // settings (the running mean keeps adapting toward the new level,
        // which is what stretches the delay).
        let expected = oracle_step_delay(0.0, 1.0, 100, 0.005, 50.0);
        assert_eq!(expected, 66);

        let mut d = PhtDetector::new(0.005, 50.0);
        let mut alarm_at = None;
        for i in 0..100 {
            assert!(!d.update(0.0).unwrap(), "false alarm at flat sample {i}");
        }
        for i in 1..=1000 {
            if d.update(1.0).unwrap() {
                alarm_at = Some(i);
                break;
            }
        }
        assert_eq!(alarm_at, Some(expected));
    }

    #[test]
    fn downward_step_alarms_symmetrically() {
        let expected = oracle_step_delay(1.0, 0.0, 100, 0.005, 50.0);
        let mut d = PhtDetector::new(0.005, 50.0);
        for _ in 0..100 {
            assert!(!d.update(1.0).unwrap());
        }
        let mut alarm_at = None;
        for i in 1..=1000 {
            if d.update(0.0).unwrap() {
                alarm_at = Some(i);
                break;
            }
        }
        assert_eq!(alarm_at, Some(expected));
        // Same bound as the upward step.
        assert_eq!(expected, oracle_step_delay(0.0, 1.0, 100, 0.005, 50.0));
    }

    #[test]
    fn alarm_resets_detector_for_reuse() {
        let mut d = PhtDetector::new(0.005, 5.0);
        for _ in 0..50 {
            d.update(0.0).unwrap();
        }
        let mut alarms = 0;
        for _ in 0..200 {
            if d.update(1.0).unwrap() {
                alarms += 1;
            }
        }
        // One alarm for the regime change, then silence on the new level.
        assert_eq!(alarms, 1);
        assert!(d.samples_seen() > 0);
    }

    fn constant_matrix(n_hosts: usize, n_features: usize, value: f64) -> Array2<f64> {
        Array2::from_elem((n_hosts, n_features), value)
    }

    #[test]
    fn stationary_bank_counts_zero_changes() {
        let mut bank = DetectorBank::new(5, 2, 0.005, 50.0);
        for _ in 0..200 {
            let c = bank
                .count_changed_hosts(&constant_matrix(5, 2, 3.0).view())
                .unwrap();
            assert_eq!(c, 0);
        }
    }

    #[test]
    fn shifted_hosts_are_counted_after_the_detector_delay() {
        let n_hosts = 10;
        let delta = 0.005;
        let threshold = 5.0;
        let delay = oracle_step_delay(0.0, 1.0, 50, delta, threshold);

        let mut bank = DetectorBank::new(n_hosts, 2, delta, threshold);
        for _ in 0..50 {
            let c = bank
                .count_changed_hosts(&constant_matrix(n_hosts, 2, 0.0).view())
                .unwrap();
            assert_eq!(c, 0);
        }
        // Hosts 0..3 shift on one feature, the rest stay flat.
        let mut shifted = constant_matrix(n_hosts, 2, 0.0);
        for host in 0..3 {
            shifted[[host, 0]] = 1.0;
        }
        let mut counts = Vec::new();
        for _ in 0..(delay + 5) {
            counts.push(bank.count_changed_hosts(&shifted.view()).unwrap());
        }
        assert_eq!(counts[delay - 1], 3, "counts: {counts:?}");
        assert!(counts[..delay - 1].iter().all(|&c| c == 0));
        assert!(counts.iter().all(|&c| c <= n_hosts));
    }

    #[test]
    fn bank_dimension_mismatch() {
        let mut bank = DetectorBank::new(4, 2, 0.005, 50.0);
        assert!(matches!(
            bank.count_changed_hosts(&constant_matrix(4, 3, 0.0).view()),
            Err(Error::Dimension(_))
        ));
    }

    fn gaussian_matrix(
        rng: &mut ChaCha8Rng,
        n_hosts: usize,
        n_features: usize,
        mean: f64,
        sigma: f64,
    ) -> Array2<f64> {
        Array2::from_shape_fn((n_hosts, n_features), |_| {
            mean + sigma * rng.sample::<f64, _>(StandardNormal)
        })
    }

    #[test]
    fn stationary_stream_stays_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut state = DriftState::new(100, 2, 0.005, 50.0, 50).unwrap();
        for _ in 0..100 {
            let h = gaussian_matrix(&mut rng, 100, 2, 1.0, 0.05);
            let outcome = state.step_mode(&h.view()).unwrap();
            assert_eq!(outcome.decision, Decision::StayNormal);
        }
    }

    // Spec-pinned false-alarm discipline: 2000 hosts x 2 features x 100
    // intervals of sigma = 0.05 noise never confirm a drift.
    #[test]
    fn no_drift_confirmed_on_iid_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut state = DriftState::new(2000, 2, 0.005, 50.0, 50).unwrap();
        for _ in 0..100 {
            let h = gaussian_matrix(&mut rng, 2000, 2, 0.0, 0.05);
            let outcome = state.step_mode(&h.view()).unwrap();
            assert_ne!(outcome.decision, Decision::DriftConfirmed);
        }
    }

    /// Drives a full shift scenario and returns the decision sequence.
    fn run_scenario(shift_at: usize, revert_after: Option<usize>) -> Vec<Decision> {
        let (n_hosts, sigma) = (80, 0.05);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut state = DriftState::new(n_hosts, 2, 0.005, 2.0, 40).unwrap();
        let mut decisions = Vec::new();
        for t in 0..120 {
            let shifted = t >= shift_at && revert_after.is_none_or(|end| t < end);
            let mean = if shifted { 3.0 } else { 0.0 };
            let h = gaussian_matrix(&mut rng, n_hosts, 2, mean, sigma);
            let outcome = state.step_mode(&h.view()).unwrap();
            if outcome.decision == Decision::DriftConfirmed {
                state.reset_banks();
            }
            decisions.push(outcome.decision);
        }
        decisions
    }

    #[test]
    fn permanent_shift_confirms_drift() {
        let decisions = run_scenario(50, None);
        assert_eq!(decisions[50], Decision::EnterChange);
        let confirm = decisions.iter().position(|&d| d == Decision::DriftConfirmed);
        assert!(
            matches!(confirm, Some(at) if (50..=55).contains(&at)),
            "confirmation at {confirm:?}"
        );
        // After the reset the banks relearn the new concept and stay silent.
        let after = confirm.unwrap() + 1;
        assert!(decisions[after..]
            .iter()
            .all(|&d| d == Decision::StayNormal));
    }

    #[test]
    fn one_interval_spike_is_an_outlier() {
        let decisions = run_scenario(50, Some(51));
        assert_eq!(decisions[50], Decision::EnterChange);
        assert_eq!(decisions[51], Decision::OutlierConfirmed);
        assert!(!decisions.contains(&Decision::DriftConfirmed));
        assert!(decisions[52..].iter().all(|&d| d == Decision::StayNormal));
    }

    #[test]
    fn spare_bank_is_frozen_during_change_mode() {
        let n_hosts = 30;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut state = DriftState::new(n_hosts, 2, 0.005, 2.0, 10).unwrap();
        let mut spare_samples = Vec::new();
        for t in 0..80 {
            let mean = if t >= 40 { 3.0 } else { 0.0 };
            let h = gaussian_matrix(&mut rng, n_hosts, 2, mean, 0.05);
            let before = state.spare().total_samples();
            let outcome = state.step_mode(&h.view()).unwrap();
            let after = state.spare().total_samples();
            if outcome.decision == Decision::EnterChange {
                assert_eq!(before, after, "spare fed during change at t={t}");
            }
            if outcome.decision == Decision::DriftConfirmed {
                state.reset_banks();
            }
            spare_samples.push(after);
        }
        assert!(spare_samples[39] > 0);
    }

    #[test]
    fn reset_banks_restores_fresh_state() {
        let mut state = DriftState::new(10, 2, 0.005, 2.0, 5).unwrap();
        let shifted = constant_matrix(10, 2, 4.0);
        for _ in 0..30 {
            state.step_mode(&constant_matrix(10, 2, 0.0).view()).unwrap();
        }
        state.step_mode(&shifted.view()).unwrap();
        state.reset_banks();
        state.reset_banks();
        assert_eq!(state.mode(), Mode::Normal);
        assert_eq!(state.primary().total_samples(), 0);
        assert_eq!(state.spare().total_samples(), 0);
        // Constant input after a reset produces no alarms.
        for _ in 0..50 {
            let outcome = state.step_mode(&shifted.view()).unwrap();
            assert_eq!(outcome.decision, Decision::StayNormal);
            assert_eq!(outcome.changed_hosts, 0);
        }
    }

    #[test]
    fn rejects_invalid_thresholds() {
        assert!(DriftState::new(10, 2, 0.005, 50.0, 0).is_err());
        assert!(DriftState::new(10, 2, 0.005, 0.0, 5).is_err());
    }
}
