//! Action-level assessment: following an SME motion trajectory.
//!
//! The reference skeleton stream is reduced to key frames. Each key frame
//! becomes a set of joint targets ("bubbles"); a user frame whose selected
//! joints all lie within the match radius bursts the set, and a set older
//! than the skip time is retired as missed. Alongside, the user's skeleton
//! is watched for falls, facing away from the station and hands drifting
//! far from their targets; an anomaly that persists past the wait time
//! aborts the session.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use nalgebra::Vector3;
use serde::Serialize;

use crate::telemetry::{scale_about_head, SkeletonFrame, SkeletonStats, TaskSlice, HEAD};

/// Span of recent frames (seconds) inspected by anomaly detection.
pub const ANOMALY_WINDOW: f64 = 0.5;
/// A hand farther than this many match radii from its target is misplaced.
pub const HAND_ANOMALY_FACTOR: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryParams {
    pub joints: Vec<String>,
    /// Meters.
    pub match_radius: f64,
    /// Seconds before an unmatched target set is retired as missed.
    pub skip_time: f64,
    /// Seconds an anomaly may persist before the session is aborted.
    pub anomaly_wait: f64,
    pub repetitions: u32,
    /// Score deduction per anomaly episode.
    pub anomaly_penalty: f64,
    /// World-frame direction the user should face; None disables the
    /// orientation anomaly.
    pub station_forward: Option<Vector3<f64>>,
    /// Head below this fraction of the reference standing height is a fall.
    pub fall_fraction: f64,
    /// Key frames per second of reference.
    pub keyframe_rate: f64,
    /// Weight of the trajectory score when combined with task-level checks.
    pub weight: f64,
}

impl Default for TrajectoryParams {
    fn default() -> Self {
        Self {
            joints: Vec::new(),
            match_radius: 0.10,
            skip_time: 5.0,
            anomaly_wait: 10.0,
            repetitions: 1,
            anomaly_penalty: 0.05,
            station_forward: None,
            fall_fraction: 0.5,
            keyframe_rate: 2.0,
            weight: 1.0,
        }
    }
}

impl TrajectoryParams {
    /// The hand joint watched by the hand-position anomaly.
    pub fn assessed_hand(&self) -> Option<&str> {
        self.joints.iter().map(String::as_str).find(|j| j.starts_with("hand"))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrajectoryError {
    #[error("reference has no skeleton frames")]
    NoFrames,
    #[error("reference frame at t={t} lacks joint '{joint}'")]
    MissingJoint { joint: String, t: f64 },
    #[error("trajectory exhausted: cursor {cursor} past {len} key frames")]
    Exhausted { cursor: usize, len: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyFrame {
    pub t: f64,
    pub joints: BTreeMap<String, Vector3<f64>>,
}

/// Key frames of a reference performance for the selected joints.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory {
    key_frames: Vec<KeyFrame>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetSet {
    pub index: usize,
    pub targets: BTreeMap<String, Vector3<f64>>,
    pub spawned_at: f64,
}

impl ReferenceTrajectory {
    /// Samples the reference at `keyframe_rate`: ⌈duration × rate⌉ key
    /// frames, each the first reference frame at or after its sample time.
    pub fn from_slice(slice: &TaskSlice, params: &TrajectoryParams, user: Option<&str>) -> Result<Self, TrajectoryError> {
        let user = user.or(slice.skeleton_user());
        let frames: Vec<(f64, &SkeletonFrame)> = slice.skeleton_frames(user).collect();
        let last = frames.last().ok_or(TrajectoryError::NoFrames)?;
        let count = ((slice.duration() * params.keyframe_rate - 1e-9).ceil() as usize).max(1);
        let mut key_frames = Vec::with_capacity(count);
        let mut i = 0;
        for k in 0..count {
            let at = slice.t0 + k as f64 / params.keyframe_rate;
            while i < frames.len() && frames[i].0 < at {
                i += 1;
            }
            let (t, frame) = frames.get(i).unwrap_or(last);
            let joints = params
                .joints
                .iter()
                .map(|j| {
                    frame
                        .position(j)
                        .map(|p| (j.clone(), p))
                        .ok_or_else(|| TrajectoryError::MissingJoint { joint: j.clone(), t: *t })
                })
                .collect::<Result<_, _>>()?;
            key_frames.push(KeyFrame { t: *t, joints });
        }
        Ok(Self { key_frames })
    }

    pub fn len(&self) -> usize {
        self.key_frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.key_frames.is_empty()
    }

    pub fn key_frames(&self) -> &[KeyFrame] {
        &self.key_frames
    }

    pub fn targets(&self, cursor: usize, spawned_at: f64) -> Result<TargetSet, TrajectoryError> {
        let kf = self
            .key_frames
            .get(cursor)
            .ok_or(TrajectoryError::Exhausted { cursor, len: self.key_frames.len() })?;
        Ok(TargetSet { index: cursor, targets: kf.joints.clone(), spawned_at })
    }
}

/// Target set for a cursor position, spawned at the key frame's own time.
pub fn build_targets(reference: &TaskSlice, params: &TrajectoryParams, cursor: usize) -> Result<TargetSet, TrajectoryError> {
    let traj = ReferenceTrajectory::from_slice(reference, params, None)?;
    let t = traj.key_frames.get(cursor).map(|k| k.t).unwrap_or(reference.t0);
    traj.targets(cursor, t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub all_matched: bool,
    /// None for joints missing from the frame.
    pub distances: BTreeMap<String, Option<f64>>,
}

/// A target set is matched when every target joint lies within the match
/// radius (closed ball).
pub fn match_frame(targets: &TargetSet, frame: &SkeletonFrame, params: &TrajectoryParams) -> MatchResult {
    let distances: BTreeMap<String, Option<f64>> = targets
        .targets
        .iter()
        .map(|(j, target)| (j.clone(), frame.position(j).map(|p| (p - target).norm())))
        .collect();
    let all_matched = distances.values().all(|d| d.is_some_and(|d| d <= params.match_radius));
    MatchResult { all_matched, distances }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnomalyKind {
    Fall,
    Orientation,
    HandPosition,
}

impl AnomalyKind {
    pub fn keyword(self) -> &'static str {
        match self {
            AnomalyKind::Fall => "fall",
            AnomalyKind::Orientation => "orientation",
            AnomalyKind::HandPosition => "hand-position",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Anomaly {
    pub kind: AnomalyKind,
    pub t_start: f64,
    pub t_end: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeedbackEvent {
    Burst { joints: usize },
    Missed,
    Repetition(u32),
    AnomalyStart(AnomalyKind),
    AnomalyEnd(AnomalyKind),
    Abort(AnomalyKind),
}

impl fmt::Display for FeedbackEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeedbackEvent::Burst { joints } => write!(f, "burst {joints}"),
            FeedbackEvent::Missed => write!(f, "missed"),
            FeedbackEvent::Repetition(n) => write!(f, "repetition {n}"),
            FeedbackEvent::AnomalyStart(k) => write!(f, "anomaly {} start", k.keyword()),
            FeedbackEvent::AnomalyEnd(k) => write!(f, "anomaly {} end", k.keyword()),
            FeedbackEvent::Abort(k) => write!(f, "abort {}", k.keyword()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryState {
    pub cursor: usize,
    pub burst: u32,
    pub missed: u32,
    pub repetitions_done: u32,
    /// Target sets spawned so far, including the active one.
    pub spawned: u32,
    /// Spawn time of the active target set; None before the first frame and
    /// after the last repetition.
    pub spawned_at: Option<f64>,
    pub finished: bool,
    pub active_anomalies: BTreeMap<AnomalyKind, f64>,
    pub anomaly_log: Vec<Anomaly>,
    pub aborted: bool,
}

impl TrajectoryState {
    pub fn retired(&self) -> u32 {
        self.burst + self.missed
    }

    pub fn episodes(&self) -> usize {
        self.anomaly_log.len() + self.active_anomalies.len()
    }

    fn advance(&mut self, t: f64, len: usize, params: &TrajectoryParams, out: &mut Vec<FeedbackEvent>) {
        self.cursor += 1;
        if self.cursor >= len {
            self.repetitions_done += 1;
            out.push(FeedbackEvent::Repetition(self.repetitions_done));
            if self.repetitions_done < params.repetitions {
                self.cursor = 0;
            } else {
                self.cursor = len;
                self.finished = true;
                self.spawned_at = None;
                return;
            }
        }
        self.spawned += 1;
        self.spawned_at = Some(t);
    }

    /// Moves the state forward by one (height-corrected) user frame.
    pub fn step(
        &mut self,
        frame: &SkeletonFrame,
        t: f64,
        reference: &ReferenceTrajectory,
        params: &TrajectoryParams,
    ) -> Vec<FeedbackEvent> {
        let mut out = Vec::new();
        if self.aborted || self.finished || reference.is_empty() {
            return out;
        }
        let spawned_at = *self.spawned_at.get_or_insert_with(|| {
            self.spawned += 1;
            t
        });
        let targets = reference.targets(self.cursor, spawned_at).expect("cursor within key frames");
        if match_frame(&targets, frame, params).all_matched {
            self.burst += 1;
            out.push(FeedbackEvent::Burst { joints: targets.targets.len() });
            self.advance(t, reference.len(), params, &mut out);
        } else if t - spawned_at > params.skip_time {
            self.missed += 1;
            out.push(FeedbackEvent::Missed);
            self.advance(t, reference.len(), params, &mut out);
        }
        out
    }

    /// Applies the currently detected anomaly set at time `t`.
    pub fn update_anomalies(&mut self, active: &BTreeSet<AnomalyKind>, t: f64, params: &TrajectoryParams) -> Vec<FeedbackEvent> {
        let mut out = Vec::new();
        if self.aborted {
            return out;
        }
        for &kind in active {
            if let std::collections::btree_map::Entry::Vacant(slot) = self.active_anomalies.entry(kind) {
                slot.insert(t);
                out.push(FeedbackEvent::AnomalyStart(kind));
            }
        }
        let ended: Vec<AnomalyKind> =
            self.active_anomalies.keys().copied().filter(|k| !active.contains(k)).collect();
        for kind in ended {
            let start = self.active_anomalies.remove(&kind).expect("active");
            self.anomaly_log.push(Anomaly { kind, t_start: start, t_end: t });
            out.push(FeedbackEvent::AnomalyEnd(kind));
        }
        let expired = self
            .active_anomalies
            .iter()
            .find(|(_, &onset)| t - onset > params.anomaly_wait)
            .map(|(&k, _)| k);
        if let Some(kind) = expired {
            self.close_anomalies(t);
            self.aborted = true;
            out.push(FeedbackEvent::Abort(kind));
        }
        out
    }

    fn close_anomalies(&mut self, t: f64) {
        for (kind, start) in std::mem::take(&mut self.active_anomalies) {
            self.anomaly_log.push(Anomaly { kind, t_start: start, t_end: t });
        }
    }

    /// Ends the performance at `t`: targets never reached (the active set
    /// and any not yet spawned) count as missed and open anomalies close.
    pub fn close(&mut self, t: f64, reference: &ReferenceTrajectory, params: &TrajectoryParams) {
        self.close_anomalies(t);
        if self.aborted || self.finished {
            return;
        }
        let len = reference.len() as u32;
        let remaining_reps = params.repetitions.saturating_sub(self.repetitions_done + 1);
        let remaining = (len - self.cursor as u32) + remaining_reps * len;
        let active = u32::from(self.spawned_at.is_some());
        self.missed += remaining;
        self.spawned += remaining - active;
        self.cursor = len as usize;
        self.spawned_at = None;
        self.finished = true;
    }
}

/// Pure transition: the next state and the feedback it produces.
pub fn step_trajectory(
    state: &TrajectoryState,
    frame: &SkeletonFrame,
    t: f64,
    reference: &ReferenceTrajectory,
    params: &TrajectoryParams,
) -> (TrajectoryState, Vec<FeedbackEvent>) {
    let mut next = state.clone();
    let feedback = next.step(frame, t, reference, params);
    (next, feedback)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Detection {
    pub active: BTreeSet<AnomalyKind>,
    pub warming_up: bool,
    /// Neither shoulders nor a head-forward joint were available.
    pub orientation_unavailable: bool,
}

/// Horizontal facing direction: up × (right shoulder − left shoulder), or
/// the head-forward joint relative to the head.
pub fn facing_direction(frame: &SkeletonFrame) -> Option<Vector3<f64>> {
    let raw = match (frame.position("shoulder-left"), frame.position("shoulder-right")) {
        (Some(l), Some(r)) => Vector3::y().cross(&(r - l)),
        _ => frame.position("head-forward")? - frame.position(HEAD)?,
    };
    Some(Vector3::new(raw.x, 0.0, raw.z))
}

fn horizontal_angle(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let b = Vector3::new(b.x, 0.0, b.z);
    a.cross(&b).norm().atan2(a.dot(&b))
}

/// Detects anomalies over a window of recent (height-corrected) frames.
///
/// `hand_target` is the assessed hand joint and its current target position,
/// when the trajectory tracks a hand.
pub fn detect_anomalies(
    window: &[(f64, &SkeletonFrame)],
    params: &TrajectoryParams,
    standing_head_height: Option<f64>,
    hand_target: Option<(&str, Vector3<f64>)>,
) -> Detection {
    let mut d = Detection::default();
    let (Some(first), Some(last)) = (window.first(), window.last()) else {
        d.warming_up = true;
        return d;
    };
    if last.0 - first.0 < ANOMALY_WINDOW - 1e-9 {
        d.warming_up = true;
        return d;
    }
    // Conditions must hold across the window so single noisy frames do not
    // start an episode.
    if let Some(standing) = standing_head_height {
        let limit = params.fall_fraction * standing;
        if window.iter().all(|(_, f)| f.position(HEAD).is_some_and(|h| h.y < limit)) {
            d.active.insert(AnomalyKind::Fall);
        }
    }

    if let Some(forward) = params.station_forward {
        let facings: Vec<Vector3<f64>> = window.iter().filter_map(|(_, f)| facing_direction(f)).collect();
        if facings.is_empty() {
            d.orientation_unavailable = true;
        } else {
            let mean = facings.iter().filter(|v| v.norm() > 0.0).map(|v| v.normalize()).sum::<Vector3<f64>>();
            if mean.norm() > 0.0 && horizontal_angle(&mean, &forward) > std::f64::consts::FRAC_PI_2 {
                d.active.insert(AnomalyKind::Orientation);
            }
        }
    }

    if let Some((hand, target)) = hand_target {
        let limit = HAND_ANOMALY_FACTOR * params.match_radius;
        let far = window
            .iter()
            .all(|(_, f)| f.position(hand).is_some_and(|p| (p - target).norm() > limit));
        if far {
            d.active.insert(AnomalyKind::HandPosition);
        }
    }
    d
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryScore {
    pub score: f64,
    pub detail: String,
}

/// Burst ratio minus a penalty per anomaly episode, clamped at 0. Aborted
/// performances score 0.
pub fn trajectory_score(state: &TrajectoryState, params: &TrajectoryParams) -> TrajectoryScore {
    if state.aborted {
        return TrajectoryScore { score: 0.0, detail: "aborted".into() };
    }
    let retired = state.retired();
    if retired == 0 {
        return TrajectoryScore { score: 0.0, detail: "no trajectory activity".into() };
    }
    let ratio = state.burst as f64 / retired as f64;
    let episodes = state.episodes();
    let score = (ratio - params.anomaly_penalty * episodes as f64).max(0.0);
    TrajectoryScore {
        score,
        detail: format!("{} burst, {} missed, {} anomaly episode(s)", state.burst, state.missed, episodes),
    }
}

/// Everything a report needs about one tracked trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryOutcome {
    pub burst: u32,
    pub missed: u32,
    pub spawned: u32,
    pub repetitions_done: u32,
    pub aborted: bool,
    pub anomalies: Vec<Anomaly>,
    pub score: f64,
    pub detail: String,
    /// Height-correction factor applied to the user's frames.
    pub scale: Option<f64>,
    pub warnings: Vec<String>,
}

/// Live trajectory follower for one user and task.
///
/// Frames from the first second are held back until the height-correction
/// factor is known, then replayed in order.
#[derive(Debug, Clone)]
pub struct TrajectoryTracker {
    reference: ReferenceTrajectory,
    params: TrajectoryParams,
    stats: Option<SkeletonStats>,
    state: TrajectoryState,
    pending: Vec<(f64, SkeletonFrame)>,
    scale: Option<Option<f64>>,
    window: VecDeque<(f64, SkeletonFrame)>,
    last_t: Option<f64>,
    warnings: BTreeSet<String>,
}

impl TrajectoryTracker {
    pub fn new(reference: ReferenceTrajectory, params: TrajectoryParams, stats: Option<SkeletonStats>) -> Self {
        let mut warnings = BTreeSet::new();
        if stats.is_none() {
            warnings.insert("reference lacks head/hand joints: no height correction or fall detection".into());
        }
        Self {
            reference,
            params,
            stats,
            state: TrajectoryState::default(),
            pending: Vec::new(),
            scale: None,
            window: VecDeque::new(),
            last_t: None,
            warnings,
        }
    }

    pub fn state(&self) -> &TrajectoryState {
        &self.state
    }

    pub fn aborted(&self) -> bool {
        self.state.aborted
    }

    /// Feeds one raw user frame; returns feedback with the time it refers to.
    pub fn push(&mut self, t: f64, frame: &SkeletonFrame) -> Vec<(f64, FeedbackEvent)> {
        self.last_t = Some(t);
        if self.state.aborted {
            return Vec::new();
        }
        if self.scale.is_none() {
            let ready = self.pending.first().is_some_and(|(t0, _)| t > t0 + crate::telemetry::STATS_WINDOW);
            if !ready {
                self.pending.push((t, frame.clone()));
                return Vec::new();
            }
            self.resolve_scale();
            let mut out = self.drain_pending();
            out.extend(self.process(t, frame));
            return out;
        }
        self.process(t, frame)
    }

    fn resolve_scale(&mut self) {
        let scale = self
            .stats
            .as_ref()
            .and_then(|s| s.scale_for(self.pending.iter().map(|(t, f)| (*t, f))));
        if self.stats.is_some() && scale.is_none() {
            self.warnings.insert("degenerate user pose: frames left uncorrected".into());
        }
        self.scale = Some(scale);
    }

    fn drain_pending(&mut self) -> Vec<(f64, FeedbackEvent)> {
        let pending = std::mem::take(&mut self.pending);
        pending.iter().flat_map(|(t, f)| self.process(*t, f)).collect()
    }

    fn process(&mut self, t: f64, raw: &SkeletonFrame) -> Vec<(f64, FeedbackEvent)> {
        if self.state.aborted {
            return Vec::new();
        }
        let frame = match self.scale.flatten() {
            Some(s) => scale_about_head(raw, s),
            None => raw.clone(),
        };
        let mut out: Vec<(f64, FeedbackEvent)> = self
            .state
            .step(&frame, t, &self.reference, &self.params)
            .into_iter()
            .map(|e| (t, e))
            .collect();

        self.window.push_back((t, frame));
        while self.window.len() >= 2 && self.window[1].0 <= t - ANOMALY_WINDOW {
            self.window.pop_front();
        }
        let hand_target = self.params.assessed_hand().and_then(|hand| {
            let kf = self.reference.key_frames.get(self.state.cursor)?;
            Some((hand, *kf.joints.get(hand)?))
        });
        let frames: Vec<(f64, &SkeletonFrame)> = self.window.iter().map(|(t, f)| (*t, f)).collect();
        let standing = self.stats.as_ref().map(|s| s.face_height);
        let detection = detect_anomalies(&frames, &self.params, standing, hand_target);
        if detection.orientation_unavailable {
            self.warnings.insert("no shoulder or head-forward joints: orientation anomaly disabled".into());
        }
        if !detection.warming_up {
            out.extend(
                self.state
                    .update_anomalies(&detection.active, t, &self.params)
                    .into_iter()
                    .map(|e| (t, e)),
            );
        }
        out
    }

    /// Ends the performance at `t` (the task's end time).
    pub fn finish(&mut self, t: f64) -> TrajectoryOutcome {
        if self.scale.is_none() {
            self.resolve_scale();
            self.drain_pending();
        }
        self.state.close(t, &self.reference, &self.params);
        let scored = trajectory_score(&self.state, &self.params);
        TrajectoryOutcome {
            burst: self.state.burst,
            missed: self.state.missed,
            spawned: self.state.spawned,
            repetitions_done: self.state.repetitions_done,
            aborted: self.state.aborted,
            anomalies: self.state.anomaly_log.clone(),
            score: scored.score,
            detail: scored.detail,
            scale: self.scale.flatten(),
            warnings: self.warnings.iter().cloned().collect(),
        }
    }
}
