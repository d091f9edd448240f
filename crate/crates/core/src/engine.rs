//! Session orchestration: task readiness, event routing, feedback and the
//! final weighted assessment.
//!
//! Batch scoring replays a recording through the same [`Engine::ingest`]
//! path that live streams use, so both produce the same report.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::action::{
    AnomalyKind, FeedbackEvent, ReferenceTrajectory, TrajectoryError, TrajectoryOutcome, TrajectoryParams,
    TrajectoryTracker,
};
use crate::model::{CheckKind, FeedbackMode, ScopeCategory, TaskId, TaskNetwork, UserId, DEFAULT_COLLISION_PENALTY};
use crate::task_assessment::{evaluate_task_level, time_factor, ReferenceUsed, TaskScore};
use crate::telemetry::{Event, MarkPhase, Payload, ReferenceSet, SessionRecording, SkeletonStats, TaskSlice};

pub const DEFAULT_PASS_THRESHOLD: f64 = 0.95;
/// Session-time budget in seconds.
pub const DEFAULT_TIMEOUT: f64 = 1800.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineMode {
    Batch,
    Stream,
}

/// Parameter values forced onto every task of the network.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub collision_penalty: Option<f64>,
    pub skip_time: Option<f64>,
    pub anomaly_wait: Option<f64>,
    pub match_radius: Option<f64>,
    pub orientation_tolerance: Option<f64>,
    pub position_tolerance: Option<f64>,
    pub text_tolerance: Option<f64>,
}

impl Overrides {
    fn entries(&self) -> BTreeMap<String, f64> {
        [
            ("anomaly_wait", self.anomaly_wait),
            ("collision_penalty", self.collision_penalty),
            ("match_radius", self.match_radius),
            ("orientation_tolerance", self.orientation_tolerance),
            ("position_tolerance", self.position_tolerance),
            ("skip_time", self.skip_time),
            ("text_tolerance", self.text_tolerance),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k.to_string(), v)))
        .collect()
    }

    pub fn apply(&self, network: &mut TaskNetwork) {
        for task in network.primitives_mut() {
            for check in &mut task.assessment.checks {
                let tol = match check.kind {
                    CheckKind::Orientation => self.orientation_tolerance,
                    CheckKind::Position => self.position_tolerance,
                    CheckKind::TextInput => self.text_tolerance,
                    _ => None,
                };
                if tol.is_some() {
                    check.tolerance = tol;
                }
                if let (CheckKind::Collision, Some(p)) = (check.kind, self.collision_penalty) {
                    check.penalty = p;
                }
            }
            if let Some(tp) = &mut task.assessment.trajectory {
                tp.skip_time = self.skip_time.unwrap_or(tp.skip_time);
                tp.anomaly_wait = self.anomaly_wait.unwrap_or(tp.anomaly_wait);
                tp.match_radius = self.match_radius.unwrap_or(tp.match_radius);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub mode: EngineMode,
    pub pass_threshold: f64,
    pub timeout: f64,
    pub overrides: Overrides,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            mode: EngineMode::Batch,
            pass_threshold: DEFAULT_PASS_THRESHOLD,
            timeout: DEFAULT_TIMEOUT,
            overrides: Overrides::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AggregateError {
    #[error("no tasks to aggregate")]
    Empty,
    #[error("{weights} weights but {omegas} scores")]
    LengthMismatch { weights: usize, omegas: usize },
    #[error("weights sum to 0")]
    ZeroWeight,
    #[error("weight {0} is negative")]
    NegativeWeight(f64),
    #[error("score {0} is outside [0, 1]")]
    ScoreRange(f64),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("task '{0}' has positive weight but no reference performance")]
    MissingReference(TaskId),
    #[error("task '{task}': {source}")]
    Trajectory { task: TaskId, source: TrajectoryError },
    #[error("session not started")]
    NotStarted,
    #[error("session already started")]
    AlreadyStarted,
    #[error("event at t={t} precedes session start {start}")]
    BeforeStart { t: f64, start: f64 },
    #[error("timestamp {t} regresses from {previous}")]
    Regressed { t: f64, previous: f64 },
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
}

/// Normalized weighted sum of task scores.
pub fn aggregate(weights: &[f64], omegas: &[f64]) -> Result<f64, AggregateError> {
    let (sum, total) = weighted_sum(weights, omegas)?;
    Ok((sum / total).clamp(0.0, 1.0))
}

/// (ΣWΩ, ΣW) after checking the inputs.
fn weighted_sum(weights: &[f64], omegas: &[f64]) -> Result<(f64, f64), AggregateError> {
    if weights.len() != omegas.len() {
        return Err(AggregateError::LengthMismatch { weights: weights.len(), omegas: omegas.len() });
    }
    if weights.is_empty() {
        return Err(AggregateError::Empty);
    }
    if let Some(&w) = weights.iter().find(|w| w.is_nan() || **w < 0.0) {
        return Err(AggregateError::NegativeWeight(w));
    }
    if let Some(&o) = omegas.iter().find(|o| !(0.0..=1.0).contains(*o)) {
        return Err(AggregateError::ScoreRange(o));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(AggregateError::ZeroWeight);
    }
    let sum = weights.iter().zip(omegas).map(|(w, o)| w * o).sum();
    Ok((sum, total))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MessageKind {
    Burst,
    Missed,
    Repetition,
    Anomaly,
    TaskComplete,
    TaskScore,
    Abort,
}

impl MessageKind {
    pub fn keyword(self) -> &'static str {
        match self {
            MessageKind::Burst => "burst",
            MessageKind::Missed => "missed",
            MessageKind::Repetition => "repetition",
            MessageKind::Anomaly => "anomaly",
            MessageKind::TaskComplete => "task-complete",
            MessageKind::TaskScore => "task-score",
            MessageKind::Abort => "abort",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackMessage {
    pub t: f64,
    pub scope: String,
    pub kind: MessageKind,
    pub payload: String,
}

impl fmt::Display for FeedbackMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t={} scope={} kind={} {}", self.t, self.scope, self.kind.keyword(), self.payload)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Parameters {
    pub collision_penalty: f64,
    pub skip_time: f64,
    pub anomaly_wait: f64,
    pub match_radius: f64,
    pub anomaly_penalty: f64,
    pub orientation_tolerance: f64,
    pub position_tolerance: f64,
    pub text_tolerance: f64,
}

impl Default for Parameters {
    fn default() -> Self {
        let tp = TrajectoryParams::default();
        let tol = |k: CheckKind| k.default_tolerance().unwrap_or_default();
        Self {
            collision_penalty: DEFAULT_COLLISION_PENALTY,
            skip_time: tp.skip_time,
            anomaly_wait: tp.anomaly_wait,
            match_radius: tp.match_radius,
            anomaly_penalty: tp.anomaly_penalty,
            orientation_tolerance: tol(CheckKind::Orientation),
            position_tolerance: tol(CheckKind::Position),
            text_tolerance: tol(CheckKind::TextInput),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportHeader {
    pub format: &'static str,
    pub defaults: Parameters,
    pub overrides: BTreeMap<String, f64>,
    pub pass_threshold: f64,
    pub timeout: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbortInfo {
    pub t: f64,
    pub task: TaskId,
    pub user: UserId,
    pub anomaly: AnomalyKind,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionInfo {
    pub id: String,
    pub users: Vec<UserId>,
    pub start: f64,
    pub end: f64,
    pub duration: f64,
    pub events: usize,
    pub ignored_events: usize,
    pub aborted: Option<AbortInfo>,
    pub timed_out: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskStatus {
    Scored,
    NotPerformed,
    Incomplete,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemberEvaluation {
    pub user: UserId,
    pub omega: f64,
    pub task_level: Option<TaskScore>,
    pub trajectory: Option<TrajectoryOutcome>,
    pub trajectory_reference: Option<ReferenceUsed>,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskReport {
    pub task: TaskId,
    pub name: String,
    pub weight: f64,
    pub omega: f64,
    pub status: TaskStatus,
    pub start: Option<f64>,
    pub end: Option<f64>,
    pub flags: Vec<String>,
    pub members: Vec<MemberEvaluation>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnomalyRecord {
    pub task: TaskId,
    pub user: UserId,
    pub kind: AnomalyKind,
    pub t_start: f64,
    pub t_end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeScore {
    pub node: TaskId,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScopeReport {
    pub scope: String,
    pub category: &'static str,
    pub users: Vec<UserId>,
    pub tasks: Vec<TaskReport>,
    pub anomalies: Vec<AnomalyRecord>,
    pub weight_total: f64,
    /// None when every task in the scope has weight 0.
    pub delta: Option<f64>,
    pub delta_unnormalized: f64,
    /// Per-member aggregate for group scopes.
    pub member_deltas: BTreeMap<UserId, Option<f64>>,
    /// Weighted mean of primitive descendants, for abstract nodes.
    pub nodes: Vec<NodeScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssessmentReport {
    pub header: ReportHeader,
    pub session: SessionInfo,
    pub scopes: Vec<ScopeReport>,
}

impl AssessmentReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn scope(&self, key: &str) -> Option<&ScopeReport> {
        self.scopes.iter().find(|s| s.scope == key)
    }

    /// Mean Δ over scopes that have one.
    pub fn mean_delta(&self) -> Option<f64> {
        let ds: Vec<f64> = self.scopes.iter().filter_map(|s| s.delta).collect();
        (!ds.is_empty()).then(|| ds.iter().sum::<f64>() / ds.len() as f64)
    }
}

#[derive(Debug, Clone)]
struct TrajectoryPlan {
    reference: ReferenceTrajectory,
    stats: Option<SkeletonStats>,
    used: ReferenceUsed,
    params: TrajectoryParams,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Pending,
    Running { t0: f64 },
    Ended { t0: f64, t1: f64 },
    Done,
}

#[derive(Debug, Clone)]
struct Unit {
    user: UserId,
    events: Vec<Event>,
    tracker: Option<TrajectoryTracker>,
}

#[derive(Debug, Clone)]
struct TaskRuntime {
    id: TaskId,
    scope: String,
    members: Vec<UserId>,
    objects: Vec<String>,
    realtime: bool,
    phase: Phase,
    start: Option<f64>,
    end: Option<f64>,
    flags: BTreeSet<String>,
    units: Vec<Unit>,
    evaluated: Option<(f64, Vec<MemberEvaluation>)>,
}

impl TaskRuntime {
    fn accepting(&self, t: f64) -> bool {
        match self.phase {
            Phase::Running { .. } => true,
            Phase::Ended { t1, .. } => t <= t1,
            _ => false,
        }
    }
}

/// One assessment session over a task network.
#[derive(Debug, Clone)]
pub struct Engine {
    network: TaskNetwork,
    references: ReferenceSet,
    config: EngineConfig,
    plans: BTreeMap<TaskId, TrajectoryPlan>,
    tasks: Vec<TaskRuntime>,
    index: BTreeMap<TaskId, usize>,
    session: Option<SessionInfo>,
    last_t: Option<f64>,
    /// Non-mark events sharing the latest timestamp, for slices whose start
    /// mark arrives after them.
    same_instant: Vec<Event>,
    completed: BTreeSet<TaskId>,
}

impl Engine {
    pub fn new(mut network: TaskNetwork, references: ReferenceSet, config: EngineConfig) -> Result<Self, EngineError> {
        config.overrides.apply(&mut network);
        let mut plans = BTreeMap::new();
        let mut tasks = Vec::new();
        for (node, task) in network.primitives() {
            if task.weight > 0.0 && !references.contains(&node.id) {
                return Err(EngineError::MissingReference(node.id.clone()));
            }
            if let (Some(params), Some((index, r))) = (&task.assessment.trajectory, references.best(&node.id)) {
                let performer = task
                    .users
                    .users()
                    .iter()
                    .map(String::as_str)
                    .find(|u| r.slice.skeleton_frames(Some(u)).next().is_some());
                let reference = ReferenceTrajectory::from_slice(&r.slice, params, performer)
                    .map_err(|source| EngineError::Trajectory { task: node.id.clone(), source })?;
                plans.insert(
                    node.id.clone(),
                    TrajectoryPlan {
                        reference,
                        stats: SkeletonStats::from_slice_for(&r.slice, performer),
                        used: ReferenceUsed { index, quality: r.quality, source: r.source.clone() },
                        params: params.clone(),
                    },
                );
            }
            tasks.push(TaskRuntime {
                id: node.id.clone(),
                scope: task.users.key(),
                members: task.users.users().to_vec(),
                objects: task.objects.clone(),
                realtime: task.feedback == FeedbackMode::RealTime,
                phase: Phase::Pending,
                start: None,
                end: None,
                flags: BTreeSet::new(),
                units: Vec::new(),
                evaluated: None,
            });
        }
        let index = tasks.iter().enumerate().map(|(i, t)| (t.id.clone(), i)).collect();
        Ok(Self {
            network,
            references,
            config,
            plans,
            tasks,
            index,
            session: None,
            last_t: None,
            same_instant: Vec::new(),
            completed: BTreeSet::new(),
        })
    }

    pub fn network(&self) -> &TaskNetwork {
        &self.network
    }

    pub fn start(&mut self, id: &str, users: &[UserId], t0: f64) -> Result<(), EngineError> {
        if self.session.is_some() {
            return Err(EngineError::AlreadyStarted);
        }
        self.session = Some(SessionInfo {
            id: id.to_string(),
            users: users.to_vec(),
            start: t0,
            end: t0,
            duration: 0.0,
            events: 0,
            ignored_events: 0,
            aborted: None,
            timed_out: false,
            warnings: Vec::new(),
        });
        Ok(())
    }

    pub fn aborted(&self) -> bool {
        self.session.as_ref().is_some_and(|s| s.aborted.is_some())
    }

    /// Feeds one event; returns the feedback it triggers (always empty in
    /// batch mode).
    pub fn ingest(&mut self, event: &Event) -> Result<Vec<FeedbackMessage>, EngineError> {
        let session = self.session.as_mut().ok_or(EngineError::NotStarted)?;
        if event.t < session.start {
            return Err(EngineError::BeforeStart { t: event.t, start: session.start });
        }
        if let Some(previous) = self.last_t {
            if event.t < previous {
                return Err(EngineError::Regressed { t: event.t, previous });
            }
        }
        self.last_t = Some(event.t);
        session.events += 1;
        if session.aborted.is_some() || session.timed_out {
            session.ignored_events += 1;
            return Ok(Vec::new());
        }
        if event.t - session.start > self.config.timeout {
            session.timed_out = true;
            session.ignored_events += 1;
            return Ok(Vec::new());
        }
        session.end = event.t;
        if !session.users.contains(&event.user) {
            session.users.push(event.user.clone());
        }

        let mut out = Vec::new();
        self.evaluate_ended(Some(event.t), &mut out);
        if self.same_instant.first().is_some_and(|e| e.t < event.t) {
            self.same_instant.clear();
        }
        match &event.payload {
            Payload::TaskMark { task, phase } => self.mark(task, *phase, event.t, &mut out),
            _ => {
                self.same_instant.push(event.clone());
                for i in 0..self.tasks.len() {
                    if self.tasks[i].accepting(event.t) {
                        self.route(i, event, &mut out);
                    }
                }
            }
        }
        Ok(self.emit(out))
    }

    /// Evaluates every task whose end mark has been seen. Needed at end of
    /// stream; [`Engine::finalize`] calls it too.
    pub fn close(&mut self) -> Vec<FeedbackMessage> {
        let mut out = Vec::new();
        self.evaluate_ended(None, &mut out);
        self.emit(out)
    }

    pub fn finalize(mut self) -> Result<AssessmentReport, EngineError> {
        if self.session.is_none() {
            return Err(EngineError::NotStarted);
        }
        self.close();
        let end = self.last_t.unwrap_or(self.session.as_ref().map_or(0.0, |s| s.start));
        for i in 0..self.tasks.len() {
            if let Phase::Running { .. } = self.tasks[i].phase {
                let members = self.finish_incomplete(i, end);
                let task = &mut self.tasks[i];
                task.evaluated = Some((0.0, members));
            }
        }
        let mut session = self.session.take().expect("started");
        session.duration = session.end - session.start;
        let scopes = self.scope_reports()?;
        Ok(AssessmentReport {
            header: ReportHeader {
                format: "ahtn-report/1",
                defaults: Parameters::default(),
                overrides: self.config.overrides.entries(),
                pass_threshold: self.config.pass_threshold,
                timeout: self.config.timeout,
            },
            session,
            scopes,
        })
    }

    fn emit(&self, out: Vec<FeedbackMessage>) -> Vec<FeedbackMessage> {
        match self.config.mode {
            EngineMode::Batch => Vec::new(),
            EngineMode::Stream => out,
        }
    }

    fn warn(&mut self, message: String) {
        if let Some(s) = self.session.as_mut() {
            if !s.warnings.contains(&message) {
                s.warnings.push(message);
            }
        }
    }

    fn mark(&mut self, task: &str, phase: MarkPhase, t: f64, out: &mut Vec<FeedbackMessage>) {
        let Some(&i) = self.index.get(task) else {
            self.warn(format!("mark for unknown or abstract task '{task}' ignored"));
            return;
        };
        match (phase, self.tasks[i].phase) {
            (MarkPhase::Start, Phase::Pending) => {
                let ready = self.network.ready_tasks(&self.completed).expect("completed ids are primitive tasks");
                let rt = &mut self.tasks[i];
                if !ready.contains(task) {
                    rt.flags.insert("out-of-order".into());
                }
                rt.phase = Phase::Running { t0: t };
                rt.units = rt
                    .members
                    .iter()
                    .map(|user| Unit {
                        user: user.clone(),
                        events: Vec::new(),
                        tracker: self.plans.get(task).map(|p| {
                            TrajectoryTracker::new(p.reference.clone(), p.params.clone(), p.stats.clone())
                        }),
                    })
                    .collect();
                rt.start = Some(t);
                let earlier = std::mem::take(&mut self.same_instant);
                for e in earlier.iter().filter(|e| e.t == t) {
                    self.route(i, e, out);
                }
                self.same_instant = earlier;
            }
            (MarkPhase::End, Phase::Running { t0 }) => {
                self.tasks[i].phase = Phase::Ended { t0, t1: t };
                self.tasks[i].end = Some(t);
                self.completed.insert(task.to_string());
            }
            (MarkPhase::Start, _) | (MarkPhase::End, _) => {
                self.tasks[i].flags.insert("repeated-marks-ignored".into());
            }
        }
    }

    fn route(&mut self, i: usize, event: &Event, out: &mut Vec<FeedbackMessage>) {
        let rt = &mut self.tasks[i];
        if !rt.objects.iter().any(|g| event.payload.mentions(g)) {
            return;
        }
        let Some(unit) = rt.units.iter_mut().find(|u| u.user == event.user) else {
            return;
        };
        unit.events.push(event.clone());
        let (Payload::Skeleton(frame), Some(tracker)) = (&event.payload, unit.tracker.as_mut()) else {
            return;
        };
        let mut abort = None;
        for (t, fb) in tracker.push(event.t, frame) {
            if let FeedbackEvent::Abort(kind) = fb {
                abort = Some(kind);
            }
            if let Some(m) = message(&rt.id, &rt.scope, &unit.user, rt.realtime, t, &fb) {
                out.push(m);
            }
        }
        if let Some(kind) = abort {
            let info = AbortInfo { t: event.t, task: rt.id.clone(), user: unit.user.clone(), anomaly: kind };
            if let Some(s) = self.session.as_mut() {
                s.aborted.get_or_insert(info);
            }
        }
    }

    fn evaluate_ended(&mut self, now: Option<f64>, out: &mut Vec<FeedbackMessage>) {
        for i in 0..self.tasks.len() {
            let Phase::Ended { t0, t1 } = self.tasks[i].phase else {
                continue;
            };
            if now.is_some_and(|t| t <= t1) {
                continue;
            }
            let members: Vec<MemberEvaluation> = std::mem::take(&mut self.tasks[i].units)
                .into_iter()
                .map(|u| self.evaluate_unit(&self.tasks[i].id, u, t0, t1))
                .collect();
            let omega = members.iter().map(|m| m.omega).sum::<f64>() / members.len().max(1) as f64;
            let rt = &mut self.tasks[i];
            rt.phase = Phase::Done;
            if rt.realtime {
                out.push(FeedbackMessage {
                    t: t1,
                    scope: rt.scope.clone(),
                    kind: MessageKind::TaskComplete,
                    payload: format!("task={}", rt.id),
                });
                out.push(FeedbackMessage {
                    t: t1,
                    scope: rt.scope.clone(),
                    kind: MessageKind::TaskScore,
                    payload: format!(
                        "task={} score={:.6} pass={}",
                        rt.id,
                        omega,
                        omega >= self.config.pass_threshold
                    ),
                });
            }
            rt.evaluated = Some((omega, members));
        }
    }

    fn evaluate_unit(&self, task: &str, mut unit: Unit, t0: f64, t1: f64) -> MemberEvaluation {
        let params = self
            .network
            .node(task)
            .and_then(|n| n.primitive())
            .expect("runtime tasks are primitive");
        let mut errors = Vec::new();
        let refs = self.references.get(task);
        let task_level = if params.assessment.mode.has_task_level() && !refs.is_empty() {
            let slice = TaskSlice::new(task, t0, t1, std::mem::take(&mut unit.events));
            match evaluate_task_level(task, params, &slice, refs) {
                Ok(s) => Some(s),
                Err(e) => {
                    errors.push(e.to_string());
                    None
                }
            }
        } else {
            None
        };
        let plan = self.plans.get(task);
        let trajectory = unit.tracker.as_mut().map(|tr| tr.finish(t1));
        let tf = time_factor(params.time_limit, t1 - t0);
        let check_weight: f64 = params.assessment.checks.iter().map(|c| c.weight).sum();
        let omega = match (&task_level, &trajectory, plan) {
            (Some(ts), None, _) => ts.omega,
            (None, Some(tr), Some(p)) => tr.score * p.used.quality * tf,
            (Some(ts), Some(tr), Some(p)) => {
                let traj = tr.score * p.used.quality;
                let (cw, tw) = if check_weight + p.params.weight > 0.0 {
                    (check_weight, p.params.weight)
                } else {
                    (1.0, 1.0)
                };
                (ts.quality_scaled * cw + traj * tw) / (cw + tw) * tf
            }
            _ => {
                if refs.is_empty() {
                    errors.push("no reference performance".into());
                }
                0.0
            }
        };
        MemberEvaluation {
            user: unit.user,
            omega,
            task_level,
            trajectory,
            trajectory_reference: plan.map(|p| p.used.clone()),
            errors,
        }
    }

    fn finish_incomplete(&mut self, i: usize, end: f64) -> Vec<MemberEvaluation> {
        let units = std::mem::take(&mut self.tasks[i].units);
        let reference = self.plans.get(&self.tasks[i].id).map(|p| p.used.clone());
        units
            .into_iter()
            .map(|mut u| MemberEvaluation {
                user: u.user,
                omega: 0.0,
                task_level: None,
                trajectory: u.tracker.as_mut().map(|tr| tr.finish(end)),
                trajectory_reference: reference.clone(),
                errors: vec!["task did not end".into()],
            })
            .collect()
    }

    fn scope_reports(&self) -> Result<Vec<ScopeReport>, EngineError> {
        let mut order: Vec<(String, ScopeCategory, Vec<UserId>)> = Vec::new();
        for (_, task) in self.network.primitives() {
            let key = task.users.key();
            if !order.iter().any(|(k, _, _)| *k == key) {
                order.push((key, task.users.category(), task.users.users().to_vec()));
            }
        }
        let mut out = Vec::new();
        for (key, category, users) in order {
            let mut tasks = Vec::new();
            let mut anomalies = Vec::new();
            for (rt, (node, params)) in self.tasks.iter().zip(self.network.primitives()) {
                if rt.scope != key {
                    continue;
                }
                let (status, omega, members, start, end) = match (&rt.phase, &rt.evaluated) {
                    (Phase::Done, Some((o, m))) => (TaskStatus::Scored, *o, m.clone(), rt.start, rt.end),
                    (_, Some((o, m))) => (TaskStatus::Incomplete, *o, m.clone(), rt.start, None),
                    _ => (TaskStatus::NotPerformed, 0.0, Vec::new(), None, None),
                };
                for m in &members {
                    for a in m.trajectory.iter().flat_map(|t| &t.anomalies) {
                        anomalies.push(AnomalyRecord {
                            task: rt.id.clone(),
                            user: m.user.clone(),
                            kind: a.kind,
                            t_start: a.t_start,
                            t_end: a.t_end,
                        });
                    }
                }
                tasks.push(TaskReport {
                    task: rt.id.clone(),
                    name: node.name.clone(),
                    weight: params.weight,
                    omega,
                    status,
                    start,
                    end,
                    flags: rt.flags.iter().cloned().collect(),
                    members,
                });
            }
            let weights: Vec<f64> = tasks.iter().map(|t| t.weight).collect();
            let omegas: Vec<f64> = tasks.iter().map(|t| t.omega).collect();
            let weight_total: f64 = weights.iter().sum();
            let (delta, delta_unnormalized) = if weight_total > 0.0 {
                let (sum, _) = weighted_sum(&weights, &omegas)?;
                (Some(aggregate(&weights, &omegas)?), sum)
            } else {
                (None, 0.0)
            };
            let mut member_deltas = BTreeMap::new();
            if category == ScopeCategory::Group {
                for user in &users {
                    let member_omegas: Vec<f64> = tasks
                        .iter()
                        .map(|t| t.members.iter().find(|m| &m.user == user).map_or(0.0, |m| m.omega))
                        .collect();
                    let d = if weight_total > 0.0 { Some(aggregate(&weights, &member_omegas)?) } else { None };
                    member_deltas.insert(user.clone(), d);
                }
            }
            let nodes = self.node_scores(&tasks);
            out.push(ScopeReport {
                scope: key,
                category: category.keyword(),
                users,
                tasks,
                anomalies,
                weight_total,
                delta,
                delta_unnormalized,
                member_deltas,
                nodes,
            });
        }
        Ok(out)
    }

    fn node_scores(&self, tasks: &[TaskReport]) -> Vec<NodeScore> {
        self.network
            .nodes()
            .filter(|n| !n.is_primitive())
            .filter_map(|n| {
                let scored: Vec<&TaskReport> = self
                    .network
                    .primitive_descendants(&n.id)
                    .iter()
                    .filter_map(|id| tasks.iter().find(|t| &t.task == id))
                    .collect();
                if scored.is_empty() {
                    return None;
                }
                let w: Vec<f64> = scored.iter().map(|t| t.weight).collect();
                let o: Vec<f64> = scored.iter().map(|t| t.omega).collect();
                Some(NodeScore { node: n.id.clone(), score: aggregate(&w, &o).ok() })
            })
            .collect()
    }
}

fn message(
    task: &str,
    scope: &str,
    user: &str,
    realtime: bool,
    t: f64,
    fb: &FeedbackEvent,
) -> Option<FeedbackMessage> {
    let (kind, payload) = match fb {
        FeedbackEvent::Burst { joints } if realtime => (MessageKind::Burst, format!("joints={joints}")),
        FeedbackEvent::Missed if realtime => (MessageKind::Missed, String::new()),
        FeedbackEvent::Repetition(n) if realtime => (MessageKind::Repetition, format!("n={n}")),
        FeedbackEvent::AnomalyStart(k) => (MessageKind::Anomaly, format!("anomaly={} phase=start", k.keyword())),
        FeedbackEvent::AnomalyEnd(k) => (MessageKind::Anomaly, format!("anomaly={} phase=end", k.keyword())),
        FeedbackEvent::Abort(k) => (MessageKind::Abort, format!("anomaly={}", k.keyword())),
        _ => return None,
    };
    let mut full = format!("task={task} user={user}");
    if !payload.is_empty() {
        full.push(' ');
        full.push_str(&payload);
    }
    Some(FeedbackMessage { t, scope: scope.to_string(), kind, payload: full })
}

/// Batch scoring of a whole recording.
pub fn score_recording(
    network: &TaskNetwork,
    references: &ReferenceSet,
    config: &EngineConfig,
    recording: &SessionRecording,
) -> Result<AssessmentReport, EngineError> {
    let config = EngineConfig { mode: EngineMode::Batch, ..config.clone() };
    let mut engine = Engine::new(network.clone(), references.clone(), config)?;
    engine.start(&recording.session_id, &recording.users, 0.0)?;
    for e in &recording.events {
        engine.ingest(e)?;
    }
    engine.finalize()
}
