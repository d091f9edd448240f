//! Task-level assessment: object-manipulation checks against SME references.
//!
//! Every check maps its measurement onto a clamped linear ramp in [0, 1].
//! A task score is the check-weighted mean of its checks, scaled by the
//! quality rating of the reference it was compared with; with several
//! references the best scaled result wins.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::Serialize;

use crate::model::{CheckKind, CheckSpec, PrimitiveTask};
use crate::telemetry::{Payload, Reference, TaskSlice};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub kind: CheckKind,
    pub subject: String,
    pub score: f64,
    pub weight: f64,
    pub detail: String,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceUsed {
    pub index: usize,
    pub quality: f64,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskScore {
    pub task: String,
    /// Final task-level score in [0, 1].
    pub omega: f64,
    /// Check-weighted mean before quality and time scaling.
    pub raw: f64,
    /// `raw` times the reference quality.
    pub quality_scaled: f64,
    pub time_factor: f64,
    pub checks: Vec<CheckResult>,
    pub reference: ReferenceUsed,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CheckError {
    #[error("no data for '{0}' in the user's performance")]
    NoUserData(String),
    #[error("no data for '{0}' in any reference")]
    NoReferenceData(String),
    #[error("zero-duration slice")]
    ZeroDuration,
    #[error("attach state of '{object}'/'{target}' set to {state} twice at t={t}")]
    AttachMismatch { object: String, target: String, state: &'static str, t: f64 },
    #[error("no reference performance")]
    NoReference,
    #[error("task is not assessed at task level")]
    NotTaskLevel,
}

fn ramp(error: f64, max: f64) -> f64 {
    (1.0 - error / max).clamp(0.0, 1.0)
}

/// Sign-aligned component mean of unit quaternions, renormalized.
pub fn mean_orientation(qs: &[UnitQuaternion<f64>]) -> Option<UnitQuaternion<f64>> {
    let first = qs.first()?.quaternion().coords;
    let mut sum = Quaternion::from_vector(nalgebra::Vector4::zeros());
    for q in qs {
        let c = q.quaternion().coords;
        if c.dot(&first) < 0.0 {
            sum.coords -= c;
        } else {
            sum.coords += c;
        }
    }
    (sum.norm() > 0.0).then(|| UnitQuaternion::from_quaternion(sum))
}

/// Rotation angle (radians, in [0, π]) between two orientations. Exactly 0
/// for identical inputs.
pub fn orientation_angle(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    let (a, mut b) = (a.quaternion().coords, b.quaternion().coords);
    if a.dot(&b) < 0.0 {
        b = -b;
    }
    4.0 * (a - b).norm().atan2((a + b).norm())
}

fn mean_position(ps: &[Vector3<f64>]) -> Option<Vector3<f64>> {
    if ps.is_empty() {
        return None;
    }
    Some(ps.iter().sum::<Vector3<f64>>() / ps.len() as f64)
}

fn result(spec: &CheckSpec, score: f64, detail: String, samples: usize) -> CheckResult {
    CheckResult { kind: spec.kind, subject: spec.subject.clone(), score, weight: spec.weight, detail, samples }
}

pub fn orientation_score(user: &TaskSlice, refs: &[Reference], spec: &CheckSpec) -> Result<CheckResult, CheckError> {
    let user_qs: Vec<_> = user.poses(&spec.subject).map(|(_, _, q)| q).collect();
    let user_mean = mean_orientation(&user_qs).ok_or_else(|| CheckError::NoUserData(spec.subject.clone()))?;
    let best = refs
        .iter()
        .filter_map(|r| {
            let qs: Vec<_> = r.slice.poses(&spec.subject).map(|(_, _, q)| q).collect();
            mean_orientation(&qs)
        })
        .map(|m| orientation_angle(&user_mean, &m))
        .min_by(f64::total_cmp)
        .ok_or_else(|| CheckError::NoReferenceData(spec.subject.clone()))?;
    let max = spec.effective_tolerance();
    Ok(result(
        spec,
        ramp(best, max),
        format!("mean orientation differs by {:.4} rad (max {:.4})", best, max),
        user_qs.len(),
    ))
}

pub fn position_score(user: &TaskSlice, refs: &[Reference], spec: &CheckSpec) -> Result<CheckResult, CheckError> {
    let user_ps = user.positions(&spec.subject);
    let user_mean = mean_position(&user_ps).ok_or_else(|| CheckError::NoUserData(spec.subject.clone()))?;
    let best = refs
        .iter()
        .filter_map(|r| mean_position(&r.slice.positions(&spec.subject)))
        .map(|m| (user_mean - m).norm())
        .min_by(f64::total_cmp)
        .ok_or_else(|| CheckError::NoReferenceData(spec.subject.clone()))?;
    let max = spec.effective_tolerance();
    Ok(result(
        spec,
        ramp(best, max),
        format!("mean position {:.4} m from reference (max {:.4})", best, max),
        user_ps.len(),
    ))
}

/// Fraction of the slice during which the subject is attached to the check's
/// reference object. The pair starts detached unless its first transition
/// in the slice is a detach, in which case it was attached at slice start.
pub fn attachment_score(user: &TaskSlice, spec: &CheckSpec) -> Result<CheckResult, CheckError> {
    let duration = user.duration();
    if duration <= 0.0 {
        return Err(CheckError::ZeroDuration);
    }
    let target = spec.reference.as_deref().unwrap_or_default();
    let transitions: Vec<(f64, bool)> = user
        .events
        .iter()
        .filter_map(|e| match &e.payload {
            Payload::Attach { object, target: t, attached }
                if (object == &spec.subject && t == target) || (object == target && t == &spec.subject) =>
            {
                Some((e.t, *attached))
            }
            _ => None,
        })
        .collect();

    let mut state = transitions.first().is_some_and(|&(_, on)| !on);
    let mut since = user.t0;
    let mut total = 0.0;
    for &(t, on) in &transitions {
        if on == state {
            return Err(CheckError::AttachMismatch {
                object: spec.subject.clone(),
                target: target.to_string(),
                state: if on { "on" } else { "off" },
                t,
            });
        }
        if state {
            total += t - since;
        }
        state = on;
        since = t;
    }
    if state {
        total += user.t1 - since;
    }
    let score = (total / duration).clamp(0.0, 1.0);
    Ok(result(
        spec,
        score,
        format!("attached {:.3} s of {:.3} s", total, duration),
        transitions.len(),
    ))
}

pub fn collision_count(user: &TaskSlice, spec: &CheckSpec) -> usize {
    user.events
        .iter()
        .filter(|e| match &e.payload {
            Payload::Collision { object, other } => {
                object == &spec.subject && spec.reference.as_ref().is_none_or(|r| r == other)
            }
            _ => false,
        })
        .count()
}

pub fn collision_score(user: &TaskSlice, spec: &CheckSpec) -> CheckResult {
    let k = collision_count(user, spec);
    let score = (1.0 - k as f64 * spec.penalty).max(0.0);
    result(spec, score, format!("{k} collision(s) at penalty {}", spec.penalty), k)
}

fn last_text<'a>(slice: &'a TaskSlice, field: &str) -> Option<&'a str> {
    slice.events.iter().rev().find_map(|e| match &e.payload {
        Payload::TextInput { field: f, value } if f == field => Some(value.as_str()),
        _ => None,
    })
}

fn text_against(user: &str, reference: &str, tol: f64) -> (f64, String) {
    match reference.trim().parse::<f64>() {
        Ok(r) => match user.trim().parse::<f64>() {
            Ok(u) => {
                let diff = (u - r).abs();
                let score = if diff <= tol { 1.0 } else { (1.0 - (diff - tol) / tol).max(0.0) };
                (score, format!("entered {u}, reference {r}, tolerance {tol}"))
            }
            Err(_) => (0.0, format!("entered '{user}' is not a number (reference {r})")),
        },
        Err(_) => {
            let score = if user == reference { 1.0 } else { 0.0 };
            (score, format!("entered '{user}', reference '{reference}'"))
        }
    }
}

/// Compares the user's last entry for the field with each reference's last
/// entry. Numeric references are matched within tolerance, others exactly.
pub fn text_input_score(user: &TaskSlice, refs: &[Reference], spec: &CheckSpec) -> Result<CheckResult, CheckError> {
    let entered = last_text(user, &spec.subject).ok_or_else(|| CheckError::NoUserData(spec.subject.clone()))?;
    let tol = spec.effective_tolerance();
    let (score, detail) = refs
        .iter()
        .filter_map(|r| last_text(&r.slice, &spec.subject))
        .map(|r| text_against(entered, r, tol))
        .fold(None, |best: Option<(f64, String)>, cur| match best {
            Some(b) if b.0 >= cur.0 => Some(b),
            _ => Some(cur),
        })
        .ok_or_else(|| CheckError::NoReferenceData(spec.subject.clone()))?;
    Ok(result(spec, score, detail, 1))
}

/// Runs one check; failures become a zero score with the error as detail.
pub fn run_check(user: &TaskSlice, refs: &[Reference], spec: &CheckSpec) -> CheckResult {
    let outcome = match spec.kind {
        CheckKind::Orientation => orientation_score(user, refs, spec),
        CheckKind::Position => position_score(user, refs, spec),
        CheckKind::Attachment => attachment_score(user, spec),
        CheckKind::Collision => Ok(collision_score(user, spec)),
        CheckKind::TextInput => text_input_score(user, refs, spec),
    };
    outcome.unwrap_or_else(|e| result(spec, 0.0, format!("error: {e}"), 0))
}

/// Check-weighted mean; equal weights when every weight is zero.
pub fn weighted_mean(checks: &[CheckResult]) -> f64 {
    let total: f64 = checks.iter().map(|c| c.weight).sum();
    if checks.is_empty() {
        return 0.0;
    }
    if total > 0.0 {
        (checks.iter().map(|c| c.weight * c.score).sum::<f64>() / total).clamp(0.0, 1.0)
    } else {
        checks.iter().map(|c| c.score).sum::<f64>() / checks.len() as f64
    }
}

/// Multiplicative slowdown penalty for tasks with a time limit.
pub fn time_factor(limit: Option<f64>, duration: f64) -> f64 {
    match limit {
        Some(limit) if duration > limit => limit / duration,
        _ => 1.0,
    }
}

pub fn evaluate_task_level(
    task: &str,
    params: &PrimitiveTask,
    user: &TaskSlice,
    refs: &[Reference],
) -> Result<TaskScore, CheckError> {
    if !params.assessment.mode.has_task_level() {
        return Err(CheckError::NotTaskLevel);
    }
    if refs.is_empty() {
        return Err(CheckError::NoReference);
    }
    let mut best: Option<TaskScore> = None;
    for (index, r) in refs.iter().enumerate() {
        let one = std::slice::from_ref(r);
        let checks: Vec<CheckResult> = params.assessment.checks.iter().map(|c| run_check(user, one, c)).collect();
        let raw = weighted_mean(&checks);
        let quality_scaled = raw * r.quality;
        if best.as_ref().is_some_and(|b| b.quality_scaled >= quality_scaled) {
            continue;
        }
        let tf = time_factor(params.time_limit, user.duration());
        best = Some(TaskScore {
            task: task.to_string(),
            omega: quality_scaled * tf,
            raw,
            quality_scaled,
            time_factor: tf,
            checks,
            reference: ReferenceUsed { index, quality: r.quality, source: r.source.clone() },
        });
    }
    Ok(best.expect("at least one reference"))
}
