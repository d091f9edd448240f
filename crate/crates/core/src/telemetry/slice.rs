use nalgebra::{UnitQuaternion, Vector3};

use super::{Event, MarkPhase, Payload, SessionRecording, SkeletonFrame};
use crate::model::TaskId;

/// The events of one task performance, between its start and end marks
/// (both inclusive). Task marks themselves are not part of the slice.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSlice {
    pub task: TaskId,
    pub t0: f64,
    pub t1: f64,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SliceError {
    #[error("no start/end marks for task '{0}'")]
    NoMarks(TaskId),
    #[error("nested start marks for task '{0}'")]
    Nested(TaskId),
}

/// Cuts the first performance of `task` out of a recording.
pub fn slice_task(rec: &SessionRecording, task: &str) -> Result<TaskSlice, SliceError> {
    let mut t0 = None;
    let mut t1 = None;
    for e in &rec.events {
        if let Payload::TaskMark { task: id, phase } = &e.payload {
            if id != task {
                continue;
            }
            match (phase, t0) {
                (MarkPhase::Start, None) => t0 = Some(e.t),
                (MarkPhase::Start, Some(_)) => return Err(SliceError::Nested(task.to_string())),
                (MarkPhase::End, Some(_)) => {
                    t1 = Some(e.t);
                    break;
                }
                (MarkPhase::End, None) => {}
            }
        }
    }
    let (t0, t1) = match (t0, t1) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(SliceError::NoMarks(task.to_string())),
    };
    let events = rec
        .events
        .iter()
        .filter(|e| e.t >= t0 && e.t <= t1 && !e.payload.is_mark())
        .cloned()
        .collect();
    Ok(TaskSlice { task: task.to_string(), t0, t1, events })
}

impl TaskSlice {
    pub fn new(task: impl Into<TaskId>, t0: f64, t1: f64, events: Vec<Event>) -> Self {
        Self { task: task.into(), t0, t1, events }
    }

    pub fn duration(&self) -> f64 {
        self.t1 - self.t0
    }

    /// The sub-slice of events produced by one user.
    pub fn for_user(&self, user: &str) -> TaskSlice {
        TaskSlice {
            task: self.task.clone(),
            t0: self.t0,
            t1: self.t1,
            events: self.events.iter().filter(|e| e.user == user).cloned().collect(),
        }
    }

    pub fn poses<'a>(
        &'a self,
        object: &'a str,
    ) -> impl Iterator<Item = (f64, Vector3<f64>, UnitQuaternion<f64>)> + 'a {
        self.events.iter().filter_map(move |e| match &e.payload {
            Payload::Pose { object: o, position, orientation } if o == object => {
                Some((e.t, *position, *orientation))
            }
            _ => None,
        })
    }

    /// Positions of `id`, taken from poses when the slice has any for it and
    /// from skeleton joints otherwise.
    pub fn positions(&self, id: &str) -> Vec<Vector3<f64>> {
        let from_poses: Vec<_> = self.poses(id).map(|(_, p, _)| p).collect();
        if !from_poses.is_empty() {
            return from_poses;
        }
        self.events
            .iter()
            .filter_map(|e| match &e.payload {
                Payload::Skeleton(frame) => frame.position(id),
                _ => None,
            })
            .collect()
    }

    /// First user in the slice that produced skeleton frames.
    pub fn skeleton_user(&self) -> Option<&str> {
        self.events.iter().find_map(|e| match e.payload {
            Payload::Skeleton(_) => Some(e.user.as_str()),
            _ => None,
        })
    }

    /// Skeleton frames of one user (or of every user when `user` is None).
    pub fn skeleton_frames<'a>(
        &'a self,
        user: Option<&'a str>,
    ) -> impl Iterator<Item = (f64, &'a SkeletonFrame)> + 'a {
        self.events.iter().filter_map(move |e| match &e.payload {
            Payload::Skeleton(frame) if user.is_none_or(|u| u == e.user) => Some((e.t, frame)),
            _ => None,
        })
    }

    /// Position of the first posed object in the slice, if any.
    pub fn first_pose_position(&self) -> Option<Vector3<f64>> {
        self.events.iter().find_map(|e| match &e.payload {
            Payload::Pose { position, .. } => Some(*position),
            _ => None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::parse_session;

    #[test]
    fn boundary_filter() {
        let rec = parse_session(
            "t=0.5 u=a collide x y\nt=1.0 u=a mark T1 start\nt=2.0 u=a collide x y\nt=4.0 u=a mark T1 end\nt=5.0 u=a collide x y\n",
        )
        .unwrap();
        let s = slice_task(&rec, "T1").unwrap();
        assert_eq!(s.events.len(), 1);
        assert_eq!(s.events[0].t, 2.0);
        assert_eq!(s.duration(), 3.0);
    }

    #[test]
    fn closed_interval_includes_boundary_events() {
        let rec = parse_session(
            "t=1 u=a collide x y\nt=1 u=a mark T1 start\nt=4 u=a mark T1 end\nt=4 u=a collide x y\n",
        )
        .unwrap();
        assert_eq!(slice_task(&rec, "T1").unwrap().events.len(), 2);
    }

    #[test]
    fn missing_and_nested_marks() {
        let rec = parse_session("t=0 u=a collide x y\n").unwrap();
        assert_eq!(slice_task(&rec, "T1"), Err(SliceError::NoMarks("T1".into())));
        let rec = parse_session(
            "t=0 u=a mark T1 start\nt=1 u=a mark T1 start\nt=2 u=a mark T1 end\nt=3 u=a mark T1 end\n",
        )
        .unwrap();
        assert_eq!(slice_task(&rec, "T1"), Err(SliceError::Nested("T1".into())));
    }
}
