//! Body-size normalization between an assessed user and the reference
//! performer.
//!
//! Frames are scaled isotropically about the head so the user's face-hand
//! distance matches the reference performer's. Per task, the factor comes
//! from the median distance over the first second of the slice.

use nalgebra::Vector3;
use serde::Serialize;

use super::{SkeletonFrame, TaskSlice};

pub const HEAD: &str = "head";
const HANDS: [&str; 2] = ["hand-right", "hand-left"];

/// Below this face-hand distance (meters) a pose is considered degenerate.
pub const MIN_FACE_HAND_DISTANCE: f64 = 0.01;
/// Span (seconds) at the start of a slice used to estimate body proportions.
pub const STATS_WINDOW: f64 = 1.0;

/// Body proportions of a performer, in meters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkeletonStats {
    pub face_height: f64,
    pub hand_height: f64,
    pub face_hand_distance: f64,
    pub hand_joint: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CorrectionError {
    #[error("frame lacks joint '{0}'")]
    MissingJoint(String),
    #[error("reference face-hand distance must be positive")]
    DegenerateReference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeightCorrection {
    pub frame: SkeletonFrame,
    /// Applied factor; None when the pose was degenerate and the frame was
    /// passed through unchanged.
    pub scale: Option<f64>,
}

fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    Some(if n % 2 == 1 { xs[n / 2] } else { (xs[n / 2 - 1] + xs[n / 2]) / 2.0 })
}

/// The hand joint present in `frame` that is nearest to `near`, or the first
/// present hand (right before left) when there is no point of interest.
pub fn choose_hand(frame: &SkeletonFrame, near: Option<Vector3<f64>>) -> Option<&'static str> {
    let present = HANDS.iter().copied().filter(|h| frame.joints.contains_key(*h));
    match near {
        Some(p) => present.min_by(|a, b| {
            let da = (frame.position(a).unwrap() - p).norm();
            let db = (frame.position(b).unwrap() - p).norm();
            da.total_cmp(&db)
        }),
        None => present.into_iter().next(),
    }
}

fn resolve_hand<'a>(frame: &SkeletonFrame, preferred: &'a str) -> Option<&'a str> {
    if frame.joints.contains_key(preferred) {
        return Some(preferred);
    }
    HANDS.iter().copied().find(|h| frame.joints.contains_key(*h))
}

pub fn face_hand_distance(frame: &SkeletonFrame, hand: &str) -> Option<f64> {
    Some((frame.position(hand)? - frame.position(HEAD)?).norm())
}

impl SkeletonStats {
    /// Medians over the first [`STATS_WINDOW`] seconds of `frames`.
    pub fn from_frames<'a>(
        frames: impl IntoIterator<Item = (f64, &'a SkeletonFrame)>,
        hand: &str,
    ) -> Option<Self> {
        let mut start = None;
        let (mut faces, mut hands, mut dists) = (Vec::new(), Vec::new(), Vec::new());
        for (t, frame) in frames {
            let t0 = *start.get_or_insert(t);
            if t > t0 + STATS_WINDOW {
                break;
            }
            if let (Some(head), Some(h)) = (frame.position(HEAD), frame.position(hand)) {
                faces.push(head.y);
                hands.push(h.y);
                dists.push((h - head).norm());
            }
        }
        Some(Self {
            face_height: median(faces)?,
            hand_height: median(hands)?,
            face_hand_distance: median(dists)?,
            hand_joint: hand.to_string(),
        })
    }

    /// Statistics of the slice's (first) skeleton performer, using the hand
    /// nearer the first posed object at slice start.
    pub fn from_slice(slice: &TaskSlice) -> Option<Self> {
        Self::from_slice_for(slice, None)
    }

    /// As [`SkeletonStats::from_slice`] for a given performer.
    pub fn from_slice_for(slice: &TaskSlice, user: Option<&str>) -> Option<Self> {
        let user = user.or(slice.skeleton_user())?;
        let (_, first) = slice.skeleton_frames(Some(user)).next()?;
        let hand = choose_hand(first, slice.first_pose_position())?;
        Self::from_frames(slice.skeleton_frames(Some(user)), hand)
    }

    /// Per-task scale for a user: reference distance over the user's median
    /// face-hand distance in the first second. None when degenerate.
    pub fn scale_for<'a>(&self, frames: impl IntoIterator<Item = (f64, &'a SkeletonFrame)>) -> Option<f64> {
        if self.face_hand_distance <= 0.0 {
            return None;
        }
        let mut start = None;
        let mut dists = Vec::new();
        for (t, frame) in frames {
            let t0 = *start.get_or_insert(t);
            if t > t0 + STATS_WINDOW {
                break;
            }
            if let Some(hand) = resolve_hand(frame, &self.hand_joint) {
                if let Some(d) = face_hand_distance(frame, hand) {
                    dists.push(d);
                }
            }
        }
        let d = median(dists)?;
        (d >= MIN_FACE_HAND_DISTANCE).then(|| self.face_hand_distance / d)
    }
}

/// Scales every joint about the head by `scale`. The head stays put.
pub fn scale_about_head(frame: &SkeletonFrame, scale: f64) -> SkeletonFrame {
    let Some(head) = frame.position(HEAD) else {
        return frame.clone();
    };
    if scale == 1.0 {
        return frame.clone();
    }
    let mut out = frame.clone();
    for (name, j) in out.joints.iter_mut() {
        if name != HEAD {
            j.position = head + (j.position - head) * scale;
        }
    }
    out
}

/// Corrects a single frame using its own face-hand distance.
pub fn height_correction(
    frame: &SkeletonFrame,
    stats: &SkeletonStats,
) -> Result<HeightCorrection, CorrectionError> {
    if stats.face_hand_distance <= 0.0 {
        return Err(CorrectionError::DegenerateReference);
    }
    if !frame.joints.contains_key(HEAD) {
        return Err(CorrectionError::MissingJoint(HEAD.into()));
    }
    let hand = resolve_hand(frame, &stats.hand_joint)
        .ok_or_else(|| CorrectionError::MissingJoint(stats.hand_joint.clone()))?;
    let d = face_hand_distance(frame, hand).expect("head and hand present");
    if d < MIN_FACE_HAND_DISTANCE {
        return Ok(HeightCorrection { frame: frame.clone(), scale: None });
    }
    let scale = stats.face_hand_distance / d;
    Ok(HeightCorrection { frame: scale_about_head(frame, scale), scale: Some(scale) })
}
