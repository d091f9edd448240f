//! Deterministic scene generators for the bundled SME recordings and for
//! stress sessions.

use std::f64::consts::PI;

use nalgebra::{UnitQuaternion, Vector3};

use crate::telemetry::{Event, MarkPhase, Payload, SessionRecording, SkeletonFrame};

pub const FRAME_RATE: f64 = 30.0;

type V3 = Vector3<f64>;

fn r4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

fn round_vec(v: V3) -> V3 {
    V3::new(r4(v.x), r4(v.y), r4(v.z))
}

fn round_quat(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    let c = q.quaternion().coords.map(|x| (x * 1e9).round() / 1e9);
    UnitQuaternion::new_unchecked(nalgebra::Quaternion::from(c))
}

fn ease(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    0.5 - 0.5 * (PI * s).cos()
}

fn lerp(a: V3, b: V3, s: f64) -> V3 {
    a + (b - a) * ease(s)
}

/// Upper-body pose of one performer standing at `base`, facing -z.
#[derive(Debug, Clone, Copy)]
pub struct Body {
    pub head: V3,
    pub hand_left: V3,
    pub hand_right: V3,
    pub base: V3,
}

impl Body {
    pub fn standing(base: V3) -> Self {
        Self {
            head: base + V3::new(0.0, 0.85, 0.0),
            hand_left: base + V3::new(-0.25, 0.15, -0.15),
            hand_right: base + V3::new(0.25, 0.15, -0.15),
            base,
        }
    }

    fn named(&self) -> Vec<(&'static str, V3)> {
        let sh = self.head + V3::new(0.0, -0.25, 0.0);
        vec![
            ("head", self.head),
            ("shoulder-left", sh + V3::new(-0.2, 0.0, 0.0)),
            ("shoulder-right", sh + V3::new(0.2, 0.0, 0.0)),
            ("hand-left", self.hand_left),
            ("hand-right", self.hand_right),
            ("spine-base", self.base),
        ]
    }

    /// The six tracked joints.
    pub fn frame(&self) -> SkeletonFrame {
        SkeletonFrame::from_positions(self.named().into_iter().map(|(k, v)| (k, round_vec(v))))
    }

    /// A 25-joint frame with the remaining joints placed rigidly.
    pub fn full_frame(&self) -> SkeletonFrame {
        let mut joints = self.named();
        let sh = self.head + V3::new(0.0, -0.25, 0.0);
        let b = self.base;
        let extra: [(&'static str, V3); 19] = [
            ("neck", self.head + V3::new(0.0, -0.12, 0.0)),
            ("spine-shoulder", sh),
            ("spine-mid", (sh + b) / 2.0),
            ("elbow-left", (sh + V3::new(-0.2, 0.0, 0.0) + self.hand_left) / 2.0),
            ("elbow-right", (sh + V3::new(0.2, 0.0, 0.0) + self.hand_right) / 2.0),
            ("wrist-left", self.hand_left + V3::new(0.0, 0.03, 0.02)),
            ("wrist-right", self.hand_right + V3::new(0.0, 0.03, 0.02)),
            ("hand-tip-left", self.hand_left + V3::new(0.0, -0.06, -0.03)),
            ("hand-tip-right", self.hand_right + V3::new(0.0, -0.06, -0.03)),
            ("thumb-left", self.hand_left + V3::new(0.03, -0.02, -0.02)),
            ("thumb-right", self.hand_right + V3::new(-0.03, -0.02, -0.02)),
            ("hip-left", b + V3::new(-0.1, 0.0, 0.0)),
            ("hip-right", b + V3::new(0.1, 0.0, 0.0)),
            ("knee-left", b + V3::new(-0.1, -0.42, -0.02)),
            ("knee-right", b + V3::new(0.1, -0.42, -0.02)),
            ("ankle-left", b + V3::new(-0.1, -0.8, 0.0)),
            ("ankle-right", b + V3::new(0.1, -0.8, 0.0)),
            ("foot-left", b + V3::new(-0.1, -0.84, -0.1)),
            ("foot-right", b + V3::new(0.1, -0.84, -0.1)),
        ];
        joints.extend(extra);
        SkeletonFrame::from_positions(joints.into_iter().map(|(k, v)| (k, round_vec(v))))
    }
}

fn frame_time(i: usize) -> f64 {
    r4(i as f64 / FRAME_RATE)
}

fn ev(t: f64, user: &str, payload: Payload) -> Event {
    Event { t, user: user.to_string(), payload }
}

fn pose(t: f64, user: &str, object: &str, p: V3, q: UnitQuaternion<f64>) -> Event {
    ev(t, user, Payload::Pose { object: object.into(), position: round_vec(p), orientation: round_quat(q) })
}

fn attach(t: f64, user: &str, object: &str, target: &str, attached: bool) -> Event {
    ev(t, user, Payload::Attach { object: object.into(), target: target.into(), attached })
}

fn mark(t: f64, user: &str, task: &str, phase: MarkPhase) -> Event {
    ev(t, user, Payload::TaskMark { task: task.into(), phase })
}

fn text(t: f64, user: &str, field: &str, value: &str) -> Event {
    ev(t, user, Payload::TextInput { field: field.into(), value: value.into() })
}

/// Emits start/end marks for consecutive task windows, end before start.
fn marks_at(t: f64, user: &str, windows: &[(&str, f64, f64)]) -> Vec<Event> {
    let mut out = Vec::new();
    for (task, _, end) in windows {
        if *end == t {
            out.push(mark(t, user, task, MarkPhase::End));
        }
    }
    for (task, start, _) in windows {
        if *start == t {
            out.push(mark(t, user, task, MarkPhase::Start));
        }
    }
    out
}

const HYDROMETER_HOME: V3 = V3::new(0.4, 0.95, -0.4);
const CYLINDER_TOP: V3 = V3::new(0.0, 1.15, -0.45);

pub const HYDROMETER_WINDOWS: [(&str, f64, f64); 4] =
    [("T1", 0.0, 4.0), ("T2", 4.0, 9.0), ("T3", 9.0, 13.0), ("T4", 13.0, 16.0)];

#[derive(Debug, Clone, Copy)]
pub struct HydrometerScene {
    pub body: Body,
    pub hydrometer: V3,
    pub tilt: f64,
}

/// The SME's hydrometer routine at time `t` (0–16 s).
pub fn hydrometer_scene(t: f64) -> HydrometerScene {
    let mut body = Body::standing(V3::new(0.0, 0.85, 0.0));
    let rest = body.hand_right;
    let lifted = HYDROMETER_HOME + V3::new(0.0, 0.1, 0.0);
    let (hand, hydrometer, tilt) = if t < 3.0 {
        (lerp(rest, HYDROMETER_HOME, t / 3.0), HYDROMETER_HOME, 0.0)
    } else if t < 4.0 {
        let h = lerp(HYDROMETER_HOME, lifted, t - 3.0);
        (h, h, 0.0)
    } else if t < 8.5 {
        let s = (t - 4.0) / 4.5;
        let h = lerp(lifted, CYLINDER_TOP, s);
        (h, h, 0.25 * (PI * s).sin())
    } else if t < 9.0 {
        (CYLINDER_TOP, CYLINDER_TOP, 0.0)
    } else {
        (lerp(CYLINDER_TOP, rest, (t - 9.0) / 2.0), CYLINDER_TOP - V3::new(0.0, 0.1, 0.0), 0.0)
    };
    body.hand_right = hand;
    let up = body.head;
    let bent = V3::new(0.0, 1.3, -0.2);
    body.head = if t < 9.0 {
        up
    } else if t < 13.0 {
        lerp(up, bent, (t - 9.0) / 2.0)
    } else {
        lerp(bent, up, (t - 13.0) / 1.5)
    };
    HydrometerScene { body, hydrometer, tilt }
}

fn hydrometer_events(i: usize, t: f64, scene: &HydrometerScene, full: bool) -> Vec<Event> {
    let u = "student";
    let q = UnitQuaternion::from_axis_angle(&V3::z_axis(), scene.tilt);
    let frame = if full { scene.body.full_frame() } else { scene.body.frame() };
    let mut out = vec![ev(t, u, Payload::Skeleton(frame)), pose(t, u, "hydrometer", scene.hydrometer, q)];
    if i.is_multiple_of(30) {
        out.push(pose(t, u, "cylinder", V3::new(0.0, 0.9, -0.45), UnitQuaternion::identity()));
    }
    out
}

/// The SME performing the hydrometer experiment.
pub fn hydrometer_reference() -> SessionRecording {
    let u = "student";
    let mut events = Vec::new();
    let frames = (16.0 * FRAME_RATE) as usize;
    for i in 0..=frames {
        let t = frame_time(i);
        events.extend(hydrometer_events(i, t, &hydrometer_scene(t), false));
        if t == 3.0 {
            events.push(attach(t, u, "hydrometer", "hand-right", true));
        }
        if t == 9.0 {
            events.push(attach(t, u, "hydrometer", "hand-right", false));
        }
        if t == 15.0 {
            events.push(text(t, u, "reading", "1.025"));
        }
        events.extend(marks_at(t, u, &HYDROMETER_WINDOWS));
    }
    SessionRecording {
        session_id: "hydrometer-sme".into(),
        users: vec![u.into()],
        events,
        frame_rate: Some(FRAME_RATE),
    }
}

/// A long hydrometer session: each task lasts a quarter of `seconds` and
/// loops the SME's motion for that task. Skeletons carry 25 joints and five
/// objects are tracked.
pub fn throughput_session(seconds: f64) -> SessionRecording {
    let u = "student";
    let span = seconds / 4.0;
    let windows: Vec<(&str, f64, f64)> = HYDROMETER_WINDOWS
        .iter()
        .enumerate()
        .map(|(k, (id, _, _))| (*id, r4(k as f64 * span), r4((k + 1) as f64 * span)))
        .collect();
    let others = ["cylinder", "flask", "pipette", "tray"];
    let mut events = Vec::new();
    let frames = (seconds * FRAME_RATE).round() as usize;
    for i in 0..=frames {
        let t = frame_time(i);
        let k = ((t / span) as usize).min(3);
        let (_, a, b) = HYDROMETER_WINDOWS[k];
        let local = (t - k as f64 * span).rem_euclid(b - a);
        let scene = hydrometer_scene(a + local);
        let q = UnitQuaternion::from_axis_angle(&V3::z_axis(), scene.tilt);
        events.push(ev(t, u, Payload::Skeleton(scene.body.full_frame())));
        let slot = i % 5;
        if slot == 0 || i % 4 == 0 {
            events.push(pose(t, u, "hydrometer", scene.hydrometer, q));
        }
        if slot > 0 {
            let o = others[slot - 1];
            let p = V3::new(-0.5 + 0.3 * slot as f64, 0.9, -0.5);
            events.push(pose(t, u, o, p, UnitQuaternion::identity()));
        }
        if (t - windows[3].1 - 2.0).abs() < 0.5 / FRAME_RATE {
            events.push(text(t, u, "reading", "1.025"));
        }
        events.extend(marks_at(t, u, &windows));
    }
    SessionRecording { session_id: "throughput".into(), users: vec![u.into()], events, frame_rate: Some(FRAME_RATE) }
}

pub const COLLABORATIVE_WINDOWS: [(&str, &str, f64, f64); 5] = [
    ("T1", "instructor", 0.0, 4.0),
    ("T2", "student", 4.0, 7.0),
    ("T3", "instructor", 7.0, 11.0),
    ("T4", "student", 11.0, 16.0),
    ("T5", "student", 16.0, 20.0),
];

/// Lift, tip and set down a beaker held from `s` = 0 to 1.
fn pour(home: V3, s: f64) -> (V3, f64) {
    let lifted = home + V3::new(-0.15, 0.2, 0.0);
    let h = if s < 0.5 { lerp(home, lifted, s * 2.0) } else { lerp(lifted, home, s * 2.0 - 1.0) };
    (h, 0.8 * (PI * s.clamp(0.0, 1.0)).sin())
}

/// Instructor demonstrates, student repeats; both tracked in one session.
pub fn collaborative_reference() -> SessionRecording {
    let (inst, stud) = ("instructor", "student");
    let inst_base = V3::new(-1.0, 0.85, 0.0);
    let stud_base = V3::new(1.0, 0.85, 0.0);
    let beaker_i = inst_base + V3::new(0.3, 0.1, -0.4);
    let beaker_s = stud_base + V3::new(0.3, 0.1, -0.4);
    let shelf = stud_base + V3::new(-0.2, 0.25, -0.5);
    let windows: Vec<(&str, f64, f64)> = COLLABORATIVE_WINDOWS.iter().map(|(id, _, a, b)| (*id, *a, *b)).collect();
    let mut events = Vec::new();
    let mut held = (false, false);
    let frames = (20.0 * FRAME_RATE) as usize;
    for i in 0..=frames {
        let t = frame_time(i);
        let mut bi = Body::standing(inst_base);
        let mut bs = Body::standing(stud_base);
        let (rest_i, rest_s) = (bi.hand_right, bs.hand_right);

        // Instructor: reach 0-1 s, pour 1-3.5 s, withdraw 3.5-4 s.
        let (pi, ti, hold_i) = if t < 1.0 {
            bi.hand_right = lerp(rest_i, beaker_i, t);
            (beaker_i, 0.0, false)
        } else if t < 3.5 {
            let (p, tilt) = pour(beaker_i, (t - 1.0) / 2.5);
            bi.hand_right = p;
            (p, tilt, true)
        } else {
            bi.hand_right = lerp(beaker_i, rest_i, (t - 3.5) * 2.0);
            (beaker_i, 0.0, false)
        };
        let pipette = if (7.0..11.0).contains(&t) {
            let p = lerp(beaker_i + V3::new(0.0, 0.3, 0.0), beaker_i + V3::new(0.0, 0.12, 0.0), (t - 7.0) / 4.0);
            bi.hand_left = p + V3::new(0.0, 0.1, 0.0);
            p
        } else {
            beaker_i + V3::new(-0.3, 0.0, 0.0)
        };

        // Student: reach 10-11 s, pour 11-16 s holding throughout, carry to
        // the shelf 16.5-19 s.
        let (ps, ts, hold_s) = if t < 10.0 {
            (beaker_s, 0.0, false)
        } else if t < 11.0 {
            bs.hand_right = lerp(rest_s, beaker_s, t - 10.0);
            (beaker_s, 0.0, false)
        } else if t <= 16.0 {
            let (p, tilt) = pour(beaker_s, (t - 11.0) / 5.0);
            bs.hand_right = p;
            (p, tilt, t < 16.0)
        } else if t < 16.5 {
            bs.hand_right = beaker_s;
            (beaker_s, 0.0, false)
        } else if t < 19.0 {
            let p = lerp(beaker_s, shelf, (t - 16.5) / 2.5);
            bs.hand_right = p;
            (p, 0.0, true)
        } else {
            bs.hand_right = lerp(shelf, rest_s, t - 19.0);
            (shelf, 0.0, false)
        };

        events.push(ev(t, inst, Payload::Skeleton(bi.frame())));
        events.push(ev(t, stud, Payload::Skeleton(bs.frame())));
        let qi = UnitQuaternion::from_axis_angle(&V3::z_axis(), ti);
        let qs = UnitQuaternion::from_axis_angle(&V3::z_axis(), ts);
        events.push(pose(t, inst, "beaker-i", pi, qi));
        events.push(pose(t, inst, "pipette", pipette, UnitQuaternion::identity()));
        events.push(pose(t, stud, "beaker-s", ps, qs));
        if hold_i != held.0 {
            events.push(attach(t, inst, "beaker-i", "hand-right", hold_i));
            held.0 = hold_i;
        }
        if hold_s != held.1 {
            events.push(attach(t, stud, "beaker-s", "hand-right", hold_s));
            held.1 = hold_s;
        }
        if t == 6.0 {
            events.push(text(t, stud, "level", "42.5"));
        }
        for m in marks_at(t, inst, &windows) {
            let Payload::TaskMark { task, .. } = &m.payload else { unreachable!() };
            let owner = COLLABORATIVE_WINDOWS.iter().find(|w| w.0 == task).map_or(inst, |w| w.1);
            events.push(Event { user: owner.to_string(), ..m });
        }
    }
    SessionRecording {
        session_id: "collaborative-sme".into(),
        users: vec![inst.into(), stud.into()],
        events,
        frame_rate: Some(FRAME_RATE),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::{parse_session, slice_task};

    #[test]
    fn recordings_round_trip_through_text() {
        for rec in [hydrometer_reference(), collaborative_reference()] {
            let text = rec.to_string();
            assert_eq!(parse_session(&text).unwrap(), rec);
        }
    }

    #[test]
    fn hydrometer_slices_have_expected_bounds() {
        let rec = hydrometer_reference();
        for (task, a, b) in HYDROMETER_WINDOWS {
            let s = slice_task(&rec, task).unwrap();
            assert_eq!((s.t0, s.t1), (a, b));
        }
    }

    #[test]
    fn hand_speed_is_bounded() {
        let rec = hydrometer_reference();
        let frames: Vec<_> = rec
            .events
            .iter()
            .filter_map(|e| match &e.payload {
                Payload::Skeleton(f) => Some((e.t, f.position("hand-right").unwrap())),
                _ => None,
            })
            .collect();
        for w in frames.windows(2) {
            let v = (w[1].1 - w[0].1).norm() / (w[1].0 - w[0].0);
            assert!(v < 0.5, "hand speed {v} at t={}", w[0].0);
        }
    }

    #[test]
    fn throughput_session_size() {
        let rec = throughput_session(600.0);
        assert!((38_000..=45_000).contains(&rec.events.len()), "{}", rec.events.len());
        let joints = rec.events.iter().find_map(|e| match &e.payload {
            Payload::Skeleton(f) => Some(f.joints.len()),
            _ => None,
        });
        assert_eq!(joints, Some(25));
        assert_eq!(rec.marked_tasks().len(), 4);
    }
}
