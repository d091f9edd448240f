//! Session recordings: the timestamped event streams produced by game
//! clients, for both assessed users and SME reference performances.
//!
//! One event per line:
//!
//! ```text
//! t=0.5 u=student pose hydrometer 0.1 0.9 -0.3 0 0 0 1
//! t=0.5 u=student attach hydrometer hand-right on
//! t=0.6 u=student collide hydrometer cylinder
//! t=0.7 u=student text reading "1.025"
//! t=0.7 u=student skel head=0,1.7,0;hand-right=0.3,1.1,-0.2
//! t=0.8 u=student mark T1 end
//! ```
//!
//! Optional header lines `session <id> [rate=<hz>]` and `users <id...>` may
//! precede the events; `#` lines are comments.

mod reference;
mod skeleton;
mod slice;

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use crate::model::{ObjectId, TaskId, UserId};

pub use reference::{parse_manifest, ManifestEntry, Reference, ReferenceError, ReferenceSet};
pub use skeleton::{
    choose_hand, face_hand_distance, height_correction, scale_about_head, CorrectionError,
    HeightCorrection, SkeletonStats, HEAD, MIN_FACE_HAND_DISTANCE, STATS_WINDOW,
};
pub use slice::{slice_task, SliceError, TaskSlice};

/// Allowed deviation of a pose quaternion's norm from 1.
pub const QUATERNION_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub t: f64,
    pub user: UserId,
    pub payload: Payload,
}

impl Event {
    /// Shifts pose positions and skeleton joints; other payloads are unchanged.
    pub fn translate(&mut self, offset: Vector3<f64>) {
        match &mut self.payload {
            Payload::Pose { position, .. } => *position += offset,
            Payload::Skeleton(frame) => {
                for j in frame.joints.values_mut() {
                    j.position += offset;
                }
            }
            _ => {}
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarkPhase {
    Start,
    End,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Pose { object: ObjectId, position: Vector3<f64>, orientation: UnitQuaternion<f64> },
    Attach { object: ObjectId, target: ObjectId, attached: bool },
    Collision { object: ObjectId, other: ObjectId },
    TextInput { field: ObjectId, value: String },
    Skeleton(SkeletonFrame),
    TaskMark { task: TaskId, phase: MarkPhase },
}

impl Payload {
    /// Whether this payload concerns the given object or joint.
    pub fn mentions(&self, id: &str) -> bool {
        match self {
            Payload::Pose { object, .. } => object == id,
            Payload::Attach { object, target, .. } => object == id || target == id,
            Payload::Collision { object, other } => object == id || other == id,
            Payload::TextInput { field, .. } => field == id,
            Payload::Skeleton(frame) => frame.joints.contains_key(id),
            Payload::TaskMark { task, .. } => task == id,
        }
    }

    pub fn is_mark(&self) -> bool {
        matches!(self, Payload::TaskMark { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Joint {
    pub position: Vector3<f64>,
    pub confidence: f64,
}

impl Joint {
    pub fn at(position: Vector3<f64>) -> Self {
        Self { position, confidence: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SkeletonFrame {
    pub joints: BTreeMap<String, Joint>,
}

impl SkeletonFrame {
    pub fn from_positions<'a>(joints: impl IntoIterator<Item = (&'a str, Vector3<f64>)>) -> Self {
        Self {
            joints: joints.into_iter().map(|(k, v)| (k.to_string(), Joint::at(v))).collect(),
        }
    }

    pub fn position(&self, joint: &str) -> Option<Vector3<f64>> {
        self.joints.get(joint).map(|j| j.position)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SessionRecording {
    pub session_id: String,
    pub users: Vec<UserId>,
    pub events: Vec<Event>,
    pub frame_rate: Option<f64>,
}

impl SessionRecording {
    /// Applies a rigid translation to every pose and skeleton joint.
    pub fn translated(&self, offset: Vector3<f64>) -> Self {
        let mut out = self.clone();
        for e in &mut out.events {
            e.translate(offset);
        }
        out
    }

    pub fn duration(&self) -> f64 {
        match (self.events.first(), self.events.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    /// Task ids that have a start mark, in order of first appearance.
    pub fn marked_tasks(&self) -> Vec<TaskId> {
        let mut out: Vec<TaskId> = Vec::new();
        for e in &self.events {
            if let Payload::TaskMark { task, phase: MarkPhase::Start } = &e.payload {
                if !out.contains(task) {
                    out.push(task.clone());
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RecordingError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: timestamp {t} is earlier than previous {previous}")]
    TimestampRegression { line: usize, t: f64, previous: f64 },
    #[error("line {line}: unmatched {phase} mark for task '{task}'")]
    UnmatchedMark { line: usize, task: String, phase: &'static str },
    #[error("line {line}: user '{user}' is not declared in the header")]
    UnknownUser { line: usize, user: String },
}

fn malformed(line: usize, message: impl Into<String>) -> RecordingError {
    RecordingError::Malformed { line, message: message.into() }
}

/// Incremental line parser shared by file loading and live streams.
#[derive(Debug, Default)]
pub struct SessionReader {
    header: SessionRecording,
    declared_users: bool,
    seen_event: bool,
    previous: Option<f64>,
    open_marks: BTreeMap<String, Vec<usize>>,
}

impl SessionReader {
    pub fn new() -> Self {
        Self::default()
    }

    /// Session id, users and frame rate seen so far (no events).
    pub fn header(&self) -> &SessionRecording {
        &self.header
    }

    /// Parses one line; header lines, comments and blanks yield None.
    pub fn feed(&mut self, line: usize, raw: &str) -> Result<Option<Event>, RecordingError> {
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            return Ok(None);
        }
        if let Some(rest) = content.strip_prefix("session ") {
            if self.seen_event {
                return Err(malformed(line, "header after first event"));
            }
            let mut words = rest.split_whitespace();
            self.header.session_id = words.next().unwrap_or_default().to_string();
            for w in words {
                match w.strip_prefix("rate=") {
                    Some(v) => {
                        self.header.frame_rate = Some(
                            v.parse().ok().filter(|r: &f64| *r > 0.0 && r.is_finite()).ok_or_else(
                                || malformed(line, format!("bad frame rate '{v}'")),
                            )?,
                        )
                    }
                    None => return Err(malformed(line, format!("unknown session field '{w}'"))),
                }
            }
            return Ok(None);
        }
        if let Some(rest) = content.strip_prefix("users ") {
            if self.seen_event {
                return Err(malformed(line, "header after first event"));
            }
            self.header.users = rest.split_whitespace().map(String::from).collect();
            self.declared_users = true;
            return Ok(None);
        }

        let event = parse_event(content, line)?;
        if let Some(p) = self.previous {
            if event.t < p {
                return Err(RecordingError::TimestampRegression { line, t: event.t, previous: p });
            }
        }
        self.previous = Some(event.t);
        if !self.header.users.contains(&event.user) {
            if self.declared_users {
                return Err(RecordingError::UnknownUser { line, user: event.user });
            }
            self.header.users.push(event.user.clone());
        }
        if let Payload::TaskMark { task, phase } = &event.payload {
            let stack = self.open_marks.entry(task.clone()).or_default();
            match phase {
                MarkPhase::Start => stack.push(line),
                MarkPhase::End => {
                    if stack.pop().is_none() {
                        return Err(RecordingError::UnmatchedMark { line, task: task.clone(), phase: "end" });
                    }
                }
            }
        }
        self.seen_event = true;
        Ok(Some(event))
    }

    /// Checks that every start mark was closed.
    pub fn finish(&self) -> Result<(), RecordingError> {
        let unclosed = self
            .open_marks
            .iter()
            .filter_map(|(task, stack)| stack.first().map(|&l| (l, task.clone())))
            .min();
        match unclosed {
            Some((line, task)) => Err(RecordingError::UnmatchedMark { line, task, phase: "start" }),
            None => Ok(()),
        }
    }
}

/// Parses a recording. Out-of-order timestamps are rejected rather than
/// sorted.
pub fn parse_session(text: &str) -> Result<SessionRecording, RecordingError> {
    let mut reader = SessionReader::new();
    let mut events = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        if let Some(e) = reader.feed(idx + 1, raw)? {
            events.push(e);
        }
    }
    reader.finish()?;
    let mut rec = reader.header;
    rec.events = events;
    Ok(rec)
}

fn parse_f64(s: &str, line: usize) -> Result<f64, RecordingError> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| malformed(line, format!("'{s}' is not a finite number")))
}

fn parse_event(content: &str, line: usize) -> Result<Event, RecordingError> {
    let (t_tok, rest) = content
        .split_once(char::is_whitespace)
        .ok_or_else(|| malformed(line, "expected 't=<sec> u=<user> <kind> ...'"))?;
    let t = parse_f64(
        t_tok.strip_prefix("t=").ok_or_else(|| malformed(line, "event must start with t=<sec>"))?,
        line,
    )?;
    if t < 0.0 {
        return Err(malformed(line, "negative timestamp"));
    }
    let rest = rest.trim_start();
    let (u_tok, rest) = rest
        .split_once(char::is_whitespace)
        .ok_or_else(|| malformed(line, "missing event kind"))?;
    let user = u_tok
        .strip_prefix("u=")
        .filter(|u| !u.is_empty())
        .ok_or_else(|| malformed(line, "expected u=<user>"))?
        .to_string();
    let rest = rest.trim_start();
    let (kind, args) = match rest.split_once(char::is_whitespace) {
        Some((k, a)) => (k, a.trim()),
        None => (rest, ""),
    };

    let payload = match kind {
        "text" => {
            let (field, value) = args
                .split_once(char::is_whitespace)
                .ok_or_else(|| malformed(line, "text expects <field> \"<value>\""))?;
            Payload::TextInput { field: field.to_string(), value: unquote(value.trim(), line)? }
        }
        "skel" => Payload::Skeleton(parse_skeleton(args, line)?),
        _ => {
            let words: Vec<&str> = args.split_whitespace().collect();
            let expect = |n: usize| {
                if words.len() == n {
                    Ok(())
                } else {
                    Err(malformed(line, format!("{kind} expects {n} arguments, got {}", words.len())))
                }
            };
            match kind {
                "pose" => {
                    expect(8)?;
                    let v: Vec<f64> = words[1..].iter().map(|w| parse_f64(w, line)).collect::<Result<_, _>>()?;
                    let q = Quaternion::new(v[6], v[3], v[4], v[5]);
                    if (q.norm() - 1.0).abs() > QUATERNION_NORM_TOLERANCE {
                        return Err(malformed(line, format!("quaternion norm {} is not 1", q.norm())));
                    }
                    Payload::Pose {
                        object: words[0].to_string(),
                        position: Vector3::new(v[0], v[1], v[2]),
                        orientation: UnitQuaternion::new_unchecked(q),
                    }
                }
                "attach" => {
                    expect(3)?;
                    let attached = match words[2] {
                        "on" => true,
                        "off" => false,
                        other => return Err(malformed(line, format!("attach state '{other}' is not on|off"))),
                    };
                    Payload::Attach { object: words[0].to_string(), target: words[1].to_string(), attached }
                }
                "collide" => {
                    expect(2)?;
                    Payload::Collision { object: words[0].to_string(), other: words[1].to_string() }
                }
                "mark" => {
                    expect(2)?;
                    let phase = match words[1] {
                        "start" => MarkPhase::Start,
                        "end" => MarkPhase::End,
                        other => return Err(malformed(line, format!("mark phase '{other}' is not start|end"))),
                    };
                    Payload::TaskMark { task: words[0].to_string(), phase }
                }
                other => return Err(malformed(line, format!("unknown event kind '{other}'"))),
            }
        }
    };
    Ok(Event { t, user, payload })
}

fn parse_skeleton(args: &str, line: usize) -> Result<SkeletonFrame, RecordingError> {
    let mut frame = SkeletonFrame::default();
    for item in args.split(|c: char| c == ';' || c.is_whitespace()).filter(|s| !s.is_empty()) {
        let (name, coords) = item
            .split_once('=')
            .ok_or_else(|| malformed(line, format!("joint '{item}' is not <joint>=x,y,z")))?;
        let v: Vec<f64> = coords.split(',').map(|c| parse_f64(c, line)).collect::<Result<_, _>>()?;
        let joint = match v.as_slice() {
            [x, y, z] => Joint::at(Vector3::new(*x, *y, *z)),
            [x, y, z, c] if (0.0..=1.0).contains(c) => {
                Joint { position: Vector3::new(*x, *y, *z), confidence: *c }
            }
            _ => return Err(malformed(line, format!("joint '{name}' needs x,y,z[,confidence]"))),
        };
        if frame.joints.insert(name.to_string(), joint).is_some() {
            return Err(malformed(line, format!("joint '{name}' repeated")));
        }
    }
    if frame.joints.is_empty() {
        return Err(malformed(line, "skeleton frame has no joints"));
    }
    Ok(frame)
}

fn unquote(s: &str, line: usize) -> Result<String, RecordingError> {
    let inner = s
        .strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .filter(|_| s.len() >= 2)
        .ok_or_else(|| malformed(line, "text value must be double-quoted"))?;
    let mut out = String::with_capacity(inner.len());
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => match chars.next() {
                Some('"') => out.push('"'),
                Some('\\') => out.push('\\'),
                Some('n') => out.push('\n'),
                _ => return Err(malformed(line, "bad escape in text value")),
            },
            '"' => return Err(malformed(line, "unescaped quote in text value")),
            c => out.push(c),
        }
    }
    Ok(out)
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t={} u={} ", self.t, self.user)?;
        match &self.payload {
            Payload::Pose { object, position: p, orientation } => {
                let q = orientation.quaternion();
                write!(f, "pose {object} {} {} {} {} {} {} {}", p.x, p.y, p.z, q.i, q.j, q.k, q.w)
            }
            Payload::Attach { object, target, attached } => {
                write!(f, "attach {object} {target} {}", if *attached { "on" } else { "off" })
            }
            Payload::Collision { object, other } => write!(f, "collide {object} {other}"),
            Payload::TextInput { field, value } => write!(f, "text {field} {}", quote(value)),
            Payload::Skeleton(frame) => {
                write!(f, "skel ")?;
                for (i, (name, j)) in frame.joints.iter().enumerate() {
                    if i > 0 {
                        write!(f, ";")?;
                    }
                    let p = j.position;
                    write!(f, "{name}={},{},{}", p.x, p.y, p.z)?;
                    if j.confidence != 1.0 {
                        write!(f, ",{}", j.confidence)?;
                    }
                }
                Ok(())
            }
            Payload::TaskMark { task, phase } => {
                write!(f, "mark {task} {}", if *phase == MarkPhase::Start { "start" } else { "end" })
            }
        }
    }
}

impl fmt::Display for SessionRecording {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.session_id.is_empty() || self.frame_rate.is_some() {
            write!(f, "session {}", if self.session_id.is_empty() { "-" } else { &self.session_id })?;
            if let Some(r) = self.frame_rate {
                write!(f, " rate={r}")?;
            }
            writeln!(f)?;
        }
        if !self.users.is_empty() {
            writeln!(f, "users {}", self.users.join(" "))?;
        }
        for e in &self.events {
            writeln!(f, "{e}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_line_session() {
        let rec = parse_session(
            "t=0.0 u=a mark T1 start\nt=0.5 u=a pose box 1 2 3 0 0 0 1\nt=1.0 u=a mark T1 end\n",
        )
        .unwrap();
        assert_eq!(rec.events.len(), 3);
        assert_eq!(rec.users, vec!["a".to_string()]);
    }

    #[test]
    fn timestamp_regression_reports_offending_line() {
        let err = parse_session("t=2.0 u=a collide x y\nt=1.5 u=a collide x y\n").unwrap_err();
        assert_eq!(err, RecordingError::TimestampRegression { line: 2, t: 1.5, previous: 2.0 });
    }

    #[test]
    fn unmatched_marks() {
        assert!(matches!(
            parse_session("t=0 u=a mark T1 end\n"),
            Err(RecordingError::UnmatchedMark { line: 1, phase: "end", .. })
        ));
        assert!(matches!(
            parse_session("t=0 u=a mark T1 start\nt=1 u=a collide x y\n"),
            Err(RecordingError::UnmatchedMark { line: 1, phase: "start", .. })
        ));
    }

    #[test]
    fn malformed_lines_carry_numbers() {
        for bad in [
            "t=0 u=a pose box 1 2 3 0 0 0",
            "t=0 u=a pose box 1 2 3 0 0 0 2",
            "t=x u=a collide a b",
            "u=a t=0 collide a b",
            "t=0 u=a attach a b maybe",
            "t=0 u=a text f unquoted",
            "t=0 u=a skel head=1,2",
            "t=0 u=a dance",
        ] {
            let text = format!("# c\n{bad}\n");
            match parse_session(&text) {
                Err(RecordingError::Malformed { line, .. }) => assert_eq!(line, 2, "{bad}"),
                other => panic!("{bad}: {other:?}"),
            }
        }
    }

    #[test]
    fn header_users_are_enforced() {
        let err = parse_session("session s1 rate=30\nusers a\nt=0 u=b collide x y\n").unwrap_err();
        assert!(matches!(err, RecordingError::UnknownUser { line: 3, .. }));
        let rec = parse_session("session s1 rate=30\nusers a b\nt=0 u=b collide x y\n").unwrap();
        assert_eq!(rec.session_id, "s1");
        assert_eq!(rec.frame_rate, Some(30.0));
        assert_eq!(rec.users.len(), 2);
    }

    #[test]
    fn text_round_trip_with_escapes() {
        let rec = parse_session("t=1 u=a text note \"say \\\"hi\\\" \\\\ ok\"\n").unwrap();
        match &rec.events[0].payload {
            Payload::TextInput { value, .. } => assert_eq!(value, "say \"hi\" \\ ok"),
            p => panic!("{p:?}"),
        }
        assert_eq!(parse_session(&rec.to_string()).unwrap(), rec);
    }

    #[test]
    fn write_then_parse_is_identity() {
        let text = "session s rate=30\nusers a\nt=0 u=a mark T1 start\nt=0.1 u=a pose box 0.1 -2.5 3 0 0.7071067811865476 0 0.7071067811865476\nt=0.2 u=a skel hand-right=0.3,1.1,-0.2,0.5;head=0,1.7,0\nt=0.3 u=a attach box hand on\nt=0.4 u=a mark T1 end\n";
        let rec = parse_session(text).unwrap();
        let again = parse_session(&rec.to_string()).unwrap();
        assert_eq!(again, rec);
    }
}
