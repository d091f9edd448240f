//! Line-oriented network definition format.
//!
//! ```text
//! task T1
//!   kind primitive
//!   desc Pick up the hydrometer
//!   user single student
//!   weight 0.3
//!   objects hydrometer hand-right
//!   assess task-level
//!   check orientation subject=hand-right tol=1.2
//!   feedback final
//! end
//! ```

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};

use nalgebra::Vector3;

use super::{
    AssessmentMode, AssessmentSpec, CheckKind, CheckSpec, FeedbackMode, NodeKind, PrimitiveTask,
    ScopeCategory, TaskNetwork, TaskNode, UserScope,
};
use crate::action::TrajectoryParams;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: duplicate task id '{id}'")]
    DuplicateTask { line: usize, id: String },
    #[error("task '{task}': missing required parameter '{parameter}'")]
    MissingParameter { task: String, parameter: &'static str },
}

fn syntax(line: usize, message: impl Into<String>) -> ParseError {
    ParseError::Syntax { line, message: message.into() }
}

/// Parses a network definition. Structural checks that need the whole
/// network (cycles, dangling references) are left to
/// [`validate_network`](super::validate_network).
pub fn parse_network(text: &str) -> Result<TaskNetwork, ParseError> {
    let mut nodes: Vec<TaskNode> = Vec::new();
    let mut ids = BTreeSet::new();
    let mut block: Option<Block> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if content.is_empty() {
            continue;
        }
        let (directive, rest) = match content.split_once(char::is_whitespace) {
            Some((d, r)) => (d, r.trim()),
            None => (content, ""),
        };

        match (directive, block.as_mut()) {
            ("task", None) => {
                let id = single_word(rest, line, "task")?;
                if !ids.insert(id.to_string()) {
                    return Err(ParseError::DuplicateTask { line, id: id.to_string() });
                }
                block = Some(Block::new(id, line));
            }
            ("task", Some(b)) => {
                return Err(syntax(line, format!("'task' inside block '{}' (missing 'end')", b.id)))
            }
            ("end", Some(_)) => {
                if !rest.is_empty() {
                    return Err(syntax(line, "'end' takes no arguments"));
                }
                nodes.push(block.take().expect("open block").finish()?);
            }
            (_, None) => return Err(syntax(line, format!("'{directive}' outside a task block"))),
            (_, Some(b)) => b.directive(directive, rest, line)?,
        }
    }
    if let Some(b) = block {
        return Err(syntax(b.line, format!("task '{}' is never closed with 'end'", b.id)));
    }
    Ok(TaskNetwork::from_nodes(nodes))
}

fn single_word<'a>(rest: &'a str, line: usize, directive: &str) -> Result<&'a str, ParseError> {
    let mut words = rest.split_whitespace();
    match (words.next(), words.next()) {
        (Some(w), None) => Ok(w),
        _ => Err(syntax(line, format!("'{directive}' expects exactly one argument"))),
    }
}

fn parse_real(s: &str, line: usize, what: &str) -> Result<f64, ParseError> {
    let v: f64 = s
        .parse()
        .map_err(|_| syntax(line, format!("{what}: '{s}' is not a number")))?;
    if !v.is_finite() {
        return Err(syntax(line, format!("{what}: '{s}' is not finite")));
    }
    Ok(v)
}

fn parse_vec3(s: &str, line: usize, what: &str) -> Result<Vector3<f64>, ParseError> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(syntax(line, format!("{what}: expected x,y,z")));
    }
    Ok(Vector3::new(
        parse_real(parts[0], line, what)?,
        parse_real(parts[1], line, what)?,
        parse_real(parts[2], line, what)?,
    ))
}

#[derive(Debug)]
struct Block {
    id: String,
    line: usize,
    seen: BTreeSet<&'static str>,
    name: Option<String>,
    kind: Option<bool>, // true = primitive
    children: Vec<String>,
    description: Option<String>,
    inputs: Vec<String>,
    outputs: Vec<String>,
    users: Option<UserScope>,
    weight: Option<f64>,
    predecessors: Vec<String>,
    objects: Option<Vec<String>>,
    mode: Option<AssessmentMode>,
    checks: Vec<CheckSpec>,
    trajectory: Option<TrajectoryParams>,
    feedback: Option<FeedbackMode>,
    time_limit: Option<f64>,
    // first line of any primitive-only directive, for abstract-node errors
    primitive_directive: Option<(usize, &'static str)>,
}

const REPEATABLE: [&str; 5] = ["child", "pred", "check", "input", "output"];

impl Block {
    fn new(id: &str, line: usize) -> Self {
        Self {
            id: id.to_string(),
            line,
            seen: BTreeSet::new(),
            name: None,
            kind: None,
            children: Vec::new(),
            description: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            users: None,
            weight: None,
            predecessors: Vec::new(),
            objects: None,
            mode: None,
            checks: Vec::new(),
            trajectory: None,
            feedback: None,
            time_limit: None,
            primitive_directive: None,
        }
    }

    fn directive(&mut self, directive: &str, rest: &str, line: usize) -> Result<(), ParseError> {
        let key: &'static str = match directive {
            "name" => "name",
            "kind" => "kind",
            "child" => "child",
            "desc" => "desc",
            "input" => "input",
            "output" => "output",
            "user" => "user",
            "weight" => "weight",
            "pred" => "pred",
            "objects" => "objects",
            "assess" => "assess",
            "check" => "check",
            "trajectory" => "trajectory",
            "feedback" => "feedback",
            "time" => "time",
            other => return Err(syntax(line, format!("unknown directive '{other}'"))),
        };
        if !REPEATABLE.contains(&key) && !self.seen.insert(key) {
            return Err(syntax(line, format!("'{key}' given twice in task '{}'", self.id)));
        }
        if !matches!(key, "name" | "kind" | "child") && self.primitive_directive.is_none() {
            self.primitive_directive = Some((line, key));
        }

        match key {
            "name" => {
                if rest.is_empty() {
                    return Err(syntax(line, "'name' needs a value"));
                }
                self.name = Some(rest.to_string());
            }
            "kind" => {
                self.kind = Some(match single_word(rest, line, "kind")? {
                    "abstract" => false,
                    "primitive" => true,
                    other => return Err(syntax(line, format!("unknown kind '{other}'"))),
                })
            }
            "child" => self.children.push(single_word(rest, line, "child")?.to_string()),
            "pred" => self.predecessors.push(single_word(rest, line, "pred")?.to_string()),
            "desc" => {
                if rest.is_empty() {
                    return Err(syntax(line, "'desc' needs a value"));
                }
                self.description = Some(rest.to_string());
            }
            "input" => self.inputs.extend(rest.split_whitespace().map(String::from)),
            "output" => self.outputs.extend(rest.split_whitespace().map(String::from)),
            "user" => {
                let mut words = rest.split_whitespace();
                let category = match words.next() {
                    Some("single") => ScopeCategory::SingleUser,
                    Some("group") => ScopeCategory::Group,
                    Some("individual") => ScopeCategory::IndividualInGroup,
                    Some(other) => return Err(syntax(line, format!("unknown user scope '{other}'"))),
                    None => return Err(syntax(line, "'user' needs a scope")),
                };
                let users = words.map(String::from).collect();
                self.users =
                    Some(UserScope::new(category, users).map_err(|e| syntax(line, e.to_string()))?);
            }
            "weight" => {
                let w = parse_real(single_word(rest, line, "weight")?, line, "weight")?;
                if w < 0.0 {
                    return Err(syntax(line, "weight must be nonnegative"));
                }
                self.weight = Some(w);
            }
            "objects" => self.objects = Some(rest.split_whitespace().map(String::from).collect()),
            "assess" => {
                self.mode = Some(match single_word(rest, line, "assess")? {
                    "task-level" => AssessmentMode::TaskLevel,
                    "action-level" => AssessmentMode::ActionLevel,
                    "both" => AssessmentMode::Both,
                    other => return Err(syntax(line, format!("unknown assessment '{other}'"))),
                })
            }
            "check" => self.checks.push(parse_check(rest, line)?),
            "trajectory" => self.trajectory = Some(parse_trajectory(rest, line)?),
            "feedback" => {
                self.feedback = Some(match single_word(rest, line, "feedback")? {
                    "realtime" => FeedbackMode::RealTime,
                    "final" => FeedbackMode::FinalScore,
                    other => return Err(syntax(line, format!("unknown feedback '{other}'"))),
                })
            }
            "time" => {
                let t = parse_real(single_word(rest, line, "time")?, line, "time")?;
                if t <= 0.0 {
                    return Err(syntax(line, "time constraint must be positive"));
                }
                self.time_limit = Some(t);
            }
            _ => unreachable!(),
        }
        Ok(())
    }

    fn finish(self) -> Result<TaskNode, ParseError> {
        let missing = |parameter| ParseError::MissingParameter { task: self.id.clone(), parameter };
        let primitive = self.kind.ok_or_else(|| missing("kind"))?;
        let name = self.name.clone().unwrap_or_else(|| self.id.clone());

        if !primitive {
            if let Some((line, key)) = self.primitive_directive {
                return Err(syntax(
                    line,
                    format!("abstract task '{}' cannot define '{key}'", self.id),
                ));
            }
            return Ok(TaskNode {
                id: self.id,
                name,
                kind: NodeKind::Abstract { children: self.children },
            });
        }
        if !self.children.is_empty() {
            return Err(syntax(self.line, format!("primitive task '{}' cannot have children", self.id)));
        }

        let description = self.description.clone().ok_or_else(|| missing("desc"))?;
        let users = self.users.clone().ok_or_else(|| missing("user"))?;
        let weight = self.weight.ok_or_else(|| missing("weight"))?;
        let objects = self.objects.clone().ok_or_else(|| missing("objects"))?;
        let mode = self.mode.ok_or_else(|| missing("assess"))?;
        let feedback = self.feedback.ok_or_else(|| missing("feedback"))?;

        if mode.has_task_level() && self.checks.is_empty() {
            return Err(missing("check"));
        }
        if mode.has_action_level() && self.trajectory.is_none() {
            return Err(missing("trajectory"));
        }
        if !mode.has_task_level() && !self.checks.is_empty() {
            return Err(syntax(self.line, format!("task '{}' is action-level but defines checks", self.id)));
        }
        if !mode.has_action_level() && self.trajectory.is_some() {
            return Err(syntax(
                self.line,
                format!("task '{}' is task-level but defines a trajectory", self.id),
            ));
        }

        Ok(TaskNode {
            id: self.id,
            name,
            kind: NodeKind::Primitive(Box::new(PrimitiveTask {
                description,
                inputs: self.inputs,
                outputs: self.outputs,
                users,
                weight,
                predecessors: self.predecessors,
                objects,
                assessment: AssessmentSpec { mode, checks: self.checks, trajectory: self.trajectory },
                feedback,
                time_limit: self.time_limit,
            })),
        })
    }
}

fn key_values<'a>(
    words: impl Iterator<Item = &'a str>,
    line: usize,
) -> Result<Vec<(&'a str, &'a str)>, ParseError> {
    let mut seen = BTreeSet::new();
    words
        .map(|w| {
            let (k, v) = w
                .split_once('=')
                .ok_or_else(|| syntax(line, format!("expected key=value, got '{w}'")))?;
            if v.is_empty() {
                return Err(syntax(line, format!("'{k}' has an empty value")));
            }
            if !seen.insert(k) {
                return Err(syntax(line, format!("'{k}' given twice")));
            }
            Ok((k, v))
        })
        .collect()
}

fn parse_check(rest: &str, line: usize) -> Result<CheckSpec, ParseError> {
    let mut words = rest.split_whitespace();
    let kind_word = words.next().ok_or_else(|| syntax(line, "'check' needs a kind"))?;
    let kind = CheckKind::from_keyword(kind_word)
        .ok_or_else(|| syntax(line, format!("unknown check kind '{kind_word}'")))?;

    let mut subject = None;
    let mut check = CheckSpec::new(kind, String::new());
    for (k, v) in key_values(words, line)? {
        match k {
            "subject" => subject = Some(v.to_string()),
            "ref" => check.reference = Some(v.to_string()),
            "penalty" => {
                if kind != CheckKind::Collision {
                    return Err(syntax(line, "'penalty' only applies to collision checks"));
                }
                let p = parse_real(v, line, "penalty")?;
                if !(p > 0.0 && p <= 1.0) {
                    return Err(syntax(line, "penalty must be in (0, 1]"));
                }
                check.penalty = p;
            }
            "tol" => {
                let t = parse_real(v, line, "tol")?;
                if t <= 0.0 {
                    return Err(syntax(line, "tol must be positive"));
                }
                check.tolerance = Some(t);
            }
            "cweight" => {
                let w = parse_real(v, line, "cweight")?;
                if w < 0.0 {
                    return Err(syntax(line, "cweight must be nonnegative"));
                }
                check.weight = w;
            }
            other => return Err(syntax(line, format!("unknown check key '{other}'"))),
        }
    }
    check.subject = subject.ok_or_else(|| syntax(line, "check needs subject=<id>"))?;
    if kind == CheckKind::Attachment && check.reference.is_none() {
        return Err(syntax(line, "attachment check needs ref=<id>"));
    }
    Ok(check)
}

fn parse_trajectory(rest: &str, line: usize) -> Result<TrajectoryParams, ParseError> {
    let mut params = TrajectoryParams::default();
    let mut joints = None;
    let positive = |v: &str, what: &str| -> Result<f64, ParseError> {
        let x = parse_real(v, line, what)?;
        if x <= 0.0 {
            return Err(syntax(line, format!("{what} must be positive")));
        }
        Ok(x)
    };
    for (k, v) in key_values(rest.split_whitespace(), line)? {
        match k {
            "joints" => joints = Some(v.split(',').map(String::from).collect::<Vec<_>>()),
            "radius" => params.match_radius = positive(v, "radius")?,
            "skip" => params.skip_time = positive(v, "skip")?,
            "wait" => params.anomaly_wait = positive(v, "wait")?,
            "reps" => {
                params.repetitions = v
                    .parse()
                    .ok()
                    .filter(|&n: &u32| n >= 1)
                    .ok_or_else(|| syntax(line, "reps must be a positive integer"))?
            }
            "penalty" => {
                let p = parse_real(v, line, "penalty")?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(syntax(line, "anomaly penalty must be in [0, 1]"));
                }
                params.anomaly_penalty = p;
            }
            "forward" => {
                let f = parse_vec3(v, line, "forward")?;
                if f.norm() == 0.0 {
                    return Err(syntax(line, "forward must be nonzero"));
                }
                params.station_forward = Some(f);
            }
            "fall" => params.fall_fraction = positive(v, "fall")?,
            "keyrate" => params.keyframe_rate = positive(v, "keyrate")?,
            "weight" => {
                let w = parse_real(v, line, "weight")?;
                if w < 0.0 {
                    return Err(syntax(line, "trajectory weight must be nonnegative"));
                }
                params.weight = w;
            }
            other => return Err(syntax(line, format!("unknown trajectory key '{other}'"))),
        }
    }
    params.joints = joints.ok_or_else(|| syntax(line, "trajectory needs joints=<id,...>"))?;
    if params.joints.iter().any(|j| j.is_empty()) {
        return Err(syntax(line, "empty joint id"));
    }
    Ok(params)
}

pub(super) fn write_network(net: &TaskNetwork, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let mut first = true;
    for node in net.nodes() {
        if !first {
            writeln!(f)?;
        }
        first = false;
        writeln!(f, "task {}", node.id)?;
        writeln!(f, "  name {}", node.name)?;
        match &node.kind {
            NodeKind::Abstract { children } => {
                writeln!(f, "  kind abstract")?;
                for c in children {
                    writeln!(f, "  child {c}")?;
                }
            }
            NodeKind::Primitive(p) => {
                writeln!(f, "  kind primitive")?;
                writeln!(f, "  desc {}", p.description)?;
                if !p.inputs.is_empty() {
                    writeln!(f, "  input {}", p.inputs.join(" "))?;
                }
                if !p.outputs.is_empty() {
                    writeln!(f, "  output {}", p.outputs.join(" "))?;
                }
                writeln!(f, "  user {} {}", p.users.category().keyword(), p.users.users().join(" "))?;
                writeln!(f, "  weight {}", p.weight)?;
                for q in &p.predecessors {
                    writeln!(f, "  pred {q}")?;
                }
                let mut objects = String::from("  objects");
                for o in &p.objects {
                    write!(objects, " {o}")?;
                }
                writeln!(f, "{objects}")?;
                writeln!(f, "  assess {}", p.assessment.mode.keyword())?;
                for c in &p.assessment.checks {
                    write!(f, "  check {} subject={}", c.kind.keyword(), c.subject)?;
                    if let Some(r) = &c.reference {
                        write!(f, " ref={r}")?;
                    }
                    if c.kind == CheckKind::Collision {
                        write!(f, " penalty={}", c.penalty)?;
                    }
                    if let Some(t) = c.tolerance {
                        write!(f, " tol={t}")?;
                    }
                    writeln!(f, " cweight={}", c.weight)?;
                }
                if let Some(t) = &p.assessment.trajectory {
                    write!(
                        f,
                        "  trajectory joints={} radius={} skip={} wait={} reps={} penalty={} fall={} keyrate={} weight={}",
                        t.joints.join(","),
                        t.match_radius,
                        t.skip_time,
                        t.anomaly_wait,
                        t.repetitions,
                        t.anomaly_penalty,
                        t.fall_fraction,
                        t.keyframe_rate,
                        t.weight,
                    )?;
                    if let Some(v) = t.station_forward {
                        write!(f, " forward={},{},{}", v.x, v.y, v.z)?;
                    }
                    writeln!(f)?;
                }
                writeln!(f, "  feedback {}", p.feedback.keyword())?;
                if let Some(t) = p.time_limit {
                    writeln!(f, "  time {t}")?;
                }
            }
        }
        writeln!(f, "end")?;
    }
    Ok(())
}
