//! Assessment task networks.
//!
//! A network is a hierarchy of abstract grouping nodes over primitive tasks.
//! Primitive tasks carry everything needed to assess them: who is assessed,
//! how much the task weighs, which tasks must precede it, which game objects
//! and joints it touches, how it is checked and when feedback is given.

mod format;
mod validate;

use std::collections::BTreeSet;
use std::fmt;

use indexmap::IndexMap;
use serde::Serialize;

use crate::action::TrajectoryParams;

pub use format::{parse_network, ParseError};
pub use validate::{validate_network, Issue, Severity, ValidationReport};

pub type TaskId = String;
pub type ObjectId = String;
pub type UserId = String;

/// Default score deduction per collision.
pub const DEFAULT_COLLISION_PENALTY: f64 = 0.01;
pub const DEFAULT_CHECK_WEIGHT: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TaskNetwork {
    nodes: IndexMap<TaskId, TaskNode>,
    roots: Vec<TaskId>,
}

impl TaskNetwork {
    /// Builds a network from nodes in declaration order. Roots are the nodes
    /// that no abstract node lists as a child.
    pub fn from_nodes(nodes: impl IntoIterator<Item = TaskNode>) -> Self {
        let nodes: IndexMap<TaskId, TaskNode> =
            nodes.into_iter().map(|n| (n.id.clone(), n)).collect();
        let children: BTreeSet<&str> = nodes
            .values()
            .flat_map(|n| n.children().iter().map(String::as_str))
            .collect();
        let roots = nodes
            .keys()
            .filter(|id| !children.contains(id.as_str()))
            .cloned()
            .collect();
        Self { nodes, roots }
    }

    pub fn node(&self, id: &str) -> Option<&TaskNode> {
        self.nodes.get(id)
    }

    /// All nodes in declaration order.
    pub fn nodes(&self) -> impl Iterator<Item = &TaskNode> {
        self.nodes.values()
    }

    pub fn roots(&self) -> &[TaskId] {
        &self.roots
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn primitives(&self) -> impl Iterator<Item = (&TaskNode, &PrimitiveTask)> {
        self.nodes
            .values()
            .filter_map(|n| n.primitive().map(|p| (n, p)))
    }

    /// Mutable access to primitive parameters, used to apply run-time
    /// overrides of default tolerances.
    pub fn primitives_mut(&mut self) -> impl Iterator<Item = &mut PrimitiveTask> {
        self.nodes.values_mut().filter_map(|n| match &mut n.kind {
            NodeKind::Primitive(p) => Some(p.as_mut()),
            NodeKind::Abstract { .. } => None,
        })
    }

    /// Primitive task ids that are ready to start: not yet completed, with
    /// every predecessor completed.
    pub fn ready_tasks(&self, completed: &BTreeSet<TaskId>) -> Result<BTreeSet<TaskId>, UnknownTask> {
        for id in completed {
            match self.nodes.get(id) {
                Some(n) if n.is_primitive() => {}
                _ => return Err(UnknownTask(id.clone())),
            }
        }
        Ok(self
            .primitives()
            .filter(|(n, _)| !completed.contains(&n.id))
            .filter(|(_, p)| p.predecessors.iter().all(|q| completed.contains(q)))
            .map(|(n, _)| n.id.clone())
            .collect())
    }

    /// Primitive descendants of a node (the node itself when primitive).
    pub fn primitive_descendants(&self, id: &str) -> Vec<TaskId> {
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        self.collect_primitives(id, &mut out, &mut seen);
        out
    }

    fn collect_primitives(&self, id: &str, out: &mut Vec<TaskId>, seen: &mut BTreeSet<TaskId>) {
        if !seen.insert(id.to_string()) {
            return;
        }
        match self.nodes.get(id).map(|n| &n.kind) {
            Some(NodeKind::Primitive(_)) => out.push(id.to_string()),
            Some(NodeKind::Abstract { children }) => {
                for c in children {
                    self.collect_primitives(c, out, seen);
                }
            }
            None => {}
        }
    }
}

impl fmt::Display for TaskNetwork {
    /// Canonical text form, accepted by [`parse_network`].
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        format::write_network(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown primitive task '{0}'")]
pub struct UnknownTask(pub TaskId);

#[derive(Debug, Clone, PartialEq)]
pub struct TaskNode {
    pub id: TaskId,
    pub name: String,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Abstract { children: Vec<TaskId> },
    Primitive(Box<PrimitiveTask>),
}

impl TaskNode {
    pub fn is_primitive(&self) -> bool {
        matches!(self.kind, NodeKind::Primitive(_))
    }

    pub fn primitive(&self) -> Option<&PrimitiveTask> {
        match &self.kind {
            NodeKind::Primitive(p) => Some(p),
            NodeKind::Abstract { .. } => None,
        }
    }

    pub fn children(&self) -> &[TaskId] {
        match &self.kind {
            NodeKind::Abstract { children } => children,
            NodeKind::Primitive(_) => &[],
        }
    }
}

/// The augmented parameters of a primitive task.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimitiveTask {
    pub description: String,
    pub inputs: Vec<ObjectId>,
    pub outputs: Vec<ObjectId>,
    pub users: UserScope,
    pub weight: f64,
    pub predecessors: Vec<TaskId>,
    /// Game objects and skeleton joints the task touches.
    pub objects: Vec<ObjectId>,
    pub assessment: AssessmentSpec,
    pub feedback: FeedbackMode,
    /// Expected duration in seconds; slower performances are scaled down.
    pub time_limit: Option<f64>,
}

impl PrimitiveTask {
    pub fn touches(&self, id: &str) -> bool {
        self.objects.iter().any(|o| o == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScopeCategory {
    SingleUser,
    Group,
    IndividualInGroup,
}

impl ScopeCategory {
    pub fn keyword(self) -> &'static str {
        match self {
            ScopeCategory::SingleUser => "single",
            ScopeCategory::Group => "group",
            ScopeCategory::IndividualInGroup => "individual",
        }
    }
}

/// Who a task assesses.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UserScope {
    category: ScopeCategory,
    users: Vec<UserId>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{category:?} scope needs {expected} user(s), got {got}")]
pub struct ScopeError {
    pub category: ScopeCategory,
    pub expected: &'static str,
    pub got: usize,
}

impl UserScope {
    pub fn new(category: ScopeCategory, users: Vec<UserId>) -> Result<Self, ScopeError> {
        let ok = match category {
            ScopeCategory::Group => users.len() >= 2,
            _ => users.len() == 1,
        };
        if !ok {
            let expected = if category == ScopeCategory::Group { "at least 2" } else { "exactly 1" };
            return Err(ScopeError { category, expected, got: users.len() });
        }
        Ok(Self { category, users })
    }

    pub fn single(user: impl Into<UserId>) -> Self {
        Self { category: ScopeCategory::SingleUser, users: vec![user.into()] }
    }

    pub fn category(&self) -> ScopeCategory {
        self.category
    }

    pub fn users(&self) -> &[UserId] {
        &self.users
    }

    pub fn covers(&self, user: &str) -> bool {
        self.users.iter().any(|u| u == user)
    }

    /// Stable identifier used in reports and feedback lines.
    pub fn key(&self) -> String {
        match self.category {
            ScopeCategory::Group => format!("group:{}", self.users.join("+")),
            _ => self.users[0].clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssessmentMode {
    TaskLevel,
    ActionLevel,
    Both,
}

impl AssessmentMode {
    pub fn keyword(self) -> &'static str {
        match self {
            AssessmentMode::TaskLevel => "task-level",
            AssessmentMode::ActionLevel => "action-level",
            AssessmentMode::Both => "both",
        }
    }

    pub fn has_task_level(self) -> bool {
        matches!(self, AssessmentMode::TaskLevel | AssessmentMode::Both)
    }

    pub fn has_action_level(self) -> bool {
        matches!(self, AssessmentMode::ActionLevel | AssessmentMode::Both)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssessmentSpec {
    pub mode: AssessmentMode,
    pub checks: Vec<CheckSpec>,
    pub trajectory: Option<TrajectoryParams>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    Orientation,
    Position,
    Attachment,
    Collision,
    TextInput,
}

impl CheckKind {
    pub fn keyword(self) -> &'static str {
        match self {
            CheckKind::Orientation => "orientation",
            CheckKind::Position => "position",
            CheckKind::Attachment => "attachment",
            CheckKind::Collision => "collision",
            CheckKind::TextInput => "text-input",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        Some(match s {
            "orientation" => CheckKind::Orientation,
            "position" => CheckKind::Position,
            "attachment" => CheckKind::Attachment,
            "collision" => CheckKind::Collision,
            "text-input" | "text" => CheckKind::TextInput,
            _ => return None,
        })
    }

    /// Tolerance used when a check does not set one: radians for
    /// orientation, meters for position, value units for text input.
    pub fn default_tolerance(self) -> Option<f64> {
        match self {
            CheckKind::Orientation => Some(std::f64::consts::FRAC_PI_2),
            CheckKind::Position => Some(0.5),
            CheckKind::TextInput => Some(0.01),
            CheckKind::Attachment | CheckKind::Collision => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckSpec {
    pub kind: CheckKind,
    pub subject: ObjectId,
    pub reference: Option<ObjectId>,
    /// Collision only.
    pub penalty: f64,
    pub tolerance: Option<f64>,
    pub weight: f64,
}

impl CheckSpec {
    pub fn new(kind: CheckKind, subject: impl Into<ObjectId>) -> Self {
        Self {
            kind,
            subject: subject.into(),
            reference: None,
            penalty: DEFAULT_COLLISION_PENALTY,
            tolerance: None,
            weight: DEFAULT_CHECK_WEIGHT,
        }
    }

    pub fn with_reference(mut self, reference: impl Into<ObjectId>) -> Self {
        self.reference = Some(reference.into());
        self
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tolerance = Some(tol);
        self
    }

    pub fn with_penalty(mut self, penalty: f64) -> Self {
        self.penalty = penalty;
        self
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    pub fn effective_tolerance(&self) -> f64 {
        self.tolerance
            .or(self.kind.default_tolerance())
            .unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeedbackMode {
    RealTime,
    FinalScore,
}

impl FeedbackMode {
    pub fn keyword(self) -> &'static str {
        match self {
            FeedbackMode::RealTime => "realtime",
            FeedbackMode::FinalScore => "final",
        }
    }
}
