use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::Serialize;

use super::{NodeKind, TaskNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub severity: Severity,
    pub node: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn errors(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity == Severity::Warning)
    }

    pub fn has_error(&self, needle: &str) -> bool {
        self.errors().any(|i| i.message.contains(needle))
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", if self.ok { "ok" } else { "invalid" })?;
        for i in &self.issues {
            let sev = match i.severity {
                Severity::Error => "error",
                Severity::Warning => "warning",
            };
            writeln!(f, "{sev} [{}] {}", i.node, i.message)?;
        }
        Ok(())
    }
}

#[derive(Default)]
struct Collector {
    issues: Vec<Issue>,
}

impl Collector {
    fn error(&mut self, node: &str, message: impl Into<String>) {
        self.push(Severity::Error, node, message.into());
    }

    fn warn(&mut self, node: &str, message: impl Into<String>) {
        self.push(Severity::Warning, node, message.into());
    }

    fn push(&mut self, severity: Severity, node: &str, message: String) {
        self.issues.push(Issue { severity, node: node.to_string(), message });
    }
}

/// Structural checks over a parsed network. Never fails; every finding is an
/// issue in the returned report.
pub fn validate_network(net: &TaskNetwork) -> ValidationReport {
    let mut c = Collector::default();
    let mut parents: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let known_objects: BTreeSet<&str> = net
        .primitives()
        .flat_map(|(_, p)| p.objects.iter().map(String::as_str))
        .collect();

    for node in net.nodes() {
        match &node.kind {
            NodeKind::Abstract { children } => {
                if children.is_empty() {
                    c.error(&node.id, "abstract node has no children");
                }
                for child in children {
                    if net.node(child).is_none() {
                        c.error(&node.id, format!("dangling child '{child}'"));
                    } else {
                        parents.entry(child).or_default().push(&node.id);
                    }
                }
            }
            NodeKind::Primitive(p) => {
                for q in &p.predecessors {
                    match net.node(q) {
                        None => c.error(&node.id, format!("dangling predecessor '{q}'")),
                        Some(n) if !n.is_primitive() => {
                            c.error(&node.id, format!("predecessor '{q}' is not a primitive task"))
                        }
                        Some(_) => {}
                    }
                }
                for check in &p.assessment.checks {
                    for id in std::iter::once(&check.subject).chain(check.reference.as_ref()) {
                        if !p.touches(id) {
                            c.warn(
                                &node.id,
                                format!("{} check uses '{id}' which is not among the task's objects", check.kind.keyword()),
                            );
                        }
                    }
                }
                if let Some(t) = &p.assessment.trajectory {
                    for j in &t.joints {
                        if !p.touches(j) {
                            c.warn(&node.id, format!("trajectory joint '{j}' is not among the task's objects"));
                        }
                    }
                }
                for io in p.inputs.iter().chain(&p.outputs) {
                    if !known_objects.contains(io.as_str()) {
                        c.warn(&node.id, format!("input/output '{io}' is not a game object of any task"));
                    }
                }
            }
        }
    }

    for (child, ps) in &parents {
        if ps.len() > 1 {
            c.warn(child, format!("listed as child of several nodes: {}", ps.join(", ")));
        }
    }

    predecessor_cycles(net, &mut c);
    hierarchy_cycles(net, &mut c);
    zero_weight_scopes(net, &mut c);

    let ok = !c.issues.iter().any(|i| i.severity == Severity::Error);
    ValidationReport { ok, issues: c.issues }
}

fn cycles_in(net: &TaskNetwork, edges: impl Fn(&super::TaskNode) -> Vec<String>) -> Vec<Vec<String>> {
    let mut graph = DiGraph::<&str, ()>::new();
    let index: BTreeMap<&str, _> = net.nodes().map(|n| (n.id.as_str(), graph.add_node(n.id.as_str()))).collect();
    for n in net.nodes() {
        for target in edges(n) {
            if let Some(&t) = index.get(target.as_str()) {
                graph.add_edge(index[n.id.as_str()], t, ());
            }
        }
    }
    tarjan_scc(&graph)
        .into_iter()
        .filter(|scc| scc.len() > 1 || graph.contains_edge(scc[0], scc[0]))
        .map(|scc| {
            let mut ids: Vec<String> = scc.iter().map(|&i| graph[i].to_string()).collect();
            ids.sort();
            ids
        })
        .collect()
}

fn predecessor_cycles(net: &TaskNetwork, c: &mut Collector) {
    let mut cycles = cycles_in(net, |n| n.primitive().map(|p| p.predecessors.clone()).unwrap_or_default());
    cycles.sort();
    for ids in cycles {
        c.error(&ids[0], format!("predecessor cycle through {}", ids.join(" -> ")));
    }
}

fn hierarchy_cycles(net: &TaskNetwork, c: &mut Collector) {
    let mut cycles = cycles_in(net, |n| n.children().to_vec());
    cycles.sort();
    for ids in cycles {
        c.error(&ids[0], format!("hierarchy cycle through {}", ids.join(" -> ")));
    }
}

fn zero_weight_scopes(net: &TaskNetwork, c: &mut Collector) {
    let mut totals: BTreeMap<String, (f64, String)> = BTreeMap::new();
    for (n, p) in net.primitives() {
        let e = totals.entry(p.users.key()).or_insert((0.0, n.id.clone()));
        e.0 += p.weight;
    }
    for (scope, (total, first)) in totals {
        if total == 0.0 {
            c.warn(&first, format!("all task weights are 0 for assessed scope '{scope}'"));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_network;

    fn prim(id: &str, preds: &[&str]) -> String {
        let mut s = format!(
            "task {id}\n kind primitive\n desc d\n user single u\n weight 1\n objects o\n assess task-level\n check position subject=o\n feedback final\n"
        );
        for p in preds {
            s.push_str(&format!(" pred {p}\n"));
        }
        s.push_str("end\n");
        s
    }

    #[test]
    fn two_cycle_is_an_error() {
        let net = parse_network(&(prim("T1", &["T2"]) + &prim("T2", &["T1"]))).unwrap();
        let r = validate_network(&net);
        assert!(!r.ok);
        assert!(r.has_error("cycle"));
    }

    #[test]
    fn self_loop_is_a_cycle() {
        let net = parse_network(&prim("T1", &["T1"])).unwrap();
        assert!(validate_network(&net).has_error("cycle"));
    }

    #[test]
    fn dangling_predecessor() {
        let net = parse_network(&(prim("T1", &[]) + &prim("T3", &["T9"]))).unwrap();
        let r = validate_network(&net);
        assert!(!r.ok);
        assert!(r.has_error("dangling predecessor"));
        assert_eq!(r.errors().next().unwrap().node, "T3");
    }

    #[test]
    fn dangling_child_and_childless_abstract() {
        let net = parse_network("task R\n kind abstract\n child X\nend\ntask Q\n kind abstract\nend\n").unwrap();
        let r = validate_network(&net);
        assert!(r.has_error("dangling child"));
        assert!(r.has_error("no children"));
    }

    #[test]
    fn zero_weight_scope_warns_only() {
        let net = parse_network(&prim("T1", &[]).replace("weight 1", "weight 0")).unwrap();
        let r = validate_network(&net);
        assert!(r.ok);
        assert!(r.warnings().any(|w| w.message.contains("weights are 0")));
    }

    #[test]
    fn display_starts_with_ok() {
        let net = parse_network(&prim("T1", &[])).unwrap();
        assert!(validate_network(&net).to_string().starts_with("ok"));
    }
}
