use ahtn_core::bundled::{ALL, COLLABORATIVE, HYDROMETER};
use ahtn_core::engine::{score_recording, EngineConfig, TaskStatus};
use ahtn_core::model::validate_network;

#[test]
fn bundled_networks_validate() {
    for f in ALL {
        let report = validate_network(&f.task_network());
        assert!(report.ok, "{}: {report}", f.name);
        for w in report.warnings() {
            assert!(w.message.contains("all task weights are 0"), "{}: {report}", f.name);
        }
    }
}

#[test]
fn self_replay_scores_one() {
    for f in ALL {
        let report =
            score_recording(&f.task_network(), &f.references(), &EngineConfig::default(), &f.reference_recording())
                .unwrap();
        for scope in &report.scopes {
            for task in &scope.tasks {
                assert_eq!(task.status, TaskStatus::Scored, "{} {}", f.name, task.task);
                assert_eq!(task.omega, 1.0, "{} {}: {:#?}", f.name, task.task, task.members);
            }
            if scope.weight_total > 0.0 {
                assert_eq!(scope.delta, Some(1.0));
            }
        }
        assert!(report.session.aborted.is_none());
    }
}

#[test]
fn collaborative_instructor_scope_has_no_delta() {
    let f = COLLABORATIVE;
    let report =
        score_recording(&f.task_network(), &f.references(), &EngineConfig::default(), &f.reference_recording())
            .unwrap();
    assert_eq!(report.scope("instructor").unwrap().delta, None);
    assert_eq!(report.scope("student").unwrap().delta, Some(1.0));
    let _ = HYDROMETER;
}
