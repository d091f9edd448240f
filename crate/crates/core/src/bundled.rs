//! Example networks and SME recordings shipped with the crate.

use crate::model::{parse_network, TaskNetwork};
use crate::telemetry::{parse_session, ReferenceSet, SessionRecording};

#[derive(Debug, Clone, Copy)]
pub struct Fixture {
    pub name: &'static str,
    pub network: &'static str,
    pub recording: &'static str,
    pub manifest: &'static str,
    /// File names under the fixtures directory.
    pub network_file: &'static str,
    pub recording_file: &'static str,
    pub manifest_file: &'static str,
}

pub const HYDROMETER: Fixture = Fixture {
    name: "hydrometer",
    network: include_str!("../fixtures/hydrometer.ahtn"),
    recording: include_str!("../fixtures/hydrometer-sme.rec"),
    manifest: include_str!("../fixtures/hydrometer.refs"),
    network_file: "hydrometer.ahtn",
    recording_file: "hydrometer-sme.rec",
    manifest_file: "hydrometer.refs",
};

pub const COLLABORATIVE: Fixture = Fixture {
    name: "collaborative",
    network: include_str!("../fixtures/collaborative.ahtn"),
    recording: include_str!("../fixtures/collaborative-sme.rec"),
    manifest: include_str!("../fixtures/collaborative.refs"),
    network_file: "collaborative.ahtn",
    recording_file: "collaborative-sme.rec",
    manifest_file: "collaborative.refs",
};

pub const ALL: [Fixture; 2] = [HYDROMETER, COLLABORATIVE];

/// Directory holding the fixture files in a source checkout.
pub fn fixture_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

impl Fixture {
    pub fn task_network(&self) -> TaskNetwork {
        parse_network(self.network).expect("bundled network parses")
    }

    pub fn reference_recording(&self) -> SessionRecording {
        parse_session(self.recording).expect("bundled recording parses")
    }

    /// The recording as its own reference set, quality 1.0.
    pub fn references(&self) -> ReferenceSet {
        let mut set = ReferenceSet::new();
        set.add_recording(&self.reference_recording(), 1.0, None, self.recording_file)
            .expect("bundled recording slices");
        set
    }

    pub fn generate_recording(&self) -> SessionRecording {
        match self.name {
            "hydrometer" => crate::synth::hydrometer_reference(),
            _ => crate::synth::collaborative_reference(),
        }
    }
}
