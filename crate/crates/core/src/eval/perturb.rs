//! Seeded degradation of recorded sessions.
//!
//! Each kind of perturbation draws from its own ChaCha8 stream of the same
//! seed, and draws happen whether or not the magnitude is zero. A trial
//! therefore sees the same underlying noise at every magnitude.

use std::collections::BTreeSet;

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::telemetry::{Event, Payload, SessionRecording};

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSpec {
    /// Meters, per axis.
    pub position_sigma: f64,
    /// Radians, per axis of the rotation vector.
    pub orientation_sigma: f64,
    pub drop_attach_prob: f64,
    pub inject_collisions: usize,
    /// Absolute offset applied to numeric text inputs, random sign.
    pub text_error: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PerturbationError {
    #[error("{0} must be finite and non-negative")]
    Negative(&'static str),
    #[error("drop probability {0} is outside [0, 1]")]
    Probability(f64),
}

impl PerturbationSpec {
    pub fn none(seed: u64) -> Self {
        Self {
            position_sigma: 0.0,
            orientation_sigma: 0.0,
            drop_attach_prob: 0.0,
            inject_collisions: 0,
            text_error: 0.0,
            seed,
        }
    }

    /// Every perturbation driven by one magnitude `m` (meters): position
    /// noise m, orientation noise m rad, attach drops with probability
    /// min(1, m), round(100·m) collisions and a text offset of m/10.
    pub fn scaled(m: f64, seed: u64) -> Self {
        Self {
            position_sigma: m,
            orientation_sigma: m,
            drop_attach_prob: m.min(1.0),
            inject_collisions: (100.0 * m).round() as usize,
            text_error: m / 10.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), PerturbationError> {
        for (name, v) in [
            ("position sigma", self.position_sigma),
            ("orientation sigma", self.orientation_sigma),
            ("text error", self.text_error),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(PerturbationError::Negative(name));
            }
        }
        if !(0.0..=1.0).contains(&self.drop_attach_prob) {
            return Err(PerturbationError::Probability(self.drop_attach_prob));
        }
        Ok(())
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn gaussian3(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// A perturbed copy of `reference`. Pure in (reference, spec).
pub fn perturb(reference: &SessionRecording, spec: &PerturbationSpec) -> Result<SessionRecording, PerturbationError> {
    spec.validate()?;
    let mut out = reference.clone();
    let mut pos_rng = stream(spec.seed, 1);
    let mut rot_rng = stream(spec.seed, 2);
    let mut text_rng = stream(spec.seed, 5);

    for e in &mut out.events {
        match &mut e.payload {
            Payload::Pose { position, orientation, .. } => {
                let dp = gaussian3(&mut pos_rng) * spec.position_sigma;
                let dr = gaussian3(&mut rot_rng) * spec.orientation_sigma;
                if spec.position_sigma > 0.0 {
                    *position += dp;
                }
                if spec.orientation_sigma > 0.0 {
                    *orientation *= UnitQuaternion::from_scaled_axis(dr);
                }
            }
            Payload::Skeleton(frame) => {
                for j in frame.joints.values_mut() {
                    let dp = gaussian3(&mut pos_rng) * spec.position_sigma;
                    if spec.position_sigma > 0.0 {
                        j.position += dp;
                    }
                }
            }
            Payload::TextInput { value, .. } => {
                let sign = if text_rng.random::<bool>() { 1.0 } else { -1.0 };
                if spec.text_error > 0.0 {
                    if let Ok(v) = value.trim().parse::<f64>() {
                        *value = format!("{}", v + sign * spec.text_error);
                    }
                }
            }
            _ => {}
        }
    }

    drop_attachments(&mut out.events, spec);
    inject_collisions(&mut out.events, spec);
    Ok(out)
}

/// Removes whole on/off intervals, each with the drop probability.
fn drop_attachments(events: &mut Vec<Event>, spec: &PerturbationSpec) {
    let mut rng = stream(spec.seed, 3);
    let mut remove = BTreeSet::new();
    for i in 0..events.len() {
        let Payload::Attach { object, target, attached: true } = &events[i].payload else {
            continue;
        };
        let draw: f64 = rng.random();
        if draw >= spec.drop_attach_prob || spec.drop_attach_prob == 0.0 {
            continue;
        }
        remove.insert(i);
        let off = events[i + 1..].iter().position(|e| {
            matches!(&e.payload, Payload::Attach { object: o, target: t, .. } if o == object && t == target)
        });
        if let Some(k) = off {
            let j = i + 1 + k;
            if matches!(events[j].payload, Payload::Attach { attached: false, .. }) {
                remove.insert(j);
            }
        }
    }
    if !remove.is_empty() {
        let mut idx = 0;
        events.retain(|_| {
            let keep = !remove.contains(&idx);
            idx += 1;
            keep
        });
    }
}

/// Adds collisions between randomly chosen posed objects at random times.
fn inject_collisions(events: &mut Vec<Event>, spec: &PerturbationSpec) {
    if spec.inject_collisions == 0 || events.is_empty() {
        return;
    }
    let mut posed: Vec<(String, String)> = Vec::new();
    for e in events.iter() {
        if let Payload::Pose { object, .. } = &e.payload {
            if !posed.iter().any(|(o, _)| o == object) {
                posed.push((object.clone(), e.user.clone()));
            }
        }
    }
    if posed.is_empty() {
        return;
    }
    posed.sort();
    let mut rng = stream(spec.seed, 4);
    let (t0, t1) = (events[0].t, events[events.len() - 1].t);
    let mut added: Vec<Event> = (0..spec.inject_collisions)
        .map(|_| {
            let a = rng.random_range(0..posed.len());
            let other = if posed.len() > 1 {
                let b = (a + 1 + rng.random_range(0..posed.len() - 1)) % posed.len();
                posed[b].0.clone()
            } else {
                "environment".to_string()
            };
            let t = t0 + (t1 - t0) * rng.random::<f64>();
            Event {
                t,
                user: posed[a].1.clone(),
                payload: Payload::Collision { object: posed[a].0.clone(), other },
            }
        })
        .collect();
    added.sort_by(|a, b| a.t.total_cmp(&b.t));
    let mut merged = Vec::with_capacity(events.len() + added.len());
    let mut extra = added.into_iter().peekable();
    for e in events.drain(..) {
        while extra.peek().is_some_and(|c| c.t < e.t) {
            merged.push(extra.next().expect("peeked"));
        }
        merged.push(e);
    }
    merged.extend(extra);
    *events = merged;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled::HYDROMETER;
    use crate::telemetry::parse_session;

    #[test]
    fn zero_magnitudes_are_identity() {
        let rec = HYDROMETER.reference_recording();
        assert_eq!(perturb(&rec, &PerturbationSpec::none(7)).unwrap(), rec);
        assert_eq!(perturb(&rec, &PerturbationSpec::scaled(0.0, 7)).unwrap(), rec);
    }

    #[test]
    fn deterministic_and_not_identity() {
        let rec = HYDROMETER.reference_recording();
        let spec = PerturbationSpec::scaled(0.05, 11);
        let a = perturb(&rec, &spec).unwrap();
        assert_eq!(a, perturb(&rec, &spec).unwrap());
        assert_ne!(a, rec);
        let b = perturb(&rec, &PerturbationSpec::scaled(0.05, 12)).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn output_stays_a_valid_recording() {
        let rec = HYDROMETER.reference_recording();
        let p = perturb(&rec, &PerturbationSpec::scaled(0.2, 3)).unwrap();
        assert!(p.events.windows(2).all(|w| w[0].t <= w[1].t));
        let reparsed = parse_session(&p.to_string()).unwrap();
        assert_eq!(reparsed.events.len(), p.events.len());
        let collisions = p.events.iter().filter(|e| matches!(e.payload, Payload::Collision { .. })).count();
        assert_eq!(collisions, 20);
    }

    #[test]
    fn drop_probability_one_removes_all_attach_pairs() {
        let rec = HYDROMETER.reference_recording();
        let spec = PerturbationSpec { drop_attach_prob: 1.0, ..PerturbationSpec::none(1) };
        let p = perturb(&rec, &spec).unwrap();
        assert!(!p.events.iter().any(|e| matches!(e.payload, Payload::Attach { .. })));
    }

    #[test]
    fn text_offset_applies_to_numbers_only() {
        let rec = parse_session("t=0 u=a text x \"1.5\"\nt=1 u=a text y \"abc\"\n").unwrap();
        let spec = PerturbationSpec { text_error: 0.25, ..PerturbationSpec::none(1) };
        let p = perturb(&rec, &spec).unwrap();
        let Payload::TextInput { value, .. } = &p.events[0].payload else { panic!() };
        let v: f64 = value.parse().unwrap();
        assert!((v - 1.25).abs() < 1e-12 || (v - 1.75).abs() < 1e-12);
        assert_eq!(p.events[1], rec.events[1]);
    }

    #[test]
    fn position_noise_scale_is_reported() {
        // Mean 3-D displacement of isotropic noise is σ·√(8/π); reported only.
        let rec = HYDROMETER.reference_recording();
        let sigma = 0.05;
        let spec = PerturbationSpec { position_sigma: sigma, ..PerturbationSpec::none(5) };
        let p = perturb(&rec, &spec).unwrap();
        let mut d = Vec::new();
        for (a, b) in rec.events.iter().zip(&p.events) {
            if let (Payload::Pose { position: x, .. }, Payload::Pose { position: y, .. }) = (&a.payload, &b.payload) {
                d.push((x - y).norm());
            }
        }
        assert!(d.len() >= 400);
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let expected = sigma * (8.0 / std::f64::consts::PI).sqrt();
        println!("mean displacement {mean:.5} (expected {expected:.5}, n={})", d.len());
        assert!(d.iter().all(|x| *x > 0.0));
    }

    #[test]
    fn rejects_bad_specs() {
        let bad = PerturbationSpec { position_sigma: -1.0, ..PerturbationSpec::none(0) };
        assert!(perturb(&HYDROMETER.reference_recording(), &bad).is_err());
        let bad = PerturbationSpec { drop_attach_prob: 1.5, ..PerturbationSpec::none(0) };
        assert_eq!(bad.validate(), Err(PerturbationError::Probability(1.5)));
    }
}
