use rayon::prelude::*;

use super::perturb::{perturb, PerturbationError, PerturbationSpec};
use crate::engine::{score_recording, EngineConfig, EngineError};
use crate::model::TaskNetwork;
use crate::telemetry::{ReferenceSet, SessionRecording};

pub const MIN_TRIALS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityRow {
    pub magnitude: f64,
    pub mean_delta: f64,
    /// Sample standard deviation over trials.
    pub std: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MonotonicityTable {
    pub rows: Vec<MonotonicityRow>,
}

impl MonotonicityTable {
    pub fn to_text(&self) -> String {
        let mut out = format!("{:>10} {:>12} {:>12} {:>7}\n", "magnitude", "mean_delta", "std", "trials");
        for r in &self.rows {
            out.push_str(&format!("{:>10.4} {:>12.6} {:>12.6} {:>7}\n", r.magnitude, r.mean_delta, r.std, r.trials));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("magnitude,mean_delta,std,trials\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.magnitude, r.mean_delta, r.std, r.trials));
        }
        out
    }

    pub fn is_non_increasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].mean_delta <= w[0].mean_delta)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HarnessError {
    #[error("trials below minimum: {trials} < {minimum}")]
    TrialsBelowMinimum { trials: usize, minimum: usize },
    #[error("magnitudes must be non-negative and strictly increasing")]
    Magnitudes,
    #[error(transparent)]
    Perturbation(#[from] PerturbationError),
    #[error("magnitude {magnitude}, trial {trial}: {source}")]
    Engine { magnitude: f64, trial: usize, source: EngineError, partial: MonotonicityTable },
    #[error("magnitude {magnitude}, trial {trial}: no scope with positive weight")]
    NoDelta { magnitude: f64, trial: usize, partial: MonotonicityTable },
}

impl HarnessError {
    /// Rows completed before the failure.
    pub fn partial(&self) -> Option<&MonotonicityTable> {
        match self {
            HarnessError::Engine { partial, .. } | HarnessError::NoDelta { partial, .. } => Some(partial),
            _ => None,
        }
    }
}

enum TrialFailure {
    Engine(EngineError),
    NoDelta,
}

/// Mean and spread of Δ over perturbed copies of `session`, per magnitude.
///
/// Trial `i` uses seed `seed + i` at every magnitude.
pub fn monotonicity_report(
    network: &TaskNetwork,
    references: &ReferenceSet,
    session: &SessionRecording,
    magnitudes: &[f64],
    trials: usize,
    seed: u64,
    config: &EngineConfig,
) -> Result<MonotonicityTable, HarnessError> {
    if trials < MIN_TRIALS {
        return Err(HarnessError::TrialsBelowMinimum { trials, minimum: MIN_TRIALS });
    }
    if magnitudes.iter().any(|m| !(m.is_finite() && *m >= 0.0)) || magnitudes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(HarnessError::Magnitudes);
    }
    let mut table = MonotonicityTable::default();
    for &magnitude in magnitudes {
        let results: Vec<Result<f64, TrialFailure>> = (0..trials)
            .into_par_iter()
            .map(|i| {
                let spec = PerturbationSpec::scaled(magnitude, seed.wrapping_add(i as u64));
                let rec = perturb(session, &spec).expect("scaled specs are valid");
                let report = score_recording(network, references, config, &rec).map_err(TrialFailure::Engine)?;
                report.mean_delta().ok_or(TrialFailure::NoDelta)
            })
            .collect();
        let mut deltas = Vec::with_capacity(trials);
        for (trial, r) in results.into_iter().enumerate() {
            match r {
                Ok(d) => deltas.push(d),
                Err(TrialFailure::Engine(source)) => {
                    return Err(HarnessError::Engine { magnitude, trial, source, partial: table })
                }
                Err(TrialFailure::NoDelta) => return Err(HarnessError::NoDelta { magnitude, trial, partial: table }),
            }
        }
        let n = deltas.len() as f64;
        let mean = deltas.iter().sum::<f64>() / n;
        let var = deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
        log::info!("magnitude {magnitude}: mean Δ {mean:.6}");
        table.rows.push(MonotonicityRow { magnitude, mean_delta: mean, std: var.sqrt(), trials });
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled::HYDROMETER;

    #[test]
    fn trials_below_minimum() {
        let f = HYDROMETER;
        let err = monotonicity_report(
            &f.task_network(),
            &f.references(),
            &f.reference_recording(),
            &[0.0],
            1,
            0,
            &EngineConfig::default(),
        )
        .unwrap_err();
        assert_eq!(err.to_string(), "trials below minimum: 1 < 10");
    }

    #[test]
    fn magnitudes_must_increase() {
        let f = HYDROMETER;
        let err = monotonicity_report(
            &f.task_network(),
            &f.references(),
            &f.reference_recording(),
            &[0.1, 0.05],
            10,
            0,
            &EngineConfig::default(),
        )
        .unwrap_err();
        assert_eq!(err, HarnessError::Magnitudes);
    }

    #[test]
    fn zero_magnitude_is_self_replay() {
        let f = HYDROMETER;
        let t = monotonicity_report(
            &f.task_network(),
            &f.references(),
            &f.reference_recording(),
            &[0.0],
            10,
            42,
            &EngineConfig::default(),
        )
        .unwrap();
        assert_eq!(t.rows[0].mean_delta, 1.0);
        assert_eq!(t.rows[0].std, 0.0);
        assert!(t.to_csv().starts_with("magnitude,mean_delta,std,trials\n0,1,0,10\n"));
    }
}
