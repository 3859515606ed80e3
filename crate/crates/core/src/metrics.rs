//! Rollout evaluation and error / frequency metrics.

use std::sync::Arc;
use std::time::Instant;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schemes::{Integrator, PointModel, RolloutState};

/// Shortest series accepted by [`strouhal`].
pub const MIN_SPECTRAL_LEN: usize = 16;

/// Mean squared difference between two equally long slices.
pub fn mse(pred: &[f64], truth: &[f64]) -> f64 {
    debug_assert_eq!(pred.len(), truth.len());
    pred.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / pred.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrouhalConfig {
    pub diameter: f64,
    pub freestream: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrouhalEstimate {
    pub st: f64,
    /// Dominant frequency in Hz.
    pub f_d: f64,
    /// Frequency resolution `1 / (len · dt)`.
    pub bin_width: f64,
    /// Set when the mean-removed spectrum carries no energy, i.e. there is
    /// no meaningful peak.
    pub flat: bool,
}

/// Dominant-frequency Strouhal number of `series` sampled every `cfg.dt`.
///
/// The series is mean-removed and Hamming-windowed; the FFT length equals
/// the series length and the DC bin is excluded from the peak search.
pub fn strouhal(series: &[f64], cfg: &StrouhalConfig) -> Result<StrouhalEstimate> {
    let n = series.len();
    if n < MIN_SPECTRAL_LEN {
        return Err(Error::SeriesTooShort {
            len: n,
            min: MIN_SPECTRAL_LEN,
        });
    }
    if !(cfg.dt > 0.0 && cfg.diameter > 0.0 && cfg.freestream > 0.0) {
        return Err(Error::InvalidConfig(format!("Strouhal config must be positive: {cfg:?}")));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let denom = (n - 1) as f64;
    let mut buf: Vec<Complex<f64>> = series
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let w = 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / denom).cos();
            Complex::new((v - mean) * w, 0.0)
        })
        .collect();
    let fft: Arc<dyn rustfft::Fft<f64>> = FftPlanner::new().plan_fft_forward(n);
    fft.process(&mut buf);
    let (mut best, mut best_power) = (1usize, f64::NEG_INFINITY);
    for (k, c) in buf.iter().enumerate().take(n / 2 + 1).skip(1) {
        let p = c.norm_sqr();
        if p > best_power {
            best = k;
            best_power = p;
        }
    }
    let energy: f64 = series.iter().map(|v| v * v).sum::<f64>() + 1.0;
    let bin_width = 1.0 / (n as f64 * cfg.dt);
    let f_d = best as f64 * bin_width;
    Ok(StrouhalEstimate {
        st: f_d * cfg.diameter / cfg.freestream,
        f_d,
        bin_width,
        flat: best_power <= 1e-24 * energy * n as f64,
    })
}

/// One time series per probe index. `snapshots[s][p]` is point `p` at step `s`.
pub fn extract_probes<S: AsRef<[f64]>>(snapshots: &[S], probes: &[usize]) -> Result<Vec<Vec<f64>>> {
    let n_points = snapshots.first().map_or(0, |s| s.as_ref().len());
    if let Some(&bad) = probes.iter().find(|&&p| p >= n_points) {
        return Err(Error::IndexOutOfRange(format!("probe {bad} outside 0..{n_points}")));
    }
    Ok(probes
        .iter()
        .map(|&p| snapshots.iter().map(|s| s.as_ref()[p]).collect())
        .collect())
}

mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() { Some(*v) } else { None }.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }

    pub mod vec {
        use super::*;

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            v.iter()
                .map(|x| if x.is_finite() { Some(*x) } else { None })
                .collect::<Vec<_>>()
                .serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            Ok(Vec::<Option<f64>>::deserialize(d)?
                .into_iter()
                .map(|x| x.unwrap_or(f64::NAN))
                .collect())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Mean over steps of the per-step spatial MSE; NaN after divergence.
    #[serde(with = "nan_as_null")]
    pub aggregate_mse: f64,
    #[serde(with = "nan_as_null::vec")]
    pub per_step_mse: Vec<f64>,
    /// First rollout step (1-based) whose prediction was non-finite.
    pub divergence_step: Option<usize>,
    pub probe_series: Option<Vec<Vec<f64>>>,
    pub strouhal: Option<StrouhalEstimate>,
    pub model_evals: usize,
    pub runtime_seconds: f64,
    #[serde(default)]
    pub config_fingerprint: String,
}

impl EvalReport {
    pub fn diverged(&self) -> bool {
        self.divergence_step.is_some()
    }

    pub fn csv_header() -> &'static str {
        "aggregate_mse,horizon,divergence_step,strouhal,model_evals,runtime_seconds,config_fingerprint"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{:e},{},{},{},{},{},{}",
            self.aggregate_mse,
            self.per_step_mse.len(),
            self.divergence_step.map_or(String::new(), |s| s.to_string()),
            self.strouhal.map_or(String::new(), |s| s.st.to_string()),
            self.model_evals,
            self.runtime_seconds,
            self.config_fingerprint
        )
    }
}

/// Rollout result: the report plus the predicted fields needed for plots.
#[derive(Debug, Clone)]
pub struct RolloutOutcome {
    pub report: EvalReport,
    /// Last finite predicted snapshot.
    pub final_prediction: Vec<f64>,
}

/// Recursive rollout over `ground_truth.len()` steps from `state`.
///
/// Ground truth is only read for scoring. A non-finite prediction stops
/// the rollout; its step is recorded and the remaining per-step MSEs are
/// NaN.
pub fn rollout_eval<S: AsRef<[f64]>>(
    model: &dyn PointModel,
    integrator: &Integrator,
    mut state: RolloutState,
    ground_truth: &[S],
    probes: &[usize],
    strouhal_cfg: Option<&StrouhalConfig>,
) -> Result<RolloutOutcome> {
    let started = Instant::now();
    let n_points = state.n_points();
    if let Some(bad) = ground_truth.iter().find(|g| g.as_ref().len() != n_points) {
        return Err(Error::ShapeMismatch {
            expected: format!("{n_points} points per truth snapshot"),
            actual: format!("{}", bad.as_ref().len()),
        });
    }
    if let Some(&bad) = probes.iter().find(|&&p| p >= n_points) {
        return Err(Error::IndexOutOfRange(format!("probe {bad} outside 0..{n_points}")));
    }
    let mut per_step = Vec::with_capacity(ground_truth.len());
    let mut probe_series: Vec<Vec<f64>> = vec![Vec::with_capacity(ground_truth.len()); probes.len()];
    let mut divergence_step = None;
    let mut final_prediction = state.current().to_vec();
    for (s, truth) in ground_truth.iter().enumerate() {
        let pred = state.advance(integrator, model)?;
        if pred.iter().any(|v| !v.is_finite()) {
            divergence_step = Some(s + 1);
            per_step.resize(ground_truth.len(), f64::NAN);
            break;
        }
        per_step.push(mse(&pred, truth.as_ref()));
        for (series, &p) in probe_series.iter_mut().zip(probes) {
            series.push(pred[p]);
        }
        final_prediction = pred;
    }
    let aggregate_mse = if divergence_step.is_some() || per_step.is_empty() {
        f64::NAN
    } else {
        per_step.iter().sum::<f64>() / per_step.len() as f64
    };
    let strouhal = match (strouhal_cfg, probe_series.first()) {
        (Some(cfg), Some(series)) if divergence_step.is_none() && series.len() >= MIN_SPECTRAL_LEN => {
            Some(strouhal(series, cfg)?)
        }
        _ => None,
    };
    Ok(RolloutOutcome {
        report: EvalReport {
            aggregate_mse,
            per_step_mse: per_step,
            divergence_step,
            probe_series: (!probes.is_empty()).then_some(probe_series),
            strouhal,
            model_evals: state.model_evals,
            runtime_seconds: started.elapsed().as_secs_f64(),
            config_fingerprint: String::new(),
        },
        final_prediction,
    })
}
