//! Synthetic benchmark: simulate seeded two-box scenes, sample them sparsely,
//! optionally add noise, reconstruct, and compare with the ground truth.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::{add_noise, sample_observations, simulate, two_box_scene, TwoBoxOptions};
use crate::solver::{reconstruct, SolveConfig};

/// Success thresholds of one run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    /// Relative error of `m_ba`.
    pub mass_ratio: f64,
    /// Absolute error of `c`.
    pub restitution: f64,
}

impl Tolerance {
    pub const NOISE_FREE: Tolerance = Tolerance { mass_ratio: 0.05, restitution: 0.05 };
    pub const NOISY: Tolerance = Tolerance { mass_ratio: 0.25, restitution: 0.15 };

    pub fn for_noise(level: f64) -> Self {
        if level > 0.0 {
            Self::NOISY
        } else {
            Self::NOISE_FREE
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Number of seeded scenes per (interval, noise) cell.
    pub scenes: usize,
    /// Sampling intervals, frames.
    pub intervals: Vec<f64>,
    /// Noise levels as fractions.
    pub noise_levels: Vec<f64>,
    pub seed: u64,
    /// Collision gap as a multiple of the interval.
    pub gap_factor: f64,
    pub scene: TwoBoxOptions,
    pub solve: SolveConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            scenes: 20,
            intervals: vec![5.0, 10.0, 19.0],
            noise_levels: vec![0.0],
            seed: 0,
            gap_factor: 2.0,
            scene: TwoBoxOptions::default(),
            solve: SolveConfig::default(),
        }
    }
}

/// Outcome of one reconstruction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub scene_seed: u64,
    pub noise_seed: u64,
    pub interval: f64,
    pub noise: f64,
    pub true_mass_ratio: f64,
    pub true_restitution: f64,
    pub mass_ratio: Option<f64>,
    pub restitution: Option<f64>,
    /// Relative.
    pub mass_ratio_error: Option<f64>,
    /// Absolute.
    pub restitution_error: Option<f64>,
    pub within_tolerance: bool,
    /// A reliability flag was raised.
    pub flagged: bool,
    pub error: Option<String>,
    /// Wall-clock solve time; not part of the deterministic output.
    #[serde(skip)]
    pub seconds: f64,
}

impl Trial {
    /// Out of tolerance, and reported as such by a flag or an error.
    pub fn detected_failure(&self) -> bool {
        !self.within_tolerance && (self.flagged || self.error.is_some())
    }
}

/// Aggregate over one (interval, noise) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub interval: f64,
    pub noise: f64,
    pub runs: usize,
    pub mean_mass_ratio_error: f64,
    pub max_mass_ratio_error: f64,
    pub mean_restitution_error: f64,
    pub max_restitution_error: f64,
    /// Fraction of runs within [`Tolerance::for_noise`].
    pub pass_rate: f64,
    /// Fraction of runs that raised a flag or failed outright.
    pub flagged_rate: f64,
    /// Fraction of out-of-tolerance runs that raised a flag or failed.
    pub flagged_failure_rate: Option<f64>,
    pub errors: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub trials: Vec<Trial>,
}

/// Seed of the noise draw of one cell, independent of the scene seed.
fn noise_seed(seed: u64, scene: usize, interval: usize, noise: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((scene as u64) << 16)
        .wrapping_add((interval as u64) << 8)
        .wrapping_add(noise as u64)
}

pub fn run_trial(scene_seed: u64, noise_seed: u64, interval: f64, noise: f64, cfg: &EvalConfig) -> Result<Trial> {
    let scene = two_box_scene(scene_seed, &cfg.scene)?;
    let gt = simulate(&scene)?;
    let m_true = gt.mass_ratio()?;
    let c_true = gt.first_event()?.restitution;
    let obs = add_noise(&sample_observations(&gt, interval, cfg.gap_factor * interval)?, noise, noise_seed)?;
    let tol = Tolerance::for_noise(noise);
    let start = Instant::now();
    let solved = reconstruct(&obs, &cfg.solve);
    let seconds = start.elapsed().as_secs_f64();
    let mut t = Trial {
        scene_seed,
        noise_seed,
        interval,
        noise,
        true_mass_ratio: m_true,
        true_restitution: c_true,
        mass_ratio: None,
        restitution: None,
        mass_ratio_error: None,
        restitution_error: None,
        within_tolerance: false,
        flagged: false,
        error: None,
        seconds,
    };
    match solved {
        Ok(r) => {
            t.mass_ratio = r.mass_ratio;
            t.restitution = r.restitution;
            t.mass_ratio_error = r.mass_ratio.map(|m| (m - m_true).abs() / m_true);
            t.restitution_error = r.restitution.map(|c| (c - c_true).abs());
            t.within_tolerance = t.mass_ratio_error.is_some_and(|e| e <= tol.mass_ratio)
                && t.restitution_error.is_some_and(|e| e <= tol.restitution);
            t.flagged = r.flags.any();
        }
        Err(e) => t.error = Some(e.to_string()),
    }
    Ok(t)
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NAN, f64::max)
}

fn summarize(interval: f64, noise: f64, trials: &[&Trial]) -> EvalRow {
    let me: Vec<f64> = trials.iter().filter_map(|t| t.mass_ratio_error).collect();
    let ce: Vec<f64> = trials.iter().filter_map(|t| t.restitution_error).collect();
    let n = trials.len();
    let frac = |k: usize, of: usize| if of == 0 { f64::NAN } else { k as f64 / of as f64 };
    let failures = trials.iter().filter(|t| !t.within_tolerance).count();
    let caught = trials.iter().filter(|t| t.detected_failure()).count();
    EvalRow {
        interval,
        noise,
        runs: n,
        mean_mass_ratio_error: mean(&me),
        max_mass_ratio_error: max(&me),
        mean_restitution_error: mean(&ce),
        max_restitution_error: max(&ce),
        pass_rate: frac(trials.iter().filter(|t| t.within_tolerance).count(), n),
        flagged_rate: frac(trials.iter().filter(|t| t.flagged || t.error.is_some()).count(), n),
        flagged_failure_rate: (failures > 0).then(|| frac(caught, failures)),
        errors: trials.iter().filter(|t| t.error.is_some()).count(),
    }
}

/// Runs every (interval, noise, scene) combination in parallel. The report
/// is ordered and, apart from timings, identical for identical configs.
pub fn evaluate(cfg: &EvalConfig) -> Result<EvalReport> {
    if cfg.scenes == 0 || cfg.intervals.is_empty() || cfg.noise_levels.is_empty() {
        return Err(Error::InvalidArgument("evaluation needs scenes, intervals and noise levels".into()));
    }
    if !(cfg.gap_factor >= 0.0) {
        return Err(Error::InvalidArgument(format!("gap factor must be non-negative, got {}", cfg.gap_factor)));
    }
    let mut jobs = Vec::new();
    for (ii, &interval) in cfg.intervals.iter().enumerate() {
        for (ni, &noise) in cfg.noise_levels.iter().enumerate() {
            for s in 0..cfg.scenes {
                jobs.push((cfg.seed.wrapping_add(s as u64), noise_seed(cfg.seed, s, ii, ni), interval, noise));
            }
        }
    }
    let trials = jobs
        .par_iter()
        .map(|&(scene, ns, interval, noise)| run_trial(scene, ns, interval, noise, cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for &interval in &cfg.intervals {
        for &noise in &cfg.noise_levels {
            let cell: Vec<&Trial> = trials.iter().filter(|t| t.interval == interval && t.noise == noise).collect();
            rows.push(summarize(interval, noise, &cell));
        }
    }
    Ok(EvalReport { rows, trials })
}

impl EvalReport {
    /// Tab-separated table of the rows with a header line.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from(
            "interval\tnoise\truns\tmean_m_err\tmax_m_err\tmean_c_err\tmax_c_err\tpass_rate\tflagged_rate\tflagged_failure_rate\terrors\n",
        );
        for r in &self.rows {
            let ffr = r.flagged_failure_rate.map_or("-".to_string(), |v| format!("{v:.3}"));
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{:.3e}\t{:.3e}\t{:.3e}\t{:.3e}\t{:.3}\t{:.3}\t{}\t{}",
                r.interval,
                r.noise,
                r.runs,
                r.mean_mass_ratio_error,
                r.max_mass_ratio_error,
                r.mean_restitution_error,
                r.max_restitution_error,
                r.pass_rate,
                r.flagged_rate,
                ffr,
                r.errors
            );
        }
        s
    }

    /// Pass rate over every trial at the given noise level.
    pub fn pass_rate(&self, noise: f64) -> f64 {
        let t: Vec<&Trial> = self.trials.iter().filter(|t| t.noise == noise).collect();
        t.iter().filter(|t| t.within_tolerance).count() as f64 / t.len().max(1) as f64
    }

    /// Share of out-of-tolerance trials at `noise` that were flagged or
    /// failed outright; `None` without failures.
    pub fn flag_catch_rate(&self, noise: f64) -> Option<f64> {
        let failures: Vec<&Trial> = self.trials.iter().filter(|t| t.noise == noise && !t.within_tolerance).collect();
        (!failures.is_empty())
            .then(|| failures.iter().filter(|t| t.detected_failure()).count() as f64 / failures.len() as f64)
    }
}
