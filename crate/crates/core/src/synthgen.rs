//! Seeded synthetic runs and learning curves drawn from a known law.
//!
//! Randomness comes from SplitMix64 (Steele, Lea and Flood 2014): the state
//! advances by `0x9E3779B97F4A7C15` and each output is mixed with the
//! constants `0xBF58476D1CE4E5B9` and `0x94D049BB133111EB` under shifts
//! 30, 27 and 31. A normal deviate takes two consecutive outputs `x1, x2`,
//! forms `u1 = ((x1 >> 11) + 1)·2⁻⁵³ ∈ (0, 1]` and `u2 = (x2 >> 11)·2⁻⁵³`,
//! and returns `sqrt(−2 ln u1)·cos(2π u2)`. Exactly one deviate is drawn per
//! emitted loss, in emission order, so fixtures can be rebuilt bit for bit
//! in any language with IEEE-754 `ln`, `sqrt` and `cos`.

use serde::{Deserialize, Serialize};

use crate::alloc::optimal_params_for_tokens;
use crate::lawfit::{predict_loss, predict_loss_multi, ChinchillaParams, MultiEpochParams};
use crate::runstore::{CurvePoint, CurveSet, RunRecord, RunSet, RunStoreError};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Store(#[from] RunStoreError),
}

pub type Result<T> = std::result::Result<T, SynthError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Standard normal via Box-Muller (cosine branch only).
    pub fn next_normal(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * SCALE;
        let u2 = (self.next_u64() >> 11) as f64 * SCALE;
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SynthLaw {
    Single(ChinchillaParams),
    Multi(MultiEpochParams),
}

impl SynthLaw {
    pub fn base(&self) -> &ChinchillaParams {
        match self {
            SynthLaw::Single(p) => p,
            SynthLaw::Multi(p) => &p.base,
        }
    }
}

pub const DEFAULT_SIZES: [f64; 5] = [20e6, 85e6, 155e6, 309e6, 823e6];
pub const DEFAULT_RATIOS: [f64; 8] = [2.0, 4.0, 8.0, 10.0, 20.0, 32.0, 64.0, 100.0];
pub const DEFAULT_EPOCHS: [f64; 4] = [2.0, 4.0, 8.0, 10.0];

/// Earliest checkpoint as a fraction of the run's token budget.
pub const FIRST_CHECKPOINT_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub law: SynthLaw,
    pub sizes: Vec<f64>,
    /// `D / N` values.
    pub ratios: Vec<f64>,
    /// Epoch counts for repeated-data runs; used only by a multi-epoch law.
    pub epoch_grid: Vec<f64>,
    /// Standard deviation of the Gaussian added to log-loss.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// Default model sizes and ratios, plus the default epoch grid for a
    /// multi-epoch law.
    pub fn new(law: SynthLaw, noise_sigma: f64, seed: u64) -> Self {
        SynthSpec {
            law,
            sizes: DEFAULT_SIZES.to_vec(),
            ratios: DEFAULT_RATIOS.to_vec(),
            epoch_grid: match law {
                SynthLaw::Single(_) => Vec::new(),
                SynthLaw::Multi(_) => DEFAULT_EPOCHS.to_vec(),
            },
            noise_sigma,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.sizes.is_empty() || self.ratios.is_empty() {
            return bad("sizes and ratios must be non-empty".into());
        }
        for (name, list) in [
            ("size", &self.sizes),
            ("ratio", &self.ratios),
            ("epoch", &self.epoch_grid),
        ] {
            if let Some(v) = list.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                return bad(format!("{name} {v} must be finite and > 0"));
            }
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad(format!("noise_sigma {} must be >= 0", self.noise_sigma));
        }
        let base_ok = match &self.law {
            SynthLaw::Single(p) => p.validate(),
            SynthLaw::Multi(p) => p.validate(),
        };
        base_ok.map_err(|e| SynthError::InvalidSpec(e.to_string()))
    }
}

fn noisy(loss: f64, sigma: f64, rng: &mut SplitMix64) -> f64 {
    let z = rng.next_normal();
    if sigma == 0.0 {
        loss
    } else {
        (loss.ln() + sigma * z).exp()
    }
}

/// One record `s{i}-r{j}` per (size, ratio) from the base law, then, for a
/// multi-epoch law, one record `s{i}-r{j}-e{k}` per epoch count above 1 with
/// `U_D = D / epochs`.
pub fn generate_runs(spec: &SynthSpec) -> Result<RunSet> {
    spec.validate()?;
    let mut rng = SplitMix64::new(spec.seed);
    let base = spec.law.base();
    let mut records = Vec::new();
    for (i, &n) in spec.sizes.iter().enumerate() {
        for (j, &ratio) in spec.ratios.iter().enumerate() {
            let d = n * ratio;
            let loss = noisy(predict_loss(base, n, d), spec.noise_sigma, &mut rng);
            records.push(RunRecord::new(format!("s{i}-r{j}"), n, d, loss));
        }
    }
    if let SynthLaw::Multi(params) = &spec.law {
        for (i, &n) in spec.sizes.iter().enumerate() {
            for (j, &ratio) in spec.ratios.iter().enumerate() {
                let d = n * ratio;
                for (k, &ep) in spec.epoch_grid.iter().enumerate() {
                    if ep <= 1.0 {
                        continue;
                    }
                    let u_d = d / ep;
                    let u_n = optimal_params_for_tokens(base, u_d);
                    let clean = predict_loss_multi(params, n, d, u_d, u_n)
                        .map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
                    let mut rec = RunRecord::new(
                        format!("s{i}-r{j}-e{k}"),
                        n,
                        d,
                        noisy(clean, spec.noise_sigma, &mut rng),
                    );
                    rec.u_tokens = u_d;
                    records.push(rec);
                }
            }
        }
    }
    Ok(RunSet::new(records)?)
}

/// Token counts of the checkpoints of a `d`-token run, log-uniform from
/// `FIRST_CHECKPOINT_FRACTION · d` up to exactly `d`.
pub fn checkpoint_tokens(d: f64, checkpoints: usize) -> Vec<f64> {
    let last = (checkpoints - 1) as f64;
    (0..checkpoints)
        .map(|t| {
            if t + 1 == checkpoints {
                d
            } else {
                d * FIRST_CHECKPOINT_FRACTION.powf((last - t as f64) / last)
            }
        })
        .collect()
}

/// Learning curves for every (size, ratio) run of the base law. A checkpoint
/// after `t` tokens carries the loss of a finished `t`-token run.
pub fn generate_curves(spec: &SynthSpec, checkpoints: usize) -> Result<CurveSet> {
    spec.validate()?;
    if checkpoints < 2 {
        return Err(SynthError::InvalidSpec(format!(
            "checkpoints = {checkpoints}, need >= 2"
        )));
    }
    let mut rng = SplitMix64::new(spec.seed);
    let base = spec.law.base();
    let mut points = Vec::new();
    for (i, &n) in spec.sizes.iter().enumerate() {
        for (j, &ratio) in spec.ratios.iter().enumerate() {
            for t in checkpoint_tokens(n * ratio, checkpoints) {
                points.push(CurvePoint {
                    run_id: format!("s{i}-r{j}"),
                    compute: 6.0 * n * t,
                    loss: noisy(predict_loss(base, n, t), spec.noise_sigma, &mut rng),
                    metrics: Default::default(),
                });
            }
        }
    }
    Ok(CurveSet::new(points)?)
}

/// Adds `name := slope · loss + intercept` to every checkpoint.
pub fn attach_linear_metric(curves: &CurveSet, name: &str, slope: f64, intercept: f64) -> Result<CurveSet> {
    let points = curves
        .points()
        .iter()
        .map(|p| {
            let mut p = p.clone();
            p.metrics.insert(name.to_string(), slope * p.loss + intercept);
            p
        })
        .collect();
    Ok(CurveSet::new(points)?)
}

/// Same as [`attach_linear_metric`] for runs.
pub fn attach_linear_metric_runs(runs: &RunSet, name: &str, slope: f64, intercept: f64) -> Result<RunSet> {
    let records = runs
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.metrics.insert(name.to_string(), slope * r.test_loss + intercept);
            r
        })
        .collect();
    Ok(RunSet::new(records)?)
}
