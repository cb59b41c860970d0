//! Synthetic sign series made of biased patches with Pareto lengths.
//!
//! Each patch has a dominant sign; its symbols are drawn independently,
//! equal to the dominant sign with probability `bias`. Patch lengths follow
//! a discretized Pareto law with density exponent `mu`, so the length CCDF
//! decays with exponent `mu - 1`.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::seeded_rng;
use crate::trades::{write_transactions, Sign, Transaction};

/// Upper bound on the total generated length.
pub const MAX_TOTAL_LENGTH: usize = 1 << 31;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PatchGenConfig {
    pub num_patches: usize,
    /// Density exponent `mu > 1` of `P(l) ~ l^-mu`.
    pub pareto_exponent: f64,
    pub min_length: usize,
    /// Probability of the dominant sign inside a patch, in `(0.5, 1]`.
    pub bias: f64,
    pub seed: u64,
    /// Consecutive patches flip dominant sign; otherwise every patch is a
    /// buy patch.
    pub alternate_signs: bool,
}

impl Default for PatchGenConfig {
    fn default() -> Self {
        Self {
            num_patches: 5000,
            pareto_exponent: 2.0,
            min_length: 1,
            bias: 0.95,
            seed: 0,
            alternate_signs: true,
        }
    }
}

impl PatchGenConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pareto_exponent > 1.0) || !self.pareto_exponent.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "pareto_exponent must exceed 1, got {}",
                self.pareto_exponent
            )));
        }
        if !(self.bias > 0.5 && self.bias <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "bias must lie in (0.5, 1], got {}",
                self.bias
            )));
        }
        if self.min_length == 0 {
            return Err(Error::InvalidArgument("min_length must be at least 1".into()));
        }
        Ok(())
    }
}

/// One planted patch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthPatch {
    pub patch_id: usize,
    pub dominant_sign: Sign,
    pub length: usize,
    /// Index of the patch's first symbol in the series.
    pub start: usize,
}

/// Inverse-CDF Pareto draw `x_min * u^(-1/(mu-1))`, rounded up.
pub fn pareto_length_from_uniform(u: f64, mu: f64, min_length: usize) -> usize {
    let x = min_length as f64 * u.powf(-1.0 / (mu - 1.0));
    let len = x.ceil();
    if len >= usize::MAX as f64 {
        usize::MAX
    } else {
        (len as usize).max(min_length)
    }
}

/// Draw one patch length. `u` is taken from `(0, 1]` so the draw is finite.
pub fn sample_pareto_length<R: Rng + ?Sized>(config: &PatchGenConfig, rng: &mut R) -> usize {
    let u = 1.0 - rng.random::<f64>();
    pareto_length_from_uniform(u, config.pareto_exponent, config.min_length)
}

/// Concatenate `num_patches` biased blocks. Returns the symbol series
/// (sell `0`, buy `1`) and the planted patches.
pub fn generate_patched_series(config: &PatchGenConfig) -> Result<(Vec<usize>, Vec<GroundTruthPatch>)> {
    config.validate()?;
    if config.num_patches == 0 {
        return Err(Error::InvalidArgument("num_patches must be at least 1".into()));
    }
    let mut rng = seeded_rng(config.seed);
    let mut truth = Vec::with_capacity(config.num_patches);
    let mut start = 0usize;
    for patch_id in 0..config.num_patches {
        let length = sample_pareto_length(config, &mut rng);
        let dominant_sign = if config.alternate_signs && patch_id % 2 == 1 {
            Sign::Sell
        } else {
            Sign::Buy
        };
        truth.push(GroundTruthPatch {
            patch_id,
            dominant_sign,
            length,
            start,
        });
        start = start.saturating_add(length);
        if start > MAX_TOTAL_LENGTH {
            return Err(Error::InvalidArgument(format!(
                "generated series exceeds {MAX_TOTAL_LENGTH} symbols"
            )));
        }
    }
    let mut symbols = Vec::with_capacity(start);
    for p in &truth {
        let dominant = p.dominant_sign.symbol();
        let other = p.dominant_sign.opposite().symbol();
        for _ in 0..p.length {
            let keep = config.bias >= 1.0 || rng.random::<f64>() < config.bias;
            symbols.push(if keep { dominant } else { other });
        }
    }
    Ok((symbols, truth))
}

/// How to dress a bare symbol series as transactions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureFill {
    pub member_id: String,
    /// Epoch seconds of the first trade.
    pub start_time: f64,
    pub spacing_seconds: f64,
    pub shares: u64,
    pub price: f64,
}

impl Default for FixtureFill {
    fn default() -> Self {
        Self {
            member_id: "SYN".into(),
            // 2004-01-01T00:00:00Z
            start_time: 1_072_915_200.0,
            spacing_seconds: 1.0,
            shares: 100,
            price: 10.0,
        }
    }
}

/// One transaction per symbol at evenly spaced times.
pub fn to_transactions(symbols: &[usize], fill: &FixtureFill) -> Result<Vec<Transaction>> {
    symbols
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let sign =
                Sign::from_symbol(s).ok_or_else(|| Error::InvalidArgument(format!("symbol {s} is not a sign")))?;
            Ok(Transaction {
                timestamp: fill.start_time + i as f64 * fill.spacing_seconds,
                member_id: fill.member_id.clone(),
                sign,
                shares: fill.shares,
                price: fill.price,
                best_bid: None,
                best_ask: None,
                prev_price: None,
            })
        })
        .collect()
}

/// Write the series as a transaction CSV.
pub fn write_fixture_csv<W: Write>(writer: W, symbols: &[usize], fill: &FixtureFill) -> Result<()> {
    write_transactions(writer, &to_transactions(symbols, fill)?)
}

/// Write the planted patches: `patch_id,dominant_sign,length,start`.
pub fn write_ground_truth<W: Write>(writer: W, truth: &[GroundTruthPatch]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["patch_id", "dominant_sign", "length", "start"])?;
    for p in truth {
        w.write_record([
            p.patch_id.to_string(),
            p.dominant_sign.to_string(),
            p.length.to_string(),
            p.start.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
