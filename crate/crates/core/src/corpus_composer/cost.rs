//! API cost estimates from per-call token averages.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm_refiner::CallKind;

use super::Corpus;

/// Observed USD totals exceed the plain token arithmetic by about this
/// factor.
pub const DEFAULT_OVERHEAD: f64 = 1.28;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CallAverages {
    pub input: f64,
    pub output: f64,
}

/// Mean tokens per sample for the four refinement calls.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TokenAverages {
    pub modify_system: CallAverages,
    pub modify_user: CallAverages,
    pub paraphrase_system: CallAverages,
    pub paraphrase_user: CallAverages,
}

const fn avg(input: f64, output: f64) -> CallAverages {
    CallAverages { input, output }
}

impl TokenAverages {
    pub fn calls(&self) -> [CallAverages; 4] {
        [
            self.modify_system,
            self.modify_user,
            self.paraphrase_system,
            self.paraphrase_user,
        ]
    }

    /// Published per-call averages for the 1%, 5% and 10% splits.
    pub fn published(split: &str) -> Option<TokenAverages> {
        let row = match split {
            "1pct" | "mw-1pct" => [
                avg(120.46, 28.93),
                avg(114.02, 25.63),
                avg(41.09, 30.15),
                avg(37.98, 26.90),
            ],
            "5pct" | "mw-5pct" => [
                avg(119.54, 27.95),
                avg(114.27, 25.78),
                avg(40.23, 29.52),
                avg(37.83, 26.46),
            ],
            "10pct" | "mw-10pct" => [
                avg(119.95, 28.23),
                avg(114.14, 25.91),
                avg(40.37, 29.41),
                avg(38.06, 26.54),
            ],
            _ => return None,
        };
        Some(TokenAverages {
            modify_system: row[0],
            modify_user: row[1],
            paraphrase_system: row[2],
            paraphrase_user: row[3],
        })
    }

    /// Averages measured from a refined corpus' call records. Dialogue-level
    /// joint calls count as system modifications.
    pub fn measured(corpus: &Corpus) -> Option<TokenAverages> {
        let mut sums = [(0u64, 0u64); 4];
        let mut refined = 0u64;
        for sample in &corpus.samples {
            let Some(r) = &sample.provenance.refinement else {
                continue;
            };
            refined += 1;
            for call in &r.calls {
                let slot = match call.kind {
                    CallKind::ModifySystem | CallKind::ModifyDialogue => 0,
                    CallKind::ModifyUser => 1,
                    CallKind::ParaphraseSystem => 2,
                    CallKind::ParaphraseUser => 3,
                };
                sums[slot].0 += call.usage.input_tokens;
                sums[slot].1 += call.usage.output_tokens;
            }
        }
        if refined == 0 {
            return None;
        }
        let n = refined as f64;
        let a = |i: usize| avg(sums[i].0 as f64 / n, sums[i].1 as f64 / n);
        Some(TokenAverages {
            modify_system: a(0),
            modify_user: a(1),
            paraphrase_system: a(2),
            paraphrase_user: a(3),
        })
    }
}

/// USD per thousand tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prices {
    pub input_per_1k: f64,
    pub output_per_1k: f64,
}

impl Default for Prices {
    fn default() -> Self {
        Self {
            input_per_1k: 0.0010,
            output_per_1k: 0.0020,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub sample_count: u64,
    pub naive_usd: f64,
    pub overhead_factor: f64,
    pub reported_usd: f64,
}

impl CostReport {
    pub fn to_text(&self) -> String {
        format!(
            "samples: {}\nnaive cost: ${:.4}\noverhead factor: {}\nestimated cost: ${:.4}\n",
            self.sample_count, self.naive_usd, self.overhead_factor, self.reported_usd
        )
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("{0} must be a non-negative finite number")]
pub struct NegativeInput(pub &'static str);

pub fn estimate_cost(
    sample_count: u64,
    averages: &TokenAverages,
    prices: &Prices,
    overhead_factor: f64,
) -> Result<CostReport, NegativeInput> {
    let ok = |x: f64| x.is_finite() && x >= 0.0;
    for (name, x) in [
        ("input price", prices.input_per_1k),
        ("output price", prices.output_per_1k),
        ("overhead factor", overhead_factor),
    ] {
        if !ok(x) {
            return Err(NegativeInput(name));
        }
    }
    if !averages.calls().iter().all(|c| ok(c.input) && ok(c.output)) {
        return Err(NegativeInput("token average"));
    }
    let per_sample: f64 = averages
        .calls()
        .iter()
        .map(|c| c.input * prices.input_per_1k + c.output * prices.output_per_1k)
        .sum::<f64>()
        / 1000.0;
    let naive_usd = sample_count as f64 * per_sample;
    Ok(CostReport {
        sample_count,
        naive_usd,
        overhead_factor,
        reported_usd: naive_usd * overhead_factor,
    })
}
