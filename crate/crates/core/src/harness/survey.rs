//! Decision data collection and model fitting from files.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::calibration::{evaluate_accuracy, fit, load_dataset, sample_observation, save_dataset, DecisionRecord, FitConfig, FitResult};
use crate::error::{Error, Result};
use crate::regret::LaneDecision;

/// Fits the decision model to a dataset file and writes the fitted
/// parameters as JSON to `out`.
pub fn calibrate(dataset: &Path, config: &FitConfig, out: &Path) -> Result<FitResult<f64>> {
    let records: Vec<DecisionRecord<f64>> = load_dataset(dataset)?;
    let result = fit(&records, config)?;
    let text = serde_json::to_string_pretty(&result.model())?;
    std::fs::write(out, text).map_err(|e| Error::io(out, e))?;
    Ok(result)
}

/// Agreement of a fitted parameter file with a dataset.
pub fn score(params: &crate::regret::RegretParams<f64>, dataset: &Path) -> Result<f64> {
    let records: Vec<DecisionRecord<f64>> = load_dataset(dataset)?;
    evaluate_accuracy(params, &records)
}

fn io(e: std::io::Error) -> Error {
    Error::io("<elicitation stream>", e)
}

/// Asks for `count` lane-change decisions on sampled situations, one prompt
/// per situation. Answers are `C` (change) or `K` (keep), case-insensitive;
/// anything else repeats the prompt. End of input stops early. Collected
/// records are written to `out` and returned.
pub fn elicit<R: BufRead, W: Write>(
    count: usize,
    seed: u64,
    input: &mut R,
    prompts: &mut W,
    out: &Path,
) -> Result<Vec<DecisionRecord<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(count);
    let mut line = String::new();
    'scenarios: for i in 0..count {
        let obs = sample_observation::<f64, _>(&mut rng);
        writeln!(
            prompts,
            "[{}/{}] Your lane is blocked by a car at {:.2} m/s. You drive at {:.2} m/s and would like {:.2} m/s.",
            i + 1,
            count,
            obs.v_s,
            obs.v_c,
            obs.v_b
        )
        .map_err(io)?;
        writeln!(
            prompts,
            "      A car approaches in the other lane at {:.2} m/s, {:.1} m behind you.",
            obs.v_f, obs.d
        )
        .map_err(io)?;
        loop {
            write!(prompts, "      Change lanes (C) or keep lane (K)? ").map_err(io)?;
            prompts.flush().map_err(io)?;
            line.clear();
            if input.read_line(&mut line).map_err(io)? == 0 {
                writeln!(prompts).map_err(io)?;
                break 'scenarios;
            }
            match LaneDecision::from_code(line.trim()) {
                Some(label) => {
                    records.push(DecisionRecord { obs, label });
                    break;
                }
                None => writeln!(prompts, "      Please answer C or K.").map_err(io)?,
            }
        }
    }
    save_dataset(out, &records)?;
    Ok(records)
}
