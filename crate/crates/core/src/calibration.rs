//! Maximum-likelihood fitting of [`RegretParams`] to labelled lane-change
//! decisions.
//!
//! The choice model is logistic in the net advantage,
//! `P(change) = 1 / (1 + exp(-k e_ck))`, so its 0.5 contour coincides with
//! the deterministic decision rule. All seven driver constants and the
//! temperature `k` are optimized in log space, which keeps every iterate
//! inside the valid parameter region.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regret::{net_advantage, LaneChangeObservation, LaneDecision, RegretParams};
use crate::scalar::Real;

pub const DATASET_HEADER: [&str; 6] = ["v_s", "v_c", "v_f", "v_b", "d", "decision"];

/// Probabilities are clamped to `[PROB_FLOOR, 1 - PROB_FLOOR]` inside the
/// likelihood.
pub const PROB_FLOOR: f64 = 1e-12;

const GRADIENT_STEP: f64 = 1e-5;
const RETRIES_PER_RESTART: usize = 3;
const N_FREE: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord<T> {
    pub obs: LaneChangeObservation<T>,
    pub label: LaneDecision,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Initial logistic temperature; fitted jointly with the driver constants.
    pub temperature: f64,
    /// Initial step length of the line search.
    pub learning_rate: f64,
    pub max_iterations: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Stop once the mean NLL improves by less than this.
    pub tolerance: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            learning_rate: 1.0,
            max_iterations: 400,
            restarts: 8,
            seed: 0,
            tolerance: 1e-9,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config("temperature must be > 0".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be > 0".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be >= 1".into()));
        }
        if self.restarts == 0 {
            return Err(Error::Config("restarts must be >= 1".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("tolerance must be > 0".into()));
        }
        Ok(())
    }
}

/// Driver constants together with the fitted temperature. Serializes as a
/// flat JSON object.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedModel<T> {
    #[serde(flatten)]
    pub params: RegretParams<T>,
    pub k: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult<T> {
    pub params: RegretParams<T>,
    pub k: T,
    /// Total negative log-likelihood over the dataset.
    pub nll: T,
    pub accuracy: f64,
    pub iterations: usize,
    pub best_restart: usize,
    /// Runs abandoned because the objective became non-finite.
    pub diverged_runs: usize,
}

impl<T: Real> FitResult<T> {
    pub fn model(&self) -> FittedModel<T> {
        FittedModel {
            params: self.params,
            k: self.k,
        }
    }
}

pub fn load_dataset<T: Real>(path: impl AsRef<Path>) -> Result<Vec<DecisionRecord<T>>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(file)
}

pub fn read_dataset<T: Real, R: Read>(reader: R) -> Result<Vec<DecisionRecord<T>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.len() != DATASET_HEADER.len() || header.iter().zip(DATASET_HEADER).any(|(a, b)| a != b) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {}", DATASET_HEADER.join(",")),
        });
    }

    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != DATASET_HEADER.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", DATASET_HEADER.len(), row.len()),
            });
        }
        let mut values = [T::zero(); 5];
        for (slot, (field, name)) in values.iter_mut().zip(row.iter().zip(DATASET_HEADER)) {
            let parsed: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                message: format!("{name}: cannot parse {field:?} as a number"),
            })?;
            *slot = T::lit(parsed);
        }
        let label = LaneDecision::from_code(&row[5]).ok_or_else(|| Error::Parse {
            line,
            message: format!("decision must be C or K, found {:?}", &row[5]),
        })?;
        let [v_s, v_c, v_f, v_b, d] = values;
        let obs = LaneChangeObservation::new(v_s, v_c, v_f, v_b, d).map_err(|e| Error::Validation {
            line,
            message: e.to_string(),
        })?;
        records.push(DecisionRecord { obs, label });
    }
    Ok(records)
}

pub fn write_dataset<T: Real, W: Write>(writer: W, records: &[DecisionRecord<T>]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(DATASET_HEADER)?;
    for r in records {
        wtr.write_record(&[
            r.obs.v_s.to_string(),
            r.obs.v_c.to_string(),
            r.obs.v_f.to_string(),
            r.obs.v_b.to_string(),
            r.obs.d.to_string(),
            r.label.code().to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<dataset>", e))?;
    Ok(())
}

pub fn save_dataset<T: Real>(path: impl AsRef<Path>, records: &[DecisionRecord<T>]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset(file, records)
}

/// Logistic choice probability for a known net advantage.
pub fn probability_from_advantage<T: Real>(e_ck: T, k: T) -> T {
    let z = k * e_ck;
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let ez = z.exp();
        ez / (T::one() + ez)
    }
}

/// Probability that the driver changes lanes.
pub fn choice_probability<T: Real>(obs: &LaneChangeObservation<T>, params: &RegretParams<T>, k: T) -> Result<T> {
    if !(k > T::zero()) {
        return Err(Error::Domain(format!("temperature must be > 0, got {k}")));
    }
    let trace = net_advantage(obs, params)?;
    Ok(probability_from_advantage(trace.e_ck, k))
}

fn record_nll<T: Real>(record: &DecisionRecord<T>, params: &RegretParams<T>, k: T) -> Result<T> {
    let p_change = choice_probability(&record.obs, params, k)?;
    let p_label = match record.label {
        LaneDecision::ChangeLane => p_change,
        LaneDecision::KeepLane => T::one() - p_change,
    };
    let floor = T::lit(PROB_FLOOR);
    Ok(-p_label.max(floor).min(T::one() - floor).ln())
}

pub fn negative_log_likelihood<T: Real>(dataset: &[DecisionRecord<T>], params: &RegretParams<T>, k: T) -> Result<T> {
    if dataset.is_empty() {
        return Err(Error::Domain("negative log-likelihood of an empty dataset".into()));
    }
    dataset.iter().try_fold(T::zero(), |acc, r| Ok(acc + record_nll(r, params, k)?))
}

/// Fraction of records whose modelled decision matches the label.
pub fn evaluate_accuracy<T: Real>(params: &RegretParams<T>, dataset: &[DecisionRecord<T>]) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Domain("accuracy of an empty dataset".into()));
    }
    let mut hits = 0usize;
    for r in dataset {
        if net_advantage(&r.obs, params)?.decision == r.label {
            hits += 1;
        }
    }
    Ok(hits as f64 / dataset.len() as f64)
}

/// Samples one observation from the documented ranges.
pub fn sample_observation<T: Real, R: Rng + ?Sized>(rng: &mut R) -> LaneChangeObservation<T> {
    let v_s = rng.gen_range(3.0..=10.0);
    let v_c = rng.gen_range(3.0..=10.0);
    let v_f = rng.gen_range(8.0..=17.0);
    let v_b = rng.gen_range(v_s..=17.0);
    let d = rng.gen_range(0.0..=60.0);
    LaneChangeObservation::new(T::lit(v_s), T::lit(v_c), T::lit(v_f), T::lit(v_b), T::lit(d))
        .expect("sampling ranges satisfy the observation invariants")
}

/// Draws `n` observations, labels them with `truth` and flips each label
/// independently with probability `flip_rate`.
pub fn generate_synthetic_dataset<T: Real>(
    truth: &RegretParams<T>,
    n: usize,
    flip_rate: f64,
    seed: u64,
) -> Result<Vec<DecisionRecord<T>>> {
    if n == 0 {
        return Err(Error::Domain("dataset size must be > 0".into()));
    }
    if !(0.0..=1.0).contains(&flip_rate) {
        return Err(Error::Domain(format!("flip rate must lie in [0, 1], got {flip_rate}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let obs = sample_observation(&mut rng);
            let mut label = net_advantage(&obs, truth)?.decision;
            if rng.gen_bool(flip_rate) {
                label = label.flipped();
            }
            Ok(DecisionRecord { obs, label })
        })
        .collect()
}

fn unpack<T: Real>(theta: &[f64; N_FREE]) -> (RegretParams<T>, T) {
    let e = |i: usize| T::lit(theta[i].exp());
    (
        RegretParams {
            sigma1: e(0),
            sigma2: e(1),
            sigma3: e(2),
            eta1: e(3),
            beta1: e(4),
            beta2: e(5),
            tau_s: e(6),
        },
        e(7),
    )
}

/// Mean NLL at `theta`; `+inf` wherever the model cannot be evaluated.
fn objective<T: Real>(dataset: &[DecisionRecord<T>], theta: &[f64; N_FREE]) -> f64 {
    let (params, k) = unpack::<T>(theta);
    if params.validate().is_err() || !(k > T::zero() && k.is_finite()) {
        return f64::INFINITY;
    }
    match negative_log_likelihood(dataset, &params, k) {
        Ok(nll) if nll.is_finite() => nll.as_f64() / dataset.len() as f64,
        _ => f64::INFINITY,
    }
}

fn central_gradient<T: Real>(dataset: &[DecisionRecord<T>], theta: &[f64; N_FREE]) -> Option<[f64; N_FREE]> {
    let mut grad = [0.0; N_FREE];
    for i in 0..N_FREE {
        let mut plus = *theta;
        let mut minus = *theta;
        plus[i] += GRADIENT_STEP;
        minus[i] -= GRADIENT_STEP;
        let g = (objective(dataset, &plus) - objective(dataset, &minus)) / (2.0 * GRADIENT_STEP);
        if !g.is_finite() {
            return None;
        }
        grad[i] = g;
    }
    Some(grad)
}

fn initial_theta(config: &FitConfig, rng: &mut ChaCha8Rng, jitter: bool) -> [f64; N_FREE] {
    // Neutral starting point: mild regret, linear weighting, a few seconds
    // of lane-change time.
    let base = [1.0, 0.5, 0.5, 100.0, 1.0, 1.0, 3.0, config.temperature];
    let mut theta = base.map(f64::ln);
    if jitter {
        for t in theta.iter_mut() {
            *t += rng.gen_range(-1.5..1.5);
        }
    }
    theta
}

struct Run {
    theta: [f64; N_FREE],
    value: f64,
    iterations: usize,
}

/// Gradient descent with backtracking line search. `None` when the starting
/// point or a gradient is non-finite.
fn descend<T: Real>(dataset: &[DecisionRecord<T>], start: [f64; N_FREE], config: &FitConfig) -> Option<Run> {
    let mut theta = start;
    let mut value = objective(dataset, &theta);
    if !value.is_finite() {
        return None;
    }
    let mut step = config.learning_rate;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        iterations += 1;
        let grad = central_gradient(dataset, &theta)?;
        let norm2: f64 = grad.iter().map(|g| g * g).sum();
        if norm2 == 0.0 {
            break;
        }
        let mut accepted = None;
        for _ in 0..50 {
            let mut candidate = theta;
            for (c, g) in candidate.iter_mut().zip(grad) {
                *c -= step * g;
            }
            let v = objective(dataset, &candidate);
            if v.is_finite() && v <= value - 1e-4 * step * norm2 {
                accepted = Some((candidate, v));
                break;
            }
            step *= 0.5;
        }
        let Some((candidate, v)) = accepted else { break };
        let improvement = value - v;
        theta = candidate;
        value = v;
        step *= 2.0;
        if improvement < config.tolerance {
            break;
        }
    }
    Some(Run {
        theta,
        value,
        iterations,
    })
}

fn restart_seed(seed: u64, restart: usize, attempt: usize) -> u64 {
    seed ^ (restart as u64)
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((attempt as u64).wrapping_mul(0xD1B5_4A32_D192_ED03))
}

pub fn fit<T: Real>(dataset: &[DecisionRecord<T>], config: &FitConfig) -> Result<FitResult<T>> {
    if dataset.is_empty() {
        return Err(Error::Domain("cannot fit an empty dataset".into()));
    }
    config.validate()?;

    let mut best: Option<(usize, Run)> = None;
    let mut diverged = 0;
    for restart in 0..config.restarts {
        for attempt in 0..RETRIES_PER_RESTART {
            let mut rng = ChaCha8Rng::seed_from_u64(restart_seed(config.seed, restart, attempt));
            let start = initial_theta(config, &mut rng, restart > 0 || attempt > 0);
            match descend(dataset, start, config) {
                Some(run) => {
                    if best.as_ref().is_none_or(|(_, b)| run.value < b.value) {
                        best = Some((restart, run));
                    }
                    break;
                }
                None => diverged += 1,
            }
        }
    }

    let (best_restart, run) =
        best.ok_or_else(|| Error::Diverged(format!("all {} restarts produced a non-finite likelihood", config.restarts)))?;
    let (params, k) = unpack::<T>(&run.theta);
    let nll = negative_log_likelihood(dataset, &params, k)?;
    Ok(FitResult {
        params,
        k,
        nll,
        accuracy: evaluate_accuracy(&params, dataset)?,
        iterations: run.iterations,
        best_restart,
        diverged_runs: diverged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pilot() -> RegretParams<f64> {
        RegretParams::pilot_driver()
    }

    fn record(d: f64, label: LaneDecision) -> DecisionRecord<f64> {
        DecisionRecord {
            obs: LaneChangeObservation::new(5.56, 5.56, 12.5, 12.5, d).unwrap(),
            label,
        }
    }

    #[test]
    fn parses_scenario_row() {
        let data = "v_s,v_c,v_f,v_b,d,decision\n5.56,5.56,12.5,12.5,10,K\n";
        let rows: Vec<DecisionRecord<f64>> = read_dataset(data.as_bytes()).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].label, LaneDecision::KeepLane);
        assert_eq!(rows[0].obs, LaneChangeObservation::new(5.56, 5.56, 12.5, 12.5, 10.0).unwrap());
    }

    #[test]
    fn header_only_is_empty() {
        let rows: Vec<DecisionRecord<f64>> = read_dataset("v_s,v_c,v_f,v_b,d,decision\n".as_bytes()).unwrap();
        assert!(rows.is_empty());
    }

    #[test]
    fn negative_gap_is_a_validation_error_with_line() {
        let data = "v_s,v_c,v_f,v_b,d,decision\n5,5,10,10,3,C\n5.56,5.56,12.5,12.5,-1,K\n";
        match read_dataset::<f64, _>(data.as_bytes()) {
            Err(Error::Validation { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_rows_are_parse_errors() {
        let bad_number = "v_s,v_c,v_f,v_b,d,decision\n5,five,10,10,3,C\n";
        assert!(matches!(read_dataset::<f64, _>(bad_number.as_bytes()), Err(Error::Parse { line: 2, .. })));
        let bad_label = "v_s,v_c,v_f,v_b,d,decision\n5,5,10,10,3,X\n";
        assert!(matches!(read_dataset::<f64, _>(bad_label.as_bytes()), Err(Error::Parse { line: 2, .. })));
        let short = "v_s,v_c,v_f,v_b,d,decision\n5,5,10,10,3\n";
        assert!(matches!(read_dataset::<f64, _>(short.as_bytes()), Err(Error::Parse { line: 2, .. })));
        let bad_header = "a,b,c,d,e,f\n";
        assert!(matches!(read_dataset::<f64, _>(bad_header.as_bytes()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn choice_probability_values() {
        assert_eq!(probability_from_advantage(0.0, 3.0), 0.5);
        let p = choice_probability(&record(10.0, LaneDecision::KeepLane).obs, &pilot(), 3.0).unwrap();
        assert!((p - 0.006_793_927_370_906_714).abs() < 1e-12);
        assert!(probability_from_advantage(0.5, 1e6) > 1.0 - 1e-12);
        assert!(choice_probability(&record(10.0, LaneDecision::KeepLane).obs, &pilot(), 0.0).is_err());
    }

    #[test]
    fn nll_values() {
        // A ChangeLane label at p = 0.5 costs ln 2.
        let p = pilot();
        let flat = RegretParams { sigma1: 0.0, sigma3: 0.0, ..p };
        let nll = negative_log_likelihood(&[record(10.0, LaneDecision::ChangeLane)], &flat, 1.0).unwrap();
        assert!((nll - std::f64::consts::LN_2).abs() < 1e-12);

        let exact: Vec<_> = [5.0, 10.0, 30.0, 50.0]
            .iter()
            .map(|&d| {
                let mut r = record(d, LaneDecision::KeepLane);
                r.label = crate::regret::decide(&r.obs, &p).unwrap();
                r
            })
            .collect();
        assert!(negative_log_likelihood(&exact, &p, 200.0).unwrap() < 1e-6);

        // Independent per-record sum.
        let pair = [record(10.0, LaneDecision::KeepLane), record(30.0, LaneDecision::KeepLane)];
        let e_small = -1.661_636_329_440_428_6_f64;
        let e_wide = 2.029_099_434_768_89_f64;
        let k = 0.7;
        let expected = -(1.0 - 1.0 / (1.0 + (-k * e_small).exp())).ln() - (1.0 - 1.0 / (1.0 + (-k * e_wide).exp())).ln();
        let got = negative_log_likelihood(&pair, &p, k).unwrap();
        assert!((got - expected).abs() < 1e-10, "{got} vs {expected}");

        assert!(negative_log_likelihood::<f64>(&[], &p, 1.0).is_err());
    }

    #[test]
    fn nll_is_clamped() {
        let p = pilot();
        let wrong = [record(30.0, LaneDecision::KeepLane)];
        let nll = negative_log_likelihood(&wrong, &p, 1e6).unwrap();
        assert!(nll.is_finite());
        assert!((nll + PROB_FLOOR.ln()).abs() < 1e-3);
    }

    #[test]
    fn accuracy_extremes() {
        let p = pilot();
        let data = generate_synthetic_dataset(&p, 50, 0.0, 3).unwrap();
        assert_eq!(evaluate_accuracy(&p, &data).unwrap(), 1.0);
        let inverted: Vec<_> = data
            .iter()
            .map(|r| DecisionRecord {
                label: r.label.flipped(),
                ..*r
            })
            .collect();
        assert_eq!(evaluate_accuracy(&p, &inverted).unwrap(), 0.0);
        assert!(evaluate_accuracy::<f64>(&p, &[]).is_err());
    }

    #[test]
    fn synthetic_generation() {
        let p = pilot();
        let a = generate_synthetic_dataset(&p, 10, 0.0, 11).unwrap();
        assert_eq!(a.len(), 10);
        for r in &a {
            assert_eq!(crate::regret::decide(&r.obs, &p).unwrap(), r.label);
            assert!((3.0..=10.0).contains(&r.obs.v_s) && (3.0..=10.0).contains(&r.obs.v_c));
            assert!((8.0..=17.0).contains(&r.obs.v_f) && (0.0..=60.0).contains(&r.obs.d));
            assert!(r.obs.v_b >= r.obs.v_s && r.obs.v_b <= 17.0);
        }
        assert_eq!(a, generate_synthetic_dataset(&p, 10, 0.0, 11).unwrap());

        let noisy = generate_synthetic_dataset(&p, 1000, 0.1, 12).unwrap();
        let flipped = noisy
            .iter()
            .filter(|r| crate::regret::decide(&r.obs, &p).unwrap() != r.label)
            .count() as f64
            / 1000.0;
        assert!((0.07..=0.13).contains(&flipped), "flipped fraction {flipped}");

        assert!(generate_synthetic_dataset(&p, 0, 0.0, 1).is_err());
        assert!(generate_synthetic_dataset(&p, 5, 1.5, 1).is_err());
    }

    #[test]
    fn all_keep_labels_fit_perfectly() {
        let p = pilot();
        // Records with a non-closing approacher have p̂ = 1 and therefore
        // e_ck > 0 for every parameter choice, so only closing ones are kept.
        let data: Vec<_> = generate_synthetic_dataset(&p, 80, 0.0, 4)
            .unwrap()
            .into_iter()
            .filter(|r| r.obs.v_c < r.obs.v_f)
            .map(|r| DecisionRecord {
                label: LaneDecision::KeepLane,
                ..r
            })
            .collect();
        let config = FitConfig {
            restarts: 2,
            max_iterations: 200,
            ..FitConfig::default()
        };
        let result = fit(&data, &config).unwrap();
        assert_eq!(result.accuracy, 1.0);
        assert!(result.params.validate().is_ok());
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(fit::<f64>(&[], &FitConfig::default()).is_err());
        let data = generate_synthetic_dataset(&pilot(), 5, 0.0, 1).unwrap();
        let bad = FitConfig {
            restarts: 0,
            ..FitConfig::default()
        };
        assert!(matches!(fit(&data, &bad), Err(Error::Config(_))));
    }

    #[test]
    fn fitted_model_json_is_flat() {
        let model = FittedModel {
            params: pilot(),
            k: 2.5,
        };
        let json = serde_json::to_value(model).unwrap();
        let obj = json.as_object().unwrap();
        assert_eq!(obj.len(), 8);
        for key in ["sigma1", "sigma2", "sigma3", "eta1", "beta1", "beta2", "tau_s", "k"] {
            assert!(obj.contains_key(key), "{key}");
        }
        let back: FittedModel<f64> = serde_json::from_value(json).unwrap();
        assert_eq!(back, model);
    }
}
