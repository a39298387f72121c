//! Training, evaluation and the shielded/unshielded comparison.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::{epsilon_at, greedy_action, load_weights, Agent, Experience};
use crate::error::{Error, Result};
use crate::neural::Mlp;
use crate::sim::{extract_affordances, init_scene_with, step, Scene, SimConfig, Terminal};
use crate::supervisor::{supervise, write_veto_line, SupervisorConfig, VetoEvent};

use super::TrainConfig;

pub const TRAIN_CSV: &str = "train.csv";
pub const EVAL_CSV: &str = "eval.csv";
pub const VETO_LOG: &str = "vetoes.jsonl";
pub const CHECKPOINT: &str = "policy.json";
pub const CONFIG_SNAPSHOT: &str = "config.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    /// 1-based epoch number.
    pub epoch: u64,
    pub total_reward: f64,
    pub steps: u32,
    pub terminal: Terminal,
    pub vetoes: u32,
    pub epsilon: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub mean_return: f64,
    /// Population standard deviation of the episode returns.
    pub std_return: f64,
    pub min_return: f64,
    pub max_return: f64,
    pub collisions: usize,
    pub returns: Vec<f64>,
    pub terminals: Vec<Terminal>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalPoint {
    /// Epochs completed when the evaluation ran.
    pub epoch: u64,
    pub summary: EvalSummary,
}

#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub train_csv: PathBuf,
    pub eval_csv: PathBuf,
    pub veto_log: PathBuf,
    pub checkpoint: PathBuf,
    pub config_snapshot: PathBuf,
    pub episodes: Vec<EpisodeLog>,
    pub evaluations: Vec<EvalPoint>,
    pub veto_count: u64,
    pub buffer_insertions: u64,
}

impl RunArtifacts {
    pub fn collisions(&self) -> usize {
        self.episodes.iter().filter(|e| e.terminal == Terminal::Collision).count()
    }

    pub fn collision_ratio(&self) -> f64 {
        self.collisions() as f64 / self.episodes.len().max(1) as f64
    }
}

/// Stream position of a seed within a run, so episodes draw independent
/// scene jitter.
fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    // SplitMix64 finalizer.
    let mut z = master
        .wrapping_add(stream.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(index.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const TRAIN_STREAM: u64 = 1;
const EVAL_STREAM: u64 = 2;

pub fn eval_seeds(master: u64, episodes: usize) -> Vec<u64> {
    (0..episodes as u64).map(|i| derive_seed(master, EVAL_STREAM, i)).collect()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn io_ctx<T>(path: &Path, r: std::io::Result<T>) -> Result<T> {
    r.map_err(|e| Error::io(path, e))
}

/// Holds `action` for `repeat` simulation steps or until the episode ends.
fn execute(scene: Scene, action: crate::sim::EgoAction, repeat: u32) -> Result<(Scene, f64, u32, Option<Terminal>)> {
    let mut scene = scene;
    let mut reward = 0.0;
    let mut steps = 0;
    for _ in 0..repeat {
        let out = step(&scene, action)?;
        reward += out.reward.total;
        steps += 1;
        scene = out.scene;
        if out.terminal.is_some() {
            return Ok((scene, reward, steps, out.terminal));
        }
    }
    Ok((scene, reward, steps, None))
}

/// One greedy episode. Returns the summed reward and how it ended.
pub fn run_greedy_episode(
    net: &Mlp<f64>,
    sim: &SimConfig,
    supervisor: &SupervisorConfig,
    action_repeat: u32,
    seed: u64,
) -> Result<(f64, Terminal)> {
    let mut scene = init_scene_with(sim, seed);
    let mut total = 0.0;
    loop {
        let s = extract_affordances(&scene);
        let proposed = greedy_action(net, &s)?;
        // The stored-penalty value is irrelevant when nothing is stored.
        let executed = supervise(&scene, proposed, &sim.profile, supervisor, 0.0).executed;
        let (next, reward, _, terminal) = execute(scene, executed, action_repeat)?;
        total += reward;
        scene = next;
        if let Some(t) = terminal {
            return Ok((total, t));
        }
    }
}

pub fn evaluate_network(
    net: &Mlp<f64>,
    sim: &SimConfig,
    supervisor: &SupervisorConfig,
    action_repeat: u32,
    seeds: &[u64],
) -> Result<EvalSummary> {
    if seeds.is_empty() {
        return Err(Error::Config("evaluation needs at least one episode".into()));
    }
    let mut returns = Vec::with_capacity(seeds.len());
    let mut terminals = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let (r, t) = run_greedy_episode(net, sim, supervisor, action_repeat, seed)?;
        returns.push(r);
        terminals.push(t);
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    Ok(EvalSummary {
        episodes: returns.len(),
        mean_return: mean,
        std_return: var.sqrt(),
        min_return: returns.iter().copied().fold(f64::INFINITY, f64::min),
        max_return: returns.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        collisions: terminals.iter().filter(|t| **t == Terminal::Collision).count(),
        returns,
        terminals,
    })
}

/// Greedy rollouts of a saved policy.
pub fn evaluate(checkpoint: &Path, episodes: usize, seed: u64, config: &TrainConfig) -> Result<EvalSummary> {
    if episodes == 0 {
        return Err(Error::Config("evaluation needs at least one episode".into()));
    }
    let net = load_weights(checkpoint)?;
    evaluate_network(
        &net,
        &config.sim,
        &config.supervisor,
        config.agent.action_repeat,
        &eval_seeds(seed, episodes),
    )
}

/// Trains one agent and writes its artifacts into `out_dir`.
pub fn train(config: &TrainConfig, out_dir: &Path) -> Result<RunArtifacts> {
    config.validate()?;
    io_ctx(out_dir, std::fs::create_dir_all(out_dir))?;
    let paths = [TRAIN_CSV, EVAL_CSV, VETO_LOG, CHECKPOINT, CONFIG_SNAPSHOT].map(|f| out_dir.join(f));
    let [train_path, eval_path, veto_path, ckpt_path, snapshot_path] = paths;
    io_ctx(&snapshot_path, std::fs::write(&snapshot_path, config.to_toml_string()))?;

    let mut train_csv = csv::Writer::from_writer(create(&train_path)?);
    train_csv.write_record(["epoch", "return", "steps", "terminal", "vetoes", "epsilon"])?;
    let mut eval_csv = csv::Writer::from_writer(create(&eval_path)?);
    eval_csv.write_record(["epoch", "mean_return", "collisions"])?;
    let mut veto_log = create(&veto_path)?;

    let mut agent = Agent::new(config.agent.clone(), config.seed)?;
    let seeds = eval_seeds(config.seed, config.eval_episodes);
    let repeat = config.agent.action_repeat;
    let r_col = config.agent.r_col;
    let mut episodes = Vec::with_capacity(config.epochs as usize);
    let mut evaluations = Vec::new();
    let mut veto_count = 0;

    for epoch in 0..config.epochs {
        agent.epoch = epoch;
        let epsilon = epsilon_at(epoch, &config.agent);
        let mut scene = init_scene_with(&config.sim, derive_seed(config.seed, TRAIN_STREAM, epoch));
        let mut total = 0.0;
        let mut vetoes = 0;
        let terminal = loop {
            let state = extract_affordances(&scene);
            let proposed = agent.select_action(&state, epsilon)?;
            let verdict = supervise(&scene, proposed, &config.sim.profile, &config.supervisor, r_col);
            if let Some(unsafe_exp) = verdict.unsafe_experience {
                let (original, v) = verdict.vetoed.expect("unsafe experience implies a veto");
                write_veto_line(
                    &mut veto_log,
                    &VetoEvent {
                        epoch: epoch + 1,
                        step: scene.step,
                        original,
                        verdict: v,
                        replacement: verdict.executed,
                    },
                )?;
                agent.store(unsafe_exp);
                vetoes += 1;
            }

            let action = verdict.executed;
            let (next, reward, _, terminal) = execute(scene, action, repeat)?;
            total += reward;
            // Crashing into a vehicle or leaving the road stores the fixed
            // penalty, the same one a vetoed action receives. The goal keeps
            // the reward it earned. The step cap is not a property of the
            // state, so it bootstraps like any other transition.
            let (stored, next_state) = match terminal {
                Some(Terminal::Collision | Terminal::OffRoad) => (r_col, None),
                Some(Terminal::GoalReached) => (reward, None),
                Some(Terminal::TimeLimit) | None => (reward, Some(extract_affordances(&next))),
            };
            agent.store(Experience {
                state,
                action,
                reward: stored,
                next: next_state,
            });
            if agent.ready() {
                agent.train_step().map_err(|e| match e {
                    Error::Diverged(m) => Error::Diverged(format!("epoch {}: {m}", epoch + 1)),
                    other => other,
                })?;
            }
            scene = next;
            if let Some(t) = terminal {
                break t;
            }
        };
        veto_count += vetoes as u64;

        let log = EpisodeLog {
            epoch: epoch + 1,
            total_reward: total,
            steps: scene.step,
            terminal,
            vetoes,
            epsilon,
        };
        train_csv.write_record([
            log.epoch.to_string(),
            log.total_reward.to_string(),
            log.steps.to_string(),
            log.terminal.name().to_string(),
            log.vetoes.to_string(),
            log.epsilon.to_string(),
        ])?;
        episodes.push(log);

        if (epoch + 1) % config.eval_period == 0 {
            let summary = evaluate_network(&agent.online, &config.sim, &config.supervisor, repeat, &seeds)?;
            eval_csv.write_record([
                (epoch + 1).to_string(),
                summary.mean_return.to_string(),
                summary.collisions.to_string(),
            ])?;
            evaluations.push(EvalPoint {
                epoch: epoch + 1,
                summary,
            });
        }
    }

    io_ctx(&train_path, train_csv.flush())?;
    io_ctx(&eval_path, eval_csv.flush())?;
    io_ctx(&veto_path, veto_log.flush())?;
    agent.epoch = config.epochs;
    agent.save_checkpoint(&ckpt_path)?;

    Ok(RunArtifacts {
        train_csv: train_path,
        eval_csv: eval_path,
        veto_log: veto_path,
        checkpoint: ckpt_path,
        config_snapshot: snapshot_path,
        episodes,
        evaluations,
        veto_count,
        buffer_insertions: agent.buffer.inserted(),
    })
}

#[derive(Clone, Debug)]
pub struct ArmResult {
    pub name: &'static str,
    pub epochs: u64,
    pub collisions: usize,
    pub ratio: f64,
    pub run: RunArtifacts,
}

#[derive(Clone, Debug)]
pub struct Comparison {
    /// Shielded arm first, unshielded second.
    pub arms: [ArmResult; 2],
    pub csv: PathBuf,
}

impl Comparison {
    pub fn table(&self) -> String {
        let mut out = format!("{:<8} {:>7} {:>11} {:>8}\n", "arm", "epochs", "collisions", "ratio");
        for a in &self.arms {
            out.push_str(&format!(
                "{:<8} {:>7} {:>11} {:>7.2}%\n",
                a.name,
                a.epochs,
                a.collisions,
                100.0 * a.ratio
            ));
        }
        out
    }
}

pub const SAFE_ARM: &str = "saferl";
pub const CONV_ARM: &str = "convrl";

/// Trains with and without the supervisor from the same seed and writes
/// a two-row summary to `comparison.csv`.
pub fn compare(config: &TrainConfig, out_dir: &Path) -> Result<Comparison> {
    let arm = |name: &'static str, enabled: bool| -> Result<ArmResult> {
        let mut c = config.clone();
        c.supervisor.enabled = enabled;
        let run = train(&c, &out_dir.join(name))?;
        Ok(ArmResult {
            name,
            epochs: c.epochs,
            collisions: run.collisions(),
            ratio: run.collision_ratio(),
            run,
        })
    };
    let arms = [arm(SAFE_ARM, true)?, arm(CONV_ARM, false)?];
    let csv_path = out_dir.join("comparison.csv");
    let mut w = csv::Writer::from_writer(create(&csv_path)?);
    w.write_record(["arm", "epochs", "collisions", "ratio"])?;
    for a in &arms {
        w.write_record([a.name.to_string(), a.epochs.to_string(), a.collisions.to_string(), a.ratio.to_string()])?;
    }
    io_ctx(&csv_path, w.flush())?;
    Ok(Comparison { arms, csv: csv_path })
}
