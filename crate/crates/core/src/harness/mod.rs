//! End-to-end workflows behind the command-line tool.

mod config;
mod run;
mod survey;

pub use config::TrainConfig;
pub use run::{
    compare, eval_seeds, evaluate, evaluate_network, run_greedy_episode, train, ArmResult, Comparison, EpisodeLog,
    EvalPoint, EvalSummary, RunArtifacts, CHECKPOINT, CONFIG_SNAPSHOT, CONV_ARM, EVAL_CSV, SAFE_ARM, TRAIN_CSV,
    VETO_LOG,
};
pub use survey::{calibrate, elicit, score};
