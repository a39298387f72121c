//! Double-DQN learner with uniform experience replay.

use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{adam_step, loss_and_grads, AdamState, Batch, Mlp};
use crate::sim::{AffordanceVector, EgoAction, AFFORDANCE_DIM};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub gamma: f64,
    /// Minibatch size K.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Epochs over which epsilon decays linearly.
    pub epsilon_anneal_epochs: u64,
    /// Gradient steps between target-network copies.
    pub target_sync: u64,
    /// Simulation steps per decision.
    pub action_repeat: u32,
    /// Reward stored for collisions and vetoed actions.
    pub r_col: f64,
    pub buffer_capacity: usize,
    pub hidden: Vec<usize>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            batch_size: 256,
            learning_rate: 1e-4,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_anneal_epochs: 1000,
            target_sync: 100,
            action_repeat: 2,
            r_col: -2000.0,
            buffer_capacity: 100_000,
            hidden: vec![64, 64],
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return fail("gamma must lie in (0, 1)");
        }
        if self.batch_size == 0 || self.target_sync == 0 || self.action_repeat == 0 {
            return fail("batch_size, target_sync and action_repeat must be >= 1");
        }
        if self.buffer_capacity < self.batch_size {
            return fail("buffer_capacity must be at least batch_size");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be > 0");
        }
        let eps_ok = |e: f64| (0.0..=1.0).contains(&e);
        if !eps_ok(self.epsilon_start) || !eps_ok(self.epsilon_end) || self.epsilon_end > self.epsilon_start {
            return fail("epsilon must satisfy 0 <= end <= start <= 1");
        }
        if !self.r_col.is_finite() || self.hidden.contains(&0) {
            return fail("r_col must be finite and hidden widths >= 1");
        }
        Ok(())
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![AFFORDANCE_DIM];
        dims.extend(&self.hidden);
        dims.push(EgoAction::ALL.len());
        dims
    }
}

/// Linear decay from `epsilon_start` to `epsilon_end`, then constant.
pub fn epsilon_at(epoch: u64, config: &AgentConfig) -> f64 {
    let frac = if config.epsilon_anneal_epochs == 0 {
        1.0
    } else {
        (epoch as f64 / config.epsilon_anneal_epochs as f64).min(1.0)
    };
    config.epsilon_start - (config.epsilon_start - config.epsilon_end) * frac
}

/// A stored transition. `next == None` marks a terminal transition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Experience {
    pub state: AffordanceVector,
    pub action: EgoAction,
    pub reward: f64,
    pub next: Option<AffordanceVector>,
}

impl Experience {
    pub fn is_terminal(&self) -> bool {
        self.next.is_none()
    }
}

#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    items: Vec<Experience>,
    capacity: usize,
    head: usize,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            items: Vec::with_capacity(capacity.min(4096)),
            capacity,
            head: 0,
            inserted: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Total pushes since creation, including evicted items.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn push(&mut self, e: Experience) {
        if self.items.len() < self.capacity {
            self.items.push(e);
        } else {
            self.items[self.head] = e;
            self.head = (self.head + 1) % self.capacity;
        }
        self.inserted += 1;
    }

    /// Items in insertion order, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        let (newer, older) = self.items.split_at(self.head);
        older.iter().chain(newer)
    }

    /// `k` draws, uniform with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<Vec<&Experience>> {
        if self.items.len() < k || k == 0 {
            return Err(Error::NotReady {
                have: self.items.len(),
                need: k.max(1),
            });
        }
        Ok((0..k).map(|_| &self.items[rng.gen_range(0..self.items.len())]).collect())
    }
}

pub fn store_experience(buffer: &mut ReplayBuffer, e: Experience) {
    buffer.push(e);
}

pub fn sample_minibatch<'a, R: Rng + ?Sized>(
    buffer: &'a ReplayBuffer,
    k: usize,
    rng: &mut R,
) -> Result<Vec<&'a Experience>> {
    buffer.sample(k, rng)
}

/// First index of the largest value.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn greedy_action(net: &Mlp<f64>, state: &AffordanceVector) -> Result<EgoAction> {
    let q = net.forward(state.as_slice())?;
    EgoAction::from_index(argmax(&q)).ok_or_else(|| Error::Shape(format!("network has {} outputs", q.len())))
}

/// Epsilon-greedy choice. A uniform draw in `[0, 1)` below `epsilon`
/// triggers exploration, so `epsilon = 0` is always greedy.
pub fn select_action<R: Rng + ?Sized>(
    net: &Mlp<f64>,
    state: &AffordanceVector,
    epsilon: f64,
    rng: &mut R,
) -> Result<EgoAction> {
    if rng.gen::<f64>() < epsilon {
        Ok(EgoAction::ALL[rng.gen_range(0..EgoAction::ALL.len())])
    } else {
        greedy_action(net, state)
    }
}

fn state_matrix<'a>(states: impl ExactSizeIterator<Item = &'a AffordanceVector>) -> Array2<f64> {
    let n = states.len();
    let flat: Vec<f64> = states.flat_map(|s| s.0).collect();
    Array2::from_shape_vec((n, AFFORDANCE_DIM), flat).expect("affordance rows have fixed width")
}

/// `r + gamma * Q_target(s', argmax_a Q_online(s', a))`, or `r` for
/// terminal transitions.
pub fn ddqn_targets(batch: &[&Experience], online: &Mlp<f64>, target: &Mlp<f64>, gamma: f64) -> Result<Vec<f64>> {
    let next: Vec<&AffordanceVector> = batch.iter().filter_map(|e| e.next.as_ref()).collect();
    let (q_online, q_target) = if next.is_empty() {
        (Array2::zeros((0, 0)), Array2::zeros((0, 0)))
    } else {
        let x = state_matrix(next.iter().copied());
        (online.forward_batch(x.view())?, target.forward_batch(x.view())?)
    };
    let mut row = 0;
    Ok(batch
        .iter()
        .map(|e| match e.next {
            None => e.reward,
            Some(_) => {
                let a = argmax(q_online.row(row).as_slice().expect("contiguous rows"));
                let y = e.reward + gamma * q_target[[row, a]];
                row += 1;
                y
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentCounters {
    pub grad_steps: u64,
    pub epoch: u64,
    pub epsilon: f64,
    pub seed: u64,
    pub adam_t: u64,
}

#[derive(Clone, Debug)]
pub struct Agent {
    pub config: AgentConfig,
    pub online: Mlp<f64>,
    pub target: Mlp<f64>,
    pub adam: AdamState<f64>,
    pub buffer: ReplayBuffer,
    pub grad_steps: u64,
    pub epoch: u64,
    pub seed: u64,
    rng: ChaCha8Rng,
}

impl Agent {
    pub fn new(config: AgentConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let online = Mlp::new(&config.layer_dims(), seed)?;
        Ok(Self::from_network(config, online, seed))
    }

    /// Agent around an existing network; the target starts as a copy.
    pub fn from_network(config: AgentConfig, online: Mlp<f64>, seed: u64) -> Self {
        let adam = AdamState::new(&online, config.learning_rate);
        Self {
            target: online.clone(),
            adam,
            buffer: ReplayBuffer::new(config.buffer_capacity),
            online,
            grad_steps: 0,
            epoch: 0,
            // Separate stream from the weight initialization.
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_a9e7),
            seed,
            config,
        }
    }

    pub fn epsilon(&self) -> f64 {
        epsilon_at(self.epoch, &self.config)
    }

    pub fn select_action(&mut self, state: &AffordanceVector, epsilon: f64) -> Result<EgoAction> {
        select_action(&self.online, state, epsilon, &mut self.rng)
    }

    pub fn store(&mut self, e: Experience) {
        self.buffer.push(e);
    }

    pub fn ready(&self) -> bool {
        self.buffer.len() >= self.config.batch_size
    }

    /// One gradient step on a fresh minibatch. Returns the batch loss.
    pub fn train_step(&mut self) -> Result<f64> {
        let batch = self.buffer.sample(self.config.batch_size, &mut self.rng)?;
        let targets = ddqn_targets(&batch, &self.online, &self.target, self.config.gamma)?;
        let inputs = state_matrix(batch.iter().map(|e| &e.state));
        let actions = batch.iter().map(|e| e.action.index()).collect();
        let batch = Batch::new(inputs, actions, targets)?;
        let grads = loss_and_grads(&self.online, &batch)?;
        adam_step(&mut self.online, &mut self.adam, &grads)?;
        if !self.online.is_finite() {
            return Err(Error::Diverged(format!("non-finite weights after step {}", self.grad_steps + 1)));
        }
        self.grad_steps += 1;
        if self.grad_steps.is_multiple_of(self.config.target_sync) {
            self.sync_target();
        }
        Ok(grads.loss)
    }

    pub fn sync_target(&mut self) {
        self.target = self.online.clone();
    }

    pub fn counters(&self) -> AgentCounters {
        AgentCounters {
            grad_steps: self.grad_steps,
            epoch: self.epoch,
            epsilon: self.epsilon(),
            seed: self.seed,
            adam_t: self.adam.t,
        }
    }

    /// Writes the online weights to `path` and the counters next to it
    /// with a `.meta.json` suffix.
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.online.to_json()?).map_err(|e| Error::io(path, e))?;
        let meta = sidecar_path(path);
        let text = serde_json::to_string_pretty(&self.counters())?;
        std::fs::write(&meta, text).map_err(|e| Error::io(meta, e))
    }
}

pub fn sidecar_path(weights: &Path) -> std::path::PathBuf {
    let mut name = weights.file_stem().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    weights.with_file_name(name)
}

/// Reads a weights file written by [`Agent::save_checkpoint`].
pub fn load_weights(path: &Path) -> Result<Mlp<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let net = Mlp::from_json(&text)?;
    if net.input_dim() != AFFORDANCE_DIM || net.output_dim() != EgoAction::ALL.len() {
        return Err(Error::Shape(format!(
            "checkpoint maps {} inputs to {} outputs, expected {AFFORDANCE_DIM} to {}",
            net.input_dim(),
            net.output_dim(),
            EgoAction::ALL.len()
        )));
    }
    Ok(net)
}

pub fn load_counters(weights: &Path) -> Result<AgentCounters> {
    let meta = sidecar_path(weights);
    let text = std::fs::read_to_string(&meta).map_err(|e| Error::io(&meta, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Dense;
    use ndarray::{arr1, arr2, Array1};

    fn state(v: f64) -> AffordanceVector {
        AffordanceVector([v; AFFORDANCE_DIM])
    }

    fn exp(v: f64, action: EgoAction, reward: f64, next: Option<f64>) -> Experience {
        Experience {
            state: state(v),
            action,
            reward,
            next: next.map(state),
        }
    }

    /// Single linear layer: Q = W s + b with s repeated across inputs.
    fn linear(rows: &[[f64; 1]], bias: &[f64]) -> Mlp<f64> {
        let out = rows.len();
        let mut w = Array2::zeros((out, AFFORDANCE_DIM));
        for (i, r) in rows.iter().enumerate() {
            w[[i, 0]] = r[0];
        }
        Mlp::from_layers(vec![Dense {
            weights: w,
            bias: Array1::from(bias.to_vec()),
        }])
        .unwrap()
    }

    #[test]
    fn epsilon_schedule() {
        let c = AgentConfig::default();
        assert_eq!(epsilon_at(0, &c), 1.0);
        assert!((epsilon_at(500, &c) - 0.525).abs() < 1e-12);
        assert!((epsilon_at(1000, &c) - 0.05).abs() < 1e-12);
        assert!((epsilon_at(5000, &c) - 0.05).abs() < 1e-12);
        let mut prev = 1.0;
        for e in 0..1200 {
            let eps = epsilon_at(e, &c);
            assert!(eps <= prev && (0.05 - 1e-12..=1.0).contains(&eps));
            prev = eps;
        }
    }

    #[test]
    fn greedy_and_ties() {
        let net = linear(&[[0.0]; 5], &[0.0, 0.0, 3.0, 1.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(select_action(&net, &state(0.3), 0.0, &mut rng).unwrap(), EgoAction::Accelerate);
        }
        let flat = linear(&[[0.0]; 5], &[0.0; 5]);
        assert_eq!(select_action(&flat, &state(0.3), 0.0, &mut rng).unwrap(), EgoAction::LaneLeft);
    }

    #[test]
    fn exploration_is_uniform() {
        let net = linear(&[[0.0]; 5], &[0.0, 0.0, 3.0, 1.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 100_000;
        let mut counts = [0usize; 5];
        for _ in 0..n {
            counts[select_action(&net, &state(0.0), 1.0, &mut rng).unwrap().index()] += 1;
        }
        let expected = n as f64 / 5.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 99.9% quantile of chi-square with 4 degrees of freedom.
        assert!(chi2 < 18.47, "chi2 = {chi2}, counts = {counts:?}");
    }

    #[test]
    fn ring_buffer_evicts_oldest() {
        let mut b = ReplayBuffer::new(3);
        for i in 0..4 {
            store_experience(&mut b, exp(i as f64, EgoAction::Maintain, i as f64, None));
        }
        assert_eq!(b.len(), 3);
        assert_eq!(b.inserted(), 4);
        let rewards: Vec<f64> = b.iter().map(|e| e.reward).collect();
        assert_eq!(rewards, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn sampling() {
        let mut b = ReplayBuffer::new(10);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(b.sample(1, &mut rng), Err(Error::NotReady { have: 0, need: 1 })));
        b.push(exp(0.5, EgoAction::Maintain, 0.0, Some(0.1)));
        assert_eq!(sample_minibatch(&b, 1, &mut rng).unwrap()[0].next, Some(state(0.1)));

        for i in 1..10 {
            b.push(exp(0.0, EgoAction::Maintain, i as f64, None));
        }
        let draw = |seed| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            b.sample(10, &mut r).unwrap().iter().map(|e| e.reward).collect::<Vec<_>>()
        };
        assert_eq!(draw(4), draw(4));

        let mut counts = [0usize; 10];
        for _ in 0..10_000 {
            for e in b.sample(10, &mut rng).unwrap() {
                counts[e.reward as usize] += 1;
            }
        }
        let expected = 10_000.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 99.9% quantile of chi-square with 9 degrees of freedom.
        assert!(chi2 < 27.88, "chi2 = {chi2}");
    }

    #[test]
    fn terminal_target_is_reward() {
        let net = linear(&[[1.0]; 5], &[5.0; 5]);
        let e = exp(0.2, EgoAction::Decelerate, -2000.0, None);
        assert_eq!(ddqn_targets(&[&e], &net, &net, 0.99).unwrap(), vec![-2000.0]);
    }

    #[test]
    fn double_estimator_uses_target_values() {
        // Online prefers action 1, target values action 1 at 10 and action 0 at 50.
        let online = Mlp::from_layers(vec![Dense {
            weights: arr2(&[[0.0; AFFORDANCE_DIM], [0.0; AFFORDANCE_DIM]]),
            bias: arr1(&[1.0, 2.0]),
        }])
        .unwrap();
        let target = Mlp::from_layers(vec![Dense {
            weights: arr2(&[[0.0; AFFORDANCE_DIM], [0.0; AFFORDANCE_DIM]]),
            bias: arr1(&[50.0, 10.0]),
        }])
        .unwrap();
        let e = exp(0.0, EgoAction::LaneLeft, 1.0, Some(0.0));
        let y = ddqn_targets(&[&e], &online, &target, 0.5).unwrap();
        assert_eq!(y, vec![1.0 + 0.5 * 10.0]);
        let dqn = ddqn_targets(&[&e], &target, &target, 0.5).unwrap();
        assert_eq!(dqn, vec![1.0 + 0.5 * 50.0]);
    }

    fn small_config() -> AgentConfig {
        AgentConfig {
            batch_size: 1,
            learning_rate: 1e-3,
            hidden: vec![16],
            buffer_capacity: 10,
            ..AgentConfig::default()
        }
    }

    #[test]
    fn single_transition_converges() {
        let mut agent = Agent::new(small_config(), 11).unwrap();
        let e = exp(0.3, EgoAction::Accelerate, 4.0, None);
        agent.store(e.clone());
        let mut loss = f64::INFINITY;
        for _ in 0..5000 {
            loss = agent.train_step().unwrap();
        }
        assert!(loss < 1e-3, "loss {loss}");
        let q = agent.online.forward(e.state.as_slice()).unwrap();
        assert!((q[EgoAction::Accelerate.index()] - 4.0).abs() < 0.05);
    }

    #[test]
    fn target_sync_schedule() {
        let mut agent = Agent::new(
            AgentConfig {
                target_sync: 3,
                ..small_config()
            },
            2,
        )
        .unwrap();
        agent.store(exp(0.1, EgoAction::Maintain, 1.0, Some(0.2)));
        let initial = agent.target.clone();
        agent.train_step().unwrap();
        agent.train_step().unwrap();
        assert_eq!(agent.target, initial);
        assert_ne!(agent.online, initial);
        agent.train_step().unwrap();
        assert_eq!(agent.target, agent.online);
        let synced = agent.target.clone();
        agent.train_step().unwrap();
        assert_eq!(agent.target, synced);
        agent.sync_target();
        agent.sync_target();
        assert_eq!(agent.target, agent.online);
    }

    #[test]
    fn zero_loss_leaves_weights() {
        let mut agent = Agent::new(small_config(), 4).unwrap();
        let s = state(0.25);
        let q = agent.online.forward(s.as_slice()).unwrap();
        agent.store(Experience {
            state: s,
            action: EgoAction::Maintain,
            reward: q[EgoAction::Maintain.index()],
            next: None,
        });
        let before = agent.online.clone();
        agent.train_step().unwrap();
        assert_eq!(agent.online, before);
        assert_eq!(agent.adam.t, 1);
    }

    #[test]
    fn not_ready_propagates() {
        let mut agent = Agent::new(AgentConfig { batch_size: 4, ..small_config() }, 0).unwrap();
        assert!(matches!(agent.train_step(), Err(Error::NotReady { have: 0, need: 4 })));
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.json");
        let mut agent = Agent::new(small_config(), 8).unwrap();
        agent.epoch = 12;
        agent.save_checkpoint(&path).unwrap();
        assert_eq!(load_weights(&path).unwrap(), agent.online);
        let c = load_counters(&path).unwrap();
        assert_eq!((c.epoch, c.seed), (12, 8));
        assert!(dir.path().join("policy.meta.json").exists());
    }

    #[test]
    fn config_rejects_bad_values() {
        for bad in [
            AgentConfig { gamma: 1.0, ..AgentConfig::default() },
            AgentConfig { batch_size: 0, ..AgentConfig::default() },
            AgentConfig { target_sync: 0, ..AgentConfig::default() },
            AgentConfig { epsilon_end: 0.5, epsilon_start: 0.4, ..AgentConfig::default() },
            AgentConfig { buffer_capacity: 10, ..AgentConfig::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
