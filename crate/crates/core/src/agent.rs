//! Q-learning over extended action sets with open-loop macro execution.

use std::collections::{BTreeMap, HashMap};

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{Cell, Environment, McState, MountainCarParams};
use crate::error::{Error, Result};
use crate::types::{ActionSeq, ActionSymbol, Distribution, ExtendedAction, ExtendedActionSet, Macro, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparams {
    pub lr: f64,
    pub gamma: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Fraction of episodes over which ε decays linearly.
    pub anneal_fraction: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            lr: 0.1,
            gamma: 0.99,
            eps_start: 1.0,
            eps_end: 0.05,
            anneal_fraction: 0.6,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !(self.lr > 0.0 && self.lr <= 1.0) || !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidParams("need 0 < lr <= 1 and 0 < gamma <= 1".into()));
        }
        if !unit(self.eps_start) || !unit(self.eps_end) || !unit(self.anneal_fraction) {
            return Err(Error::InvalidParams("epsilon schedule outside [0, 1]".into()));
        }
        Ok(())
    }

    pub fn epsilon(&self, episode: usize, episodes: usize) -> f64 {
        let horizon = self.anneal_fraction * episodes as f64;
        if horizon <= 0.0 {
            return self.eps_end;
        }
        let t = (episode as f64 / horizon).min(1.0);
        self.eps_start + (self.eps_end - self.eps_start) * t
    }
}

/// Action-value function over a fixed number of extended actions.
pub trait QFunction<S> {
    fn n_actions(&self) -> usize;

    fn q_values(&self, state: &S) -> Vec<f64>;

    /// Moves `Q(state, action)` toward `target` with step size `lr`.
    fn update_toward(&mut self, state: &S, action: usize, target: f64, lr: f64);

    fn max_q(&self, state: &S) -> f64 {
        self.q_values(state).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub trait StateKey {
    fn key(&self) -> u64;
}

impl StateKey for Cell {
    fn key(&self) -> u64 {
        ((self.1 as u64) << 32) | self.0 as u64
    }
}

/// Tabular Q with missing entries read as 0.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    n_actions: usize,
    values: HashMap<u64, Vec<f64>>,
}

impl QTable {
    pub fn new(n_actions: usize) -> Self {
        QTable {
            n_actions,
            values: HashMap::new(),
        }
    }

    pub fn get(&self, key: u64, action: usize) -> f64 {
        self.values.get(&key).map_or(0.0, |v| v[action])
    }

    pub fn set(&mut self, key: u64, action: usize, value: f64) {
        let n = self.n_actions;
        self.values.entry(key).or_insert_with(|| vec![0.0; n])[action] = value;
    }

    /// `{state_key: {action_id: value}}` with sorted keys.
    pub fn to_json(&self) -> String {
        let dump: BTreeMap<u64, BTreeMap<usize, f64>> = self
            .values
            .iter()
            .map(|(k, v)| (*k, v.iter().copied().enumerate().collect()))
            .collect();
        serde_json::to_string(&dump).expect("string keys and finite values")
    }

    pub fn from_json(text: &str, n_actions: usize) -> Result<Self> {
        let dump: BTreeMap<u64, BTreeMap<usize, f64>> =
            serde_json::from_str(text).map_err(|e| Error::InvalidParams(e.to_string()))?;
        let mut q = QTable::new(n_actions);
        for (k, row) in dump {
            for (a, v) in row {
                if a >= n_actions {
                    return Err(Error::InvalidParams(format!("action id {a} out of range")));
                }
                q.set(k, a, v);
            }
        }
        Ok(q)
    }
}

impl<S: StateKey> QFunction<S> for QTable {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn q_values(&self, state: &S) -> Vec<f64> {
        self.values
            .get(&state.key())
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.n_actions])
    }

    fn update_toward(&mut self, state: &S, action: usize, target: f64, lr: f64) {
        let key = state.key();
        let q = self.get(key, action);
        self.set(key, action, q + lr * (target - q));
    }
}

/// Linear Q over offset grid tilings of `(x, v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TileQ {
    n_actions: usize,
    tilings: usize,
    bins: usize,
    low: [f64; 2],
    width: [f64; 2],
    weights: Vec<f64>,
}

impl TileQ {
    pub fn new(n_actions: usize, tilings: usize, bins: usize, low: [f64; 2], high: [f64; 2]) -> Self {
        let width = [(high[0] - low[0]) / bins as f64, (high[1] - low[1]) / bins as f64];
        let side = bins + 1;
        TileQ {
            n_actions,
            tilings,
            bins,
            low,
            width,
            weights: vec![0.0; tilings * side * side * n_actions],
        }
    }

    /// Two tilings of 8×8 over the track and velocity range of `params`.
    pub fn for_mountain_car(n_actions: usize, params: &MountainCarParams) -> Self {
        use crate::envs::mountain_car::{MAX_X, MIN_X};
        TileQ::new(n_actions, 2, 8, [MIN_X, -params.v_max], [MAX_X, params.v_max])
    }

    fn active(&self, s: &McState) -> impl Iterator<Item = usize> + '_ {
        let side = self.bins + 1;
        let point = [s.x, s.v];
        (0..self.tilings).map(move |t| {
            let shift = t as f64 / self.tilings as f64;
            let mut idx = t;
            for d in 0..2 {
                let c = ((point[d] - self.low[d]) / self.width[d] + shift).floor();
                idx = idx * side + (c.max(0.0) as usize).min(self.bins);
            }
            idx * self.n_actions
        })
    }
}

impl QFunction<McState> for TileQ {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn q_values(&self, state: &McState) -> Vec<f64> {
        let mut q = vec![0.0; self.n_actions];
        for base in self.active(state) {
            for (a, v) in q.iter_mut().enumerate() {
                *v += self.weights[base + a];
            }
        }
        q
    }

    fn update_toward(&mut self, state: &McState, action: usize, target: f64, lr: f64) {
        let q = self.q_values(state)[action];
        let step = lr / self.tilings as f64 * (target - q);
        let active: Vec<usize> = self.active(state).collect();
        for base in active {
            self.weights[base + action] += step;
        }
    }
}

fn greedy<R: Rng + ?Sized>(q: &[f64], rng: &mut R) -> usize {
    let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = (0..q.len()).filter(|&i| q[i] == best).collect();
    *ties.choose(rng).expect("non-empty action set")
}

/// Greedy over all of `A'` with probability `1 − ε`, otherwise a draw from
/// the exploration pool.
pub fn select_action<S, Q: QFunction<S>, R: Rng + ?Sized>(
    state: &S,
    q: &Q,
    set: &ExtendedActionSet,
    epsilon: f64,
    rng: &mut R,
) -> Result<usize> {
    if set.is_empty() {
        return Err(Error::EmptyActionSet);
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidParams(format!("epsilon {epsilon}")));
    }
    if rng.gen_bool(epsilon) {
        Ok(set.sample_pool(rng))
    } else {
        Ok(greedy(&q.q_values(state), rng))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Execution<S> {
    pub next_state: S,
    /// `Σ γ^j r_j` over the executed steps.
    pub discounted_reward: f64,
    pub total_reward: f64,
    pub k: usize,
    pub done: bool,
    pub reached_goal: bool,
    pub log: ActionSeq,
}

fn empty_log(set: &ExtendedActionSet) -> ActionSeq {
    match set.primitives().first() {
        Some(ActionSymbol::Continuous(_)) => ActionSeq::Continuous(Vec::new()),
        _ => ActionSeq::Discrete(Vec::new()),
    }
}

/// Runs one extended action from the environment's current state. Macros
/// run open-loop and stop early if the episode ends.
pub fn execute_extended<E: Environment>(
    env: &mut E,
    set: &ExtendedActionSet,
    action: usize,
    gamma: f64,
) -> Result<Execution<E::State>> {
    if action >= set.len() {
        return Err(Error::InvalidAction(format!("extended action {action}")));
    }
    let mut exec = Execution {
        next_state: env.state(),
        discounted_reward: 0.0,
        total_reward: 0.0,
        k: 0,
        done: false,
        reached_goal: false,
        log: empty_log(set),
    };
    let mut discount = 1.0;
    let mut run = |a: crate::types::ActionRef<'_>, exec: &mut Execution<E::State>| -> Result<bool> {
        let r = env.step(a)?;
        exec.log.push(a)?;
        exec.discounted_reward += discount * r.reward;
        exec.total_reward += r.reward;
        discount *= gamma;
        exec.k += 1;
        exec.done = r.done;
        exec.reached_goal = r.reached_goal();
        exec.next_state = r.next_state;
        Ok(r.done)
    };
    match set.action(action) {
        ExtendedAction::Primitive(p) => {
            run(p.as_ref(), &mut exec)?;
        }
        ExtendedAction::Macro(m) => {
            for a in m.actions.iter() {
                if run(a, &mut exec)? {
                    break;
                }
            }
        }
    }
    Ok(exec)
}

/// SMDP update. `terminal` suppresses the bootstrap term.
#[allow(clippy::too_many_arguments)]
pub fn q_update<S, Q: QFunction<S>>(
    q: &mut Q,
    state: &S,
    action: usize,
    discounted_reward: f64,
    k: usize,
    next_state: &S,
    terminal: bool,
    hp: &Hyperparams,
) {
    debug_assert!(k >= 1);
    let bootstrap = if terminal {
        0.0
    } else {
        hp.gamma.powi(k as i32) * q.max_q(next_state)
    };
    q.update_toward(state, action, discounted_reward + bootstrap, hp.lr);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    #[serde(rename = "return")]
    pub ret: f64,
    pub steps: usize,
    pub reached_goal: bool,
}

/// `episode,return,steps,reached_goal` rows.
pub fn curve_csv(curve: &[EpisodeStats]) -> String {
    let mut s = String::from("episode,return,steps,reached_goal\n");
    for (i, e) in curve.iter().enumerate() {
        s.push_str(&format!("{i},{},{},{}\n", e.ret, e.steps, e.reached_goal));
    }
    s
}

fn run_episode<E, Q, R>(
    env: &mut E,
    set: &ExtendedActionSet,
    q: &mut Q,
    hp: &Hyperparams,
    epsilon: f64,
    learn: bool,
    rng: &mut R,
) -> Result<(EpisodeStats, ActionSeq)>
where
    E: Environment,
    Q: QFunction<E::State>,
    R: Rng,
{
    let mut s = env.reset();
    let mut stats = EpisodeStats {
        ret: 0.0,
        steps: 0,
        reached_goal: false,
    };
    let mut log = empty_log(set);
    loop {
        let a = select_action(&s, q, set, epsilon, rng)?;
        let ex = execute_extended(env, set, a, hp.gamma)?;
        if learn {
            // step-cap truncation is not a true terminal state, so it still bootstraps
            q_update(q, &s, a, ex.discounted_reward, ex.k, &ex.next_state, ex.reached_goal, hp);
        }
        stats.ret += ex.total_reward;
        stats.steps += ex.k;
        for p in ex.log.iter() {
            log.push(p)?;
        }
        s = ex.next_state;
        if ex.done {
            stats.reached_goal = ex.reached_goal;
            return Ok((stats, log));
        }
    }
}

/// Trains `q` in place and returns the per-episode learning curve.
pub fn train<E, Q>(
    env: &mut E,
    set: &ExtendedActionSet,
    q: &mut Q,
    episodes: usize,
    hp: &Hyperparams,
    seed: u64,
) -> Result<Vec<EpisodeStats>>
where
    E: Environment,
    Q: QFunction<E::State>,
{
    if episodes == 0 {
        return Err(Error::InvalidParams("episodes must be at least 1".into()));
    }
    hp.validate()?;
    if q.n_actions() != set.len() {
        return Err(Error::InvalidParams("Q width differs from action set size".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..episodes)
        .map(|ep| {
            let eps = hp.epsilon(ep, episodes);
            run_episode(env, set, q, hp, eps, true, &mut rng).map(|(s, _)| s)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub trajectory: Trajectory,
    #[serde(rename = "return")]
    pub ret: f64,
    pub steps: usize,
    pub reached_goal: bool,
}

/// Greedy rollouts with macros flattened to primitives. Rollouts that miss
/// the goal are dropped.
#[allow(clippy::too_many_arguments)]
pub fn record_optimal_rollouts<E, Q>(
    env: &mut E,
    set: &ExtendedActionSet,
    q: &Q,
    count: usize,
    hp: &Hyperparams,
    task_id: &str,
    dt: Option<f64>,
    seed: u64,
) -> Result<Vec<RolloutRecord>>
where
    E: Environment,
    Q: QFunction<E::State> + Clone,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frozen = q.clone();
    let mut out = Vec::new();
    for _ in 0..count {
        let (stats, actions) = run_episode(env, set, &mut frozen, hp, 0.0, false, &mut rng)?;
        if !stats.reached_goal {
            warn!("{task_id}: greedy rollout missed the goal after {} steps", stats.steps);
            continue;
        }
        out.push(RolloutRecord {
            trajectory: Trajectory {
                task_id: task_id.to_string(),
                dt,
                actions,
            },
            ret: stats.ret,
            steps: stats.steps,
            reached_goal: true,
        });
    }
    if out.is_empty() {
        return Err(Error::PolicyNotConverged);
    }
    Ok(out)
}

/// `n` macros whose lengths cycle through `lengths`, each step drawn
/// uniformly from `primitives`, explored uniformly.
pub fn random_macro_set(primitives: Vec<ActionSymbol>, n: usize, lengths: &[usize], seed: u64) -> Result<ExtendedActionSet> {
    if n == 0 || lengths.is_empty() || lengths.contains(&0) {
        return Err(Error::InvalidParams("need n >= 1 and positive lengths".into()));
    }
    if primitives.is_empty() {
        return Err(Error::EmptyActionSet);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = primitives.len();
    let macros: Vec<Macro> = (0..n)
        .map(|i| {
            let len = lengths[i % lengths.len()];
            let picks = (0..len).map(|_| rng.gen_range(0..base));
            let actions = match &primitives[0] {
                ActionSymbol::Discrete(_) => ActionSeq::Discrete(
                    picks
                        .map(|j| match &primitives[j] {
                            ActionSymbol::Discrete(a) => *a,
                            ActionSymbol::Continuous(_) => unreachable!("mixed primitive kinds"),
                        })
                        .collect(),
                ),
                ActionSymbol::Continuous(_) => ActionSeq::Continuous(
                    picks
                        .map(|j| match &primitives[j] {
                            ActionSymbol::Continuous(a) => a.clone(),
                            ActionSymbol::Discrete(_) => unreachable!("mixed primitive kinds"),
                        })
                        .collect(),
                ),
            };
            Macro { id: i, actions }
        })
        .collect();
    let pool = Distribution::uniform((base..base + n).collect())?;
    ExtendedActionSet::new(primitives, macros, pool)
}
