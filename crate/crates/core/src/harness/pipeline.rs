use anyhow::{bail, Context};
use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Domain, ExperimentConfig};
use crate::agent::{
    random_macro_set, record_optimal_rollouts, train, EpisodeStats, QTable, RolloutRecord, TileQ,
};
use crate::bounds::{verify_bounds, BoundReport};
use crate::dtw::{symbolize_banded, ClusterRegistry};
use crate::envs::mountain_car::{MAX_X, MIN_X};
use crate::envs::{
    load_map, scripted_mc_controller, Cell, Environment, Grid, Maze, MazeGenerator, MazeTask, MountainCarGenerator,
    MountainCarParams, MountainCarTask,
};
use crate::error::{Error, Result};
use crate::huffman::{search_huffman, HuffmanSearchResult};
use crate::lzw::{search_b_limit, LzwSearchResult};
use crate::types::{ActionRef, ActionSeq, ActionSymbol, Distribution, ExtendedActionSet, Macro, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Primitives,
    RandomMacros,
    Huffman,
    Lzw,
}

impl Condition {
    pub const ALL: [Condition; 4] = [
        Condition::Primitives,
        Condition::RandomMacros,
        Condition::Huffman,
        Condition::Lzw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Condition::Primitives => "primitives",
            Condition::RandomMacros => "random_macros",
            Condition::Huffman => "huffman",
            Condition::Lzw => "lzw",
        }
    }

    pub fn parse(s: &str) -> Option<Condition> {
        Condition::ALL.into_iter().find(|c| c.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskCurve {
    pub task: String,
    pub curve: Vec<EpisodeStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionResult {
    pub condition: Condition,
    pub curves: Vec<TaskCurve>,
    pub mean_curve: Vec<f64>,
    /// Mean return over the first 10% of episodes, averaged over tasks.
    pub jumpstart: f64,
    /// Summed return per task, averaged over tasks.
    pub total_reward: f64,
}

/// Number of leading episodes that count toward jumpstart.
pub fn jumpstart_window(episodes: usize) -> usize {
    (episodes / 10).max(1)
}

pub fn task_jumpstart(curve: &[EpisodeStats]) -> f64 {
    let n = jumpstart_window(curve.len()).min(curve.len());
    curve[..n].iter().map(|e| e.ret).sum::<f64>() / n as f64
}

pub fn task_total_reward(curve: &[EpisodeStats]) -> f64 {
    curve.iter().map(|e| e.ret).sum()
}

impl ConditionResult {
    pub fn from_curves(condition: Condition, curves: Vec<TaskCurve>) -> Self {
        let tasks = curves.len();
        let episodes = curves.iter().map(|c| c.curve.len()).max().unwrap_or(0);
        let mean_curve = (0..episodes)
            .map(|i| curves.iter().map(|c| c.curve[i].ret).sum::<f64>() / tasks as f64)
            .collect();
        let mean = |f: fn(&[EpisodeStats]) -> f64| {
            if tasks == 0 {
                0.0
            } else {
                curves.iter().map(|c| f(&c.curve)).sum::<f64>() / tasks as f64
            }
        };
        ConditionResult {
            condition,
            jumpstart: mean(task_jumpstart),
            total_reward: mean(task_total_reward),
            curves,
            mean_curve,
        }
    }
}

/// One row of the task-set manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEntry {
    pub seed: u64,
    pub task: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_params: Option<MountainCarParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Cell>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<Cell>,
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub alphabet_size: usize,
    /// Primitive-level demonstrations.
    pub rollouts: Vec<RolloutRecord>,
    /// Discrete corpus fed to the codecs (cluster symbols for continuous domains).
    pub corpus: Vec<Trajectory>,
    pub huffman: HuffmanSearchResult,
    pub lzw: LzwSearchResult,
    pub registry: Option<ClusterRegistry>,
    pub bounds: Vec<BoundReport>,
    pub tasks: Vec<TaskEntry>,
    /// Generated maps, written next to the manifest.
    pub maps: Vec<(String, Grid)>,
    pub conditions: Vec<ConditionResult>,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub runs: Vec<SeedRun>,
    /// Per condition, curves pooled over every seed's test tasks.
    pub conditions: Vec<ConditionResult>,
}

/// splitmix64 over a base seed and a path of stream labels.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mut z = base;
    for &p in path {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(p.wrapping_mul(0xD1B5_4A32_D192_ED03));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

const MAPS: u64 = 1;
const TASKS: u64 = 2;
const TRAIN: u64 = 3;
const ROLLOUT: u64 = 4;
const RANDOM: u64 = 5;
const EVAL: u64 = 6;

pub fn maze_primitives() -> Vec<ActionSymbol> {
    (0..4).map(ActionSymbol::Discrete).collect()
}

pub fn mc_primitives(params: &MountainCarParams, count: usize) -> Vec<ActionSymbol> {
    let step = (params.a_max - params.a_min) / (count - 1) as f64;
    (0..count)
        .map(|i| ActionSymbol::Continuous(vec![params.a_min + step * i as f64]))
        .collect()
}

enum PoolItem {
    Primitive(usize),
    Macro(ActionSeq),
}

fn pooled_set(primitives: Vec<ActionSymbol>, items: Vec<(PoolItem, f64)>) -> Result<ExtendedActionSet> {
    let base = primitives.len();
    let mut macros = Vec::new();
    let mut pool: Vec<(usize, f64)> = Vec::new();
    for (item, p) in items {
        let id = match item {
            PoolItem::Primitive(i) => i,
            PoolItem::Macro(actions) => {
                macros.push(Macro {
                    id: macros.len(),
                    actions,
                });
                base + macros.len() - 1
            }
        };
        match pool.iter_mut().find(|(k, _)| *k == id) {
            Some(slot) => slot.1 += p,
            None => pool.push((id, p)),
        }
    }
    ExtendedActionSet::new(primitives, macros, Distribution::from_probs(pool)?)
}

/// Symbol sequences and exploration probabilities of both codecs.
fn codec_items(run_huffman: &HuffmanSearchResult, run_lzw: &LzwSearchResult) -> [Vec<(Vec<u32>, f64)>; 2] {
    let huffman = run_huffman
        .macros
        .iter()
        .map(|m| {
            let seq = m.actions.as_discrete().expect("huffman macros are discrete").to_vec();
            (seq, run_huffman.distribution.prob(&m.id))
        })
        .collect();
    let lzw = run_lzw
        .codebook
        .entries()
        .iter()
        .enumerate()
        .map(|(i, e)| (e.clone(), run_lzw.distribution.prob(&i)))
        .collect();
    [huffman, lzw]
}

struct Extraction {
    huffman: HuffmanSearchResult,
    lzw: LzwSearchResult,
    bounds: Vec<BoundReport>,
}

fn extract(cfg: &ExperimentConfig, seed: u64, corpus: &[Trajectory], alphabet: usize) -> anyhow::Result<Extraction> {
    let refs: Vec<&[u32]> = corpus
        .iter()
        .map(|t| t.actions.as_discrete())
        .collect::<Result<_>>()?;
    let huffman = search_huffman(&refs, alphabet, &cfg.huffman).context("stage 'extract' (huffman) failed")?;
    let lzw = search_b_limit(&refs, alphabet, &cfg.lzw).context("stage 'extract' (lzw) failed")?;
    let bounds = verify_bounds(&refs, cfg.huffman.l_min, cfg.huffman.l_max, Some(&huffman), Some(&lzw))
        .context("stage 'bounds' failed")?
        .into_iter()
        .map(|r| r.with_label(format!("seed-{seed}")))
        .collect();
    Ok(Extraction { huffman, lzw, bounds })
}

fn maze_run(cfg: &ExperimentConfig, seed: u64) -> anyhow::Result<SeedRun> {
    let mc = &cfg.maze;
    let mut map_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[MAPS]));
    let mut maps = Vec::new();
    for i in 0..mc.map_count {
        let g = Grid::corridor_maze(mc.width, mc.height, mc.pitch, mc.corridor_width, mc.loop_fraction, &mut map_rng)?;
        maps.push((format!("maps/seed-{seed}-{i}.map"), g));
    }
    let mut grids: Vec<Grid> = maps.iter().map(|(_, g)| g.clone()).collect();
    let mut paths: Vec<String> = maps.iter().map(|(p, _)| p.clone()).collect();
    for f in &mc.map_files {
        let text = std::fs::read_to_string(f).with_context(|| format!("reading map {}", f.display()))?;
        grids.push(load_map(&text).with_context(|| format!("parsing map {}", f.display()))?);
        paths.push(f.display().to_string());
    }
    let mut gen = MazeGenerator::new(grids.clone(), derive_seed(seed, &[TASKS])).context("stage 'tasks' failed")?;
    let train_mazes: Vec<Maze> = gen.by_ref().take(cfg.train_task_count).collect();
    let test_mazes: Vec<Maze> = gen.take(cfg.test_task_count).collect();
    let path_of = |m: &Maze| grids.iter().position(|g| *g == m.grid).map(|i| paths[i].clone());
    let mut tasks = Vec::new();
    for (split, list) in [("train", &train_mazes), ("test", &test_mazes)] {
        for (i, m) in list.iter().enumerate() {
            tasks.push(TaskEntry {
                seed,
                task: format!("seed-{seed}/{split}-{i}"),
                map_path: path_of(m),
                mc_params: None,
                start: Some(m.start),
                goal: Some(m.goal),
            });
        }
    }
    let cap = |m: &Maze| mc.step_cap.unwrap_or_else(|| m.default_cap());

    // stage: demonstrations from primitive learners
    let hp = cfg.learner;
    let per_task: Vec<Result<Vec<RolloutRecord>>> = train_mazes
        .par_iter()
        .enumerate()
        .map(|(i, m)| {
            let mut task = MazeTask::with_cap(m.clone(), cap(m));
            let set = ExtendedActionSet::primitives_only(maze_primitives())?;
            let mut q = QTable::new(set.len());
            train(&mut task, &set, &mut q, cfg.train_episodes(), &hp, derive_seed(seed, &[TRAIN, i as u64]))?;
            let id = format!("seed-{seed}/train-{i}");
            match record_optimal_rollouts(
                &mut task,
                &set,
                &q,
                cfg.rollouts_per_task,
                &hp,
                &id,
                None,
                derive_seed(seed, &[ROLLOUT, i as u64]),
            ) {
                Err(Error::PolicyNotConverged) => {
                    warn!("{id}: no goal-reaching greedy rollout, task skipped");
                    Ok(Vec::new())
                }
                other => {
                    if let Ok(recs) = &other {
                        let shortest = m.shortest_path_len();
                        if recs.iter().any(|r| r.steps > shortest) {
                            info!("{id}: greedy rollout {} steps, shortest path {shortest}", recs[0].steps);
                        }
                    }
                    other
                }
            }
        })
        .collect();
    let mut rollouts = Vec::new();
    for r in per_task {
        rollouts.extend(r.context("stage 'train' failed")?);
    }
    if rollouts.is_empty() {
        bail!("stage 'rollouts' failed: {}", Error::PolicyNotConverged);
    }
    let corpus: Vec<Trajectory> = rollouts.iter().map(|r| r.trajectory.clone()).collect();
    let ex = extract(cfg, seed, &corpus, 4)?;

    // stage: evaluation on test tasks
    let [huff_items, lzw_items] = codec_items(&ex.huffman, &ex.lzw);
    let as_pool = |items: &[(Vec<u32>, f64)]| -> Vec<(PoolItem, f64)> {
        items
            .iter()
            .map(|(seq, p)| {
                let item = if seq.len() == 1 {
                    PoolItem::Primitive(seq[0] as usize)
                } else {
                    PoolItem::Macro(ActionSeq::Discrete(seq.clone()))
                };
                (item, *p)
            })
            .collect()
    };
    let lengths: Vec<usize> = ex.huffman.macros.iter().map(Macro::len).collect();
    let sets = [
        ExtendedActionSet::primitives_only(maze_primitives())?,
        random_macro_set(
            maze_primitives(),
            cfg.baseline.random_macro_count,
            &lengths,
            derive_seed(seed, &[RANDOM]),
        )?,
        pooled_set(maze_primitives(), as_pool(&huff_items))?,
        pooled_set(maze_primitives(), as_pool(&lzw_items))?,
    ];
    let conditions = evaluate(seed, test_mazes.len(), |t, c, ep_seed| {
        let m = &test_mazes[t];
        let mut task = MazeTask::with_cap(m.clone(), cap(m));
        let mut q = QTable::new(sets[c].len());
        train(&mut task, &sets[c], &mut q, cfg.episodes, &hp, ep_seed)
    })?;

    Ok(SeedRun {
        seed,
        alphabet_size: 4,
        rollouts,
        corpus,
        huffman: ex.huffman,
        lzw: ex.lzw,
        registry: None,
        bounds: ex.bounds,
        tasks,
        maps,
        conditions,
    })
}

/// Trains every (test task, condition) pair and groups curves by condition.
fn evaluate(
    seed: u64,
    tests: usize,
    run: impl Fn(usize, usize, u64) -> Result<Vec<EpisodeStats>> + Sync,
) -> anyhow::Result<Vec<ConditionResult>> {
    let jobs: Vec<(usize, usize)> = (0..tests).flat_map(|t| (0..4).map(move |c| (t, c))).collect();
    let curves: Vec<Result<Vec<EpisodeStats>>> = jobs
        .par_iter()
        .map(|&(t, c)| run(t, c, derive_seed(seed, &[EVAL, t as u64, c as u64])))
        .collect();
    let mut grouped: Vec<Vec<TaskCurve>> = vec![Vec::new(); 4];
    for (&(t, c), curve) in jobs.iter().zip(curves) {
        grouped[c].push(TaskCurve {
            task: format!("seed-{seed}/test-{t}"),
            curve: curve.context("stage 'evaluate' failed")?,
        });
    }
    Ok(Condition::ALL
        .into_iter()
        .zip(grouped)
        .map(|(c, g)| ConditionResult::from_curves(c, g))
        .collect())
}

/// Goal-reaching rollout of the scripted controller, or `None`.
pub fn scripted_rollout(params: MountainCarParams, cap: usize, task_id: &str) -> Result<Option<RolloutRecord>> {
    let mut task = MountainCarTask::new(params)?;
    task.cap = cap;
    let mut s = task.reset();
    let mut actions = Vec::new();
    let mut ret = 0.0;
    loop {
        let a = [scripted_mc_controller(s, &params)];
        let r = task.step(ActionRef::Continuous(&a))?;
        actions.push(a.to_vec());
        ret += r.reward;
        s = r.next_state;
        if r.done {
            if !r.reached_goal() {
                return Ok(None);
            }
            let steps = actions.len();
            return Ok(Some(RolloutRecord {
                trajectory: Trajectory::continuous(task_id, 1.0, actions),
                ret,
                steps,
                reached_goal: true,
            }));
        }
    }
}

fn mountain_car_run(cfg: &ExperimentConfig, seed: u64) -> anyhow::Result<SeedRun> {
    let mc = &cfg.mountain_car;
    let mut gen =
        MountainCarGenerator::new(mc.base, mc.ranges, derive_seed(seed, &[TASKS])).context("stage 'tasks' failed")?;
    let train_params: Vec<MountainCarParams> = gen.by_ref().take(cfg.train_task_count).collect();
    let test_params: Vec<MountainCarParams> = gen.take(cfg.test_task_count).collect();
    let mut tasks = Vec::new();
    for (split, list) in [("train", &train_params), ("test", &test_params)] {
        for (i, p) in list.iter().enumerate() {
            tasks.push(TaskEntry {
                seed,
                task: format!("seed-{seed}/{split}-{i}"),
                map_path: None,
                mc_params: Some(*p),
                start: None,
                goal: None,
            });
        }
    }

    let mut rollouts = Vec::new();
    for (i, p) in train_params.iter().enumerate() {
        let id = format!("seed-{seed}/train-{i}");
        for _ in 0..cfg.rollouts_per_task {
            match scripted_rollout(*p, mc.step_cap, &id).context("stage 'rollouts' failed")? {
                Some(r) => rollouts.push(r),
                None => warn!("{id}: scripted controller missed the goal, task skipped"),
            }
        }
    }
    if rollouts.is_empty() {
        bail!("stage 'rollouts' failed: {}", Error::PolicyNotConverged);
    }
    let continuous: Vec<Trajectory> = rollouts.iter().map(|r| r.trajectory.clone()).collect();
    let sym = symbolize_banded(&continuous, cfg.dtw.window_duration, cfg.dtw.alpha, cfg.dtw.band)
        .context("stage 'symbolize' failed")?;
    let registry = sym.registry;
    let alphabet = registry.len();
    let corpus = sym.trajectories;
    let ex = extract(cfg, seed, &corpus, alphabet)?;

    let [huff_items, lzw_items] = codec_items(&ex.huffman, &ex.lzw);
    let decode = |items: &[(Vec<u32>, f64)]| -> Vec<(PoolItem, f64)> {
        items
            .iter()
            .map(|(seq, p)| (PoolItem::Macro(ActionSeq::Continuous(registry.decode(seq))), *p))
            .collect()
    };
    let lengths: Vec<usize> = ex.huffman.macros.iter().map(|m| m.len() * registry.window_len).collect();
    let hp = cfg.learner;
    let per_task_sets: Vec<[ExtendedActionSet; 4]> = test_params
        .iter()
        .map(|p| -> Result<[ExtendedActionSet; 4]> {
            let prims = mc_primitives(p, mc.primitive_count);
            Ok([
                ExtendedActionSet::primitives_only(prims.clone())?,
                random_macro_set(prims.clone(), cfg.baseline.random_macro_count, &lengths, derive_seed(seed, &[RANDOM]))?,
                pooled_set(prims.clone(), decode(&huff_items))?,
                pooled_set(prims, decode(&lzw_items))?,
            ])
        })
        .collect::<Result<_>>()?;
    let conditions = evaluate(seed, test_params.len(), |t, c, ep_seed| {
        let (p, set) = (&test_params[t], &per_task_sets[t][c]);
        let mut task = MountainCarTask::new(*p)?;
        task.cap = mc.step_cap;
        let mut q = TileQ::new(set.len(), mc.tilings, mc.bins, [MIN_X, -p.v_max], [MAX_X, p.v_max]);
        train(&mut task, set, &mut q, cfg.episodes, &hp, ep_seed)
    })?;

    Ok(SeedRun {
        seed,
        alphabet_size: alphabet,
        rollouts,
        corpus,
        huffman: ex.huffman,
        lzw: ex.lzw,
        registry: Some(registry),
        bounds: ex.bounds,
        tasks,
        maps: Vec::new(),
        conditions,
    })
}

/// Runs every seed of the experiment. Deterministic in the config.
pub fn run_pipeline(cfg: &ExperimentConfig) -> anyhow::Result<ExperimentReport> {
    cfg.validate().context("invalid config")?;
    let mut runs = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        info!("{} seed {seed}", cfg.domain.name());
        let run = match cfg.domain {
            Domain::Maze => maze_run(cfg, seed),
            Domain::MountainCar => mountain_car_run(cfg, seed),
        }
        .with_context(|| format!("seed {seed}"))?;
        runs.push(run);
    }
    let conditions = Condition::ALL
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let curves = runs.iter().flat_map(|r| r.conditions[i].curves.clone()).collect();
            ConditionResult::from_curves(c, curves)
        })
        .collect();
    Ok(ExperimentReport {
        config: cfg.clone(),
        runs,
        conditions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(returns: &[f64]) -> Vec<EpisodeStats> {
        returns
            .iter()
            .map(|&ret| EpisodeStats {
                ret,
                steps: 1,
                reached_goal: false,
            })
            .collect()
    }

    #[test]
    fn condition_metrics() {
        let mut a: Vec<f64> = vec![-10.0; 20];
        a[0] = 0.0;
        let b = vec![-2.0; 20];
        let r = ConditionResult::from_curves(
            Condition::Huffman,
            vec![
                TaskCurve { task: "a".into(), curve: stats(&a) },
                TaskCurve { task: "b".into(), curve: stats(&b) },
            ],
        );
        assert_eq!(r.jumpstart, (-5.0 + -2.0) / 2.0);
        assert_eq!(r.total_reward, (-190.0 + -40.0) / 2.0);
        assert_eq!(r.mean_curve[0], -1.0);
        assert_eq!(r.mean_curve.len(), 20);
    }

    #[test]
    fn empty_condition_is_zero() {
        let r = ConditionResult::from_curves(Condition::Lzw, Vec::new());
        assert_eq!((r.jumpstart, r.total_reward, r.mean_curve.len()), (0.0, 0.0, 0));
    }

    #[test]
    fn pooled_set_maps_single_symbols_to_primitives() {
        let set = pooled_set(
            maze_primitives(),
            vec![
                (PoolItem::Primitive(1), 0.25),
                (PoolItem::Macro(ActionSeq::Discrete(vec![0, 0])), 0.5),
                (PoolItem::Primitive(1), 0.25),
            ],
        )
        .unwrap();
        assert_eq!(set.len(), 5);
        assert_eq!(set.pool().prob(&1), 0.5);
        assert_eq!(set.pool().prob(&4), 0.5);
    }

    #[test]
    fn mc_primitive_grid() {
        let p = MountainCarParams::default();
        let prims = mc_primitives(&p, 5);
        let values: Vec<f64> = prims
            .iter()
            .map(|a| match a {
                ActionSymbol::Continuous(v) => v[0],
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(values, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, &[2]), derive_seed(1, &[3]));
        assert_ne!(derive_seed(1, &[2, 0]), derive_seed(1, &[2, 1]));
        assert_eq!(derive_seed(9, &[4, 5]), derive_seed(9, &[4, 5]));
    }

    #[test]
    fn scripted_rollouts_reach_the_goal() {
        let r = scripted_rollout(MountainCarParams::default(), 1000, "t").unwrap().unwrap();
        assert_eq!(r.steps, r.trajectory.len());
        assert_eq!(r.ret, -(r.steps as f64 - 1.0) + 100.0);
    }
}
