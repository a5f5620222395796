use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::Hyperparams;
use crate::envs::{McRanges, MountainCarParams};
use crate::error::{Error, Result};
use crate::huffman::HuffmanSearch;
use crate::lzw::{min_b_limit, LzwSearch};

pub const OUTPUT_ENV: &str = "MACROZIP_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Maze,
    MountainCar,
}

impl Domain {
    pub fn name(self) -> &'static str {
        match self {
            Domain::Maze => "maze",
            Domain::MountainCar => "mountain_car",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DtwConfig {
    pub alpha: f64,
    /// Window duration in time units; samples per window is `⌈duration/dt⌉`.
    pub window_duration: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<usize>,
}

impl Default for DtwConfig {
    fn default() -> Self {
        DtwConfig {
            alpha: 2.0,
            window_duration: 10.0,
            band: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    pub random_macro_count: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig { random_macro_count: 9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MazeConfig {
    pub width: usize,
    pub height: usize,
    /// Spacing between corridor junctions in generated mazes.
    pub pitch: usize,
    #[serde(default = "one")]
    pub corridor_width: usize,
    /// Fraction of internal walls knocked out after carving.
    pub loop_fraction: f64,
    /// Number of generated maps per seed.
    pub map_count: usize,
    /// Extra MovingAI `.map` files added to the generated ones.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub map_files: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_cap: Option<usize>,
}

impl Default for MazeConfig {
    fn default() -> Self {
        MazeConfig {
            width: 30,
            height: 30,
            pitch: 5,
            corridor_width: 1,
            loop_fraction: 0.0,
            map_count: 4,
            map_files: Vec::new(),
            step_cap: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MountainCarConfig {
    /// Evenly spaced accelerations offered as primitives to the learner.
    pub primitive_count: usize,
    pub tilings: usize,
    pub bins: usize,
    pub step_cap: usize,
    pub base: MountainCarParams,
    pub ranges: McRanges,
}

impl Default for MountainCarConfig {
    fn default() -> Self {
        MountainCarConfig {
            primitive_count: 5,
            tilings: 2,
            bins: 8,
            step_cap: crate::envs::mountain_car::DEFAULT_CAP,
            base: MountainCarParams::default(),
            ranges: McRanges::default(),
        }
    }
}

fn one() -> usize {
    1
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: Domain,
    pub seeds: Vec<u64>,
    pub train_task_count: usize,
    pub test_task_count: usize,
    /// Episodes per test task and condition.
    pub episodes: usize,
    /// Episodes for the primitive learner on training tasks; defaults to `episodes`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_episodes: Option<usize>,
    #[serde(default = "one")]
    pub rollouts_per_task: usize,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub learner: Hyperparams,
    #[serde(default)]
    pub huffman: HuffmanSearch,
    #[serde(default)]
    pub lzw: LzwSearch,
    #[serde(default)]
    pub dtw: DtwConfig,
    #[serde(default)]
    pub baseline: BaselineConfig,
    #[serde(default)]
    pub maze: MazeConfig,
    #[serde(default)]
    pub mountain_car: MountainCarConfig,
}

impl ExperimentConfig {
    /// Desk-scale maze defaults: 20 train / 6 test tasks on 30×30 mazes.
    pub fn maze_default() -> Self {
        ExperimentConfig {
            domain: Domain::Maze,
            seeds: vec![1, 2, 3],
            train_task_count: 20,
            test_task_count: 6,
            episodes: 500,
            train_episodes: Some(3000),
            rollouts_per_task: 1,
            output_dir: default_output(),
            learner: Hyperparams::default(),
            huffman: HuffmanSearch::default(),
            lzw: LzwSearch::default(),
            dtw: DtwConfig::default(),
            baseline: BaselineConfig::default(),
            maze: MazeConfig::default(),
            mountain_car: MountainCarConfig::default(),
        }
    }

    /// Desk-scale mountain car defaults: 6 train / 4 test tasks, 200 episodes.
    pub fn mountain_car_default() -> Self {
        ExperimentConfig {
            domain: Domain::MountainCar,
            train_task_count: 6,
            test_task_count: 4,
            episodes: 200,
            train_episodes: None,
            ..Self::maze_default()
        }
    }

    pub fn train_episodes(&self) -> usize {
        self.train_episodes.unwrap_or(self.episodes)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::InvalidParams(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable in TOML")
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::from_toml(&text)?)
    }

    /// The output directory, with `MACROZIP_OUT` taking precedence.
    pub fn resolved_output_dir(&self) -> PathBuf {
        std::env::var_os(OUTPUT_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
            .unwrap_or_else(|| self.output_dir.clone())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.to_string()));
        if self.seeds.is_empty() {
            return bad("at least one seed is required");
        }
        if self.train_task_count == 0 || self.episodes == 0 || self.train_episodes() == 0 || self.rollouts_per_task == 0 {
            return bad("train_task_count, episodes and rollouts_per_task must be >= 1");
        }
        self.learner.validate()?;
        let h = &self.huffman;
        if h.n_max == 0 || h.l_min == 0 || h.l_min > h.l_max {
            return bad("huffman grid needs n_max >= 1 and 1 <= l_min <= l_max");
        }
        if !(h.lambda > 0.0) || !(self.lzw.lambda > 0.0) {
            return bad("lambda must be positive");
        }
        if self.baseline.random_macro_count == 0 {
            return bad("random_macro_count must be >= 1");
        }
        match self.domain {
            Domain::Maze => {
                if self.lzw.b_max < min_b_limit(4) {
                    return bad("lzw b_max must be >= 2 for four maze actions");
                }
                let m = &self.maze;
                if m.map_count == 0 && m.map_files.is_empty() {
                    return bad("maze needs generated maps or map files");
                }
                let cw = m.corridor_width;
                if m.map_count > 0 && (cw == 0 || m.pitch <= cw || m.width < m.pitch + cw + 2 || m.height < m.pitch + cw + 2) {
                    return bad("maze dimensions too small for the pitch and corridor width");
                }
                if !(0.0..=1.0).contains(&m.loop_fraction) {
                    return bad("loop_fraction outside [0, 1]");
                }
                if m.step_cap == Some(0) {
                    return bad("step_cap must be >= 1");
                }
            }
            Domain::MountainCar => {
                let d = &self.dtw;
                if !(d.alpha > 0.0) || !(d.window_duration >= 1.0) {
                    return bad("dtw needs alpha > 0 and window_duration >= 1");
                }
                let mc = &self.mountain_car;
                mc.base.validate()?;
                if mc.primitive_count < 2 || mc.tilings == 0 || mc.bins == 0 || mc.step_cap == 0 {
                    return bad("mountain car learner settings must be positive, primitive_count >= 2");
                }
                crate::envs::MountainCarGenerator::new(mc.base, mc.ranges, 0)?;
            }
        }
        Ok(())
    }
}
