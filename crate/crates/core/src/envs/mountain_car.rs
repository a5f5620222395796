use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Environment, StepResult};
use crate::error::{Error, Result};
use crate::types::ActionRef;

pub const MIN_X: f64 = -1.2;
pub const MAX_X: f64 = 0.6;
const GRAVITY: f64 = 0.0025;
pub const STEP_REWARD: f64 = -1.0;
pub const GOAL_REWARD: f64 = 100.0;
pub const DEFAULT_CAP: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MountainCarParams {
    pub goal_x: f64,
    pub v_max: f64,
    pub a_min: f64,
    pub a_max: f64,
    pub power: f64,
    pub start_x: f64,
}

impl Default for MountainCarParams {
    fn default() -> Self {
        MountainCarParams {
            goal_x: 0.45,
            v_max: 0.07,
            a_min: -1.0,
            a_max: 1.0,
            power: 0.0015,
            start_x: -0.5,
        }
    }
}

impl MountainCarParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.goal_x, self.v_max, self.a_min, self.a_max, self.power, self.start_x]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParams("non-finite mountain car parameter".into()));
        }
        if !(self.a_min < 0.0 && 0.0 < self.a_max) {
            return Err(Error::InvalidParams("need a_min < 0 < a_max".into()));
        }
        if self.v_max <= 0.0 || self.power <= 0.0 {
            return Err(Error::InvalidParams("v_max and power must be positive".into()));
        }
        if !(MIN_X < self.start_x && self.start_x < self.goal_x && self.goal_x <= MAX_X) {
            return Err(Error::InvalidParams("need -1.2 < start_x < goal_x <= 0.6".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McState {
    pub x: f64,
    pub v: f64,
}

impl McState {
    /// Position, height, and the horizontal and vertical velocity
    /// components along the `sin(3x)/3` track.
    pub fn observation(&self) -> [f64; 4] {
        let slope = (3.0 * self.x).cos();
        let norm = (1.0 + slope * slope).sqrt();
        [self.x, (3.0 * self.x).sin() / 3.0, self.v / norm, self.v * slope / norm]
    }
}

/// One transition. The action is clamped into `[a_min, a_max]`.
pub fn mountaincar_step(state: McState, action: f64, params: &MountainCarParams) -> Result<StepResult<McState>> {
    if !action.is_finite() {
        return Err(Error::InvalidAction(format!("mountain car action {action}")));
    }
    if !(state.x.is_finite() && state.v.is_finite()) || !(MIN_X..=MAX_X).contains(&state.x) {
        return Err(Error::InvalidState(format!("{state:?}")));
    }
    let a = action.clamp(params.a_min, params.a_max);
    let mut v = (state.v + params.power * a - GRAVITY * (3.0 * state.x).cos()).clamp(-params.v_max, params.v_max);
    let x = (state.x + v).clamp(MIN_X, MAX_X);
    if x <= MIN_X && v < 0.0 {
        v = 0.0;
    }
    let goal = x >= params.goal_x;
    Ok(StepResult {
        next_state: McState { x, v },
        reward: if goal { GOAL_REWARD } else { STEP_REWARD },
        done: goal,
        truncated: false,
    })
}

/// Bang-bang energy pumping: push in the direction of motion.
pub fn scripted_mc_controller(state: McState, params: &MountainCarParams) -> f64 {
    let a = if state.v < 0.0 { -params.a_max } else { params.a_max };
    a.clamp(params.a_min, params.a_max)
}

#[derive(Debug, Clone)]
pub struct MountainCarTask {
    pub params: MountainCarParams,
    pub cap: usize,
    state: McState,
    steps: usize,
}

impl MountainCarTask {
    pub fn new(params: MountainCarParams) -> Result<Self> {
        params.validate()?;
        Ok(MountainCarTask {
            params,
            cap: DEFAULT_CAP,
            state: McState { x: params.start_x, v: 0.0 },
            steps: 0,
        })
    }
}

impl Environment for MountainCarTask {
    type State = McState;

    fn reset(&mut self) -> McState {
        self.state = McState {
            x: self.params.start_x,
            v: 0.0,
        };
        self.steps = 0;
        self.state
    }

    fn state(&self) -> McState {
        self.state
    }

    fn step(&mut self, action: ActionRef<'_>) -> Result<StepResult<McState>> {
        let a = match action {
            ActionRef::Continuous([a]) => *a,
            _ => return Err(Error::InvalidAction("mountain car needs a 1-d continuous action".into())),
        };
        let mut r = mountaincar_step(self.state, a, &self.params)?;
        self.state = r.next_state;
        self.steps += 1;
        if !r.done && self.steps >= self.cap {
            r.done = true;
            r.truncated = true;
        }
        Ok(r)
    }
}

/// Multiplicative perturbation factors applied to the base parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McRanges {
    pub goal_x: (f64, f64),
    pub v_max: (f64, f64),
    pub power: (f64, f64),
    pub a_max: (f64, f64),
}

impl Default for McRanges {
    fn default() -> Self {
        McRanges {
            goal_x: (0.9, 1.1),
            v_max: (0.9, 1.2),
            power: (0.85, 1.25),
            a_max: (1.0, 1.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MountainCarGenerator {
    base: MountainCarParams,
    ranges: McRanges,
    rng: ChaCha8Rng,
}

impl MountainCarGenerator {
    pub fn new(base: MountainCarParams, ranges: McRanges, seed: u64) -> Result<Self> {
        base.validate()?;
        let pairs = [ranges.goal_x, ranges.v_max, ranges.power, ranges.a_max];
        if pairs.iter().any(|&(lo, hi)| !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo <= hi)) {
            return Err(Error::InvalidParams("ranges must satisfy 0 < lo <= hi".into()));
        }
        // parameters are monotone in each factor, so checking the corners suffices
        for g in [ranges.goal_x.0, ranges.goal_x.1] {
            for a in [ranges.a_max.0, ranges.a_max.1] {
                MountainCarParams {
                    goal_x: base.goal_x * g,
                    a_max: base.a_max * a,
                    ..base
                }
                .validate()?;
            }
        }
        Ok(MountainCarGenerator {
            base,
            ranges,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    fn factor(&mut self, (lo, hi): (f64, f64)) -> f64 {
        if lo == hi {
            lo
        } else {
            self.rng.gen_range(lo..=hi)
        }
    }

    pub fn next_params(&mut self) -> MountainCarParams {
        let r = self.ranges;
        MountainCarParams {
            goal_x: self.base.goal_x * self.factor(r.goal_x),
            v_max: self.base.v_max * self.factor(r.v_max),
            power: self.base.power * self.factor(r.power),
            a_max: self.base.a_max * self.factor(r.a_max),
            ..self.base
        }
    }
}

impl Iterator for MountainCarGenerator {
    type Item = MountainCarParams;

    fn next(&mut self) -> Option<MountainCarParams> {
        Some(self.next_params())
    }
}
