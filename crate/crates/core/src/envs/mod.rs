//! Task families: grid mazes and a parameterized mountain car.

pub mod maze;
pub mod mountain_car;

use crate::error::Result;
use crate::types::ActionRef;

pub use maze::{
    load_map, maze_step, Cell, Grid, Maze, MazeGenerator, MazeTask, MAZE_ACTIONS, MAZE_ACTION_NAMES,
};
pub use mountain_car::{
    mountaincar_step, scripted_mc_controller, McRanges, McState, MountainCarGenerator,
    MountainCarParams, MountainCarTask,
};

/// Outcome of one primitive step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult<S> {
    pub next_state: S,
    pub reward: f64,
    /// The episode is over, either at the goal or at the step cap.
    pub done: bool,
    /// Set when `done` came from the step cap rather than the goal.
    pub truncated: bool,
}

impl<S> StepResult<S> {
    pub fn reached_goal(&self) -> bool {
        self.done && !self.truncated
    }
}

/// An episodic task driven one primitive action at a time.
pub trait Environment {
    type State: Clone;

    fn reset(&mut self) -> Self::State;

    fn state(&self) -> Self::State;

    fn step(&mut self, action: ActionRef<'_>) -> Result<StepResult<Self::State>>;
}
