//! RMSProp optimization of the stroke parameters under a loss schedule.

mod config;
mod rmsprop;
mod run;

pub use config::{Phase, RunConfig, Schedule, Seeds, DEFAULT_BLOCK, DEFAULT_CANDIDATES, DEFAULT_ITERATIONS};
pub use rmsprop::{LearningRates, Rmsprop, DEFAULT_ALPHA, DEFAULT_EPS};
pub use run::{best_of_n, run, HistoryEntry, Problem, RunResult, Selection, Timings};
