//! Device backends: a deterministic simulator and an ADB wire backend.

mod adb;
mod scenario;
mod sim;

pub use adb::{adb_serialize, escape_input_text, AdbDevice, PackageMap, REAL_WAIT};
pub use scenario::{
    ActionMatcher, AppDef, DeviceState, Effect, ElementDef, OracleRule, Scenario, ScreenDef,
    SimStep, SwipeDirection, TransitionRule, HOME_SCREEN,
};
pub use sim::{sim_execute, BlankPerceptor, SimDevice, SimPerceptor};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Action, OutcomeLabel, PerceptionResult, Screenshot};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("device unavailable: {0}")]
    DeviceUnavailable(String),
    #[error("no package known for app `{0}`")]
    UnknownApp(String),
    #[error("device command `{command}` failed: {stderr}")]
    CommandFailed { command: String, stderr: String },
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("perception failed: {0}")]
    Perception(String),
    #[error("bad screenshot from device: {0}")]
    Screenshot(String),
}

/// What executing one action did to the device.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecReport {
    /// Whether the state changed; unknown on real devices.
    pub changed: Option<bool>,
    /// Screen shown before and after, when the backend knows it.
    pub screen_before: Option<String>,
    pub screen_after: Option<String>,
    /// Ground-truth outcome, when the backend can judge.
    pub oracle: Option<OutcomeLabel>,
}

/// A phone the agent drives.
pub trait DeviceBackend: Send {
    fn describe(&self) -> String;
    /// Apps the backend can open, used to validate manager output.
    fn apps(&self) -> Vec<String>;
    fn capture(&mut self) -> Result<Screenshot, EnvError>;
    fn execute(&mut self, action: &Action) -> Result<ExecReport, EnvError>;
}

/// Turns a screenshot into text and icon elements.
pub trait Perceptor: Send + Sync {
    fn perceive(&self, shot: &Screenshot) -> Result<PerceptionResult, EnvError>;
}
