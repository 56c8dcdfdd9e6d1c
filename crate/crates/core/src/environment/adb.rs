//! ADB wire backend: actions become `adb shell input ...` commands.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::Command;
use std::time::Duration;

use super::{DeviceBackend, EnvError, ExecReport};
use crate::model::{Action, Screenshot};

/// App name to Android package.
pub type PackageMap = BTreeMap<String, String>;

/// How long `Wait` pauses on a real device.
pub const REAL_WAIT: Duration = Duration::from_secs(10);

const SWIPE_MS: u32 = 300;
const KEY_ENTER: u32 = 66;
const KEY_BACK: u32 = 4;
const KEY_HOME: u32 = 3;

/// Escapes text for `input text`, which the device shell re-parses.
/// Spaces and shell metacharacters get a backslash.
pub fn escape_input_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        if c == ' ' || "\\'\"`$&|;<>()[]{}*?!~#%^".contains(c) {
            out.push('\\');
        }
        out.push(c);
    }
    out
}

/// Shell commands for one action, in order. `Wait` has none; the caller
/// sleeps instead.
pub fn adb_serialize(action: &Action, packages: &PackageMap) -> Result<Vec<String>, EnvError> {
    Ok(match action {
        Action::OpenApp { app_name } => {
            let package = packages
                .get(app_name)
                .ok_or_else(|| EnvError::UnknownApp(app_name.clone()))?;
            vec![format!(
                "monkey -p {package} -c android.intent.category.LAUNCHER 1"
            )]
        }
        Action::Tap { x, y } => vec![format!("input tap {x} {y}")],
        Action::Swipe { x1, y1, x2, y2 } => {
            vec![format!("input swipe {x1} {y1} {x2} {y2} {SWIPE_MS}")]
        }
        Action::Type { text } => vec![format!("input text {}", escape_input_text(text))],
        Action::Enter => vec![format!("input keyevent {KEY_ENTER}")],
        Action::Back => vec![format!("input keyevent {KEY_BACK}")],
        Action::Home => vec![format!("input keyevent {KEY_HOME}")],
        Action::Wait => Vec::new(),
        Action::TapTypeEnter { x, y, text } => vec![
            format!("input tap {x} {y}"),
            format!("input text {}", escape_input_text(text)),
            format!("input keyevent {KEY_ENTER}"),
        ],
    })
}

/// A device reached through the `adb` binary.
#[derive(Debug, Clone)]
pub struct AdbDevice {
    pub adb: PathBuf,
    pub serial: Option<String>,
    pub packages: PackageMap,
    pub wait: Duration,
}

impl AdbDevice {
    pub fn new(serial: Option<String>, packages: PackageMap) -> Self {
        Self {
            adb: PathBuf::from("adb"),
            serial,
            packages,
            wait: REAL_WAIT,
        }
    }

    fn command(&self) -> Command {
        let mut cmd = Command::new(&self.adb);
        if let Some(serial) = &self.serial {
            cmd.args(["-s", serial]);
        }
        cmd
    }

    fn run(&self, args: &[&str]) -> Result<Vec<u8>, EnvError> {
        let shown = args.join(" ");
        let out = self.command().args(args).output().map_err(|e| {
            EnvError::DeviceUnavailable(format!("cannot run {}: {e}", self.adb.display()))
        })?;
        if out.status.success() {
            return Ok(out.stdout);
        }
        let stderr = String::from_utf8_lossy(&out.stderr).trim().to_string();
        let lower = stderr.to_lowercase();
        if ["no devices", "not found", "offline", "unauthorized"]
            .iter()
            .any(|s| lower.contains(s))
        {
            Err(EnvError::DeviceUnavailable(stderr))
        } else {
            Err(EnvError::CommandFailed {
                command: shown,
                stderr,
            })
        }
    }

    /// Fails unless the device reports state `device`.
    pub fn ensure_attached(&self) -> Result<(), EnvError> {
        let out = self.run(&["get-state"])?;
        let state = String::from_utf8_lossy(&out).trim().to_string();
        if state == "device" {
            Ok(())
        } else {
            Err(EnvError::DeviceUnavailable(format!("device state is `{state}`")))
        }
    }
}

impl DeviceBackend for AdbDevice {
    fn describe(&self) -> String {
        format!("adb:{}", self.serial.as_deref().unwrap_or("default"))
    }

    fn apps(&self) -> Vec<String> {
        self.packages.keys().cloned().collect()
    }

    fn capture(&mut self) -> Result<Screenshot, EnvError> {
        let png = self.run(&["exec-out", "screencap", "-p"])?;
        Screenshot::from_png(png, &self.describe()).map_err(|e| EnvError::Screenshot(e.to_string()))
    }

    fn execute(&mut self, action: &Action) -> Result<ExecReport, EnvError> {
        let commands = adb_serialize(action, &self.packages)?;
        for command in &commands {
            self.run(&["shell", command])?;
        }
        if matches!(action, Action::Wait) {
            std::thread::sleep(self.wait);
        }
        Ok(ExecReport {
            changed: None,
            screen_before: None,
            screen_after: None,
            oracle: None,
        })
    }
}
