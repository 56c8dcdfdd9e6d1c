//! Suite runner: runs tasks in parallel and aggregates metrics.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::criteria::{load_judgments, CompletionCriteria};
use super::metrics::{compute_efficiency, compute_metrics, round_to, MetricsRecord};
use super::EvalError;
use crate::agents::{Provider, ScriptedProvider, UsageLedger};
use crate::environment::{Scenario, SimDevice};
use crate::model::TaskInstruction;
use crate::orchestrator::{run_task, RunConfig, RunContext};
use crate::environment::Perceptor;
use crate::retrieval::KnowledgeBase;

/// One suite entry. Paths resolve against the suite file's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteTask {
    pub task_id: String,
    #[serde(default = "default_category")]
    pub category: String,
    pub instruction: String,
    pub scenario: PathBuf,
    /// Falls back to the scenario's own completion items.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criteria: Option<PathBuf>,
    /// Scripted provider for this task; otherwise the suite's shared provider.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judgments: Option<PathBuf>,
}

fn default_category() -> String {
    "uncategorized".into()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Suite {
    pub tasks: Vec<SuiteTask>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Suite {
    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path).map_err(|e| EvalError::io(path, e))?;
        let mut suite: Suite = serde_json::from_str(&text)
            .map_err(|e| EvalError::InvalidSuite(format!("{}: {e}", path.display())))?;
        suite.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(suite)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }
}

pub struct BenchConfig {
    pub run: RunConfig,
    pub workers: usize,
    pub kb: Arc<KnowledgeBase>,
    pub perceptor: Arc<dyn Perceptor>,
    /// Provider for tasks without a script.
    pub provider: Option<Arc<dyn Provider>>,
    /// Where per-task trajectories go, if anywhere.
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task_id: String,
    pub category: String,
    pub metrics: Option<MetricsRecord>,
    /// Why the run produced no metrics.
    pub error: Option<String>,
    pub usage: UsageLedger,
}

/// Means over runs with metrics; SR counts failed runs as failures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub tasks: usize,
    pub failed_runs: usize,
    pub sr: f64,
    pub cr: Option<f64>,
    pub oa: Option<f64>,
    pub ra: Option<f64>,
    pub steps: Option<f64>,
    /// Mean CR over mean Steps.
    pub efficiency: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub tasks: Vec<TaskReport>,
    pub categories: BTreeMap<String, Aggregate>,
    pub overall: Aggregate,
    pub usage: UsageLedger,
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn aggregate<'a>(reports: impl IntoIterator<Item = &'a TaskReport>) -> Aggregate {
    let reports: Vec<_> = reports.into_iter().collect();
    let ok: Vec<&MetricsRecord> = reports.iter().filter_map(|r| r.metrics.as_ref()).collect();
    let cr = mean(ok.iter().map(|m| m.cr));
    let steps = mean(ok.iter().map(|m| m.steps as f64));
    let successes = ok.iter().filter(|m| m.sr).count();
    Aggregate {
        tasks: reports.len(),
        failed_runs: reports.len() - ok.len(),
        sr: if reports.is_empty() {
            0.0
        } else {
            100.0 * successes as f64 / reports.len() as f64
        },
        oa: mean(ok.iter().filter_map(|m| m.oa)),
        ra: mean(ok.iter().filter_map(|m| m.ra)),
        efficiency: match (cr, steps) {
            (Some(c), Some(s)) => compute_efficiency(c, s).ok(),
            _ => None,
        },
        cr,
        steps,
    }
}

fn run_one(suite: &Suite, task: &SuiteTask, cfg: &BenchConfig) -> TaskReport {
    let mut usage = UsageLedger::default();
    let result = (|| -> Result<MetricsRecord, String> {
        let instruction = TaskInstruction::new(task.instruction.clone()).map_err(|e| e.to_string())?;
        let scenario = Arc::new(Scenario::load(&suite.resolve(&task.scenario)).map_err(|e| e.to_string())?);
        let criteria = match &task.criteria {
            Some(p) => CompletionCriteria::load(&suite.resolve(p)).map_err(|e| e.to_string())?,
            None => {
                let c = CompletionCriteria {
                    task_id: task.task_id.clone(),
                    items: scenario.completion_items.clone(),
                };
                c.validate().map_err(|e| e.to_string())?;
                c
            }
        };
        let judgments = match &task.judgments {
            Some(p) => Some(load_judgments(&suite.resolve(p)).map_err(|e| e.to_string())?),
            None => None,
        };
        let provider: Arc<dyn Provider> = match (&task.script, &cfg.provider) {
            (Some(script), _) => Arc::new(
                ScriptedProvider::load(&suite.resolve(script)).map_err(|e| e.to_string())?,
            ),
            (None, Some(shared)) => shared.clone(),
            (None, None) => return Err("task has no script and no provider is configured".into()),
        };
        let ctx = RunContext {
            provider,
            kb: cfg.kb.clone(),
            perceptor: cfg.perceptor.clone(),
            config: cfg.run,
        };
        let mut device = SimDevice::new(scenario.clone());
        let traj = run_task(&instruction, Some(task.task_id.clone()), &mut device, &ctx);
        usage = traj.usage.clone();
        if let Some(out) = &cfg.out_dir {
            traj.save(&out.join(&task.task_id)).map_err(|e| e.to_string())?;
        }
        let mut criteria = criteria;
        criteria.task_id = task.task_id.clone();
        compute_metrics(&traj, Some(&scenario), &criteria, judgments.as_ref(), None)
            .map_err(|e| e.to_string())
    })();
    match result {
        Ok(m) => TaskReport {
            task_id: task.task_id.clone(),
            category: task.category.clone(),
            metrics: Some(m),
            error: None,
            usage,
        },
        Err(e) => {
            log::error!("task {} failed: {e}", task.task_id);
            TaskReport {
                task_id: task.task_id.clone(),
                category: task.category.clone(),
                metrics: None,
                error: Some(e),
                usage,
            }
        }
    }
}

/// Runs every task on `cfg.workers` threads; a failing task never aborts
/// the suite.
pub fn run_benchmark(suite: &Suite, cfg: &BenchConfig) -> Result<BenchReport, EvalError> {
    if suite.tasks.is_empty() {
        return Err(EvalError::InvalidSuite("suite has no tasks".into()));
    }
    let mut ids = std::collections::BTreeSet::new();
    for t in &suite.tasks {
        if !ids.insert(t.task_id.as_str()) {
            return Err(EvalError::InvalidSuite(format!("duplicate task id `{}`", t.task_id)));
        }
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<TaskReport>>> = Mutex::new(vec![None; suite.tasks.len()]);
    let workers = cfg.workers.clamp(1, suite.tasks.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(task) = suite.tasks.get(i) else { break };
                let report = run_one(suite, task, cfg);
                slots.lock().expect("report slots poisoned")[i] = Some(report);
            });
        }
    });
    let tasks: Vec<TaskReport> = slots
        .into_inner()
        .expect("report slots poisoned")
        .into_iter()
        .map(|r| r.expect("every task reported"))
        .collect();
    let mut by_category: BTreeMap<String, Vec<&TaskReport>> = BTreeMap::new();
    let mut usage = UsageLedger::default();
    for t in &tasks {
        by_category.entry(t.category.clone()).or_default().push(t);
        usage.merge(&t.usage);
    }
    let categories = by_category
        .into_iter()
        .map(|(c, reports)| (c, aggregate(reports)))
        .collect();
    Ok(BenchReport {
        overall: aggregate(&tasks),
        categories,
        tasks,
        usage,
    })
}

fn pct(v: Option<f64>) -> String {
    v.map_or("-".into(), |v| format!("{:.1}", round_to(v, 1)))
}

impl BenchReport {
    /// Aligned table: one row per task, per category and overall.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let header = ["Task", "Category", "SR", "CR", "OA", "RA", "Steps", "Efficiency"];
        let mut rows: Vec<[String; 8]> = Vec::new();
        for t in &self.tasks {
            rows.push(match &t.metrics {
                Some(m) => [
                    t.task_id.clone(),
                    t.category.clone(),
                    if m.sr { "yes".into() } else { "no".into() },
                    pct(Some(m.cr)),
                    pct(m.oa),
                    pct(m.ra),
                    m.steps.to_string(),
                    m.efficiency.map_or("-".into(), |e| format!("{:.2}", round_to(e, 2))),
                ],
                None => [
                    t.task_id.clone(),
                    t.category.clone(),
                    "failed".into(),
                    "-".into(),
                    "-".into(),
                    "-".into(),
                    "-".into(),
                    "-".into(),
                ],
            });
        }
        let agg_row = |name: &str, a: &Aggregate| {
            [
                name.to_string(),
                format!("{} tasks", a.tasks),
                pct(Some(a.sr)),
                pct(a.cr),
                pct(a.oa),
                pct(a.ra),
                pct(a.steps),
                a.efficiency.map_or("-".into(), |e| format!("{:.2}", round_to(e, 2))),
            ]
        };
        for (c, a) in &self.categories {
            rows.push(agg_row(&format!("[{c}]"), a));
        }
        rows.push(agg_row("[overall]", &self.overall));
        let mut widths = header.map(str::len);
        for r in &rows {
            for (w, cell) in widths.iter_mut().zip(r) {
                *w = (*w).max(cell.len());
            }
        }
        let line = |cells: &[String]| {
            cells
                .iter()
                .zip(widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        let _ = writeln!(out, "{}", line(&header.map(String::from)));
        for r in &rows {
            let _ = writeln!(out, "{}", line(r));
        }
        out
    }

    pub fn save(&self, dir: &Path) -> Result<(), EvalError> {
        std::fs::create_dir_all(dir).map_err(|e| EvalError::io(dir, e))?;
        let json = dir.join("report.json");
        std::fs::write(&json, serde_json::to_string_pretty(self).expect("report serializes") + "\n")
            .map_err(|e| EvalError::io(&json, e))?;
        let txt = dir.join("report.txt");
        std::fs::write(&txt, self.to_text()).map_err(|e| EvalError::io(&txt, e))
    }
}
