use std::io::{self, BufRead};
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use mar_core::agents::{HttpProvider, Provider, ScriptedProvider};
use mar_core::environment::{
    AdbDevice, BlankPerceptor, DeviceBackend, PackageMap, Perceptor, Scenario, SimDevice, SimPerceptor,
};
use mar_core::evaluation::{
    compute_metrics, load_judgments, run_benchmark, BenchConfig, CompletionCriteria, StepAnnotations, Suite,
};
use mar_core::kb;
use mar_core::model::TaskInstruction;
use mar_core::orchestrator::{run_task, RunConfig, RunContext, TerminationReason, Trajectory};
use mar_core::retrieval::{load_knowledge_base, write_jsonl, EmbedderSpec, KbLayout, KnowledgeBase};

use crate::{BenchArgs, EvalArgs, KbCommand, RetrievalArgs, RunArgs};

fn provider_from(spec: &str) -> Result<Arc<dyn Provider>> {
    if let Some(path) = spec.strip_prefix("scripted:") {
        return Ok(Arc::new(ScriptedProvider::load(Path::new(path))?));
    }
    if spec == "http" {
        return Ok(Arc::new(HttpProvider::from_env()?));
    }
    if let Some(url) = spec.strip_prefix("http:") {
        let key = std::env::var(mar_core::agents::PROVIDER_KEY_ENV).ok();
        return Ok(Arc::new(HttpProvider::new(url, key)?));
    }
    bail!("provider must be `scripted:<file>`, `http` or `http:<url>`, got `{spec}`")
}

fn knowledge_base(args: &RetrievalArgs) -> Result<Arc<KnowledgeBase>> {
    let spec: EmbedderSpec = args.embedder.parse()?;
    let embedder = spec.connect(!args.strict_embedder)?;
    let kb = match &args.kb {
        Some(dir) => load_knowledge_base(dir, embedder)
            .with_context(|| format!("loading knowledge base {}", dir.display()))?,
        None => {
            log::warn!("no --kb given; running without retrieval exemplars");
            KnowledgeBase::empty(embedder)
        }
    };
    Ok(Arc::new(kb))
}

fn run_config(max_steps: usize, repeat_cap: usize, k: usize) -> Result<RunConfig> {
    let cfg = RunConfig {
        max_steps,
        repeat_cap,
        k_retrieve: k,
        ..RunConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn task_text(arg: &str) -> Result<String> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(text.trim().to_string())
    } else {
        Ok(arg.to_string())
    }
}

pub fn run(args: RunArgs) -> Result<()> {
    let instruction = TaskInstruction::new(task_text(&args.task)?)?;
    let config = run_config(args.max_steps, args.repeat_cap, args.k)?;
    let kb = knowledge_base(&args.retrieval)?;
    let provider = provider_from(&args.provider)?;

    let scenario = match &args.scenario {
        Some(p) => Some(Arc::new(Scenario::load(p)?)),
        None => None,
    };
    let (mut device, perceptor): (Box<dyn DeviceBackend>, Arc<dyn Perceptor>) = match &scenario {
        Some(s) => (Box::new(SimDevice::new(s.clone())), Arc::new(SimPerceptor)),
        None => {
            let spec = args.device.as_deref().unwrap_or("adb");
            let serial = match spec.strip_prefix("adb") {
                Some("") => None,
                Some(rest) => Some(rest.trim_start_matches(':').to_string()),
                None => bail!("device must be `adb` or `adb:<serial>`, got `{spec}`"),
            };
            let packages: PackageMap = match &args.apps {
                Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?)
                    .with_context(|| format!("parsing app map {}", p.display()))?,
                None => bail!("--apps is required with --device"),
            };
            let adb = AdbDevice::new(serial, packages);
            adb.ensure_attached()?;
            log::warn!("no screen parser is bundled for real devices; perception is empty");
            (Box::new(adb), Arc::new(BlankPerceptor))
        }
    };

    let ctx = RunContext {
        provider,
        kb,
        perceptor,
        config,
    };
    let traj = run_task(&instruction, args.task_id.clone(), device.as_mut(), &ctx);
    traj.save(&args.out)?;
    println!(
        "{} after {} steps ({}); trajectory in {}",
        termination_text(traj.termination.reason),
        traj.step_count(),
        traj.termination.detail.as_deref().unwrap_or("-"),
        args.out.display()
    );

    if let Some(staging) = &args.log_kb {
        let success = match &scenario {
            Some(s) if !s.completion_items.is_empty() => {
                let criteria = CompletionCriteria {
                    task_id: traj.task_id.clone().unwrap_or_default(),
                    items: s.completion_items.clone(),
                };
                compute_metrics(&traj, Some(s), &criteria, None, None)?.sr
            }
            _ => traj.termination.reason == TerminationReason::ManagerDone,
        };
        match kb::log_trajectory(staging, &traj, success) {
            Some(path) => println!("trace logged to {}", path.display()),
            None => log::warn!("trace was not logged"),
        }
    }
    Ok(())
}

fn termination_text(reason: TerminationReason) -> &'static str {
    match reason {
        TerminationReason::ManagerDone => "finished",
        TerminationReason::MaxSteps => "stopped at the step limit",
        TerminationReason::RepetitionCap => "stopped on repeated actions",
        TerminationReason::ProviderFailure => "stopped on a provider failure",
        TerminationReason::DeviceFailure => "stopped on a device failure",
    }
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let traj = Trajectory::load(&args.trajectory)?;
    let criteria = CompletionCriteria::load(&args.criteria)?;
    let judgments = args.judgments.as_deref().map(load_judgments).transpose()?;
    let scenario = args.scenario.as_deref().map(Scenario::load).transpose()?;
    let annotations = args.annotations.as_deref().map(StepAnnotations::load).transpose()?;
    let m = compute_metrics(&traj, scenario.as_ref(), &criteria, judgments.as_ref(), annotations.as_ref())?;
    println!("{}", serde_json::to_string_pretty(&m)?);
    Ok(())
}

pub fn bench(args: BenchArgs) -> Result<()> {
    let suite = Suite::load(&args.suite)?;
    let cfg = BenchConfig {
        run: run_config(args.max_steps, args.repeat_cap, args.k)?,
        workers: args.workers.max(1),
        kb: knowledge_base(&args.retrieval)?,
        perceptor: Arc::new(SimPerceptor),
        provider: args.provider.as_deref().map(provider_from).transpose()?,
        out_dir: Some(args.out.clone()),
    };
    let report = run_benchmark(&suite, &cfg)?;
    report.save(&args.out)?;
    print!("{}", report.to_text());
    Ok(())
}

pub fn kb(cmd: KbCommand) -> Result<()> {
    match cmd {
        KbCommand::Log {
            trajectory,
            staging,
            failed,
        } => {
            let traj = Trajectory::load(&trajectory)?;
            let path = kb::log_trajectory(&staging, &traj, !failed).context("trace was not logged")?;
            println!("{}", path.display());
        }
        KbCommand::Filter { input, out } => {
            let traces = kb::read_traces(&input)?;
            let kept = kb::filter_traces(&traces);
            let staged = kb::write_filtered(&input, &kept, &out)?;
            println!(
                "kept {} of {} traces; staged {} entries in {}",
                kept.len(),
                traces.len(),
                staged.len(),
                out.join(kb::STAGED_FILE).display()
            );
        }
        KbCommand::BuildManager { input, out } => {
            let docs = kb::build_manager_kb(&kb::parse_manager_source(&input)?)?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            write_jsonl(&out, &docs)?;
            println!("wrote {} manager docs to {}", docs.len(), out.display());
        }
        KbCommand::Curate {
            staging,
            decisions,
            out,
            interactive,
        } => {
            let staged = mar_core::retrieval::read_jsonl(&staging.join(kb::STAGED_FILE))?;
            let all = if interactive {
                let stdin = io::stdin();
                let mut input = stdin.lock();
                kb::curate_interactive(&staged, &decisions, &mut input as &mut dyn BufRead, &mut io::stdout())?
            } else {
                kb::read_decisions(&decisions)?
            };
            let summary = kb::curate(&staging, &staged, &all, &out)?;
            println!(
                "accepted {}, edited {}, rejected {}",
                summary.accepted, summary.edited, summary.rejected
            );
            let layout = KbLayout::new(&out);
            for (app, n) in &summary.per_app {
                println!("  {app}: {n} docs -> {}", layout.operator_file(app).display());
            }
        }
    }
    Ok(())
}
