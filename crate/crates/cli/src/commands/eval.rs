//! Evaluates a fixture suite across subsystem variants and writes one
//! report per variant plus a side-by-side comparison. Deterministic with
//! the offline doubles: identical inputs produce byte-identical files.

use std::collections::BTreeSet;
use std::fs;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use tandem_core::config::AppConfig;
use tandem_core::engine::{AblationFlags, Runner};
use tandem_core::eval::{evaluate_run, render_comparison, render_report_text, MetricsReport};
use tandem_core::providers::ModelProvider;
use tandem_core::trace::{load_fixtures, ExecutionTrace, TaskFixture};

use crate::error::CliError;
use crate::out;
use crate::wiring;

pub struct EvalArgs {
    pub fixtures: PathBuf,
    pub registry: PathBuf,
    pub profile: PathBuf,
    pub variants: Vec<AblationFlags>,
    pub judge: bool,
    pub report_dir: PathBuf,
    pub jobs: usize,
}

/// File stem for a variant's reports, matching the flag spelling.
fn file_stem(flags: AblationFlags) -> &'static str {
    match flags.variant_name() {
        "Base" => "base",
        "B-P" => "bp",
        "B-PT" => "bpt",
        "Jenius" => "full",
        _ => "custom",
    }
}

/// Every fixture must hold before anything runs; all offenders are named at
/// once so one pass fixes the file.
fn check_suite(fixtures: &[TaskFixture], registry_names: &BTreeSet<String>) -> Result<(), CliError> {
    let mut problems = Vec::new();
    let mut seen = BTreeSet::new();
    for fixture in fixtures {
        if let Err(error) = fixture.validate() {
            problems.push(format!("{}: {error}", fixture.task_id));
        }
        if !seen.insert(fixture.task_id.clone()) {
            problems.push(format!("{}: duplicate task id", fixture.task_id));
        }
        for tool in &fixture.candidate_tools {
            if !registry_names.contains(tool) {
                problems.push(format!("{}: unknown candidate tool \"{tool}\"", fixture.task_id));
            }
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(CliError::Input(format!(
            "fixture suite rejected:\n  {}",
            problems.join("\n  ")
        )))
    }
}

/// Runs every task under one variant, fanning out across `jobs` workers.
/// Traces land in fixture order regardless of completion order.
fn run_suite(
    runner: &Runner,
    fixtures: &[TaskFixture],
    model_for: &(dyn Fn(&TaskFixture) -> Box<dyn ModelProvider> + Sync + Send),
    jobs: usize,
) -> Result<Vec<ExecutionTrace>, CliError> {
    let workers = jobs.max(1).min(fixtures.len().max(1));
    if workers <= 1 {
        let mut traces = Vec::with_capacity(fixtures.len());
        for fixture in fixtures {
            let model = model_for(fixture);
            let (trace, _) = runner.run_task(fixture, model.as_ref())?;
            traces.push(trace);
        }
        return Ok(traces);
    }

    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<ExecutionTrace, CliError>>>> =
        fixtures.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= fixtures.len() {
                    break;
                }
                let model = model_for(&fixtures[i]);
                let outcome = runner
                    .run_task(&fixtures[i], model.as_ref())
                    .map(|(trace, _)| trace)
                    .map_err(CliError::from);
                *slots[i].lock().expect("no panics hold this lock") = Some(outcome);
            });
        }
    });
    let mut traces = Vec::with_capacity(fixtures.len());
    for slot in slots {
        let outcome = slot
            .into_inner()
            .expect("no panics hold this lock")
            .expect("every index was claimed by a worker");
        traces.push(outcome?);
    }
    Ok(traces)
}

fn partition_line(report: &MetricsReport) -> String {
    format!("partition check:   {:.9}\n", report.tcr + report.tfr + report.tir)
}

pub fn execute(config: &AppConfig, args: EvalArgs) -> Result<(), CliError> {
    let host = wiring::load_host(&args.registry)?;
    let profile = wiring::load_profile(&args.profile)?;
    let runner = wiring::build_runner(config, profile, &host)?;
    let model_for = wiring::model_factory(config, &host.schemas)?;
    let judge = if args.judge {
        Some(wiring::build_judge(config)?)
    } else {
        None
    };

    let fixtures = load_fixtures(&args.fixtures)?;
    if fixtures.is_empty() {
        return Err(CliError::Input(format!(
            "{} holds no tasks",
            args.fixtures.display()
        )));
    }
    let registry_names: BTreeSet<String> =
        host.schemas.iter().map(|s| s.tool_name.clone()).collect();
    check_suite(&fixtures, &registry_names)?;

    fs::create_dir_all(&args.report_dir)
        .map_err(|e| CliError::Output(format!("{}: {e}", args.report_dir.display())))?;

    let mut reports: Vec<(String, MetricsReport)> = Vec::with_capacity(args.variants.len());
    for flags in &args.variants {
        let variant_runner = runner.with_ablation(*flags);
        let traces = run_suite(&variant_runner, &fixtures, model_for.as_ref(), args.jobs)?;
        let report = evaluate_run(
            &fixtures,
            &traces,
            judge.as_deref(),
            config.eval.lambda_w,
            config.eval.lambda_m,
        )?;

        let stem = file_stem(*flags);
        let text = format!(
            "variant: {}\n{}{}",
            flags.variant_name(),
            render_report_text(&report),
            partition_line(&report)
        );
        let write = |name: String, bytes: &[u8]| -> Result<(), CliError> {
            let path = args.report_dir.join(name);
            fs::write(&path, bytes).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
        };
        write(format!("report-{stem}.txt"), text.as_bytes())?;
        let json = serde_json::to_string_pretty(&report)
            .expect("reports serialize") + "\n";
        write(format!("report-{stem}.json"), json.as_bytes())?;
        out::emit(&text);
        out::emit("\n");
        reports.push((flags.variant_name().to_string(), report));
    }

    let comparison = render_comparison(&reports);
    let path = args.report_dir.join("comparison.txt");
    fs::write(&path, comparison.as_bytes())
        .map_err(|e| CliError::Output(format!("{}: {e}", path.display())))?;
    out::emit(&comparison);
    out::emit_line(&format!("reports written to {}", args.report_dir.display()));
    Ok(())
}
