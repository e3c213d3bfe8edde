//! Runs one task end to end and stores its execution trace.

use std::collections::BTreeMap;
use std::path::PathBuf;

use tandem_core::config::AppConfig;
use tandem_core::eval::classify_task;
use tandem_core::trace::{load_fixtures, write_traces, TaskFixture};

use crate::error::CliError;
use crate::out;
use crate::wiring;

pub struct RunArgs {
    pub fixtures: Option<PathBuf>,
    pub task: Option<String>,
    pub query: Option<String>,
    pub registry: PathBuf,
    pub profile: PathBuf,
    pub trace_out: PathBuf,
}

fn pick_fixture(args: &RunArgs, tool_names: &[String]) -> Result<TaskFixture, CliError> {
    if let Some(path) = &args.fixtures {
        let fixtures = load_fixtures(path)?;
        let fixture = match &args.task {
            Some(id) => fixtures
                .into_iter()
                .find(|f| &f.task_id == id)
                .ok_or_else(|| {
                    CliError::Input(format!("no task \"{id}\" in {}", path.display()))
                })?,
            None => fixtures.into_iter().next().ok_or_else(|| {
                CliError::Input(format!("{} holds no tasks", path.display()))
            })?,
        };
        fixture.validate()?;
        return Ok(fixture);
    }
    // Ad hoc request: one turn, the whole registry as candidates, nothing
    // required, so any classification except failed means a clean run.
    let query = args.query.as_ref().expect("parser enforces the source group");
    Ok(TaskFixture {
        task_id: "adhoc".to_string(),
        turns: vec![query.clone()],
        candidate_tools: tool_names.to_vec(),
        reference_sequence: Vec::new(),
        reference_answer: String::new(),
        metadata: BTreeMap::new(),
    })
}

pub fn execute(config: &AppConfig, args: RunArgs) -> Result<(), CliError> {
    let host = wiring::load_host(&args.registry)?;
    let profile = wiring::load_profile(&args.profile)?;
    let runner = wiring::build_runner(config, profile, &host)?;
    let model_for = wiring::model_factory(config, &host.schemas)?;

    let names: Vec<String> = host.schemas.iter().map(|s| s.tool_name.clone()).collect();
    let fixture = pick_fixture(&args, &names)?;
    let model = model_for(&fixture);

    let (trace, _session) = runner.run_task(&fixture, model.as_ref())?;
    write_traces(&args.trace_out, &[trace.clone()])
        .map_err(|e| CliError::Output(e.to_string()))?;

    // The run itself succeeded; classification is reporting, not a verdict
    // on the command.
    let outcome = classify_task(&fixture, &trace)?;
    out::emit_line(&format!(
        "task {}: {} ({} calls, {} error events, {} in / {} out tokens)",
        fixture.task_id,
        outcome.classification.as_str(),
        trace.invoked.len(),
        trace.error_events.len(),
        trace.input_tokens,
        trace.output_tokens,
    ));
    out::emit_line(&format!("trace written to {}", args.trace_out.display()));
    Ok(())
}
