//! Renders stored traces for human review: the tool-call steps, error
//! events, token totals, and any synthetic messages that history repair or
//! summarization left behind.

use std::path::PathBuf;

use tandem_core::trace::{read_traces, CallOutcome, ExecutionTrace, Role};

use crate::error::CliError;
use crate::out;

pub struct InspectArgs {
    pub trace: PathBuf,
    pub task: Option<String>,
}

fn render(trace: &ExecutionTrace) -> String {
    let mut out = String::new();
    let verdict = match trace.error_events.first() {
        Some(event) => format!("FAILED ({})", event.class.as_str()),
        None if trace.final_answer.is_some() => "clean".to_string(),
        None => "no final answer".to_string(),
    };
    out.push_str(&format!("task {} [{verdict}]\n", trace.task_id));
    out.push_str(&format!(
        "tokens: {} in / {} out\n",
        trace.input_tokens, trace.output_tokens
    ));

    if trace.invoked.is_empty() {
        out.push_str("steps: none\n");
    } else {
        out.push_str("steps:\n");
        for (i, call) in trace.invoked.iter().enumerate() {
            let arguments = if call.arguments.is_empty() {
                String::new()
            } else {
                format!(
                    " {}",
                    serde_json::to_string(&call.arguments).expect("arguments serialize")
                )
            };
            let status = match call.outcome {
                CallOutcome::Ok => "ok",
                CallOutcome::Error => "error",
            };
            out.push_str(&format!(
                "  {:>2}. {} [{status}]{arguments}\n",
                i + 1,
                call.tool_name
            ));
        }
    }

    for event in &trace.error_events {
        out.push_str(&format!("error[{}]: {}\n", event.class.as_str(), event.detail));
    }

    if let Some(session) = &trace.session {
        let synthetic: Vec<(usize, &str, &str)> = session
            .messages
            .iter()
            .enumerate()
            .filter(|(_, m)| m.synthetic)
            .map(|(i, m)| (i, role_label(m.role), m.content.as_str()))
            .collect();
        out.push_str(&format!(
            "session: {} messages, {} synthetic\n",
            session.messages.len(),
            synthetic.len()
        ));
        for (index, role, content) in synthetic {
            let preview: String = content.chars().take(72).collect();
            out.push_str(&format!("  repaired [{index}] {role}: {preview}\n"));
        }
    }

    if let Some(answer) = &trace.final_answer {
        out.push_str(&format!("final answer: {answer}\n"));
    }
    out
}

fn role_label(role: Role) -> &'static str {
    match role {
        Role::System => "system",
        Role::Human => "user",
        Role::Ai => "assistant",
        Role::Tool => "tool",
    }
}

pub fn execute(args: InspectArgs) -> Result<(), CliError> {
    let traces = read_traces(&args.trace)?;
    let selected: Vec<&ExecutionTrace> = match &args.task {
        Some(id) => {
            let picked: Vec<&ExecutionTrace> =
                traces.iter().filter(|t| &t.task_id == id).collect();
            if picked.is_empty() {
                return Err(CliError::Input(format!(
                    "no trace for task \"{id}\" in {}",
                    args.trace.display()
                )));
            }
            picked
        }
        None => traces.iter().collect(),
    };
    if selected.is_empty() {
        return Err(CliError::Input(format!(
            "{} holds no traces",
            args.trace.display()
        )));
    }
    for (i, trace) in selected.iter().enumerate() {
        if i > 0 {
            out::emit("\n");
        }
        out::emit(&render(trace));
    }
    Ok(())
}
