//! Registry utilities: list what a registry (or a running tool server)
//! offers, and validate a registry file without executing anything.

use std::collections::BTreeSet;
use std::path::PathBuf;

use tandem_core::toolhost::{load_registry_schemas, CostClass, ToolSchema, Transport};

use crate::error::CliError;
use crate::out;

pub struct ListArgs {
    pub registry: PathBuf,
    pub remote: Option<String>,
}

pub struct ValidateArgs {
    pub registry: PathBuf,
}

fn describe(schema: &ToolSchema) -> String {
    let required = schema.parameters.iter().filter(|p| p.required).count();
    let optional = schema.parameters.len() - required;
    let cost = match schema.cost_class {
        CostClass::Cheap => "",
        CostClass::Expensive => " [expensive]",
    };
    format!(
        "{:<24} {:<22} {} required / {} optional{}\n    {}",
        schema.tool_name,
        schema.category.label(),
        required,
        optional,
        cost,
        schema.description
    )
}

pub fn list(args: ListArgs) -> Result<(), CliError> {
    let schemas = match &args.remote {
        Some(addr) => Transport::remote(addr.clone())
            .list_tools()
            .map_err(|e| CliError::Provider(format!("{addr}: {e}")))?,
        None => load_registry_schemas(&args.registry)?,
    };
    for schema in &schemas {
        out::emit_line(&describe(schema));
    }
    out::emit_line(&format!("{} tools", schemas.len()));
    Ok(())
}

pub fn validate(args: ValidateArgs) -> Result<(), CliError> {
    let schemas = load_registry_schemas(&args.registry)?;
    let mut problems = Vec::new();
    let mut names = BTreeSet::new();
    for schema in &schemas {
        // Validation sees what registration would see: the enriched text
        // fallback applies before the rules run.
        let mut canonical = schema.clone();
        canonical.canonicalize();
        if let Err(error) = canonical.validate() {
            problems.push(format!("{}: {error}", schema.tool_name));
        }
        if !names.insert(schema.tool_name.clone()) {
            problems.push(format!("{}: duplicate tool name", schema.tool_name));
        }
    }
    if problems.is_empty() {
        out::emit_line(&format!("registry ok: {} tools", schemas.len()));
        Ok(())
    } else {
        Err(CliError::Input(format!(
            "registry rejected:\n  {}",
            problems.join("\n  ")
        )))
    }
}
