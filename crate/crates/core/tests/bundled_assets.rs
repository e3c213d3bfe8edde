//! Health checks for the data files shipped under assets/: the tool
//! registry, the demo fixture suite, and the agent profile with its prompt
//! templates. These catch drift between the bundled data and the code that
//! consumes it.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use tandem_core::prompt::{classify_intent, compose_prompt, AgentProfile};
use tandem_core::toolhost::{
    bind_default_executors, load_registry_schemas, validate_arguments, CostClass, ParamType,
    ToolSchema, ToolStatus, Transport,
};
use tandem_core::trace::load_fixtures;

fn assets_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets")
}

fn probe_args(schema: &ToolSchema) -> BTreeMap<String, serde_json::Value> {
    let mut args = BTreeMap::new();
    for param in &schema.parameters {
        if !param.required {
            continue;
        }
        let value = if let Some(options) = param.constraint.strip_prefix("oneof:") {
            serde_json::json!(options.split('|').next().expect("nonempty options"))
        } else {
            match param.param_type {
                ParamType::Text => serde_json::json!("asset probe"),
                ParamType::Url => serde_json::json!("https://example.com/resource"),
                ParamType::Integer => serde_json::json!(2),
                ParamType::Number => serde_json::json!(1.5),
                ParamType::Boolean => serde_json::json!(true),
            }
        };
        args.insert(param.name.clone(), value);
    }
    args
}

#[test]
fn registry_loads_binds_and_answers() {
    let schemas = load_registry_schemas(&assets_dir().join("registry.jsonl")).expect("load");
    assert!(schemas.len() >= 100, "registry holds {} tools", schemas.len());

    let names: BTreeSet<&str> = schemas.iter().map(|s| s.tool_name.as_str()).collect();
    assert_eq!(names.len(), schemas.len(), "tool names must be unique");

    let categories: BTreeSet<&str> = schemas.iter().map(|s| s.category.label()).collect();
    assert_eq!(categories.len(), 7, "every category is represented: {categories:?}");

    let expensive = schemas
        .iter()
        .filter(|s| s.cost_class == CostClass::Expensive)
        .count();
    assert!(expensive >= 5, "registry ships {expensive} expensive tools");
    for schema in &schemas {
        assert_eq!(
            schema.cost_class == CostClass::Expensive,
            !schema.confirmation_prompt.is_empty(),
            "{} pairs cost class with a confirmation prompt",
            schema.tool_name
        );
    }

    // Binding validates every schema; a full dispatch sweep proves each
    // declared parameter list is satisfiable and each executor answers.
    let registry = bind_default_executors(schemas).expect("bind");
    let bound = registry.schemas();
    let transport = Transport::in_process(Arc::new(registry));
    for (i, schema) in bound.iter().enumerate() {
        let validated = validate_arguments(schema, &probe_args(schema))
            .into_result()
            .unwrap_or_else(|reason| panic!("{} rejects probe args: {reason}", schema.tool_name));
        let validated = if schema.cost_class == CostClass::Expensive {
            validated.with_confirmation()
        } else {
            validated
        };
        let result = transport.invoke(&validated, &format!("asset-{i}"));
        assert_eq!(
            result.status,
            ToolStatus::Ok,
            "{} failed: {}",
            schema.tool_name,
            result.content
        );
        assert!(!result.content.is_empty());
    }
}

#[test]
fn fixture_suite_is_well_formed() {
    let assets = assets_dir();
    let fixtures = load_fixtures(&assets.join("fixtures/demo.jsonl")).expect("load");
    assert_eq!(fixtures.len(), 10);

    let registry_names: BTreeSet<String> = load_registry_schemas(&assets.join("registry.jsonl"))
        .expect("registry")
        .into_iter()
        .map(|s| s.tool_name)
        .collect();

    let mut ids = BTreeSet::new();
    let mut longest_dialogue = 0usize;
    for fixture in &fixtures {
        fixture.validate().expect("fixture invariants");
        assert!(ids.insert(fixture.task_id.clone()), "duplicate id {}", fixture.task_id);
        assert!(!fixture.reference_sequence.is_empty(), "{} has no reference", fixture.task_id);
        for tool in &fixture.candidate_tools {
            assert!(
                registry_names.contains(tool),
                "{} lists unknown candidate {tool}",
                fixture.task_id
            );
        }
        assert!(
            fixture.candidate_tools.len() >= 20,
            "{} offers only {} candidates; distractor pressure is part of the suite",
            fixture.task_id,
            fixture.candidate_tools.len()
        );
        longest_dialogue = longest_dialogue.max(fixture.turns.len());
    }
    assert!(
        longest_dialogue >= 7,
        "suite needs a long dialogue to exercise history folding, longest is {longest_dialogue}"
    );
}

#[test]
fn profile_and_templates_compose() {
    let assets = assets_dir();
    let profile = AgentProfile::load(&assets.join("profile.toml")).expect("profile");
    assert!(profile.safety_rules.len() >= 2, "bundled profile ships safety rules");

    let schemas = load_registry_schemas(&assets.join("registry.jsonl")).expect("registry");
    let tools: Vec<_> = schemas
        .iter()
        .filter(|s| s.tool_name == "weather_lookup" || s.tool_name == "web_search")
        .cloned()
        .collect();
    assert_eq!(tools.len(), 2, "expected well-known tools in the registry");

    let utterance = "look up the weather in Vienna and search for museum hours";
    let intent = classify_intent(utterance, &tools);
    let bundle = compose_prompt(&profile, intent, &tools, None, "en");
    assert!(bundle.system_prompt.contains("weather_lookup"));
    assert!(bundle.system_prompt.contains("web_search"));
    assert!(!bundle.sections.is_empty());

    // Byte-stable composition: the same inputs render the same prompt.
    let again = compose_prompt(&profile, intent, &tools, None, "en");
    assert_eq!(bundle.system_prompt, again.system_prompt);
}
