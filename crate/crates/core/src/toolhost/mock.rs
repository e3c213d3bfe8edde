//! Deterministic executors for offline runs and tests.
//!
//! The bundled registry binds every schema to one of these. Outputs are pure
//! functions of the arguments so that repeated runs produce byte-identical
//! traces. A handful of well-known tool names get flavored responses; every
//! other name falls back to [`CannedExecutor`].

use std::collections::{BTreeMap, VecDeque};
use std::sync::{Arc, Mutex};

use crate::toolhost::{Registry, ToolExecutor, ToolFault, ToolSchema, ToolhostError};
use crate::trace::ErrorClass;

fn arg_str<'a>(args: &'a BTreeMap<String, serde_json::Value>, key: &str) -> &'a str {
    args.get(key).and_then(|v| v.as_str()).unwrap_or("unspecified")
}

fn render_args(args: &BTreeMap<String, serde_json::Value>) -> String {
    if args.is_empty() {
        return "no arguments".to_string();
    }
    args.iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Echoes the tool name and arguments back as a completed report.
pub struct CannedExecutor {
    tool_name: String,
}

impl CannedExecutor {
    pub fn new(tool_name: impl Into<String>) -> Self {
        Self {
            tool_name: tool_name.into(),
        }
    }
}

impl ToolExecutor for CannedExecutor {
    fn execute(
        &self,
        arguments: &BTreeMap<String, serde_json::Value>,
    ) -> Result<String, ToolFault> {
        Ok(format!(
            "{} completed with {}",
            self.tool_name,
            render_args(arguments)
        ))
    }
}

/// Replays a scripted sequence of outcomes, one per invocation. Used to
/// exercise retry behavior: script failures first, then success.
pub struct ScriptedExecutor {
    outcomes: Mutex<VecDeque<Result<String, ToolFault>>>,
}

impl ScriptedExecutor {
    pub fn new(outcomes: Vec<Result<String, ToolFault>>) -> Self {
        Self {
            outcomes: Mutex::new(outcomes.into()),
        }
    }
}

impl ToolExecutor for ScriptedExecutor {
    fn execute(
        &self,
        _arguments: &BTreeMap<String, serde_json::Value>,
    ) -> Result<String, ToolFault> {
        let mut outcomes = self.outcomes.lock().expect("no panics hold this lock");
        outcomes.pop_front().unwrap_or_else(|| {
            Err(ToolFault::new(
                ErrorClass::ToolCrash,
                "scripted executor exhausted",
            ))
        })
    }
}

struct WeatherExecutor;

impl ToolExecutor for WeatherExecutor {
    fn execute(
        &self,
        arguments: &BTreeMap<String, serde_json::Value>,
    ) -> Result<String, ToolFault> {
        let city = arg_str(arguments, "city");
        // Stable pseudo-conditions derived from the city name.
        let temp = 8 + (city.len() as i64 * 3) % 20;
        let sky = if city.len() % 2 == 0 { "clear" } else { "overcast" };
        Ok(format!("Weather in {city}: {sky}, {temp} C, wind 3 m/s"))
    }
}

struct SearchExecutor;

impl ToolExecutor for SearchExecutor {
    fn execute(
        &self,
        arguments: &BTreeMap<String, serde_json::Value>,
    ) -> Result<String, ToolFault> {
        let query = arg_str(arguments, "query");
        Ok(format!(
            "Top results for \"{query}\": 1) {query} overview https://example.com/a \
             2) {query} guide https://example.com/b 3) {query} reference https://example.com/c"
        ))
    }
}

struct UrlReaderExecutor;

impl ToolExecutor for UrlReaderExecutor {
    fn execute(
        &self,
        arguments: &BTreeMap<String, serde_json::Value>,
    ) -> Result<String, ToolFault> {
        let url = arg_str(arguments, "url");
        Ok(format!(
            "Fetched {url}: Example Domain. This page is a stable stand-in for remote content."
        ))
    }
}

struct BookingExecutor {
    kind: &'static str,
}

impl ToolExecutor for BookingExecutor {
    fn execute(
        &self,
        arguments: &BTreeMap<String, serde_json::Value>,
    ) -> Result<String, ToolFault> {
        Ok(format!(
            "{} reservation confirmed ({})",
            self.kind,
            render_args(arguments)
        ))
    }
}

struct TranslateExecutor;

impl ToolExecutor for TranslateExecutor {
    fn execute(
        &self,
        arguments: &BTreeMap<String, serde_json::Value>,
    ) -> Result<String, ToolFault> {
        let text = arg_str(arguments, "text");
        let target = arg_str(arguments, "target_language");
        Ok(format!("[{target}] {text}"))
    }
}

struct SlideExecutor;

impl ToolExecutor for SlideExecutor {
    fn execute(
        &self,
        arguments: &BTreeMap<String, serde_json::Value>,
    ) -> Result<String, ToolFault> {
        let topic = arg_str(arguments, "topic");
        Ok(format!(
            "Generated a 10-slide deck on \"{topic}\" at https://example.com/decks/{}.pdf",
            topic.to_lowercase().replace(' ', "-")
        ))
    }
}

/// Binds executors to every schema: flavored mocks for well-known names,
/// canned echoes otherwise. This is how the bundled registry file becomes a
/// live registry.
pub fn bind_default_executors(schemas: Vec<ToolSchema>) -> Result<Registry, ToolhostError> {
    let mut registry = Registry::new();
    for schema in schemas {
        let executor: Arc<dyn ToolExecutor> = match schema.tool_name.as_str() {
            "weather_lookup" => Arc::new(WeatherExecutor),
            "web_search" | "news_search" => Arc::new(SearchExecutor),
            "url_reader" => Arc::new(UrlReaderExecutor),
            "flight_book" => Arc::new(BookingExecutor { kind: "Flight" }),
            "hotel_book" => Arc::new(BookingExecutor { kind: "Hotel" }),
            "restaurant_reserve" => Arc::new(BookingExecutor { kind: "Table" }),
            "text_translate" => Arc::new(TranslateExecutor),
            "slide_generate" => Arc::new(SlideExecutor),
            name => Arc::new(CannedExecutor::new(name)),
        };
        registry.register(schema, executor)?;
    }
    Ok(registry)
}
