//! System-prompt composition.
//!
//! Each turn the engine classifies the user's intent, detects their language,
//! and fuses an agent profile with runtime signals (retained tools, rolling
//! summary) into a system prompt. Prompts are assembled from named sections
//! in a fixed order so downstream diffing and tests stay stable; the wording
//! of each section lives in template files, not code.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tokenizer::lexical_tokens;
use crate::toolhost::ToolSchema;

/// How a user request is routed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "category", rename_all = "snake_case")]
pub enum IntentCategory {
    SocialInteraction,
    CreativeGeneration,
    FactualRecall,
    ToolAugmented { tool_mode: ToolMode },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolMode {
    SingleTool,
    MultiTool,
}

impl IntentCategory {
    pub fn is_tool_augmented(self) -> bool {
        matches!(self, IntentCategory::ToolAugmented { .. })
    }
}

/// Stable identifiers for prompt sections, in composition order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionId {
    RoleLanguage,
    IntentGuidance,
    ToolPolicy,
    ToolDescriptions,
    ResponseFormat,
    Safety,
    Summary,
}

impl SectionId {
    pub const ALL: [SectionId; 7] = [
        SectionId::RoleLanguage,
        SectionId::IntentGuidance,
        SectionId::ToolPolicy,
        SectionId::ToolDescriptions,
        SectionId::ResponseFormat,
        SectionId::Safety,
        SectionId::Summary,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SectionId::RoleLanguage => "role_language",
            SectionId::IntentGuidance => "intent_guidance",
            SectionId::ToolPolicy => "tool_policy",
            SectionId::ToolDescriptions => "tool_descriptions",
            SectionId::ResponseFormat => "response_format",
            SectionId::Safety => "safety",
            SectionId::Summary => "summary",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.txt", self.as_str())
    }
}

/// One template per section, with `{{name}}` placeholder substitution.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSet {
    templates: BTreeMap<SectionId, String>,
}

impl TemplateSet {
    /// Loads `<dir>/<section_id>.txt` for every section.
    pub fn load(dir: &Path) -> Result<Self, PromptError> {
        let mut templates = BTreeMap::new();
        for id in SectionId::ALL {
            let path = dir.join(id.file_name());
            let text = std::fs::read_to_string(&path).map_err(|source| PromptError::Io {
                path: path.display().to_string(),
                source,
            })?;
            templates.insert(id, text);
        }
        Ok(Self { templates })
    }

    pub fn from_sections(templates: BTreeMap<SectionId, String>) -> Result<Self, PromptError> {
        for id in SectionId::ALL {
            match templates.get(&id) {
                Some(text) if !text.trim().is_empty() => {}
                _ => return Err(PromptError::MissingTemplate(id.as_str())),
            }
        }
        Ok(Self { templates })
    }

    /// Built-in wording, used when no template directory is configured.
    pub fn builtin() -> Self {
        let mut templates = BTreeMap::new();
        templates.insert(
            SectionId::RoleLanguage,
            "{{role}}\nRespond in the user's language ({{language}}).".to_string(),
        );
        templates.insert(SectionId::IntentGuidance, "Task focus: {{guidance}}".to_string());
        templates.insert(SectionId::ToolPolicy, "Tool policy: {{tool_policy}}".to_string());
        templates.insert(
            SectionId::ToolDescriptions,
            "Available tools:\n{{tool_list}}".to_string(),
        );
        templates.insert(SectionId::ResponseFormat, "{{format_instruction}}".to_string());
        templates.insert(
            SectionId::Safety,
            "Hard constraints: never produce content that violates rules {{safety_rules}}. Violations are blocked before delivery.".to_string(),
        );
        templates.insert(
            SectionId::Summary,
            "Context carried over from earlier in this conversation:\n{{summary}}".to_string(),
        );
        Self { templates }
    }

    fn render(&self, id: SectionId, values: &BTreeMap<&str, String>) -> String {
        let mut text = self.templates[&id].clone();
        for (key, value) in values {
            text = text.replace(&format!("{{{{{key}}}}}"), value);
        }
        let mut section = text.trim_end().to_string();
        section.push_str("\n\n");
        section
    }
}

/// A safety rule with its pattern compiled at profile load.
#[derive(Debug, Clone)]
pub struct SafetyRule {
    pub id: String,
    pub pattern: String,
    regex: Regex,
}

impl SafetyRule {
    pub fn new(id: impl Into<String>, pattern: impl Into<String>) -> Result<Self, PromptError> {
        let id = id.into();
        let pattern = pattern.into();
        let regex = Regex::new(&pattern).map_err(|e| PromptError::BadRule {
            id: id.clone(),
            detail: e.to_string(),
        })?;
        Ok(Self { id, pattern, regex })
    }

    pub fn matches(&self, text: &str) -> bool {
        self.regex.is_match(text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LanguagePolicy {
    /// Answer in whatever language the user wrote in.
    MirrorUser,
    /// Always answer in one language.
    Fixed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormattingPolicy {
    Structured,
    FreeText,
    Auto,
}

/// Everything the composer needs, loaded once and immutable afterwards.
#[derive(Debug, Clone)]
pub struct AgentProfile {
    pub role_text: String,
    pub response_language_policy: LanguagePolicy,
    pub formatting_policy: FormattingPolicy,
    pub safety_rules: Vec<SafetyRule>,
    pub tool_policy_text: String,
    pub default_language: String,
    pub templates: TemplateSet,
}

/// On-disk shape of a profile document.
#[derive(Debug, Deserialize)]
struct ProfileDoc {
    role_text: String,
    #[serde(default = "default_language_policy")]
    response_language_policy: LanguagePolicy,
    #[serde(default = "default_formatting_policy")]
    formatting_policy: FormattingPolicy,
    tool_policy_text: String,
    #[serde(default = "default_tag")]
    default_language: String,
    #[serde(default)]
    template_dir: Option<PathBuf>,
    #[serde(default)]
    safety_rules: Vec<SafetyRuleDoc>,
}

#[derive(Debug, Deserialize)]
struct SafetyRuleDoc {
    id: String,
    pattern: String,
}

fn default_language_policy() -> LanguagePolicy {
    LanguagePolicy::MirrorUser
}

fn default_formatting_policy() -> FormattingPolicy {
    FormattingPolicy::Auto
}

fn default_tag() -> String {
    "en".to_string()
}

impl AgentProfile {
    /// Loads a profile document; `template_dir` resolves relative to the
    /// profile file. Every safety pattern must compile.
    pub fn load(path: &Path) -> Result<Self, PromptError> {
        let text = std::fs::read_to_string(path).map_err(|source| PromptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let doc: ProfileDoc = toml::from_str(&text)?;
        if doc.role_text.trim().is_empty() {
            return Err(PromptError::InvalidProfile(
                "role_text must be nonempty".to_string(),
            ));
        }
        let mut safety_rules = Vec::with_capacity(doc.safety_rules.len());
        let mut seen = std::collections::BTreeSet::new();
        for rule in doc.safety_rules {
            if !seen.insert(rule.id.clone()) {
                return Err(PromptError::InvalidProfile(format!(
                    "duplicate safety rule id \"{}\"",
                    rule.id
                )));
            }
            safety_rules.push(SafetyRule::new(rule.id, rule.pattern)?);
        }
        let templates = match doc.template_dir {
            Some(dir) => {
                let base = path.parent().unwrap_or_else(|| Path::new("."));
                TemplateSet::load(&base.join(dir))?
            }
            None => TemplateSet::builtin(),
        };
        Ok(Self {
            role_text: doc.role_text,
            response_language_policy: doc.response_language_policy,
            formatting_policy: doc.formatting_policy,
            safety_rules,
            tool_policy_text: doc.tool_policy_text,
            default_language: doc.default_language,
            templates,
        })
    }

    /// A ready-to-use general assistant profile with built-in templates.
    pub fn default_profile() -> Self {
        Self {
            role_text: "You are a capable assistant that completes user tasks \
                        accurately, using tools when they genuinely help."
                .to_string(),
            response_language_policy: LanguagePolicy::MirrorUser,
            formatting_policy: FormattingPolicy::Auto,
            safety_rules: Vec::new(),
            tool_policy_text: "Call a tool only when the task needs external \
                               information or actions; verify arguments before \
                               each call and never invent results."
                .to_string(),
            default_language: "en".to_string(),
            templates: TemplateSet::builtin(),
        }
    }
}

/// A composed system prompt plus the sections that went into it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PromptBundle {
    pub system_prompt: String,
    pub sections: Vec<(SectionId, String)>,
    pub injected_summary: Option<String>,
}

/// Pluggable intent classification; the rule-based fallback ships built in.
pub trait IntentClassifier: Send + Sync {
    fn classify(&self, utterance: &str, available_tools: &[ToolSchema]) -> IntentCategory;
}

/// Keyword heuristics with a fixed precedence when signals conflict:
/// tool use beats creative writing beats factual recall beats small talk.
/// Under-calling tools is the costlier error, so tool signals win ties.
#[derive(Debug, Default, Clone, Copy)]
pub struct RuleBasedClassifier;

const STOPWORDS: [&str; 14] = [
    "the", "a", "an", "to", "of", "for", "and", "or", "in", "on", "at", "with", "tool", "via",
];

const CREATIVE_MARKERS: [&str; 14] = [
    "write", "compose", "draft", "story", "poem", "poetry", "essay", "lyrics", "script",
    "imagine", "fiction", "brainstorm", "slogan", "haiku",
];

const FACTUAL_MARKERS: [&str; 10] = [
    "what", "who", "when", "where", "why", "how", "which", "explain", "define", "capital",
];

const SOCIAL_MARKERS: [&str; 12] = [
    "hello", "hi", "hey", "thanks", "thank", "bye", "goodbye", "morning", "evening",
    "afternoon", "greetings", "howdy",
];

const SEQUENCE_MARKERS: [&str; 5] = ["then", "after", "afterwards", "next", "followed"];

/// Words a tool advertises: its name parts and category label, minus filler.
fn tool_keywords(schema: &ToolSchema) -> Vec<String> {
    let mut words = lexical_tokens(&schema.tool_name);
    words.extend(lexical_tokens(schema.category.label()));
    words.retain(|w| !STOPWORDS.contains(&w.as_str()) && w.len() > 1);
    words.sort();
    words.dedup();
    words
}

impl IntentClassifier for RuleBasedClassifier {
    fn classify(&self, utterance: &str, available_tools: &[ToolSchema]) -> IntentCategory {
        let tokens = lexical_tokens(utterance);
        let matched_tools = available_tools
            .iter()
            .filter(|schema| {
                let keywords = tool_keywords(schema);
                tokens.iter().any(|t| keywords.contains(t))
            })
            .count();
        if matched_tools > 0 {
            let sequenced = tokens.iter().any(|t| SEQUENCE_MARKERS.contains(&t.as_str()));
            let tool_mode = if matched_tools > 1 || sequenced {
                ToolMode::MultiTool
            } else {
                ToolMode::SingleTool
            };
            return IntentCategory::ToolAugmented { tool_mode };
        }
        if tokens.iter().any(|t| CREATIVE_MARKERS.contains(&t.as_str())) {
            return IntentCategory::CreativeGeneration;
        }
        if tokens.iter().any(|t| FACTUAL_MARKERS.contains(&t.as_str())) || utterance.contains('?')
        {
            return IntentCategory::FactualRecall;
        }
        if tokens.iter().any(|t| SOCIAL_MARKERS.contains(&t.as_str())) {
            return IntentCategory::SocialInteraction;
        }
        IntentCategory::FactualRecall
    }
}

/// Classifies with the built-in rule set. Total: every utterance gets
/// exactly one category.
pub fn classify_intent(utterance: &str, available_tools: &[ToolSchema]) -> IntentCategory {
    RuleBasedClassifier.classify(utterance, available_tools)
}

fn guidance_text(intent: IntentCategory) -> &'static str {
    match intent {
        IntentCategory::SocialInteraction => {
            "this is conversational small talk; reply warmly and briefly from \
             your own knowledge."
        }
        IntentCategory::CreativeGeneration => {
            "this is a creative writing request; produce original content \
             matching the requested form and tone."
        }
        IntentCategory::FactualRecall => {
            "this is a factual question; answer precisely and admit \
             uncertainty rather than guessing."
        }
        IntentCategory::ToolAugmented {
            tool_mode: ToolMode::SingleTool,
        } => {
            "this task needs external data or actions; one well-chosen tool \
             call should be enough before answering."
        }
        IntentCategory::ToolAugmented {
            tool_mode: ToolMode::MultiTool,
        } => {
            "this task needs several coordinated steps; plan a sequence of \
             tool calls and carry results between them."
        }
    }
}

const NO_TOOLS_POLICY: &str =
    "Answer directly from your own knowledge; do not call tools for this request.";

fn format_instruction(policy: FormattingPolicy) -> &'static str {
    match policy {
        FormattingPolicy::Structured => {
            "Structure the response with clear headings or lists."
        }
        FormattingPolicy::FreeText => "Respond in flowing prose without imposed structure.",
        FormattingPolicy::Auto => "Choose the response shape that best fits the request.",
    }
}

/// One line per tool for the descriptions section, in the given order.
pub(crate) fn render_tool_list(tools: &[ToolSchema]) -> String {
    let mut lines = Vec::with_capacity(tools.len());
    for schema in tools {
        let params: Vec<String> = schema
            .parameters
            .iter()
            .map(|p| {
                if p.required {
                    format!("{}: {} (required)", p.name, p.param_type)
                } else {
                    format!("{}: {}", p.name, p.param_type)
                }
            })
            .collect();
        let params = if params.is_empty() {
            "no parameters".to_string()
        } else {
            params.join(", ")
        };
        lines.push(format!(
            "- {} [{}]: {} Parameters: {}.",
            schema.tool_name,
            schema.category.label(),
            schema.enriched_description,
            params
        ));
    }
    lines.join("\n")
}

/// Builds the per-turn system prompt. Pure: identical inputs produce a
/// byte-identical bundle. Sections appear in `SectionId::ALL` order; the
/// tool-descriptions section exists only for tool-augmented intents and the
/// summary section only when a summary is supplied.
pub fn compose_prompt(
    profile: &AgentProfile,
    intent: IntentCategory,
    tools: &[ToolSchema],
    summary: Option<&str>,
    user_language: &str,
) -> PromptBundle {
    let language = match &profile.response_language_policy {
        LanguagePolicy::MirrorUser => user_language.to_string(),
        LanguagePolicy::Fixed(tag) => tag.clone(),
    };
    let mut sections: Vec<(SectionId, String)> = Vec::new();

    let mut values = BTreeMap::new();
    values.insert("role", profile.role_text.clone());
    values.insert("language", language);
    sections.push((
        SectionId::RoleLanguage,
        profile.templates.render(SectionId::RoleLanguage, &values),
    ));

    let mut values = BTreeMap::new();
    values.insert("guidance", guidance_text(intent).to_string());
    sections.push((
        SectionId::IntentGuidance,
        profile.templates.render(SectionId::IntentGuidance, &values),
    ));

    let policy_text = if intent.is_tool_augmented() {
        profile.tool_policy_text.clone()
    } else {
        NO_TOOLS_POLICY.to_string()
    };
    let mut values = BTreeMap::new();
    values.insert("tool_policy", policy_text);
    sections.push((
        SectionId::ToolPolicy,
        profile.templates.render(SectionId::ToolPolicy, &values),
    ));

    if intent.is_tool_augmented() {
        let mut values = BTreeMap::new();
        values.insert("tool_list", render_tool_list(tools));
        sections.push((
            SectionId::ToolDescriptions,
            profile.templates.render(SectionId::ToolDescriptions, &values),
        ));
    }

    let mut values = BTreeMap::new();
    values.insert(
        "format_instruction",
        format_instruction(profile.formatting_policy).to_string(),
    );
    sections.push((
        SectionId::ResponseFormat,
        profile.templates.render(SectionId::ResponseFormat, &values),
    ));

    let rule_ids = if profile.safety_rules.is_empty() {
        "(none configured)".to_string()
    } else {
        profile
            .safety_rules
            .iter()
            .map(|r| r.id.as_str())
            .collect::<Vec<_>>()
            .join(", ")
    };
    let mut values = BTreeMap::new();
    values.insert("safety_rules", rule_ids);
    sections.push((
        SectionId::Safety,
        profile.templates.render(SectionId::Safety, &values),
    ));

    if let Some(summary) = summary {
        let mut values = BTreeMap::new();
        values.insert("summary", summary.to_string());
        sections.push((
            SectionId::Summary,
            profile.templates.render(SectionId::Summary, &values),
        ));
    }

    let system_prompt: String = sections.iter().map(|(_, text)| text.as_str()).collect();
    PromptBundle {
        system_prompt,
        sections,
        injected_summary: summary.map(str::to_string),
    }
}

/// Hard output filter: the first matching rule (in profile order) blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SafetyVerdict {
    Pass,
    Blocked { rule_id: String },
}

pub fn apply_safety_filter(candidate_output: &str, profile: &AgentProfile) -> SafetyVerdict {
    for rule in &profile.safety_rules {
        if rule.matches(candidate_output) {
            return SafetyVerdict::Blocked {
                rule_id: rule.id.clone(),
            };
        }
    }
    SafetyVerdict::Pass
}

/// Guesses the user's language by which writing system dominates their
/// message. Any kana forces Japanese (Japanese text mixes kana with Han
/// characters, which would otherwise win the count). Input without letters
/// falls back to `default_tag`.
pub fn detect_user_language(utterance: &str, default_tag: &str) -> String {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut kana = 0usize;
    for ch in utterance.chars() {
        let script = match ch as u32 {
            0x3040..=0x309F | 0x30A0..=0x30FF => {
                kana += 1;
                "ja"
            }
            0x4E00..=0x9FFF | 0x3400..=0x4DBF => "zh",
            0xAC00..=0xD7AF | 0x1100..=0x11FF => "ko",
            0x0400..=0x04FF => "ru",
            0x0600..=0x06FF | 0x0750..=0x077F => "ar",
            0x0370..=0x03FF => "el",
            0x0590..=0x05FF => "he",
            0x0900..=0x097F => "hi",
            0x0E00..=0x0E7F => "th",
            _ if ch.is_ascii_alphabetic() || ('\u{00C0}'..='\u{024F}').contains(&ch) => "en",
            _ => continue,
        };
        *counts.entry(script).or_insert(0) += 1;
    }
    if kana > 0 {
        return "ja".to_string();
    }
    counts
        .into_iter()
        .max_by_key(|(_, n)| *n)
        .map(|(tag, _)| tag.to_string())
        .unwrap_or_else(|| default_tag.to_string())
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("profile parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("safety rule \"{id}\" has an invalid pattern: {detail}")]
    BadRule { id: String, detail: String },
    #[error("missing or empty template for section \"{0}\"")]
    MissingTemplate(&'static str),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toolhost::{ParamSpec, ParamType, ToolCategory};

    fn schema(name: &str, category: ToolCategory, description: &str) -> ToolSchema {
        let mut s = ToolSchema::new(name, category, description);
        s.parameters = vec![ParamSpec::required("query", ParamType::Text)];
        s.canonicalize();
        s
    }

    fn booking_tools() -> Vec<ToolSchema> {
        vec![
            schema("flight_book", ToolCategory::Booking, "Books a flight."),
            schema("hotel_book", ToolCategory::Booking, "Reserves a hotel room."),
            schema(
                "weather_lookup",
                ToolCategory::InformationRetrieval,
                "Looks up current weather.",
            ),
        ]
    }

    #[test]
    fn greetings_classify_as_social() {
        assert_eq!(
            classify_intent("hello there", &booking_tools()),
            IntentCategory::SocialInteraction
        );
    }

    #[test]
    fn writing_requests_classify_as_creative() {
        assert_eq!(
            classify_intent("write a short story about a dragon", &booking_tools()),
            IntentCategory::CreativeGeneration
        );
    }

    #[test]
    fn chained_bookings_classify_as_multi_tool() {
        assert_eq!(
            classify_intent(
                "book a flight to Tokyo then reserve a hotel",
                &booking_tools()
            ),
            IntentCategory::ToolAugmented {
                tool_mode: ToolMode::MultiTool
            }
        );
    }

    #[test]
    fn single_matching_tool_classifies_as_single_tool() {
        assert_eq!(
            classify_intent("check the weather in Paris please", &booking_tools()),
            IntentCategory::ToolAugmented {
                tool_mode: ToolMode::SingleTool
            }
        );
    }

    #[test]
    fn tool_signal_outranks_creative_signal() {
        // "write" marks creative, but a matching tool name wins.
        assert_eq!(
            classify_intent("write up the weather forecast", &booking_tools()),
            IntentCategory::ToolAugmented {
                tool_mode: ToolMode::SingleTool
            }
        );
    }

    #[test]
    fn tool_intent_requires_an_applicable_tool() {
        assert_eq!(
            classify_intent("book a flight to Tokyo", &[]),
            IntentCategory::FactualRecall
        );
    }

    #[test]
    fn questions_default_to_factual() {
        assert_eq!(
            classify_intent("what is the capital of France", &booking_tools()),
            IntentCategory::FactualRecall
        );
        assert_eq!(
            classify_intent("unparseable gibberish zzz", &[]),
            IntentCategory::FactualRecall
        );
    }

    #[test]
    fn compose_is_deterministic() {
        let profile = AgentProfile::default_profile();
        let tools = booking_tools();
        let intent = IntentCategory::ToolAugmented {
            tool_mode: ToolMode::MultiTool,
        };
        let a = compose_prompt(&profile, intent, &tools, Some("earlier context"), "en");
        let b = compose_prompt(&profile, intent, &tools, Some("earlier context"), "en");
        assert_eq!(a.system_prompt, b.system_prompt);
        assert_eq!(a, b);
    }

    #[test]
    fn sections_concatenate_to_the_full_prompt_in_fixed_order() {
        let profile = AgentProfile::default_profile();
        let tools = booking_tools();
        let bundle = compose_prompt(
            &profile,
            IntentCategory::ToolAugmented {
                tool_mode: ToolMode::SingleTool,
            },
            &tools,
            Some("summary text"),
            "en",
        );
        let joined: String = bundle.sections.iter().map(|(_, t)| t.as_str()).collect();
        assert_eq!(joined, bundle.system_prompt);
        let ids: Vec<SectionId> = bundle.sections.iter().map(|(id, _)| *id).collect();
        assert_eq!(ids, SectionId::ALL.to_vec());
        let mut unique = ids.clone();
        unique.dedup();
        assert_eq!(unique.len(), ids.len());
    }

    #[test]
    fn social_intent_omits_tool_descriptions_and_forbids_calls() {
        let profile = AgentProfile::default_profile();
        let tools = booking_tools();
        let bundle = compose_prompt(
            &profile,
            IntentCategory::SocialInteraction,
            &tools,
            None,
            "en",
        );
        assert!(bundle
            .sections
            .iter()
            .all(|(id, _)| *id != SectionId::ToolDescriptions));
        let policy = &bundle
            .sections
            .iter()
            .find(|(id, _)| *id == SectionId::ToolPolicy)
            .unwrap()
            .1;
        assert!(policy.contains("do not call tools"));
        assert!(bundle.injected_summary.is_none());
        assert!(bundle
            .sections
            .iter()
            .all(|(id, _)| *id != SectionId::Summary));
    }

    #[test]
    fn summary_section_present_exactly_when_summary_given() {
        let profile = AgentProfile::default_profile();
        let with = compose_prompt(
            &profile,
            IntentCategory::FactualRecall,
            &[],
            Some("the user booked a flight"),
            "en",
        );
        assert!(with
            .sections
            .iter()
            .any(|(id, text)| *id == SectionId::Summary && text.contains("booked a flight")));
        assert_eq!(
            with.injected_summary.as_deref(),
            Some("the user booked a flight")
        );
        let without = compose_prompt(&profile, IntentCategory::FactualRecall, &[], None, "en");
        assert!(without
            .sections
            .iter()
            .all(|(id, _)| *id != SectionId::Summary));
    }

    #[test]
    fn shuffling_tools_changes_only_the_descriptions_section() {
        let profile = AgentProfile::default_profile();
        let tools = booking_tools();
        let mut reversed = tools.clone();
        reversed.reverse();
        let intent = IntentCategory::ToolAugmented {
            tool_mode: ToolMode::MultiTool,
        };
        let a = compose_prompt(&profile, intent, &tools, None, "en");
        let b = compose_prompt(&profile, intent, &reversed, None, "en");
        for ((id_a, text_a), (id_b, text_b)) in a.sections.iter().zip(&b.sections) {
            assert_eq!(id_a, id_b);
            if *id_a == SectionId::ToolDescriptions {
                assert_ne!(text_a, text_b);
            } else {
                assert_eq!(text_a, text_b);
            }
        }
    }

    #[test]
    fn every_intent_gets_nonempty_guidance() {
        let all = [
            IntentCategory::SocialInteraction,
            IntentCategory::CreativeGeneration,
            IntentCategory::FactualRecall,
            IntentCategory::ToolAugmented {
                tool_mode: ToolMode::SingleTool,
            },
            IntentCategory::ToolAugmented {
                tool_mode: ToolMode::MultiTool,
            },
        ];
        let profile = AgentProfile::default_profile();
        for intent in all {
            let bundle = compose_prompt(&profile, intent, &[], None, "en");
            let guidance = &bundle
                .sections
                .iter()
                .find(|(id, _)| *id == SectionId::IntentGuidance)
                .unwrap()
                .1;
            assert!(
                guidance.trim().len() > "Task focus:".len(),
                "empty guidance for {intent:?}"
            );
        }
    }

    #[test]
    fn fixed_language_policy_overrides_user_language() {
        let mut profile = AgentProfile::default_profile();
        profile.response_language_policy = LanguagePolicy::Fixed("de".to_string());
        let bundle = compose_prompt(&profile, IntentCategory::FactualRecall, &[], None, "zh");
        let role = &bundle.sections[0].1;
        assert!(role.contains("(de)"));
    }

    #[test]
    fn safety_filter_reports_first_matching_rule() {
        let mut profile = AgentProfile::default_profile();
        profile.safety_rules = vec![
            SafetyRule::new("r1", r"(?i)password").unwrap(),
            SafetyRule::new("r2", r"secret").unwrap(),
        ];
        assert_eq!(
            apply_safety_filter("all good here", &profile),
            SafetyVerdict::Pass
        );
        assert_eq!(
            apply_safety_filter("the PASSWORD is hunter2", &profile),
            SafetyVerdict::Blocked {
                rule_id: "r1".to_string()
            }
        );
        // Both rules match; the earliest in list order wins.
        assert_eq!(
            apply_safety_filter("password and secret", &profile),
            SafetyVerdict::Blocked {
                rule_id: "r1".to_string()
            }
        );
    }

    #[test]
    fn language_detection_by_dominant_script() {
        assert_eq!(detect_user_language("你好，帮我查天气", "en"), "zh");
        assert_eq!(detect_user_language("hello, what's the weather", "fr"), "en");
        assert_eq!(detect_user_language("12345 !!!", "und"), "und");
        // Kana forces Japanese even with Han characters present.
        assert_eq!(detect_user_language("天気を調べてください", "en"), "ja");
        assert_eq!(detect_user_language("Привет, как дела", "en"), "ru");
    }

    #[test]
    fn profile_loads_from_disk_and_compiles_rules() {
        let dir = tempfile::tempdir().unwrap();
        let profile_path = dir.path().join("profile.toml");
        std::fs::write(
            &profile_path,
            r#"
role_text = "You are a travel assistant."
tool_policy_text = "Use tools for live data."
default_language = "en"

[[safety_rules]]
id = "no_card_numbers"
pattern = "\\b\\d{16}\\b"
"#,
        )
        .unwrap();
        let profile = AgentProfile::load(&profile_path).unwrap();
        assert_eq!(profile.role_text, "You are a travel assistant.");
        assert_eq!(profile.safety_rules.len(), 1);
        assert_eq!(
            apply_safety_filter("card 1234567812345678 ok?", &profile),
            SafetyVerdict::Blocked {
                rule_id: "no_card_numbers".to_string()
            }
        );
    }

    #[test]
    fn profile_load_rejects_bad_patterns_and_duplicate_ids() {
        let dir = tempfile::tempdir().unwrap();
        let bad_pattern = dir.path().join("bad.toml");
        std::fs::write(
            &bad_pattern,
            r#"
role_text = "r"
tool_policy_text = "p"

[[safety_rules]]
id = "broken"
pattern = "(unclosed"
"#,
        )
        .unwrap();
        assert!(matches!(
            AgentProfile::load(&bad_pattern),
            Err(PromptError::BadRule { .. })
        ));

        let dup = dir.path().join("dup.toml");
        std::fs::write(
            &dup,
            r#"
role_text = "r"
tool_policy_text = "p"

[[safety_rules]]
id = "x"
pattern = "a"

[[safety_rules]]
id = "x"
pattern = "b"
"#,
        )
        .unwrap();
        assert!(matches!(
            AgentProfile::load(&dup),
            Err(PromptError::InvalidProfile(_))
        ));
    }

    #[test]
    fn templates_load_from_directory() {
        let dir = tempfile::tempdir().unwrap();
        let tpl = dir.path().join("templates");
        std::fs::create_dir(&tpl).unwrap();
        for id in SectionId::ALL {
            let body = match id {
                SectionId::RoleLanguage => "ROLE {{role}} LANG {{language}}",
                SectionId::IntentGuidance => "GUIDE {{guidance}}",
                SectionId::ToolPolicy => "POLICY {{tool_policy}}",
                SectionId::ToolDescriptions => "TOOLS {{tool_list}}",
                SectionId::ResponseFormat => "FORMAT {{format_instruction}}",
                SectionId::Safety => "SAFE {{safety_rules}}",
                SectionId::Summary => "SUM {{summary}}",
            };
            std::fs::write(tpl.join(id.file_name()), body).unwrap();
        }
        let profile_path = dir.path().join("profile.toml");
        std::fs::write(
            &profile_path,
            r#"
role_text = "custom role"
tool_policy_text = "custom policy"
template_dir = "templates"
"#,
        )
        .unwrap();
        let profile = AgentProfile::load(&profile_path).unwrap();
        let bundle = compose_prompt(
            &profile,
            IntentCategory::FactualRecall,
            &[],
            Some("the gist"),
            "en",
        );
        assert!(bundle.system_prompt.contains("ROLE custom role LANG en"));
        assert!(bundle.system_prompt.contains("SUM the gist"));

        std::fs::remove_file(tpl.join(SectionId::Safety.file_name())).unwrap();
        assert!(matches!(
            AgentProfile::load(&profile_path),
            Err(PromptError::Io { .. })
        ));
    }
}
