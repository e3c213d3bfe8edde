//! Execution-fidelity metrics, output-quality scoring, and ablation sweeps.
//!
//! Each task run is classified into exactly one of three buckets. In
//! precedence order: failed (no tool was invoked, or any error event
//! occurred), completed (the reference sequence appears in-order among the
//! invoked tools), incomplete (tools ran but the reference order was not
//! honored). The three bucket rates always sum to one because they partition
//! integer counts, not floats.
//!
//! Per-task tool precision is scored as C/(C + λw·W + λm·M) where C is the
//! longest in-order match between reference and invoked sequences, W the
//! surplus invocations, and M the reference entries never matched.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{AblationFlags, EngineError, Runner};
use crate::providers::{Judge, JudgeContext, ModelProvider, ProviderError};
use crate::trace::{ExecutionTrace, TaskFixture};

/// Mutually exclusive task result buckets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Completed,
    Failed,
    Incomplete,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Completed => "completed",
            Classification::Failed => "failed",
            Classification::Incomplete => "incomplete",
        }
    }
}

/// Per-task scoring result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub task_id: String,
    pub classification: Classification,
    pub c_count: u64,
    pub w_count: u64,
    pub m_count: u64,
    pub tps: f64,
    /// True for the vacuous case C=W=M=0 (nothing required, nothing done,
    /// no errors), which scores 1.0 by convention.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

/// Five quality dimensions, each an integer 0..=10.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeScore {
    pub correctness: u8,
    pub relevance: u8,
    pub completeness: u8,
    pub fluency: u8,
    pub faithfulness: u8,
    #[serde(default)]
    pub rationale: String,
}

impl JudgeScore {
    pub fn dimensions(&self) -> [(&'static str, u8); 5] {
        [
            ("correctness", self.correctness),
            ("relevance", self.relevance),
            ("completeness", self.completeness),
            ("fluency", self.fluency),
            ("faithfulness", self.faithfulness),
        ]
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        for (dimension, value) in self.dimensions() {
            if value > 10 {
                return Err(EvalError::ScoreOutOfRange { dimension, value });
            }
        }
        Ok(())
    }
}

/// Mean judge scores normalized to [0,1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrcffAverages {
    pub correctness: f64,
    pub relevance: f64,
    pub completeness: f64,
    pub fluency: f64,
    pub faithfulness: f64,
}

/// Aggregated metrics over one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_tasks: usize,
    /// Task completion rate: fraction classified completed.
    pub tcr: f64,
    /// Task failure rate: fraction classified failed.
    pub tfr: f64,
    /// Task incompletion rate: derived as 1 - tcr - tfr so the partition
    /// identity holds bit-exactly for every input.
    pub tir: f64,
    pub tps_avg: f64,
    pub lambda_w: f64,
    pub lambda_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crcff: Option<CrcffAverages>,
    pub judged_tasks: usize,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub degenerate_tasks: usize,
    pub input_tokens_total: u64,
    pub output_tokens_total: u64,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

/// True iff `reference` appears within `actual` in order, not necessarily
/// contiguously. Empty references match anything.
pub fn is_subsequence<A: AsRef<str>, B: AsRef<str>>(reference: &[A], actual: &[B]) -> bool {
    let mut needle = reference.iter();
    let mut next = needle.next();
    for item in actual {
        match next {
            Some(want) if want.as_ref() == item.as_ref() => next = needle.next(),
            Some(_) => {}
            None => break,
        }
    }
    next.is_none()
}

/// Length of the longest in-order match of `reference` within `actual`
/// (the longest common subsequence of the two name sequences).
pub fn longest_in_order_match<A: AsRef<str>, B: AsRef<str>>(reference: &[A], actual: &[B]) -> usize {
    if reference.is_empty() || actual.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; actual.len() + 1];
    let mut row = vec![0usize; actual.len() + 1];
    for r in reference {
        for (j, a) in actual.iter().enumerate() {
            row[j + 1] = if r.as_ref() == a.as_ref() {
                prev[j] + 1
            } else {
                row[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut row);
    }
    prev[actual.len()]
}

fn tps_from_counts(c: u64, w: u64, m: u64, lambda_w: f64, lambda_m: f64) -> f64 {
    let denominator = c as f64 + lambda_w * w as f64 + lambda_m * m as f64;
    if denominator == 0.0 {
        // Nothing required and nothing done: vacuously perfect.
        return 1.0;
    }
    c as f64 / denominator
}

/// Recomputes the precision score from an outcome's counts under the given
/// weights.
pub fn task_performance_score(outcome: &TaskOutcome, lambda_w: f64, lambda_m: f64) -> f64 {
    tps_from_counts(
        outcome.c_count,
        outcome.w_count,
        outcome.m_count,
        lambda_w,
        lambda_m,
    )
}

fn check_lambdas(lambda_w: f64, lambda_m: f64) -> Result<(), EvalError> {
    if lambda_w > 0.0 && lambda_m > 0.0 && lambda_w.is_finite() && lambda_m.is_finite() {
        Ok(())
    } else {
        Err(EvalError::InvalidLambda { lambda_w, lambda_m })
    }
}

/// Scores one task with unit weights.
pub fn classify_task(fixture: &TaskFixture, trace: &ExecutionTrace) -> Result<TaskOutcome, EvalError> {
    classify_task_weighted(fixture, trace, 1.0, 1.0)
}

/// Scores one task. Precedence: failed beats completed beats incomplete,
/// because an error event marks the task failed no matter how much of the
/// reference was honored first.
pub fn classify_task_weighted(
    fixture: &TaskFixture,
    trace: &ExecutionTrace,
    lambda_w: f64,
    lambda_m: f64,
) -> Result<TaskOutcome, EvalError> {
    if fixture.task_id != trace.task_id {
        return Err(EvalError::TaskMismatch {
            fixture: fixture.task_id.clone(),
            trace: trace.task_id.clone(),
        });
    }
    check_lambdas(lambda_w, lambda_m)?;
    let invoked = trace.invoked_names();
    let reference = &fixture.reference_sequence;

    let classification = if invoked.is_empty() || !trace.error_events.is_empty() {
        Classification::Failed
    } else if is_subsequence(reference, &invoked) {
        Classification::Completed
    } else {
        Classification::Incomplete
    };

    let c = longest_in_order_match(reference, &invoked) as u64;
    let w = invoked.len() as u64 - c;
    let m = reference.len() as u64 - c;
    let degenerate = c == 0 && w == 0 && m == 0;
    Ok(TaskOutcome {
        task_id: fixture.task_id.clone(),
        classification,
        c_count: c,
        w_count: w,
        m_count: m,
        tps: tps_from_counts(c, w, m, lambda_w, lambda_m),
        degenerate,
    })
}

/// Folds per-task outcomes into one report. `judge_scores` must either be
/// empty (no judging ran) or align 1:1 with `outcomes`, using None for tasks
/// whose judge call failed.
pub fn aggregate(
    outcomes: &[TaskOutcome],
    judge_scores: &[Option<JudgeScore>],
    input_tokens_total: u64,
    output_tokens_total: u64,
    lambda_w: f64,
    lambda_m: f64,
) -> Result<MetricsReport, EvalError> {
    if outcomes.is_empty() {
        return Err(EvalError::Empty);
    }
    if !judge_scores.is_empty() && judge_scores.len() != outcomes.len() {
        return Err(EvalError::ScoreLengthMismatch {
            scores: judge_scores.len(),
            outcomes: outcomes.len(),
        });
    }
    check_lambdas(lambda_w, lambda_m)?;

    let n = outcomes.len();
    let mut completed = 0usize;
    let mut failed = 0usize;
    let mut degenerate_tasks = 0usize;
    let mut tps_sum = 0.0f64;
    for outcome in outcomes {
        match outcome.classification {
            Classification::Completed => completed += 1,
            Classification::Failed => failed += 1,
            Classification::Incomplete => {}
        }
        if outcome.degenerate {
            degenerate_tasks += 1;
        }
        tps_sum += outcome.tps;
    }
    let tcr = completed as f64 / n as f64;
    let tfr = failed as f64 / n as f64;
    // Deriving the third rate keeps tcr + tfr + tir == 1.0 bit-exact even
    // when the three plain ratios would not sum to 1 in floating point.
    // The complement must be taken against the rounded sum: left-to-right
    // re-addition then reproduces that sum, and adding its complement to it
    // lands within a half-ulp of 1.0, which rounds to exactly 1.0.
    let tir = 1.0 - (tcr + tfr);

    let judged: Vec<&JudgeScore> = judge_scores.iter().flatten().collect();
    let crcff = if judged.is_empty() {
        None
    } else {
        let mean = |pick: fn(&JudgeScore) -> u8| {
            judged.iter().map(|s| pick(s) as f64).sum::<f64>() / (judged.len() as f64 * 10.0)
        };
        Some(CrcffAverages {
            correctness: mean(|s| s.correctness),
            relevance: mean(|s| s.relevance),
            completeness: mean(|s| s.completeness),
            fluency: mean(|s| s.fluency),
            faithfulness: mean(|s| s.faithfulness),
        })
    };

    Ok(MetricsReport {
        n_tasks: n,
        tcr,
        tfr,
        tir,
        tps_avg: tps_sum / n as f64,
        lambda_w,
        lambda_m,
        crcff,
        judged_tasks: judged.len(),
        degenerate_tasks,
        input_tokens_total,
        output_tokens_total,
    })
}

/// Scores one response against its reference, validating the provider's
/// output ranges.
pub fn judge_crcff(
    response: &str,
    reference: &str,
    context: &JudgeContext,
    judge: &dyn Judge,
) -> Result<JudgeScore, EvalError> {
    let score = judge.score(response, reference, context)?;
    score.validate()?;
    Ok(score)
}

/// Classifies and judges a batch of traces against their fixtures and folds
/// everything into one report. Traces pair with fixtures by task id. A judge
/// failure marks that task unjudged and the run continues.
pub fn evaluate_run(
    fixtures: &[TaskFixture],
    traces: &[ExecutionTrace],
    judge: Option<&dyn Judge>,
    lambda_w: f64,
    lambda_m: f64,
) -> Result<MetricsReport, EvalError> {
    let by_id: BTreeMap<&str, &TaskFixture> = fixtures
        .iter()
        .map(|f| (f.task_id.as_str(), f))
        .collect();
    let mut outcomes = Vec::with_capacity(traces.len());
    let mut scores: Vec<Option<JudgeScore>> = Vec::with_capacity(traces.len());
    let mut input_total = 0u64;
    let mut output_total = 0u64;
    for trace in traces {
        let fixture = by_id
            .get(trace.task_id.as_str())
            .ok_or_else(|| EvalError::UnknownTask(trace.task_id.clone()))?;
        outcomes.push(classify_task_weighted(fixture, trace, lambda_w, lambda_m)?);
        input_total += trace.input_tokens;
        output_total += trace.output_tokens;
        match judge {
            Some(judge) => {
                let context = JudgeContext {
                    query: fixture.turns.join(" "),
                    system_prompt: String::new(),
                    tool_names: fixture.reference_sequence.clone(),
                };
                let response = trace.final_answer.as_deref().unwrap_or("");
                scores.push(judge_crcff(response, &fixture.reference_answer, &context, judge).ok());
            }
            None => scores.push(None),
        }
    }
    let scores = if judge.is_some() { scores } else { Vec::new() };
    aggregate(
        &outcomes,
        &scores,
        input_total,
        output_total,
        lambda_w,
        lambda_m,
    )
}

/// Runs every fixture under every variant with identical model scripts and
/// reports per-variant metrics, in the order the variants were given.
pub fn run_ablation(
    runner: &Runner,
    fixtures: &[TaskFixture],
    variants: &[AblationFlags],
    model_for: &dyn Fn(&TaskFixture) -> Box<dyn ModelProvider>,
    judge: Option<&dyn Judge>,
    lambda_w: f64,
    lambda_m: f64,
) -> Result<Vec<(String, MetricsReport)>, EvalError> {
    if fixtures.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut reports = Vec::with_capacity(variants.len());
    for flags in variants {
        let variant_runner = runner.with_ablation(*flags);
        let mut traces = Vec::with_capacity(fixtures.len());
        for fixture in fixtures {
            let model = model_for(fixture);
            let (trace, _session) = variant_runner.run_task(fixture, model.as_ref())?;
            traces.push(trace);
        }
        let report = evaluate_run(fixtures, &traces, judge, lambda_w, lambda_m)?;
        reports.push((flags.variant_name().to_string(), report));
    }
    Ok(reports)
}

/// Human-readable single-run report.
pub fn render_report_text(report: &MetricsReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("tasks evaluated:   {}\n", report.n_tasks));
    out.push_str(&format!("completed (TCR):   {:.4}\n", report.tcr));
    out.push_str(&format!("failed (TFR):      {:.4}\n", report.tfr));
    out.push_str(&format!("incomplete (TIR):  {:.4}\n", report.tir));
    out.push_str(&format!(
        "avg TPS:           {:.4}  (lambda_w={}, lambda_m={})\n",
        report.tps_avg, report.lambda_w, report.lambda_m
    ));
    out.push_str(&format!("input tokens:      {}\n", report.input_tokens_total));
    out.push_str(&format!("output tokens:     {}\n", report.output_tokens_total));
    match &report.crcff {
        Some(c) => {
            out.push_str(&format!(
                "quality ({} judged): correctness {:.2}, relevance {:.2}, completeness {:.2}, fluency {:.2}, faithfulness {:.2}\n",
                report.judged_tasks, c.correctness, c.relevance, c.completeness, c.fluency, c.faithfulness
            ));
        }
        None => out.push_str("quality:           not judged\n"),
    }
    if report.degenerate_tasks > 0 {
        out.push_str(&format!(
            "note: {} task(s) scored 1.0 vacuously (nothing required, nothing invoked)\n",
            report.degenerate_tasks
        ));
    }
    out
}

/// Side-by-side variant table.
pub fn render_comparison(reports: &[(String, MetricsReport)]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<8} {:>7} {:>7} {:>7} {:>7} {:>12} {:>12}\n",
        "variant", "TCR", "TFR", "TIR", "TPS", "in_tokens", "out_tokens"
    ));
    for (name, report) in reports {
        out.push_str(&format!(
            "{:<8} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>12} {:>12}\n",
            name,
            report.tcr,
            report.tfr,
            report.tir,
            report.tps_avg,
            report.input_tokens_total,
            report.output_tokens_total
        ));
    }
    out
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("task id mismatch: fixture \"{fixture}\" vs trace \"{trace}\"")]
    TaskMismatch { fixture: String, trace: String },
    #[error("no trace matches any fixture for task \"{0}\"")]
    UnknownTask(String),
    #[error("nothing to aggregate")]
    Empty,
    #[error("judge scores length {scores} does not match outcomes length {outcomes}")]
    ScoreLengthMismatch { scores: usize, outcomes: usize },
    #[error("{dimension} score {value} is outside 0..=10")]
    ScoreOutOfRange { dimension: &'static str, value: u8 },
    #[error("lambda weights must be positive and finite, got lambda_w={lambda_w}, lambda_m={lambda_m}")]
    InvalidLambda { lambda_w: f64, lambda_m: f64 },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{CallOutcome, ErrorClass, ErrorEvent, InvokedCall};
    use proptest::prelude::*;

    fn fixture(id: &str, reference: &[&str]) -> TaskFixture {
        TaskFixture {
            task_id: id.to_string(),
            turns: vec!["do the task".to_string()],
            candidate_tools: reference.iter().map(|s| s.to_string()).collect(),
            reference_sequence: reference.iter().map(|s| s.to_string()).collect(),
            reference_answer: "done".to_string(),
            metadata: BTreeMap::new(),
        }
    }

    fn trace_with(id: &str, invoked: &[&str], errors: &[ErrorClass]) -> ExecutionTrace {
        let mut trace = ExecutionTrace::new(id);
        trace.invoked = invoked
            .iter()
            .map(|name| InvokedCall {
                tool_name: name.to_string(),
                arguments: BTreeMap::new(),
                outcome: CallOutcome::Ok,
            })
            .collect();
        trace.error_events = errors
            .iter()
            .map(|class| ErrorEvent {
                class: *class,
                detail: "test".to_string(),
            })
            .collect();
        trace.final_answer = Some("done".to_string());
        trace
    }

    #[test]
    fn subsequence_matches_in_order_with_gaps() {
        assert!(is_subsequence(&["search", "book"], &["search", "weather", "book"]));
        assert!(!is_subsequence(&["a", "b"], &["b", "a"]));
        assert!(is_subsequence::<&str, &str>(&[], &["anything"]));
        assert!(!is_subsequence(&["a"], &[] as &[&str]));
    }

    /// Independent oracle: R is a subsequence of L iff their longest common
    /// subsequence has length |R|.
    fn subsequence_oracle(reference: &[String], actual: &[String]) -> bool {
        longest_in_order_match(reference, actual) == reference.len()
    }

    proptest! {
        #[test]
        fn subsequence_agrees_with_dp_oracle(
            reference in proptest::collection::vec("[abc]", 0..6),
            actual in proptest::collection::vec("[abc]", 0..10),
        ) {
            prop_assert_eq!(
                is_subsequence(&reference, &actual),
                subsequence_oracle(&reference, &actual)
            );
        }

        #[test]
        fn partition_identity_is_exact_for_any_counts(
            completed in 0usize..400,
            failed in 0usize..400,
            incomplete in 0usize..400,
        ) {
            prop_assume!(completed + failed + incomplete > 0);
            let mut outcomes = Vec::new();
            let mut push = |n: usize, classification| {
                for i in 0..n {
                    outcomes.push(TaskOutcome {
                        task_id: format!("t{}", i),
                        classification,
                        c_count: 1,
                        w_count: 0,
                        m_count: 0,
                        tps: 1.0,
                        degenerate: false,
                    });
                }
            };
            push(completed, Classification::Completed);
            push(failed, Classification::Failed);
            push(incomplete, Classification::Incomplete);
            let report = aggregate(&outcomes, &[], 0, 0, 1.0, 1.0).unwrap();
            prop_assert_eq!(report.tcr + report.tfr + report.tir, 1.0);
        }

        #[test]
        fn tps_stays_in_unit_interval(
            c in 0u64..20, w in 0u64..20, m in 0u64..20,
            lw in 0.1f64..5.0, lm in 0.1f64..5.0,
        ) {
            let tps = tps_from_counts(c, w, m, lw, lm);
            prop_assert!((0.0..=1.0).contains(&tps));
        }
    }

    #[test]
    fn empty_invocation_without_errors_is_failed() {
        let fixture = fixture("t1", &["search"]);
        let trace = trace_with("t1", &[], &[]);
        let outcome = classify_task(&fixture, &trace).unwrap();
        assert_eq!(outcome.classification, Classification::Failed);
        assert_eq!((outcome.c_count, outcome.w_count, outcome.m_count), (0, 0, 1));
    }

    #[test]
    fn exact_match_is_completed_with_perfect_score() {
        let fixture = fixture("t1", &["search"]);
        let trace = trace_with("t1", &["search"], &[]);
        let outcome = classify_task(&fixture, &trace).unwrap();
        assert_eq!(outcome.classification, Classification::Completed);
        assert_eq!((outcome.c_count, outcome.w_count, outcome.m_count), (1, 0, 0));
        assert_eq!(outcome.tps, 1.0);
    }

    #[test]
    fn partial_match_is_incomplete_with_counted_drift() {
        let fixture = fixture("t1", &["a", "b"]);
        let trace = trace_with("t1", &["a", "x"], &[]);
        let outcome = classify_task(&fixture, &trace).unwrap();
        assert_eq!(outcome.classification, Classification::Incomplete);
        assert_eq!((outcome.c_count, outcome.w_count, outcome.m_count), (1, 1, 1));
        assert!((outcome.tps - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn errors_outrank_a_completed_reference() {
        let fixture = fixture("t1", &["search"]);
        let trace = trace_with("t1", &["search"], &[ErrorClass::Timeout]);
        let outcome = classify_task(&fixture, &trace).unwrap();
        assert_eq!(outcome.classification, Classification::Failed);
    }

    #[test]
    fn extra_tools_between_reference_steps_still_complete() {
        let fixture = fixture("t1", &["search", "book"]);
        let trace = trace_with("t1", &["search", "weather", "book"], &[]);
        let outcome = classify_task(&fixture, &trace).unwrap();
        assert_eq!(outcome.classification, Classification::Completed);
        assert_eq!((outcome.c_count, outcome.w_count, outcome.m_count), (2, 1, 0));
    }

    #[test]
    fn duplicate_correct_tool_counts_surplus_as_wrong() {
        let fixture = fixture("t1", &["search"]);
        let trace = trace_with("t1", &["search", "search"], &[]);
        let outcome = classify_task(&fixture, &trace).unwrap();
        assert_eq!((outcome.c_count, outcome.w_count, outcome.m_count), (1, 1, 0));
    }

    #[test]
    fn task_mismatch_is_rejected() {
        let fixture = fixture("t1", &["a"]);
        let trace = trace_with("t2", &["a"], &[]);
        assert!(matches!(
            classify_task(&fixture, &trace),
            Err(EvalError::TaskMismatch { .. })
        ));
    }

    proptest! {
        /// Brute-force re-evaluation of the three indicator formulas with
        /// the stated precedence must agree with the classifier.
        #[test]
        fn classification_agrees_with_indicator_formulas(
            reference in proptest::collection::vec("[ab]", 0..4),
            invoked in proptest::collection::vec("[abc]", 0..6),
            has_error in proptest::bool::ANY,
        ) {
            let fx = TaskFixture {
                task_id: "t".to_string(),
                turns: vec!["x".to_string()],
                candidate_tools: vec![],
                reference_sequence: reference.clone(),
                reference_answer: String::new(),
                metadata: BTreeMap::new(),
            };
            let invoked_refs: Vec<&str> = invoked.iter().map(|s| s.as_str()).collect();
            let errors = if has_error { vec![ErrorClass::ToolCrash] } else { vec![] };
            let trace = trace_with("t", &invoked_refs, &errors);
            let outcome = classify_task(&fx, &trace).unwrap();

            let failed_indicator = invoked.is_empty() || has_error;
            let completed_indicator = is_subsequence(&reference, &invoked);
            let expected = if failed_indicator {
                Classification::Failed
            } else if completed_indicator {
                Classification::Completed
            } else {
                Classification::Incomplete
            };
            prop_assert_eq!(outcome.classification, expected);
        }
    }

    #[test]
    fn tps_follows_the_weighted_formula() {
        let outcome = TaskOutcome {
            task_id: "t".to_string(),
            classification: Classification::Incomplete,
            c_count: 2,
            w_count: 1,
            m_count: 1,
            tps: 0.5,
            degenerate: false,
        };
        assert_eq!(task_performance_score(&outcome, 1.0, 1.0), 0.5);
        // Heavier wrong-call weight drags the score down.
        assert!((task_performance_score(&outcome, 2.0, 1.0) - 0.4).abs() < 1e-12);
        let zeroes = TaskOutcome {
            c_count: 0,
            w_count: 2,
            m_count: 1,
            ..outcome.clone()
        };
        assert_eq!(task_performance_score(&zeroes, 1.0, 1.0), 0.0);
    }

    #[test]
    fn vacuous_tasks_score_one_and_are_flagged() {
        let fixture = fixture("t1", &[]);
        let mut trace = trace_with("t1", &[], &[]);
        trace.final_answer = Some("hi".to_string());
        let outcome = classify_task(&fixture, &trace).unwrap();
        assert!(outcome.degenerate);
        assert_eq!(outcome.tps, 1.0);
        let report = aggregate(&[outcome], &[], 0, 0, 1.0, 1.0).unwrap();
        assert_eq!(report.degenerate_tasks, 1);
    }

    fn outcomes_with_counts(completed: usize, failed: usize, incomplete: usize) -> Vec<TaskOutcome> {
        let mut outcomes = Vec::new();
        let mut add = |n: usize, classification| {
            for _ in 0..n {
                let tps = match classification {
                    Classification::Completed => 1.0,
                    _ => 0.0,
                };
                outcomes.push(TaskOutcome {
                    task_id: format!("t{}", outcomes.len()),
                    classification,
                    c_count: u64::from(classification == Classification::Completed),
                    w_count: 0,
                    m_count: u64::from(classification != Classification::Completed),
                    tps,
                    degenerate: false,
                });
            }
        };
        add(completed, Classification::Completed);
        add(failed, Classification::Failed);
        add(incomplete, Classification::Incomplete);
        outcomes
    }

    #[test]
    fn aggregate_reproduces_published_rate_partitions() {
        // 850 tasks splitting 481/28/341 and 650/64/136 reproduce the
        // 0.5659/0.0329/0.4012 and 0.7647/0.0753/0.1600 rate rows.
        let report = aggregate(&outcomes_with_counts(481, 28, 341), &[], 0, 0, 1.0, 1.0).unwrap();
        assert_eq!(report.n_tasks, 850);
        assert_eq!(format!("{:.4}", report.tcr), "0.5659");
        assert_eq!(format!("{:.4}", report.tfr), "0.0329");
        assert_eq!(format!("{:.4}", report.tir), "0.4012");
        assert_eq!(report.tcr + report.tfr + report.tir, 1.0);

        let report = aggregate(&outcomes_with_counts(650, 64, 136), &[], 0, 0, 1.0, 1.0).unwrap();
        assert_eq!(format!("{:.4}", report.tcr), "0.7647");
        assert_eq!(format!("{:.4}", report.tfr), "0.0753");
        assert_eq!(format!("{:.4}", report.tir), "0.1600");
        assert_eq!(report.tcr + report.tfr + report.tir, 1.0);
    }

    #[test]
    fn all_completed_collapses_the_partition() {
        let report = aggregate(&outcomes_with_counts(5, 0, 0), &[], 10, 2, 1.0, 1.0).unwrap();
        assert_eq!((report.tcr, report.tfr, report.tir), (1.0, 0.0, 0.0));
        assert_eq!(report.tps_avg, 1.0);
        assert_eq!(report.input_tokens_total, 10);
    }

    #[test]
    fn single_tool_suites_tie_tps_average_to_completion_rate() {
        // |R| = 1 everywhere, failures are empty invocations: per-task TPS
        // is exactly 1 for completed and 0 otherwise, so the mean equals the
        // completion fraction bit for bit.
        let outcomes = outcomes_with_counts(13, 4, 7);
        let report = aggregate(&outcomes, &[], 0, 0, 1.0, 1.0).unwrap();
        assert_eq!(report.tps_avg, report.tcr);
    }

    #[test]
    fn crcff_means_are_normalized_per_judged_task() {
        let outcomes = outcomes_with_counts(2, 0, 0);
        let score = |v: u8| JudgeScore {
            correctness: v,
            relevance: v,
            completeness: 10,
            fluency: 10,
            faithfulness: v,
            rationale: String::new(),
        };
        let scores = vec![Some(score(8)), None];
        let report = aggregate(&outcomes, &scores, 0, 0, 1.0, 1.0).unwrap();
        assert_eq!(report.judged_tasks, 1);
        let crcff = report.crcff.unwrap();
        assert_eq!(crcff.correctness, 0.8);
        assert_eq!(crcff.completeness, 1.0);

        let unjudged = aggregate(&outcomes, &[], 0, 0, 1.0, 1.0).unwrap();
        assert!(unjudged.crcff.is_none());
        assert_eq!(unjudged.judged_tasks, 0);
    }

    #[test]
    fn aggregate_rejects_empty_and_mismatched_inputs() {
        assert!(matches!(
            aggregate(&[], &[], 0, 0, 1.0, 1.0),
            Err(EvalError::Empty)
        ));
        let outcomes = outcomes_with_counts(2, 0, 0);
        assert!(matches!(
            aggregate(&outcomes, &[None], 0, 0, 1.0, 1.0),
            Err(EvalError::ScoreLengthMismatch { .. })
        ));
        assert!(matches!(
            aggregate(&outcomes, &[], 0, 0, 0.0, 1.0),
            Err(EvalError::InvalidLambda { .. })
        ));
    }

    #[test]
    fn judge_scores_validate_their_range() {
        let good = JudgeScore {
            correctness: 10,
            relevance: 0,
            completeness: 5,
            fluency: 10,
            faithfulness: 7,
            rationale: "ok".to_string(),
        };
        assert!(good.validate().is_ok());
        let bad = JudgeScore {
            relevance: 11,
            ..good
        };
        assert!(matches!(
            bad.validate(),
            Err(EvalError::ScoreOutOfRange {
                dimension: "relevance",
                value: 11
            })
        ));
    }

    #[test]
    fn report_rendering_shows_rates_and_notes() {
        let mut report = aggregate(&outcomes_with_counts(3, 1, 1), &[], 100, 20, 1.0, 1.0).unwrap();
        report.degenerate_tasks = 1;
        let text = render_report_text(&report);
        assert!(text.contains("completed (TCR):   0.6000"));
        assert!(text.contains("failed (TFR):      0.2000"));
        assert!(text.contains("vacuously"));

        let table = render_comparison(&[
            ("Base".to_string(), report.clone()),
            ("Jenius".to_string(), report),
        ]);
        assert!(table.contains("variant"));
        assert!(table.contains("Base"));
        assert!(table.contains("Jenius"));
    }
}
