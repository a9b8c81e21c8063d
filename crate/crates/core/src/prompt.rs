//! MLLM-gated prompt selection.
//!
//! A seed-selection run is judged by a multimodal model on instruction
//! following (IF) and background consistency (BC). If either is zero, the
//! model rephrases the instruction into N variants, all variants are
//! denoised from one shared initial noise, and the variant with the lowest
//! background inconsistency at the stopping step is finished.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cell::{Cell, RefCell};

use serde::{Deserialize, Serialize};

use crate::denoiser::Denoiser;
use crate::engine::{
    elect_run, run_selection, CandidateSpec, EditTask, EngineConfig, Method, NoObserver, RunError, RunOutput, StopPlan,
};
use crate::error::invalid;
use crate::rng::{fnv1a64, seed_noise, SeededRng};
use crate::{Error, Result, Tensor};

/// Soft limit on variant length.
pub const MAX_VARIANT_WORDS: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EditJudgment {
    #[serde(rename = "IF")]
    pub if_score: f64,
    #[serde(rename = "BC")]
    pub bc_score: f64,
}

impl EditJudgment {
    pub fn overall(&self) -> f64 {
        self.if_score.min(self.bc_score)
    }

    pub fn is_success(&self) -> bool {
        self.overall() > 0.0
    }
}

/// Transport to a multimodal model. Both methods return the model's raw
/// reply; parsing and validation happen in [`judge`] and
/// [`generate_variants`].
pub trait MllmClient {
    /// Reply to the evaluation prompt, expected to contain
    /// `{"IF": <score>, "BC": <score>}`.
    fn evaluate(&self, source: &Tensor, edited: &Tensor, instruction: &str) -> Result<String>;

    /// Reply to the rephrasing prompt, expected to contain
    /// `{"variants": [...]}`.
    fn variants(&self, source: &Tensor, instruction: &str, n: usize) -> Result<String>;
}

enum ParseFailure {
    Malformed(String),
    Invalid(String),
}

/// The outermost `{ ... }` span; replies often wrap the JSON in prose or code
/// fences.
fn json_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    (end > start).then(|| &text[start..=end])
}

fn parse_judgment(text: &str) -> Result<EditJudgment, ParseFailure> {
    #[derive(Deserialize)]
    struct Raw {
        #[serde(rename = "IF")]
        if_score: f64,
        #[serde(rename = "BC")]
        bc_score: f64,
    }
    let body = json_object(text).ok_or_else(|| ParseFailure::Malformed(format!("no JSON object in {text:?}")))?;
    let raw: Raw = serde_json::from_str(body).map_err(|e| ParseFailure::Malformed(format!("{e}")))?;
    for (name, v) in [("IF", raw.if_score), ("BC", raw.bc_score)] {
        if ![0.0, 0.5, 1.0].contains(&v) {
            return Err(ParseFailure::Invalid(format!(
                "{name} score {v} is not one of 0, 0.5, 1"
            )));
        }
    }
    Ok(EditJudgment {
        if_score: raw.if_score,
        bc_score: raw.bc_score,
    })
}

fn parse_variants(text: &str) -> Result<Vec<String>, ParseFailure> {
    #[derive(Deserialize)]
    struct Raw {
        variants: Vec<String>,
    }
    let body = json_object(text).ok_or_else(|| ParseFailure::Malformed(format!("no JSON object in {text:?}")))?;
    serde_json::from_str::<Raw>(body)
        .map(|r| r.variants)
        .map_err(|e| ParseFailure::Malformed(format!("{e}")))
}

/// Calls `request` and parses its reply, retrying once on malformed output.
fn with_retry<T>(
    mut request: impl FnMut() -> Result<String>,
    parse: impl Fn(&str) -> Result<T, ParseFailure>,
) -> Result<T> {
    let mut last = String::new();
    for _ in 0..2 {
        match parse(&request()?) {
            Ok(v) => return Ok(v),
            Err(ParseFailure::Invalid(msg)) => return Err(Error::Protocol(msg)),
            Err(ParseFailure::Malformed(msg)) => {
                log::warn!("malformed MLLM reply: {msg}");
                last = msg;
            }
        }
    }
    Err(Error::Protocol(format!("malformed MLLM reply after retry: {last}")))
}

pub fn judge<C: MllmClient + ?Sized>(
    client: &C,
    source: &Tensor,
    edited: &Tensor,
    instruction: &str,
) -> Result<EditJudgment> {
    with_retry(|| client.evaluate(source, edited, instruction), parse_judgment)
}

/// `n` instruction variants, the first being the original instruction.
pub fn generate_variants<C: MllmClient + ?Sized>(
    client: &C,
    source: &Tensor,
    instruction: &str,
    n: usize,
) -> Result<Vec<String>> {
    if n == 0 {
        return Err(invalid!("at least one variant is required"));
    }
    if n == 1 {
        return Ok(alloc::vec![instruction.to_string()]);
    }
    let mut variants = with_retry(|| client.variants(source, instruction, n), parse_variants)?;
    if variants.len() < n {
        return Err(Error::Protocol(format!(
            "asked for {n} variants, got {}",
            variants.len()
        )));
    }
    if variants.len() > n {
        log::warn!("MLLM returned {} variants, keeping the first {n}", variants.len());
        variants.truncate(n);
    }
    if variants[0] != instruction {
        log::warn!(
            "first variant {:?} differs from the instruction; replacing it",
            variants[0]
        );
        variants[0] = instruction.to_string();
    }
    for v in &variants {
        let words = v.split_whitespace().count();
        if words > MAX_VARIANT_WORDS {
            log::warn!("variant has {words} words (limit {MAX_VARIANT_WORDS}): {v:?}");
        }
    }
    Ok(variants)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptOptions {
    pub n_prompts: usize,
    /// Run prompt selection even when the seed run is judged a success.
    pub force: bool,
    /// Seed of the shared initial noise; defaults to the seed-run winner.
    pub noise_seed: Option<u64>,
}

impl Default for PromptOptions {
    fn default() -> Self {
        Self {
            n_prompts: 10,
            force: false,
            noise_seed: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PromptOutcome {
    pub seed_run: RunOutput,
    pub judgment: EditJudgment,
    pub variants: Vec<String>,
    pub prompt_run: Option<RunOutput>,
}

impl PromptOutcome {
    pub fn final_run(&self) -> &RunOutput {
        self.prompt_run.as_ref().unwrap_or(&self.seed_run)
    }
}

/// Prompt selection from one shared initial noise over the given variants.
pub fn prompt_selection<D: Denoiser + ?Sized>(
    task: &EditTask,
    denoiser: &D,
    cfg: &EngineConfig,
    variants: &[String],
    noise_seed: u64,
) -> Result<RunOutput, RunError> {
    if variants.is_empty() {
        return Err(invalid!("no instruction variants").into());
    }
    let noise = seed_noise(noise_seed, task.source_latent.shape())?;
    let pool = variants
        .iter()
        .map(|v| CandidateSpec {
            seed: noise_seed,
            prompt: v.clone(),
            initial: noise.clone(),
        })
        .collect();
    let pcfg = EngineConfig {
        n_candidates: variants.len(),
        seeds: Some(alloc::vec![noise_seed; variants.len()]),
        ..cfg.clone()
    };
    let plan = if cfg.adaptive {
        StopPlan::Adaptive
    } else if cfg.t_stop == 0 {
        StopPlan::Full
    } else {
        StopPlan::At(cfg.t_stop)
    };
    run_selection(task, denoiser, &pcfg, Method::ElectPrompt, pool, plan, &mut NoObserver)
}

/// Seed selection, MLLM judgment, and prompt selection on failure.
pub fn elect_prompt_run<D: Denoiser + ?Sized, C: MllmClient + ?Sized>(
    task: &EditTask,
    denoiser: &D,
    client: &C,
    cfg: &EngineConfig,
    opts: &PromptOptions,
) -> Result<PromptOutcome, RunError> {
    let seed_run = elect_run(task, denoiser, cfg)?;
    let judgment = judge(client, &task.source_latent, &seed_run.final_latent, &task.instruction)?;
    if judgment.is_success() && !opts.force {
        return Ok(PromptOutcome {
            seed_run,
            judgment,
            variants: Vec::new(),
            prompt_run: None,
        });
    }
    let variants = generate_variants(client, &task.source_latent, &task.instruction, opts.n_prompts)?;
    let noise_seed = opts
        .noise_seed
        .or_else(|| seed_run.trace.chosen().map(|c| c.seed))
        .unwrap_or(1);
    let prompt_run = prompt_selection(task, denoiser, cfg, &variants, noise_seed)?;
    Ok(PromptOutcome {
        seed_run,
        judgment,
        variants,
        prompt_run: Some(prompt_run),
    })
}

const REPHRASINGS: &[&str] = &[
    "please {}",
    "{} in the image",
    "can you {}",
    "{}, keeping the rest unchanged",
    "go ahead and {}",
    "{} while preserving the background",
    "I want you to {}",
    "try to {}",
    "{} carefully",
    "simply {}",
    "{} only",
];

/// Deterministic stand-in for a multimodal model.
///
/// Evaluation replies are taken from a script queue, falling back to a fixed
/// judgment. Variants are template rephrasings chosen by a seeded shuffle.
#[derive(Debug)]
pub struct MockMllm {
    seed: u64,
    default_judgment: EditJudgment,
    scripted: RefCell<VecDeque<String>>,
    evaluate_calls: Cell<usize>,
    variant_calls: Cell<usize>,
}

impl MockMllm {
    pub fn new(seed: u64, default_judgment: EditJudgment) -> Self {
        Self {
            seed,
            default_judgment,
            scripted: RefCell::new(VecDeque::new()),
            evaluate_calls: Cell::new(0),
            variant_calls: Cell::new(0),
        }
    }

    /// Queues a raw evaluation reply, returned before the default judgment.
    pub fn script_evaluation(&self, reply: impl Into<String>) {
        self.scripted.borrow_mut().push_back(reply.into());
    }

    pub fn evaluate_calls(&self) -> usize {
        self.evaluate_calls.get()
    }

    pub fn variant_calls(&self) -> usize {
        self.variant_calls.get()
    }

    pub fn variant_list(&self, instruction: &str, n: usize) -> Vec<String> {
        let mut order: Vec<usize> = (0..REPHRASINGS.len()).collect();
        let mut rng = SeededRng::new(crate::rng::derive_seed(self.seed, fnv1a64(instruction.as_bytes())));
        for i in (1..order.len()).rev() {
            let j = (rng.next_u64() % (i as u64 + 1)) as usize;
            order.swap(i, j);
        }
        let mut out = alloc::vec![instruction.to_string()];
        let mut k = 0;
        while out.len() < n {
            let template = REPHRASINGS[order[k % order.len()]];
            let mut v = template.replacen("{}", instruction, 1);
            if k >= order.len() {
                v = format!("{v} (take {})", k / order.len() + 1);
            }
            out.push(v);
            k += 1;
        }
        out
    }
}

impl MllmClient for MockMllm {
    fn evaluate(&self, _source: &Tensor, _edited: &Tensor, _instruction: &str) -> Result<String> {
        self.evaluate_calls.set(self.evaluate_calls.get() + 1);
        if let Some(reply) = self.scripted.borrow_mut().pop_front() {
            return Ok(reply);
        }
        serde_json::to_string(&self.default_judgment).map_err(|e| Error::Protocol(format!("{e}")))
    }

    fn variants(&self, _source: &Tensor, instruction: &str, n: usize) -> Result<String> {
        self.variant_calls.set(self.variant_calls.get() + 1);
        let body = serde_json::json!({ "variants": self.variant_list(instruction, n) });
        Ok(body.to_string())
    }
}
