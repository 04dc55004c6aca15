//! The propose–plan–score loop that grows a verified operator library.
//!
//! Each iteration shuffles the unsolved tasks, and for each one asks the
//! proposal backend for decompositions (to discover operator names), for
//! definitions of any undefined names, and for goal conjectures. New
//! definitions are syntax-corrected into candidate operators; the bi-level
//! planner then tries each goal conjecture over the full candidate set.
//! Per-operator subgoal statistics accumulate live — a candidate that fails a
//! subgoal is re-ranked behind its rivals for the very next conjecture — and
//! at the end of the iteration candidates with enough evidence are either
//! verified into the library or discarded. Already-verified operators are
//! protected: evidence can only add to the library within a run, never shrink
//! it.
//!
//! Tasks solve at most once; their solving plans become exemplars offered to
//! the backend for later proposals. [`transfer_evaluate`] replans a finished
//! library (plus the learned trajectory dictionary) against a fresh benchmark
//! with goal conjectures only.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Env, EnvError, Task};
use crate::policy::{
    bilevel_plan, BilevelConfig, CandidateOperator, GoalAttempt, OperatorStats, PolicyDictionary,
};
use crate::proposer::{
    correct_definition, extract_undefined_names, propose_decompositions, propose_definitions,
    propose_goals, LibraryContext, ProposalBackend, RejectReason, SolvedExample, TaskContext,
};
use crate::symbolic::{Operator, OperatorKey, OperatorLibrary};

/// How many solved exemplars a proposal prompt may carry.
const MAX_EXAMPLES: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    /// Passes over the task set.
    pub iterations: usize,
    /// An operator needs strictly more than this many issued subgoals before
    /// it can be verified or discarded.
    pub min_evidence: u64,
    /// Fraction of issued subgoals that must succeed for verification
    /// (strict).
    pub min_reliability: f64,
    pub decompositions_per_task: usize,
    pub goals_per_task: usize,
    pub definitions_per_name: usize,
    pub seed: u64,
    pub bilevel: BilevelConfig,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            iterations: 2,
            min_evidence: 1,
            min_reliability: 0.5,
            decompositions_per_task: 4,
            goals_per_task: 4,
            definitions_per_name: 3,
            seed: 0,
            bilevel: BilevelConfig::default(),
        }
    }
}

/// A definition proposal that failed syntax correction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedProposal {
    pub name: String,
    pub reason: RejectReason,
}

/// A candidate removed for unreliability, with the evidence that damned it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscardedOperator {
    pub key: String,
    pub text: String,
    pub attempts: u64,
    pub successes: u64,
}

/// One task's treatment during an iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskReport {
    pub task_id: String,
    pub solved: bool,
    pub goal_conjectures: usize,
    pub attempts: Vec<GoalAttempt>,
    pub hl_expansions: usize,
    pub ll_steps: usize,
}

/// Everything an iteration did, in a form stable across identical runs: no
/// wall-clock times, no host paths.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationReport {
    pub iteration: usize,
    pub task_order: Vec<String>,
    pub tasks: Vec<TaskReport>,
    /// Candidate operators admitted to the pool this iteration.
    pub proposals_admitted: usize,
    /// Definition texts that failed syntax correction.
    pub proposals_rejected: Vec<RejectedProposal>,
    /// Keys newly verified into the library this iteration.
    pub operators_verified: Vec<String>,
    pub operators_discarded: Vec<DiscardedOperator>,
    /// Unverified candidates still in the pool after scoring.
    pub candidate_pool: usize,
    pub library_size: usize,
    pub dictionary_keys: usize,
    pub tasks_solved_so_far: usize,
    pub hl_expansions: usize,
    pub ll_steps: usize,
}

/// Outcome of a whole learning run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearningRun {
    pub reports: Vec<IterationReport>,
    pub solved: BTreeSet<String>,
}

/// Grows and scores the candidate pool across iterations.
pub struct Learner<'a> {
    env: &'a Env,
    backend: &'a dyn ProposalBackend,
    config: LearnerConfig,
    pool: Vec<CandidateOperator>,
    stats: BTreeMap<String, OperatorStats>,
    /// Canonical texts verified into the library (protected).
    verified: BTreeSet<String>,
    /// Every canonical text ever admitted; discarded texts stay here so they
    /// can never be re-proposed into the pool.
    admitted: BTreeSet<String>,
    dict: PolicyDictionary,
    exemplars: BTreeMap<String, SolvedExample>,
    next_rank: usize,
}

impl<'a> Learner<'a> {
    pub fn new(env: &'a Env, backend: &'a dyn ProposalBackend, config: LearnerConfig) -> Self {
        Self {
            env,
            backend,
            config,
            pool: Vec::new(),
            stats: BTreeMap::new(),
            verified: BTreeSet::new(),
            admitted: BTreeSet::new(),
            dict: PolicyDictionary::new(),
            exemplars: BTreeMap::new(),
            next_rank: 0,
        }
    }

    pub fn dictionary(&self) -> &PolicyDictionary {
        &self.dict
    }

    pub fn stats(&self) -> &BTreeMap<String, OperatorStats> {
        &self.stats
    }

    /// The verified operators as a named library. When two verified variants
    /// share a name and arity, the more reliable one wins (then the terser,
    /// then the lexicographically smaller text).
    pub fn library(&self, name: &str) -> OperatorLibrary {
        let mut best: BTreeMap<OperatorKey, &CandidateOperator> = BTreeMap::new();
        for cand in &self.pool {
            if !self.verified.contains(&cand.text) {
                continue;
            }
            let key = cand.op.key();
            match best.get(&key) {
                Some(cur) if !self.beats(cand, cur) => {}
                _ => {
                    best.insert(key, cand);
                }
            }
        }
        let mut lib = OperatorLibrary::new(name, self.env.vocabulary().clone())
            .expect("library name is a valid identifier");
        for cand in best.values() {
            lib.insert(Operator::clone(&cand.op))
                .expect("keys are unique by construction");
        }
        lib
    }

    fn reliability(&self, text: &str) -> (u64, u64) {
        let s = self.stats.get(text).copied().unwrap_or_default();
        (s.successes, s.attempts)
    }

    /// Whether `a` outranks `b` for the same key: higher success rate, then
    /// fewer literals, then smaller canonical text.
    fn beats(&self, a: &CandidateOperator, b: &CandidateOperator) -> bool {
        let (sa, ba) = self.reliability(&a.text);
        let (sb, bb) = self.reliability(&b.text);
        // Compare sa/ba with sb/bb without dividing; zero-attempt rates count
        // as zero.
        let left = sa.saturating_mul(bb.max(1));
        let right = sb.saturating_mul(ba.max(1));
        if left != right {
            return left > right;
        }
        let (la, lb) = (a.op.literal_count(), b.op.literal_count());
        if la != lb {
            return la < lb;
        }
        a.text < b.text
    }

    fn defined_keys(&self) -> BTreeSet<OperatorKey> {
        self.pool.iter().map(|c| c.op.key()).collect()
    }

    fn known_texts(&self) -> Vec<String> {
        self.pool
            .iter()
            .filter(|c| self.verified.contains(&c.text))
            .map(|c| c.text.clone())
            .collect()
    }

    fn prompt_examples(&self) -> Vec<SolvedExample> {
        self.exemplars.values().take(MAX_EXAMPLES).cloned().collect()
    }

    /// Runs the full loop over `tasks`.
    pub fn run(&mut self, tasks: &[Task]) -> Result<LearningRun, EnvError> {
        let mut reports = Vec::new();
        for iteration in 0..self.config.iterations {
            reports.push(self.run_iteration(iteration, tasks)?);
        }
        Ok(LearningRun {
            reports,
            solved: self.exemplars.keys().cloned().collect(),
        })
    }

    fn run_iteration(
        &mut self,
        iteration: usize,
        tasks: &[Task],
    ) -> Result<IterationReport, EnvError> {
        let mut order: Vec<usize> = (0..tasks.len())
            .filter(|&i| !self.exemplars.contains_key(&tasks[i].id))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed.wrapping_add(iteration as u64));
        order.shuffle(&mut rng);

        let mut report = IterationReport {
            iteration,
            task_order: order.iter().map(|&i| tasks[i].id.clone()).collect(),
            tasks: Vec::new(),
            proposals_admitted: 0,
            proposals_rejected: Vec::new(),
            operators_verified: Vec::new(),
            operators_discarded: Vec::new(),
            candidate_pool: 0,
            library_size: 0,
            dictionary_keys: 0,
            tasks_solved_so_far: 0,
            hl_expansions: 0,
            ll_steps: 0,
        };

        for &index in &order {
            let task = &tasks[index];
            let task_report = self.attempt_task(task, &mut report)?;
            report.hl_expansions += task_report.hl_expansions;
            report.ll_steps += task_report.ll_steps;
            report.tasks.push(task_report);
        }

        self.score_candidates(&mut report);
        report.candidate_pool = self
            .pool
            .iter()
            .filter(|c| !self.verified.contains(&c.text))
            .count();
        report.library_size = self.verified_key_count();
        report.dictionary_keys = self.dict.len();
        report.tasks_solved_so_far = self.exemplars.len();
        Ok(report)
    }

    fn verified_key_count(&self) -> usize {
        self.pool
            .iter()
            .filter(|c| self.verified.contains(&c.text))
            .map(|c| c.op.key())
            .collect::<BTreeSet<_>>()
            .len()
    }

    fn attempt_task(
        &mut self,
        task: &Task,
        report: &mut IterationReport,
    ) -> Result<TaskReport, EnvError> {
        let state = self.env.abstract_state(&task.initial)?;
        let examples = self.prompt_examples();
        let ctx = TaskContext {
            task_id: &task.id,
            instruction: &task.instruction,
            state: &state,
            examples: &examples,
        };

        // Discover operator names, then fill in any the pool lacks.
        let decomps =
            propose_decompositions(self.backend, &ctx, self.config.decompositions_per_task);
        let defined = self.defined_keys();
        let known = self.known_texts();
        for usage in extract_undefined_names(&decomps, &defined) {
            let lib_ctx = LibraryContext {
                vocab: self.env.vocabulary(),
                known: &known,
            };
            let texts = propose_definitions(
                self.backend,
                &usage,
                &lib_ctx,
                self.config.definitions_per_name,
            );
            for text in texts {
                match correct_definition(&text, self.env.vocabulary()) {
                    Ok(op) => {
                        let canonical = op.to_string();
                        if self.admitted.insert(canonical.clone()) {
                            self.pool
                                .push(CandidateOperator::new(Arc::new(op), self.next_rank));
                            self.next_rank += 1;
                            report.proposals_admitted += 1;
                        }
                    }
                    Err(reason) => report.proposals_rejected.push(RejectedProposal {
                        name: usage.name.clone(),
                        reason,
                    }),
                }
            }
        }

        // Conjecture goals and plan bi-level over the whole pool. Statistics
        // merge immediately so later tasks in this same iteration see them.
        let goals = propose_goals(
            self.backend,
            &ctx,
            self.env.vocabulary(),
            self.config.goals_per_task,
        );
        let outcome = bilevel_plan(
            self.env,
            task,
            &self.pool,
            &goals,
            &self.stats,
            &self.dict,
            &self.config.bilevel,
        )?;
        for (text, delta) in &outcome.stats_delta {
            self.stats.entry(text.clone()).or_default().add(*delta);
        }
        for update in &outcome.dict_updates {
            self.dict.apply(update);
        }
        if outcome.solved {
            self.exemplars.insert(
                task.id.clone(),
                SolvedExample {
                    instruction: task.instruction.clone(),
                    steps: outcome.hl_plan.clone(),
                },
            );
        }
        Ok(TaskReport {
            task_id: task.id.clone(),
            solved: outcome.solved,
            goal_conjectures: outcome.goal_attempts,
            attempts: outcome.attempts,
            hl_expansions: outcome.hl_expansions,
            ll_steps: outcome.ll_steps,
        })
    }

    /// End-of-iteration verdicts. Anything with enough evidence is either
    /// verified (reliable) or dropped from the pool; thin evidence keeps a
    /// candidate waiting. Verified operators are never re-judged.
    fn score_candidates(&mut self, report: &mut IterationReport) {
        let mut keep = Vec::with_capacity(self.pool.len());
        for cand in self.pool.drain(..) {
            if self.verified.contains(&cand.text) {
                keep.push(cand);
                continue;
            }
            let s = self.stats.get(&cand.text).copied().unwrap_or_default();
            if s.attempts <= self.config.min_evidence {
                keep.push(cand);
                continue;
            }
            let reliable =
                (s.successes as f64) / (s.attempts as f64) > self.config.min_reliability;
            if reliable {
                report.operators_verified.push(cand.op.key().to_string());
                self.verified.insert(cand.text.clone());
                keep.push(cand);
            } else {
                report.operators_discarded.push(DiscardedOperator {
                    key: cand.op.key().to_string(),
                    text: cand.text.clone(),
                    attempts: s.attempts,
                    successes: s.successes,
                });
            }
        }
        self.pool = keep;
        report.operators_verified.sort();
        report
            .operators_discarded
            .sort_by(|a, b| (&a.key, &a.text).cmp(&(&b.key, &b.text)));
    }
}

/// Replans a finished library against a fresh benchmark. Only goal
/// conjectures are requested from the backend; the library and dictionary are
/// read-only, and every task is judged independently (statistics reset
/// between tasks), so tasks may be evaluated in any order — or in parallel —
/// with identical results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransferReport {
    pub tasks: Vec<TaskReport>,
    pub solved: usize,
    pub total: usize,
}

pub fn transfer_evaluate(
    env: &Env,
    tasks: &[Task],
    backend: &dyn ProposalBackend,
    library: &OperatorLibrary,
    dict: &PolicyDictionary,
    goals_per_task: usize,
    bilevel: &BilevelConfig,
) -> Result<TransferReport, EnvError> {
    let candidates: Vec<CandidateOperator> = library
        .iter()
        .enumerate()
        .map(|(rank, op)| CandidateOperator::new(op.clone(), rank))
        .collect();
    let mut report = TransferReport {
        tasks: Vec::new(),
        solved: 0,
        total: tasks.len(),
    };
    for task in tasks {
        let state = env.abstract_state(&task.initial)?;
        let ctx = TaskContext {
            task_id: &task.id,
            instruction: &task.instruction,
            state: &state,
            examples: &[],
        };
        let goals = propose_goals(backend, &ctx, env.vocabulary(), goals_per_task);
        let stats: BTreeMap<String, OperatorStats> = BTreeMap::new();
        let outcome = bilevel_plan(env, task, &candidates, &goals, &stats, dict, bilevel)?;
        if outcome.solved {
            report.solved += 1;
        }
        report.tasks.push(TaskReport {
            task_id: task.id.clone(),
            solved: outcome.solved,
            goal_conjectures: outcome.goal_attempts,
            attempts: outcome.attempts,
            hl_expansions: outcome.hl_expansions,
            ll_steps: outcome.ll_steps,
        });
    }
    Ok(report)
}
