//! Intake for externally proposed task knowledge: decompositions, operator
//! definitions, and goal conjectures.
//!
//! Proposals arrive as text and are never trusted: a lenient reader extracts
//! whatever structure it can, and [`correct_syntax`] then filters every
//! literal against the closed predicate vocabulary, inferring parameter types
//! from predicate signatures. What survives is a well-formed [`Operator`] or
//! a machine-readable [`RejectReason`]; nothing malformed escapes into
//! planning.
//!
//! Two interchangeable [`ProposalBackend`]s exist: a replay backend that
//! deterministically serves a recorded [`ReplayBundle`], and (behind the
//! `remote` feature) an HTTP chat-completion client. Failures of the remote
//! service degrade to empty proposal lists so a learning run never aborts
//! mid-iteration. Bundles for the benchmark worlds are synthesized from task
//! witnesses by [`synthesize_bundle`], optionally salted with deterministic
//! distractor definitions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{
    kind_phrase, pred, Env, EnvError, LowLevelAction, RecipeBook, Task, Witness,
};
use crate::symbolic::parse::{parse_one_sexp, Sexp};
use crate::symbolic::{
    is_ident, AbstractState, Atom, GoalFormula, Literal, Operator, OperatorKey, Term, TypedVar,
    Vocabulary,
};

// ---------------------------------------------------------------------------
// Raw proposal structures
// ---------------------------------------------------------------------------

/// One step of a proposed task decomposition: an action name applied to
/// object names. Nothing here is validated; names may be unknown.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecompositionStep {
    pub name: String,
    pub args: Vec<String>,
}

impl fmt::Display for DecompositionStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.name)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        write!(f, ")")
    }
}

/// A proposed ordered decomposition of one task into named actions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecompositionProposal {
    pub task_id: String,
    pub steps: Vec<DecompositionStep>,
}

/// An operator definition exactly as proposed, before any validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawOperatorProposal {
    pub name: String,
    /// Parameter names as written (without the `?` sigil), types ignored.
    pub params: Vec<String>,
    pub pre: Vec<RawLiteral>,
    pub eff: Vec<RawLiteral>,
}

/// A possibly negated predicate application as proposed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawLiteral {
    pub positive: bool,
    pub pred: String,
    pub args: Vec<Term>,
}

/// Why a proposed definition was rejected outright (as opposed to merely
/// losing some literals). Serialized into run reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "kebab-case")]
pub enum RejectReason {
    /// The text has no recognizable `(:action name ...)` structure.
    Unparseable { detail: String },
    /// The action name is not a legal identifier.
    BadName { name: String },
    /// After filtering, no valid effect literal remained.
    EmptyEffect,
    /// A surviving effect atom appears with both polarities.
    ContradictoryEffect { atom: String },
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::Unparseable { detail } => write!(f, "unparseable: {detail}"),
            RejectReason::BadName { name } => write!(f, "bad action name `{name}`"),
            RejectReason::EmptyEffect => write!(f, "no valid effect literal"),
            RejectReason::ContradictoryEffect { atom } => {
                write!(f, "contradictory effect on {atom}")
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Lenient reading
// ---------------------------------------------------------------------------

fn sym_lower(s: &Sexp) -> Option<String> {
    s.as_sym().map(|(t, _)| t.to_ascii_lowercase())
}

/// Extracts a raw literal from `(pred arg*)` or `(not (pred arg*))`; `None`
/// for anything else (junk is dropped, not reported).
fn raw_literal(sexp: &Sexp) -> Option<RawLiteral> {
    let (items, _) = sexp.as_list()?;
    let (head, _) = items.first()?.as_sym()?;
    if head.eq_ignore_ascii_case("not") {
        if items.len() != 2 {
            return None;
        }
        let inner = raw_literal(items.get(1)?)?;
        if !inner.positive {
            return None;
        }
        return Some(RawLiteral {
            positive: false,
            ..inner
        });
    }
    let mut args = Vec::new();
    for item in &items[1..] {
        let (tok, _) = item.as_sym()?;
        args.push(match tok.strip_prefix('?') {
            Some(v) => Term::Var(v.to_string()),
            None => Term::Obj(tok.to_string()),
        });
    }
    Some(RawLiteral {
        positive: true,
        pred: head.to_string(),
        args,
    })
}

/// Reads a condition form: `()`, a single literal, or `(and item*)`.
/// Unrecognizable items inside a conjunction are skipped.
fn raw_condition(sexp: &Sexp) -> Vec<RawLiteral> {
    if let Some((items, _)) = sexp.as_list() {
        if let Some(head) = items.first().and_then(sym_lower) {
            if head == "and" {
                return items[1..].iter().filter_map(raw_literal).collect();
            }
        }
    }
    raw_literal(sexp).into_iter().collect()
}

/// Reads `(?a - type ?b ...)` parameter lists, keeping only the variable
/// names; `-`-separated type annotations are skipped.
fn raw_params(sexp: &Sexp) -> Vec<String> {
    let Some((items, _)) = sexp.as_list() else {
        return Vec::new();
    };
    let mut params = Vec::new();
    let mut skip_type = false;
    for item in items {
        let Some((tok, _)) = item.as_sym() else {
            continue;
        };
        if tok == "-" {
            skip_type = true;
            continue;
        }
        if skip_type {
            skip_type = false;
            continue;
        }
        if let Some(v) = tok.strip_prefix('?') {
            params.push(v.to_string());
        }
    }
    params
}

fn section_keyword(tok: &str) -> Option<&'static str> {
    match tok.to_ascii_lowercase().as_str() {
        ":parameters" | ":params" | ":parameter" => Some("parameters"),
        ":precondition" | ":preconditions" | ":pre" => Some("precondition"),
        ":effect" | ":effects" | ":eff" => Some("effect"),
        _ => None,
    }
}

/// Lenient reader for one proposed `(:action name ...)` block. Tolerates
/// missing sections, keyword spelling variants, junk literals (skipped), and
/// a bare leading name without the `:action` tag. Errors only when there is
/// no action-like structure at all.
pub fn parse_raw_operator(text: &str) -> Result<RawOperatorProposal, RejectReason> {
    let unparseable = |detail: &str| RejectReason::Unparseable {
        detail: detail.to_string(),
    };
    let sexp =
        parse_one_sexp(text.trim()).map_err(|e| unparseable(&e.to_string()))?;
    let (items, _) = sexp
        .as_list()
        .ok_or_else(|| unparseable("expected a parenthesized action block"))?;
    let mut idx;
    let name = match items.first().and_then(|s| s.as_sym()) {
        Some((tok, _)) if tok.eq_ignore_ascii_case(":action") => {
            idx = 2;
            items
                .get(1)
                .and_then(|s| s.as_sym())
                .ok_or_else(|| unparseable("`:action` is not followed by a name"))?
                .0
                .to_string()
        }
        Some((tok, _)) if !tok.starts_with(':') => {
            idx = 1;
            tok.to_string()
        }
        _ => return Err(unparseable("no action name found")),
    };
    let mut proposal = RawOperatorProposal {
        name,
        params: Vec::new(),
        pre: Vec::new(),
        eff: Vec::new(),
    };
    while idx < items.len() {
        let Some(tok) = items[idx].as_sym().map(|(t, _)| t) else {
            idx += 1;
            continue;
        };
        let Some(section) = section_keyword(tok) else {
            idx += 1;
            continue;
        };
        let Some(value) = items.get(idx + 1) else {
            break;
        };
        match section {
            "parameters" => proposal.params = raw_params(value),
            "precondition" => proposal.pre = raw_condition(value),
            "effect" => proposal.eff = raw_condition(value),
            _ => unreachable!(),
        }
        idx += 2;
    }
    Ok(proposal)
}

// ---------------------------------------------------------------------------
// Syntax correction
// ---------------------------------------------------------------------------

/// Filters raw literals against the vocabulary and rebuilds a well-formed
/// operator.
///
/// A literal survives only if its predicate exists, the arity matches, every
/// argument is a variable, and every variable's type is consistent with all
/// its earlier surviving uses — the first surviving use of a variable fixes
/// its type from the predicate signature. Constants and junk are dropped
/// silently; parameters are recollected from surviving literals in first-use
/// order. The whole proposal is rejected when no effect literal survives or
/// surviving effects contradict each other.
pub fn correct_syntax(
    raw: &RawOperatorProposal,
    vocab: &Vocabulary,
) -> Result<Operator, RejectReason> {
    if !is_ident(&raw.name) {
        return Err(RejectReason::BadName {
            name: raw.name.clone(),
        });
    }
    let mut var_ty: BTreeMap<String, String> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    let mut filter = |lits: &[RawLiteral]| -> Vec<Literal> {
        let mut kept = Vec::new();
        for lit in lits {
            let Some(sig) = vocab.predicate(&lit.pred) else {
                continue;
            };
            if sig.arity() != lit.args.len() {
                continue;
            }
            let mut fresh: Vec<(String, String)> = Vec::new();
            let mut ok = true;
            for (term, expected) in lit.args.iter().zip(&sig.param_types) {
                let Term::Var(v) = term else {
                    ok = false;
                    break;
                };
                if !is_ident(v) {
                    ok = false;
                    break;
                }
                let assigned = var_ty
                    .get(v)
                    .or_else(|| fresh.iter().find(|(n, _)| n == v).map(|(_, t)| t));
                match assigned {
                    Some(t) if vocab.types().is_subtype(t, expected) => {}
                    Some(_) => {
                        ok = false;
                        break;
                    }
                    None => fresh.push((v.clone(), expected.clone())),
                }
            }
            if !ok {
                continue;
            }
            for (v, t) in fresh {
                var_ty.insert(v.clone(), t);
                order.push(v);
            }
            let atom = Atom::new(&lit.pred, lit.args.clone());
            kept.push(if lit.positive {
                Literal::pos(atom)
            } else {
                Literal::neg(atom)
            });
        }
        kept
    };
    let pre = filter(&raw.pre);
    let eff = filter(&raw.eff);
    if eff.is_empty() {
        return Err(RejectReason::EmptyEffect);
    }
    let mut polarity: BTreeMap<&Atom, (bool, bool)> = BTreeMap::new();
    for lit in &eff {
        let entry = polarity.entry(&lit.atom).or_default();
        if lit.positive {
            entry.0 = true;
        } else {
            entry.1 = true;
        }
    }
    if let Some((atom, _)) = polarity.iter().find(|(_, (p, n))| *p && *n) {
        return Err(RejectReason::ContradictoryEffect {
            atom: atom.to_string(),
        });
    }
    let params: Vec<TypedVar> = order
        .iter()
        .map(|v| TypedVar::new(v, &var_ty[v]))
        .collect();
    Operator::new(&raw.name, params, pre, eff).map_err(|e| RejectReason::Unparseable {
        detail: e.to_string(),
    })
}

/// Reads and corrects a proposed definition in one step.
pub fn correct_definition(text: &str, vocab: &Vocabulary) -> Result<Operator, RejectReason> {
    correct_syntax(&parse_raw_operator(text)?, vocab)
}

/// Lenient goal reader with the same literal-filtering rules as operator
/// correction, except that constants are kept (goals may name objects).
/// Declared variable types are honored when they name a known type; variables
/// without a usable declaration get their type from their first surviving
/// use. Returns `None` when no literal survives.
pub fn correct_goal(text: &str, vocab: &Vocabulary) -> Option<GoalFormula> {
    let sexp = parse_one_sexp(text.trim()).ok()?;
    let (declared, body) = match sexp.as_list() {
        Some((items, _))
            if items
                .first()
                .and_then(sym_lower)
                .is_some_and(|h| h == "exists") =>
        {
            let vars = items.get(1).map(goal_var_decls).unwrap_or_default();
            (vars, items.get(2)?.clone())
        }
        _ => (Vec::new(), sexp),
    };
    let raw = raw_condition(&body);

    let mut var_ty: BTreeMap<String, String> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    let declared: BTreeMap<String, Option<String>> = declared.into_iter().collect();
    let mut literals = Vec::new();
    for lit in &raw {
        let Some(sig) = vocab.predicate(&lit.pred) else {
            continue;
        };
        if sig.arity() != lit.args.len() {
            continue;
        }
        let mut fresh: Vec<(String, String)> = Vec::new();
        let mut ok = true;
        for (term, expected) in lit.args.iter().zip(&sig.param_types) {
            match term {
                Term::Obj(o) => {
                    if !is_ident(o) {
                        ok = false;
                        break;
                    }
                }
                Term::Var(v) => {
                    if !is_ident(v) {
                        ok = false;
                        break;
                    }
                    let assigned = var_ty
                        .get(v)
                        .or_else(|| fresh.iter().find(|(n, _)| n == v).map(|(_, t)| t));
                    match assigned {
                        Some(t) if vocab.types().is_subtype(t, expected) => {}
                        Some(_) => {
                            ok = false;
                            break;
                        }
                        None => {
                            // A valid declared type wins over inference.
                            let ty = match declared.get(v) {
                                Some(Some(d)) if vocab.types().contains(d) => {
                                    if !vocab.types().is_subtype(d, expected) {
                                        ok = false;
                                        break;
                                    }
                                    d.clone()
                                }
                                _ => expected.clone(),
                            };
                            fresh.push((v.clone(), ty));
                        }
                    }
                }
            }
        }
        if !ok {
            continue;
        }
        for (v, t) in fresh {
            var_ty.insert(v.clone(), t);
            order.push(v);
        }
        let atom = Atom::new(&lit.pred, lit.args.clone());
        literals.push(if lit.positive {
            Literal::pos(atom)
        } else {
            Literal::neg(atom)
        });
    }
    if literals.is_empty() {
        return None;
    }
    let vars: Vec<TypedVar> = order
        .iter()
        .map(|v| TypedVar::new(v, &var_ty[v]))
        .collect();
    GoalFormula::new(vars, literals).ok()
}

/// Reads `(?g - entity ?h ...)`: variable names with optional declared types.
fn goal_var_decls(sexp: &Sexp) -> Vec<(String, Option<String>)> {
    let Some((items, _)) = sexp.as_list() else {
        return Vec::new();
    };
    let mut decls: Vec<(String, Option<String>)> = Vec::new();
    let mut expect_type = false;
    for item in items {
        let Some((tok, _)) = item.as_sym() else {
            continue;
        };
        if tok == "-" {
            expect_type = true;
            continue;
        }
        if expect_type {
            expect_type = false;
            if let Some((_, ty)) = decls.last_mut() {
                *ty = Some(tok.to_string());
            }
            continue;
        }
        if let Some(v) = tok.strip_prefix('?') {
            decls.push((v.to_string(), None));
        }
    }
    decls
}

// ---------------------------------------------------------------------------
// Undefined-name extraction
// ---------------------------------------------------------------------------

/// An action name used by decompositions but absent from the operator set,
/// together with every distinct argument list it was used with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NameUsage {
    pub name: String,
    pub arity: usize,
    pub usages: Vec<Vec<String>>,
}

/// Collects `(name, arity)` pairs mentioned by the decompositions that have
/// no defined operator, each with its deduplicated argument usages. The same
/// name at two arities yields two entries. Output order is deterministic:
/// sorted by name, then arity.
pub fn extract_undefined_names(
    decompositions: &[DecompositionProposal],
    defined: &BTreeSet<OperatorKey>,
) -> Vec<NameUsage> {
    let mut found: BTreeMap<(String, usize), BTreeSet<Vec<String>>> = BTreeMap::new();
    for decomp in decompositions {
        for step in &decomp.steps {
            let key = OperatorKey {
                name: step.name.clone(),
                arity: step.args.len(),
            };
            if defined.contains(&key) {
                continue;
            }
            found
                .entry((step.name.clone(), step.args.len()))
                .or_default()
                .insert(step.args.clone());
        }
    }
    found
        .into_iter()
        .map(|((name, arity), usages)| NameUsage {
            name,
            arity,
            usages: usages.into_iter().collect(),
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

/// A task solved earlier, offered as an exemplar in proposal prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolvedExample {
    pub instruction: String,
    /// Ground high-level actions of the solving plan, in order.
    pub steps: Vec<String>,
}

/// Everything a backend may draw on when proposing for one task. The task's
/// goal is deliberately absent: backends see the instruction and the initial
/// state only.
#[derive(Debug, Clone)]
pub struct TaskContext<'a> {
    pub task_id: &'a str,
    pub instruction: &'a str,
    pub state: &'a AbstractState,
    pub examples: &'a [SolvedExample],
}

/// Vocabulary and already-defined operators, for definition prompts.
#[derive(Debug, Clone)]
pub struct LibraryContext<'a> {
    pub vocab: &'a Vocabulary,
    /// Canonical texts of currently defined operators.
    pub known: &'a [String],
}

/// Source of proposals. All methods degrade to an empty list on any internal
/// failure; callers bound and validate everything returned.
pub trait ProposalBackend {
    fn decompositions(&self, ctx: &TaskContext<'_>) -> Vec<DecompositionProposal>;
    fn goals(&self, ctx: &TaskContext<'_>) -> Vec<String>;
    /// Raw definition texts for one undefined name.
    fn definitions(&self, usage: &NameUsage, ctx: &LibraryContext<'_>) -> Vec<String>;
}

/// At most `n` decompositions for the task, empty steps filtered, task id
/// normalized to the context's.
pub fn propose_decompositions(
    backend: &dyn ProposalBackend,
    ctx: &TaskContext<'_>,
    n: usize,
) -> Vec<DecompositionProposal> {
    let mut proposals = backend.decompositions(ctx);
    proposals.retain(|p| !p.steps.is_empty());
    proposals.truncate(n);
    for p in &mut proposals {
        p.task_id = ctx.task_id.to_string();
    }
    proposals
}

/// At most `n` corrected goal formulas; proposals whose every literal was
/// dropped vanish. Duplicates are kept: repeated conjectures are retried with
/// updated operator rankings, which is cheap and occasionally decisive.
pub fn propose_goals(
    backend: &dyn ProposalBackend,
    ctx: &TaskContext<'_>,
    vocab: &Vocabulary,
    n: usize,
) -> Vec<GoalFormula> {
    backend
        .goals(ctx)
        .iter()
        .filter_map(|text| correct_goal(text, vocab))
        .take(n)
        .collect()
}

/// At most `n` raw definition texts for one undefined name.
pub fn propose_definitions(
    backend: &dyn ProposalBackend,
    usage: &NameUsage,
    ctx: &LibraryContext<'_>,
    n: usize,
) -> Vec<String> {
    let mut texts = backend.definitions(usage, ctx);
    texts.truncate(n);
    texts
}

/// Unary facts of a state, one per line, sorted — the state rendering used in
/// prompts. Agent position and fresh-pool bookkeeping are omitted: proposals
/// reason over object kinds and inventory, not geometry.
pub fn unary_atom_rendering(state: &AbstractState) -> String {
    let mut out = String::new();
    for atom in state.atoms() {
        if atom.args.len() != 1
            || atom.pred == pred::HYPOTHETICAL
            || atom.pred == pred::AGENT_AT
        {
            continue;
        }
        out.push_str(&atom.to_string());
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// Replay backend
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum ProposerError {
    #[error("cannot read `{path}`: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot write `{path}`: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
    #[error("`{path}` is not a valid proposal bundle: {source}")]
    Format {
        path: String,
        source: serde_json::Error,
    },
}

/// Recorded proposals: decompositions and goal texts keyed by task id,
/// definition texts keyed by action name. Serialization is canonical (sorted
/// keys, pretty JSON), so equal bundles are byte-identical.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayBundle {
    #[serde(default)]
    pub decompositions: BTreeMap<String, Vec<Vec<DecompositionStep>>>,
    #[serde(default)]
    pub goals: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub definitions: BTreeMap<String, Vec<String>>,
}

impl ReplayBundle {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("bundle serializes");
        text.push('\n');
        text
    }

    pub fn from_json(path_for_errors: &str, text: &str) -> Result<Self, ProposerError> {
        serde_json::from_str(text).map_err(|source| ProposerError::Format {
            path: path_for_errors.to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ProposerError> {
        let text = std::fs::read_to_string(path).map_err(|source| ProposerError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&path.display().to_string(), &text)
    }

    pub fn save(&self, path: &Path) -> Result<(), ProposerError> {
        std::fs::write(path, self.to_json()).map_err(|source| ProposerError::Write {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Serves a recorded bundle verbatim. Lookups that miss return empty lists;
/// identical queries always return identical results.
#[derive(Debug, Clone)]
pub struct ReplayBackend {
    bundle: ReplayBundle,
}

impl ReplayBackend {
    pub fn new(bundle: ReplayBundle) -> Self {
        Self { bundle }
    }

    pub fn bundle(&self) -> &ReplayBundle {
        &self.bundle
    }
}

impl ProposalBackend for ReplayBackend {
    fn decompositions(&self, ctx: &TaskContext<'_>) -> Vec<DecompositionProposal> {
        self.bundle
            .decompositions
            .get(ctx.task_id)
            .map(|rows| {
                rows.iter()
                    .map(|steps| DecompositionProposal {
                        task_id: ctx.task_id.to_string(),
                        steps: steps.clone(),
                    })
                    .collect()
            })
            .unwrap_or_default()
    }

    fn goals(&self, ctx: &TaskContext<'_>) -> Vec<String> {
        self.bundle
            .goals
            .get(ctx.task_id)
            .cloned()
            .unwrap_or_default()
    }

    fn definitions(&self, usage: &NameUsage, _ctx: &LibraryContext<'_>) -> Vec<String> {
        self.bundle
            .definitions
            .get(&usage.name)
            .cloned()
            .unwrap_or_default()
    }
}

// ---------------------------------------------------------------------------
// Bundle synthesis
// ---------------------------------------------------------------------------

/// The kind a task instruction asks for, recovered by inverting the
/// instruction phrasing over the book's obtainable kinds.
pub fn goal_kind_for_instruction(book: &RecipeBook, instruction: &str) -> Option<String> {
    let phrase = instruction
        .strip_prefix("Mine ")
        .or_else(|| instruction.strip_prefix("Craft an "))
        .or_else(|| instruction.strip_prefix("Craft a "))?
        .trim_end_matches('.');
    let obtainable = book
        .mining()
        .iter()
        .map(|r| r.yields.clone())
        .chain(book.crafting().iter().map(|r| r.output.clone()));
    let mut kinds: Vec<String> = obtainable.filter(|k| kind_phrase(k) == phrase).collect();
    kinds.sort();
    kinds.dedup();
    kinds.into_iter().next()
}

fn goal_text(kind: &str) -> String {
    format!("(exists (?g - entity) (and ({kind} ?g) (inventory ?g)))")
}

struct DefinitionParts {
    params: Vec<(String, String)>,
    pre: Vec<String>,
    eff: Vec<String>,
}

impl DefinitionParts {
    fn render(&self, name: &str) -> String {
        let params = self
            .params
            .iter()
            .map(|(v, t)| format!("?{v} - {t}"))
            .collect::<Vec<_>>()
            .join(" ");
        format!(
            "(:action {name}\n  :parameters ({params})\n  :precondition (and {})\n  :effect (and {}))",
            self.pre.join(" "),
            self.eff.join(" ")
        )
    }
}

fn mine_parts(rule: &crate::env::MiningRule) -> DefinitionParts {
    let mut eff = vec![
        format!("({} ?n)", rule.yields),
        "(inventory ?n)".to_string(),
        "(not (hypothetical ?n))".to_string(),
    ];
    if rule.consumes {
        eff.push(format!("(not ({} ?r))", rule.resource));
    }
    DefinitionParts {
        params: vec![
            ("r".into(), "entity".into()),
            ("t".into(), "entity".into()),
            ("n".into(), "entity".into()),
        ],
        pre: vec![
            format!("({} ?r)", rule.resource),
            format!("({} ?t)", rule.tool),
            "(inventory ?t)".to_string(),
            "(hypothetical ?n)".to_string(),
        ],
        eff,
    }
}

fn craft_parts(rule: &crate::env::CraftingRule) -> DefinitionParts {
    let mut params: Vec<(String, String)> = Vec::new();
    let mut pre = Vec::new();
    let mut eff = vec![
        format!("({} ?n)", rule.output),
        "(inventory ?n)".to_string(),
        "(not (hypothetical ?n))".to_string(),
    ];
    for (i, kind) in rule.inputs.iter().enumerate() {
        params.push((format!("i{i}"), "entity".into()));
        pre.push(format!("({kind} ?i{i})"));
        pre.push(format!("(inventory ?i{i})"));
        // Consumed ingredients vanish from the world outright, so the kind
        // atom goes with the inventory atom.
        eff.push(format!("(not ({kind} ?i{i}))"));
        eff.push(format!("(not (inventory ?i{i}))"));
    }
    if let Some(station) = &rule.station {
        params.push(("s".into(), "entity".into()));
        pre.push(format!("({station} ?s)"));
    }
    params.push(("n".into(), "entity".into()));
    pre.push("(hypothetical ?n)".to_string());
    DefinitionParts { params, pre, eff }
}

/// The correct definition text for one recipe-book operator, as a replay
/// bundle records it. Operators are deliberately location-free: movement has
/// no high-level counterpart, so station recipes require the station to
/// exist, not to be adjacent.
fn correct_definition_text(book: &RecipeBook, name: &str) -> Option<String> {
    if let Some(rule) = book.mining().iter().find(|r| r.op_name == name) {
        return Some(mine_parts(rule).render(name));
    }
    let rule = book.crafting().iter().find(|r| r.op_name == name)?;
    Some(craft_parts(rule).render(name))
}

/// Deterministic broken variants of a correct definition.
///
/// Indices 0 and 2+ are wrong-effect variants: the product claims a second
/// kind on top of its real one. The spurious kind is a *resource* kind the
/// operator doesn't touch. No other choice is safe: the operator's own kinds
/// would let plans transmute products back into inputs; obtainable kinds
/// would fabricate one-step goals no ranking can starve (the planner prefers
/// the shortest route to a goal atom regardless of operator order); tool and
/// station kinds would conjure fake equipment and shortcut real chains. A
/// foreign resource kind unlocks only mining — never shorter than mining the
/// real node — while the dual kind itself stays unrealizable (no action
/// gives one item two kinds), so every plan through the variant fails its
/// subgoal and the variant is rejected on evidence.
///
/// Index 1 omits one `inventory` precondition — the tool's for mines, the
/// first input's for crafts. Every reachable state keeps kind and inventory
/// atoms together for tools and ingredients, so the looser variant grounds
/// to exactly the correct operator's actions with identical effects: it only
/// duplicates successors the correct operator (ranked ahead of it) already
/// produced, and starves without ever being planned.
///
/// Parameters stay referenced throughout, so the arity never changes.
fn distractor_definition_text(book: &RecipeBook, name: &str, index: usize) -> Option<String> {
    let (mut parts, own_kinds, inventory_pre) =
        if let Some(rule) = book.mining().iter().find(|r| r.op_name == name) {
            let own = BTreeSet::from([rule.yields.clone(), rule.resource.clone(), rule.tool.clone()]);
            (mine_parts(rule), own, "(inventory ?t)")
        } else {
            let rule = book.crafting().iter().find(|r| r.op_name == name)?;
            let mut own: BTreeSet<String> = rule.inputs.iter().cloned().collect();
            own.insert(rule.output.clone());
            own.extend(rule.station.clone());
            (craft_parts(rule), own, "(inventory ?i0)")
        };
    if index == 1 {
        parts.pre.retain(|lit| lit != inventory_pre);
    } else {
        let foreign: Vec<String> = book
            .mining()
            .iter()
            .map(|r| r.resource.clone())
            .collect::<BTreeSet<String>>()
            .into_iter()
            .filter(|k| !own_kinds.contains(k))
            .collect();
        if foreign.is_empty() {
            return None;
        }
        let pick = if index == 0 { 0 } else { index - 1 };
        let kind = &foreign[pick % foreign.len()];
        parts.eff.insert(0, format!("({kind} ?n)"));
    }
    Some(parts.render(name))
}

/// Builds a replay bundle for a generated benchmark from its witnesses: one
/// grounded decomposition per task (recovered by replaying the witness), the
/// task goal proposed twice (a repeat conjecture doubles as a retry with
/// updated operator rankings), and `1 + distractors_per_name` definitions per
/// operator name, the correct one placed second whenever distractors exist.
///
/// Nothing here reads a task's sealed goal: goal texts come from the
/// instruction phrasing and step arguments from replayed witness actions.
pub fn synthesize_bundle(
    env: &Env,
    tasks: &[Task],
    witnesses: &[Witness],
    distractors_per_name: usize,
) -> Result<ReplayBundle, EnvError> {
    let book = env.recipes();
    let mut bundle = ReplayBundle::default();

    for task in tasks {
        let Some(witness) = witnesses.iter().find(|w| w.task_id == task.id) else {
            continue;
        };
        let steps = decomposition_from_witness(env, task, witness)?;
        bundle.decompositions.insert(task.id.clone(), vec![steps]);
        if let Some(kind) = goal_kind_for_instruction(book, &task.instruction) {
            bundle
                .goals
                .insert(task.id.clone(), vec![goal_text(&kind), goal_text(&kind)]);
        }
    }

    let names: Vec<String> = book
        .mining()
        .iter()
        .map(|r| r.op_name.clone())
        .chain(book.crafting().iter().map(|r| r.op_name.clone()))
        .collect();
    for name in names {
        let correct = correct_definition_text(book, &name).expect("book op has a definition");
        let mut texts = Vec::new();
        for i in 0..distractors_per_name {
            // A wrong-effect variant needs a foreign resource kind; a book
            // without one simply gets fewer variants.
            let Some(distractor) = distractor_definition_text(book, &name, i) else {
                continue;
            };
            // The wrong-effect variant leads; omitted-precondition and
            // further variants follow the correct one so that evidence, not
            // ordering, decides what is retained.
            if i == 0 {
                texts.push(distractor);
                texts.push(correct.clone());
            } else {
                texts.push(distractor);
            }
        }
        if !texts.contains(&correct) {
            texts.push(correct);
        }
        bundle.definitions.insert(name, texts);
    }
    Ok(bundle)
}

/// Recovers the grounded high-level steps behind a witness by replaying its
/// low-level actions: each mine or craft action becomes a step naming the
/// objects it touched plus the item id it produced.
fn decomposition_from_witness(
    env: &Env,
    task: &Task,
    witness: &Witness,
) -> Result<Vec<DecompositionStep>, EnvError> {
    let book = env.recipes();
    let mut steps = Vec::new();
    let mut x = task.initial.clone();
    for action in &witness.actions {
        let before = x.clone();
        x = env.replay(&x, std::slice::from_ref(action))?;
        match action {
            LowLevelAction::MoveTo { .. } => {}
            LowLevelAction::Mine { tool, target } => {
                let resource = before
                    .world()
                    .get(target)
                    .map(|o| o.kind.clone())
                    .ok_or_else(|| bad_witness(&witness.task_id, target))?;
                let tool_kind = before
                    .inventory()
                    .get(tool)
                    .cloned()
                    .ok_or_else(|| bad_witness(&witness.task_id, tool))?;
                let rule = book
                    .mining_rule(&resource, &tool_kind)
                    .ok_or_else(|| EnvError::UnknownKind(resource.clone()))?;
                let produced = new_item(&before, &x).unwrap_or_default();
                steps.push(DecompositionStep {
                    name: rule.op_name.clone(),
                    args: vec![target.clone(), tool.clone(), produced],
                });
            }
            LowLevelAction::Craft {
                output,
                ingredients,
            } => {
                let kinds: Vec<String> = ingredients
                    .iter()
                    .map(|id| {
                        before
                            .inventory()
                            .get(id)
                            .cloned()
                            .ok_or_else(|| bad_witness(&witness.task_id, id))
                    })
                    .collect::<Result<_, _>>()?;
                let rule = book
                    .crafting_rule(output, &kinds)
                    .ok_or_else(|| EnvError::UnknownKind(output.clone()))?;
                let mut args = ingredients.clone();
                if let Some(station) = &rule.station {
                    let id = before
                        .world()
                        .iter()
                        .find(|(_, o)| o.kind == *station && o.at == before.agent())
                        .map(|(id, _)| id.clone())
                        .ok_or_else(|| EnvError::UnknownKind(station.clone()))?;
                    args.push(id);
                }
                args.push(new_item(&before, &x).unwrap_or_default());
                steps.push(DecompositionStep {
                    name: rule.op_name.clone(),
                    args,
                });
            }
        }
    }
    Ok(steps)
}

fn bad_witness(task_id: &str, object: &str) -> EnvError {
    EnvError::InvalidState(format!(
        "witness for `{task_id}` references unknown object `{object}`"
    ))
}

/// The inventory id present after a step but not before it.
fn new_item(before: &crate::env::RawState, after: &crate::env::RawState) -> Option<String> {
    after
        .inventory()
        .keys()
        .find(|id| !before.inventory().contains_key(*id))
        .cloned()
}

// ---------------------------------------------------------------------------
// Remote backend
// ---------------------------------------------------------------------------

/// Prompt templates are versioned assets, substituted with `{name}` markers.
#[cfg_attr(not(feature = "remote"), allow(dead_code))]
pub(crate) mod prompts {
    pub const SYSTEM: &str = include_str!("../assets/prompts/system.txt");
    pub const DECOMPOSE: &str = include_str!("../assets/prompts/decompose.txt");
    pub const DEFINE: &str = include_str!("../assets/prompts/define.txt");
    pub const GOAL: &str = include_str!("../assets/prompts/goal.txt");

    pub fn fill(template: &str, values: &[(&str, &str)]) -> String {
        let mut out = template.to_string();
        for (key, value) in values {
            out = out.replace(&format!("{{{key}}}"), value);
        }
        out
    }
}

/// Every complete balanced parenthesis group in free-form text, outermost
/// first — how model answers are mined for s-expressions.
pub fn balanced_blocks(text: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    for (i, c) in text.char_indices() {
        match c {
            '(' => {
                if depth == 0 {
                    start = i;
                }
                depth += 1;
            }
            ')' => {
                if depth > 0 {
                    depth -= 1;
                    if depth == 0 {
                        blocks.push(text[start..=i].to_string());
                    }
                }
            }
            _ => {}
        }
    }
    blocks
}

/// A decomposition read from one answer block: either a list of applications
/// or a single application. Junk items are skipped; empty results are `None`.
pub fn decomposition_from_block(task_id: &str, block: &str) -> Option<DecompositionProposal> {
    let sexp = parse_one_sexp(block.trim()).ok()?;
    let (items, _) = sexp.as_list()?;
    let steps: Vec<DecompositionStep> = if items.first().and_then(|s| s.as_sym()).is_some() {
        step_from_sexp(&sexp).into_iter().collect()
    } else {
        items.iter().filter_map(step_from_sexp).collect()
    };
    if steps.is_empty() {
        return None;
    }
    Some(DecompositionProposal {
        task_id: task_id.to_string(),
        steps,
    })
}

fn step_from_sexp(sexp: &Sexp) -> Option<DecompositionStep> {
    let (items, _) = sexp.as_list()?;
    let (name, _) = items.first()?.as_sym()?;
    if name.starts_with(':') {
        return None;
    }
    let mut args = Vec::new();
    for item in &items[1..] {
        let (tok, _) = item.as_sym()?;
        args.push(tok.trim_start_matches('?').to_string());
    }
    Some(DecompositionStep {
        name: name.to_string(),
        args,
    })
}

/// Connection settings for the chat-completion proposal service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub timeout_secs: u64,
    /// Additional attempts after the first failure.
    pub retries: u32,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".to_string(),
            model: "gpt-4".to_string(),
            temperature: 0.7,
            timeout_secs: 30,
            retries: 2,
        }
    }
}

/// Name of the environment variable holding the service credential.
pub const API_KEY_VAR: &str = "CRAFTPLAN_API_KEY";

#[cfg(feature = "remote")]
pub use remote::RemoteBackend;

#[cfg(feature = "remote")]
mod remote {
    use super::*;

    /// Chat-completion client. Every failure — transport, HTTP status,
    /// malformed body — degrades to an empty proposal list after the
    /// configured retries, so learning proceeds without the service.
    pub struct RemoteBackend {
        config: RemoteConfig,
        client: reqwest::blocking::Client,
    }

    impl RemoteBackend {
        pub fn new(config: RemoteConfig) -> Self {
            let client = reqwest::blocking::Client::builder()
                .timeout(std::time::Duration::from_secs(config.timeout_secs))
                .build()
                .expect("HTTP client builds");
            Self { config, client }
        }

        fn complete(&self, user_prompt: &str) -> Option<String> {
            let body = serde_json::json!({
                "model": self.config.model,
                "temperature": self.config.temperature,
                "messages": [
                    {"role": "system", "content": prompts::SYSTEM},
                    {"role": "user", "content": user_prompt},
                ],
            });
            for _ in 0..=self.config.retries {
                let mut request = self.client.post(&self.config.endpoint).json(&body);
                if let Ok(key) = std::env::var(API_KEY_VAR) {
                    request = request.bearer_auth(key);
                }
                let Ok(response) = request.send() else {
                    continue;
                };
                if !response.status().is_success() {
                    continue;
                }
                let Ok(value) = response.json::<serde_json::Value>() else {
                    continue;
                };
                if let Some(content) = value["choices"][0]["message"]["content"].as_str() {
                    return Some(content.to_string());
                }
            }
            None
        }

        fn examples_text(examples: &[SolvedExample]) -> String {
            if examples.is_empty() {
                return String::new();
            }
            let mut out = String::from("Solved examples:\n");
            for ex in examples {
                out.push_str(&format!("{}: ({})\n", ex.instruction, ex.steps.join(" ")));
            }
            out.push('\n');
            out
        }
    }

    impl ProposalBackend for RemoteBackend {
        fn decompositions(&self, ctx: &TaskContext<'_>) -> Vec<DecompositionProposal> {
            let prompt = prompts::fill(
                prompts::DECOMPOSE,
                &[
                    ("instruction", ctx.instruction),
                    ("state", &unary_atom_rendering(ctx.state)),
                    ("examples", &Self::examples_text(ctx.examples)),
                    ("n", "4"),
                ],
            );
            let Some(content) = self.complete(&prompt) else {
                return Vec::new();
            };
            balanced_blocks(&content)
                .iter()
                .filter_map(|b| decomposition_from_block(ctx.task_id, b))
                .collect()
        }

        fn goals(&self, ctx: &TaskContext<'_>) -> Vec<String> {
            let prompt = prompts::fill(
                prompts::GOAL,
                &[
                    ("instruction", ctx.instruction),
                    ("state", &unary_atom_rendering(ctx.state)),
                    ("predicates", ""),
                    ("examples", &Self::examples_text(ctx.examples)),
                    ("n", "4"),
                ],
            );
            let Some(content) = self.complete(&prompt) else {
                return Vec::new();
            };
            balanced_blocks(&content)
        }

        fn definitions(&self, usage: &NameUsage, ctx: &LibraryContext<'_>) -> Vec<String> {
            let usages = usage
                .usages
                .iter()
                .map(|args| format!("({} {})", usage.name, args.join(" ")))
                .collect::<Vec<_>>()
                .join("\n");
            let predicates = ctx
                .vocab
                .predicates()
                .map(|sig| {
                    let mut s = format!("({}", sig.name);
                    for ty in &sig.param_types {
                        s.push_str(&format!(" {ty}"));
                    }
                    s.push(')');
                    s
                })
                .collect::<Vec<_>>()
                .join("\n");
            let prompt = prompts::fill(
                prompts::DEFINE,
                &[
                    ("name", &usage.name),
                    ("usages", &usages),
                    ("predicates", &predicates),
                    ("operators", &ctx.known.join("\n")),
                    ("n", "3"),
                ],
            );
            let Some(content) = self.complete(&prompt) else {
                return Vec::new();
            };
            balanced_blocks(&content)
                .into_iter()
                .filter(|b| b.contains(":action"))
                .collect()
        }
    }
}


#[cfg(test)]
mod proptests {
    use super::*;
    use crate::env::EnvConfig;
    use crate::symbolic::check_against_vocabulary;
    use proptest::prelude::*;

    fn vocab() -> Vocabulary {
        Env::new(EnvConfig::desk()).vocabulary().clone()
    }

    fn arb_term() -> impl Strategy<Value = Term> {
        prop_oneof![
            prop_oneof![Just("r"), Just("t"), Just("n"), Just("l"), Just("x")]
                .prop_map(|v| Term::Var(v.to_string())),
            Just(Term::Obj("axe0".to_string())),
        ]
    }

    fn arb_literal() -> impl Strategy<Value = RawLiteral> {
        let pred = prop_oneof![
            Just("tree"),
            Just("axe"),
            Just("wood"),
            Just("inventory"),
            Just("hypothetical"),
            Just("agent-at"),
            Just("object-at"),
            Just("glitter"),
        ];
        (any::<bool>(), pred, proptest::collection::vec(arb_term(), 0..3)).prop_map(
            |(positive, pred, args)| RawLiteral {
                positive,
                pred: pred.to_string(),
                args,
            },
        )
    }

    proptest! {
        // Whatever garbage comes in, anything accepted is a well-formed
        // operator the vocabulary checker also accepts.
        #[test]
        fn accepted_corrections_always_validate(
            pre in proptest::collection::vec(arb_literal(), 0..6),
            eff in proptest::collection::vec(arb_literal(), 0..6),
        ) {
            let raw = RawOperatorProposal {
                name: "probe".to_string(),
                params: vec![],
                pre,
                eff,
            };
            let vocab = vocab();
            if let Ok(op) = correct_syntax(&raw, &vocab) {
                prop_assert!(check_against_vocabulary(&vocab, &op).is_ok());
                prop_assert!(!op.eff().is_empty());
            }
        }
    }
}
