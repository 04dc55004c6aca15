//! Bi-level plan execution.
//!
//! A symbolic plan is not trusted to predict the world: each planned action's
//! effects become a *subgoal*, and a budgeted low-level search against the
//! real environment has to make that subgoal true before the next planned
//! action is considered. Operators whose subgoals keep failing are exactly
//! the ones later filtering will discard, so this module also keeps the
//! per-operator attempt/success ledger.
//!
//! Successful low-level fragments are lifted (object names replaced by
//! variables constrained by the kinds the objects had) and stored in a
//! [`PolicyDictionary`] keyed by what the fragment achieved. When a later
//! subgoal matches a key, the stored fragment is replayed under a fresh
//! binding before any search is attempted, which is what lets low-level
//! experience transfer across tasks with different object names and layouts.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::env::{pred, ty, Env, EnvError, LowLevelAction, RawState, StepOutcome, Task};
use crate::planner::{plan, PlanOutcome, PlannerConfig};
use crate::symbolic::{
    eval_goal, AbstractState, Atom, GoalFormula, GroundAction, GroundLiteral, Literal, ObjectName,
    Operator, Term, TypedVar,
};

/// Stored suggestions per dictionary key; inserting beyond this evicts the
/// entry with the worst replay record.
pub const MAX_ENTRIES_PER_KEY: usize = 8;
/// Hindsight keys extracted from one successful fragment.
pub const MAX_KEYS_PER_EPISODE: usize = 6;

// ---------------------------------------------------------------------------
// Subgoals
// ---------------------------------------------------------------------------

/// Canonical lifted form of a subgoal's positive literals: the dictionary key
/// text plus the concrete objects at each variable position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubgoalKey {
    pub text: String,
    /// Object bound to `?v{i}` in the key text.
    pub objects: Vec<ObjectName>,
}

/// Replaces object names by `?v0, ?v1, ...` in first-occurrence order over
/// the sorted positive atoms. Subgoals that differ only by a consistent
/// renaming of objects therefore produce the same key text whenever the
/// renaming preserves atom order, which is what makes cross-task dictionary
/// hits possible. Returns `None` when there are no positive literals.
pub fn lift_positive(literals: &[GroundLiteral]) -> Option<SubgoalKey> {
    let mut atoms: Vec<_> = literals
        .iter()
        .filter(|l| l.positive)
        .map(|l| &l.atom)
        .collect();
    atoms.sort();
    atoms.dedup();
    if atoms.is_empty() {
        return None;
    }
    let mut objects: Vec<ObjectName> = Vec::new();
    for atom in &atoms {
        for arg in &atom.args {
            if !objects.contains(arg) {
                objects.push(arg.clone());
            }
        }
    }
    let index: HashMap<&str, usize> = objects
        .iter()
        .enumerate()
        .map(|(i, o)| (o.as_str(), i))
        .collect();
    let rendered: Vec<String> = atoms
        .iter()
        .map(|atom| {
            if atom.args.is_empty() {
                format!("({})", atom.pred)
            } else {
                let args: Vec<String> = atom
                    .args
                    .iter()
                    .map(|a| format!("?v{}", index[a.as_str()]))
                    .collect();
                format!("({} {})", atom.pred, args.join(" "))
            }
        })
        .collect();
    Some(SubgoalKey {
        text: rendered.join(" "),
        objects,
    })
}

/// Ids still in the fresh pool according to an abstract state. A plan over
/// that state may bind these ids, but the pool hands ids out in its own
/// order, so a plan's choice is a placeholder rather than a commitment.
pub fn fresh_placeholders(state: &AbstractState) -> BTreeSet<ObjectName> {
    state
        .atoms()
        .iter()
        .filter(|a| a.pred == pred::HYPOTHETICAL)
        .map(|a| a.args[0].clone())
        .collect()
}

/// One planned action's commitment: the ground effects the low-level search
/// has to realize.
///
/// Effect literals over pool placeholders are checked existentially — each
/// placeholder becomes a shared variable — because the item that actually
/// materializes may carry a different id than the one the plan picked.
/// Literals over real objects stay ground.
#[derive(Debug, Clone)]
pub struct Subgoal {
    literals: Vec<GroundLiteral>,
    check: GoalFormula,
    key: Option<SubgoalKey>,
}

impl Subgoal {
    /// `placeholders`: the fresh-pool ids of the state the plan was computed
    /// from ([`fresh_placeholders`]).
    pub fn new(mut literals: Vec<GroundLiteral>, placeholders: &BTreeSet<ObjectName>) -> Self {
        literals.sort();
        literals.dedup();
        let mut vars: Vec<ObjectName> = Vec::new();
        for lit in &literals {
            for arg in &lit.atom.args {
                if placeholders.contains(arg) && !vars.contains(arg) {
                    vars.push(arg.clone());
                }
            }
        }
        let var_name: HashMap<&str, String> = vars
            .iter()
            .enumerate()
            .map(|(i, v)| (v.as_str(), format!("e{i}")))
            .collect();
        let goal_literals: Vec<Literal> = literals
            .iter()
            .map(|lit| {
                let terms: Vec<Term> = lit
                    .atom
                    .args
                    .iter()
                    .map(|arg| match var_name.get(arg.as_str()) {
                        Some(v) => Term::Var(v.clone()),
                        None => Term::Obj(arg.clone()),
                    })
                    .collect();
                let atom = Atom::new(&lit.atom.pred, terms);
                if lit.positive {
                    Literal::pos(atom)
                } else {
                    Literal::neg(atom)
                }
            })
            .collect();
        let typed: Vec<TypedVar> = vars
            .iter()
            .enumerate()
            .map(|(i, _)| TypedVar::new(&format!("e{i}"), ty::ENTITY))
            .collect();
        let check = GoalFormula::new(typed, goal_literals)
            .expect("subgoal literals are nonempty and every variable is declared");
        let key = lift_positive(&literals);
        Self {
            literals,
            check,
            key,
        }
    }

    pub fn from_action(action: &GroundAction, placeholders: &BTreeSet<ObjectName>) -> Self {
        Self::new(action.bound_eff(), placeholders)
    }

    pub fn literals(&self) -> &[GroundLiteral] {
        &self.literals
    }

    /// Dictionary key (positive projection); `None` for pure-delete subgoals.
    pub fn key(&self) -> Option<&SubgoalKey> {
        self.key.as_ref()
    }

    pub fn satisfied(&self, env: &Env, x: &RawState) -> Result<bool, EnvError> {
        let abs = env.abstract_state(x)?;
        Ok(eval_goal(&abs, &self.check, env.vocabulary().types()))
    }
}

// ---------------------------------------------------------------------------
// Lifted trajectories
// ---------------------------------------------------------------------------

/// How a trajectory step refers to an object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrajTerm {
    /// The object at this position of the current subgoal's key.
    Key(usize),
    /// Enumerated at replay time over objects matching the recorded kinds.
    Free(usize),
    /// The id produced by this trajectory's n-th item-creating step.
    Created(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "kebab-case")]
pub enum LiftedStep {
    /// Move to the cell currently holding the referenced object.
    MoveToObject { target: TrajTerm },
    Mine { tool: TrajTerm, target: TrajTerm },
    Craft {
        output: String,
        ingredients: Vec<TrajTerm>,
    },
}

/// A successful low-level fragment with object names abstracted away, ready
/// to be re-bound and replayed in a different state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiftedTrajectory {
    steps: Vec<LiftedStep>,
    /// Unary predicates that held for each free variable's original object
    /// when the fragment ran; replay candidates must satisfy all of them.
    free_kinds: Vec<BTreeSet<String>>,
}

impl LiftedTrajectory {
    pub fn steps(&self) -> &[LiftedStep] {
        &self.steps
    }

    pub fn free_kinds(&self) -> &[BTreeSet<String>] {
        &self.free_kinds
    }
}

/// A raw low-level fragment: the state it started from and the actions that
/// ran. Every action is assumed to have changed the state (search and replay
/// both discard no-ops).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Episode {
    pub start: RawState,
    pub actions: Vec<LowLevelAction>,
}

/// Lifts an episode against a key binding: ids in `key_objects` become
/// [`TrajTerm::Key`], ids produced mid-episode become [`TrajTerm::Created`],
/// every other id becomes a [`TrajTerm::Free`] variable carrying the unary
/// predicates it satisfied at the start. Returns `None` if the episode cannot
/// be re-simulated (it always can when it came from this module's own
/// search).
fn lift_trajectory(env: &Env, episode: &Episode, key_objects: &[ObjectName]) -> Option<LiftedTrajectory> {
    let start_abs = env.abstract_state(&episode.start).ok()?;
    let key_index: HashMap<&str, usize> = key_objects
        .iter()
        .enumerate()
        .map(|(i, o)| (o.as_str(), i))
        .collect();
    let mut created: HashMap<ObjectName, usize> = HashMap::new();
    let mut free_ids: Vec<ObjectName> = Vec::new();
    let mut free_kinds: Vec<BTreeSet<String>> = Vec::new();
    let mut steps = Vec::new();
    let mut x = episode.start.clone();

    let mut resolve = |id: &ObjectName,
                       created: &HashMap<ObjectName, usize>,
                       start_abs: &AbstractState|
     -> Option<TrajTerm> {
        if let Some(&k) = created.get(id) {
            return Some(TrajTerm::Created(k));
        }
        if let Some(&p) = key_index.get(id.as_str()) {
            return Some(TrajTerm::Key(p));
        }
        if let Some(i) = free_ids.iter().position(|f| f == id) {
            return Some(TrajTerm::Free(i));
        }
        if !start_abs.objects().contains_key(id) {
            return None;
        }
        let kinds: BTreeSet<String> = start_abs
            .atoms()
            .iter()
            .filter(|a| a.args.len() == 1 && a.args[0] == *id)
            .map(|a| a.pred.clone())
            .collect();
        free_ids.push(id.clone());
        free_kinds.push(kinds);
        Some(TrajTerm::Free(free_ids.len() - 1))
    };

    for action in &episode.actions {
        let step = match action {
            LowLevelAction::MoveTo { to } => {
                let target = x
                    .world()
                    .iter()
                    .find(|(_, o)| o.at == *to)
                    .map(|(id, _)| id.clone())?;
                LiftedStep::MoveToObject {
                    target: resolve(&target, &created, &start_abs)?,
                }
            }
            LowLevelAction::Mine { tool, target } => LiftedStep::Mine {
                tool: resolve(tool, &created, &start_abs)?,
                target: resolve(target, &created, &start_abs)?,
            },
            LowLevelAction::Craft {
                output,
                ingredients,
            } => LiftedStep::Craft {
                output: output.clone(),
                ingredients: ingredients
                    .iter()
                    .map(|i| resolve(i, &created, &start_abs))
                    .collect::<Option<Vec<_>>>()?,
            },
        };
        steps.push(step);
        let next = match env.step(&x, action).ok()? {
            StepOutcome::Changed(next) => next,
            StepOutcome::NoOp(_) => return None,
        };
        if let Some(new_id) = new_inventory_id(&x, &next) {
            created.insert(new_id, created.len());
        }
        x = next;
    }
    Some(LiftedTrajectory { steps, free_kinds })
}

/// The inventory id present in `next` but not `prev`, if any. Mining and
/// crafting produce exactly one.
fn new_inventory_id(prev: &RawState, next: &RawState) -> Option<ObjectName> {
    next.inventory()
        .keys()
        .find(|id| !prev.inventory().contains_key(*id))
        .cloned()
}

// ---------------------------------------------------------------------------
// Policy dictionary
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyEntry {
    pub trajectory: LiftedTrajectory,
    pub attempts: u64,
    pub successes: u64,
}

/// A recorded or pending dictionary change; task-local changes are collected
/// as these and merged centrally so concurrent attempts stay deterministic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DictUpdate {
    pub key: String,
    pub trajectory: LiftedTrajectory,
    pub attempts: u64,
    pub successes: u64,
}

/// Lifted trajectories indexed by the canonical text of what they achieved.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyDictionary {
    entries: BTreeMap<String, Vec<PolicyEntry>>,
}

impl PolicyDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Total stored trajectories across all keys.
    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn entries(&self, key: &str) -> &[PolicyEntry] {
        self.entries.get(key).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Entry indices in replay order: most successes first, ties by insertion
    /// order.
    pub fn ranked(&self, key: &str) -> Vec<usize> {
        let list = self.entries(key);
        let mut idx: Vec<usize> = (0..list.len()).collect();
        idx.sort_by_key(|&i| Reverse(list[i].successes));
        idx
    }

    /// Adds counts to the entry holding `trajectory` under `key`, inserting
    /// it if absent. Overfull keys evict the entry with the lowest success
    /// rate (ties: fewest successes, then the newest).
    pub fn record(&mut self, key: &str, trajectory: &LiftedTrajectory, attempts: u64, successes: u64) {
        let list = self.entries.entry(key.to_string()).or_default();
        if let Some(entry) = list.iter_mut().find(|e| &e.trajectory == trajectory) {
            entry.attempts += attempts;
            entry.successes += successes;
            return;
        }
        list.push(PolicyEntry {
            trajectory: trajectory.clone(),
            attempts,
            successes,
        });
        if list.len() > MAX_ENTRIES_PER_KEY {
            let mut evict = 0;
            for i in 1..list.len() {
                let (a, b) = (&list[i], &list[evict]);
                let by_rate = (a.successes * b.attempts).cmp(&(b.successes * a.attempts));
                if by_rate.then(a.successes.cmp(&b.successes)) != std::cmp::Ordering::Greater {
                    evict = i;
                }
            }
            list.remove(evict);
        }
    }

    pub fn apply(&mut self, update: &DictUpdate) {
        self.record(
            &update.key,
            &update.trajectory,
            update.attempts,
            update.successes,
        );
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dictionary serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

// ---------------------------------------------------------------------------
// Subgoal solving: suggestion replay, then bounded search
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgoalSearchConfig {
    /// Environment steps a single subgoal may consume (replays included).
    pub budget: usize,
    /// Search horizon: fragments longer than this are not found by search
    /// (replayed suggestions may be longer).
    pub depth: usize,
    /// Bindings tried per dictionary entry before moving on.
    pub replays_per_entry: usize,
}

impl Default for SubgoalSearchConfig {
    fn default() -> Self {
        Self {
            budget: 1000,
            depth: 4,
            replays_per_entry: 8,
        }
    }
}

/// Why a subgoal attempt came back unsolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubgoalFailure {
    /// The step budget ran out with states still unexplored.
    BudgetExhausted,
    /// Every state within the search horizon was exhausted; the subgoal is
    /// locally unreachable.
    DeadEnd,
}

/// Outcome of one subgoal attempt. `steps_used` counts every environment
/// step taken, by replay and search alike, so budgets compare fairly across
/// strategies.
#[derive(Debug, Clone)]
pub struct SubgoalOutcome {
    pub solution: Option<(Vec<LowLevelAction>, RawState)>,
    /// Present exactly when `solution` is `None`.
    pub failure: Option<SubgoalFailure>,
    pub steps_used: usize,
    pub dict_updates: Vec<DictUpdate>,
    /// Whether a replayed suggestion (rather than search) produced the
    /// solution.
    pub from_suggestion: bool,
}

/// Makes one subgoal true: already-satisfied check, then ranked dictionary
/// replays, then breadth-first search over environment actions, all under a
/// shared step budget.
pub fn solve_subgoal(
    env: &Env,
    x0: &RawState,
    subgoal: &Subgoal,
    dict: &PolicyDictionary,
    cfg: &SubgoalSearchConfig,
) -> Result<SubgoalOutcome, EnvError> {
    if subgoal.satisfied(env, x0)? {
        return Ok(SubgoalOutcome {
            solution: Some((Vec::new(), x0.clone())),
            failure: None,
            steps_used: 0,
            dict_updates: Vec::new(),
            from_suggestion: false,
        });
    }
    let mut steps_used = 0;
    let mut updates: Vec<DictUpdate> = Vec::new();

    if let Some(key) = subgoal.key() {
        let abs0 = env.abstract_state(x0)?;
        for idx in dict.ranked(&key.text) {
            if steps_used >= cfg.budget {
                break;
            }
            let entry = &dict.entries(&key.text)[idx];
            let replayed = replay_entry(
                env,
                x0,
                &abs0,
                &entry.trajectory,
                subgoal,
                &key.objects,
                cfg,
                &mut steps_used,
            )?;
            match replayed {
                Some((actions, xf)) => {
                    updates.push(DictUpdate {
                        key: key.text.clone(),
                        trajectory: entry.trajectory.clone(),
                        attempts: 1,
                        successes: 1,
                    });
                    return Ok(SubgoalOutcome {
                        solution: Some((actions, xf)),
                        failure: None,
                        steps_used,
                        dict_updates: updates,
                        from_suggestion: true,
                    });
                }
                None => updates.push(DictUpdate {
                    key: key.text.clone(),
                    trajectory: entry.trajectory.clone(),
                    attempts: 1,
                    successes: 0,
                }),
            }
        }
    }

    let remaining = cfg.budget.saturating_sub(steps_used);
    let searched = breadth_first(
        env,
        x0,
        |x| subgoal.satisfied(env, x),
        remaining,
        Some(cfg.depth),
    )?;
    steps_used += searched.steps;
    if let Some((actions, xf)) = searched.solved {
        let episode = Episode {
            start: x0.clone(),
            actions: actions.clone(),
        };
        for update in relabel_updates(env, &episode, subgoal.key())? {
            if !updates
                .iter()
                .any(|u| u.key == update.key && u.trajectory == update.trajectory)
            {
                updates.push(update);
            }
        }
        return Ok(SubgoalOutcome {
            solution: Some((actions, xf)),
            failure: None,
            steps_used,
            dict_updates: updates,
            from_suggestion: false,
        });
    }
    let failure = if searched.exhausted || steps_used >= cfg.budget {
        SubgoalFailure::BudgetExhausted
    } else {
        SubgoalFailure::DeadEnd
    };
    Ok(SubgoalOutcome {
        solution: None,
        failure: Some(failure),
        steps_used,
        dict_updates: updates,
        from_suggestion: false,
    })
}

/// Tries stored bindings of one trajectory against the current state.
/// Deterministic: free-variable candidates are enumerated in name order,
/// assignments lexicographically, and the first assignment whose full replay
/// satisfies the subgoal wins.
#[allow(clippy::too_many_arguments)]
fn replay_entry(
    env: &Env,
    x0: &RawState,
    abs0: &AbstractState,
    traj: &LiftedTrajectory,
    subgoal: &Subgoal,
    key_binding: &[ObjectName],
    cfg: &SubgoalSearchConfig,
    steps_used: &mut usize,
) -> Result<Option<(Vec<LowLevelAction>, RawState)>, EnvError> {
    let candidates: Vec<Vec<&str>> = traj
        .free_kinds
        .iter()
        .map(|kinds| {
            abs0.objects()
                .keys()
                .filter(|o| {
                    kinds
                        .iter()
                        .all(|k| abs0.holds(&crate::symbolic::GroundAtom::new(k, &[o.as_str()])))
                })
                .map(String::as_str)
                .collect()
        })
        .collect();
    if candidates.iter().any(Vec::is_empty) && !candidates.is_empty() {
        return Ok(None);
    }

    let mut assignment: Vec<usize> = vec![0; candidates.len()];
    let mut tried = 0;
    'assignments: loop {
        if tried >= cfg.replays_per_entry || *steps_used >= cfg.budget {
            return Ok(None);
        }
        // Distinct free variables must denote distinct objects, as they did
        // in the source episode.
        let distinct = {
            let mut seen = HashSet::new();
            assignment
                .iter()
                .enumerate()
                .all(|(v, &c)| seen.insert(candidates[v][c]))
        };
        if distinct {
            tried += 1;
            let free: Vec<ObjectName> = assignment
                .iter()
                .enumerate()
                .map(|(v, &c)| candidates[v][c].to_string())
                .collect();
            if let Some(result) =
                run_binding(env, x0, traj, subgoal, key_binding, &free, cfg, steps_used)?
            {
                return Ok(Some(result));
            }
        }
        // Odometer increment.
        let mut pos = candidates.len();
        loop {
            if pos == 0 {
                break 'assignments;
            }
            pos -= 1;
            assignment[pos] += 1;
            if assignment[pos] < candidates[pos].len() {
                break;
            }
            assignment[pos] = 0;
        }
    }
    Ok(None)
}

/// Executes one fully bound trajectory; `None` when a step fails, the budget
/// runs out, or the final state misses the subgoal.
#[allow(clippy::too_many_arguments)]
fn run_binding(
    env: &Env,
    x0: &RawState,
    traj: &LiftedTrajectory,
    subgoal: &Subgoal,
    key_binding: &[ObjectName],
    free: &[ObjectName],
    cfg: &SubgoalSearchConfig,
    steps_used: &mut usize,
) -> Result<Option<(Vec<LowLevelAction>, RawState)>, EnvError> {
    let mut created: Vec<ObjectName> = Vec::new();
    let mut x = x0.clone();
    let mut actions = Vec::new();
    for step in &traj.steps {
        let resolve = |term: &TrajTerm| -> Option<ObjectName> {
            match term {
                TrajTerm::Key(p) => key_binding.get(*p).cloned(),
                TrajTerm::Free(v) => free.get(*v).cloned(),
                TrajTerm::Created(k) => created.get(*k).cloned(),
            }
        };
        let action = match step {
            LiftedStep::MoveToObject { target } => {
                let Some(id) = resolve(target) else {
                    return Ok(None);
                };
                let Some(obj) = x.world().get(&id) else {
                    return Ok(None);
                };
                LowLevelAction::MoveTo { to: obj.at }
            }
            LiftedStep::Mine { tool, target } => {
                let (Some(tool), Some(target)) = (resolve(tool), resolve(target)) else {
                    return Ok(None);
                };
                LowLevelAction::Mine { tool, target }
            }
            LiftedStep::Craft {
                output,
                ingredients,
            } => {
                let Some(mut ids) = ingredients
                    .iter()
                    .map(resolve)
                    .collect::<Option<Vec<_>>>()
                else {
                    return Ok(None);
                };
                ids.sort();
                LowLevelAction::Craft {
                    output: output.clone(),
                    ingredients: ids,
                }
            }
        };
        if *steps_used >= cfg.budget {
            return Ok(None);
        }
        *steps_used += 1;
        match env.step(&x, &action) {
            Ok(StepOutcome::Changed(next)) => {
                if let Some(new_id) = new_inventory_id(&x, &next) {
                    created.push(new_id);
                }
                actions.push(action);
                x = next;
            }
            Ok(StepOutcome::NoOp(_)) | Err(_) => return Ok(None),
        }
    }
    if subgoal.satisfied(env, &x)? {
        Ok(Some((actions, x)))
    } else {
        Ok(None)
    }
}

/// Hindsight credit for a successful fragment: it is stored under the
/// subgoal it was asked to achieve, under everything it added as one key,
/// and under each touched object's added atoms, capped at
/// [`MAX_KEYS_PER_EPISODE`] keys.
fn relabel_updates(
    env: &Env,
    episode: &Episode,
    requested: Option<&SubgoalKey>,
) -> Result<Vec<DictUpdate>, EnvError> {
    if episode.actions.is_empty() {
        return Ok(Vec::new());
    }
    let final_state = env.replay(&episode.start, &episode.actions)?;
    let before = env.abstract_state(&episode.start)?;
    let after = env.abstract_state(&final_state)?;
    let added: Vec<_> = after.atoms().difference(before.atoms()).cloned().collect();

    let mut keys: Vec<SubgoalKey> = Vec::new();
    if let Some(key) = requested {
        keys.push(key.clone());
    }
    let mut atom_sets: Vec<Vec<crate::symbolic::GroundAtom>> = Vec::new();
    if !added.is_empty() {
        atom_sets.push(added.clone());
    }
    let objects: BTreeSet<&ObjectName> = added.iter().flat_map(|a| a.args.iter()).collect();
    for obj in objects {
        let subset: Vec<_> = added
            .iter()
            .filter(|a| a.args.contains(obj))
            .cloned()
            .collect();
        if !atom_sets.contains(&subset) {
            atom_sets.push(subset);
        }
    }
    for set in atom_sets {
        let literals: Vec<GroundLiteral> = set.into_iter().map(GroundLiteral::pos).collect();
        if let Some(key) = lift_positive(&literals) {
            if !keys.iter().any(|k| k.text == key.text && k.objects == key.objects) {
                keys.push(key);
            }
        }
        if keys.len() >= MAX_KEYS_PER_EPISODE {
            break;
        }
    }
    keys.truncate(MAX_KEYS_PER_EPISODE);

    let mut updates: Vec<DictUpdate> = Vec::new();
    for key in keys {
        let Some(trajectory) = lift_trajectory(env, episode, &key.objects) else {
            continue;
        };
        if !updates
            .iter()
            .any(|u| u.key == key.text && u.trajectory == trajectory)
        {
            updates.push(DictUpdate {
                key: key.text,
                trajectory,
                attempts: 1,
                successes: 1,
            });
        }
    }
    Ok(updates)
}

// ---------------------------------------------------------------------------
// Breadth-first search over raw states
// ---------------------------------------------------------------------------

struct BfsResult {
    solved: Option<(Vec<LowLevelAction>, RawState)>,
    steps: usize,
    /// True when the search stopped because the step budget ran out rather
    /// than because the reachable space within the horizon was exhausted.
    exhausted: bool,
}

/// Uniform-depth search over [`Env::enumerate_actions`]. The budget counts
/// environment steps taken (successful or not); duplicate states and no-ops
/// are not enqueued. The accept test is free of charge, mirroring how replay
/// accounting works.
fn breadth_first<F>(
    env: &Env,
    x0: &RawState,
    mut accept: F,
    budget: usize,
    depth_cap: Option<usize>,
) -> Result<BfsResult, EnvError>
where
    F: FnMut(&RawState) -> Result<bool, EnvError>,
{
    if accept(x0)? {
        return Ok(BfsResult {
            solved: Some((Vec::new(), x0.clone())),
            steps: 0,
            exhausted: false,
        });
    }
    // (state, depth, parent index and the action that led here)
    let mut nodes: Vec<(RawState, usize, Option<(usize, LowLevelAction)>)> =
        vec![(x0.clone(), 0, None)];
    let mut seen: HashSet<RawState> = HashSet::from([x0.clone()]);
    let mut queue: VecDeque<usize> = VecDeque::from([0]);
    let mut steps = 0;

    while let Some(i) = queue.pop_front() {
        let (state, depth) = (nodes[i].0.clone(), nodes[i].1);
        if depth_cap.is_some_and(|cap| depth >= cap) {
            continue;
        }
        for action in env.enumerate_actions(&state) {
            if steps >= budget {
                return Ok(BfsResult {
                    solved: None,
                    steps,
                    exhausted: true,
                });
            }
            steps += 1;
            let Ok(StepOutcome::Changed(next)) = env.step(&state, &action) else {
                continue;
            };
            if !seen.insert(next.clone()) {
                continue;
            }
            let child = nodes.len();
            nodes.push((next, depth + 1, Some((i, action))));
            if accept(&nodes[child].0)? {
                let mut path = Vec::new();
                let mut at = child;
                while let Some((parent, action)) = &nodes[at].2 {
                    path.push(action.clone());
                    at = *parent;
                }
                path.reverse();
                let state = nodes[child].0.clone();
                return Ok(BfsResult {
                    solved: Some((path, state)),
                    steps,
                    exhausted: false,
                });
            }
            queue.push_back(child);
        }
    }
    Ok(BfsResult {
        solved: None,
        steps,
        exhausted: false,
    })
}

// ---------------------------------------------------------------------------
// Operator bookkeeping and candidate ordering
// ---------------------------------------------------------------------------

/// Per-operator subgoal ledger: `attempts` counts subgoals issued for the
/// operator, `successes` those the low-level search achieved.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorStats {
    pub attempts: u64,
    pub successes: u64,
}

impl OperatorStats {
    pub fn failures(&self) -> u64 {
        self.attempts - self.successes
    }

    pub fn add(&mut self, other: OperatorStats) {
        self.attempts += other.attempts;
        self.successes += other.successes;
    }
}

/// An operator offered to the high-level planner. `text` is its canonical
/// printed form — the identity used for stats — and `rank` its position in
/// the original proposal stream.
#[derive(Debug, Clone)]
pub struct CandidateOperator {
    pub op: Arc<Operator>,
    pub text: String,
    pub rank: usize,
}

impl CandidateOperator {
    pub fn new(op: Arc<Operator>, rank: usize) -> Self {
        let text = op.to_string();
        Self { op, text, rank }
    }
}

/// Candidate indices ordered most-trustworthy-first: fewest failed subgoals,
/// then most successes, then original proposal order. Re-ranking between
/// attempts is what pushes misbehaving lookalikes behind their reliable
/// rivals.
pub fn priority_order<F>(candidates: &[CandidateOperator], stats: F) -> Vec<usize>
where
    F: Fn(&str) -> OperatorStats,
{
    let mut idx: Vec<usize> = (0..candidates.len()).collect();
    idx.sort_by_key(|&i| {
        let s = stats(&candidates[i].text);
        (s.failures(), Reverse(s.successes), candidates[i].rank)
    });
    idx
}

// ---------------------------------------------------------------------------
// Bi-level planning
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilevelConfig {
    pub planner: PlannerConfig,
    pub subgoal: SubgoalSearchConfig,
}

impl Default for BilevelConfig {
    fn default() -> Self {
        Self {
            // Pool ids are allocation tokens: one per item ever created, all
            // interchangeable until used. The heuristic must not treat a
            // specific id as scarce.
            planner: PlannerConfig {
                token_predicates: BTreeSet::from([pred::HYPOTHETICAL.to_string()]),
                ..PlannerConfig::default()
            },
            subgoal: SubgoalSearchConfig::default(),
        }
    }
}

/// One goal conjecture's fate inside a bi-level attempt.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GoalAttempt {
    /// Whether the symbolic layer found a plan for this conjecture.
    pub planned: bool,
    /// Subgoals in that plan (zero when unplanned).
    pub subgoals: usize,
    /// Index of the subgoal whose low-level search failed, with the reason.
    pub failed_at: Option<(usize, SubgoalFailure)>,
    /// Reward-check verdict after full execution; `None` if never reached.
    pub reward: Option<bool>,
}

/// What one bi-level attempt did, including everything the caller needs to
/// merge: per-operator stat deltas and dictionary updates.
#[derive(Debug, Clone, Default)]
pub struct BilevelOutcome {
    pub solved: bool,
    pub actions: Vec<LowLevelAction>,
    pub final_state: Option<RawState>,
    /// Ground actions of the successful symbolic plan.
    pub hl_plan: Vec<String>,
    pub goal_attempts: usize,
    /// Per-conjecture record, in the order conjectures were tried.
    pub attempts: Vec<GoalAttempt>,
    pub hl_expansions: usize,
    pub ll_steps: usize,
    pub stats_delta: BTreeMap<String, OperatorStats>,
    pub dict_updates: Vec<DictUpdate>,
}

/// Plans symbolically over the candidate operators for each goal conjecture
/// in turn, executes the plan subgoal by subgoal against the environment, and
/// accepts only if the task's own reward check passes at the end.
///
/// A failed subgoal abandons the current conjecture (its stats survive, so
/// the next conjecture's plan ranks the offending operator lower); a plan
/// that executes fully but earns no reward means the conjecture itself was
/// wrong. Candidates may share names: stats are kept per canonical text.
pub fn bilevel_plan(
    env: &Env,
    task: &Task,
    candidates: &[CandidateOperator],
    goals: &[GoalFormula],
    base_stats: &BTreeMap<String, OperatorStats>,
    dict: &PolicyDictionary,
    cfg: &BilevelConfig,
) -> Result<BilevelOutcome, EnvError> {
    let types = env.vocabulary().types();
    let abs0 = env.abstract_state(&task.initial)?;
    let placeholders = fresh_placeholders(&abs0);
    let mut out = BilevelOutcome::default();
    let mut local_dict = dict.clone();

    for goal in goals {
        out.goal_attempts += 1;
        let order = priority_order(candidates, |text| {
            let mut s = base_stats.get(text).copied().unwrap_or_default();
            if let Some(delta) = out.stats_delta.get(text) {
                s.add(*delta);
            }
            s
        });
        let ops: Vec<Arc<Operator>> = order.iter().map(|&i| candidates[i].op.clone()).collect();
        let hl = plan(&ops, &abs0, goal, types, &cfg.planner);
        out.hl_expansions += hl.expanded;
        let PlanOutcome::Solved(hl_actions) = hl.outcome else {
            out.attempts.push(GoalAttempt {
                planned: false,
                subgoals: 0,
                failed_at: None,
                reward: None,
            });
            continue;
        };
        let mut attempt = GoalAttempt {
            planned: true,
            subgoals: hl_actions.len(),
            failed_at: None,
            reward: None,
        };

        let mut x = task.initial.clone();
        let mut actions: Vec<LowLevelAction> = Vec::new();
        for (step, ga) in hl_actions.iter().enumerate() {
            let text = candidates
                .iter()
                .find(|c| Arc::ptr_eq(&c.op, &ga.op))
                .map(|c| c.text.clone())
                .expect("planned action uses a listed candidate");
            let subgoal = Subgoal::from_action(ga, &placeholders);
            let result = solve_subgoal(env, &x, &subgoal, &local_dict, &cfg.subgoal)?;
            out.ll_steps += result.steps_used;
            for update in &result.dict_updates {
                local_dict.apply(update);
            }
            out.dict_updates.extend(result.dict_updates);
            let entry = out.stats_delta.entry(text).or_default();
            entry.attempts += 1;
            match result.solution {
                Some((fragment, xf)) => {
                    entry.successes += 1;
                    actions.extend(fragment);
                    x = xf;
                }
                None => {
                    let reason = result.failure.unwrap_or(SubgoalFailure::DeadEnd);
                    attempt.failed_at = Some((step, reason));
                    break;
                }
            }
        }
        if attempt.failed_at.is_none() {
            let rewarded = env.check_reward(task, &x)?;
            attempt.reward = Some(rewarded);
            out.attempts.push(attempt);
            if rewarded {
                out.solved = true;
                out.actions = actions;
                out.hl_plan = hl_actions.iter().map(GroundAction::to_string).collect();
                out.final_state = Some(x);
                return Ok(out);
            }
        } else {
            out.attempts.push(attempt);
        }
    }
    Ok(out)
}

/// Flat search baseline: breadth-first directly for task reward, no symbolic
/// layer. Same step accounting as the bi-level low-level searches, so budget
/// comparisons are apples to apples.
#[derive(Debug, Clone)]
pub struct DirectSearchOutcome {
    pub solved: bool,
    pub actions: Vec<LowLevelAction>,
    pub ll_steps: usize,
}

pub fn direct_goal_search(
    env: &Env,
    task: &Task,
    budget: usize,
) -> Result<DirectSearchOutcome, EnvError> {
    let result = breadth_first(env, &task.initial, |x| env.check_reward(task, x), budget, None)?;
    Ok(DirectSearchOutcome {
        solved: result.solved.is_some(),
        actions: result.solved.map(|(a, _)| a).unwrap_or_default(),
        ll_steps: result.steps,
    })
}

/// Flat search toward conjectured goal formulas, sharing one total step
/// budget across candidates. A state satisfying a conjecture only counts as a
/// solution if the task's reward check agrees; otherwise the remaining budget
/// moves on to the next conjecture.
pub fn baseline_goal_search(
    env: &Env,
    task: &Task,
    goals: &[GoalFormula],
    budget: usize,
) -> Result<DirectSearchOutcome, EnvError> {
    let types = env.vocabulary().types();
    let mut used = 0;
    for goal in goals {
        if used >= budget {
            break;
        }
        let result = breadth_first(
            env,
            &task.initial,
            |x| Ok(eval_goal(&env.abstract_state(x)?, goal, types)),
            budget - used,
            None,
        )?;
        used += result.steps;
        if let Some((actions, xf)) = result.solved {
            if env.check_reward(task, &xf)? {
                return Ok(DirectSearchOutcome {
                    solved: true,
                    actions,
                    ll_steps: used,
                });
            }
        }
    }
    Ok(DirectSearchOutcome {
        solved: false,
        actions: Vec::new(),
        ll_steps: used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Benchmark, Cell, EnvConfig, GeneratorConfig, WorldObject};
    use crate::symbolic::{parse_domain, parse_goal, GroundAtom, OperatorKey};

    fn desk_env() -> Env {
        Env::new(EnvConfig::desk())
    }

    /// 8x8 state: one tree at (1,1), an axe in hand, two pooled ids.
    fn axe_and_tree() -> RawState {
        RawState::new(
            8,
            8,
            Cell::new(0, 0),
            [(
                "t0".to_string(),
                WorldObject {
                    kind: "tree".to_string(),
                    at: Cell::new(1, 1),
                },
            )]
            .into(),
            [("axe0".to_string(), "axe".to_string())].into(),
            ["n00".to_string(), "n01".to_string()].into_iter().collect(),
        )
        .unwrap()
    }

    fn mine_wood_effects(tree: &str, item: &str) -> Vec<GroundLiteral> {
        vec![
            GroundLiteral::neg(GroundAtom::new("tree", &[tree])),
            GroundLiteral::neg(GroundAtom::new(pred::HYPOTHETICAL, &[item])),
            GroundLiteral::pos(GroundAtom::new("wood", &[item])),
            GroundLiteral::pos(GroundAtom::new(pred::INVENTORY, &[item])),
        ]
    }

    fn placeholder_set(ids: &[&str]) -> BTreeSet<ObjectName> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    /// The operators that actually fit the starter recipe book, as planner
    /// candidates.
    fn desk_domain() -> Vec<CandidateOperator> {
        let text = "\
(define (domain desk)
  (:types
    entity - object
    location - object)
  (:predicates
    (agent-at ?v0 - location)
    (axe ?v0 - entity)
    (bed ?v0 - entity)
    (chicken ?v0 - entity)
    (feather ?v0 - entity)
    (furnace ?v0 - entity)
    (hypothetical ?v0 - entity)
    (inventory ?v0 - entity)
    (iron-ingot ?v0 - entity)
    (iron-ore ?v0 - entity)
    (iron-ore-item ?v0 - entity)
    (object-at ?v0 - entity ?v1 - location)
    (pickaxe ?v0 - entity)
    (sheep ?v0 - entity)
    (shears ?v0 - entity)
    (stick ?v0 - entity)
    (sword ?v0 - entity)
    (tree ?v0 - entity)
    (wood ?v0 - entity)
    (wool ?v0 - entity))
  (:action craft-bed
    :parameters (?w0 - entity ?w1 - entity ?l - entity ?n - entity)
    :precondition (and (hypothetical ?n) (inventory ?l) (inventory ?w0) (inventory ?w1) (wood ?w0) (wood ?w1) (wool ?l))
    :effect (and (bed ?n) (inventory ?n) (not (hypothetical ?n)) (not (inventory ?l)) (not (inventory ?w0)) (not (inventory ?w1))))
  (:action craft-iron-ingot
    :parameters (?o - entity ?f - entity ?n - entity)
    :precondition (and (furnace ?f) (hypothetical ?n) (inventory ?o) (iron-ore-item ?o))
    :effect (and (inventory ?n) (iron-ingot ?n) (not (hypothetical ?n)) (not (inventory ?o))))
  (:action craft-shears
    :parameters (?s - entity ?i - entity ?n - entity)
    :precondition (and (hypothetical ?n) (inventory ?i) (inventory ?s) (iron-ingot ?i) (stick ?s))
    :effect (and (inventory ?n) (not (hypothetical ?n)) (not (inventory ?i)) (not (inventory ?s)) (shears ?n)))
  (:action craft-stick
    :parameters (?w - entity ?n - entity)
    :precondition (and (hypothetical ?n) (inventory ?w) (wood ?w))
    :effect (and (inventory ?n) (not (hypothetical ?n)) (not (inventory ?w)) (stick ?n)))
  (:action craft-sword
    :parameters (?s - entity ?i - entity ?n - entity)
    :precondition (and (hypothetical ?n) (inventory ?i) (inventory ?s) (iron-ingot ?i) (stick ?s))
    :effect (and (inventory ?n) (not (hypothetical ?n)) (not (inventory ?i)) (not (inventory ?s)) (sword ?n)))
  (:action mine-feather
    :parameters (?c - entity ?s - entity ?n - entity)
    :precondition (and (chicken ?c) (hypothetical ?n) (inventory ?s) (sword ?s))
    :effect (and (feather ?n) (inventory ?n) (not (hypothetical ?n))))
  (:action mine-iron-ore
    :parameters (?r - entity ?p - entity ?n - entity)
    :precondition (and (hypothetical ?n) (inventory ?p) (iron-ore ?r) (pickaxe ?p))
    :effect (and (inventory ?n) (iron-ore-item ?n) (not (hypothetical ?n)) (not (iron-ore ?r))))
  (:action mine-wood
    :parameters (?t - entity ?a - entity ?n - entity)
    :precondition (and (axe ?a) (hypothetical ?n) (inventory ?a) (tree ?t))
    :effect (and (inventory ?n) (not (hypothetical ?n)) (not (tree ?t)) (wood ?n)))
  (:action mine-wool
    :parameters (?s - entity ?sh - entity ?n - entity)
    :precondition (and (hypothetical ?n) (inventory ?sh) (sheep ?s) (shears ?sh))
    :effect (and (inventory ?n) (not (hypothetical ?n)) (wool ?n)))
)
";
        let lib = parse_domain(text).unwrap();
        lib.iter()
            .enumerate()
            .map(|(i, op)| CandidateOperator::new(op.clone(), i))
            .collect()
    }

    fn find_candidate<'a>(cands: &'a [CandidateOperator], name: &str) -> &'a CandidateOperator {
        cands.iter().find(|c| c.op.name() == name).unwrap()
    }

    #[test]
    fn placeholder_ids_are_checked_existentially() {
        let env = desk_env();
        let x0 = axe_and_tree();
        // The plan bound the product to n01, but the pool will hand out n00.
        let existential = Subgoal::new(
            mine_wood_effects("t0", "n01"),
            &placeholder_set(&["n00", "n01"]),
        );
        let ground = Subgoal::new(mine_wood_effects("t0", "n01"), &BTreeSet::new());

        let moved = env
            .step(&x0, &LowLevelAction::MoveTo { to: Cell::new(1, 1) })
            .unwrap()
            .into_state(&x0);
        let mined = env
            .step(
                &moved,
                &LowLevelAction::Mine {
                    tool: "axe0".to_string(),
                    target: "t0".to_string(),
                },
            )
            .unwrap()
            .into_state(&moved);
        assert_eq!(mined.inventory().get("n00").map(String::as_str), Some("wood"));
        assert!(existential.satisfied(&env, &mined).unwrap());
        assert!(!ground.satisfied(&env, &mined).unwrap());
        assert!(!existential.satisfied(&env, &x0).unwrap());
    }

    #[test]
    fn positive_projection_is_the_dictionary_key() {
        let subgoal = Subgoal::new(
            mine_wood_effects("t0", "n01"),
            &placeholder_set(&["n01"]),
        );
        let key = subgoal.key().unwrap();
        assert_eq!(key.text, "(inventory ?v0) (wood ?v0)");
        assert_eq!(key.objects, vec!["n01".to_string()]);

        let pure_delete = Subgoal::new(
            vec![GroundLiteral::neg(GroundAtom::new("tree", &["t0"]))],
            &BTreeSet::new(),
        );
        assert!(pure_delete.key().is_none());
    }

    #[test]
    fn search_solves_a_mining_subgoal_and_relabels_it() {
        let env = desk_env();
        let x0 = axe_and_tree();
        let subgoal = Subgoal::new(
            mine_wood_effects("t0", "n01"),
            &placeholder_set(&["n00", "n01"]),
        );
        let dict = PolicyDictionary::new();
        let out = solve_subgoal(&env, &x0, &subgoal, &dict, &SubgoalSearchConfig::default()).unwrap();

        let (actions, xf) = out.solution.expect("searchable within depth 2");
        assert_eq!(
            actions,
            vec![
                LowLevelAction::MoveTo { to: Cell::new(1, 1) },
                LowLevelAction::Mine {
                    tool: "axe0".to_string(),
                    target: "t0".to_string(),
                },
            ]
        );
        assert!(!out.from_suggestion);
        assert!(out.steps_used > 0);
        assert!(subgoal.satisfied(&env, &xf).unwrap());

        let mut dict = dict;
        for u in &out.dict_updates {
            dict.apply(u);
        }
        let keys: Vec<&str> = dict.keys().collect();
        assert_eq!(
            keys,
            vec![
                "(agent-at ?v0)",
                "(agent-at ?v0) (inventory ?v1) (wood ?v1)",
                "(inventory ?v0) (wood ?v0)",
            ]
        );
        let entry = &dict.entries("(inventory ?v0) (wood ?v0)")[0];
        assert_eq!((entry.attempts, entry.successes), (1, 1));
        assert_eq!(
            entry.trajectory.steps(),
            &[
                LiftedStep::MoveToObject {
                    target: TrajTerm::Free(0)
                },
                LiftedStep::Mine {
                    tool: TrajTerm::Free(1),
                    target: TrajTerm::Free(0),
                },
            ]
        );
        assert_eq!(
            entry.trajectory.free_kinds(),
            &[
                ["tree".to_string()].into_iter().collect::<BTreeSet<_>>(),
                ["axe".to_string(), "inventory".to_string()]
                    .into_iter()
                    .collect(),
            ]
        );
    }

    #[test]
    fn suggestions_transfer_across_renamed_objects() {
        let env = desk_env();
        let x0 = axe_and_tree();
        let subgoal_a = Subgoal::new(
            mine_wood_effects("t0", "n01"),
            &placeholder_set(&["n00", "n01"]),
        );
        let mut dict = PolicyDictionary::new();
        let first = solve_subgoal(&env, &x0, &subgoal_a, &dict, &SubgoalSearchConfig::default()).unwrap();
        assert!(first.solution.is_some());
        for u in &first.dict_updates {
            dict.apply(u);
        }

        // Same pattern, different names and places.
        let x1 = RawState::new(
            8,
            8,
            Cell::new(5, 5),
            [(
                "elm7".to_string(),
                WorldObject {
                    kind: "tree".to_string(),
                    at: Cell::new(3, 2),
                },
            )]
            .into(),
            [("hatchet".to_string(), "axe".to_string())].into(),
            ["m00".to_string()].into_iter().collect(),
        )
        .unwrap();
        let subgoal_b = Subgoal::new(
            mine_wood_effects("elm7", "m00"),
            &placeholder_set(&["m00"]),
        );
        let out = solve_subgoal(&env, &x1, &subgoal_b, &dict, &SubgoalSearchConfig::default()).unwrap();
        assert!(out.from_suggestion, "dictionary replay should solve it");
        assert_eq!(out.steps_used, 2, "exactly the replayed fragment");
        let (actions, _) = out.solution.unwrap();
        assert_eq!(
            actions,
            vec![
                LowLevelAction::MoveTo { to: Cell::new(3, 2) },
                LowLevelAction::Mine {
                    tool: "hatchet".to_string(),
                    target: "elm7".to_string(),
                },
            ]
        );
    }

    #[test]
    fn created_items_rebind_during_replay() {
        let env = desk_env();
        // Stick subgoal from a woodless start: search must chain
        // move + mine + craft, and replay must rebind the mined item.
        let x0 = axe_and_tree();
        let effects = vec![
            GroundLiteral::pos(GroundAtom::new("stick", &["n01"])),
            GroundLiteral::pos(GroundAtom::new(pred::INVENTORY, &["n01"])),
            GroundLiteral::neg(GroundAtom::new(pred::HYPOTHETICAL, &["n01"])),
        ];
        let subgoal = Subgoal::new(effects.clone(), &placeholder_set(&["n00", "n01"]));
        let mut dict = PolicyDictionary::new();
        let first = solve_subgoal(&env, &x0, &subgoal, &dict, &SubgoalSearchConfig::default()).unwrap();
        let (actions, _) = first.solution.expect("depth-3 fragment");
        assert_eq!(actions.len(), 3);
        for u in &first.dict_updates {
            dict.apply(u);
        }
        let entry = &dict.entries("(inventory ?v0) (stick ?v0)")[0];
        assert!(
            entry.trajectory.steps().iter().any(|s| matches!(
                s,
                LiftedStep::Craft { ingredients, .. }
                    if ingredients == &[TrajTerm::Created(0)]
            )),
            "craft step must consume the item created by the mine step"
        );

        let x1 = RawState::new(
            8,
            8,
            Cell::new(7, 7),
            [(
                "oak3".to_string(),
                WorldObject {
                    kind: "tree".to_string(),
                    at: Cell::new(2, 6),
                },
            )]
            .into(),
            [("axe9".to_string(), "axe".to_string())].into(),
            ["p00".to_string(), "p01".to_string()].into_iter().collect(),
        )
        .unwrap();
        let effects_b = vec![
            GroundLiteral::pos(GroundAtom::new("stick", &["p00"])),
            GroundLiteral::pos(GroundAtom::new(pred::INVENTORY, &["p00"])),
        ];
        let subgoal_b = Subgoal::new(effects_b, &placeholder_set(&["p00", "p01"]));
        let out = solve_subgoal(&env, &x1, &subgoal_b, &dict, &SubgoalSearchConfig::default()).unwrap();
        assert!(out.from_suggestion);
        assert_eq!(out.steps_used, 3);
    }

    #[test]
    fn impossible_subgoal_exhausts_and_reports_failure() {
        let env = desk_env();
        let x0 = axe_and_tree();
        // No object can be a sword and shears at once here.
        let subgoal = Subgoal::new(
            vec![
                GroundLiteral::pos(GroundAtom::new("sword", &["n00"])),
                GroundLiteral::pos(GroundAtom::new("shears", &["n00"])),
                GroundLiteral::pos(GroundAtom::new(pred::INVENTORY, &["n00"])),
            ],
            &placeholder_set(&["n00"]),
        );
        let dict = PolicyDictionary::new();
        let cfg = SubgoalSearchConfig {
            budget: 200,
            ..SubgoalSearchConfig::default()
        };
        let out = solve_subgoal(&env, &x0, &subgoal, &dict, &cfg).unwrap();
        assert!(out.solution.is_none());
        assert!(out.steps_used > 0);
        assert!(out.steps_used <= 200);
        assert!(out.dict_updates.is_empty());
    }

    #[test]
    fn dictionary_eviction_keeps_the_reliable_entries() {
        let mut dict = PolicyDictionary::new();
        let traj = |n: usize| LiftedTrajectory {
            steps: vec![LiftedStep::Craft {
                output: format!("thing{n}"),
                ingredients: vec![TrajTerm::Free(0)],
            }],
            free_kinds: vec![BTreeSet::new()],
        };
        // Entry i gets i successes out of 8 attempts.
        for i in 0..=MAX_ENTRIES_PER_KEY {
            dict.record("(k ?v0)", &traj(i), 8, i as u64);
        }
        assert_eq!(dict.entries("(k ?v0)").len(), MAX_ENTRIES_PER_KEY);
        // The 0-success entry was evicted.
        assert!(dict
            .entries("(k ?v0)")
            .iter()
            .all(|e| e.successes > 0));
        // Ranked order: most successes first.
        let ranked = dict.ranked("(k ?v0)");
        let successes: Vec<u64> = ranked
            .iter()
            .map(|&i| dict.entries("(k ?v0)")[i].successes)
            .collect();
        let mut sorted = successes.clone();
        sorted.sort_by_key(|&s| Reverse(s));
        assert_eq!(successes, sorted);

        // Re-recording an existing trajectory merges instead of duplicating.
        dict.record("(k ?v0)", &traj(3), 1, 1);
        let merged = dict
            .entries("(k ?v0)")
            .iter()
            .find(|e| e.trajectory == traj(3))
            .unwrap();
        assert_eq!((merged.attempts, merged.successes), (9, 4));
    }

    #[test]
    fn dictionary_round_trips_through_json() {
        let env = desk_env();
        let x0 = axe_and_tree();
        let subgoal = Subgoal::new(
            mine_wood_effects("t0", "n01"),
            &placeholder_set(&["n00", "n01"]),
        );
        let mut dict = PolicyDictionary::new();
        let out = solve_subgoal(&env, &x0, &subgoal, &dict, &SubgoalSearchConfig::default()).unwrap();
        for u in &out.dict_updates {
            dict.apply(u);
        }
        let text = dict.to_json();
        let back = PolicyDictionary::from_json(&text).unwrap();
        assert_eq!(dict, back);
        assert_eq!(text, back.to_json());
    }

    #[test]
    fn priority_order_ranks_by_failures_then_successes_then_rank() {
        let cands = desk_domain();
        let stats: BTreeMap<String, OperatorStats> = [
            (
                find_candidate(&cands, "mine-wood").text.clone(),
                OperatorStats {
                    attempts: 3,
                    successes: 3,
                },
            ),
            (
                find_candidate(&cands, "craft-stick").text.clone(),
                OperatorStats {
                    attempts: 2,
                    successes: 0,
                },
            ),
        ]
        .into();
        let order = priority_order(&cands, |text| stats.get(text).copied().unwrap_or_default());
        let names: Vec<&str> = order.iter().map(|&i| cands[i].op.name()).collect();
        // mine-wood first (0 failures, 3 successes), untouched ops next in
        // proposal order, craft-stick last (2 failures).
        assert_eq!(names[0], "mine-wood");
        assert_eq!(*names.last().unwrap(), "craft-stick");
        let untouched: Vec<&str> = names[1..names.len() - 1].to_vec();
        let mut expected: Vec<&str> = cands
            .iter()
            .map(|c| c.op.name())
            .filter(|n| *n != "mine-wood" && *n != "craft-stick")
            .collect();
        expected.sort_by_key(|n| find_candidate(&cands, n).rank);
        assert_eq!(untouched, expected);
    }

    #[test]
    fn bilevel_executes_a_generated_task_end_to_end() {
        let env = desk_env();
        let (tasks, _) = crate::env::generate_benchmark(&GeneratorConfig {
            benchmark: Benchmark::Mining,
            count: 4,
            seed: 3,
            env: EnvConfig::desk(),
        })
        .unwrap();
        let task = &tasks[2];
        assert_eq!(task.instruction, "Mine wood");
        let cands = desk_domain();
        let goal = parse_goal(
            "(exists (?g - entity) (and (wood ?g) (inventory ?g)))",
            env.vocabulary(),
        )
        .unwrap();
        let out = bilevel_plan(
            &env,
            task,
            &cands,
            &[goal],
            &BTreeMap::new(),
            &PolicyDictionary::new(),
            &BilevelConfig::default(),
        )
        .unwrap();
        assert!(out.solved);
        assert_eq!(out.goal_attempts, 1);
        assert_eq!(out.hl_plan.len(), 1);
        assert!(out.hl_plan[0].starts_with("(mine-wood "));
        let stats = &out.stats_delta[&find_candidate(&cands, "mine-wood").text];
        assert_eq!((stats.attempts, stats.successes), (1, 1));
        let xf = out.final_state.unwrap();
        assert!(env.check_reward(task, &xf).unwrap());
        assert!(!out.dict_updates.is_empty());
    }

    #[test]
    fn bilevel_recovers_from_a_lookalike_with_broken_effects() {
        let env = desk_env();
        let (tasks, _) = crate::env::generate_benchmark(&GeneratorConfig {
            benchmark: Benchmark::Mining,
            count: 4,
            seed: 3,
            env: EnvConfig::desk(),
        })
        .unwrap();
        let task = &tasks[2];
        let correct = find_candidate(&desk_domain(), "mine-wood").op.clone();
        // Claims the mined item is simultaneously wood and a sword: its
        // subgoal can never be made true.
        let broken = parse_domain(
            "\
(define (domain broken)
  (:types
    entity - object)
  (:predicates
    (axe ?v0 - entity)
    (hypothetical ?v0 - entity)
    (inventory ?v0 - entity)
    (sword ?v0 - entity)
    (tree ?v0 - entity)
    (wood ?v0 - entity))
  (:action mine-wood
    :parameters (?t - entity ?a - entity ?n - entity)
    :precondition (and (axe ?a) (hypothetical ?n) (inventory ?a) (tree ?t))
    :effect (and (inventory ?n) (not (hypothetical ?n)) (not (tree ?t)) (sword ?n) (wood ?n)))
)",
        )
        .unwrap()
        .get(&OperatorKey {
            name: "mine-wood".to_string(),
            arity: 3,
        })
        .unwrap()
        .clone();

        // The broken twin arrives first in proposal order.
        let cands = vec![
            CandidateOperator::new(broken, 0),
            CandidateOperator::new(correct, 1),
        ];
        let goal = parse_goal(
            "(exists (?g - entity) (and (wood ?g) (inventory ?g)))",
            env.vocabulary(),
        )
        .unwrap();
        let cfg = BilevelConfig {
            subgoal: SubgoalSearchConfig {
                budget: 300,
                ..SubgoalSearchConfig::default()
            },
            ..BilevelConfig::default()
        };
        let out = bilevel_plan(
            &env,
            task,
            &cands,
            &[goal.clone(), goal],
            &BTreeMap::new(),
            &PolicyDictionary::new(),
            &cfg,
        )
        .unwrap();
        assert!(out.solved, "second conjecture must route around the twin");
        assert_eq!(out.goal_attempts, 2);
        let broken_stats = &out.stats_delta[&cands[0].text];
        let correct_stats = &out.stats_delta[&cands[1].text];
        assert_eq!(
            (broken_stats.attempts, broken_stats.successes),
            (1, 0),
            "the twin was tried once and failed its subgoal"
        );
        assert_eq!((correct_stats.attempts, correct_stats.successes), (1, 1));
    }

    #[test]
    fn direct_search_handles_shallow_tasks_only_within_budget() {
        let env = desk_env();
        let (tasks, _) = crate::env::generate_benchmark(&GeneratorConfig {
            benchmark: Benchmark::Mining,
            count: 4,
            seed: 3,
            env: EnvConfig::desk(),
        })
        .unwrap();
        let task = &tasks[2];
        let solved = direct_goal_search(&env, task, 10_000).unwrap();
        assert!(solved.solved);
        assert!(solved.ll_steps <= 10_000);
        assert!(!solved.actions.is_empty());

        let starved = direct_goal_search(&env, task, 2).unwrap();
        assert!(!starved.solved);
        assert_eq!(starved.ll_steps, 2);
    }

    #[test]
    fn identical_inputs_give_byte_identical_outcomes() {
        let env = desk_env();
        let x0 = axe_and_tree();
        let subgoal = Subgoal::new(
            mine_wood_effects("t0", "n01"),
            &placeholder_set(&["n00", "n01"]),
        );
        let dict = PolicyDictionary::new();
        let a = solve_subgoal(&env, &x0, &subgoal, &dict, &SubgoalSearchConfig::default()).unwrap();
        let b = solve_subgoal(&env, &x0, &subgoal, &dict, &SubgoalSearchConfig::default()).unwrap();
        assert_eq!(a.solution, b.solution);
        assert_eq!(a.steps_used, b.steps_used);
        assert_eq!(
            serde_json::to_string(&a.dict_updates).unwrap(),
            serde_json::to_string(&b.dict_updates).unwrap()
        );
    }
}
