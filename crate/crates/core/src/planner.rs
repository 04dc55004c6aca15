//! Forward search over abstract states: greedy best-first search with
//! pluggable heuristics, symmetric-object pruning, and plan validation.
//!
//! Determinism: the open list is ordered by `(h, depth, insertion)`, bindings
//! are enumerated lexicographically, and operators are tried in slice order,
//! so identical inputs always produce identical results.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, HashSet};
use std::sync::Arc;

use crate::symbolic::{
    apply, eval_goal, AbstractState, GoalFormula, GroundAction, GroundAtom, Literal, ObjectName,
    Operator, Term, TypeHierarchy,
};

/// Search guidance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Heuristic {
    /// Minimum number of unsatisfied goal literals over all assignments.
    /// Zero exactly when the goal holds. Cheap but blind to distance.
    GoalCount,
    /// Additive delete-relaxation estimate: each goal atom is priced at its
    /// cheapest relaxed derivation, literal costs are summed and minimized
    /// over assignments. Zero exactly when the goal holds; relaxed dead ends
    /// are real dead ends and are reported as unreachable.
    Additive,
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PlannerConfig {
    /// Maximum node expansions before giving up.
    pub max_nodes: usize,
    /// Nodes at this depth are not expanded further.
    pub max_plan_len: usize,
    pub heuristic: Heuristic,
    /// Predicates that model allocation tokens (fresh-item bookkeeping).
    /// Tokens are plentiful and mutually interchangeable by construction,
    /// but each ground atom names one specific token, so a heuristic table
    /// grounded once against the root state would tie every estimate to the
    /// particular token ids it happened to enumerate — and real successors,
    /// which consume ids in their own order, would look like dead ends or
    /// lose credit for progress parked on an id the table never priced.
    /// The additive heuristic therefore folds every object appearing in a
    /// token atom of the root state onto one canonical representative (both
    /// when grounding its table and when reading a state's facts) and prices
    /// the token atoms themselves at zero. The real search still enforces
    /// token preconditions literally. Affects only the heuristic; with the
    /// default empty set the planner treats all objects alike.
    #[serde(default)]
    pub token_predicates: BTreeSet<String>,
    /// Record one entry per expansion.
    pub trace: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            max_nodes: 100_000,
            max_plan_len: 24,
            heuristic: Heuristic::Additive,
            token_predicates: BTreeSet::new(),
            trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanOutcome {
    Solved(Vec<GroundAction>),
    /// The reachable space (within the length bound) was exhausted without
    /// reaching the goal, or a relaxed dead end proves it unreachable.
    Unreachable,
    BudgetExhausted,
}

/// One expansion, for inspection output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub step: usize,
    pub depth: usize,
    pub h: usize,
    /// Action that produced the expanded state; `None` for the root.
    pub action: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanResult {
    pub outcome: PlanOutcome,
    pub expanded: usize,
    pub trace: Vec<TraceEntry>,
}

/// Replays a plan with full precondition checking and tests the goal at the
/// end. The planner's own output always passes; external plans may not.
pub fn validate_plan(
    init: &AbstractState,
    plan: &[GroundAction],
    goal: &GoalFormula,
    types: &TypeHierarchy,
) -> bool {
    let mut state = init.clone();
    for action in plan {
        match apply(&state, action) {
            Ok(next) => state = next,
            Err(_) => return false,
        }
    }
    eval_goal(&state, goal, types)
}

// ---------------------------------------------------------------------------
// Symmetric-object pruning
// ---------------------------------------------------------------------------

/// Interchangeability classes of state objects. Two objects are classed
/// together when they have the same type and the same atom shapes (their own
/// occurrences holed out, all other arguments identical), no atom mentions
/// two class members at once, and neither is protected. Swapping two such
/// objects is then an automorphism of the state that fixes the goal, so
/// restricting search to canonical bindings loses no solutions.
struct SymmetryClasses {
    /// object -> (class id, rank within the sorted class); size-1 classes
    /// are omitted.
    members: HashMap<ObjectName, (usize, usize)>,
    class_count: usize,
}

fn symmetry_classes(state: &AbstractState, protected: &BTreeSet<&str>) -> SymmetryClasses {
    let mut signatures: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    for (obj, ty) in state.objects() {
        if protected.contains(obj.as_str()) {
            continue;
        }
        let mut shapes: Vec<String> = state
            .atoms()
            .iter()
            .filter(|a| a.args.iter().any(|arg| arg == obj))
            .map(|a| {
                let holed: Vec<&str> = a
                    .args
                    .iter()
                    .map(|arg| if arg == obj { "\u{0}" } else { arg.as_str() })
                    .collect();
                format!("{} {}", a.pred, holed.join(" "))
            })
            .collect();
        shapes.sort();
        signatures
            .entry(format!("{ty}|{}", shapes.join("|")))
            .or_default()
            .push(obj);
    }

    let classes: Vec<Vec<&str>> = signatures
        .into_values()
        .filter(|members| members.len() >= 2)
        .collect();

    // Conservative split: if any atom mentions two members of one class, the
    // swap argument above does not go through; drop the whole class.
    let mut dropped = vec![false; classes.len()];
    for atom in state.atoms() {
        for (i, members) in classes.iter().enumerate() {
            if dropped[i] {
                continue;
            }
            let hits = atom
                .args
                .iter()
                .filter(|arg| members.contains(&arg.as_str()))
                .collect::<BTreeSet<_>>();
            if hits.len() >= 2 {
                dropped[i] = true;
            }
        }
    }

    let mut members = HashMap::new();
    let mut class_count = 0;
    for (i, class) in classes.iter().enumerate() {
        if dropped[i] {
            continue;
        }
        for (rank, obj) in class.iter().enumerate() {
            members.insert((*obj).to_string(), (class_count, rank));
        }
        class_count += 1;
    }
    SymmetryClasses {
        members,
        class_count,
    }
}

/// Objects named as constants in the goal; symmetry must not move them.
fn goal_constants(goal: &GoalFormula) -> BTreeSet<&str> {
    goal.literals()
        .iter()
        .flat_map(|lit| lit.atom.terms.iter())
        .filter_map(|t| match t {
            Term::Obj(o) => Some(o.as_str()),
            Term::Var(_) => None,
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Precondition-guided binding enumeration
// ---------------------------------------------------------------------------

/// Bindings of `op` over the state's objects such that (a) every positive
/// precondition satisfies `holds_positive` as soon as it is fully bound,
/// (b) negative preconditions are false in `state` when `enforce_negatives`,
/// and (c) the binding is canonical under `classes`. Literal checks fire at
/// the shallowest recursion depth that binds them, so mismatching subtrees
/// are pruned early. Output order is lexicographic in the argument vector.
fn match_bindings(
    op: &Arc<Operator>,
    state: &AbstractState,
    types: &TypeHierarchy,
    classes: &SymmetryClasses,
    holds_positive: &dyn Fn(&GroundAtom) -> bool,
    enforce_negatives: bool,
) -> Vec<GroundAction> {
    let param_index: BTreeMap<&str, usize> = op
        .params()
        .iter()
        .enumerate()
        .map(|(i, p)| (p.name.as_str(), i))
        .collect();
    // at_depth[d]: preconditions fully bound once d parameters are bound.
    let mut at_depth: Vec<Vec<&Literal>> = vec![Vec::new(); op.arity() + 1];
    for lit in op.pre() {
        if !lit.positive && !enforce_negatives {
            continue;
        }
        let depth = lit
            .atom
            .terms
            .iter()
            .map(|t| match t {
                Term::Var(v) => param_index[v.as_str()] + 1,
                Term::Obj(_) => unreachable!("operator bodies have no constants"),
            })
            .max()
            .unwrap_or(0);
        at_depth[depth].push(lit);
    }

    let candidates: Vec<Vec<&str>> = op
        .params()
        .iter()
        .map(|p| state.objects_of_type(types, &p.ty).collect())
        .collect();
    if candidates.iter().any(Vec::is_empty) {
        return Vec::new();
    }

    let check = |lit: &Literal, args: &[&str]| -> bool {
        let atom = GroundAtom {
            pred: lit.atom.pred.clone(),
            args: lit
                .atom
                .terms
                .iter()
                .map(|t| match t {
                    Term::Var(v) => args[param_index[v.as_str()]].to_string(),
                    Term::Obj(_) => unreachable!("operator bodies have no constants"),
                })
                .collect(),
        };
        if lit.positive {
            holds_positive(&atom)
        } else {
            !state.holds(&atom)
        }
    };

    struct Ctx<'a, 'b> {
        op: &'a Arc<Operator>,
        candidates: &'a [Vec<&'b str>],
        at_depth: &'a [Vec<&'a Literal>],
        classes: &'a SymmetryClasses,
        check: &'a dyn Fn(&Literal, &[&str]) -> bool,
    }

    fn rec<'b>(
        ctx: &Ctx<'_, 'b>,
        args: &mut Vec<&'b str>,
        next_rank: &mut [usize],
        out: &mut Vec<GroundAction>,
    ) {
        let d = args.len();
        if !ctx.at_depth[d].iter().all(|lit| (ctx.check)(lit, args)) {
            return;
        }
        if d == ctx.candidates.len() {
            out.push(GroundAction::new(
                Arc::clone(ctx.op),
                args.iter().map(|a| a.to_string()).collect(),
            ));
            return;
        }
        for obj in &ctx.candidates[d] {
            let advanced = match ctx.classes.members.get(*obj) {
                Some(&(cid, rank)) => {
                    if rank > next_rank[cid] {
                        continue; // skips a smaller symmetric sibling
                    }
                    let advanced = rank == next_rank[cid];
                    if advanced {
                        next_rank[cid] += 1;
                    }
                    advanced.then_some(cid)
                }
                None => None,
            };
            args.push(obj);
            rec(ctx, args, next_rank, out);
            args.pop();
            if let Some(cid) = advanced {
                next_rank[cid] -= 1;
            }
        }
    }

    let ctx = Ctx {
        op,
        candidates: &candidates,
        at_depth: &at_depth,
        classes,
        check: &check,
    };
    let mut out = Vec::new();
    rec(
        &ctx,
        &mut Vec::with_capacity(op.arity()),
        &mut vec![0usize; classes.class_count],
        &mut out,
    );
    out
}

// ---------------------------------------------------------------------------
// Heuristics
// ---------------------------------------------------------------------------

/// Enumerates goal-variable assignments (variables may share objects),
/// folding `score` over them and keeping the minimum. `None` scores are
/// treated as unreachable. Early-exits on zero.
fn min_over_assignments(
    goal: &GoalFormula,
    state: &AbstractState,
    types: &TypeHierarchy,
    mut score: impl FnMut(&BTreeMap<&str, &str>) -> Option<usize>,
) -> Option<usize> {
    let domains: Vec<(&str, Vec<&str>)> = goal
        .vars()
        .iter()
        .map(|v| (v.name.as_str(), state.objects_of_type(types, &v.ty).collect()))
        .collect();
    if domains.iter().any(|(_, d)| d.is_empty()) {
        return None;
    }
    let mut best: Option<usize> = None;
    let mut binding: BTreeMap<&str, &str> = BTreeMap::new();
    fn rec<'a>(
        domains: &[(&'a str, Vec<&'a str>)],
        i: usize,
        binding: &mut BTreeMap<&'a str, &'a str>,
        best: &mut Option<usize>,
        score: &mut impl FnMut(&BTreeMap<&str, &str>) -> Option<usize>,
    ) -> bool {
        if i == domains.len() {
            if let Some(s) = score(binding) {
                if best.map_or(true, |b| s < b) {
                    *best = Some(s);
                }
                return *best == Some(0);
            }
            return false;
        }
        let (var, domain) = &domains[i];
        for obj in domain {
            binding.insert(var, obj);
            if rec(domains, i + 1, binding, best, score) {
                return true;
            }
        }
        binding.remove(var);
        false
    }
    rec(&domains, 0, &mut binding, &mut best, &mut score);
    best
}

fn ground_goal_literal(lit: &Literal, binding: &BTreeMap<&str, &str>) -> (GroundAtom, bool) {
    let args: Vec<String> = lit
        .atom
        .terms
        .iter()
        .map(|t| match t {
            Term::Var(v) => binding[v.as_str()].to_string(),
            Term::Obj(o) => o.clone(),
        })
        .collect();
    (
        GroundAtom {
            pred: lit.atom.pred.clone(),
            args,
        },
        lit.positive,
    )
}

/// Renames every token id onto one canonical representative so the additive
/// table prices the token pool as a single interchangeable object and real
/// progress parked on any pool id stays visible to the heuristic (see
/// [`PlannerConfig::token_predicates`]).
struct TokenFold {
    members: BTreeSet<String>,
    canonical: String,
}

impl TokenFold {
    /// The pool is every object named by a token atom of the initial state.
    /// Pools of fewer than two ids need no folding.
    fn from_init(init: &AbstractState, token_predicates: &BTreeSet<String>) -> Option<Self> {
        let mut members: BTreeSet<String> = BTreeSet::new();
        for atom in init.atoms() {
            if token_predicates.contains(&atom.pred) {
                members.extend(atom.args.iter().cloned());
            }
        }
        (members.len() > 1).then(|| {
            let canonical = members.first().cloned().expect("two or more members");
            TokenFold { members, canonical }
        })
    }

    fn fold_atom(&self, atom: &GroundAtom) -> GroundAtom {
        GroundAtom {
            pred: atom.pred.clone(),
            args: atom
                .args
                .iter()
                .map(|a| {
                    if self.members.contains(a) {
                        self.canonical.clone()
                    } else {
                        a.clone()
                    }
                })
                .collect(),
        }
    }

    fn fold_state(&self, state: &AbstractState) -> AbstractState {
        state.fold_objects(&self.members, &self.canonical)
    }

    fn fold_atoms(&self, state: &AbstractState) -> BTreeSet<GroundAtom> {
        state.atoms().iter().map(|a| self.fold_atom(a)).collect()
    }
}

enum Evaluator {
    GoalCount,
    Additive {
        /// Relaxed-reachable ground actions from the initial state, as
        /// (positive preconditions, positive effects). Real reachability
        /// from any search state is a subset of this.
        actions: Vec<(Vec<GroundAtom>, Vec<GroundAtom>)>,
        fold: Option<TokenFold>,
    },
}

impl Evaluator {
    fn new(
        heuristic: Heuristic,
        ops: &[Arc<Operator>],
        init: &AbstractState,
        goal: &GoalFormula,
        types: &TypeHierarchy,
        token_predicates: &BTreeSet<String>,
    ) -> Self {
        match heuristic {
            Heuristic::GoalCount => Evaluator::GoalCount,
            Heuristic::Additive => {
                // The object universe never changes during abstract search,
                // and delete-relaxed reachability from the initial state
                // covers everything any successor state can relax-reach, so
                // one closure pass grounds every action the heuristic needs.
                let fold = TokenFold::from_init(init, token_predicates);
                let folded_init;
                let init = match &fold {
                    Some(f) => {
                        folded_init = f.fold_state(init);
                        &folded_init
                    }
                    None => init,
                };
                let classes = symmetry_classes(init, &goal_constants(goal));
                let mut closure: HashSet<GroundAtom> = init.atoms().iter().cloned().collect();
                let mut actions: Vec<(Vec<GroundAtom>, Vec<GroundAtom>)> = Vec::new();
                // Keyed by operator index, not just printed form: distinct
                // operators may share a name and produce identically printed
                // actions with different effects.
                let mut seen: HashSet<(usize, String)> = HashSet::new();
                loop {
                    let mut grew = false;
                    for (oi, op) in ops.iter().enumerate() {
                        let found = match_bindings(
                            op,
                            init,
                            types,
                            &classes,
                            &|a| closure.contains(a),
                            false,
                        );
                        for ga in found {
                            let key = (oi, ga.to_string());
                            if !seen.insert(key) {
                                continue;
                            }
                            // Token atoms are excluded from the stored
                            // preconditions: consuming the canonical token in
                            // the real state must not unprice the rest of the
                            // table (see `PlannerConfig::token_predicates`).
                            let pre: Vec<GroundAtom> = ga
                                .bound_pre()
                                .into_iter()
                                .filter(|l| l.positive && !token_predicates.contains(&l.atom.pred))
                                .map(|l| l.atom)
                                .collect();
                            let eff: Vec<GroundAtom> = ga
                                .bound_eff()
                                .into_iter()
                                .filter(|l| l.positive)
                                .map(|l| l.atom)
                                .collect();
                            for e in &eff {
                                if closure.insert(e.clone()) {
                                    grew = true;
                                }
                            }
                            actions.push((pre, eff));
                        }
                    }
                    if !grew {
                        break;
                    }
                }
                Evaluator::Additive { actions, fold }
            }
        }
    }

    /// `None` means provably unreachable (additive only). Otherwise the
    /// estimate is `0` iff the goal holds in `state`.
    fn h(
        &self,
        state: &AbstractState,
        goal: &GoalFormula,
        types: &TypeHierarchy,
    ) -> Option<usize> {
        match self {
            Evaluator::GoalCount => {
                let est = min_over_assignments(goal, state, types, |binding| {
                    let mut unsat = 0;
                    for lit in goal.literals() {
                        let (atom, positive) = ground_goal_literal(lit, binding);
                        if state.holds(&atom) != positive {
                            unsat += 1;
                        }
                    }
                    Some(unsat)
                });
                // No assignment exists only when a variable's domain is
                // empty; every literal counts as unsatisfied then.
                Some(est.unwrap_or_else(|| goal.literals().len().max(1)))
            }
            Evaluator::Additive { actions, fold } => {
                let folded_atoms;
                let seeds: &BTreeSet<GroundAtom> = match fold {
                    Some(f) => {
                        folded_atoms = f.fold_atoms(state);
                        &folded_atoms
                    }
                    None => state.atoms(),
                };
                let mut costs: HashMap<&GroundAtom, usize> = HashMap::new();
                for atom in seeds {
                    costs.insert(atom, 0);
                }
                // Bellman-style relaxed fixpoint with unit action costs.
                loop {
                    let mut changed = false;
                    for (pre, eff) in actions {
                        let mut total = 0usize;
                        let mut reachable = true;
                        for p in pre {
                            match costs.get(p) {
                                Some(c) => total = total.saturating_add(*c),
                                None => {
                                    reachable = false;
                                    break;
                                }
                            }
                        }
                        if !reachable {
                            continue;
                        }
                        let action_cost = total.saturating_add(1);
                        for e in eff {
                            if costs.get(e).map_or(true, |&c| action_cost < c) {
                                costs.insert(e, action_cost);
                                changed = true;
                            }
                        }
                    }
                    if !changed {
                        break;
                    }
                }
                let est = min_over_assignments(goal, state, types, |binding| {
                    let mut total = 0usize;
                    for lit in goal.literals() {
                        let (atom, positive) = ground_goal_literal(lit, binding);
                        if positive {
                            let atom = match fold {
                                Some(f) => f.fold_atom(&atom),
                                None => atom,
                            };
                            total = total.saturating_add(*costs.get(&atom)?);
                        }
                        // Negative literals cost nothing in the relaxation.
                    }
                    Some(total)
                })?;
                if est == 0 && !eval_goal(state, goal, types) {
                    // All positive parts are priced at zero but a negative
                    // literal fails; the relaxation cannot price deletions.
                    return Some(1);
                }
                Some(est)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Greedy best-first search
// ---------------------------------------------------------------------------

struct Node {
    state: Arc<AbstractState>,
    parent: usize,
    action: Option<GroundAction>,
    depth: usize,
}

/// Plans from `init` to `goal` using the given operators. Operators are
/// tried in slice order at every expansion, which makes the slice order part
/// of the planner's deterministic contract.
///
/// Each distinct state is stored and evaluated once: successors already seen
/// are dropped at generation time, so memory grows with the number of
/// distinct states rather than the number of generated edges.
pub fn plan(
    ops: &[Arc<Operator>],
    init: &AbstractState,
    goal: &GoalFormula,
    types: &TypeHierarchy,
    cfg: &PlannerConfig,
) -> PlanResult {
    let evaluator = Evaluator::new(
        cfg.heuristic,
        ops,
        init,
        goal,
        types,
        &cfg.token_predicates,
    );
    let mut trace = Vec::new();

    let Some(h0) = evaluator.h(init, goal, types) else {
        return PlanResult {
            outcome: PlanOutcome::Unreachable,
            expanded: 0,
            trace,
        };
    };

    let protected = goal_constants(goal);
    let root = Arc::new(init.clone());
    let mut seen: HashSet<Arc<AbstractState>> = HashSet::new();
    seen.insert(root.clone());
    let mut nodes = vec![Node {
        state: root,
        parent: 0,
        action: None,
        depth: 0,
    }];
    let mut open: BinaryHeap<Reverse<(usize, usize, u64, usize)>> = BinaryHeap::new();
    let mut seq: u64 = 0;
    open.push(Reverse((h0, 0, seq, 0)));
    let mut expanded = 0usize;

    while let Some(Reverse((h, _, _, idx))) = open.pop() {
        if eval_goal(&nodes[idx].state, goal, types) {
            let mut plan = Vec::new();
            let mut cur = idx;
            while let Some(action) = nodes[cur].action.clone() {
                plan.push(action);
                cur = nodes[cur].parent;
            }
            plan.reverse();
            return PlanResult {
                outcome: PlanOutcome::Solved(plan),
                expanded,
                trace,
            };
        }
        if nodes[idx].depth == cfg.max_plan_len {
            continue;
        }
        if expanded == cfg.max_nodes {
            return PlanResult {
                outcome: PlanOutcome::BudgetExhausted,
                expanded,
                trace,
            };
        }
        expanded += 1;
        if cfg.trace {
            trace.push(TraceEntry {
                step: expanded,
                depth: nodes[idx].depth,
                h,
                action: nodes[idx].action.as_ref().map(|a| a.to_string()),
            });
        }

        let classes = symmetry_classes(&nodes[idx].state, &protected);
        let mut children = Vec::new();
        for op in ops {
            let state: &AbstractState = &nodes[idx].state;
            for ga in match_bindings(op, state, types, &classes, &|a| state.holds(a), true) {
                let next = apply(state, &ga).expect("matched bindings are applicable");
                if !seen.contains(&next) {
                    let next = Arc::new(next);
                    seen.insert(next.clone());
                    children.push((next, ga));
                }
            }
        }
        for (next, ga) in children {
            let Some(hn) = evaluator.h(&next, goal, types) else {
                continue; // relaxed dead end
            };
            let depth = nodes[idx].depth + 1;
            nodes.push(Node {
                state: next,
                parent: idx,
                action: Some(ga),
                depth,
            });
            seq += 1;
            open.push(Reverse((hn, depth, seq, nodes.len() - 1)));
        }
    }

    PlanResult {
        outcome: PlanOutcome::Unreachable,
        expanded,
        trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::{
        applicable, ground, Atom, Operator, PredicateSignature, TypedVar, Vocabulary,
    };
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn var(v: &str) -> Term {
        Term::Var(v.to_string())
    }

    fn pos(pred: &str, terms: Vec<Term>) -> Literal {
        Literal::pos(Atom::new(pred, terms))
    }

    fn neg(pred: &str, terms: Vec<Term>) -> Literal {
        Literal::neg(Atom::new(pred, terms))
    }

    /// A two-stage pipeline: raw -> cut -> polished, over two items.
    fn pipeline() -> (Vec<Arc<Operator>>, AbstractState, GoalFormula, TypeHierarchy) {
        let types = TypeHierarchy::from_pairs([("item".to_string(), "object".to_string())])
            .unwrap();
        let mut vocab = Vocabulary::new(types.clone());
        for p in ["raw", "cut", "polished"] {
            vocab
                .declare_predicate(PredicateSignature::new(p, &["item"]))
                .unwrap();
        }
        let cut = Operator::new(
            "do-cut",
            vec![TypedVar::new("x", "item")],
            vec![pos("raw", vec![var("x")])],
            vec![neg("raw", vec![var("x")]), pos("cut", vec![var("x")])],
        )
        .unwrap();
        let polish = Operator::new(
            "do-polish",
            vec![TypedVar::new("x", "item")],
            vec![pos("cut", vec![var("x")])],
            vec![neg("cut", vec![var("x")]), pos("polished", vec![var("x")])],
        )
        .unwrap();
        let state = AbstractState::new(
            &vocab,
            [("a".to_string(), "item".to_string()), ("b".to_string(), "item".to_string())]
                .into(),
            [GroundAtom::new("raw", &["a"]), GroundAtom::new("raw", &["b"])].into(),
        )
        .unwrap();
        let goal = GoalFormula::new(
            vec![TypedVar::new("g", "item")],
            vec![pos("polished", vec![var("g")])],
        )
        .unwrap();
        (vec![Arc::new(cut), Arc::new(polish)], state, goal, types)
    }

    #[test]
    fn finds_a_two_step_plan_that_validates() {
        let (ops, init, goal, types) = pipeline();
        for heuristic in [Heuristic::GoalCount, Heuristic::Additive] {
            let cfg = PlannerConfig {
                heuristic,
                ..PlannerConfig::default()
            };
            let result = plan(&ops, &init, &goal, &types, &cfg);
            let PlanOutcome::Solved(steps) = &result.outcome else {
                panic!("{heuristic:?} failed: {:?}", result.outcome);
            };
            let rendered: Vec<String> = steps.iter().map(|a| a.to_string()).collect();
            assert_eq!(rendered, vec!["(do-cut a)", "(do-polish a)"]);
            assert!(validate_plan(&init, steps, &goal, &types));
        }
    }

    #[test]
    fn solved_in_the_initial_state_returns_the_empty_plan() {
        let (ops, init, _, types) = pipeline();
        let goal = GoalFormula::new(
            vec![TypedVar::new("g", "item")],
            vec![pos("raw", vec![var("g")])],
        )
        .unwrap();
        let result = plan(&ops, &init, &goal, &types, &PlannerConfig::default());
        assert_eq!(result.outcome, PlanOutcome::Solved(vec![]));
        assert_eq!(result.expanded, 0);
    }

    #[test]
    fn unreachable_goals_are_reported_not_searched_forever() {
        let (ops, init, _, types) = pipeline();
        // Nothing ever adds a `raw` atom, so a polished-and-raw `a` is
        // impossible.
        let goal = GoalFormula::new(
            vec![],
            vec![
                pos("polished", vec![Term::Obj("a".into())]),
                pos("raw", vec![Term::Obj("a".into())]),
            ],
        )
        .unwrap();
        for heuristic in [Heuristic::GoalCount, Heuristic::Additive] {
            let cfg = PlannerConfig {
                heuristic,
                ..PlannerConfig::default()
            };
            let result = plan(&ops, &init, &goal, &types, &cfg);
            assert_eq!(result.outcome, PlanOutcome::Unreachable, "{heuristic:?}");
        }
        // The additive evaluator recognizes the dead end without expanding.
        let cfg = PlannerConfig {
            heuristic: Heuristic::Additive,
            ..PlannerConfig::default()
        };
        let impossible = GoalFormula::new(
            vec![],
            vec![
                pos("polished", vec![Term::Obj("a".into())]),
                pos("polished", vec![Term::Obj("ghost".into())]),
            ],
        )
        .unwrap();
        let result = plan(&ops, &init, &impossible, &types, &cfg);
        assert_eq!(result.outcome, PlanOutcome::Unreachable);
        assert_eq!(result.expanded, 0);
    }

    #[test]
    fn tiny_budgets_exhaust() {
        let (ops, init, goal, types) = pipeline();
        let cfg = PlannerConfig {
            max_nodes: 1,
            heuristic: Heuristic::GoalCount,
            ..PlannerConfig::default()
        };
        let result = plan(&ops, &init, &goal, &types, &cfg);
        assert_eq!(result.outcome, PlanOutcome::BudgetExhausted);
        assert_eq!(result.expanded, 1);
    }

    #[test]
    fn plan_length_bound_limits_the_search() {
        let (ops, init, goal, types) = pipeline();
        let cfg = PlannerConfig {
            max_plan_len: 1,
            ..PlannerConfig::default()
        };
        let result = plan(&ops, &init, &goal, &types, &cfg);
        assert_eq!(result.outcome, PlanOutcome::Unreachable);
    }

    #[test]
    fn symmetric_objects_collapse_to_one_canonical_binding() {
        let types = TypeHierarchy::from_pairs([("item".to_string(), "object".to_string())])
            .unwrap();
        let mut vocab = Vocabulary::new(types.clone());
        vocab
            .declare_predicate(PredicateSignature::new("spare", &["item"]))
            .unwrap();
        vocab
            .declare_predicate(PredicateSignature::new("used", &["item"]))
            .unwrap();
        let op = Arc::new(
            Operator::new(
                "use-one",
                vec![TypedVar::new("x", "item")],
                vec![pos("spare", vec![var("x")])],
                vec![neg("spare", vec![var("x")]), pos("used", vec![var("x")])],
            )
            .unwrap(),
        );
        let objects: BTreeMap<String, String> = (0..5)
            .map(|i| (format!("s{i}"), "item".to_string()))
            .collect();
        let atoms: BTreeSet<GroundAtom> = (0..5)
            .map(|i| GroundAtom::new("spare", &[&format!("s{i}")]))
            .collect();
        let state = AbstractState::new(&vocab, objects, atoms).unwrap();

        let classes = symmetry_classes(&state, &BTreeSet::new());
        let canonical =
            match_bindings(&op, &state, &types, &classes, &|a| state.holds(a), true);
        let brute = ground(&op, &state, &types);
        assert_eq!(brute.len(), 5);
        assert_eq!(canonical.len(), 1);
        assert_eq!(canonical[0].to_string(), "(use-one s0)");
        assert!(canonical.iter().all(|c| brute.contains(c)));

        // Protected objects (goal constants) are never collapsed.
        let classes = symmetry_classes(&state, &["s3"].into());
        let canonical =
            match_bindings(&op, &state, &types, &classes, &|a| state.holds(a), true);
        let rendered: Vec<String> = canonical.iter().map(|a| a.to_string()).collect();
        assert_eq!(rendered, vec!["(use-one s0)", "(use-one s3)"]);
    }

    #[test]
    fn matched_bindings_equal_brute_force_applicability_filtering() {
        let (ops, init, _, types) = pipeline();
        let classes = SymmetryClasses {
            members: HashMap::new(),
            class_count: 0,
        };
        for op in &ops {
            let matched =
                match_bindings(op, &init, &types, &classes, &|a| init.holds(a), true);
            let brute: Vec<GroundAction> = ground(op, &init, &types)
                .into_iter()
                .filter(|ga| applicable(&init, ga))
                .collect();
            assert_eq!(matched, brute);
        }
    }

    #[test]
    fn goal_count_counts_minimum_unsatisfied_literals() {
        let (_, init, _, types) = pipeline();
        let evaluator = Evaluator::GoalCount;
        let goal = GoalFormula::new(
            vec![TypedVar::new("g", "item")],
            vec![pos("raw", vec![var("g")]), pos("polished", vec![var("g")])],
        )
        .unwrap();
        // Best assignment satisfies `raw` but not `polished`.
        assert_eq!(evaluator.h(&init, &goal, &types), Some(1));
        let satisfied = GoalFormula::new(
            vec![TypedVar::new("g", "item")],
            vec![pos("raw", vec![var("g")])],
        )
        .unwrap();
        assert_eq!(evaluator.h(&init, &satisfied, &types), Some(0));
    }

    #[test]
    fn additive_heuristic_prices_the_relaxed_chain() {
        let (ops, init, goal, types) = pipeline();
        let evaluator = Evaluator::new(
            Heuristic::Additive,
            &ops,
            &init,
            &goal,
            &types,
            &BTreeSet::new(),
        );
        // polished needs do-polish (1) whose precondition cut needs do-cut
        // (1) from raw (0): total 2.
        assert_eq!(evaluator.h(&init, &goal, &types), Some(2));
    }

    #[test]
    fn planning_is_deterministic() {
        let (ops, init, goal, types) = pipeline();
        let cfg = PlannerConfig {
            trace: true,
            ..PlannerConfig::default()
        };
        let a = plan(&ops, &init, &goal, &types, &cfg);
        let b = plan(&ops, &init, &goal, &types, &cfg);
        assert_eq!(a, b);
    }

    // -----------------------------------------------------------------
    // Randomized equivalence against an exhaustive breadth-first oracle
    // -----------------------------------------------------------------

    struct Instance {
        ops: Vec<Arc<Operator>>,
        init: AbstractState,
        goal: GoalFormula,
        types: TypeHierarchy,
    }

    fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
        let types = TypeHierarchy::from_pairs([("thing".to_string(), "object".to_string())])
            .unwrap();
        let mut vocab = Vocabulary::new(types.clone());
        vocab
            .declare_predicate(PredicateSignature::new("p", &["thing"]))
            .unwrap();
        vocab
            .declare_predicate(PredicateSignature::new("q", &["thing", "thing"]))
            .unwrap();

        let n_objects = rng.gen_range(2..=5usize);
        let objects: Vec<String> = (0..n_objects).map(|i| format!("o{i}")).collect();

        let random_atom = |rng: &mut ChaCha8Rng, vars: &[&str]| -> Atom {
            let pick = |rng: &mut ChaCha8Rng| var(vars[rng.gen_range(0..vars.len())]);
            if rng.gen_bool(0.5) {
                Atom::new("p", vec![pick(rng)])
            } else {
                Atom::new("q", vec![pick(rng), pick(rng)])
            }
        };

        let mut ops = Vec::new();
        for i in 0..rng.gen_range(2..=3usize) {
            loop {
                let arity = rng.gen_range(1..=2usize);
                let params: Vec<TypedVar> = (0..arity)
                    .map(|j| TypedVar::new(&format!("v{j}"), "thing"))
                    .collect();
                let names: Vec<String> = params.iter().map(|p| p.name.clone()).collect();
                let vars: Vec<&str> = names.iter().map(String::as_str).collect();
                let mut pre = Vec::new();
                for _ in 0..rng.gen_range(0..=2usize) {
                    let atom = random_atom(rng, &vars);
                    let positive = rng.gen_bool(0.7);
                    pre.push(if positive { Literal::pos(atom) } else { Literal::neg(atom) });
                }
                let mut eff = Vec::new();
                for _ in 0..rng.gen_range(1..=2usize) {
                    let atom = random_atom(rng, &vars);
                    let positive = rng.gen_bool(0.6);
                    eff.push(if positive { Literal::pos(atom) } else { Literal::neg(atom) });
                }
                if let Ok(op) = Operator::new(&format!("op{i}"), params, pre, eff) {
                    ops.push(Arc::new(op));
                    break;
                }
                // Contradictory random effects: resample.
            }
        }

        let mut atoms: BTreeSet<GroundAtom> = BTreeSet::new();
        for o in &objects {
            if rng.gen_bool(0.4) {
                atoms.insert(GroundAtom::new("p", &[o]));
            }
        }
        for a in &objects {
            for b in &objects {
                if rng.gen_bool(0.15) {
                    atoms.insert(GroundAtom::new("q", &[a, b]));
                }
            }
        }
        let init = AbstractState::new(
            &vocab,
            objects.iter().map(|o| (o.clone(), "thing".to_string())).collect(),
            atoms,
        )
        .unwrap();

        let goal = loop {
            let use_var = rng.gen_bool(0.5);
            let vars = if use_var {
                vec![TypedVar::new("g", "thing")]
            } else {
                vec![]
            };
            let term = |rng: &mut ChaCha8Rng| {
                if use_var && rng.gen_bool(0.5) {
                    var("g")
                } else {
                    Term::Obj(objects[rng.gen_range(0..objects.len())].clone())
                }
            };
            let mut literals = Vec::new();
            for _ in 0..rng.gen_range(1..=2usize) {
                let atom = if rng.gen_bool(0.5) {
                    Atom::new("p", vec![term(rng)])
                } else {
                    Atom::new("q", vec![term(rng), term(rng)])
                };
                let positive = rng.gen_bool(0.8);
                literals.push(if positive { Literal::pos(atom) } else { Literal::neg(atom) });
            }
            if let Ok(goal) = GoalFormula::new(vars, literals) {
                break goal;
            }
        };

        Instance {
            ops,
            init,
            goal,
            types,
        }
    }

    /// Exhaustive reachability with brute-force grounding. Returns `None`
    /// when the cap is hit (instance skipped).
    fn oracle_solvable(inst: &Instance, cap: usize) -> Option<bool> {
        let mut seen: HashSet<AbstractState> = HashSet::new();
        let mut frontier = vec![inst.init.clone()];
        seen.insert(inst.init.clone());
        while let Some(state) = frontier.pop() {
            if eval_goal(&state, &inst.goal, &inst.types) {
                return Some(true);
            }
            for op in &inst.ops {
                for ga in ground(op, &state, &inst.types) {
                    if !applicable(&state, &ga) {
                        continue;
                    }
                    let next = apply(&state, &ga).unwrap();
                    if seen.insert(next.clone()) {
                        if seen.len() > cap {
                            return None;
                        }
                        frontier.push(next);
                    }
                }
            }
        }
        Some(false)
    }

    #[test]
    fn matches_the_exhaustive_oracle_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
        let mut checked = 0;
        let mut skipped = 0;
        for _ in 0..150 {
            let inst = random_instance(&mut rng);
            let Some(solvable) = oracle_solvable(&inst, 20_000) else {
                skipped += 1;
                continue;
            };
            checked += 1;
            for heuristic in [Heuristic::GoalCount, Heuristic::Additive] {
                let cfg = PlannerConfig {
                    max_nodes: 30_000,
                    max_plan_len: usize::MAX,
                    heuristic,
                    ..PlannerConfig::default()
                };
                let result = plan(&inst.ops, &inst.init, &inst.goal, &inst.types, &cfg);
                match result.outcome {
                    PlanOutcome::Solved(steps) => {
                        assert!(solvable, "{heuristic:?} found a plan on an unsolvable instance");
                        assert!(
                            validate_plan(&inst.init, &steps, &inst.goal, &inst.types),
                            "{heuristic:?} produced an invalid plan"
                        );
                    }
                    PlanOutcome::Unreachable => {
                        assert!(!solvable, "{heuristic:?} missed a solvable instance");
                    }
                    PlanOutcome::BudgetExhausted => {
                        panic!("budget must exceed the oracle cap");
                    }
                }
            }
        }
        assert!(checked >= 100, "only {checked} instances checked ({skipped} skipped)");
    }
}
