//! Typed STRIPS subset: vocabularies, operators, abstract states, grounding,
//! application, and existential goal evaluation.
//!
//! Determinism contract: every collection that affects output ordering is a
//! `BTreeMap`/`BTreeSet`, operator literal lists are sorted and deduplicated
//! at construction, and grounding enumerates bindings in lexicographic order.

pub(crate) mod parse;
mod print;

pub use parse::{parse_domain, parse_goal, ParseError};
pub use print::{print_domain, print_goal, print_problem};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// A type name in the single-parent hierarchy rooted at [`TypeHierarchy::ROOT`].
pub type TypeName = String;
/// A concrete object name (states, bindings, goals).
pub type ObjectName = String;

/// Structural error raised by constructors and state-transition operations.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("invalid identifier `{0}`")]
    InvalidName(String),
    #[error("unknown type `{0}`")]
    UnknownType(String),
    #[error("type `{0}` is already declared with a different parent")]
    TypeRedeclared(String),
    #[error("type hierarchy cycle involving `{0}`")]
    TypeCycle(String),
    #[error("duplicate predicate `{0}`")]
    DuplicatePredicate(String),
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("predicate `{name}` expects {expected} arguments, got {got}")]
    ArityMismatch {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("duplicate parameter `?{0}`")]
    DuplicateParameter(String),
    #[error("variable `?{0}` does not appear in the parameter list")]
    UnboundVariable(String),
    #[error("constants are not allowed in operator bodies (found `{0}`)")]
    ConstantInOperator(String),
    #[error("operator `{0}` has an empty effect")]
    EmptyEffect(String),
    #[error("operator `{0}` both adds and deletes atom {1}")]
    ContradictoryEffect(String, String),
    #[error("operator `{name}` with arity {arity} is already defined")]
    DuplicateOperator { name: String, arity: usize },
    #[error("variable `?{var}` has type `{var_ty}` but predicate `{pred}` expects `{expected}`")]
    ParamTypeMismatch {
        var: String,
        var_ty: TypeName,
        pred: String,
        expected: TypeName,
    },
    #[error("unknown object `{0}`")]
    UnknownObject(String),
    #[error("action `{0}` is not applicable in this state")]
    Inapplicable(String),
    #[error("goal formula has no literals")]
    EmptyGoal,
    #[error("duplicate goal variable `?{0}`")]
    DuplicateGoalVariable(String),
}

/// `true` for the lowercase identifiers accepted by the text format:
/// a letter followed by letters, digits, `-`, or `_`.
pub fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-' || c == '_')
}

fn check_ident(s: &str) -> Result<(), ModelError> {
    if is_ident(s) {
        Ok(())
    } else {
        Err(ModelError::InvalidName(s.to_string()))
    }
}

/// Single-parent type hierarchy rooted at `object`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TypeHierarchy {
    parent: BTreeMap<TypeName, TypeName>,
}

impl TypeHierarchy {
    /// The implicit root type; always present, never declared.
    pub const ROOT: &'static str = "object";

    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a hierarchy from `(type, parent)` pairs, in any order.
    pub fn from_pairs<I>(pairs: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = (TypeName, TypeName)>,
    {
        let mut parent = BTreeMap::new();
        for (ty, par) in pairs {
            check_ident(&ty)?;
            check_ident(&par)?;
            if ty == Self::ROOT {
                return Err(ModelError::TypeRedeclared(ty));
            }
            match parent.get(&ty) {
                Some(existing) if *existing != par => {
                    return Err(ModelError::TypeRedeclared(ty))
                }
                _ => {
                    parent.insert(ty, par);
                }
            }
        }
        let out = Self { parent };
        for (ty, par) in &out.parent {
            if par != Self::ROOT && !out.parent.contains_key(par) {
                return Err(ModelError::UnknownType(par.clone()));
            }
            // Single-parent chains can only fail by looping back on themselves.
            let mut seen = BTreeSet::new();
            let mut cur = ty.as_str();
            while cur != Self::ROOT {
                if !seen.insert(cur) {
                    return Err(ModelError::TypeCycle(ty.clone()));
                }
                cur = self_parent(&out.parent, cur);
            }
        }
        Ok(out)
    }

    /// Declares `ty` under `parent`; the parent must already resolve.
    pub fn declare(&mut self, ty: &str, parent: &str) -> Result<(), ModelError> {
        check_ident(ty)?;
        if !self.contains(parent) {
            return Err(ModelError::UnknownType(parent.to_string()));
        }
        if ty == Self::ROOT {
            return Err(ModelError::TypeRedeclared(ty.to_string()));
        }
        match self.parent.get(ty) {
            Some(existing) if existing != parent => {
                Err(ModelError::TypeRedeclared(ty.to_string()))
            }
            _ => {
                self.parent.insert(ty.to_string(), parent.to_string());
                Ok(())
            }
        }
    }

    pub fn contains(&self, ty: &str) -> bool {
        ty == Self::ROOT || self.parent.contains_key(ty)
    }

    /// Reflexive subtype test along the parent chain.
    pub fn is_subtype(&self, sub: &str, sup: &str) -> bool {
        if sup == Self::ROOT {
            return self.contains(sub);
        }
        let mut cur = sub;
        loop {
            if cur == sup {
                return true;
            }
            if cur == Self::ROOT {
                return false;
            }
            match self.parent.get(cur) {
                Some(p) => cur = p,
                None => return false,
            }
        }
    }

    /// Declared (non-root) types with their parents, sorted by name.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.parent.iter().map(|(t, p)| (t.as_str(), p.as_str()))
    }
}

fn self_parent<'a>(parent: &'a BTreeMap<TypeName, TypeName>, ty: &'a str) -> &'a str {
    parent.get(ty).map(String::as_str).unwrap_or(TypeHierarchy::ROOT)
}

/// A predicate name with its parameter types.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredicateSignature {
    pub name: String,
    pub param_types: Vec<TypeName>,
}

impl PredicateSignature {
    pub fn new(name: &str, param_types: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            param_types: param_types.iter().map(|t| t.to_string()).collect(),
        }
    }

    pub fn arity(&self) -> usize {
        self.param_types.len()
    }
}

/// Closed predicate vocabulary plus the type hierarchy it is typed against.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    types: TypeHierarchy,
    predicates: BTreeMap<String, PredicateSignature>,
}

impl Vocabulary {
    pub fn new(types: TypeHierarchy) -> Self {
        Self {
            types,
            predicates: BTreeMap::new(),
        }
    }

    pub fn declare_predicate(&mut self, sig: PredicateSignature) -> Result<(), ModelError> {
        check_ident(&sig.name)?;
        for ty in &sig.param_types {
            if !self.types.contains(ty) {
                return Err(ModelError::UnknownType(ty.clone()));
            }
        }
        if self.predicates.contains_key(&sig.name) {
            return Err(ModelError::DuplicatePredicate(sig.name));
        }
        self.predicates.insert(sig.name.clone(), sig);
        Ok(())
    }

    pub fn predicate(&self, name: &str) -> Option<&PredicateSignature> {
        self.predicates.get(name)
    }

    /// Signatures sorted by predicate name.
    pub fn predicates(&self) -> impl Iterator<Item = &PredicateSignature> {
        self.predicates.values()
    }

    pub fn types(&self) -> &TypeHierarchy {
        &self.types
    }
}

/// A term in an operator or goal literal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    /// Variable, stored without the `?` sigil.
    Var(String),
    /// Concrete object constant.
    Obj(ObjectName),
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "?{v}"),
            Term::Obj(o) => write!(f, "{o}"),
        }
    }
}

/// Predicate applied to terms.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub pred: String,
    pub terms: Vec<Term>,
}

impl Atom {
    pub fn new(pred: &str, terms: Vec<Term>) -> Self {
        Self {
            pred: pred.to_string(),
            terms,
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.pred)?;
        for t in &self.terms {
            write!(f, " {t}")?;
        }
        write!(f, ")")
    }
}

/// Positive or negated atom. Ordering sorts by atom first, positives before
/// negatives, which fixes the canonical literal order everywhere.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Literal {
    pub atom: Atom,
    pub positive: bool,
}

impl Literal {
    pub fn pos(atom: Atom) -> Self {
        Self {
            atom,
            positive: true,
        }
    }

    pub fn neg(atom: Atom) -> Self {
        Self {
            atom,
            positive: false,
        }
    }
}

impl Ord for Literal {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.atom
            .cmp(&other.atom)
            .then(other.positive.cmp(&self.positive))
    }
}

impl PartialOrd for Literal {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.positive {
            write!(f, "{}", self.atom)
        } else {
            write!(f, "(not {})", self.atom)
        }
    }
}

/// Fully ground atom over object names.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroundAtom {
    pub pred: String,
    pub args: Vec<ObjectName>,
}

impl GroundAtom {
    pub fn new(pred: &str, args: &[&str]) -> Self {
        Self {
            pred: pred.to_string(),
            args: args.iter().map(|a| a.to_string()).collect(),
        }
    }
}

impl fmt::Display for GroundAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.pred)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        write!(f, ")")
    }
}

/// Ground literal; same ordering convention as [`Literal`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GroundLiteral {
    pub atom: GroundAtom,
    pub positive: bool,
}

impl GroundLiteral {
    pub fn pos(atom: GroundAtom) -> Self {
        Self {
            atom,
            positive: true,
        }
    }

    pub fn neg(atom: GroundAtom) -> Self {
        Self {
            atom,
            positive: false,
        }
    }
}

impl Ord for GroundLiteral {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.atom
            .cmp(&other.atom)
            .then(other.positive.cmp(&self.positive))
    }
}

impl PartialOrd for GroundLiteral {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for GroundLiteral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.positive {
            write!(f, "{}", self.atom)
        } else {
            write!(f, "(not {})", self.atom)
        }
    }
}

/// A typed operator/goal parameter.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TypedVar {
    pub name: String,
    pub ty: TypeName,
}

impl TypedVar {
    pub fn new(name: &str, ty: &str) -> Self {
        Self {
            name: name.to_string(),
            ty: ty.to_string(),
        }
    }
}

/// Lifted STRIPS operator. Invariants enforced at construction: parameter
/// names are distinct, every body term is a parameter variable, the effect is
/// nonempty, and no atom appears with both polarities in the effect. Bodies
/// are stored sorted and deduplicated, so structurally equal operators compare
/// equal regardless of source literal order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Operator {
    name: String,
    params: Vec<TypedVar>,
    pre: Vec<Literal>,
    eff: Vec<Literal>,
}

impl Operator {
    pub fn new(
        name: &str,
        params: Vec<TypedVar>,
        mut pre: Vec<Literal>,
        mut eff: Vec<Literal>,
    ) -> Result<Self, ModelError> {
        check_ident(name)?;
        let mut seen = BTreeSet::new();
        for p in &params {
            check_ident(&p.name)?;
            if !seen.insert(p.name.clone()) {
                return Err(ModelError::DuplicateParameter(p.name.clone()));
            }
        }
        for lit in pre.iter().chain(eff.iter()) {
            for term in &lit.atom.terms {
                match term {
                    Term::Var(v) if seen.contains(v) => {}
                    Term::Var(v) => return Err(ModelError::UnboundVariable(v.clone())),
                    Term::Obj(o) => return Err(ModelError::ConstantInOperator(o.clone())),
                }
            }
        }
        pre.sort();
        pre.dedup();
        eff.sort();
        eff.dedup();
        if eff.is_empty() {
            return Err(ModelError::EmptyEffect(name.to_string()));
        }
        for pair in eff.windows(2) {
            if pair[0].atom == pair[1].atom && pair[0].positive != pair[1].positive {
                return Err(ModelError::ContradictoryEffect(
                    name.to_string(),
                    pair[0].atom.to_string(),
                ));
            }
        }
        Ok(Self {
            name: name.to_string(),
            params,
            pre,
            eff,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> &[TypedVar] {
        &self.params
    }

    pub fn arity(&self) -> usize {
        self.params.len()
    }

    pub fn pre(&self) -> &[Literal] {
        &self.pre
    }

    pub fn eff(&self) -> &[Literal] {
        &self.eff
    }

    pub fn key(&self) -> OperatorKey {
        OperatorKey {
            name: self.name.clone(),
            arity: self.arity(),
        }
    }

    /// Total literal count (preconditions plus effects); the redundancy
    /// tie-breaker during library arbitration.
    pub fn literal_count(&self) -> usize {
        self.pre.len() + self.eff.len()
    }
}

/// Library key: operators are unique per `(name, arity)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OperatorKey {
    pub name: String,
    pub arity: usize,
}

impl fmt::Display for OperatorKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.name, self.arity)
    }
}

/// Checks that an operator's literals conform to a vocabulary: predicates
/// exist, arities match, and each variable's declared type is a subtype of
/// the predicate's parameter type.
pub fn check_against_vocabulary(vocab: &Vocabulary, op: &Operator) -> Result<(), ModelError> {
    let var_ty: BTreeMap<&str, &str> = op
        .params()
        .iter()
        .map(|p| (p.name.as_str(), p.ty.as_str()))
        .collect();
    for p in op.params() {
        if !vocab.types().contains(&p.ty) {
            return Err(ModelError::UnknownType(p.ty.clone()));
        }
    }
    for lit in op.pre().iter().chain(op.eff().iter()) {
        let sig = vocab
            .predicate(&lit.atom.pred)
            .ok_or_else(|| ModelError::UnknownPredicate(lit.atom.pred.clone()))?;
        if sig.arity() != lit.atom.terms.len() {
            return Err(ModelError::ArityMismatch {
                name: sig.name.clone(),
                expected: sig.arity(),
                got: lit.atom.terms.len(),
            });
        }
        for (term, expected) in lit.atom.terms.iter().zip(&sig.param_types) {
            if let Term::Var(v) = term {
                let ty = var_ty[v.as_str()];
                if !vocab.types().is_subtype(ty, expected) {
                    return Err(ModelError::ParamTypeMismatch {
                        var: v.clone(),
                        var_ty: ty.to_string(),
                        pred: sig.name.clone(),
                        expected: expected.clone(),
                    });
                }
            }
        }
    }
    Ok(())
}

/// Named set of operators over a shared vocabulary, keyed by `(name, arity)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperatorLibrary {
    name: String,
    vocab: Vocabulary,
    ops: BTreeMap<OperatorKey, Arc<Operator>>,
}

impl OperatorLibrary {
    pub fn new(name: &str, vocab: Vocabulary) -> Result<Self, ModelError> {
        check_ident(name)?;
        Ok(Self {
            name: name.to_string(),
            vocab,
            ops: BTreeMap::new(),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Inserts after checking vocabulary conformance and key uniqueness.
    pub fn insert(&mut self, op: Operator) -> Result<(), ModelError> {
        check_against_vocabulary(&self.vocab, &op)?;
        let key = op.key();
        if self.ops.contains_key(&key) {
            return Err(ModelError::DuplicateOperator {
                name: key.name,
                arity: key.arity,
            });
        }
        self.ops.insert(key, Arc::new(op));
        Ok(())
    }

    pub fn get(&self, key: &OperatorKey) -> Option<&Arc<Operator>> {
        self.ops.get(key)
    }

    /// Operators sorted by `(name, arity)`.
    pub fn iter(&self) -> impl Iterator<Item = &Arc<Operator>> {
        self.ops.values()
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }
}

/// Closed-world symbolic state: typed objects plus the set of true atoms.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AbstractState {
    objects: BTreeMap<ObjectName, TypeName>,
    atoms: BTreeSet<GroundAtom>,
}

impl AbstractState {
    /// Validates that every atom's arguments are declared objects and that
    /// atoms conform to the vocabulary's signatures.
    pub fn new(
        vocab: &Vocabulary,
        objects: BTreeMap<ObjectName, TypeName>,
        atoms: BTreeSet<GroundAtom>,
    ) -> Result<Self, ModelError> {
        for (obj, ty) in &objects {
            check_ident(obj)?;
            if !vocab.types().contains(ty) {
                return Err(ModelError::UnknownType(ty.clone()));
            }
        }
        for atom in &atoms {
            let sig = vocab
                .predicate(&atom.pred)
                .ok_or_else(|| ModelError::UnknownPredicate(atom.pred.clone()))?;
            if sig.arity() != atom.args.len() {
                return Err(ModelError::ArityMismatch {
                    name: sig.name.clone(),
                    expected: sig.arity(),
                    got: atom.args.len(),
                });
            }
            for arg in &atom.args {
                if !objects.contains_key(arg) {
                    return Err(ModelError::UnknownObject(arg.clone()));
                }
            }
        }
        Ok(Self { objects, atoms })
    }

    pub fn objects(&self) -> &BTreeMap<ObjectName, TypeName> {
        &self.objects
    }

    pub fn atoms(&self) -> &BTreeSet<GroundAtom> {
        &self.atoms
    }

    pub fn holds(&self, atom: &GroundAtom) -> bool {
        self.atoms.contains(atom)
    }

    /// Objects whose declared type is a subtype of `ty`, in name order.
    pub fn objects_of_type<'a>(
        &'a self,
        types: &'a TypeHierarchy,
        ty: &'a str,
    ) -> impl Iterator<Item = &'a str> + 'a {
        self.objects
            .iter()
            .filter(move |(_, oty)| types.is_subtype(oty, ty))
            .map(|(o, _)| o.as_str())
    }

    /// Collapses `members` onto `representative`: the other members leave the
    /// object map and every atom argument naming one is rewritten to the
    /// representative (identical atoms merge). The caller must pick a
    /// representative from `members`; types are not re-checked because the
    /// members are expected to share one.
    pub fn fold_objects(&self, members: &BTreeSet<ObjectName>, representative: &str) -> Self {
        let objects = self
            .objects
            .iter()
            .filter(|(o, _)| o.as_str() == representative || !members.contains(*o))
            .map(|(o, t)| (o.clone(), t.clone()))
            .collect();
        let atoms = self
            .atoms
            .iter()
            .map(|a| GroundAtom {
                pred: a.pred.clone(),
                args: a
                    .args
                    .iter()
                    .map(|arg| {
                        if members.contains(arg) {
                            representative.to_string()
                        } else {
                            arg.clone()
                        }
                    })
                    .collect(),
            })
            .collect();
        Self { objects, atoms }
    }
}

/// An operator bound to concrete objects, one per parameter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundAction {
    pub op: Arc<Operator>,
    pub args: Vec<ObjectName>,
}

impl GroundAction {
    pub fn new(op: Arc<Operator>, args: Vec<ObjectName>) -> Self {
        debug_assert_eq!(op.arity(), args.len());
        Self { op, args }
    }

    fn substitute(&self, lits: &[Literal]) -> Vec<GroundLiteral> {
        let binding: BTreeMap<&str, &str> = self
            .op
            .params()
            .iter()
            .zip(&self.args)
            .map(|(p, a)| (p.name.as_str(), a.as_str()))
            .collect();
        lits.iter()
            .map(|lit| {
                let args = lit
                    .atom
                    .terms
                    .iter()
                    .map(|t| match t {
                        Term::Var(v) => binding[v.as_str()].to_string(),
                        Term::Obj(o) => o.clone(),
                    })
                    .collect();
                GroundLiteral {
                    atom: GroundAtom {
                        pred: lit.atom.pred.clone(),
                        args,
                    },
                    positive: lit.positive,
                }
            })
            .collect()
    }

    /// Preconditions with parameters substituted by this binding.
    pub fn bound_pre(&self) -> Vec<GroundLiteral> {
        self.substitute(self.op.pre())
    }

    /// Effects with parameters substituted by this binding.
    pub fn bound_eff(&self) -> Vec<GroundLiteral> {
        self.substitute(self.op.eff())
    }
}

impl fmt::Display for GroundAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.op.name())?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        write!(f, ")")
    }
}

/// All type-correct bindings of `op` against the state's objects, in
/// lexicographic order of the binding vector (leftmost parameter most
/// significant). Applicability is not checked here.
pub fn ground(op: &Arc<Operator>, state: &AbstractState, types: &TypeHierarchy) -> Vec<GroundAction> {
    let candidates: Vec<Vec<&str>> = op
        .params()
        .iter()
        .map(|p| state.objects_of_type(types, &p.ty).collect())
        .collect();
    if candidates.iter().any(Vec::is_empty) && !candidates.is_empty() {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut idx = vec![0usize; candidates.len()];
    loop {
        let args: Vec<ObjectName> = idx
            .iter()
            .zip(&candidates)
            .map(|(&i, c)| c[i].to_string())
            .collect();
        out.push(GroundAction::new(Arc::clone(op), args));
        // Odometer increment, rightmost fastest.
        let mut pos = candidates.len();
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < candidates[pos].len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// `true` iff every positive bound precondition holds and no negative one does.
pub fn applicable(state: &AbstractState, action: &GroundAction) -> bool {
    action
        .bound_pre()
        .iter()
        .all(|lit| state.holds(&lit.atom) == lit.positive)
}

/// Successor state: checks applicability and argument existence, then removes
/// deleted atoms and inserts added ones. Objects are unchanged.
pub fn apply(state: &AbstractState, action: &GroundAction) -> Result<AbstractState, ModelError> {
    for arg in &action.args {
        if !state.objects.contains_key(arg) {
            return Err(ModelError::UnknownObject(arg.clone()));
        }
    }
    if !applicable(state, action) {
        return Err(ModelError::Inapplicable(action.to_string()));
    }
    let mut atoms = state.atoms.clone();
    for lit in action.bound_eff() {
        if lit.positive {
            atoms.insert(lit.atom);
        } else {
            atoms.remove(&lit.atom);
        }
    }
    Ok(AbstractState {
        objects: state.objects.clone(),
        atoms,
    })
}

/// Existentially quantified conjunction of literals over typed variables and
/// constants. Literals are stored sorted and deduplicated.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GoalFormula {
    vars: Vec<TypedVar>,
    literals: Vec<Literal>,
}

impl GoalFormula {
    pub fn new(vars: Vec<TypedVar>, mut literals: Vec<Literal>) -> Result<Self, ModelError> {
        let mut names = BTreeSet::new();
        for v in &vars {
            check_ident(&v.name)?;
            if !names.insert(v.name.clone()) {
                return Err(ModelError::DuplicateGoalVariable(v.name.clone()));
            }
        }
        for lit in &literals {
            for term in &lit.atom.terms {
                if let Term::Var(v) = term {
                    if !names.contains(v) {
                        return Err(ModelError::UnboundVariable(v.clone()));
                    }
                }
            }
        }
        literals.sort();
        literals.dedup();
        if literals.is_empty() {
            return Err(ModelError::EmptyGoal);
        }
        Ok(Self { vars, literals })
    }

    pub fn vars(&self) -> &[TypedVar] {
        &self.vars
    }

    pub fn literals(&self) -> &[Literal] {
        &self.literals
    }
}

/// `true` iff some assignment of the goal's variables to state objects (types
/// respected, variables may share objects) satisfies every literal under the
/// closed-world reading. Constants that are not state objects satisfy only
/// negative literals.
pub fn eval_goal(state: &AbstractState, goal: &GoalFormula, types: &TypeHierarchy) -> bool {
    find_witness(state, goal, types).is_some()
}

/// A satisfying assignment for the goal's variables, if one exists. Variables
/// are tried in declaration order against objects in name order, so the
/// witness is deterministic.
pub fn find_witness(
    state: &AbstractState,
    goal: &GoalFormula,
    types: &TypeHierarchy,
) -> Option<BTreeMap<String, ObjectName>> {
    let candidates: Vec<Vec<&str>> = goal
        .vars()
        .iter()
        .map(|v| state.objects_of_type(types, &v.ty).collect())
        .collect();
    let var_index: BTreeMap<&str, usize> = goal
        .vars()
        .iter()
        .enumerate()
        .map(|(i, v)| (v.name.as_str(), i))
        .collect();
    // A literal can be checked as soon as its last-assigned variable is bound.
    let check_after: Vec<Vec<&Literal>> = {
        let mut buckets: Vec<Vec<&Literal>> = vec![Vec::new(); goal.vars().len() + 1];
        for lit in goal.literals() {
            let last = lit
                .atom
                .terms
                .iter()
                .filter_map(|t| match t {
                    Term::Var(v) => Some(var_index[v.as_str()] + 1),
                    Term::Obj(_) => None,
                })
                .max()
                .unwrap_or(0);
            buckets[last].push(lit);
        }
        buckets
    };
    let mut assignment: Vec<&str> = Vec::new();

    fn lit_holds(state: &AbstractState, lit: &Literal, assignment: &[&str], var_index: &BTreeMap<&str, usize>) -> bool {
        let atom = GroundAtom {
            pred: lit.atom.pred.clone(),
            args: lit
                .atom
                .terms
                .iter()
                .map(|t| match t {
                    Term::Var(v) => assignment[var_index[v.as_str()]].to_string(),
                    Term::Obj(o) => o.clone(),
                })
                .collect(),
        };
        state.holds(&atom) == lit.positive
    }

    fn search<'a>(
        state: &AbstractState,
        candidates: &[Vec<&'a str>],
        check_after: &[Vec<&Literal>],
        var_index: &BTreeMap<&str, usize>,
        assignment: &mut Vec<&'a str>,
    ) -> bool {
        let depth = assignment.len();
        if !check_after[depth]
            .iter()
            .all(|lit| lit_holds(state, lit, assignment, var_index))
        {
            return false;
        }
        if depth == candidates.len() {
            return true;
        }
        for &obj in &candidates[depth] {
            assignment.push(obj);
            if search(state, candidates, check_after, var_index, assignment) {
                return true;
            }
            assignment.pop();
        }
        false
    }

    if search(state, &candidates, &check_after, &var_index, &mut assignment) {
        Some(
            goal.vars()
                .iter()
                .zip(&assignment)
                .map(|(v, o)| (v.name.clone(), o.to_string()))
                .collect(),
        )
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_vocab() -> Vocabulary {
        let types = TypeHierarchy::from_pairs([
            ("entity".to_string(), "object".to_string()),
            ("location".to_string(), "object".to_string()),
            ("tree".to_string(), "entity".to_string()),
            ("axe".to_string(), "entity".to_string()),
        ])
        .unwrap();
        let mut vocab = Vocabulary::new(types);
        for sig in [
            PredicateSignature::new("inventory", &["entity"]),
            PredicateSignature::new("wood", &["entity"]),
            PredicateSignature::new("tree-at", &["tree", "location"]),
            PredicateSignature::new("red", &["entity"]),
            PredicateSignature::new("box", &["entity"]),
            PredicateSignature::new("table", &["entity"]),
            PredicateSignature::new("on", &["entity", "entity"]),
        ] {
            vocab.declare_predicate(sig).unwrap();
        }
        vocab
    }

    fn mine_wood_op() -> Arc<Operator> {
        Arc::new(
            Operator::new(
                "mine-wood",
                vec![TypedVar::new("t", "tree"), TypedVar::new("a", "axe")],
                vec![Literal::pos(Atom::new(
                    "inventory",
                    vec![Term::Var("a".into())],
                ))],
                vec![
                    Literal::pos(Atom::new("wood", vec![Term::Var("t".into())])),
                    Literal::neg(Atom::new("inventory", vec![Term::Var("a".into())])),
                ],
            )
            .unwrap(),
        )
    }

    fn state_with(
        vocab: &Vocabulary,
        objects: &[(&str, &str)],
        atoms: &[GroundAtom],
    ) -> AbstractState {
        AbstractState::new(
            vocab,
            objects
                .iter()
                .map(|(o, t)| (o.to_string(), t.to_string()))
                .collect(),
            atoms.iter().cloned().collect(),
        )
        .unwrap()
    }

    #[test]
    fn grounding_enumerates_typed_bindings_in_lexicographic_order() {
        let vocab = toy_vocab();
        let op = mine_wood_op();
        let state = state_with(
            &vocab,
            &[("t1", "tree"), ("t2", "tree"), ("a1", "axe")],
            &[GroundAtom::new("inventory", &["a1"])],
        );
        let actions = ground(&op, &state, vocab.types());
        let rendered: Vec<String> = actions.iter().map(|a| a.to_string()).collect();
        assert_eq!(rendered, vec!["(mine-wood t1 a1)", "(mine-wood t2 a1)"]);
    }

    #[test]
    fn grounding_with_no_candidate_for_a_parameter_is_empty() {
        let vocab = toy_vocab();
        let op = mine_wood_op();
        let state = state_with(&vocab, &[("t1", "tree")], &[]);
        assert!(ground(&op, &state, vocab.types()).is_empty());
    }

    #[test]
    fn grounding_equals_brute_force_typed_enumeration() {
        // Oracle: independent cartesian enumeration filtered by subtype checks.
        let vocab = toy_vocab();
        let op = mine_wood_op();
        let state = state_with(
            &vocab,
            &[
                ("a1", "axe"),
                ("a2", "axe"),
                ("t1", "tree"),
                ("t2", "tree"),
                ("x1", "entity"),
            ],
            &[],
        );
        let got: Vec<Vec<ObjectName>> = ground(&op, &state, vocab.types())
            .into_iter()
            .map(|g| g.args)
            .collect();
        let mut expect = Vec::new();
        for (o1, ty1) in state.objects() {
            if !vocab.types().is_subtype(ty1, "tree") {
                continue;
            }
            for (o2, ty2) in state.objects() {
                if vocab.types().is_subtype(ty2, "axe") {
                    expect.push(vec![o1.clone(), o2.clone()]);
                }
            }
        }
        assert_eq!(got, expect);
    }

    #[test]
    fn applicability_checks_both_polarities() {
        let vocab = toy_vocab();
        let op = Arc::new(
            Operator::new(
                "stash",
                vec![TypedVar::new("t", "tree"), TypedVar::new("a", "axe")],
                vec![
                    Literal::pos(Atom::new("inventory", vec![Term::Var("a".into())])),
                    Literal::neg(Atom::new("wood", vec![Term::Var("t".into())])),
                ],
                vec![Literal::pos(Atom::new("wood", vec![Term::Var("t".into())]))],
            )
            .unwrap(),
        );
        let state = state_with(
            &vocab,
            &[("t1", "tree"), ("a1", "axe")],
            &[GroundAtom::new("inventory", &["a1"])],
        );
        let action = GroundAction::new(Arc::clone(&op), vec!["t1".into(), "a1".into()]);
        assert!(applicable(&state, &action));

        let blocked = state_with(
            &vocab,
            &[("t1", "tree"), ("a1", "axe")],
            &[
                GroundAtom::new("inventory", &["a1"]),
                GroundAtom::new("wood", &["t1"]),
            ],
        );
        assert!(!applicable(&blocked, &action));

        let missing = state_with(&vocab, &[("t1", "tree"), ("a1", "axe")], &[]);
        assert!(!applicable(&missing, &action));
    }

    #[test]
    fn apply_adds_and_deletes_exactly_the_bound_effects() {
        let vocab = toy_vocab();
        let op = mine_wood_op();
        let state = state_with(
            &vocab,
            &[("t1", "tree"), ("a1", "axe")],
            &[GroundAtom::new("inventory", &["a1"])],
        );
        let action = GroundAction::new(op, vec!["t1".into(), "a1".into()]);
        let next = apply(&state, &action).unwrap();
        assert!(next.holds(&GroundAtom::new("wood", &["t1"])));
        assert!(!next.holds(&GroundAtom::new("inventory", &["a1"])));
        assert_eq!(next.objects(), state.objects());
        // Source state is untouched.
        assert!(state.holds(&GroundAtom::new("inventory", &["a1"])));
    }

    #[test]
    fn apply_rejects_inapplicable_actions() {
        let vocab = toy_vocab();
        let op = mine_wood_op();
        let state = state_with(&vocab, &[("t1", "tree"), ("a1", "axe")], &[]);
        let action = GroundAction::new(op, vec!["t1".into(), "a1".into()]);
        assert!(matches!(
            apply(&state, &action),
            Err(ModelError::Inapplicable(_))
        ));
    }

    #[test]
    fn eval_goal_requires_one_assignment_satisfying_all_literals() {
        // Two objects each satisfy one of the two literals but neither
        // satisfies both, so the conjunction has no witness.
        let vocab = toy_vocab();
        let state = state_with(
            &vocab,
            &[("b1", "entity"), ("b2", "entity")],
            &[
                GroundAtom::new("red", &["b1"]),
                GroundAtom::new("box", &["b2"]),
            ],
        );
        let goal = GoalFormula::new(
            vec![TypedVar::new("x", "entity")],
            vec![
                Literal::pos(Atom::new("red", vec![Term::Var("x".into())])),
                Literal::pos(Atom::new("box", vec![Term::Var("x".into())])),
            ],
        )
        .unwrap();
        assert!(!eval_goal(&state, &goal, vocab.types()));

        let both = state_with(
            &vocab,
            &[("b1", "entity"), ("b2", "entity")],
            &[
                GroundAtom::new("red", &["b1"]),
                GroundAtom::new("box", &["b1"]),
            ],
        );
        assert!(eval_goal(&both, &goal, vocab.types()));
        let witness = find_witness(&both, &goal, vocab.types()).unwrap();
        assert_eq!(witness["x"], "b1");
    }

    #[test]
    fn eval_goal_handles_constants_and_shared_variables() {
        let vocab = toy_vocab();
        let state = state_with(
            &vocab,
            &[("a", "entity"), ("b", "entity")],
            &[
                GroundAtom::new("on", &["a", "b"]),
                GroundAtom::new("table", &["b"]),
            ],
        );
        let goal = GoalFormula::new(
            vec![TypedVar::new("x", "entity")],
            vec![
                Literal::pos(Atom::new(
                    "on",
                    vec![Term::Var("x".into()), Term::Obj("b".into())],
                )),
                Literal::neg(Atom::new("table", vec![Term::Var("x".into())])),
            ],
        )
        .unwrap();
        assert!(eval_goal(&state, &goal, vocab.types()));
        // A constant that is not a state object fails positive literals and
        // passes negative ones.
        let ghost = GoalFormula::new(
            vec![],
            vec![Literal::pos(Atom::new("table", vec![Term::Obj("zz".into())]))],
        )
        .unwrap();
        assert!(!eval_goal(&state, &ghost, vocab.types()));
        let ghost_neg = GoalFormula::new(
            vec![],
            vec![Literal::neg(Atom::new("table", vec![Term::Obj("zz".into())]))],
        )
        .unwrap();
        assert!(eval_goal(&state, &ghost_neg, vocab.types()));
    }

    #[test]
    fn operator_constructor_enforces_invariants() {
        let tree = TypedVar::new("t", "tree");
        // Effect must be nonempty.
        assert!(matches!(
            Operator::new("noop", vec![tree.clone()], vec![], vec![]),
            Err(ModelError::EmptyEffect(_))
        ));
        // No contradictory effects.
        let wood = |pos: bool| {
            let atom = Atom::new("wood", vec![Term::Var("t".into())]);
            if pos {
                Literal::pos(atom)
            } else {
                Literal::neg(atom)
            }
        };
        assert!(matches!(
            Operator::new("bad", vec![tree.clone()], vec![], vec![wood(true), wood(false)]),
            Err(ModelError::ContradictoryEffect(..))
        ));
        // Every body variable must be a parameter.
        assert!(matches!(
            Operator::new(
                "bad2",
                vec![tree.clone()],
                vec![],
                vec![Literal::pos(Atom::new("wood", vec![Term::Var("zz".into())]))],
            ),
            Err(ModelError::UnboundVariable(_))
        ));
        // Constants are rejected in operator bodies.
        assert!(matches!(
            Operator::new(
                "bad3",
                vec![tree.clone()],
                vec![],
                vec![Literal::pos(Atom::new("wood", vec![Term::Obj("t1".into())]))],
            ),
            Err(ModelError::ConstantInOperator(_))
        ));
        // Duplicate parameters are rejected.
        assert!(matches!(
            Operator::new(
                "bad4",
                vec![tree.clone(), tree],
                vec![],
                vec![Literal::pos(Atom::new("wood", vec![Term::Var("t".into())]))],
            ),
            Err(ModelError::DuplicateParameter(_))
        ));
    }

    #[test]
    fn operator_bodies_are_canonically_sorted_so_order_never_matters() {
        let lit_a = Literal::pos(Atom::new("wood", vec![Term::Var("t".into())]));
        let lit_b = Literal::neg(Atom::new("inventory", vec![Term::Var("a".into())]));
        let params = vec![TypedVar::new("t", "tree"), TypedVar::new("a", "axe")];
        let one = Operator::new(
            "op",
            params.clone(),
            vec![],
            vec![lit_a.clone(), lit_b.clone()],
        )
        .unwrap();
        let two = Operator::new("op", params, vec![], vec![lit_b, lit_a]).unwrap();
        assert_eq!(one, two);
    }

    #[test]
    fn library_rejects_duplicate_keys_and_vocabulary_violations() {
        let vocab = toy_vocab();
        let mut lib = OperatorLibrary::new("toy", vocab).unwrap();
        lib.insert(Arc::try_unwrap(mine_wood_op()).unwrap()).unwrap();
        assert!(matches!(
            lib.insert(Arc::try_unwrap(mine_wood_op()).unwrap()),
            Err(ModelError::DuplicateOperator { .. })
        ));
        // Same name, different arity is a distinct key.
        let other = Operator::new(
            "mine-wood",
            vec![TypedVar::new("t", "tree")],
            vec![],
            vec![Literal::pos(Atom::new("wood", vec![Term::Var("t".into())]))],
        )
        .unwrap();
        lib.insert(other).unwrap();
        assert_eq!(lib.len(), 2);
        // Unknown predicate is rejected.
        let bad = Operator::new(
            "ghost",
            vec![TypedVar::new("t", "tree")],
            vec![],
            vec![Literal::pos(Atom::new("shiny", vec![Term::Var("t".into())]))],
        )
        .unwrap();
        assert!(matches!(
            lib.insert(bad),
            Err(ModelError::UnknownPredicate(p)) if p == "shiny"
        ));
        // Parameter type incompatible with the signature is rejected.
        let mistyped = Operator::new(
            "plant",
            vec![TypedVar::new("l", "location")],
            vec![],
            vec![Literal::pos(Atom::new("wood", vec![Term::Var("l".into())]))],
        )
        .unwrap();
        assert!(matches!(
            lib.insert(mistyped),
            Err(ModelError::ParamTypeMismatch { .. })
        ));
    }

    #[test]
    fn type_hierarchy_subtyping_is_reflexive_and_transitive() {
        let types = TypeHierarchy::from_pairs([
            ("entity".to_string(), "object".to_string()),
            ("tree".to_string(), "entity".to_string()),
        ])
        .unwrap();
        assert!(types.is_subtype("tree", "tree"));
        assert!(types.is_subtype("tree", "entity"));
        assert!(types.is_subtype("tree", "object"));
        assert!(!types.is_subtype("entity", "tree"));
        assert!(!types.is_subtype("ghost", "object"));
        assert!(matches!(
            TypeHierarchy::from_pairs([("a".to_string(), "b".to_string())]),
            Err(ModelError::UnknownType(_))
        ));
        assert!(matches!(
            TypeHierarchy::from_pairs([
                ("a".to_string(), "b".to_string()),
                ("b".to_string(), "a".to_string()),
            ]),
            Err(ModelError::TypeCycle(_))
        ));
    }

    #[test]
    fn abstract_state_validates_objects_and_signatures() {
        let vocab = toy_vocab();
        let err = AbstractState::new(
            &vocab,
            [("t1".to_string(), "tree".to_string())].into(),
            [GroundAtom::new("wood", &["ghost"])].into(),
        );
        assert!(matches!(err, Err(ModelError::UnknownObject(_))));
        let err = AbstractState::new(
            &vocab,
            [("t1".to_string(), "tree".to_string())].into(),
            [GroundAtom::new("wood", &["t1", "t1"])].into(),
        );
        assert!(matches!(err, Err(ModelError::ArityMismatch { .. })));
    }
}
