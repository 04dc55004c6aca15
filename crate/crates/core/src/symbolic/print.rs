//! Canonical text output. The format is frozen: types, predicates, and
//! operators print sorted by name, literal lists are already canonically
//! ordered by construction, and parameters keep their declared order. Two
//! structurally equal libraries therefore always print byte-identically.

use std::fmt::Write as _;

use super::{AbstractState, GoalFormula, Literal, Operator, OperatorLibrary, TypedVar};

fn push_typed_vars(out: &mut String, vars: &[TypedVar]) {
    out.push('(');
    for (i, v) in vars.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "?{} - {}", v.name, v.ty);
    }
    out.push(')');
}

fn push_conjunction(out: &mut String, lits: &[Literal]) {
    out.push_str("(and");
    for lit in lits {
        let _ = write!(out, " {lit}");
    }
    out.push(')');
}

/// One canonical `(:action ...)` block, two-space indented.
pub(crate) fn operator_block(op: &Operator) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "  (:action {}", op.name());
    out.push_str("    :parameters ");
    push_typed_vars(&mut out, op.params());
    out.push('\n');
    out.push_str("    :precondition ");
    push_conjunction(&mut out, op.pre());
    out.push('\n');
    out.push_str("    :effect ");
    push_conjunction(&mut out, op.eff());
    out.push(')');
    out
}

impl std::fmt::Display for Operator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&operator_block(self))
    }
}

/// Canonical domain text; `parse_domain` inverts it structurally.
pub fn print_domain(lib: &OperatorLibrary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "(define (domain {})", lib.name());
    let types: Vec<_> = lib.vocabulary().types().iter().collect();
    if !types.is_empty() {
        out.push_str("  (:types");
        for (ty, parent) in types {
            let _ = write!(out, "\n    {ty} - {parent}");
        }
        out.push_str(")\n");
    }
    let mut preds = lib.vocabulary().predicates().peekable();
    if preds.peek().is_none() {
        out.push_str("  (:predicates)\n");
    } else {
        out.push_str("  (:predicates");
        for sig in preds {
            let _ = write!(out, "\n    ({}", sig.name);
            for (i, ty) in sig.param_types.iter().enumerate() {
                let _ = write!(out, " ?v{i} - {ty}");
            }
            out.push(')');
        }
        out.push_str(")\n");
    }
    for op in lib.iter() {
        out.push_str(&operator_block(op));
        out.push('\n');
    }
    out.push_str(")\n");
    out
}

/// Canonical goal text: `(exists (vars) (and lits))`, or `(and lits)` when
/// there are no variables.
pub fn print_goal(goal: &GoalFormula) -> String {
    let mut out = String::new();
    if goal.vars().is_empty() {
        push_conjunction(&mut out, goal.literals());
    } else {
        out.push_str("(exists ");
        push_typed_vars(&mut out, goal.vars());
        out.push(' ');
        push_conjunction(&mut out, goal.literals());
        out.push(')');
    }
    out
}

/// Canonical problem text pairing a state and a goal with a named domain, for
/// cross-checking with external planners.
pub fn print_problem(
    problem_name: &str,
    domain_name: &str,
    state: &AbstractState,
    goal: &GoalFormula,
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "(define (problem {problem_name})");
    let _ = writeln!(out, "  (:domain {domain_name})");
    if state.objects().is_empty() {
        out.push_str("  (:objects)\n");
    } else {
        out.push_str("  (:objects");
        for (obj, ty) in state.objects() {
            let _ = write!(out, "\n    {obj} - {ty}");
        }
        out.push_str(")\n");
    }
    if state.atoms().is_empty() {
        out.push_str("  (:init)\n");
    } else {
        out.push_str("  (:init");
        for atom in state.atoms() {
            let _ = write!(out, "\n    {atom}");
        }
        out.push_str(")\n");
    }
    let _ = writeln!(out, "  (:goal {}))", print_goal(goal));
    out
}
