//! Parser for the domain/goal text format: s-expressions restricted to typed
//! conjunctive STRIPS. Every diagnostic carries a line and column.

use std::fmt;

use thiserror::Error;

use super::{
    Atom, GoalFormula, Literal, Operator, OperatorLibrary, PredicateSignature, Term,
    TypeHierarchy, TypedVar, Vocabulary,
};

/// Parse failure with source position (1-based line and column).
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {col}: {msg}")]
pub struct ParseError {
    pub line: u32,
    pub col: u32,
    pub msg: String,
}

impl ParseError {
    fn new(pos: Pos, msg: impl Into<String>) -> Self {
        Self {
            line: pos.line,
            col: pos.col,
            msg: msg.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Pos {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

/// Parsed s-expression with positions, shared with the lenient proposal
/// readers in the proposer module.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Sexp {
    Sym(String, Pos),
    List(Vec<Sexp>, Pos),
}

impl Sexp {
    pub(crate) fn pos(&self) -> Pos {
        match self {
            Sexp::Sym(_, p) | Sexp::List(_, p) => *p,
        }
    }

    pub(crate) fn as_sym(&self) -> Option<(&str, Pos)> {
        match self {
            Sexp::Sym(s, p) => Some((s.as_str(), *p)),
            Sexp::List(..) => None,
        }
    }

    pub(crate) fn as_list(&self) -> Option<(&[Sexp], Pos)> {
        match self {
            Sexp::List(items, p) => Some((items.as_slice(), *p)),
            Sexp::Sym(..) => None,
        }
    }
}

enum Token {
    LParen(Pos),
    RParen(Pos),
    Sym(String, Pos),
}

fn lex(text: &str) -> Result<Vec<Token>, ParseError> {
    let mut tokens = Vec::new();
    let mut line = 1u32;
    let mut col = 1u32;
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        let pos = Pos { line, col };
        match c {
            '\n' => {
                chars.next();
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => {
                chars.next();
                col += 1;
            }
            ';' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    chars.next();
                    col += 1;
                }
            }
            '(' => {
                chars.next();
                col += 1;
                tokens.push(Token::LParen(pos));
            }
            ')' => {
                chars.next();
                col += 1;
                tokens.push(Token::RParen(pos));
            }
            _ => {
                let mut sym = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == ';' {
                        break;
                    }
                    sym.push(c);
                    chars.next();
                    col += 1;
                }
                tokens.push(Token::Sym(sym, pos));
            }
        }
    }
    Ok(tokens)
}

/// Parses exactly one s-expression; trailing content is an error.
pub(crate) fn parse_one_sexp(text: &str) -> Result<Sexp, ParseError> {
    let tokens = lex(text)?;
    let mut idx = 0;
    let sexp = parse_sexp(&tokens, &mut idx)?;
    if idx != tokens.len() {
        let pos = token_pos(&tokens[idx]);
        return Err(ParseError::new(pos, "unexpected content after expression"));
    }
    Ok(sexp)
}

fn token_pos(tok: &Token) -> Pos {
    match tok {
        Token::LParen(p) | Token::RParen(p) | Token::Sym(_, p) => *p,
    }
}

fn parse_sexp(tokens: &[Token], idx: &mut usize) -> Result<Sexp, ParseError> {
    match tokens.get(*idx) {
        None => Err(ParseError::new(
            Pos { line: 1, col: 1 },
            "unexpected end of input",
        )),
        Some(Token::Sym(s, p)) => {
            *idx += 1;
            Ok(Sexp::Sym(s.clone(), *p))
        }
        Some(Token::RParen(p)) => Err(ParseError::new(*p, "unbalanced parenthesis")),
        Some(Token::LParen(open)) => {
            let open = *open;
            *idx += 1;
            let mut items = Vec::new();
            loop {
                match tokens.get(*idx) {
                    None => {
                        return Err(ParseError::new(
                            open,
                            "unbalanced parenthesis: this list is never closed",
                        ))
                    }
                    Some(Token::RParen(_)) => {
                        *idx += 1;
                        return Ok(Sexp::List(items, open));
                    }
                    Some(_) => items.push(parse_sexp(tokens, idx)?),
                }
            }
        }
    }
}

fn expect_sym<'a>(sexp: &'a Sexp, what: &str) -> Result<(&'a str, Pos), ParseError> {
    sexp.as_sym()
        .ok_or_else(|| ParseError::new(sexp.pos(), format!("expected {what}, found a list")))
}

fn ident_sym<'a>(sexp: &'a Sexp, what: &str) -> Result<(&'a str, Pos), ParseError> {
    let (s, pos) = expect_sym(sexp, what)?;
    if super::is_ident(s) {
        Ok((s, pos))
    } else {
        Err(ParseError::new(pos, format!("invalid {what} `{s}`")))
    }
}

/// Parses a `name+ - type` grouped list (used by `:types`); a group without a
/// trailing type defaults to `fallback`.
fn parse_grouped_names(
    items: &[Sexp],
    fallback: &str,
    what: &str,
) -> Result<Vec<(String, String)>, ParseError> {
    let mut out = Vec::new();
    let mut pending: Vec<(String, Pos)> = Vec::new();
    let mut iter = items.iter().peekable();
    while let Some(item) = iter.next() {
        let (sym, pos) = expect_sym(item, what)?;
        if sym == "-" {
            if pending.is_empty() {
                return Err(ParseError::new(pos, format!("`-` without preceding {what}")));
            }
            let ty_item = iter.next().ok_or_else(|| {
                ParseError::new(pos, "expected a type name after `-`")
            })?;
            let (ty, _) = ident_sym(ty_item, "type name")?;
            for (name, _) in pending.drain(..) {
                out.push((name, ty.to_string()));
            }
        } else {
            if !super::is_ident(sym) {
                return Err(ParseError::new(pos, format!("invalid {what} `{sym}`")));
            }
            pending.push((sym.to_string(), pos));
        }
    }
    for (name, _) in pending {
        out.push((name, fallback.to_string()));
    }
    Ok(out)
}

/// Parses a typed variable list `?v+ - type ...`; untyped variables default to
/// the root type.
pub(crate) fn parse_typed_vars(items: &[Sexp]) -> Result<Vec<TypedVar>, ParseError> {
    let mut out = Vec::new();
    let mut pending: Vec<String> = Vec::new();
    let mut iter = items.iter().peekable();
    while let Some(item) = iter.next() {
        let (sym, pos) = expect_sym(item, "variable")?;
        if sym == "-" {
            if pending.is_empty() {
                return Err(ParseError::new(pos, "`-` without preceding variable"));
            }
            let ty_item = iter
                .next()
                .ok_or_else(|| ParseError::new(pos, "expected a type name after `-`"))?;
            let (ty, _) = ident_sym(ty_item, "type name")?;
            for name in pending.drain(..) {
                out.push(TypedVar::new(&name, ty));
            }
        } else {
            let var = parse_var_name(sym, pos)?;
            pending.push(var);
        }
    }
    for name in pending {
        out.push(TypedVar::new(&name, TypeHierarchy::ROOT));
    }
    Ok(out)
}

fn parse_var_name(sym: &str, pos: Pos) -> Result<String, ParseError> {
    let name = sym
        .strip_prefix('?')
        .ok_or_else(|| ParseError::new(pos, format!("expected a `?variable`, found `{sym}`")))?;
    if super::is_ident(name) {
        Ok(name.to_string())
    } else {
        Err(ParseError::new(pos, format!("invalid variable name `{sym}`")))
    }
}

const UNSUPPORTED: &[&str] = &[
    "or", "exists", "forall", "when", "imply", "not", "and", "increase", "decrease", "assign",
    "=",
];

fn parse_atom(items: &[Sexp], pos: Pos, allow_constants: bool) -> Result<Atom, ParseError> {
    let head = items
        .first()
        .ok_or_else(|| ParseError::new(pos, "empty atom"))?;
    let (pred, ppos) = expect_sym(head, "predicate name")?;
    if UNSUPPORTED.contains(&pred) {
        return Err(ParseError::new(
            ppos,
            format!("unsupported construct `{pred}`: only conjunctions of literals are allowed here"),
        ));
    }
    if !super::is_ident(pred) {
        return Err(ParseError::new(ppos, format!("invalid predicate name `{pred}`")));
    }
    let mut terms = Vec::new();
    for item in &items[1..] {
        let (sym, spos) = expect_sym(item, "term")?;
        if let Some(stripped) = sym.strip_prefix('?') {
            if !super::is_ident(stripped) {
                return Err(ParseError::new(spos, format!("invalid variable name `{sym}`")));
            }
            terms.push(Term::Var(stripped.to_string()));
        } else if allow_constants {
            if !super::is_ident(sym) {
                return Err(ParseError::new(spos, format!("invalid object name `{sym}`")));
            }
            terms.push(Term::Obj(sym.to_string()));
        } else {
            return Err(ParseError::new(
                spos,
                format!("constants are not allowed in operator bodies (found `{sym}`)"),
            ));
        }
    }
    Ok(Atom::new(pred, terms))
}

fn parse_literal(sexp: &Sexp, allow_constants: bool) -> Result<(Literal, Pos), ParseError> {
    let (items, pos) = sexp
        .as_list()
        .ok_or_else(|| ParseError::new(sexp.pos(), "expected a literal"))?;
    match items.first().and_then(Sexp::as_sym) {
        Some(("not", npos)) => {
            if items.len() != 2 {
                return Err(ParseError::new(npos, "`not` takes exactly one atom"));
            }
            let (inner, ipos) = items[1]
                .as_list()
                .ok_or_else(|| ParseError::new(items[1].pos(), "expected an atom after `not`"))?;
            if let Some((head, hpos)) = inner.first().and_then(Sexp::as_sym) {
                if head == "not" || head == "and" {
                    return Err(ParseError::new(
                        hpos,
                        format!("unsupported construct: nested `{head}` under `not`"),
                    ));
                }
            }
            Ok((Literal::neg(parse_atom(inner, ipos, allow_constants)?), pos))
        }
        _ => Ok((Literal::pos(parse_atom(items, pos, allow_constants)?), pos)),
    }
}

/// Parses `(and lit*)` or a bare literal into a literal list with positions.
fn parse_formula(sexp: &Sexp, allow_constants: bool) -> Result<Vec<(Literal, Pos)>, ParseError> {
    let (items, _) = sexp
        .as_list()
        .ok_or_else(|| ParseError::new(sexp.pos(), "expected a formula"))?;
    match items.first().and_then(Sexp::as_sym) {
        Some(("and", _)) => items[1..]
            .iter()
            .map(|i| parse_literal(i, allow_constants))
            .collect(),
        _ => Ok(vec![parse_literal(sexp, allow_constants)?]),
    }
}

fn check_literal_against_vocab(
    vocab: &Vocabulary,
    lit: &Literal,
    pos: Pos,
    var_types: Option<&[TypedVar]>,
) -> Result<(), ParseError> {
    let sig = vocab.predicate(&lit.atom.pred).ok_or_else(|| {
        ParseError::new(pos, format!("unknown predicate `{}`", lit.atom.pred))
    })?;
    if sig.arity() != lit.atom.terms.len() {
        return Err(ParseError::new(
            pos,
            format!(
                "predicate `{}` expects {} arguments, got {}",
                sig.name,
                sig.arity(),
                lit.atom.terms.len()
            ),
        ));
    }
    if let Some(vars) = var_types {
        for (term, expected) in lit.atom.terms.iter().zip(&sig.param_types) {
            if let Term::Var(v) = term {
                if let Some(tv) = vars.iter().find(|tv| tv.name == *v) {
                    if !vocab.types().is_subtype(&tv.ty, expected) {
                        return Err(ParseError::new(
                            pos,
                            format!(
                                "variable `?{v}` has type `{}` but predicate `{}` expects `{expected}`",
                                tv.ty, sig.name
                            ),
                        ));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Parses a domain document into an [`OperatorLibrary`].
///
/// Accepted shape:
/// `(define (domain NAME) (:types ...)? (:predicates ...)? (:action ...)*)`
/// with conjunctive literal preconditions/effects only; anything richer is
/// rejected with a positioned diagnostic.
pub fn parse_domain(text: &str) -> Result<OperatorLibrary, ParseError> {
    let sexp = parse_one_sexp(text)?;
    let (items, pos) = sexp
        .as_list()
        .ok_or_else(|| ParseError::new(sexp.pos(), "expected `(define ...)`"))?;
    match items.first().and_then(Sexp::as_sym) {
        Some(("define", _)) => {}
        _ => return Err(ParseError::new(pos, "expected `(define ...)`")),
    }
    let (header, hpos) = items
        .get(1)
        .and_then(Sexp::as_list)
        .ok_or_else(|| ParseError::new(pos, "expected `(domain NAME)` after `define`"))?;
    let name = match (
        header.first().and_then(Sexp::as_sym),
        header.get(1).map(|s| ident_sym(s, "domain name")),
    ) {
        (Some(("domain", _)), Some(Ok((name, _)))) if header.len() == 2 => name.to_string(),
        (_, Some(Err(e))) => return Err(e),
        _ => return Err(ParseError::new(hpos, "expected `(domain NAME)`")),
    };

    let mut type_pairs: Vec<(String, String)> = Vec::new();
    let mut predicates: Vec<(PredicateSignature, Pos)> = Vec::new();
    let mut actions: Vec<&[Sexp]> = Vec::new();
    let mut action_positions: Vec<Pos> = Vec::new();
    let mut seen_types = false;
    let mut seen_predicates = false;

    for section in &items[2..] {
        let (sitems, spos) = section
            .as_list()
            .ok_or_else(|| ParseError::new(section.pos(), "expected a domain section"))?;
        let (head, hpos) = sitems
            .first()
            .and_then(Sexp::as_sym)
            .ok_or_else(|| ParseError::new(spos, "expected a section keyword"))?;
        match head {
            ":types" => {
                if seen_types {
                    return Err(ParseError::new(hpos, "duplicate `:types` section"));
                }
                seen_types = true;
                type_pairs = parse_grouped_names(&sitems[1..], TypeHierarchy::ROOT, "type name")?;
            }
            ":predicates" => {
                if seen_predicates {
                    return Err(ParseError::new(hpos, "duplicate `:predicates` section"));
                }
                seen_predicates = true;
                for decl in &sitems[1..] {
                    let (ditems, dpos) = decl.as_list().ok_or_else(|| {
                        ParseError::new(decl.pos(), "expected a predicate declaration")
                    })?;
                    let (pname, _) = ident_sym(
                        ditems
                            .first()
                            .ok_or_else(|| ParseError::new(dpos, "empty predicate declaration"))?,
                        "predicate name",
                    )?;
                    let vars = parse_typed_vars(&ditems[1..])?;
                    predicates.push((
                        PredicateSignature {
                            name: pname.to_string(),
                            param_types: vars.into_iter().map(|v| v.ty).collect(),
                        },
                        dpos,
                    ));
                }
            }
            ":action" => {
                actions.push(sitems);
                action_positions.push(spos);
            }
            other => {
                return Err(ParseError::new(
                    hpos,
                    format!("unsupported section `{other}`"),
                ))
            }
        }
    }

    let types = TypeHierarchy::from_pairs(type_pairs)
        .map_err(|e| ParseError::new(pos, e.to_string()))?;
    let mut vocab = Vocabulary::new(types);
    for (sig, spos) in predicates {
        vocab
            .declare_predicate(sig)
            .map_err(|e| ParseError::new(spos, e.to_string()))?;
    }

    let mut lib = OperatorLibrary::new(&name, vocab)
        .map_err(|e| ParseError::new(pos, e.to_string()))?;
    for (sitems, spos) in actions.iter().zip(action_positions) {
        let op = parse_action(sitems, spos, lib.vocabulary())?;
        lib.insert(op)
            .map_err(|e| ParseError::new(spos, e.to_string()))?;
    }
    Ok(lib)
}

fn parse_action(items: &[Sexp], pos: Pos, vocab: &Vocabulary) -> Result<Operator, ParseError> {
    let (name, npos) = ident_sym(
        items
            .get(1)
            .ok_or_else(|| ParseError::new(pos, "expected an action name"))?,
        "action name",
    )?;
    let mut params: Option<Vec<TypedVar>> = None;
    let mut pre: Option<Vec<(Literal, Pos)>> = None;
    let mut eff: Option<Vec<(Literal, Pos)>> = None;
    let mut idx = 2;
    while idx < items.len() {
        let (key, kpos) = expect_sym(&items[idx], "action keyword")?;
        let value = items.get(idx + 1).ok_or_else(|| {
            ParseError::new(kpos, format!("expected a value after `{key}`"))
        })?;
        match key {
            ":parameters" => {
                if params.is_some() {
                    return Err(ParseError::new(kpos, "duplicate `:parameters`"));
                }
                let (vitems, _) = value.as_list().ok_or_else(|| {
                    ParseError::new(value.pos(), "expected a parameter list")
                })?;
                params = Some(parse_typed_vars(vitems)?);
            }
            ":precondition" => {
                if pre.is_some() {
                    return Err(ParseError::new(kpos, "duplicate `:precondition`"));
                }
                pre = Some(parse_formula(value, false)?);
            }
            ":effect" => {
                if eff.is_some() {
                    return Err(ParseError::new(kpos, "duplicate `:effect`"));
                }
                eff = Some(parse_formula(value, false)?);
            }
            other => {
                return Err(ParseError::new(
                    kpos,
                    format!("unsupported action keyword `{other}`"),
                ))
            }
        }
        idx += 2;
    }
    let params = params
        .ok_or_else(|| ParseError::new(pos, format!("action `{name}` has no `:parameters`")))?;
    let pre = pre.unwrap_or_default();
    let eff = eff
        .ok_or_else(|| ParseError::new(pos, format!("action `{name}` has no `:effect`")))?;
    for (lit, lpos) in pre.iter().chain(eff.iter()) {
        check_literal_against_vocab(vocab, lit, *lpos, Some(&params))?;
    }
    Operator::new(
        name,
        params,
        pre.into_iter().map(|(l, _)| l).collect(),
        eff.into_iter().map(|(l, _)| l).collect(),
    )
    .map_err(|e| ParseError::new(npos, e.to_string()))
}

/// Parses a goal formula: `(exists (?v - ty ...) BODY)`, `(and lit*)`, or a
/// bare literal, where BODY is again a conjunction or literal. Constants are
/// allowed; predicates are checked against the vocabulary.
pub fn parse_goal(text: &str, vocab: &Vocabulary) -> Result<GoalFormula, ParseError> {
    let sexp = parse_one_sexp(text)?;
    let (vars, body) = split_goal(&sexp)?;
    for v in &vars {
        if !vocab.types().contains(&v.ty) {
            return Err(ParseError::new(
                sexp.pos(),
                format!("unknown type `{}`", v.ty),
            ));
        }
    }
    let lits = parse_formula(body, true)?;
    for (lit, lpos) in &lits {
        check_literal_against_vocab(vocab, lit, *lpos, None)?;
    }
    GoalFormula::new(vars, lits.into_iter().map(|(l, _)| l).collect())
        .map_err(|e| ParseError::new(sexp.pos(), e.to_string()))
}

fn split_goal(sexp: &Sexp) -> Result<(Vec<TypedVar>, &Sexp), ParseError> {
    let (items, pos) = sexp
        .as_list()
        .ok_or_else(|| ParseError::new(sexp.pos(), "expected a goal formula"))?;
    match items.first().and_then(Sexp::as_sym) {
        Some(("exists", _)) => {
            if items.len() != 3 {
                return Err(ParseError::new(
                    pos,
                    "`exists` takes a variable list and a body",
                ));
            }
            let (vitems, _) = items[1]
                .as_list()
                .ok_or_else(|| ParseError::new(items[1].pos(), "expected a variable list"))?;
            Ok((parse_typed_vars(vitems)?, &items[2]))
        }
        _ => Ok((Vec::new(), sexp)),
    }
}

#[cfg(test)]
mod tests {
    use super::super::{eval_goal, print_domain, AbstractState, GroundAtom};
    use super::*;

    const TOY_DOMAIN: &str = "\
(define (domain toyworld)
  (:types
    entity - object
    location - object
    axe - entity
    tree - entity)
  (:predicates
    (agent-at ?l - location)
    (inventory ?o - entity)
    (tree-at ?t - tree ?l - location)
    (wood ?o - entity))
  (:action mine-wood
    :parameters (?t - tree ?a - axe)
    :precondition (and (inventory ?a))
    :effect (and (wood ?t) (not (tree-at ?t ?t))))
)";

    #[test]
    fn parses_types_predicates_and_actions() {
        // The effect above is type-invalid on purpose? No: tree-at expects
        // (tree, location) and ?t is a tree, so the second arg fails.
        let err = parse_domain(TOY_DOMAIN).unwrap_err();
        assert!(err.msg.contains("tree-at"), "got: {err}");
    }

    fn good_domain() -> String {
        TOY_DOMAIN.replace("(not (tree-at ?t ?t))", "(inventory ?t)")
    }

    #[test]
    fn round_trips_a_well_formed_domain() {
        let lib = parse_domain(&good_domain()).unwrap();
        assert_eq!(lib.name(), "toyworld");
        assert_eq!(lib.len(), 1);
        let text = print_domain(&lib);
        let lib2 = parse_domain(&text).unwrap();
        assert_eq!(lib, lib2);
        assert_eq!(text, print_domain(&lib2));
    }

    #[test]
    fn reports_unbalanced_parenthesis_with_position() {
        let err = parse_domain("(define (domain x)\n  (:predicates\n    (p ?x)\n").unwrap_err();
        assert!(err.msg.contains("unbalanced"), "got: {err}");
        assert!(err.line >= 1);
    }

    #[test]
    fn names_the_unknown_predicate() {
        let text = good_domain().replace("(inventory ?a)", "(hasfeather ?a)");
        let err = parse_domain(&text).unwrap_err();
        assert!(err.msg.contains("hasfeather"), "got: {err}");
    }

    #[test]
    fn rejects_unsupported_constructs() {
        let text = good_domain().replace(
            "(and (inventory ?a))",
            "(or (inventory ?a) (wood ?a))",
        );
        let err = parse_domain(&text).unwrap_err();
        assert!(err.msg.contains("unsupported"), "got: {err}");
    }

    #[test]
    fn rejects_malformed_typed_variable_lists() {
        let text = good_domain().replace("(?t - tree ?a - axe)", "(?t -)");
        let err = parse_domain(&text).unwrap_err();
        assert!(err.msg.contains("type name"), "got: {err}");
    }

    #[test]
    fn rejects_duplicate_operator_definitions() {
        let one = good_domain();
        let action = one[one.find("(:action").unwrap()..one.rfind(')').unwrap()].to_string();
        let text = format!("{}  {}\n)", &one[..one.rfind(')').unwrap()], action);
        let err = parse_domain(&text).unwrap_err();
        assert!(err.msg.contains("already defined"), "got: {err}");
    }

    #[test]
    fn rejects_constants_in_operator_bodies() {
        let text = good_domain().replace("(inventory ?a)", "(inventory axe1)");
        let err = parse_domain(&text).unwrap_err();
        assert!(err.msg.contains("constant"), "got: {err}");
    }

    #[test]
    fn parses_goals_with_and_without_quantifiers() {
        let lib = parse_domain(&good_domain()).unwrap();
        let vocab = lib.vocabulary();
        let goal = parse_goal("(exists (?x - entity) (and (wood ?x) (inventory ?x)))", vocab)
            .unwrap();
        assert_eq!(goal.vars().len(), 1);
        assert_eq!(goal.literals().len(), 2);

        let ground = parse_goal("(wood t1)", vocab).unwrap();
        assert!(ground.vars().is_empty());

        let state = AbstractState::new(
            vocab,
            [("t1".to_string(), "tree".to_string())].into(),
            [
                GroundAtom::new("wood", &["t1"]),
                GroundAtom::new("inventory", &["t1"]),
            ]
            .into(),
        )
        .unwrap();
        assert!(eval_goal(&state, &goal, vocab.types()));
        assert!(eval_goal(&state, &ground, vocab.types()));

        let err = parse_goal("(exists (?x - ghost) (wood ?x))", vocab).unwrap_err();
        assert!(err.msg.contains("ghost"), "got: {err}");
        let err = parse_goal("(wood ?x)", vocab).unwrap_err();
        assert!(err.msg.contains("parameter list") || err.msg.contains("does not appear"));
    }
}
