//! The condition language shared by predicates, rule guards, monitor
//! triggers, skill-step guards and goal terminal conditions.
//!
//! ```text
//! expr := all(expr, ...) | any(expr, ...) | not(expr)
//!       | predicate | predicate(literal, ...)
//!       | field.path cmp literal
//! cmp  := = | != | < | <= | > | >= | in | contains
//! ```
//!
//! `all()` is true and `any()` is false. Literals are numbers, quoted
//! strings, bare words (read as strings), `true`, `false`, `none`, lists in
//! brackets, and `$name` parameter references.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::ident::{is_field_path, is_identifier};
use crate::value::Value;

/// Maximum combinator nesting accepted by the type checker.
pub const MAX_DEPTH: usize = 8;
const PARSE_DEPTH_GUARD: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparator {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    In,
    Contains,
}

impl Comparator {
    fn as_str(self) -> &'static str {
        match self {
            Comparator::Eq => "=",
            Comparator::Ne => "!=",
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Gt => ">",
            Comparator::Ge => ">=",
            Comparator::In => "in",
            Comparator::Contains => "contains",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Value(Value),
    Param(String),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Value(v) => write!(f, "{v}"),
            Literal::Param(p) => write!(f, "${p}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConditionExpr {
    All(Vec<ConditionExpr>),
    Any(Vec<ConditionExpr>),
    Not(Box<ConditionExpr>),
    Pred {
        name: String,
        args: Vec<Literal>,
    },
    Compare {
        path: String,
        op: Comparator,
        value: Literal,
    },
}

impl ConditionExpr {
    pub fn pred(name: &str) -> Self {
        ConditionExpr::Pred {
            name: name.to_string(),
            args: Vec::new(),
        }
    }

    pub fn always() -> Self {
        ConditionExpr::All(Vec::new())
    }

    pub fn never() -> Self {
        ConditionExpr::Any(Vec::new())
    }

    /// Combinator nesting depth; atoms have depth 0.
    pub fn depth(&self) -> usize {
        match self {
            ConditionExpr::All(xs) | ConditionExpr::Any(xs) => {
                1 + xs.iter().map(ConditionExpr::depth).max().unwrap_or(0)
            }
            ConditionExpr::Not(x) => 1 + x.depth(),
            _ => 0,
        }
    }

    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a ConditionExpr)) {
        f(self);
        match self {
            ConditionExpr::All(xs) | ConditionExpr::Any(xs) => xs.iter().for_each(|x| x.visit(f)),
            ConditionExpr::Not(x) => x.visit(f),
            _ => {}
        }
    }

    /// Predicate references with their argument counts, in first-seen order.
    pub fn predicate_refs(&self) -> Vec<(&str, usize)> {
        let mut out: Vec<(&str, usize)> = Vec::new();
        self.visit(&mut |e| {
            if let ConditionExpr::Pred { name, args } = e {
                if !out.iter().any(|(n, a)| *n == name && *a == args.len()) {
                    out.push((name.as_str(), args.len()));
                }
            }
        });
        out
    }

    pub fn field_paths(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        self.visit(&mut |e| {
            if let ConditionExpr::Compare { path, .. } = e {
                if !out.contains(&path.as_str()) {
                    out.push(path.as_str());
                }
            }
        });
        out
    }

    pub fn params(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        self.visit(&mut |e| {
            let lits: Vec<&Literal> = match e {
                ConditionExpr::Pred { args, .. } => args.iter().collect(),
                ConditionExpr::Compare { value, .. } => vec![value],
                _ => Vec::new(),
            };
            for lit in lits {
                if let Literal::Param(p) = lit {
                    if !out.contains(&p.as_str()) {
                        out.push(p.as_str());
                    }
                }
            }
        });
        out
    }

    pub fn has_comparisons(&self) -> bool {
        let mut found = false;
        self.visit(&mut |e| found |= matches!(e, ConditionExpr::Compare { .. }));
        found
    }

    /// Evaluates the expression. Missing fields make a comparison false;
    /// unknown predicates and unbound parameters evaluate to false.
    pub fn eval(&self, ctx: &mut dyn EvalContext, params: &dyn Fn(&str) -> Option<Value>) -> bool {
        match self {
            ConditionExpr::All(xs) => xs.iter().all(|x| x.eval(ctx, params)),
            ConditionExpr::Any(xs) => xs.iter().any(|x| x.eval(ctx, params)),
            ConditionExpr::Not(x) => !x.eval(ctx, params),
            ConditionExpr::Pred { name, args } => {
                let mut values = Vec::with_capacity(args.len());
                for a in args {
                    match resolve_literal(a, params) {
                        Some(v) => values.push(v),
                        None => return false,
                    }
                }
                ctx.predicate(name, &values).unwrap_or(false)
            }
            ConditionExpr::Compare { path, op, value } => {
                let (Some(lhs), Some(rhs)) = (ctx.field(path), resolve_literal(value, params))
                else {
                    return false;
                };
                compare(&lhs, *op, &rhs)
            }
        }
    }
}

fn resolve_literal(lit: &Literal, params: &dyn Fn(&str) -> Option<Value>) -> Option<Value> {
    match lit {
        Literal::Value(v) => Some(v.clone()),
        Literal::Param(p) => params(p),
    }
}

pub fn compare(lhs: &Value, op: Comparator, rhs: &Value) -> bool {
    use std::cmp::Ordering::*;
    match op {
        Comparator::Eq => lhs.loosely_equals(rhs),
        Comparator::Ne => !lhs.loosely_equals(rhs),
        Comparator::Lt => lhs.numeric_cmp(rhs) == Some(Less),
        Comparator::Le => matches!(lhs.numeric_cmp(rhs), Some(Less | Equal)),
        Comparator::Gt => lhs.numeric_cmp(rhs) == Some(Greater),
        Comparator::Ge => matches!(lhs.numeric_cmp(rhs), Some(Greater | Equal)),
        Comparator::In => match rhs {
            Value::List(items) => items.iter().any(|i| i.loosely_equals(lhs)),
            Value::Str(s) => lhs.as_str().is_some_and(|l| s.contains(l)),
            _ => false,
        },
        Comparator::Contains => match lhs {
            Value::List(items) => items.iter().any(|i| i.loosely_equals(rhs)),
            Value::Str(s) => rhs.as_str().is_some_and(|r| s.contains(r)),
            _ => false,
        },
    }
}

/// Field and predicate lookups used during evaluation.
pub trait EvalContext {
    fn field(&mut self, path: &str) -> Option<Value>;
    /// `None` when the predicate does not exist.
    fn predicate(&mut self, name: &str, args: &[Value]) -> Option<bool>;
}

impl fmt::Display for ConditionExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn list(f: &mut fmt::Formatter<'_>, head: &str, xs: &[ConditionExpr]) -> fmt::Result {
            write!(f, "{head}(")?;
            for (i, x) in xs.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{x}")?;
            }
            f.write_str(")")
        }
        match self {
            ConditionExpr::All(xs) => list(f, "all", xs),
            ConditionExpr::Any(xs) => list(f, "any", xs),
            ConditionExpr::Not(x) => write!(f, "not({x})"),
            ConditionExpr::Pred { name, args } => {
                f.write_str(name)?;
                if !args.is_empty() {
                    f.write_str("(")?;
                    for (i, a) in args.iter().enumerate() {
                        if i > 0 {
                            f.write_str(", ")?;
                        }
                        write!(f, "{a}")?;
                    }
                    f.write_str(")")?;
                }
                Ok(())
            }
            ConditionExpr::Compare { path, op, value } => {
                write!(f, "{path} {} {value}", op.as_str())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("condition parse error at offset {offset}: {message}")]
pub struct CondParseError {
    pub offset: usize,
    pub message: String,
}

impl FromStr for ConditionExpr {
    type Err = CondParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut p = Parser { src: s, pos: 0 };
        let expr = p.expr(0)?;
        p.skip_ws();
        if p.pos != s.len() {
            return Err(p.err("trailing input"));
        }
        Ok(expr)
    }
}

impl Serialize for ConditionExpr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ConditionExpr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, message: impl Into<String>) -> CondParseError {
        CondParseError {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn eat(&mut self, token: &str) -> bool {
        self.skip_ws();
        if self.rest().starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn word(&mut self) -> Option<&'a str> {
        self.skip_ws();
        let start = self.pos;
        let len = self
            .rest()
            .char_indices()
            .find(|(_, c)| !(c.is_ascii_alphanumeric() || *c == '_' || *c == '.'))
            .map_or(self.rest().len(), |(i, _)| i);
        if len == 0 {
            return None;
        }
        self.pos += len;
        Some(&self.src[start..start + len])
    }

    fn expr(&mut self, depth: usize) -> Result<ConditionExpr, CondParseError> {
        if depth > PARSE_DEPTH_GUARD {
            return Err(self.err("nesting too deep"));
        }
        let start = self.pos;
        let Some(word) = self.word().map(str::to_string) else {
            return Err(self.err("expected expression"));
        };
        match word.as_str() {
            "all" | "any" | "not" if self.eat("(") => {
                let mut items = Vec::new();
                if !self.eat(")") {
                    loop {
                        items.push(self.expr(depth + 1)?);
                        if self.eat(")") {
                            break;
                        }
                        if !self.eat(",") {
                            return Err(self.err("expected `,` or `)`"));
                        }
                    }
                }
                match word.as_str() {
                    "all" => Ok(ConditionExpr::All(items)),
                    "any" => Ok(ConditionExpr::Any(items)),
                    _ => {
                        if items.len() != 1 {
                            self.pos = start;
                            return Err(self.err("not(...) takes exactly one argument"));
                        }
                        Ok(ConditionExpr::Not(Box::new(items.pop().unwrap())))
                    }
                }
            }
            _ => {
                if let Some(op) = self.comparator() {
                    if !is_field_path(&word) {
                        self.pos = start;
                        return Err(self.err(format!("invalid field path `{word}`")));
                    }
                    let value = self.literal(depth)?;
                    return Ok(ConditionExpr::Compare {
                        path: word,
                        op,
                        value,
                    });
                }
                if !is_identifier(&word) {
                    self.pos = start;
                    return Err(self.err(format!("invalid predicate name `{word}`")));
                }
                let mut args = Vec::new();
                if self.eat("(") && !self.eat(")") {
                    loop {
                        args.push(self.literal(depth)?);
                        if self.eat(")") {
                            break;
                        }
                        if !self.eat(",") {
                            return Err(self.err("expected `,` or `)`"));
                        }
                    }
                }
                Ok(ConditionExpr::Pred { name: word, args })
            }
        }
    }

    fn comparator(&mut self) -> Option<Comparator> {
        self.skip_ws();
        const TABLE: [(&str, Comparator); 12] = [
            ("!=", Comparator::Ne),
            ("≠", Comparator::Ne),
            ("<=", Comparator::Le),
            ("≤", Comparator::Le),
            (">=", Comparator::Ge),
            ("≥", Comparator::Ge),
            ("==", Comparator::Eq),
            ("=", Comparator::Eq),
            ("<", Comparator::Lt),
            (">", Comparator::Gt),
            ("in ", Comparator::In),
            ("contains ", Comparator::Contains),
        ];
        for (tok, op) in TABLE {
            if self.rest().starts_with(tok) {
                self.pos += tok.len();
                return Some(op);
            }
        }
        None
    }

    fn literal(&mut self, depth: usize) -> Result<Literal, CondParseError> {
        if depth > PARSE_DEPTH_GUARD {
            return Err(self.err("nesting too deep"));
        }
        self.skip_ws();
        let rest = self.rest();
        if let Some(stripped) = rest.strip_prefix('$') {
            self.pos += 1;
            let len = stripped
                .char_indices()
                .find(|(_, c)| !(c.is_ascii_alphanumeric() || *c == '_'))
                .map_or(stripped.len(), |(i, _)| i);
            let name = &stripped[..len];
            if !is_identifier(name) {
                return Err(self.err("invalid parameter reference"));
            }
            self.pos += len;
            return Ok(Literal::Param(name.to_string()));
        }
        if rest.starts_with('"') {
            self.pos += 1;
            let mut out = String::new();
            let mut chars = self.rest().char_indices();
            while let Some((i, c)) = chars.next() {
                match c {
                    '"' => {
                        self.pos += i + 1;
                        return Ok(Literal::Value(Value::Str(out)));
                    }
                    '\\' => match chars.next() {
                        Some((_, e)) => out.push(e),
                        None => break,
                    },
                    _ => out.push(c),
                }
            }
            return Err(self.err("unterminated string"));
        }
        if rest.starts_with('[') {
            self.pos += 1;
            let mut items = Vec::new();
            if !self.eat("]") {
                loop {
                    match self.literal(depth + 1)? {
                        Literal::Value(v) => items.push(v),
                        Literal::Param(_) => {
                            return Err(self.err("parameters are not allowed inside lists"))
                        }
                    }
                    if self.eat("]") {
                        break;
                    }
                    if !self.eat(",") {
                        return Err(self.err("expected `,` or `]`"));
                    }
                }
            }
            return Ok(Literal::Value(Value::List(items)));
        }
        let num_len = rest
            .char_indices()
            .find(|(i, c)| {
                !(c.is_ascii_digit()
                    || *c == '.'
                    || *c == 'e'
                    || *c == 'E'
                    || (*c == '-' && (*i == 0 || rest[..*i].ends_with(['e', 'E'])))
                    || *c == '+')
            })
            .map_or(rest.len(), |(i, _)| i);
        if num_len > 0 && rest.starts_with(|c: char| c.is_ascii_digit() || c == '-') {
            let text = &rest[..num_len];
            let value = if text.contains(['.', 'e', 'E']) {
                text.parse::<f64>()
                    .ok()
                    .filter(|f| f.is_finite())
                    .map(Value::Float)
            } else {
                text.parse::<i64>().ok().map(Value::Int)
            };
            return match value {
                Some(v) => {
                    self.pos += num_len;
                    Ok(Literal::Value(v))
                }
                None => Err(self.err(format!("invalid number `{text}`"))),
            };
        }
        match self.word() {
            Some("true") => Ok(Literal::Value(Value::Bool(true))),
            Some("false") => Ok(Literal::Value(Value::Bool(false))),
            Some("none") => Ok(Literal::Value(Value::None)),
            Some(w) if !w.contains('.') => Ok(Literal::Value(Value::Str(w.to_string()))),
            _ => Err(self.err("expected literal")),
        }
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use proptest::prelude::*;

    use super::*;

    struct Ctx {
        fields: BTreeMap<String, Value>,
        preds: BTreeMap<String, bool>,
        calls: Vec<String>,
    }

    impl EvalContext for Ctx {
        fn field(&mut self, path: &str) -> Option<Value> {
            self.fields.get(path).cloned()
        }
        fn predicate(&mut self, name: &str, _args: &[Value]) -> Option<bool> {
            self.calls.push(name.to_string());
            self.preds.get(name).copied()
        }
    }

    fn ctx() -> Ctx {
        let mut fields = BTreeMap::new();
        fields.insert("inventory.count".into(), Value::Int(0));
        fields.insert("current.open_state".into(), Value::Str("closed".into()));
        fields.insert("current.tool_for".into(), Value::Str("heat".into()));
        fields.insert(
            "held.tags".into(),
            Value::List(vec![Value::Str("hot".into())]),
        );
        let mut preds = BTreeMap::new();
        preds.insert("a".into(), true);
        preds.insert("b".into(), false);
        Ctx {
            fields,
            preds,
            calls: vec![],
        }
    }

    fn no_params(_: &str) -> Option<Value> {
        None
    }

    #[test]
    fn parses_compound_guard() {
        let e: ConditionExpr =
            "all(task_uses_deposit, ready_to_deposit, at_goal_recep, current_openable_closed)"
                .parse()
                .unwrap();
        assert_eq!(e.depth(), 1);
        assert_eq!(e.predicate_refs().len(), 4);
        assert_eq!(
            e.to_string(),
            "all(task_uses_deposit, ready_to_deposit, at_goal_recep, current_openable_closed)"
        );
    }

    #[test]
    fn comparisons_and_literals() {
        let mut c = ctx();
        let cases = [
            ("inventory.count = 0", true),
            ("inventory.count != 0", false),
            ("inventory.count <= 0.5", true),
            ("inventory.count ≥ 1", false),
            ("current.open_state = closed", true),
            ("current.open_state in [\"open\", \"not_openable\"]", false),
            ("current.open_state in [open, closed]", true),
            ("held.tags contains hot", true),
            ("missing.field = none", false),
            ("current.tool_for = $verb", true),
        ];
        let params = |p: &str| (p == "verb").then(|| Value::Str("heat".into()));
        for (src, want) in cases {
            let e: ConditionExpr = src.parse().unwrap_or_else(|err| panic!("{src}: {err}"));
            assert_eq!(e.eval(&mut c, &params), want, "{src}");
        }
    }

    #[test]
    fn combinators_short_circuit() {
        let mut c = ctx();
        let e: ConditionExpr = "all(b, a)".parse().unwrap();
        assert!(!e.eval(&mut c, &no_params));
        assert_eq!(c.calls, ["b"]);
        assert!(ConditionExpr::always().eval(&mut c, &no_params));
        assert!(!ConditionExpr::never().eval(&mut c, &no_params));
        let e: ConditionExpr = "not(any(b, unknown_pred))".parse().unwrap();
        assert!(e.eval(&mut c, &no_params));
    }

    #[test]
    fn rejects_malformed() {
        for bad in [
            "all(a,",
            "not(a, b)",
            "Foo",
            "x.y",
            "a.b = ",
            "all(a) b",
            "a.b = \"open",
        ] {
            assert!(bad.parse::<ConditionExpr>().is_err(), "{bad}");
        }
    }

    #[test]
    fn depth_counts_nesting() {
        let e: ConditionExpr = "not(not(all(any(a))))".parse().unwrap();
        assert_eq!(e.depth(), 4);
    }

    fn arb_literal() -> impl Strategy<Value = Literal> {
        prop_oneof![
            any::<bool>().prop_map(|b| Literal::Value(Value::Bool(b))),
            (-1000i64..1000).prop_map(|i| Literal::Value(Value::Int(i))),
            (-1.0e6f64..1.0e6).prop_map(|f| Literal::Value(Value::Float(f))),
            "[a-z ]{0,6}".prop_map(|s| Literal::Value(Value::Str(s))),
            Just(Literal::Value(Value::None)),
            "[a-z]{1,5}".prop_map(Literal::Param),
        ]
    }

    fn arb_expr() -> impl Strategy<Value = ConditionExpr> {
        let leaf = prop_oneof![
            (
                "[a-z][a-z_]{0,8}",
                prop::collection::vec(arb_literal(), 0..3)
            )
                .prop_filter("reserved", |(n, _)| ![
                    "all", "any", "not", "true", "false", "none"
                ]
                .contains(&n.as_str()))
                .prop_map(|(name, args)| ConditionExpr::Pred { name, args }),
            ("[a-z]{1,5}\\.[a-z][a-z_]{0,5}", arb_literal()).prop_map(|(path, value)| {
                ConditionExpr::Compare {
                    path,
                    op: Comparator::Ge,
                    value,
                }
            }),
        ];
        leaf.prop_recursive(4, 24, 4, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 0..4).prop_map(ConditionExpr::All),
                prop::collection::vec(inner.clone(), 0..4).prop_map(ConditionExpr::Any),
                inner.prop_map(|e| ConditionExpr::Not(Box::new(e))),
            ]
        })
    }

    proptest! {
        #[test]
        fn display_round_trips(e in arb_expr()) {
            let text = e.to_string();
            let back: ConditionExpr = text.parse().unwrap();
            prop_assert_eq!(back, e);
        }
    }
}
