//! DatalogMTL abstract syntax, the text parser, and static program analysis.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::store::GroundAtom;
use crate::temporal::Interval;
use crate::Time;

pub type Symbol = Arc<str>;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Var(Symbol),
    Const(Symbol),
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "?{v}"),
            Term::Const(c) => write!(f, "{c}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum MetricAtom {
    Top,
    Bottom,
    Relational(Symbol, Vec<Term>),
    Boxplus(Interval<Time>, Box<MetricAtom>),
    Boxminus(Interval<Time>, Box<MetricAtom>),
    Diamondplus(Interval<Time>, Box<MetricAtom>),
    Diamondminus(Interval<Time>, Box<MetricAtom>),
    /// `left SINCE[ϱ] right`: `right` held at some t1 with t − t1 ∈ ϱ and `left` held since.
    Since(Box<MetricAtom>, Interval<Time>, Box<MetricAtom>),
    /// `left UNTIL[ϱ] right`.
    Until(Box<MetricAtom>, Interval<Time>, Box<MetricAtom>),
}

impl MetricAtom {
    pub fn relational(pred: &str, terms: Vec<Term>) -> Self {
        MetricAtom::Relational(Arc::from(pred), terms)
    }

    /// Sum of right endpoints of every operator interval in the atom.
    pub fn depth(&self) -> Time {
        match self {
            MetricAtom::Top | MetricAtom::Bottom | MetricAtom::Relational(..) => Time::zero(),
            MetricAtom::Boxplus(w, m)
            | MetricAtom::Boxminus(w, m)
            | MetricAtom::Diamondplus(w, m)
            | MetricAtom::Diamondminus(w, m) => w.hi() + m.depth(),
            MetricAtom::Since(l, w, r) | MetricAtom::Until(l, w, r) => {
                w.hi() + l.depth() + r.depth()
            }
        }
    }

    fn intervals<'a>(&'a self, out: &mut Vec<&'a Interval<Time>>) {
        match self {
            MetricAtom::Top | MetricAtom::Bottom | MetricAtom::Relational(..) => {}
            MetricAtom::Boxplus(w, m)
            | MetricAtom::Boxminus(w, m)
            | MetricAtom::Diamondplus(w, m)
            | MetricAtom::Diamondminus(w, m) => {
                out.push(w);
                m.intervals(out);
            }
            MetricAtom::Since(l, w, r) | MetricAtom::Until(l, w, r) => {
                out.push(w);
                l.intervals(out);
                r.intervals(out);
            }
        }
    }

    /// Visits every relational atom; the flag says whether it must have a fact
    /// for the enclosing atom to hold anywhere.
    pub fn for_each_relational<'a>(&'a self, required: bool, f: &mut impl FnMut(&'a Symbol, &'a [Term], bool)) {
        match self {
            MetricAtom::Top | MetricAtom::Bottom => {}
            MetricAtom::Relational(p, ts) => f(p, ts, required),
            MetricAtom::Boxplus(_, m)
            | MetricAtom::Boxminus(_, m)
            | MetricAtom::Diamondplus(_, m)
            | MetricAtom::Diamondminus(_, m) => m.for_each_relational(required, f),
            MetricAtom::Since(l, w, r) | MetricAtom::Until(l, w, r) => {
                // with 0 ∈ ϱ the left operand may hold vacuously
                l.for_each_relational(required && !w.contains(&Time::zero()), f);
                r.for_each_relational(required, f);
            }
        }
    }

    /// Whether the set of times where the atom holds is bounded for bounded data.
    pub fn is_anchored(&self) -> bool {
        match self {
            MetricAtom::Top => false,
            MetricAtom::Bottom | MetricAtom::Relational(..) => true,
            MetricAtom::Boxplus(_, m)
            | MetricAtom::Boxminus(_, m)
            | MetricAtom::Diamondplus(_, m)
            | MetricAtom::Diamondminus(_, m) => m.is_anchored(),
            MetricAtom::Since(l, w, r) | MetricAtom::Until(l, w, r) => {
                r.is_anchored() || (l.is_anchored() && !w.contains(&Time::zero()))
            }
        }
    }

    /// Whether the atom is a relational atom under ⊞/⊟ only.
    pub fn is_head_form(&self) -> bool {
        match self {
            MetricAtom::Relational(..) => true,
            MetricAtom::Boxplus(_, m) | MetricAtom::Boxminus(_, m) => m.is_head_form(),
            _ => false,
        }
    }

    /// The relational atom at the bottom of a head.
    pub fn head_relational(&self) -> Option<(&Symbol, &[Term])> {
        match self {
            MetricAtom::Relational(p, ts) => Some((p, ts)),
            MetricAtom::Boxplus(_, m) | MetricAtom::Boxminus(_, m) => m.head_relational(),
            _ => None,
        }
    }

    pub fn variables(&self, out: &mut BTreeSet<Symbol>) {
        self.for_each_relational(true, &mut |_, ts, _| {
            for t in ts {
                if let Term::Var(v) = t {
                    out.insert(v.clone());
                }
            }
        });
    }

    /// Replaces variables by constants; unmapped variables stay.
    pub fn substitute(&self, s: &Substitution) -> MetricAtom {
        let sub = |m: &MetricAtom| Box::new(m.substitute(s));
        match self {
            MetricAtom::Top => MetricAtom::Top,
            MetricAtom::Bottom => MetricAtom::Bottom,
            MetricAtom::Relational(p, ts) => MetricAtom::Relational(
                p.clone(),
                ts.iter()
                    .map(|t| match t {
                        Term::Var(v) => match s.get(v) {
                            Some(c) => Term::Const(c.clone()),
                            None => t.clone(),
                        },
                        Term::Const(_) => t.clone(),
                    })
                    .collect(),
            ),
            MetricAtom::Boxplus(w, m) => MetricAtom::Boxplus(w.clone(), sub(m)),
            MetricAtom::Boxminus(w, m) => MetricAtom::Boxminus(w.clone(), sub(m)),
            MetricAtom::Diamondplus(w, m) => MetricAtom::Diamondplus(w.clone(), sub(m)),
            MetricAtom::Diamondminus(w, m) => MetricAtom::Diamondminus(w.clone(), sub(m)),
            MetricAtom::Since(l, w, r) => MetricAtom::Since(sub(l), w.clone(), sub(r)),
            MetricAtom::Until(l, w, r) => MetricAtom::Until(sub(l), w.clone(), sub(r)),
        }
    }

    pub fn is_ground(&self) -> bool {
        let mut ground = true;
        self.for_each_relational(true, &mut |_, ts, _| {
            ground &= ts.iter().all(|t| matches!(t, Term::Const(_)));
        });
        ground
    }

    fn is_binary(&self) -> bool {
        matches!(self, MetricAtom::Since(..) | MetricAtom::Until(..))
    }
}

/// Partial map from variable names to constants.
pub type Substitution = std::collections::BTreeMap<Symbol, Symbol>;

/// Ground relational atom for a relational metric atom under `s`.
pub fn ground_relational(pred: &Symbol, terms: &[Term], s: &Substitution) -> Option<GroundAtom> {
    let mut args = Vec::with_capacity(terms.len());
    for t in terms {
        match t {
            Term::Const(c) => args.push(c.clone()),
            Term::Var(v) => args.push(s.get(v)?.clone()),
        }
    }
    Some(GroundAtom::new(pred.clone(), args))
}

fn fmt_operand(f: &mut fmt::Formatter<'_>, m: &MetricAtom) -> fmt::Result {
    if m.is_binary() {
        write!(f, "({m})")
    } else {
        write!(f, "{m}")
    }
}

impl fmt::Display for MetricAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricAtom::Top => write!(f, "TOP"),
            MetricAtom::Bottom => write!(f, "BOTTOM"),
            MetricAtom::Relational(p, ts) => {
                write!(f, "{p}")?;
                if !ts.is_empty() {
                    write!(f, "(")?;
                    for (k, t) in ts.iter().enumerate() {
                        if k > 0 {
                            write!(f, ",")?;
                        }
                        write!(f, "{t}")?;
                    }
                    write!(f, ")")?;
                }
                Ok(())
            }
            MetricAtom::Boxplus(w, m) => {
                write!(f, "BOXPLUS{w} ")?;
                fmt_operand(f, m)
            }
            MetricAtom::Boxminus(w, m) => {
                write!(f, "BOXMINUS{w} ")?;
                fmt_operand(f, m)
            }
            MetricAtom::Diamondplus(w, m) => {
                write!(f, "DIAMONDPLUS{w} ")?;
                fmt_operand(f, m)
            }
            MetricAtom::Diamondminus(w, m) => {
                write!(f, "DIAMONDMINUS{w} ")?;
                fmt_operand(f, m)
            }
            MetricAtom::Since(l, w, r) => {
                fmt_operand(f, l)?;
                write!(f, " SINCE{w} ")?;
                fmt_operand(f, r)
            }
            MetricAtom::Until(l, w, r) => {
                fmt_operand(f, l)?;
                write!(f, " UNTIL{w} ")?;
                fmt_operand(f, r)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Rule {
    pub head: MetricAtom,
    pub body: Vec<MetricAtom>,
}

impl Rule {
    pub fn depth(&self) -> Time {
        self.body.iter().fold(self.head.depth(), |acc, b| acc + b.depth())
    }

    /// Checks head form, operator intervals, anchoring and safety.
    pub fn validate(&self) -> Result<(), RuleError> {
        if !self.head.is_head_form() {
            return Err(RuleError::BadHead);
        }
        if self.body.is_empty() {
            return Err(RuleError::NoRelationalBody);
        }
        let mut ivs = Vec::new();
        self.head.intervals(&mut ivs);
        for b in &self.body {
            b.intervals(&mut ivs);
        }
        if let Some(w) = ivs.iter().find(|w| w.lo().is_negative()) {
            return Err(RuleError::NegativeInterval(w.to_string()));
        }
        if !self.body.iter().any(MetricAtom::is_anchored) {
            return Err(RuleError::NoRelationalBody);
        }
        let mut bound = BTreeSet::new();
        for b in &self.body {
            b.for_each_relational(true, &mut |_, ts, required| {
                if required {
                    for t in ts {
                        if let Term::Var(v) = t {
                            bound.insert(v.clone());
                        }
                    }
                }
            });
        }
        let mut all = BTreeSet::new();
        self.head.variables(&mut all);
        for b in &self.body {
            b.variables(&mut all);
        }
        if let Some(v) = all.difference(&bound).next() {
            return Err(RuleError::Unsafe(v.to_string()));
        }
        Ok(())
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} :- ", self.head)?;
        for (k, b) in self.body.iter().enumerate() {
            if k > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleError {
    #[error("head must be a relational atom under BOXPLUS/BOXMINUS only")]
    BadHead,
    #[error("body has no relational atom")]
    NoRelationalBody,
    #[error("operator interval {0} contains negative values")]
    NegativeInterval(String),
    #[error("unsafe rule: variable ?{0} does not occur in a body relational atom that must hold")]
    Unsafe(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Program {
    rules: Vec<Rule>,
    depth: Time,
    div: Time,
}

impl Program {
    pub fn new(rules: Vec<Rule>) -> Result<Program, RuleError> {
        for r in &rules {
            r.validate()?;
        }
        let depth = rules.iter().map(Rule::depth).max().unwrap_or_else(Time::zero);
        let mut k = BigInt::one();
        for r in &rules {
            let mut ivs = Vec::new();
            r.head.intervals(&mut ivs);
            for b in &r.body {
                b.intervals(&mut ivs);
            }
            for w in ivs {
                k *= w.lo().denom();
                k *= w.hi().denom();
            }
        }
        let div = Time::new(BigInt::one(), k);
        Ok(Program { rules, depth, div })
    }

    pub fn empty() -> Program {
        Program { rules: Vec::new(), depth: Time::zero(), div: Time::one() }
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }
    pub fn depth(&self) -> &Time {
        &self.depth
    }
    pub fn div(&self) -> &Time {
        &self.div
    }

    /// Constants mentioned by the rules.
    pub fn constants(&self) -> BTreeSet<Symbol> {
        let mut out = BTreeSet::new();
        let mut visit = |m: &MetricAtom| {
            m.for_each_relational(true, &mut |_, ts, _| {
                for t in ts {
                    if let Term::Const(c) = t {
                        out.insert(c.clone());
                    }
                }
            })
        };
        for r in &self.rules {
            visit(&r.head);
            for b in &r.body {
                visit(b);
            }
        }
        out
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.rules {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }
}

pub fn program_depth(p: &Program) -> Time {
    p.depth.clone()
}

/// A ground relational atom holding over a bounded interval.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Fact {
    pub atom: GroundAtom,
    pub interval: Interval<Time>,
}

impl Fact {
    pub fn new(atom: GroundAtom, interval: Interval<Time>) -> Fact {
        Fact { atom, interval }
    }
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.atom, self.interval)
    }
}

/// The residues `e mod div` of the given endpoints, sorted and deduplicated.
pub fn ruler_residues<'a, I: IntoIterator<Item = &'a Time>>(div: &Time, endpoints: I) -> Vec<Time> {
    let mut rs: BTreeSet<Time> = BTreeSet::new();
    let unit = div.numer().is_one();
    for e in endpoints {
        if unit && e.is_integer() {
            rs.insert(Time::zero());
        } else {
            rs.insert(e - (e / div).floor() * div);
        }
    }
    if rs.is_empty() {
        rs.insert(Time::zero());
    }
    rs.into_iter().collect()
}

/// Ruler points `r + i·div` inside `window` for the given residues.
pub fn ruler_points_from_residues(div: &Time, residues: &[Time], window: &Interval<Time>) -> Vec<Time> {
    let mut out = Vec::new();
    for r in residues {
        let first = ((window.lo() - r) / div).ceil().to_integer();
        let last = ((window.hi() - r) / div).floor().to_integer();
        let mut i = first;
        while i <= last {
            let t = r + Time::from_integer(i.clone()) * div;
            if window.contains(&t) {
                out.push(t);
            }
            i += 1;
        }
    }
    out.sort();
    out.dedup();
    out
}

/// All points `e + i·div(Π)` inside `window` for dataset endpoints `e`.
pub fn ruler_points(p: &Program, endpoints: &BTreeSet<Time>, window: &Interval<Time>) -> Vec<Time> {
    let residues = ruler_residues(p.div(), endpoints.iter());
    ruler_points_from_residues(p.div(), &residues, window)
}

/// Least common multiple of two positive rationals.
pub fn rational_lcm(a: &Time, b: &Time) -> Time {
    let den = a.denom().lcm(b.denom());
    let na = a.numer() * (&den / a.denom());
    let nb = b.numer() * (&den / b.denom());
    Time::new(na.lcm(&nb), den)
}

// ---------------------------------------------------------------------------
// Parsing

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("{line}:{column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("{line}:{column}: {source}")]
    Rule {
        line: usize,
        column: usize,
        #[source]
        source: RuleError,
    },
    #[error("{line}:{column}: unbounded interval")]
    Unbounded { line: usize, column: usize },
    #[error("{line}:{column}: fact is not ground (variable ?{var})")]
    NonGround { line: usize, column: usize, var: String },
}

impl ParseError {
    pub fn line(&self) -> usize {
        match self {
            ParseError::Syntax { line, .. }
            | ParseError::Rule { line, .. }
            | ParseError::Unbounded { line, .. }
            | ParseError::NonGround { line, .. } => *line,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Var(String),
    Num(Time),
    Inf,
    LParen,
    RParen,
    LBrack,
    RBrack,
    Comma,
    At,
    Turnstile,
    Dot,
}

#[derive(Clone, Debug)]
struct Spanned {
    tok: Tok,
    col: usize,
}

fn lex_line(line: &str, lineno: usize) -> Result<Vec<Spanned>, ParseError> {
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |col: usize, msg: String| ParseError::Syntax { line: lineno, column: col, message: msg };
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c == '%' {
            break;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let single = match c {
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '[' => Some(Tok::LBrack),
            ']' => Some(Tok::RBrack),
            ',' => Some(Tok::Comma),
            '@' => Some(Tok::At),
            '∞' => Some(Tok::Inf),
            _ => None,
        };
        if let Some(t) = single {
            out.push(Spanned { tok: t, col });
            i += 1;
            continue;
        }
        if c == ':' {
            if chars.get(i + 1) == Some(&'-') {
                out.push(Spanned { tok: Tok::Turnstile, col });
                i += 2;
                continue;
            }
            return Err(err(col, "expected ':-'".into()));
        }
        if c == '?' {
            let start = i + 1;
            let mut j = start;
            while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_') {
                j += 1;
            }
            if j == start {
                return Err(err(col, "empty variable name".into()));
            }
            out.push(Spanned { tok: Tok::Var(chars[start..j].iter().collect()), col });
            i = j;
            continue;
        }
        if c.is_ascii_digit() || ((c == '-' || c == '+') && i + 1 < chars.len()) {
            let start = i;
            let mut j = i;
            if c == '-' || c == '+' {
                j += 1;
            }
            let rest: String = chars[j..].iter().collect();
            if rest.starts_with("inf") || rest.starts_with('∞') {
                let skip = if rest.starts_with('∞') { 1 } else { 3 };
                out.push(Spanned { tok: Tok::Inf, col });
                i = j + skip;
                continue;
            }
            while j < chars.len() && (chars[j].is_ascii_digit() || chars[j] == '.' || chars[j] == '/') {
                j += 1;
            }
            let text: String = chars[start..j].iter().collect();
            let num = parse_number(&text).ok_or_else(|| err(col, format!("bad number '{text}'")))?;
            out.push(Spanned { tok: Tok::Num(num), col });
            i = j;
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            let mut j = i;
            while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_') {
                j += 1;
            }
            let text: String = chars[start..j].iter().collect();
            if text == "inf" {
                out.push(Spanned { tok: Tok::Inf, col });
            } else {
                out.push(Spanned { tok: Tok::Ident(text), col });
            }
            i = j;
            continue;
        }
        if c == '.' {
            out.push(Spanned { tok: Tok::Dot, col });
            i += 1;
            continue;
        }
        return Err(err(col, format!("unexpected character '{c}'")));
    }
    Ok(out)
}

/// Parses `12`, `-3`, `0.25`, `7/2`.
pub fn parse_number(text: &str) -> Option<Time> {
    let (neg, body) = match text.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, text.strip_prefix('+').unwrap_or(text)),
    };
    if body.is_empty() {
        return None;
    }
    let value = if let Some((p, q)) = body.split_once('/') {
        let p: BigInt = p.parse().ok()?;
        let q: BigInt = q.parse().ok()?;
        if q.is_zero() {
            return None;
        }
        Time::new(p, q)
    } else if let Some((ip, fp)) = body.split_once('.') {
        if ip.is_empty() && fp.is_empty() {
            return None;
        }
        let ip: BigInt = if ip.is_empty() { BigInt::zero() } else { ip.parse().ok()? };
        if !fp.chars().all(|c| c.is_ascii_digit()) {
            return None;
        }
        let scale = BigInt::from(10u32).pow(fp.len() as u32);
        let fv: BigInt = if fp.is_empty() { BigInt::zero() } else { fp.parse().ok()? };
        Time::new(ip * &scale + fv, scale)
    } else {
        Time::from_integer(body.parse().ok()?)
    };
    Some(if neg { -value } else { value })
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    line: usize,
    end_col: usize,
}

const OPS: [&str; 4] = ["BOXPLUS", "BOXMINUS", "DIAMONDPLUS", "DIAMONDMINUS"];

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn col(&self) -> usize {
        self.toks.get(self.pos).map(|s| s.col).unwrap_or(self.end_col)
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError::Syntax { line: self.line, column: self.col(), message: msg.into() }
    }

    fn expect(&mut self, t: Tok, what: &str) -> Result<(), ParseError> {
        if self.peek() == Some(&t) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected {what}")))
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len() || (self.peek() == Some(&Tok::Dot) && self.pos + 1 == self.toks.len())
    }

    fn number(&mut self) -> Result<Time, ParseError> {
        match self.peek().cloned() {
            Some(Tok::Num(n)) => {
                self.pos += 1;
                Ok(n)
            }
            Some(Tok::Inf) => Err(ParseError::Unbounded { line: self.line, column: self.col() }),
            _ => Err(self.err("expected a number")),
        }
    }

    fn interval(&mut self) -> Result<Interval<Time>, ParseError> {
        let col = self.col();
        let lo_closed = match self.peek() {
            Some(Tok::LBrack) => true,
            Some(Tok::LParen) => false,
            _ => return Err(self.err("expected '[' or '('")),
        };
        self.pos += 1;
        let lo = self.number()?;
        self.expect(Tok::Comma, "','")?;
        let hi = self.number()?;
        let hi_closed = match self.peek() {
            Some(Tok::RBrack) => true,
            Some(Tok::RParen) => false,
            _ => return Err(self.err("expected ']' or ')'")),
        };
        self.pos += 1;
        Interval::new(lo, lo_closed, hi, hi_closed).ok_or(ParseError::Syntax {
            line: self.line,
            column: col,
            message: "empty interval".into(),
        })
    }

    fn atom(&mut self) -> Result<MetricAtom, ParseError> {
        let left = self.unary()?;
        if let Some(Tok::Ident(k)) = self.peek() {
            if k == "SINCE" || k == "UNTIL" {
                let since = k == "SINCE";
                self.pos += 1;
                let w = self.interval()?;
                let right = self.unary()?;
                if let Some(Tok::Ident(k2)) = self.peek() {
                    if k2 == "SINCE" || k2 == "UNTIL" {
                        return Err(self.err("SINCE/UNTIL do not associate; use parentheses"));
                    }
                }
                let (l, r) = (Box::new(left), Box::new(right));
                return Ok(if since { MetricAtom::Since(l, w, r) } else { MetricAtom::Until(l, w, r) });
            }
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<MetricAtom, ParseError> {
        match self.peek().cloned() {
            Some(Tok::Ident(k)) if OPS.contains(&k.as_str()) => {
                self.pos += 1;
                let w = self.interval()?;
                let m = Box::new(self.unary()?);
                Ok(match k.as_str() {
                    "BOXPLUS" => MetricAtom::Boxplus(w, m),
                    "BOXMINUS" => MetricAtom::Boxminus(w, m),
                    "DIAMONDPLUS" => MetricAtom::Diamondplus(w, m),
                    _ => MetricAtom::Diamondminus(w, m),
                })
            }
            Some(Tok::Ident(k)) if k == "TOP" => {
                self.pos += 1;
                Ok(MetricAtom::Top)
            }
            Some(Tok::Ident(k)) if k == "BOTTOM" => {
                self.pos += 1;
                Ok(MetricAtom::Bottom)
            }
            Some(Tok::Ident(k)) if k == "SINCE" || k == "UNTIL" => Err(self.err(format!("unexpected {k}"))),
            Some(Tok::LParen) => {
                self.pos += 1;
                let m = self.atom()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(m)
            }
            Some(Tok::Ident(_)) => self.relational(),
            _ => Err(self.err("expected a metric atom")),
        }
    }

    fn relational(&mut self) -> Result<MetricAtom, ParseError> {
        let name = match self.peek().cloned() {
            Some(Tok::Ident(n)) => n,
            _ => return Err(self.err("expected a predicate name")),
        };
        self.pos += 1;
        let mut terms = Vec::new();
        if self.peek() == Some(&Tok::LParen) {
            self.pos += 1;
            if self.peek() != Some(&Tok::RParen) {
                loop {
                    match self.peek().cloned() {
                        Some(Tok::Var(v)) => terms.push(Term::Var(Arc::from(v.as_str()))),
                        Some(Tok::Ident(c)) => terms.push(Term::Const(Arc::from(c.as_str()))),
                        Some(Tok::Num(n)) if n.is_integer() => {
                            terms.push(Term::Const(Arc::from(n.to_string().as_str())))
                        }
                        _ => return Err(self.err("expected a term")),
                    }
                    self.pos += 1;
                    if self.peek() == Some(&Tok::Comma) {
                        self.pos += 1;
                    } else {
                        break;
                    }
                }
            }
            self.expect(Tok::RParen, "')'")?;
        }
        Ok(MetricAtom::Relational(Arc::from(name.as_str()), terms))
    }

    fn rule(&mut self) -> Result<Rule, ParseError> {
        let head = self.atom()?;
        self.expect(Tok::Turnstile, "':-'")?;
        let mut body = vec![self.atom()?];
        while self.peek() == Some(&Tok::Comma) {
            self.pos += 1;
            body.push(self.atom()?);
        }
        if !self.at_end() {
            return Err(self.err("unexpected trailing input"));
        }
        Ok(Rule { head, body })
    }

    fn fact(&mut self) -> Result<Fact, ParseError> {
        let col = self.col();
        let atom = self.relational()?;
        self.expect(Tok::At, "'@'")?;
        let interval = match self.peek() {
            Some(Tok::Num(_)) => Interval::point(self.number()?),
            Some(Tok::Inf) => return Err(ParseError::Unbounded { line: self.line, column: self.col() }),
            _ => self.interval()?,
        };
        if !self.at_end() {
            return Err(self.err("unexpected trailing input"));
        }
        let MetricAtom::Relational(p, terms) = atom else { unreachable!() };
        let mut args = Vec::with_capacity(terms.len());
        for t in terms {
            match t {
                Term::Const(c) => args.push(c),
                Term::Var(v) => {
                    return Err(ParseError::NonGround { line: self.line, column: col, var: v.to_string() })
                }
            }
        }
        Ok(Fact { atom: GroundAtom::new(p, args), interval })
    }
}

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l))
}

fn parser_for(line: &str, lineno: usize) -> Result<Option<Parser>, ParseError> {
    let toks = lex_line(line, lineno)?;
    if toks.is_empty() {
        return Ok(None);
    }
    Ok(Some(Parser { toks, pos: 0, line: lineno, end_col: line.chars().count() + 1 }))
}

/// Parses one rule per nonempty line.
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let mut rules = Vec::new();
    for (lineno, line) in lines(text) {
        let Some(mut p) = parser_for(line, lineno)? else { continue };
        let rule = p.rule()?;
        rule.validate().map_err(|e| ParseError::Rule { line: lineno, column: 1, source: e })?;
        rules.push(rule);
    }
    Ok(Program::new(rules).expect("rules validated"))
}

/// Parses a single rule.
pub fn parse_rule(text: &str) -> Result<Rule, ParseError> {
    let p = parse_program(text)?;
    match p.rules() {
        [r] => Ok(r.clone()),
        _ => Err(ParseError::Syntax { line: 1, column: 1, message: "expected exactly one rule".into() }),
    }
}

/// Parses one fact per nonempty line.
pub fn parse_dataset(text: &str) -> Result<Vec<Fact>, ParseError> {
    let mut facts = Vec::new();
    for (lineno, line) in lines(text) {
        let Some(mut p) = parser_for(line, lineno)? else { continue };
        facts.push(p.fact()?);
    }
    Ok(facts)
}

/// Parses a single fact such as `R(a)@[0,1]`.
pub fn parse_fact(text: &str) -> Result<Fact, ParseError> {
    let facts = parse_dataset(text)?;
    match facts.as_slice() {
        [f] => Ok(f.clone()),
        _ => Err(ParseError::Syntax { line: 1, column: 1, message: "expected exactly one fact".into() }),
    }
}

/// Parses an interval such as `(1/2,3]`.
pub fn parse_interval(text: &str) -> Result<Interval<Time>, ParseError> {
    let mut p = parser_for(text, 1)?.ok_or(ParseError::Syntax {
        line: 1,
        column: 1,
        message: "expected an interval".into(),
    })?;
    let w = p.interval()?;
    if !p.at_end() {
        return Err(p.err("unexpected trailing input"));
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers() {
        assert_eq!(parse_number("0.5"), Some(Time::new(1.into(), 2.into())));
        assert_eq!(parse_number("-7/2"), Some(Time::new((-7).into(), 2.into())));
        assert_eq!(parse_number("3"), Some(Time::from_integer(3.into())));
        assert_eq!(parse_number("1/0"), None);
    }

    #[test]
    fn nested_binary_needs_parentheses() {
        assert!(parse_program("H(?x) :- A(?x) SINCE[0,1] B(?x) SINCE[0,1] C(?x)").is_err());
        assert!(parse_program("H(?x) :- (A(?x) SINCE[0,1] B(?x)) SINCE[0,1] C(?x)").is_ok());
    }

    #[test]
    fn lcm_over_rationals() {
        let h = Time::new(1.into(), 2.into());
        let t = Time::new(1.into(), 3.into());
        assert_eq!(rational_lcm(&h, &t), Time::from_integer(1.into()));
        let two = Time::from_integer(2.into());
        let three = Time::from_integer(3.into());
        assert_eq!(rational_lcm(&two, &three), Time::from_integer(6.into()));
    }
}
