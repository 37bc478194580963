//! Line-oriented program format.
//!
//! ```text
//! vars x y
//! point p0
//! point done terminal
//! start p0
//! trans p0 -> done assume x >= y + 5 cost 3 access 0 4
//! loopbound p0 2
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use super::{BlockId, CostAnnotation, IrError, Op, PointId, Transition, TransitionSystem};
use crate::linear::{Comparison, LinExpr, Rel, VarId};

const KEYWORDS: &[&str] = &["cost", "access", "assume", "assign"];

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(i64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Rel(Rel),
    Define,
    Open,
    Close,
}

fn lex(text: &str, line: usize) -> Result<Vec<Tok>, IrError> {
    let err = |message: String| IrError::Parse { line, message };
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    let mut out = Vec::new();
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_digit() {
            let s = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let lit: String = chars[s..i].iter().collect();
            let n = lit
                .parse::<i64>()
                .map_err(|_| err(format!("integer literal `{lit}` out of range")))?;
            out.push(Tok::Num(n));
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let s = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(chars[s..i].iter().collect()));
            continue;
        }
        let next = chars.get(i + 1).copied();
        let (tok, width) = match (c, next) {
            ('<', Some('=')) => (Tok::Rel(Rel::Le), 2),
            ('>', Some('=')) => (Tok::Rel(Rel::Ge), 2),
            ('!', Some('=')) => (Tok::Rel(Rel::Ne), 2),
            ('=', Some('=')) => (Tok::Rel(Rel::Eq), 2),
            (':', Some('=')) => (Tok::Define, 2),
            ('<', _) => (Tok::Rel(Rel::Lt), 1),
            ('>', _) => (Tok::Rel(Rel::Gt), 1),
            ('=', _) => (Tok::Rel(Rel::Eq), 1),
            ('+', _) => (Tok::Plus, 1),
            ('-', _) => (Tok::Minus, 1),
            ('*', _) => (Tok::Star, 1),
            ('[', _) => (Tok::Open, 1),
            (']', _) => (Tok::Close, 1),
            _ => return Err(err(format!("unexpected character `{c}`"))),
        };
        out.push(tok);
        i += width;
    }
    Ok(out)
}

struct Cursor<'a> {
    toks: &'a [Tok],
    pos: usize,
    line: usize,
    vars: &'a HashMap<String, VarId>,
}

impl Cursor<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn at_keyword(&self) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if KEYWORDS.contains(&s.as_str()))
    }

    fn parse_err(&self, message: impl Into<String>) -> IrError {
        IrError::Parse {
            line: self.line,
            message: message.into(),
        }
    }

    fn lookup(&self, name: &str) -> Result<VarId, IrError> {
        self.vars.get(name).copied().ok_or_else(|| IrError::Semantic {
            message: format!("line {}: undeclared variable `{name}`", self.line),
        })
    }

    fn expr(&mut self) -> Result<LinExpr, IrError> {
        let mut acc = LinExpr::zero();
        let mut sign = 1i64;
        if matches!(self.peek(), Some(Tok::Minus)) {
            self.bump();
            sign = -1;
        } else if matches!(self.peek(), Some(Tok::Plus)) {
            self.bump();
        }
        loop {
            self.term(sign, &mut acc)?;
            match self.peek() {
                Some(Tok::Plus) => {
                    self.bump();
                    sign = 1;
                }
                Some(Tok::Minus) => {
                    self.bump();
                    sign = -1;
                }
                _ => break,
            }
        }
        Ok(acc)
    }

    fn term(&mut self, sign: i64, acc: &mut LinExpr) -> Result<(), IrError> {
        if self.at_keyword() {
            return Err(self.parse_err("expected a term"));
        }
        match self.bump() {
            Some(Tok::Num(n)) => {
                let n = n.checked_mul(sign).ok_or_else(|| self.parse_err("literal overflow"))?;
                if matches!(self.peek(), Some(Tok::Star)) {
                    self.bump();
                }
                if matches!(self.peek(), Some(Tok::Ident(_))) && !self.at_keyword() {
                    let Some(Tok::Ident(name)) = self.bump() else {
                        unreachable!()
                    };
                    let v = self.lookup(&name)?;
                    acc.add_term(v, n);
                } else {
                    acc.add_constant(n);
                }
                Ok(())
            }
            Some(Tok::Ident(name)) => {
                let v = self.lookup(&name)?;
                acc.add_term(v, sign);
                Ok(())
            }
            Some(t) => Err(self.parse_err(format!("unexpected token {t:?} in expression"))),
            None => Err(self.parse_err("expression ends early")),
        }
    }

    fn number(&mut self, what: &str) -> Result<i64, IrError> {
        match self.bump() {
            Some(Tok::Num(n)) => Ok(n),
            _ => Err(self.parse_err(format!("expected {what}"))),
        }
    }
}

struct TransLine {
    line: usize,
    src: String,
    dst: String,
    rest: String,
}

/// Parses the textual program format into a [`TransitionSystem`].
pub fn parse_program(text: &str) -> Result<TransitionSystem, IrError> {
    let mut vars: Vec<String> = Vec::new();
    let mut points: Vec<String> = Vec::new();
    let mut point_index: HashMap<String, PointId> = HashMap::new();
    let mut terminals = BTreeSet::new();
    let mut start: Option<(usize, String)> = None;
    let mut trans_lines = Vec::new();
    let mut bounds_lines: Vec<(usize, String, u32)> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let words: Vec<&str> = content.split_whitespace().collect();
        let perr = |message: String| IrError::Parse { line, message };
        match words[0] {
            "vars" => {
                for w in &words[1..] {
                    if !is_ident(w) || KEYWORDS.contains(w) {
                        return Err(perr(format!("invalid variable name `{w}`")));
                    }
                    if vars.iter().any(|v| v == w) {
                        return Err(IrError::Semantic {
                            message: format!("line {line}: duplicate variable `{w}`"),
                        });
                    }
                    vars.push(w.to_string());
                }
            }
            "point" => {
                let (name, flag) = match words.as_slice() {
                    [_, name] => (*name, false),
                    [_, name, "terminal"] => (*name, true),
                    _ => return Err(perr("expected `point <id> [terminal]`".into())),
                };
                if !is_point_name(name) {
                    return Err(perr(format!("invalid point id `{name}`")));
                }
                if point_index.contains_key(name) {
                    return Err(IrError::Semantic {
                        message: format!("line {line}: duplicate point `{name}`"),
                    });
                }
                let id = PointId(points.len() as u32);
                points.push(name.to_string());
                point_index.insert(name.to_string(), id);
                if flag {
                    terminals.insert(id);
                }
            }
            "start" => match words.as_slice() {
                [_, name] => {
                    if start.is_some() {
                        return Err(perr("start declared twice".into()));
                    }
                    start = Some((line, name.to_string()));
                }
                _ => return Err(perr("expected `start <id>`".into())),
            },
            "trans" => {
                if words.len() < 5 || words[2] != "->" {
                    return Err(perr("expected `trans <src> -> <dst> ...`".into()));
                }
                // Everything after the destination id is re-lexed as tokens.
                let after_dst = content.splitn(5, char::is_whitespace).nth(4).unwrap_or("").to_string();
                trans_lines.push(TransLine {
                    line,
                    src: words[1].to_string(),
                    dst: words[3].to_string(),
                    rest: after_dst,
                });
            }
            "loopbound" => match words.as_slice() {
                [_, name, n] => {
                    let n: u32 = n.parse().map_err(|_| perr(format!("invalid loop bound `{n}`")))?;
                    if n == 0 {
                        return Err(perr("loop bound must be positive".into()));
                    }
                    bounds_lines.push((line, name.to_string(), n));
                }
                _ => return Err(perr("expected `loopbound <header-id> <n>`".into())),
            },
            other => return Err(perr(format!("unknown directive `{other}`"))),
        }
    }

    let var_index: HashMap<String, VarId> = vars
        .iter()
        .enumerate()
        .map(|(i, v)| (v.clone(), VarId(i as u32)))
        .collect();
    let resolve = |line: usize, name: &str| {
        point_index.get(name).copied().ok_or_else(|| IrError::Semantic {
            message: format!("line {line}: dangling reference to undeclared point `{name}`"),
        })
    };

    let mut transitions = Vec::with_capacity(trans_lines.len());
    for tl in &trans_lines {
        let src = resolve(tl.line, &tl.src)?;
        let dst = resolve(tl.line, &tl.dst)?;
        let toks = lex(&tl.rest, tl.line)?;
        let mut cur = Cursor {
            toks: &toks,
            pos: 0,
            line: tl.line,
            vars: &var_index,
        };
        let op = match cur.bump() {
            Some(Tok::Ident(kw)) if kw == "assume" => {
                let lhs = cur.expr()?;
                let rel = match cur.bump() {
                    Some(Tok::Rel(r)) => r,
                    _ => return Err(cur.parse_err("expected a comparison operator")),
                };
                let rhs = cur.expr()?;
                Op::Assume(Comparison::new(lhs, rel, rhs))
            }
            Some(Tok::Ident(kw)) if kw == "assign" => {
                let var = match cur.bump() {
                    Some(Tok::Ident(name)) => cur.lookup(&name)?,
                    _ => return Err(cur.parse_err("expected a variable after `assign`")),
                };
                if cur.bump() != Some(Tok::Define) {
                    return Err(cur.parse_err("expected `:=`"));
                }
                let expr = cur.expr()?;
                Op::Assign { var, expr }
            }
            _ => return Err(cur.parse_err("expected `assume` or `assign`")),
        };
        let mut cost = CostAnnotation::default();
        if matches!(cur.peek(), Some(Tok::Ident(k)) if k == "cost") {
            cur.bump();
            let k = cur.number("a cycle count after `cost`")?;
            cost.static_cycles = u64::try_from(k).map_err(|_| cur.parse_err("negative cost"))?;
        }
        if matches!(cur.peek(), Some(Tok::Ident(k)) if k == "access") {
            cur.bump();
            let bracketed = cur.peek() == Some(&Tok::Open);
            if bracketed {
                cur.bump();
            }
            while let Some(b) = cur.peek().and_then(block_id) {
                cur.bump();
                cost.accesses.push(b);
            }
            if bracketed && cur.bump() != Some(Tok::Close) {
                return Err(cur.parse_err("expected `]` after block list"));
            }
        }
        if let Some(t) = cur.peek() {
            return Err(cur.parse_err(format!("trailing token {t:?}")));
        }
        transitions.push(Transition { src, dst, op, cost });
    }

    let (start_line, start_name) = start.ok_or_else(|| IrError::Semantic {
        message: "no start point declared".into(),
    })?;
    let start = resolve(start_line, &start_name)?;
    let mut loop_bounds = BTreeMap::new();
    for (line, name, n) in bounds_lines {
        loop_bounds.insert(resolve(line, &name)?, n);
    }
    TransitionSystem::new(vars, points, start, terminals, transitions, loop_bounds)
}

/// Block ids are written `7` or `m7`.
fn block_id(tok: &Tok) -> Option<BlockId> {
    match tok {
        Tok::Num(n) => u64::try_from(*n).ok().map(BlockId),
        Tok::Ident(s) => s.strip_prefix('m')?.parse().ok().map(BlockId),
        _ => None,
    }
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn is_point_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '@' | '\''))
}

/// Renders a system in the format accepted by [`parse_program`].
pub fn print_program(ts: &TransitionSystem) -> String {
    let mut out = String::new();
    if !ts.vars().is_empty() {
        let _ = writeln!(out, "vars {}", ts.vars().join(" "));
    }
    for p in ts.point_ids() {
        if ts.is_terminal(p) {
            let _ = writeln!(out, "point {} terminal", ts.point_name(p));
        } else {
            let _ = writeln!(out, "point {}", ts.point_name(p));
        }
    }
    let _ = writeln!(out, "start {}", ts.point_name(ts.start()));
    let names = ts.var_namer();
    for t in ts.transitions() {
        let _ = write!(out, "trans {} -> {} ", ts.point_name(t.src), ts.point_name(t.dst));
        match &t.op {
            Op::Assume(c) => {
                let _ = write!(out, "assume {}", c.display_with(names.clone()));
            }
            Op::Assign { var, expr } => {
                let _ = write!(
                    out,
                    "assign {} := {}",
                    ts.var_name(*var),
                    expr.display_with(names.clone())
                );
            }
        }
        let _ = write!(out, " cost {}", t.cost.static_cycles);
        if !t.cost.accesses.is_empty() {
            out.push_str(" access");
            for b in &t.cost.accesses {
                let _ = write!(out, " {}", b.0);
            }
        }
        out.push('\n');
    }
    for (h, n) in ts.loop_bounds() {
        let _ = writeln!(out, "loopbound {} {}", ts.point_name(*h), n);
    }
    out
}
