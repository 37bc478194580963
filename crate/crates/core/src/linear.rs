//! Linear integer expressions and comparisons shared by the program
//! representation and the constraint solver.

use std::collections::BTreeMap;
use std::fmt;

/// A variable in a linear system. Program variables occupy the low indices;
/// symbolic execution allocates input symbols above them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub u32);

impl VarId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// `Σ cᵢ·xᵢ + constant` with integer coefficients. Zero coefficients are
/// never stored, so structural equality is semantic equality.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct LinExpr {
    terms: BTreeMap<VarId, i64>,
    constant: i64,
}

impl LinExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(k: i64) -> Self {
        LinExpr {
            terms: BTreeMap::new(),
            constant: k,
        }
    }

    pub fn var(v: VarId) -> Self {
        Self::term(v, 1)
    }

    pub fn term(v: VarId, coeff: i64) -> Self {
        let mut e = Self::zero();
        e.add_term(v, coeff);
        e
    }

    pub fn add_term(&mut self, v: VarId, coeff: i64) {
        let slot = self.terms.entry(v).or_insert(0);
        *slot += coeff;
        if *slot == 0 {
            self.terms.remove(&v);
        }
    }

    pub fn add_constant(&mut self, k: i64) {
        self.constant += k;
    }

    pub fn const_part(&self) -> i64 {
        self.constant
    }

    pub fn coeff(&self, v: VarId) -> i64 {
        self.terms.get(&v).copied().unwrap_or(0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (VarId, i64)> + '_ {
        self.terms.iter().map(|(v, c)| (*v, *c))
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.terms.keys().copied()
    }

    /// `self + factor·other`, or `None` on overflow.
    pub fn checked_add_scaled(&self, other: &LinExpr, factor: i64) -> Option<LinExpr> {
        let mut out = self.clone();
        for (v, c) in other.terms() {
            let add = c.checked_mul(factor)?;
            let slot = out.terms.entry(v).or_insert(0);
            *slot = slot.checked_add(add)?;
            if *slot == 0 {
                out.terms.remove(&v);
            }
        }
        out.constant = out.constant.checked_add(other.constant.checked_mul(factor)?)?;
        Some(out)
    }

    pub fn checked_sub(&self, other: &LinExpr) -> Option<LinExpr> {
        self.checked_add_scaled(other, -1)
    }

    pub fn checked_scale(&self, factor: i64) -> Option<LinExpr> {
        LinExpr::zero().checked_add_scaled(self, factor)
    }

    /// Replaces every variable `v` by `subst(v)` (variables mapped to `None`
    /// are kept).
    pub fn substitute<F>(&self, mut subst: F) -> Option<LinExpr>
    where
        F: FnMut(VarId) -> Option<LinExpr>,
    {
        let mut out = LinExpr::constant(self.constant);
        for (v, c) in self.terms() {
            match subst(v) {
                Some(repl) => out = out.checked_add_scaled(&repl, c)?,
                None => {
                    let mut single = LinExpr::zero();
                    single.add_term(v, c);
                    out = out.checked_add_scaled(&single, 1)?;
                }
            }
        }
        Some(out)
    }

    /// Evaluates under a total assignment.
    pub fn eval<F>(&self, mut value: F) -> Option<i64>
    where
        F: FnMut(VarId) -> i64,
    {
        let mut acc = self.constant;
        for (v, c) in self.terms() {
            acc = acc.checked_add(c.checked_mul(value(v))?)?;
        }
        Some(acc)
    }

    /// Renders with caller-supplied variable names, e.g. `2*x - y + 3`.
    pub fn display_with<'a, F>(&'a self, names: F) -> impl fmt::Display + 'a
    where
        F: Fn(VarId) -> String + 'a,
    {
        ExprDisplay { expr: self, names }
    }
}

struct ExprDisplay<'a, F> {
    expr: &'a LinExpr,
    names: F,
}

impl<F: Fn(VarId) -> String> fmt::Display for ExprDisplay<'_, F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (v, c) in self.expr.terms() {
            let name = (self.names)(v);
            let mag = c.unsigned_abs();
            if first {
                if c < 0 {
                    write!(f, "-")?;
                }
            } else if c < 0 {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            if mag == 1 {
                write!(f, "{name}")?;
            } else {
                write!(f, "{mag}*{name}")?;
            }
            first = false;
        }
        let k = self.expr.constant;
        if first {
            write!(f, "{k}")?;
        } else if k < 0 {
            write!(f, " - {}", k.unsigned_abs())?;
        } else if k > 0 {
            write!(f, " + {k}")?;
        }
        Ok(())
    }
}

impl fmt::Display for LinExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.display_with(|v| format!("v{}", v.0)))
    }
}

/// Comparison operator of a guard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rel {
    Lt,
    Le,
    Eq,
    Ne,
    Ge,
    Gt,
}

impl Rel {
    pub fn negate(self) -> Rel {
        match self {
            Rel::Lt => Rel::Ge,
            Rel::Le => Rel::Gt,
            Rel::Eq => Rel::Ne,
            Rel::Ne => Rel::Eq,
            Rel::Ge => Rel::Lt,
            Rel::Gt => Rel::Le,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Rel::Lt => "<",
            Rel::Le => "<=",
            Rel::Eq => "=",
            Rel::Ne => "!=",
            Rel::Ge => ">=",
            Rel::Gt => ">",
        }
    }

    pub fn holds(self, lhs: i64, rhs: i64) -> bool {
        match self {
            Rel::Lt => lhs < rhs,
            Rel::Le => lhs <= rhs,
            Rel::Eq => lhs == rhs,
            Rel::Ne => lhs != rhs,
            Rel::Ge => lhs >= rhs,
            Rel::Gt => lhs > rhs,
        }
    }
}

/// `lhs ⋈ rhs` as written in a program.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Comparison {
    pub lhs: LinExpr,
    pub rel: Rel,
    pub rhs: LinExpr,
}

impl Comparison {
    pub fn new(lhs: LinExpr, rel: Rel, rhs: LinExpr) -> Self {
        Comparison { lhs, rel, rhs }
    }

    pub fn negated(&self) -> Comparison {
        Comparison {
            lhs: self.lhs.clone(),
            rel: self.rel.negate(),
            rhs: self.rhs.clone(),
        }
    }

    pub fn vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.lhs.vars().chain(self.rhs.vars())
    }

    pub fn holds<F>(&self, mut value: F) -> Option<bool>
    where
        F: FnMut(VarId) -> i64,
    {
        let l = self.lhs.eval(&mut value)?;
        let r = self.rhs.eval(&mut value)?;
        Some(self.rel.holds(l, r))
    }

    pub fn display_with<'a, F>(&'a self, names: F) -> impl fmt::Display + 'a
    where
        F: Fn(VarId) -> String + Clone + 'a,
    {
        CmpDisplay { cmp: self, names }
    }
}

struct CmpDisplay<'a, F> {
    cmp: &'a Comparison,
    names: F,
}

impl<F: Fn(VarId) -> String + Clone> fmt::Display for CmpDisplay<'_, F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {}",
            self.cmp.lhs.display_with(self.names.clone()),
            self.cmp.rel.symbol(),
            self.cmp.rhs.display_with(self.names.clone())
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> VarId {
        VarId(0)
    }
    fn y() -> VarId {
        VarId(1)
    }

    #[test]
    fn zero_coefficients_vanish() {
        let mut e = LinExpr::var(x());
        e.add_term(x(), -1);
        assert!(e.is_constant());
        assert_eq!(e, LinExpr::zero());
    }

    #[test]
    fn substitution_composes_terms() {
        // 2x + y + 1 with x := y - 3  =>  3y - 5
        let mut e = LinExpr::term(x(), 2);
        e.add_term(y(), 1);
        e.add_constant(1);
        let mut repl = LinExpr::var(y());
        repl.add_constant(-3);
        let out = e
            .substitute(|v| if v == x() { Some(repl.clone()) } else { None })
            .unwrap();
        assert_eq!(out.coeff(y()), 3);
        assert_eq!(out.const_part(), -5);
    }

    #[test]
    fn display_is_readable() {
        let mut e = LinExpr::term(x(), 2);
        e.add_term(y(), -1);
        e.add_constant(-4);
        let names = |v: VarId| if v == x() { "x".to_string() } else { "y".to_string() };
        assert_eq!(e.display_with(names).to_string(), "2*x - y - 4");
        assert_eq!(LinExpr::constant(-7).to_string(), "-7");
    }

    #[test]
    fn overflow_is_reported() {
        let e = LinExpr::term(x(), i64::MAX);
        assert!(e.checked_scale(2).is_none());
    }
}
