//! Linear integer constraint solving: satisfiability, entailment, deletion
//! cores, and projection.
//!
//! The decision procedure is Fourier–Motzkin elimination over the rationals
//! with integer bound tightening after every combination. Every derived row
//! is implied over the integers, so `Unsat` is always sound. `Sat` is only
//! reported with an integer model that has been checked against the input;
//! when back-substitution cannot find one the answer is `Unknown`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_integer::Integer;
use thiserror::Error;

use crate::linear::{Comparison, LinExpr, Rel, VarId};

/// Maximum number of `≠` case splits per satisfiability query.
pub const SPLIT_CAP: u32 = 16;
/// Maximum number of live rows during elimination.
pub const ROW_CAP: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolverError {
    #[error("solver resource limit exceeded ({0})")]
    ResourceLimit(&'static str),
    #[error("solver precondition violated: {0}")]
    Precondition(&'static str),
}

fn overflow() -> SolverError {
    SolverError::ResourceLimit("coefficient overflow")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Kind {
    Le,
    Eq,
    Ne,
}

/// `Σ cᵢ·xᵢ ⋈ bound` with `⋈ ∈ {≤, =, ≠}`, coefficients divided by their
/// gcd, and the first coefficient of `=`/`≠` rows positive. A constraint
/// without variables is either the canonical truth `0 ≤ 0` or the
/// canonical falsehood `0 ≤ -1`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Constraint {
    coeffs: Vec<(VarId, i64)>,
    kind: Kind,
    bound: i64,
}

impl Constraint {
    pub fn truth() -> Self {
        Constraint {
            coeffs: Vec::new(),
            kind: Kind::Le,
            bound: 0,
        }
    }

    pub fn falsity() -> Self {
        Constraint {
            coeffs: Vec::new(),
            kind: Kind::Le,
            bound: -1,
        }
    }

    /// Normalizes `expr ⋈ 0`.
    pub fn from_linear(expr: &LinExpr, rel: Rel) -> Result<Self, SolverError> {
        let coeffs: Vec<(VarId, i64)> = expr.terms().collect();
        let rhs = expr.const_part().checked_neg().ok_or_else(overflow)?;
        match rel {
            Rel::Le => Self::build(coeffs, Kind::Le, rhs),
            Rel::Lt => Self::build(coeffs, Kind::Le, rhs.checked_sub(1).ok_or_else(overflow)?),
            Rel::Ge => Self::build(negate_all(&coeffs)?, Kind::Le, rhs.checked_neg().ok_or_else(overflow)?),
            Rel::Gt => Self::build(
                negate_all(&coeffs)?,
                Kind::Le,
                rhs.checked_neg().and_then(|b| b.checked_sub(1)).ok_or_else(overflow)?,
            ),
            Rel::Eq => Self::build(coeffs, Kind::Eq, rhs),
            Rel::Ne => Self::build(coeffs, Kind::Ne, rhs),
        }
    }

    pub fn from_comparison(c: &Comparison) -> Result<Self, SolverError> {
        let d = c.lhs.checked_sub(&c.rhs).ok_or_else(overflow)?;
        Self::from_linear(&d, c.rel)
    }

    /// `Σ coeffs ≤ bound` etc. from raw parts.
    pub fn new(coeffs: impl IntoIterator<Item = (VarId, i64)>, kind: Kind, bound: i64) -> Result<Self, SolverError> {
        let mut e = LinExpr::zero();
        for (v, c) in coeffs {
            e.add_term(v, c);
        }
        Self::build(e.terms().collect(), kind, bound)
    }

    fn build(mut coeffs: Vec<(VarId, i64)>, kind: Kind, bound: i64) -> Result<Self, SolverError> {
        coeffs.retain(|(_, c)| *c != 0);
        coeffs.sort_by_key(|(v, _)| *v);
        if coeffs.is_empty() {
            let holds = match kind {
                Kind::Le => 0 <= bound,
                Kind::Eq => bound == 0,
                Kind::Ne => bound != 0,
            };
            return Ok(if holds { Self::truth() } else { Self::falsity() });
        }
        let mut bound = bound;
        if kind != Kind::Le && coeffs[0].1 < 0 {
            coeffs = negate_all(&coeffs)?;
            bound = bound.checked_neg().ok_or_else(overflow)?;
        }
        let g = coeffs.iter().fold(0i64, |g, (_, c)| g.gcd(c));
        if g > 1 {
            match kind {
                Kind::Le => bound = Integer::div_floor(&bound, &g),
                Kind::Eq if bound % g != 0 => return Ok(Self::falsity()),
                Kind::Ne if bound % g != 0 => return Ok(Self::truth()),
                _ => bound /= g,
            }
            for (_, c) in coeffs.iter_mut() {
                *c /= g;
            }
        }
        Ok(Constraint { coeffs, kind, bound })
    }

    pub fn coeffs(&self) -> &[(VarId, i64)] {
        &self.coeffs
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn bound(&self) -> i64 {
        self.bound
    }

    pub fn coeff(&self, v: VarId) -> i64 {
        self.coeffs.iter().find(|(w, _)| *w == v).map(|(_, c)| *c).unwrap_or(0)
    }

    pub fn is_true(&self) -> bool {
        self.coeffs.is_empty() && self.bound >= 0
    }

    pub fn is_false(&self) -> bool {
        self.coeffs.is_empty() && self.bound < 0
    }

    pub fn vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.coeffs.iter().map(|(v, _)| *v)
    }

    pub fn mentions(&self, v: VarId) -> bool {
        self.coeffs.iter().any(|(w, _)| *w == v)
    }

    /// `Σ cᵢ·xᵢ - bound` — the constraint reads `self.lhs() ⋈ 0`.
    pub fn lhs(&self) -> LinExpr {
        let mut e = LinExpr::constant(-self.bound);
        for &(v, c) in &self.coeffs {
            e.add_term(v, c);
        }
        e
    }

    fn rel(&self) -> Rel {
        match self.kind {
            Kind::Le => Rel::Le,
            Kind::Eq => Rel::Eq,
            Kind::Ne => Rel::Ne,
        }
    }

    /// The complement, which is again a single constraint.
    pub fn negate(&self) -> Result<Constraint, SolverError> {
        match self.kind {
            Kind::Le => {
                let b = self
                    .bound
                    .checked_neg()
                    .and_then(|b| b.checked_sub(1))
                    .ok_or_else(overflow)?;
                Self::build(negate_all(&self.coeffs)?, Kind::Le, b)
            }
            Kind::Eq => Self::build(self.coeffs.clone(), Kind::Ne, self.bound),
            Kind::Ne => Self::build(self.coeffs.clone(), Kind::Eq, self.bound),
        }
    }

    pub fn holds(&self, model: &BTreeMap<VarId, i64>) -> bool {
        let mut acc: i128 = 0;
        for &(v, c) in &self.coeffs {
            acc += c as i128 * model.get(&v).copied().unwrap_or(0) as i128;
        }
        let b = self.bound as i128;
        match self.kind {
            Kind::Le => acc <= b,
            Kind::Eq => acc == b,
            Kind::Ne => acc != b,
        }
    }

    /// Replaces variables by linear expressions and renormalizes.
    pub fn substitute<F>(&self, subst: F) -> Result<Constraint, SolverError>
    where
        F: FnMut(VarId) -> Option<LinExpr>,
    {
        let e = self.lhs().substitute(subst).ok_or_else(overflow)?;
        Self::from_linear(&e, self.rel())
    }

    pub fn display_with<'a, F>(&'a self, names: F) -> impl fmt::Display + 'a
    where
        F: Fn(VarId) -> String + 'a,
    {
        ConstraintDisplay { c: self, names }
    }
}

struct ConstraintDisplay<'a, F> {
    c: &'a Constraint,
    names: F,
}

impl<F: Fn(VarId) -> String> fmt::Display for ConstraintDisplay<'_, F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = self.c;
        if c.coeffs.is_empty() {
            return write!(f, "{}", if c.is_true() { "true" } else { "false" });
        }
        // Rows whose leading coefficient is negative read better flipped.
        let flip = c.kind == Kind::Le && c.coeffs[0].1 < 0;
        let sign = if flip { -1 } else { 1 };
        let mut e = LinExpr::zero();
        for &(v, k) in &c.coeffs {
            e.add_term(v, sign * k);
        }
        let op = match (c.kind, flip) {
            (Kind::Le, false) => "<=",
            (Kind::Le, true) => ">=",
            (Kind::Eq, _) => "=",
            (Kind::Ne, _) => "!=",
        };
        let lhs = e.display_with(&self.names).to_string();
        write!(f, "{lhs} {op} {}", sign as i128 * c.bound as i128)
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.display_with(|v| format!("v{}", v.0)))
    }
}

fn negate_all(coeffs: &[(VarId, i64)]) -> Result<Vec<(VarId, i64)>, SolverError> {
    coeffs
        .iter()
        .map(|&(v, c)| c.checked_neg().map(|n| (v, n)).ok_or_else(overflow))
        .collect()
}

/// An ordered conjunction of normalized constraints. Trivially true members
/// are dropped on insertion.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Conjunction {
    constraints: Vec<Constraint>,
}

impl Conjunction {
    pub fn truth() -> Self {
        Self::default()
    }

    pub fn falsity() -> Self {
        Conjunction {
            constraints: vec![Constraint::falsity()],
        }
    }

    pub fn from_constraints(cs: impl IntoIterator<Item = Constraint>) -> Self {
        let mut out = Self::truth();
        for c in cs {
            out.push(c);
        }
        out
    }

    pub fn from_comparisons<'a>(cs: impl IntoIterator<Item = &'a Comparison>) -> Result<Self, SolverError> {
        let mut out = Self::truth();
        for c in cs {
            out.push(Constraint::from_comparison(c)?);
        }
        Ok(out)
    }

    pub fn push(&mut self, c: Constraint) {
        if !c.is_true() && !self.constraints.contains(&c) {
            self.constraints.push(c);
        }
    }

    pub fn and(&self, other: &Conjunction) -> Conjunction {
        let mut out = self.clone();
        for c in &other.constraints {
            out.push(c.clone());
        }
        out
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn iter(&self) -> impl Iterator<Item = &Constraint> {
        self.constraints.iter()
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    /// Syntactically `true`.
    pub fn is_true(&self) -> bool {
        self.constraints.is_empty()
    }

    /// Contains a constant falsehood.
    pub fn is_trivially_false(&self) -> bool {
        self.constraints.iter().any(Constraint::is_false)
    }

    pub fn vars(&self) -> BTreeSet<VarId> {
        self.constraints.iter().flat_map(|c| c.vars()).collect()
    }

    pub fn holds(&self, model: &BTreeMap<VarId, i64>) -> bool {
        self.constraints.iter().all(|c| c.holds(model))
    }

    pub fn substitute<F>(&self, mut subst: F) -> Result<Conjunction, SolverError>
    where
        F: FnMut(VarId) -> Option<LinExpr>,
    {
        let mut out = Self::truth();
        for c in &self.constraints {
            out.push(c.substitute(&mut subst)?);
        }
        Ok(out)
    }

    pub fn display_with<'a, F>(&'a self, names: F) -> impl fmt::Display + 'a
    where
        F: Fn(VarId) -> String + 'a,
    {
        ConjDisplay { c: self, names }
    }
}

struct ConjDisplay<'a, F> {
    c: &'a Conjunction,
    names: F,
}

impl<F: Fn(VarId) -> String> fmt::Display for ConjDisplay<'_, F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.c.is_true() {
            return write!(f, "true");
        }
        for (i, c) in self.c.constraints.iter().enumerate() {
            if i > 0 {
                write!(f, " && ")?;
            }
            write!(f, "{}", c.display_with(&self.names))?;
        }
        Ok(())
    }
}

impl fmt::Display for Conjunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.display_with(|v| format!("v{}", v.0)))
    }
}

impl FromIterator<Constraint> for Conjunction {
    fn from_iter<I: IntoIterator<Item = Constraint>>(iter: I) -> Self {
        Self::from_constraints(iter)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Satisfiability {
    Sat,
    Unsat,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Entailment {
    Yes,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    /// An integer model satisfying every input constraint.
    Sat(BTreeMap<VarId, i64>),
    Unsat,
    Unknown,
}

/// Satisfiability with resource errors folded into `Unknown`.
pub fn is_satisfiable(c: &Conjunction) -> Satisfiability {
    match check(c) {
        Ok(Outcome::Sat(_)) => Satisfiability::Sat,
        Ok(Outcome::Unsat) => Satisfiability::Unsat,
        Ok(Outcome::Unknown) | Err(_) => Satisfiability::Unknown,
    }
}

/// Full satisfiability check returning a verified model when one is found.
pub fn check(c: &Conjunction) -> Result<Outcome, SolverError> {
    let mut splits = SPLIT_CAP;
    decide(c.constraints.clone(), &mut splits)
}

fn decide(cs: Vec<Constraint>, splits: &mut u32) -> Result<Outcome, SolverError> {
    if cs.iter().any(Constraint::is_false) {
        return Ok(Outcome::Unsat);
    }
    let (nes, base): (Vec<Constraint>, Vec<Constraint>) = cs.iter().cloned().partition(|c| c.kind == Kind::Ne);
    let model = match solve_rows(&base)? {
        Solved::Unsat => return Ok(Outcome::Unsat),
        Solved::NoIntegerModel => return Ok(Outcome::Unknown),
        Solved::Model(m) => m,
    };
    let Some(violated) = nes.iter().find(|c| !c.holds(&model)) else {
        if cs.iter().all(|c| c.holds(&model)) {
            return Ok(Outcome::Sat(model));
        }
        return Ok(Outcome::Unknown);
    };
    if *splits == 0 {
        return Ok(Outcome::Unknown);
    }
    *splits -= 1;
    // Σ ≠ b  ⇔  Σ ≤ b-1  ∨  Σ ≥ b+1
    let below = Constraint::build(
        violated.coeffs.clone(),
        Kind::Le,
        violated.bound.checked_sub(1).ok_or_else(overflow)?,
    )?;
    let above = Constraint::build(
        negate_all(&violated.coeffs)?,
        Kind::Le,
        violated
            .bound
            .checked_add(1)
            .and_then(|b| b.checked_neg())
            .ok_or_else(overflow)?,
    )?;
    let rest: Vec<Constraint> = cs.iter().filter(|c| *c != violated).cloned().collect();
    let mut all_unsat = true;
    for extra in [below, above] {
        let mut branch = rest.clone();
        branch.push(extra);
        match decide(branch, splits)? {
            Outcome::Sat(m) => {
                // Models of a branch satisfy the dropped disequality.
                debug_assert!(cs.iter().all(|c| c.holds(&m)));
                return Ok(Outcome::Sat(m));
            }
            Outcome::Unsat => {}
            Outcome::Unknown => all_unsat = false,
        }
    }
    Ok(if all_unsat { Outcome::Unsat } else { Outcome::Unknown })
}

/// Internal row `Σ coeffs ≤ bound` (or `= bound`).
#[derive(Debug, Clone, PartialEq, Eq)]
struct Row {
    coeffs: Vec<(VarId, i64)>,
    bound: i64,
}

impl Row {
    fn coeff(&self, v: VarId) -> i64 {
        self.coeffs.iter().find(|(w, _)| *w == v).map(|(_, c)| *c).unwrap_or(0)
    }
}

enum Solved {
    Unsat,
    NoIntegerModel,
    Model(BTreeMap<VarId, i64>),
}

/// An eliminated variable and what is needed to give it a value afterwards.
enum Stage {
    Defined {
        var: VarId,
        coeff: i64,
        rest: Vec<(VarId, i64)>,
        bound: i64,
    },
    Bounded {
        var: VarId,
        rows: Vec<Row>,
    },
}

/// Working set of `≤` rows (keyed by coefficient vector, tightest bound kept)
/// and equalities.
struct System {
    les: BTreeMap<Vec<(VarId, i64)>, i64>,
    eqs: Vec<Row>,
}

/// Signals an inconsistency derived during elimination.
struct Contradiction;

impl System {
    fn new() -> Self {
        System {
            les: BTreeMap::new(),
            eqs: Vec::new(),
        }
    }

    fn add(&mut self, c: &Constraint) -> Result<Result<(), Contradiction>, SolverError> {
        match c.kind {
            Kind::Le => self.add_le(c.coeffs.clone(), c.bound),
            Kind::Eq => self.add_eq(c.coeffs.clone(), c.bound),
            Kind::Ne => Ok(Ok(())),
        }
    }

    fn add_le(&mut self, coeffs: Vec<(VarId, i64)>, bound: i64) -> Result<Result<(), Contradiction>, SolverError> {
        let c = Constraint::build(coeffs, Kind::Le, bound)?;
        if c.is_false() {
            return Ok(Err(Contradiction));
        }
        if c.is_true() {
            return Ok(Ok(()));
        }
        let slot = self.les.entry(c.coeffs).or_insert(c.bound);
        *slot = (*slot).min(c.bound);
        if self.les.len() > ROW_CAP {
            return Err(SolverError::ResourceLimit("too many rows"));
        }
        Ok(Ok(()))
    }

    fn add_eq(&mut self, coeffs: Vec<(VarId, i64)>, bound: i64) -> Result<Result<(), Contradiction>, SolverError> {
        let c = Constraint::build(coeffs, Kind::Eq, bound)?;
        if c.is_false() {
            return Ok(Err(Contradiction));
        }
        if !c.is_true() {
            let row = Row {
                coeffs: c.coeffs,
                bound: c.bound,
            };
            if !self.eqs.contains(&row) {
                self.eqs.push(row);
            }
        }
        Ok(Ok(()))
    }

    fn vars(&self) -> BTreeSet<VarId> {
        self.les
            .keys()
            .flat_map(|k| k.iter().map(|(v, _)| *v))
            .chain(self.eqs.iter().flat_map(|r| r.coeffs.iter().map(|(v, _)| *v)))
            .collect()
    }

    /// Uses an equality with a unit coefficient on an eligible variable to
    /// substitute that variable away everywhere.
    fn eliminate_unit_equality(
        &mut self,
        eligible: &dyn Fn(VarId) -> bool,
    ) -> Result<Result<Option<Stage>, Contradiction>, SolverError> {
        let found = self.eqs.iter().enumerate().find_map(|(i, r)| {
            r.coeffs
                .iter()
                .find(|(v, c)| c.abs() == 1 && eligible(*v))
                .map(|&(v, c)| (i, v, c))
        });
        let Some((i, var, coeff)) = found else {
            return Ok(Ok(None));
        };
        let row = self.eqs.remove(i);
        // coeff·var + rest = bound  ⇒  var = coeff·(bound - rest)
        let rest: Vec<(VarId, i64)> = row.coeffs.iter().copied().filter(|(v, _)| *v != var).collect();
        let mut def = LinExpr::constant(row.bound.checked_mul(coeff).ok_or_else(overflow)?);
        for &(v, c) in &rest {
            def.add_term(v, c.checked_mul(-coeff).ok_or_else(overflow)?);
        }
        let subst = |v: VarId| (v == var).then(|| def.clone());
        let les = std::mem::take(&mut self.les);
        let eqs = std::mem::take(&mut self.eqs);
        for (coeffs, bound) in les {
            let c = Constraint::build(coeffs, Kind::Le, bound)?.substitute(subst)?;
            if let Err(e) = self.add(&c)? {
                return Ok(Err(e));
            }
        }
        for r in eqs {
            let c = Constraint::build(r.coeffs, Kind::Eq, r.bound)?.substitute(subst)?;
            if let Err(e) = self.add(&c)? {
                return Ok(Err(e));
            }
        }
        Ok(Ok(Some(Stage::Defined {
            var,
            coeff,
            rest,
            bound: row.bound,
        })))
    }

    /// Replaces the equalities mentioning an eligible variable by two
    /// inequalities each.
    fn split_equalities(&mut self, eligible: &dyn Fn(VarId) -> bool) -> Result<Result<(), Contradiction>, SolverError> {
        let eqs = std::mem::take(&mut self.eqs);
        for r in eqs {
            if r.coeffs.iter().any(|(v, _)| eligible(*v)) {
                if let Err(e) = self.add_le(r.coeffs.clone(), r.bound)? {
                    return Ok(Err(e));
                }
                let neg = negate_all(&r.coeffs)?;
                if let Err(e) = self.add_le(neg, r.bound.checked_neg().ok_or_else(overflow)?)? {
                    return Ok(Err(e));
                }
            } else {
                self.eqs.push(r);
            }
        }
        Ok(Ok(()))
    }

    /// Picks the eligible variable whose elimination creates the fewest rows.
    fn pick(&self, eligible: &dyn Fn(VarId) -> bool) -> Option<VarId> {
        let mut counts: BTreeMap<VarId, (i64, i64)> = BTreeMap::new();
        for k in self.les.keys() {
            for &(v, c) in k {
                if eligible(v) {
                    let e = counts.entry(v).or_insert((0, 0));
                    if c > 0 {
                        e.0 += 1;
                    } else {
                        e.1 += 1;
                    }
                }
            }
        }
        counts
            .into_iter()
            .min_by_key(|(v, (p, n))| (p * n - p - n, *v))
            .map(|(v, _)| v)
    }

    fn eliminate(&mut self, var: VarId) -> Result<Result<Stage, Contradiction>, SolverError> {
        let (with, without): (BTreeMap<_, _>, BTreeMap<_, _>) = std::mem::take(&mut self.les)
            .into_iter()
            .partition(|(k, _)| k.iter().any(|(v, _)| *v == var));
        self.les = without;
        let rows: Vec<Row> = with.into_iter().map(|(coeffs, bound)| Row { coeffs, bound }).collect();
        let (ups, lows): (Vec<&Row>, Vec<&Row>) = rows.iter().partition(|r| r.coeff(var) > 0);
        for up in &ups {
            for low in &lows {
                let a = up.coeff(var);
                let b = -low.coeff(var);
                let mut e = LinExpr::zero();
                for &(v, c) in &up.coeffs {
                    e.add_term(v, c.checked_mul(b).ok_or_else(overflow)?);
                }
                let combined = e
                    .checked_add_scaled(&coeffs_expr(&low.coeffs), a)
                    .ok_or_else(overflow)?;
                debug_assert_eq!(combined.coeff(var), 0);
                let bound = up
                    .bound
                    .checked_mul(b)
                    .and_then(|x| low.bound.checked_mul(a).and_then(|y| x.checked_add(y)))
                    .ok_or_else(overflow)?;
                if let Err(e) = self.add_le(combined.terms().collect(), bound)? {
                    return Ok(Err(e));
                }
            }
        }
        Ok(Ok(Stage::Bounded { var, rows }))
    }

    fn into_constraints(self) -> Vec<Constraint> {
        let mut out = Vec::new();
        for r in self.eqs {
            out.push(Constraint {
                coeffs: r.coeffs,
                kind: Kind::Eq,
                bound: r.bound,
            });
        }
        let mut used = BTreeSet::new();
        for (k, &b) in &self.les {
            if used.contains(k) {
                continue;
            }
            // Opposite pair  Σ ≤ b  and  -Σ ≤ -b  is an equality.
            if let Ok(neg) = negate_all(k) {
                if self.les.get(&neg) == b.checked_neg().as_ref() && k[0].1 > 0 {
                    used.insert(neg);
                    out.push(Constraint {
                        coeffs: k.clone(),
                        kind: Kind::Eq,
                        bound: b,
                    });
                    continue;
                }
                if self.les.get(&neg) == b.checked_neg().as_ref() {
                    // handled when the positive-leading twin is visited
                    continue;
                }
            }
            out.push(Constraint {
                coeffs: k.clone(),
                kind: Kind::Le,
                bound: b,
            });
        }
        out
    }
}

fn coeffs_expr(coeffs: &[(VarId, i64)]) -> LinExpr {
    let mut e = LinExpr::zero();
    for &(v, c) in coeffs {
        e.add_term(v, c);
    }
    e
}

fn solve_rows(cs: &[Constraint]) -> Result<Solved, SolverError> {
    let mut sys = System::new();
    for c in cs {
        if sys.add(c)?.is_err() {
            return Ok(Solved::Unsat);
        }
    }
    let all_vars: BTreeSet<VarId> = cs.iter().flat_map(|c| c.vars()).collect();
    let any = |_: VarId| true;
    let mut stages = Vec::new();
    loop {
        match sys.eliminate_unit_equality(&any)? {
            Err(Contradiction) => return Ok(Solved::Unsat),
            Ok(Some(stage)) => stages.push(stage),
            Ok(None) => break,
        }
    }
    if sys.split_equalities(&any)?.is_err() {
        return Ok(Solved::Unsat);
    }
    while let Some(v) = sys.pick(&any) {
        match sys.eliminate(v)? {
            Err(Contradiction) => return Ok(Solved::Unsat),
            Ok(stage) => stages.push(stage),
        }
    }
    debug_assert!(sys.vars().is_empty());

    let mut model: BTreeMap<VarId, i64> = all_vars.iter().map(|v| (*v, 0)).collect();
    for stage in stages.iter().rev() {
        match stage {
            Stage::Bounded { var, rows } => {
                let mut lo: Option<i128> = None;
                let mut hi: Option<i128> = None;
                for r in rows {
                    let a = r.coeff(*var) as i128;
                    let rest: i128 = r
                        .coeffs
                        .iter()
                        .filter(|(v, _)| v != var)
                        .map(|(v, c)| *c as i128 * model[v] as i128)
                        .sum();
                    let rhs = r.bound as i128 - rest;
                    if a > 0 {
                        let ub = Integer::div_floor(&rhs, &a);
                        hi = Some(hi.map_or(ub, |h| h.min(ub)));
                    } else {
                        let lb = Integer::div_ceil(&rhs, &a);
                        lo = Some(lo.map_or(lb, |l| l.max(lb)));
                    }
                }
                let value = match (lo, hi) {
                    (Some(l), Some(h)) if l > h => return Ok(Solved::NoIntegerModel),
                    (l, h) => {
                        let mut x = 0i128;
                        if let Some(l) = l {
                            x = x.max(l);
                        }
                        if let Some(h) = h {
                            x = x.min(h);
                        }
                        x
                    }
                };
                let value = i64::try_from(value).map_err(|_| overflow())?;
                model.insert(*var, value);
            }
            Stage::Defined {
                var,
                coeff,
                rest,
                bound,
            } => {
                let r: i128 = rest.iter().map(|(v, c)| *c as i128 * model[v] as i128).sum();
                let value = (*coeff as i128) * (*bound as i128 - r);
                let value = i64::try_from(value).map_err(|_| overflow())?;
                model.insert(*var, value);
            }
        }
    }
    Ok(Solved::Model(model))
}

/// `a ⊨ b`, decided constraint by constraint: `a ∧ ¬β` must be Unsat for
/// every `β ∈ b`.
pub fn entails(a: &Conjunction, b: &Conjunction) -> Entailment {
    if is_satisfiable(a) == Satisfiability::Unsat {
        return Entailment::Yes;
    }
    for beta in b.iter() {
        let Ok(neg) = beta.negate() else {
            return Entailment::Unknown;
        };
        let mut q = a.clone();
        q.push(neg);
        if is_satisfiable(&q) != Satisfiability::Unsat {
            return Entailment::Unknown;
        }
    }
    Entailment::Yes
}

/// Deletion-minimal unsatisfiable subset, visiting constraints in order.
pub fn unsat_core(c: &Conjunction) -> Result<Conjunction, SolverError> {
    if is_satisfiable(c) != Satisfiability::Unsat {
        return Err(SolverError::Precondition(
            "unsat_core of a conjunction not proven unsat",
        ));
    }
    let mut core: Vec<Constraint> = c.constraints.clone();
    let mut i = 0;
    while i < core.len() {
        let mut without = core.clone();
        without.remove(i);
        let trial = Conjunction { constraints: without };
        if is_satisfiable(&trial) == Satisfiability::Unsat {
            core = trial.constraints;
        } else {
            i += 1;
        }
    }
    Ok(Conjunction { constraints: core })
}

/// Existentially eliminates every variable outside `keep`. The result is
/// implied by `c`; `≠` rows on eliminated variables are dropped, which only
/// weakens it. Returns `false` when a contradiction surfaces.
pub fn project(c: &Conjunction, keep: &BTreeSet<VarId>) -> Result<Conjunction, SolverError> {
    let mut sys = System::new();
    let mut nes = Vec::new();
    for k in c.iter() {
        if k.kind == Kind::Ne {
            nes.push(k.clone());
        } else if sys.add(k)?.is_err() {
            return Ok(Conjunction::falsity());
        }
    }
    let drop = |v: VarId| !keep.contains(&v);
    loop {
        match sys.eliminate_unit_equality(&drop)? {
            Err(Contradiction) => return Ok(Conjunction::falsity()),
            Ok(Some(Stage::Defined {
                var,
                coeff,
                rest,
                bound,
            })) => {
                let mut def = LinExpr::constant(bound.checked_mul(coeff).ok_or_else(overflow)?);
                for &(v, c) in &rest {
                    def.add_term(v, c.checked_mul(-coeff).ok_or_else(overflow)?);
                }
                let mut next = Vec::new();
                for n in &nes {
                    let s = n.substitute(|v| (v == var).then(|| def.clone()))?;
                    if s.is_false() {
                        return Ok(Conjunction::falsity());
                    }
                    next.push(s);
                }
                nes = next;
            }
            Ok(Some(Stage::Bounded { .. })) => unreachable!(),
            Ok(None) => break,
        }
    }
    if sys.split_equalities(&drop)?.is_err() {
        return Ok(Conjunction::falsity());
    }
    while let Some(v) = sys.pick(&drop) {
        if sys.eliminate(v)?.is_err() {
            return Ok(Conjunction::falsity());
        }
    }
    let mut out: Conjunction = sys.into_constraints().into_iter().collect();
    for n in nes {
        if n.vars().all(|v| keep.contains(&v)) {
            out.push(n);
        }
    }
    Ok(out)
}

/// Integer bounds `(lo, hi)` of `v` implied by `c`, `None` if `c` was found
/// contradictory.
#[allow(clippy::type_complexity)]
pub fn bounds(c: &Conjunction, v: VarId) -> Result<Option<(Option<i64>, Option<i64>)>, SolverError> {
    let p = project(c, &BTreeSet::from([v]))?;
    if p.is_trivially_false() {
        return Ok(None);
    }
    let mut lo: Option<i64> = None;
    let mut hi: Option<i64> = None;
    for k in p.iter() {
        let a = k.coeff(v);
        match k.kind {
            Kind::Le if a > 0 => hi = Some(hi.map_or(k.bound, |h| h.min(k.bound))),
            Kind::Le if a < 0 => {
                let l = -k.bound;
                lo = Some(lo.map_or(l, |x| x.max(l)));
            }
            Kind::Eq => {
                lo = Some(k.bound);
                hi = Some(k.bound);
            }
            _ => {}
        }
    }
    if let (Some(l), Some(h)) = (lo, hi) {
        if l > h {
            return Ok(None);
        }
    }
    Ok(Some((lo, hi)))
}

#[cfg(test)]
mod tests {
    use super::*;

    const X: VarId = VarId(0);
    const Y: VarId = VarId(1);

    fn cmp(lhs: LinExpr, rel: Rel, k: i64) -> Constraint {
        Constraint::from_comparison(&Comparison::new(lhs, rel, LinExpr::constant(k))).unwrap()
    }

    fn x(rel: Rel, k: i64) -> Constraint {
        cmp(LinExpr::var(X), rel, k)
    }

    fn conj(cs: Vec<Constraint>) -> Conjunction {
        Conjunction::from_constraints(cs)
    }

    #[test]
    fn normalization_tightens_and_divides() {
        // 2x < 5  ⇒  x ≤ 2
        let c = cmp(LinExpr::term(X, 2), Rel::Lt, 5);
        assert_eq!((c.coeffs(), c.kind(), c.bound()), (&[(X, 1)][..], Kind::Le, 2));
        // 2x = 3 is false, 2x != 3 is true
        assert!(cmp(LinExpr::term(X, 2), Rel::Eq, 3).is_false());
        assert!(cmp(LinExpr::term(X, 2), Rel::Ne, 3).is_true());
        // -x = 4  ⇒  x = -4
        let c = cmp(LinExpr::term(X, -1), Rel::Eq, 4);
        assert_eq!((c.coeffs(), c.bound()), (&[(X, 1)][..], -4));
        assert!(cmp(LinExpr::zero(), Rel::Ge, 1).is_false());
    }

    #[test]
    fn direct_contradiction_and_empty() {
        assert_eq!(
            is_satisfiable(&conj(vec![x(Rel::Ge, 5), x(Rel::Lt, 5)])),
            Satisfiability::Unsat
        );
        assert_eq!(is_satisfiable(&Conjunction::truth()), Satisfiability::Sat);
        assert_eq!(
            is_satisfiable(&conj(vec![x(Rel::Ge, 5), x(Rel::Ge, 5), x(Rel::Lt, 0)])),
            Satisfiability::Unsat
        );
    }

    #[test]
    fn models_are_verified() {
        let mut e = LinExpr::var(X);
        e.add_term(Y, -1);
        let c = conj(vec![cmp(e, Rel::Ge, 5), x(Rel::Le, 3)]);
        match check(&c).unwrap() {
            Outcome::Sat(m) => assert!(c.holds(&m)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn integer_gap_is_detected_by_tightening() {
        // 1 ≤ 2x ≤ 1 has a rational but no integer solution
        let c = conj(vec![
            cmp(LinExpr::term(X, 2), Rel::Ge, 1),
            cmp(LinExpr::term(X, 2), Rel::Le, 1),
        ]);
        assert_eq!(is_satisfiable(&c), Satisfiability::Unsat);
    }

    #[test]
    fn disequality_case_split() {
        // 0 ≤ x ≤ 1, x ≠ 0, x ≠ 1
        let c = conj(vec![x(Rel::Ge, 0), x(Rel::Le, 1), x(Rel::Ne, 0), x(Rel::Ne, 1)]);
        assert_eq!(is_satisfiable(&c), Satisfiability::Unsat);
        let c = conj(vec![x(Rel::Ge, 0), x(Rel::Le, 2), x(Rel::Ne, 0), x(Rel::Ne, 1)]);
        assert_eq!(is_satisfiable(&c), Satisfiability::Sat);
    }

    #[test]
    fn split_cap_gives_unknown() {
        // x ∈ [0, 40] with forty disequalities needs more than 16 splits
        let mut cs = vec![x(Rel::Ge, 0), x(Rel::Le, 40)];
        for k in 0..40 {
            cs.push(x(Rel::Ne, k));
        }
        assert_eq!(is_satisfiable(&conj(cs)), Satisfiability::Unknown);
    }

    #[test]
    fn entailment_examples() {
        assert_eq!(
            entails(&conj(vec![x(Rel::Ge, 5)]), &conj(vec![x(Rel::Ge, 3)])),
            Entailment::Yes
        );
        assert_eq!(
            entails(&conj(vec![x(Rel::Ge, 3)]), &conj(vec![x(Rel::Ge, 5)])),
            Entailment::Unknown
        );
        let mut d = LinExpr::var(Y);
        d.add_term(X, -1);
        let a = conj(vec![x(Rel::Ge, 5), cmp(d, Rel::Eq, 0)]);
        assert_eq!(
            entails(&a, &conj(vec![cmp(LinExpr::var(Y), Rel::Ge, 5)])),
            Entailment::Yes
        );
    }

    #[test]
    fn core_examples() {
        let y_le = cmp(LinExpr::var(Y), Rel::Le, 2);
        let core = unsat_core(&conj(vec![x(Rel::Ge, 5), y_le, x(Rel::Lt, 5)])).unwrap();
        assert_eq!(core, conj(vec![x(Rel::Ge, 5), x(Rel::Lt, 5)]));

        let core = unsat_core(&conj(vec![x(Rel::Lt, 0), x(Rel::Ge, 5), x(Rel::Ge, 3)])).unwrap();
        assert_eq!(core, conj(vec![x(Rel::Lt, 0), x(Rel::Ge, 3)]));

        let f = conj(vec![cmp(LinExpr::zero(), Rel::Ge, 1)]);
        assert_eq!(unsat_core(&f).unwrap(), f);

        assert!(matches!(
            unsat_core(&conj(vec![x(Rel::Ge, 0)])),
            Err(SolverError::Precondition(_))
        ));
    }

    #[test]
    fn projection_eliminates_by_substitution() {
        // x' = X0 + 1, X0 ≥ 0  ⇒  x' ≥ 1
        let mut def = LinExpr::var(X);
        def.add_term(Y, -1);
        def.add_constant(-1);
        let c = conj(vec![
            Constraint::from_linear(&def, Rel::Eq).unwrap(),
            cmp(LinExpr::var(Y), Rel::Ge, 0),
        ]);
        let p = project(&c, &BTreeSet::from([X])).unwrap();
        assert_eq!(p, conj(vec![x(Rel::Ge, 1)]));
        assert_eq!(bounds(&c, X).unwrap(), Some((Some(1), None)));
    }

    #[test]
    fn projection_recovers_equalities() {
        let c = conj(vec![x(Rel::Ge, 3), x(Rel::Le, 3)]);
        let p = project(&c, &BTreeSet::from([X])).unwrap();
        assert_eq!(p, conj(vec![x(Rel::Eq, 3)]));
        let names = |_: VarId| "x".to_string();
        assert_eq!(p.display_with(names).to_string(), "x = 3");
    }

    #[test]
    fn display_flips_negative_rows() {
        let mut e = LinExpr::var(X);
        e.add_term(Y, -1);
        let c = cmp(e, Rel::Ge, 5);
        let names = |v: VarId| if v == X { "x".to_string() } else { "y".to_string() };
        assert_eq!(c.display_with(names).to_string(), "x - y >= 5");
    }
}
