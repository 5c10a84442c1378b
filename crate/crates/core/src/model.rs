//! Parametric models: base map `f(x,p)`, inequality constraints
//! `phi_i(x,p) <= 0`, and an optional reference triple.
//!
//! Model file format (UTF-8, `#` starts a comment):
//!
//! ```text
//! dims n=3 d=2
//! potential = x3 + (1/4 + p2)*x1 + p1*x2 + x3^2 - x1*x2
//! constraint x1 - x3 - p1 <= 0
//! reference x=(0,0,0) p=(0,0) v=(0,0,0)
//! ```
//!
//! Either `potential = <expr>` (then `f` is its x-gradient) or
//! `f = (<expr>, ..., <expr>)` with exactly `n` components.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expr::{Expr, ExprParser, Var};
use crate::scalar::{rational_to_f64, rational_to_string, Rational, Scalar};

/// Absolute feasibility tolerance for reference points.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub enum BaseMap {
    Components(Vec<Expr>),
    Potential(Expr),
}

#[derive(Clone, Debug)]
pub struct Constraint {
    pub expr: Expr,
    /// `grad_x[j] = d phi / d x_j`
    pub grad_x: Vec<Expr>,
    pub hess_x: Vec<Vec<Expr>>,
    /// Affine in x for every fixed p (symbolic Hessian is identically zero).
    pub affine_in_x: bool,
    /// The x-gradient does not depend on (x, p).
    pub constant_gradient: bool,
}

#[derive(Clone, Debug)]
pub struct ParametricModel {
    n: usize,
    d: usize,
    base: BaseMap,
    f: Vec<Expr>,
    jac_f: Vec<Vec<Expr>>,
    constraints: Vec<Constraint>,
    reference: Option<ReferenceTriple>,
}

/// A point `(x, p, v)` on the graph of the solution map.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceTriple {
    pub x: Vec<Rational>,
    pub p: Vec<Rational>,
    pub v: Vec<Rational>,
    /// `v - f(x, p)`, recomputed from the model.
    pub v_hat: Vec<Rational>,
}

impl ReferenceTriple {
    pub fn x_f64(&self) -> DVector<f64> {
        to_dvector(&self.x)
    }

    pub fn p_f64(&self) -> DVector<f64> {
        to_dvector(&self.p)
    }

    pub fn v_f64(&self) -> DVector<f64> {
        to_dvector(&self.v)
    }

    pub fn v_hat_f64(&self) -> DVector<f64> {
        to_dvector(&self.v_hat)
    }
}

fn to_dvector(v: &[Rational]) -> DVector<f64> {
    DVector::from_iterator(v.len(), v.iter().map(rational_to_f64))
}

/// Everything second-order checks need at one point.
#[derive(Clone, Debug)]
pub struct EvalBundle<T> {
    pub f: Vec<T>,
    /// `jac_f[i][j] = d f_i / d x_j`
    pub jac_f: Vec<Vec<T>>,
    pub phi: Vec<T>,
    pub grad_phi: Vec<Vec<T>>,
    pub hess_phi: Vec<Vec<Vec<T>>>,
}

impl EvalBundle<f64> {
    pub fn jacobian(&self) -> DMatrix<f64> {
        let n = self.f.len();
        DMatrix::from_fn(n, n, |i, j| self.jac_f[i][j])
    }

    pub fn constraint_hessian(&self, i: usize) -> DMatrix<f64> {
        let n = self.f.len();
        DMatrix::from_fn(n, n, |r, c| self.hess_phi[i][r][c])
    }

    /// `grad_x L(x,p,lambda) = jac_f + sum_i lambda_i hess phi_i`.
    pub fn lagrangian_jacobian(&self, lambda: &[f64]) -> DMatrix<f64> {
        let mut h = self.jacobian();
        for (i, &li) in lambda.iter().enumerate() {
            if li != 0.0 {
                h += self.constraint_hessian(i) * li;
            }
        }
        h
    }
}

impl ParametricModel {
    pub fn new(n: usize, d: usize, base: BaseMap, constraints: Vec<Expr>) -> Result<Self> {
        let xs: Vec<Var> = (0..n).map(Var::X).collect();
        let f = match &base {
            BaseMap::Components(c) => {
                if c.len() != n {
                    return Err(Error::Dimension(format!("f has {} components but n = {n}", c.len())));
                }
                c.clone()
            }
            BaseMap::Potential(e) => xs.iter().map(|&v| e.differentiate(v)).collect(),
        };
        let jac_f = f
            .iter()
            .map(|fi| xs.iter().map(|&v| fi.differentiate(v)).collect())
            .collect();
        let constraints = constraints
            .into_iter()
            .map(|expr| {
                let grad_x: Vec<Expr> = xs.iter().map(|&v| expr.differentiate(v)).collect();
                let hess_x: Vec<Vec<Expr>> = grad_x
                    .iter()
                    .map(|g| xs.iter().map(|&v| g.differentiate(v)).collect())
                    .collect();
                let affine_in_x = hess_x.iter().flatten().all(Expr::is_identically_zero);
                let constant_gradient = grad_x.iter().all(Expr::is_constant);
                Constraint {
                    expr,
                    grad_x,
                    hess_x,
                    affine_in_x,
                    constant_gradient,
                }
            })
            .collect();
        Ok(ParametricModel {
            n,
            d,
            base,
            f,
            jac_f,
            constraints,
            reference: None,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.constraints.len()
    }

    pub fn base(&self) -> &BaseMap {
        &self.base
    }

    pub fn f_exprs(&self) -> &[Expr] {
        &self.f
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn reference(&self) -> Option<&ReferenceTriple> {
        self.reference.as_ref()
    }

    pub fn all_affine_in_x(&self) -> bool {
        self.constraints.iter().all(|c| c.affine_in_x)
    }

    /// Constraints whose x-gradients are constant and whose value does not
    /// depend on p: the feasible set is a fixed polyhedron.
    pub fn parameter_free_polyhedron(&self) -> bool {
        self.constraints.iter().all(|c| {
            let mut vars = Vec::new();
            c.expr.visit_vars(&mut vars);
            c.constant_gradient && vars.iter().all(|v| matches!(v, Var::X(_)))
        })
    }

    /// `f` affine in x for every fixed p.
    pub fn base_affine_in_x(&self) -> bool {
        self.jac_f.iter().flatten().all(Expr::is_constant_in_x)
    }

    fn check_dims<T>(&self, x: &[T], p: &[T]) -> Result<()> {
        if x.len() != self.n || p.len() != self.d {
            return Err(Error::Dimension(format!(
                "expected x in R^{} and p in R^{}, got {} and {}",
                self.n,
                self.d,
                x.len(),
                p.len()
            )));
        }
        Ok(())
    }

    pub fn eval_f<T: Scalar>(&self, x: &[T], p: &[T]) -> Result<Vec<T>> {
        self.check_dims(x, p)?;
        self.f.iter().map(|e| e.eval(x, p)).collect()
    }

    pub fn eval_jac_f<T: Scalar>(&self, x: &[T], p: &[T]) -> Result<Vec<Vec<T>>> {
        self.check_dims(x, p)?;
        self.jac_f
            .iter()
            .map(|row| row.iter().map(|e| e.eval(x, p)).collect())
            .collect()
    }

    pub fn eval_phi<T: Scalar>(&self, x: &[T], p: &[T]) -> Result<Vec<T>> {
        self.check_dims(x, p)?;
        self.constraints.iter().map(|c| c.expr.eval(x, p)).collect()
    }

    pub fn eval_grad_phi<T: Scalar>(&self, x: &[T], p: &[T]) -> Result<Vec<Vec<T>>> {
        self.check_dims(x, p)?;
        self.constraints
            .iter()
            .map(|c| c.grad_x.iter().map(|e| e.eval(x, p)).collect())
            .collect()
    }

    pub fn eval_bundle<T: Scalar>(&self, x: &[T], p: &[T]) -> Result<EvalBundle<T>> {
        self.check_dims(x, p)?;
        let hess_phi = self
            .constraints
            .iter()
            .map(|c| {
                c.hess_x
                    .iter()
                    .map(|row| row.iter().map(|e| e.eval(x, p)).collect())
                    .collect()
            })
            .collect::<Result<Vec<Vec<Vec<T>>>>>()?;
        Ok(EvalBundle {
            f: self.eval_f(x, p)?,
            jac_f: self.eval_jac_f(x, p)?,
            phi: self.eval_phi(x, p)?,
            grad_phi: self.eval_grad_phi(x, p)?,
            hess_phi,
        })
    }

    /// `f64` convenience wrapper over `eval_bundle`.
    pub fn bundle_at(&self, x: &DVector<f64>, p: &DVector<f64>) -> Result<EvalBundle<f64>> {
        self.eval_bundle(x.as_slice(), p.as_slice())
    }

    /// Attaches a reference triple after validating feasibility and
    /// recomputing `v_hat = v - f(x, p)` exactly.
    pub fn with_reference(mut self, x: Vec<Rational>, p: Vec<Rational>, v: Vec<Rational>) -> Result<Self> {
        self.reference = Some(self.make_reference(x, p, v)?);
        Ok(self)
    }

    pub fn make_reference(&self, x: Vec<Rational>, p: Vec<Rational>, v: Vec<Rational>) -> Result<ReferenceTriple> {
        self.check_dims(&x, &p)?;
        if v.len() != self.n {
            return Err(Error::Dimension(format!("v has {} entries but n = {}", v.len(), self.n)));
        }
        let phi = self.eval_phi(&x, &p)?;
        for (i, val) in phi.iter().enumerate() {
            let val = rational_to_f64(val);
            if val > FEASIBILITY_TOL {
                return Err(Error::Infeasible { index: i + 1, value: val });
            }
        }
        let f = self.eval_f(&x, &p)?;
        let v_hat = v.iter().zip(&f).map(|(vi, fi)| vi - fi).collect();
        Ok(ReferenceTriple { x, p, v, v_hat })
    }

    pub fn require_reference(&self) -> Result<&ReferenceTriple> {
        self.reference
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("model file has no `reference` line".into()))
    }
}

impl Expr {
    fn is_constant_in_x(&self) -> bool {
        let mut vars = Vec::new();
        self.visit_vars(&mut vars);
        vars.iter().all(|v| match v {
            Var::X(i) => self.differentiate(Var::X(*i)).is_identically_zero(),
            Var::P(_) => true,
        })
    }
}

// ---------------------------------------------------------------------------
// Parsing and printing

struct LineCursor<'a> {
    line: usize,
    text: &'a str,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Syntax {
        line,
        column,
        message: message.into(),
    }
}

fn parse_dims(cur: &LineCursor) -> Result<(usize, usize)> {
    let rest = cur.text.trim_start_matches("dims").trim();
    let mut n = None;
    let mut d = None;
    for part in rest.split_whitespace() {
        let column = cur.text.find(part).unwrap_or(0) + 1;
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| syntax(cur.line, column, format!("expected key=value, got `{part}`")))?;
        let value: usize = value
            .parse()
            .map_err(|_| syntax(cur.line, column, format!("`{value}` is not a nonnegative integer")))?;
        match key {
            "n" => n = Some(value),
            "d" => d = Some(value),
            _ => return Err(syntax(cur.line, column, format!("unknown dimension `{key}`"))),
        }
    }
    let n = n.ok_or_else(|| syntax(cur.line, 1, "missing n=<int>"))?;
    if n == 0 {
        return Err(Error::Dimension("n must be positive".into()));
    }
    Ok((n, d.unwrap_or(0)))
}

/// Parses `(a, b, c)` of rational literals (expressions without variables).
fn parse_rational_tuple(text: &str, line: usize, column: usize, expected: usize, what: &str) -> Result<Vec<Rational>> {
    let trimmed = text.trim();
    if trimmed == "()" {
        if expected == 0 {
            return Ok(Vec::new());
        }
        return Err(Error::Dimension(format!("{what} needs {expected} entries, got 0")));
    }
    let items = ExprParser::new(trimmed, line, column, 0, 0)?.parse_tuple()?;
    if items.len() != expected {
        return Err(Error::Dimension(format!("{what} needs {expected} entries, got {}", items.len())));
    }
    items
        .into_iter()
        .map(|e| match e {
            Expr::Const(l) => Ok(l.value().clone()),
            other => Err(syntax(line, column, format!("{what} entries must be numbers, got `{other}`"))),
        })
        .collect()
}

fn parse_reference(cur: &LineCursor, n: usize, d: usize) -> Result<(Vec<Rational>, Vec<Rational>, Vec<Rational>)> {
    let body = &cur.text["reference".len()..];
    let offset = "reference".len();
    let mut x = None;
    let mut p = None;
    let mut v = None;
    let chars: Vec<(usize, char)> = body.char_indices().collect();
    let mut k = 0;
    while k < chars.len() {
        let (pos, c) = chars[k];
        if c.is_whitespace() {
            k += 1;
            continue;
        }
        let column = offset + pos + 1;
        if !matches!(c, 'x' | 'p' | 'v') || chars.get(k + 1).map(|t| t.1) != Some('=') {
            return Err(syntax(cur.line, column, "expected x=(...), p=(...) or v=(...)"));
        }
        let open = k + 2;
        if chars.get(open).map(|t| t.1) != Some('(') {
            return Err(syntax(cur.line, column + 2, "expected `(`"));
        }
        let close = (open..chars.len())
            .find(|&j| chars[j].1 == ')')
            .ok_or_else(|| syntax(cur.line, column + 2, "unclosed `(`"))?;
        let start = chars[open].0;
        let end = chars[close].0 + 1;
        let tuple = &body[start..end];
        let tuple_column = offset + start + 1;
        match c {
            'x' => x = Some(parse_rational_tuple(tuple, cur.line, tuple_column, n, "x")?),
            'p' => p = Some(parse_rational_tuple(tuple, cur.line, tuple_column, d, "p")?),
            _ => v = Some(parse_rational_tuple(tuple, cur.line, tuple_column, n, "v")?),
        }
        k = close + 1;
    }
    let x = x.ok_or_else(|| syntax(cur.line, 1, "reference is missing x=(...)"))?;
    let p = match p {
        Some(p) => p,
        None if d == 0 => Vec::new(),
        None => return Err(syntax(cur.line, 1, "reference is missing p=(...)")),
    };
    let v = v.ok_or_else(|| syntax(cur.line, 1, "reference is missing v=(...)"))?;
    Ok((x, p, v))
}

/// Parses a model file.
pub fn parse_model(text: &str) -> Result<ParametricModel> {
    let mut dims: Option<(usize, usize)> = None;
    let mut base: Option<BaseMap> = None;
    let mut constraints = Vec::new();
    let mut reference = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("");
        let lead = content.len() - content.trim_start().len();
        let trimmed = content.trim();
        if trimmed.is_empty() {
            continue;
        }
        let cur = LineCursor { line, text: trimmed };
        let col0 = lead + 1;
        let keyword = trimmed.split(|c: char| c.is_whitespace() || c == '=').next().unwrap_or("");

        if keyword == "dims" {
            if dims.is_some() {
                return Err(syntax(line, col0, "duplicate `dims` line"));
            }
            dims = Some(parse_dims(&cur)?);
            continue;
        }
        let (n, d) = dims.ok_or_else(|| syntax(line, col0, "`dims n=<int> d=<int>` must come first"))?;
        match keyword {
            "potential" | "f" => {
                if base.is_some() {
                    return Err(syntax(line, col0, "base map defined twice"));
                }
                let eq = trimmed
                    .find('=')
                    .ok_or_else(|| syntax(line, col0 + keyword.len(), "expected `=`"))?;
                let rhs = &trimmed[eq + 1..];
                let rhs_col = col0 + eq + 1;
                let parser = ExprParser::new(rhs, line, rhs_col, n, d)?;
                base = Some(if keyword == "potential" {
                    BaseMap::Potential(parser.parse_all()?)
                } else {
                    BaseMap::Components(parser.parse_tuple()?)
                });
            }
            "constraint" => {
                let body = &trimmed["constraint".len()..];
                let le = body
                    .rfind("<=")
                    .ok_or_else(|| syntax(line, col0 + trimmed.len(), "expected `<= 0`"))?;
                let rhs = body[le + 2..].trim();
                if rhs != "0" {
                    return Err(syntax(line, col0 + "constraint".len() + le + 2, "constraints must read `<expr> <= 0`"));
                }
                let expr_col = col0 + "constraint".len();
                constraints.push(ExprParser::new(&body[..le], line, expr_col, n, d)?.parse_all()?);
            }
            "reference" => {
                if reference.is_some() {
                    return Err(syntax(line, col0, "duplicate `reference` line"));
                }
                reference = Some(parse_reference(&cur, n, d)?);
            }
            other => return Err(syntax(line, col0, format!("unknown directive `{other}`"))),
        }
    }

    let (n, d) = dims.ok_or_else(|| syntax(1, 1, "missing `dims` line"))?;
    let base = base.ok_or_else(|| syntax(1, 1, "missing `potential = ...` or `f = (...)` line"))?;
    let model = ParametricModel::new(n, d, base, constraints)?;
    match reference {
        Some((x, p, v)) => model.with_reference(x, p, v),
        None => Ok(model),
    }
}

fn tuple_string(v: &[Rational]) -> String {
    let items: Vec<String> = v.iter().map(rational_to_string).collect();
    format!("({})", items.join(", "))
}

impl fmt::Display for ParametricModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "dims n={} d={}", self.n, self.d)?;
        match &self.base {
            BaseMap::Potential(e) => writeln!(f, "potential = {e}")?,
            BaseMap::Components(c) => {
                let items: Vec<String> = c.iter().map(|e| e.to_string()).collect();
                writeln!(f, "f = ({})", items.join(", "))?;
            }
        }
        for c in &self.constraints {
            writeln!(f, "constraint {} <= 0", c.expr)?;
        }
        if let Some(r) = &self.reference {
            writeln!(f, "reference x={} p={} v={}", tuple_string(&r.x), tuple_string(&r.p), tuple_string(&r.v))?;
        }
        Ok(())
    }
}
