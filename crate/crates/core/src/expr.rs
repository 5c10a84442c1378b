//! Scalar expressions over decision variables `x1..xn` and parameters
//! `p1..pd`: parsing, exact symbolic differentiation, evaluation.
//!
//! Literals are exact rationals (`1/4` and `0.25` denote the same value).
//! Constant subtrees are folded when nodes are built, so derivative trees
//! stay small and literal zeros disappear.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::scalar::{parse_decimal, rational_to_f64, rational_to_string, Rational, Scalar};

/// A variable reference, 0-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    X(usize),
    P(usize),
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::X(i) => write!(f, "x{}", i + 1),
            Var::P(i) => write!(f, "p{}", i + 1),
        }
    }
}

/// Exact literal together with its nearest `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Literal {
    value: Rational,
    approx: f64,
}

impl Literal {
    pub fn new(value: Rational) -> Self {
        let approx = rational_to_f64(&value);
        Literal { value, approx }
    }

    pub fn integer(v: i64) -> Self {
        Literal::new(Rational::from_integer(BigInt::from(v)))
    }

    pub fn value(&self) -> &Rational {
        &self.value
    }

    pub fn approx(&self) -> f64 {
        self.approx
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(Literal),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    /// Evaluation at a zero denominator is an error.
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
}

impl Expr {
    pub fn zero() -> Expr {
        Expr::Const(Literal::integer(0))
    }

    pub fn one() -> Expr {
        Expr::Const(Literal::integer(1))
    }

    pub fn constant(q: Rational) -> Expr {
        Expr::Const(Literal::new(q))
    }

    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    fn as_const(&self) -> Option<&Rational> {
        match self {
            Expr::Const(l) => Some(&l.value),
            _ => None,
        }
    }

    pub fn is_literal_zero(&self) -> bool {
        self.as_const().is_some_and(|q| q.is_zero())
    }

    pub fn neg(a: Expr) -> Expr {
        match a {
            Expr::Const(l) => Expr::constant(-l.value),
            Expr::Neg(inner) => *inner,
            other => Expr::Neg(Box::new(other)),
        }
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::constant(x + y),
            (Some(x), _) if x.is_zero() => b,
            (_, Some(y)) if y.is_zero() => a,
            _ => Expr::Add(Box::new(a), Box::new(b)),
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::constant(x - y),
            (_, Some(y)) if y.is_zero() => a,
            (Some(x), _) if x.is_zero() => Expr::neg(b),
            _ => Expr::Sub(Box::new(a), Box::new(b)),
        }
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) => Expr::constant(x * y),
            (Some(x), _) if x.is_zero() => Expr::zero(),
            (_, Some(y)) if y.is_zero() => Expr::zero(),
            (Some(x), _) if x.is_one() => b,
            (_, Some(y)) if y.is_one() => a,
            (Some(x), _) if (-x).is_one() => Expr::neg(b),
            (_, Some(y)) if (-y).is_one() => Expr::neg(a),
            _ => Expr::Mul(Box::new(a), Box::new(b)),
        }
    }

    /// Folds constant quotients; a literal zero denominator is rejected by the
    /// parser before this is reached, and kept as a node otherwise.
    pub fn div(a: Expr, b: Expr) -> Expr {
        match (a.as_const(), b.as_const()) {
            (Some(x), Some(y)) if !y.is_zero() => Expr::constant(x / y),
            (Some(x), _) if x.is_zero() && !b.is_literal_zero() => Expr::zero(),
            (_, Some(y)) if y.is_one() => a,
            _ => Expr::Div(Box::new(a), Box::new(b)),
        }
    }

    pub fn pow(a: Expr, k: i32) -> Expr {
        if k == 0 {
            return Expr::one();
        }
        if k == 1 {
            return a;
        }
        if let Some(q) = a.as_const() {
            if !(q.is_zero() && k < 0) {
                return Expr::constant(rational_pow(q, k));
            }
        }
        Expr::Pow(Box::new(a), k)
    }

    /// Exact partial derivative with literal-zero simplification.
    pub fn differentiate(&self, var: Var) -> Expr {
        match self {
            Expr::Const(_) => Expr::zero(),
            Expr::Var(v) => {
                if *v == var {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Expr::Neg(a) => Expr::neg(a.differentiate(var)),
            Expr::Add(a, b) => Expr::add(a.differentiate(var), b.differentiate(var)),
            Expr::Sub(a, b) => Expr::sub(a.differentiate(var), b.differentiate(var)),
            Expr::Mul(a, b) => Expr::add(
                Expr::mul(a.differentiate(var), (**b).clone()),
                Expr::mul((**a).clone(), b.differentiate(var)),
            ),
            Expr::Div(a, b) => {
                let da = a.differentiate(var);
                let db = b.differentiate(var);
                if db.is_literal_zero() {
                    Expr::div(da, (**b).clone())
                } else {
                    Expr::div(
                        Expr::sub(Expr::mul(da, (**b).clone()), Expr::mul((**a).clone(), db)),
                        Expr::pow((**b).clone(), 2),
                    )
                }
            }
            Expr::Pow(a, k) => Expr::mul(
                Expr::mul(Expr::constant(Rational::from_integer(BigInt::from(*k))), Expr::pow((**a).clone(), k - 1)),
                a.differentiate(var),
            ),
        }
    }

    pub fn eval<T: Scalar>(&self, x: &[T], p: &[T]) -> Result<T> {
        match self {
            Expr::Const(l) => Ok(T::from_rational(&l.value, l.approx)),
            Expr::Var(Var::X(i)) => x
                .get(*i)
                .cloned()
                .ok_or_else(|| Error::Dimension(format!("x{} not supplied", i + 1))),
            Expr::Var(Var::P(i)) => p
                .get(*i)
                .cloned()
                .ok_or_else(|| Error::Dimension(format!("p{} not supplied", i + 1))),
            Expr::Neg(a) => Ok(-a.eval(x, p)?),
            Expr::Add(a, b) => Ok(a.eval(x, p)? + b.eval(x, p)?),
            Expr::Sub(a, b) => Ok(a.eval(x, p)? - b.eval(x, p)?),
            Expr::Mul(a, b) => Ok(a.eval(x, p)? * b.eval(x, p)?),
            Expr::Div(a, b) => {
                let den = b.eval(x, p)?;
                if den.is_zero() || !den.to_f64().is_finite() {
                    return Err(Error::DivisionByZero { subtree: self.to_string() });
                }
                Ok(a.eval(x, p)? / den)
            }
            Expr::Pow(a, k) => {
                let base = a.eval(x, p)?;
                if *k < 0 && base.is_zero() {
                    return Err(Error::DivisionByZero { subtree: self.to_string() });
                }
                Ok(scalar_pow(base, *k))
            }
        }
    }

    pub fn visit_vars(&self, out: &mut Vec<Var>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => out.push(*v),
            Expr::Neg(a) | Expr::Pow(a, _) => a.visit_vars(out),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.visit_vars(out);
                b.visit_vars(out);
            }
        }
    }

    /// Canonical multivariate polynomial, or `None` when the expression
    /// divides by a non-constant.
    pub fn to_polynomial(&self) -> Option<Polynomial> {
        match self {
            Expr::Const(l) => Some(Polynomial::constant(l.value.clone())),
            Expr::Var(v) => Some(Polynomial::variable(*v)),
            Expr::Neg(a) => Some(a.to_polynomial()?.scale(&-Rational::one())),
            Expr::Add(a, b) => Some(a.to_polynomial()?.add(&b.to_polynomial()?)),
            Expr::Sub(a, b) => Some(a.to_polynomial()?.add(&b.to_polynomial()?.scale(&-Rational::one()))),
            Expr::Mul(a, b) => Some(a.to_polynomial()?.mul(&b.to_polynomial()?)),
            Expr::Div(a, b) => {
                let den = b.to_polynomial()?.as_constant()?;
                if den.is_zero() {
                    return None;
                }
                Some(a.to_polynomial()?.scale(&den.recip()))
            }
            Expr::Pow(a, k) => {
                let base = a.to_polynomial()?;
                if *k < 0 {
                    let c = base.as_constant()?;
                    if c.is_zero() {
                        return None;
                    }
                    return Some(Polynomial::constant(rational_pow(&c, *k)));
                }
                let mut acc = Polynomial::constant(Rational::one());
                for _ in 0..*k {
                    acc = acc.mul(&base);
                }
                Some(acc)
            }
        }
    }

    /// True when the expression is identically zero as a function. Rational
    /// functions that are not polynomials are only recognised when literally 0.
    pub fn is_identically_zero(&self) -> bool {
        match self.to_polynomial() {
            Some(poly) => poly.is_zero(),
            None => self.is_literal_zero(),
        }
    }

    pub fn is_constant(&self) -> bool {
        match self.to_polynomial() {
            Some(poly) => poly.as_constant().is_some(),
            None => {
                let mut vars = Vec::new();
                self.visit_vars(&mut vars);
                vars.is_empty()
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Pow(..) => 4,
            Expr::Const(l) => {
                if Signed::is_negative(&l.value) {
                    3
                } else if l.value.is_integer() {
                    5
                } else {
                    2
                }
            }
            Expr::Var(_) => 5,
        }
    }

    fn fmt_operand(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        if self.precedence() < min_prec {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(l) => write!(f, "{}", rational_to_string(&l.value)),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(a) => {
                write!(f, "-")?;
                a.fmt_operand(f, 4)
            }
            Expr::Add(a, b) => {
                a.fmt_operand(f, 1)?;
                write!(f, " + ")?;
                b.fmt_operand(f, 2)
            }
            Expr::Sub(a, b) => {
                a.fmt_operand(f, 1)?;
                write!(f, " - ")?;
                b.fmt_operand(f, 2)
            }
            Expr::Mul(a, b) => {
                a.fmt_operand(f, 2)?;
                write!(f, "*")?;
                b.fmt_operand(f, 3)
            }
            Expr::Div(a, b) => {
                a.fmt_operand(f, 2)?;
                write!(f, "/")?;
                b.fmt_operand(f, 4)
            }
            Expr::Pow(a, k) => {
                a.fmt_operand(f, 5)?;
                write!(f, "^{k}")
            }
        }
    }
}

fn rational_pow(q: &Rational, k: i32) -> Rational {
    let base = if k < 0 { q.recip() } else { q.clone() };
    num_traits::pow(base, k.unsigned_abs() as usize)
}

fn scalar_pow<T: Scalar>(base: T, k: i32) -> T {
    let mut acc = T::one();
    for _ in 0..k.unsigned_abs() {
        acc = acc * base.clone();
    }
    if k < 0 {
        T::one() / acc
    } else {
        acc
    }
}

/// Monomial: sorted (variable, exponent) pairs.
pub type Monomial = Vec<(Var, u32)>;

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Polynomial {
    terms: BTreeMap<Monomial, Rational>,
}

impl Polynomial {
    pub fn constant(c: Rational) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(Vec::new(), c);
        }
        Polynomial { terms }
    }

    pub fn variable(v: Var) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(vec![(v, 1)], Rational::one());
        Polynomial { terms }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn as_constant(&self) -> Option<Rational> {
        match self.terms.len() {
            0 => Some(Rational::zero()),
            1 => self.terms.get(&Vec::new()).cloned(),
            _ => None,
        }
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .keys()
            .map(|m| m.iter().map(|(_, e)| e).sum())
            .max()
            .unwrap_or(0)
    }

    fn scale(&self, c: &Rational) -> Self {
        if c.is_zero() {
            return Polynomial::default();
        }
        Polynomial {
            terms: self.terms.iter().map(|(m, q)| (m.clone(), q * c)).collect(),
        }
    }

    fn add(&self, other: &Self) -> Self {
        let mut terms = self.terms.clone();
        for (m, q) in &other.terms {
            let entry = terms.entry(m.clone()).or_insert_with(Rational::zero);
            *entry += q;
            if entry.is_zero() {
                terms.remove(m);
            }
        }
        Polynomial { terms }
    }

    fn mul(&self, other: &Self) -> Self {
        let mut out = Polynomial::default();
        for (ma, qa) in &self.terms {
            for (mb, qb) in &other.terms {
                let mono = merge_monomials(ma, mb);
                let term = Polynomial {
                    terms: std::iter::once((mono, qa * qb)).collect(),
                };
                out = out.add(&term);
            }
        }
        out
    }
}

fn merge_monomials(a: &Monomial, b: &Monomial) -> Monomial {
    let mut map: BTreeMap<Var, u32> = a.iter().cloned().collect();
    for (v, e) in b {
        *map.entry(*v).or_insert(0) += e;
    }
    map.into_iter().collect()
}

// ---------------------------------------------------------------------------
// Parsing

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(String),
    Ident(String),
    Sym(char),
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    column: usize,
}

fn tokenize(text: &str, line: usize, column0: usize) -> Result<Vec<Token>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let column = column0 + i;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Num(chars[start..i].iter().collect()),
                column,
            });
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token {
                tok: Tok::Ident(chars[start..i].iter().collect()),
                column,
            });
        } else if "+-*/^(),".contains(c) {
            out.push(Token { tok: Tok::Sym(c), column });
            i += 1;
        } else {
            return Err(Error::Syntax {
                line,
                column,
                message: format!("unexpected character `{c}`"),
            });
        }
    }
    Ok(out)
}

/// Recursive-descent parser for one expression (or a parenthesised list).
pub struct ExprParser {
    tokens: Vec<Token>,
    pos: usize,
    line: usize,
    end_column: usize,
    n: usize,
    d: usize,
}

impl ExprParser {
    /// `column0` is the 1-based column of `text`'s first character within its line.
    pub fn new(text: &str, line: usize, column0: usize, n: usize, d: usize) -> Result<Self> {
        Ok(ExprParser {
            tokens: tokenize(text, line, column0)?,
            pos: 0,
            line,
            end_column: column0 + text.chars().count(),
            n,
            d,
        })
    }

    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.tok)
    }

    fn column(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end_column, |t| t.column)
    }

    fn syntax(&self, message: impl Into<String>) -> Error {
        Error::Syntax {
            line: self.line,
            column: self.column(),
            message: message.into(),
        }
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.syntax(format!("expected `{c}`")))
        }
    }

    pub fn finish(&self) -> Result<()> {
        if self.pos < self.tokens.len() {
            Err(self.syntax("unexpected trailing input"))
        } else {
            Ok(())
        }
    }

    /// Parses a complete single expression.
    pub fn parse_all(mut self) -> Result<Expr> {
        let e = self.expr()?;
        self.finish()?;
        Ok(e)
    }

    /// Parses `(e1, e2, ..., ek)` to the end of input.
    pub fn parse_tuple(mut self) -> Result<Vec<Expr>> {
        self.expect('(')?;
        let mut items = vec![self.expr()?];
        while self.eat(',') {
            items.push(self.expr()?);
        }
        self.expect(')')?;
        self.finish()?;
        Ok(items)
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut acc = self.term()?;
        loop {
            if self.eat('+') {
                acc = Expr::add(acc, self.term()?);
            } else if self.eat('-') {
                acc = Expr::sub(acc, self.term()?);
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut acc = self.unary()?;
        loop {
            if self.eat('*') {
                acc = Expr::mul(acc, self.unary()?);
            } else if self.peek() == Some(&Tok::Sym('/')) {
                self.pos += 1;
                let column = self.column();
                let den = self.unary()?;
                if den.is_literal_zero() {
                    return Err(Error::Syntax {
                        line: self.line,
                        column,
                        message: "division by literal zero".into(),
                    });
                }
                acc = Expr::div(acc, den);
            } else {
                return Ok(acc);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat('-') {
            return Ok(Expr::neg(self.unary()?));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if !self.eat('^') {
            return Ok(base);
        }
        let paren = self.eat('(');
        let negative = self.eat('-');
        let k = match self.peek().cloned() {
            Some(Tok::Num(s)) if s.chars().all(|c| c.is_ascii_digit()) => {
                self.pos += 1;
                s.parse::<i32>().map_err(|_| self.syntax("exponent too large"))?
            }
            _ => return Err(self.syntax("exponent must be an integer literal")),
        };
        if paren {
            self.expect(')')?;
        }
        let k = if negative { -k } else { k };
        if k < 0 && base.is_literal_zero() {
            return Err(self.syntax("negative power of literal zero"));
        }
        Ok(Expr::pow(base, k))
    }

    fn atom(&mut self) -> Result<Expr> {
        let column = self.column();
        match self.peek().cloned() {
            Some(Tok::Num(s)) => {
                self.pos += 1;
                let q = parse_decimal(&s).ok_or_else(|| Error::Syntax {
                    line: self.line,
                    column,
                    message: format!("malformed number `{s}`"),
                })?;
                Ok(Expr::constant(q))
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                self.variable(&name, column).map(Expr::Var)
            }
            Some(Tok::Sym('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            _ => Err(self.syntax("expected a number, variable or `(`")),
        }
    }

    fn variable(&self, name: &str, column: usize) -> Result<Var> {
        let unknown = || Error::UnknownIdentifier {
            name: name.to_string(),
            line: self.line,
            column,
        };
        let (kind, digits) = name.split_at(1);
        if digits.is_empty() || !digits.chars().all(|c| c.is_ascii_digit()) || digits.starts_with('0') {
            return Err(unknown());
        }
        let k: usize = digits.parse().map_err(|_| unknown())?;
        match kind {
            "x" if k <= self.n => Ok(Var::X(k - 1)),
            "p" if k <= self.d => Ok(Var::P(k - 1)),
            _ => Err(unknown()),
        }
    }
}

/// Parses a single expression over `n` decision variables and `d` parameters.
pub fn parse_expr(text: &str, n: usize, d: usize) -> Result<Expr> {
    ExprParser::new(text, 1, 1, n, d)?.parse_all()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(a: i64, b: i64) -> Rational {
        Rational::new(BigInt::from(a), BigInt::from(b))
    }

    #[test]
    fn derivative_of_example_potential_in_x3() {
        let e = parse_expr("x3 + (1/4+p2)*x1 + p1*x2 + x3^2 - x1*x2", 3, 2).unwrap();
        let d = e.differentiate(Var::X(2));
        assert_eq!(d.to_string(), "1 + 2*x3");
    }

    #[test]
    fn trivial_derivatives() {
        let e = parse_expr("x2", 2, 0).unwrap();
        assert!(e.differentiate(Var::X(0)).is_literal_zero());
        let e = parse_expr("x1 - x3 - p1", 3, 2).unwrap();
        assert_eq!(e.differentiate(Var::P(0)), Expr::constant(q(-1, 1)));
    }

    #[test]
    fn fractions_fold_to_exact_rationals() {
        let e = parse_expr("1/4 + 0.125", 1, 0).unwrap();
        assert_eq!(e, Expr::constant(q(3, 8)));
    }

    #[test]
    fn unknown_identifier_is_reported() {
        let err = parse_expr("x1 + q1", 1, 1).unwrap_err();
        assert!(matches!(err, Error::UnknownIdentifier { ref name, column: 6, .. } if name == "q1"), "{err:?}");
        assert!(matches!(parse_expr("p2", 1, 1), Err(Error::UnknownIdentifier { .. })));
        assert!(matches!(parse_expr("x0", 1, 1), Err(Error::UnknownIdentifier { .. })));
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let err = parse_expr("x1 + * x1", 1, 0).unwrap_err();
        assert!(matches!(err, Error::Syntax { column: 6, .. }), "{err:?}");
        assert!(matches!(parse_expr("x1/0", 1, 0), Err(Error::Syntax { .. })));
        assert!(matches!(parse_expr("x1^x1", 1, 0), Err(Error::Syntax { .. })));
    }

    #[test]
    fn zero_denominator_is_an_error_not_nan() {
        let e = parse_expr("1/(x1 - 1)", 1, 0).unwrap();
        let err = e.eval(&[1.0], &[]).unwrap_err();
        assert!(matches!(err, Error::DivisionByZero { .. }));
        let e = parse_expr("x1^-2", 1, 0).unwrap();
        assert!(e.eval(&[0.0], &[]).is_err());
        assert_eq!(e.eval(&[2.0], &[]).unwrap(), 0.25);
    }

    #[test]
    fn precedence_and_unary_minus() {
        let e = parse_expr("-x1^2", 1, 0).unwrap();
        assert_eq!(e.eval(&[3.0], &[]).unwrap(), -9.0);
        let e = parse_expr("2 - 3 - 4", 0, 0).unwrap();
        assert_eq!(e, Expr::constant(q(-5, 1)));
        let e = parse_expr("x1 / 2 / 4", 1, 0).unwrap();
        assert_eq!(e.eval(&[8.0], &[]).unwrap(), 1.0);
    }

    #[test]
    fn printing_reparses_to_the_same_function() {
        let sources = [
            "x1 - (x2 - x1)",
            "x1/(x2/3)",
            "(-x1)^3 + -x2*x1",
            "(1/4)/x1 - x2^-1",
            "x1*(-3/7) - (x1 + x2)^2",
        ];
        for src in sources {
            let e = parse_expr(src, 2, 0).unwrap();
            let back = parse_expr(&e.to_string(), 2, 0).unwrap();
            for pt in [[0.3, 1.7], [-2.0, 0.5], [1.25, -0.75]] {
                let a: f64 = e.eval(&pt, &[]).unwrap();
                let b: f64 = back.eval(&pt, &[]).unwrap();
                assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{src} -> {e}");
            }
        }
    }

    #[test]
    fn polynomial_canonical_form_detects_cancellation() {
        let e = parse_expr("x1*x2 - x2*x1", 2, 0).unwrap();
        assert!(e.is_identically_zero());
        let e = parse_expr("(x1 + p1)^2 - x1^2 - 2*x1*p1", 1, 1).unwrap();
        assert!(!e.is_identically_zero());
        assert!(!e.is_constant());
        let h = e.differentiate(Var::X(0)).differentiate(Var::X(0));
        assert!(h.is_identically_zero());
        assert_eq!(parse_expr("x1^3", 1, 0).unwrap().to_polynomial().unwrap().degree(), 3);
    }

    #[test]
    fn exact_evaluation_in_rationals() {
        let e = parse_expr("1/4 + p2 - x2", 2, 2).unwrap();
        let zero = vec![Rational::zero(), Rational::zero()];
        assert_eq!(e.eval(&zero, &zero).unwrap(), q(1, 4));
    }
}
