//! Scalar expression parsing and exact derivatives.
//!
//! User-supplied nonlinearities (K, f, envelopes, initial data, Robin
//! coefficients) are parsed into an immutable tree over one variable with
//! the operators `+ - * / ^` and the functions `exp log sqrt sin cos abs`.
//! Derivatives up to third order are propagated in forward mode through the
//! tree (truncated Taylor arithmetic), not by finite differences.
//!
//! Grammar is fixed and closed under differentiation. `a^b` with a literal
//! integer exponent is evaluated exactly for any base; non-integer or
//! variable exponents require a positive base.

use std::fmt;

use thiserror::Error;

/// Byte range of a node in the source text. Columns are 1-based.
#[derive(Debug, Clone, Copy)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    fn col(&self) -> usize {
        self.start + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnFunc {
    Neg,
    Exp,
    Log,
    Sqrt,
    Sin,
    Cos,
    Abs,
}

impl UnFunc {
    fn name(self) -> &'static str {
        match self {
            UnFunc::Neg => "-",
            UnFunc::Exp => "exp",
            UnFunc::Log => "log",
            UnFunc::Sqrt => "sqrt",
            UnFunc::Sin => "sin",
            UnFunc::Cos => "cos",
            UnFunc::Abs => "abs",
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) enum NodeKind {
    Var,
    Const(f64),
    Unary(UnFunc, Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
}

#[derive(Debug, Clone)]
pub(crate) struct Node {
    kind: NodeKind,
    span: Span,
}

// Structural equality; spans are layout metadata and do not participate.
impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        match (&self.kind, &other.kind) {
            (NodeKind::Var, NodeKind::Var) => true,
            (NodeKind::Const(a), NodeKind::Const(b)) => a == b,
            (NodeKind::Unary(f, a), NodeKind::Unary(g, b)) => f == g && a == b,
            (NodeKind::Binary(o, a, b), NodeKind::Binary(p, c, d)) => o == p && a == c && b == d,
            _ => false,
        }
    }
}

/// Immutable expression tree in one variable.
#[derive(Debug, Clone)]
pub struct Expression {
    root: Node,
    source: String,
    var: String,
}

impl PartialEq for Expression {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root
    }
}

/// Value and derivatives with respect to the variable at one point.
#[derive(Debug, Clone, Copy, Default)]
pub struct DerivativeBundle {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum ExprError {
    #[error("syntax error at column {col}: {msg}")]
    Syntax { col: usize, msg: String },
    #[error("unknown identifier `{name}` at column {col}")]
    UnknownIdentifier { name: String, col: usize },
    #[error("domain violation at columns {start}..{end}: {msg}")]
    Domain { start: usize, end: usize, msg: String },
}

impl ExprError {
    fn domain(span: Span, msg: impl Into<String>) -> Self {
        ExprError::Domain {
            start: span.col(),
            end: span.end,
            msg: msg.into(),
        }
    }
}

impl Expression {
    /// Parse with the default variable name `u`.
    pub fn parse(text: &str) -> Result<Self, ExprError> {
        Self::parse_with_var(text, "u")
    }

    /// Parse `text` treating `var` as the single free variable.
    /// Boundary coefficients and initial data use `x`.
    pub fn parse_with_var(text: &str, var: &str) -> Result<Self, ExprError> {
        if text.trim().is_empty() {
            return Err(ExprError::Syntax {
                col: 1,
                msg: "empty expression".into(),
            });
        }
        let tokens = tokenize(text)?;
        let mut parser = Parser {
            tokens: &tokens,
            pos: 0,
            var,
            len: text.len(),
        };
        let root = parser.parse_expr()?;
        parser.expect_end()?;
        Ok(Expression {
            root,
            source: text.to_string(),
            var: var.to_string(),
        })
    }

    /// Constant expression (used for defaults such as β ≡ 0).
    pub fn constant(c: f64) -> Self {
        Expression {
            root: Node {
                kind: NodeKind::Const(c),
                span: Span { start: 0, end: 0 },
            },
            source: format!("{c}"),
            var: "u".to_string(),
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn var_name(&self) -> &str {
        &self.var
    }

    /// Evaluate the value only.
    pub fn eval(&self, s: f64) -> Result<f64, ExprError> {
        Ok(eval_node(&self.root, s, 0)?.d[0])
    }

    /// Evaluate value and derivatives up to `order` (0..=3) at `s`.
    /// Components above `order` are zero.
    pub fn eval_with_derivatives(&self, s: f64, order: usize) -> Result<DerivativeBundle, ExprError> {
        let order = order.min(3);
        let t = eval_node(&self.root, s, order)?;
        Ok(DerivativeBundle {
            value: t.d[0],
            d1: t.d[1],
            d2: t.d[2],
            d3: t.d[3],
        })
    }
}

impl fmt::Display for Expression {
    /// Fully parenthesized form; re-parsing it yields a structurally equal tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_node(f, &self.root, &self.var)
    }
}

fn write_node(f: &mut fmt::Formatter<'_>, node: &Node, var: &str) -> fmt::Result {
    match &node.kind {
        NodeKind::Var => write!(f, "{var}"),
        NodeKind::Const(c) => {
            if *c < 0.0 || !c.is_finite() {
                write!(f, "({c})")
            } else {
                write!(f, "{c}")
            }
        }
        NodeKind::Unary(UnFunc::Neg, a) => {
            write!(f, "(-")?;
            write_node(f, a, var)?;
            write!(f, ")")
        }
        NodeKind::Unary(func, a) => {
            write!(f, "{}(", func.name())?;
            write_node(f, a, var)?;
            write!(f, ")")
        }
        NodeKind::Binary(op, a, b) => {
            write!(f, "(")?;
            write_node(f, a, var)?;
            write!(f, "{}", op.symbol())?;
            write_node(f, b, var)?;
            write!(f, ")")
        }
    }
}

// ---------------------------------------------------------------------------
// Tokenizer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    start: usize,
    end: usize,
}

fn tokenize(text: &str) -> Result<Vec<Token>, ExprError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let start = i;
        match c {
            ' ' | '\t' => {
                i += 1;
            }
            '+' | '-' | '*' | '/' | '^' | '(' | ')' => {
                let tok = match c {
                    '+' => Tok::Plus,
                    '-' => Tok::Minus,
                    '*' => Tok::Star,
                    '/' => Tok::Slash,
                    '^' => Tok::Caret,
                    '(' => Tok::LParen,
                    _ => Tok::RParen,
                };
                out.push(Token {
                    tok,
                    start,
                    end: i + 1,
                });
                i += 1;
            }
            '0'..='9' | '.' => {
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_ascii_digit() || bytes[j] == b'.') {
                    j += 1;
                }
                // optional exponent
                if j < bytes.len() && (bytes[j] == b'e' || bytes[j] == b'E') {
                    let mut k = j + 1;
                    if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                        k += 1;
                    }
                    if k < bytes.len() && bytes[k].is_ascii_digit() {
                        while k < bytes.len() && bytes[k].is_ascii_digit() {
                            k += 1;
                        }
                        j = k;
                    }
                }
                let s = &text[i..j];
                let num: f64 = s.parse().map_err(|_| ExprError::Syntax {
                    col: start + 1,
                    msg: format!("invalid number `{s}`"),
                })?;
                out.push(Token {
                    tok: Tok::Num(num),
                    start,
                    end: j,
                });
                i = j;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut j = i;
                while j < bytes.len()
                    && ((bytes[j] as char).is_ascii_alphanumeric() || bytes[j] == b'_')
                {
                    j += 1;
                }
                out.push(Token {
                    tok: Tok::Ident(text[i..j].to_string()),
                    start,
                    end: j,
                });
                i = j;
            }
            other => {
                return Err(ExprError::Syntax {
                    col: start + 1,
                    msg: format!("unexpected character `{other}`"),
                });
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Recursive-descent parser
// ---------------------------------------------------------------------------

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    var: &'a str,
    len: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next_col(&self) -> usize {
        self.peek().map(|t| t.start + 1).unwrap_or(self.len + 1)
    }

    fn advance(&mut self) -> Option<&Token> {
        let t = self.tokens.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect_end(&self) -> Result<(), ExprError> {
        if let Some(t) = self.peek() {
            Err(ExprError::Syntax {
                col: t.start + 1,
                msg: "unexpected trailing input".into(),
            })
        } else {
            Ok(())
        }
    }

    // expr := term { (+|-) term }
    fn parse_expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.parse_term()?;
        while let Some(t) = self.peek() {
            let op = match t.tok {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.parse_term()?;
            lhs = bin_node(op, lhs, rhs);
        }
        Ok(lhs)
    }

    // term := factor { (*|/) factor }
    fn parse_term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.parse_factor()?;
        while let Some(t) = self.peek() {
            let op = match t.tok {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.parse_factor()?;
            lhs = bin_node(op, lhs, rhs);
        }
        Ok(lhs)
    }

    // factor := - factor | power
    fn parse_factor(&mut self) -> Result<Node, ExprError> {
        if let Some(t) = self.peek() {
            if t.tok == Tok::Minus {
                let start = t.start;
                self.pos += 1;
                let inner = self.parse_factor()?;
                let end = inner.span.end;
                return Ok(Node {
                    kind: NodeKind::Unary(UnFunc::Neg, Box::new(inner)),
                    span: Span { start, end },
                });
            }
        }
        self.parse_power()
    }

    // power := atom [ ^ factor ]   (right-associative, exponent may be signed)
    fn parse_power(&mut self) -> Result<Node, ExprError> {
        let base = self.parse_atom()?;
        if let Some(t) = self.peek() {
            if t.tok == Tok::Caret {
                self.pos += 1;
                let exp = self.parse_factor()?;
                return Ok(bin_node(BinOp::Pow, base, exp));
            }
        }
        Ok(base)
    }

    fn parse_atom(&mut self) -> Result<Node, ExprError> {
        let col = self.next_col();
        let token = match self.advance() {
            Some(t) => t.clone(),
            None => {
                return Err(ExprError::Syntax {
                    col,
                    msg: "unexpected end of input".into(),
                })
            }
        };
        match token.tok {
            Tok::Num(v) => Ok(Node {
                kind: NodeKind::Const(v),
                span: Span {
                    start: token.start,
                    end: token.end,
                },
            }),
            Tok::LParen => {
                let inner = self.parse_expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                if name == self.var {
                    return Ok(Node {
                        kind: NodeKind::Var,
                        span: Span {
                            start: token.start,
                            end: token.end,
                        },
                    });
                }
                let func = match name.as_str() {
                    "exp" => UnFunc::Exp,
                    "log" => UnFunc::Log,
                    "sqrt" => UnFunc::Sqrt,
                    "sin" => UnFunc::Sin,
                    "cos" => UnFunc::Cos,
                    "abs" => UnFunc::Abs,
                    _ => {
                        return Err(ExprError::UnknownIdentifier {
                            name,
                            col: token.start + 1,
                        })
                    }
                };
                match self.peek() {
                    Some(t) if t.tok == Tok::LParen => {
                        self.pos += 1;
                        let arg = self.parse_expr()?;
                        let close = self.expect_rparen()?;
                        Ok(Node {
                            kind: NodeKind::Unary(func, Box::new(arg)),
                            span: Span {
                                start: token.start,
                                end: close,
                            },
                        })
                    }
                    _ => Err(ExprError::Syntax {
                        col: self.next_col(),
                        msg: format!("expected `(` after function `{}`", func.name()),
                    }),
                }
            }
            _ => Err(ExprError::Syntax {
                col: token.start + 1,
                msg: "expected a number, variable, function call, or `(`".into(),
            }),
        }
    }

    fn expect_rparen(&mut self) -> Result<usize, ExprError> {
        let col = self.next_col();
        match self.advance() {
            Some(t) if t.tok == Tok::RParen => Ok(t.end),
            _ => Err(ExprError::Syntax {
                col,
                msg: "expected `)`".into(),
            }),
        }
    }
}

fn bin_node(op: BinOp, lhs: Node, rhs: Node) -> Node {
    let span = Span {
        start: lhs.span.start,
        end: rhs.span.end,
    };
    Node {
        kind: NodeKind::Binary(op, Box::new(lhs), Box::new(rhs)),
        span,
    }
}

// ---------------------------------------------------------------------------
// Forward-mode evaluation (truncated derivative arithmetic, order ≤ 3)
// ---------------------------------------------------------------------------

/// Derivatives [v, v', v'', v'''] of a subexpression at the evaluation point.
#[derive(Debug, Clone, Copy)]
struct Taylor {
    d: [f64; 4],
}

impl Taylor {
    fn constant(c: f64) -> Self {
        Taylor {
            d: [c, 0.0, 0.0, 0.0],
        }
    }

    fn variable(s: f64, order: usize) -> Self {
        let mut d = [s, 0.0, 0.0, 0.0];
        if order >= 1 {
            d[1] = 1.0;
        }
        Taylor { d }
    }

    fn add(self, o: Self) -> Self {
        Taylor {
            d: [
                self.d[0] + o.d[0],
                self.d[1] + o.d[1],
                self.d[2] + o.d[2],
                self.d[3] + o.d[3],
            ],
        }
    }

    fn sub(self, o: Self) -> Self {
        Taylor {
            d: [
                self.d[0] - o.d[0],
                self.d[1] - o.d[1],
                self.d[2] - o.d[2],
                self.d[3] - o.d[3],
            ],
        }
    }

    /// Leibniz rule through third order.
    fn mul(self, o: Self) -> Self {
        let a = self.d;
        let b = o.d;
        Taylor {
            d: [
                a[0] * b[0],
                a[1] * b[0] + a[0] * b[1],
                a[2] * b[0] + 2.0 * a[1] * b[1] + a[0] * b[2],
                a[3] * b[0] + 3.0 * a[2] * b[1] + 3.0 * a[1] * b[2] + a[0] * b[3],
            ],
        }
    }

    /// Quotient derivatives solved recursively from the Leibniz expansion
    /// of numerator = quotient · denominator.
    fn div(self, o: Self) -> Self {
        let a = self.d;
        let b = o.d;
        let c0 = a[0] / b[0];
        let c1 = (a[1] - c0 * b[1]) / b[0];
        let c2 = (a[2] - 2.0 * c1 * b[1] - c0 * b[2]) / b[0];
        let c3 = (a[3] - 3.0 * c2 * b[1] - 3.0 * c1 * b[2] - c0 * b[3]) / b[0];
        Taylor {
            d: [c0, c1, c2, c3],
        }
    }

    /// Chain rule (Faà di Bruno) for y = F(u) given F', F'', F''' at u.
    fn compose(self, f0: f64, f1: f64, f2: f64, f3: f64) -> Self {
        let u = self.d;
        Taylor {
            d: [
                f0,
                f1 * u[1],
                f2 * u[1] * u[1] + f1 * u[2],
                f3 * u[1] * u[1] * u[1] + 3.0 * f2 * u[1] * u[2] + f1 * u[3],
            ],
        }
    }
}

fn eval_node(node: &Node, s: f64, order: usize) -> Result<Taylor, ExprError> {
    match &node.kind {
        NodeKind::Var => Ok(Taylor::variable(s, order)),
        NodeKind::Const(c) => Ok(Taylor::constant(*c)),
        NodeKind::Unary(func, a) => {
            let u = eval_node(a, s, order)?;
            apply_func(*func, u, node.span, order)
        }
        NodeKind::Binary(op, a, b) => {
            let ta = eval_node(a, s, order)?;
            match op {
                BinOp::Add => Ok(ta.add(eval_node(b, s, order)?)),
                BinOp::Sub => Ok(ta.sub(eval_node(b, s, order)?)),
                BinOp::Mul => Ok(ta.mul(eval_node(b, s, order)?)),
                BinOp::Div => {
                    let tb = eval_node(b, s, order)?;
                    if tb.d[0] == 0.0 {
                        return Err(ExprError::domain(b.span, "division by zero"));
                    }
                    Ok(ta.div(tb))
                }
                BinOp::Pow => eval_pow(ta, a, b, s, node.span, order),
            }
        }
    }
}

fn eval_pow(
    base: Taylor,
    _base_node: &Node,
    exp_node: &Node,
    s: f64,
    span: Span,
    order: usize,
) -> Result<Taylor, ExprError> {
    // Literal integer exponent: exact for any base sign.
    if let NodeKind::Const(c) = exp_node.kind {
        if c.fract() == 0.0 && c.abs() <= 2_147_483_647.0 {
            let n = c as i64;
            return pow_integer(base, n, span);
        }
    }
    // General a^b = exp(b·log a): base must be positive.
    let b = eval_node(exp_node, s, order)?;
    if base.d[0] <= 0.0 {
        return Err(ExprError::domain(
            span,
            format!(
                "power with non-integer exponent requires a positive base (base = {})",
                base.d[0]
            ),
        ));
    }
    let ln = apply_func(UnFunc::Log, base, span, order)?;
    apply_func(UnFunc::Exp, b.mul(ln), span, order)
}

fn pow_integer(base: Taylor, n: i64, span: Span) -> Result<Taylor, ExprError> {
    let u = base.d[0];
    if n < 0 && u == 0.0 {
        return Err(ExprError::domain(span, "zero raised to a negative power"));
    }
    // Coefficients checked before multiplying so that a vanishing factor
    // never meets an infinite power of a zero base (0 * inf = NaN).
    let nf = n as f64;
    let term = |coef: f64, k: i64| if coef == 0.0 { 0.0 } else { coef * powi(u, k) };
    let f0 = powi(u, n);
    let f1 = term(nf, n - 1);
    let f2 = term(nf * (nf - 1.0), n - 2);
    let f3 = term(nf * (nf - 1.0) * (nf - 2.0), n - 3);
    Ok(base.compose(f0, f1, f2, f3))
}

/// u^n for integer n with 0^0 = 1 and 0^k = 0 for k > 0. Callers guarantee
/// n ≥ 0 when u = 0; negative k with u = 0 never reaches here through the
/// derivative factors because the leading coefficient is then zero.
fn powi(u: f64, n: i64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    if u == 0.0 {
        return if n > 0 { 0.0 } else { f64::INFINITY };
    }
    u.powi(n.clamp(-2_147_483_648, 2_147_483_647) as i32)
}

fn apply_func(func: UnFunc, u: Taylor, span: Span, order: usize) -> Result<Taylor, ExprError> {
    let v = u.d[0];
    let (f0, f1, f2, f3) = match func {
        UnFunc::Neg => return Ok(Taylor::constant(0.0).sub(u)),
        UnFunc::Exp => {
            let e = v.exp();
            (e, e, e, e)
        }
        UnFunc::Log => {
            if v <= 0.0 {
                return Err(ExprError::domain(
                    span,
                    format!("log of non-positive value {v}"),
                ));
            }
            (v.ln(), 1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v))
        }
        UnFunc::Sqrt => {
            if v < 0.0 || (v == 0.0 && order >= 1) {
                return Err(ExprError::domain(
                    span,
                    format!("sqrt of non-positive value {v} (derivatives need a positive argument)"),
                ));
            }
            let r = v.sqrt();
            if v == 0.0 {
                (0.0, 0.0, 0.0, 0.0)
            } else {
                (r, 0.5 / r, -0.25 / (r * v), 0.375 / (r * v * v))
            }
        }
        UnFunc::Sin => (v.sin(), v.cos(), -v.sin(), -v.cos()),
        UnFunc::Cos => (v.cos(), -v.sin(), -v.cos(), v.sin()),
        UnFunc::Abs => {
            // d/du |u| = sign(u); sign(0) taken as 0, higher derivatives 0.
            let sg = if v > 0.0 {
                1.0
            } else if v < 0.0 {
                -1.0
            } else {
                0.0
            };
            (v.abs(), sg, 0.0, 0.0)
        }
    };
    Ok(u.compose(f0, f1, f2, f3))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn parses_single_variable() {
        let e = Expression::parse("u").unwrap();
        assert_eq!(e.eval(7.25).unwrap(), 7.25);
        assert!(matches!(e.root.kind, NodeKind::Var));
    }

    #[test]
    fn parses_exp_minus_one_structure() {
        let e = Expression::parse("exp(u)-1").unwrap();
        match &e.root.kind {
            NodeKind::Binary(BinOp::Sub, a, b) => {
                assert!(matches!(a.kind, NodeKind::Unary(UnFunc::Exp, _)));
                assert!(matches!(b.kind, NodeKind::Const(c) if c == 1.0));
            }
            other => panic!("unexpected tree {other:?}"),
        }
    }

    #[test]
    fn precedence_and_value() {
        let e = Expression::parse("2*u^2 + exp(2*u)").unwrap();
        assert_relative_eq!(e.eval(0.0).unwrap(), 1.0);
        // 2*3^2 + e^6
        assert_relative_eq!(e.eval(3.0).unwrap(), 18.0 + 6f64.exp(), max_relative = 1e-15);
    }

    #[test]
    fn derivative_of_exp_2u() {
        let e = Expression::parse("exp(2*u)").unwrap();
        let d = e.eval_with_derivatives(0.0, 3).unwrap();
        assert_relative_eq!(d.value, 1.0);
        assert_relative_eq!(d.d1, 2.0);
        assert_relative_eq!(d.d2, 4.0);
        assert_relative_eq!(d.d3, 8.0);
    }

    #[test]
    fn linear_function_has_zero_curvature() {
        let e = Expression::parse("u").unwrap();
        let d = e.eval_with_derivatives(7.3, 2).unwrap();
        assert_eq!(d.d2, 0.0);
    }

    #[test]
    fn value_of_exp_minus_one_at_one() {
        let e = Expression::parse("exp(u)-1").unwrap();
        assert_relative_eq!(
            e.eval(1.0).unwrap(),
            std::f64::consts::E - 1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn unary_minus_binds_looser_than_power() {
        let e = Expression::parse("-u^2").unwrap();
        assert_relative_eq!(e.eval(3.0).unwrap(), -9.0);
        let e2 = Expression::parse("u^-2").unwrap();
        assert_relative_eq!(e2.eval(2.0).unwrap(), 0.25);
    }

    #[test]
    fn integer_power_of_negative_base_is_exact() {
        let e = Expression::parse("u^3").unwrap();
        let d = e.eval_with_derivatives(-2.0, 2).unwrap();
        assert_relative_eq!(d.value, -8.0);
        assert_relative_eq!(d.d1, 12.0);
        assert_relative_eq!(d.d2, -12.0);
    }

    #[test]
    fn fractional_power_needs_positive_base() {
        let e = Expression::parse("u^0.5").unwrap();
        assert!(matches!(e.eval(-1.0), Err(ExprError::Domain { .. })));
        assert_relative_eq!(e.eval(4.0).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn log_reports_node_position() {
        let e = Expression::parse("1 + log(u)").unwrap();
        match e.eval(-3.0) {
            Err(ExprError::Domain { start, .. }) => assert_eq!(start, 5),
            other => panic!("expected domain error, got {other:?}"),
        }
    }

    #[test]
    fn syntax_error_carries_column() {
        match Expression::parse("2*+u") {
            Err(ExprError::Syntax { col, .. }) => assert_eq!(col, 3),
            other => panic!("expected syntax error, got {other:?}"),
        }
        match Expression::parse("2*w") {
            Err(ExprError::UnknownIdentifier { col, name }) => {
                assert_eq!(col, 3);
                assert_eq!(name, "w");
            }
            other => panic!("expected unknown identifier, got {other:?}"),
        }
    }

    #[test]
    fn division_by_zero_is_domain_error() {
        let e = Expression::parse("1/(u-1)").unwrap();
        assert!(matches!(e.eval(1.0), Err(ExprError::Domain { .. })));
    }

    #[test]
    fn parse_with_x_variable() {
        let e = Expression::parse_with_var("x*(1-x)", "x").unwrap();
        assert_relative_eq!(e.eval(0.5).unwrap(), 0.25);
        assert!(matches!(
            Expression::parse_with_var("u", "x"),
            Err(ExprError::UnknownIdentifier { .. })
        ));
    }

    // -- randomized checks ---------------------------------------------------

    /// Random trees over a numerically safe sub-grammar: exp/sin/cos and
    /// polynomial combinations, bounded depth, coefficients in [-2, 2].
    fn safe_tree(depth: u32) -> BoxedStrategy<String> {
        if depth == 0 {
            prop_oneof![
                Just("u".to_string()),
                (-2.0..2.0f64).prop_map(|c| format!("{c:.4}")),
            ]
            .boxed()
        } else {
            let sub = safe_tree(depth - 1);
            prop_oneof![
                3 => sub.clone(),
                2 => (safe_tree(depth - 1), safe_tree(depth - 1))
                    .prop_map(|(a, b)| format!("({a})+({b})")),
                2 => (safe_tree(depth - 1), safe_tree(depth - 1))
                    .prop_map(|(a, b)| format!("({a})*({b})")),
                1 => sub.clone().prop_map(|a| format!("sin({a})")),
                1 => sub.clone().prop_map(|a| format!("cos({a})")),
                1 => sub.clone().prop_map(|a| format!("exp(0.3*({a}))")),
                1 => (2u32..4u32, sub).prop_map(|(n, a)| format!("({a})^{n}")),
            ]
            .boxed()
        }
    }

    proptest! {
        #[test]
        fn derivatives_match_central_differences(text in safe_tree(3), s in -1.5..1.5f64) {
            let e = Expression::parse(&text).unwrap();
            let d = e.eval_with_derivatives(s, 3).unwrap();
            prop_assume!(d.value.is_finite() && d.d1.is_finite() && d.d2.is_finite());
            let h = 1e-5;
            let f = |x: f64| e.eval(x).unwrap();
            let fd1 = (f(s + h) - f(s - h)) / (2.0 * h);
            let scale1 = 1.0f64.max(d.d1.abs());
            prop_assert!((d.d1 - fd1).abs() <= 1e-6 * scale1,
                "d1 mismatch: ad={} fd={} expr={}", d.d1, fd1, text);
            // Second differences sit on a roundoff floor of ~eps·|f|/h²,
            // so the d2 oracle uses a larger step plus the floor term.
            let h2 = 1e-4;
            let fd2 = (f(s + h2) - 2.0 * f(s) + f(s - h2)) / (h2 * h2);
            let fmax = f(s + h2).abs().max(f(s).abs()).max(f(s - h2).abs());
            let noise2 = 8.0 * f64::EPSILON * fmax.max(1.0) / (h2 * h2);
            let scale2 = 1.0f64.max(d.d2.abs());
            prop_assert!((d.d2 - fd2).abs() <= 1e-6 * scale2 + noise2,
                "d2 mismatch: ad={} fd={} expr={}", d.d2, fd2, text);
        }

        #[test]
        fn print_parse_roundtrip(text in safe_tree(3)) {
            let e = Expression::parse(&text).unwrap();
            let printed = format!("{e}");
            let re = Expression::parse(&printed).unwrap();
            prop_assert!(e == re, "roundtrip changed tree: `{text}` -> `{printed}`");
        }
    }
}
