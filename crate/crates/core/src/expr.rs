//! Arithmetic expressions over named real variables.
//!
//! Used for user-supplied connection coefficients, curve parameterizations and
//! force fields. Expressions can be evaluated and differentiated symbolically.
//!
//! Grammar (standard precedence, left associative):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := ('-' | '+') unary | power
//! power   := primary ('^' unary)?
//! primary := number | constant | variable | func '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Functions: `sin cos tan asin acos atan exp log sqrt abs` (one argument) and `pow` (two);
//! `a^b` is `pow(a, b)` and is right associative, so `-x^2` is `-(x^2)`.
//! Constants: `pi`, `e`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{kind} at position {position}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    /// Byte offset into the source string.
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    Empty,
    UnexpectedChar(char),
    UnexpectedToken(String),
    UnexpectedEnd,
    UnknownIdentifier(String),
    Arity {
        function: String,
        expected: usize,
        got: usize,
    },
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Empty => write!(f, "empty expression"),
            Self::UnexpectedChar(c) => write!(f, "unexpected character `{c}`"),
            Self::UnexpectedToken(t) => write!(f, "unexpected token `{t}`"),
            Self::UnexpectedEnd => write!(f, "unexpected end of input"),
            Self::UnknownIdentifier(name) => write!(f, "unknown identifier `{name}`"),
            Self::Arity {
                function,
                expected,
                got,
            } => write!(f, "`{function}` takes {expected} argument(s), got {got}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Asin,
    Acos,
    Atan,
    Exp,
    Log,
    Sqrt,
    Abs,
    Pow,
}

impl Func {
    pub const ALL: [Func; 11] = [
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Asin,
        Func::Acos,
        Func::Atan,
        Func::Exp,
        Func::Log,
        Func::Sqrt,
        Func::Abs,
        Func::Pow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Asin => "asin",
            Func::Acos => "acos",
            Func::Atan => "atan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Pow => "pow",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Pow => 2,
            _ => 1,
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// Parses `src` with variables named `x1, x2, ...` (mapped to indices 0, 1, ...).
pub fn parse_expression(src: &str) -> Result<Expr, ParseError> {
    Parser::new(src, Resolver::Indexed).parse()
}

/// Parses `src` where the identifiers in `names` are the variables, in order.
pub fn parse_with_variables(src: &str, names: &[&str]) -> Result<Expr, ParseError> {
    Parser::new(src, Resolver::Named(names)).parse()
}

impl Expr {
    pub fn eval(&self, vars: &[f64]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(i) => vars.get(*i).copied().unwrap_or(f64::NAN),
            Expr::Neg(a) => -a.eval(vars),
            Expr::Add(a, b) => a.eval(vars) + b.eval(vars),
            Expr::Sub(a, b) => a.eval(vars) - b.eval(vars),
            Expr::Mul(a, b) => a.eval(vars) * b.eval(vars),
            Expr::Div(a, b) => a.eval(vars) / b.eval(vars),
            Expr::Call(func, args) => {
                let a = args[0].eval(vars);
                match func {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Tan => a.tan(),
                    Func::Asin => a.asin(),
                    Func::Acos => a.acos(),
                    Func::Atan => a.atan(),
                    Func::Exp => a.exp(),
                    Func::Log => a.ln(),
                    Func::Sqrt => a.sqrt(),
                    Func::Abs => a.abs(),
                    Func::Pow => a.powf(args[1].eval(vars)),
                }
            }
        }
    }

    /// One past the largest variable index referenced, i.e. the minimal
    /// length of the slice passed to [`Expr::eval`].
    pub fn arity(&self) -> usize {
        match self {
            Expr::Num(_) => 0,
            Expr::Var(i) => i + 1,
            Expr::Neg(a) => a.arity(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.arity().max(b.arity())
            }
            Expr::Call(_, args) => args.iter().map(Expr::arity).max().unwrap_or(0),
        }
    }

    pub fn is_constant(&self) -> bool {
        self.arity() == 0
    }

    /// Symbolic partial derivative with respect to variable `var`.
    pub fn derivative(&self, var: usize) -> Expr {
        match self {
            Expr::Num(_) => Expr::Num(0.0),
            Expr::Var(i) => Expr::Num(if *i == var { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.derivative(var)),
            Expr::Add(a, b) => add(a.derivative(var), b.derivative(var)),
            Expr::Sub(a, b) => sub(a.derivative(var), b.derivative(var)),
            Expr::Mul(a, b) => add(
                mul(a.derivative(var), (**b).clone()),
                mul((**a).clone(), b.derivative(var)),
            ),
            Expr::Div(a, b) => {
                // (a'b - ab') / b^2
                let num = sub(
                    mul(a.derivative(var), (**b).clone()),
                    mul((**a).clone(), b.derivative(var)),
                );
                div(num, mul((**b).clone(), (**b).clone()))
            }
            Expr::Call(func, args) => {
                let a = &args[0];
                let da = a.derivative(var);
                if matches!(da, Expr::Num(v) if v == 0.0) && *func != Func::Pow {
                    return Expr::Num(0.0);
                }
                let call = |f: Func, x: Expr| Expr::Call(f, vec![x]);
                match func {
                    Func::Sin => mul(call(Func::Cos, a.clone()), da),
                    Func::Cos => neg(mul(call(Func::Sin, a.clone()), da)),
                    Func::Tan => div(
                        da,
                        mul(call(Func::Cos, a.clone()), call(Func::Cos, a.clone())),
                    ),
                    Func::Asin => div(da, call(Func::Sqrt, sub(Expr::Num(1.0), mul(a.clone(), a.clone())))),
                    Func::Acos => neg(div(da, call(Func::Sqrt, sub(Expr::Num(1.0), mul(a.clone(), a.clone()))))),
                    Func::Atan => div(da, add(Expr::Num(1.0), mul(a.clone(), a.clone()))),
                    Func::Exp => mul(self.clone(), da),
                    Func::Log => div(da, a.clone()),
                    Func::Sqrt => div(da, mul(Expr::Num(2.0), self.clone())),
                    Func::Abs => mul(da, div(a.clone(), self.clone())),
                    Func::Pow => {
                        let b = &args[1];
                        let db = b.derivative(var);
                        if b.is_constant() {
                            let lowered = Expr::Call(
                                Func::Pow,
                                vec![a.clone(), sub(b.clone(), Expr::Num(1.0))],
                            );
                            mul(mul(b.clone(), lowered), da)
                        } else {
                            // d(a^b) = a^b (b' ln a + b a'/a)
                            let inner = add(
                                mul(db, call(Func::Log, a.clone())),
                                div(mul(b.clone(), da), a.clone()),
                            );
                            mul(self.clone(), inner)
                        }
                    }
                }
            }
        }
    }

    /// Renders the expression with the given variable names; the output
    /// re-parses to an equivalent tree.
    pub fn display_with<'a>(&'a self, names: &'a [&'a str]) -> impl fmt::Display + 'a {
        Printer { expr: self, names: Some(names) }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        Printer { expr: self, names: None }.fmt(f)
    }
}

struct Printer<'a> {
    expr: &'a Expr,
    names: Option<&'a [&'a str]>,
}

impl Printer<'_> {
    fn child<'b>(&self, expr: &'b Expr) -> Printer<'b>
    where
        Self: 'b,
    {
        Printer {
            expr,
            names: self.names,
        }
    }
}

impl fmt::Display for Printer<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.expr {
            Expr::Num(v) if *v < 0.0 => write!(f, "(-{:?})", -v),
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(i) => match self.names.and_then(|n| n.get(*i)) {
                Some(name) => write!(f, "{name}"),
                None => write!(f, "x{}", i + 1),
            },
            Expr::Neg(a) => write!(f, "(-{})", self.child(a)),
            Expr::Add(a, b) => write!(f, "({} + {})", self.child(a), self.child(b)),
            Expr::Sub(a, b) => write!(f, "({} - {})", self.child(a), self.child(b)),
            Expr::Mul(a, b) => write!(f, "({} * {})", self.child(a), self.child(b)),
            Expr::Div(a, b) => write!(f, "({} / {})", self.child(a), self.child(b)),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (k, arg) in args.iter().enumerate() {
                    if k > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{}", self.child(arg))?;
                }
                write!(f, ")")
            }
        }
    }
}

fn is_num(e: &Expr, v: f64) -> bool {
    matches!(e, Expr::Num(x) if *x == v)
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(v) => Expr::Num(-v),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x + y),
        _ if is_num(&a, 0.0) => b,
        _ if is_num(&b, 0.0) => a,
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x - y),
        _ if is_num(&b, 0.0) => a,
        _ if is_num(&a, 0.0) => neg(b),
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x * y),
        _ if is_num(&a, 0.0) || is_num(&b, 0.0) => Expr::Num(0.0),
        _ if is_num(&a, 1.0) => b,
        _ if is_num(&b, 1.0) => a,
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        _ if is_num(&a, 0.0) => Expr::Num(0.0),
        _ if is_num(&b, 1.0) => a,
        _ => Expr::Div(Box::new(a), Box::new(b)),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

fn tokenize(src: &str) -> Result<Vec<(Token, usize)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let simple = match c {
            '+' => Some(Token::Plus),
            '-' => Some(Token::Minus),
            '*' => Some(Token::Star),
            '/' => Some(Token::Slash),
            '^' => Some(Token::Caret),
            '(' => Some(Token::LParen),
            ')' => Some(Token::RParen),
            ',' => Some(Token::Comma),
            _ => None,
        };
        if let Some(tok) = simple {
            out.push((tok, start));
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            let value: f64 = text.parse().map_err(|_| ParseError {
                kind: ParseErrorKind::UnexpectedToken(text.to_string()),
                position: start,
            })?;
            out.push((Token::Num(value), start));
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Token::Ident(src[start..i].to_string()), start));
        } else {
            let ch = src[start..].chars().next().unwrap_or(c);
            return Err(ParseError {
                kind: ParseErrorKind::UnexpectedChar(ch),
                position: start,
            });
        }
    }
    Ok(out)
}

enum Resolver<'a> {
    Indexed,
    Named(&'a [&'a str]),
}

impl Resolver<'_> {
    fn resolve(&self, name: &str) -> Option<usize> {
        match self {
            Resolver::Indexed => {
                let digits = name.strip_prefix('x')?;
                if digits.is_empty()
                    || digits.starts_with('0')
                    || !digits.bytes().all(|b| b.is_ascii_digit())
                {
                    return None;
                }
                digits.parse::<usize>().ok().map(|k| k - 1)
            }
            Resolver::Named(names) => names.iter().position(|n| *n == name),
        }
    }
}

struct Parser<'a> {
    src_len: usize,
    tokens: Vec<(Token, usize)>,
    pos: usize,
    resolver: Resolver<'a>,
    lex_error: Option<ParseError>,
}

impl<'a> Parser<'a> {
    fn new(src: &str, resolver: Resolver<'a>) -> Self {
        let (tokens, lex_error) = match tokenize(src) {
            Ok(t) => (t, None),
            Err(e) => (Vec::new(), Some(e)),
        };
        Parser {
            src_len: src.len(),
            tokens,
            pos: 0,
            resolver,
            lex_error,
        }
    }

    fn parse(mut self) -> Result<Expr, ParseError> {
        if let Some(err) = self.lex_error.take() {
            return Err(err);
        }
        if self.tokens.is_empty() {
            return Err(ParseError {
                kind: ParseErrorKind::Empty,
                position: 0,
            });
        }
        let expr = self.expr()?;
        if let Some((tok, at)) = self.tokens.get(self.pos) {
            return Err(ParseError {
                kind: ParseErrorKind::UnexpectedToken(token_text(tok)),
                position: *at,
            });
        }
        Ok(expr)
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(t, _)| t)
    }

    fn next(&mut self) -> Result<(Token, usize), ParseError> {
        let item = self.tokens.get(self.pos).cloned().ok_or(ParseError {
            kind: ParseErrorKind::UnexpectedEnd,
            position: self.src_len,
        })?;
        self.pos += 1;
        Ok(item)
    }

    fn expect(&mut self, want: Token) -> Result<(), ParseError> {
        let (tok, at) = self.next()?;
        if tok == want {
            Ok(())
        } else {
            Err(ParseError {
                kind: ParseErrorKind::UnexpectedToken(token_text(&tok)),
                position: at,
            })
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Token::Minus) => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.pos += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(Token::Slash) => {
                    self.pos += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some(Token::Minus) => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Some(Token::Plus) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if self.peek() == Some(&Token::Caret) {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Expr::Call(Func::Pow, vec![base, exponent]));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let (tok, at) = self.next()?;
        match tok {
            Token::Num(v) => Ok(Expr::Num(v)),
            Token::LParen => {
                let inner = self.expr()?;
                self.expect(Token::RParen)?;
                Ok(inner)
            }
            Token::Ident(name) => {
                if self.peek() == Some(&Token::LParen) {
                    let func = Func::from_name(&name).ok_or(ParseError {
                        kind: ParseErrorKind::UnknownIdentifier(name.clone()),
                        position: at,
                    })?;
                    self.pos += 1;
                    let mut args = vec![self.expr()?];
                    while self.peek() == Some(&Token::Comma) {
                        self.pos += 1;
                        args.push(self.expr()?);
                    }
                    self.expect(Token::RParen)?;
                    if args.len() != func.arity() {
                        return Err(ParseError {
                            kind: ParseErrorKind::Arity {
                                function: name,
                                expected: func.arity(),
                                got: args.len(),
                            },
                            position: at,
                        });
                    }
                    return Ok(Expr::Call(func, args));
                }
                if let Some(index) = self.resolver.resolve(&name) {
                    return Ok(Expr::Var(index));
                }
                match name.as_str() {
                    "pi" => Ok(Expr::Num(std::f64::consts::PI)),
                    "e" => Ok(Expr::Num(std::f64::consts::E)),
                    _ => Err(ParseError {
                        kind: ParseErrorKind::UnknownIdentifier(name),
                        position: at,
                    }),
                }
            }
            other => Err(ParseError {
                kind: ParseErrorKind::UnexpectedToken(token_text(&other)),
                position: at,
            }),
        }
    }
}

fn token_text(tok: &Token) -> String {
    match tok {
        Token::Num(v) => format!("{v}"),
        Token::Ident(s) => s.clone(),
        Token::Plus => "+".into(),
        Token::Minus => "-".into(),
        Token::Star => "*".into(),
        Token::Slash => "/".into(),
        Token::Caret => "^".into(),
        Token::LParen => "(".into(),
        Token::RParen => ")".into(),
        Token::Comma => ",".into(),
    }
}
