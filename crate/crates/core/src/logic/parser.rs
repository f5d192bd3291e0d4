//! Recursive-descent parser for the formula DSL.
//!
//! Precedence from loosest to tightest: `or`, `and`, temporal (`G`, `F`,
//! infix `U`), spatial (`E`, `somewhere`, `everywhere`, infix `R`,
//! `surround`), `not`, atoms.

use super::{Cmp, Dialect, DistInterval, Expr, Formula, LogicError, Predicate, TimeInterval};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Comma,
    Plus,
    Minus,
    Star,
    Ge,
    Le,
    Gt,
    Lt,
    EqEq,
    Eof,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn syntax(line: usize, col: usize, msg: impl Into<String>) -> LogicError {
    LogicError::Syntax { line, col, msg: msg.into() }
}

fn lex(text: &str) -> Result<Vec<Token>, LogicError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    while i < chars.len() {
        let c = chars[i];
        let (l0, c0) = (line, col);
        let mut push = |tok: Tok, n: usize, i: &mut usize, col: &mut usize| {
            out.push(Token { tok, line: l0, col: c0 });
            *i += n;
            *col += n;
        };
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => {
                i += 1;
                col += 1;
            }
            '(' => push(Tok::LParen, 1, &mut i, &mut col),
            ')' => push(Tok::RParen, 1, &mut i, &mut col),
            '[' => push(Tok::LBracket, 1, &mut i, &mut col),
            ']' => push(Tok::RBracket, 1, &mut i, &mut col),
            '{' => push(Tok::LBrace, 1, &mut i, &mut col),
            '}' => push(Tok::RBrace, 1, &mut i, &mut col),
            ',' => push(Tok::Comma, 1, &mut i, &mut col),
            '+' => push(Tok::Plus, 1, &mut i, &mut col),
            '-' => push(Tok::Minus, 1, &mut i, &mut col),
            '*' => push(Tok::Star, 1, &mut i, &mut col),
            '>' | '<' | '=' => {
                let next = chars.get(i + 1).copied();
                match (c, next) {
                    ('>', Some('=')) => push(Tok::Ge, 2, &mut i, &mut col),
                    ('<', Some('=')) => push(Tok::Le, 2, &mut i, &mut col),
                    ('=', Some('=')) => push(Tok::EqEq, 2, &mut i, &mut col),
                    ('>', _) => push(Tok::Gt, 1, &mut i, &mut col),
                    ('<', _) => push(Tok::Lt, 1, &mut i, &mut col),
                    _ => return Err(syntax(l0, c0, "unexpected `=`")),
                }
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let s: String = chars[start..i].iter().collect();
                let v: f64 = s.parse().map_err(|_| syntax(l0, c0, format!("bad number `{s}`")))?;
                out.push(Token { tok: Tok::Num(v), line: l0, col: c0 });
                col += i - start;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let s: String = chars[start..i].iter().collect();
                out.push(Token { tok: Tok::Ident(s), line: l0, col: c0 });
                col += i - start;
            }
            other => return Err(syntax(l0, c0, format!("unexpected character `{other}`"))),
        }
    }
    out.push(Token { tok: Tok::Eof, line, col });
    Ok(out)
}

const SPATIAL_PREFIX: [&str; 3] = ["E", "somewhere", "everywhere"];

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    dialect: Dialect,
}

type PResult<T> = Result<T, LogicError>;

fn err_pos(e: &LogicError) -> (usize, usize) {
    match e {
        LogicError::Syntax { line, col, .. }
        | LogicError::SpatialInStl { line, col, .. }
        | LogicError::UnboundedTime { line, col } => (*line, *col),
        LogicError::NegationNotEliminable(_) => (0, 0),
    }
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].tok
    }

    fn here(&self) -> (usize, usize) {
        let t = &self.toks[self.pos];
        (t.line, t.col)
    }

    fn error(&self, msg: impl Into<String>) -> LogicError {
        let (l, c) = self.here();
        syntax(l, c, msg)
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok, what: &str) -> PResult<()> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.error(format!("expected {what}, found {}", describe(self.peek()))))
        }
    }

    fn is_ident(&self, name: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == name)
    }

    /// Keyword operator: identifier immediately followed by `[`.
    fn is_op(&self, name: &str) -> bool {
        self.is_ident(name) && *self.peek_at(1) == Tok::LBracket
    }

    fn check_spatial(&self, op: &str) -> PResult<()> {
        if self.dialect == Dialect::Stl {
            let (line, col) = self.here();
            return Err(LogicError::SpatialInStl { op: op.to_string(), line, col });
        }
        Ok(())
    }

    fn formula(&mut self) -> PResult<Formula> {
        let mut f = self.and_level()?;
        while self.is_ident("or") {
            self.bump();
            let r = self.and_level()?;
            f = Formula::or(f, r);
        }
        Ok(f)
    }

    fn and_level(&mut self) -> PResult<Formula> {
        let mut f = self.temporal()?;
        while self.is_ident("and") {
            self.bump();
            let r = self.temporal()?;
            f = Formula::and(f, r);
        }
        Ok(f)
    }

    fn temporal(&mut self) -> PResult<Formula> {
        if self.is_op("G") || self.is_op("F") {
            let always = self.is_ident("G");
            self.bump();
            let i = self.time_interval()?;
            let a = Box::new(self.temporal()?);
            return Ok(if always { Formula::Always(i, a) } else { Formula::Eventually(i, a) });
        }
        let mut f = self.spatial()?;
        while self.is_op("U") {
            self.bump();
            let i = self.time_interval()?;
            let r = self.spatial()?;
            f = Formula::Until(i, Box::new(f), Box::new(r));
        }
        Ok(f)
    }

    fn spatial(&mut self) -> PResult<Formula> {
        if let Some(op) = SPATIAL_PREFIX.iter().find(|op| self.is_op(op)) {
            self.check_spatial(op)?;
            self.bump();
            let d = self.dist_interval()?;
            let a = Box::new(self.spatial()?);
            return Ok(match *op {
                "E" => Formula::Escape(d, a),
                "somewhere" => Formula::Somewhere(d, a),
                _ => Formula::Everywhere(d, a),
            });
        }
        let mut f = self.unary()?;
        loop {
            if self.is_op("R") {
                self.check_spatial("R")?;
                self.bump();
                let d = self.dist_interval()?;
                let r = self.unary()?;
                f = Formula::Reach(d, Box::new(f), Box::new(r));
            } else if self.is_op("surround") {
                self.check_spatial("surround")?;
                self.bump();
                self.expect(Tok::LBracket, "`[`")?;
                let d = self.nonneg_number(true)?;
                if !d.is_finite() {
                    return Err(self.error("surround bound must be finite"));
                }
                self.expect(Tok::RBracket, "`]`")?;
                let r = self.unary()?;
                f = Formula::Surround(d, Box::new(f), Box::new(r));
            } else {
                return Ok(f);
            }
        }
    }

    fn unary(&mut self) -> PResult<Formula> {
        if self.is_ident("not") {
            self.bump();
            return Ok(Formula::not(self.unary()?));
        }
        // A prefix operator in operand position extends as far right as possible.
        if self.is_op("G") || self.is_op("F") || SPATIAL_PREFIX.iter().any(|op| self.is_op(op)) {
            return self.temporal();
        }
        self.atom()
    }

    fn atom(&mut self) -> PResult<Formula> {
        if self.is_ident("true") {
            self.bump();
            return Ok(Formula::True);
        }
        if self.is_ident("false") {
            self.bump();
            return Ok(Formula::False);
        }
        if *self.peek() == Tok::LParen {
            let save = self.pos;
            let pred_err = match self.predicate() {
                Ok(p) => return Ok(p),
                Err(e) => e,
            };
            self.pos = save;
            self.bump();
            let inner = self.formula().and_then(|f| {
                self.expect(Tok::RParen, "`)`")?;
                Ok(f)
            });
            return inner.map_err(|e| if err_pos(&pred_err) > err_pos(&e) { pred_err } else { e });
        }
        self.predicate()
    }

    fn predicate(&mut self) -> PResult<Formula> {
        let lhs = self.expr()?;
        let cmp = match self.peek() {
            Tok::Ge => Cmp::Ge,
            Tok::Le => Cmp::Le,
            Tok::Gt | Tok::Lt => {
                return Err(self.error("strict comparisons are not supported; use `>=` or `<=`"))
            }
            Tok::EqEq => return Err(self.error("equality is not supported; use `>=` or `<=`")),
            t => return Err(self.error(format!("expected `>=` or `<=`, found {}", describe(t)))),
        };
        self.bump();
        let rhs = self.expr()?;
        Ok(Formula::Pred(Predicate { id: 0, lhs, cmp, rhs }))
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut e = self.term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    e = Expr::Add(Box::new(e), Box::new(self.term()?));
                }
                Tok::Minus => {
                    self.bump();
                    e = Expr::Sub(Box::new(e), Box::new(self.term()?));
                }
                _ => return Ok(e),
            }
        }
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut e = self.factor()?;
        while *self.peek() == Tok::Star {
            self.bump();
            e = Expr::Mul(Box::new(e), Box::new(self.factor()?));
        }
        Ok(e)
    }

    fn factor(&mut self) -> PResult<Expr> {
        if *self.peek() == Tok::Minus {
            self.bump();
            if let Tok::Num(v) = *self.peek() {
                self.bump();
                return Ok(Expr::Const(-v));
            }
            return Ok(Expr::Neg(Box::new(self.factor()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Const(v))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => match name.as_str() {
                "s" => {
                    self.bump();
                    self.expect(Tok::LBracket, "`[`")?;
                    let i = self.index()?;
                    self.expect(Tok::RBracket, "`]`")?;
                    Ok(Expr::Var(i))
                }
                "min" | "max" | "norm2" | "norminf" => {
                    self.bump();
                    self.expect(Tok::LParen, "`(`")?;
                    let args = self.expr_list(Tok::RParen)?;
                    Ok(match name.as_str() {
                        "min" => Expr::Min(args),
                        "max" => Expr::Max(args),
                        "norm2" => Expr::Norm2(args),
                        _ => Expr::NormInf(args),
                    })
                }
                "mindist_inf" => {
                    self.bump();
                    self.expect(Tok::LParen, "`(`")?;
                    self.expect(Tok::LParen, "`(` opening the argument tuple")?;
                    let args = self.expr_list(Tok::RParen)?;
                    self.expect(Tok::Comma, "`,`")?;
                    self.expect(Tok::LBrace, "`{`")?;
                    let mut points = Vec::new();
                    loop {
                        let (l, c) = self.here();
                        self.expect(Tok::LParen, "`(` opening a point")?;
                        let mut p = vec![self.signed_number()?];
                        while *self.peek() == Tok::Comma {
                            self.bump();
                            p.push(self.signed_number()?);
                        }
                        self.expect(Tok::RParen, "`)`")?;
                        if p.len() != args.len() {
                            return Err(syntax(l, c, format!("point has {} coordinates, expected {}", p.len(), args.len())));
                        }
                        points.push(p);
                        if *self.peek() == Tok::Comma {
                            self.bump();
                        } else {
                            break;
                        }
                    }
                    self.expect(Tok::RBrace, "`}`")?;
                    self.expect(Tok::RParen, "`)`")?;
                    Ok(Expr::MinDistInf { args, points })
                }
                other => Err(self.error(format!("unknown identifier `{other}` in expression"))),
            },
            t => Err(self.error(format!("expected an expression, found {}", describe(&t)))),
        }
    }

    fn expr_list(&mut self, close: Tok) -> PResult<Vec<Expr>> {
        let mut v = vec![self.expr()?];
        while *self.peek() == Tok::Comma {
            self.bump();
            v.push(self.expr()?);
        }
        self.expect(close, "closing delimiter")?;
        Ok(v)
    }

    fn signed_number(&mut self) -> PResult<f64> {
        let neg = if *self.peek() == Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        match *self.peek() {
            Tok::Num(v) => {
                self.bump();
                Ok(if neg { -v } else { v })
            }
            ref t => Err(self.error(format!("expected a number, found {}", describe(t)))),
        }
    }

    fn index(&mut self) -> PResult<usize> {
        match *self.peek() {
            Tok::Num(v) if v >= 0.0 && v.fract() == 0.0 && v < 1e15 => {
                self.bump();
                Ok(v as usize)
            }
            ref t => Err(self.error(format!("expected a non-negative integer, found {}", describe(t)))),
        }
    }

    fn nonneg_number(&mut self, allow_inf: bool) -> PResult<f64> {
        if allow_inf && self.is_ident("inf") {
            self.bump();
            return Ok(f64::INFINITY);
        }
        match *self.peek() {
            Tok::Num(v) => {
                self.bump();
                Ok(v)
            }
            ref t => Err(self.error(format!("expected a non-negative number, found {}", describe(t)))),
        }
    }

    fn time_interval(&mut self) -> PResult<TimeInterval> {
        self.expect(Tok::LBracket, "`[`")?;
        let lo = self.index()?;
        self.expect(Tok::Comma, "`,`")?;
        if self.is_ident("inf") {
            let (line, col) = self.here();
            return Err(LogicError::UnboundedTime { line, col });
        }
        let (l, c) = self.here();
        let hi = self.index()?;
        self.expect(Tok::RBracket, "`]`")?;
        if lo > hi {
            return Err(syntax(l, c, format!("empty time interval [{lo},{hi}]")));
        }
        Ok(TimeInterval::new(lo, hi))
    }

    fn dist_interval(&mut self) -> PResult<DistInterval> {
        self.expect(Tok::LBracket, "`[`")?;
        let (l, c) = self.here();
        let lo = self.nonneg_number(false)?;
        self.expect(Tok::Comma, "`,`")?;
        let hi = self.nonneg_number(true)?;
        self.expect(Tok::RBracket, "`]`")?;
        if lo > hi {
            return Err(syntax(l, c, format!("empty distance interval [{lo},{hi}]")));
        }
        Ok(DistInterval::new(lo, hi))
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(v) => format!("number `{v}`"),
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Eof => "end of input".into(),
        other => format!("{other:?}"),
    }
}

/// Parses a formula. Predicate ids are assigned left to right from 0.
pub fn parse(text: &str, dialect: Dialect) -> Result<Formula, LogicError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, dialect };
    let mut f = p.formula()?;
    if *p.peek() != Tok::Eof {
        return Err(p.error(format!("unexpected {}", describe(p.peek()))));
    }
    f.renumber();
    Ok(f)
}
