//! Recursive-descent parser for the indentation-delimited program language.

use super::{BinOp, CallSite, Expr, FunctionRegistry, ProgramIR, Stmt, UnOp};
use crate::value::Value;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("syntax error at {line}:{col}: {message}")]
    Syntax {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("unknown function {name:?} at {line}:{col}")]
    UnknownFunction {
        name: String,
        line: usize,
        col: usize,
    },
    #[error("{name:?} takes {expected} arguments, got {got} at {line}:{col}")]
    ArityMismatch {
        name: String,
        expected: usize,
        got: usize,
        line: usize,
        col: usize,
    },
}

impl ParseError {
    fn syntax(line: usize, col: usize, message: impl Into<String>) -> Self {
        ParseError::Syntax {
            line,
            col,
            message: message.into(),
        }
    }
}

// --- lexer -------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    Str(String),
    Keyword(&'static str),
    Op(&'static str),
    LParen,
    RParen,
    Comma,
    Colon,
    Eq, // bare '='
}

#[derive(Debug, Clone)]
struct SpannedTok {
    tok: Tok,
    line: usize,
    col: usize,
}

const KEYWORDS: &[&str] = &[
    "program", "default", "if", "else", "while", "bound", "return", "and", "or", "not", "true",
    "false",
];

/// One logical source line: indentation depth plus its tokens.
struct Line {
    indent: usize,
    number: usize,
    toks: Vec<SpannedTok>,
}

fn lex_line(text: &str, line_no: usize) -> Result<Option<Line>, ParseError> {
    let without_comment = match split_comment(text) {
        Some(idx) => &text[..idx],
        None => text,
    };
    if without_comment.trim().is_empty() {
        return Ok(None);
    }
    let mut spaces = 0;
    for ch in without_comment.chars() {
        match ch {
            ' ' => spaces += 1,
            '\t' => {
                return Err(ParseError::syntax(
                    line_no,
                    spaces + 1,
                    "tabs are not allowed; indent with 2 spaces",
                ))
            }
            _ => break,
        }
    }
    if spaces % 2 != 0 {
        return Err(ParseError::syntax(
            line_no,
            spaces,
            format!("indentation must be a multiple of 2 spaces, got {spaces}"),
        ));
    }
    let mut toks = Vec::new();
    let chars: Vec<char> = without_comment.chars().collect();
    let mut i = spaces;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        match c {
            ' ' => {
                i += 1;
            }
            '(' => {
                toks.push(spanned(Tok::LParen, line_no, col));
                i += 1;
            }
            ')' => {
                toks.push(spanned(Tok::RParen, line_no, col));
                i += 1;
            }
            ',' => {
                toks.push(spanned(Tok::Comma, line_no, col));
                i += 1;
            }
            ':' => {
                toks.push(spanned(Tok::Colon, line_no, col));
                i += 1;
            }
            '"' => {
                let (s, consumed) = lex_string(&chars[i..], line_no, col)?;
                toks.push(spanned(Tok::Str(s), line_no, col));
                i += consumed;
            }
            '=' => {
                if chars.get(i + 1) == Some(&'=') {
                    toks.push(spanned(Tok::Op("=="), line_no, col));
                    i += 2;
                } else {
                    toks.push(spanned(Tok::Eq, line_no, col));
                    i += 1;
                }
            }
            '!' => {
                if chars.get(i + 1) == Some(&'=') {
                    toks.push(spanned(Tok::Op("!="), line_no, col));
                    i += 2;
                } else {
                    return Err(ParseError::syntax(line_no, col, "expected `!=`"));
                }
            }
            '<' => {
                if chars.get(i + 1) == Some(&'=') {
                    toks.push(spanned(Tok::Op("<="), line_no, col));
                    i += 2;
                } else {
                    toks.push(spanned(Tok::Op("<"), line_no, col));
                    i += 1;
                }
            }
            '>' => {
                if chars.get(i + 1) == Some(&'=') {
                    toks.push(spanned(Tok::Op(">="), line_no, col));
                    i += 2;
                } else {
                    toks.push(spanned(Tok::Op(">"), line_no, col));
                    i += 1;
                }
            }
            '+' => {
                toks.push(spanned(Tok::Op("+"), line_no, col));
                i += 1;
            }
            '-' => {
                toks.push(spanned(Tok::Op("-"), line_no, col));
                i += 1;
            }
            '*' => {
                toks.push(spanned(Tok::Op("*"), line_no, col));
                i += 1;
            }
            '/' => {
                toks.push(spanned(Tok::Op("/"), line_no, col));
                i += 1;
            }
            c if c.is_ascii_digit() => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                let n: f64 = text.parse().map_err(|_| {
                    ParseError::syntax(line_no, col, format!("bad number literal {text:?}"))
                })?;
                toks.push(spanned(Tok::Number(n), line_no, col));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                match KEYWORDS.iter().find(|k| **k == word) {
                    Some(k) => toks.push(spanned(Tok::Keyword(k), line_no, col)),
                    None => toks.push(spanned(Tok::Ident(word), line_no, col)),
                }
            }
            other => {
                return Err(ParseError::syntax(
                    line_no,
                    col,
                    format!("unexpected character {other:?}"),
                ));
            }
        }
    }
    Ok(Some(Line {
        indent: spaces / 2,
        number: line_no,
        toks,
    }))
}

/// Byte index of an unquoted `#`, if any.
fn split_comment(text: &str) -> Option<usize> {
    let mut in_str = false;
    for (idx, ch) in text.char_indices() {
        match ch {
            '"' => in_str = !in_str,
            '#' if !in_str => return Some(idx),
            _ => {}
        }
    }
    None
}

fn lex_string(chars: &[char], line: usize, col: usize) -> Result<(String, usize), ParseError> {
    debug_assert_eq!(chars[0], '"');
    let mut out = String::new();
    let mut i = 1;
    while i < chars.len() {
        match chars[i] {
            '"' => return Ok((out, i + 1)),
            '\\' => {
                let esc = chars.get(i + 1).ok_or_else(|| {
                    ParseError::syntax(line, col + i, "unterminated escape sequence")
                })?;
                match esc {
                    '"' => out.push('"'),
                    '\\' => out.push('\\'),
                    'n' => out.push('\n'),
                    other => {
                        return Err(ParseError::syntax(
                            line,
                            col + i,
                            format!("unknown escape \\{other}"),
                        ))
                    }
                }
                i += 2;
            }
            c => {
                out.push(c);
                i += 1;
            }
        }
    }
    Err(ParseError::syntax(line, col, "unterminated string literal"))
}

fn spanned(tok: Tok, line: usize, col: usize) -> SpannedTok {
    SpannedTok { tok, line, col }
}

// --- parser ------------------------------------------------------------

struct Parser<'a> {
    registry: &'a FunctionRegistry,
    call_sites: Vec<CallSite>,
}

struct LineCursor<'t> {
    toks: &'t [SpannedTok],
    pos: usize,
    line: usize,
}

impl<'t> LineCursor<'t> {
    fn new(line: &'t Line) -> Self {
        Self {
            toks: &line.toks,
            pos: 0,
            line: line.number,
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn next(&mut self) -> Option<&SpannedTok> {
        let t = self.toks.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn here(&self) -> (usize, usize) {
        match self.toks.get(self.pos) {
            Some(t) => (t.line, t.col),
            None => (
                self.line,
                self.toks.last().map(|t| t.col + 1).unwrap_or(1),
            ),
        }
    }

    fn expect(&mut self, want: &Tok, what: &str) -> Result<(), ParseError> {
        let (line, col) = self.here();
        match self.next() {
            Some(t) if &t.tok == want => Ok(()),
            Some(t) => Err(ParseError::syntax(
                t.line,
                t.col,
                format!("expected {what}, found {:?}", t.tok),
            )),
            None => Err(ParseError::syntax(
                line,
                col,
                format!("expected {what} at end of line"),
            )),
        }
    }

    fn expect_end(&self) -> Result<(), ParseError> {
        if let Some(t) = self.toks.get(self.pos) {
            return Err(ParseError::syntax(
                t.line,
                t.col,
                format!("trailing tokens starting at {:?}", t.tok),
            ));
        }
        Ok(())
    }

    fn expect_ident(&mut self, what: &str) -> Result<String, ParseError> {
        let (line, col) = self.here();
        match self.next() {
            Some(SpannedTok {
                tok: Tok::Ident(name),
                ..
            }) => Ok(name.clone()),
            Some(t) => Err(ParseError::syntax(
                t.line,
                t.col,
                format!("expected {what}, found {:?}", t.tok),
            )),
            None => Err(ParseError::syntax(line, col, format!("expected {what}"))),
        }
    }
}

/// Parses source text into an IR, resolving neural calls against the
/// registry. Parsing is deterministic and idempotent.
pub fn parse_program(source: &str, registry: &FunctionRegistry) -> Result<ProgramIR, ParseError> {
    let mut lines = Vec::new();
    for (idx, raw) in source.lines().enumerate() {
        if let Some(line) = lex_line(raw, idx + 1)? {
            lines.push(line);
        }
    }
    if lines.is_empty() {
        return Err(ParseError::syntax(1, 1, "empty program"));
    }

    let mut parser = Parser {
        registry,
        call_sites: Vec::new(),
    };

    // Header: program <name>(<param>) [default <literal>]:
    let header = &lines[0];
    if header.indent != 0 {
        return Err(ParseError::syntax(
            header.number,
            1,
            "program header must not be indented",
        ));
    }
    let mut cur = LineCursor::new(header);
    cur.expect(&Tok::Keyword("program"), "`program`")?;
    let name = cur.expect_ident("program name")?;
    cur.expect(&Tok::LParen, "`(`")?;
    let param = cur.expect_ident("parameter name")?;
    cur.expect(&Tok::RParen, "`)`")?;
    let default_return = if cur.peek() == Some(&Tok::Keyword("default")) {
        cur.next();
        Some(parser.parse_literal(&mut cur)?)
    } else {
        None
    };
    cur.expect(&Tok::Colon, "`:`")?;
    cur.expect_end()?;

    let mut pos = 1;
    let body = parser.parse_block(&lines, &mut pos, 1)?;
    if pos < lines.len() {
        let stray = &lines[pos];
        return Err(ParseError::syntax(
            stray.number,
            1,
            format!(
                "unexpected indentation level {} (expected at most {})",
                stray.indent, 1
            ),
        ));
    }
    if body.is_empty() {
        return Err(ParseError::syntax(
            header.number,
            1,
            "program body is empty",
        ));
    }

    Ok(ProgramIR {
        name,
        param,
        default_return,
        body,
        call_sites: parser.call_sites,
    })
}

impl Parser<'_> {
    fn parse_block(
        &mut self,
        lines: &[Line],
        pos: &mut usize,
        depth: usize,
    ) -> Result<Vec<Stmt>, ParseError> {
        let mut out = Vec::new();
        while *pos < lines.len() {
            let line = &lines[*pos];
            if line.indent < depth {
                break;
            }
            if line.indent > depth {
                return Err(ParseError::syntax(
                    line.number,
                    line.indent * 2,
                    format!(
                        "unexpected indentation level {} (expected {})",
                        line.indent, depth
                    ),
                ));
            }
            out.push(self.parse_stmt(lines, pos, depth)?);
        }
        Ok(out)
    }

    fn parse_stmt(
        &mut self,
        lines: &[Line],
        pos: &mut usize,
        depth: usize,
    ) -> Result<Stmt, ParseError> {
        let line = &lines[*pos];
        let mut cur = LineCursor::new(line);
        match cur.peek() {
            Some(Tok::Keyword("return")) => {
                cur.next();
                let expr = self.parse_expr(&mut cur)?;
                cur.expect_end()?;
                *pos += 1;
                Ok(Stmt::Return(expr))
            }
            Some(Tok::Keyword("if")) => {
                cur.next();
                let cond = self.parse_expr(&mut cur)?;
                cur.expect(&Tok::Colon, "`:`")?;
                cur.expect_end()?;
                *pos += 1;
                let then_body = self.require_block(lines, pos, depth + 1, line.number, "if")?;
                let mut else_body = Vec::new();
                if *pos < lines.len() && lines[*pos].indent == depth {
                    let next = &lines[*pos];
                    if next.toks.first().map(|t| &t.tok) == Some(&Tok::Keyword("else")) {
                        let mut ecur = LineCursor::new(next);
                        ecur.next();
                        ecur.expect(&Tok::Colon, "`:`")?;
                        ecur.expect_end()?;
                        *pos += 1;
                        else_body =
                            self.require_block(lines, pos, depth + 1, next.number, "else")?;
                    }
                }
                Ok(Stmt::If {
                    cond,
                    then_body,
                    else_body,
                })
            }
            Some(Tok::Keyword("else")) => {
                let (l, c) = cur.here();
                Err(ParseError::syntax(l, c, "`else` without matching `if`"))
            }
            Some(Tok::Keyword("while")) => {
                cur.next();
                let cond = self.parse_expr(&mut cur)?;
                let bound = if cur.peek() == Some(&Tok::Keyword("bound")) {
                    cur.next();
                    let (l, c) = cur.here();
                    match cur.next() {
                        Some(SpannedTok {
                            tok: Tok::Number(n),
                            line,
                            col,
                        }) => {
                            if n.fract() != 0.0 || *n < 0.0 || *n > u32::MAX as f64 {
                                return Err(ParseError::syntax(
                                    *line,
                                    *col,
                                    "loop bound must be a nonnegative integer",
                                ));
                            }
                            Some(*n as u32)
                        }
                        _ => {
                            return Err(ParseError::syntax(l, c, "expected integer after `bound`"))
                        }
                    }
                } else {
                    // Accepted here so validation can report it as a
                    // diagnostic instead of a hard parse failure.
                    None
                };
                cur.expect(&Tok::Colon, "`:`")?;
                cur.expect_end()?;
                *pos += 1;
                let body = self.require_block(lines, pos, depth + 1, line.number, "while")?;
                Ok(Stmt::While { cond, bound, body })
            }
            Some(Tok::Ident(_)) => {
                let name = cur.expect_ident("identifier")?;
                cur.expect(&Tok::Eq, "`=`")?;
                let expr = self.parse_expr(&mut cur)?;
                cur.expect_end()?;
                *pos += 1;
                Ok(Stmt::Assign { name, expr })
            }
            _ => {
                let (l, c) = cur.here();
                Err(ParseError::syntax(
                    l,
                    c,
                    "expected a statement (assignment, if, while, or return)",
                ))
            }
        }
    }

    fn require_block(
        &mut self,
        lines: &[Line],
        pos: &mut usize,
        depth: usize,
        at_line: usize,
        kind: &str,
    ) -> Result<Vec<Stmt>, ParseError> {
        let body = self.parse_block(lines, pos, depth)?;
        if body.is_empty() {
            return Err(ParseError::syntax(
                at_line,
                1,
                format!("`{kind}` block at line {at_line} is empty"),
            ));
        }
        Ok(body)
    }

    fn parse_literal(&mut self, cur: &mut LineCursor) -> Result<Value, ParseError> {
        let (l, c) = cur.here();
        match cur.next() {
            Some(SpannedTok {
                tok: Tok::Number(n),
                ..
            }) => Ok(Value::Number(*n)),
            Some(SpannedTok {
                tok: Tok::Str(s), ..
            }) => Ok(Value::Text(s.clone())),
            Some(SpannedTok {
                tok: Tok::Keyword("true"),
                ..
            }) => Ok(Value::Bool(true)),
            Some(SpannedTok {
                tok: Tok::Keyword("false"),
                ..
            }) => Ok(Value::Bool(false)),
            Some(t) => Err(ParseError::syntax(
                t.line,
                t.col,
                format!("expected a literal, found {:?}", t.tok),
            )),
            None => Err(ParseError::syntax(l, c, "expected a literal")),
        }
    }

    // Precedence climbing: or < and < not < comparison < additive <
    // multiplicative < unary minus < primary.
    fn parse_expr(&mut self, cur: &mut LineCursor) -> Result<Expr, ParseError> {
        self.parse_or(cur)
    }

    fn parse_or(&mut self, cur: &mut LineCursor) -> Result<Expr, ParseError> {
        let mut lhs = self.parse_and(cur)?;
        while cur.peek() == Some(&Tok::Keyword("or")) {
            cur.next();
            let rhs = self.parse_and(cur)?;
            lhs = binary(BinOp::Or, lhs, rhs);
        }
        Ok(lhs)
    }

    fn parse_and(&mut self, cur: &mut LineCursor) -> Result<Expr, ParseError> {
        let mut lhs = self.parse_not(cur)?;
        while cur.peek() == Some(&Tok::Keyword("and")) {
            cur.next();
            let rhs = self.parse_not(cur)?;
            lhs = binary(BinOp::And, lhs, rhs);
        }
        Ok(lhs)
    }

    fn parse_not(&mut self, cur: &mut LineCursor) -> Result<Expr, ParseError> {
        if cur.peek() == Some(&Tok::Keyword("not")) {
            cur.next();
            let inner = self.parse_not(cur)?;
            return Ok(Expr::Unary {
                op: UnOp::Not,
                expr: Box::new(inner),
            });
        }
        self.parse_comparison(cur)
    }

    fn parse_comparison(&mut self, cur: &mut LineCursor) -> Result<Expr, ParseError> {
        let lhs = self.parse_additive(cur)?;
        let op = match cur.peek() {
            Some(Tok::Op("==")) => Some(BinOp::Eq),
            Some(Tok::Op("!=")) => Some(BinOp::Ne),
            Some(Tok::Op("<")) => Some(BinOp::Lt),
            Some(Tok::Op("<=")) => Some(BinOp::Le),
            Some(Tok::Op(">")) => Some(BinOp::Gt),
            Some(Tok::Op(">=")) => Some(BinOp::Ge),
            _ => None,
        };
        if let Some(op) = op {
            cur.next();
            let rhs = self.parse_additive(cur)?;
            return Ok(binary(op, lhs, rhs));
        }
        Ok(lhs)
    }

    fn parse_additive(&mut self, cur: &mut LineCursor) -> Result<Expr, ParseError> {
        let mut lhs = self.parse_multiplicative(cur)?;
        loop {
            let op = match cur.peek() {
                Some(Tok::Op("+")) => BinOp::Add,
                Some(Tok::Op("-")) => BinOp::Sub,
                _ => break,
            };
            cur.next();
            let rhs = self.parse_multiplicative(cur)?;
            lhs = binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn parse_multiplicative(&mut self, cur: &mut LineCursor) -> Result<Expr, ParseError> {
        let mut lhs = self.parse_unary(cur)?;
        loop {
            let op = match cur.peek() {
                Some(Tok::Op("*")) => BinOp::Mul,
                Some(Tok::Op("/")) => BinOp::Div,
                _ => break,
            };
            cur.next();
            let rhs = self.parse_unary(cur)?;
            lhs = binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn parse_unary(&mut self, cur: &mut LineCursor) -> Result<Expr, ParseError> {
        if cur.peek() == Some(&Tok::Op("-")) {
            cur.next();
            let inner = self.parse_unary(cur)?;
            return Ok(Expr::Unary {
                op: UnOp::Neg,
                expr: Box::new(inner),
            });
        }
        self.parse_primary(cur)
    }

    fn parse_primary(&mut self, cur: &mut LineCursor) -> Result<Expr, ParseError> {
        let (l, c) = cur.here();
        match cur.next().cloned() {
            Some(SpannedTok {
                tok: Tok::Number(n),
                ..
            }) => Ok(Expr::Literal(Value::Number(n))),
            Some(SpannedTok {
                tok: Tok::Str(s), ..
            }) => Ok(Expr::Literal(Value::Text(s))),
            Some(SpannedTok {
                tok: Tok::Keyword("true"),
                ..
            }) => Ok(Expr::Literal(Value::Bool(true))),
            Some(SpannedTok {
                tok: Tok::Keyword("false"),
                ..
            }) => Ok(Expr::Literal(Value::Bool(false))),
            Some(SpannedTok { tok: Tok::LParen, .. }) => {
                let inner = self.parse_expr(cur)?;
                cur.expect(&Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Some(SpannedTok {
                tok: Tok::Ident(name),
                line,
                col,
            }) => {
                if cur.peek() == Some(&Tok::LParen) {
                    cur.next();
                    self.parse_call(cur, name, line, col)
                } else {
                    Ok(Expr::Var(name))
                }
            }
            Some(t) => Err(ParseError::syntax(
                t.line,
                t.col,
                format!("expected an expression, found {:?}", t.tok),
            )),
            None => Err(ParseError::syntax(l, c, "expected an expression")),
        }
    }

    fn parse_call(
        &mut self,
        cur: &mut LineCursor,
        name: String,
        line: usize,
        col: usize,
    ) -> Result<Expr, ParseError> {
        let func = self
            .registry
            .by_name(&name)
            .ok_or_else(|| ParseError::UnknownFunction {
                name: name.clone(),
                line,
                col,
            })?
            .clone();

        // First argument is the streamed input (an identifier), the rest are
        // literal static arguments.
        let input_var = cur.expect_ident("call input (an identifier)")?;
        let mut static_args = Vec::new();
        loop {
            match cur.peek() {
                Some(Tok::RParen) => {
                    cur.next();
                    break;
                }
                Some(Tok::Comma) => {
                    cur.next();
                    static_args.push(self.parse_literal(cur)?);
                }
                _ => {
                    let (l, c) = cur.here();
                    return Err(ParseError::syntax(l, c, "expected `,` or `)` in call"));
                }
            }
        }
        let got = 1 + static_args.len();
        if got != func.arity {
            return Err(ParseError::ArityMismatch {
                name,
                expected: func.arity,
                got,
                line,
                col,
            });
        }
        let site_index = self.call_sites.len();
        self.call_sites.push(CallSite {
            index: site_index + 1,
            function_id: func.id,
            input_var,
            static_args,
        });
        Ok(Expr::Call(site_index))
    }
}

fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Expr {
    Expr::Binary {
        op,
        lhs: Box::new(lhs),
        rhs: Box::new(rhs),
    }
}
