//! The mini-language for foundation-model programs.
//!
//! Programs interleave symbolic control flow (let-bindings, `if`/`else`,
//! bounded `while`, `return`) with calls to generic neural functions. A call
//! expression is a *call site*; sites are enumerated in lexical source order
//! and each one is bound to a backend per episode by the policy layer.
//!
//! Source format (UTF-8, extension `.fmp`, 2-space indentation, `#` comments):
//!
//! ```text
//! program cat_on_laptop(frame):
//!   has_cat = find(frame, "cat")
//!   has_laptop = find(frame, "laptop")
//!   if has_cat and has_laptop:
//!     return vqa(frame, "is the cat sitting or laying on the laptop keyboard?")
//!   return "no"
//! ```

mod parser;
mod validate;

pub use parser::{parse_program, ParseError};
pub use validate::{validate_program, Diagnostic};

use crate::value::{ReturnKind, Value};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;

/// A generic neural function: a named capability with a fixed signature,
/// implementable by any of its registered backends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenericFunction {
    /// Unique identifier within a registry.
    pub id: String,
    /// Identifier used in program source. Usually equal to `id`.
    pub name: String,
    /// Total argument count, including the streamed input (so always >= 1).
    pub arity: usize,
    pub return_kind: ReturnKind,
}

impl GenericFunction {
    pub fn new(name: &str, arity: usize, return_kind: ReturnKind) -> Self {
        Self {
            id: name.to_string(),
            name: name.to_string(),
            arity,
            return_kind,
        }
    }
}

/// Registry of generic functions available to a program.
#[derive(Debug, Clone, Default)]
pub struct FunctionRegistry {
    functions: Vec<GenericFunction>,
    by_name: HashMap<String, usize>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RegistryError {
    #[error("duplicate function id {0:?}")]
    DuplicateFunction(String),
    #[error("function arity must be >= 1 (the streamed input), got {got} for {name:?}")]
    BadArity { name: String, got: usize },
}

impl FunctionRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_functions(
        functions: impl IntoIterator<Item = GenericFunction>,
    ) -> Result<Self, RegistryError> {
        let mut reg = Self::new();
        for f in functions {
            reg.register(f)?;
        }
        Ok(reg)
    }

    pub fn register(&mut self, f: GenericFunction) -> Result<(), RegistryError> {
        if f.arity == 0 {
            return Err(RegistryError::BadArity {
                name: f.name.clone(),
                got: 0,
            });
        }
        if self.by_name.contains_key(&f.name) || self.functions.iter().any(|g| g.id == f.id) {
            return Err(RegistryError::DuplicateFunction(f.id));
        }
        self.by_name.insert(f.name.clone(), self.functions.len());
        self.functions.push(f);
        Ok(())
    }

    pub fn by_name(&self, name: &str) -> Option<&GenericFunction> {
        self.by_name.get(name).map(|&i| &self.functions[i])
    }

    pub fn by_id(&self, id: &str) -> Option<&GenericFunction> {
        self.functions.iter().find(|f| f.id == id)
    }

    pub fn functions(&self) -> &[GenericFunction] {
        &self.functions
    }
}

/// One lexical occurrence of a neural call in a program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallSite {
    /// One-based position in the program's call-site list.
    pub index: usize,
    /// Id of the generic function invoked here.
    pub function_id: String,
    /// Name of the variable passed as the streamed first argument.
    pub input_var: String,
    /// Literal arguments after the streamed input (query strings etc.).
    pub static_args: Vec<Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnOp {
    Not,
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinOp {
    Or,
    And,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Or => "or",
            BinOp::And => "and",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Literal(Value),
    Var(String),
    /// Zero-based index into [`ProgramIR::call_sites`].
    Call(usize),
    Unary {
        op: UnOp,
        expr: Box<Expr>,
    },
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Assign {
        name: String,
        expr: Expr,
    },
    If {
        cond: Expr,
        then_body: Vec<Stmt>,
        else_body: Vec<Stmt>,
    },
    While {
        cond: Expr,
        /// Maximum iteration count. `None` parses but fails validation.
        bound: Option<u32>,
        body: Vec<Stmt>,
    },
    Return(Expr),
}

/// Parsed program with its statically enumerated call sites.
///
/// Immutable after construction; call-site order is the lexical order of
/// call expressions in the source and does not depend on control flow.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgramIR {
    pub name: String,
    pub param: String,
    /// Value returned on abnormal termination, from the optional
    /// `default <literal>` header clause.
    pub default_return: Option<Value>,
    pub body: Vec<Stmt>,
    pub call_sites: Vec<CallSite>,
}

impl ProgramIR {
    /// Number of call sites (N).
    pub fn site_count(&self) -> usize {
        self.call_sites.len()
    }

    /// Declared fallback value for abnormal termination. When no `default`
    /// clause is present, the neutral value of the return kind is used.
    pub fn fallback_value(&self, registry: &FunctionRegistry) -> Value {
        if let Some(v) = &self.default_return {
            return v.clone();
        }
        Value::neutral(self.return_kind(registry).unwrap_or(ReturnKind::Text))
    }

    /// Statically inferred return kind, when all return expressions agree.
    pub fn return_kind(&self, registry: &FunctionRegistry) -> Option<ReturnKind> {
        let mut kinds = Vec::new();
        collect_return_kinds(&self.body, self, registry, &mut kinds);
        let first = kinds.first().copied().flatten()?;
        kinds
            .iter()
            .all(|k| k.map_or(true, |k| k == first))
            .then_some(first)
    }
}

fn collect_return_kinds(
    body: &[Stmt],
    ir: &ProgramIR,
    registry: &FunctionRegistry,
    out: &mut Vec<Option<ReturnKind>>,
) {
    for stmt in body {
        match stmt {
            Stmt::Return(e) => out.push(static_expr_kind(e, ir, registry)),
            Stmt::If {
                then_body,
                else_body,
                ..
            } => {
                collect_return_kinds(then_body, ir, registry, out);
                collect_return_kinds(else_body, ir, registry, out);
            }
            Stmt::While { body, .. } => collect_return_kinds(body, ir, registry, out),
            Stmt::Assign { .. } => {}
        }
    }
}

/// Best-effort static kind of an expression (`None` when it depends on a
/// variable whose kind is not tracked here).
pub(crate) fn static_expr_kind(
    expr: &Expr,
    ir: &ProgramIR,
    registry: &FunctionRegistry,
) -> Option<ReturnKind> {
    match expr {
        Expr::Literal(v) => Some(v.kind()),
        Expr::Var(_) => None,
        Expr::Call(site) => {
            let call = ir.call_sites.get(*site)?;
            registry.by_id(&call.function_id).map(|f| f.return_kind)
        }
        Expr::Unary { op, .. } => Some(match op {
            UnOp::Not => ReturnKind::Boolean,
            UnOp::Neg => ReturnKind::Number,
        }),
        Expr::Binary { op, .. } => Some(match op {
            BinOp::Or
            | BinOp::And
            | BinOp::Eq
            | BinOp::Ne
            | BinOp::Lt
            | BinOp::Le
            | BinOp::Gt
            | BinOp::Ge => ReturnKind::Boolean,
            BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div => ReturnKind::Number,
        }),
    }
}

/// Returns the ordered call-site list.
///
/// Pure in the IR: repeated calls yield identical lists, and the list covers
/// every call expression regardless of whether control flow reaches it.
pub fn enumerate_call_sites(ir: &ProgramIR) -> &[CallSite] {
    &ir.call_sites
}

// --- pretty printing -------------------------------------------------------

/// Renders an IR back to canonical source text. `parse(pretty(parse(s)))`
/// is structurally equal to `parse(s)`.
pub fn pretty(ir: &ProgramIR) -> String {
    let mut out = String::new();
    out.push_str(&format!("program {}({})", ir.name, ir.param));
    if let Some(v) = &ir.default_return {
        out.push_str(&format!(" default {}", literal_text(v)));
    }
    out.push_str(":\n");
    pretty_block(&ir.body, ir, 1, &mut out);
    out
}

fn pretty_block(body: &[Stmt], ir: &ProgramIR, depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    for stmt in body {
        match stmt {
            Stmt::Assign { name, expr } => {
                out.push_str(&format!("{pad}{name} = {}\n", expr_text(expr, ir)));
            }
            Stmt::If {
                cond,
                then_body,
                else_body,
            } => {
                out.push_str(&format!("{pad}if {}:\n", expr_text(cond, ir)));
                pretty_block(then_body, ir, depth + 1, out);
                if !else_body.is_empty() {
                    out.push_str(&format!("{pad}else:\n"));
                    pretty_block(else_body, ir, depth + 1, out);
                }
            }
            Stmt::While { cond, bound, body } => {
                match bound {
                    Some(b) => {
                        out.push_str(&format!("{pad}while {} bound {b}:\n", expr_text(cond, ir)))
                    }
                    None => out.push_str(&format!("{pad}while {}:\n", expr_text(cond, ir))),
                }
                pretty_block(body, ir, depth + 1, out);
            }
            Stmt::Return(expr) => {
                out.push_str(&format!("{pad}return {}\n", expr_text(expr, ir)));
            }
        }
    }
}

fn literal_text(v: &Value) -> String {
    match v {
        Value::Bool(b) => b.to_string(),
        Value::Number(n) => format_number(*n),
        Value::Text(s) => format!("{s:?}"),
        Value::Detections(c) => c.to_string(),
    }
}

fn format_number(n: f64) -> String {
    if n == n.trunc() && n.is_finite() && n.abs() < 1e15 {
        format!("{}", n as i64)
    } else {
        format!("{n}")
    }
}

fn expr_text(expr: &Expr, ir: &ProgramIR) -> String {
    expr_text_prec(expr, ir, 0)
}

fn precedence(op: BinOp) -> u8 {
    match op {
        BinOp::Or => 1,
        BinOp::And => 2,
        BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
        BinOp::Add | BinOp::Sub => 5,
        BinOp::Mul | BinOp::Div => 6,
    }
}

fn expr_text_prec(expr: &Expr, ir: &ProgramIR, min_prec: u8) -> String {
    match expr {
        Expr::Literal(v) => literal_text(v),
        Expr::Var(name) => name.clone(),
        Expr::Call(site) => {
            let call = &ir.call_sites[*site];
            let mut args = vec![call.input_var.clone()];
            args.extend(call.static_args.iter().map(literal_text));
            format!("{}({})", call.function_id, args.join(", "))
        }
        Expr::Unary { op, expr } => {
            let inner = expr_text_prec(expr, ir, 7);
            match op {
                UnOp::Not => format!("not {inner}"),
                UnOp::Neg => format!("-{inner}"),
            }
        }
        Expr::Binary { op, lhs, rhs } => {
            let prec = precedence(*op);
            // Left-associative: the right operand needs strictly higher
            // precedence to omit parentheses.
            let text = format!(
                "{} {} {}",
                expr_text_prec(lhs, ir, prec),
                op.symbol(),
                expr_text_prec(rhs, ir, prec + 1)
            );
            if prec < min_prec {
                format!("({text})")
            } else {
                text
            }
        }
    }
}

impl fmt::Display for ProgramIR {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&pretty(self))
    }
}
