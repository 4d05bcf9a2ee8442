//! Static checks over a parsed program.
//!
//! Validation never aborts; it returns a list of diagnostics. A program with
//! an empty diagnostics list is safe to execute: every variable is assigned
//! before use, every loop carries an explicit iteration bound, and all
//! return expressions agree on one value kind.

use super::{Expr, FunctionRegistry, ProgramIR, Stmt};
use crate::value::ReturnKind;
use std::collections::HashSet;
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub message: String,
}

impl Diagnostic {
    fn new(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub fn validate_program(ir: &ProgramIR, registry: &FunctionRegistry) -> Vec<Diagnostic> {
    let mut diags = Vec::new();

    let mut defined: HashSet<String> = HashSet::new();
    defined.insert(ir.param.clone());
    check_block(&ir.body, ir, &mut defined, &mut diags);

    // Return-kind consistency across all return statements.
    let mut kinds: Vec<Option<ReturnKind>> = Vec::new();
    super::collect_return_kinds(&ir.body, ir, registry, &mut kinds);
    if kinds.is_empty() {
        diags.push(Diagnostic::new("program has no return statement"));
    }
    let known: Vec<ReturnKind> = kinds.iter().flatten().copied().collect();
    if let Some(first) = known.first() {
        if known.iter().any(|k| k != first) {
            diags.push(Diagnostic::new(format!(
                "return statements disagree on value kind: {}",
                known
                    .iter()
                    .map(|k| k.to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            )));
        }
        if let Some(default) = &ir.default_return {
            if default.kind() != *first {
                diags.push(Diagnostic::new(format!(
                    "default value kind {} does not match return kind {first}",
                    default.kind()
                )));
            }
        }
    }

    // Call sites must resolve; the parser guarantees this for its own output
    // but an IR can also be constructed programmatically.
    for site in &ir.call_sites {
        if registry.by_id(&site.function_id).is_none() {
            diags.push(Diagnostic::new(format!(
                "call site {} references unknown function {:?}",
                site.index, site.function_id
            )));
        }
    }

    diags
}

/// Definite-assignment walk. A variable assigned in only one `if` branch is
/// not definitely assigned after the statement; a `while` body may run zero
/// times and so contributes nothing.
fn check_block(
    body: &[Stmt],
    ir: &ProgramIR,
    defined: &mut HashSet<String>,
    diags: &mut Vec<Diagnostic>,
) {
    for stmt in body {
        match stmt {
            Stmt::Assign { name, expr } => {
                check_expr(expr, ir, defined, diags);
                defined.insert(name.clone());
            }
            Stmt::If {
                cond,
                then_body,
                else_body,
            } => {
                check_expr(cond, ir, defined, diags);
                let mut then_defined = defined.clone();
                check_block(then_body, ir, &mut then_defined, diags);
                let mut else_defined = defined.clone();
                check_block(else_body, ir, &mut else_defined, diags);
                for name in then_defined.intersection(&else_defined) {
                    defined.insert(name.clone());
                }
            }
            Stmt::While { cond, bound, body } => {
                check_expr(cond, ir, defined, diags);
                if bound.is_none() {
                    diags.push(Diagnostic::new(
                        "while loop is missing its `bound <n>` annotation",
                    ));
                }
                let mut loop_defined = defined.clone();
                check_block(body, ir, &mut loop_defined, diags);
            }
            Stmt::Return(expr) => check_expr(expr, ir, defined, diags),
        }
    }
}

fn check_expr(
    expr: &Expr,
    ir: &ProgramIR,
    defined: &HashSet<String>,
    diags: &mut Vec<Diagnostic>,
) {
    match expr {
        Expr::Var(name) => {
            if !defined.contains(name) {
                diags.push(Diagnostic::new(format!(
                    "variable {name:?} used before assignment"
                )));
            }
        }
        Expr::Call(site) => {
            if let Some(call) = ir.call_sites.get(*site) {
                if !defined.contains(&call.input_var) {
                    diags.push(Diagnostic::new(format!(
                        "variable {:?} used before assignment",
                        call.input_var
                    )));
                }
            }
        }
        Expr::Unary { expr, .. } => check_expr(expr, ir, defined, diags),
        Expr::Binary { lhs, rhs, .. } => {
            check_expr(lhs, ir, defined, diags);
            check_expr(rhs, ir, defined, diags);
        }
        Expr::Literal(_) => {}
    }
}
