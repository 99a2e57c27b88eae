//! Lossless concrete-syntax model of a SmartThings-style app.
//!
//! The parser recognizes exactly the constructs the mutators and analyzers
//! consume: the `definition(...)` call, the `preferences { ... }` block with
//! its `input` declarations, `def` function definitions, and inside function
//! bodies: declarations, assignments, calls, if/else, try/catch and return.
//! Anything else is preserved as opaque verbatim segments, so emitting a
//! freshly parsed model reproduces the original text byte-for-byte.

mod lexer;
mod parser;
#[cfg(test)]
mod tests;

pub use lexer::{lex, Interp, Token, TokenKind};

use crate::span::Span;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseError {
    /// Unbalanced brace, bracket, paren or quote at the given byte offset.
    UnbalancedDelimiter(usize),
    EmptyInput,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseError::UnbalancedDelimiter(pos) => {
                write!(f, "unbalanced delimiter at byte {pos}")
            }
            ParseError::EmptyInput => write!(f, "empty input"),
        }
    }
}

impl std::error::Error for ParseError {}

/// The three sink families the framework targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SinkKind {
    Sms,
    Push,
    Http,
}

impl SinkKind {
    pub const ALL: [SinkKind; 3] = [SinkKind::Sms, SinkKind::Push, SinkKind::Http];

    /// Function names recognized for this sink kind. Both `sendSms` and
    /// `sendSMS` spellings occur in the wild; emission always uses `sendSms`.
    pub fn function_names(self) -> &'static [&'static str] {
        match self {
            SinkKind::Sms => &["sendSms", "sendSMS"],
            SinkKind::Push => &["sendPush"],
            SinkKind::Http => &["httpPost"],
        }
    }

    /// Zero-based index of the argument that carries the payload.
    pub fn payload_arg_index(self) -> usize {
        match self {
            SinkKind::Sms => 1,
            SinkKind::Push => 0,
            SinkKind::Http => 0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SinkKind::Sms => "sms",
            SinkKind::Push => "push",
            SinkKind::Http => "http",
        }
    }

    pub fn from_call_name(name: &str) -> Option<SinkKind> {
        for kind in SinkKind::ALL {
            if kind.function_names().contains(&name) {
                return Some(kind);
            }
        }
        None
    }
}

impl fmt::Display for SinkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// A sensitive input declared in the preferences block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensitiveInput {
    pub name: String,
    pub capability: String,
    /// Span of the whole `input ...` declaration.
    pub span: Span,
}

/// One call site of a sink function.
#[derive(Debug, Clone)]
pub struct SinkSite {
    pub kind: SinkKind,
    /// Span of the full call statement.
    pub span: Span,
    pub function: String,
    /// The expression passed in the payload position.
    pub payload: Expr,
}

/// One `if` statement, with branch bodies, usable as a path-operator target.
#[derive(Debug, Clone)]
pub struct BranchSite {
    pub span: Span,
    pub function: String,
    pub has_else: bool,
    /// True when the else branch is itself an `if` (an else-if chain).
    pub else_is_if: bool,
    /// Index path to the statement inside its function: outer statement
    /// index, then nested branch offsets for inner ifs.
    pub stmt_path: Vec<usize>,
}

/// A `def v = f(args)` assignment whose callee is defined in the same file.
#[derive(Debug, Clone)]
pub struct CallSite {
    pub span: Span,
    pub function: String,
    pub target: String,
    pub callee: String,
    pub callee_span: Span,
    pub arg_count: usize,
}

/// Lossless model of a single app source file.
#[derive(Debug, Clone)]
pub struct AppModel {
    source: String,
    items: Vec<Item>,
}

#[derive(Debug, Clone)]
pub enum Item {
    Definition { span: Span },
    Preferences(PreferencesBlock),
    Function(FunctionDef),
    /// Verbatim text the parser does not model (annotations, mappings
    /// blocks, trivia between items, ...).
    Opaque { span: Span },
}

impl Item {
    pub fn span(&self) -> Span {
        match self {
            Item::Definition { span } => *span,
            Item::Preferences(p) => p.span,
            Item::Function(f) => f.span,
            Item::Opaque { span } => *span,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PreferencesBlock {
    pub span: Span,
    pub inputs: Vec<SensitiveInput>,
}

#[derive(Debug, Clone)]
pub struct FunctionDef {
    pub span: Span,
    pub name: String,
    pub name_span: Span,
    pub params: Vec<String>,
    pub body: Block,
}

impl FunctionDef {
    pub fn arity(&self) -> usize {
        self.params.len()
    }
}

/// A braced statement list; `open`/`close` are the brace offsets.
#[derive(Debug, Clone)]
pub struct Block {
    pub open: usize,
    pub close: usize,
    pub stmts: Vec<Stmt>,
}

impl Block {
    pub fn span(&self) -> Span {
        Span::new(self.open, self.close + 1)
    }
}

#[derive(Debug, Clone)]
pub enum Stmt {
    /// `def name = value`
    Decl {
        span: Span,
        name: String,
        value: Expr,
    },
    /// `target = value` (target may be dotted: `state.x`)
    Assign {
        span: Span,
        target: String,
        value: Expr,
    },
    /// A call in statement position.
    Call { span: Span, call: Expr },
    If(IfStmt),
    Try(TryStmt),
    Return { span: Span, value: Option<Expr> },
    /// Anything else, kept verbatim.
    Opaque { span: Span },
}

impl Stmt {
    pub fn span(&self) -> Span {
        match self {
            Stmt::Decl { span, .. }
            | Stmt::Assign { span, .. }
            | Stmt::Call { span, .. }
            | Stmt::Return { span, .. }
            | Stmt::Opaque { span } => *span,
            Stmt::If(i) => i.span,
            Stmt::Try(t) => t.span,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IfStmt {
    pub span: Span,
    pub cond: Span,
    pub then_branch: Branch,
    pub else_branch: Option<Branch>,
}

/// A branch body: either a braced block or a single statement.
#[derive(Debug, Clone)]
pub struct Branch {
    pub span: Span,
    pub braced: bool,
    pub stmts: Vec<Stmt>,
}

#[derive(Debug, Clone)]
pub struct TryStmt {
    pub span: Span,
    pub body: Vec<Stmt>,
    pub catches: Vec<Vec<Stmt>>,
    pub finally: Option<Vec<Stmt>>,
}

/// Expression tree. Operators are not modeled; `Binary` keeps operand order
/// only, which is all taint propagation needs.
#[derive(Debug, Clone)]
pub enum Expr {
    /// Quoted string; `segments` lists its interpolation holes.
    Str { span: Span, segments: Vec<Interp> },
    /// Possibly dotted identifier (`messages`, `state.inactiveAt`).
    Ident { span: Span, name: String },
    /// Number, `true`, `false`, `null`.
    Lit { span: Span },
    Map { span: Span, entries: Vec<MapEntry> },
    List { span: Span, items: Vec<Expr> },
    Call {
        span: Span,
        name: String,
        name_span: Span,
        args: Vec<Expr>,
        closure: Option<Span>,
    },
    Unary { span: Span, inner: Box<Expr> },
    Binary { span: Span, parts: Vec<Expr> },
    Closure { span: Span },
    /// Unmodeled expression text with the identifiers it mentions.
    Opaque { span: Span, idents: Vec<String> },
}

impl Expr {
    pub fn span(&self) -> Span {
        match self {
            Expr::Str { span, .. }
            | Expr::Ident { span, .. }
            | Expr::Lit { span }
            | Expr::Map { span, .. }
            | Expr::List { span, .. }
            | Expr::Call { span, .. }
            | Expr::Unary { span, .. }
            | Expr::Binary { span, .. }
            | Expr::Closure { span }
            | Expr::Opaque { span, .. } => *span,
        }
    }

    /// The variable name when this expression is a plain identifier.
    pub fn as_ident(&self) -> Option<&str> {
        match self {
            Expr::Ident { name, .. } => Some(name.as_str()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MapEntry {
    pub key: String,
    pub key_span: Span,
    pub value: Expr,
}

/// Parses UTF-8 source text into a lossless model.
pub fn parse(source: &str) -> Result<AppModel, ParseError> {
    if source.is_empty() {
        return Err(ParseError::EmptyInput);
    }
    let tokens = lex(source)?;
    let items = parser::parse_items(source, &tokens)?;
    Ok(AppModel {
        source: source.to_string(),
        items,
    })
}

/// Renders the model back to text by walking its items in order.
pub fn emit(model: &AppModel) -> String {
    let mut out = String::with_capacity(model.source.len());
    let mut cursor = 0usize;
    for item in &model.items {
        let span = item.span();
        debug_assert_eq!(span.start, cursor, "items must tile the source");
        out.push_str(span.slice(&model.source));
        cursor = span.end;
    }
    debug_assert_eq!(cursor, model.source.len());
    out
}

impl AppModel {
    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn functions(&self) -> impl Iterator<Item = &FunctionDef> {
        self.items.iter().filter_map(|i| match i {
            Item::Function(f) => Some(f),
            _ => None,
        })
    }

    /// Sensitive inputs in file order; empty when preferences are absent.
    pub fn inputs(&self) -> Vec<SensitiveInput> {
        self.items
            .iter()
            .filter_map(|i| match i {
                Item::Preferences(p) => Some(p.inputs.clone()),
                _ => None,
            })
            .flatten()
            .collect()
    }

    /// All call sites of `kind`'s sink functions, in file order.
    pub fn sinks(&self, kind: SinkKind) -> Vec<SinkSite> {
        let mut out = Vec::new();
        for f in self.functions() {
            collect_sinks(&f.body.stmts, kind, &f.name, &mut out);
        }
        out.sort_by_key(|s| s.span.start);
        out
    }

    /// All `if` statements, outermost first within each function.
    pub fn branches(&self) -> Vec<BranchSite> {
        let mut out = Vec::new();
        for f in self.functions() {
            collect_branches(&f.body.stmts, &f.name, &mut Vec::new(), &mut out);
        }
        out.sort_by_key(|b| b.span.start);
        out
    }

    /// `def v = f(args)` sites whose callee has exactly one definition in
    /// this file.
    pub fn clonable_calls(&self) -> Vec<CallSite> {
        let mut out = Vec::new();
        for f in self.functions() {
            collect_clonable(&f.body.stmts, &f.name, self, &mut out);
        }
        out.sort_by_key(|c| c.span.start);
        out
    }

    /// First definition of a lifecycle function (`installed` / `updated`).
    pub fn lifecycle_fn(&self, name: &str) -> Option<&FunctionDef> {
        self.functions().find(|f| f.name == name)
    }

    /// First user-defined function in file order, the deterministic host for
    /// Add-operator injections.
    pub fn first_function(&self) -> Option<&FunctionDef> {
        self.functions().next()
    }

    pub fn function_named(&self, name: &str, arity: usize) -> Option<&FunctionDef> {
        self.functions()
            .find(|f| f.name == name && f.arity() == arity)
    }

    pub fn functions_named(&self, name: &str) -> Vec<&FunctionDef> {
        self.functions().filter(|f| f.name == name).collect()
    }
}

fn collect_sinks(stmts: &[Stmt], kind: SinkKind, function: &str, out: &mut Vec<SinkSite>) {
    for stmt in stmts {
        match stmt {
            Stmt::Call { span, call } => {
                if let Expr::Call { name, args, .. } = call {
                    if SinkKind::from_call_name(name) == Some(kind) {
                        if let Some(payload) = args.get(kind.payload_arg_index()) {
                            out.push(SinkSite {
                                kind,
                                span: *span,
                                function: function.to_string(),
                                payload: payload.clone(),
                            });
                        }
                    }
                }
            }
            Stmt::If(i) => {
                collect_sinks(&i.then_branch.stmts, kind, function, out);
                if let Some(e) = &i.else_branch {
                    collect_sinks(&e.stmts, kind, function, out);
                }
            }
            Stmt::Try(t) => {
                collect_sinks(&t.body, kind, function, out);
                for c in &t.catches {
                    collect_sinks(c, kind, function, out);
                }
                if let Some(fin) = &t.finally {
                    collect_sinks(fin, kind, function, out);
                }
            }
            _ => {}
        }
    }
}

fn collect_branches(
    stmts: &[Stmt],
    function: &str,
    path: &mut Vec<usize>,
    out: &mut Vec<BranchSite>,
) {
    for (idx, stmt) in stmts.iter().enumerate() {
        path.push(idx);
        match stmt {
            Stmt::If(i) => {
                let else_is_if = i
                    .else_branch
                    .as_ref()
                    .is_some_and(|b| !b.braced && matches!(b.stmts.first(), Some(Stmt::If(_))));
                out.push(BranchSite {
                    span: i.span,
                    function: function.to_string(),
                    has_else: i.else_branch.is_some(),
                    else_is_if,
                    stmt_path: path.clone(),
                });
                collect_branches(&i.then_branch.stmts, function, path, out);
                if let Some(e) = &i.else_branch {
                    collect_branches(&e.stmts, function, path, out);
                }
            }
            Stmt::Try(t) => {
                collect_branches(&t.body, function, path, out);
                for c in &t.catches {
                    collect_branches(c, function, path, out);
                }
            }
            _ => {}
        }
        path.pop();
    }
}

fn collect_clonable(stmts: &[Stmt], function: &str, model: &AppModel, out: &mut Vec<CallSite>) {
    for stmt in stmts {
        match stmt {
            Stmt::Decl { span, name, value } => {
                if let Expr::Call {
                    name: callee,
                    name_span,
                    args,
                    ..
                } = value
                {
                    if !callee.contains('.') && model.functions_named(callee).len() == 1 {
                        out.push(CallSite {
                            span: *span,
                            function: function.to_string(),
                            target: name.clone(),
                            callee: callee.clone(),
                            callee_span: *name_span,
                            arg_count: args.len(),
                        });
                    }
                }
            }
            Stmt::If(i) => {
                collect_clonable(&i.then_branch.stmts, function, model, out);
                if let Some(e) = &i.else_branch {
                    collect_clonable(&e.stmts, function, model, out);
                }
            }
            Stmt::Try(t) => {
                collect_clonable(&t.body, function, model, out);
                for c in &t.catches {
                    collect_clonable(c, function, model, out);
                }
            }
            _ => {}
        }
    }
}
