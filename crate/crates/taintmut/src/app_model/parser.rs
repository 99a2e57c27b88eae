//! Token-stream parser building the item/statement/expression tree.
//!
//! Recognition is deliberately shallow: whatever does not match the modeled
//! subset becomes an opaque span. The only hard failures are unbalanced
//! delimiters, checked globally before any structure is built.

use super::lexer::{Token, TokenKind};
use super::{
    Block, Branch, Expr, FunctionDef, IfStmt, Item, MapEntry, ParseError, PreferencesBlock,
    SensitiveInput, Stmt, TryStmt,
};
use crate::span::Span;

pub fn parse_items(source: &str, tokens: &[Token]) -> Result<Vec<Item>, ParseError> {
    check_balance(tokens)?;
    let mut cur = Cursor {
        src: source,
        toks: tokens,
        pos: 0,
    };
    let mut items = Vec::new();
    let mut flushed = 0usize;

    while let Some(idx) = cur.peek_sig(0) {
        let start_byte = cur.toks[idx].span.start;
        if let Some(item) = cur.try_item(idx) {
            if start_byte > flushed {
                items.push(Item::Opaque {
                    span: Span::new(flushed, start_byte),
                });
            }
            flushed = item.span().end;
            items.push(item);
        } else {
            cur.skip_opaque_unit(idx);
        }
    }
    if flushed < source.len() {
        items.push(Item::Opaque {
            span: Span::new(flushed, source.len()),
        });
    }
    Ok(items)
}

fn check_balance(tokens: &[Token]) -> Result<(), ParseError> {
    let mut stack: Vec<(char, usize)> = Vec::new();
    for t in tokens {
        if let TokenKind::Punct(c) = t.kind {
            match c {
                '(' | '[' | '{' => stack.push((c, t.span.start)),
                ')' | ']' | '}' => {
                    let want = match c {
                        ')' => '(',
                        ']' => '[',
                        _ => '{',
                    };
                    match stack.pop() {
                        Some((open, _)) if open == want => {}
                        _ => return Err(ParseError::UnbalancedDelimiter(t.span.start)),
                    }
                }
                _ => {}
            }
        }
    }
    if let Some((_, pos)) = stack.first() {
        return Err(ParseError::UnbalancedDelimiter(*pos));
    }
    Ok(())
}

struct Cursor<'a> {
    src: &'a str,
    toks: &'a [Token],
    pos: usize,
}

fn is_trivia(kind: &TokenKind) -> bool {
    matches!(
        kind,
        TokenKind::Whitespace
            | TokenKind::Newline
            | TokenKind::LineComment
            | TokenKind::BlockComment
    ) || matches!(kind, TokenKind::Punct(';'))
}

impl<'a> Cursor<'a> {
    /// Index of the n-th significant token at or after `pos`.
    fn peek_sig(&self, n: usize) -> Option<usize> {
        let mut remaining = n;
        let mut i = self.pos;
        while i < self.toks.len() {
            if !is_trivia(&self.toks[i].kind) {
                if remaining == 0 {
                    return Some(i);
                }
                remaining -= 1;
            }
            i += 1;
        }
        None
    }

    fn word_at(&self, idx: usize) -> Option<&'a str> {
        let t = &self.toks[idx];
        match t.kind {
            TokenKind::Word => Some(t.text(self.src)),
            _ => None,
        }
    }

    fn punct_at(&self, idx: usize, c: char) -> bool {
        matches!(self.toks[idx].kind, TokenKind::Punct(p) if p == c)
    }

    /// Skips one opaque unit at top level: a balanced group or one token.
    fn skip_opaque_unit(&mut self, idx: usize) {
        self.pos = idx;
        if matches!(self.toks[idx].kind, TokenKind::Punct('(' | '[' | '{')) {
            self.pos = self.matching_close(idx) + 1;
        } else {
            self.pos = idx + 1;
        }
    }

    /// Token index of the delimiter closing the one at `open_idx`.
    /// Balance is pre-checked, so this always finds one.
    fn matching_close(&self, open_idx: usize) -> usize {
        let mut depth = 0i32;
        for i in open_idx..self.toks.len() {
            if let TokenKind::Punct(c) = self.toks[i].kind {
                match c {
                    '(' | '[' | '{' => depth += 1,
                    ')' | ']' | '}' => {
                        depth -= 1;
                        if depth == 0 {
                            return i;
                        }
                    }
                    _ => {}
                }
            }
        }
        self.toks.len() - 1
    }

    fn try_item(&mut self, idx: usize) -> Option<Item> {
        let word = self.word_at(idx)?;
        match word {
            "definition" => {
                let open = self.peek_sig_from(idx + 1)?;
                if !self.punct_at(open, '(') {
                    return None;
                }
                let close = self.matching_close(open);
                self.pos = close + 1;
                Some(Item::Definition {
                    span: Span::new(self.toks[idx].span.start, self.toks[close].span.end),
                })
            }
            "preferences" => {
                let open = self.peek_sig_from(idx + 1)?;
                if !self.punct_at(open, '{') {
                    return None;
                }
                let close = self.matching_close(open);
                let inputs = self.scan_inputs(open + 1, close);
                self.pos = close + 1;
                Some(Item::Preferences(PreferencesBlock {
                    span: Span::new(self.toks[idx].span.start, self.toks[close].span.end),
                    inputs,
                }))
            }
            "def" | "private" | "public" | "protected" | "static" => self.try_function(idx),
            _ => None,
        }
    }

    fn peek_sig_from(&self, from: usize) -> Option<usize> {
        (from..self.toks.len()).find(|&i| !is_trivia(&self.toks[i].kind))
    }

    fn try_function(&mut self, idx: usize) -> Option<Item> {
        // Optional modifiers, then `def`, name, params, braced body.
        let mut i = idx;
        loop {
            let w = self.word_at(i)?;
            if w == "def" {
                break;
            }
            if !matches!(w, "private" | "public" | "protected" | "static") {
                return None;
            }
            i = self.peek_sig_from(i + 1)?;
        }
        let name_idx = self.peek_sig_from(i + 1)?;
        let name = self.word_at(name_idx)?.to_string();
        let popen = self.peek_sig_from(name_idx + 1)?;
        if !self.punct_at(popen, '(') {
            return None;
        }
        let pclose = self.matching_close(popen);
        let bopen = self.peek_sig_from(pclose + 1)?;
        if !self.punct_at(bopen, '{') {
            return None;
        }
        let bclose = self.matching_close(bopen);

        let params = self.parse_params(popen, pclose);
        self.pos = bopen + 1;
        let stmts = self.parse_stmts_until(bclose);
        self.pos = bclose + 1;

        Some(Item::Function(FunctionDef {
            span: Span::new(self.toks[idx].span.start, self.toks[bclose].span.end),
            name,
            name_span: self.toks[name_idx].span,
            params,
            body: Block {
                open: self.toks[bopen].span.start,
                close: self.toks[bclose].span.start,
                stmts,
            },
        }))
    }

    fn parse_params(&self, popen: usize, pclose: usize) -> Vec<String> {
        let mut params = Vec::new();
        let mut expect_name = true;
        let mut depth = 0i32;
        for i in popen + 1..pclose {
            match &self.toks[i].kind {
                TokenKind::Punct('(' | '[' | '{') => depth += 1,
                TokenKind::Punct(')' | ']' | '}') => depth -= 1,
                TokenKind::Punct(',') if depth == 0 => expect_name = true,
                TokenKind::Word if expect_name && depth == 0 => {
                    params.push(self.toks[i].text(self.src).to_string());
                    expect_name = false;
                }
                _ => {}
            }
        }
        params
    }

    fn scan_inputs(&self, from: usize, to: usize) -> Vec<SensitiveInput> {
        let mut inputs = Vec::new();
        let mut i = from;
        while i < to {
            if self.word_at(i) == Some("input") {
                if let Some(input) = self.parse_input_decl(i, to) {
                    inputs.push(input);
                }
            }
            i += 1;
        }
        inputs
    }

    fn parse_input_decl(&self, at: usize, limit: usize) -> Option<SensitiveInput> {
        let mut i = self.peek_sig_from(at + 1)?;
        let mut parened = false;
        if self.punct_at(i, '(') {
            parened = true;
            i = self.peek_sig_from(i + 1)?;
        }
        let name = self.string_literal_at(i)?;
        if name.is_empty() {
            return None;
        }
        let mut capability = String::new();
        let mut j = self.peek_sig_from(i + 1);
        if let Some(comma) = j {
            if self.punct_at(comma, ',') {
                if let Some(cap_idx) = self.peek_sig_from(comma + 1) {
                    if let Some(cap) = self.string_literal_at(cap_idx) {
                        capability = cap;
                        j = Some(cap_idx);
                    }
                }
            }
        }
        // Declaration span runs to the end of the logical line.
        let mut end_idx = j.unwrap_or(i);
        let mut depth = if parened { 1i32 } else { 0 };
        let mut k = end_idx + 1;
        while k < limit {
            match &self.toks[k].kind {
                TokenKind::Punct('(' | '[' | '{') => depth += 1,
                TokenKind::Punct(')' | ']' | '}') => {
                    if depth == 0 {
                        break;
                    }
                    depth -= 1;
                    end_idx = k;
                }
                TokenKind::Newline if depth == 0 => {
                    if !self.continues_line(end_idx, k) {
                        break;
                    }
                }
                TokenKind::Whitespace
                | TokenKind::LineComment
                | TokenKind::BlockComment => {}
                _ => end_idx = k,
            }
            k += 1;
        }
        Some(SensitiveInput {
            name,
            capability,
            span: Span::new(self.toks[at].span.start, self.toks[end_idx].span.end),
        })
    }

    /// True when the newline at `nl` does not terminate the logical line
    /// started before it (trailing operator or leading `.` continuation).
    fn continues_line(&self, last_sig: usize, nl: usize) -> bool {
        if let TokenKind::Punct(c) = self.toks[last_sig].kind {
            if matches!(
                c,
                ',' | '+' | '-' | '*' | '/' | '%' | '=' | '<' | '>' | '&' | '|' | '?' | ':' | '.'
                    | '(' | '[' | '{' | '!'
            ) {
                return true;
            }
        }
        if let Some(next) = self.peek_sig_from(nl + 1) {
            if self.punct_at(next, '.') {
                return true;
            }
        }
        false
    }

    fn string_literal_at(&self, idx: usize) -> Option<String> {
        match &self.toks[idx].kind {
            TokenKind::Str { interps } if interps.is_empty() => {
                let text = self.toks[idx].text(self.src);
                let trimmed = text
                    .strip_prefix("\"\"\"")
                    .and_then(|s| s.strip_suffix("\"\"\""))
                    .or_else(|| {
                        text.strip_prefix("'''").and_then(|s| s.strip_suffix("'''"))
                    })
                    .or_else(|| text.strip_prefix('"').and_then(|s| s.strip_suffix('"')))
                    .or_else(|| text.strip_prefix('\'').and_then(|s| s.strip_suffix('\'')));
                trimmed.map(|s| s.to_string())
            }
            _ => None,
        }
    }

    // ---- statements ------------------------------------------------------

    /// Parses statements until the token index `until` (exclusive).
    fn parse_stmts_until(&mut self, until: usize) -> Vec<Stmt> {
        let mut stmts = Vec::new();
        loop {
            let Some(idx) = self.peek_sig(0) else { break };
            if idx >= until {
                break;
            }
            self.pos = idx;
            stmts.push(self.parse_stmt(until));
        }
        self.pos = until;
        stmts
    }

    fn parse_stmt(&mut self, until: usize) -> Stmt {
        let idx = self.pos;
        match self.word_at(idx) {
            Some("def") => {
                let name_idx = self.peek_sig_from(idx + 1).filter(|&i| i < until);
                if let Some(ni) = name_idx {
                    if let Some(name) = self.word_at(ni) {
                        if let Some(eq) = self.peek_sig_from(ni + 1).filter(|&i| i < until) {
                            if self.punct_at(eq, '=') && !self.punct_follows(eq, '=') {
                                self.pos = self.peek_sig_from(eq + 1).unwrap_or(until).min(until);
                                let value = self.parse_expr(until, Stops::stmt());
                                return Stmt::Decl {
                                    span: Span::new(
                                        self.toks[idx].span.start,
                                        value.span().end.max(self.toks[eq].span.end),
                                    ),
                                    name: name.to_string(),
                                    value,
                                };
                            }
                        }
                    }
                }
                self.opaque_stmt(until)
            }
            Some("if") => self.parse_if(until),
            Some("try") => self.parse_try(until),
            Some("return") => {
                let ret_span = self.toks[idx].span;
                self.pos = idx + 1;
                let value = if self
                    .next_on_same_line(idx, until)
                    .is_some_and(|i| !self.punct_at(i, '}'))
                {
                    self.pos = self.next_on_same_line(idx, until).unwrap();
                    Some(self.parse_expr(until, Stops::stmt()))
                } else {
                    None
                };
                let end = value.as_ref().map(|v| v.span().end).unwrap_or(ret_span.end);
                Stmt::Return {
                    span: Span::new(ret_span.start, end),
                    value,
                }
            }
            Some(_) => self.parse_ident_led_stmt(idx, until),
            None => self.opaque_stmt(until),
        }
    }

    fn punct_follows(&self, idx: usize, c: char) -> bool {
        self.toks
            .get(idx + 1)
            .is_some_and(|t| matches!(t.kind, TokenKind::Punct(p) if p == c))
    }

    /// First significant token after `idx` that sits on the same source line.
    fn next_on_same_line(&self, idx: usize, until: usize) -> Option<usize> {
        let mut i = idx + 1;
        while i < until {
            match &self.toks[i].kind {
                TokenKind::Newline => return None,
                k if is_trivia(k) => i += 1,
                _ => return Some(i),
            }
        }
        None
    }

    fn parse_ident_led_stmt(&mut self, idx: usize, until: usize) -> Stmt {
        let (name, name_end_idx) = self.scan_dotted_name(idx, until);
        let after = self.peek_sig_from(name_end_idx + 1).filter(|&i| i < until);
        match after {
            Some(i) if self.punct_at(i, '=') && !self.punct_follows(i, '=') => {
                self.pos = self.peek_sig_from(i + 1).unwrap_or(until).min(until);
                let value = self.parse_expr(until, Stops::stmt());
                Stmt::Assign {
                    span: Span::new(
                        self.toks[idx].span.start,
                        value.span().end.max(self.toks[i].span.end),
                    ),
                    target: name,
                    value,
                }
            }
            Some(i) if self.punct_at(i, '(') => {
                self.pos = idx;
                let call = self.parse_call(idx, name.clone(), name_end_idx, i, until);
                Stmt::Call {
                    span: call.span(),
                    call,
                }
            }
            Some(i)
                if self.punct_at(i, '{')
                    && self.next_on_same_line(name_end_idx, until) == Some(i) =>
            {
                // Command call with a trailing closure: `list.each { ... }`.
                let close = self.matching_close(i);
                self.pos = (close + 1).min(until);
                Stmt::Call {
                    span: Span::new(self.toks[idx].span.start, self.toks[close].span.end),
                    call: Expr::Call {
                        span: Span::new(self.toks[idx].span.start, self.toks[close].span.end),
                        name,
                        name_span: Span::new(
                            self.toks[idx].span.start,
                            self.toks[name_end_idx].span.end,
                        ),
                        args: Vec::new(),
                        closure: Some(Span::new(
                            self.toks[i].span.start,
                            self.toks[close].span.end,
                        )),
                    },
                }
            }
            Some(i)
                if self.next_on_same_line(name_end_idx, until) == Some(i)
                    && matches!(
                        self.toks[i].kind,
                        TokenKind::Str { .. } | TokenKind::Number | TokenKind::Word
                    ) =>
            {
                // Paren-less command call: `log.debug "message", e`.
                self.pos = i;
                let mut args = vec![self.parse_expr(until, Stops::arg())];
                while let Some(c) = self.peek_sig(0).filter(|&c| c < until) {
                    if self.punct_at(c, ',') {
                        self.pos = self.peek_sig_from(c + 1).unwrap_or(until).min(until);
                        if self.pos >= until {
                            break;
                        }
                        args.push(self.parse_expr(until, Stops::arg()));
                    } else {
                        break;
                    }
                }
                let end = args.last().map(|a| a.span().end).unwrap();
                Stmt::Call {
                    span: Span::new(self.toks[idx].span.start, end),
                    call: Expr::Call {
                        span: Span::new(self.toks[idx].span.start, end),
                        name,
                        name_span: Span::new(
                            self.toks[idx].span.start,
                            self.toks[name_end_idx].span.end,
                        ),
                        args,
                        closure: None,
                    },
                }
            }
            _ => {
                self.pos = idx;
                self.opaque_stmt(until)
            }
        }
    }

    /// Scans `a.b.c`, returning the dotted name and its last token index.
    fn scan_dotted_name(&self, idx: usize, until: usize) -> (String, usize) {
        let mut name = self.toks[idx].text(self.src).to_string();
        let mut last = idx;
        loop {
            let Some(dot) = self.peek_sig_from(last + 1).filter(|&i| i < until) else {
                break;
            };
            if !self.punct_at(dot, '.') {
                break;
            }
            let Some(part) = self.peek_sig_from(dot + 1).filter(|&i| i < until) else {
                break;
            };
            let Some(w) = self.word_at(part) else { break };
            name.push('.');
            name.push_str(w);
            last = part;
        }
        (name, last)
    }

    fn parse_call(
        &mut self,
        name_start: usize,
        name: String,
        name_end: usize,
        popen: usize,
        until: usize,
    ) -> Expr {
        let pclose = self.matching_close(popen);
        let mut args = Vec::new();
        self.pos = popen + 1;
        loop {
            let Some(i) = self.peek_sig(0).filter(|&i| i < pclose) else {
                break;
            };
            self.pos = i;
            args.push(self.parse_expr(pclose, Stops::arg()));
            match self.peek_sig(0).filter(|&i| i < pclose) {
                Some(c) if self.punct_at(c, ',') => self.pos = c + 1,
                _ => break,
            }
        }
        self.pos = pclose + 1;
        let mut end = self.toks[pclose].span.end;
        let mut closure = None;
        if let Some(b) = self.next_on_same_line(pclose, until) {
            if self.punct_at(b, '{') {
                let bclose = self.matching_close(b);
                closure = Some(Span::new(self.toks[b].span.start, self.toks[bclose].span.end));
                end = self.toks[bclose].span.end;
                self.pos = bclose + 1;
            }
        }
        Expr::Call {
            span: Span::new(self.toks[name_start].span.start, end),
            name,
            name_span: Span::new(self.toks[name_start].span.start, self.toks[name_end].span.end),
            args,
            closure,
        }
    }

    fn parse_if(&mut self, until: usize) -> Stmt {
        let if_idx = self.pos;
        let Some(copen) = self.peek_sig_from(if_idx + 1).filter(|&i| i < until) else {
            return self.opaque_stmt(until);
        };
        if !self.punct_at(copen, '(') {
            return self.opaque_stmt(until);
        }
        let cclose = self.matching_close(copen);
        self.pos = cclose + 1;
        let then_branch = self.parse_branch(until);
        let mut end = then_branch.span.end;

        let mut else_branch = None;
        if let Some(e) = self.peek_sig(0).filter(|&i| i < until) {
            if self.word_at(e) == Some("else") {
                self.pos = e + 1;
                let b = self.parse_branch(until);
                end = b.span.end;
                else_branch = Some(b);
            }
        }
        Stmt::If(IfStmt {
            span: Span::new(self.toks[if_idx].span.start, end),
            cond: Span::new(self.toks[copen].span.end, self.toks[cclose].span.start),
            then_branch,
            else_branch,
        })
    }

    /// A branch body: braced block, or exactly one statement.
    fn parse_branch(&mut self, until: usize) -> Branch {
        if let Some(b) = self.peek_sig(0).filter(|&i| i < until) {
            if self.punct_at(b, '{') {
                let close = self.matching_close(b);
                self.pos = b + 1;
                let stmts = self.parse_stmts_until(close);
                self.pos = close + 1;
                return Branch {
                    span: Span::new(self.toks[b].span.start, self.toks[close].span.end),
                    braced: true,
                    stmts,
                };
            }
            self.pos = b;
            let stmt = self.parse_stmt(until);
            return Branch {
                span: stmt.span(),
                braced: false,
                stmts: vec![stmt],
            };
        }
        Branch {
            span: Span::new(self.toks[until].span.start, self.toks[until].span.start),
            braced: false,
            stmts: Vec::new(),
        }
    }

    fn parse_try(&mut self, until: usize) -> Stmt {
        let try_idx = self.pos;
        let Some(bopen) = self.peek_sig_from(try_idx + 1).filter(|&i| i < until) else {
            return self.opaque_stmt(until);
        };
        if !self.punct_at(bopen, '{') {
            return self.opaque_stmt(until);
        }
        let bclose = self.matching_close(bopen);
        self.pos = bopen + 1;
        let body = self.parse_stmts_until(bclose);
        self.pos = bclose + 1;
        let mut end = self.toks[bclose].span.end;

        let mut catches = Vec::new();
        let mut finally = None;
        loop {
            let Some(k) = self.peek_sig(0).filter(|&i| i < until) else {
                break;
            };
            match self.word_at(k) {
                Some("catch") => {
                    let Some(po) = self.peek_sig_from(k + 1).filter(|&i| i < until) else {
                        break;
                    };
                    if !self.punct_at(po, '(') {
                        break;
                    }
                    let pc = self.matching_close(po);
                    let Some(bo) = self.peek_sig_from(pc + 1).filter(|&i| i < until) else {
                        break;
                    };
                    if !self.punct_at(bo, '{') {
                        break;
                    }
                    let bc = self.matching_close(bo);
                    self.pos = bo + 1;
                    catches.push(self.parse_stmts_until(bc));
                    self.pos = bc + 1;
                    end = self.toks[bc].span.end;
                }
                Some("finally") => {
                    let Some(bo) = self.peek_sig_from(k + 1).filter(|&i| i < until) else {
                        break;
                    };
                    if !self.punct_at(bo, '{') {
                        break;
                    }
                    let bc = self.matching_close(bo);
                    self.pos = bo + 1;
                    finally = Some(self.parse_stmts_until(bc));
                    self.pos = bc + 1;
                    end = self.toks[bc].span.end;
                }
                _ => break,
            }
        }
        Stmt::Try(TryStmt {
            span: Span::new(self.toks[try_idx].span.start, end),
            body,
            catches,
            finally,
        })
    }

    /// Consumes one unrecognized statement up to its logical end.
    fn opaque_stmt(&mut self, until: usize) -> Stmt {
        let start_idx = self.pos;
        let mut depth = 0i32;
        let mut last_sig = start_idx;
        let mut i = start_idx;
        while i < until {
            match &self.toks[i].kind {
                TokenKind::Punct('(' | '[' | '{') => {
                    depth += 1;
                    last_sig = i;
                }
                TokenKind::Punct(')' | ']' | '}') => {
                    if depth == 0 {
                        break;
                    }
                    depth -= 1;
                    last_sig = i;
                }
                TokenKind::Punct(';') if depth == 0 => break,
                TokenKind::Newline if depth == 0 => {
                    if !self.continues_line(last_sig, i) {
                        break;
                    }
                }
                k if is_trivia(k) => {}
                _ => last_sig = i,
            }
            i += 1;
        }
        self.pos = i;
        Stmt::Opaque {
            span: Span::new(self.toks[start_idx].span.start, self.toks[last_sig].span.end),
        }
    }

    // ---- expressions -----------------------------------------------------

    fn parse_expr(&mut self, until: usize, stops: Stops) -> Expr {
        let first = self.parse_primary(until, stops);
        let mut parts = vec![first];
        loop {
            let last_end = parts.last().unwrap().span().end;
            let Some(op) = self.peek_sig(0).filter(|&i| i < until) else {
                break;
            };
            if !self.is_binary_joiner(op, last_end, stops) {
                break;
            }
            // Consume the operator run (`==`, `&&`, `?:` ...).
            let mut j = op;
            while j + 1 < until
                && matches!(self.toks[j + 1].kind, TokenKind::Punct(c)
                    if is_op_char(c) && !matches!(c, '(' | '[' | '{'))
            {
                j += 1;
            }
            self.pos = self.peek_sig_from(j + 1).unwrap_or(until).min(until);
            if self.pos >= until {
                break;
            }
            parts.push(self.parse_primary(until, stops));
        }
        if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            let span = Span::new(parts[0].span().start, parts.last().unwrap().span().end);
            Expr::Binary { span, parts }
        }
    }

    fn is_binary_joiner(&self, idx: usize, prev_end: usize, stops: Stops) -> bool {
        let TokenKind::Punct(c) = self.toks[idx].kind else {
            return false;
        };
        if !is_op_char(c) || matches!(c, '(' | '[' | '{' | ')' | ']' | '}' | ';') {
            return false;
        }
        if c == ',' || (c == ':' && stops.colon) {
            return false;
        }
        // Operators only join within a logical line (or with explicit
        // trailing-operator continuation, which puts them before the break).
        let between = &self.src[prev_end..self.toks[idx].span.start];
        !between.contains('\n')
    }

    fn parse_primary(&mut self, until: usize, stops: Stops) -> Expr {
        let Some(idx) = self.peek_sig(0).filter(|&i| i < until) else {
            let at = self.toks[until.min(self.toks.len() - 1)].span.start;
            return Expr::Opaque {
                span: Span::new(at, at),
                idents: Vec::new(),
            };
        };
        self.pos = idx;
        let tok = &self.toks[idx];
        match &tok.kind {
            TokenKind::Str { interps } => {
                self.pos = idx + 1;
                Expr::Str {
                    span: tok.span,
                    segments: interps.clone(),
                }
            }
            TokenKind::Number => {
                self.pos = idx + 1;
                Expr::Lit { span: tok.span }
            }
            TokenKind::Word => {
                let w = tok.text(self.src);
                if matches!(w, "true" | "false" | "null") {
                    self.pos = idx + 1;
                    return Expr::Lit { span: tok.span };
                }
                if w == "new" {
                    // `new Foo(args)`: treat the constructed value as opaque.
                    return self.opaque_expr(until, stops);
                }
                let (name, name_end) = self.scan_dotted_name(idx, until);
                let after = self.peek_sig_from(name_end + 1).filter(|&i| i < until);
                match after {
                    Some(i) if self.punct_at(i, '(') => {
                        self.parse_call(idx, name, name_end, i, until)
                    }
                    Some(i)
                        if self.punct_at(i, '{')
                            && self.next_on_same_line(name_end, until) == Some(i) =>
                    {
                        let close = self.matching_close(i);
                        self.pos = (close + 1).min(until);
                        Expr::Call {
                            span: Span::new(tok.span.start, self.toks[close].span.end),
                            name,
                            name_span: Span::new(tok.span.start, self.toks[name_end].span.end),
                            args: Vec::new(),
                            closure: Some(Span::new(
                                self.toks[i].span.start,
                                self.toks[close].span.end,
                            )),
                        }
                    }
                    Some(i)
                        if self.punct_at(i, '[')
                            && self.next_on_same_line(name_end, until) == Some(i) =>
                    {
                        // Index access `m[k]`: union of base and key.
                        let close = self.matching_close(i);
                        self.pos = i + 1;
                        let key = if self.peek_sig(0).filter(|&k| k < close).is_some() {
                            Some(self.parse_expr(close, Stops::arg()))
                        } else {
                            None
                        };
                        self.pos = (close + 1).min(until);
                        let span = Span::new(tok.span.start, self.toks[close].span.end);
                        let base = Expr::Ident {
                            span: Span::new(tok.span.start, self.toks[name_end].span.end),
                            name,
                        };
                        match key {
                            Some(k) => Expr::Binary {
                                span,
                                parts: vec![base, k],
                            },
                            None => base,
                        }
                    }
                    _ => {
                        self.pos = name_end + 1;
                        Expr::Ident {
                            span: Span::new(tok.span.start, self.toks[name_end].span.end),
                            name,
                        }
                    }
                }
            }
            TokenKind::Punct('[') => self.parse_collection(idx),
            TokenKind::Punct('{') => {
                let close = self.matching_close(idx);
                self.pos = close + 1;
                Expr::Closure {
                    span: Span::new(tok.span.start, self.toks[close].span.end),
                }
            }
            TokenKind::Punct('(') => {
                let close = self.matching_close(idx);
                self.pos = idx + 1;
                let inner = if self.peek_sig(0).filter(|&i| i < close).is_some() {
                    self.parse_expr(close, Stops::stmt())
                } else {
                    Expr::Lit { span: tok.span }
                };
                self.pos = close + 1;
                Expr::Unary {
                    span: Span::new(tok.span.start, self.toks[close].span.end),
                    inner: Box::new(inner),
                }
            }
            TokenKind::Punct('!' | '-' | '+' | '~') => {
                self.pos = idx + 1;
                if self.peek_sig(0).filter(|&i| i < until).is_none() {
                    return Expr::Opaque {
                        span: tok.span,
                        idents: Vec::new(),
                    };
                }
                let inner = self.parse_primary(until, stops);
                Expr::Unary {
                    span: Span::new(tok.span.start, inner.span().end),
                    inner: Box::new(inner),
                }
            }
            _ => self.opaque_expr(until, stops),
        }
    }

    /// Fallback: consume to the expression end, remembering identifiers.
    fn opaque_expr(&mut self, until: usize, stops: Stops) -> Expr {
        let start_idx = self.pos;
        let mut depth = 0i32;
        let mut last_sig = start_idx;
        let mut idents = Vec::new();
        let mut i = start_idx;
        while i < until {
            match &self.toks[i].kind {
                TokenKind::Punct('(' | '[' | '{') => {
                    depth += 1;
                    last_sig = i;
                }
                TokenKind::Punct(')' | ']' | '}') => {
                    if depth == 0 {
                        break;
                    }
                    depth -= 1;
                    last_sig = i;
                }
                TokenKind::Punct(',') if depth == 0 && stops.comma => break,
                TokenKind::Punct(':') if depth == 0 && stops.colon => break,
                TokenKind::Punct(';') if depth == 0 => break,
                TokenKind::Newline if depth == 0 => {
                    if !self.continues_line(last_sig, i) {
                        break;
                    }
                }
                TokenKind::Word => {
                    idents.push(self.toks[i].text(self.src).to_string());
                    last_sig = i;
                }
                k if is_trivia(k) => {}
                _ => last_sig = i,
            }
            i += 1;
        }
        self.pos = i;
        Expr::Opaque {
            span: Span::new(self.toks[start_idx].span.start, self.toks[last_sig].span.end),
            idents,
        }
    }

    /// `[...]`: map literal when entries are `key: value`, else a list.
    fn parse_collection(&mut self, open: usize) -> Expr {
        let close = self.matching_close(open);
        let span = Span::new(self.toks[open].span.start, self.toks[close].span.end);

        // `[:]` is the empty map.
        let first = self.peek_sig_from(open + 1);
        if first.is_some_and(|i| i < close && self.punct_at(i, ':')) {
            self.pos = close + 1;
            return Expr::Map {
                span,
                entries: Vec::new(),
            };
        }

        let is_map = first.is_some_and(|i| {
            i < close
                && matches!(
                    self.toks[i].kind,
                    TokenKind::Word | TokenKind::Str { .. } | TokenKind::Number
                )
                && self
                    .peek_sig_from(i + 1)
                    .is_some_and(|j| j < close && self.punct_at(j, ':'))
        });

        if is_map {
            let mut entries = Vec::new();
            self.pos = open + 1;
            loop {
                let Some(k) = self.peek_sig(0).filter(|&i| i < close) else {
                    break;
                };
                let key_span = self.toks[k].span;
                let key = match &self.toks[k].kind {
                    TokenKind::Str { .. } => self
                        .string_literal_at(k)
                        .unwrap_or_else(|| self.toks[k].text(self.src).to_string()),
                    _ => self.toks[k].text(self.src).to_string(),
                };
                let Some(colon) = self.peek_sig_from(k + 1).filter(|&i| i < close) else {
                    break;
                };
                if !self.punct_at(colon, ':') {
                    // Not `key: value` after all; bail out to opaque contents.
                    break;
                }
                self.pos = self.peek_sig_from(colon + 1).unwrap_or(close).min(close);
                if self.pos >= close {
                    break;
                }
                let value = self.parse_expr(close, Stops::map_value());
                entries.push(MapEntry {
                    key,
                    key_span,
                    value,
                });
                match self.peek_sig(0).filter(|&i| i < close) {
                    Some(c) if self.punct_at(c, ',') => self.pos = c + 1,
                    _ => break,
                }
            }
            self.pos = close + 1;
            return Expr::Map { span, entries };
        }

        let mut items = Vec::new();
        self.pos = open + 1;
        loop {
            let Some(i) = self.peek_sig(0).filter(|&i| i < close) else {
                break;
            };
            self.pos = i;
            items.push(self.parse_expr(close, Stops::arg()));
            match self.peek_sig(0).filter(|&i| i < close) {
                Some(c) if self.punct_at(c, ',') => self.pos = c + 1,
                _ => break,
            }
        }
        self.pos = close + 1;
        Expr::List { span, items }
    }
}

fn is_op_char(c: char) -> bool {
    matches!(
        c,
        '+' | '-' | '*' | '/' | '%' | '=' | '<' | '>' | '&' | '|' | '!' | '?' | ':' | '^' | '.'
            | ','
    )
}

/// What terminates an expression at depth zero, beyond closers and newlines.
#[derive(Debug, Clone, Copy)]
struct Stops {
    comma: bool,
    colon: bool,
}

impl Stops {
    fn stmt() -> Self {
        Stops {
            comma: false,
            colon: false,
        }
    }
    fn arg() -> Self {
        Stops {
            comma: true,
            colon: false,
        }
    }
    fn map_value() -> Self {
        Stops {
            comma: true,
            colon: false,
        }
    }
}
