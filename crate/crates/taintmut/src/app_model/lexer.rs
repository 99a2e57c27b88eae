//! Tokenizer for the SmartThings Groovy subset.
//!
//! Tokens tile the input exactly: concatenating every token's span in order
//! reproduces the source byte-for-byte. Comments and whitespace are tokens
//! too, so downstream passes never lose text.

use super::ParseError;
use crate::span::Span;

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    /// Identifier or keyword.
    Word,
    Number,
    /// Any quoted string; `interps` is nonempty only for GString forms.
    Str { interps: Vec<Interp> },
    /// Single punctuation or operator character.
    Punct(char),
    LineComment,
    BlockComment,
    /// Run of spaces and tabs.
    Whitespace,
    /// `\n` or `\r\n`.
    Newline,
}

/// One `${...}` or `$name` segment inside a double-quoted string.
#[derive(Debug, Clone, PartialEq)]
pub struct Interp {
    /// Full segment including the `$` sigil and braces.
    pub span: Span,
    /// The expression text between the braces (or the bare name).
    pub inner: Span,
}

#[derive(Debug, Clone)]
pub struct Token {
    pub kind: TokenKind,
    pub span: Span,
}

impl Token {
    pub fn text<'a>(&self, source: &'a str) -> &'a str {
        self.span.slice(source)
    }
}

pub fn lex(source: &str) -> Result<Vec<Token>, ParseError> {
    Lexer {
        src: source.as_bytes(),
        text: source,
        pos: 0,
    }
    .run()
}

struct Lexer<'a> {
    src: &'a [u8],
    text: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn run(mut self) -> Result<Vec<Token>, ParseError> {
        let mut tokens = Vec::new();
        while self.pos < self.src.len() {
            let start = self.pos;
            let kind = self.next_kind(start)?;
            tokens.push(Token {
                kind,
                span: Span::new(start, self.pos),
            });
        }
        Ok(tokens)
    }

    fn peek(&self, off: usize) -> Option<u8> {
        self.src.get(self.pos + off).copied()
    }

    fn next_kind(&mut self, start: usize) -> Result<TokenKind, ParseError> {
        let c = self.src[self.pos];
        match c {
            b'\n' => {
                self.pos += 1;
                Ok(TokenKind::Newline)
            }
            b'\r' if self.peek(1) == Some(b'\n') => {
                self.pos += 2;
                Ok(TokenKind::Newline)
            }
            b' ' | b'\t' | b'\r' => {
                while matches!(self.peek(0), Some(b' ') | Some(b'\t'))
                    || (self.peek(0) == Some(b'\r') && self.peek(1) != Some(b'\n'))
                {
                    self.pos += 1;
                }
                Ok(TokenKind::Whitespace)
            }
            b'/' if self.peek(1) == Some(b'/') => {
                while let Some(b) = self.peek(0) {
                    if b == b'\n' || (b == b'\r' && self.peek(1) == Some(b'\n')) {
                        break;
                    }
                    self.pos += 1;
                }
                Ok(TokenKind::LineComment)
            }
            b'/' if self.peek(1) == Some(b'*') => {
                self.pos += 2;
                loop {
                    match self.peek(0) {
                        Some(b'*') if self.peek(1) == Some(b'/') => {
                            self.pos += 2;
                            break;
                        }
                        Some(_) => self.pos += 1,
                        None => return Err(ParseError::UnbalancedDelimiter(start)),
                    }
                }
                Ok(TokenKind::BlockComment)
            }
            b'\'' | b'"' => self.string(start),
            b'0'..=b'9' => {
                self.pos += 1;
                loop {
                    match self.peek(0) {
                        Some(b) if b.is_ascii_alphanumeric() || b == b'_' => self.pos += 1,
                        Some(b'.') if self.peek(1).is_some_and(|d| d.is_ascii_digit()) => {
                            self.pos += 1
                        }
                        _ => break,
                    }
                }
                Ok(TokenKind::Number)
            }
            b if b.is_ascii_alphabetic() || b == b'_' => {
                while self
                    .peek(0)
                    .is_some_and(|d| d.is_ascii_alphanumeric() || d == b'_')
                {
                    self.pos += 1;
                }
                Ok(TokenKind::Word)
            }
            _ => {
                // Multi-byte UTF-8 and operators alike: one char per token.
                let ch = self.text[self.pos..].chars().next().unwrap();
                self.pos += ch.len_utf8();
                Ok(TokenKind::Punct(ch))
            }
        }
    }

    fn string(&mut self, start: usize) -> Result<TokenKind, ParseError> {
        let quote = self.src[self.pos];
        let triple = self.peek(1) == Some(quote) && self.peek(2) == Some(quote);
        let open_len = if triple { 3 } else { 1 };
        self.pos += open_len;
        let mut interps = Vec::new();
        loop {
            match self.peek(0) {
                None => return Err(ParseError::UnbalancedDelimiter(start)),
                Some(b'\\') => {
                    self.pos += if self.peek(1).is_some() { 2 } else { 1 };
                }
                Some(b) if b == quote => {
                    if triple {
                        if self.peek(1) == Some(quote) && self.peek(2) == Some(quote) {
                            self.pos += 3;
                            break;
                        }
                        self.pos += 1;
                    } else {
                        self.pos += 1;
                        break;
                    }
                }
                Some(b'\n') if !triple => {
                    // Single-line strings may not span lines.
                    return Err(ParseError::UnbalancedDelimiter(start));
                }
                Some(b'$') if quote == b'"' => {
                    let seg_start = self.pos;
                    if self.peek(1) == Some(b'{') {
                        self.pos += 2;
                        let inner_start = self.pos;
                        let mut depth = 1usize;
                        loop {
                            match self.peek(0) {
                                None => return Err(ParseError::UnbalancedDelimiter(seg_start)),
                                Some(b'{') => {
                                    depth += 1;
                                    self.pos += 1;
                                }
                                Some(b'}') => {
                                    depth -= 1;
                                    self.pos += 1;
                                    if depth == 0 {
                                        break;
                                    }
                                }
                                Some(q @ (b'\'' | b'"')) => self.nested_string(q, seg_start)?,
                                Some(_) => self.pos += 1,
                            }
                        }
                        interps.push(Interp {
                            span: Span::new(seg_start, self.pos),
                            inner: Span::new(inner_start, self.pos - 1),
                        });
                    } else if self
                        .peek(1)
                        .is_some_and(|b| b.is_ascii_alphabetic() || b == b'_')
                    {
                        self.pos += 1;
                        let inner_start = self.pos;
                        while self
                            .peek(0)
                            .is_some_and(|b| b.is_ascii_alphanumeric() || b == b'_')
                        {
                            self.pos += 1;
                        }
                        // Dotted property access: `$state.foo`.
                        while self.peek(0) == Some(b'.')
                            && self
                                .peek(1)
                                .is_some_and(|b| b.is_ascii_alphabetic() || b == b'_')
                        {
                            self.pos += 1;
                            while self
                                .peek(0)
                                .is_some_and(|b| b.is_ascii_alphanumeric() || b == b'_')
                            {
                                self.pos += 1;
                            }
                        }
                        interps.push(Interp {
                            span: Span::new(seg_start, self.pos),
                            inner: Span::new(inner_start, self.pos),
                        });
                    } else {
                        self.pos += 1;
                    }
                }
                Some(_) => self.pos += 1,
            }
        }
        Ok(TokenKind::Str { interps })
    }

    /// Skips a quoted string inside a `${...}` expression.
    fn nested_string(&mut self, quote: u8, err_at: usize) -> Result<(), ParseError> {
        self.pos += 1;
        loop {
            match self.peek(0) {
                None | Some(b'\n') => return Err(ParseError::UnbalancedDelimiter(err_at)),
                Some(b'\\') => self.pos += if self.peek(1).is_some() { 2 } else { 1 },
                Some(b) if b == quote => {
                    self.pos += 1;
                    return Ok(());
                }
                Some(_) => self.pos += 1,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn joined(src: &str) -> String {
        lex(src)
            .unwrap()
            .iter()
            .map(|t| t.text(src))
            .collect::<String>()
    }

    #[test]
    fn tokens_tile_source() {
        let src = "def installed() {\n  initialize() // start\n}\n";
        assert_eq!(joined(src), src);
    }

    #[test]
    fn gstring_interpolations() {
        let src = r#"def m = "people in house ${people} and $state.count""#;
        let toks = lex(src).unwrap();
        let s = toks
            .iter()
            .find_map(|t| match &t.kind {
                TokenKind::Str { interps } => Some(interps.clone()),
                _ => None,
            })
            .unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].inner.slice(src), "people");
        assert_eq!(s[1].inner.slice(src), "state.count");
    }

    #[test]
    fn nested_braces_in_interp() {
        let src = r#"log.debug "${elapsed / 1000} sec since ${m["k"]}""#;
        assert_eq!(joined(src), src);
    }

    #[test]
    fn unterminated_string_fails() {
        assert!(matches!(
            lex("def x = \"oops"),
            Err(ParseError::UnbalancedDelimiter(8))
        ));
    }

    #[test]
    fn unterminated_block_comment_fails() {
        assert!(lex("/* nope").is_err());
    }

    #[test]
    fn single_quoted_has_no_interp() {
        let src = "def x = '${notinterp}'";
        let toks = lex(src).unwrap();
        let interps = toks
            .iter()
            .find_map(|t| match &t.kind {
                TokenKind::Str { interps } => Some(interps.len()),
                _ => None,
            })
            .unwrap();
        assert_eq!(interps, 0);
    }
}
