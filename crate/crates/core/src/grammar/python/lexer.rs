use super::{ParseError, ParseErrorClass};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Name(String),
    Number(String),
    Str { value: String, bytes: bool },
    Op(&'static str),
    Newline,
    Indent,
    Dedent,
    End,
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

const OPS: &[&str] = &[
    "**=", "//=", ">>=", "<<=", "...", "->", "**", "//", "<<", ">>", "<=", ">=", "==", "!=", "+=", "-=", "*=", "/=",
    "%=", "&=", "|=", "^=", "@=", ":=", "+", "-", "*", "/", "%", "@", "&", "|", "^", "~", "<", ">", "(", ")", "[",
    "]", "{", "}", ",", ":", ".", ";", "=",
];

struct Lexer<'a> {
    src: &'a [char],
    pos: usize,
    line: usize,
    col: usize,
    depth: usize,
    indents: Vec<usize>,
    out: Vec<Token>,
}

pub(crate) fn tokenize(source: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = source.chars().collect();
    let mut lx = Lexer { src: &chars, pos: 0, line: 1, col: 1, depth: 0, indents: vec![0], out: Vec::new() };
    lx.run()?;
    Ok(lx.out)
}

impl Lexer<'_> {
    fn peek(&self, k: usize) -> Option<char> {
        self.src.get(self.pos + k).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.src.get(self.pos).copied()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn err(&self, class: ParseErrorClass, message: impl Into<String>) -> ParseError {
        ParseError { class, line: self.line, col: self.col, message: message.into() }
    }

    fn push(&mut self, tok: Tok, line: usize, col: usize) {
        self.out.push(Token { tok, line, col });
    }

    fn run(&mut self) -> Result<(), ParseError> {
        let mut at_line_start = true;
        loop {
            if at_line_start && self.depth == 0 {
                at_line_start = false;
                if !self.handle_indentation()? {
                    break;
                }
            }
            let Some(c) = self.peek(0) else { break };
            let (line, col) = (self.line, self.col);
            match c {
                ' ' | '\t' | '\x0c' | '\r' => {
                    self.bump();
                }
                '#' => {
                    while self.peek(0).is_some_and(|c| c != '\n') {
                        self.bump();
                    }
                }
                '\\' if self.peek(1) == Some('\n') => {
                    self.bump();
                    self.bump();
                }
                '\\' if self.peek(1) == Some('\r') && self.peek(2) == Some('\n') => {
                    self.bump();
                    self.bump();
                    self.bump();
                }
                '\n' => {
                    self.bump();
                    if self.depth == 0 {
                        if !matches!(self.out.last().map(|t| &t.tok), None | Some(Tok::Newline)) {
                            self.push(Tok::Newline, line, col);
                        }
                        at_line_start = true;
                    }
                }
                c if c.is_ascii_digit() || (c == '.' && self.peek(1).is_some_and(|d| d.is_ascii_digit())) => {
                    let n = self.number();
                    self.push(Tok::Number(n), line, col);
                }
                c if c.is_alphabetic() || c == '_' => {
                    if let Some(tok) = self.string_with_prefix()? {
                        self.push(tok, line, col);
                        continue;
                    }
                    let mut name = String::new();
                    while let Some(c) = self.peek(0).filter(|c| c.is_alphanumeric() || *c == '_') {
                        name.push(c);
                        self.bump();
                    }
                    self.push(Tok::Name(name), line, col);
                }
                '\'' | '"' => {
                    let tok = self.string("")?;
                    self.push(tok, line, col);
                }
                _ => {
                    let op = OPS
                        .iter()
                        .find(|op| op.chars().enumerate().all(|(k, oc)| self.peek(k) == Some(oc)))
                        .ok_or_else(|| self.err(ParseErrorClass::Syntax, format!("invalid character {c:?}")))?;
                    for _ in 0..op.chars().count() {
                        self.bump();
                    }
                    match *op {
                        "(" | "[" | "{" => self.depth += 1,
                        ")" | "]" | "}" => {
                            self.depth = self
                                .depth
                                .checked_sub(1)
                                .ok_or_else(|| self.err(ParseErrorClass::Syntax, format!("unmatched '{op}'")))?;
                        }
                        _ => {}
                    }
                    self.push(Tok::Op(op), line, col);
                }
            }
        }
        if self.depth > 0 {
            return Err(self.err(ParseErrorClass::Syntax, "unexpected EOF: unclosed bracket"));
        }
        let (line, col) = (self.line, self.col);
        if !matches!(self.out.last().map(|t| &t.tok), None | Some(Tok::Newline)) {
            self.push(Tok::Newline, line, col);
        }
        while self.indents.len() > 1 {
            self.indents.pop();
            self.push(Tok::Dedent, line, col);
        }
        self.push(Tok::End, line, col);
        Ok(())
    }

    /// Measures the indentation of the next logical line. Returns false at EOF.
    fn handle_indentation(&mut self) -> Result<bool, ParseError> {
        loop {
            let mut width = 0;
            while let Some(c) = self.peek(0) {
                match c {
                    ' ' => width += 1,
                    '\t' => width = (width / 8 + 1) * 8,
                    '\x0c' => width = 0,
                    _ => break,
                }
                self.bump();
            }
            match self.peek(0) {
                None => return Ok(false),
                Some('\n') => {
                    self.bump();
                }
                Some('\r') if self.peek(1) == Some('\n') => {
                    self.bump();
                    self.bump();
                }
                Some('#') => {
                    while self.peek(0).is_some_and(|c| c != '\n') {
                        self.bump();
                    }
                }
                Some(_) => {
                    let (line, col) = (self.line, self.col);
                    let current = *self.indents.last().expect("indent stack never empty");
                    if width > current {
                        if self.out.is_empty() {
                            return Err(self.err(ParseErrorClass::Indentation, "unexpected indent"));
                        }
                        self.indents.push(width);
                        self.push(Tok::Indent, line, col);
                    } else {
                        while width < *self.indents.last().expect("indent stack never empty") {
                            self.indents.pop();
                            self.push(Tok::Dedent, line, col);
                        }
                        if width != *self.indents.last().expect("indent stack never empty") {
                            return Err(self.err(
                                ParseErrorClass::Indentation,
                                "unindent does not match any outer indentation level",
                            ));
                        }
                    }
                    return Ok(true);
                }
            }
        }
    }

    fn number(&mut self) -> String {
        let mut s = String::new();
        let hex = self.peek(0) == Some('0') && matches!(self.peek(1), Some('x' | 'X'));
        while let Some(c) = self.peek(0) {
            if c.is_ascii_alphanumeric() || c == '_' || c == '.' {
                s.push(c);
                self.bump();
                if !hex && matches!(c, 'e' | 'E') && matches!(self.peek(0), Some('+' | '-')) {
                    s.push(self.bump().expect("peeked"));
                }
            } else {
                break;
            }
        }
        s
    }

    fn string_with_prefix(&mut self) -> Result<Option<Tok>, ParseError> {
        let mut k = 0;
        let mut prefix = String::new();
        while k < 2 {
            match self.peek(k) {
                Some(c) if "rRbBuUfF".contains(c) => {
                    prefix.push(c.to_ascii_lowercase());
                    k += 1;
                }
                _ => break,
            }
        }
        if prefix.is_empty() || !matches!(self.peek(k), Some('\'' | '"')) {
            return Ok(None);
        }
        for _ in 0..k {
            self.bump();
        }
        self.string(&prefix).map(Some)
    }

    fn string(&mut self, prefix: &str) -> Result<Tok, ParseError> {
        if prefix.contains('f') {
            return Err(self.err(ParseErrorClass::Syntax, "f-strings are not supported"));
        }
        let raw = prefix.contains('r');
        let bytes = prefix.contains('b');
        let quote = self.bump().expect("caller saw a quote");
        let triple = self.peek(0) == Some(quote) && self.peek(1) == Some(quote);
        if triple {
            self.bump();
            self.bump();
        }
        let mut value = String::new();
        loop {
            let c = self
                .bump()
                .ok_or_else(|| self.err(ParseErrorClass::Syntax, "EOF while scanning string literal"))?;
            if c == quote {
                if !triple {
                    break;
                }
                if self.peek(0) == Some(quote) && self.peek(1) == Some(quote) {
                    self.bump();
                    self.bump();
                    break;
                }
                value.push(c);
                continue;
            }
            if c == '\n' && !triple {
                return Err(self.err(ParseErrorClass::Syntax, "EOL while scanning string literal"));
            }
            if c != '\\' {
                value.push(c);
                continue;
            }
            let e = self
                .bump()
                .ok_or_else(|| self.err(ParseErrorClass::Syntax, "EOF while scanning string literal"))?;
            if raw {
                value.push('\\');
                value.push(e);
                continue;
            }
            match e {
                '\n' => {}
                '\\' => value.push('\\'),
                '\'' => value.push('\''),
                '"' => value.push('"'),
                'a' => value.push('\x07'),
                'b' => value.push('\x08'),
                'f' => value.push('\x0c'),
                'n' => value.push('\n'),
                'r' => value.push('\r'),
                't' => value.push('\t'),
                'v' => value.push('\x0b'),
                '0'..='7' => {
                    let mut code = e.to_digit(8).expect("octal digit");
                    for _ in 0..2 {
                        match self.peek(0).and_then(|d| d.to_digit(8)) {
                            Some(d) => {
                                code = code * 8 + d;
                                self.bump();
                            }
                            None => break,
                        }
                    }
                    value.push(char::from_u32(code).expect("octal escape below 512"));
                }
                'x' => value.push(self.hex_escape(2)?),
                'u' if !bytes => value.push(self.hex_escape(4)?),
                'U' if !bytes => value.push(self.hex_escape(8)?),
                other => {
                    value.push('\\');
                    value.push(other);
                }
            }
        }
        if bytes && value.chars().any(|c| c as u32 > 0xff) {
            return Err(self.err(ParseErrorClass::Syntax, "bytes can only contain ASCII literal characters"));
        }
        Ok(Tok::Str { value, bytes })
    }

    fn hex_escape(&mut self, digits: usize) -> Result<char, ParseError> {
        let mut code = 0u32;
        for _ in 0..digits {
            let d = self
                .peek(0)
                .and_then(|c| c.to_digit(16))
                .ok_or_else(|| self.err(ParseErrorClass::Syntax, "truncated \\x escape"))?;
            code = code * 16 + d;
            self.bump();
        }
        char::from_u32(code).ok_or_else(|| self.err(ParseErrorClass::Syntax, "illegal Unicode character"))
    }
}
