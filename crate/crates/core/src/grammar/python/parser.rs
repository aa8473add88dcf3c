use super::builder::{Field, TreeBuilder};
use super::lexer::{tokenize, Tok, Token};
use super::{ParseError, ParseErrorClass};
use crate::grammar::{AstNode, Grammar};

const KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class", "continue", "def", "del",
    "elif", "else", "except", "finally", "for", "from", "global", "if", "import", "in", "is", "lambda", "nonlocal",
    "not", "or", "pass", "raise", "return", "try", "while", "with", "yield",
];

const AUG_OPS: &[(&str, &str)] = &[
    ("+=", "Add"),
    ("-=", "Sub"),
    ("*=", "Mult"),
    ("@=", "MatMult"),
    ("/=", "Div"),
    ("%=", "Mod"),
    ("**=", "Pow"),
    ("<<=", "LShift"),
    (">>=", "RShift"),
    ("|=", "BitOr"),
    ("^=", "BitXor"),
    ("&=", "BitAnd"),
    ("//=", "FloorDiv"),
];

type PResult<T> = Result<T, ParseError>;

pub(crate) fn parse_module(source: &str, grammar: &Grammar) -> PResult<AstNode> {
    let tokens = tokenize(source)?;
    let mut p = Parser { toks: tokens, pos: 0, b: TreeBuilder::new(grammar) };
    let mut body = Vec::new();
    while !p.at_end() {
        if p.eat_tok(&Tok::Newline) {
            continue;
        }
        body.extend(p.statement()?);
    }
    let module = p.build("Module", vec![Field::Many("body", body)])?;
    p.b.wrap("root", module).map_err(|e| p.error(e.0))
}

struct Parser<'g> {
    toks: Vec<Token>,
    pos: usize,
    b: TreeBuilder<'g>,
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn at_end(&self) -> bool {
        matches!(self.peek(), Tok::End)
    }

    fn advance(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        let t = &self.toks[self.pos];
        let class = match t.tok {
            Tok::Indent => ParseErrorClass::Indentation,
            _ => ParseErrorClass::Syntax,
        };
        let message = match t.tok {
            Tok::Indent => "unexpected indent".to_string(),
            _ => message.into(),
        };
        ParseError { class, line: t.line, col: t.col, message }
    }

    fn is_op(&self, op: &str) -> bool {
        matches!(self.peek(), Tok::Op(o) if *o == op)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Name(n) if n == kw)
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if self.is_op(op) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn eat_tok(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_op(&mut self, op: &str) -> PResult<()> {
        if self.eat_op(op) {
            Ok(())
        } else {
            Err(self.error(format!("expected '{op}'")))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.error(format!("expected '{kw}'")))
        }
    }

    fn identifier(&mut self) -> PResult<String> {
        match self.peek() {
            Tok::Name(n) if !KEYWORDS.contains(&n.as_str()) => {
                let n = n.clone();
                self.advance();
                Ok(n)
            }
            _ => Err(self.error("invalid syntax: expected a name")),
        }
    }

    fn build(&self, name: &str, fields: Vec<Field>) -> PResult<AstNode> {
        self.b.ctor(name, fields).map_err(|e| self.error(e.0))
    }

    fn leaf(&self, name: &str) -> PResult<AstNode> {
        self.build(name, Vec::new())
    }

    // ----- statements -----

    fn statement(&mut self) -> PResult<Vec<AstNode>> {
        let compound = match self.peek() {
            Tok::Name(n) => matches!(
                n.as_str(),
                "if" | "while" | "for" | "try" | "with" | "def" | "class"
            ),
            Tok::Op("@") => true,
            _ => false,
        };
        if compound {
            Ok(vec![self.compound_statement()?])
        } else {
            self.simple_statements()
        }
    }

    fn simple_statements(&mut self) -> PResult<Vec<AstNode>> {
        let mut out = vec![self.small_statement()?];
        while self.eat_op(";") {
            if matches!(self.peek(), Tok::Newline | Tok::End) {
                break;
            }
            out.push(self.small_statement()?);
        }
        if !self.eat_tok(&Tok::Newline) && !self.at_end() {
            return Err(self.error("invalid syntax"));
        }
        Ok(out)
    }

    fn small_statement(&mut self) -> PResult<AstNode> {
        let kw = match self.peek() {
            Tok::Name(n) => n.clone(),
            Tok::Indent => return Err(self.error("unexpected indent")),
            _ => String::new(),
        };
        match kw.as_str() {
            "pass" | "break" | "continue" => {
                self.advance();
                let name = match kw.as_str() {
                    "pass" => "Pass",
                    "break" => "Break",
                    _ => "Continue",
                };
                self.leaf(name)
            }
            "return" => {
                self.advance();
                if matches!(self.peek(), Tok::Newline | Tok::End) || self.is_op(";") {
                    self.leaf("ReturnNone")
                } else {
                    let v = self.testlist_star()?;
                    self.build("Return", vec![Field::One("value", v)])
                }
            }
            "del" => {
                self.advance();
                let targets = self.expr_list_items()?;
                self.build("Delete", vec![Field::Many("targets", targets)])
            }
            "raise" => {
                self.advance();
                if matches!(self.peek(), Tok::Newline | Tok::End) || self.is_op(";") {
                    return self.leaf("RaiseBare");
                }
                let exc = self.test()?;
                if self.eat_kw("from") {
                    let cause = self.test()?;
                    self.build("RaiseFrom", vec![Field::One("exc", exc), Field::One("cause", cause)])
                } else {
                    self.build("Raise", vec![Field::One("exc", exc)])
                }
            }
            "assert" => {
                self.advance();
                let test = self.test()?;
                if self.eat_op(",") {
                    let msg = self.test()?;
                    self.build("AssertMsg", vec![Field::One("test", test), Field::One("msg", msg)])
                } else {
                    self.build("Assert", vec![Field::One("test", test)])
                }
            }
            "global" | "nonlocal" => {
                self.advance();
                let mut names = Vec::new();
                loop {
                    let n = self.identifier()?;
                    names.push(self.build("GlobalName", vec![Field::Term("name", n)])?);
                    if !self.eat_op(",") {
                        break;
                    }
                }
                let ctor = if kw == "global" { "Global" } else { "Nonlocal" };
                self.build(ctor, vec![Field::Many("gnames", names)])
            }
            "import" => {
                self.advance();
                let mut names = Vec::new();
                loop {
                    let name = self.dotted_name()?;
                    names.push(self.alias(name)?);
                    if !self.eat_op(",") {
                        break;
                    }
                }
                self.build("Import", vec![Field::Many("names", names)])
            }
            "from" => {
                self.advance();
                let mut module = String::new();
                while self.is_op(".") || self.is_op("...") {
                    module.push_str(if self.eat_op(".") { "." } else { self.advance(); "..." });
                }
                if !self.is_kw("import") {
                    module.push_str(&self.dotted_name()?);
                }
                self.expect_kw("import")?;
                let mut names = Vec::new();
                if self.eat_op("*") {
                    names.push(self.build("Alias", vec![Field::Term("name", "*".into())])?);
                } else {
                    let paren = self.eat_op("(");
                    loop {
                        let name = self.identifier()?;
                        names.push(self.alias(name)?);
                        if !self.eat_op(",") {
                            break;
                        }
                        if paren && self.is_op(")") {
                            break;
                        }
                    }
                    if paren {
                        self.expect_op(")")?;
                    }
                }
                self.build("ImportFrom", vec![Field::Term("module", module), Field::Many("names", names)])
            }
            _ => self.expr_statement(),
        }
    }

    fn dotted_name(&mut self) -> PResult<String> {
        let mut name = self.identifier()?;
        while self.eat_op(".") {
            name.push('.');
            name.push_str(&self.identifier()?);
        }
        Ok(name)
    }

    fn alias(&mut self, name: String) -> PResult<AstNode> {
        if self.eat_kw("as") {
            let asname = self.identifier()?;
            self.build("AliasAs", vec![Field::Term("name", name), Field::Term("asname", asname)])
        } else {
            self.build("Alias", vec![Field::Term("name", name)])
        }
    }

    fn expr_statement(&mut self) -> PResult<AstNode> {
        let first = self.yield_or_testlist()?;
        if let Tok::Op(op) = self.peek() {
            if let Some((_, name)) = AUG_OPS.iter().find(|(o, _)| o == op) {
                self.advance();
                let value = self.yield_or_testlist()?;
                let op = self.leaf(name)?;
                return self.build(
                    "AugAssign",
                    vec![Field::One("target", first), Field::One("op", op), Field::One("value", value)],
                );
            }
            if *op == ":" {
                return Err(self.error("annotated assignments are not supported"));
            }
        }
        if !self.is_op("=") {
            return self.build("Expr", vec![Field::One("value", first)]);
        }
        let mut items = vec![first];
        while self.eat_op("=") {
            items.push(self.yield_or_testlist()?);
        }
        let value = items.pop().expect("at least two items");
        self.build("Assign", vec![Field::Many("targets", items), Field::One("value", value)])
    }

    fn yield_or_testlist(&mut self) -> PResult<AstNode> {
        if self.is_kw("yield") {
            self.yield_expr()
        } else {
            self.testlist_star()
        }
    }

    fn compound_statement(&mut self) -> PResult<AstNode> {
        if self.is_op("@") {
            let mut decorators = Vec::new();
            while self.eat_op("@") {
                decorators.push(self.test()?);
                if !self.eat_tok(&Tok::Newline) {
                    return Err(self.error("invalid syntax"));
                }
            }
            return match self.peek() {
                Tok::Name(n) if n == "def" => self.funcdef(decorators),
                Tok::Name(n) if n == "class" => self.classdef(decorators),
                _ => Err(self.error("invalid syntax: decorator must precede def or class")),
            };
        }
        let kw = match self.peek() {
            Tok::Name(n) => n.clone(),
            _ => unreachable!("caller checked for a compound keyword"),
        };
        match kw.as_str() {
            "def" => self.funcdef(Vec::new()),
            "class" => self.classdef(Vec::new()),
            "if" => {
                self.advance();
                self.if_rest()
            }
            "while" => {
                self.advance();
                let test = self.named_test()?;
                let body = self.suite()?;
                let orelse = self.else_suite()?;
                self.build(
                    "While",
                    vec![Field::One("test", test), Field::Many("body", body), Field::Many("orelse", orelse)],
                )
            }
            "for" => {
                self.advance();
                let target = self.target_list()?;
                self.expect_kw("in")?;
                let iter = self.testlist_star()?;
                let body = self.suite()?;
                let orelse = self.else_suite()?;
                self.build(
                    "For",
                    vec![
                        Field::One("target", target),
                        Field::One("iter", iter),
                        Field::Many("body", body),
                        Field::Many("orelse", orelse),
                    ],
                )
            }
            "with" => {
                self.advance();
                let mut items = Vec::new();
                loop {
                    let ctx = self.test()?;
                    if self.eat_kw("as") {
                        let vars = self.target_single()?;
                        items.push(self.build(
                            "WithItemAs",
                            vec![Field::One("context_expr", ctx), Field::One("optional_vars", vars)],
                        )?);
                    } else {
                        items.push(self.build("WithItem", vec![Field::One("context_expr", ctx)])?);
                    }
                    if !self.eat_op(",") {
                        break;
                    }
                }
                let body = self.suite()?;
                self.build("With", vec![Field::Many("items", items), Field::Many("body", body)])
            }
            "try" => self.try_statement(),
            _ => unreachable!("caller checked for a compound keyword"),
        }
    }

    fn if_rest(&mut self) -> PResult<AstNode> {
        let test = self.named_test()?;
        let body = self.suite()?;
        let orelse = if self.eat_kw("elif") {
            vec![self.if_rest()?]
        } else {
            self.else_suite()?
        };
        self.build("If", vec![Field::One("test", test), Field::Many("body", body), Field::Many("orelse", orelse)])
    }

    fn else_suite(&mut self) -> PResult<Vec<AstNode>> {
        if self.eat_kw("else") {
            self.suite()
        } else {
            Ok(Vec::new())
        }
    }

    fn try_statement(&mut self) -> PResult<AstNode> {
        self.expect_kw("try")?;
        let body = self.suite()?;
        let mut handlers = Vec::new();
        while self.eat_kw("except") {
            if self.is_op(":") {
                let hb = self.suite()?;
                handlers.push(self.build("Handler", vec![Field::Many("body", hb)])?);
                continue;
            }
            let ty = self.test()?;
            if self.eat_kw("as") {
                let name = self.identifier()?;
                let hb = self.suite()?;
                handlers.push(self.build(
                    "HandlerAs",
                    vec![Field::One("type", ty), Field::Term("name", name), Field::Many("body", hb)],
                )?);
            } else {
                let hb = self.suite()?;
                handlers.push(self.build("HandlerType", vec![Field::One("type", ty), Field::Many("body", hb)])?);
            }
        }
        let orelse = if !handlers.is_empty() { self.else_suite()? } else { Vec::new() };
        let finalbody = if self.eat_kw("finally") { self.suite()? } else { Vec::new() };
        if handlers.is_empty() && finalbody.is_empty() {
            return Err(self.error("invalid syntax: expected 'except' or 'finally' block"));
        }
        self.build(
            "Try",
            vec![
                Field::Many("body", body),
                Field::Many("handlers", handlers),
                Field::Many("orelse", orelse),
                Field::Many("finalbody", finalbody),
            ],
        )
    }

    fn funcdef(&mut self, decorators: Vec<AstNode>) -> PResult<AstNode> {
        self.expect_kw("def")?;
        let name = self.identifier()?;
        self.expect_op("(")?;
        let params = self.params(")")?;
        self.expect_op(")")?;
        if self.is_op("->") {
            return Err(self.error("return annotations are not supported"));
        }
        let body = self.suite()?;
        self.build(
            "FunctionDef",
            vec![
                Field::Term("name", name),
                Field::Many("params", params),
                Field::Many("body", body),
                Field::Many("decorators", decorators),
            ],
        )
    }

    fn classdef(&mut self, decorators: Vec<AstNode>) -> PResult<AstNode> {
        self.expect_kw("class")?;
        let name = self.identifier()?;
        let (mut bases, mut keywords) = (Vec::new(), Vec::new());
        if self.eat_op("(") {
            let (a, k) = self.call_arguments()?;
            bases = a;
            keywords = k;
        }
        let body = self.suite()?;
        self.build(
            "ClassDef",
            vec![
                Field::Term("name", name),
                Field::Many("bases", bases),
                Field::Many("keywords", keywords),
                Field::Many("body", body),
                Field::Many("decorators", decorators),
            ],
        )
    }

    /// Parameter list for `def` (closed by `)`) or `lambda` (closed by `:`).
    fn params(&mut self, close: &str) -> PResult<Vec<AstNode>> {
        let mut out = Vec::new();
        let mut seen = std::collections::HashSet::new();
        let mut need_default = false;
        let mut after_star = false;
        while !self.is_op(close) {
            if self.eat_op("**") {
                let a = self.identifier()?;
                if !seen.insert(a.clone()) {
                    return Err(self.error(format!("duplicate argument '{a}' in function definition")));
                }
                out.push(self.build("KwArgs", vec![Field::Term("arg", a)])?);
            } else if self.eat_op("*") {
                after_star = true;
                if self.is_op(",") || self.is_op(close) {
                    out.push(self.leaf("KwOnly")?);
                } else {
                    let a = self.identifier()?;
                    if !seen.insert(a.clone()) {
                        return Err(self.error(format!("duplicate argument '{a}' in function definition")));
                    }
                    out.push(self.build("VarArgs", vec![Field::Term("arg", a)])?);
                }
            } else {
                let a = self.identifier()?;
                if !seen.insert(a.clone()) {
                    return Err(self.error(format!("duplicate argument '{a}' in function definition")));
                }
                if self.eat_op("=") {
                    let d = self.test()?;
                    if !after_star {
                        need_default = true;
                    }
                    out.push(self.build("ParamDefault", vec![Field::Term("arg", a), Field::One("default", d)])?);
                } else {
                    if need_default && !after_star {
                        return Err(self.error("non-default argument follows default argument"));
                    }
                    out.push(self.build("Param", vec![Field::Term("arg", a)])?);
                }
            }
            if !self.eat_op(",") {
                break;
            }
        }
        Ok(out)
    }

    fn suite(&mut self) -> PResult<Vec<AstNode>> {
        self.expect_op(":")?;
        if !self.eat_tok(&Tok::Newline) {
            return self.simple_statements();
        }
        if !self.eat_tok(&Tok::Indent) {
            let t = &self.toks[self.pos];
            return Err(ParseError {
                class: ParseErrorClass::Indentation,
                line: t.line,
                col: t.col,
                message: "expected an indented block".into(),
            });
        }
        let mut body = Vec::new();
        while !self.eat_tok(&Tok::Dedent) {
            if self.at_end() {
                break;
            }
            body.extend(self.statement()?);
        }
        Ok(body)
    }

    // ----- expressions -----

    /// `test` with the walrus operator rejected.
    fn named_test(&mut self) -> PResult<AstNode> {
        let t = self.test()?;
        if self.is_op(":=") {
            return Err(self.error("assignment expressions are not supported"));
        }
        Ok(t)
    }

    fn testlist_star(&mut self) -> PResult<AstNode> {
        let first = self.test_or_star()?;
        if !self.is_op(",") {
            return Ok(first);
        }
        let mut elts = vec![first];
        while self.eat_op(",") {
            if self.ends_list() {
                break;
            }
            elts.push(self.test_or_star()?);
        }
        self.build("Tuple", vec![Field::Many("elts", elts)])
    }

    fn ends_list(&self) -> bool {
        matches!(self.peek(), Tok::Newline | Tok::End)
            || [")", "]", "}", "=", ":", ";"].iter().any(|o| self.is_op(o))
            || AUG_OPS.iter().any(|(o, _)| self.is_op(o))
            || self.is_kw("in")
    }

    fn test_or_star(&mut self) -> PResult<AstNode> {
        if self.eat_op("*") {
            let v = self.bitor()?;
            self.build("Starred", vec![Field::One("value", v)])
        } else {
            self.test()
        }
    }

    /// `for` targets and `del` lists: bit-or expressions so `in` is left alone.
    fn target_list(&mut self) -> PResult<AstNode> {
        let first = self.target_single()?;
        if !self.is_op(",") {
            return Ok(first);
        }
        let mut elts = vec![first];
        while self.eat_op(",") {
            if self.ends_list() {
                break;
            }
            elts.push(self.target_single()?);
        }
        self.build("Tuple", vec![Field::Many("elts", elts)])
    }

    fn target_single(&mut self) -> PResult<AstNode> {
        if self.eat_op("*") {
            let v = self.bitor()?;
            self.build("Starred", vec![Field::One("value", v)])
        } else {
            self.bitor()
        }
    }

    fn expr_list_items(&mut self) -> PResult<Vec<AstNode>> {
        let mut items = vec![self.target_single()?];
        while self.eat_op(",") {
            if self.ends_list() {
                break;
            }
            items.push(self.target_single()?);
        }
        Ok(items)
    }

    fn test(&mut self) -> PResult<AstNode> {
        if self.is_kw("lambda") {
            return self.lambda();
        }
        let body = self.or_test()?;
        if self.eat_kw("if") {
            let test = self.or_test()?;
            self.expect_kw("else")?;
            let orelse = self.test()?;
            return self.build(
                "IfExp",
                vec![Field::One("test", test), Field::One("then_expr", body), Field::One("else_expr", orelse)],
            );
        }
        Ok(body)
    }

    fn lambda(&mut self) -> PResult<AstNode> {
        self.expect_kw("lambda")?;
        let params = self.params(":")?;
        self.expect_op(":")?;
        let body = self.test()?;
        self.build("Lambda", vec![Field::Many("params", params), Field::One("body_expr", body)])
    }

    fn bool_chain(&mut self, kw: &str, op: &str, next: fn(&mut Self) -> PResult<AstNode>) -> PResult<AstNode> {
        let first = next(self)?;
        if !self.is_kw(kw) {
            return Ok(first);
        }
        let mut values = vec![first];
        while self.eat_kw(kw) {
            values.push(next(self)?);
        }
        let op = self.leaf(op)?;
        self.build("BoolOp", vec![Field::One("bool_op", op), Field::Many("values", values)])
    }

    fn or_test(&mut self) -> PResult<AstNode> {
        self.bool_chain("or", "Or", Self::and_test)
    }

    fn and_test(&mut self) -> PResult<AstNode> {
        self.bool_chain("and", "And", Self::not_test)
    }

    fn not_test(&mut self) -> PResult<AstNode> {
        if self.eat_kw("not") {
            let operand = self.not_test()?;
            let op = self.leaf("Not")?;
            return self.build("UnaryOp", vec![Field::One("unary_op", op), Field::One("operand", operand)]);
        }
        self.comparison()
    }

    fn comparison_op(&mut self) -> Option<&'static str> {
        let op = match self.peek() {
            Tok::Op("<") => "Lt",
            Tok::Op(">") => "Gt",
            Tok::Op("==") => "Eq",
            Tok::Op(">=") => "GtE",
            Tok::Op("<=") => "LtE",
            Tok::Op("!=") => "NotEq",
            Tok::Name(n) if n == "in" => "In",
            Tok::Name(n) if n == "not" && matches!(self.peek_at(1), Tok::Name(m) if m == "in") => {
                self.advance();
                "NotIn"
            }
            Tok::Name(n) if n == "is" => {
                if matches!(self.peek_at(1), Tok::Name(m) if m == "not") {
                    self.advance();
                    "IsNot"
                } else {
                    "Is"
                }
            }
            _ => return None,
        };
        self.advance();
        Some(op)
    }

    fn comparison(&mut self) -> PResult<AstNode> {
        let left = self.bitor()?;
        let mut ops = Vec::new();
        let mut comparators = Vec::new();
        while let Some(op) = self.comparison_op() {
            ops.push(self.leaf(op)?);
            comparators.push(self.bitor()?);
        }
        if ops.is_empty() {
            return Ok(left);
        }
        self.build(
            "Compare",
            vec![Field::One("left", left), Field::Many("ops", ops), Field::Many("comparators", comparators)],
        )
    }

    fn binary(&mut self, table: &[(&str, &str)], next: fn(&mut Self) -> PResult<AstNode>) -> PResult<AstNode> {
        let mut left = next(self)?;
        loop {
            let Some(&(_, name)) = table.iter().find(|(o, _)| self.is_op(o)) else { break };
            self.advance();
            let right = next(self)?;
            let op = self.leaf(name)?;
            left = self.build("BinOp", vec![Field::One("left", left), Field::One("op", op), Field::One("right", right)])?;
        }
        Ok(left)
    }

    fn bitor(&mut self) -> PResult<AstNode> {
        self.binary(&[("|", "BitOr")], Self::bitxor)
    }

    fn bitxor(&mut self) -> PResult<AstNode> {
        self.binary(&[("^", "BitXor")], Self::bitand)
    }

    fn bitand(&mut self) -> PResult<AstNode> {
        self.binary(&[("&", "BitAnd")], Self::shift)
    }

    fn shift(&mut self) -> PResult<AstNode> {
        self.binary(&[("<<", "LShift"), (">>", "RShift")], Self::arith)
    }

    fn arith(&mut self) -> PResult<AstNode> {
        self.binary(&[("+", "Add"), ("-", "Sub")], Self::term)
    }

    fn term(&mut self) -> PResult<AstNode> {
        self.binary(&[("*", "Mult"), ("/", "Div"), ("//", "FloorDiv"), ("%", "Mod"), ("@", "MatMult")], Self::factor)
    }

    fn factor(&mut self) -> PResult<AstNode> {
        let op = match self.peek() {
            Tok::Op("-") => "USub",
            Tok::Op("+") => "UAdd",
            Tok::Op("~") => "Invert",
            _ => return self.power(),
        };
        self.advance();
        let operand = self.factor()?;
        let op = self.leaf(op)?;
        self.build("UnaryOp", vec![Field::One("unary_op", op), Field::One("operand", operand)])
    }

    fn power(&mut self) -> PResult<AstNode> {
        let base = self.atom_expr()?;
        if self.eat_op("**") {
            let exp = self.factor()?;
            let op = self.leaf("Pow")?;
            return self.build("BinOp", vec![Field::One("left", base), Field::One("op", op), Field::One("right", exp)]);
        }
        Ok(base)
    }

    fn atom_expr(&mut self) -> PResult<AstNode> {
        if self.is_kw("await") {
            return Err(self.error("await is not supported"));
        }
        let mut e = self.atom()?;
        loop {
            if self.eat_op("(") {
                let (args, keywords) = self.call_arguments()?;
                e = self.build(
                    "Call",
                    vec![Field::One("func", e), Field::Many("args", args), Field::Many("keywords", keywords)],
                )?;
            } else if self.eat_op("[") {
                let slice = self.subscript_list()?;
                self.expect_op("]")?;
                e = self.build("Subscript", vec![Field::One("value", e), Field::One("slice", slice)])?;
            } else if self.eat_op(".") {
                let attr = self.identifier()?;
                e = self.build("Attribute", vec![Field::One("value", e), Field::Term("attr", attr)])?;
            } else {
                break;
            }
        }
        Ok(e)
    }

    /// Arguments after `(`, consuming the closing `)`.
    fn call_arguments(&mut self) -> PResult<(Vec<AstNode>, Vec<AstNode>)> {
        let mut args = Vec::new();
        let mut keywords = Vec::new();
        while !self.is_op(")") {
            if self.eat_op("**") {
                let v = self.test()?;
                keywords.push(self.build("KwSplat", vec![Field::One("value", v)])?);
            } else if self.eat_op("*") {
                let v = self.test()?;
                args.push(self.build("Starred", vec![Field::One("value", v)])?);
            } else if matches!(self.peek(), Tok::Name(_)) && matches!(self.peek_at(1), Tok::Op("=")) {
                let name = self.identifier()?;
                self.expect_op("=")?;
                let v = self.test()?;
                keywords.push(self.build("Keyword", vec![Field::Term("arg", name), Field::One("value", v)])?);
            } else {
                let v = self.test()?;
                if self.is_kw("for") {
                    let generators = self.comp_for()?;
                    args.push(self.build("GeneratorExp", vec![Field::One("elt", v), Field::Many("generators", generators)])?);
                } else {
                    if !keywords.is_empty() && keywords.iter().all(|k: &AstNode| k.kind == "Keyword") {
                        return Err(self.error("positional argument follows keyword argument"));
                    }
                    args.push(v);
                }
            }
            if !self.eat_op(",") {
                break;
            }
        }
        self.expect_op(")")?;
        Ok((args, keywords))
    }

    fn subscript_list(&mut self) -> PResult<AstNode> {
        let first = self.subscript()?;
        if !self.is_op(",") {
            return Ok(first);
        }
        let mut elts = vec![first];
        while self.eat_op(",") {
            if self.is_op("]") {
                break;
            }
            elts.push(self.subscript()?);
        }
        if elts.iter().any(|e| e.kind == "Slice") {
            return Err(self.error("extended slices are not supported"));
        }
        self.build("Tuple", vec![Field::Many("elts", elts)])
    }

    fn subscript(&mut self) -> PResult<AstNode> {
        let lower = if self.is_op(":") { None } else { Some(self.test()?) };
        if !self.eat_op(":") {
            return lower.ok_or_else(|| self.error("invalid syntax"));
        }
        let opt = |p: &mut Self| -> PResult<Option<AstNode>> {
            if p.is_op(":") || p.is_op("]") || p.is_op(",") {
                Ok(None)
            } else {
                p.test().map(Some)
            }
        };
        let upper = opt(self)?;
        let step = if self.eat_op(":") { opt(self)? } else { None };
        self.build(
            "Slice",
            vec![
                Field::Many("lower", lower.into_iter().collect()),
                Field::Many("upper", upper.into_iter().collect()),
                Field::Many("step", step.into_iter().collect()),
            ],
        )
    }

    fn comp_for(&mut self) -> PResult<Vec<AstNode>> {
        let mut generators = Vec::new();
        while self.eat_kw("for") {
            let target = self.target_list()?;
            self.expect_kw("in")?;
            let iter = self.or_test()?;
            let mut ifs = Vec::new();
            while self.eat_kw("if") {
                ifs.push(self.or_test_nocond()?);
            }
            generators.push(self.build(
                "Comprehension",
                vec![Field::One("target", target), Field::One("iter", iter), Field::Many("ifs", ifs)],
            )?);
        }
        Ok(generators)
    }

    fn or_test_nocond(&mut self) -> PResult<AstNode> {
        if self.is_kw("lambda") {
            return self.lambda();
        }
        self.or_test()
    }

    fn yield_expr(&mut self) -> PResult<AstNode> {
        self.expect_kw("yield")?;
        if self.eat_kw("from") {
            let v = self.test()?;
            return self.build("YieldFrom", vec![Field::One("value", v)]);
        }
        if self.is_op(")") || matches!(self.peek(), Tok::Newline | Tok::End) || self.is_op(";") || self.is_op("=") {
            return self.leaf("YieldNone");
        }
        let v = self.testlist_star()?;
        self.build("Yield", vec![Field::One("value", v)])
    }

    fn atom(&mut self) -> PResult<AstNode> {
        match self.peek().clone() {
            Tok::Op("(") => {
                self.advance();
                if self.eat_op(")") {
                    return self.build("Tuple", vec![Field::Many("elts", Vec::new())]);
                }
                if self.is_kw("yield") {
                    let y = self.yield_expr()?;
                    self.expect_op(")")?;
                    return Ok(y);
                }
                let first = self.test_or_star()?;
                if self.is_kw("for") {
                    let generators = self.comp_for()?;
                    self.expect_op(")")?;
                    return self.build("GeneratorExp", vec![Field::One("elt", first), Field::Many("generators", generators)]);
                }
                if self.eat_op(")") {
                    return Ok(first);
                }
                let mut elts = vec![first];
                while self.eat_op(",") {
                    if self.is_op(")") {
                        break;
                    }
                    elts.push(self.test_or_star()?);
                }
                self.expect_op(")")?;
                self.build("Tuple", vec![Field::Many("elts", elts)])
            }
            Tok::Op("[") => {
                self.advance();
                if self.eat_op("]") {
                    return self.build("List", vec![Field::Many("elts", Vec::new())]);
                }
                let first = self.test_or_star()?;
                if self.is_kw("for") {
                    let generators = self.comp_for()?;
                    self.expect_op("]")?;
                    return self.build("ListComp", vec![Field::One("elt", first), Field::Many("generators", generators)]);
                }
                let mut elts = vec![first];
                while self.eat_op(",") {
                    if self.is_op("]") {
                        break;
                    }
                    elts.push(self.test_or_star()?);
                }
                self.expect_op("]")?;
                self.build("List", vec![Field::Many("elts", elts)])
            }
            Tok::Op("{") => {
                self.advance();
                if self.eat_op("}") {
                    return self.build("Dict", vec![Field::Many("keys", Vec::new()), Field::Many("values", Vec::new())]);
                }
                if self.is_op("**") {
                    return Err(self.error("dict unpacking is not supported"));
                }
                let first = self.test_or_star()?;
                if self.eat_op(":") {
                    let v = self.test()?;
                    if self.is_kw("for") {
                        let generators = self.comp_for()?;
                        self.expect_op("}")?;
                        return self.build(
                            "DictComp",
                            vec![Field::One("key", first), Field::One("value", v), Field::Many("generators", generators)],
                        );
                    }
                    let (mut keys, mut values) = (vec![first], vec![v]);
                    while self.eat_op(",") {
                        if self.is_op("}") {
                            break;
                        }
                        keys.push(self.test()?);
                        self.expect_op(":")?;
                        values.push(self.test()?);
                    }
                    self.expect_op("}")?;
                    return self.build("Dict", vec![Field::Many("keys", keys), Field::Many("values", values)]);
                }
                if self.is_kw("for") {
                    let generators = self.comp_for()?;
                    self.expect_op("}")?;
                    return self.build("SetComp", vec![Field::One("elt", first), Field::Many("generators", generators)]);
                }
                let mut elts = vec![first];
                while self.eat_op(",") {
                    if self.is_op("}") {
                        break;
                    }
                    elts.push(self.test_or_star()?);
                }
                self.expect_op("}")?;
                self.build("Set", vec![Field::Many("elts", elts)])
            }
            Tok::Op("...") => {
                self.advance();
                self.leaf("Ellipsis")
            }
            Tok::Number(n) => {
                self.advance();
                self.build("Num", vec![Field::Term("n", n)])
            }
            Tok::Str { .. } => {
                let mut value = String::new();
                let mut kind = None;
                while let Tok::Str { value: v, bytes } = self.peek().clone() {
                    if kind.is_some_and(|k| k != bytes) {
                        return Err(self.error("cannot mix bytes and nonbytes literals"));
                    }
                    kind = Some(bytes);
                    value.push_str(&v);
                    self.advance();
                }
                let ctor = if kind == Some(true) { "Bytes" } else { "Str" };
                self.build(ctor, vec![Field::Term("s", value)])
            }
            Tok::Name(n) => match n.as_str() {
                "True" => {
                    self.advance();
                    self.leaf("TrueConst")
                }
                "False" => {
                    self.advance();
                    self.leaf("FalseConst")
                }
                "None" => {
                    self.advance();
                    self.leaf("NoneConst")
                }
                _ => {
                    let id = self.identifier()?;
                    self.build("Name", vec![Field::Term("id", id)])
                }
            },
            _ => Err(self.error("invalid syntax")),
        }
    }
}
