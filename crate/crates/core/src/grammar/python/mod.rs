//! Source codec for the supported Python subset.

mod builder;
mod lexer;
mod parser;
mod printer;
mod spec;

use std::sync::OnceLock;

use thiserror::Error;

pub use builder::{BuildError, Field, TreeBuilder};
pub use printer::HOLE as HOLE_MARKER;

use super::{load_grammar, AstNode, CodecError, Grammar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorClass {
    Syntax,
    Indentation,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{}: {message} (line {line}, column {col})", match .class { ParseErrorClass::Syntax => "SyntaxError", ParseErrorClass::Indentation => "IndentationError" })]
pub struct ParseError {
    pub class: ParseErrorClass,
    pub line: usize,
    pub col: usize,
    pub message: String,
}

/// Grammar text for the Python subset.
pub fn python_grammar_text() -> String {
    spec::grammar_text()
}

/// The Python subset grammar, built once.
pub fn python_grammar() -> &'static Grammar {
    static GRAMMAR: OnceLock<Grammar> = OnceLock::new();
    GRAMMAR.get_or_init(|| load_grammar(&spec::grammar_text()).expect("built-in grammar is well formed"))
}

/// Parses source into a tree over `grammar`, which must contain the subset's
/// constructors (normally [`python_grammar`]).
pub fn parse_to_ast(source: &str, grammar: &Grammar) -> Result<AstNode, ParseError> {
    parser::parse_module(source, grammar)
}

/// Prints a complete tree as canonical source.
pub fn ast_to_code(ast: &AstNode) -> Result<String, CodecError> {
    if !ast.is_complete() {
        return Err(CodecError::IncompleteTree);
    }
    Ok(printer::print_module(ast))
}

/// Prints a possibly partial tree, marking unexpanded positions with `<HOLE>`.
pub fn ast_to_code_partial(ast: &AstNode) -> String {
    printer::print_module(ast)
}

/// Python `repr` of a string value.
pub fn python_str_repr(s: &str) -> String {
    printer::str_repr(s, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::{ast_to_rules, rules_to_ast, Action};

    fn round_trip(src: &str) -> String {
        let g = python_grammar();
        let tree = parse_to_ast(src, g).unwrap_or_else(|e| panic!("{src:?}: {e}"));
        let rules = ast_to_rules(&tree, g).unwrap();
        let back = rules_to_ast(&rules, g).unwrap();
        assert!(back.frontier.is_none());
        assert_eq!(back.tree, tree);
        let code = ast_to_code(&tree).unwrap();
        let again = parse_to_ast(&code, g).unwrap_or_else(|e| panic!("reprint of {src:?} failed: {e}\n{code}"));
        assert_eq!(again, tree, "reprint differs:\n{code}");
        code
    }

    #[test]
    fn list_assignment() {
        let g = python_grammar();
        let tree = parse_to_ast("mylist = [0]", g).unwrap();
        let rules = ast_to_rules(&tree, g).unwrap();
        let text: Vec<String> = rules
            .actions
            .iter()
            .map(|a| match a {
                Action::ApplyRule(id) => g.rules()[*id].to_string(),
                Action::FillTerminal(t) => format!("fill {t}"),
            })
            .collect();
        assert_eq!(text.first().map(String::as_str), Some("root -> Module"));
        assert!(text.contains(&"body -> Assign".to_string()));
        assert!(text.contains(&"fill mylist".to_string()));
        assert_eq!(text.last().map(String::as_str), Some("body -> <end>"), "{text:?}");
        assert_eq!(round_trip("mylist = [0]"), "mylist = [0]\n");
    }

    #[test]
    fn empty_module() {
        let g = python_grammar();
        let tree = parse_to_ast("", g).unwrap();
        assert_eq!(tree.children.len(), 1);
        assert_eq!(ast_to_code(&tree).unwrap(), "");
        assert_eq!(round_trip("\n\n# nothing\n"), "");
    }

    #[test]
    fn statements_round_trip() {
        let cases = [
            "import os.path as p, sys\nfrom ..a.b import (c, d as e,)\nfrom x import *\n",
            "def f(a, b=1, *args, c, d=2, **kw):\n    return a + b\n",
            "@dec\n@dec2(1)\nclass A(B, metaclass=M):\n    x = 1\n\n    def m(self):\n        pass\n",
            "for i, j in zip(a, b):\n    if i:\n        break\n    elif j:\n        continue\n    else:\n        pass\nelse:\n    x = 2\n",
            "while not done:\n    done = True\nelse:\n    y = 1\n",
            "try:\n    f()\nexcept ValueError as e:\n    raise RuntimeError('x') from e\nexcept (A, B):\n    raise\nexcept:\n    pass\nelse:\n    g()\nfinally:\n    h()\n",
            "with open(p) as fh, lock:\n    data = fh.read()\n",
            "assert x, 'msg'\nassert y\ndel a[0], b.c\nglobal g1, g2\n",
            "x += 1; y <<= 2\na = b = c\n*a, b = t\n",
            "def g():\n    nonlocal q\n    x = yield\n    y = yield from z\n    yield a, b\n",
            "if x: y = 1\n",
            "class C: pass\n",
        ];
        for c in cases {
            round_trip(c);
        }
    }

    #[test]
    fn expressions_round_trip() {
        let cases = [
            "x = a if b else c if d else e",
            "x = lambda: 0",
            "x = lambda a, *b, **c: a or b and not c",
            "x = (lambda a: a) if t else None",
            "x = a < b <= c != d is not e not in f in g is h",
            "x = -a ** -b ** c",
            "x = (-a) ** b",
            "x = (a ** b) ** c",
            "x = a - (b - c) - d",
            "x = a | b ^ c & d << e >> f + g * h / i // j % k @ l",
            "x = ~a + +b",
            "x = f(*a, k=1, **kw)(2)[1:2][::2][3, 4][a:][:b].c",
            "x = f(y for y in z if y)",
            "x = [y for y in z for w in y if w if not w]",
            "x = {k: v for k, v in d.items()}",
            "x = {a for a in b}",
            "x = {1, 2}",
            "x = {}",
            "x = {'a': 1, **b}" ,
            "x = ()",
            "x = (1,)",
            "x = [1, 2,]",
            "x = 1 .real",
            "x = 1.5e-3j + 0x1f",
            "x = 'a' 'b' \"c'\" '\\n\\t\\\\'",
            "x = b'\\x00ab'",
            "x = ...",
            "x = True, False, None",
            "x = not (a or b)",
            "x = (a and b) or c",
            "x = a[b, c]",
            "x = f(a)(b)",
            "x = (yield)",
            "print('%r != %r' % (a, b))",
            "x = [*a, *b]",
        ];
        for c in cases {
            if c.contains("**b}") {
                assert!(parse_to_ast(c, python_grammar()).is_err());
                continue;
            }
            round_trip(c);
        }
    }

    #[test]
    fn syntax_errors() {
        let g = python_grammar();
        for bad in ["x =", "def f(:\n    pass", "x = (1", "return return", "f(a=1, b)", "1 +* 2", "x = f'{a}'"] {
            let e = parse_to_ast(bad, g).unwrap_err();
            assert_eq!(e.class, ParseErrorClass::Syntax, "{bad:?}: {e}");
        }
        for bad in ["def f():\nreturn 1", "x = 1\n    y = 2", "if x:\n    a = 1\n  b = 2"] {
            let e = parse_to_ast(bad, g).unwrap_err();
            assert_eq!(e.class, ParseErrorClass::Indentation, "{bad:?}: {e}");
        }
    }

    #[test]
    fn partial_printing_marks_holes() {
        let g = python_grammar();
        let tree = parse_to_ast("x = 1", g).unwrap();
        let rules = ast_to_rules(&tree, g).unwrap();
        let mut partial = rules.clone();
        partial.actions.truncate(rules.len() / 2);
        let replay = rules_to_ast(&partial, g).unwrap();
        assert!(ast_to_code(&replay.tree).is_err());
        assert!(ast_to_code_partial(&replay.tree).contains(HOLE_MARKER));
    }
}
