use crate::grammar::AstNode;

pub const HOLE: &str = "<HOLE>";

const TUPLE: u8 = 0;
const TEST: u8 = 2;
const OR: u8 = 3;
const AND: u8 = 4;
const NOT: u8 = 5;
const CMP: u8 = 6;
const BOR: u8 = 7;
const FACTOR: u8 = 13;
const POWER: u8 = 14;
const AWAIT: u8 = 15;
const ATOM: u8 = 16;

/// Prints a tree as canonical source. Unexpanded positions print as `<HOLE>`.
pub(crate) fn print_module(root: &AstNode) -> String {
    let mut p = Printer { out: String::new(), level: 0 };
    let module = if root.kind == "root" { fields(root).one_opt("root").or(root.children.first()) } else { Some(root) };
    match module {
        Some(m) if m.hole.is_none() && m.kind == "Module" => p.body(&fields(m).many("body")),
        _ => p.line(HOLE),
    }
    p.out
}

struct Printer {
    out: String,
    level: usize,
}

/// View over a constructor node's field children.
struct Fields<'a>(&'a AstNode);

fn fields(node: &AstNode) -> Fields<'_> {
    Fields(node)
}

impl<'a> Fields<'a> {
    /// Constructor under a single-valued field; the field node itself if still a hole.
    fn one(&self, name: &str) -> &'a AstNode {
        self.one_opt(name).unwrap_or(self.0)
    }

    fn one_opt(&self, name: &str) -> Option<&'a AstNode> {
        let f = self.0.children.iter().find(|c| c.kind == name)?;
        Some(unwrap_field(f))
    }

    fn many(&self, name: &str) -> Vec<&'a AstNode> {
        self.0.children.iter().filter(|c| c.kind == name).map(unwrap_field).collect()
    }

    fn term(&self, name: &str) -> &'a str {
        self.0
            .children
            .iter()
            .find(|c| c.kind == name)
            .and_then(|c| c.token.as_deref())
            .unwrap_or(HOLE)
    }
}

fn unwrap_field(f: &AstNode) -> &AstNode {
    if f.hole.is_some() {
        f
    } else {
        f.children.first().unwrap_or(f)
    }
}

impl Printer {
    fn line(&mut self, text: &str) {
        for _ in 0..self.level {
            self.out.push_str("    ");
        }
        self.out.push_str(text);
        self.out.push('\n');
    }

    fn body(&mut self, stmts: &[&AstNode]) {
        for s in stmts {
            self.stmt(s);
        }
    }

    fn suite(&mut self, header: String, stmts: &[&AstNode]) {
        self.line(&header);
        self.level += 1;
        self.body(stmts);
        self.level -= 1;
    }

    fn stmt(&mut self, n: &AstNode) {
        if n.hole.is_some() {
            self.line(HOLE);
            return;
        }
        let f = fields(n);
        match n.kind.as_str() {
            "FunctionDef" => {
                for d in f.many("decorators") {
                    self.line(&format!("@{}", expr(d, TEST)));
                }
                let header = format!("def {}({}):", f.term("name"), params(&f.many("params")));
                self.suite(header, &f.many("body"));
            }
            "ClassDef" => {
                for d in f.many("decorators") {
                    self.line(&format!("@{}", expr(d, TEST)));
                }
                let args = call_args(&f.many("bases"), &f.many("keywords"));
                let header = if args.is_empty() {
                    format!("class {}:", f.term("name"))
                } else {
                    format!("class {}({args}):", f.term("name"))
                };
                self.suite(header, &f.many("body"));
            }
            "Return" => self.line(&format!("return {}", expr(f.one("value"), TUPLE))),
            "ReturnNone" => self.line("return"),
            "Delete" => self.line(&format!("del {}", join(&f.many("targets"), BOR))),
            "Assign" => {
                let mut parts: Vec<String> = f.many("targets").iter().map(|t| expr(t, TUPLE)).collect();
                parts.push(expr(f.one("value"), TUPLE));
                self.line(&parts.join(" = "));
            }
            "AugAssign" => {
                let op = binop_symbol(&f.one("op").kind);
                self.line(&format!("{} {op}= {}", expr(f.one("target"), TUPLE), expr(f.one("value"), TUPLE)));
            }
            "For" => {
                let header = format!("for {} in {}:", expr(f.one("target"), TUPLE), expr(f.one("iter"), TUPLE));
                self.suite(header, &f.many("body"));
                self.else_suite(&f.many("orelse"));
            }
            "While" => {
                self.suite(format!("while {}:", expr(f.one("test"), TEST)), &f.many("body"));
                self.else_suite(&f.many("orelse"));
            }
            "If" => self.if_chain(n, "if"),
            "With" => {
                let items: Vec<String> = f
                    .many("items")
                    .iter()
                    .map(|it| {
                        if it.hole.is_some() {
                            return HOLE.to_string();
                        }
                        let g = fields(it);
                        match it.kind.as_str() {
                            "WithItemAs" => format!(
                                "{} as {}",
                                expr(g.one("context_expr"), TEST),
                                expr(g.one("optional_vars"), BOR)
                            ),
                            _ => expr(g.one("context_expr"), TEST),
                        }
                    })
                    .collect();
                self.suite(format!("with {}:", items.join(", ")), &f.many("body"));
            }
            "Raise" => self.line(&format!("raise {}", expr(f.one("exc"), TEST))),
            "RaiseFrom" => {
                self.line(&format!("raise {} from {}", expr(f.one("exc"), TEST), expr(f.one("cause"), TEST)))
            }
            "RaiseBare" => self.line("raise"),
            "Try" => {
                self.suite("try:".into(), &f.many("body"));
                for h in f.many("handlers") {
                    if h.hole.is_some() {
                        self.line(HOLE);
                        continue;
                    }
                    let g = fields(h);
                    let header = match h.kind.as_str() {
                        "HandlerType" => format!("except {}:", expr(g.one("type"), TEST)),
                        "HandlerAs" => format!("except {} as {}:", expr(g.one("type"), TEST), g.term("name")),
                        _ => "except:".to_string(),
                    };
                    self.suite(header, &g.many("body"));
                }
                self.else_suite(&f.many("orelse"));
                let fin = f.many("finalbody");
                if !fin.is_empty() {
                    self.suite("finally:".into(), &fin);
                }
            }
            "Assert" => self.line(&format!("assert {}", expr(f.one("test"), TEST))),
            "AssertMsg" => {
                self.line(&format!("assert {}, {}", expr(f.one("test"), TEST), expr(f.one("msg"), TEST)))
            }
            "Import" => self.line(&format!("import {}", aliases(&f.many("names")))),
            "ImportFrom" => {
                self.line(&format!("from {} import {}", f.term("module"), aliases(&f.many("names"))))
            }
            "Global" | "Nonlocal" => {
                let names: Vec<&str> = f
                    .many("gnames")
                    .iter()
                    .map(|g| if g.hole.is_some() { HOLE } else { fields(g).term("name") })
                    .collect();
                let kw = if n.kind == "Global" { "global" } else { "nonlocal" };
                self.line(&format!("{kw} {}", names.join(", ")));
            }
            "Expr" => self.line(&expr(f.one("value"), TUPLE)),
            "Pass" => self.line("pass"),
            "Break" => self.line("break"),
            "Continue" => self.line("continue"),
            // Expression constructors never appear in statement position in
            // well-formed trees; print something that fails to compile.
            other => self.line(&format!("{other}(")),
        }
    }

    fn if_chain(&mut self, n: &AstNode, kw: &str) {
        let f = fields(n);
        self.suite(format!("{kw} {}:", expr(f.one("test"), TEST)), &f.many("body"));
        let orelse = f.many("orelse");
        match orelse.as_slice() {
            [single] if single.kind == "If" && single.hole.is_none() => self.if_chain(single, "elif"),
            _ => self.else_suite(&orelse),
        }
    }

    fn else_suite(&mut self, stmts: &[&AstNode]) {
        if !stmts.is_empty() {
            self.suite("else:".into(), stmts);
        }
    }
}

fn join(items: &[&AstNode], prec: u8) -> String {
    items.iter().map(|e| expr(e, prec)).collect::<Vec<_>>().join(", ")
}

fn aliases(names: &[&AstNode]) -> String {
    names
        .iter()
        .map(|a| {
            if a.hole.is_some() {
                return HOLE.to_string();
            }
            let g = fields(a);
            match a.kind.as_str() {
                "AliasAs" => format!("{} as {}", g.term("name"), g.term("asname")),
                _ => g.term("name").to_string(),
            }
        })
        .collect::<Vec<_>>()
        .join(", ")
}

fn params(ps: &[&AstNode]) -> String {
    ps.iter()
        .map(|p| {
            if p.hole.is_some() {
                return HOLE.to_string();
            }
            let g = fields(p);
            match p.kind.as_str() {
                "ParamDefault" => format!("{}={}", g.term("arg"), expr(g.one("default"), TEST)),
                "VarArgs" => format!("*{}", g.term("arg")),
                "KwOnly" => "*".to_string(),
                "KwArgs" => format!("**{}", g.term("arg")),
                _ => g.term("arg").to_string(),
            }
        })
        .collect::<Vec<_>>()
        .join(", ")
}

fn call_args(args: &[&AstNode], keywords: &[&AstNode]) -> String {
    let mut parts: Vec<String> = args.iter().map(|a| expr(a, TEST)).collect();
    for k in keywords {
        if k.hole.is_some() {
            parts.push(HOLE.to_string());
            continue;
        }
        let g = fields(k);
        parts.push(match k.kind.as_str() {
            "KwSplat" => format!("**{}", expr(g.one("value"), TEST)),
            _ => format!("{}={}", g.term("arg"), expr(g.one("value"), TEST)),
        });
    }
    parts.join(", ")
}

fn binop_symbol(kind: &str) -> &'static str {
    match kind {
        "Add" => "+",
        "Sub" => "-",
        "Mult" => "*",
        "MatMult" => "@",
        "Div" => "/",
        "Mod" => "%",
        "Pow" => "**",
        "LShift" => "<<",
        "RShift" => ">>",
        "BitOr" => "|",
        "BitXor" => "^",
        "BitAnd" => "&",
        "FloorDiv" => "//",
        _ => HOLE,
    }
}

fn binop_prec(kind: &str) -> u8 {
    match kind {
        "BitOr" => 7,
        "BitXor" => 8,
        "BitAnd" => 9,
        "LShift" | "RShift" => 10,
        "Add" | "Sub" => 11,
        "Pow" => POWER,
        _ => 12,
    }
}

fn cmp_symbol(kind: &str) -> &'static str {
    match kind {
        "Eq" => "==",
        "NotEq" => "!=",
        "Lt" => "<",
        "LtE" => "<=",
        "Gt" => ">",
        "GtE" => ">=",
        "Is" => "is",
        "IsNot" => "is not",
        "In" => "in",
        "NotIn" => "not in",
        _ => HOLE,
    }
}

pub(crate) fn expr(n: &AstNode, min: u8) -> String {
    let (s, prec) = expr_prec(n);
    if prec < min {
        format!("({s})")
    } else {
        s
    }
}

fn comprehension(elt: String, gens: &[&AstNode]) -> String {
    let mut s = elt;
    for g in gens {
        if g.hole.is_some() {
            s.push_str(" for <HOLE>");
            continue;
        }
        let f = fields(g);
        s.push_str(&format!(" for {} in {}", expr(f.one("target"), TUPLE), expr(f.one("iter"), OR)));
        for c in f.many("ifs") {
            s.push_str(&format!(" if {}", expr(c, OR)));
        }
    }
    s
}

fn expr_prec(n: &AstNode) -> (String, u8) {
    if n.hole.is_some() {
        return (HOLE.to_string(), ATOM);
    }
    let f = fields(n);
    match n.kind.as_str() {
        "BoolOp" => {
            let (kw, own) = if f.one("bool_op").kind == "And" { (" and ", AND) } else { (" or ", OR) };
            let parts: Vec<String> = f.many("values").iter().map(|v| expr(v, own + 1)).collect();
            (parts.join(kw), own)
        }
        "BinOp" => {
            let op = &f.one("op").kind;
            let sym = binop_symbol(op);
            if op == "Pow" {
                let s = format!("{} ** {}", expr(f.one("left"), AWAIT), expr(f.one("right"), FACTOR));
                return (s, POWER);
            }
            let own = binop_prec(op);
            (format!("{} {sym} {}", expr(f.one("left"), own), expr(f.one("right"), own + 1)), own)
        }
        "UnaryOp" => {
            let operand = f.one("operand");
            match f.one("unary_op").kind.as_str() {
                "Not" => (format!("not {}", expr(operand, NOT)), NOT),
                "USub" => (format!("-{}", expr(operand, FACTOR)), FACTOR),
                "UAdd" => (format!("+{}", expr(operand, FACTOR)), FACTOR),
                "Invert" => (format!("~{}", expr(operand, FACTOR)), FACTOR),
                _ => (format!("{HOLE} {}", expr(operand, FACTOR)), FACTOR),
            }
        }
        "Lambda" => {
            let ps = params(&f.many("params"));
            let body = expr(f.one("body_expr"), TEST);
            if ps.is_empty() {
                (format!("lambda: {body}"), TEST)
            } else {
                (format!("lambda {ps}: {body}"), TEST)
            }
        }
        "IfExp" => (
            format!(
                "{} if {} else {}",
                expr(f.one("then_expr"), OR),
                expr(f.one("test"), OR),
                expr(f.one("else_expr"), TEST)
            ),
            TEST,
        ),
        "Dict" => {
            let keys = f.many("keys");
            let values = f.many("values");
            let mut parts = Vec::new();
            for i in 0..keys.len().max(values.len()) {
                let k = keys.get(i).map(|k| expr(k, TEST)).unwrap_or_default();
                let v = values.get(i).map(|v| expr(v, TEST)).unwrap_or_default();
                parts.push(format!("{k}: {v}"));
            }
            (format!("{{{}}}", parts.join(", ")), ATOM)
        }
        "Set" => {
            let elts = f.many("elts");
            if elts.is_empty() {
                ("set()".to_string(), ATOM)
            } else {
                (format!("{{{}}}", join(&elts, TEST)), ATOM)
            }
        }
        "ListComp" => (format!("[{}]", comprehension(expr(f.one("elt"), TEST), &f.many("generators"))), ATOM),
        "SetComp" => (format!("{{{}}}", comprehension(expr(f.one("elt"), TEST), &f.many("generators"))), ATOM),
        "DictComp" => {
            let kv = format!("{}: {}", expr(f.one("key"), TEST), expr(f.one("value"), TEST));
            (format!("{{{}}}", comprehension(kv, &f.many("generators"))), ATOM)
        }
        "GeneratorExp" => (format!("({})", comprehension(expr(f.one("elt"), TEST), &f.many("generators"))), ATOM),
        "Yield" => (format!("(yield {})", expr(f.one("value"), TUPLE)), ATOM),
        "YieldNone" => ("(yield)".to_string(), ATOM),
        "YieldFrom" => (format!("(yield from {})", expr(f.one("value"), TEST)), ATOM),
        "Compare" => {
            let mut s = expr(f.one("left"), CMP + 1);
            let ops = f.many("ops");
            let comps = f.many("comparators");
            for i in 0..ops.len().max(comps.len()) {
                let op = ops.get(i).map(|o| if o.hole.is_some() { HOLE } else { cmp_symbol(&o.kind) }).unwrap_or("");
                let c = comps.get(i).map(|c| expr(c, CMP + 1)).unwrap_or_default();
                s.push_str(&format!(" {op} {c}"));
            }
            (s, CMP)
        }
        "Call" => {
            let func = expr(f.one("func"), ATOM);
            (format!("{func}({})", call_args(&f.many("args"), &f.many("keywords"))), ATOM)
        }
        "Attribute" => {
            let v = f.one("value");
            let base = if v.kind == "Num" && v.hole.is_none() { format!("({})", expr(v, ATOM)) } else { expr(v, ATOM) };
            (format!("{base}.{}", f.term("attr")), ATOM)
        }
        "Subscript" => {
            let s = f.one("slice");
            let inner = if s.kind == "Slice" && s.hole.is_none() { slice(s) } else { expr(s, TUPLE) };
            (format!("{}[{inner}]", expr(f.one("value"), ATOM)), ATOM)
        }
        "Slice" => (slice(n), ATOM),
        "Starred" => (format!("*{}", expr(f.one("value"), BOR)), TEST),
        "Name" => (f.term("id").to_string(), ATOM),
        "List" => (format!("[{}]", join(&f.many("elts"), TEST)), ATOM),
        "Tuple" => {
            let elts = f.many("elts");
            match elts.as_slice() {
                [one] => (format!("({},)", expr(one, TEST)), ATOM),
                _ => (format!("({})", join(&elts, TEST)), ATOM),
            }
        }
        "Num" => (f.term("n").to_string(), ATOM),
        "Str" => (str_repr(f.term("s"), false), ATOM),
        "Bytes" => (str_repr(f.term("s"), true), ATOM),
        "TrueConst" => ("True".to_string(), ATOM),
        "FalseConst" => ("False".to_string(), ATOM),
        "NoneConst" => ("None".to_string(), ATOM),
        "Ellipsis" => ("...".to_string(), ATOM),
        other => (format!("{other}("), ATOM),
    }
}

fn slice(n: &AstNode) -> String {
    let f = fields(n);
    let part = |name: &str| f.many(name).first().map(|e| expr(e, TEST)).unwrap_or_default();
    let step = f.many("step");
    if step.is_empty() {
        format!("{}:{}", part("lower"), part("upper"))
    } else {
        format!("{}:{}:{}", part("lower"), part("upper"), part("step"))
    }
}

/// Quotes a string the way Python's `repr` does.
pub(crate) fn str_repr(s: &str, bytes: bool) -> String {
    let quote = if s.contains('\'') && !s.contains('"') { '"' } else { '\'' };
    let mut out = String::with_capacity(s.len() + 3);
    if bytes {
        out.push('b');
    }
    out.push(quote);
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if c == quote => {
                out.push('\\');
                out.push(c);
            }
            c if (c as u32) < 0x20 || c as u32 == 0x7f => out.push_str(&format!("\\x{:02x}", c as u32)),
            c if bytes && (c as u32) > 0x7f && (c as u32) <= 0xff => out.push_str(&format!("\\x{:02x}", c as u32)),
            c if !bytes && (0x80..0xa0).contains(&(c as u32)) => out.push_str(&format!("\\x{:02x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push(quote);
    out
}
