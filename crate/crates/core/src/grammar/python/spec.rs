//! Abstract grammar of the supported Python subset.
//!
//! Node kinds come in two layers. Field kinds (`body`, `value`, `targets`, ...)
//! choose a constructor; constructor kinds (`Assign`, `Name`, ...) have exactly
//! one rule listing their fields. `mylist = [0]` therefore derives through
//! `root -> Module`, `Module -> body*`, `body -> Assign`,
//! `Assign -> targets*, value`, and so on.

use std::fmt::Write as _;

pub(crate) const TERMINALS: &[&str] = &["name", "id", "attr", "arg", "n", "s", "module", "asname"];

/// Constructor families and their constructors with `(field, is_list)` lists.
pub(crate) const FAMILIES: &[(&str, &[(&str, &[(&str, bool)])])] = &[
    (
        "stmt",
        &[
            ("FunctionDef", &[("name", false), ("params", true), ("body", true), ("decorators", true)]),
            (
                "ClassDef",
                &[("name", false), ("bases", true), ("keywords", true), ("body", true), ("decorators", true)],
            ),
            ("Return", &[("value", false)]),
            ("ReturnNone", &[]),
            ("Delete", &[("targets", true)]),
            ("Assign", &[("targets", true), ("value", false)]),
            ("AugAssign", &[("target", false), ("op", false), ("value", false)]),
            ("For", &[("target", false), ("iter", false), ("body", true), ("orelse", true)]),
            ("While", &[("test", false), ("body", true), ("orelse", true)]),
            ("If", &[("test", false), ("body", true), ("orelse", true)]),
            ("With", &[("items", true), ("body", true)]),
            ("Raise", &[("exc", false)]),
            ("RaiseFrom", &[("exc", false), ("cause", false)]),
            ("RaiseBare", &[]),
            ("Try", &[("body", true), ("handlers", true), ("orelse", true), ("finalbody", true)]),
            ("Assert", &[("test", false)]),
            ("AssertMsg", &[("test", false), ("msg", false)]),
            ("Import", &[("names", true)]),
            ("ImportFrom", &[("module", false), ("names", true)]),
            ("Global", &[("gnames", true)]),
            ("Nonlocal", &[("gnames", true)]),
            ("Expr", &[("value", false)]),
            ("Pass", &[]),
            ("Break", &[]),
            ("Continue", &[]),
        ],
    ),
    (
        "expr",
        &[
            ("BoolOp", &[("bool_op", false), ("values", true)]),
            ("BinOp", &[("left", false), ("op", false), ("right", false)]),
            ("UnaryOp", &[("unary_op", false), ("operand", false)]),
            ("Lambda", &[("params", true), ("body_expr", false)]),
            ("IfExp", &[("test", false), ("then_expr", false), ("else_expr", false)]),
            ("Dict", &[("keys", true), ("values", true)]),
            ("Set", &[("elts", true)]),
            ("ListComp", &[("elt", false), ("generators", true)]),
            ("SetComp", &[("elt", false), ("generators", true)]),
            ("DictComp", &[("key", false), ("value", false), ("generators", true)]),
            ("GeneratorExp", &[("elt", false), ("generators", true)]),
            ("Yield", &[("value", false)]),
            ("YieldNone", &[]),
            ("YieldFrom", &[("value", false)]),
            ("Compare", &[("left", false), ("ops", true), ("comparators", true)]),
            ("Call", &[("func", false), ("args", true), ("keywords", true)]),
            ("Attribute", &[("value", false), ("attr", false)]),
            ("Subscript", &[("value", false), ("slice", false)]),
            ("Starred", &[("value", false)]),
            ("Name", &[("id", false)]),
            ("List", &[("elts", true)]),
            ("Tuple", &[("elts", true)]),
            ("Num", &[("n", false)]),
            ("Str", &[("s", false)]),
            ("Bytes", &[("s", false)]),
            ("TrueConst", &[]),
            ("FalseConst", &[]),
            ("NoneConst", &[]),
            ("Ellipsis", &[]),
        ],
    ),
    ("slice_only", &[("Slice", &[("lower", true), ("upper", true), ("step", true)])]),
    (
        "handler",
        &[
            ("Handler", &[("body", true)]),
            ("HandlerType", &[("type", false), ("body", true)]),
            ("HandlerAs", &[("type", false), ("name", false), ("body", true)]),
        ],
    ),
    ("withitem", &[("WithItem", &[("context_expr", false)]), ("WithItemAs", &[("context_expr", false), ("optional_vars", false)])]),
    ("alias", &[("Alias", &[("name", false)]), ("AliasAs", &[("name", false), ("asname", false)])]),
    ("global_name", &[("GlobalName", &[("name", false)])]),
    (
        "param",
        &[
            ("Param", &[("arg", false)]),
            ("ParamDefault", &[("arg", false), ("default", false)]),
            ("VarArgs", &[("arg", false)]),
            ("KwOnly", &[]),
            ("KwArgs", &[("arg", false)]),
        ],
    ),
    ("keyword", &[("Keyword", &[("arg", false), ("value", false)]), ("KwSplat", &[("value", false)])]),
    ("comprehension", &[("Comprehension", &[("target", false), ("iter", false), ("ifs", true)])]),
    (
        "operator",
        &[
            ("Add", &[]),
            ("Sub", &[]),
            ("Mult", &[]),
            ("MatMult", &[]),
            ("Div", &[]),
            ("Mod", &[]),
            ("Pow", &[]),
            ("LShift", &[]),
            ("RShift", &[]),
            ("BitOr", &[]),
            ("BitXor", &[]),
            ("BitAnd", &[]),
            ("FloorDiv", &[]),
        ],
    ),
    ("unaryop", &[("Invert", &[]), ("Not", &[]), ("UAdd", &[]), ("USub", &[])]),
    ("boolop", &[("And", &[]), ("Or", &[])]),
    (
        "cmpop",
        &[
            ("Eq", &[]),
            ("NotEq", &[]),
            ("Lt", &[]),
            ("LtE", &[]),
            ("Gt", &[]),
            ("GtE", &[]),
            ("Is", &[]),
            ("IsNot", &[]),
            ("In", &[]),
            ("NotIn", &[]),
        ],
    ),
];

/// Field kinds and the families they accept.
pub(crate) const FIELDS: &[(&str, &[&str])] = &[
    ("body", &["stmt"]),
    ("orelse", &["stmt"]),
    ("finalbody", &["stmt"]),
    ("handlers", &["handler"]),
    ("items", &["withitem"]),
    ("names", &["alias"]),
    ("gnames", &["global_name"]),
    ("params", &["param"]),
    ("keywords", &["keyword"]),
    ("generators", &["comprehension"]),
    ("op", &["operator"]),
    ("unary_op", &["unaryop"]),
    ("bool_op", &["boolop"]),
    ("ops", &["cmpop"]),
    ("slice", &["expr", "slice_only"]),
    ("decorators", &["expr"]),
    ("bases", &["expr"]),
    ("value", &["expr"]),
    ("targets", &["expr"]),
    ("target", &["expr"]),
    ("iter", &["expr"]),
    ("test", &["expr"]),
    ("left", &["expr"]),
    ("right", &["expr"]),
    ("operand", &["expr"]),
    ("values", &["expr"]),
    ("keys", &["expr"]),
    ("elts", &["expr"]),
    ("elt", &["expr"]),
    ("key", &["expr"]),
    ("func", &["expr"]),
    ("args", &["expr"]),
    ("comparators", &["expr"]),
    ("then_expr", &["expr"]),
    ("else_expr", &["expr"]),
    ("body_expr", &["expr"]),
    ("default", &["expr"]),
    ("exc", &["expr"]),
    ("cause", &["expr"]),
    ("msg", &["expr"]),
    ("context_expr", &["expr"]),
    ("optional_vars", &["expr"]),
    ("type", &["expr"]),
    ("lower", &["expr"]),
    ("upper", &["expr"]),
    ("step", &["expr"]),
    ("ifs", &["expr"]),
];

/// Renders the subset as grammar text.
pub(crate) fn grammar_text() -> String {
    let mut out = String::from("# Python subset\n%root root\n");
    let _ = writeln!(out, "%terminal {}", TERMINALS.join(" "));
    out.push_str("root -> Module\nModule -> body*\n");
    for (field, families) in FIELDS {
        for family in *families {
            let (_, ctors) = FAMILIES.iter().find(|(f, _)| f == family).expect("family exists");
            for (ctor, _) in *ctors {
                let _ = writeln!(out, "{field} -> {ctor}");
            }
        }
    }
    for (_, ctors) in FAMILIES {
        for (ctor, fields) in *ctors {
            let children: Vec<String> =
                fields.iter().map(|(f, list)| format!("{f}{}", if *list { "*" } else { "" })).collect();
            let _ = writeln!(out, "{ctor} -> {}", children.join(", "));
        }
    }
    out
}
