//! Small arithmetic Python functions with verbal descriptions and
//! assertion-based test units.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Corpus, Record, TextError};
use crate::harness::{TestKind, TestUnitSpec};

const FUNCTION_NAMES: &[&str] = &[
    "add_up", "combine", "mix", "scale", "shift", "blend", "merge", "twist", "fold", "pack", "spread", "tally",
];
const PARAMS: &[&str] = &["a", "b", "c"];
const LOCALS: &[&str] = &["x", "y"];

#[derive(Debug, Clone, PartialEq, Eq)]
enum Expr {
    Var(String),
    Int(i64),
    Bin(char, Box<Expr>, Box<Expr>),
}

impl Expr {
    fn code(&self, parent: u8, right: bool) -> String {
        match self {
            Expr::Var(v) => v.clone(),
            Expr::Int(n) => n.to_string(),
            Expr::Bin(op, l, r) => {
                let p = if *op == '*' { 2 } else { 1 };
                let s = format!("{} {op} {}", l.code(p, false), r.code(p, true));
                if p < parent || (p == parent && right) {
                    format!("({s})")
                } else {
                    s
                }
            }
        }
    }

    fn words(&self) -> String {
        match self {
            Expr::Var(v) => v.clone(),
            Expr::Int(n) => n.to_string(),
            Expr::Bin(op, l, r) => {
                let what = match op {
                    '+' => "sum",
                    '-' => "difference",
                    _ => "product",
                };
                format!("the {what} of {} and {}", l.words(), r.words())
            }
        }
    }

    fn eval(&self, env: &[(String, i64)]) -> i64 {
        match self {
            Expr::Var(v) => env.iter().rev().find(|(n, _)| n == v).map(|(_, x)| *x).expect("bound variable"),
            Expr::Int(n) => *n,
            Expr::Bin(op, l, r) => {
                let (a, b) = (l.eval(env), r.eval(env));
                match op {
                    '+' => a + b,
                    '-' => a - b,
                    _ => a * b,
                }
            }
        }
    }
}

/// One generated function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticProgram {
    pub name: String,
    pub params: Vec<String>,
    locals: Vec<(String, Expr)>,
    ret: Expr,
}

impl SyntheticProgram {
    fn random(rng: &mut ChaCha8Rng) -> SyntheticProgram {
        let name = FUNCTION_NAMES.choose(rng).expect("non-empty").to_string();
        let n_params = rng.gen_range(1..=PARAMS.len());
        let params: Vec<String> = PARAMS[..n_params].iter().map(|s| s.to_string()).collect();
        let mut scope = params.clone();
        let mut locals = Vec::new();
        for local in LOCALS.iter().take(rng.gen_range(0..=LOCALS.len())) {
            let e = random_expr(rng, &scope, 1);
            locals.push((local.to_string(), e));
            scope.push(local.to_string());
        }
        let ret = random_expr(rng, &scope, 2);
        SyntheticProgram { name, params, locals, ret }
    }

    pub fn code(&self) -> String {
        let mut s = format!("def {}({}):\n", self.name, self.params.join(", "));
        for (v, e) in &self.locals {
            s.push_str(&format!("    {v} = {}\n", e.code(0, false)));
        }
        s.push_str(&format!("    return {}\n", self.ret.code(0, false)));
        s
    }

    pub fn description(&self) -> String {
        let inputs = match self.params.as_slice() {
            [one] => one.clone(),
            [init @ .., last] => format!("{} and {last}", init.join(" , ")),
            [] => String::new(),
        };
        let mut s = format!("define {} with inputs {inputs} .", self.name);
        for (v, e) in &self.locals {
            s.push_str(&format!(" set {v} to {} .", e.words()));
        }
        s.push_str(&format!(" return {} .", self.ret.words()));
        s
    }

    pub fn eval(&self, args: &[i64]) -> i64 {
        let mut env: Vec<(String, i64)> = self.params.iter().cloned().zip(args.iter().copied()).collect();
        for (v, e) in &self.locals {
            let x = e.eval(&env);
            env.push((v.clone(), x));
        }
        self.ret.eval(&env)
    }

    fn test_program(&self, rng: &mut ChaCha8Rng, cases: usize) -> String {
        let mut s = String::from(
            "def check(actual, expected):\n    assert actual == expected, '%r != %r' % (actual, expected)\n",
        );
        for k in 0..cases {
            let args: Vec<i64> = self.params.iter().map(|_| rng.gen_range(0..10)).collect();
            let expected = self.eval(&args);
            let shown: Vec<String> = args.iter().map(i64::to_string).collect();
            s.push_str(&format!(
                "\n\ndef test_{k}():\n    check({}({}), {expected})\n",
                self.name,
                shown.join(", ")
            ));
        }
        s
    }
}

fn random_expr(rng: &mut ChaCha8Rng, scope: &[String], depth: usize) -> Expr {
    if depth == 0 || rng.gen_bool(0.35) {
        if rng.gen_bool(0.7) {
            Expr::Var(scope.choose(rng).expect("scope non-empty").clone())
        } else {
            Expr::Int(rng.gen_range(0..10))
        }
    } else {
        let op = *['+', '-', '*'].choose(rng).expect("non-empty");
        Expr::Bin(op, Box::new(random_expr(rng, scope, depth - 1)), Box::new(random_expr(rng, scope, depth - 1)))
    }
}

/// Generates `n` programs with descriptions and test units, deterministic in `seed`.
pub fn generate_synthetic_corpus(n: usize, seed: u64, time_limit: f64, memory_limit: u64) -> Result<Corpus, TextError> {
    if n == 0 {
        return Err(TextError::EmptyRequest);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = (0..n)
        .map(|i| {
            let p = SyntheticProgram::random(&mut rng);
            let payload = p.test_program(&mut rng, 3);
            Record {
                id: format!("syn-{i:04}"),
                nl: p.description(),
                code: p.code(),
                test_unit: TestUnitSpec { kind: TestKind::GenericAssertions, payload, time_limit, memory_limit },
                card: None,
            }
        })
        .collect();
    Ok(Corpus { split: "synthetic".to_string(), records })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_corpus() {
        let a = generate_synthetic_corpus(50, 7, 5.0, 1 << 28).unwrap();
        let b = generate_synthetic_corpus(50, 7, 5.0, 1 << 28).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_corpus(50, 8, 5.0, 1 << 28).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_is_rejected() {
        assert!(matches!(generate_synthetic_corpus(0, 1, 5.0, 1), Err(TextError::EmptyRequest)));
    }

    #[test]
    fn printing_respects_precedence() {
        let e = Expr::Bin(
            '-',
            Box::new(Expr::Var("a".into())),
            Box::new(Expr::Bin('-', Box::new(Expr::Var("b".into())), Box::new(Expr::Int(1)))),
        );
        assert_eq!(e.code(0, false), "a - (b - 1)");
        assert_eq!(e.eval(&[("a".into(), 5), ("b".into(), 3)]), 3);
        let m = Expr::Bin(
            '*',
            Box::new(Expr::Bin('+', Box::new(Expr::Var("a".into())), Box::new(Expr::Int(2)))),
            Box::new(Expr::Var("a".into())),
        );
        assert_eq!(m.code(0, false), "(a + 2) * a");
        assert_eq!(m.words(), "the product of the sum of a and 2 and a");
    }
}
