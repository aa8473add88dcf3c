//! Hand pairs scored with NLTK `corpus_bleu` and an independent Python LCS
//! (tools/bleu_oracle.py).

/// (candidate, reference, BLEU, ROUGE-L)
pub const PAIRS: &[(&str, &str, f64, f64)] = &[
    ("x = a + b", "x = a + b", 100.000000, 100.000000),
    ("return a * 2 + b", "return a * 3 + b", 0.000000, 83.333333),
    ("def f(a, b):\n    return a + b", "def f(a, b):\n    return a - b", 82.651682, 91.666667),
    ("y = foo(bar, baz, 1)", "y = foo(bar, qux, 1)", 65.803701, 90.000000),
    ("for i in range(10):\n    total += i", "for j in range(10):\n    total += j", 72.925717, 83.333333),
    ("if x > 0:\n    y = 1\nelse:\n    y = 2", "if x > 0:\n    y = 1", 55.936849, 79.608483),
    ("self.health = 5", "self.health = 5 + self.armor", 44.932896, 67.928731),
    ("return Minion(1, 1, charge=True)", "return Minion(2, 1, charge=True)", 70.168794, 90.909091),
    ("a b c d e f g", "a b c d e f g h i j", 65.143906, 79.813084),
    ("a b c d e f g h i j", "a b c d e f g", 63.894310, 85.059761),
    ("print('hello world')", "print('hello there world')", 51.544868, 92.224622),
    ("x = [i * i for i in xs if i]", "x = [i * i for i in xs]", 75.392212, 93.065187),
    ("result = compute(alpha, beta, gamma, delta)", "result = compute(alpha, beta, delta, gamma)", 72.265688, 83.333333),
    ("class Boar(MinionCard):\n    pass", "class StonetuskBoar(MinionCard):\n    pass", 64.345888, 85.714286),
    ("z = a if b else c", "z = c if b else a", 0.000000, 71.428571),
    ("def g(x):\n    y = x * 2\n    return y + 1", "def g(x):\n    y = x * 2\n    return y", 85.073313, 94.068802),
    ("value = data['key'][0]", "value = data['key'][1]", 80.705573, 90.909091),
    ("while n > 1:\n    n = n // 2\n    count += 1", "while n > 1:\n    n //= 2\n    count += 1", 65.850519, 90.216155),
    ("assert f(2) == 3, 'bad'", "assert f(2) == 4, 'bad'", 73.488892, 91.666667),
    ("import os\nimport sys\nprint(sys.argv)", "import sys\nprint(sys.argv)", 75.983569, 90.706320),
];

pub const CORPUS_BLEU: f64 = 72.380301;
