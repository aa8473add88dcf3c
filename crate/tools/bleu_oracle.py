"""Reference BLEU values for the metric tests, computed with NLTK.

Run: python3 tools/bleu_oracle.py
"""
from nltk.translate.bleu_score import corpus_bleu

PAIRS = [
    ("x = a + b", "x = a + b"),
    ("return a * 2 + b", "return a * 3 + b"),
    ("def f(a, b):\n    return a + b", "def f(a, b):\n    return a - b"),
    ("y = foo(bar, baz, 1)", "y = foo(bar, qux, 1)"),
    ("for i in range(10):\n    total += i", "for j in range(10):\n    total += j"),
    ("if x > 0:\n    y = 1\nelse:\n    y = 2", "if x > 0:\n    y = 1"),
    ("self.health = 5", "self.health = 5 + self.armor"),
    ("return Minion(1, 1, charge=True)", "return Minion(2, 1, charge=True)"),
    ("a b c d e f g", "a b c d e f g h i j"),
    ("a b c d e f g h i j", "a b c d e f g"),
    ("print('hello world')", "print('hello there world')"),
    ("x = [i * i for i in xs if i]", "x = [i * i for i in xs]"),
    ("result = compute(alpha, beta, gamma, delta)", "result = compute(alpha, beta, delta, gamma)"),
    ("class Boar(MinionCard):\n    pass", "class StonetuskBoar(MinionCard):\n    pass"),
    ("z = a if b else c", "z = c if b else a"),
    ("def g(x):\n    y = x * 2\n    return y + 1", "def g(x):\n    y = x * 2\n    return y"),
    ("value = data['key'][0]", "value = data['key'][1]"),
    ("while n > 1:\n    n = n // 2\n    count += 1", "while n > 1:\n    n //= 2\n    count += 1"),
    ("assert f(2) == 3, 'bad'", "assert f(2) == 4, 'bad'"),
    ("import os\nimport sys\nprint(sys.argv)", "import sys\nprint(sys.argv)"),
]


def tokens(text):
    out, cur = [], ""
    for ch in text:
        if ch.isalnum() or ch == "_":
            cur += ch
            continue
        if cur:
            out.append(cur)
            cur = ""
        if not ch.isspace():
            out.append(ch)
    if cur:
        out.append(cur)
    return out


for cand, ref in PAIRS:
    score = corpus_bleu([[tokens(ref)]], [tokens(cand)]) * 100
    print(f"{score:.6f}")
print("corpus", f"{corpus_bleu([[tokens(r)] for _, r in PAIRS], [tokens(c) for c, _ in PAIRS]) * 100:.6f}")


def lcs(a, b):
    table = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            table[i + 1][j + 1] = table[i][j] + 1 if x == y else max(table[i][j + 1], table[i + 1][j])
    return table[-1][-1]


def rouge_l(cand, ref, beta=1.2):
    c, r = tokens(cand), tokens(ref)
    n = lcs(c, r)
    if n == 0:
        return 0.0
    p, rec = n / len(c), n / len(r)
    return 100 * (1 + beta**2) * p * rec / (rec + beta**2 * p)


for cand, ref in PAIRS:
    print("rouge", f"{rouge_l(cand, ref):.6f}")
