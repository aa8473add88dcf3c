//! Known-outcome candidates for exercising the harness.

use super::{Category, TestKind, TestUnitSpec};

pub struct Fixture {
    pub name: &'static str,
    pub code: &'static str,
    pub expected: Category,
}

/// Test unit shared by the fixtures: `f(2)` must return 3.
pub const TEST_UNIT: &str = "def check(actual, expected):
    assert actual == expected, '%r != %r' % (actual, expected)


def test_0():
    check(f(2), 3)
";

/// Two failing tests; only the first may reach the test information.
pub const TWO_FAILURES_UNIT: &str = "def check(actual, expected):
    assert actual == expected, '%r != %r' % (actual, expected)


def test_0():
    check(f(2), 3)


def test_1():
    check(f(0), 1)
";

pub const TWO_FAILURES_CODE: &str = "def f(a):\n    return a * 2\n";

pub fn spec(payload: &str, time_limit: f64) -> TestUnitSpec {
    TestUnitSpec { kind: TestKind::GenericAssertions, payload: payload.to_string(), time_limit, memory_limit: 256 << 20 }
}

pub const BATTERY: &[Fixture] = &[
    Fixture { name: "passes", code: "def f(a):\n    return a + 1\n", expected: Category::Ok },
    Fixture { name: "wrong-value", code: "def f(a):\n    return a\n", expected: Category::AssertionError },
    Fixture { name: "missing-attribute", code: "def f(a):\n    return a.size\n", expected: Category::AttributeError },
    Fixture { name: "incomplete-expression", code: "def f(a):\n    return a +\n", expected: Category::SyntaxError },
    Fixture { name: "undefined-name", code: "def f(a):\n    return b + 1\n", expected: Category::NameError },
    Fixture { name: "bad-operand", code: "def f(a):\n    return a + 'x'\n", expected: Category::TypeError },
    Fixture { name: "missing-indent", code: "def f(a):\nreturn a + 1\n", expected: Category::IndentationError },
    Fixture { name: "value-error", code: "def f(a):\n    return int('x')\n", expected: Category::TypeError },
    Fixture {
        name: "unbound-local",
        code: "def f(a):\n    if a > 5:\n        b = 1\n    return b\n",
        expected: Category::NameError,
    },
    Fixture { name: "infinite-loop", code: "def f(a):\n    while True:\n        pass\n", expected: Category::AssertionError },
    Fixture {
        name: "memory-hog",
        code: "def f(a):\n    x = bytearray(1 << 33)\n    return len(x)\n",
        expected: Category::AssertionError,
    },
    Fixture { name: "hard-exit", code: "import os\nos._exit(3)\n", expected: Category::AssertionError },
    Fixture {
        name: "file-flood",
        code: "def f(a):\n    with open('big', 'wb') as fh:\n        while True:\n            fh.write(b'x' * 1048576)\n",
        expected: Category::AssertionError,
    },
];
