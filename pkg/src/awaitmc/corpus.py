"""Built-in benchmark programs in the text format.

The figure programs mirror the small examples that motivate the approach
(spinloops, awaits with two satisfying writes, independent fetch-and-adds,
a loop that is pure only along some paths).  ``sortnet(k)`` builds the
scalable sorting-network benchmark.
"""

from __future__ import annotations

from .parser import parse_program

FIG2A = """\
# p spins until q publishes x; q writes y first.
global x = 0;
global y = 0;

thread p {
  L0:
    a := x;
    br a != 1 L0 L1;
  L1:
    b := y;
    exit;
}

thread q {
  L0:
    y := 42;
    x := 1;
    exit;
}
"""

FIG2B = """\
# the spinloop of p replaced by a load and an assume
global x = 0;
global y = 0;

thread p {
  L0:
    a := x;
    assume(a == 1);
    b := y;
    exit;
}

thread q {
  L0:
    y := 42;
    x := 1;
    exit;
}
"""

FIG2C = """\
# the spinloop of p replaced by an await
global x = 0;
global y = 0;

thread p {
  L0:
    await(x == 1);
    b := y;
    exit;
}

thread q {
  L0:
    y := 42;
    x := 1;
    exit;
}
"""

FIG3 = """\
global x = 0;
global y = 0;

thread p {
  L0:
    x := 1;
    y := 1;
    exit;
}

thread q {
  L0:
    x := 2;
    y := 2;
    exit;
}
"""

FIG3_ASSERT = """\
# main starts p and q, joins them and checks |x - y| < 2
global x = 0;
global y = 0;

thread main {
  L0:
    spawn(p);
    spawn(q);
    join(p);
    join(q);
    a := x;
    b := y;
    assert(a - b < 2 && b - a < 2);
    exit;
}

thread p {
  L0:
    x := 1;
    y := 1;
    exit;
}

thread q {
  L0:
    x := 2;
    y := 2;
    exit;
}
"""

FIG4 = """\
global x = 0;
global y = 0;

thread p {
  L0:
    x := 1;
    x := 0;
    exit;
}

thread q {
  L0:
    await(x == 0);
    y := 1;
    exit;
}
"""

FIG5 = """\
global x = 0;
global y = 0;

thread p {
  L0:
    x +:= 1;
    exit;
}

thread q {
  L0:
    x +:= 1;
    exit;
}

thread r {
  L0:
    x +:= 3;
    exit;
}

thread s {
  L0:
    await(x == 3);
    y := 1;
    exit;
}
"""

FIG6 = """\
# loop that is pure only when a > 4; q lowers x so p can leave
global x = 4;
global y = 0;
global z = 0;

thread p {
  L1:
    a := x;
    b := y;
    br a == 4 L2 L3;
  L2:
    z := 42;
    goto L3;
  L3:
    br a >= 4 L1 L4;
  L4:
    exit;
}

thread q {
  L0:
    x := 5;
    x := 0;
    exit;
}
"""

FIG1 = """\
# two-round sorting network; p and q hand off through y
global x0 = 3;
global x1 = 2;
global x2 = 1;
global y = 0;

thread p {
  L0:
    a0 := x0;
    a1 := x1;
    br a0 > a1 S0 C0;
  S0:
    x0 := a1;
    x1 := a0;
    goto C0;
  C0:
    y := 1;
    goto W;
  W:
    b := y;
    br b != 2 W C1;
  C1:
    c0 := x0;
    c1 := x1;
    br c0 > c1 S1 D;
  S1:
    x0 := c1;
    x1 := c0;
    goto D;
  D:
    exit;
}

thread q {
  L0:
    goto W;
  W:
    a := y;
    br a != 1 W C;
  C:
    d1 := x1;
    d2 := x2;
    br d1 > d2 S D;
  S:
    x1 := d2;
    x2 := d1;
    goto D;
  D:
    y := 2;
    exit;
}
"""

COUNTER_LOOP = """\
# an impure counting loop: every iteration changes the header phi
global x = 0;

thread p {
  L0:
    goto H;
  H:
    i := phi(L0: 0, B: j);
    x +:= 1;
    j := i + 1;
    goto B;
  B:
    br j < 2 H E;
  E:
    exit;
}

thread q {
  L0:
    a := x;
    exit;
}
"""

NESTED_LOOP = """\
# outer loop waits for f, inner loop waits for g
global f = 0;
global g = 0;

thread p {
  L0:
    goto O;
  O:
    a := f;
    goto I;
  I:
    b := g;
    br b == 0 I T;
  T:
    br a == 0 O E;
  E:
    exit;
}

thread q {
  L0:
    g := 1;
    f := 1;
    exit;
}
"""

CAS_LOCK = """\
# two threads take a compare-exchange spinlock around a counter update
global l = 0;
global n = 0;

thread p {
  L0:
    c := cmpxchg(l, 0, 1);
    br c == 0 L0 L1;
  L1:
    v := n;
    n := v + 1;
    l := 0;
    exit;
}

thread q {
  L0:
    d := cmpxchg(l, 0, 1);
    br d == 0 L0 L1;
  L1:
    w := n;
    n := w + 1;
    l := 0;
    exit;
}
"""

XCHG_LOCK = """\
# test-and-set lock built from xchg
global l = 0;
global n = 0;

thread p {
  L0:
    o := xchg(l, 1);
    br o != 0 L0 L1;
  L1:
    n := 1;
    l := 0;
    exit;
}

thread q {
  L0:
    k := xchg(l, 1);
    br k != 0 L0 L1;
  L1:
    n := 2;
    l := 0;
    exit;
}
"""

TWO_WAITERS = """\
# two spinloops on one flag with a dead fetch-and-add afterwards
global flag = 0;
global cnt = 0;

thread p {
  L0:
    flag := 1;
    exit;
}

thread q {
  L0:
    a := flag;
    br a == 0 L0 L1;
  L1:
    cnt +:= 1;
    exit;
}

thread r {
  L0:
    b := flag;
    br b == 0 L0 L1;
  L1:
    cnt +:= 1;
    exit;
}
"""


def sortnet(k: int) -> str:
    """Sorting-network layer with one producer and ``k`` consumers.

    The producer compare-exchanges pairs ``(x1,x2), (x3,x4), ...`` and then
    raises ``y``.  Consumer ``q<i>`` spins until ``y == 1``, compare-exchanges
    its own pair ``(x_{2i-2}, x_{2i-1})`` and bumps the ``done`` counter with
    a fetch-and-add whose result is unused.
    """
    if k < 1:
        raise ValueError("sortnet needs k >= 1")
    n = 2 * k + 1
    lines = [f"# sortnet({k}): producer p and {k} consumers"]
    for i in range(n):
        lines.append(f"global x{i} = {n - i};")
    lines.append("global y = 0;")
    lines.append("global done = 0;")
    lines.append("")
    body = ["thread p {", "  L0:", "    goto P1;"]
    for j in range(1, k + 1):
        a, b = 2 * j - 1, 2 * j
        nxt = f"P{j + 1}" if j < k else "PY"
        body += [
            f"  P{j}:",
            f"    u{j} := x{a};",
            f"    v{j} := x{b};",
            f"    br u{j} > v{j} Q{j} {nxt};",
            f"  Q{j}:",
            f"    x{a} := v{j};",
            f"    x{b} := u{j};",
            f"    goto {nxt};",
        ]
    body += ["  PY:", "    y := 1;", "    exit;", "}"]
    lines += body
    for i in range(1, k + 1):
        a, b = 2 * i - 2, 2 * i - 1
        lines += [
            "",
            f"thread q{i} {{",
            "  L0:",
            "    goto W;",
            "  W:",
            "    s := y;",
            "    br s != 1 W C;",
            "  C:",
            f"    m := x{a};",
            f"    n := x{b};",
            "    br m > n S D;",
            "  S:",
            f"    x{a} := n;",
            f"    x{b} := m;",
            "    goto D;",
            "  D:",
            "    done +:= 1;",
            "    exit;",
            "}",
        ]
    return "\n".join(lines) + "\n"


CORPUS = {
    "fig1": FIG1,
    "fig2a": FIG2A,
    "fig2b": FIG2B,
    "fig2c": FIG2C,
    "fig3": FIG3,
    "fig3_assert": FIG3_ASSERT,
    "fig4": FIG4,
    "fig5": FIG5,
    "fig6": FIG6,
    "counter_loop": COUNTER_LOOP,
    "nested_loop": NESTED_LOOP,
    "cas_lock": CAS_LOCK,
    "xchg_lock": XCHG_LOCK,
    "two_waiters": TWO_WAITERS,
}

LOOP_PROGRAMS = ("fig1", "fig2a", "fig6", "counter_loop", "nested_loop", "cas_lock",
                 "xchg_lock", "two_waiters")


def source(name: str) -> str:
    """Program text of a corpus entry; ``sortnet<k>`` is generated."""
    if name.startswith("sortnet"):
        return sortnet(int(name[len("sortnet"):] or 1))
    try:
        return CORPUS[name]
    except KeyError:
        raise KeyError(f"unknown corpus program {name!r}") from None


def load(name: str):
    return parse_program(source(name), file=f"<corpus:{name}>")


def names() -> list:
    return list(CORPUS)
