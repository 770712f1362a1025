"""Independent reference implementations used to check the package.

Nothing in this file imports from ozk.  Terms here use a tiny tuple
encoding of their own:

    variables   OVar instances
    atoms       ("a", name)
    integers    plain Python ints
    structures  ("s", functor, (arg, ...))
    lists       built from ("s", ".", (head, tail)) with ("a", "[]") nil

The meta-interpreter is a plain depth-first Prolog solver (leftmost goal,
clauses in program order, green/blue cut) over a mutable binding dict with
a trail, which keeps the queens corpus fast enough to run in tests.
"""

from __future__ import annotations

import itertools

# ---------------------------------------------------------------------------
# Brute-force oracles with frozen values
# ---------------------------------------------------------------------------


def queens_brute(n: int) -> list[list[int]]:
    """All n-queens solutions as column lists, one queen per row; a
    solution s has queen i (1-based) in column s[i-1]."""
    out = []
    for perm in itertools.permutations(range(1, n + 1)):
        if all(abs(perm[i] - perm[j]) != j - i
               for i in range(n) for j in range(i + 1, n)):
            out.append(list(perm))
    return out


QUEENS8_COUNT = 92  # len(queens_brute(8)), frozen
QUEENS8_FIRST = [1, 7, 5, 8, 2, 4, 6, 3]  # first solution in program order

GEN_MAP_SQUARES = [1, 4, 9, 16, 25, 36, 49, 64, 81, 100]


def append_splits(xs: list) -> list[tuple[list, list]]:
    """All (front, back) with front ++ back == xs, in the order a
    depth-first solver using append([],L,L) first would produce."""
    return [(xs[:i], xs[i:]) for i in range(len(xs) + 1)]


APPEND_123_SPLITS = [
    ([], [1, 2, 3]),
    ([1], [2, 3]),
    ([1, 2], [3]),
    ([1, 2, 3], []),
]

# The family database used throughout: father(terach,abraham),
# father(abraham,isaac), father(haran,milcah), father(haran,yiscah).
FATHER_FACTS = [
    ("terach", "abraham"),
    ("abraham", "isaac"),
    ("haran", "milcah"),
    ("haran", "yiscah"),
]


def children_of(parent: str) -> list[str]:
    return [c for f, c in FATHER_FACTS if f == parent]


CHILDREN_TERACH = ["abraham"]
CHILDREN_HARAN = ["milcah", "yiscah"]
ALL_CHILDREN_FACT_ORDER = ["abraham", "isaac", "milcah", "yiscah"]
ALL_CHILDREN_SETOF = ["abraham", "isaac", "milcah", "yiscah"]  # sorted, deduped


# ---------------------------------------------------------------------------
# Reference Prolog machinery
# ---------------------------------------------------------------------------


class OVar:
    __slots__ = ("name",)
    _counter = itertools.count(1)

    def __init__(self, name=None):
        self.name = name or f"_R{next(self._counter)}"

    def __repr__(self):
        return self.name


NIL = ("a", "[]")


def olist(items, tail=NIL):
    out = tail
    for x in reversed(items):
        out = ("s", ".", (x, out))
    return out


def walk(t, binds):
    while isinstance(t, OVar) and t in binds:
        t = binds[t]
    return t


def deep(t, binds):
    t = walk(t, binds)
    if isinstance(t, tuple) and t[0] == "s":
        return ("s", t[1], tuple(deep(a, binds) for a in t[2]))
    return t


def unify(a, b, binds, trail) -> bool:
    a = walk(a, binds)
    b = walk(b, binds)
    if a is b:
        return True
    if isinstance(a, OVar):
        binds[a] = b
        trail.append(a)
        return True
    if isinstance(b, OVar):
        binds[b] = a
        trail.append(b)
        return True
    if isinstance(a, int) or isinstance(b, int):
        return a == b
    if a[0] == "a" or b[0] == "a":
        return a == b
    if a[1] != b[1] or len(a[2]) != len(b[2]):
        return False
    return all(unify(x, y, binds, trail) for x, y in zip(a[2], b[2]))


def undo(trail, mark, binds):
    while len(trail) > mark:
        del binds[trail.pop()]


def rename(t, mapping):
    if isinstance(t, OVar):
        if t not in mapping:
            mapping[t] = OVar()
        return mapping[t]
    if isinstance(t, tuple) and t[0] == "s":
        return ("s", t[1], tuple(rename(a, mapping) for a in t[2]))
    return t


def eval_arith(t, binds):
    t = walk(t, binds)
    if isinstance(t, int):
        return t
    if isinstance(t, tuple) and t[0] == "s":
        f = t[1]
        if len(t[2]) == 2:
            x = eval_arith(t[2][0], binds)
            y = eval_arith(t[2][1], binds)
            if f == "+":
                return x + y
            if f == "-":
                return x - y
            if f == "*":
                return x * y
            if f in ("div", "//"):
                return x // y
    raise ValueError(f"not arithmetic: {t!r}")


class _Cut(Exception):
    def __init__(self, barrier):
        self.barrier = barrier


_COMPARE = {
    "<": lambda x, y: x < y,
    ">": lambda x, y: x > y,
    "=<": lambda x, y: x <= y,
    ">=": lambda x, y: x >= y,
}


def _struct_eq(a, b, binds) -> bool:
    a = walk(a, binds)
    b = walk(b, binds)
    if isinstance(a, OVar) or isinstance(b, OVar):
        return a is b
    if isinstance(a, int) or isinstance(b, int):
        return a == b
    if a[0] != b[0]:
        return False
    if a[0] == "a":
        return a == b
    return (a[1] == b[1] and len(a[2]) == len(b[2])
            and all(_struct_eq(x, y, binds) for x, y in zip(a[2], b[2])))


class Database:
    def __init__(self, clauses):
        # clauses: list of (head, [body goals]) in program order
        self.preds: dict[tuple[str, int], list] = {}
        for head, body in clauses:
            key = (head[1], len(head[2])) if head[0] == "s" else (head[1], 0)
            self.preds.setdefault(key, []).append((head, body))

    def lookup(self, goal):
        if isinstance(goal, tuple) and goal[0] == "s":
            return self.preds.get((goal[1], len(goal[2])))
        if isinstance(goal, tuple) and goal[0] == "a":
            return self.preds.get((goal[1], 0))
        return None


def solve(db: Database, goals, binds, trail, barrier_ids=None):
    """Yield once per solution; bindings are live in ``binds`` at yield
    time, so callers must extract what they need before advancing."""
    if barrier_ids is None:
        goals = [(g, None) for g in goals]
    stackless = goals  # list of (goal, cut_barrier)
    yield from _solve(db, stackless, binds, trail)


_barrier_counter = itertools.count(1)


def _solve(db, goals, binds, trail):
    if not goals:
        yield True
        return
    (goal, barrier), rest = goals[0], goals[1:]
    goal = walk(goal, binds)
    if isinstance(goal, tuple) and goal == ("a", "true"):
        yield from _solve(db, rest, binds, trail)
        return
    if isinstance(goal, tuple) and goal == ("a", "fail"):
        return
    if isinstance(goal, tuple) and goal == ("a", "!"):
        yield from _solve(db, rest, binds, trail)
        raise _Cut(barrier)
    if isinstance(goal, tuple) and goal[0] == "s":
        f, args = goal[1], goal[2]
        if f == "=" and len(args) == 2:
            mark = len(trail)
            if unify(args[0], args[1], binds, trail):
                yield from _solve(db, rest, binds, trail)
            undo(trail, mark, binds)
            return
        if f == "is" and len(args) == 2:
            val = eval_arith(args[1], binds)
            mark = len(trail)
            if unify(args[0], val, binds, trail):
                yield from _solve(db, rest, binds, trail)
            undo(trail, mark, binds)
            return
        if f in _COMPARE and len(args) == 2:
            x = eval_arith(args[0], binds)
            y = eval_arith(args[1], binds)
            if _COMPARE[f](x, y):
                yield from _solve(db, rest, binds, trail)
            return
        if f == "==" and len(args) == 2:
            if _struct_eq(args[0], args[1], binds):
                yield from _solve(db, rest, binds, trail)
            return
    clauses = db.lookup(goal)
    if clauses is None:
        raise ValueError(f"unknown predicate: {goal!r}")
    my_barrier = next(_barrier_counter)
    try:
        for head, body in clauses:
            mapping: dict = {}
            h = rename(head, mapping)
            mark = len(trail)
            if unify(goal, h, binds, trail):
                b = [(rename(g, mapping), my_barrier) for g in body]
                yield from _solve(db, b + rest, binds, trail)
            undo(trail, mark, binds)
    except _Cut as c:
        if c.barrier != my_barrier:
            raise
        undo(trail, mark, binds)  # noqa: F821  (mark from the cut clause)


def solve_all(db: Database, goals, template):
    """All solutions of ``goals`` in program order, as deep-walked copies
    of ``template``."""
    binds: dict = {}
    trail: list = []
    out = []
    for _ in solve(db, goals, binds, trail):
        out.append(deep(template, binds))
    return out


# ---------------------------------------------------------------------------
# A minimal independent Prolog reader (subset: the corpus syntax)
# ---------------------------------------------------------------------------


def _tokenize(text: str):
    toks = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c == "%":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if c.isspace():
            i += 1
            continue
        if c.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            toks.append(("int", int(text[i:j])))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            kind = "var" if (c == "_" or c.isupper()) else "name"
            toks.append((kind, word))
            i = j
            continue
        for sym in (":-", "=<", ">=", "==", "//", "^"):
            if text.startswith(sym, i):
                toks.append(("punct", sym))
                i += len(sym)
                break
        else:
            toks.append(("punct", c))
            i += 1
    toks.append(("end", ""))
    return toks


class _Reader:
    """Recursive-descent reader for the corpus subset.  Operator
    precedences: :- (1200) < , (1000) < =,is,<,>,=<,>=,== (700)
    < +,- (500) < *,div,// (400) < ^ (200, right)."""

    def __init__(self, text):
        self.toks = _tokenize(text)
        self.pos = 0
        self.vars: dict[str, OVar] = {}

    def peek(self):
        return self.toks[self.pos]

    def take(self):
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def expect(self, val):
        kind, v = self.take()
        if v != val:
            raise ValueError(f"expected {val!r}, got {v!r}")

    def clauses(self):
        out = []
        while self.peek()[0] != "end":
            self.vars = {}
            term = self.term(1200)
            self.expect(".")
            if isinstance(term, tuple) and term[0] == "s" and term[1] == ":-":
                head, body = term[2]
                out.append((head, self._conj(body)))
            else:
                out.append((term, []))
        return out

    def _conj(self, t):
        if isinstance(t, tuple) and t[0] == "s" and t[1] == "," and len(t[2]) == 2:
            return self._conj(t[2][0]) + self._conj(t[2][1])
        return [t]

    BINOPS = {
        ":-": 1200, ",": 1000, "=": 700, "is": 700, "<": 700, ">": 700,
        "=<": 700, ">=": 700, "==": 700, "+": 500, "-": 500, "*": 400,
        "div": 400, "//": 400, "^": 200,
    }

    def term(self, maxp):
        left = self.primary()
        while True:
            kind, v = self.peek()
            if (kind in ("punct", "name")) and v in self.BINOPS and self.BINOPS[v] <= maxp:
                p = self.BINOPS[v]
                # 'div'/'is' as infix only when a term can follow
                self.take()
                right = self.term(p if v in (":-", "^") else p - 1)
                left = ("s", v, (left, right))
            else:
                return left

    def primary(self):
        kind, v = self.take()
        if kind == "int":
            return v
        if kind == "punct" and v == "-" and self.peek()[0] == "int":
            return -self.take()[1]
        if kind == "var":
            if v == "_":
                return OVar()
            if v not in self.vars:
                self.vars[v] = OVar(v)
            return self.vars[v]
        if kind == "punct" and v == "(":
            t = self.term(1200)
            self.expect(")")
            return t
        if kind == "punct" and v == "[":
            return self.list_term()
        if kind == "punct" and v == "!":
            return ("a", "!")
        if kind == "name":
            if self.peek() == ("punct", "("):
                self.take()
                args = [self.term(999)]
                while self.peek() == ("punct", ","):
                    self.take()
                    args.append(self.term(999))
                self.expect(")")
                return ("s", v, tuple(args))
            return ("a", v)
        raise ValueError(f"unexpected token {v!r}")

    def list_term(self):
        if self.peek() == ("punct", "]"):
            self.take()
            return NIL
        items = [self.term(999)]
        while self.peek() == ("punct", ","):
            self.take()
            items.append(self.term(999))
        tail = NIL
        if self.peek() == ("punct", "|"):
            self.take()
            tail = self.term(999)
        self.expect("]")
        return olist(items, tail)


def read_program(text: str) -> Database:
    return Database(_Reader(text).clauses())


def read_query(text: str):
    """Parse a query; returns (goals, var_name -> OVar)."""
    r = _Reader(text)
    t = r.term(1200)
    if r.peek()[1] == ".":
        r.take()
    return r._conj(t), dict(r.vars)


# ---------------------------------------------------------------------------
# Conversion helpers used by comparison tests
# ---------------------------------------------------------------------------


def to_plain(t, binds=None, fresh=None):
    """Deep-convert a reference term to a comparable plain structure:
    ints stay ints, atoms -> str, structures -> (functor, args...),
    unbound vars -> ('_', k) numbered in encounter order."""
    if binds is not None:
        t = walk(t, binds)
    if fresh is None:
        fresh = {}
    if isinstance(t, OVar):
        if t not in fresh:
            fresh[t] = len(fresh) + 1
        return ("_", fresh[t])
    if isinstance(t, int):
        return t
    if t[0] == "a":
        return t[1]
    return (t[1],) + tuple(to_plain(a, binds, fresh) for a in t[2])


def plain_list(t, binds=None):
    out = []
    if binds is not None:
        t = walk(t, binds)
    while isinstance(t, tuple) and t[0] == "s" and t[1] == ".":
        out.append(to_plain(t[2][0], binds))
        t = t[2][1]
        if binds is not None:
            t = walk(t, binds)
    assert t == NIL, f"improper list tail {t!r}"
    return out
