"""Store, unification, equality, ordering, rendering, snapshots."""

import pytest
from hypothesis import given, settings, strategies as st

from ozk.terms import (
    Atom, Compound, Int, NIL, Store, Var, bisimilar, compare_terms, cons,
    is_cons, list_to_python, make_list, materialize, render, snapshot,
)


def ref_equal(store_a, ta, store_b, tb, pairs=None) -> bool:
    """Independent rational-tree equality used to check the module's
    unify/equals: plain pair-memo bisimulation, recursive."""
    if pairs is None:
        pairs = set()
    ta = store_a.deref(ta)
    tb = store_b.deref(tb)
    key = (id(ta), id(tb))
    if key in pairs:
        return True
    pairs.add(key)
    if isinstance(ta, Var) and isinstance(tb, Var):
        return ta.vid == tb.vid
    if isinstance(ta, Var) or isinstance(tb, Var):
        return False
    if isinstance(ta, Atom):
        return ta == tb
    if isinstance(ta, Int):
        return ta == tb
    if isinstance(ta, Compound) and isinstance(tb, Compound):
        if ta.label != tb.label or len(ta.args) != len(tb.args):
            return False
        return all(ref_equal(store_a, x, store_b, y, pairs)
                   for x, y in zip(ta.args, tb.args))
    return ta is tb


def f(*args):
    return Compound("f", list(args))


def test_new_var_ids_monotonic():
    s = Store()
    a, b = s.new_var(), s.new_var()
    assert a.vid < b.vid
    assert a.vid[0] == 0
    assert s.vars[a.vid] is a


def test_unify_constants():
    s = Store()
    assert s.unify(Atom("a"), Atom("a")).ok
    assert not s.unify(Atom("a"), Atom("b")).ok
    assert s.unify(Int(3), Int(3)).ok
    assert not s.unify(Int(3), Int(4)).ok
    assert not s.unify(Int(3), Atom("a")).ok


def test_unify_binds_var():
    s = Store()
    x = s.new_var()
    assert s.unify(x, Int(7)).ok
    assert s.deref(x) == Int(7)


def test_var_var_binds_greater_to_lesser():
    s = Store()
    x = s.new_var()
    y = s.new_var()
    assert s.unify(x, y).ok
    assert y.ref is x           # younger variable points at the older
    assert x.ref is None


def test_unify_compound_recurses():
    s = Store()
    x, y = s.new_var(), s.new_var()
    assert s.unify(f(x, Int(2)), f(Int(1), y)).ok
    assert s.deref(x) == Int(1)
    assert s.deref(y) == Int(2)
    assert not s.unify(f(Int(1)), f(Int(1), Int(2))).ok  # arity clash
    assert not s.unify(f(Int(1)), Compound("g", [Int(1)])).ok


def test_unify_cyclic_terms_terminate():
    s = Store()
    x, y = s.new_var(), s.new_var()
    assert s.unify(x, f(x)).ok              # x = f(x)
    assert s.unify(y, f(f(y))).ok           # y = f(f(y))
    res = s.unify(x, y)                     # equal rational trees
    assert res.ok
    assert ref_equal(s, x, s, y)


def test_unify_cyclic_clash():
    s = Store()
    x, y = s.new_var(), s.new_var()
    s.unify(x, f(x))
    s.unify(y, Compound("g", [y]))
    assert not s.unify(x, y).ok


def test_infinite_list():
    s = Store()
    x = s.new_var()
    assert s.unify(x, cons(Int(1), x)).ok
    t = s.deref(x)
    assert is_cons(t)
    assert s.deref(t.args[1]) is t


def test_equals_three_outcomes():
    s = Store()
    x = s.new_var()
    yes, _ = s.equals(Int(1), Int(1))
    assert yes is True
    no, _ = s.equals(Int(1), Int(2))
    assert no is False
    maybe, frontier = s.equals(x, Int(1))
    assert maybe is None and frontier == {x.vid}
    # determined structure with a clash is decidedly false
    no2, _ = s.equals(f(x, Int(1)), f(x, Int(2)))
    assert no2 is False


def test_equals_cyclic():
    s = Store()
    x, y = s.new_var(), s.new_var()
    s.unify(x, f(x))
    s.unify(y, f(f(y)))
    yes, _ = s.equals(x, y)
    assert yes is True


def test_equals_partial_list():
    s = Store()
    x = s.new_var()
    maybe, frontier = s.equals(x, cons(Int(1), x))
    assert maybe is None
    assert frontier == {x.vid}


def test_waiters_woken_on_bind():
    s = Store()
    x = s.new_var()
    s.add_waiter(x, 11)
    s.add_waiter(x, 12)
    res = s.unify(x, Int(1))
    assert res.ok and res.woken == {11, 12}
    assert x.waiters is None


def test_value_wait_marks_needed_and_wakes_byneed():
    s = Store()
    x = s.new_var()
    s.add_byneed_waiter(x, 5)
    woken = s.add_waiter(x, 9)
    assert woken == {5}
    assert x.needed


def test_bind_wakes_byneed():
    s = Store()
    x = s.new_var()
    s.add_byneed_waiter(x, 5)
    res = s.unify(x, Int(3))
    assert res.woken == {5}


def test_need_transfers_on_var_var_bind():
    s = Store()
    x = s.new_var()
    y = s.new_var()
    s.mark_needed(y)
    s.add_byneed_waiter(x, 7)
    res = s.unify(x, y)  # y (greater) binds to x (lesser); y was needed
    assert res.ok
    assert x.needed
    assert 7 in res.woken


def test_trail_undo_restores_bindings_and_need():
    s = Store()
    x = s.new_var()
    y = s.new_var()
    s.unify(x, Int(1))
    s.push_trail()
    mark = s.trail_mark()
    s.unify(y, Int(2))
    s.mark_needed(s.new_var())
    s.undo_to(mark)
    s.pop_trail(merge=False)
    assert y.ref is None
    assert s.deref(x) == Int(1)  # pre-trail binding untouched


def test_no_path_compression_while_trailed():
    s = Store()
    a, b, c = s.new_var(), s.new_var(), s.new_var()
    s.push_trail()
    mark = s.trail_mark()
    s.unify(b, a)
    s.unify(c, b)
    s.unify(a, Int(5))
    assert s.deref(c) == Int(5)
    s.undo_to(mark)
    s.pop_trail(merge=False)
    assert all(v.ref is None for v in (a, b, c))


# -- property tests ---------------------------------------------------------

ground_terms = st.recursive(
    st.integers(-20, 20).map(Int) | st.sampled_from("abc").map(Atom),
    lambda sub: st.builds(lambda la, args: Compound(la, list(args)),
                          st.sampled_from("fg"), st.lists(sub, min_size=1, max_size=3)),
    max_leaves=8)


@settings(max_examples=120, deadline=None)
@given(ground_terms, ground_terms)
def test_ground_unify_iff_equal(t1, t2):
    s = Store()
    ok = s.unify(t1, t2).ok
    assert ok == ref_equal(s, t1, s, t2)
    # commutativity
    s2 = Store()
    assert ok == s2.unify(t2, t1).ok
    # equals agrees and is fully decided on ground terms
    dec, frontier = Store().equals(t1, t2)
    assert dec == ok and not frontier


@settings(max_examples=80, deadline=None)
@given(ground_terms, ground_terms)
def test_compare_total_order(t1, t2):
    s = Store()
    c12 = compare_terms(s, t1, t2)
    c21 = compare_terms(s, t2, t1)
    assert c12 == -c21
    assert (c12 == 0) == ref_equal(s, t1, s, t2)


def test_compare_kind_ranking():
    s = Store()
    v = s.new_var()
    items = [f(Int(1)), Atom("z"), Int(100), v, Atom("a"), Int(-3)]
    items.sort(key=lambda t: _cmp_key(s, t, items))
    assert items[0] is v
    assert [type(t).__name__ for t in items] == [
        "Var", "Int", "Int", "Atom", "Atom", "Compound"]
    assert items[1] == Int(-3) and items[4] == Atom("z")


def _cmp_key(store, t, universe):
    import functools
    return functools.cmp_to_key(lambda a, b: compare_terms(store, a, b))(t)


def test_compare_compound_order():
    s = Store()
    # arity first, then label, then args left to right
    assert compare_terms(s, f(Int(1)), f(Int(1), Int(1))) == -1
    assert compare_terms(s, f(Int(1)), Compound("g", [Int(1)])) == -1
    assert compare_terms(s, f(Int(1), Int(2)), f(Int(1), Int(3))) == -1
    assert compare_terms(s, f(Int(2), Int(0)), f(Int(1), Int(9))) == 1


def test_render_proper_list():
    s = Store()
    t = make_list([Int(1), Int(2), Int(3)])
    assert render(s, t) == "[1 2 3]"
    nested = make_list([make_list([Int(1), Int(7)])])
    assert render(s, nested) == "[[1 7]]"


def test_render_partial_and_vars():
    s = Store()
    x = s.new_var()
    assert render(s, x) == "_G1"
    t = cons(Atom("a"), cons(Atom("b"), x))
    assert render(s, t) == "a|b|_G1"
    pair = f(x, x)
    assert render(s, pair) == "f(_G1 _G1)"
    y = s.new_var()
    assert render(s, f(x, y)) == "f(_G1 _G2)"


def test_render_cyclic():
    s = Store()
    x = s.new_var()
    s.unify(x, f(x))
    assert render(s, x) == "f(@1)"
    y = s.new_var()
    s.unify(y, cons(Int(1), y))
    assert render(s, y) == "1|@1"


def test_render_atoms_and_negatives():
    s = Store()
    assert render(s, Atom("abc")) == "abc"
    assert render(s, Atom("Odd name")) == "'Odd name'"
    assert render(s, Int(-5)) == "~5"
    assert render(s, NIL) == "nil"


def test_render_long_list_is_iterative():
    s = Store()
    t = make_list([Int(i) for i in range(30000)])
    out = render(s, t)
    assert out.startswith("[0 1 2") and out.endswith("29999]")


def test_snapshot_materialize_round_trip():
    s = Store()
    x = s.new_var()
    t = f(Int(1), cons(Atom("a"), x), x)
    snap = snapshot(s, t, keep_var=lambda vid: False)
    s2 = Store(node_id=3)
    fresh: dict = {}

    def resolve(vid):
        key = vid if vid is not None else len(fresh)
        if key not in fresh:
            fresh[key] = s2.new_var()
        return fresh[key]

    t2 = materialize(s2, snap, resolve)
    assert bisimilar(s, t, s2, t2)


def test_snapshot_preserves_cycles_and_sharing():
    s = Store()
    x = s.new_var()
    s.unify(x, f(x, x))
    snap = snapshot(s, x, keep_var=lambda vid: False)
    s2 = Store()
    t2 = materialize(s2, snap, lambda vid: s2.new_var())
    t2 = s2.deref(t2)
    assert s2.deref(t2.args[0]) is t2
    assert bisimilar(s, x, s2, t2)


def test_snapshot_keep_var_frontier():
    s = Store()
    x = s.new_var()
    t = f(x)
    snap = snapshot(s, t, keep_var=lambda vid: True)
    kinds = [n for n in snap.nodes if n[0] == "var"]
    assert kinds == [("var", x.vid)]


def test_bisimilar_strict_vs_loose():
    a, b = Store(0), Store(1)
    xa, xb = a.new_var(), b.new_var()
    ta, tb = f(xa, Int(1)), f(xb, Int(1))
    assert bisimilar(a, ta, b, tb)
    assert not bisimilar(a, ta, b, tb, strict_vars=True)
    # one-to-one: f(X X) does not match f(X Y)
    ya, yb = a.new_var(), b.new_var()
    assert not bisimilar(a, f(xa, xa), b, f(xb, yb))
    assert not bisimilar(a, f(xa, ya), b, f(xb, xb))


def test_list_to_python():
    s = Store()
    t = make_list([Int(1), Int(2)])
    assert [x.value for x in list_to_python(s, t)] == [1, 2]
    with pytest.raises(Exception):
        list_to_python(s, cons(Int(1), s.new_var()))
