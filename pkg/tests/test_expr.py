import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nestcheck.errors import ParseError, StaticCheckError
from nestcheck.expr import (
    Const,
    Let,
    Lit,
    Mc,
    MetaInst,
    Op,
    StdRef,
    TaskDag,
    TaskNode,
    format_expr,
    free_constants,
    parse_expr,
    parse_problem,
    task_dag,
    tokenize,
)

FIVE_TASKS = ('mc(M0(a = mc(M1(b = mc(M2, "reach g2"), c = mc(M3, "reach g3")), "reach g1"), '
        'd = mc(M3, "reachmax g4")), "deadlockfree")')


def kinds(text):
    return [(t.kind, t.value) for t in tokenize(text)][:-1]  # drop EOF


# -- lexer ----------------------------------------------------------------------


def test_tokenize_mc_call():
    assert kinds('mc(M2, "reach g")') == [
        ("KW", "mc"), ("(", "("), ("IDENT", "M2"), (",", ","), ("STR", "reach g"), (")", ")")]


def test_tokenize_let_counts_seven():
    assert len(tokenize("let x = 3 in x")) == 7
    assert tokenize("let x = 3 in x")[-1].kind == "EOF"


def test_tokenize_illegal_character():
    with pytest.raises(ParseError) as info:
        tokenize("3 @ 4")
    assert (info.value.line, info.value.column) == (1, 3)


def test_tokenize_skips_comments_and_tracks_lines():
    toks = tokenize("# header\n1 +  # trailing\n  2")
    assert [(t.value, t.line, t.col) for t in toks[:-1]] == [("1", 2, 1), ("+", 2, 3), ("2", 3, 3)]


def test_unterminated_string():
    with pytest.raises(ParseError):
        tokenize('mc(A, "reach g)')


# -- parser ---------------------------------------------------------------------


def test_precedence():
    e = parse_problem("1 + 2 * 3")
    assert e == Op(Lit(1), "+", Op(Lit(2), "*", Lit(3)))


def test_left_associative():
    assert parse_problem("8 - 3 - 2") == Op(Op(Lit(8), "-", Lit(3)), "-", Lit(2))
    assert parse_problem("8 / 2 * 3") == Op(Op(Lit(8), "/", Lit(2)), "*", Lit(3))


def test_parentheses_group():
    assert parse_problem("(1 + 2) * 3") == Op(Op(Lit(1), "+", Lit(2)), "*", Lit(3))


def test_let_extends_right():
    e = parse_problem("let x = 1 in x + 2")
    assert e == Let((("x", Lit(1)),), Op(Const("x"), "+", Lit(2)))


def test_let_inside_operand():
    e = parse_problem("1 + let x = 2 in x * 3")
    assert e == Op(Lit(1), "+", Let((("x", Lit(2)),), Op(Const("x"), "*", Lit(3))))


def test_five_task_shape():
    e = parse_problem(FIVE_TASKS)
    m2, m3min = Mc(StdRef("M2"), "reach g2"), Mc(StdRef("M3"), "reach g3")
    m1 = Mc(MetaInst("M1", (("b", m2), ("c", m3min))), "reach g1")
    assert e == Mc(MetaInst("M0", (("a", m1), ("d", Mc(StdRef("M3"), "reachmax g4")))), "deadlockfree")


def test_empty_argument_list():
    assert parse_problem('mc(Fixed(), "deadlockfree")') == Mc(MetaInst("Fixed", ()), "deadlockfree")


@pytest.mark.parametrize(
    "text",
    [
        "1 +",
        "(1 + 2",
        "let x = 1 x",
        "let in 3",
        'mc(A "reach g")',
        "mc(A, reach)",
        'mc(A(x 1), "reach g")',
        'mc(3, "reach g")',
        "1 2",
        'mc(A, "bogus g")',
        'mc(A, "reach")',
        "",
        "-1",
    ],
)
def test_syntax_errors(text):
    with pytest.raises(ParseError):
        parse_problem(text)


def test_syntax_error_position():
    with pytest.raises(ParseError) as info:
        parse_problem("let x = 1,\n    y = in x")
    assert info.value.line == 2


# -- static checks ----------------------------------------------------------------


def test_sibling_reference_rejected():
    with pytest.raises(StaticCheckError, match="sibling"):
        parse_problem("let x = 1, y = x in y")


def test_sibling_reference_rejected_even_if_outer_bound():
    with pytest.raises(StaticCheckError):
        parse_problem("let x = 5 in let x = 1, y = x in y")


def test_self_reference_rejected():
    with pytest.raises(StaticCheckError):
        parse_problem("let x = 1 in let x = x + 1 in x")


def test_sibling_reference_inside_meta_argument():
    with pytest.raises(StaticCheckError):
        parse_problem('let p = 1, q = mc(A(w = p), "reach g") in q')


@pytest.mark.parametrize("text", ["let x = 1, x = 2 in x", 'mc(A(w = 1, w = 2), "reach g")'])
def test_duplicate_ids(text):
    with pytest.raises(StaticCheckError, match="duplicate"):
        parse_problem(text)


def test_unbound_constant():
    with pytest.raises(StaticCheckError, match="y"):
        parse_problem("let x = 1 in x + y")


def test_parse_expr_skips_static_checks():
    assert parse_expr("x + 1") == Op(Const("x"), "+", Lit(1))


def test_nested_let_may_use_outer():
    parse_problem("let x = 1 in let y = x + 1 in x + y")


@pytest.mark.parametrize(
    "text, expected",
    [("x + 1", {"x"}), ("let x = 1 in x", set()), ("let x = 1 in x + y", {"y"}),
     ("let x = z in x", {"z"}), ('mc(A(w = k), "reach g")', {"k"})],
)
def test_free_constants(text, expected):
    assert free_constants(parse_expr(text)) == expected


# -- task DAG -------------------------------------------------------------------


def test_five_task_dag():
    dag = task_dag(parse_problem(FIVE_TASKS))
    assert len(dag.nodes) == 5 and len(dag.edges) == 4
    by_prop = {n.property: n for n in dag.nodes}
    m2, m3, m1, m3max, m0 = (by_prop[p] for p in ("reach g2", "reach g3", "reach g1", "reachmax g4", "deadlockfree"))
    assert m2.model == "M2" and m3.model == "M3" and m3max.model == "M3"
    assert m1.model.startswith("M1(") and m0.model.startswith("M0(")
    assert dag.edges == {(m2, m1), (m3, m1), (m1, m0), (m3max, m0)}
    assert dag.predecessors(m0) == {m1, m3max}
    order = dag.topological_order()
    assert order.index(m1) < order.index(m0)
    assert order.index(m2) < order.index(m1)


def test_dag_merges_identical_pairs():
    assert len(task_dag(parse_problem('mc(A, "reach g") + mc(A, "reach g")')).nodes) == 1


def test_dag_keeps_distinct_properties():
    assert len(task_dag(parse_problem('mc(A, "reach g") + mc(A, "deadlockfree")')).nodes) == 2


def test_dag_sees_through_let():
    dag = task_dag(parse_problem('let p = mc(A, "reach g") in mc(B(w = p, v = 1000 - p), "reach h")'))
    a = TaskNode("A", "reach g")
    (b,) = [n for n in dag.nodes if n != a]
    assert dag.edges == {(a, b)}
    assert "1000 - mc(A" in b.model


def test_dag_merges_up_to_argument_order():
    dag = task_dag(parse_problem('mc(B(x = 1, y = 2), "reach h") + mc(B(y = 2, x = 1), "reach h")'))
    assert len(dag.nodes) == 1


def test_dag_shadowing():
    dag = task_dag(parse_problem('let p = 1 in let p = 2 in mc(B(w = p), "reach h")'))
    assert dag.nodes == (TaskNode("B(w = 2)", "reach h"),)


def test_dag_cycle_detection():
    a, b = TaskNode("A", "reach g"), TaskNode("B", "reach g")
    assert not TaskDag((a, b), frozenset({(a, b), (b, a)})).is_acyclic()


# -- generated expressions -----------------------------------------------------


NAMES = ["a", "b", "c", "x", "y"]


def _exprs():
    lit = st.integers(0, 10**12).map(Lit)
    const = st.sampled_from(NAMES).map(Const)
    prop = st.sampled_from(["reach g", "reachmax g", "deadlockfree"])

    def extend(inner):
        args = st.lists(st.tuples(st.sampled_from(NAMES), inner), max_size=3, unique_by=lambda t: t[0])
        model = st.one_of(st.sampled_from(["A", "B"]).map(StdRef),
                          st.builds(lambda n, a: MetaInst(n, tuple(a)), st.sampled_from(["C", "D"]), args))
        return st.one_of(
            st.builds(Op, inner, st.sampled_from("+-*/"), inner),
            st.builds(Mc, model, prop),
            st.builds(lambda b, body: Let(tuple(b), body),
                      st.lists(st.tuples(st.sampled_from(NAMES), inner), min_size=1, max_size=3,
                               unique_by=lambda t: t[0]), inner),
        )

    return st.recursive(st.one_of(lit, const), extend, max_leaves=15)


@settings(max_examples=500, deadline=None)
@given(_exprs())
def test_format_parse_round_trip(e):
    text = format_expr(e)
    once = parse_expr(text)
    assert once == e
    assert parse_expr(format_expr(once)) == once


@settings(max_examples=300, deadline=None)
@given(_exprs())
def test_dag_always_acyclic(e):
    assert task_dag(e).is_acyclic()
