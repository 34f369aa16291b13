import random
import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import COIN
from nestcheck.engine import Config, Context, Engine, ResultCache, run_problem
from nestcheck.errors import EvaluationError, InstantiationError, ModelNotFoundError, PropertyError
from nestcheck.expr import Const, Let, Lit, Mc, MetaInst, Op, StdRef, parse_problem
from oracles import DivByZero, random_expression, reference_eval, render

WEIGHTED = "kind dtmc\ninit s\nlabel g g\ntrans s g [w]\ntrans s f [v]\ntrans g g 1\ntrans f f 1\n"


def run(text, models_dir=".", **kw):
    kw.setdefault("jobs", 1)
    return run_problem(parse_problem(text), Config(models_dir=models_dir, **kw))


def evaluate(e, ctx=None, models_dir="."):
    with Engine(Config(models_dir=models_dir, jobs=1)) as engine:
        return engine.eval(e, ctx)


# -- one test per evaluation rule ------------------------------------------------


def test_rule_literal():
    assert evaluate(Lit(7)) == 7


def test_rule_constant():
    assert evaluate(Const("x"), {"x": 5}) == 5


def test_rule_operator():
    assert evaluate(Op(Lit(7), "-", Op(Lit(2), "*", Lit(3)))) == 1


def test_rule_mc_standard(models):
    d = models(Coin=COIN)
    assert evaluate(Mc(StdRef("Coin"), "reach g"), models_dir=d) == 500


def test_rule_meta_instantiation(models):
    d = models(W_mm=WEIGHTED)
    e = Mc(MetaInst("W", (("w", Op(Const("k"), "+", Lit(1))), ("v", Lit(3)))), "reach g")
    assert evaluate(e, {"k": 0}, models_dir=d) == 250


def test_rule_let():
    e = Let((("x", Lit(2)), ("y", Lit(3))), Op(Const("x"), "*", Const("y")))
    assert evaluate(e) == 6


def test_let_bindings_see_enclosing_context():
    assert evaluate(Let((("y", Op(Const("x"), "+", Lit(1))),), Const("y")), {"x": 4}) == 5


# -- examples ---------------------------------------------------------------------


def test_coin_complement(models):
    d = models(Coin=COIN)
    assert run('let p = mc(Coin, "reach g") in 1000 - p', d).value == 500


@pytest.mark.parametrize("text, expected", [("7 / 2", 3), ("0 - 7 / 2", -3), ("(0 - 7) / 2", -4),
                                            ("2 - 5", -3), ("10 * 10 * 10 * 10", 10**4)])
def test_arithmetic(text, expected):
    assert run(text).value == expected


def test_big_integers():
    assert run("99999999999999999999 * 99999999999999999999").value == 99999999999999999999**2


def test_division_by_zero():
    with pytest.raises(EvaluationError, match="division by zero"):
        run("1 / (2 - 2)")


def test_scale_is_applied(models):
    d = models(Coin=COIN)
    assert run('mc(Coin, "reach g")', d, scale=10**6).value == 500000


def test_five_task_fixture(five_tasks_dir):
    res = run((five_tasks_dir / "problem.nmc").read_text(), five_tasks_dir)
    assert res.value == 1
    assert len(res.tasks) == 5
    assert not any(t.cached for t in res.tasks)
    values = {(t.name, t.property): t.value for t in res.tasks}
    assert values == {
        ("M2", "reach g2"): 250,
        ("M3", "reachmin g3"): 250,
        ("M3", "reachmax g4"): 750,
        ("M1(b=250, c=250)", "reach g1"): 500,
        ("M0(a=500, d=750)", "deadlockfree"): 1,
    }


# -- cache ----------------------------------------------------------------------


def test_duplicate_task_runs_once(models):
    d = models(A=COIN)
    res = run('mc(A, "reach g") + mc(A, "reach g")', d)
    assert res.value == 1000
    assert len(res.tasks) == 1
    assert res.tasks[0].cached and res.tasks[0].hits == 1
    assert list(res.invocations.values()) == [1]


def test_structurally_equal_instances_share_a_run(models):
    d = models(W_mm=WEIGHTED)
    res = run('mc(W(w = 1, v = 1), "reach g") + mc(W(w = 2 - 1, v = 1), "reach g")', d)
    assert res.value == 1000
    assert len(res.tasks) == 1


def test_cache_off_same_value(models):
    d = models(A=COIN)
    text = 'mc(A, "reach g") + mc(A, "reach g") * 2'
    on, off = run(text, d), run(text, d, cache=False)
    assert on.value == off.value == 1500
    assert list(on.invocations.values()) == [1]
    assert list(off.invocations.values()) == [2]


def test_result_cache_computes_each_key_once():
    cache = ResultCache()
    calls = []
    barrier = threading.Barrier(8)

    def worker():
        barrier.wait()
        cache.get_or_compute(("k",), lambda: calls.append(1) or "fut")

    threads = [threading.Thread(target=worker) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(calls) == 1
    assert cache.invocations == {("k",): 1}
    assert cache.hits == {("k",): 7}


# -- determinism and parallelism ----------------------------------------------------


def _task_set(res):
    return sorted((t.model, t.name, t.property, t.value, t.states, t.exact) for t in res.tasks)


def test_jobs_do_not_change_results(five_tasks_dir):
    text = (five_tasks_dir / "problem.nmc").read_text()
    runs = [run(text, five_tasks_dir, jobs=j) for j in (1, 2, 8)]
    assert {r.value for r in runs} == {1}
    assert len({repr(_task_set(r)) for r in runs}) == 1


@pytest.mark.parametrize("executor", ["inline", "process"])
def test_executors_agree(five_tasks_dir, executor):
    res = run((five_tasks_dir / "problem.nmc").read_text(), five_tasks_dir, jobs=2, executor=executor)
    assert res.value == 1 and len(res.tasks) == 5


def test_parallel_map_keeps_order():
    with Engine(Config(jobs=4)) as engine:
        assert engine.parallel_map(lambda x: x * x, list(range(20))) == [x * x for x in range(20)]


def test_leftmost_error_wins(models):
    d = models(A=COIN)
    with pytest.raises(EvaluationError):
        run('let a = 1 / 0, b = mc(Missing, "reach g") in a + b', d, jobs=4)
    with pytest.raises(ModelNotFoundError):
        run('let b = mc(Missing, "reach g"), a = 1 / 0 in a + b', d, jobs=4)
    with pytest.raises(EvaluationError):
        run('(1 / 0) + mc(Missing, "reach g")', d, jobs=4)


# -- scope ------------------------------------------------------------------------


def test_shadowing_innermost_wins():
    assert run("let x = 1 in (let x = 2 in x) * 10 + x").value == 21


def test_context_is_immutable():
    ctx = Context({"x": 1})
    bigger = ctx.extend({"x": 2, "y": 3})
    assert dict(ctx) == {"x": 1}
    assert dict(bigger) == {"x": 2, "y": 3}
    with pytest.raises(TypeError):
        ctx["x"] = 5


def test_sibling_subtrees_do_not_see_each_others_bindings():
    text = "let a = (let x = 10 in x), b = (let x = 20 in x) in a + b"
    assert run(text, jobs=4).value == 30


# -- errors ----------------------------------------------------------------------


def test_missing_model_names_it(tmp_path):
    with pytest.raises(ModelNotFoundError, match="Nope"):
        run('mc(Nope, "reach g")', tmp_path)


def test_ambiguous_model(models):
    d = models(A=COIN, A_mm=COIN)
    with pytest.raises(ModelNotFoundError, match="ambiguous"):
        run('mc(A, "reach g")', d)


def test_meta_model_needs_arguments(models):
    d = models(W_mm=WEIGHTED)
    with pytest.raises(EvaluationError):
        run('mc(W, "reach g")', d)


def test_standard_model_takes_no_arguments(models):
    d = models(A=COIN)
    with pytest.raises(EvaluationError):
        run('mc(A(w = 1), "reach g")', d)


def test_zero_placeholder_meta_with_empty_parentheses(models):
    d = models(C_mm=COIN)
    assert run('mc(C(), "reach g")', d).value == 500


def test_negative_argument(models):
    d = models(W_mm=WEIGHTED)
    with pytest.raises(InstantiationError, match="negative"):
        run('mc(W(w = 1 - 2, v = 1), "reach g")', d)


def test_missing_argument(models):
    d = models(W_mm=WEIGHTED)
    with pytest.raises(InstantiationError, match="v"):
        run('mc(W(w = 1), "reach g")', d)


def test_checker_errors_propagate(models):
    d = models(A=COIN)
    with pytest.raises(PropertyError):
        run('mc(A, "reach nolabel")', d)


# -- reference interpreter --------------------------------------------------------


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32))
def test_matches_reference_interpreter(seed):
    tree = random_expression(random.Random(seed))
    try:
        expected = reference_eval(tree)
    except DivByZero:
        with pytest.raises(EvaluationError):
            run(render(tree))
        return
    assert run(render(tree)).value == expected
