"""Exact sparse solver for fixed-point systems ``x = A x + b`` over Fractions."""

from __future__ import annotations

import math
from fractions import Fraction
from graphlib import CycleError, TopologicalSorter
from typing import Iterable, Mapping


def solve_fixed_point(
    coeffs: Mapping[int, Mapping[int, Fraction]],
    rhs: Mapping[int, Fraction],
    order: Iterable[int] | None = None,
) -> dict[int, Fraction]:
    """Solve ``x_i = rhs_i + sum_j coeffs[i][j] * x_j`` exactly.

    ``order`` is the elimination order; every unknown must appear once. For
    systems coming from reachability, eliminating states far from the
    initial state first keeps fill-in low (zero on acyclic graphs).

    Acyclic systems (no unknown depends on itself, even indirectly) are
    solved by back-substitution instead.

    Raises ``ZeroDivisionError`` if the system is singular.
    """
    order = list(rhs) if order is None else list(order)
    if sorted(order) != sorted(rhs):
        raise ValueError("elimination order must list every unknown exactly once")
    acyclic = _solve_acyclic(coeffs, rhs, order)
    if acyclic is not None:
        return acyclic
    rows = {i: dict(coeffs.get(i, {})) for i in rhs}
    b = {i: Fraction(v) for i, v in rhs.items()}

    users: dict[int, set[int]] = {i: set() for i in rows}
    for i, row in rows.items():
        for j in row:
            if j != i:
                users[j].add(i)

    done: set[int] = set()
    for k in order:
        row = rows[k]
        diag = 1 - row.pop(k, 0)
        if diag == 0:
            raise ZeroDivisionError(f"singular system at unknown {k}")
        if diag != 1:
            f = 1 / diag
            b[k] *= f
            for j in row:
                row[j] *= f
        done.add(k)
        for j in row:
            users[j].discard(k)
        for r in users.pop(k):
            if r in done:
                continue
            target = rows[r]
            c = target.pop(k)
            if not c:
                continue
            b[r] += c * b[k]
            for j, v in row.items():
                nv = target.get(j, 0) + c * v
                if nv:
                    target[j] = nv
                    if j != r:
                        users[j].add(r)
                else:
                    target.pop(j, None)
                    users[j].discard(r)

    x: dict[int, Fraction] = {}
    for k in reversed(order):
        v = b[k]
        for j, c in rows[k].items():
            v += c * x[j]
        x[k] = v
    return x


def _solve_acyclic(coeffs, rhs, hint) -> dict[int, Fraction] | None:
    """Back-substitution on integer (numerator, denominator) pairs.

    Intermediate values are not reduced, which avoids the per-operation
    gcd of ``Fraction``; each result is reduced once at the end. ``hint``
    is used as the evaluation order if every unknown comes after its
    dependencies. Returns None if the dependency graph has a cycle.
    """
    graph = {i: [j for j, c in coeffs.get(i, {}).items() if c] for i in rhs}
    pos = {i: k for k, i in enumerate(hint)}
    if all(pos[j] < pos[i] for i, deps in graph.items() for j in deps):
        order = hint
    else:
        try:
            order = list(TopologicalSorter(graph).static_order())
        except CycleError:
            return None
    vals: dict[int, tuple[int, int]] = {}
    for i in order:
        b = rhs[i]  # ints and Fractions both expose numerator/denominator
        terms = [(b.numerator, b.denominator)]
        for j, c in coeffs.get(i, {}).items():
            if c:
                n, d = vals[j]
                terms.append((c.numerator * n, c.denominator * d))
        den = terms[0][1]
        for _, d in terms[1:]:
            if d != den:
                den = math.lcm(den, d)
        vals[i] = (sum(n * (den // d) for n, d in terms), den)
    return {i: Fraction(n, d) for i, (n, d) in vals.items()}
