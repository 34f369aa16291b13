"""The model-checking function ``mc``.

Boolean checks return 0/1. Probabilistic checks return the reachability
probability scaled to a natural number (per thousand by default) with
round-half-up.

Probabilities are computed in two stages: graph-based precomputation of
the states with probability 0 and 1, then either an exact rational solve
(small unknown sets) or interval value iteration.
"""

from __future__ import annotations

import enum
import logging
import math
from collections import deque
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import PropertyError
from .linsolve import solve_fixed_point
from .model import Kind, StandardModel, deadlock_states, reachable_states

log = logging.getLogger(__name__)

DEFAULT_SCALE = 1000
EXACT_THRESHOLD = 2000
EPSILON = 1e-10
MAX_ITERATIONS = 10**7


class PropKind(enum.Enum):
    REACH = "reach"
    REACH_MIN = "reachmin"
    REACH_MAX = "reachmax"
    DEADLOCK_FREE = "deadlockfree"


@dataclass(frozen=True)
class Property:
    kind: PropKind
    label: str | None = None

    def __str__(self):
        return self.kind.value if self.label is None else f"{self.kind.value} {self.label}"


def parse_property(text: str) -> Property:
    """Parse ``reach <l>``, ``reachmin <l>``, ``reachmax <l>`` or ``deadlockfree``."""
    toks = text.split()
    if not toks:
        raise PropertyError("empty property")
    try:
        kind = PropKind(toks[0])
    except ValueError:
        raise PropertyError(f"unknown property {toks[0]!r}") from None
    if kind is PropKind.DEADLOCK_FREE:
        if len(toks) != 1:
            raise PropertyError("'deadlockfree' takes no argument")
        return Property(kind)
    if len(toks) != 2:
        raise PropertyError(f"expected '{kind.value} <label>'")
    return Property(kind, toks[1])


@dataclass(frozen=True)
class CheckResult:
    value: int
    scale: int
    exact: bool = True
    states: int = 0


def round_to_scale(p, scale: int) -> int:
    """Round-half-up of ``p * scale``; ``p`` may be a Fraction or float."""
    q = Fraction(p) * scale
    n = math.floor(q + Fraction(1, 2))
    return min(max(n, 0), scale)


def mc(
    m: StandardModel,
    phi: Property | str,
    scale: int = DEFAULT_SCALE,
    *,
    exact_threshold: int = EXACT_THRESHOLD,
    epsilon: float = EPSILON,
) -> CheckResult:
    if isinstance(phi, str):
        phi = parse_property(phi)
    if scale < 1:
        raise ValueError("scale must be a positive integer")
    _check_applicable(m, phi)
    explored = len(reachable_states(m))
    if phi.kind is PropKind.DEADLOCK_FREE:
        return CheckResult(check_deadlock_free(m), scale, True, explored)
    if phi.kind is PropKind.REACH and m.kind is Kind.LTS:
        return CheckResult(check_reach_bool(m, phi.label), scale, True, explored)
    if phi.kind is PropKind.REACH:
        p, exact = _dtmc_reach(m, phi.label, "auto", exact_threshold, epsilon)
    else:
        mode = "min" if phi.kind is PropKind.REACH_MIN else "max"
        p, exact = _mdp_reach(m, phi.label, mode, "auto", exact_threshold, epsilon)
    return CheckResult(round_to_scale(p, scale), scale, exact, explored)


def _check_applicable(m: StandardModel, phi: Property) -> None:
    if phi.kind is PropKind.REACH and m.kind is Kind.MDP:
        raise PropertyError("'reach' is ambiguous on an MDP; use 'reachmin' or 'reachmax'")
    if phi.kind in (PropKind.REACH_MIN, PropKind.REACH_MAX) and m.kind is not Kind.MDP:
        raise PropertyError(f"'{phi.kind.value}' requires an MDP, got {m.kind.value}")
    if phi.label is not None and phi.label not in m.labels:
        raise PropertyError(f"unknown label {phi.label!r}")


def check_reach_bool(m: StandardModel, label: str) -> int:
    return int(bool(reachable_states(m) & m.labels[label]))


def check_deadlock_free(m: StandardModel) -> int:
    return int(not deadlock_states(m))


def dtmc_reach_prob(m: StandardModel, label: str, *, method: str = "auto",
                    exact_threshold: int = EXACT_THRESHOLD, epsilon: float = EPSILON):
    """Probability of eventually reaching ``label`` from the initial state.

    Returns a Fraction when solved exactly, a float from value iteration
    otherwise. ``method`` is ``"auto"``, ``"exact"`` or ``"iterative"``.
    """
    if m.kind is not Kind.DTMC:
        raise PropertyError("dtmc_reach_prob requires a DTMC")
    if label not in m.labels:
        raise PropertyError(f"unknown label {label!r}")
    return _dtmc_reach(m, label, method, exact_threshold, epsilon)[0]


def mdp_reach_prob(m: StandardModel, label: str, mode: str, *, method: str = "auto",
                   exact_threshold: int = EXACT_THRESHOLD, epsilon: float = EPSILON):
    """Minimal or maximal reachability probability over all schedulers."""
    if m.kind is not Kind.MDP:
        raise PropertyError("mdp_reach_prob requires an MDP")
    if mode not in ("min", "max"):
        raise ValueError("mode must be 'min' or 'max'")
    if label not in m.labels:
        raise PropertyError(f"unknown label {label!r}")
    return _mdp_reach(m, label, mode, method, exact_threshold, epsilon)[0]


# -- shared structure --------------------------------------------------------


class _Sub:
    """The reachable fragment with choices indexed by local state id.

    A state with no enabled choice gets an implicit self-loop so that
    probabilities stay well defined.
    """

    def __init__(self, m: StandardModel, label: str):
        reach = sorted(reachable_states(m))
        self.glob = reach
        local = {s: i for i, s in enumerate(reach)}
        self.n = len(reach)
        self.init = local[m.init]
        self.target = {local[s] for s in m.labels[label] if s in local}
        self.choices: list[list[list[tuple[int, Fraction]]]] = []
        for s in reach:
            cs = [[(local[d], p) for d, p in dist] for _, dist in m.choices[s]]
            if not cs:
                cs = [[(local[s], Fraction(1))]]
            self.choices.append(cs)
        preds: list[set[int]] = [set() for _ in range(self.n)]
        for s, cs in enumerate(self.choices):
            for dist in cs:
                for d, _ in dist:
                    preds[d].add(s)
        self.preds = preds

    def backward(self, seeds, *, blocked=(), allowed=None, exists=True, restrict=None):
        """States that can reach ``seeds``.

        ``blocked`` states are never added. With ``exists=False`` a state
        is added only if every choice can move into the set. ``restrict``
        limits the considered states; ``allowed`` filters choices.
        """
        result = set(seeds)
        queue = deque(result)
        blocked = set(blocked)
        while queue:
            t = queue.popleft()
            for s in self.preds[t]:
                if s in result or s in blocked or (restrict is not None and s not in restrict):
                    continue
                if exists and allowed is None:
                    result.add(s)
                    queue.append(s)
                    continue
                cs = self.choices[s] if allowed is None else [c for c in self.choices[s] if allowed(s, c)]
                hit = [any(d in result for d, _ in c) for c in cs]
                if (any(hit) if exists else (hit and all(hit))):
                    result.add(s)
                    queue.append(s)
        return result

    def bfs_order(self):
        order = [self.init]
        seen = {self.init}
        for s in order:
            for dist in self.choices[s]:
                for d, _ in dist:
                    if d not in seen:
                        seen.add(d)
                        order.append(d)
        return order


def _dtmc_reach(m, label, method, exact_threshold, epsilon):
    sub = _Sub(m, label)
    all_states = set(range(sub.n))
    can_reach = sub.backward(sub.target)
    s0 = all_states - can_reach
    s1 = all_states - sub.backward(s0, blocked=sub.target)
    if sub.init in s1:
        return Fraction(1), True
    if sub.init in s0:
        return Fraction(0), True
    unknown = all_states - s0 - s1
    if method == "exact" or (method == "auto" and len(unknown) <= exact_threshold):
        policy = [0] * sub.n
        return _solve_exact(sub, policy, s1, unknown)[sub.init], True
    lo, hi = _interval_iteration(sub, s1, unknown, None, epsilon)
    return (lo + hi) / 2, False


def _solve_exact(sub: _Sub, policy, s1, unknown) -> dict[int, Fraction]:
    coeffs: dict[int, dict[int, Fraction]] = {}
    rhs: dict[int, Fraction] = {}
    for s in unknown:
        row: dict[int, Fraction] = {}
        b = 0
        for d, p in sub.choices[s][policy[s]]:
            if d in s1:
                b = b + p if b else p
            elif d in unknown:
                row[d] = row[d] + p if d in row else p
        coeffs[s] = row
        rhs[s] = Fraction(b) if b == 0 else b
    order = [s for s in reversed(sub.bfs_order()) if s in unknown]
    x = solve_fixed_point(coeffs, rhs, order)
    for s in s1:
        x[s] = Fraction(1)
    return x


# -- iterative solving -------------------------------------------------------


class _Arrays:
    """Choice-level sparse matrix over the unknown states."""

    def __init__(self, sub: _Sub, s1, unknown):
        self.ids = sorted(unknown)
        pos = {s: i for i, s in enumerate(self.ids)}
        rows, cols, vals, b, owner = [], [], [], [], []
        starts = []
        c = 0
        for s in self.ids:
            starts.append(c)
            for dist in sub.choices[s]:
                acc = 0.0
                for d, p in dist:
                    if d in s1:
                        acc += float(p)
                    elif d in pos:
                        rows.append(c)
                        cols.append(pos[d])
                        vals.append(float(p))
                b.append(acc)
                owner.append(pos[s])
                c += 1
        self.pos = pos
        self.n = len(self.ids)
        self.num_choices = c
        self.P = sp.csr_matrix((vals, (rows, cols)), shape=(c, self.n))
        self.b = np.asarray(b)
        self.starts = np.asarray(starts, dtype=np.intp)
        self.owner = np.asarray(owner, dtype=np.intp)


def _interval_iteration(sub: _Sub, s1, unknown, mode, epsilon):
    """Iterate lower and upper bounds until they are within ``2*epsilon``.

    ``mode`` is None for DTMCs, else "min"/"max". Maximisation collapses
    end components by deflating the upper bound to the best exit value.
    """
    arr = _Arrays(sub, s1, unknown)
    reduce = np.maximum.reduceat if mode != "min" else np.minimum.reduceat
    mecs = _maximal_end_components(sub, unknown, arr) if mode == "max" else []
    lower = np.zeros(arr.n)
    upper = np.ones(arr.n)
    k = arr.pos[sub.init]
    for it in range(MAX_ITERATIONS):
        lower = reduce(arr.P @ lower + arr.b, arr.starts)
        q_up = arr.P @ upper + arr.b
        upper = reduce(q_up, arr.starts)
        for members, exits in mecs:
            best = q_up[exits].max() if len(exits) else 0.0
            upper[members] = np.minimum(upper[members], best)
        if upper[k] - lower[k] < 2 * epsilon and (upper - lower).max() < 2 * epsilon:
            log.debug("interval iteration converged after %d sweeps", it + 1)
            break
    else:
        log.warning("value iteration hit the %d-sweep cap", MAX_ITERATIONS)
    return float(lower[k]), float(upper[k])


def _maximal_end_components(sub: _Sub, unknown, arr: _Arrays):
    """MECs inside the unknown states, as (member indices, exit choice indices)."""
    candidate = set(unknown)
    stay = {s: [i for i, dist in enumerate(sub.choices[s]) if all(d in candidate for d, _ in dist)]
            for s in unknown}
    while True:
        nodes = sorted(s for s in candidate if stay[s])
        if not nodes:
            return []
        idx = {s: i for i, s in enumerate(nodes)}
        r, c = [], []
        for s in nodes:
            for ci in stay[s]:
                for d, _ in sub.choices[s][ci]:
                    if d in idx:
                        r.append(idx[s])
                        c.append(idx[d])
        g = sp.csr_matrix((np.ones(len(r)), (r, c)), shape=(len(nodes), len(nodes)))
        _, comp = connected_components(g, directed=True, connection="strong")
        compof = {s: comp[idx[s]] for s in nodes}
        changed = len(nodes) != len(candidate)
        for s in nodes:
            keep = [ci for ci in stay[s]
                    if all(compof.get(d) == compof[s] for d, _ in sub.choices[s][ci])]
            if len(keep) != len(stay[s]):
                stay[s] = keep
                changed = True
        candidate = set(nodes)
        if not changed:
            break
    groups: dict[int, list[int]] = {}
    for s in candidate:
        groups.setdefault(compof[s], []).append(s)
    mecs = []
    for members in groups.values():
        mem = set(members)
        exits = []
        for s in members:
            base = arr.starts[arr.pos[s]]
            for ci, dist in enumerate(sub.choices[s]):
                if not all(d in mem for d, _ in dist):
                    exits.append(base + ci)
        mecs.append((np.asarray([arr.pos[s] for s in members], dtype=np.intp),
                     np.asarray(exits, dtype=np.intp)))
    return mecs


# -- MDPs --------------------------------------------------------------------


def _mdp_reach(m, label, mode, method, exact_threshold, epsilon):
    sub = _Sub(m, label)
    all_states = set(range(sub.n))
    if mode == "max":
        s0 = all_states - sub.backward(sub.target)
        s1 = _prob1e(sub, all_states)
    else:
        s0 = all_states - sub.backward(sub.target, exists=False)
        s1 = all_states - sub.backward(s0, blocked=sub.target)
    if sub.init in s1:
        return Fraction(1), True
    if sub.init in s0:
        return Fraction(0), True
    unknown = all_states - s0 - s1
    if method == "exact" or (method == "auto" and len(unknown) <= exact_threshold):
        return _policy_iteration(sub, s1, unknown, mode), True
    lo, hi = _interval_iteration(sub, s1, unknown, mode, epsilon)
    return (lo + hi) / 2, False


def _prob1e(sub: _Sub, all_states):
    """States that can reach the target with probability 1 under some scheduler."""
    region = set(all_states)
    while True:
        def inside(s, dist, _r=frozenset(region)):
            return all(d in _r for d, _ in dist)

        new = sub.backward(sub.target & region, restrict=region, allowed=inside)
        if new == region:
            return region
        region = new


def _policy_iteration(sub: _Sub, s1, unknown, mode) -> Fraction:
    policy = [0] * sub.n
    better = (lambda a, b: a > b) if mode == "max" else (lambda a, b: a < b)
    while True:
        x = _evaluate_policy(sub, policy, s1, unknown)
        changed = False
        for s in unknown:
            cur = x[s]
            best_i, best_v = policy[s], cur
            for i, dist in enumerate(sub.choices[s]):
                v = sum((p * x.get(d, 0) for d, p in dist), Fraction(0))
                if better(v, best_v):
                    best_i, best_v = i, v
            if best_i != policy[s]:
                policy[s] = best_i
                changed = True
        if not changed:
            return x[sub.init]


def _evaluate_policy(sub: _Sub, policy, s1, unknown) -> dict[int, Fraction]:
    # states that cannot reach s1 under the policy have value 0
    alive = set(s1)
    queue = deque(s1)
    preds: dict[int, list[int]] = {}
    for s in unknown:
        for d, _ in sub.choices[s][policy[s]]:
            preds.setdefault(d, []).append(s)
    while queue:
        t = queue.popleft()
        for s in preds.get(t, ()):
            if s not in alive:
                alive.add(s)
                queue.append(s)
    live = {s for s in unknown if s in alive}
    x = _solve_exact(sub, policy, s1, live) if live else {s: Fraction(1) for s in s1}
    for s in unknown - live:
        x[s] = Fraction(0)
    return x
