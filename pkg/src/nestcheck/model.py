"""Explicit finite-state models and the line-oriented ``.sm`` format.

A document looks like::

    kind dtmc
    init s0
    label goal s1
    trans s0 s1 1
    trans s0 s2 1

States are declared implicitly on first mention and receive dense integer
ids in that order. DTMC and MDP weights are nonnegative integers normalised
per state (DTMC) or per state/action pair (MDP).
"""

from __future__ import annotations

import enum
import hashlib
import re
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import Iterable, NamedTuple

from .errors import ModelFormatError

__all__ = [
    "Kind",
    "Transition",
    "Placeholder",
    "StandardModel",
    "parse_model",
    "serialize",
    "reachable_states",
    "deadlock_states",
    "canonical_hash",
]

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_.]*\Z")
_TOKEN_RE = re.compile(r"\S+")
_INT_RE = re.compile(r"-?[0-9]+\Z")
_PLACEHOLDER_RE = re.compile(r"\[([A-Za-z_][A-Za-z0-9_]*)\]\Z")

# whole-line patterns for well-formed weighted transitions; anything else
# takes the token-by-token path, which produces the error messages
_N = r"([A-Za-z_][A-Za-z0-9_.]*)"
_W = r"(?:([0-9]+)|\[([A-Za-z_][A-Za-z0-9_]*)\])"
_FAST_TRANS = {
    "dtmc": re.compile(rf"\s*trans\s+{_N}\s+{_N}\s+{_W}\s*(?:#.*)?\Z"),
    "mdp": re.compile(rf"\s*trans\s+{_N}\s+{_N}\s+{_N}\s+{_W}\s*(?:#.*)?\Z"),
}


class Kind(enum.Enum):
    LTS = "lts"
    DTMC = "dtmc"
    MDP = "mdp"


class Transition(NamedTuple):
    src: int
    action: str | None
    weight: int | None
    dst: int


class Placeholder(NamedTuple):
    """An ``[id]`` token standing in for an integer weight."""

    name: str


@dataclass(frozen=True)
class StandardModel:
    kind: Kind
    states: tuple[str, ...]
    init: int
    labels: dict[str, frozenset[int]] = field(default_factory=dict)
    transitions: tuple[Transition, ...] = ()

    def __post_init__(self):
        _validate(self)

    def __getstate__(self):
        # drop cached_property values; they are cheap to rebuild
        return {k: self.__dict__[k] for k in ("kind", "states", "init", "labels", "transitions")}

    def __setstate__(self, state):
        self.__dict__.update(state)

    @property
    def num_states(self) -> int:
        return len(self.states)

    def state_id(self, name: str) -> int:
        return self._index[name]

    @cached_property
    def _index(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.states)}

    @cached_property
    def successors(self) -> tuple[tuple[int, ...], ...]:
        """Per state, the targets of transitions that are present (weight != 0)."""
        out: list[set[int]] = [set() for _ in self.states]
        for t in self.transitions:
            if t.weight != 0:
                out[t.src].add(t.dst)
        return tuple(tuple(sorted(s)) for s in out)

    @cached_property
    def choices(self) -> tuple[tuple[tuple[str | None, tuple[tuple[int, Fraction], ...]], ...], ...]:
        """Per state, the enabled (action, distribution) pairs.

        Groups whose total weight is zero are dropped, so a state whose
        transitions all carry weight 0 has no choices. LTS transitions are
        given a uniform distribution per action, which only matters for
        graph queries.
        """
        groups: list[dict] = [{} for _ in self.states]
        for t in self.transitions:
            w = 1 if t.weight is None else t.weight
            if w == 0:
                continue
            key = None if self.kind is Kind.DTMC else t.action
            dist = groups[t.src].setdefault(key, {})
            dist[t.dst] = dist.get(t.dst, 0) + w
        result = []
        prob = _probability
        for by_action in groups:
            if len(by_action) > 1:
                actions = sorted(by_action, key=lambda a: "" if a is None else a)
            else:
                actions = list(by_action)
            state_choices = []
            for action in actions:
                dist = by_action[action]
                total = sum(dist.values())
                items = sorted(dist.items()) if len(dist) > 1 else dist.items()
                state_choices.append((action, tuple([(dst, prob(w, total)) for dst, w in items])))
            result.append(tuple(state_choices))
        return tuple(result)

    def label_states(self, label: str) -> frozenset[int]:
        return self.labels[label]

    def normalized(self) -> tuple:
        """Name-based canonical structure, independent of declaration order."""
        names = self.states
        labels = tuple(sorted((lab, tuple(sorted(names[s] for s in ss))) for lab, ss in self.labels.items()))
        trans = tuple(
            sorted(
                (names[t.src], t.action or "", -1 if t.weight is None else t.weight, names[t.dst])
                for t in self.transitions
            )
        )
        return (self.kind.value, names[self.init], tuple(sorted(names)), labels, trans)


@lru_cache(maxsize=4096)
def _probability(weight: int, total: int) -> Fraction:
    return Fraction(weight, total)


def _validate(m: StandardModel) -> None:
    n = len(m.states)
    if not 0 <= m.init < n:
        raise ModelFormatError(f"initial state id {m.init} out of range")
    for lab, ss in m.labels.items():
        for s in ss:
            if not 0 <= s < n:
                raise ModelFormatError(f"label {lab!r} references unknown state id {s}")
    for t in m.transitions:
        if not (0 <= t.src < n and 0 <= t.dst < n):
            raise ModelFormatError(f"transition {t} references an unknown state")
        if m.kind is Kind.LTS:
            if t.weight is not None:
                raise ModelFormatError("LTS transitions carry no weight")
        elif t.weight is None:
            raise ModelFormatError(f"{m.kind.value} transitions need a weight")
        elif t.weight < 0:
            raise ModelFormatError(f"negative weight {t.weight}")
        if m.kind is Kind.DTMC and t.action is not None:
            raise ModelFormatError("DTMC transitions carry no action")
        if m.kind is Kind.MDP and t.action is None:
            raise ModelFormatError("MDP transitions need an action")


# -- text format -------------------------------------------------------------


class Statement(NamedTuple):
    """One parsed line. ``weight`` may be a :class:`Placeholder` in templates."""

    keyword: str
    args: tuple
    line: int


def _err(msg, line, col=None, source=None):
    return ModelFormatError(msg, line=line, column=col, source=source)


def parse_statements(text: str, *, allow_placeholders: bool = False, source: str | None = None):
    """Tokenize a ``.sm``/``.mm`` document into (kind, statements).

    Checks line shapes against the declared kind. Weights are ints, or
    :class:`Placeholder` when ``allow_placeholders`` is set.
    """
    kind = None
    fast = None
    stmts: list[Statement] = []
    append = stmts.append
    for lineno, raw in enumerate(text.splitlines(), 1):
        if fast is not None:
            m = fast(raw)
            if m is not None:
                g = m.groups()
                if len(g) == 4:
                    src, dst, num, ph = g
                    action = None
                else:
                    src, action, dst, num, ph = g
                if ph is None:
                    weight = int(num)
                elif allow_placeholders:
                    weight = Placeholder(ph)
                else:
                    weight = None  # fall through to the detailed error
                if weight is not None:
                    append(Statement("trans", (src, action, weight, dst), lineno))
                    continue
        line = raw.split("#", 1)[0]
        toks = line.split()
        if not toks:
            continue

        def col(i, _line=line):
            # only computed on the error path
            return [m.start() + 1 for m in _TOKEN_RE.finditer(_line)][i]

        head = toks[0]
        if kind is None:
            if head != "kind":
                raise _err("first statement must be 'kind lts|dtmc|mdp'", lineno, 1, source)
            if len(toks) != 2:
                raise _err("expected 'kind lts|dtmc|mdp'", lineno, 1, source)
            try:
                kind = Kind(toks[1])
            except ValueError:
                raise _err(f"unknown model kind {toks[1]!r}", lineno, col(1), source) from None
            pattern = _FAST_TRANS.get(kind.value)
            fast = pattern.match if pattern else None
            continue

        def name_at(i):
            tok = toks[i]
            if tok.startswith("["):
                raise _err(f"placeholder {tok} not allowed here (only weights may be placeholders)",
                           lineno, col(i), source)
            if not _NAME_RE.match(tok):
                raise _err(f"invalid name {tok!r}", lineno, col(i), source)
            return tok

        def weight_at(i):
            tok = toks[i]
            if tok.startswith("["):
                m = _PLACEHOLDER_RE.match(tok)
                if not m:
                    raise _err(f"malformed placeholder {tok!r}", lineno, col(i), source)
                if not allow_placeholders:
                    raise _err(f"placeholder {tok} in a standard model", lineno, col(i), source)
                return Placeholder(m.group(1))
            if not _INT_RE.match(tok):
                raise _err(f"expected integer weight, got {tok!r}", lineno, col(i), source)
            w = int(tok)
            if w < 0:
                raise _err(f"negative weight {w}", lineno, col(i), source)
            return w

        n = len(toks) - 1
        if head == "kind":
            raise _err("duplicate 'kind' statement", lineno, 1, source)
        elif head == "init":
            if n != 1:
                raise _err("expected 'init <state>'", lineno, 1, source)
            stmts.append(Statement("init", (name_at(1),), lineno))
        elif head == "label":
            if n < 2:
                raise _err("expected 'label <name> <state> [<state> ...]'", lineno, 1, source)
            stmts.append(Statement("label", tuple(name_at(i) for i in range(1, n + 1)), lineno))
        elif head == "trans":
            if kind is Kind.LTS:
                if n == 2:
                    args = (name_at(1), None, None, name_at(2))
                elif n == 3:
                    args = (name_at(1), name_at(2), None, name_at(3))
                else:
                    raise _err("LTS transition: 'trans <src> [<action>] <dst>'", lineno, 1, source)
            elif kind is Kind.DTMC:
                if n != 3:
                    raise _err("DTMC transition: 'trans <src> <dst> <weight>'", lineno, 1, source)
                args = (name_at(1), None, weight_at(3), name_at(2))
            else:
                if n != 4:
                    raise _err("MDP transition: 'trans <src> <action> <dst> <weight>'", lineno, 1, source)
                args = (name_at(1), name_at(2), weight_at(4), name_at(3))
            stmts.append(Statement("trans", args, lineno))
        else:
            raise _err(f"unknown statement {head!r}", lineno, 1, source)
    if kind is None:
        raise _err("empty model: missing 'kind' statement", 1, 1, source)
    return kind, stmts


def build_model(kind: Kind, stmts: Iterable[Statement], *, source: str | None = None) -> StandardModel:
    """Assemble a validated model from statements whose weights are all ints."""
    index: dict[str, int] = {}
    states: list[str] = []

    def sid(name):
        i = index.get(name)
        if i is None:
            i = index[name] = len(states)
            states.append(name)
        return i

    init = None
    labels: dict[str, set[int]] = {}
    merged: dict[tuple, int | None] = {}
    for st in stmts:
        if st.keyword == "init":
            if init is not None:
                raise _err("duplicate init", st.line, 1, source)
            init = sid(st.args[0])
        elif st.keyword == "label":
            labels.setdefault(st.args[0], set()).update(sid(s) for s in st.args[1:])
        else:
            src, action, weight, dst = st.args
            if isinstance(weight, Placeholder):
                raise _err(f"unbound placeholder [{weight.name}]", st.line, None, source)
            key = (sid(src), action, sid(dst))
            if weight is None:
                merged[key] = None
            else:
                merged[key] = merged.get(key, 0) + weight
    if init is None:
        raise _err("missing init statement", None, None, source)
    transitions = tuple(Transition(s, a, w, d) for (s, a, d), w in merged.items())
    return StandardModel(
        kind=kind,
        states=tuple(states),
        init=init,
        labels={k: frozenset(v) for k, v in labels.items()},
        transitions=transitions,
    )


def parse_model(text: str, *, source: str | None = None) -> StandardModel:
    """Parse a ``.sm`` document.

    Raises :class:`ModelFormatError` with line/column on syntax errors,
    negative weights, duplicate ``init`` and kind/shape mismatches.
    """
    kind, stmts = parse_statements(text, source=source)
    return build_model(kind, stmts, source=source)


def serialize(m: StandardModel) -> str:
    names = m.states
    lines = [f"kind {m.kind.value}", f"init {names[m.init]}"]
    for lab in sorted(m.labels):
        lines.append(f"label {lab} " + " ".join(names[s] for s in sorted(m.labels[lab])))
    for t in m.transitions:
        parts = ["trans", names[t.src]]
        if t.action is not None:
            parts.append(t.action)
        parts.append(names[t.dst])
        if t.weight is not None:
            parts.append(str(t.weight))
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


# -- graph queries -----------------------------------------------------------


def reachable_states(m: StandardModel) -> frozenset[int]:
    """Forward closure from the initial state over present transitions."""
    succ = m.successors
    seen = {m.init}
    queue = deque([m.init])
    while queue:
        s = queue.popleft()
        for t in succ[s]:
            if t not in seen:
                seen.add(t)
                queue.append(t)
    return frozenset(seen)


def deadlock_states(m: StandardModel) -> frozenset[int]:
    succ = m.successors
    return frozenset(s for s in reachable_states(m) if not succ[s])


def canonical_hash(m: StandardModel) -> str:
    """Hex sha256 of :meth:`StandardModel.normalized`."""
    return hashlib.sha256(repr(m.normalized()).encode()).hexdigest()
