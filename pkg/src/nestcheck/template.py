"""Meta models: ``.sm`` documents whose weights may be ``[id]`` placeholders."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from .errors import InstantiationError
from .model import Kind, Placeholder, Statement, StandardModel, build_model, parse_statements


@dataclass(frozen=True)
class MetaModel:
    kind: Kind
    statements: tuple[Statement, ...]
    placeholders: frozenset[str]
    source: str | None = None

    @property
    def arity(self) -> int:
        return len(self.placeholders)


def parse_meta(text: str, *, source: str | None = None) -> MetaModel:
    """Parse a ``.mm`` document. Placeholders may only stand for weights."""
    kind, stmts = parse_statements(text, allow_placeholders=True, source=source)
    names = frozenset(
        st.args[2].name for st in stmts if st.keyword == "trans" and isinstance(st.args[2], Placeholder)
    )
    meta = MetaModel(kind, tuple(stmts), names, source)
    if not names:
        # surface structural errors (duplicate init, ...) at load time
        build_model(kind, stmts, source=source)
    return meta


def instantiate(meta: MetaModel, bindings: Mapping[str, int]) -> StandardModel:
    """Substitute every ``[id]`` by its bound value and validate the result.

    The bindings must cover the placeholder set exactly; values must be
    nonnegative integers.
    """
    missing = meta.placeholders - bindings.keys()
    if missing:
        raise InstantiationError(f"unbound placeholder(s): {', '.join(sorted(missing))}")
    extra = bindings.keys() - meta.placeholders
    if extra:
        raise InstantiationError(f"no placeholder named {', '.join(sorted(extra))}")
    for name, value in bindings.items():
        if isinstance(value, bool) or not isinstance(value, int):
            raise InstantiationError(f"argument {name} must be an integer, got {value!r}")
        if value < 0:
            raise InstantiationError(f"argument {name} = {value} is negative; weights must be natural numbers")
    stmts = []
    for st in meta.statements:
        if st.keyword == "trans" and isinstance(st.args[2], Placeholder):
            src, action, ph, dst = st.args
            st = Statement("trans", (src, action, bindings[ph.name], dst), st.line)
        stmts.append(st)
    return build_model(meta.kind, stmts, source=meta.source)
