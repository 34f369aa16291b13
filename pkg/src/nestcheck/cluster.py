"""Generators for the cluster-security case study.

Each node starts ``safe``; it may be hacked (``compromised``), then either
patched back to ``safe`` or ``isolated``; an isolated node is recovered to
``safe`` or stays isolated, which takes it offline. The cluster is
critical when at least ``critical_fraction`` of its nodes are offline.

Two encodings of the same question are produced:

* nested: a node-level meta model checked once per node type, whose
  results instantiate a cluster-level meta model over (node index, down
  count) states, O(N^2) states;
* flattened: one DTMC that inlines every node's dynamics and records each
  node's outcome in the state, O(2^N) states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from importlib import resources
from pathlib import Path

WEIGHT_SCALE = 1000
FLAT_SAFETY_BOUND = 22
_WEIGHT_KEYS = ("hack", "patch", "isolate", "recover", "stay")


@dataclass(frozen=True)
class NodeWeights:
    """Per-mille transition weights of one node type."""

    hack: int
    patch: int
    isolate: int
    recover: int
    stay: int

    def __post_init__(self):
        for k in _WEIGHT_KEYS:
            v = getattr(self, k)
            if not isinstance(v, int) or not 0 <= v <= WEIGHT_SCALE:
                raise ValueError(f"{k} must be an integer in [0, {WEIGHT_SCALE}], got {v!r}")
        if self.patch + self.isolate != WEIGHT_SCALE:
            raise ValueError(f"patch + isolate must equal {WEIGHT_SCALE}")
        if self.recover + self.stay != WEIGHT_SCALE:
            raise ValueError(f"recover + stay must equal {WEIGHT_SCALE}")
        if self.hack == WEIGHT_SCALE and (self.isolate == 0 or self.stay == 0):
            # neither ok nor down is reachable: the node never resolves, and
            # the nested and flattened encodings would disagree
            raise ValueError("node never resolves: with hack = 1000, isolate and stay must be positive")

    @property
    def nohack(self) -> int:
        return WEIGHT_SCALE - self.hack

    def bindings(self) -> dict[str, int]:
        return {"hack": self.hack, "nohack": self.nohack, "patch": self.patch,
                "isolate": self.isolate, "recover": self.recover, "stay": self.stay}


@dataclass(frozen=True)
class ClusterParams:
    nodes: int
    normal: NodeWeights
    premium: NodeWeights
    critical_fraction: Fraction = field(default=Fraction(1, 2))

    def __post_init__(self):
        if self.nodes < 1:
            raise ValueError("nodes must be positive")
        object.__setattr__(self, "critical_fraction", Fraction(self.critical_fraction))
        if not 0 < self.critical_fraction <= 1:
            raise ValueError("critical_fraction must be in (0, 1]")

    @property
    def normal_count(self) -> int:
        return (4 * self.nodes) // 5

    @property
    def premium_count(self) -> int:
        return self.nodes - self.normal_count

    @property
    def threshold(self) -> int:
        """Minimum number of offline nodes that makes the cluster critical."""
        return math.ceil(self.critical_fraction * self.nodes)

    def node_type(self, i: int) -> str:
        return "normal" if i < self.normal_count else "premium"

    def weights(self, i: int) -> NodeWeights:
        return self.normal if i < self.normal_count else self.premium

    def with_nodes(self, n: int) -> "ClusterParams":
        return replace(self, nodes=n)


def parse_params(text: str, nodes: int = 8) -> ClusterParams:
    """Read ``key = value`` lines (``normal.hack = 300``, ``critical_fraction = 1/2``)."""
    values: dict[str, dict[str, int]] = {"normal": {}, "premium": {}}
    fraction = Fraction(1, 2)
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "critical_fraction":
            fraction = Fraction(value)
        elif key == "nodes":
            nodes = int(value)
        else:
            kind, _, name = key.partition(".")
            if kind not in values or name not in _WEIGHT_KEYS:
                raise ValueError(f"line {lineno}: unknown parameter {key!r}")
            values[kind][name] = int(value)
    for kind, ws in values.items():
        missing = set(_WEIGHT_KEYS) - ws.keys()
        if missing:
            raise ValueError(f"missing {kind} weights: {', '.join(sorted(missing))}")
    return ClusterParams(nodes, NodeWeights(**values["normal"]), NodeWeights(**values["premium"]), fraction)


def load_params(path: str | Path | None = None, nodes: int = 8) -> ClusterParams:
    if path is None:
        text = resources.files("nestcheck").joinpath("data/cluster_defaults.params").read_text()
    else:
        text = Path(path).read_text()
    return parse_params(text, nodes)


def default_params(nodes: int = 8) -> ClusterParams:
    return load_params(None, nodes)


# -- nested encoding ---------------------------------------------------------


def generate_node_model(weights: NodeWeights | None = None) -> str:
    """Node-level DTMC template; weights are placeholders so one file serves every node type.

    ``weights`` only annotates the header comment.
    """
    head = "# node level: safe / compromised / isolated, absorbing ok and down\n"
    if weights is not None:
        head += "# example arguments: " + ", ".join(f"{k}={v}" for k, v in weights.bindings().items()) + "\n"
    return head + (
        "kind dtmc\n"
        "init safe\n"
        "label ok ok\n"
        "label down down\n"
        "trans safe compromised [hack]\n"
        "trans safe ok [nohack]\n"
        "trans compromised safe [patch]\n"
        "trans compromised isolated [isolate]\n"
        "trans isolated safe [recover]\n"
        "trans isolated down [stay]\n"
        "trans ok ok 1\n"
        "trans down down 1\n"
    )


def cluster_state(i: int, k: int) -> str:
    return f"n{i}_{k}"


def generate_cluster_model(params: ClusterParams) -> str:
    """Cluster-level DTMC template over (node index, down count).

    Node ``i`` goes down with weight ``[p_normal]`` or ``[p_premium]`` and
    stays up with ``[ok_normal]`` or ``[ok_premium]``; only the placeholders
    of node types that occur are used.
    """
    n = params.nodes
    lines = [
        f"# cluster level: {n} nodes ({params.normal_count} normal, {params.premium_count} premium), "
        f"critical when at least {params.threshold} are down",
        "kind dtmc",
        f"init {cluster_state(0, 0)}",
        "label critical " + " ".join(cluster_state(n, k) for k in range(params.threshold, n + 1)),
    ]
    for i in range(n):
        kind = params.node_type(i)
        for k in range(i + 1):
            lines.append(f"trans {cluster_state(i, k)} {cluster_state(i + 1, k + 1)} [p_{kind}]")
            lines.append(f"trans {cluster_state(i, k)} {cluster_state(i + 1, k)} [ok_{kind}]")
    for k in range(n + 1):
        lines.append(f"trans {cluster_state(n, k)} {cluster_state(n, k)} 1")
    return "\n".join(lines) + "\n"


def cluster_state_count(nodes: int) -> int:
    return (nodes + 1) * (nodes + 2) // 2


def _node_call(w: NodeWeights) -> str:
    return (f"Node(hack = {w.hack}, nohack = {WEIGHT_SCALE} - {w.hack}, patch = {w.patch}, "
            f"isolate = {w.isolate}, recover = {w.recover}, stay = {w.stay})")


def emit_nested_problem(params: ClusterParams, scale: int = 1000) -> str:
    """Two node-level tasks feeding one cluster-level task.

    ``scale`` must match the scale the problem is checked at, because the
    cluster's "stays up" weights are computed as ``scale - p``.
    """
    binds, args = [], []
    if params.normal_count:
        binds.append(f'pn = mc({_node_call(params.normal)}, "reach down")')
        args += ["p_normal = pn", f"ok_normal = {scale} - pn"]
    if params.premium_count:
        binds.append(f'pp = mc({_node_call(params.premium)}, "reach down")')
        args += ["p_premium = pp", f"ok_premium = {scale} - pp"]
    return (
        f"# {params.nodes}-node cluster, results at scale {scale}\n"
        f"let {(',' + chr(10) + '    ').join(binds)}\n"
        f'in mc(Cluster({", ".join(args)}), "reach critical")\n'
    )


# -- flattened encoding ------------------------------------------------------


def flat_state_count(nodes: int) -> int:
    return 3 * (2**nodes - 1) + 2**nodes


def generate_flattened_model(params: ClusterParams, safety_bound: int = FLAT_SAFETY_BOUND) -> str:
    """One DTMC for the whole cluster, resolving nodes in manager order.

    A state ``i<node>.<phase>.<mask>`` holds the current node, its phase
    (s: safe, c: compromised, x: isolated) and the bit mask of nodes that
    already went down; ``end.<mask>`` is terminal. The state count is
    ``3 * (2^N - 1) + 2^N``.
    """
    n = params.nodes
    if n > safety_bound:
        raise ValueError(
            f"refusing to flatten {n} nodes: the flattened model has {flat_state_count(n):,} states "
            f"(bound is {safety_bound} nodes)")

    def entry(i, mask):
        return f"end.{mask}" if i == n else f"i{i}.s.{mask}"

    crit = [f"end.{mask}" for mask in range(2**n) if bin(mask).count("1") >= params.threshold]
    lines = [
        f"# flattened cluster: {n} nodes, critical when at least {params.threshold} are down",
        "kind dtmc",
        f"init {entry(0, 0)}",
        "label critical " + " ".join(crit),
    ]
    append = lines.append
    for i in range(n):
        w = params.weights(i)
        for mask in range(2**i):
            s, c, x = f"i{i}.s.{mask}", f"i{i}.c.{mask}", f"i{i}.x.{mask}"
            append(f"trans {s} {c} {w.hack}")
            append(f"trans {s} {entry(i + 1, mask)} {w.nohack}")
            append(f"trans {c} {s} {w.patch}")
            append(f"trans {c} {x} {w.isolate}")
            append(f"trans {x} {s} {w.recover}")
            append(f"trans {x} {entry(i + 1, mask | (1 << i))} {w.stay}")
    for mask in range(2**n):
        append(f"trans end.{mask} end.{mask} 1")
    return "\n".join(lines) + "\n"


FLAT_PROBLEM = 'mc(Flat, "reach critical")\n'


def write_cluster_files(params: ClusterParams, out_dir: str | Path, *, scale: int = 1000,
                        flat: bool = True, safety_bound: int = FLAT_SAFETY_BOUND) -> dict[str, Path]:
    """Write Node.mm, Cluster.mm, cluster.nmc and (if allowed) Flat.sm and flat.nmc."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "node": out / "Node.mm",
        "cluster": out / "Cluster.mm",
        "nested_problem": out / "cluster.nmc",
    }
    files["node"].write_text(generate_node_model())
    files["cluster"].write_text(generate_cluster_model(params))
    files["nested_problem"].write_text(emit_nested_problem(params, scale))
    if flat:
        files["flat"] = out / "Flat.sm"
        files["flat"].write_text(generate_flattened_model(params, safety_bound))
        files["flat_problem"] = out / "flat.nmc"
        files["flat_problem"].write_text(FLAT_PROBLEM)
    return files
