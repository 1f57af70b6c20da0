"""Graph ingestion, run configuration and report emission.

Edge-list format (one record per line, ``#`` starts a comment)::

    node <id> [label]       declare a node, optionally labeled
    <u> <v> [cost] [D]      edge, default cost 1.0; ``D`` marks u -> v directed

Node ids are arbitrary whitespace-free tokens. They are numbered ``0..n-1``
in order of first appearance.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .compressor import DEFAULT_STEPS, DEFAULT_T, CompressionReport
from .graph import CONVENTIONS, DEFAULT_DIFF_COST, DEFAULT_SAME_COST, ORIENTED, Edge, Graph, GraphError

log = logging.getLogger(__name__)

REPORT_SCHEMA_ID = "otcompress.report/1"
KEPT_COLOR = "#d62728"
REMOVED_COLOR = "gray"


class ParseError(ValueError):
    """Malformed input; the message carries the source and line number where known."""


# --- configuration ---------------------------------------------------------


@dataclass
class RunConfig:
    k: int | None = None
    k_frac: float | None = None
    lam: float = 1.0
    T: int = DEFAULT_T
    steps: tuple[float, float, float] = DEFAULT_STEPS
    convention: str = ORIENTED
    cost_mode: str = "file"  # or "label"
    same_cost: float = DEFAULT_SAME_COST
    diff_cost: float = DEFAULT_DIFF_COST
    prior_mode: str = "degree"  # or "file"
    seed: int = 0
    refine: bool = False

    def validate(self) -> "RunConfig":
        if self.k is not None and self.k_frac is not None:
            raise ValueError("give either k or k_frac, not both")
        if self.k is not None and self.k < 1:
            raise ValueError(f"k must be at least 1, got {self.k}")
        if self.k_frac is not None and not 0 < self.k_frac <= 1:
            raise ValueError(f"k_frac must lie in (0, 1], got {self.k_frac}")
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if self.T < 1:
            raise ValueError(f"T must be at least 1, got {self.T}")
        if len(self.steps) != 3 or min(self.steps) <= 0:
            raise ValueError(f"steps must be three positive numbers, got {self.steps}")
        if self.convention not in CONVENTIONS:
            raise ValueError(f"convention must be one of {CONVENTIONS}, got {self.convention!r}")
        if self.cost_mode not in ("file", "label"):
            raise ValueError(f"cost_mode must be 'file' or 'label', got {self.cost_mode!r}")
        if self.prior_mode not in ("degree", "file"):
            raise ValueError(f"prior_mode must be 'degree' or 'file', got {self.prior_mode!r}")
        return self

    def resolve_k(self, n: int) -> int:
        """Budget for a graph with ``n`` nodes; a fraction rounds up and everything caps at ``n``."""
        if self.k_frac is not None:
            return max(1, min(n, math.ceil(self.k_frac * n - 1e-12)))
        if self.k is None:
            raise ValueError("no budget: set k or k_frac")
        return min(self.k, n)


def _parse_value(name: str, raw: str):
    kinds = {f.name: f.type for f in fields(RunConfig)}
    kind = kinds[name]
    if name == "steps":
        parts = [p for p in re.split(r"[,\s]+", raw.strip()) if p]
        return tuple(float(p) for p in parts)
    if raw.strip().lower() in ("none", ""):
        return None
    if kind == "bool":
        low = raw.strip().lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"expected a boolean, got {raw.strip()!r}")
        return low in ("true", "1", "yes")
    if "int" in kind:
        return int(raw)
    if "float" in kind:
        return float(raw)
    return raw.strip()


CONFIG_KEYS = {"lambda": "lam"}


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    """Read ``key = value`` lines (``#`` comments) on top of ``base``.

    Keys are the :class:`RunConfig` field names, with ``lambda`` accepted for ``lam``.
    """
    cfg = asdict(base or RunConfig())
    names = {f.name for f in fields(RunConfig)}
    text = Path(path).read_text()
    for no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"{path}:{no}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = CONFIG_KEYS.get(key, key)
        if key not in names:
            raise ParseError(f"{path}:{no}: unknown key {key!r}")
        try:
            cfg[key] = _parse_value(key, raw)
        except ValueError as exc:
            raise ParseError(f"{path}:{no}: bad value for {key}: {exc}") from None
    cfg["steps"] = tuple(cfg["steps"])
    return RunConfig(**cfg)


# --- graph bundles -----------------------------------------------------------


@dataclass
class GraphBundle:
    graphs: list[Graph]
    ids: list[str]
    name: str = "graphs"
    graph_labels: list[str] | None = None
    skipped: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.graphs)

    def __iter__(self):
        return iter(zip(self.ids, self.graphs))


def _read_text(source) -> tuple[str, str]:
    if isinstance(source, (bytes, bytearray)):
        return bytes(source).decode("utf-8", errors="replace"), "<bytes>"
    path = Path(source)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from None
    return data.decode("utf-8", errors="replace"), str(path)


def parse_edgelist_text(text: str, source: str = "<text>") -> Graph:
    ids: dict[str, int] = {}
    labels: dict[int, str] = {}
    edges: list[Edge] = []

    def node(tok: str) -> int:
        if tok not in ids:
            ids[tok] = len(ids)
        return ids[tok]

    for no, raw in enumerate(text.splitlines(), 1):
        toks = raw.split("#", 1)[0].split()
        if not toks:
            continue
        where = f"{source}:{no}"
        if toks[0] == "node":
            if not 2 <= len(toks) <= 3:
                raise ParseError(f"{where}: expected 'node <id> [label]'")
            v = node(toks[1])
            if len(toks) == 3:
                if v in labels and labels[v] != toks[2]:
                    raise ParseError(f"{where}: node {toks[1]} relabeled")
                labels[v] = toks[2]
            continue
        if not 2 <= len(toks) <= 4:
            raise ParseError(f"{where}: expected '<u> <v> [cost] [D]', got {len(toks)} fields")
        directed = False
        rest = toks[2:]
        if rest and rest[-1] == "D":
            directed = True
            rest = rest[:-1]
        if len(rest) > 1:
            raise ParseError(f"{where}: unexpected field {rest[1]!r}")
        cost = 1.0
        if rest:
            try:
                cost = float(rest[0])
            except ValueError:
                raise ParseError(f"{where}: cost {rest[0]!r} is not a number") from None
            if not (math.isfinite(cost) and cost > 0):
                raise ParseError(f"{where}: cost must be positive and finite, got {rest[0]}")
        if toks[0] == toks[1]:
            raise ParseError(f"{where}: self-loop on {toks[0]}")
        edges.append(Edge(node(toks[0]), node(toks[1]), cost, directed))

    if not ids:
        raise ParseError(f"{source}: no nodes")
    lab = None
    if labels:
        lab = tuple(labels.get(v) for v in range(len(ids)))
    try:
        return Graph(len(ids), tuple(edges), lab)
    except GraphError as exc:
        raise ParseError(f"{source}: {exc}") from None


def parse_edgelist(source) -> Graph:
    """Parse an edge-list file (path) or raw bytes."""
    text, name = _read_text(source)
    return parse_edgelist_text(text, name)


def emit_edgelist(graph: Graph) -> str:
    lines = []
    for v in range(graph.n):
        lab = graph.labels[v] if graph.labels is not None else None
        if lab is not None and (not str(lab) or re.search(r"[\s#]", str(lab))):
            raise ValueError(f"label {lab!r} of node {v} cannot be written as a single token")
        lines.append(f"node {v}" if lab is None else f"node {v} {lab}")
    for e in graph.edges:
        line = f"{e.u} {e.v} {e.cost!r}"
        lines.append(line + " D" if e.directed else line)
    return "\n".join(lines) + "\n"


def _read_ints(path: Path, name: str, width: int) -> np.ndarray:
    rows = []
    for no, line in enumerate(path.read_text().splitlines(), 1):
        parts = [p for p in re.split(r"[,\s]+", line.strip()) if p]
        if not parts:
            continue
        if len(parts) != width:
            raise ParseError(f"{path}:{no}: expected {width} integer(s) in {name}")
        try:
            rows.append([int(p) for p in parts])
        except ValueError:
            raise ParseError(f"{path}:{no}: non-integer entry in {name}") from None
    return np.array(rows, dtype=np.int64).reshape(-1, width)


def parse_tudataset(directory) -> GraphBundle:
    """Read a TUDataset-style directory into one graph per indicator value.

    Edge endpoints are 1-indexed global node ids. Reversed duplicates merge
    into one undirected edge of cost 1; graphs whose skeleton is disconnected
    are skipped and listed in ``bundle.skipped``.
    """
    d = Path(directory)
    found = sorted(d.glob("*_A.txt"))
    if len(found) != 1:
        raise ParseError(f"{d}: expected exactly one *_A.txt file, found {len(found)}")
    name = found[0].name[: -len("_A.txt")]
    ind_path = d / f"{name}_graph_indicator.txt"
    if not ind_path.exists():
        raise ParseError(f"{d}: missing {ind_path.name}")
    A = _read_ints(found[0], "adjacency", 2)
    indicator = _read_ints(ind_path, "graph indicator", 1)[:, 0]
    n_total = indicator.size
    lab_path = d / f"{name}_node_labels.txt"
    node_labels = None
    if lab_path.exists():
        node_labels = _read_ints(lab_path, "node labels", 1)[:, 0]
        if node_labels.size != n_total:
            raise ParseError(f"{lab_path}: {node_labels.size} labels for {n_total} nodes")
    glab_path = d / f"{name}_graph_labels.txt"
    graph_labels_all = None
    if glab_path.exists():
        graph_labels_all = [s.strip() for s in glab_path.read_text().splitlines() if s.strip()]

    if A.size and (A.min() < 1 or A.max() > n_total):
        raise ParseError(f"{found[0]}: node id outside 1..{n_total}")
    gids = list(dict.fromkeys(int(g) for g in indicator))
    if gids != sorted(gids):
        raise ParseError(f"{ind_path}: graph ids must be non-decreasing")
    members: dict[int, list[int]] = {}
    for v, g in enumerate(indicator):
        members.setdefault(int(g), []).append(v)
    local = np.zeros(n_total, dtype=np.int64)
    for nodes in members.values():
        local[nodes] = np.arange(len(nodes))

    pairs: dict[int, dict[tuple[int, int], None]] = {g: {} for g in gids}
    for a, b in A - 1:
        ga, gb = int(indicator[a]), int(indicator[b])
        if ga != gb:
            raise ParseError(f"{found[0]}: edge ({a + 1}, {b + 1}) joins graphs {ga} and {gb}")
        if a == b:
            continue
        key = (int(min(local[a], local[b])), int(max(local[a], local[b])))
        pairs[ga][key] = None

    graphs, ids, glabels, skipped = [], [], [], []
    for pos, g in enumerate(gids):
        nodes = members[g]
        labels = None if node_labels is None else tuple(str(int(node_labels[v])) for v in nodes)
        try:
            graph = Graph(len(nodes), tuple(Edge(u, v) for u, v in pairs[g]), labels)
        except GraphError as exc:
            log.warning("skipping graph %d: %s", g, exc)
            skipped.append(str(g))
            continue
        graphs.append(graph)
        ids.append(str(g))
        if graph_labels_all is not None and pos < len(graph_labels_all):
            glabels.append(graph_labels_all[pos])
    if skipped:
        log.warning("skipped %d graph(s) with disconnected skeletons", len(skipped))
    return GraphBundle(graphs, ids, name, glabels if graph_labels_all is not None else None, skipped)


def write_tudataset(directory, name: str, graphs, graph_labels=None) -> Path:
    """Write ``(n, edges, labels)`` triples in the TUDataset layout; edges appear in both directions."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    a_lines, ind_lines, lab_lines = [], [], []
    offset = 0
    have_labels = all(labels is not None for _, _, labels in graphs)
    for gi, (n, edges, labels) in enumerate(graphs, 1):
        ind_lines.extend([str(gi)] * n)
        for u, v in edges:
            a_lines.append(f"{u + offset + 1}, {v + offset + 1}")
            a_lines.append(f"{v + offset + 1}, {u + offset + 1}")
        if have_labels:
            lab_lines.extend(str(x) for x in labels)
        offset += n
    (d / f"{name}_A.txt").write_text("".join(s + "\n" for s in a_lines))
    (d / f"{name}_graph_indicator.txt").write_text("".join(s + "\n" for s in ind_lines))
    if have_labels:
        (d / f"{name}_node_labels.txt").write_text("".join(s + "\n" for s in lab_lines))
    if graph_labels is not None:
        (d / f"{name}_graph_labels.txt").write_text("".join(f"{s}\n" for s in graph_labels))
    return d


def read_vector(text: str) -> np.ndarray:
    """Numbers separated by commas or whitespace."""
    parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
    try:
        return np.array([float(p) for p in parts])
    except ValueError as exc:
        raise ParseError(f"bad number list: {exc}") from None


# --- synthetic graphs ------------------------------------------------------------


FIG2_HEAVY = ((1, 8), (2, 11), (2, 12), (3, 14), (3, 15), (3, 16), (4, 17), (4, 18), (4, 19), (4, 20))


def make_fig2_tree() -> Graph:
    """4-ary tree of depth 2: root 0, internals 1-4, leaves 5-20 in blocks of four.

    Root edges cost 0.3; internal node ``i`` has ``i`` heavy leaf edges (0.5),
    the remaining leaf edges are light (0.1).
    """
    heavy = set(FIG2_HEAVY)
    edges = [(0, i, 0.3) for i in range(1, 5)]
    for i in range(1, 5):
        for leaf in range(4 * i + 1, 4 * i + 5):
            edges.append((i, leaf, 0.5 if (i, leaf) in heavy else 0.1))
    return Graph.from_edges(21, edges)


# --- reports -----------------------------------------------------------------------


_NUM = {"type": "number"}
_NUMS = {"type": "array", "items": _NUM}
_IDS = {"type": "array", "items": {"type": "integer", "minimum": 0}}

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": [
        "schema", "n", "k", "lambda", "T", "steps", "convention", "selected", "support",
        "rho1", "epsilon_avg", "objective_trace", "certificate", "transport_cost",
        "objective_value", "recovery", "kept_edges", "tight",
    ],
    "properties": {
        "schema": {"const": REPORT_SCHEMA_ID},
        "graph_id": {"type": "string"},
        "n": {"type": "integer", "minimum": 1},
        "k": {"type": "integer", "minimum": 1},
        "lambda": {"type": "number", "exclusiveMinimum": 0},
        "T": {"type": "integer", "minimum": 1},
        "steps": {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3},
        "convention": {"enum": list(CONVENTIONS)},
        "selected": _IDS,
        "support": _IDS,
        "rho1": _NUMS,
        "epsilon_avg": _NUMS,
        "objective_trace": _NUMS,
        "certificate": {
            "type": "object",
            "required": ["status"],
            "properties": {
                "status": {"enum": ["exact", "not-certified", "skipped"]},
                "gamma": _NUM,
                "margin": _NUM,
                "reason": {"type": "string"},
            },
        },
        "transport_cost": _NUM,
        "objective_value": _NUM,
        "recovery": {
            "type": "object",
            "required": ["raw_mass", "degenerate", "resolved"],
            "properties": {
                "raw_mass": _NUM,
                "degenerate": {"type": "boolean"},
                "resolved": {"type": "boolean"},
            },
        },
        "kept_edges": _IDS,
        "tight": {"type": "boolean"},
        "wall_time": _NUM,
    },
    "additionalProperties": False,
}


def _floats(a) -> list[float]:
    return [float(x) for x in np.asarray(a, dtype=float)]


def report_to_dict(report: CompressionReport, graph_id: str | None = None, timings: bool = False) -> dict:
    """JSON-ready view of a report; ``wall_time`` only when ``timings`` is set, keeping output reproducible."""
    cert = report.certificate
    if cert is None:
        c = {"status": "skipped"}
    elif cert.exact:
        c = {"status": "exact", "gamma": float(cert.gamma), "margin": float(cert.margin)}
    else:
        c = {"status": "not-certified", "reason": cert.reason}
    out = {"schema": REPORT_SCHEMA_ID}
    if graph_id is not None:
        out["graph_id"] = str(graph_id)
    out.update(
        n=report.n,
        k=report.k,
        **{"lambda": float(report.lam)},
        T=report.T,
        steps=_floats(report.steps),
        convention=report.convention,
        selected=list(report.selected),
        support=list(report.support),
        rho1=_floats(report.rho1),
        epsilon_avg=_floats(report.epsilon_avg),
        objective_trace=_floats(report.objective_trace),
        certificate=c,
        transport_cost=float(report.transport_cost),
        objective_value=float(report.objective_value),
        recovery={
            "raw_mass": float(report.recovery.raw_mass),
            "degenerate": bool(report.recovery.degenerate),
            "resolved": bool(report.recovery.resolved),
        },
        kept_edges=list(report.kept_edges),
        tight=bool(report.tight),
    )
    if timings:
        out["wall_time"] = float(report.wall_time)
    return out


def validate_report(data: dict) -> None:
    import jsonschema

    jsonschema.validate(data, REPORT_SCHEMA)


def dumps_json(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True, allow_nan=False) + "\n"


def report_to_dot(report: CompressionReport, graph: Graph, name: str = "compressed") -> str:
    """Graphviz rendering: kept nodes and edges in color, everything removed in gray."""
    keep = set(report.support)
    kept_edges = set(report.kept_edges)
    lines = [f'digraph "{name}" {{', "  node [shape=circle, style=filled, fillcolor=white];"]
    for v in range(graph.n):
        if v in keep:
            lines.append(f'  {v} [color="{KEPT_COLOR}", fontcolor="black", penwidth=2];')
        else:
            lines.append(f'  {v} [color="{REMOVED_COLOR}", fontcolor="{REMOVED_COLOR}"];')
    for i, e in enumerate(graph.edges):
        color = KEPT_COLOR if i in kept_edges else REMOVED_COLOR
        arrow = "" if e.directed else ", dir=none"
        lines.append(f'  {e.u} -> {e.v} [color="{color}", label="{e.cost:g}"{arrow}];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def emit_report(
    report: CompressionReport,
    path,
    fmt: str = "json",
    graph: Graph | None = None,
    graph_id: str | None = None,
    timings: bool = False,
) -> str:
    """Render ``report`` as JSON or DOT and write it to ``path`` (``None`` or ``-`` to skip writing)."""
    if fmt == "json":
        data = report_to_dict(report, graph_id, timings)
        validate_report(data)
        text = dumps_json(data)
    elif fmt == "dot":
        if graph is None:
            raise ValueError("DOT output needs the graph")
        text = report_to_dot(report, graph)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    if path not in (None, "-"):
        try:
            Path(path).write_text(text)
        except OSError as exc:
            raise OSError(f"cannot write report to {path}: {exc.strerror}") from None
    return text
