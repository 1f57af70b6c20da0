"""Command-line front end.

Exit codes: 0 success, 1 input or usage error, 2 solver failure.
The log level comes from ``OTCOMPRESS_LOG_LEVEL`` (default WARNING).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .compressor import SolverError, certify, compress
from .graph import CONVENTIONS, Graph, GraphError, label_costs, stationary_prior
from .io import (
    ParseError,
    RunConfig,
    dumps_json,
    emit_edgelist,
    emit_report,
    load_config,
    make_fig2_tree,
    parse_edgelist,
    parse_edgelist_text,
    parse_tudataset,
    read_vector,
    report_to_dict,
    write_tudataset,
)
from .projections import ProjectionError, project_capped_box, project_diag_simplex, project_slabs
from .transport import TransportError, ot_distance

log = logging.getLogger("otcompress")

EXIT_OK, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _vector(arg: str) -> np.ndarray:
    """Inline list ``0.5,0.5`` or ``@path`` to a file of numbers."""
    if arg.startswith("@"):
        try:
            return read_vector(Path(arg[1:]).read_text())
        except OSError as exc:
            raise ParseError(f"cannot read {arg[1:]}: {exc.strerror}") from None
    return read_vector(arg)


def _load_graph(source: str) -> Graph:
    if source == "-":
        return parse_edgelist_text(sys.stdin.buffer.read().decode("utf-8", errors="replace"), "<stdin>")
    return parse_edgelist(source)


def _write(text: str, out: str | None) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("run configuration (overrides --config)")
    g.add_argument("--config", help="key = value file with RunConfig fields")
    g.add_argument("-k", type=int, help="node budget")
    g.add_argument("--k-frac", type=float, help="budget as ceil(frac * |V|)")
    g.add_argument("--lambda", dest="lam", type=float, help="regularization weight (default 1)")
    g.add_argument("-T", type=int, help="Mirror Prox iterations (default 25)")
    g.add_argument("--steps", type=float, nargs=3, metavar=("ALPHA", "BETA", "GAMMA"))
    g.add_argument("--convention", choices=CONVENTIONS)
    g.add_argument("--cost-mode", choices=("file", "label"))
    g.add_argument("--same-cost", type=float)
    g.add_argument("--diff-cost", type=float)
    g.add_argument("--prior", help="rho0 as inline list or @file; implies prior_mode=file")
    g.add_argument("--seed", type=int)
    g.add_argument("--refine", action="store_true", default=None, help="always re-solve rho1 on the selected nodes")


def _run_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    over = {
        name: getattr(args, name)
        for name in ("k", "k_frac", "lam", "T", "steps", "convention", "cost_mode", "same_cost", "diff_cost", "seed", "refine")
        if getattr(args, name, None) is not None
    }
    if "steps" in over:
        over["steps"] = tuple(over["steps"])
    if "k" in over:
        over.setdefault("k_frac", None)
    elif "k_frac" in over:
        over["k"] = None
    if getattr(args, "prior", None) is not None:
        over["prior_mode"] = "file"
    return replace(cfg, **over).validate()


def _prepare(graph: Graph, cfg: RunConfig, prior_arg: str | None):
    if cfg.cost_mode == "label":
        graph = label_costs(graph, cfg.same_cost, cfg.diff_cost)
    if cfg.prior_mode == "file":
        if prior_arg is None:
            raise ParseError("prior_mode = file needs --prior")
        rho0 = _vector(prior_arg)
    else:
        rho0 = stationary_prior(graph)
    return graph, rho0


def _compress_one(graph: Graph, cfg: RunConfig, rho0, certificate: bool = True):
    return compress(
        graph, rho0, cfg.resolve_k(graph.n), cfg.lam, cfg.T, cfg.steps, cfg.convention,
        run_certificate=certificate, refine=cfg.refine,
    )


# --- subcommands -------------------------------------------------------------


def cmd_compress(args) -> int:
    cfg = _run_config(args)
    source = args.graph
    if source != "-" and Path(source).is_dir():
        bundle = parse_tudataset(source)
        reports = []
        for gid, graph in bundle:
            g, rho0 = _prepare(graph, cfg, None)
            rep = _compress_one(g, cfg, rho0, not args.no_certificate)
            reports.append(report_to_dict(rep, gid, args.timings))
        _write(dumps_json({"graphs": reports, "skipped": bundle.skipped}), args.output)
        return EXIT_OK
    graph, rho0 = _prepare(_load_graph(source), cfg, args.prior)
    rep = _compress_one(graph, cfg, rho0, not args.no_certificate)
    text = emit_report(rep, None, args.format, graph=graph, timings=args.timings)
    _write(text, args.output)
    return EXIT_OK


def cmd_distance(args) -> int:
    graph = _load_graph(args.graph)
    if args.cost_mode == "label":
        graph = label_costs(graph)
    sol = ot_distance(graph, _vector(args.rho0), _vector(args.rho1), args.convention)
    out = {
        "status": sol.status,
        "convention": sol.convention,
        "distance": None if not sol.feasible else sol.primal_value,
        "dual_value": None if not sol.feasible else sol.dual_value,
        "potentials": None if not sol.feasible else [float(x) for x in sol.potentials],
        "jplus": None if not sol.feasible else [float(x) for x in sol.jplus],
        "jminus": None if not sol.feasible else [float(x) for x in sol.jminus],
        "message": sol.message,
    }
    _write(dumps_json(out), args.output)
    return EXIT_OK


def cmd_project(args) -> int:
    y = _vector(args.y)
    if args.kind == "simplex":
        if args.eps is None:
            raise ParseError("simplex projection needs --eps")
        x = project_diag_simplex(y, _vector(args.eps))
    elif args.kind == "capped":
        if args.k is None:
            raise ParseError("capped-box projection needs -k")
        x = project_capped_box(y, args.k)
    else:
        if args.graph is None:
            raise ParseError("slab projection needs --graph")
        x = project_slabs(y, _load_graph(args.graph), args.convention)
    _write(dumps_json({"kind": args.kind, "x": [float(v) for v in x]}), args.output)
    return EXIT_OK


def cmd_certify(args) -> int:
    graph = _load_graph(args.graph)
    if args.cost_mode == "label":
        graph = label_costs(graph)
    rho0 = _vector(args.prior) if args.prior else stationary_prior(graph)
    support = [int(v) for v in _vector(args.support)]
    if any(v < 0 or v >= graph.n for v in support):
        raise ParseError(f"support entries must lie in 0..{graph.n - 1}")
    cert = certify(graph, rho0, support, args.lam, args.convention)
    out = {"support": sorted(set(support)), "exact": cert.exact, "certificate": str(cert)}
    if cert.exact:
        out.update(gamma=cert.gamma, margin=cert.margin)
    else:
        out["reason"] = cert.reason
    _write(dumps_json(out), args.output)
    return EXIT_OK


def cmd_gen_tree(args) -> int:
    _write(emit_edgelist(make_fig2_tree()), args.output)
    return EXIT_OK


def _batch_worker(job):
    gid, graph, cfg_dict, certificate = job
    cfg = RunConfig(**cfg_dict)
    try:
        g, rho0 = _prepare(graph, cfg, None)
        rep = _compress_one(g, cfg, rho0, certificate)
    except (SolverError, TransportError, ProjectionError) as exc:
        return gid, None, f"solver: {exc}"
    except (GraphError, ValueError) as exc:
        return gid, None, f"input: {exc}"
    return gid, rep, None


def cmd_batch(args) -> int:
    cfg = _run_config(args)
    if cfg.prior_mode == "file":
        raise ParseError("batch uses the degree prior; per-graph prior files are not supported")
    if cfg.k is None and cfg.k_frac is None:
        raise ParseError("batch needs -k or --k-frac")
    bundle = parse_tudataset(args.dataset)
    out = Path(args.output)
    (out / "reports").mkdir(parents=True, exist_ok=True)
    jobs = [(gid, g, asdict(cfg), not args.no_certificate) for gid, g in bundle]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_batch_worker, jobs, chunksize=max(1, len(jobs) // (4 * args.workers))))
    else:
        results = [_batch_worker(j) for j in jobs]

    rows, kept, failed = [], [], []
    graphs = dict(zip(bundle.ids, bundle.graphs))
    for gid, rep, err in results:
        if rep is None:
            failed.append({"graph_id": gid, "error": err})
            log.error("graph %s failed: %s", gid, err)
            continue
        graph = graphs[gid]
        emit_report(rep, out / "reports" / f"{gid}.json", graph_id=gid, timings=args.timings)
        keep = list(rep.support)
        pos = {v: i for i, v in enumerate(keep)}
        edges = [(pos[graph.edges[i].u], pos[graph.edges[i].v]) for i in rep.kept_edges]
        labels = None if graph.labels is None else [graph.labels[v] for v in keep]
        kept.append((gid, (len(keep), edges, labels)))
        rows.append(
            {
                "graph_id": gid,
                "n": graph.n,
                "k": rep.k,
                "support_size": len(keep),
                "certificate": "exact" if rep.certificate and rep.certificate.exact else "not-certified",
                "transport_cost": rep.transport_cost,
            }
        )
    glabels = None
    if bundle.graph_labels is not None:
        lookup = dict(zip(bundle.ids, bundle.graph_labels))
        glabels = [lookup[gid] for gid, _ in kept]
    write_tudataset(out / f"{bundle.name}_compressed", f"{bundle.name}_compressed", [g for _, g in kept], glabels)
    summary = {
        "dataset": bundle.name,
        "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(cfg).items()},
        "graphs": rows,
        "compressed": len(rows),
        "skipped_disconnected": bundle.skipped,
        "failed": failed,
    }
    (out / "summary.json").write_text(dumps_json(summary))
    solver_failed = any(f["error"].startswith("solver") for f in failed)
    return EXIT_SOLVER if solver_failed else (EXIT_INPUT if failed else EXIT_OK)


# --- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="otcompress", description="Graph compression by optimal transport.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("compress", help="compress one graph (edge list, '-' for stdin) or a TUDataset directory")
    c.add_argument("graph")
    _add_run_flags(c)
    c.add_argument("--format", choices=("json", "dot"), default="json")
    c.add_argument("-o", "--output")
    c.add_argument("--timings", action="store_true", help="include wall time (breaks byte determinism)")
    c.add_argument("--no-certificate", action="store_true")
    c.set_defaults(func=cmd_compress)

    d = sub.add_parser("distance", help="transport cost between two node distributions")
    d.add_argument("graph")
    d.add_argument("--rho0", required=True)
    d.add_argument("--rho1", required=True)
    d.add_argument("--convention", choices=CONVENTIONS, default=CONVENTIONS[0])
    d.add_argument("--cost-mode", choices=("file", "label"), default="file")
    d.add_argument("-o", "--output")
    d.set_defaults(func=cmd_distance)

    pr = sub.add_parser("project", help="run one projection (debugging aid)")
    pr.add_argument("kind", choices=("simplex", "capped", "slab"))
    pr.add_argument("--y", required=True)
    pr.add_argument("--eps")
    pr.add_argument("-k", type=float)
    pr.add_argument("--graph")
    pr.add_argument("--convention", choices=CONVENTIONS, default=CONVENTIONS[0])
    pr.add_argument("-o", "--output")
    pr.set_defaults(func=cmd_project)

    ce = sub.add_parser("certify", help="check whether the relaxation provably recovers a support")
    ce.add_argument("graph")
    ce.add_argument("--support", required=True, help="node ids, e.g. 0,1,2")
    ce.add_argument("--lambda", dest="lam", type=float, default=1.0)
    ce.add_argument("--prior")
    ce.add_argument("--convention", choices=CONVENTIONS, default=CONVENTIONS[0])
    ce.add_argument("--cost-mode", choices=("file", "label"), default="file")
    ce.add_argument("-o", "--output")
    ce.set_defaults(func=cmd_certify)

    t = sub.add_parser("gen-tree", help="write the 21-node two-level test tree as an edge list")
    t.add_argument("-o", "--output")
    t.set_defaults(func=cmd_gen_tree)

    b = sub.add_parser("batch", help="compress every graph of a TUDataset directory")
    b.add_argument("dataset")
    _add_run_flags(b)
    b.add_argument("-o", "--output", required=True, help="output directory")
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--timings", action="store_true")
    b.add_argument("--no-certificate", action="store_true")
    b.set_defaults(func=cmd_batch)
    return p


def main(argv=None) -> int:
    level = os.environ.get("OTCOMPRESS_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INPUT
    except (SolverError, TransportError, ProjectionError) as exc:
        print(f"otcompress: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ParseError, GraphError, ValueError, OSError) as exc:
        print(f"otcompress: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
