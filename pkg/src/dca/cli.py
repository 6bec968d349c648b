"""Command-line interface.

Subcommands::

    dca run      --ref R --eval E [options]       full pipeline, JSON score report
    dca build    --ref R --out DIR [options]      reference artifact for queries
    dca query    --artifact DIR --queries Q       one JSON line per query
    dca distill  --artifact DIR --mcs K [--out DIR]  re-cluster a cached graph
    dca report   FILE                             pretty-print a JSON report

Settings come from command-line flags, then from an INI file given with
``--config`` (keys in a ``[dca]`` section, named like the long flags without
dashes, e.g. ``eta_c = 0.75``), then from built-in defaults.

Exit codes: 0 success, 2 configuration error, 3 input error, 4 internal error.
"""
from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .estimator import DelaunayComponentAnalysis, default_workers
from .exceptions import ConfigError, DCAError, EmptyNeighborhood, InputError
from .pointset_io import EVAL, REF, load_pointset, merge
from .qdca import ReferenceContext, build_reference, evaluate_queries, reference_from_graph

logger = logging.getLogger("dca")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_INTERNAL = 4

DEFAULTS = {
    "T": 10_000,
    "B": 1.0,
    "mcs": 10,
    "eta_c": 0.0,
    "eta_q": 0.0,
    "seed": 0,
    "workers": None,
    "format": "csv",
    "header": False,
}
_TYPES = {"T": int, "B": float, "mcs": int, "eta_c": float, "eta_q": float, "seed": int, "workers": int, "format": str}


def _read_config(path) -> dict:
    parser = configparser.ConfigParser()
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    if not parser.has_section("dca"):
        raise ConfigError(f"{path}: missing [dca] section")
    out = {}
    for key, raw in parser.items("dca"):
        key = key.replace("-", "_")
        if key == "t":
            key = "T"
        elif key == "b":
            key = "B"
        try:
            if key == "header":
                out[key] = parser.getboolean("dca", key)
            elif key in _TYPES:
                out[key] = _TYPES[key](raw)
            else:
                out[key] = raw
        except ValueError:
            raise ConfigError(f"{path}: bad value for {key}: {raw!r}") from None
    return out


def resolve_config(args) -> dict:
    """Merge flags over the config file over :data:`DEFAULTS` and validate."""
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        cfg.update(_read_config(args.config))
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None and value is not False:
            cfg[key] = value
    if cfg["workers"] is None:
        cfg["workers"] = default_workers()
    if cfg["T"] < 1:
        raise ConfigError(f"T must be >= 1, got {cfg['T']}")
    if not 0.0 <= cfg["B"] <= 1.0:
        raise ConfigError(f"B must lie in [0, 1], got {cfg['B']}")
    if cfg["mcs"] < 2:
        raise ConfigError(f"mcs must be >= 2, got {cfg['mcs']}")
    for key in ("eta_c", "eta_q"):
        if not 0.0 <= cfg[key] < 1.0:
            raise ConfigError(f"{key} must lie in [0, 1), got {cfg[key]}")
    if cfg["workers"] < 1:
        raise ConfigError(f"workers must be >= 1, got {cfg['workers']}")
    if cfg["format"] not in ("csv", "dcabin"):
        raise ConfigError(f"format must be csv or dcabin, got {cfg['format']!r}")
    return cfg


def _need(args, name):
    value = getattr(args, name, None)
    if value is None:
        raise ConfigError(f"--{name.replace('_', '-')} is required")
    return value


def _load(path, cfg, membership):
    return load_pointset(path, membership=membership, format=cfg["format"], header=cfg["header"])


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
        logger.info("wrote %s", out)
    else:
        sys.stdout.write(text)


def _dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def cmd_run(args) -> int:
    cfg = resolve_config(args)
    r = _load(_need(args, "ref"), cfg, REF)
    e = _load(_need(args, "eval"), cfg, EVAL)
    ps = merge(r, e)
    est = DelaunayComponentAnalysis(
        n_rays=cfg["T"],
        sphere_coverage=cfg["B"],
        min_cluster_size=cfg["mcs"],
        eta_c=cfg["eta_c"],
        eta_q=cfg["eta_q"],
        random_state=cfg["seed"],
        n_jobs=cfg["workers"],
    )
    est._fit_pointset(ps)
    _emit(_dumps(est.report()), args.out)
    return EXIT_OK


def cmd_build(args) -> int:
    cfg = resolve_config(args)
    out = _need(args, "out")
    t0 = time.perf_counter()
    r = _load(_need(args, "ref"), cfg, None)
    ctx = build_reference(
        r, T=cfg["T"], B=cfg["B"], mcs=cfg["mcs"], eta_c=cfg["eta_c"], eta_q=cfg["eta_q"],
        seed=cfg["seed"], workers=cfg["workers"],
    )
    ctx.save(out)
    logger.info(
        "built reference: %d points, %d edges, %d components (%.2fs)",
        len(r), ctx.graph.n_edges, ctx.distilled.n_components, time.perf_counter() - t0,
    )
    return EXIT_OK


def cmd_distill(args) -> int:
    cfg = resolve_config(args)
    src = Path(_need(args, "artifact"))
    old = ReferenceContext.load(src)
    ctx = reference_from_graph(old.points, old.graph, cfg["mcs"], cfg["eta_c"], cfg["eta_q"], params=old.params)
    ctx.save(args.out or src)
    logger.info("re-distilled with mcs=%d: %d components", cfg["mcs"], ctx.distilled.n_components)
    return EXIT_OK


def cmd_query(args) -> int:
    cfg = resolve_config(args)
    ctx = ReferenceContext.load(_need(args, "artifact"))
    queries = _load(_need(args, "queries"), cfg, REF)
    T = args.T if args.T is not None else int(ctx.params.get("T", cfg["T"]))
    seed = args.seed if args.seed is not None else int(ctx.params.get("seed", cfg["seed"]))
    verdicts = evaluate_queries(queries, ctx, T=T, seed=seed, workers=cfg["workers"], errors="return")
    lines = []
    failures = 0
    for k, verdict in enumerate(verdicts):
        if isinstance(verdict, EmptyNeighborhood):
            failures += 1
            logger.error("%s", verdict)
            lines.append(json.dumps({"id": k, "error": "EmptyNeighborhood"}, sort_keys=True))
        else:
            lines.append(json.dumps(verdict.to_json(), sort_keys=True))
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_INPUT if failures else EXIT_OK


def cmd_report(args) -> int:
    try:
        doc = json.loads(Path(args.file).read_text())
    except OSError as exc:
        raise InputError(f"cannot read {args.file}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{args.file}: not JSON ({exc})") from None
    g = doc.get("global", {})
    lines = []
    if g:
        lines.append("global")
        for key in ("precision", "recall", "c", "q", "num_components", "num_fundamental",
                    "largest_component_relative_size"):
            if key in g:
                lines.append(f"  {key:<34}{g[key]}")
    comps = doc.get("components", [])
    if comps:
        lines.append("components")
        lines.append(f"  {'idx':>4} {'n_R':>6} {'n_E':>6} {'c':>8} {'q':>8}  fundamental")
        for c in comps:
            lines.append(
                f"  {c['index']:>4} {c['n_R']:>6} {c['n_E']:>6} {c['consistency']:>8.4f} "
                f"{c['quality']:>8.4f}  {'yes' if c['is_fundamental'] else 'no'}"
            )
    timings = doc.get("timings", {})
    if timings:
        lines.append("timings (s)")
        for key, value in timings.items():
            lines.append(f"  {key:<34}{value:.3f}")
    if not lines:
        lines.append(json.dumps(doc, indent=2, sort_keys=True))
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI file with a [dca] section")
    p.add_argument("--format", choices=("csv", "dcabin"), default=None, help="input format (default csv)")
    p.add_argument("--header", action="store_true", default=None, help="CSV inputs have a header line")
    p.add_argument("--T", dest="T", type=int, default=None, help="rays per vertex (default 10000)")
    p.add_argument("--B", dest="B", type=float, default=None, help="sphere coverage, 1.0 disables (default)")
    p.add_argument("--mcs", type=int, default=None, help="minimum component size (default 10)")
    p.add_argument("--eta-c", dest="eta_c", type=float, default=None, help="consistency threshold (default 0)")
    p.add_argument("--eta-q", dest="eta_q", type=float, default=None, help="quality threshold (default 0)")
    p.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    p.add_argument("--workers", type=int, default=None, help="worker threads (default: all available cores)")
    p.add_argument("--out", default=None, help="output file (directory for build/distill)")
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dca", description="Delaunay component analysis of two point sets.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="score an evaluation set against a reference set")
    _add_common(p)
    p.add_argument("--ref", help="reference points")
    p.add_argument("--eval", help="evaluation points")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("build", help="build a reference artifact for queries")
    _add_common(p)
    p.add_argument("--ref", help="reference points (dcabin membership tags are honoured)")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("query", help="evaluate query points against a reference artifact")
    _add_common(p)
    p.add_argument("--artifact", help="directory written by build")
    p.add_argument("--queries", help="query points")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("distill", help="re-cluster a cached graph at a new mcs")
    _add_common(p)
    p.add_argument("--artifact", help="directory written by build")
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("report", help="pretty-print a JSON report")
    p.add_argument("file")
    p.add_argument("--out", default=None)
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose > 1 else logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        logger.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except InputError as exc:
        logger.error("input error: %s", exc)
        return EXIT_INPUT
    except DCAError as exc:
        logger.error("internal error: %s", exc)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to the internal exit code
        logger.exception("unexpected failure: %s", exc)
        return EXIT_INTERNAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
