"""Command line entry point: scan, report, cluster and show."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .analytics import ZeroVarianceError, cluster_records, clustering_to_dict, describe, format_report, \
    k_sweep, report_to_dict, vectorize
from .runner import ConfigError, ScanConfig, read_jsonl, scan
from .strtypes import TableFormatError

log = logging.getLogger("adhocscan")


class UsageError(Exception):
    pass


def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {value}")
    return value


def _non_negative(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {value}")
    return value


def _k_range(text: str) -> range:
    lo, sep, hi = text.partition(":")
    try:
        a, b = int(lo), int(hi if sep else lo)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected KMIN:KMAX, got {text!r}") from None
    if a < 1 or b < a:
        raise argparse.ArgumentTypeError(f"invalid k range {text!r}")
    return range(a, b + 1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adhocscan",
        description="Find ad hoc string parsers in Python code and profile them.")
    parser.add_argument("--version", action="version", version=f"adhocscan {__version__}")
    parser.add_argument("-q", "--quiet", action="store_true", help="only report errors")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("scan", help="scan source trees and write parser records")
    p.add_argument("--root", nargs="+", required=True, type=Path, metavar="PATH")
    p.add_argument("--out", required=True, type=Path, metavar="FILE")
    p.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")
    p.add_argument("--jobs", type=_positive, default=1, metavar="N")
    p.add_argument("--projects", choices=("root", "children"), default="root",
                   help="treat each root as one project, or each child directory as one")
    p.add_argument("--api-table", type=Path, metavar="FILE",
                   help="extra known-operation entries (name,returns,constraint,may_raise...)")
    p.add_argument("--follow-symlinks", action="store_true")
    p.add_argument("--dump-graphs", type=Path, metavar="FILE",
                   help="also write every function's CFG/PDG edge list to FILE")

    p = sub.add_parser("report", help="descriptive statistics over a scan output")
    p.add_argument("--in", dest="input", required=True, type=Path, metavar="FILE")
    p.add_argument("--out", required=True, type=Path, metavar="FILE")
    p.add_argument("--figures", type=Path, metavar="DIR", help="render PNG figures into DIR")
    p.add_argument("--top", type=_positive, default=20, metavar="N",
                   help="number of function names in the frequency table")

    p = sub.add_parser("cluster", help="k-means over metric feature vectors")
    p.add_argument("--in", dest="input", required=True, type=Path, metavar="FILE")
    p.add_argument("--k", required=True, type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--features", type=_positive, default=32, metavar="F",
                   help="vocabulary size for multiset indicator features")
    p.add_argument("--exemplars", type=_non_negative, default=3, metavar="M")
    p.add_argument("--out", required=True, type=Path, metavar="FILE")
    p.add_argument("--sweep", type=_k_range, metavar="KMIN:KMAX",
                   help="also report inertia and silhouette for each k in the range")
    p.add_argument("--figures", type=Path, metavar="DIR")

    p = sub.add_parser("show", help="print one parser slice in its function")
    p.add_argument("--in", dest="input", required=True, type=Path, metavar="FILE")
    p.add_argument("--id", required=True, metavar="SLICE_ID")
    p.add_argument("--context", type=_non_negative, default=2, metavar="N")
    return parser


# ---------------------------------------------------------------- commands

def cmd_scan(args: argparse.Namespace) -> int:
    config = ScanConfig(roots=args.root, project_granularity=args.projects, jobs=args.jobs,
                        follow_symlinks=args.follow_symlinks, table_extensions=args.api_table,
                        output_path=args.out, output_format=args.format,
                        graph_dump=args.dump_graphs)
    results = scan(config)
    records = sum(len(r) for _, r in results)
    failures = sum(s.parse_failures for s, _ in results)
    log.info("scanned %d project(s): %d parser(s), %d skipped file(s)",
             len(results), records, failures)
    return 0


def _load(path: Path) -> tuple[list[dict], list[dict]]:
    if not path.is_file():
        raise ConfigError(f"no such file: {path}")
    return read_jsonl(path)


def _write_json(path: Path, doc: dict) -> None:
    try:
        path.write_text(json.dumps(doc, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc.strerror or exc}") from None


def cmd_report(args: argparse.Namespace) -> int:
    records, stats = _load(args.input)
    report = describe(records, stats, top_n=args.top)
    _write_json(args.out, report_to_dict(report))
    if not args.quiet:
        sys.stdout.write(format_report(report))
    if args.figures is not None:
        from .plotting import report_figures
        for path in report_figures(report, records, args.figures):
            log.info("wrote %s", path)
    return 0


def cmd_cluster(args: argparse.Namespace) -> int:
    if args.k < 1:
        raise UsageError(f"--k must be at least 1, got {args.k}")
    records, _ = _load(args.input)
    if not records:
        raise UsageError("no parser records to cluster")
    if args.k > len(records):
        raise UsageError(f"--k {args.k} exceeds the number of records ({len(records)})")
    try:
        result = cluster_records(records, args.k, args.seed, args.features, args.exemplars)
    except ZeroVarianceError as exc:
        raise UsageError(str(exc)) from None
    sweep = None
    matrix = None
    if args.sweep is not None or args.figures is not None:
        matrix, _ = vectorize(records, args.features)
    if args.sweep is not None:
        sweep = k_sweep(matrix, args.sweep, args.seed)
    _write_json(args.out, clustering_to_dict(result, sweep))
    if not args.quiet:
        sizes = [result.assignments.count(j) for j in range(result.k)]
        sil = "-" if result.silhouette is None else f"{result.silhouette:.3f}"
        print(f"k={result.k} seed={result.seed} inertia={result.inertia:.4f} silhouette={sil}")
        for j, size in enumerate(sizes):
            print(f"  cluster {j}: {size} parser(s); exemplars: {', '.join(result.exemplars[j])}")
    if args.figures is not None:
        from .plotting import cluster_figures
        for path in cluster_figures(result, matrix, args.figures):
            log.info("wrote %s", path)
    return 0


def render_slice(record: dict, source_lines: list[str] | None, context: int) -> str:
    """Function listing with slice lines marked '>' and gaps elided."""
    header = [
        f"# {record['slice_id']}",
        f"# {record['ef_name']}  ({record.get('source_path', '')})",
        f"# loc={record['loc']} cyclo={record['cyclo']} input={record['input_source']}/"
        f"{record['input_origin']} position={record['position_cat']} "
        f"shotgun={str(record['shotgun']).lower()}",
        "# calls: " + " ".join(c["name"] for c in record.get("calls", [])),
    ]
    if record.get("uncaught_exceptions"):
        header.append("# uncaught: " + " ".join(record["uncaught_exceptions"]))
    if source_lines is None:
        return "\n".join(header) + "\n"
    marked = set(record.get("slice_lines", []))
    first, last = record.get("ef_span", [min(marked), max(marked)])
    shown = set()
    for ln in marked:
        shown.update(range(ln - context, ln + context + 1))
    body = []
    skipped = 0
    for ln in range(first, last + 1):
        if ln > len(source_lines):
            break
        if ln not in shown:
            skipped += 1
            continue
        if skipped:
            body.append(f"       ... {skipped} line(s)")
            skipped = 0
        prefix = ">" if ln in marked else "|"
        body.append(f"{prefix} {ln:4d}  {source_lines[ln - 1].rstrip()}")
    if skipped:
        body.append(f"       ... {skipped} line(s)")
    return "\n".join(header + body) + "\n"


def cmd_show(args: argparse.Namespace) -> int:
    records, _ = _load(args.input)
    record = next((r for r in records if r.get("slice_id") == args.id), None)
    if record is None:
        raise UsageError(f"slice id not found in {args.input}: {args.id}")
    path = Path(record.get("source_path", ""))
    try:
        lines = path.read_text(encoding="utf-8", errors="replace").splitlines()
    except OSError as exc:
        sys.stdout.write(render_slice(record, None, args.context))
        log.error("cannot read source %s: %s", path, exc.strerror or exc)
        return 2
    sys.stdout.write(render_slice(record, lines, args.context))
    return 0


COMMANDS = {"scan": cmd_scan, "report": cmd_report, "cluster": cmd_cluster, "show": cmd_show}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse: 0 for --help/--version, 2 for usage errors
        return int(exc.code or 0)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(levelname)s: %(message)s", stream=sys.stderr, force=True)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError, TableFormatError) as exc:
        log.error("%s", exc)
        return 2
    except Exception as exc:
        log.error("internal failure: %s: %s", type(exc).__name__, exc)
        log.debug("traceback", exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
