"""Corpus driver: discover project trees, analyse every file, persist records.

Work is split per file. Each worker parses, slices and profiles one module and
returns plain data; the parent merges results in a fixed order, so the output
does not depend on how many workers ran or how they were scheduled.
"""

from __future__ import annotations

import ast
import csv
import dataclasses
import io
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .graphs import build_cfg, build_pdg, export_edges
from .metrics import MetricRecord, ProjectIndex, build_record
from .slicer import collect_parsers
from .strtypes import DEFAULT_TABLE, KnownApiTable, imported_names, load_table, type_function
from .syntax import ParseFailure, code_lines, decode_source, extract_functions, module_name_for, parse_module

log = logging.getLogger(__name__)

SKIP_DIRS = frozenset({
    "venv", "env", "virtualenv", "site-packages", "__pycache__", "node_modules",
    "build", "dist", "eggs", "CVS", "_darcs",
})
STATS_TYPE = "project_stats"


class ConfigError(Exception):
    """Invalid scan configuration (missing root, bad option, unwritable output)."""


@dataclass
class ScanConfig:
    roots: list[Path]
    project_granularity: str = "root"  # root | children
    jobs: int = 1
    follow_symlinks: bool = False
    table_extensions: Path | None = None
    output_path: Path | None = None
    output_format: str = "jsonl"
    graph_dump: Path | None = None

    def __post_init__(self) -> None:
        self.roots = [Path(r) for r in self.roots]
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        if self.project_granularity not in ("root", "children"):
            raise ConfigError(f"unknown project granularity {self.project_granularity!r}")
        if self.output_format not in ("jsonl", "csv"):
            raise ConfigError(f"unknown output format {self.output_format!r}")


@dataclass(frozen=True)
class ModuleRef:
    """A discovered file; its text is read by whichever worker analyses it."""
    project_id: str
    relative_path: str
    path: Path


@dataclass
class SourceModule:
    project_id: str
    relative_path: str
    source_text: str
    module_loc: int


@dataclass
class ProjectStats:
    project_name: str
    project_loc: int = 0
    module_count: int = 0
    parse_failures: int = 0
    parser_count: int = 0
    parser_loc_total: int = 0
    has_parser: bool = False


@dataclass
class FileResult:
    relative_path: str
    loc: int = 0
    parser_loc: int = 0
    records: list[MetricRecord] = field(default_factory=list)
    failure: str | None = None
    graphs: str = ""


# ---------------------------------------------------------------- discovery

def _skip_dir(entry: Path) -> bool:
    name = entry.name
    return name.startswith(".") or name in SKIP_DIRS or (entry / "pyvenv.cfg").exists()


def _python_files(root: Path, follow_symlinks: bool) -> list[str]:
    found = []
    for dirpath, dirnames, filenames in os.walk(root, followlinks=follow_symlinks):
        here = Path(dirpath)
        dirnames[:] = sorted(d for d in dirnames if not _skip_dir(here / d))
        for name in filenames:
            if not name.endswith(".py") or name.startswith("."):
                continue
            full = here / name
            if full.is_symlink() and not follow_symlinks:
                continue
            found.append(full.relative_to(root).as_posix())
    return sorted(found)


def project_roots(config: ScanConfig) -> list[tuple[str, Path]]:
    """(project name, directory) pairs in deterministic order."""
    out = []
    for root in config.roots:
        if not root.is_dir():
            raise ConfigError(f"root does not exist or is not a directory: {root}")
        if config.project_granularity == "root":
            out.append((root.resolve().name, root))
            continue
        for child in sorted(root.iterdir(), key=lambda p: p.name):
            if child.is_dir() and not _skip_dir(child):
                if child.is_symlink() and not config.follow_symlinks:
                    continue
                out.append((child.name, child))
    return out


def discover(config: ScanConfig) -> Iterator[tuple[str, list[ModuleRef]]]:
    """Python files grouped by project, each group in lexicographic path order."""
    for project, root in project_roots(config):
        refs = [ModuleRef(project, rel, root / rel)
                for rel in _python_files(root, config.follow_symlinks)]
        yield project, refs


def load_module(ref: ModuleRef) -> SourceModule:
    text = decode_source(ref.path.read_bytes())
    return SourceModule(ref.project_id, ref.relative_path, text, len(code_lines(text)))


# ---------------------------------------------------------------- per-file work

_worker_api: KnownApiTable = DEFAULT_TABLE


def _init_worker(table_path: str | None) -> None:
    global _worker_api
    _worker_api = load_table(table_path)


def _defined_names(ref: ModuleRef) -> tuple[set[str], str]:
    try:
        tree = parse_module(decode_source(ref.path.read_bytes()))
    except (OSError, ParseFailure):
        return set(), ref.relative_path
    names = {n.name for n in ast.walk(tree)
             if isinstance(n, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef))}
    return names, ref.relative_path


def analyze_module(module: SourceModule, api: KnownApiTable = DEFAULT_TABLE,
                   index: ProjectIndex | None = None, source_path: str = "",
                   dump_graphs: bool = False) -> FileResult:
    """Run the whole pipeline over one module. Raises ParseFailure on bad syntax."""
    text = module.source_text
    result = FileResult(module.relative_path, loc=module.module_loc)
    tree = parse_module(text)
    imported = imported_names(tree)
    modname = module_name_for(module.relative_path)
    parser_lines: set[int] = set()
    dumps = []
    for fn in extract_functions(tree, module.relative_path, text):
        pdg = build_pdg(build_cfg(fn))
        if dump_graphs:
            dumps.append(export_edges(pdg))
        typing = type_function(fn, api, pdg, tree)
        for sl in collect_parsers(fn, api, tree, module.project_id, typing):
            parser_lines |= sl.line_span
            result.records.append(build_record(
                sl, text, project_name=module.project_id, module_name=modname,
                project_index=index, imported=imported, source_path=source_path))
    code = code_lines(text)
    result.parser_loc = sum(1 for ln in parser_lines if ln in code)
    result.graphs = "".join(dumps)
    return result


def _analyze_ref(args: tuple[ModuleRef, ProjectIndex, bool]) -> FileResult:
    ref, index, dump = args
    try:
        module = load_module(ref)
    except OSError as exc:
        return FileResult(ref.relative_path, failure=f"unreadable: {exc.strerror or exc}")
    try:
        return analyze_module(module, _worker_api, index, str(ref.path), dump)
    except ParseFailure as exc:
        return FileResult(ref.relative_path, loc=module.module_loc,
                          failure=f"parse failure at line {exc.line}: {exc.message}")
    except RecursionError:
        return FileResult(ref.relative_path, loc=module.module_loc, failure="nesting too deep")
    except Exception as exc:  # one bad file must not sink the scan
        log.debug("analysis error in %s", ref.path, exc_info=True)
        return FileResult(ref.relative_path, loc=module.module_loc,
                          failure=f"analysis error: {type(exc).__name__}: {exc}")


class _Pool:
    """Ordered map over either the current process or a process pool."""

    def __init__(self, jobs: int, table_path: str | None):
        self.jobs = jobs
        self.executor = None
        if jobs > 1:
            self.executor = ProcessPoolExecutor(jobs, initializer=_init_worker,
                                                initargs=(table_path,))
        else:
            _init_worker(table_path)

    def map(self, fn, items: list) -> list:
        if self.executor is None:
            return [fn(x) for x in items]
        chunk = max(1, len(items) // (self.jobs * 4))
        return list(self.executor.map(fn, items, chunksize=chunk))

    def close(self) -> None:
        if self.executor is not None:
            self.executor.shutdown()


def scan_project(project: str, refs: list[ModuleRef], pool: _Pool | None = None,
                 dump_graphs: bool = False) -> tuple[ProjectStats, list[MetricRecord], str]:
    """Two passes: index definitions across the project, then analyse each file."""
    own = pool is None
    pool = pool or _Pool(1, None)
    try:
        defined = pool.map(_defined_names, refs)
        functions = frozenset().union(*(names for names, _ in defined)) if defined else frozenset()
        modules = frozenset(module_name_for(r.relative_path).split(".", 1)[0] for r in refs)
        index = ProjectIndex(functions, modules)
        results = pool.map(_analyze_ref, [(r, index, dump_graphs) for r in refs])
    finally:
        if own:
            pool.close()

    stats = ProjectStats(project)
    records: list[MetricRecord] = []
    graphs = []
    for res in results:
        if res.failure is not None:
            stats.parse_failures += 1
            log.warning("skipped %s/%s: %s", project, res.relative_path, res.failure)
            continue
        stats.module_count += 1
        stats.project_loc += res.loc
        stats.parser_loc_total += res.parser_loc
        records.extend(res.records)
        graphs.append(res.graphs)
    for rec in records:
        rec.project_loc = stats.project_loc
    # every source_path shares the project root prefix, so this is relative-path order
    records.sort(key=lambda r: (r.source_path, r.seed_line, r.seed_col, r.slice_id))
    stats.parser_count = len(records)
    stats.has_parser = stats.parser_count > 0
    return stats, records, "".join(graphs)


def scan(config: ScanConfig) -> list[tuple[ProjectStats, list[MetricRecord]]]:
    """Scan every project of the configuration; writes outputs when paths are set."""
    groups = list(discover(config))
    table_path = str(config.table_extensions) if config.table_extensions else None
    if table_path is not None:
        load_table(table_path)  # fail fast in the parent on a malformed table
    pool = _Pool(config.jobs, table_path)
    results = []
    dumps = []
    try:
        for project, refs in groups:
            stats, records, graphs = scan_project(project, refs, pool,
                                                  config.graph_dump is not None)
            results.append((stats, records))
            dumps.append(graphs)
    finally:
        pool.close()
    if config.output_path is not None:
        write_records(results, config.output_path, config.output_format)
    if config.graph_dump is not None:
        _write_text(config.graph_dump, "".join(dumps))
    return results


# ---------------------------------------------------------------- output

def record_to_dict(rec: MetricRecord) -> dict:
    return dataclasses.asdict(rec)


def stats_to_dict(stats: ProjectStats) -> dict:
    return {"type": STATS_TYPE, **dataclasses.asdict(stats)}


def render_jsonl(results: Iterable[tuple[ProjectStats, list[MetricRecord]]]) -> str:
    lines = []
    for stats, records in results:
        for rec in records:
            lines.append(json.dumps(record_to_dict(rec), ensure_ascii=False))
        lines.append(json.dumps(stats_to_dict(stats), ensure_ascii=False))
    return "".join(line + "\n" for line in lines)


CSV_FIELDS = [f.name for f in dataclasses.fields(MetricRecord)]


def _csv_cell(name: str, value) -> str:
    if name == "calls":
        return "|".join(f"{c.name}@{c.ordinal}" for c in value)
    if name == "regexes":
        return "|".join(f"{r.api_name}@{r.ordinal}:{r.role}" for r in value)
    if name == "loops":
        return "|".join(f"{lp.kind}:{lp.bound}" for lp in value)
    if name == "caught_exceptions":
        return "|".join(f"{c.name}:{c.scope}" for c in value)
    if name == "sugar":
        return "|".join(sorted(value))
    if isinstance(value, (list, tuple)):
        return "|".join(str(v) for v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def render_csv(results: Iterable[tuple[ProjectStats, list[MetricRecord]]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for _, records in results:
        for rec in records:
            writer.writerow([_csv_cell(name, getattr(rec, name)) for name in CSV_FIELDS])
    return buf.getvalue()


def _write_text(path: Path, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc.strerror or exc}") from None


def write_records(results: list[tuple[ProjectStats, list[MetricRecord]]], path: Path,
                  fmt: str = "jsonl") -> None:
    text = render_jsonl(results) if fmt == "jsonl" else render_csv(results)
    _write_text(Path(path), text)


# ---------------------------------------------------------------- input

def read_jsonl(path: str | Path) -> tuple[list[dict], list[dict]]:
    """Split a scan output into (record dicts, project-stats dicts)."""
    records, stats = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}:{lineno}: not JSON ({exc.msg})") from None
            (stats if obj.get("type") == STATS_TYPE else records).append(obj)
    return records, stats
