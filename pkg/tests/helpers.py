"""Small shared helpers for the test-suite."""

from __future__ import annotations

import ast
import textwrap

from adhocscan.graphs import build_cfg, build_pdg
from adhocscan.metrics import MetricRecord, ProjectIndex, build_record
from adhocscan.slicer import ParserSlice, collect_parsers
from adhocscan.strtypes import DEFAULT_TABLE, imported_names, type_function
from adhocscan.syntax import FunctionUnit, extract_functions, parse_module


def units(src: str, path: str = "mod.py") -> list[FunctionUnit]:
    src = textwrap.dedent(src)
    return extract_functions(parse_module(src), path, src)


def unit(src: str, name: str | None = None, path: str = "mod.py") -> FunctionUnit:
    for u in units(src, path):
        if (name is None and not u.is_synthetic_main) or u.name == name:
            return u
    raise LookupError(name)


def typing_of(src: str, name: str | None = None, api=DEFAULT_TABLE):
    src = textwrap.dedent(src)
    tree = parse_module(src)
    fn = unit(src, name)
    return type_function(fn, api, build_pdg(build_cfg(fn)), tree)


def slices(src: str, name: str | None = None, keep_all: bool = False,
           api=DEFAULT_TABLE) -> list[ParserSlice]:
    src = textwrap.dedent(src)
    tree = parse_module(src)
    out = []
    for fn in extract_functions(tree, "mod.py", src):
        if name is not None and fn.name != name:
            continue
        if name is None and fn.is_synthetic_main and len(src.strip().splitlines()) and \
                any(not u.is_synthetic_main for u in extract_functions(tree, "mod.py", src)):
            continue
        out.extend(collect_parsers(fn, api, tree, "p", keep_all=keep_all))
    return out


def records(src: str, name: str | None = None, path: str = "mod.py") -> list[MetricRecord]:
    """Records for one module, treated as a one-file project."""
    src = textwrap.dedent(src)
    tree = parse_module(src)
    imported = imported_names(tree)
    index = ProjectIndex(functions=frozenset(
        n.name for n in ast.walk(tree) if isinstance(n, (ast.FunctionDef, ast.ClassDef))))
    out = []
    for fn in extract_functions(tree, path, src):
        if name is not None and fn.name != name:
            continue
        for sl in collect_parsers(fn, DEFAULT_TABLE, tree, "p"):
            out.append(build_record(sl, src, project_name="p", imported=imported, project_index=index))
    return out


def record(src: str, name: str | None = None) -> MetricRecord:
    recs = records(src, name)
    assert len(recs) == 1, [r.slice_id for r in recs]
    return recs[0]


def lines_of(sl: ParserSlice) -> list[int]:
    return sorted(sl.line_span)
