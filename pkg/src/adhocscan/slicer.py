"""String-seeded forward slicing and the constraint filter that keeps parser cores."""

from __future__ import annotations

import ast
from dataclasses import dataclass, field

from .graphs import ENTRY, CfgNode, Pdg, build_cfg, build_pdg
from .strtypes import (
    DEFAULT_TABLE, NS, FunctionTyping, KnownApiTable, StringSeed, TypeVerdict, _Resolver,
    type_function,
)
from .syntax import FunctionUnit


@dataclass(frozen=True)
class ConstraintOp:
    name: str
    line: int
    col: int
    node: int
    regex: bool = False


@dataclass
class ParserSlice:
    slice_id: str
    seed: StringSeed
    statements: tuple[int, ...]
    line_span: frozenset[int]
    fn: FunctionUnit = field(repr=False)
    constraint_ops: list[ConstraintOp] = field(default_factory=list)
    attached_raises: tuple[int, ...] = ()
    is_parser: bool = False
    typing: FunctionTyping | None = field(default=None, repr=False)

    @property
    def pdg(self) -> Pdg:
        return self.typing.pdg

    def nodes(self) -> list[CfgNode]:
        return [self.typing.pdg.nodes[i] for i in self.statements]

    @property
    def first_line(self) -> int:
        return min(self.line_span)

    @property
    def last_line(self) -> int:
        return max(self.line_span)


def make_slice_id(project: str, path: str, seed: StringSeed) -> str:
    return f"{project}:{path}:{seed.line}:{seed.col}:{seed.variable_name}"


def forward_slice(typing: FunctionTyping, seed: StringSeed,
                  api: KnownApiTable | None = None, project: str = "") -> ParserSlice:
    """Worklist closure over data edges from the seed, expanding only through
    definitions whose verdict is String or StringCollection."""
    api = api or typing.api
    pdg = typing.pdg
    members: set[int] = set()
    work = [(seed.node, seed.variable_name)]
    if seed.node != ENTRY:
        # the seed statement is a slice statement like any other: every string
        # it defines flows onward, not only the seed variable
        members.add(seed.node)
        work += [(seed.node, w) for w in pdg.nodes[seed.node].defs
                 if w != seed.variable_name
                 and typing.def_verdicts.get((seed.node, w), TypeVerdict.UNKNOWN).is_stringy]
    seen = set(work)
    while work:
        node, var = work.pop()
        for use in pdg.uses_of(node, var):
            if pdg.nodes[use].node is None:
                continue
            members.add(use)
            for w in pdg.nodes[use].defs:
                if typing.def_verdicts.get((use, w), TypeVerdict.UNKNOWN).is_stringy:
                    carrier = (use, w)
                    if carrier not in seen:
                        seen.add(carrier)
                        work.append(carrier)
    statements = tuple(sorted(members, key=lambda i: (pdg.nodes[i].span, i)))
    lines = frozenset(ln for i in statements for ln in pdg.nodes[i].lines)
    sl = ParserSlice(
        slice_id=make_slice_id(project, typing.fn.module_path, seed),
        seed=seed,
        statements=statements,
        line_span=lines,
        fn=typing.fn,
        typing=typing,
    )
    sl.attached_raises = _attached_raises(pdg, members)
    sl.constraint_ops = constraint_ops(sl, api)
    sl.is_parser = bool(sl.constraint_ops)
    return sl


def _attached_raises(pdg: Pdg, members: set[int]) -> tuple[int, ...]:
    out = []
    for parent, child in pdg.control_edges:
        node = pdg.nodes[child]
        if parent in members and child not in members and isinstance(node.node, ast.Raise):
            out.append(child)
    return tuple(sorted(set(out)))


# ---------------------------------------------------------------- constraints

_COMPARE_OPS = (ast.Eq, ast.NotEq, ast.In, ast.NotIn)


def _walk_exprs(node: CfgNode):
    for expr in node.exprs:
        yield from ast.walk(expr)


def call_name(call: ast.Call, aliases: dict[str, str] | None = None) -> str | None:
    """Receiver-qualified name for module-level callees, bare attribute name for methods."""
    func = call.func
    if isinstance(func, ast.Name):
        if aliases and func.id in aliases:
            return aliases[func.id]
        return func.id
    if isinstance(func, ast.Attribute):
        q = _Resolver(DEFAULT_TABLE, aliases).qualify(func)
        if q is not None and _is_module_path(q, aliases):
            return q
        return func.attr
    return None


_MODULE_HEADS = frozenset({"os", "sys", "re", "subprocess", "json", "string", "math", "shlex",
                           "pathlib", "urllib", "requests", "socket", "datetime", "time",
                           "base64", "struct", "csv", "ast", "collections", "itertools",
                           "functools", "logging", "shutil", "glob", "io", "codecs"})


def _is_module_path(qualified: str, aliases: dict[str, str] | None) -> bool:
    head = qualified.split(".", 1)[0]
    if head in _MODULE_HEADS:
        return True
    return bool(aliases) and any(v.split(".", 1)[0] == head for v in aliases.values())


def _is_string_conversion(call: ast.Call, name: str | None, typing: FunctionTyping,
                          node_id: int, api: KnownApiTable) -> bool:
    fact = api.lookup(name) if name else None
    if fact is None or fact.role != "conversion" or not call.args:
        return False
    v = typing.verdict_of(call.args[0], node_id)
    return v is not NS


def _split_feeds(expr: ast.AST) -> ast.Call | None:
    """The split/rsplit call whose parts are destructured by a tuple target, if any."""
    if isinstance(expr, ast.Call):
        func = expr.func
        if isinstance(func, ast.Attribute) and func.attr in ("split", "rsplit"):
            return expr
        if isinstance(func, ast.Name) and func.id in ("list", "tuple", "map", "sorted") and expr.args:
            return _split_feeds(expr.args[-1])
        if isinstance(func, ast.Attribute) and func.attr in ("strip", "lstrip", "rstrip"):
            return None
    if isinstance(expr, (ast.ListComp, ast.GeneratorExp)) and len(expr.generators) == 1:
        return _split_feeds(expr.generators[0].iter)
    if isinstance(expr, ast.Subscript) and isinstance(expr.slice, ast.Slice):
        return _split_feeds(expr.value)
    return None


def _partition_feeds(expr: ast.AST) -> bool:
    return (isinstance(expr, ast.Call) and isinstance(expr.func, ast.Attribute)
            and expr.func.attr in ("partition", "rpartition"))


def tuple_destructures(stmt: ast.AST) -> list[tuple[ast.AST, ast.AST]]:
    """(target, value) pairs where a tuple/list target destructures a single value."""
    out = []
    if isinstance(stmt, ast.Assign):
        for t in stmt.targets:
            if isinstance(t, (ast.Tuple, ast.List)) and not isinstance(stmt.value, (ast.Tuple, ast.List)):
                out.append((t, stmt.value))
    return out


def constraint_ops(sl: ParserSlice, api: KnownApiTable) -> list[ConstraintOp]:
    """Constraint-imposing occurrences in the slice's statements, in source order."""
    typing = sl.typing
    ops: list[ConstraintOp] = []
    for node in sl.nodes():
        nid = node.id
        for sub in _walk_exprs(node):
            if isinstance(sub, ast.Call):
                name = call_name(sub, typing.aliases)
                if name is None:
                    continue
                qual = api.lookup(name)
                if qual is not None and qual.constraint:
                    if qual.role == "conversion":
                        if _is_string_conversion(sub, name, typing, nid, api):
                            ops.append(ConstraintOp(name, sub.lineno, sub.col_offset, nid))
                    else:
                        ops.append(ConstraintOp(name, sub.lineno, sub.col_offset, nid, qual.regex))
                    continue
                if isinstance(sub.func, ast.Name) and sub.func.id in ("map", "filter") and len(sub.args) >= 2:
                    mapped = call_name(ast.Call(func=sub.args[0], args=[], keywords=[]),
                                       typing.aliases) if isinstance(sub.args[0], (ast.Name, ast.Attribute)) else None
                    fact = api.lookup(mapped) if mapped else None
                    if fact is not None and fact.role == "conversion" and \
                            typing.verdict_of(sub.args[1], nid) is not NS:
                        arg = sub.args[0]
                        ops.append(ConstraintOp(mapped, arg.lineno, arg.col_offset, nid))
                    continue
                if isinstance(sub.func, ast.Attribute):
                    attr = sub.func.attr
                    fact = api.method(attr)
                    receiver = typing.verdict_of(sub.func.value, nid)
                    if fact is not None and fact.constraint:
                        if fact.receiver_is_string or receiver.is_stringy:
                            ops.append(ConstraintOp(attr, sub.lineno, sub.col_offset, nid))
                            continue
                    if attr in ("match", "search", "fullmatch", "findall", "finditer", "split", "sub") \
                            and not receiver.is_stringy and sub.args \
                            and typing.verdict_of(sub.args[0], nid).is_stringy and fact is None:
                        ops.append(ConstraintOp(attr, sub.lineno, sub.col_offset, nid, regex=True))
            elif isinstance(sub, ast.Subscript) and isinstance(sub.ctx, ast.Load):
                if not isinstance(sub.slice, ast.Slice) and \
                        typing.verdict_of(sub.value, nid).is_stringy:
                    ops.append(ConstraintOp("subscript", sub.lineno, sub.col_offset, nid))
            elif isinstance(sub, ast.Compare):
                operands = [sub.left, *sub.comparators]
                if any(isinstance(op, _COMPARE_OPS) for op in sub.ops) and \
                        any(typing.verdict_of(o, nid).is_stringy for o in operands) and \
                        _governs_branch(node, sub):
                    ops.append(ConstraintOp("compare", sub.lineno, sub.col_offset, nid))
        for target, value in tuple_destructures(node.node) if node.node is not None else []:
            if _split_feeds(value) is not None or _partition_feeds(value):
                ops.append(ConstraintOp("tuple-assignment", target.lineno, target.col_offset, nid))
    ops.sort(key=lambda o: (o.line, o.col, o.name))
    return ops


def _governs_branch(node: CfgNode, compare: ast.Compare) -> bool:
    """A comparison constrains when it decides control flow: a branch or loop test,
    a comprehension filter, a conditional expression or an assert."""
    stmt = node.node
    if isinstance(stmt, (ast.If, ast.While, ast.Assert, ast.match_case)):
        return True
    for sub in _walk_exprs(node):
        if isinstance(sub, (ast.ListComp, ast.SetComp, ast.GeneratorExp, ast.DictComp)):
            for gen in sub.generators:
                if any(compare is c or any(compare is x for x in ast.walk(c)) for c in gen.ifs):
                    return True
        if isinstance(sub, ast.IfExp) and any(compare is x for x in ast.walk(sub.test)):
            return True
    return False


def is_parser(sl: ParserSlice, api: KnownApiTable = DEFAULT_TABLE) -> bool:
    return bool(constraint_ops(sl, api))


def collect_parsers(fn: FunctionUnit, api: KnownApiTable = DEFAULT_TABLE,
                    module: ast.Module | None = None, project: str = "",
                    typing: FunctionTyping | None = None,
                    keep_all: bool = False) -> list[ParserSlice]:
    """Slices of ``fn`` in seed order, skipping seeds already covered by an earlier
    slice; only parser slices are returned unless ``keep_all``."""
    if typing is None:
        typing = type_function(fn, api, build_pdg(build_cfg(fn)), module)
    covered: set[int] = set()
    out: list[ParserSlice] = []
    for seed in typing.seeds:
        if seed.site in covered:
            continue
        sl = forward_slice(typing, seed, api, project)
        if not sl.statements:
            continue
        covered.update(sl.statements)
        if sl.is_parser or keep_all:
            out.append(sl)
    return out
