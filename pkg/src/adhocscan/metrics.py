"""Per-parser metric profile: size, position, complexity, inputs, calls, sugar,
regexes, loops and exceptions."""

from __future__ import annotations

import ast
import builtins
import sys
from collections import deque
from dataclasses import dataclass, field
from typing import Iterator

from .graphs import ENTRY, CfgNode
from .slicer import ParserSlice, _split_feeds, call_name, tuple_destructures
from .strtypes import NS, KnownApiTable, dotted_name
from .syntax import FunctionUnit, code_lines, module_name_for, unit_statements

BUILTIN_NAMES = frozenset(dir(builtins))
STDLIB_MODULES = frozenset(sys.stdlib_module_names) | {"__future__"}
# methods of builtin types, reported as builtin-or-stdlib when called on a value
BUILTIN_METHODS = frozenset(
    name for typ in (str, bytes, list, dict, set, tuple, int, float) for name in dir(typ)
    if not name.startswith("_")
) | {"group", "groups", "groupdict", "start", "end", "span", "expand", "match", "search",
     "fullmatch", "findall", "finditer", "sub", "subn", "read", "readline", "readlines",
     "write", "close"}

_EXPR_NODES = (ast.Call, ast.BinOp, ast.BoolOp, ast.Compare, ast.Subscript, ast.Slice,
               ast.ListComp, ast.SetComp, ast.DictComp, ast.GeneratorExp, ast.IfExp,
               ast.JoinedStr)
_COMPS = (ast.ListComp, ast.SetComp, ast.DictComp, ast.GeneratorExp)
_TRANSFORMS = frozenset({"strip", "lstrip", "rstrip", "lower", "upper", "casefold", "title",
                         "capitalize", "decode", "encode", "replace", "expandtabs"})


@dataclass(frozen=True)
class CallArg:
    kind: str  # string-literal, number-literal, variable, call, other
    literal_text: str | None = None


@dataclass(frozen=True)
class CallProfile:
    name: str
    origin: str
    ordinal: int
    rel_line: int
    args: tuple[CallArg, ...] = ()


@dataclass(frozen=True)
class RegexUse:
    api_name: str
    pattern: str
    ordinal: int
    role: str


@dataclass(frozen=True)
class LoopProfile:
    kind: str  # for, while, functional, recursive
    bound: str  # constant, linear-on-input, complex, unbounded
    site: tuple[int, int, int, int]


@dataclass(frozen=True)
class CaughtException:
    name: str
    scope: str  # slice, enclosing-function


@dataclass
class MetricRecord:
    slice_id: str
    project_name: str
    project_loc: int
    module_name: str
    ef_name: str
    ef_loc: int
    position_rel: float
    position_cat: str
    shotgun: bool
    loc: int
    cyclo: int
    input_source: str
    input_origin: str
    expression_count: int
    variable_count: int
    function_count: int
    calls: list[CallProfile] = field(default_factory=list)
    sugar: list[str] = field(default_factory=list)
    regexes: list[RegexUse] = field(default_factory=list)
    loops: list[LoopProfile] = field(default_factory=list)
    loop_nesting_depth: int = 0
    caught_exceptions: list[CaughtException] = field(default_factory=list)
    uncaught_exceptions: list[str] = field(default_factory=list)
    raised_exceptions: list[str] = field(default_factory=list)
    regular_candidate: bool = True
    # identity and bookkeeping used by `show` and the report
    seed_name: str = ""
    seed_line: int = 0
    seed_col: int = 0
    source_path: str = ""
    ef_span: tuple[int, int] = (0, 0)
    slice_lines: list[int] = field(default_factory=list)
    potential_exceptions: list[str] = field(default_factory=list)
    split_tuple_count: int = 0


@dataclass(frozen=True)
class ProjectIndex:
    """Names defined in a project, for resolving call origins."""
    functions: frozenset[str] = frozenset()
    modules: frozenset[str] = frozenset()


# ---------------------------------------------------------------- helpers

def slice_walk(sl: ParserSlice) -> Iterator[tuple[CfgNode, ast.AST]]:
    # every metric walks the same expressions; walk them once per slice
    walked = sl.__dict__.get("_walked")
    if walked is None:
        walked = [(node, sub) for node in sl.nodes() for expr in node.exprs
                  for sub in ast.walk(expr)]
        sl.__dict__["_walked"] = walked
    return iter(walked)


def _ancestors(sl: ParserSlice, node_id: int) -> list[int]:
    parents = sl.pdg.cfg.control_parent
    out = []
    while node_id in parents:
        node_id = parents[node_id]
        out.append(node_id)
    return out


def _name_pos(call: ast.Call) -> tuple[int, int]:
    """Where the callee's name appears; orders chained calls left to right."""
    func = call.func
    if isinstance(func, ast.Attribute):
        return (func.end_lineno, func.end_col_offset - len(func.attr))
    return (func.lineno, func.col_offset)


# ---------------------------------------------------------------- position

def locate(sl: ParserSlice, fn: FunctionUnit | None = None) -> tuple[float, str, bool]:
    fn = fn or sl.fn
    first_body = fn.body_start
    count = fn.span[1] - first_body + 1
    rel = (sl.first_line - first_body) / max(1, count - 1)
    rel = round(min(1.0, max(0.0, rel)), 6)
    if rel <= 0.25:
        cat = "beginning"
    elif rel >= 0.75:
        cat = "end"
    else:
        cat = "middle"
    return rel, cat, count_gaps(sl) >= 2


def count_gaps(sl: ParserSlice) -> int:
    """Maximal runs of non-slice lines inside the slice's span holding a non-slice statement."""
    members = set(sl.statements)
    others = {n.line for n in sl.pdg.nodes
              if n.node is not None and n.id not in members}
    gaps = 0
    in_gap = False
    has_stmt = False
    for ln in range(sl.first_line, sl.last_line + 1):
        if ln in sl.line_span:
            if in_gap and has_stmt:
                gaps += 1
            in_gap = has_stmt = False
        else:
            in_gap = True
            has_stmt = has_stmt or ln in others
    return gaps


# ---------------------------------------------------------------- complexity

def complexity(sl: ParserSlice) -> int:
    points = 0
    members = set(sl.statements)
    for node in sl.nodes():
        stmt = node.node
        if isinstance(stmt, (ast.If, ast.While, ast.For, ast.AsyncFor, ast.ExceptHandler,
                             ast.match_case)):
            points += 1
        for expr in node.exprs:
            for sub in ast.walk(expr):
                if isinstance(sub, ast.BoolOp):
                    points += len(sub.values) - 1
                elif isinstance(sub, ast.IfExp):
                    points += 1
                elif isinstance(sub, _COMPS):
                    points += sum(len(g.ifs) for g in sub.generators)
    # handlers of a try whose body holds slice statements are decision points too
    cfg = sl.pdg.cfg
    for node in cfg.nodes:
        if node.kind == "try":
            body_ids = {cfg.by_stmt.get(id(s)) for s in unit_statements(node.node.body)}
            if body_ids & members:
                for h in node.node.handlers:
                    hid = cfg.by_stmt.get(id(h))
                    if hid not in members:
                        points += 1
    return 1 + points


# ---------------------------------------------------------------- inputs

_ORIGIN_PREFIXES = (
    ("sys.stdin", "stdin"),
    ("sys.argv", "command-line"),
    ("os.environ", "environment-variable"),
    ("os.getenv", "environment-variable"),
    ("subprocess.", "process-output"),
    ("os.popen", "process-output"),
    ("requests.", "network"),
    ("urllib.", "network"),
    ("http.", "network"),
    ("socket.", "network"),
    ("argparse.", "command-line"),
)
_METHOD_ORIGINS = {"recv": "network", "recvfrom": "network", "communicate": "process-output",
                   "parse_args": "command-line", "read_text": "file"}


def _qualified(expr: ast.AST, aliases: dict[str, str]) -> str | None:
    name = dotted_name(expr)
    if name is None:
        return None
    head, _, rest = name.partition(".")
    if head in aliases:
        return aliases[head] + ("." + rest if rest else "")
    return name


def _origin_of_expr(expr: ast.AST, api: KnownApiTable, aliases: dict[str, str]) -> str | None:
    for sub in ast.walk(expr):
        target = sub.func if isinstance(sub, ast.Call) else sub
        if not isinstance(target, (ast.Name, ast.Attribute)):
            continue
        if isinstance(target, ast.Name) and not isinstance(sub, ast.Call) and target.id not in aliases:
            continue
        q = _qualified(target, aliases)
        if q:
            fact = api.lookup(q)
            if fact is not None and fact.origin:
                return fact.origin
            for prefix, origin in _ORIGIN_PREFIXES:
                if q == prefix or q.startswith(prefix if prefix.endswith(".") else prefix + "."):
                    return origin
                if q.startswith(prefix) and prefix.endswith("."):
                    return origin
        if isinstance(sub, ast.Call) and isinstance(sub.func, ast.Attribute):
            attr = sub.func.attr
            fact = api.method(attr)
            if fact is not None and fact.origin:
                return fact.origin
            if attr in _METHOD_ORIGINS:
                return _METHOD_ORIGINS[attr]
    return None


def _bound_value(stmt: ast.AST, var: str) -> ast.AST | None:
    if isinstance(stmt, (ast.Assign, ast.AnnAssign)):
        return stmt.value
    if isinstance(stmt, ast.AugAssign):
        return stmt.value
    if isinstance(stmt, (ast.For, ast.AsyncFor)):
        return stmt.iter
    if isinstance(stmt, (ast.With, ast.AsyncWith)):
        for item in stmt.items:
            if item.optional_vars is not None and var in {
                    n.id for n in ast.walk(item.optional_vars) if isinstance(n, ast.Name)}:
                return item.context_expr
    for sub in ast.walk(stmt):
        if isinstance(sub, ast.NamedExpr) and sub.target.id == var:
            return sub.value
    return None


def _source_kind(expr: ast.AST | None, sl: ParserSlice, node_id: int, depth: int = 0) -> str:
    if expr is None or depth > 8:
        return "unknown"
    aliases = sl.typing.aliases
    while isinstance(expr, ast.Call) and isinstance(expr.func, ast.Attribute) \
            and expr.func.attr in _TRANSFORMS:
        expr = expr.func.value
    if isinstance(expr, ast.Subscript):
        if _qualified(expr.value, aliases) == "os.environ":
            return "environment-subscript"
        return _source_kind(expr.value, sl, node_id, depth + 1)
    if isinstance(expr, (ast.JoinedStr, ast.Constant)):
        return "literal"
    if isinstance(expr, ast.Call):
        return "function-call"
    if isinstance(expr, ast.Attribute):
        base = expr.value
        while isinstance(base, ast.Attribute):
            base = base.value
        if isinstance(base, ast.Name) and base.id in ("self", "cls"):
            return "instance-attribute"
        return "global-variable"
    if isinstance(expr, ast.Name):
        pdg = sl.pdg
        defs = pdg.defs_reaching(node_id, expr.id)
        params = {p for p, _ in sl.fn.parameters}
        if not defs or defs == [ENTRY]:
            if expr.id in params:
                return "ef-argument"
            return "global-variable"
        if len(defs) == 1:
            d = defs[0]
            return _source_kind(_bound_value(pdg.nodes[d].node, expr.id), sl, d, depth + 1)
        return "unknown"
    if isinstance(expr, ast.BinOp):
        return _source_kind(expr.left, sl, node_id, depth + 1)
    return "unknown"


def input_classify(sl: ParserSlice, fn: FunctionUnit | None = None,
                   api: KnownApiTable | None = None) -> tuple[str, str]:
    fn = fn or sl.fn
    api = api or sl.typing.api
    seed = sl.seed
    params = {p for p, _ in fn.parameters}
    if seed.node == ENTRY:
        if seed.variable_name in params:
            return "ef-argument", "caller-provided"
        return "global-variable", "unknown"
    pdg = sl.pdg
    stmt = pdg.nodes[seed.node].node
    source = _source_kind(_bound_value(stmt, seed.variable_name), sl, seed.node)
    return source, _trace_origin(sl, api)


def _is_method(fn: FunctionUnit) -> bool:
    return bool(fn.parameters) and fn.parameters[0][0] in ("self", "cls")


def _trace_origin(sl: ParserSlice, api: KnownApiTable) -> str:
    """Breadth-first backward walk over data edges from the seed's definition."""
    pdg = sl.pdg
    aliases = sl.typing.aliases
    params = {p for p, _ in sl.fn.parameters}
    if _is_method(sl.fn):
        # the receiver carries instance state, not a value the caller passed in
        params.discard(sl.fn.parameters[0][0])
    queue = deque([(sl.seed.node, sl.seed.variable_name)])
    seen = {queue[0]}
    while queue:
        node_id, var = queue.popleft()
        if node_id == ENTRY:
            if var in params:
                return "caller-provided"
            continue
        node = pdg.nodes[node_id]
        value = _bound_value(node.node, var)
        exprs = [value] if value is not None else node.exprs
        for expr in exprs:
            origin = _origin_of_expr(expr, api, aliases)
            if origin:
                return origin
        used: set[str] = set()
        for expr in exprs:
            used |= {n.id for n in ast.walk(expr) if isinstance(n, ast.Name)}
        for u in sorted(used & node.uses):
            for d in sorted(pdg.defs_reaching(node_id, u)):
                if (d, u) not in seen:
                    seen.add((d, u))
                    queue.append((d, u))
    return "unknown"


# ---------------------------------------------------------------- calls

def _arg_kind(expr: ast.AST) -> CallArg:
    if isinstance(expr, ast.Constant):
        if isinstance(expr.value, str):
            return CallArg("string-literal", expr.value)
        if isinstance(expr.value, (int, float, complex)) and not isinstance(expr.value, bool):
            return CallArg("number-literal", repr(expr.value))
        return CallArg("other", repr(expr.value))
    if isinstance(expr, ast.UnaryOp) and isinstance(expr.op, ast.USub) \
            and isinstance(expr.operand, ast.Constant) and isinstance(expr.operand.value, (int, float)):
        return CallArg("number-literal", "-" + repr(expr.operand.value))
    if isinstance(expr, (ast.Name, ast.Attribute)):
        return CallArg("variable")
    if isinstance(expr, ast.Call):
        return CallArg("call")
    return CallArg("other")


def _call_origin(call: ast.Call | None, name: str, aliases: dict[str, str],
                 index: ProjectIndex, local_names: frozenset[str]) -> str:
    func = call.func if call is not None else None
    simple = name.rsplit(".", 1)[-1]
    if func is None or isinstance(func, ast.Name):
        ident = func.id if func is not None else name
        if ident in aliases:
            head = aliases[ident].split(".", 1)[0]
            if head in index.modules:
                return "user-defined"
            return "builtin-or-stdlib" if head in STDLIB_MODULES else "third-party"
        if ident in index.functions:
            return "user-defined"
        if ident in BUILTIN_NAMES:
            return "builtin-or-stdlib"
        return "unknown"
    if "." in name:
        head = name.split(".", 1)[0]
        if head in index.modules:
            return "user-defined"
        if head in STDLIB_MODULES:
            return "builtin-or-stdlib"
        if head in {a.split(".", 1)[0] for a in aliases.values()} or head in local_names:
            return "third-party"
        return "unknown"
    receiver = func.value if isinstance(func, ast.Attribute) else None
    if isinstance(receiver, ast.Name) and receiver.id in ("self", "cls"):
        return "user-defined" if simple in index.functions else "unknown"
    if simple in BUILTIN_METHODS:
        return "builtin-or-stdlib"
    if simple in index.functions:
        return "user-defined"
    return "unknown"


def call_profile(sl: ParserSlice, project_index: ProjectIndex | None = None,
                 imported: frozenset[str] = frozenset()) -> tuple[int, list[CallProfile]]:
    index = project_index or ProjectIndex()
    aliases = sl.typing.aliases
    found: list[tuple[tuple[int, int], str, ast.Call | None, tuple[CallArg, ...]]] = []
    for _, sub in slice_walk(sl):
        if not isinstance(sub, ast.Call):
            continue
        name = call_name(sub, aliases)
        if name is None:
            name = "<expr>"
        args = tuple(_arg_kind(a) for a in [*sub.args, *(k.value for k in sub.keywords)])
        found.append((_name_pos(sub), name, sub, args))
        if isinstance(sub.func, ast.Name) and sub.func.id in ("map", "filter") and sub.args \
                and isinstance(sub.args[0], (ast.Name, ast.Attribute)):
            fn_arg = sub.args[0]
            mapped = _qualified(fn_arg, aliases) or "<expr>"
            if isinstance(fn_arg, ast.Attribute) and not mapped.startswith("str."):
                mapped = fn_arg.attr if mapped.split(".", 1)[0] not in STDLIB_MODULES else mapped
            found.append(((fn_arg.lineno, fn_arg.col_offset), mapped, None, ()))
    found.sort(key=lambda x: (x[0], x[1]))
    start = sl.first_line
    calls = []
    for i, (pos, name, call, args) in enumerate(found, 1):
        origin = _call_origin(call, name, aliases, index, imported)
        calls.append(CallProfile(name, origin, i, pos[0] - start, args))
    return len(calls), calls


# ---------------------------------------------------------------- sugar

def _is_negative_index(expr: ast.AST) -> bool:
    return isinstance(expr, ast.UnaryOp) and isinstance(expr.op, ast.USub) \
        and isinstance(expr.operand, ast.Constant) and isinstance(expr.operand.value, int)


def _chain_receiver(expr: ast.AST) -> ast.AST:
    while isinstance(expr, ast.Subscript):
        expr = expr.value
    return expr


def sugar_profile(sl: ParserSlice) -> list[str]:
    tags: set[str] = set()
    for node, sub in slice_walk(sl):
        if isinstance(sub, ast.Subscript):
            if isinstance(sub.slice, ast.Slice):
                tags.add("slice-notation")
            else:
                tags.add("subscript")
                if _is_negative_index(sub.slice):
                    # indexing from the end is reported with slice notation as well
                    tags.add("slice-notation")
        elif isinstance(sub, ast.Starred):
            tags.add("star-unpack")
        elif isinstance(sub, ast.ListComp):
            tags.add("list-comprehension")
        elif isinstance(sub, ast.GeneratorExp):
            tags.add("generator-expr")
        elif isinstance(sub, (ast.DictComp, ast.SetComp)):
            tags.add("dict-or-set-comprehension")
        elif isinstance(sub, ast.JoinedStr):
            tags.add("f-string")
        elif isinstance(sub, ast.IfExp):
            tags.add("conditional-expr")
        elif isinstance(sub, ast.Compare) and len(sub.ops) >= 2:
            tags.add("chained-comparison")
        elif isinstance(sub, ast.Call) and isinstance(sub.func, ast.Attribute) \
                and isinstance(_chain_receiver(sub.func.value), ast.Call):
            tags.add("method-chaining")
    for node in sl.nodes():
        stmt = node.node
        targets: list[ast.AST] = []
        if isinstance(stmt, ast.Assign):
            targets = stmt.targets
        elif isinstance(stmt, (ast.For, ast.AsyncFor)):
            targets = [stmt.target]
        if any(isinstance(t, (ast.Tuple, ast.List)) for t in targets):
            tags.add("tuple-assignment")
    return sorted(tags)


# ---------------------------------------------------------------- loops

_FUNCTIONAL_CALLS = frozenset({"map", "filter"})


def _is_literal_iterable(expr: ast.AST) -> bool:
    if isinstance(expr, (ast.List, ast.Tuple, ast.Set)):
        return all(isinstance(e, ast.Constant) for e in expr.elts)
    if isinstance(expr, ast.Constant):
        return True
    if isinstance(expr, ast.Call) and isinstance(expr.func, ast.Name) and expr.func.id == "range":
        return all(isinstance(a, ast.Constant) or _is_negative_index(a) for a in expr.args)
    return False


def loop_profile(sl: ParserSlice, fn: FunctionUnit | None = None) -> tuple[list[LoopProfile], int]:
    fn = fn or sl.fn
    pdg = sl.pdg
    typing = sl.typing
    members = set(sl.statements)
    explicit: set[int] = {i for i in members if pdg.nodes[i].kind == "loop"}
    for i in members:
        explicit.update(a for a in _ancestors(sl, i) if pdg.nodes[a].kind == "loop")

    def depth_of(node_id: int, include_self: bool) -> int:
        chain = [a for a in _ancestors(sl, node_id) if a in explicit]
        return len(chain) + (1 if include_self and node_id in explicit else 0)

    entries: list[tuple[tuple[int, int], LoopProfile, int]] = []
    absorbed: set[int] = set()
    for lid in sorted(explicit):
        node = pdg.nodes[lid]
        stmt = node.node
        site = node.span
        if isinstance(stmt, ast.While):
            kind = "while"
            if isinstance(stmt.test, ast.Constant) and bool(stmt.test.value):
                bound = "complex" if _slice_governed_break(sl, lid, stmt) else "unbounded"
            else:
                bound = "complex"
        else:
            kind = "for"
            absorbed.add(id(stmt.iter))
            if _is_literal_iterable(stmt.iter):
                bound = "constant"
            elif typing.verdict_of(stmt.iter, lid).is_stringy:
                bound = "linear-on-input"
            else:
                bound = "complex"
        entries.append((site[:2], LoopProfile(kind, bound, site), depth_of(lid, True)))

    api = typing.api
    for node in sl.nodes():
        base_depth = depth_of(node.id, node.kind == "loop") + 1
        for expr in node.exprs:
            for sub in ast.walk(expr):
                if id(sub) in absorbed or not isinstance(sub, (ast.Call, *_COMPS)):
                    continue
                site = _span(sub)
                if isinstance(sub, _COMPS):
                    gen = sub.generators[0]
                    bound = "constant" if _is_literal_iterable(gen.iter) else "linear-on-input"
                    entries.append((site[:2], LoopProfile("functional", bound, site), base_depth))
                elif isinstance(sub, ast.Call):
                    name = call_name(sub, typing.aliases)
                    if name is None:
                        continue
                    if _is_recursive(sub, fn):
                        entries.append((site[:2], LoopProfile("recursive", "complex", site), base_depth))
                        continue
                    fact = api.lookup(name) if "." in name else None
                    if fact is None and isinstance(sub.func, ast.Attribute):
                        fact = api.method(sub.func.attr)
                    functional = name in _FUNCTIONAL_CALLS or (
                        fact is not None and fact.loop == "functional-linear")
                    if not functional:
                        continue
                    iterable = _functional_input(sub, name)
                    bound = "constant" if iterable is not None and _is_literal_iterable(iterable) \
                        else "linear-on-input"
                    entries.append((_name_pos(sub), LoopProfile("functional", bound, site), base_depth))
    entries.sort(key=lambda e: (e[0], e[1].kind))
    loops = [e[1] for e in entries]
    depth = max((e[2] for e in entries), default=0)
    return loops, depth


def _span(node: ast.AST) -> tuple[int, int, int, int]:
    return (node.lineno, node.col_offset, node.end_lineno, node.end_col_offset)


def _functional_input(call: ast.Call, name: str) -> ast.AST | None:
    if name in _FUNCTIONAL_CALLS:
        return call.args[1] if len(call.args) > 1 else None
    if isinstance(call.func, ast.Attribute) and call.func.attr == "join":
        return call.args[0] if call.args else None
    if isinstance(call.func, ast.Attribute):
        return call.func.value
    return None


def _is_recursive(call: ast.Call, fn: FunctionUnit) -> bool:
    if fn.is_synthetic_main:
        return False
    func = call.func
    if isinstance(func, ast.Name):
        return func.id == fn.name
    return isinstance(func, ast.Attribute) and func.attr == fn.name \
        and isinstance(func.value, ast.Name) and func.value.id in ("self", "cls")


def _slice_governed_break(sl: ParserSlice, loop_id: int, loop: ast.While) -> bool:
    members = set(sl.statements)
    cfg = sl.pdg.cfg
    for stmt in _loop_breaks(loop.body):
        bid = cfg.by_stmt.get(id(stmt))
        if bid is None:
            continue
        for a in _ancestors(sl, bid):
            if a == loop_id:
                break
            if a in members:
                return True
    return False


def _loop_breaks(body: list[ast.stmt]) -> Iterator[ast.stmt]:
    for stmt in body:
        if isinstance(stmt, ast.Break):
            yield stmt
        elif isinstance(stmt, (ast.For, ast.AsyncFor, ast.While, ast.FunctionDef,
                               ast.AsyncFunctionDef, ast.ClassDef)):
            continue
        else:
            for name in ("body", "orelse", "finalbody"):
                yield from _loop_breaks(getattr(stmt, name, []) or [])
            for h in getattr(stmt, "handlers", []) or []:
                yield from _loop_breaks(h.body)


# ---------------------------------------------------------------- regexes

def _regex_pattern(call: ast.Call, sl: ParserSlice, node_id: int, module_call: bool) -> str:
    if module_call:
        arg = call.args[0] if call.args else next(
            (k.value for k in call.keywords if k.arg == "pattern"), None)
        if isinstance(arg, ast.Constant) and isinstance(arg.value, str):
            return arg.value
        return "<dynamic>"
    receiver = call.func.value if isinstance(call.func, ast.Attribute) else None
    if isinstance(receiver, ast.Name):
        defs = sl.pdg.defs_reaching(node_id, receiver.id)
        if len(defs) == 1 and defs[0] != ENTRY:
            value = _bound_value(sl.pdg.nodes[defs[0]].node, receiver.id)
            if isinstance(value, ast.Call) and call_name(value, sl.typing.aliases) == "re.compile":
                return _regex_pattern(value, sl, defs[0], True)
    return "<dynamic>"


def regex_profile(sl: ParserSlice, api: KnownApiTable | None = None,
                  loops: list[LoopProfile] | None = None,
                  depth: int | None = None) -> tuple[list[RegexUse], bool]:
    ops = sl.constraint_ops
    regex_ordinals = [i for i, op in enumerate(ops, 1) if op.regex]
    other = [i for i, op in enumerate(ops, 1) if not op.regex]
    calls = {}
    for node, sub in slice_walk(sl):
        if isinstance(sub, ast.Call):
            calls[(sub.lineno, sub.col_offset, node.id)] = sub
    uses = []
    for ordinal in regex_ordinals:
        op = ops[ordinal - 1]
        call = calls.get((op.line, op.col, op.node))
        if not other:
            role = "only"
        elif ordinal < min(other):
            role = "first-pass"
        elif ordinal > max(other):
            role = "terminal"
        else:
            role = "interleaved"
        pattern = _regex_pattern(call, sl, op.node, "." in op.name) if call is not None else "<dynamic>"
        uses.append(RegexUse(op.name, pattern, ordinal, role))
    if loops is None or depth is None:
        loops, depth = loop_profile(sl)
    regular = depth <= 1 and not any(
        lp.kind in ("while", "recursive") or lp.bound in ("complex", "unbounded") for lp in loops)
    return uses, regular


# ---------------------------------------------------------------- exceptions

@dataclass
class ExceptionProfile:
    potential: list[tuple[str, int]]  # (exception name, node id)
    caught: list[CaughtException]
    uncaught: list[str]
    raised: list[str]
    excluded: list[str]  # potential instances matching an explicit raise

    def reconciles(self) -> bool:
        return len(self.potential) == len(self.caught) + len(self.uncaught) + len(self.excluded)


_MATCH_CALLS = frozenset({"re.match", "re.search", "re.fullmatch"})
_MATCH_ACCESSORS = frozenset({"group", "groups", "groupdict", "start", "end", "span", "expand"})
_CATCH_ALL = frozenset({"Exception", "BaseException"})


def _is_match_producer(expr: ast.AST, aliases: dict[str, str]) -> bool:
    if not isinstance(expr, ast.Call):
        return False
    name = call_name(expr, aliases)
    if name in _MATCH_CALLS:
        return True
    return isinstance(expr.func, ast.Attribute) and expr.func.attr in ("match", "search", "fullmatch") \
        and "." not in (name or "")


def _match_checked(sl: ParserSlice, node_id: int, var: str) -> bool:
    """True when a predicate testing ``var`` guards the node, either by enclosing it
    or by exiting early before it."""
    pdg = sl.pdg
    for a in _ancestors(sl, node_id):
        test = getattr(pdg.nodes[a].node, "test", None)
        if test is not None and any(isinstance(n, ast.Name) and n.id == var for n in ast.walk(test)):
            return True
    line = pdg.nodes[node_id].line
    for node in pdg.nodes:
        stmt = node.node
        if isinstance(stmt, ast.If) and node.line < line and stmt.body and isinstance(
                stmt.body[-1], (ast.Return, ast.Raise, ast.Continue, ast.Break)):
            if any(isinstance(n, ast.Name) and n.id == var for n in ast.walk(stmt.test)):
                return True
    return False


def potential_exceptions(sl: ParserSlice) -> list[tuple[str, int, int, int]]:
    """(name, node id, line, col) for each risky operation in the slice."""
    typing = sl.typing
    aliases = typing.aliases
    api = typing.api
    out: list[tuple[str, int, int, int]] = []
    for node in sl.nodes():
        nid = node.id
        for expr in node.exprs:
            for sub in ast.walk(expr):
                if isinstance(sub, ast.Subscript) and isinstance(sub.ctx, ast.Load) \
                        and not isinstance(sub.slice, ast.Slice):
                    base = typing.verdict_of(sub.value, nid)
                    if base.is_stringy:
                        out.append(("IndexError", nid, sub.lineno, sub.col_offset))
                    elif _qualified(sub.value, aliases) == "os.environ" or \
                            typing.verdict_of(sub.slice, nid).is_stringy:
                        out.append(("KeyError", nid, sub.lineno, sub.col_offset))
                elif isinstance(sub, ast.Call):
                    out.extend(_call_risks(sub, sl, nid, api, aliases))
        for target, value in tuple_destructures(node.node) if node.node is not None else []:
            if _split_feeds(value) is not None:
                out.append(("ValueError", nid, target.lineno, target.col_offset))
    out.sort(key=lambda x: (x[2], x[3], x[0]))
    return out


def _call_risks(call: ast.Call, sl: ParserSlice, nid: int, api: KnownApiTable,
                aliases: dict[str, str]) -> list[tuple[str, int, int, int]]:
    typing = sl.typing
    pos = (call.lineno, call.col_offset)
    name = call_name(call, aliases)
    if name is None:
        return []
    fact = api.lookup(name)
    if fact is not None and fact.role == "conversion":
        if call.args and typing.verdict_of(call.args[0], nid) is not NS:
            return [(n, nid, *pos) for n in sorted(fact.may_raise)]
        return []
    if isinstance(call.func, ast.Name) and call.func.id in ("map", "filter") and len(call.args) >= 2:
        mapped = _qualified(call.args[0], aliases) if isinstance(call.args[0], (ast.Name, ast.Attribute)) else None
        mfact = api.lookup(mapped) if mapped else None
        if mfact is not None and mfact.role == "conversion" \
                and typing.verdict_of(call.args[1], nid) is not NS:
            arg = call.args[0]
            return [(n, nid, arg.lineno, arg.col_offset) for n in sorted(mfact.may_raise)]
        return []
    if fact is not None and fact.may_raise:
        return [(n, nid, *pos) for n in sorted(fact.may_raise)]
    if isinstance(call.func, ast.Attribute):
        attr = call.func.attr
        if attr in _MATCH_ACCESSORS:
            recv = call.func.value
            if _is_match_producer(recv, aliases):
                return [("AttributeError", nid, *pos)]
            if isinstance(recv, ast.Name):
                defs = sl.pdg.defs_reaching(nid, recv.id)
                producing = [d for d in defs if d != ENTRY and _is_match_producer(
                    _bound_value(sl.pdg.nodes[d].node, recv.id), aliases)]
                if producing and not _match_checked(sl, nid, recv.id):
                    return [("AttributeError", nid, *pos)]
            return []
        mfact = api.method(attr)
        if mfact is not None and mfact.may_raise:
            return [(n, nid, *pos) for n in sorted(mfact.may_raise)]
    return []


def _try_ancestors(fn: FunctionUnit) -> dict[int, list[ast.Try]]:
    """For each statement, the try statements whose body encloses it, innermost first."""
    out: dict[int, list[ast.Try]] = {}

    def visit(body: list[ast.stmt], stack: list[ast.Try]) -> None:
        for stmt in body:
            out[id(stmt)] = list(reversed(stack))
            if isinstance(stmt, (ast.FunctionDef, ast.AsyncFunctionDef)):
                continue
            if isinstance(stmt, ast.Try):
                visit(stmt.body, stack + [stmt])
                for h in stmt.handlers:
                    out[id(h)] = list(reversed(stack))
                    visit(h.body, stack)
                visit(stmt.orelse, stack)
                visit(stmt.finalbody, stack)
                continue
            for name in ("body", "orelse"):
                visit(getattr(stmt, name, []) or [], stack)
            for case in getattr(stmt, "cases", []) or []:
                out[id(case)] = list(reversed(stack))
                visit(case.body, stack)

    visit(fn.node.body, [])
    return out


def _handler_names(handler: ast.ExceptHandler) -> set[str] | None:
    """Exception names a handler catches; None for a catch-all."""
    if handler.type is None:
        return None
    exprs = handler.type.elts if isinstance(handler.type, ast.Tuple) else [handler.type]
    names = set()
    for e in exprs:
        dn = dotted_name(e)
        if dn is None:
            continue
        if dn in _CATCH_ALL:
            return None
        names.add(dn)
        names.add(dn.rsplit(".", 1)[-1])
    return names


def _raised_name(stmt: ast.Raise) -> str | None:
    exc = stmt.exc
    if exc is None:
        return None
    if isinstance(exc, ast.Call):
        exc = exc.func
    return dotted_name(exc)


def exception_profile(sl: ParserSlice, fn: FunctionUnit | None = None) -> ExceptionProfile:
    fn = fn or sl.fn
    pdg = sl.pdg
    trys = _try_ancestors(fn)
    raised: list[str] = []
    for nid in [*sl.statements, *sl.attached_raises]:
        stmt = pdg.nodes[nid].node
        if isinstance(stmt, ast.Raise):
            name = _raised_name(stmt)
            if name:
                raised.append(name)
    raised_set = set(raised)
    caught: list[CaughtException] = []
    uncaught: list[str] = []
    excluded: list[str] = []
    potential = potential_exceptions(sl)
    for name, nid, _, _ in potential:
        stmt = pdg.nodes[nid].node
        scope = None
        for t in trys.get(id(stmt), []):
            for h in t.handlers:
                names = _handler_names(h)
                if names is None or name in names:
                    scope = "slice" if sl.first_line <= t.lineno <= sl.last_line else "enclosing-function"
                    break
            if scope:
                break
        if scope:
            caught.append(CaughtException(name, scope))
        elif name in raised_set:
            excluded.append(name)
        else:
            uncaught.append(name)
    return ExceptionProfile([(n, i) for n, i, _, _ in potential], caught, uncaught,
                            sorted(raised_set), excluded)


# ---------------------------------------------------------------- record

def expression_count(sl: ParserSlice) -> int:
    return sum(1 for _, sub in slice_walk(sl) if isinstance(sub, _EXPR_NODES))


def variable_count(sl: ParserSlice, imported: frozenset[str] = frozenset()) -> int:
    callees = {id(sub.func) for _, sub in slice_walk(sl) if isinstance(sub, ast.Call)}
    bound_locally = set()
    for node in sl.pdg.nodes:
        bound_locally.update(node.defs if node.id != ENTRY else ())
    bound_locally.update(p for p, _ in sl.fn.parameters)
    names = {sl.seed.variable_name}
    for _, sub in slice_walk(sl):
        if not isinstance(sub, ast.Name) or id(sub) in callees:
            continue
        if sub.id in imported and sub.id not in bound_locally:
            continue
        if sub.id in BUILTIN_NAMES and sub.id not in bound_locally:
            continue
        names.add(sub.id)
    return len(names)


def split_tuple_count(sl: ParserSlice) -> int:
    calls = set()
    for node in sl.nodes():
        for _, value in tuple_destructures(node.node) if node.node is not None else []:
            call = _split_feeds(value)
            if call is not None:
                calls.add(id(call))
    return len(calls)


def _dedupe(items):
    return sorted(set(items), key=lambda x: (x.name, x.scope) if isinstance(x, CaughtException) else x)


def build_record(sl: ParserSlice, source_text: str, *, project_name: str = "",
                 project_loc: int = 0, module_name: str | None = None,
                 project_index: ProjectIndex | None = None,
                 imported: frozenset[str] = frozenset(), source_path: str = "") -> MetricRecord:
    fn = sl.fn
    position_rel, position_cat, shotgun = locate(sl, fn)
    source, origin = input_classify(sl, fn)
    function_count, calls = call_profile(sl, project_index, imported)
    loops, depth = loop_profile(sl, fn)
    regexes, regular = regex_profile(sl, loops=loops, depth=depth)
    exc = exception_profile(sl, fn)
    lines = code_lines(source_text)
    return MetricRecord(
        slice_id=sl.slice_id,
        project_name=project_name,
        project_loc=project_loc,
        module_name=module_name if module_name is not None else module_name_for(fn.module_path),
        ef_name=fn.qualified_name,
        ef_loc=fn.ef_loc,
        position_rel=position_rel,
        position_cat=position_cat,
        shotgun=shotgun,
        loc=sum(1 for ln in sl.line_span if ln in lines),
        cyclo=complexity(sl),
        input_source=source,
        input_origin=origin,
        expression_count=expression_count(sl),
        variable_count=variable_count(sl, imported),
        function_count=function_count,
        calls=calls,
        sugar=sugar_profile(sl),
        regexes=regexes,
        loops=loops,
        loop_nesting_depth=depth,
        caught_exceptions=_dedupe(exc.caught),
        uncaught_exceptions=_dedupe(exc.uncaught),
        raised_exceptions=exc.raised,
        regular_candidate=regular,
        seed_name=sl.seed.variable_name,
        seed_line=sl.seed.line,
        seed_col=sl.seed.col,
        source_path=source_path,
        ef_span=fn.span,
        slice_lines=sorted(sl.line_span),
        potential_exceptions=sorted({n for n, _ in exc.potential}),
        split_tuple_count=split_tuple_count(sl),
    )
