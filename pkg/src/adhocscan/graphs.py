"""Statement-level control-flow graphs and intra-procedural program-dependence graphs."""

from __future__ import annotations

import ast
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .syntax import FunctionUnit

ENTRY = 0

_FUNC_TYPES = (ast.FunctionDef, ast.AsyncFunctionDef)
_COMP_TYPES = (ast.ListComp, ast.SetComp, ast.GeneratorExp, ast.DictComp)


# ---------------------------------------------------------------- names

def _target_names(target: ast.AST, defs: list[str], uses: set[str]) -> None:
    if isinstance(target, ast.Name):
        defs.append(target.id)
    elif isinstance(target, (ast.Tuple, ast.List)):
        for elt in target.elts:
            _target_names(elt, defs, uses)
    elif isinstance(target, ast.Starred):
        _target_names(target.value, defs, uses)
    elif isinstance(target, (ast.Attribute, ast.Subscript)):
        # weak update of the base name: both a definition and a use
        base = target
        while isinstance(base, (ast.Attribute, ast.Subscript)):
            if isinstance(base, ast.Subscript):
                _expr_names(base.slice, uses, defs)
            base = base.value
        if isinstance(base, ast.Name):
            defs.append(base.id)
            uses.add(base.id)
        else:
            _expr_names(base, uses, defs)


def _expr_names(expr: ast.AST | None, uses: set[str], defs: list[str],
                bound: frozenset[str] = frozenset()) -> None:
    """Collect names read by ``expr`` (scope-aware for comprehensions and lambdas)."""
    if expr is None:
        return
    if isinstance(expr, ast.Name):
        if isinstance(expr.ctx, ast.Load) and expr.id not in bound:
            uses.add(expr.id)
        elif isinstance(expr.ctx, ast.Del):
            uses.add(expr.id)
        return
    if isinstance(expr, ast.NamedExpr):
        _expr_names(expr.value, uses, defs, bound)
        defs.append(expr.target.id)
        return
    if isinstance(expr, _COMP_TYPES):
        inner = set(bound)
        for i, gen in enumerate(expr.generators):
            _expr_names(gen.iter, uses, defs, frozenset(inner) if i else bound)
            tdefs: list[str] = []
            _target_names(gen.target, tdefs, set())
            inner.update(tdefs)
            for cond in gen.ifs:
                _expr_names(cond, uses, defs, frozenset(inner))
        frozen = frozenset(inner)
        if isinstance(expr, ast.DictComp):
            _expr_names(expr.key, uses, defs, frozen)
            _expr_names(expr.value, uses, defs, frozen)
        else:
            _expr_names(expr.elt, uses, defs, frozen)
        return
    if isinstance(expr, ast.Lambda):
        a = expr.args
        for d in [*a.defaults, *a.kw_defaults]:
            _expr_names(d, uses, defs, bound)
        params = {p.arg for p in [*a.posonlyargs, *a.args, *a.kwonlyargs]}
        if a.vararg:
            params.add(a.vararg.arg)
        if a.kwarg:
            params.add(a.kwarg.arg)
        _expr_names(expr.body, uses, defs, bound | params)
        return
    for child in ast.iter_child_nodes(expr):
        _expr_names(child, uses, defs, bound)


def header_exprs(stmt: ast.AST) -> list[ast.AST]:
    """Expressions evaluated by the statement's own CFG node (bodies excluded)."""
    if isinstance(stmt, (ast.If, ast.While)):
        return [stmt.test]
    if isinstance(stmt, (ast.For, ast.AsyncFor)):
        return [stmt.target, stmt.iter]
    if isinstance(stmt, (ast.With, ast.AsyncWith)):
        out: list[ast.AST] = []
        for item in stmt.items:
            out.append(item.context_expr)
            if item.optional_vars is not None:
                out.append(item.optional_vars)
        return out
    if isinstance(stmt, ast.ExceptHandler):
        return [stmt.type] if stmt.type is not None else []
    if isinstance(stmt, _FUNC_TYPES):
        a = stmt.args
        out = [*stmt.decorator_list, *a.defaults, *[d for d in a.kw_defaults if d is not None]]
        return out
    if isinstance(stmt, ast.ClassDef):
        return [*stmt.decorator_list, *stmt.bases, *[k.value for k in stmt.keywords]]
    if isinstance(stmt, ast.Try):
        return []
    if isinstance(stmt, ast.Match):
        return [stmt.subject]
    if isinstance(stmt, ast.match_case):
        return [stmt.pattern] + ([stmt.guard] if stmt.guard is not None else [])
    return [stmt]


def _pattern_names(pattern: ast.AST, defs: list[str]) -> None:
    for node in ast.walk(pattern):
        name = getattr(node, "name", None)
        if isinstance(node, (ast.MatchAs, ast.MatchStar)) and name:
            defs.append(name)
        elif isinstance(node, ast.MatchMapping) and node.rest:
            defs.append(node.rest)


def defs_uses(stmt: ast.AST) -> tuple[tuple[str, ...], frozenset[str]]:
    """Names defined and used by a statement's own CFG node."""
    defs: list[str] = []
    uses: set[str] = set()
    if isinstance(stmt, ast.Assign):
        _expr_names(stmt.value, uses, defs)
        for t in stmt.targets:
            _target_names(t, defs, uses)
    elif isinstance(stmt, ast.AnnAssign):
        _expr_names(stmt.value, uses, defs)
        if stmt.value is not None or not isinstance(stmt.target, ast.Name):
            _target_names(stmt.target, defs, uses)
    elif isinstance(stmt, ast.AugAssign):
        _expr_names(stmt.value, uses, defs)
        if isinstance(stmt.target, ast.Name):
            uses.add(stmt.target.id)
        _target_names(stmt.target, defs, uses)
    elif isinstance(stmt, (ast.For, ast.AsyncFor)):
        _expr_names(stmt.iter, uses, defs)
        _target_names(stmt.target, defs, uses)
    elif isinstance(stmt, (ast.With, ast.AsyncWith)):
        for item in stmt.items:
            _expr_names(item.context_expr, uses, defs)
            if item.optional_vars is not None:
                _target_names(item.optional_vars, defs, uses)
    elif isinstance(stmt, ast.ExceptHandler):
        _expr_names(stmt.type, uses, defs)
        if stmt.name:
            defs.append(stmt.name)
    elif isinstance(stmt, (ast.Import, ast.ImportFrom)):
        for alias in stmt.names:
            if alias.name == "*":
                continue
            defs.append(alias.asname or alias.name.split(".")[0])
    elif isinstance(stmt, (*_FUNC_TYPES, ast.ClassDef)):
        for e in header_exprs(stmt):
            _expr_names(e, uses, defs)
        defs.append(stmt.name)
    elif isinstance(stmt, ast.match_case):
        _pattern_names(stmt.pattern, defs)
        for node in ast.walk(stmt.pattern):
            if isinstance(node, ast.MatchValue):
                _expr_names(node.value, uses, defs)
        _expr_names(stmt.guard, uses, defs)
    elif isinstance(stmt, (ast.Global, ast.Nonlocal, ast.Try)):
        pass
    else:
        for e in header_exprs(stmt):
            _expr_names(e, uses, defs)
    seen: dict[str, None] = {}
    for d in defs:
        seen.setdefault(d, None)
    return tuple(seen), frozenset(uses)


# ---------------------------------------------------------------- CFG

@dataclass
class CfgNode:
    id: int
    kind: str  # entry, exit, stmt, predicate, loop, handler, try, def, with
    node: ast.AST | None = field(repr=False)
    span: tuple[int, int, int, int]
    defs: tuple[str, ...] = ()
    uses: frozenset[str] = frozenset()

    @property
    def line(self) -> int:
        return self.span[0]

    @property
    def lines(self) -> range:
        return range(self.span[0], self.span[2] + 1)

    @property
    def exprs(self) -> list[ast.AST]:
        return header_exprs(self.node) if self.node is not None else []


@dataclass
class Cfg:
    fn: FunctionUnit = field(repr=False)
    nodes: list[CfgNode]
    edges: list[tuple[int, int, str]]
    entry: int
    exit: int
    dead: frozenset[int] = frozenset()
    control_parent: dict[int, int] = field(default_factory=dict)
    by_stmt: dict[int, int] = field(default_factory=dict, repr=False)

    def successors(self) -> dict[int, list[int]]:
        succ: dict[int, list[int]] = defaultdict(list)
        for s, d, _ in self.edges:
            if d not in succ[s]:
                succ[s].append(d)
        return succ

    def node_for(self, stmt: ast.AST) -> CfgNode | None:
        nid = self.by_stmt.get(id(stmt))
        return None if nid is None else self.nodes[nid]


def _header_span(stmt: ast.AST) -> tuple[int, int, int, int]:
    """Span of the part of a statement evaluated by its own node."""
    if isinstance(stmt, ast.match_case):
        parts = header_exprs(stmt)
        first, last = parts[0], parts[-1]
        return (first.lineno, first.col_offset, last.end_lineno, last.end_col_offset)
    start = (stmt.lineno, stmt.col_offset)
    if isinstance(stmt, (*_FUNC_TYPES, ast.ClassDef)) and stmt.decorator_list:
        d = stmt.decorator_list[0]
        start = (d.lineno, d.col_offset - 1)
    if isinstance(stmt, (ast.If, ast.While, ast.For, ast.AsyncFor, ast.With, ast.AsyncWith,
                         ast.ExceptHandler, ast.Match, *_FUNC_TYPES, ast.ClassDef, ast.Try)):
        exprs = [e for e in header_exprs(stmt) if hasattr(e, "end_lineno")]
        if isinstance(stmt, (*_FUNC_TYPES, ast.ClassDef)):
            # the signature runs up to the first body statement
            body_line = stmt.body[0].lineno
            end_line = max([stmt.lineno] + [e.end_lineno for e in exprs if e.end_lineno < body_line])
            return (*start, end_line, 0)
        if exprs:
            last = max(exprs, key=lambda e: (e.end_lineno, e.end_col_offset))
            return (*start, last.end_lineno, last.end_col_offset)
        return (*start, stmt.lineno, stmt.col_offset)
    return (*start, stmt.end_lineno or stmt.lineno, stmt.end_col_offset or 0)


def _is_const_true(test: ast.AST) -> bool:
    return isinstance(test, ast.Constant) and bool(test.value) is True


@dataclass
class _TryCtx:
    has_handlers: bool
    has_finally: bool
    sources: list[int] = field(default_factory=list)
    returns: list[int] = field(default_factory=list)


class _CfgBuilder:
    def __init__(self, fn: FunctionUnit, free_names: Iterable[str] = ()):
        self.fn = fn
        self.nodes: list[CfgNode] = []
        self.edges: list[tuple[int, int, str]] = []
        self.loops: list[tuple[int, list[tuple[int, str]]]] = []
        self.trys: list[_TryCtx] = []
        self.governor: list[int] = []
        self.control_parent: dict[int, int] = {}
        self.by_stmt: dict[int, int] = {}
        self.to_exit: list[tuple[int, str]] = []
        span = (fn.span[0], 0, fn.span[0], 0)
        params = tuple(p for p, _ in fn.parameters)
        entry_defs = tuple(dict.fromkeys([*params, *sorted(free_names)]))
        self.nodes.append(CfgNode(ENTRY, "entry", None, span, entry_defs, frozenset()))

    def new(self, kind: str, stmt: ast.AST) -> int:
        nid = len(self.nodes)
        defs, uses = defs_uses(stmt)
        self.nodes.append(CfgNode(nid, kind, stmt, _header_span(stmt), defs, uses))
        self.by_stmt[id(stmt)] = nid
        if self.governor:
            self.control_parent[nid] = self.governor[-1]
        # exceptional successors for statements in a try body
        if self.trys and kind not in ("try",):
            self.trys[-1].sources.append(nid)
        return nid

    def link(self, frontier: list[tuple[int, str]], dst: int) -> None:
        for src, label in frontier:
            self.edges.append((src, dst, label))

    def seq(self, stmts: list[ast.stmt], frontier: list[tuple[int, str]]) -> list[tuple[int, str]]:
        for stmt in stmts:
            frontier = self.stmt(stmt, frontier)
        return frontier

    def _raise_target(self, nid: int) -> None:
        # a raise inside a try body reaches its handlers via the try sources;
        # otherwise control leaves the function
        if not self.trys:
            self.to_exit.append((nid, "raise"))

    def stmt(self, stmt: ast.stmt, frontier: list[tuple[int, str]]) -> list[tuple[int, str]]:
        if isinstance(stmt, ast.If):
            pid = self.new("predicate", stmt)
            self.link(frontier, pid)
            self.governor.append(pid)
            body = self.seq(stmt.body, [(pid, "true")])
            orelse = self.seq(stmt.orelse, [(pid, "false")]) if stmt.orelse else [(pid, "false")]
            self.governor.pop()
            return body + orelse
        if isinstance(stmt, (ast.While, ast.For, ast.AsyncFor)):
            hid = self.new("loop", stmt)
            self.link(frontier, hid)
            breaks: list[tuple[int, str]] = []
            self.loops.append((hid, breaks))
            self.governor.append(hid)
            body = self.seq(stmt.body, [(hid, "true")])
            for src, _ in body:
                self.edges.append((src, hid, "back"))
            self.loops.pop()
            infinite = isinstance(stmt, ast.While) and _is_const_true(stmt.test)
            exits: list[tuple[int, str]] = [] if infinite else [(hid, "false")]
            if stmt.orelse:
                exits = self.seq(stmt.orelse, exits)
            self.governor.pop()
            return exits + breaks
        if isinstance(stmt, ast.Try):
            return self.try_stmt(stmt, frontier)
        if isinstance(stmt, (ast.With, ast.AsyncWith)):
            wid = self.new("with", stmt)
            self.link(frontier, wid)
            return self.seq(stmt.body, [(wid, "next")])
        if isinstance(stmt, ast.Match):
            mid = self.new("stmt", stmt)
            self.link(frontier, mid)
            pending: list[tuple[int, str]] = [(mid, "next")]
            exits = []
            for case in stmt.cases:
                cid = self.new("predicate", case)
                self.link(pending, cid)
                self.governor.append(cid)
                exits += self.seq(case.body, [(cid, "true")])
                self.governor.pop()
                pending = [(cid, "false")]
            return exits + pending
        if isinstance(stmt, ast.ClassDef):
            cid = self.new("def", stmt)
            self.link(frontier, cid)
            return self.seq(stmt.body, [(cid, "next")])
        if isinstance(stmt, _FUNC_TYPES):
            nid = self.new("def", stmt)
            self.link(frontier, nid)
            return [(nid, "next")]
        nid = self.new("stmt", stmt)
        self.link(frontier, nid)
        if isinstance(stmt, ast.Return):
            ctx = next((t for t in reversed(self.trys) if t.has_finally), None)
            if ctx is not None:
                ctx.returns.append(nid)
            else:
                self.to_exit.append((nid, "return"))
            return []
        if isinstance(stmt, ast.Raise):
            self._raise_target(nid)
            return []
        if isinstance(stmt, ast.Break):
            if self.loops:
                self.loops[-1][1].append((nid, "break"))
            return []
        if isinstance(stmt, ast.Continue):
            if self.loops:
                self.edges.append((nid, self.loops[-1][0], "continue"))
            return []
        return [(nid, "next")]

    def try_stmt(self, stmt: ast.Try, frontier: list[tuple[int, str]]) -> list[tuple[int, str]]:
        tid = self.new("try", stmt)
        self.link(frontier, tid)
        ctx = _TryCtx(bool(stmt.handlers), bool(stmt.finalbody))
        self.trys.append(ctx)
        body = self.seq(stmt.body, [(tid, "next")])
        self.trys.pop()
        if ctx.has_finally:
            # exceptions inside handlers also run the finally block
            fin_ctx = _TryCtx(False, True)
            self.trys.append(fin_ctx)
        handler_exits: list[tuple[int, str]] = []
        for handler in stmt.handlers:
            hid = self.new("handler", handler)
            for src in ctx.sources:
                self.edges.append((src, hid, "exception"))
            self.governor.append(hid)
            handler_exits += self.seq(handler.body, [(hid, "next")])
            self.governor.pop()
        normal = self.seq(stmt.orelse, body) if stmt.orelse else body
        if not ctx.has_finally:
            if not stmt.handlers:
                self._propagate(ctx.sources)
            return normal + handler_exits
        self.trys.pop()
        pending = normal + handler_exits
        pending += [(s, "exception") for s in fin_ctx.sources]
        if not stmt.handlers:
            pending += [(s, "exception") for s in ctx.sources]
        returns = ctx.returns + fin_ctx.returns
        pending += [(r, "return") for r in returns]
        fin = self.seq(stmt.finalbody, pending)
        # after finally, control may also leave the function (re-raise or return)
        self._propagate([s for s, _ in fin])
        return fin

    def _propagate(self, sources: list[int]) -> None:
        if self.trys:
            self.trys[-1].sources.extend(sources)
        else:
            self.to_exit.extend((s, "raise") for s in sources)

    def build(self, body: list[ast.stmt]) -> Cfg:
        frontier = self.seq(body, [(ENTRY, "next")])
        exit_id = len(self.nodes)
        end = self.fn.span[1]
        self.nodes.append(CfgNode(exit_id, "exit", None, (end, 0, end, 0)))
        self.link(frontier + self.to_exit, exit_id)
        # deterministic, duplicate-free edge list
        edges = list(dict.fromkeys(self.edges))
        reachable = _reachable(len(self.nodes), edges, ENTRY)
        dead = frozenset(n.id for n in self.nodes if n.id not in reachable and n.kind != "exit")
        return Cfg(self.fn, self.nodes, edges, ENTRY, exit_id, dead,
                   self.control_parent, self.by_stmt)


def _reachable(count: int, edges: list[tuple[int, int, str]], start: int) -> set[int]:
    succ: dict[int, list[int]] = defaultdict(list)
    for s, d, _ in edges:
        succ[s].append(d)
    seen = {start}
    stack = [start]
    while stack:
        n = stack.pop()
        for m in succ[n]:
            if m not in seen:
                seen.add(m)
                stack.append(m)
    return seen


def free_names(fn: FunctionUnit) -> set[str]:
    """Names read by the unit but never bound inside it (globals, builtins, closures)."""
    bound: set[str] = {p for p, _ in fn.parameters}
    used: set[str] = set()
    for stmt in fn.statements:
        d, u = defs_uses(stmt)
        bound.update(d)
        used |= u
        for h in getattr(stmt, "handlers", []) or []:
            d, u = defs_uses(h)
            bound.update(d)
            used |= u
        for c in getattr(stmt, "cases", []) or []:
            d, u = defs_uses(c)
            bound.update(d)
            used |= u
    return used - bound


def build_cfg(fn: FunctionUnit) -> Cfg:
    """Lower a function unit to a statement-level CFG.

    The entry node defines the parameters and every free name of the unit.
    """
    builder = _CfgBuilder(fn, free_names(fn))
    body = fn.node.body
    return builder.build(body)


# ---------------------------------------------------------------- PDG

@dataclass
class Pdg:
    cfg: Cfg = field(repr=False)
    data_edges: list[tuple[int, int, str]]
    control_edges: list[tuple[int, int]]
    reaching: list[frozenset[tuple[int, str]]] = field(default_factory=list, repr=False)

    @property
    def nodes(self) -> list[CfgNode]:
        return self.cfg.nodes

    @property
    def fn(self) -> FunctionUnit:
        return self.cfg.fn

    def uses_of(self, def_node: int, var: str) -> list[int]:
        return self._out.get((def_node, var), [])

    def defs_reaching(self, node: int, var: str) -> list[int]:
        return self._in.get((node, var), [])

    def __post_init__(self) -> None:
        out: dict[tuple[int, str], list[int]] = defaultdict(list)
        inn: dict[tuple[int, str], list[int]] = defaultdict(list)
        for d, u, v in self.data_edges:
            out[(d, v)].append(u)
            inn[(u, v)].append(d)
        self._out = dict(out)
        self._in = dict(inn)


def reaching_definitions(cfg: Cfg) -> list[frozenset[tuple[int, str]]]:
    """IN sets of (defining node, variable) pairs for every node (iterative worklist)."""
    n = len(cfg.nodes)
    preds: list[list[int]] = [[] for _ in range(n)]
    for s, d, _ in cfg.edges:
        if s not in preds[d]:
            preds[d].append(s)
    succ = cfg.successors()
    defs_of: dict[str, set[tuple[int, str]]] = defaultdict(set)
    for node in cfg.nodes:
        for v in node.defs:
            defs_of[v].add((node.id, v))
    out: list[set[tuple[int, str]]] = [set() for _ in range(n)]
    inn: list[set[tuple[int, str]]] = [set() for _ in range(n)]
    work = list(range(n))
    pending = set(work)
    while work:
        i = work.pop(0)
        pending.discard(i)
        new_in: set[tuple[int, str]] = set()
        for p in preds[i]:
            new_in |= out[p]
        inn[i] = new_in
        node = cfg.nodes[i]
        if node.defs:
            killed = {v for v in node.defs}
            new_out = {pair for pair in new_in if pair[1] not in killed}
            new_out.update((i, v) for v in node.defs)
        else:
            new_out = new_in
        if new_out != out[i]:
            out[i] = set(new_out)
            for s in succ.get(i, []):
                if s not in pending:
                    pending.add(s)
                    work.append(s)
    return [frozenset(s) for s in inn]


def build_pdg(cfg: Cfg) -> Pdg:
    """Data edges by reaching definitions; control edges from governing predicates."""
    reaching = reaching_definitions(cfg)
    data: list[tuple[int, int, str]] = []
    for node in cfg.nodes:
        if not node.uses:
            continue
        for d, v in sorted(reaching[node.id]):
            if v in node.uses:
                data.append((d, node.id, v))
    data.sort()
    control = sorted((p, c) for c, p in cfg.control_parent.items())
    return Pdg(cfg, data, control, reaching)


def export_edges(pdg: Pdg) -> str:
    """Plain-text edge list of one function's CFG and PDG.

    Format, one item per line::

        fn <qualified name>
        node <id> <kind> <start line>:<start col>-<end line>:<end col> [def=a,b] [use=c]
        cfg <src> <dst> <label>
        data <src> <dst> <variable>
        control <src> <dst>
    """
    cfg = pdg.cfg
    lines = [f"fn {cfg.fn.qualified_name}"]
    for node in cfg.nodes:
        s = node.span
        extra = ""
        if node.defs:
            extra += " def=" + ",".join(node.defs)
        if node.uses:
            extra += " use=" + ",".join(sorted(node.uses))
        if node.id in cfg.dead:
            extra += " dead"
        lines.append(f"node {node.id} {node.kind} {s[0]}:{s[1]}-{s[2]}:{s[3]}{extra}")
    for src, dst, label in cfg.edges:
        lines.append(f"cfg {src} {dst} {label}")
    for src, dst, var in pdg.data_edges:
        lines.append(f"data {src} {dst} {var}")
    for src, dst in pdg.control_edges:
        lines.append(f"control {src} {dst}")
    return "\n".join(lines) + "\n"


def iter_statement_nodes(cfg: Cfg) -> Iterator[CfgNode]:
    for node in cfg.nodes:
        if node.kind not in ("entry", "exit"):
            yield node
