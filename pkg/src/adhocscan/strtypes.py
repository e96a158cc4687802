"""Heuristic string-type inference over a function's dataflow.

Types are inferred from a table of known operations (``KnownApiTable``) and
from parameter type hints. The result for a function is a ``FunctionTyping``:
a verdict for every (defining node, variable) pair plus the ordered string
seeds from which parser slices are grown.
"""

from __future__ import annotations

import ast
import enum
import logging
import weakref
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

from .graphs import ENTRY, Pdg, build_cfg, build_pdg, header_exprs
from .syntax import FunctionUnit

log = logging.getLogger(__name__)


class TypeVerdict(str, enum.Enum):
    STRING = "String"
    STRING_COLLECTION = "StringCollection"
    NOT_STRING = "NotString"
    UNKNOWN = "Unknown"

    @property
    def is_stringy(self) -> bool:
        return self in (TypeVerdict.STRING, TypeVerdict.STRING_COLLECTION)


S = TypeVerdict.STRING
SC = TypeVerdict.STRING_COLLECTION
NS = TypeVerdict.NOT_STRING
UNK = TypeVerdict.UNKNOWN


@dataclass(frozen=True)
class ApiFact:
    returns: TypeVerdict
    receiver_is_string: bool = False
    string_params: frozenset[int] = frozenset()
    constraint: bool = False
    loop: str | None = None  # "functional-linear" for whole-input iteration
    may_raise: frozenset[str] = frozenset()
    origin: str | None = None
    role: str | None = None  # why a constraint entry constrains: split, branch, regex, ...
    regex: bool = False


def _f(returns, **kw) -> ApiFact:
    for key in ("string_params", "may_raise"):
        if key in kw:
            kw[key] = frozenset(kw[key])
    return ApiFact(returns, **kw)


_STR_METHODS: dict[str, ApiFact] = {
    "split": _f(SC, receiver_is_string=True, constraint=True, role="split", loop="functional-linear"),
    "rsplit": _f(SC, receiver_is_string=True, constraint=True, role="split", loop="functional-linear"),
    "splitlines": _f(SC, receiver_is_string=True, constraint=True, role="split", loop="functional-linear"),
    "partition": _f(SC, receiver_is_string=True, constraint=True, role="split"),
    "rpartition": _f(SC, receiver_is_string=True, constraint=True, role="split"),
    "strip": _f(S, receiver_is_string=True),
    "lstrip": _f(S, receiver_is_string=True),
    "rstrip": _f(S, receiver_is_string=True),
    "startswith": _f(NS, receiver_is_string=True, constraint=True, role="branch"),
    "endswith": _f(NS, receiver_is_string=True, constraint=True, role="branch"),
    "find": _f(NS, receiver_is_string=True, constraint=True, role="branch"),
    "rfind": _f(NS, receiver_is_string=True, constraint=True, role="branch"),
    "index": _f(NS, constraint=True, may_raise={"ValueError"}),
    "rindex": _f(NS, receiver_is_string=True, constraint=True, may_raise={"ValueError"}),
    "replace": _f(S, receiver_is_string=True),
    "join": _f(S, receiver_is_string=True, loop="functional-linear"),
    "upper": _f(S, receiver_is_string=True),
    "lower": _f(S, receiver_is_string=True),
    "casefold": _f(S, receiver_is_string=True),
    "title": _f(S, receiver_is_string=True),
    "capitalize": _f(S, receiver_is_string=True),
    "format": _f(S, receiver_is_string=True),
    "encode": _f(NS, receiver_is_string=True),
    "decode": _f(S),
    "isdigit": _f(NS, receiver_is_string=True, constraint=True, role="branch"),
    "isnumeric": _f(NS, receiver_is_string=True, constraint=True, role="branch"),
    "isdecimal": _f(NS, receiver_is_string=True, constraint=True, role="branch"),
    "isalpha": _f(NS, receiver_is_string=True, constraint=True, role="branch"),
    "isalnum": _f(NS, receiver_is_string=True, constraint=True, role="branch"),
    "isspace": _f(NS, receiver_is_string=True, constraint=True, role="branch"),
    # match-object accessors
    "group": _f(S),
    "groups": _f(SC),
    "groupdict": _f(UNK),
    # file reads
    "read": _f(S, origin="file"),
    "readline": _f(S, origin="file"),
    "readlines": _f(SC, origin="file", loop="functional-linear"),
}

_QUALIFIED: dict[str, ApiFact] = {
    "str": _f(S),
    "repr": _f(S),
    "int": _f(NS, constraint=True, role="conversion", may_raise={"ValueError"}),
    "float": _f(NS, constraint=True, role="conversion", may_raise={"ValueError"}),
    "complex": _f(NS, constraint=True, role="conversion", may_raise={"ValueError"}),
    "len": _f(NS),
    "bool": _f(NS),
    "ord": _f(NS, constraint=True, role="conversion", may_raise={"TypeError"}),
    "chr": _f(S),
    "input": _f(S, origin="stdin"),
    "raw_input": _f(S, origin="stdin"),
    "open": _f(UNK, origin="file"),
    "os.getenv": _f(S, origin="environment-variable"),
    "os.environ.get": _f(S, origin="environment-variable"),
    "os.environ": _f(UNK, origin="environment-variable"),
    "sys.argv": _f(SC, origin="command-line"),
    "sys.stdin": _f(UNK, origin="stdin"),
    "sys.stdin.read": _f(S, origin="stdin"),
    "sys.stdin.readline": _f(S, origin="stdin"),
    "sys.stdin.readlines": _f(SC, origin="stdin"),
    "subprocess.check_output": _f(UNK, origin="process-output"),
    "subprocess.getoutput": _f(S, origin="process-output"),
    "subprocess.run": _f(UNK, origin="process-output"),
    "subprocess.Popen": _f(UNK, origin="process-output"),
    "os.popen": _f(UNK, origin="process-output"),
    "urllib.request.urlopen": _f(UNK, origin="network"),
    "requests.get": _f(UNK, origin="network"),
    "requests.post": _f(UNK, origin="network"),
    "os.path.join": _f(S),
    "os.path.basename": _f(S),
    "os.path.dirname": _f(S),
    "os.path.split": _f(SC),
    "os.path.splitext": _f(SC),
    "re.compile": _f(UNK, constraint=True, role="regex", regex=True),
    "re.match": _f(SC, constraint=True, role="regex", regex=True),
    "re.search": _f(SC, constraint=True, role="regex", regex=True),
    "re.fullmatch": _f(SC, constraint=True, role="regex", regex=True),
    "re.findall": _f(SC, constraint=True, role="regex", regex=True, loop="functional-linear"),
    "re.finditer": _f(SC, constraint=True, role="regex", regex=True, loop="functional-linear"),
    "re.split": _f(SC, constraint=True, role="regex", regex=True, loop="functional-linear"),
    "re.sub": _f(S, constraint=True, role="regex", regex=True),
    "re.subn": _f(UNK, constraint=True, role="regex", regex=True),
    "re.escape": _f(S),
}

# compiled-pattern methods; used when the receiver is not a string
PATTERN_METHODS = {"match": SC, "search": SC, "fullmatch": SC, "findall": SC,
                   "finditer": SC, "split": SC, "sub": S, "subn": UNK}

MATCH_METHODS = frozenset({"group", "groups", "groupdict", "start", "end", "span", "expand"})


@dataclass(frozen=True)
class KnownApiTable:
    """Immutable table of operation facts keyed by name.

    Keys are either bare method names (``split``) or qualified names
    (``os.getenv``, ``re.search``, ``int``).
    """

    methods: Mapping[str, ApiFact]
    qualified: Mapping[str, ApiFact]

    def method(self, name: str) -> ApiFact | None:
        return self.methods.get(name)

    def lookup(self, qualified_name: str) -> ApiFact | None:
        return self.qualified.get(qualified_name)

    def extended(self, entries: Mapping[str, ApiFact]) -> KnownApiTable:
        methods = dict(self.methods)
        qualified = dict(self.qualified)
        for name, fact in entries.items():
            if name.startswith("str."):
                methods[name[4:]] = fact
            elif "." in name or name not in methods:
                qualified[name] = fact
            else:
                methods[name] = fact
        return KnownApiTable(methods, qualified)

    def validate(self) -> None:
        for name, fact in [*self.methods.items(), *self.qualified.items()]:
            if not isinstance(fact.returns, TypeVerdict):
                raise ValueError(f"{name}: returns is not a verdict")
            if fact.constraint and not (fact.may_raise or fact.role):
                raise ValueError(f"{name}: constraint entry needs may_raise or a role")


DEFAULT_TABLE = KnownApiTable(_STR_METHODS, _QUALIFIED)


class TableFormatError(ValueError):
    pass


def parse_table_extension(text: str) -> dict[str, ApiFact]:
    """Parse the plain-text table extension format.

    One entry per line: ``qualified_name,returns,constraint,may_raise...``
    where ``returns`` is a verdict name, ``constraint`` is true/false and any
    remaining fields are exception names. Blank lines and ``#`` comments are
    ignored. A ``str.`` prefix makes the entry a string method.
    """
    entries: dict[str, ApiFact] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) < 3:
            raise TableFormatError(f"line {lineno}: expected at least 3 fields")
        name, returns, constraint, *raises = parts
        try:
            verdict = TypeVerdict(returns)
        except ValueError:
            raise TableFormatError(f"line {lineno}: unknown verdict {returns!r}") from None
        if constraint.lower() not in ("true", "false"):
            raise TableFormatError(f"line {lineno}: constraint must be true or false")
        is_constraint = constraint.lower() == "true"
        entries[name] = ApiFact(
            verdict,
            receiver_is_string=name.startswith("str."),
            constraint=is_constraint,
            may_raise=frozenset(r for r in raises if r),
            role="custom" if is_constraint else None,
        )
    return entries


def load_table(path: str | Path | None = None) -> KnownApiTable:
    if path is None:
        return DEFAULT_TABLE
    table = DEFAULT_TABLE.extended(parse_table_extension(Path(path).read_text()))
    table.validate()
    return table


# ---------------------------------------------------------------- expressions

def dotted_name(expr: ast.AST) -> str | None:
    parts = []
    while isinstance(expr, ast.Attribute):
        parts.append(expr.attr)
        expr = expr.value
    if isinstance(expr, ast.Name):
        parts.append(expr.id)
        return ".".join(reversed(parts))
    return None


def element_verdict(v: TypeVerdict) -> TypeVerdict:
    """Verdict of the items produced by iterating a value of verdict ``v``."""
    return S if v.is_stringy else UNK


def join(verdicts: list[TypeVerdict]) -> TypeVerdict:
    known = [v for v in verdicts if v is not UNK]
    if not known:
        return UNK
    first = known[0]
    if all(v is first for v in known):
        return first
    return UNK


class _Resolver:
    """Resolves call targets against the table, honouring import aliases."""

    def __init__(self, api: KnownApiTable, aliases: Mapping[str, str] | None = None):
        self.api = api
        self.aliases = aliases or {}

    def qualify(self, expr: ast.AST) -> str | None:
        name = dotted_name(expr)
        if name is None:
            return None
        head, _, rest = name.partition(".")
        if head in self.aliases:
            target = self.aliases[head]
            return f"{target}.{rest}" if rest else target
        return name


def expr_verdict(expr: ast.AST, env: Mapping[str, TypeVerdict] | Callable[[str], TypeVerdict],
                 api: KnownApiTable = DEFAULT_TABLE,
                 aliases: Mapping[str, str] | None = None) -> TypeVerdict:
    """Heuristic verdict of one expression under a variable environment."""
    lookup = env if callable(env) else (lambda name: env.get(name, UNK))
    return _Evaluator(api, lookup, aliases).verdict(expr)


class _Evaluator:
    def __init__(self, api: KnownApiTable, lookup: Callable[[str], TypeVerdict],
                 aliases: Mapping[str, str] | None = None):
        self.api = api
        self.lookup = lookup
        self.resolver = _Resolver(api, aliases)
        self.local: dict[str, TypeVerdict] = {}

    def name(self, ident: str) -> TypeVerdict:
        if ident in self.local:
            return self.local[ident]
        return self.lookup(ident)

    def verdict(self, e: ast.AST) -> TypeVerdict:
        if isinstance(e, ast.Constant):
            if isinstance(e.value, str):
                return S
            return NS
        if isinstance(e, ast.JoinedStr):
            return S
        if isinstance(e, ast.Name):
            return self.name(e.id)
        if isinstance(e, ast.NamedExpr):
            return self.verdict(e.value)
        if isinstance(e, ast.Call):
            return self.call(e)
        if isinstance(e, ast.Attribute):
            q = self.resolver.qualify(e)
            fact = self.api.lookup(q) if q else None
            return fact.returns if fact else UNK
        if isinstance(e, ast.Subscript):
            return self.subscript(e)
        if isinstance(e, ast.BinOp):
            left, right = self.verdict(e.left), self.verdict(e.right)
            if isinstance(e.op, ast.Add) and (left is S or right is S):
                return S
            if isinstance(e.op, ast.Add) and left is SC and right is SC:
                return SC
            if isinstance(e.op, ast.Mod) and left is S:
                return S
            if isinstance(e.op, ast.Mult) and S in (left, right):
                return S
            if left is NS and right is NS:
                return NS
            return UNK
        if isinstance(e, ast.BoolOp):
            return join([self.verdict(v) for v in e.values])
        if isinstance(e, (ast.Compare, ast.UnaryOp)):
            if isinstance(e, ast.UnaryOp) and not isinstance(e.op, ast.Not):
                return NS if self.verdict(e.operand) is NS else UNK
            return NS
        if isinstance(e, ast.IfExp):
            return join([self.verdict(e.body), self.verdict(e.orelse)])
        if isinstance(e, (ast.List, ast.Tuple, ast.Set)):
            if not e.elts:
                return UNK
            vs = [self.verdict(x) for x in e.elts]
            if all(v is S for v in vs):
                return SC
            if all(v is NS for v in vs):
                return NS
            return UNK
        if isinstance(e, (ast.ListComp, ast.SetComp, ast.GeneratorExp)):
            return self.comprehension(e)
        if isinstance(e, ast.Starred):
            return self.verdict(e.value)
        return UNK

    def comprehension(self, e: ast.AST) -> TypeVerdict:
        saved = dict(self.local)
        try:
            for gen in e.generators:
                item = element_verdict(self.verdict(gen.iter))
                bind_target(gen.target, item, gen.iter, self.local)
            elt = self.verdict(e.elt)
        finally:
            self.local = saved
        if elt.is_stringy:
            return SC
        if elt is NS:
            return NS
        return UNK

    def subscript(self, e: ast.Subscript) -> TypeVerdict:
        q = self.resolver.qualify(e.value)
        if q == "os.environ":
            return S
        base = self.verdict(e.value)
        if base is S:
            return S
        if base is SC:
            return SC if isinstance(e.slice, ast.Slice) else S
        return UNK

    def call(self, e: ast.Call) -> TypeVerdict:
        func = e.func
        q = self.resolver.qualify(func)
        if q is not None:
            fact = self.api.lookup(q)
            if fact is not None:
                return fact.returns
        if isinstance(func, ast.Name):
            if func.id == "map" and len(e.args) >= 2:
                mapped = self.mapped(e.args[0], e.args[1])
                return mapped
            if func.id == "filter" and len(e.args) >= 2:
                return SC if self.verdict(e.args[1]).is_stringy else UNK
            if func.id in ("list", "tuple", "set", "sorted", "reversed", "frozenset") and e.args:
                inner = self.verdict(e.args[0])
                if inner.is_stringy:
                    return SC
                return NS if inner is NS else UNK
            if func.id in ("min", "max", "next") and e.args:
                inner = self.verdict(e.args[0])
                return S if inner.is_stringy and len(e.args) == 1 else UNK
            return UNK
        if isinstance(func, ast.Attribute):
            receiver = self.verdict(func.value)
            fact = self.api.method(func.attr)
            if receiver is not S and func.attr in PATTERN_METHODS and (
                    fact is None or not receiver.is_stringy) and e.args:
                # compiled pattern (or unknown receiver) applied to a string
                if self.verdict(e.args[0]).is_stringy:
                    return PATTERN_METHODS[func.attr]
            if fact is not None:
                if func.attr == "join" and receiver is UNK and e.args:
                    return S if self.verdict(e.args[0]).is_stringy else fact.returns
                return fact.returns
            if func.attr == "get" and dotted_name(func.value) == "os.environ":
                return S
        return UNK

    def mapped(self, fn: ast.AST, iterable: ast.AST) -> TypeVerdict:
        q = self.resolver.qualify(fn)
        if q is not None:
            fact = self.api.lookup(q)
            if q.startswith("str.") and self.api.method(q[4:]) is not None:
                fact = self.api.method(q[4:])
            if fact is not None:
                if fact.returns is S:
                    return SC
                if fact.returns is NS:
                    return NS
        return UNK


def bind_target(target: ast.AST, value: TypeVerdict, value_expr: ast.AST | None,
                out: dict[str, TypeVerdict]) -> None:
    """Distribute a value verdict over an assignment target."""
    if isinstance(target, ast.Name):
        out[target.id] = value
    elif isinstance(target, (ast.Tuple, ast.List)):
        literal = value_expr if isinstance(value_expr, (ast.Tuple, ast.List)) else None
        if literal is not None and len(literal.elts) == len(target.elts):
            # element-wise assignment handled by the caller's evaluator
            for t in target.elts:
                bind_target(t, UNK, None, out)
            return
        item = S if value is SC else (NS if value is NS else UNK)
        for t in target.elts:
            if isinstance(t, ast.Starred):
                bind_target(t.value, SC if value is SC else (NS if value is NS else UNK), None, out)
            else:
                bind_target(t, item, None, out)
    elif isinstance(target, ast.Starred):
        bind_target(target.value, value, value_expr, out)
    elif isinstance(target, (ast.Attribute, ast.Subscript)):
        base = target
        while isinstance(base, (ast.Attribute, ast.Subscript)):
            base = base.value
        if isinstance(base, ast.Name):
            out.setdefault(base.id, UNK)


# ---------------------------------------------------------------- hints

_HINT_STRING = {"str", "Optional[str]", "typing.Optional[str]", "str | None", "None | str",
                "Union[str, None]", "Union[None, str]"}
_HINT_COLLECTION_HEADS = {"List", "list", "Sequence", "Iterable", "typing.List",
                          "typing.Sequence", "typing.Iterable", "Tuple", "tuple", "typing.Tuple"}


def hint_verdict(hint: str | None) -> TypeVerdict:
    if not hint:
        return UNK
    h = hint.replace(" ", "").replace("'", "").replace('"', "")
    if h in {x.replace(" ", "") for x in _HINT_STRING}:
        return S
    head, sep, rest = h.partition("[")
    if sep and rest.endswith("]"):
        inner = rest[:-1]
        if head in _HINT_COLLECTION_HEADS and inner in ("str", "str,..."):
            return SC
    return NS if h in ("int", "float", "bool", "bytes") else UNK


# ---------------------------------------------------------------- function typing

@dataclass(frozen=True)
class StringSeed:
    variable_name: str
    node: int  # defining node, or ENTRY for parameters and free names
    site: int  # statement node of the first occurrence
    line: int
    col: int
    evidence: str  # string-method-use, type-hint, known-return, literal-assignment

    @property
    def first_occurrence(self) -> tuple[int, int, int]:
        return (self.site, self.line, self.col)


@dataclass
class FunctionTyping:
    fn: FunctionUnit = field(repr=False)
    pdg: Pdg = field(repr=False)
    api: KnownApiTable = field(repr=False)
    aliases: dict[str, str]
    def_verdicts: dict[tuple[int, str], TypeVerdict]
    retro: frozenset[str]
    seeds: list[StringSeed]
    conflicts: list[str] = field(default_factory=list)

    def env_at(self, node: int) -> Callable[[str], TypeVerdict]:
        def lookup(name: str) -> TypeVerdict:
            return self._lookup(node, name)
        return lookup

    def _lookup(self, node: int, name: str) -> TypeVerdict:
        defs = self.pdg.defs_reaching(node, name)
        if not defs:
            return UNK
        return _resolve([(d, self.def_verdicts.get((d, name), UNK)) for d in defs],
                        self.pdg, None)

    def verdict_of(self, expr: ast.AST, node: int) -> TypeVerdict:
        return _Evaluator(self.api, self.env_at(node), self.aliases).verdict(expr)

    def evaluator(self, node: int) -> _Evaluator:
        return _Evaluator(self.api, self.env_at(node), self.aliases)


def _resolve(pairs: list[tuple[int, TypeVerdict]], pdg: Pdg, conflicts: list[str] | None) -> TypeVerdict:
    known = [(pdg.nodes[d].span[:2], v) for d, v in pairs if v is not UNK]
    if not known:
        return UNK
    kinds = {v for _, v in known}
    if len(kinds) == 1:
        return known[0][1]
    # conflicting evidence: the earliest site wins
    known.sort(key=lambda x: x[0])
    if conflicts is not None:
        conflicts.append(f"{','.join(sorted(k.value for k in kinds))}")
    return known[0][1]


# per-module import scans, shared by every function of the module
_IMPORT_CACHE: weakref.WeakKeyDictionary = weakref.WeakKeyDictionary()


def _imports(module: ast.Module) -> list[ast.stmt]:
    found = _IMPORT_CACHE.get(module)
    if found is None:
        found = [n for n in ast.walk(module) if isinstance(n, (ast.Import, ast.ImportFrom))]
        _IMPORT_CACHE[module] = found
    return found


def import_aliases(module: ast.Module | None) -> dict[str, str]:
    """Map local names bound by imports to the qualified names they denote."""
    aliases: dict[str, str] = {}
    if module is None:
        return aliases
    for node in _imports(module):
        if isinstance(node, ast.Import):
            for a in node.names:
                if a.asname:
                    aliases[a.asname] = a.name
                else:  # `import a.b` binds `a`
                    head = a.name.split(".", 1)[0]
                    aliases.setdefault(head, head)
        elif isinstance(node, ast.ImportFrom) and node.module and node.level == 0:
            for a in node.names:
                if a.name != "*":
                    aliases[a.asname or a.name] = f"{node.module}.{a.name}"
    return aliases


def imported_names(module: ast.Module | None) -> frozenset[str]:
    names: set[str] = set()
    if module is None:
        return frozenset()
    for node in _imports(module):
        for a in node.names:
            if a.name != "*":
                names.add(a.asname or a.name.split(".")[0])
    return frozenset(names)


_NOT_RETRO = frozenset({"self", "cls", "os", "re", "sys", "string", "str", "bytes"})


def retro_string_vars(fn: FunctionUnit, api: KnownApiTable,
                      exclude: frozenset[str] = frozenset()) -> dict[str, tuple[int, int]]:
    """Variables receiving an unambiguously string-specific method call, with the
    earliest such call site."""
    found: dict[str, tuple[int, int]] = {}
    for stmt in fn.statements:
        for expr in header_exprs(stmt):
            for node in ast.walk(expr):
                if not (isinstance(node, ast.Call) and isinstance(node.func, ast.Attribute)):
                    continue
                recv = node.func.value
                if not isinstance(recv, ast.Name) or recv.id in _NOT_RETRO or recv.id in exclude:
                    continue
                fact = api.method(node.func.attr)
                if fact is not None and fact.receiver_is_string:
                    site = (recv.lineno, recv.col_offset)
                    if recv.id not in found or site < found[recv.id]:
                        found[recv.id] = site
    return found


def _is_literal_value(expr: ast.AST | None) -> bool:
    return isinstance(expr, ast.JoinedStr) or (
        isinstance(expr, ast.Constant) and isinstance(expr.value, str))


def _def_values(stmt: ast.AST, ev: _Evaluator) -> dict[str, TypeVerdict]:
    """Verdict bound to each variable defined by one statement node."""
    out: dict[str, TypeVerdict] = {}
    if isinstance(stmt, ast.Assign):
        value = ev.verdict(stmt.value)
        for t in stmt.targets:
            if isinstance(t, (ast.Tuple, ast.List)) and isinstance(stmt.value, (ast.Tuple, ast.List)) \
                    and len(t.elts) == len(stmt.value.elts):
                for te, ve in zip(t.elts, stmt.value.elts):
                    bind_target(te, ev.verdict(ve), ve, out)
            else:
                bind_target(t, value, stmt.value, out)
    elif isinstance(stmt, ast.AnnAssign):
        hinted = hint_verdict(ast.unparse(stmt.annotation))
        value = ev.verdict(stmt.value) if stmt.value is not None else UNK
        bind_target(stmt.target, value if value is not UNK else hinted, stmt.value, out)
    elif isinstance(stmt, ast.AugAssign):
        load = ast.copy_location(ast.BinOp(left=_as_load(stmt.target), op=stmt.op, right=stmt.value),
                                 stmt)
        bind_target(stmt.target, ev.verdict(load), None, out)
    elif isinstance(stmt, (ast.For, ast.AsyncFor)):
        bind_target(stmt.target, element_verdict(ev.verdict(stmt.iter)), None, out)
    elif isinstance(stmt, ast.ExceptHandler):
        if stmt.name:
            out[stmt.name] = NS
    elif isinstance(stmt, (ast.With, ast.AsyncWith)):
        for item in stmt.items:
            if item.optional_vars is not None:
                bind_target(item.optional_vars, UNK, None, out)
    elif isinstance(stmt, (ast.Import, ast.ImportFrom, ast.FunctionDef, ast.AsyncFunctionDef,
                           ast.ClassDef)):
        pass
    for expr in header_exprs(stmt):
        for node in ast.walk(expr):
            if isinstance(node, ast.NamedExpr):
                out[node.target.id] = ev.verdict(node.value)
    return out


def _as_load(target: ast.AST) -> ast.AST:
    if isinstance(target, ast.Name):
        return ast.Name(id=target.id, ctx=ast.Load())
    return target


def type_function(fn: FunctionUnit, api: KnownApiTable = DEFAULT_TABLE,
                  pdg: Pdg | None = None, module: ast.Module | None = None) -> FunctionTyping:
    """Infer verdicts for every definition in ``fn`` and derive its string seeds."""
    if pdg is None:
        pdg = build_pdg(build_cfg(fn))
    aliases = import_aliases(module)
    imported = imported_names(module)
    retro_sites = retro_string_vars(fn, api, imported)
    retro = frozenset(retro_sites)
    hints = {p: hint_verdict(h) for p, h in fn.parameters}
    conflicts: list[str] = []

    verdicts: dict[tuple[int, str], TypeVerdict] = {}
    entry = pdg.nodes[ENTRY]
    for v in entry.defs:
        hv = hints.get(v, UNK)
        if hv is UNK and v in retro and v not in imported:
            hv = S
        verdicts[(ENTRY, v)] = hv

    def lookup_at(node_id: int) -> Callable[[str], TypeVerdict]:
        def lookup(name: str) -> TypeVerdict:
            defs = pdg.defs_reaching(node_id, name)
            if not defs:
                return UNK
            return _resolve([(d, verdicts.get((d, name), UNK)) for d in defs], pdg, None)
        return lookup

    stmt_nodes = [n for n in pdg.nodes if n.node is not None and n.defs]
    for _ in range(4):
        changed = False
        for n in stmt_nodes:
            ev = _Evaluator(api, lookup_at(n.id), aliases)
            values = _def_values(n.node, ev)
            for v in n.defs:
                verdict = values.get(v, UNK)
                if verdict is UNK and v in retro:
                    verdict = S
                if verdicts.get((n.id, v)) is not verdict:
                    verdicts[(n.id, v)] = verdict
                    changed = True
        if not changed:
            break

    # record conflicts between definitions of the same variable
    by_var: dict[str, list[tuple[int, TypeVerdict]]] = {}
    for (d, v), verdict in verdicts.items():
        by_var.setdefault(v, []).append((d, verdict))
    for v, pairs in sorted(by_var.items()):
        kinds = {x for _, x in pairs if x is not UNK}
        if len(kinds) > 1 and (S in kinds or SC in kinds) and NS in kinds:
            conflicts.append(v)
            log.debug("inference conflict for %s in %s", v, fn.qualified_name)

    typing_ = FunctionTyping(fn, pdg, api, aliases, verdicts, retro, [], conflicts)
    typing_.seeds = _seeds(typing_, hints, imported)
    return typing_


def _first_name_col(node, var: str) -> tuple[int, int]:
    best: tuple[int, int] | None = None
    for expr in header_exprs(node.node):
        for sub in ast.walk(expr):
            if isinstance(sub, ast.Name) and sub.id == var:
                site = (sub.lineno, sub.col_offset)
                if best is None or site < best:
                    best = site
    return best or node.span[:2]


def _seeds(t: FunctionTyping, hints: dict[str, TypeVerdict],
           imported: frozenset[str]) -> list[StringSeed]:
    pdg = t.pdg
    candidates: dict[str, StringSeed] = {}

    def offer(seed: StringSeed) -> None:
        cur = candidates.get(seed.variable_name)
        if cur is None or (seed.line, seed.col) < (cur.line, cur.col):
            candidates[seed.variable_name] = seed

    for (d, v), verdict in sorted(t.def_verdicts.items()):
        if not verdict.is_stringy or v == "_" or v in imported:
            continue
        if d == ENTRY:
            uses = [u for u in pdg.uses_of(ENTRY, v) if pdg.nodes[u].node is not None]
            if not uses:
                continue
            sites = sorted((_first_name_col(pdg.nodes[u], v), u) for u in uses)
            (line, col), site = sites[0]
            evidence = "type-hint" if hints.get(v, UNK).is_stringy else "string-method-use"
            offer(StringSeed(v, ENTRY, site, line, col, evidence))
            continue
        node = pdg.nodes[d]
        stmt = node.node
        line, col = _target_col(stmt, v) or node.span[:2]
        evidence = "known-return"
        value = getattr(stmt, "value", None)
        if isinstance(stmt, ast.AnnAssign) and hint_verdict(ast.unparse(stmt.annotation)).is_stringy:
            evidence = "type-hint"
        elif _is_literal_value(value):
            evidence = "literal-assignment"
        elif v in t.retro and _raw_verdict(t, d, v) is UNK:
            evidence = "string-method-use"
        offer(StringSeed(v, d, d, line, col, evidence))
    def order(seed: StringSeed) -> tuple:
        # evaluation order: statements by position; inside one statement the values
        # read on the right-hand side come before the names it binds
        start = pdg.nodes[seed.site].span[:2]
        binds = seed.node != ENTRY and seed.node == seed.site
        return (start, binds, seed.line, seed.col, seed.variable_name)

    return sorted(candidates.values(), key=order)


def _raw_verdict(t: FunctionTyping, d: int, v: str) -> TypeVerdict:
    node = t.pdg.nodes[d]
    values = _def_values(node.node, t.evaluator(d))
    return values.get(v, UNK)


def _target_col(stmt: ast.AST, var: str) -> tuple[int, int] | None:
    targets: list[ast.AST] = []
    if isinstance(stmt, ast.Assign):
        targets = stmt.targets
    elif isinstance(stmt, (ast.AnnAssign, ast.AugAssign, ast.For, ast.AsyncFor)):
        targets = [stmt.target]
    elif isinstance(stmt, (ast.With, ast.AsyncWith)):
        targets = [i.optional_vars for i in stmt.items if i.optional_vars is not None]
    for target in targets:
        for sub in ast.walk(target):
            if isinstance(sub, ast.Name) and sub.id == var:
                return (sub.lineno, sub.col_offset)
    for sub in ast.walk(stmt):
        if isinstance(sub, ast.NamedExpr) and sub.target.id == var:
            return (sub.target.lineno, sub.target.col_offset)
    return None


def infer_string_vars(fn: FunctionUnit, api: KnownApiTable = DEFAULT_TABLE,
                      module: ast.Module | None = None) -> list[StringSeed]:
    """Ordered string seeds of a function (one per variable, earliest site)."""
    return type_function(fn, api, module=module).seeds


__all__ = [
    "TypeVerdict", "ApiFact", "KnownApiTable", "DEFAULT_TABLE", "StringSeed", "FunctionTyping",
    "expr_verdict", "infer_string_vars", "type_function", "load_table", "parse_table_extension",
    "hint_verdict", "dotted_name",
]
