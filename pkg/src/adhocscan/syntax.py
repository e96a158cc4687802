"""Python source front end: parsing, normalized syntax trees, function units and LOC."""

from __future__ import annotations

import ast
import bisect
import io
import tokenize
import warnings
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Iterator

Span = tuple[int, int, int, int]

NODE_KINDS = frozenset({
    "module", "function-def", "assignment", "augmented-assignment", "expression-statement",
    "if", "for", "while", "try", "except-handler", "with", "return", "raise", "break",
    "continue", "call", "attribute-access", "subscript", "slice-expression", "name",
    "literal", "binary-op", "bool-op", "compare", "tuple-expr", "list-expr",
    "comprehension", "conditional-expr", "formatted-string", "star-target", "annotation",
    "opaque",
})

_KIND_OF = {
    ast.Module: "module",
    ast.FunctionDef: "function-def",
    ast.AsyncFunctionDef: "function-def",
    ast.Assign: "assignment",
    ast.AnnAssign: "assignment",
    ast.AugAssign: "augmented-assignment",
    ast.Expr: "expression-statement",
    ast.If: "if",
    ast.For: "for",
    ast.AsyncFor: "for",
    ast.While: "while",
    ast.Try: "try",
    ast.ExceptHandler: "except-handler",
    ast.With: "with",
    ast.AsyncWith: "with",
    ast.Return: "return",
    ast.Raise: "raise",
    ast.Break: "break",
    ast.Continue: "continue",
    ast.Call: "call",
    ast.Attribute: "attribute-access",
    ast.Subscript: "subscript",
    ast.Slice: "slice-expression",
    ast.Name: "name",
    ast.Constant: "literal",
    ast.BinOp: "binary-op",
    ast.BoolOp: "bool-op",
    ast.Compare: "compare",
    ast.Tuple: "tuple-expr",
    ast.List: "list-expr",
    ast.Set: "list-expr",
    ast.ListComp: "comprehension",
    ast.SetComp: "comprehension",
    ast.DictComp: "comprehension",
    ast.GeneratorExp: "comprehension",
    ast.IfExp: "conditional-expr",
    ast.JoinedStr: "formatted-string",
    ast.Starred: "star-target",
}

# nodes that carry no information of their own
_SKIPPED = (ast.expr_context, ast.operator, ast.boolop, ast.cmpop, ast.unaryop)


class ParseFailure(Exception):
    """Raised when a source file is not valid Python 3."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


@dataclass
class SyntaxNode:
    kind: str
    span: Span
    children: list[SyntaxNode] = field(default_factory=list)
    text: str | None = None
    node: ast.AST | None = field(default=None, repr=False, compare=False)

    def walk(self) -> Iterator[SyntaxNode]:
        yield self
        for child in self.children:
            yield from child.walk()


def _own_span(node: ast.AST) -> Span | None:
    if getattr(node, "lineno", None) is None:
        return None
    end_line = getattr(node, "end_lineno", None) or node.lineno
    end_col = getattr(node, "end_col_offset", None)
    if end_col is None:
        end_col = node.col_offset
    return (node.lineno, node.col_offset, end_line, end_col)


def _union(a: Span | None, b: Span) -> Span:
    if a is None:
        return b
    start = min((a[0], a[1]), (b[0], b[1]))
    end = max((a[2], a[3]), (b[2], b[3]))
    return (*start, *end)


def _leaf_text(node: ast.AST) -> str | None:
    if isinstance(node, ast.Name):
        return node.id
    if isinstance(node, ast.Constant):
        return repr(node.value)
    if isinstance(node, ast.Attribute):
        return node.attr
    if isinstance(node, ast.arg):
        return node.arg
    return None


def _normalize(node: ast.AST) -> list[SyntaxNode]:
    """Normalize one ast node; position-less helper nodes are flattened into their parent."""
    children: list[SyntaxNode] = []
    for name, value in ast.iter_fields(node):
        items = value if isinstance(value, list) else [value]
        for item in items:
            if not isinstance(item, ast.AST) or isinstance(item, _SKIPPED):
                continue
            converted = _normalize(item)
            if name in ("annotation", "returns") and converted:
                ann_span = None
                for c in converted:
                    ann_span = _union(ann_span, c.span)
                converted = [SyntaxNode("annotation", ann_span, converted, node=item)]
            children.extend(converted)
    if isinstance(node, ast.Module):
        span: Span | None = (1, 0, 1, 0)
    else:
        span = _own_span(node)
    if span is None:
        return children
    for child in children:
        span = _union(span, child.span)
    kind = _KIND_OF.get(type(node), "opaque")
    return [SyntaxNode(kind, span, children, _leaf_text(node), node)]


def to_syntax(node: ast.AST) -> SyntaxNode:
    converted = _normalize(node)
    if len(converted) == 1:
        return converted[0]
    span = None
    for c in converted:
        span = _union(span, c.span)
    return SyntaxNode("opaque", span or (0, 0, 0, 0), converted, node=node)


def parse_module(source_text: str) -> ast.Module:
    """Parse to a raw ``ast.Module``; raises ParseFailure on invalid input."""
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return ast.parse(source_text, type_comments=False)
    except SyntaxError as exc:
        raise ParseFailure(exc.lineno or 1, exc.msg or "invalid syntax") from None
    except ValueError as exc:  # e.g. null bytes
        raise ParseFailure(1, str(exc)) from None


def parse_source(source_text: str) -> SyntaxNode:
    """Parse Python 3 source into a module-rooted SyntaxNode tree.

    Raises ParseFailure carrying the line of the first syntax error.
    """
    return to_syntax(parse_module(source_text))


def decode_source(data: bytes) -> str:
    return data.decode("utf-8", errors="replace")


# ---------------------------------------------------------------- functions

@dataclass
class FunctionUnit:
    qualified_name: str
    parameters: list[tuple[str, str | None]]
    node: ast.AST = field(repr=False)
    span: tuple[int, int]
    is_synthetic_main: bool
    ef_loc: int
    module_path: str = ""
    body_start: int = 0
    statements: list[ast.stmt] = field(default_factory=list, repr=False)

    @cached_property
    def body(self) -> SyntaxNode:
        return to_syntax(self.node)

    @property
    def name(self) -> str:
        return self.qualified_name.rsplit(".", 1)[-1]


_FUNC_TYPES = (ast.FunctionDef, ast.AsyncFunctionDef)


def module_name_for(path: str) -> str:
    parts = path.replace("\\", "/").split("/")
    if parts and parts[-1].endswith(".py"):
        parts[-1] = parts[-1][:-3]
    if len(parts) > 1 and parts[-1] == "__init__":
        parts.pop()
    return ".".join(p for p in parts if p)


def _parameters(fn: ast.AST) -> list[tuple[str, str | None]]:
    a = fn.args
    params = [*a.posonlyargs, *a.args]
    if a.vararg:
        params.append(a.vararg)
    params.extend(a.kwonlyargs)
    if a.kwarg:
        params.append(a.kwarg)
    return [(p.arg, ast.unparse(p.annotation) if p.annotation else None) for p in params]


def _child_blocks(stmt: ast.stmt) -> Iterator[list[ast.stmt]]:
    """Nested statement blocks of a compound statement, in source order."""
    yield getattr(stmt, "body", None) or []
    for handler in getattr(stmt, "handlers", None) or []:
        yield handler.body
    for case in getattr(stmt, "cases", None) or []:
        yield case.body
    yield getattr(stmt, "orelse", None) or []
    yield getattr(stmt, "finalbody", None) or []


def unit_statements(body: list[ast.stmt]) -> Iterator[ast.stmt]:
    """Yield the statements owned by a unit whose body is ``body``.

    Nested function bodies are excluded; class bodies are flattened into the owner.
    """
    for stmt in body:
        yield stmt
        if isinstance(stmt, _FUNC_TYPES):
            continue
        for block in _child_blocks(stmt):
            yield from unit_statements(block)


def extract_functions(module_root: SyntaxNode | ast.Module, path: str,
                      source_text: str | None = None) -> list[FunctionUnit]:
    """All function/method units of a module plus its synthetic ``__main__`` unit,
    ordered by start line."""
    tree = module_root.node if isinstance(module_root, SyntaxNode) else module_root
    modname = module_name_for(path)
    lines = sorted(code_lines(source_text)) if source_text is not None else None
    units: list[FunctionUnit] = []

    def count(first: int, last: int) -> int:
        return bisect.bisect_right(lines, last) - bisect.bisect_left(lines, first)

    def loc(first: int, last: int, exclude: list[tuple[int, int]] = ()) -> int:
        if lines is None:
            return 0
        total = count(first, last)
        # nested spans may overlap, so merge them before subtracting
        end = first - 1
        for a, b in sorted(exclude):
            a, b = max(a, end + 1, first), min(b, last)
            if a <= b:
                total -= count(a, b)
                end = b
        return total

    def add_function(fn: ast.AST, prefix: str) -> None:
        qual = f"{prefix}.{fn.name}"
        start = min([fn.lineno] + [d.lineno for d in fn.decorator_list])
        end = fn.end_lineno or fn.lineno
        units.append(FunctionUnit(
            qualified_name=qual,
            parameters=_parameters(fn),
            node=fn,
            span=(start, end),
            is_synthetic_main=False,
            ef_loc=loc(start, end),
            module_path=path,
            body_start=fn.body[0].lineno,
            statements=list(unit_statements(fn.body)),
        ))
        walk_scope(fn.body, qual)

    def walk_scope(body: list[ast.stmt], prefix: str) -> None:
        for stmt in _scoped_defs(body):
            if isinstance(stmt, ast.ClassDef):
                walk_scope(stmt.body, f"{prefix}.{stmt.name}")
            else:
                add_function(stmt, prefix)

    walk_scope(tree.body, modname)

    top = list(unit_statements(tree.body))
    if top:
        first = min([top[0].lineno] + [d.lineno for d in getattr(top[0], "decorator_list", [])])
        last = max(s.end_lineno or s.lineno for s in tree.body)
    else:
        first = last = 1
    nested = [u.span for u in units]
    main_loc = loc(first, last, nested)
    units.append(FunctionUnit(
        qualified_name=f"{modname}.__main__" if modname else "__main__",
        parameters=[],
        node=tree,
        span=(first, last),
        is_synthetic_main=True,
        ef_loc=main_loc,
        module_path=path,
        body_start=first,
        statements=top,
    ))
    units.sort(key=lambda u: (u.span[0], u.is_synthetic_main, u.qualified_name))
    return units


def _scoped_defs(body: list[ast.stmt]) -> Iterator[ast.stmt]:
    """Function and class definitions reachable without entering another def or class."""
    for stmt in body:
        if isinstance(stmt, (*_FUNC_TYPES, ast.ClassDef)):
            yield stmt
            continue
        for block in _child_blocks(stmt):
            yield from _scoped_defs(block)


# ---------------------------------------------------------------- lines of code

_NON_CODE = {tokenize.COMMENT, tokenize.NL, tokenize.NEWLINE, tokenize.INDENT,
             tokenize.DEDENT, tokenize.ENDMARKER, tokenize.ENCODING}


@lru_cache(maxsize=32)
def code_lines(source_text: str) -> frozenset[int]:
    """Physical lines holding at least one non-comment token."""
    lines: set[int] = set()
    try:
        for tok in tokenize.generate_tokens(io.StringIO(source_text).readline):
            if tok.type in _NON_CODE:
                continue
            lines.update(range(tok.start[0], tok.end[0] + 1))
    except (tokenize.TokenError, IndentationError, SyntaxError):
        lines = {i for i, text in enumerate(source_text.splitlines(), 1)
                 if text.strip() and not text.strip().startswith("#")}
    return frozenset(lines)


def loc_of(span: tuple[int, int], source_text: str) -> int:
    """Count code lines (not blank, not comment-only) in the inclusive line range."""
    first, last = span
    return sum(1 for ln in code_lines(source_text) if first <= ln <= last)
