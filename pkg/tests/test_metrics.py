import textwrap

import pytest

from adhocscan.metrics import CallArg, CaughtException, ProjectIndex, build_record, locate
from adhocscan.slicer import collect_parsers
from adhocscan.strtypes import imported_names
from adhocscan.syntax import extract_functions, parse_module

from cases import CYCLO_CASES, RISKY, dedent, exception_source
from helpers import record, records, slices


def golden_record(golden_sources, key, name=None):
    src = golden_sources[key]
    recs = records(src, name)
    assert len(recs) == 1
    return recs[0]


# ---------------------------------------------------------------- golden profiles

def test_parse_version_profile(golden_sources):
    r = golden_record(golden_sources, "setup", "parse_version")
    assert sorted(c.name for c in r.calls) == ["int", "map", "split"]
    assert r.function_count == 3
    split = next(c for c in r.calls if c.name == "split")
    assert split.args == (CallArg("string-literal", "."),)
    assert (r.input_source, r.input_origin) == ("ef-argument", "caller-provided")
    assert r.cyclo == 1
    assert r.loc == 1
    assert [(lp.kind, lp.bound) for lp in r.loops] == [("functional", "linear-on-input")] * 2
    assert r.loop_nesting_depth == 1
    assert r.uncaught_exceptions == ["ValueError"]
    assert r.sugar == []
    assert r.regexes == []


def test_jobserver_profile(golden_sources):
    r = golden_record(golden_sources, "jobserver")
    assert (r.input_source, r.input_origin) == ("environment-subscript", "environment-variable")
    assert {"list-comprehension", "subscript", "slice-notation", "tuple-assignment"} <= set(r.sugar)
    assert r.shotgun
    assert r.cyclo == 3
    # optimistic tuple assignment on the final split (line 37), none for partition (line 31)
    assert "ValueError" in r.uncaught_exceptions
    assert "KeyError" in r.uncaught_exceptions
    assert r.split_tuple_count == 1


def test_jobserver_arity_error_only_on_split(golden_sources):
    from adhocscan.metrics import potential_exceptions
    src = golden_sources["jobserver"]
    tree = parse_module(src)
    main = next(u for u in extract_functions(tree, "j.py", src) if u.is_synthetic_main)
    (sl,) = collect_parsers(main, module=tree)
    value_errors = {line for name, _, line, _ in potential_exceptions(sl) if name == "ValueError"}
    assert 37 in value_errors
    assert 31 not in value_errors


def test_godot_profile(golden_sources):
    r = golden_record(golden_sources, "godot")
    assert (r.input_source, r.input_origin) == ("function-call", "process-output")
    (rx,) = [x for x in r.regexes if x.api_name == "re.search"]
    assert rx.pattern == r"[0-9]+\.[0-9.]+"
    assert rx.role == "first-pass"
    assert "method-chaining" in r.sugar
    names = [c.name for c in r.calls]
    assert {"re.search", "group", "split", "map", "int", "list"} <= set(names)
    origins = {c.name: c.origin for c in r.calls}
    assert origins["re.search"] == "builtin-or-stdlib"


# ---------------------------------------------------------------- locate

def test_locate_beginning():
    r = record("def f(s: str):\n    n = int(s)\n    return n\n")
    assert (r.position_rel, r.position_cat, r.shotgun) == (0.0, "beginning", False)


def test_locate_last_line_of_21_line_body():
    body = [f"    x{i} = {i}" for i in range(20)] + ["    return int(s)"]
    src = "def f(s: str):\n" + "\n".join(body) + "\n"
    r = record(src)
    assert r.position_rel == 1.0
    assert r.position_cat == "end"


def test_locate_middle_and_single_gap_not_shotgun():
    src = """
    def f(s: str, k):
        a = 1
        b = 2
        t = s.strip()
        c = a + b
        n = int(t)
        d = c * 2
        e = d + 1
        return n
    """
    r = record(src)
    assert r.position_cat == "middle"
    assert not r.shotgun


def test_shotgun_needs_two_gaps_with_statements():
    src = """
    def f(s: str):
        t = s.strip()
        a = 1
        u = t.lower()
        # just a comment

        n = int(u)
        return n
    """
    assert not record(src).shotgun
    src2 = src.replace("# just a comment", "b = 2")
    assert record(src2).shotgun


# ---------------------------------------------------------------- complexity

@pytest.mark.parametrize("name, expected, src", CYCLO_CASES, ids=[c[0] for c in CYCLO_CASES])
def test_cyclo_hand_counts(name, expected, src):
    assert record(dedent(src)).cyclo == expected


# ---------------------------------------------------------------- inputs

@pytest.mark.parametrize("src, source, origin", [
    ("import sys\ndef f():\n    a = sys.argv[1]\n    return int(a)\n", "global-variable", "command-line"),
    ("import os\ndef f():\n    a = os.getenv('X')\n    return int(a)\n", "function-call", "environment-variable"),
    ("import os\ndef f():\n    a = os.environ['X']\n    return int(a)\n", "environment-subscript",
     "environment-variable"),
    ("def f(path):\n    a = open(path).read()\n    return int(a)\n", "function-call", "file"),
    ("def f():\n    a = input()\n    return int(a)\n", "function-call", "stdin"),
    ("import subprocess\ndef f():\n    a = subprocess.getoutput('ls')\n    return int(a)\n",
     "function-call", "process-output"),
    ("def f(a: str):\n    return int(a)\n", "ef-argument", "caller-provided"),
    ("def f():\n    a = '42'\n    return int(a)\n", "literal", "unknown"),
    ("class K:\n    def f(self):\n        name = self.name\n        return int(name.strip())\n",
     "instance-attribute", "unknown"),
])
def test_input_classification(src, source, origin):
    r = record(src)
    assert (r.input_source, r.input_origin) == (source, origin)


def test_global_variable_source():
    src = """
    import os
    CONFIG = os.environ.get("CONFIG", "")
    def f():
        return CONFIG.split(",")[0]
    """
    r = record(src, "f")
    assert r.input_source == "global-variable"


def test_origin_traced_through_local_copies():
    src = """
    import sys
    def f():
        raw = sys.stdin.readline()
        line = raw.strip()
        return line.split(",")
    """
    assert record(src).input_origin == "stdin"


# ---------------------------------------------------------------- calls

def test_call_origins():
    src = """
    import json
    import yaml
    def helper(x):
        return x
    def f(s: str):
        t = s.strip()
        a = helper(t)
        b = yaml.safe_load(t)
        c = json.loads(t)
        d = mystery(t)
        return int(t)
    """
    r = record(dedent(src), "f")
    origins = {c.name: c.origin for c in r.calls}
    assert origins["helper"] == "user-defined"
    assert origins["yaml.safe_load"] == "third-party"
    assert origins["json.loads"] == "builtin-or-stdlib"
    assert origins["int"] == "builtin-or-stdlib"
    assert origins["mystery"] == "unknown"
    assert [c.ordinal for c in r.calls] == list(range(1, r.function_count + 1))


def test_project_index_marks_cross_module_definitions():
    src = "def f(s: str):\n    return parse_thing(s.strip()), s[0]\n"
    tree = parse_module(src)
    (fn,) = [u for u in extract_functions(tree, "m.py", src) if not u.is_synthetic_main]
    (sl,) = collect_parsers(fn, module=tree)
    r = build_record(sl, src, project_index=ProjectIndex(functions=frozenset({"parse_thing"})))
    assert {c.name: c.origin for c in r.calls}["parse_thing"] == "user-defined"


def test_call_arguments():
    r = record("def f(s: str, sep):\n    return s.split(sep, 1)[0].replace('a', str(2))\n")
    split = next(c for c in r.calls if c.name == "split")
    assert split.args == (CallArg("variable"), CallArg("number-literal", "1"))
    replace = next(c for c in r.calls if c.name == "replace")
    assert replace.args == (CallArg("string-literal", "a"), CallArg("call"))


def test_pure_subscript_slice_has_no_calls():
    r = record("def f(s: str):\n    c = s[0]\n    return c\n")
    assert r.calls == [] and r.function_count == 0


# ---------------------------------------------------------------- sugar

@pytest.mark.parametrize("line, tag", [
    ("a, b = s.split(',')", "tuple-assignment"),
    ("a, *rest = s.split(',')", "star-unpack"),
    ("x = s[0]", "subscript"),
    ("x = s[1:]", "slice-notation"),
    ("x = [c for c in s.split() if c]", "list-comprehension"),
    ("x = list(c for c in s.split() if c)", "generator-expr"),
    ("x = {c for c in s.split(',')}", "dict-or-set-comprehension"),
    ("x = int(f'{s}0')", "f-string"),
    ("x = int(s) if s.isdigit() else 0", "conditional-expr"),
    ("x = '0' <= s[0] <= '9'", "chained-comparison"),
    ("x = s.strip().lower().split()", "method-chaining"),
])
def test_sugar_tags(line, tag):
    r = record(f"def f(s: str):\n    {line}\n    return x if 'x' in dir() else a\n")
    assert tag in r.sugar


def test_single_hop_is_not_chaining():
    r = record("def f(s: str):\n    return s.split('.')\n")
    assert r.sugar == []


# ---------------------------------------------------------------- regex

def test_dynamic_pattern():
    r = record("import re\ndef f(s: str, p):\n    m = re.compile(p).match(s)\n    return m.group(1)\n")
    assert r.regexes and all(x.pattern == "<dynamic>" for x in r.regexes)
    assert all(x.role == "only" for x in r.regexes)


def test_regex_roles():
    first = record("import re\ndef f(s: str):\n    m = re.search(r'\\d+', s)\n    return int(m.group(0))\n")
    assert [x.role for x in first.regexes] == ["first-pass"]
    terminal = record("import re\ndef f(s: str):\n    t = s.split(',')[0]\n    return re.match('a', t)\n")
    assert [x.role for x in terminal.regexes] == ["terminal"]
    mid = record("import re\ndef f(s: str):\n    t = s.split(',')[0]\n"
                 "    m = re.match('(a+)', t)\n    return int(m.group(1))\n")
    assert [x.role for x in mid.regexes] == ["interleaved"]


def test_no_regex_gives_empty():
    assert record("def f(s: str):\n    return int(s)\n").regexes == []


# ---------------------------------------------------------------- loops

def test_nested_for_loops():
    src = """
    def f(s: str):
        for line in s.splitlines():
            for tok in line.split(","):
                print(tok[0])
    """
    r = record(src)
    assert [(lp.kind, lp.bound) for lp in r.loops] == [("for", "linear-on-input")] * 2
    assert r.loop_nesting_depth == 2


def test_constant_and_unbounded_loops():
    r = record("def f(s: str):\n    for i in range(3):\n        print(s[i])\n")
    assert ("for", "constant") in [(lp.kind, lp.bound) for lp in r.loops]
    src = """
    def f(s: str):
        while True:
            s = s[1:]
            print(s[0])
    """
    r = record(src)
    assert ("while", "unbounded") in [(lp.kind, lp.bound) for lp in r.loops]
    assert not r.regular_candidate


def test_recursive_loop():
    src = """
    def f(s: str):
        if not s:
            return 0
        return int(s[0]) + f(s[1:])
    """
    r = record(src)
    assert "recursive" in [lp.kind for lp in r.loops]
    assert not r.regular_candidate


def test_no_loops():
    r = record("def f(s: str):\n    return s[0]\n")
    assert r.loops == [] and r.loop_nesting_depth == 0
    assert r.regular_candidate


# ---------------------------------------------------------------- exceptions

@pytest.mark.parametrize("kind, exc, params, body", RISKY, ids=[c[0] for c in RISKY])
def test_risky_op_uncaught(kind, exc, params, body):
    r = record(exception_source(params, body))
    assert exc in r.uncaught_exceptions
    assert r.caught_exceptions == []


@pytest.mark.parametrize("handler", ["match", "bare", "Exception", "tuple"])
@pytest.mark.parametrize("kind, exc, params, body", RISKY, ids=[c[0] for c in RISKY])
def test_risky_op_caught_in_enclosing_function(kind, exc, params, body, handler):
    name = {"match": exc, "bare": "", "Exception": "Exception", "tuple": f"(OSError, {exc})"}[handler]
    r = record(exception_source(params, body, name))
    assert exc not in r.uncaught_exceptions
    assert CaughtException(exc, "enclosing-function") in r.caught_exceptions


@pytest.mark.parametrize("kind, exc, params, body", RISKY, ids=[c[0] for c in RISKY])
def test_risky_op_caught_with_slice_scope(kind, exc, params, body):
    r = record(exception_source(params, body, exc, slice_scope=True))
    assert exc not in r.uncaught_exceptions
    assert CaughtException(exc, "slice") in r.caught_exceptions


@pytest.mark.parametrize("kind, exc, params, body", RISKY, ids=[c[0] for c in RISKY])
def test_unrelated_handler_does_not_catch(kind, exc, params, body):
    r = record(exception_source(params, body, "OSError"))
    assert exc in r.uncaught_exceptions


def test_partition_has_no_arity_error():
    r = record("def f(s: str):\n    a, _, b = s.partition('=')\n    return a\n")
    assert "ValueError" not in r.uncaught_exceptions
    assert r.split_tuple_count == 0


def test_explicit_raise_is_excluded_from_uncaught():
    src = """
    def f(code: str):
        if not code.startswith("X"):
            raise ValueError("bad code")
        return int(code[1:])
    """
    r = record(src)
    assert r.raised_exceptions == ["ValueError"]
    assert "ValueError" not in r.uncaught_exceptions


def test_accounting_identity_on_all_fixtures():
    sources = [exception_source(p, b, h, sc) for _, _, p, b in RISKY
               for h, sc in [(None, False), ("ValueError", False), ("", True)]]
    sources += [dedent(src) for _, _, src in CYCLO_CASES]
    for src in sources:
        for r in records(src):
            excluded = [n for n in r.potential_exceptions if n in r.raised_exceptions]
            caught = [c.name for c in r.caught_exceptions]
            assert sorted(r.potential_exceptions) == sorted(caught + r.uncaught_exceptions + [
                n for n in excluded if n not in caught and n not in r.uncaught_exceptions])


# ---------------------------------------------------------------- whole records

def test_minimal_one_statement_parser():
    r = record("def f(s: str):\n    x = s[0]\n")
    assert r.loc == 1
    assert r.expression_count == 1
    assert r.variable_count == 2
    assert r.uncaught_exceptions == ["IndexError"]


def test_empty_collections_are_present():
    r = record("def f(s: str):\n    return s[0]\n")
    for name in ("calls", "sugar", "regexes", "loops", "caught_exceptions", "raised_exceptions"):
        value = getattr(r, name)
        assert isinstance(value, list)


def test_identity_fields(golden_sources):
    src = golden_sources["setup"]
    tree = parse_module(src)
    fn = next(u for u in extract_functions(tree, "setup.py", src) if u.name == "parse_version")
    (sl,) = collect_parsers(fn, module=tree, project="proj")
    r = build_record(sl, src, project_name="proj", project_loc=99, imported=imported_names(tree),
                     source_path="proj/setup.py")
    assert (r.project_name, r.project_loc, r.module_name, r.ef_name) == ("proj", 99, "setup", "setup.parse_version")
    assert r.ef_loc == 2
    assert r.slice_id == "proj:setup.py:2:20:s"


def test_record_invariants_over_fixtures(golden_sources):
    srcs = list(golden_sources.values()) + [dedent(s) for _, _, s in CYCLO_CASES]
    for src in srcs:
        for r in records(src):
            assert r.cyclo >= 1 and r.loc >= 1
            assert r.function_count == len(r.calls)
            assert (r.loop_nesting_depth >= 1) == bool(r.loops)
            assert 0.0 <= r.position_rel <= 1.0
            expected = "beginning" if r.position_rel <= 0.25 else "end" if r.position_rel >= 0.75 else "middle"
            assert r.position_cat == expected
            assert not set(r.raised_exceptions) & set(r.uncaught_exceptions)
            for lp in r.loops:
                if lp.kind == "functional":
                    assert lp.bound in ("linear-on-input", "constant")
            for rx in r.regexes:
                if rx.role == "first-pass":
                    assert True
            ops = [x.role for x in r.regexes]
            assert ("only" in ops) == (bool(ops) and all(o == "only" for o in ops))


def test_records_are_deterministic(golden_sources):
    for src in golden_sources.values():
        assert records(src) == records(src)
