"""JSON model files.

A model file is one JSON object::

    {"domains": [d0, d1, ...],
     "unary": [[...], [...], ...],
     "factors": [{"vars": [i, j, ...], "table": [...]}, ...]}

Tables are flat lists in row-major order over the factor's variables (the
last variable varies fastest).  ``-inf`` is written as the string ``"-inf"``;
other non-finite values are rejected.  The reader validates everything and
reports the line of the offending value.
"""

from __future__ import annotations

import json
import json.decoder
import json.scanner
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import ModelError, ModelFormatError
from .model import Model, compatibility_violations

NEG_INF_TOKEN = "-inf"
_CONSTANTS = ("NaN", "Infinity", "-Infinity")


class _Node:
    """Mixin carrying the source offset of a parsed container and of its items."""

    pos: int
    item_pos: list[int]


class _List(list, _Node):
    pass


class _Dict(dict, _Node):
    key_pos: dict[str, int]


class _Decoder(json.JSONDecoder):
    """Pure-Python decoder that remembers where every container and item starts."""

    def __init__(self):
        super().__init__()
        self.parse_array = self._array
        self.parse_object = self._object
        self.memo = {}
        inner = json.scanner.py_make_scanner(self)
        self.scan_once = self._guarded(inner)

    @staticmethod
    def _guarded(scan):
        def run(s, idx):
            if s.startswith(_CONSTANTS, idx):
                raise ModelFormatError('NaN/Infinity are not allowed; write -inf as the string "-inf"', _line(s, idx))
            return scan(s, idx)
        return run

    def _recording(self, scan, positions):
        guarded = self._guarded(scan)

        def run(s, idx):
            positions.append(idx)
            return guarded(s, idx)
        return run

    def _array(self, s_and_end, scan_once):
        positions: list[int] = []
        values, end = json.decoder.JSONArray(s_and_end, self._recording(scan_once, positions))
        out = _List(values)
        out.pos, out.item_pos = s_and_end[1] - 1, positions
        return out, end

    def _object(self, s_and_end, strict, scan_once, object_hook, object_pairs_hook, memo=None):
        positions: list[int] = []
        pairs, end = json.decoder.JSONObject(s_and_end, strict, self._recording(scan_once, positions),
                                             None, list, memo if memo is not None else {})
        s, start = s_and_end
        out = _Dict()
        out.pos, out.item_pos, out.key_pos = start - 1, positions, {}
        for (k, v), p in zip(pairs, positions):
            if k in out:
                raise ModelFormatError(f"duplicate key {k!r}", _line(s, p))
            out[k] = v
            out.key_pos[k] = p
        return out, end


def _line(s: str, pos: int) -> int:
    return s.count("\n", 0, pos) + 1


class _Reader:
    def __init__(self, text: str):
        self.text = text

    def fail(self, message: str, pos: int):
        raise ModelFormatError(message, _line(self.text, pos))

    def expect_list(self, value, pos: int, what: str) -> _List:
        if not isinstance(value, list):
            self.fail(f"{what} must be a list", pos)
        return value

    def int_list(self, value, pos: int, what: str) -> list[int]:
        lst = self.expect_list(value, pos, what)
        for x, p in zip(lst, lst.item_pos):
            if isinstance(x, bool) or not isinstance(x, int):
                self.fail(f"{what} entries must be integers, got {x!r}", p)
        return list(lst)

    def table(self, value, pos: int, size: int, what: str) -> np.ndarray:
        lst = self.expect_list(value, pos, what)
        if len(lst) != size:
            self.fail(f"{what} has {len(lst)} entries, expected {size}", pos)
        out = np.empty(size)
        for i, (x, p) in enumerate(zip(lst, lst.item_pos)):
            if x == NEG_INF_TOKEN and isinstance(x, str):
                out[i] = -math.inf
            elif isinstance(x, bool) or not isinstance(x, (int, float)):
                self.fail(f'{what} entry {i} must be a number or "-inf", got {x!r}', p)
            elif not math.isfinite(float(x)):
                self.fail(f"{what} entry {i} overflows to a non-finite value", p)
            else:
                out[i] = float(x)
        if size and np.all(out == -math.inf):
            self.fail(f"{what} is entirely -inf", pos)
        return out

    def model(self) -> Model:
        try:
            doc = _Decoder().decode(self.text)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"invalid JSON: {exc.msg}", exc.lineno) from None
        if not isinstance(doc, dict):
            self.fail("top level must be a JSON object", 0)
        extra = set(doc) - {"domains", "unary", "factors"}
        if extra:
            k = sorted(extra)[0]
            self.fail(f"unknown key {k!r}", doc.key_pos[k])
        for k in ("domains", "unary"):
            if k not in doc:
                self.fail(f"missing key {k!r}", doc.pos)

        domains = self.int_list(doc["domains"], doc.key_pos["domains"], "domains")
        for d, p in zip(domains, doc["domains"].item_pos):
            if d < 1:
                self.fail(f"domain sizes must be >= 1, got {d}", p)

        unary_doc = self.expect_list(doc["unary"], doc.key_pos["unary"], "unary")
        if len(unary_doc) != len(domains):
            self.fail(f"{len(unary_doc)} unary tables for {len(domains)} variables", unary_doc.pos)
        unary = [self.table(u, p, d, f"unary table {v}")
                 for v, (u, p, d) in enumerate(zip(unary_doc, unary_doc.item_pos, domains))]

        factors, factor_pos = [], []
        fdoc = doc.get("factors", _List())
        if "factors" in doc:
            fdoc = self.expect_list(fdoc, doc.key_pos["factors"], "factors")
        seen: dict[tuple[int, ...], int] = {}
        for a, (f, p) in enumerate(zip(fdoc, getattr(fdoc, "item_pos", []))):
            if not isinstance(f, dict) or set(f) != {"vars", "table"}:
                self.fail(f'factor {a} must be an object with exactly the keys "vars" and "table"', p)
            vars_ = tuple(self.int_list(f["vars"], f.key_pos["vars"], f"factor {a} vars"))
            vpos = f.key_pos["vars"]
            if len(vars_) < 2:
                self.fail(f"factor {a} has {len(vars_)} variable(s); singleton factors are not allowed", vpos)
            if any(v < 0 or v >= len(domains) for v in vars_):
                self.fail(f"factor {a} references a variable outside 0..{len(domains) - 1}", vpos)
            if any(x >= y for x, y in zip(vars_, vars_[1:])):
                self.fail(f"factor {a} vars must be strictly increasing, got {list(vars_)}", vpos)
            if vars_ in seen:
                self.fail(f"factor {a} duplicates factor {seen[vars_]} on variables {list(vars_)}", p)
            seen[vars_] = a
            size = math.prod(domains[v] for v in vars_)
            factors.append((vars_, self.table(f["table"], f.key_pos["table"], size, f"factor {a} table")))
            factor_pos.append(p)

        try:
            m = Model(domains, unary, factors)
        except ModelError as exc:
            self.fail(str(exc), doc.pos)
        bad = compatibility_violations(m)
        if bad:
            a, v, s = bad[0]
            self.fail(f"factor {a} is incompatible with unary table {v} at state {s}: "
                      "exactly one of them is -inf there", factor_pos[a])
        return m


def loads_model(text: str) -> Model:
    return _Reader(text).model()


def load_model(path: str | os.PathLike) -> Model:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ModelFormatError(f"cannot read {path}: {exc}") from None
    return loads_model(text)


def _num(x: float) -> str:
    if x == -math.inf:
        return json.dumps(NEG_INF_TOKEN)
    if math.isinf(x) or math.isnan(x):
        raise ModelError(f"cannot serialize {x}")
    return json.dumps(float(x))


def _row(values) -> str:
    return "[" + ", ".join(_num(float(x)) for x in np.ravel(values)) + "]"


def dumps_model(m: Model) -> str:
    """Canonical text: one line per unary table and per factor, so validator lines point at tables."""
    lines = ["{", f'  "domains": {json.dumps(list(m.domains))},', '  "unary": [']
    lines += [f"    {_row(u)}{',' if v < m.num_vars - 1 else ''}" for v, u in enumerate(m.unary)]
    lines += ["  ],", '  "factors": [']
    lines += [f'    {{"vars": {json.dumps(list(f.vars))}, "table": {_row(f.table)}}}'
              f"{',' if a < m.num_factors - 1 else ''}" for a, f in enumerate(m.factors)]
    lines += ["  ]", "}"]
    return "\n".join(lines) + "\n"


def jsonable(obj):
    """Recursively convert numpy values and non-finite floats (as strings) for strict JSON."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else NEG_INF_TOKEN)
    return obj


def json_text(obj) -> str:
    return json.dumps(jsonable(obj), indent=1, allow_nan=False) + "\n"


def write_atomic(path: str | os.PathLike, text: str) -> None:
    """Write through a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def dump_model(m: Model, path: str | os.PathLike) -> None:
    write_atomic(path, dumps_model(m))
