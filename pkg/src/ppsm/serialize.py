"""Self-describing text documents for instances, sweep specs and traces.

One document is a sequence of typed records, one key each:

    ppsm-doc 1
    i n_gen 6
    f stress_e 1.2999999999999998
    s variant ppsm
    v alpha_list 3
    10 100 1000
    m em_cost 2 3
    1 2 3
    4 5 6

Floats are written with repr-quality precision (17 significant digits),
so write -> read -> write is byte-identical.
"""

from __future__ import annotations

import io
from collections import OrderedDict

import numpy as np

FORMAT_HEADER = "ppsm-doc 1"


class DocumentError(ValueError):
    """Malformed document text or wrong-typed key access."""


def _fmt_float(x: float) -> str:
    return "%.17g" % float(x)


def _fmt_row(row) -> str:
    return " ".join(_fmt_float(v) for v in row)


class Doc:
    """Ordered key/value store with int, float, string, vector and matrix slots."""

    def __init__(self):
        self._items: "OrderedDict[str, tuple[str, object]]" = OrderedDict()

    def __contains__(self, key: str) -> bool:
        return key in self._items

    def keys(self):
        return self._items.keys()

    def _put(self, kind: str, key: str, value) -> None:
        if " " in key or not key:
            raise DocumentError(f"bad key {key!r}")
        self._items[key] = (kind, value)

    def _take(self, kind: str, key: str):
        try:
            k, v = self._items[key]
        except KeyError:
            raise DocumentError(f"missing key {key!r}") from None
        if k != kind:
            raise DocumentError(f"key {key!r} holds a {k!r}, wanted {kind!r}")
        return v

    def set_int(self, key: str, value: int) -> None:
        self._put("i", key, int(value))

    def set_float(self, key: str, value: float) -> None:
        self._put("f", key, float(value))

    def set_str(self, key: str, value: str) -> None:
        if "\n" in value:
            raise DocumentError("strings must be single-line")
        self._put("s", key, value)

    def set_vec(self, key: str, value) -> None:
        arr = np.asarray(value, dtype=float).reshape(-1)
        self._put("v", key, arr)

    def set_mat(self, key: str, value) -> None:
        arr = np.asarray(value, dtype=float)
        if arr.ndim != 2:
            raise DocumentError(f"matrix {key!r} must be 2-D")
        self._put("m", key, arr)

    def get_int(self, key: str) -> int:
        return self._take("i", key)

    def get_float(self, key: str) -> float:
        return self._take("f", key)

    def get_str(self, key: str) -> str:
        return self._take("s", key)

    def get_vec(self, key: str) -> np.ndarray:
        return self._take("v", key).copy()

    def get_mat(self, key: str) -> np.ndarray:
        return self._take("m", key).copy()

    def dumps(self) -> str:
        out = io.StringIO()
        out.write(FORMAT_HEADER + "\n")
        for key, (kind, value) in self._items.items():
            if kind == "i":
                out.write(f"i {key} {value}\n")
            elif kind == "f":
                out.write(f"f {key} {_fmt_float(value)}\n")
            elif kind == "s":
                out.write(f"s {key} {value}\n")
            elif kind == "v":
                out.write(f"v {key} {value.size}\n")
                if value.size:
                    out.write(_fmt_row(value) + "\n")
            elif kind == "m":
                r, c = value.shape
                out.write(f"m {key} {r} {c}\n")
                for row in value:
                    out.write(_fmt_row(row) + "\n")
        return out.getvalue()

    @classmethod
    def loads(cls, text: str) -> "Doc":
        lines = text.splitlines()
        if not lines or lines[0].strip() != FORMAT_HEADER:
            raise DocumentError(f"missing {FORMAT_HEADER!r} header")
        doc = cls()
        i = 1
        while i < len(lines):
            line = lines[i].strip()
            i += 1
            if not line:
                continue
            parts = line.split(" ", 2)
            if len(parts) < 3:
                raise DocumentError(f"bad record line: {line!r}")
            kind, key, rest = parts
            if kind == "i":
                doc.set_int(key, int(rest))
            elif kind == "f":
                doc.set_float(key, float(rest))
            elif kind == "s":
                doc.set_str(key, rest)
            elif kind == "v":
                n = int(rest)
                if n == 0:
                    doc.set_vec(key, np.zeros(0))
                else:
                    vals = np.array([float(t) for t in lines[i].split()])
                    i += 1
                    if vals.size != n:
                        raise DocumentError(f"vector {key!r}: expected {n} values")
                    doc.set_vec(key, vals)
            elif kind == "m":
                r, c = (int(t) for t in rest.split())
                rows = []
                for _ in range(r):
                    vals = [float(t) for t in lines[i].split()]
                    i += 1
                    if len(vals) != c:
                        raise DocumentError(f"matrix {key!r}: expected {c} columns")
                    rows.append(vals)
                doc.set_mat(key, np.array(rows, dtype=float).reshape(r, c))
            else:
                raise DocumentError(f"unknown record kind {kind!r}")
        return doc

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path) -> "Doc":
        with open(path) as fh:
            return cls.loads(fh.read())
