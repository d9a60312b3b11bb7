"""Readers and writers for graph files, boundary-condition files and CSV outputs.

Graph and boundary-condition files are TOML::

    # graph
    diffusion = [1.0, 1.0]
    transport = [1.0]
    vertices = ["v0", "v1", "v2", "v3"]          # optional
    edges = [["v0", "v1"], ["v2", "v3"], ["v1", "v2"]]

    # boundary conditions, rows of numbers or expression strings
    P = [[0, 0], [0, 0]]
    L = [["1", "0"], ["-sqrt(2)", "0.5+1i"]]

CSV files use 17 significant digits, '.' decimals and LF line endings.
"""

from __future__ import annotations

import csv
import io as _io
import json
import os
import re
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .boundary import BoundaryConditions
from .errors import ParseError
from .expr import parse_complex
from .graph import EdgeFunction, MetricGraph

FLOAT_FMT = "{:.17g}"
_TOML_POS = re.compile(r"line (\d+), column (\d+)")


def fmt(v: float) -> str:
    return FLOAT_FMT.format(float(v))


def _load_toml(text: str, what: str) -> dict:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = _TOML_POS.search(str(exc))
        where = f"{m.group(1)}:{m.group(2)}" if m else "1:1"
        raise ParseError("parse-error", f"{where}: {what}: {exc}") from None


def _read_text(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise ParseError("unreadable-input", f"{path}: {exc.strerror}") from None


def loads_graph(text: str) -> MetricGraph:
    doc = _load_toml(text, "graph file")
    unknown = set(doc) - {"diffusion", "transport", "vertices", "edges"}
    if unknown:
        raise ParseError("parse-error", f"1:1: unknown graph keys {sorted(unknown)}")
    edges = doc.get("edges")
    verts = doc.get("vertices")
    if edges is not None and verts is None:
        verts = list(dict.fromkeys(v for pair in edges for v in pair))
    return MetricGraph(tuple(doc.get("diffusion", ())), tuple(doc.get("transport", ())), verts,
                       None if edges is None else tuple(tuple(p) for p in edges))


def read_graph(path) -> MetricGraph:
    return loads_graph(_read_text(path))


def dumps_graph(g: MetricGraph) -> str:
    lines = [
        "diffusion = [" + ", ".join(fmt(a) for a in g.diffusion_lengths) + "]",
        "transport = [" + ", ".join(fmt(a) for a in g.transport_lengths) + "]",
    ]
    if g.vertices is not None:
        lines.append("vertices = [" + ", ".join(json.dumps(str(v)) for v in g.vertices) + "]")
        lines.append("edges = [" + ", ".join(f"[{json.dumps(str(a))}, {json.dumps(str(b))}]" for a, b in g.endpoints) + "]")
    return "\n".join(lines) + "\n"


def _matrix(rows, name: str) -> np.ndarray:
    if not isinstance(rows, list) or not all(isinstance(r, list) for r in rows):
        raise ParseError("parse-error", f"1:1: {name} must be a list of rows")
    if len({len(r) for r in rows}) > 1:
        raise ParseError("parse-error", f"1:1: rows of {name} have different lengths")
    out = np.zeros((len(rows), len(rows[0]) if rows else 0), dtype=complex)
    for i, r in enumerate(rows):
        for j, v in enumerate(r):
            out[i, j] = parse_complex(v) if isinstance(v, str) else complex(v)
    return out.real.copy() if np.all(out.imag == 0) else out


def loads_bc(text: str, dims: tuple[int, int]) -> BoundaryConditions:
    """Boundary conditions for a graph with (D, T) edges. Validation is left to the caller."""
    doc = _load_toml(text, "boundary-condition file")
    if "P" not in doc or "L" not in doc:
        raise ParseError("parse-error", "1:1: boundary-condition file needs both P and L")
    return BoundaryConditions(_matrix(doc["P"], "P"), _matrix(doc["L"], "L"), dims)


def read_bc(path, dims: tuple[int, int]) -> BoundaryConditions:
    return loads_bc(_read_text(path), dims)


def _entry(z: complex) -> str:
    z = complex(z)
    if z.imag == 0:
        return fmt(z.real)
    return json.dumps(f"{fmt(z.real)}{'+' if z.imag >= 0 else '-'}{fmt(abs(z.imag))}i")


def dumps_bc(bc: BoundaryConditions) -> str:
    out = []
    for name, M in (("P", bc.P), ("L", bc.L)):
        rows = ", ".join("[" + ", ".join(_entry(z) for z in row) + "]" for row in M)
        out.append(f"{name} = [{rows}]")
    return "\n".join(out) + "\n"


# --- EdgeFunction CSV ----------------------------------------------------------

EDGE_HEADER = ("edge_id", "kind", "x", "re", "im")


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])


def dumps_edge_function(u: EdgeFunction) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EDGE_HEADER)
    for e, v in enumerate(u.values):
        x = u.grid(e)
        kind = u.kind(e)
        for xi, vi in zip(x, v):
            vi = complex(vi)
            w.writerow([e, kind, fmt(xi), fmt(vi.real), fmt(vi.imag)])
    return buf.getvalue()


def write_edge_function(path, u: EdgeFunction) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(dumps_edge_function(u))


def loads_edge_function(text: str, graph: MetricGraph | None = None) -> EdgeFunction:
    """Parse an EdgeFunction CSV; without ``graph`` the lengths and kinds come from the file."""
    rows = list(csv.reader(_io.StringIO(text)))
    if not rows or tuple(h.strip() for h in rows[0]) != EDGE_HEADER:
        raise ParseError("parse-error", f"1:1: expected header {','.join(EDGE_HEADER)}")
    data: dict[int, list] = {}
    kinds: dict[int, str] = {}
    for ln, r in enumerate(rows[1:], start=2):
        if not r:
            continue
        if len(r) != 5:
            raise ParseError("parse-error", f"{ln}:1: expected 5 columns, got {len(r)}")
        try:
            e = int(r[0])
            x, re_, im = float(r[2]), float(r[3]), float(r[4])
        except ValueError:
            raise ParseError("parse-error", f"{ln}:1: malformed number") from None
        kind = r[1].strip()
        if kind not in ("diffusion", "transport"):
            raise ParseError("parse-error", f"{ln}:2: unknown edge kind {kind!r}")
        if kinds.setdefault(e, kind) != kind:
            raise ParseError("parse-error", f"{ln}:2: edge {e} changes kind")
        data.setdefault(e, []).append((x, complex(re_, im)))
    ids = sorted(data)
    if ids != list(range(len(ids))):
        raise ParseError("parse-error", "1:1: edge ids must be 0..E-1")
    vals = [np.array([v for _, v in data[e]]) for e in ids]
    if graph is None:
        order = [kinds[e] for e in ids]
        if order != sorted(order):  # diffusion edges must come first
            raise ParseError("parse-error", "1:1: diffusion edges must precede transport edges")
        lens = [max(x for x, _ in data[e]) for e in ids]
        graph = MetricGraph(tuple(a for a, k in zip(lens, order) if k == "diffusion"),
                            tuple(a for a, k in zip(lens, order) if k == "transport"))
    if all(np.all(v.imag == 0) for v in vals):
        vals = [v.real.copy() for v in vals]
    return EdgeFunction(graph, vals)


def read_edge_function(path, graph: MetricGraph | None = None) -> EdgeFunction:
    return loads_edge_function(_read_text(path), graph)


def ensure_dir(path) -> Path:
    p = Path(path)
    os.makedirs(p, exist_ok=True)
    return p
