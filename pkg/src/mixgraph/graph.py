"""Metric graphs with diffusion and transport edges, edge functions and boundary traces.

Edges are ordered diffusion first, then transport.  Every edge is oriented from
0 to its length ``a``; on transport edges this is also the direction of flow.
Boundary vectors live in C^(2D+T) with block order (d+, d-, t), where d+ holds
values at x = a and d- values at x = 0 of the diffusion edges.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import GraphError

SQRT2 = np.sqrt(2.0)
TRACE_CONSTANT_UNIT = 2.0 * SQRT2
MIN_NODES = 4


@dataclass(frozen=True)
class MetricGraph:
    diffusion_lengths: tuple[float, ...] = ()
    transport_lengths: tuple[float, ...] = ()
    vertices: tuple | None = None
    # endpoints[e] = (e(0), e(a)), same edge order as ``lengths``
    endpoints: tuple[tuple, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "diffusion_lengths", tuple(float(a) for a in self.diffusion_lengths))
        object.__setattr__(self, "transport_lengths", tuple(float(a) for a in self.transport_lengths))
        if self.D + self.T < 1:
            raise GraphError("bad-graph", "graph needs at least one edge")
        if any(not np.isfinite(a) or a <= 0 for a in self.lengths):
            raise GraphError("bad-graph", "edge lengths must be strictly positive")
        if (self.vertices is None) != (self.endpoints is None):
            raise GraphError("bad-graph", "vertices and endpoints must be given together")
        if self.vertices is not None:
            object.__setattr__(self, "vertices", tuple(self.vertices))
            object.__setattr__(self, "endpoints", tuple(tuple(p) for p in self.endpoints))
            if len(self.endpoints) != self.n_edges:
                raise GraphError("bad-graph", "one endpoint pair per edge required")
            known = set(self.vertices)
            for pair in self.endpoints:
                if len(pair) != 2 or any(v not in known for v in pair):
                    raise GraphError("bad-graph", f"edge endpoints {pair} not among vertices")

    @property
    def D(self) -> int:
        return len(self.diffusion_lengths)

    @property
    def T(self) -> int:
        return len(self.transport_lengths)

    @property
    def n_edges(self) -> int:
        return self.D + self.T

    @property
    def dim(self) -> int:
        """Dimension 2D+T of the boundary space."""
        return 2 * self.D + self.T

    @property
    def lengths(self) -> tuple[float, ...]:
        return self.diffusion_lengths + self.transport_lengths

    def kind(self, e: int) -> str:
        return "diffusion" if e < self.D else "transport"

    @property
    def kinds(self) -> tuple[str, ...]:
        return tuple(self.kind(e) for e in range(self.n_edges))

    @property
    def total_length(self) -> float:
        return float(sum(self.lengths))

    def with_lengths(self, diffusion=None, transport=None) -> "MetricGraph":
        return MetricGraph(
            self.diffusion_lengths if diffusion is None else tuple(diffusion),
            self.transport_lengths if transport is None else tuple(transport),
            self.vertices,
            self.endpoints,
        )


def incidence_matrices(g: MetricGraph) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Outgoing, ingoing and signed incidence matrices (|V| x |E|)."""
    if g.vertices is None:
        raise GraphError("no-incidence-info", "graph has no vertex data")
    index = {v: i for i, v in enumerate(g.vertices)}
    out = np.zeros((len(g.vertices), g.n_edges), dtype=int)
    inc = np.zeros_like(out)
    for e, (v0, v1) in enumerate(g.endpoints):
        out[index[v0], e] = 1
        inc[index[v1], e] = 1
    return out, inc, out - inc


@dataclass(frozen=True)
class BoundaryVector:
    d_plus: np.ndarray
    d_minus: np.ndarray
    t: np.ndarray

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.d_plus, self.d_minus, self.t])

    def __array__(self, dtype=None, copy=None):
        v = self.vector
        return v if dtype is None else v.astype(dtype)

    @classmethod
    def from_vector(cls, x, D: int, T: int) -> "BoundaryVector":
        x = np.asarray(x)
        if x.shape != (2 * D + T,):
            raise GraphError("bad-dimension", f"expected length {2 * D + T}, got {x.shape}")
        return cls(x[:D].copy(), x[D : 2 * D].copy(), x[2 * D :].copy())


def uniform_grid(a: float, n: int) -> np.ndarray:
    return np.linspace(0.0, a, n + 1)


def _as_counts(g: MetricGraph, n) -> tuple[int, ...]:
    counts = (int(n),) * g.n_edges if np.isscalar(n) else tuple(int(m) for m in n)
    if len(counts) != g.n_edges:
        raise GraphError("bad-grid", "one grid count per edge required")
    if min(counts) < MIN_NODES:
        raise GraphError("bad-grid", f"grid counts must be >= {MIN_NODES}")
    return counts


class EdgeFunction:
    """Complex node values on uniform per-edge grids with n_e + 1 nodes on [0, a_e]."""

    __slots__ = ("graph", "values")

    def __init__(self, graph: MetricGraph, values: Sequence[np.ndarray]):
        values = [np.array(v) for v in values]
        if len(values) != graph.n_edges:
            raise GraphError("bad-grid", "one value array per edge required")
        for v in values:
            if v.ndim != 1 or v.size - 1 < MIN_NODES:
                raise GraphError("bad-grid", f"each edge needs at least {MIN_NODES + 1} nodes")
            v.setflags(write=False)
        self.graph = graph
        self.values = tuple(values)

    @classmethod
    def zeros(cls, graph: MetricGraph, n, dtype=complex) -> "EdgeFunction":
        return cls(graph, [np.zeros(m + 1, dtype=dtype) for m in _as_counts(graph, n)])

    @classmethod
    def from_callables(cls, graph: MetricGraph, n, funcs) -> "EdgeFunction":
        """Sample ``funcs[e](x)`` (or one shared callable) on every edge grid."""
        counts = _as_counts(graph, n)
        if callable(funcs):
            funcs = [funcs] * graph.n_edges
        vals = []
        for a, m, f in zip(graph.lengths, counts, funcs):
            x = uniform_grid(a, m)
            vals.append(np.broadcast_to(np.asarray(f(x)), x.shape).copy())
        return cls(graph, vals)

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(v.size - 1 for v in self.values)

    def grid(self, e: int) -> np.ndarray:
        return uniform_grid(self.graph.lengths[e], self.counts[e])

    def h(self, e: int) -> float:
        return self.graph.lengths[e] / self.counts[e]

    def kind(self, e: int) -> str:
        return self.graph.kind(e)

    def flat(self) -> np.ndarray:
        return np.concatenate(self.values)

    def with_flat(self, flat) -> "EdgeFunction":
        flat = np.asarray(flat)
        splits = np.cumsum([v.size for v in self.values])[:-1]
        return EdgeFunction(self.graph, np.split(flat, splits))

    def map(self, f: Callable[[np.ndarray], np.ndarray]) -> "EdgeFunction":
        return EdgeFunction(self.graph, [f(v) for v in self.values])

    def _check(self, other: "EdgeFunction"):
        if other.graph != self.graph or other.counts != self.counts:
            raise GraphError("bad-grid", "edge functions live on different grids")

    def __add__(self, other):
        self._check(other)
        return EdgeFunction(self.graph, [a + b for a, b in zip(self.values, other.values)])

    def __sub__(self, other):
        self._check(other)
        return EdgeFunction(self.graph, [a - b for a, b in zip(self.values, other.values)])

    def __mul__(self, c):
        return EdgeFunction(self.graph, [c * v for v in self.values])

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1

    def __repr__(self):
        return f"EdgeFunction(D={self.graph.D}, T={self.graph.T}, counts={self.counts})"


def trace(u: EdgeFunction) -> BoundaryVector:
    """Endpoint values: (u_d(a), u_d(0), 2^-1/2 (u_t(a) + u_t(0)))."""
    g = u.graph
    vals = u.values
    dp = np.array([vals[e][-1] for e in range(g.D)], dtype=complex)
    dm = np.array([vals[e][0] for e in range(g.D)], dtype=complex)
    t = np.array([(vals[e][-1] + vals[e][0]) / SQRT2 for e in range(g.D, g.n_edges)], dtype=complex)
    return BoundaryVector(dp, dm, t)


adjoint_trace = trace


def endpoint_derivatives(v: np.ndarray, h: float) -> tuple[complex, complex]:
    """One-sided second-order derivative estimates at x = 0 and x = a."""
    if v.size - 1 < MIN_NODES:
        raise GraphError("stencil-underflow", "need at least 4 cells for endpoint stencils")
    d0 = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h)
    da = (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * h)
    return d0, da


def cotrace(u: EdgeFunction) -> BoundaryVector:
    """Endpoint fluxes: (u_d'(a), -u_d'(0), 2^-1/2 (u_t(0) - u_t(a)))."""
    g = u.graph
    dp = np.zeros(g.D, dtype=complex)
    dm = np.zeros(g.D, dtype=complex)
    for e in range(g.D):
        d0, da = endpoint_derivatives(u.values[e], u.h(e))
        dp[e], dm[e] = da, -d0
    t = np.array([(u.values[e][0] - u.values[e][-1]) / SQRT2 for e in range(g.D, g.n_edges)], dtype=complex)
    return BoundaryVector(dp, dm, t)


def flip_matrix(D: int, T: int) -> np.ndarray:
    """J = diag(1_{2D}, -1_T)."""
    return np.diag(np.concatenate([np.ones(2 * D), -np.ones(T)]))


def adjoint_cotrace(v: EdgeFunction) -> BoundaryVector:
    """Co-trace for the adjoint operator: the transport block changes sign."""
    c = cotrace(v)
    return BoundaryVector(c.d_plus, c.d_minus, -c.t)


def edge_weights(n: int, a: float, rule: str = "trapezoid", kind: str = "diffusion") -> np.ndarray:
    """Quadrature weights on the n + 1 uniform nodes of [0, a].

    ``rule="upwind"`` is the discrete energy rule of the time stepper: trapezoid
    on diffusion edges, right-endpoint sums on transport edges.
    """
    h = a / n
    if rule == "upwind":
        rule = "trapezoid" if kind == "diffusion" else "right"
    if rule == "trapezoid":
        w = np.full(n + 1, h)
        w[0] = w[-1] = h / 2
    elif rule == "right":
        w = np.full(n + 1, h)
        w[0] = 0.0
    elif rule == "simpson":
        if n % 2:
            raise GraphError("bad-grid", "Simpson rule needs an even cell count")
        w = np.full(n + 1, 2.0)
        w[1::2] = 4.0
        w[0] = w[-1] = 1.0
        w *= h / 3
    else:
        raise GraphError("bad-rule", f"unknown quadrature rule {rule!r}")
    return w


def weights(u: EdgeFunction, rule: str = "trapezoid") -> list[np.ndarray]:
    return [edge_weights(m, a, rule, k) for m, a, k in zip(u.counts, u.graph.lengths, u.graph.kinds)]


def integrate(u: EdgeFunction, rule: str = "trapezoid") -> complex:
    return complex(sum(np.dot(w, v) for w, v in zip(weights(u, rule), u.values)))


def inner(u: EdgeFunction, v: EdgeFunction, rule: str = "trapezoid") -> complex:
    """<u, v> = sum over edges of the integral of u * conj(v)."""
    u._check(v)
    return complex(sum(np.dot(w, a * np.conj(b)) for w, a, b in zip(weights(u, rule), u.values, v.values)))


def derivative(u: EdgeFunction) -> EdgeFunction:
    """Centered differences inside, one-sided second-order at the ends."""
    return EdgeFunction(u.graph, [np.gradient(v, u.h(e), edge_order=2) for e, v in enumerate(u.values)])


class Norms(NamedTuple):
    l2: float
    h1: float
    sup: float


def edge_norms(v: np.ndarray, h: float, rule: str = "trapezoid", kind: str = "diffusion") -> Norms:
    n = v.size - 1
    w = edge_weights(n, h * n, rule, kind)
    l2sq = float(np.dot(w, np.abs(v) ** 2))
    dv = np.gradient(v, h, edge_order=2)
    dsq = float(np.dot(w, np.abs(dv) ** 2))
    return Norms(np.sqrt(l2sq), np.sqrt(l2sq + dsq), float(np.max(np.abs(v))))


def norms(u: EdgeFunction, rule: str = "trapezoid") -> Norms:
    """L2, H1 and sup norms over the whole graph."""
    l2sq = h1sq = 0.0
    sup = 0.0
    for e, v in enumerate(u.values):
        n = edge_norms(v, u.h(e), rule, u.kind(e))
        l2sq += n.l2**2
        h1sq += n.h1**2
        sup = max(sup, n.sup)
    return Norms(np.sqrt(l2sq), np.sqrt(h1sq), sup)


def l2_norm(u: EdgeFunction, rule: str = "trapezoid") -> float:
    return float(np.sqrt(sum(np.dot(w, np.abs(v) ** 2) for w, v in zip(weights(u, rule), u.values))))


def trace_constant(a: float) -> float:
    """Per-edge constant C_e with sup|u|^2 <= C_e ||u||_L2 ||u||_H1 on [0, a].

    2*sqrt(2) on the unit interval, transported to [0, a] by affine rescaling.
    """
    return TRACE_CONSTANT_UNIT * max(1.0, 1.0 / a)


def graph_trace_constant(g: MetricGraph) -> float:
    """Constant C with ||(u_d(a), u_d(0))||^2 <= C ||u||_L2(E_d) ||u||_H1(E_d).

    Each diffusion edge contributes two endpoint values bounded by its C_e; the
    edge-wise products are summed with Cauchy-Schwarz.
    """
    if g.D == 0:
        return 0.0
    return 2.0 * max(trace_constant(a) for a in g.diffusion_lengths)


class TraceCheck(NamedTuple):
    lhs: float
    rhs: float
    ok: bool
    worst_ratio: float


def trace_inequality_check(u: EdgeFunction) -> TraceCheck:
    """Check max|u_e|^2 <= C_e ||u_e||_L2 ||u_e||_H1 edge by edge; report the worst edge."""
    worst = (0.0, 0.0, -np.inf)
    for e, v in enumerate(u.values):
        n = edge_norms(v, u.h(e))
        lhs = n.sup**2
        rhs = trace_constant(u.graph.lengths[e]) * n.l2 * n.h1
        ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else np.inf)
        if ratio > worst[2]:
            worst = (lhs, rhs, ratio)
    lhs, rhs, ratio = worst
    return TraceCheck(lhs, rhs, bool(ratio <= 1.0 + 1e-12), ratio)
