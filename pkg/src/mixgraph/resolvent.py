"""Green's kernel of the mixed operator and application of R(k) = (A + k^2)^{-1}.

On a diffusion edge R(k)u solves w'' + k^2 w = u, on a transport edge
-w' + k^2 w = u. Writing w = w0 - Phi(x) Sigma I(u), the free part is

    w0(x) = W_d int e^{ik|x-y|} u(y) dy                (diffusion, W_d = 1/(2ik))
    w0(x) = int_x^a e^{k^2 (x-y)} u(y) dy              (transport)

and the correction coefficients c = Sigma I(u) solve Z(k) c = (P+L) w0_ + P^perp w0__,
so that w satisfies the boundary conditions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ResolventError
from .graph import SQRT2, EdgeFunction
from .spectral import SecularSystem

SINGULAR_RTOL = 1e-10
GUARD_RADIUS = 0.25


def branch_k(lam: complex | np.ndarray) -> complex | np.ndarray:
    """k with -k^2 = lam and Im k >= 0 (ties: Re k >= 0)."""
    k = np.sqrt(-np.asarray(lam, dtype=complex))
    flip = (k.imag < 0) | ((k.imag == 0) & (k.real < 0))
    k = np.where(flip, -k, k)
    return complex(k) if k.ndim == 0 else k


def _canonical_k(k) -> np.ndarray:
    # R depends on k^2 only; the Im k >= 0 representative keeps e^{ikh} bounded
    k = np.asarray(k, dtype=complex)
    return np.where(k.imag < 0, -k, k)


def _phi(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(int_0^1 e^{zs} ds, int_0^1 s e^{zs} ds), with series near z = 0."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 1e-2
    zs = np.where(small, 1.0, z)
    ez = np.exp(zs)
    p0 = np.where(small, 1 + z / 2 + z**2 / 6 + z**3 / 24 + z**4 / 120, (ez - 1) / zs)
    p1 = np.where(small, 0.5 + z / 3 + z**2 / 8 + z**3 / 30 + z**4 / 144, (zs * ez - ez + 1) / zs**2)
    return p0, p1


def _sweep(u: np.ndarray, step: np.ndarray, h: float, z: np.ndarray, reverse: bool) -> np.ndarray:
    """S_i = int over the nodes on one side of x_i of e^{z (distance)/h} u, u piecewise linear.

    ``u`` has shape (n+1,) and ``z``/``step`` shape (m,); returns (m, n+1).
    Forward: S_i = int_0^{x_i} e^{z(x_i - y)/h} u(y) dy. Reverse: int_{x_i}^a e^{z(y - x_i)/h} u(y) dy.
    """
    p0, p1 = _phi(z)
    w_near = h * (p0 - p1)  # weight of the node at distance 0
    w_far = h * p1  # weight of the node one cell away
    n = u.size - 1
    out = np.zeros(z.shape + (n + 1,), dtype=complex)
    idx = range(n - 1, -1, -1) if reverse else range(1, n + 1)
    for i in idx:
        j = i + 1 if reverse else i - 1
        out[..., i] = step * out[..., j] + w_near * u[i] + w_far * u[j]
    return out


@dataclass(frozen=True, eq=False)
class GreenKernel:
    """Assembled kernel data at a fixed k (Im k >= 0)."""

    sys: SecularSystem
    k: complex
    Zbal: np.ndarray
    sigma: np.ndarray
    R1: np.ndarray
    R2: np.ndarray
    W: np.ndarray
    cond: float
    abs_det: float

    @property
    def graph(self):
        return self.sys.graph

    def Phi(self, e: int, x) -> np.ndarray:
        """Row of the Ansatz on edge e at points x: shape x.shape + (n,)."""
        g, k = self.graph, self.k
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape + (self.sys.n,), dtype=complex)
        if e < g.D:
            out[..., e] = np.exp(1j * k * x)
            out[..., g.D + e] = np.exp(-1j * k * x)
        else:
            out[..., 2 * g.D + e - g.D] = np.exp(k * k * x)
        return out

    def Psi(self, e: int, y) -> np.ndarray:
        """Column of the source weights on edge e at points y: shape y.shape + (n,)."""
        g, k = self.graph, self.k
        y = np.asarray(y, dtype=float)
        out = np.zeros(y.shape + (self.sys.n,), dtype=complex)
        if e < g.D:
            out[..., e] = np.exp(1j * k * y)
            out[..., g.D + e] = np.exp(-1j * k * y)
        else:
            out[..., 2 * g.D + e - g.D] = np.exp(-k * k * y)
        return out


def _rhs_maps(sys: SecularSystem, k: complex) -> tuple[np.ndarray, np.ndarray]:
    D, T = sys.graph.D, sys.graph.T
    n = sys.n
    ep = np.exp(1j * k * sys.a_d)
    R1 = np.zeros((n, n), dtype=complex)
    R2 = np.zeros((n, n), dtype=complex)
    i = np.arange(D)
    j = 2 * D + np.arange(T)
    R2[i, D + i] = ep
    R2[D + i, i] = 1.0
    R2[j, j] = 1 / SQRT2
    R1[i, D + i] = 1j * k * ep
    R1[D + i, i] = 1j * k
    R1[j, j] = 1 / SQRT2
    return R1, R2


def _guard_scale(sys: SecularSystem, k: complex) -> float:
    r = GUARD_RADIUS * max(1.0, abs(k))
    ring = k + r * np.exp(2j * np.pi * (np.arange(16) + 0.5) / 16)
    return float(np.median(np.abs(sys.detbal(ring))))


def assemble_kernel(sys: SecularSystem, k: complex) -> GreenKernel:
    """Sigma = Z^{-1} [P^perp R1 + (L + P) R2] and the block factors at k."""
    if k == 0:
        raise ResolventError("lambda-in-spectrum", "k = 0 is not handled by the kernel")
    k = complex(_canonical_k(k))
    Zb = sys.Zbal(k)
    db = abs(np.linalg.det(Zb))
    if not np.isfinite(db) or db <= SINGULAR_RTOL * _guard_scale(sys, k):
        raise ResolventError("lambda-in-spectrum", f"-k^2 = {-k * k:.6g} is (numerically) an eigenvalue")
    R1, R2 = _rhs_maps(sys, k)
    bc = sys.bc
    F = sys.balance_factors(k)
    with np.errstate(over="ignore", invalid="ignore"):
        sigma = F[:, None] * np.linalg.solve(Zb, (bc.P + bc.L) @ R2 + bc.Pperp @ R1)
    D, T = sys.graph.D, sys.graph.T
    W = np.concatenate([np.full(D, 1 / (2j * k)), np.ones(T)])
    return GreenKernel(sys, k, Zb, sigma, R1, R2, W, float(np.linalg.cond(Zb)), float(abs(np.linalg.det(sys.Z(k)))))


def kernel_eval(gk: GreenKernel, x: tuple[int, float], y: tuple[int, float]) -> complex:
    """r(x, y, k) for x = (edge, coordinate) and y = (edge, coordinate)."""
    (e, xs), (f, ys) = x, y
    g, k = gk.graph, gk.k
    r0 = 0j
    if e == f:
        if e < g.D:
            r0 = np.exp(1j * k * abs(xs - ys))
        elif xs < ys:
            r0 = np.exp(k * k * (xs - ys))
    corr = gk.Phi(e, xs) @ gk.sigma @ gk.Psi(f, ys)
    return complex((r0 - corr) * gk.W[f])


def _solve_batch(sys: SecularSystem, ks: np.ndarray, u: EdgeFunction):
    """R(k)u for an array of k: (node values, trace, co-trace).

    Node values have shape ks.shape + (total nodes,); the endpoint data come
    from the closed-form endpoint identities of the free part and the Ansatz,
    not from difference stencils.
    """
    g = sys.graph
    D, T = g.D, g.T
    ks = _canonical_k(ks)
    bc = sys.bc
    kk = ks[..., None]
    v1 = np.zeros(ks.shape + (sys.n,), dtype=complex)
    v2 = np.zeros_like(v1)
    free = []
    for e in range(g.n_edges):
        ue = np.asarray(u.values[e], dtype=complex)
        h = u.h(e)
        if e < D:
            z = 1j * ks * h
            step = np.exp(z)
            Fw = _sweep(ue, step, h, z, reverse=False)
            Bw = _sweep(ue, step, h, z, reverse=True)
            Wd = 1 / (2j * ks)
            free.append(Wd[..., None] * (Fw + Bw))
            # w0(a) = Wd F_n, w0(0) = Wd B_0, w0'(a) = ik Wd F_n, -w0'(0) = ik Wd B_0
            v2[..., e] = Wd * Fw[..., -1]
            v2[..., D + e] = Wd * Bw[..., 0]
            v1[..., e] = 1j * ks * Wd * Fw[..., -1]
            v1[..., D + e] = 1j * ks * Wd * Bw[..., 0]
        else:
            z = -ks * ks * h
            step = np.exp(z)
            Tw = _sweep(ue, step, h, z, reverse=True)
            free.append(Tw)
            j = 2 * D + e - D
            v2[..., j] = Tw[..., 0] / SQRT2
            v1[..., j] = Tw[..., 0] / SQRT2
    b = v2 @ (bc.P + bc.L).T + v1 @ bc.Pperp.T
    with np.errstate(over="ignore", invalid="ignore"):
        c = np.linalg.solve(sys.Zbal(ks), b[..., None])[..., 0]
    out = []
    ubar, ucot = v2.copy(), v1.copy()
    for e in range(g.n_edges):
        x = u.grid(e)
        a = g.lengths[e]
        if e < D:
            ca, cb = c[..., e], c[..., D + e]
            corr = ca[..., None] * np.exp(1j * kk * (x - a / 2)) + cb[..., None] * np.exp(-1j * kk * (x - a / 2))
            p, m = np.exp(0.5j * ks * a), np.exp(-0.5j * ks * a)
            ubar[..., e] -= ca * p + cb * m
            ubar[..., D + e] -= ca * m + cb * p
            ucot[..., e] -= 1j * ks * (ca * p - cb * m)
            ucot[..., D + e] += 1j * ks * (ca * m - cb * p)
        else:
            j = 2 * D + e - D
            cg = c[..., j]
            with np.errstate(over="ignore", invalid="ignore"):
                corr = cg[..., None] * np.exp(kk**2 * (x - a / 2))
                p, m = np.exp(0.5 * ks**2 * a), np.exp(-0.5 * ks**2 * a)
            ubar[..., j] -= cg * (p + m) / SQRT2
            ucot[..., j] -= cg * (m - p) / SQRT2
        out.append(free[e] - corr)
    return np.concatenate(out, axis=-1), ubar, ucot


def _resolvent_batch(sys: SecularSystem, ks: np.ndarray, u: EdgeFunction) -> np.ndarray:
    return _solve_batch(sys, ks, u)[0]


def resolvent_traces(gk: GreenKernel, u: EdgeFunction) -> tuple[np.ndarray, np.ndarray]:
    """Trace and co-trace of R(k)u from the endpoint identities (no stencils)."""
    _, ubar, ucot = _solve_batch(gk.sys, np.asarray(gk.k), u)
    return ubar, ucot


def apply_resolvent(gk: GreenKernel, u: EdgeFunction) -> EdgeFunction:
    """R(k)u on the grid of u.

    The source is integrated exactly against the kernel after piecewise-linear
    interpolation (product rule), with the split at y = x built into the sweeps.
    """
    if u.graph != gk.graph:
        raise ResolventError("bad-grid", "edge function lives on another graph")
    vals = _resolvent_batch(gk.sys, np.asarray(gk.k), u)
    return u.with_flat(vals)


def resolve(sys: SecularSystem, k: complex, u: EdgeFunction) -> EdgeFunction:
    return apply_resolvent(assemble_kernel(sys, k), u)


def resolve_lambda(sys: SecularSystem, lam: complex, u: EdgeFunction) -> EdgeFunction:
    """(lambda - A)^{-1} u = -R(k)u with k = branch_k(lambda)."""
    return -resolve(sys, branch_k(lam), u)
