"""Two dendrites coupled through a delayed boundary flux.

The delayed system reads

    u1' = u1'' on (0, a1),  u1'(t, 0) = 0,  u1'(t, a1) = s u1(t, a1),
    u2' = u2'' on (0, a2),  u2'(t, a2) = 0, -u2'(t, 0) = u1'(t - tau, a1),

with s = +1 (variant "derived") or s = -1 (variant "printed"), initial data
f1, f2 and history f_del(theta) = u1'(theta, a1) for theta in [-tau, 0].

The reformulation adds a transport edge of length tau carrying
u_del(t, x) = u1(t - x, a1), so that the delay becomes an ordinary coupling
condition at the ends of that edge (P = 0 and the 5x5 matrix L).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import brentq

from .boundary import presets
from .errors import DelayError
from .evolution import Trajectory, assemble, evolve
from .graph import EdgeFunction, MetricGraph, edge_weights, uniform_grid

Func = Callable[[np.ndarray], np.ndarray]


def _zero(x):
    return np.zeros_like(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class DelayedProblem:
    f1: Func = _zero
    f2: Func = _zero
    f_del: Func = _zero
    a1: float = 1.0
    a2: float = 1.0
    tau: float = 1.0
    variant: str = "derived"

    def __post_init__(self):
        if not self.tau > 0 or not self.a1 > 0 or not self.a2 > 0:
            raise DelayError("bad-problem", "lengths and delay must be positive")
        if self.variant not in ("derived", "printed"):
            raise DelayError("bad-problem", f"unknown variant {self.variant!r}")

    @property
    def robin_sign(self) -> float:
        return 1.0 if self.variant == "derived" else -1.0

    def compatibility(self, h: float = 1e-5) -> dict[str, float]:
        """Mismatches of the corner conditions; nonzero values are allowed and only reported."""
        f1 = lambda x: np.asarray(self.f1(np.asarray(x, dtype=float)))  # noqa: E731
        f2 = lambda x: np.asarray(self.f2(np.asarray(x, dtype=float)))  # noqa: E731
        a1, a2 = self.a1, self.a2
        d1a = (f1(a1) - f1(a1 - h)) / h
        d10 = (f1(h) - f1(0.0)) / h
        d20 = (f2(h) - f2(0.0)) / h
        d2a = (f2(a2) - f2(a2 - h)) / h
        fd = lambda t: complex(np.asarray(self.f_del(np.asarray([t], dtype=float)))[0])  # noqa: E731
        return {
            "robin": float(abs(d1a - self.robin_sign * f1(a1))),
            "history": float(abs(fd(0.0) - d1a)),
            "neumann-1": float(abs(d10)),
            "neumann-2": float(abs(d2a)),
            "delayed-flux": float(abs(-d20 - fd(-self.tau))),
        }

    def is_compatible(self, tol: float = 1e-3) -> bool:
        return max(self.compatibility().values()) <= tol


def build_bdprime(problem: DelayedProblem, n=100) -> tuple[MetricGraph, object, EdgeFunction]:
    """Graph, boundary conditions and initial data of the transport-edge reformulation.

    The delay edge starts with u_del(0, x) = u1(-x, a1) = s f_del(-x) by the
    Robin relation (for s = +1 this is f_del(-x)).
    """
    name = "dendrite-derived" if problem.variant == "derived" else "dendrite-paper-L"
    g, bc = presets(name, lengths=(problem.a1, problem.a2, problem.tau))
    s = problem.robin_sign
    u0 = EdgeFunction.from_callables(
        g, n, [problem.f1, problem.f2, lambda x: s * np.asarray(problem.f_del(-x))]
    )
    return g, bc, u0


@dataclass
class DelayTrajectory:
    times: np.ndarray
    u1: np.ndarray  # (steps + 1, n1 + 1) node values
    u2: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    datum: np.ndarray  # -u2'(t, 0) used at each time
    l2_norms: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _heat_matrices(n: int, a: float):
    h = a / n
    main = np.full(n + 1, -2.0 / h)
    main[0] = main[-1] = -1.0 / h
    off = np.full(n, 1.0 / h)
    K = sp.diags([off, main, off], [-1, 0, 1], format="lil")
    return edge_weights(n, a, "trapezoid"), K


def _steps(T_end: float, dt: float) -> int:
    m = int(round(T_end / dt))
    if m < 1 or abs(m * dt - T_end) > 1e-9 * max(1.0, T_end):
        raise DelayError("bad-dt", "T_end must be a positive multiple of dt")
    return m


def solve_bd_direct(problem: DelayedProblem, T_end: float, dt: float, n=100) -> DelayTrajectory:
    """Backward Euler on both dendrites with the delayed flux read from a ring buffer.

    The buffer holds u1'(t, a1) = s u1(t, a1) at the last tau/dt time levels;
    before t = tau the flux comes from f_del.
    """
    lag = int(round(problem.tau / dt))
    if lag < 1 or abs(lag * dt - problem.tau) > 1e-9 * problem.tau:
        raise DelayError("delay-grid-mismatch", "dt must divide the delay tau")
    nsteps = _steps(T_end, dt)
    n1, n2 = (n, n) if np.isscalar(n) else tuple(n)
    s = problem.robin_sign
    x1, x2 = uniform_grid(problem.a1, n1), uniform_grid(problem.a2, n2)
    w1, K1 = _heat_matrices(n1, problem.a1)
    w2, K2 = _heat_matrices(n2, problem.a2)
    K1[n1, n1] += s  # flux u1'(a1) = s u1(a1) enters the last node
    S1 = spla.splu((sp.diags(w1) - dt * K1).tocsc())
    S2 = spla.splu((sp.diags(w2) - dt * K2).tocsc())
    u1 = np.asarray(problem.f1(x1), dtype=float if _is_real(problem, x1, x2) else complex) + 0 * x1
    u2 = np.asarray(problem.f2(x2), dtype=u1.dtype) + 0 * x2
    solve = _real_or_complex
    U1 = np.empty((nsteps + 1, n1 + 1), dtype=u1.dtype)
    U2 = np.empty((nsteps + 1, n2 + 1), dtype=u1.dtype)
    datum = np.empty(nsteps + 1, dtype=u1.dtype)
    U1[0], U2[0] = u1, u2
    datum[0] = np.asarray(problem.f_del(np.array([-problem.tau])))[0]
    ring = np.empty(lag, dtype=u1.dtype)  # ring[m % lag] = u1'(t_m, a1)
    ring[0] = s * u1[-1]
    for m in range(1, nsteps + 1):
        t = m * dt
        if m < lag:
            d = np.asarray(problem.f_del(np.array([t - problem.tau])))[0]
        else:
            d = ring[(m - lag) % lag]
        u1 = solve(S1, w1 * u1)
        rhs2 = w2 * u2
        rhs2[0] = rhs2[0] + dt * d  # -u2'(0) = d enters node 0 as + d
        u2 = solve(S2, rhs2)
        ring[m % lag] = s * u1[-1]
        U1[m], U2[m], datum[m] = u1, u2, d
    times = dt * np.arange(nsteps + 1)
    norms = np.sqrt(np.abs(U1) ** 2 @ w1 + np.abs(U2) ** 2 @ w2)
    return DelayTrajectory(times, U1, U2, x1, x2, datum, norms)


def _is_real(problem: DelayedProblem, x1, x2) -> bool:
    theta = -np.linspace(0.0, problem.tau, 17)
    vals = [problem.f1(x1), problem.f2(x2), problem.f_del(theta)]
    return all(np.all(np.imag(np.asarray(v)) == 0) for v in vals)


def _real_or_complex(lu, rhs):
    if np.iscomplexobj(rhs):
        return lu.solve(rhs.real) + 1j * lu.solve(rhs.imag)
    return lu.solve(rhs)


def solve_bdprime(problem: DelayedProblem, T_end: float, dt: float, n=100) -> Trajectory:
    g, bc, u0 = build_bdprime(problem, n)
    op = assemble(g, bc, n)
    return evolve(op, u0, T_end, dt)


@dataclass
class DelayComparison:
    times: np.ndarray
    difference: np.ndarray  # L2 difference of (u1, u2) per time
    sup_difference: float
    h: float
    dt: float
    solution_sup: float = float("nan")  # sup in time of the L2 norm of the direct (u1, u2)

    @property
    def relative(self) -> float:
        """Sup difference scaled by the size of the solution (the problem is linear)."""
        return self.sup_difference / self.solution_sup if self.solution_sup > 0 else float("inf")


def compare_bd_bdprime(problem: DelayedProblem, T_end: float, dt: float, n=100) -> DelayComparison:
    """Sup-in-time L2 difference of (u1, u2) between the direct and the graph solver."""
    with ThreadPoolExecutor(max_workers=2) as pool:
        fut_d = pool.submit(solve_bd_direct, problem, T_end, dt, n)
        fut_g = pool.submit(solve_bdprime, problem, T_end, dt, n)
        direct, graph = fut_d.result(), fut_g.result()
    w1 = edge_weights(direct.x1.size - 1, problem.a1)
    w2 = edge_weights(direct.x2.size - 1, problem.a2)
    snaps = graph.snapshots
    if len(snaps) != direct.times.size:
        raise DelayError("bad-grid", "graph trajectory is missing snapshots")
    diff = np.empty(direct.times.size)
    for m, u in enumerate(snaps):
        d1 = direct.u1[m] - u.values[0]
        d2 = direct.u2[m] - u.values[1]
        diff[m] = np.sqrt(np.abs(d1) ** 2 @ w1 + np.abs(d2) ** 2 @ w2)
    h = max(problem.a1, problem.a2, problem.tau) / (n if np.isscalar(n) else min(n))
    return DelayComparison(direct.times, diff, float(diff.max()), h, dt, float(direct.l2_norms.max()))


@dataclass
class ConvergenceReport:
    n: list[int]
    dt: list[float]
    sup_difference: list[float]
    orders: list[float]
    relative: list[float] = field(default_factory=list)

    @property
    def min_order(self) -> float:
        return min(self.orders) if self.orders else float("nan")


def convergence_study(problem: DelayedProblem, T_end: float, dt: float, n: int, levels: int = 3) -> ConvergenceReport:
    """Compare at (n, dt), (2n, dt/2), ... and report observed orders log2(e_k / e_{k+1})."""
    ns, dts, errs, rel = [], [], [], []
    for lev in range(levels):
        m, d = n * 2**lev, dt / 2**lev
        ns.append(m)
        dts.append(d)
        cmp = compare_bd_bdprime(problem, T_end, d, m)
        errs.append(cmp.sup_difference)
        rel.append(cmp.relative)
    orders = [float(np.log2(errs[i] / errs[i + 1])) for i in range(levels - 1) if errs[i + 1] > 0]
    return ConvergenceReport(ns, dts, errs, orders, rel)


def robin_modes(s: float, count: int) -> list[tuple[float, Callable, Callable]]:
    """(rate, phi, phi') of u'' on (0, 1) with phi'(0) = 0, phi'(1) = s phi(1), slowest first.

    cos(mu x) with mu tan(mu) = -s; for s = +1 also cosh(nu x) with nu tanh(nu) = 1 (rate +nu^2).
    """
    modes = []
    if s > 0:
        nu = brentq(lambda v: v * np.tanh(v) - 1, 0.1, 5)
        modes.append((nu**2, lambda x, v=nu: np.cosh(v * x), lambda x, v=nu: v * np.sinh(v * x)))
    j = 0
    while len(modes) < count:
        lo, hi = (j + 0.5) * np.pi + 1e-12, (j + 1) * np.pi - 1e-12
        if s < 0:
            lo, hi = j * np.pi + 1e-12, (j + 0.5) * np.pi - 1e-12
        mu = brentq(lambda m: m * np.sin(m) + s * np.cos(m), lo, hi)
        modes.append((-(mu**2), lambda x, m=mu: np.cos(m * x), lambda x, m=mu: -m * np.sin(m * x)))
        j += 1
    return modes


def smooth_compatible_problem(
    rng: np.random.Generator, tau: float = 1.0, variant: str = "derived", modes: int = 3
) -> DelayedProblem:
    """Random data of a classical solution on unit dendrites.

    u1 is a random combination of Robin modes started at theta = -tau with
    O(1) coefficients, so f1 meets the corner conditions to every order and
    the history is the same closed form: f_del(theta) = u1'(theta, 1). f2 = E + F cos(pi x) +
    G (x - 1)^2 + M (x - 1)^4 matches the delayed flux and its time derivative
    at x = 0 (second-order compatibility on the second dendrite).
    """
    s = 1.0 if variant == "derived" else -1.0
    basis = robin_modes(s, modes)
    rates = np.array([r for r, _, _ in basis])
    c = rng.uniform(-1, 1, modes) * np.exp(rates * tau)
    E, F = rng.uniform(-1, 1, 2)

    def f1(x):
        return sum(cj * phi(np.asarray(x, dtype=float)) for cj, (_, phi, _) in zip(c, basis))

    def f_del(th):
        th = np.asarray(th, dtype=float)
        return sum(cj * np.exp(r * th) * dphi(1.0) for cj, (r, _, dphi) in zip(c, basis))

    fd0 = float(f_del(-tau))
    fd1 = float(sum(cj * r * np.exp(-r * tau) * dphi(1.0) for cj, (r, _, dphi) in zip(c, basis)))
    M = fd1 / 24  # -f2'''(0) = 24 M
    G = 0.5 * (fd0 - 4 * M)  # -f2'(0) = 2G + 4M
    return DelayedProblem(
        f1=f1,
        f2=lambda x: E + F * np.cos(np.pi * x) + G * (x - 1) ** 2 + M * (x - 1) ** 4,
        f_del=f_del,
        tau=tau,
        variant=variant,
    )
