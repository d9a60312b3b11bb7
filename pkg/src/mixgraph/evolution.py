"""Method-of-lines discretization and time stepping of u' = A u.

The semi-discrete system is a DAE  M y' = K y + E z,  0 = C_y y + C_z z:

* diffusion edge, nodes 0..n all dynamic, trapezoid masses (h/2, h, .., h, h/2);
  interior rows are the centered second difference, the end rows close with
  the endpoint fluxes q_0 = u'(0), q_a = u'(a), which are algebraic unknowns;
* transport edge, node 0 is the algebraic inflow value g, nodes 1..n follow
  the upwind difference h y_i' = -(y_i - y_{i-1});
* the 2D + T constraint rows are (P + L) u_ + P^perp u__ built from node values,
  fluxes and inflow values.

With the masses as inner product the scheme satisfies a discrete energy
identity mirroring Re <Au, u> = -||u_d'||^2 - Re <L u_, u_> + (transport losses),
so backward Euler is contractive whenever Herm(L) is PSD.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import logging

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .boundary import BoundaryConditions, is_neg_L_dissipative, maincond_feasible, omega_tilde, require_valid
from .errors import EvolutionError
from .graph import SQRT2, EdgeFunction, MetricGraph, _as_counts, edge_weights, graph_trace_constant, uniform_grid

log = logging.getLogger(__name__)

NORM_RULE = "upwind"


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    graph: MetricGraph
    bc: BoundaryConditions
    counts: tuple[int, ...]
    mass: np.ndarray  # diagonal of M
    K: sp.csr_matrix
    E: sp.csr_matrix
    Cy: np.ndarray
    Cz: np.ndarray
    dyn_index: tuple[np.ndarray, ...]  # per edge: positions of its dynamic nodes in y
    real: bool

    @property
    def ny(self) -> int:
        return self.mass.size

    @property
    def nz(self) -> int:
        return self.Cz.shape[1]

    @property
    def B(self) -> np.ndarray:
        """Constraint matrix [C_y, C_z]."""
        return np.hstack([self.Cy, self.Cz])

    @property
    def A(self) -> sp.csr_matrix:
        """M^{-1} [K, E]: the interior rows of the discrete operator."""
        return sp.diags(1.0 / self.mass) @ sp.hstack([self.K, self.E]).tocsr()

    # --- state conversion ------------------------------------------------------
    def split(self, u: EdgeFunction) -> tuple[np.ndarray, np.ndarray]:
        """(y, z) from node values; fluxes and inflows made consistent with the constraints."""
        if u.counts != self.counts or u.graph != self.graph:
            raise EvolutionError("bad-grid", "initial data does not match the operator grid")
        g = self.graph
        y = np.concatenate([u.values[e] if g.kind(e) == "diffusion" else u.values[e][1:] for e in range(g.n_edges)])
        z = self.consistent_z(y)
        return y, z

    def consistent_z(self, y: np.ndarray) -> np.ndarray:
        """Least-squares algebraic unknowns for given y (exact when C_z is invertible)."""
        rhs = -self.Cy @ y
        z, *_ = np.linalg.lstsq(self.Cz, rhs, rcond=None)
        return z

    def join(self, y: np.ndarray, z: np.ndarray) -> EdgeFunction:
        g = self.graph
        vals = []
        off = 0
        for e, m in enumerate(self.counts):
            if g.kind(e) == "diffusion":
                vals.append(y[off : off + m + 1])
                off += m + 1
            else:
                gin = z[2 * g.D + (e - g.D)]
                vals.append(np.concatenate([[gin], y[off : off + m]]))
                off += m
        return EdgeFunction(g, vals)

    def norm(self, y: np.ndarray) -> float:
        return float(np.sqrt(np.real(np.vdot(y, self.mass * y))))

    def residual(self, y: np.ndarray, z: np.ndarray) -> float:
        return float(np.linalg.norm(self.Cy @ y + self.Cz @ z))

    def generalized_eigenvalues(self) -> np.ndarray:
        """Finite eigenvalues of the pencil ([K E; C_y C_z], diag(M, 0))."""
        top = np.hstack([self.K.toarray(), self.E.toarray()])
        bot = np.hstack([self.Cy, self.Cz])
        Aful = np.vstack([top, bot])
        Bful = np.zeros_like(Aful, dtype=float)
        Bful[: self.ny, : self.ny] = np.diag(self.mass)
        w = sla.eigvals(Aful, Bful)
        return w[np.isfinite(w)]

    def apply(self, u: EdgeFunction) -> EdgeFunction:
        """Finite-difference A u at all nodes of u (fluxes from one-sided stencils).

        Diffusion: second difference inside, one-sided second-order u'' at the
        ends; transport: upwind -D^- u, forward difference at node 0.
        """
        out = []
        for e, v in enumerate(u.values):
            h = u.h(e)
            w = np.empty_like(v, dtype=complex)
            if self.graph.kind(e) == "diffusion":
                w[1:-1] = (v[2:] - 2 * v[1:-1] + v[:-2]) / h**2
                w[0] = (2 * v[0] - 5 * v[1] + 4 * v[2] - v[3]) / h**2
                w[-1] = (2 * v[-1] - 5 * v[-2] + 4 * v[-3] - v[-4]) / h**2
            else:
                w[1:] = -(v[1:] - v[:-1]) / h
                w[0] = -(v[1] - v[0]) / h
            out.append(w)
        return EdgeFunction(u.graph, out)


def fd_apply(u: EdgeFunction) -> EdgeFunction:
    """Second-order finite-difference (u_d'', -u_t') at every node, for residual checks.

    Centered stencils inside, one-sided second-order stencils at the ends.
    """
    out = []
    for e, v in enumerate(u.values):
        h = u.h(e)
        v = np.asarray(v, dtype=complex)
        if u.kind(e) == "diffusion":
            w = np.empty_like(v)
            w[1:-1] = (v[2:] - 2 * v[1:-1] + v[:-2]) / h**2
            w[0] = (2 * v[0] - 5 * v[1] + 4 * v[2] - v[3]) / h**2
            w[-1] = (2 * v[-1] - 5 * v[-2] + 4 * v[-3] - v[-4]) / h**2
        else:
            w = -np.gradient(v, h, edge_order=2)
        out.append(w)
    return EdgeFunction(u.graph, out)


def assemble(g: MetricGraph, bc: BoundaryConditions, grids) -> DiscreteOperator:
    """Build the constrained finite-difference operator on uniform grids (``grids``: int or per-edge ints)."""
    require_valid(bc)
    if bc.dims != (g.D, g.T):
        raise EvolutionError("bad-dimension", "boundary conditions do not match the graph")
    counts = _as_counts(g, grids)
    D, T = g.D, g.T
    nb = 2 * D + T
    ny = sum(m + 1 if g.kind(e) == "diffusion" else m for e, m in enumerate(counts))
    mass = np.zeros(ny)
    K = sp.lil_matrix((ny, ny))
    E = sp.lil_matrix((ny, nb))
    # trace/co-trace as linear maps of (y, z): ubar = Ty y + Tz z, ucot = Sy y + Sz z
    Ty = np.zeros((nb, ny))
    Tz = np.zeros((nb, nb))
    Sy = np.zeros((nb, ny))
    Sz = np.zeros((nb, nb))
    dyn = []
    off = 0
    for e, m in enumerate(counts):
        h = g.lengths[e] / m
        if e < D:
            idx = off + np.arange(m + 1)
            mass[idx] = edge_weights(m, g.lengths[e], "trapezoid")
            for i in range(1, m):
                K[idx[i], idx[i - 1]] = 1 / h
                K[idx[i], idx[i]] = -2 / h
                K[idx[i], idx[i + 1]] = 1 / h
            K[idx[0], idx[0]] = -1 / h
            K[idx[0], idx[1]] = 1 / h
            K[idx[m], idx[m]] = -1 / h
            K[idx[m], idx[m - 1]] = 1 / h
            qa, q0 = e, D + e  # z slots: q_a = u'(a) and q_0 = u'(0)
            E[idx[0], q0] = -1.0
            E[idx[m], qa] = 1.0
            Ty[e, idx[m]] = 1.0
            Ty[D + e, idx[0]] = 1.0
            Sz[e, qa] = 1.0
            Sz[D + e, q0] = -1.0
            off += m + 1
        else:
            j = 2 * D + (e - D)  # z slot: inflow value g = u(0)
            idx = off + np.arange(m)  # nodes 1..m
            mass[idx] = h
            for i in range(m):
                K[idx[i], idx[i]] = -1.0
                if i > 0:
                    K[idx[i], idx[i - 1]] = 1.0
            E[idx[0], j] = 1.0
            Ty[j, idx[-1]] = 1 / SQRT2
            Tz[j, j] = 1 / SQRT2
            Sy[j, idx[-1]] = -1 / SQRT2
            Sz[j, j] = 1 / SQRT2
            off += m
        dyn.append(idx)
    PL = bc.P + bc.L
    Cy = PL @ Ty + bc.Pperp @ Sy
    Cz = PL @ Tz + bc.Pperp @ Sz
    B = np.hstack([Cy, Cz])
    s = np.linalg.svd(B, compute_uv=False)
    if s.size < nb or s[-1] <= 1e-12 * max(1.0, s[0]):
        raise EvolutionError("degenerate-bc", "constraint rows are rank deficient")
    real = bc.is_real
    if real:
        Cy, Cz = Cy.real, Cz.real
    return DiscreteOperator(g, bc, counts, mass, K.tocsr(), E.tocsr(), Cy, Cz, tuple(dyn), real)


# --- time stepping -----------------------------------------------------------------

class _Stepper:
    """Factorized step matrix for a fixed (op, dt, scheme)."""

    def __init__(self, op: DiscreteOperator, dt: float, theta: float):
        if not dt > 0:
            raise EvolutionError("bad-dt", "dt must be positive")
        self.op, self.dt, self.theta = op, dt, theta
        M = sp.diags(op.mass)
        top = sp.hstack([M - theta * dt * op.K, -theta * dt * op.E])
        bot = sp.hstack([sp.csr_matrix(op.Cy), sp.csr_matrix(op.Cz)])
        S = sp.vstack([top, bot]).tocsc()
        if not op.real:
            S = S.astype(complex)
        try:
            with np.errstate(all="ignore"):
                self.lu = spla.splu(S)
        except RuntimeError as exc:
            raise EvolutionError("step-singular", "step matrix is singular; try a smaller dt") from exc
        d = np.abs(self.lu.U.diagonal())
        if not np.all(np.isfinite(d)) or d.min() <= 1e-14 * d.max():
            raise EvolutionError("step-singular", "step matrix is singular; try a smaller dt")
        self.explicit = (sp.hstack([M + (1 - theta) * dt * op.K, (1 - theta) * dt * op.E]).tocsr()
                         if theta < 1 else None)

    def __call__(self, y: np.ndarray, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        op = self.op
        if self.explicit is None:
            rhs_top = op.mass * y
        else:
            rhs_top = self.explicit @ np.concatenate([y, z])
        rhs = np.concatenate([rhs_top, np.zeros(op.nz, dtype=rhs_top.dtype)])
        if op.real and np.iscomplexobj(rhs):
            sol = self.lu.solve(rhs.real) + 1j * self.lu.solve(rhs.imag)
        else:
            sol = self.lu.solve(rhs)
        return sol[: op.ny], sol[op.ny :]


SCHEMES = {"be": 1.0, "cn": 0.5}


def step(op: DiscreteOperator, u: EdgeFunction, dt: float, scheme: str = "be") -> EdgeFunction:
    """One step from node data u (the first Crank-Nicolson step from raw data is backward Euler)."""
    if scheme not in SCHEMES:
        raise EvolutionError("bad-scheme", f"unknown scheme {scheme!r}")
    y, z = op.split(u)
    y, z = _Stepper(op, dt, 1.0)(y, z)
    return op.join(y, z)


@dataclass
class Trajectory:
    times: np.ndarray
    snapshots: list[EdgeFunction]
    l2_norms: np.ndarray
    max_imag: np.ndarray
    constraint_residual: float = 0.0
    bound: np.ndarray | None = None
    violations: list[str] = field(default_factory=list)

    @property
    def final(self) -> EdgeFunction:
        return self.snapshots[-1]


def _max_imag(y: np.ndarray, z: np.ndarray) -> float:
    if not np.iscomplexobj(y):
        return 0.0
    return float(max(np.abs(y.imag).max(initial=0.0), np.abs(z.imag).max(initial=0.0)))


def evolve(
    op: DiscreteOperator,
    u0: EdgeFunction,
    T_end: float,
    dt: float,
    scheme: str = "be",
    snapshot_times=None,
    tol: float = 1e-10,
    omega_tilde_value: float | None = None,
) -> Trajectory:
    """Integrate to T_end with fixed dt, logging norms and checking the semigroup bounds.

    Norms are the discrete energy norm (trapezoid on diffusion edges, right
    endpoint sums on transport edges). If -L is dissipative, growth beyond
    (1 + tol) per step is flagged; otherwise growth beyond e^{(w~ + tol) t}.
    """
    if scheme not in SCHEMES:
        raise EvolutionError("bad-scheme", f"unknown scheme {scheme!r}")
    nsteps = int(round(T_end / dt))
    if nsteps < 1 or abs(nsteps * dt - T_end) > 1e-9 * max(1.0, T_end):
        raise EvolutionError("bad-dt", "T_end must be a positive multiple of dt")
    y, z = op.split(u0)
    # real data with real conditions stay in real arithmetic
    if op.real and np.all(np.imag(y) == 0) and np.all(np.imag(z) == 0):
        y, z = np.real(y).astype(float), np.real(z).astype(float)
    else:
        y, z = y.astype(complex), z.astype(complex)
    contractive = is_neg_L_dissipative(op.bc)
    if omega_tilde_value is None and not contractive and maincond_feasible(op.bc):
        omega_tilde_value = omega_tilde(op.bc, graph_trace_constant(op.graph))
    be = _Stepper(op, dt, 1.0)
    stepper = be if scheme == "be" else _Stepper(op, dt, SCHEMES[scheme])
    want = set()
    if snapshot_times is not None:
        want = {int(round(t / dt)) for t in snapshot_times}
    times = [0.0]
    snaps = [u0]
    norms_ = [op.norm(y)]
    imag = [_max_imag(y, z)]
    res = 0.0
    violations = []
    n0 = norms_[0]
    for m in range(1, nsteps + 1):
        y, z = (be if m == 1 else stepper)(y, z)
        t = m * dt
        nm = op.norm(y)
        res = max(res, op.residual(y, z))
        if contractive and nm > norms_[-1] * (1 + tol) + tol:
            violations.append(f"norm increase at t={t:.6g}")
        elif omega_tilde_value is not None and nm > np.exp((omega_tilde_value + tol) * t) * n0 + tol:
            violations.append(f"quasi-contractive bound exceeded at t={t:.6g}")
        times.append(t)
        norms_.append(nm)
        imag.append(_max_imag(y, z))
        if snapshot_times is None or m in want or m == nsteps:
            snaps.append(op.join(y, z))
    bound = None
    if omega_tilde_value is not None:
        bound = np.exp(omega_tilde_value * np.array(times)) * n0
    if violations:
        log.warning("%d bound violations, first: %s", len(violations), violations[0])
    return Trajectory(np.array(times), snaps, np.array(norms_), np.array(imag), res, bound, violations)


def smearing_bound(u0_second_l1: float, h: float, dt: float, t: float) -> float:
    """L1 bound on upwind smearing: diffusion coefficient (h + dt)/2 of the implicit upwind scheme."""
    return 0.5 * (h + dt) * t * u0_second_l1


# --- Laplace inversion ----------------------------------------------------------

def laplace_evolve(sys, u0: EdgeFunction, t: float, eps: float | None = None, n_quad: float = 2000.0,
                   panel: float = 4.0, order: int = 16, tol: float | None = None) -> EdgeFunction:
    """e^{tA} u0 = (1/(2 pi i)) int_{eps - i inf}^{eps + i inf} e^{t lam} (lam - A)^{-1} u0 d lam.

    The term u0/lam is subtracted (its integral is exactly u0) and the rest is
    integrated by Gauss-Legendre panels on |Im lam| <= n_quad. With ``tol`` set,
    the change against half the truncation length must be below it.
    """
    from .resolvent import _resolvent_batch, branch_k

    if not t > 0:
        raise EvolutionError("bad-time", "t must be positive")
    if eps is None:
        wt = omega_tilde(sys.bc, graph_trace_constant(sys.graph)) if maincond_feasible(sys.bc) else 1.0
        eps = wt + 1.0
    npan = max(1, int(np.ceil(n_quad / panel)))
    xg, wg = np.polynomial.legendre.leggauss(order)
    left = np.arange(npan) * panel
    ys = (left[:, None] + panel * (xg + 1) / 2).ravel()
    ws = np.tile(wg * panel / 2, npan)
    ys = np.concatenate([-ys[::-1], ys])
    ws = np.concatenate([ws[::-1], ws])
    lam = eps + 1j * ys
    k = branch_k(lam)
    u = u0.flat().astype(complex)
    Ru = _resolvent_batch(sys, k, u0)
    # (lam - A)^{-1} u - u / lam = -R(k) u - u / lam; d lam = i dy
    integrand = np.exp(t * lam)[:, None] * (-Ru - u[None, :] / lam[:, None])
    val = u + (ws[:, None] * integrand).sum(axis=0) / (2 * np.pi)
    if tol is not None:
        half = np.abs(ys) <= n_quad / 2
        val_half = u + (ws[half, None] * integrand[half]).sum(axis=0) / (2 * np.pi)
        if np.max(np.abs(val - val_half)) > tol:
            raise EvolutionError("increase-n", "Laplace quadrature has not converged; raise n_quad")
    return u0.with_flat(val)


# --- adjoint pairing --------------------------------------------------------------

@dataclass(frozen=True)
class PairingResult:
    max_boundary_form: float
    max_green_defect: float
    max_pairing: float
    samples: int

    @property
    def max_residual(self) -> float:
        return max(self.max_boundary_form, self.max_green_defect)


def _smooth_random(rng: np.random.Generator, a: float, modes: int = 4):
    c = (rng.standard_normal(modes) + 1j * rng.standard_normal(modes)) / (1 + np.arange(modes)) ** 2
    s = (rng.standard_normal(modes) + 1j * rng.standard_normal(modes)) / (1 + np.arange(modes)) ** 2
    f = np.pi * np.arange(modes) / a
    return lambda x: (c[None, :] * np.cos(np.outer(x, f)) + s[None, :] * np.sin(np.outer(x, f))).sum(axis=1)


def _hermite_basis(a: float):
    """Cubics with (u(a), u(0), u'(a), u'(0)) equal to unit vectors."""
    def make(ua, u0, da, d0):
        # u = u0 + d0 x + c2 x^2 + c3 x^3
        A = np.array([[a**2, a**3], [2 * a, 3 * a**2]])
        c2, c3 = np.linalg.solve(A, [ua - u0 - d0 * a, da - d0])
        return lambda x: u0 + d0 * x + c2 * x**2 + c3 * x**3
    return [make(1, 0, 0, 0), make(0, 1, 0, 0), make(0, 0, 1, 0), make(0, 0, 0, 1)]


def _discrete_traces(u: EdgeFunction, adjoint: bool) -> tuple[np.ndarray, np.ndarray]:
    from .graph import cotrace, trace, adjoint_cotrace

    tr = trace(u).vector
    ct = adjoint_cotrace(u).vector if adjoint else cotrace(u).vector
    return tr, ct


def sample_domain(g: MetricGraph, bc: BoundaryConditions, n, rng: np.random.Generator, adjoint: bool = False) -> EdgeFunction:
    """Random smooth grid function whose discrete (adjoint) traces satisfy the conditions exactly.

    A smooth random base is corrected by endpoint-localized cubics (diffusion)
    and linears (transport); the correction coefficients solve the boundary
    equations on the discrete traces by least squares.
    """
    counts = _as_counts(g, n)
    base = EdgeFunction.from_callables(g, counts, [_smooth_random(rng, a) for a in g.lengths])
    Q = bc.P + (bc.L.conj().T if adjoint else bc.L)
    bmap = np.hstack([Q, bc.Pperp])
    cols = []
    for e in range(g.n_edges):
        a = g.lengths[e]
        fs = _hermite_basis(a) if e < g.D else [lambda x, a=a: x / a, lambda x, a=a: 1 - x / a]
        for f in fs:
            vals = [np.zeros(m + 1, dtype=complex) for m in counts]
            vals[e] = f(uniform_grid(a, counts[e])).astype(complex)
            cols.append(EdgeFunction(g, vals))
    G = np.column_stack([np.concatenate(_discrete_traces(c, adjoint)) for c in cols])
    r0 = bmap @ np.concatenate(_discrete_traces(base, adjoint))
    coef, *_ = np.linalg.lstsq(bmap @ G, -r0, rcond=None)
    u = base
    for c, f in zip(coef, cols):
        u = u + f * c
    return u


def _sbp_pairing(u: EdgeFunction, v: EdgeFunction) -> tuple[complex, complex]:
    """(<A_h u, v>, <u, B_h v>) with summation-by-parts operators.

    Diffusion: trapezoid masses, second differences closed by the one-sided
    endpoint fluxes. Transport: A_h = -D^- paired with right-endpoint weights,
    B_h = +D^+ paired with left-endpoint weights.
    """
    from .graph import endpoint_derivatives

    lhs = 0j
    rhs = 0j
    for e in range(u.graph.n_edges):
        a, b = u.values[e], v.values[e]
        h = u.h(e)
        if u.kind(e) == "diffusion":
            du0, dua = endpoint_derivatives(a, h)
            dv0, dva = endpoint_derivatives(b, h)
            Ka = np.zeros_like(a, dtype=complex)
            Kb = np.zeros_like(b, dtype=complex)
            da, db = np.diff(a) / h, np.diff(b) / h
            Ka[:-1] += da
            Ka[1:] -= da
            Kb[:-1] += db
            Kb[1:] -= db
            Ka[0] -= du0
            Ka[-1] += dua
            Kb[0] -= dv0
            Kb[-1] += dva
            lhs += np.dot(Ka, np.conj(b))
            rhs += np.dot(a, np.conj(Kb))
        else:
            lhs += np.dot(-(a[1:] - a[:-1]), np.conj(b[1:]))
            rhs += np.dot(a[:-1], np.conj(b[1:] - b[:-1]))
    return lhs, rhs


def adjoint_pairing_test(g: MetricGraph, bc: BoundaryConditions, samples: int = 50, n=400,
                         rng: np.random.Generator | None = None) -> PairingResult:
    """Sample u in the domain of A and v in the domain of its adjoint and check Green's formula.

    Reports the largest boundary form <u__, v_> - <u_, J v__> (zero when the
    adjoint conditions are right) and the largest defect between the discrete
    pairing <A_h u, v> - <u, B_h v> and that boundary form.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    require_valid(bc)
    bf_max = gd_max = pr_max = 0.0
    for _ in range(samples):
        u = sample_domain(g, bc, n, rng)
        v = sample_domain(g, bc, n, rng, adjoint=True)
        ub, uc = _discrete_traces(u, False)
        vb, vc = _discrete_traces(v, True)
        scale = max(1.0, np.linalg.norm(ub), np.linalg.norm(uc)) * max(1.0, np.linalg.norm(vb), np.linalg.norm(vc))
        bform = np.vdot(vb, uc) - np.vdot(vc, ub)
        lhs, rhs = _sbp_pairing(u, v)
        bf_max = max(bf_max, abs(bform) / scale)
        gd_max = max(gd_max, abs(lhs - rhs - bform) / scale)
        pr_max = max(pr_max, abs(lhs - rhs) / scale)
    return PairingResult(bf_max, gd_max, pr_max, samples)
