"""Boundary conditions P^perp u'' + (L + P) u_ = 0 and their dissipativity analysis."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import BoundaryError
from .graph import SQRT2, MetricGraph, graph_trace_constant

ID_TOL = 1e-12
EIG_TOL = 1e-10


def herm(M: np.ndarray) -> np.ndarray:
    return (M + M.conj().T) / 2


@dataclass(frozen=True, eq=False)
class BoundaryConditions:
    """Orthogonal projector P and L (zero-extended from Ker P) on C^(2D+T)."""

    P: np.ndarray
    L: np.ndarray
    dims: tuple[int, int]

    def __post_init__(self):
        D, T = self.dims
        n = 2 * D + T
        P = np.array(self.P, dtype=complex)
        L = np.array(self.L, dtype=complex)
        if P.shape != (n, n) or L.shape != (n, n):
            raise BoundaryError("bad-dimension", f"P and L must be {n}x{n}")
        P.setflags(write=False)
        L.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "dims", (int(D), int(T)))

    @classmethod
    def for_graph(cls, g: MetricGraph, P, L) -> "BoundaryConditions":
        return cls(P, L, (g.D, g.T))

    @property
    def n(self) -> int:
        return 2 * self.dims[0] + self.dims[1]

    @property
    def Pperp(self) -> np.ndarray:
        return np.eye(self.n) - self.P

    @property
    def is_real(self) -> bool:
        return bool(np.all(self.P.imag == 0) and np.all(self.L.imag == 0))

    def residual(self, trace_vec, cotrace_vec) -> np.ndarray:
        """(P + L) u_ + P^perp u__ for given trace and co-trace vectors."""
        return (self.P + self.L) @ np.asarray(trace_vec) + self.Pperp @ np.asarray(cotrace_vec)

    def __eq__(self, other):
        if not isinstance(other, BoundaryConditions):
            return NotImplemented
        return self.dims == other.dims and np.array_equal(self.P, other.P) and np.array_equal(self.L, other.L)

    def allclose(self, other: "BoundaryConditions", tol: float = ID_TOL) -> bool:
        return (
            self.dims == other.dims
            and np.allclose(self.P, other.P, atol=tol, rtol=0)
            and np.allclose(self.L, other.L, atol=tol, rtol=0)
        )


class Violation(NamedTuple):
    identity: str
    residual: float


def validate(bc: BoundaryConditions, tol: float = ID_TOL) -> list[Violation]:
    """Return the violated identities; an empty list means the pair is admissible."""
    P, L = bc.P, bc.L
    checks = [
        ("P*≠P", np.linalg.norm(P - P.conj().T)),
        ("P²≠P", np.linalg.norm(P @ P - P)),
        ("LP≠0", np.linalg.norm(L @ P)),
        ("PL≠0", np.linalg.norm(P @ L)),
    ]
    return [Violation(name, float(r)) for name, r in checks if r > tol]


def require_valid(bc: BoundaryConditions) -> None:
    bad = validate(bc)
    if bad:
        raise BoundaryError("invalid-bc", ", ".join(f"{v.identity} ({v.residual:.3g})" for v in bad))


def diffusion_mask(bc: BoundaryConditions) -> np.ndarray:
    """Q = diag(1_{2D}, 0_T) as a boolean mask."""
    D, T = bc.dims
    return np.concatenate([np.ones(2 * D, bool), np.zeros(T, bool)])


def is_neg_L_dissipative(bc: BoundaryConditions, tol: float = EIG_TOL) -> bool:
    """True iff Re<Lx, x> >= 0 for all x."""
    return bool(np.linalg.eigvalsh(herm(bc.L)).min() >= -tol)


def maincond_feasible(bc: BoundaryConditions, tol: float = EIG_TOL) -> bool:
    """Whether some omega >= 0 makes Herm(L) + omega Q positive semidefinite.

    Equivalent to: the transport block of Herm(L) is PSD and the cross block
    maps into its range.
    """
    H = herm(bc.L)
    q = diffusion_mask(bc)
    Htt = H[np.ix_(~q, ~q)]
    Htd = H[np.ix_(~q, q)]
    if Htt.size == 0:
        return True
    scale = max(1.0, np.linalg.norm(H, 2))
    w, V = np.linalg.eigh(Htt)
    if w.min() < -tol * scale:
        return False
    null = V[:, np.abs(w) <= tol * scale]
    return bool(np.linalg.norm(null.conj().T @ Htd) <= tol * scale)


def _lambda_min(H: np.ndarray, q: np.ndarray, omega: float) -> float:
    return float(np.linalg.eigvalsh(H + omega * np.diag(q.astype(float))).min())


def minimal_omega(bc: BoundaryConditions, rtol: float = 1e-14) -> float:
    """Smallest omega >= 0 with -Re<Lx,x> <= omega (|x_d+|^2 + |x_d-|^2).

    Bisection on omega for lambda_min(Herm(L) + omega Q) >= 0, starting from
    [0, 2||L|| + 1] and doubling the upper end if that bracket is too small.
    """
    if not maincond_feasible(bc):
        raise BoundaryError("maincond-violated", "no omega satisfies the boundary estimate")
    H = herm(bc.L)
    q = diffusion_mask(bc)
    scale = max(1.0, np.linalg.norm(H, 2))
    # a singular transport block leaves lambda_min stuck at 0 from below
    ok_tol = 1e-13 * scale
    if _lambda_min(H, q, 0.0) >= -ok_tol:
        return 0.0
    lo, hi = 0.0, 2.0 * np.linalg.norm(bc.L, 2) + 1.0
    for _ in range(200):
        if _lambda_min(H, q, hi) >= -ok_tol:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise BoundaryError("maincond-violated", "bisection bracket did not close")
    while hi - lo > rtol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if _lambda_min(H, q, mid) >= -ok_tol:
            hi = mid
        else:
            lo = mid
    return hi


def schur_omega(bc: BoundaryConditions) -> float:
    """Closed form of the minimal omega via the generalized Schur complement (cross-check)."""
    H = herm(bc.L)
    q = diffusion_mask(bc)
    Hdd = H[np.ix_(q, q)]
    Hdt = H[np.ix_(q, ~q)]
    Htt = H[np.ix_(~q, ~q)]
    S = Hdt @ np.linalg.pinv(Htt, rcond=1e-12, hermitian=True) @ Hdt.conj().T - Hdd if Htt.size else -Hdd
    if S.size == 0:
        return 0.0
    return max(0.0, float(np.linalg.eigvalsh(herm(S)).max()))


def omega_tilde(bc: BoundaryConditions, C: float, omega: float | None = None) -> float:
    """Quasi-dissipativity bound omega^2 C^2 / 4 + 1."""
    if omega is None:
        omega = minimal_omega(bc)
    return omega**2 * C**2 / 4.0 + 1.0


def adjoint_bc(bc: BoundaryConditions) -> BoundaryConditions:
    """(P, L*): pairs with the adjoint traces (v_, J v__) of the adjoint operator."""
    return BoundaryConditions(bc.P, bc.L.conj().T, bc.dims)


def is_type_decoupling(bc: BoundaryConditions, tol: float = ID_TOL) -> bool:
    D, T = bc.dims
    n = bc.n
    q = np.concatenate([np.ones(2 * D), np.zeros(T)])
    candidates = [np.zeros((n, n)), np.eye(n), np.diag(q), np.diag(1 - q)]
    if not any(np.linalg.norm(bc.P - c) <= tol for c in candidates):
        return False
    m = q.astype(bool)
    off = np.linalg.norm(bc.L[np.ix_(m, ~m)]) + np.linalg.norm(bc.L[np.ix_(~m, m)])
    return bool(off <= tol)


@dataclass(frozen=True)
class DissipativityReport:
    neg_L_dissipative: bool
    maincond_feasible: bool
    omega_min: float | None
    omega_tilde: float | None
    type_decoupling: bool
    trace_constant: float | None = None


def report(bc: BoundaryConditions, g: MetricGraph | None = None) -> DissipativityReport:
    require_valid(bc)
    feas = maincond_feasible(bc)
    neg = is_neg_L_dissipative(bc)
    om = minimal_omega(bc) if feas else None
    if neg:
        om = 0.0
    C = graph_trace_constant(g) if g is not None else None
    ot = omega_tilde(bc, C, om) if (feas and C is not None) else None
    return DissipativityReport(neg, feas, om, ot, is_type_decoupling(bc), C)


# --- presets -------------------------------------------------------------------

def dendrite_L(variant: str = "printed") -> np.ndarray:
    """L for the two-dendrite/synapse chain, P = 0, ordering (u1(1), u2(1), u1(0), u2(0), t).

    ``variant="printed"`` has the Robin row reading u1'(1) = -u1(1);
    ``variant="derived"`` encodes u1'(1) = u1(1) as written in the delayed system.
    """
    L = np.array(
        [
            [1, 0, 0, 0, 0],
            [0, 0, 0, 0, 0],
            [0, 0, 0, 0, 0],
            [1, 0, 0, 0, -SQRT2],
            [-SQRT2, 0, 0, 0, 1],
        ],
        dtype=float,
    )
    if variant == "derived":
        L[0, 0] = -1.0
    elif variant != "printed":
        raise BoundaryError("unknown-preset", f"unknown dendrite variant {variant!r}")
    return L


def _secular_P() -> np.ndarray:
    return np.array([[1, 0, 0], [0, 0.5, 0.5], [0, 0.5, 0.5]])


def _chain_graph(a1: float, a2: float, tau: float) -> MetricGraph:
    # e1: v0 -> v1, e2: v2 -> v3, e_del: v1 -> v2
    return MetricGraph((a1, a2), (tau,), ("v0", "v1", "v2", "v3"), (("v0", "v1"), ("v2", "v3"), ("v1", "v2")))


def _two_edge_graph(ad: float, at: float) -> MetricGraph:
    return MetricGraph((ad,), (at,), ("v0", "v1", "v2"), (("v0", "v1"), ("v1", "v2")))


PRESET_NAMES = (
    "dendrite-bdprime",
    "dendrite-paper-L",
    "dendrite-derived",
    "alpha-example",
    "secular-example",
    "lc-example",
    "dirichlet",
    "neumann",
    "periodic-transport",
)


def presets(name: str, **params) -> tuple[MetricGraph, BoundaryConditions]:
    """Named graph / boundary-condition pairs.

    Parameters by name: dendrite-*: ``lengths=(a1, a2, tau)``; alpha-example:
    ``alpha``, ``a_d``, ``a_t``; secular-example: ``a_d``, ``a_t``; lc-example:
    ``C``, ``a_d``, ``a_t``; dirichlet/neumann: ``a``; periodic-transport: ``a``.
    """
    if name in ("dendrite-bdprime", "dendrite-paper-L", "dendrite-derived"):
        a1, a2, tau = params.get("lengths", (1.0, 1.0, 1.0))
        g = _chain_graph(a1, a2, tau)
        variant = "derived" if name == "dendrite-derived" else "printed"
        return g, BoundaryConditions(np.zeros((5, 5)), dendrite_L(variant), (2, 1))
    if name == "alpha-example":
        alpha = params.get("alpha", 1.0)
        g = _two_edge_graph(params.get("a_d", 1.0), params.get("a_t", 1.0))
        P = np.diag([1.0, 0.0, 0.0])
        L = np.zeros((3, 3), dtype=np.result_type(alpha, float))
        L[2, 1] = -SQRT2 * alpha
        L[2, 2] = 1.0
        return g, BoundaryConditions(P, L, (1, 1))
    if name == "secular-example":
        g = _two_edge_graph(params.get("a_d", 1.0), params.get("a_t", 1.0))
        return g, BoundaryConditions(_secular_P(), np.zeros((3, 3)), (1, 1))
    if name == "lc-example":
        C = params.get("C", 1.0)
        g = _two_edge_graph(params.get("a_d", 1.0), params.get("a_t", 1.0))
        P = _secular_P()
        return g, BoundaryConditions(P, C * (np.eye(3) - P), (1, 1))
    if name in ("dirichlet", "neumann"):
        g = MetricGraph((params.get("a", 1.0),), (), ("v0", "v1"), (("v0", "v1"),))
        P = np.eye(2) if name == "dirichlet" else np.zeros((2, 2))
        return g, BoundaryConditions(P, np.zeros((2, 2)), (1, 0))
    if name == "periodic-transport":
        g = MetricGraph((), (params.get("a", 1.0),), ("v0",), (("v0", "v0"),))
        return g, BoundaryConditions(np.zeros((1, 1)), np.zeros((1, 1)), (0, 1))
    raise BoundaryError("unknown-preset", f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")


def random_projector(n: int, rank: int, rng: np.random.Generator, real: bool = False) -> np.ndarray:
    M = rng.standard_normal((n, rank))
    if not real:
        M = M + 1j * rng.standard_normal((n, rank))
    Q, _ = np.linalg.qr(M)
    return Q @ Q.conj().T


def random_bc(
    D: int,
    T: int,
    rng: np.random.Generator,
    *,
    rank: int | None = None,
    real: bool = False,
    dissipative: bool = False,
) -> BoundaryConditions:
    """Random admissible pair; with ``dissipative=True`` Herm(L) is PSD on Ker P."""
    n = 2 * D + T
    if rank is None:
        rank = int(rng.integers(0, n + 1))
    P = random_projector(n, rank, rng, real) if rank else np.zeros((n, n))
    Pp = np.eye(n) - P
    M = rng.standard_normal((n, n))
    if not real:
        M = M + 1j * rng.standard_normal((n, n))
    if dissipative:
        S = M - M.conj().T
        G = rng.standard_normal((n, n)) + (0 if real else 1j * rng.standard_normal((n, n)))
        L0 = G @ G.conj().T / n + S / 2
    else:
        L0 = M
    L = Pp @ L0 @ Pp
    if real:
        P, L = P.real, L.real
    return BoundaryConditions(P, L, (D, T))
