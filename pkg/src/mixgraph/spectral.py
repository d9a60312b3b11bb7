"""Secular matrices and point spectrum of the mixed operator.

For k != 0, lambda = -k^2 is an eigenvalue iff Z(k) = (P + L) X(k) + P^perp Y(k)
is singular, where X(k) and Y(k) are the trace and co-trace of the exponential
Ansatz alpha e^{ikx} + beta e^{-ikx} (diffusion) and gamma e^{k^2 x} (transport).
The zero eigenvalue is decided by the constant/affine Ansatz through Z0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import logging

import numpy as np

from .boundary import BoundaryConditions, require_valid
from .errors import SpectralError
from .graph import SQRT2, EdgeFunction, MetricGraph, _as_counts, uniform_grid

log = logging.getLogger(__name__)

NULL_RTOL = 1e-8
MAX_DEPTH = 12
ZERO_BOX = 1e-3
# split fractions tried in turn; the first one is off-centre so that symmetric
# root sets (real axis, k = 0) do not fall on the cut
SPLIT_FRACTIONS = (0.5123, 0.4561, 0.5837, 0.3913, 0.6291)


@dataclass(frozen=True, eq=False)
class SecularSystem:
    graph: MetricGraph
    bc: BoundaryConditions

    def __post_init__(self):
        if self.bc.dims != (self.graph.D, self.graph.T):
            raise SpectralError("bad-dimension", "boundary conditions do not match the graph")
        require_valid(self.bc)

    @property
    def n(self) -> int:
        return self.graph.dim

    @property
    def a_d(self) -> np.ndarray:
        return np.array(self.graph.diffusion_lengths)

    @property
    def a_t(self) -> np.ndarray:
        return np.array(self.graph.transport_lengths)

    def XY(self, k):
        """X(k), Y(k) stacked over the shape of ``k``: arrays of shape k.shape + (n, n)."""
        k = np.asarray(k, dtype=complex)
        D, T = self.graph.D, self.graph.T
        n = self.n
        X = np.zeros(k.shape + (n, n), dtype=complex)
        Y = np.zeros_like(X)
        kk = k[..., None]
        ep = np.exp(1j * kk * self.a_d)
        em = np.exp(-1j * kk * self.a_d)
        et = np.exp(kk**2 * self.a_t)
        i = np.arange(D)
        j = 2 * D + np.arange(T)
        X[..., i, i] = ep
        X[..., i, D + i] = em
        X[..., D + i, i] = 1.0
        X[..., D + i, D + i] = 1.0
        X[..., j, j] = (1.0 + et) / SQRT2
        Y[..., i, i] = 1j * kk * ep
        Y[..., i, D + i] = -1j * kk * em
        Y[..., D + i, i] = -1j * kk
        Y[..., D + i, D + i] = 1j * kk
        Y[..., j, j] = (1.0 - et) / SQRT2
        return X, Y

    def dXY(self, k):
        """Derivatives of X and Y with respect to k."""
        k = np.asarray(k, dtype=complex)
        D, T = self.graph.D, self.graph.T
        n = self.n
        dX = np.zeros(k.shape + (n, n), dtype=complex)
        dY = np.zeros_like(dX)
        kk = k[..., None]
        a = self.a_d
        ep = np.exp(1j * kk * a)
        em = np.exp(-1j * kk * a)
        det_ = 2 * kk * self.a_t * np.exp(kk**2 * self.a_t)
        i = np.arange(D)
        j = 2 * D + np.arange(T)
        dX[..., i, i] = 1j * a * ep
        dX[..., i, D + i] = -1j * a * em
        dX[..., j, j] = det_ / SQRT2
        dY[..., i, i] = 1j * ep - a * kk * ep
        dY[..., i, D + i] = -1j * em - a * kk * em
        dY[..., D + i, i] = -1j
        dY[..., D + i, D + i] = 1j
        dY[..., j, j] = -det_ / SQRT2
        return dX, dY

    def _balanced(self, k, deriv: bool):
        """Z in a rescaled Ansatz basis, optionally with its k-derivative.

        Diffusion columns use e^{+-ik(x - a/2)} and transport columns
        e^{k^2 (x - a/2)}, so no entry grows faster than e^{|k|^2 a / 2}.
        The transport column is assembled as (M1 + M2) c + (M1 - M2) s with
        c = e^{-k^2 a/2}, s = e^{k^2 a/2}; forming (1 + e^{k^2 a}) first would
        cancel the O(1) part whenever the rows of P + L and P^perp agree.
        """
        k = np.asarray(k, dtype=complex)
        D, T = self.graph.D, self.graph.T
        M1 = self.bc.P + self.bc.L
        M2 = self.bc.Pperp
        kk = k[..., None]
        a, at = self.a_d, self.a_t
        ep = np.exp(0.5j * kk * a)
        em = np.exp(-0.5j * kk * a)
        A = M1[:, :D], M1[:, D:2 * D]
        B = M2[:, :D], M2[:, D:2 * D]
        ik = 1j * kk[..., None, :]
        ep_, em_ = ep[..., None, :], em[..., None, :]
        Za = (A[0] + ik * B[0]) * ep_ + (A[1] - ik * B[1]) * em_
        Zb = (A[0] - ik * B[0]) * em_ + (A[1] + ik * B[1]) * ep_
        Mp = (M1[:, 2 * D:] + M2[:, 2 * D:]) / SQRT2
        Mm = (M1[:, 2 * D:] - M2[:, 2 * D:]) / SQRT2
        with np.errstate(over="ignore", invalid="ignore"):
            c = np.exp(-0.5 * kk**2 * at)[..., None, :]
            s_ = np.exp(0.5 * kk**2 * at)[..., None, :]
            Zt = Mp * c + Mm * s_
        Z = np.concatenate([Za, Zb, Zt], axis=-1)
        if not deriv:
            return Z
        ha = 0.5j * a
        dZa = (1j * B[0]) * ep_ + (A[0] + ik * B[0]) * ha * ep_ + (-1j * B[1]) * em_ - (A[1] - ik * B[1]) * ha * em_
        dZb = (-1j * B[0]) * em_ - (A[0] - ik * B[0]) * ha * em_ + (1j * B[1]) * ep_ + (A[1] + ik * B[1]) * ha * ep_
        with np.errstate(over="ignore", invalid="ignore"):
            ka = (kk * at)[..., None, :]
            dZt = -ka * Mp * c + ka * Mm * s_
        return Z, np.concatenate([dZa, dZb, dZt], axis=-1)

    def balance_factors(self, k):
        """F with Z(k) diag(F) = Zbal(k): maps balanced coefficients to Ansatz coefficients."""
        k = complex(k)
        return np.concatenate([
            np.exp(-0.5j * k * self.a_d),
            np.exp(0.5j * k * self.a_d),
            np.exp(-0.5 * k * k * self.a_t),
        ])

    def Zbal(self, k):
        """Balanced secular matrix; det Zbal = det Z * e^{-k^2 sum(a_t)/2}, same zeros."""
        return self._balanced(k, False)

    def dZbal(self, k):
        return self._balanced(k, True)

    def detbal(self, k):
        with np.errstate(over="ignore", invalid="ignore"):
            return np.linalg.det(self.Zbal(k))

    def Z(self, k):
        k = np.asarray(k, dtype=complex)
        Z = self._balanced(k, False)
        kk = k[..., None]
        inv = np.concatenate([
            np.exp(0.5j * kk * self.a_d),
            np.exp(-0.5j * kk * self.a_d),
            np.exp(0.5 * kk**2 * self.a_t),
        ], axis=-1)
        return Z * inv[..., None, :]

    def dZ(self, k):
        dX, dY = self.dXY(k)
        return (self.bc.P + self.bc.L) @ dX + self.bc.Pperp @ dY

    def det(self, k):
        return np.linalg.det(self.Z(k))

    @property
    def X0(self) -> np.ndarray:
        D, T = self.graph.D, self.graph.T
        X = np.zeros((self.n, self.n))
        i = np.arange(D)
        X[i, i] = 1.0
        X[i, D + i] = self.a_d
        X[D + i, i] = 1.0
        j = 2 * D + np.arange(T)
        X[j, j] = SQRT2
        return X

    @property
    def Y0(self) -> np.ndarray:
        D = self.graph.D
        Y = np.zeros((self.n, self.n))
        i = np.arange(D)
        Y[i, D + i] = 1.0
        Y[D + i, D + i] = -1.0
        return Y


def secular_matrix(sys: SecularSystem, k: complex) -> np.ndarray:
    if k == 0:
        raise SpectralError("use zero-mode path", "k = 0 is handled by zero_mode_matrix")
    return sys.Z(complex(k))


def zero_mode_matrix(sys: SecularSystem) -> np.ndarray:
    P, L = sys.bc.P, sys.bc.L
    return (P + L) @ sys.X0 + sys.bc.Pperp @ sys.Y0


def hadamard_scale(M: np.ndarray) -> float:
    """Product of row norms, the natural size of |det M|."""
    return float(np.prod(np.linalg.norm(M, axis=-1)))


def has_zero_eigenvalue(sys: SecularSystem, rtol: float = 1e-12) -> bool:
    Z0 = zero_mode_matrix(sys)
    scale = hadamard_scale(Z0)
    return bool(scale == 0.0 or abs(np.linalg.det(Z0)) <= rtol * scale)


@dataclass(frozen=True)
class EigenvalueRecord:
    """One eigenvalue; ``coefficients`` is one unit vector of Ker Z(k) (of Ker Z0 for k = 0)
    and ``abs_det`` is |det| of the balanced secular matrix at k (or of Z0)."""

    lam: complex
    k: complex
    geometric_multiplicity: int
    coefficients: np.ndarray = field(repr=False)
    abs_det: float = 0.0
    count: int = 1

    def blocks(self, D: int):
        """Coefficient blocks (alpha_d, beta_d, gamma_t)."""
        c = self.coefficients
        return c[:D], c[D : 2 * D], c[2 * D :]


def representative_k(k: complex, tol: float = 1e-12) -> complex:
    """The member of {k, -k} with Im k >= 0 (Re k >= 0 on ties)."""
    k = complex(k)
    scale = tol * max(1.0, abs(k))
    if k.imag < -scale or (abs(k.imag) <= scale and k.real < 0):
        return -k
    return k


def null_space(M: np.ndarray, rtol: float = NULL_RTOL, ref: float | None = None) -> np.ndarray:
    """Right null vectors: singular values below rtol * max(sigma_max, ref)."""
    _, s, Vh = np.linalg.svd(M)
    top = max(s[0], ref or 0.0)
    if top == 0:
        return np.eye(M.shape[1], dtype=complex)
    return Vh[s <= rtol * top].conj().T


def secular_null_space(sys: SecularSystem, k: complex, rtol: float = NULL_RTOL) -> np.ndarray:
    """Null space of Z(k) (or Z0 for k = 0) with the Ansatz columns scaled to unit size.

    Each coefficient is weighted by the norm of its trace/co-trace column, so
    e^{k^2 a} growth does not decide the rank; the threshold is relative to
    the norm of the boundary-condition map [P + L, P^perp].
    """
    bcmap = np.hstack([sys.bc.P + sys.bc.L, sys.bc.Pperp])
    if k == 0:
        XY = np.vstack([sys.X0, sys.Y0])
        cn = np.linalg.norm(XY, axis=0)
        Zs = bcmap @ XY
        F = np.ones(sys.n)
    else:
        k = complex(k)
        Zs = sys.Zbal(k)
        ep, em = np.abs(np.exp(0.5j * k * sys.a_d)), np.abs(np.exp(-0.5j * k * sys.a_d))
        dn = np.sqrt((1 + abs(k) ** 2) * (ep**2 + em**2))
        tn = np.hypot(np.abs(np.exp(-0.5 * k * k * sys.a_t)), np.abs(np.exp(0.5 * k * k * sys.a_t)))
        cn = np.concatenate([dn, dn, tn])
        F = sys.balance_factors(k)
    cn = np.where(cn > 0, cn, 1.0)
    N = null_space(Zs / cn, rtol, np.linalg.norm(bcmap, 2)) / cn[:, None]
    N = N * F[:, None]
    return N / np.linalg.norm(N, axis=0) if N.size else N


def _record(sys: SecularSystem, k: complex, count: int = 1) -> EigenvalueRecord | None:
    if k == 0:
        Z = zero_mode_matrix(sys).astype(complex)
        lam = 0j
    else:
        Z = sys.Zbal(k)
        lam = -k * k
    N = secular_null_space(sys, k)
    if N.shape[1] == 0:
        return None
    return EigenvalueRecord(lam, k, N.shape[1], N[:, 0], float(abs(np.linalg.det(Z))), count)


# --- argument-principle root search ---------------------------------------------

@dataclass(frozen=True)
class Box:
    x0: float
    x1: float
    y0: float
    y1: float

    @property
    def center(self) -> complex:
        return complex(0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))

    @property
    def size(self) -> float:
        return max(self.x1 - self.x0, self.y1 - self.y0)

    def contains(self, z: complex, margin: float = 0.0) -> bool:
        return (
            self.x0 - margin <= z.real <= self.x1 + margin and self.y0 - margin <= z.imag <= self.y1 + margin
        )

    def corners(self):
        return [complex(self.x0, self.y0), complex(self.x1, self.y0), complex(self.x1, self.y1), complex(self.x0, self.y1)]


class _Contour:
    """Caches det Z along segments so neighbouring boxes share work."""

    def __init__(self, sys: SecularSystem, base: int = 48, max_refine: int = 14):
        self.sys = sys
        self.base = base
        self.max_refine = max_refine
        self._cache: dict = {}

    def segment(self, z0: complex, z1: complex):
        """Samples (z, f) along z0 -> z1.

        Refined until both the observed phase step and the step predicted by
        the log-derivative stay below pi/4, so fast rotation of e^{k^2 a} on long
        edges cannot alias.
        """
        key = (z0, z1)
        if key in self._cache:
            return self._cache[key]
        rkey = (z1, z0)
        if rkey in self._cache:
            z, f = self._cache[rkey]
            return z[::-1], f[::-1]
        t = np.linspace(0.0, 1.0, self.base + 1)
        dz = abs(z1 - z0)
        z = z0 + t * (z1 - z0)
        f = self.sys.detbal(z)
        g = self.log_derivative(z)
        for _ in range(self.max_refine):
            with np.errstate(invalid="ignore", divide="ignore"):
                dphi = np.abs(np.angle(f[1:] / f[:-1]))
            pred = np.maximum(g[1:], g[:-1]) * np.diff(t) * dz
            bad = ~((dphi < np.pi / 4) & (pred < np.pi / 4))
            if not bad.any():
                break
            tm = 0.5 * (t[1:] + t[:-1])[bad]
            zm = z0 + tm * (z1 - z0)
            t = np.concatenate([t, tm])
            f = np.concatenate([f, self.sys.detbal(zm)])
            g = np.concatenate([g, self.log_derivative(zm)])
            order = np.argsort(t)
            t, f, g = t[order], f[order], g[order]
        z = z0 + t * (z1 - z0)
        self._cache[key] = (z, f)
        return z, f

    def log_derivative(self, z: np.ndarray) -> np.ndarray:
        """|(det Zbal)'/det Zbal| = |tr(Zbal^{-1} Zbal')|; inf where singular."""
        Z, dZ = self.sys.dZbal(z)
        try:
            return np.abs(np.trace(np.linalg.solve(Z, dZ), axis1=-2, axis2=-1))
        except np.linalg.LinAlgError:
            pass
        out = np.full(z.shape, np.inf)
        for i in range(z.size):
            try:
                out[i] = abs(np.trace(np.linalg.solve(Z[i], dZ[i])))
            except np.linalg.LinAlgError:
                continue
        return out

    def boundary(self, box: Box):
        c = box.corners()
        parts = [self.segment(c[i], c[(i + 1) % 4]) for i in range(4)]
        z = np.concatenate([p[0][:-1] for p in parts])
        f = np.concatenate([p[1][:-1] for p in parts])
        return z, f

    def root_distance(self, z: np.ndarray) -> np.ndarray:
        """Newton estimate |det Z / (det Z)'| of the distance to the nearest root."""
        with np.errstate(divide="ignore"):
            return 1.0 / self.log_derivative(z)

    def winding(self, box: Box) -> tuple[int, float, float]:
        """(root count, min distance-to-root estimate, median |det|) on the box boundary."""
        z, f = self.boundary(box)
        af = np.abs(f)
        med = float(np.median(af))
        fc = np.append(f, f[0])
        with np.errstate(invalid="ignore", divide="ignore"):
            total = np.sum(np.angle(fc[1:] / fc[:-1]))
        if not np.isfinite(total) or not np.all(af > 0):
            return -1, 0.0, med
        dist = float(self.root_distance(z).min())
        return int(round(total / (2 * np.pi))), dist, med

    def line_ok(self, z0: complex, z1: complex, tol: float) -> bool:
        z, f = self.segment(z0, z1)
        if not np.all(np.isfinite(f)) or not np.all(f != 0):
            return False
        return bool(self.root_distance(z).min() > tol)


def newton(
    sys: SecularSystem, k0: complex, maxiter: int = 80, tol: float = 1e-15, radius: float = np.inf
) -> tuple[complex, bool]:
    """Newton on det Z using d(det Z)/dk = det Z * tr(Z^{-1} Z'); gives up beyond ``radius`` of k0."""
    k = complex(k0)
    step = np.inf
    for _ in range(maxiter):
        if abs(k - k0) > radius:
            return k, False
        Z, dZ = sys.dZbal(k)
        try:
            s = np.trace(np.linalg.solve(Z, dZ))
        except np.linalg.LinAlgError:
            return k, True
        if s == 0 or not np.isfinite(s):
            return k, False
        step = 1.0 / s
        k -= step
        if abs(step) <= tol * max(1.0, abs(k)):
            return k, True
    return k, abs(step) <= 1e-10 * max(1.0, abs(k))


def find_eigenvalues(
    sys: SecularSystem,
    region: tuple[float, float, float, float],
    *,
    include_zero: bool = True,
    max_depth: int = MAX_DEPTH,
    max_rerolls: int = 8,
    contour_tol: float = 1e-8,
) -> list[EigenvalueRecord]:
    """All eigenvalues lambda = -k^2 with k in the rectangle (re_min, re_max, im_min, im_max).

    Boxes are subdivided until the argument principle reports a single root,
    which is then polished by Newton.  k and -k give the same eigenvalue and are
    merged.  Roots with |k| below ZERO_BOX are left to the zero-mode test.
    """
    x0, x1, y0, y1 = map(float, region)
    if not (x0 < x1 and y0 < y1):
        raise SpectralError("invalid-region", "region needs min < max on both axes")
    cont = _Contour(sys)

    box = Box(x0, x1, y0, y1)
    for attempt in range(max_rerolls + 1):
        count, dist, med = cont.winding(box)
        if count >= 0 and dist > contour_tol * max(1.0, box.size):
            break
        # enlarge slightly; the user region is a search window, not a hard set
        pad = 1e-3 * (attempt + 1) * box.size
        box = Box(box.x0 - pad * 0.71, box.x1 + pad * 1.13, box.y0 - pad * 0.89, box.y1 + pad * 1.07)
    else:
        raise SpectralError("contour-reroll", "region boundary keeps passing through roots")

    roots: list[tuple[complex, int]] = []
    stack = [(box, count, med, 0)]
    while stack:
        b, cnt, med, depth = stack.pop()
        if cnt <= 0:
            continue
        if b.contains(0j) and b.size < ZERO_BOX:
            continue
        if cnt == 1 or depth >= max_depth:
            k, ok = newton(sys, b.center, radius=2 * b.size)
            if ok and b.contains(k, margin=1e-9 * max(1.0, abs(k))):
                roots.append((k, cnt))
                continue
            if depth >= max_depth:
                roots.append((b.center, cnt))
                log.warning("root cluster at %s unresolved at max depth", b.center)
                continue
        children = _split(cont, b, contour_tol * max(1.0, box.size))
        if children is None:
            raise SpectralError("contour-reroll", f"could not split box {b} away from roots")
        for c in children:
            ccnt, _, cmed = cont.winding(c)
            # one depth level = both axes halved, i.e. two binary cuts
            stack.append((c, ccnt, cmed, depth + 0.5))

    recs: list[EigenvalueRecord] = []
    for k, cnt in roots:
        if abs(k) < ZERO_BOX:
            continue
        k = representative_k(k)
        lam = -k * k
        if any(abs(r.lam - lam) <= 1e-9 * max(1.0, abs(lam)) for r in recs):
            continue
        r = _record(sys, k, cnt)
        if r is not None:
            recs.append(r)
    if include_zero and box.contains(0j) and has_zero_eigenvalue(sys):
        rec = _record(sys, 0j)
        if rec is None:
            # det is below tolerance but the SVD sees no null direction
            _, _, Vh = np.linalg.svd(zero_mode_matrix(sys))
            rec = EigenvalueRecord(0j, 0j, 1, Vh[-1].conj(), 0.0)
        recs.append(rec)
    recs.sort(key=lambda r: (-r.lam.real, r.lam.imag))
    return recs


def _split(cont: _Contour, b: Box, tol: float):
    wide = (b.x1 - b.x0) >= (b.y1 - b.y0)
    for frac in SPLIT_FRACTIONS:
        if wide:
            xm = b.x0 + frac * (b.x1 - b.x0)
            if cont.line_ok(complex(xm, b.y0), complex(xm, b.y1), tol):
                return Box(b.x0, xm, b.y0, b.y1), Box(xm, b.x1, b.y0, b.y1)
        else:
            ym = b.y0 + frac * (b.y1 - b.y0)
            if cont.line_ok(complex(b.x0, ym), complex(b.x1, ym), tol):
                return Box(b.x0, b.x1, b.y0, ym), Box(b.x0, b.x1, ym, b.y1)
    return None


def count_roots(sys: SecularSystem, region) -> int:
    """Argument-principle count of zeros of det Z inside a rectangle."""
    x0, x1, y0, y1 = region
    return _Contour(sys).winding(Box(x0, x1, y0, y1))[0]


# --- eigenfunctions -------------------------------------------------------------

def eigenfunction_samples(sys: SecularSystem, k: complex, coeffs: np.ndarray, grids) -> list[np.ndarray]:
    g = sys.graph
    D = g.D
    vals = []
    for e, x in enumerate(grids):
        if e < D:
            al, be = coeffs[e], coeffs[D + e]
            vals.append(al + be * x if k == 0 else al * np.exp(1j * k * x) + be * np.exp(-1j * k * x))
        else:
            ga = coeffs[2 * D + (e - D)]
            vals.append(np.full_like(x, ga, dtype=complex) if k == 0 else ga * np.exp(k * k * x))
    return vals


def eigenfunction(sys: SecularSystem, rec: EigenvalueRecord, n) -> EdgeFunction:
    """Sample the Ansatz with the record's null vector; normalised in L2 with a fixed phase."""
    Z = zero_mode_matrix(sys) if rec.k == 0 else sys.Z(rec.k)
    N = secular_null_space(sys, rec.k)
    if N.shape[1] == 0:
        raise SpectralError("not-an-eigenvalue", f"Z({rec.k}) has trivial null space")
    coeffs = np.asarray(rec.coefficients)
    if boundary_residual(sys, rec.k, coeffs) > NULL_RTOL * max(1.0, np.linalg.norm(Z)):
        coeffs = N[:, 0]
    g = sys.graph
    grids = [uniform_grid(a, m) for a, m in zip(g.lengths, _as_counts(g, n))]
    u = EdgeFunction(g, eigenfunction_samples(sys, rec.k, coeffs, grids))
    from .graph import l2_norm

    flat = u.flat()
    ph = flat[np.argmax(np.abs(flat))]
    scale = l2_norm(u) * (ph / abs(ph) if ph != 0 else 1.0)
    return u * (1.0 / scale)


def boundary_residual(sys: SecularSystem, k: complex, coeffs: np.ndarray) -> float:
    """|(P+L) u_ + P^perp u__| for the exact Ansatz function (analytic endpoint data)."""
    if k == 0:
        X, Y = sys.X0, sys.Y0
    else:
        X, Y = sys.XY(k)
    return float(np.linalg.norm(sys.bc.residual(X @ coeffs, Y @ coeffs)))
