"""The twelve acceptance criteria, one test each; each prints a PASS/FAIL line."""

import time

import numpy as np

from mixgraph.boundary import minimal_omega, omega_tilde, presets, random_bc
from mixgraph.delay import convergence_study, smooth_compatible_problem
from mixgraph.evolution import (
    _smooth_random,
    adjoint_pairing_test,
    assemble,
    evolve,
    fd_apply,
    laplace_evolve,
    smearing_bound,
)
from mixgraph.graph import EdgeFunction, MetricGraph, graph_trace_constant, l2_norm
from mixgraph.resolvent import assemble_kernel, apply_resolvent
from mixgraph.spectral import SecularSystem, find_eigenvalues, zero_mode_matrix


def _orders(errs):
    return [float(np.log2(errs[i] / errs[i + 1])) for i in range(len(errs) - 1)]


def test_criterion_01_secular_closed_form(record, rng):
    g, bc = presets("secular-example")
    sys = SecularSystem(g, bc)
    ks = rng.uniform(-5, 5, 200) + 1j * rng.uniform(-1, 1, 200)
    t0 = time.perf_counter()
    dets = np.array([sys.det(k) for k in ks])
    elapsed = time.perf_counter() - t0
    E = np.exp(ks**2)
    closed = (1j / np.sqrt(2)) * (np.sin(ks) * (1 - E) + ks * np.cos(ks) * (1 + E))
    rel = float(np.max(np.abs(dets - closed) / np.abs(closed)))
    ok = rel <= 1e-10 and elapsed < 1.0
    record(1, ok, f"max rel error {rel:.2e} (<= 1e-10), {elapsed:.3f} s (< 1 s)")
    assert ok


def test_criterion_02_zero_mode_determinant(record, rng):
    worst_lc = 0.0
    for _ in range(50):
        C, a = rng.uniform(-3, 3), rng.uniform(0.2, 3)
        g, bc = presets("lc-example", C=C, a_d=a, a_t=rng.uniform(0.2, 3))
        d = np.linalg.det(zero_mode_matrix(SecularSystem(g, bc)))
        worst_lc = max(worst_lc, abs(d - (-(2**-0.5) - np.sqrt(2) * C * a)))
    worst_dend = 0.0
    for _ in range(10):
        g, bc = presets("dendrite-bdprime", lengths=tuple(rng.uniform(0.2, 3, 3)))
        worst_dend = max(worst_dend, abs(np.linalg.det(zero_mode_matrix(SecularSystem(g, bc)))))
    ok = worst_lc <= 1e-14 and worst_dend <= 1e-12
    record(2, ok, f"lc-example max error {worst_lc:.1e} (<= 1e-14), dendrite max |det| {worst_dend:.1e} (<= 1e-12)")
    assert ok


def test_criterion_03_eigenvalue_oracles(record):
    t0 = time.perf_counter()
    g, bc = presets("dirichlet")
    recs = find_eigenvalues(SecularSystem(g, bc), (0.5, 5.5 * np.pi, -0.5, 0.5))
    lam_d = np.sort([r.lam.real for r in recs])[::-1]
    exact_d = -(np.pi * np.arange(1, 6)) ** 2
    err_d = float(np.max(np.abs(lam_d[:5] - exact_d))) if lam_d.size >= 5 else np.inf
    a = 1.3
    g, bc = presets("periodic-transport", a=a)
    recs = find_eigenvalues(SecularSystem(g, bc), (-4.5, 4.5, -0.5, 4.5))
    lam_t = np.array([r.lam for r in recs])
    exact_t = np.array([-2j * np.pi * n / a for n in range(-5, 6)])
    err_t = max(float(np.min(np.abs(lam_t - z))) for z in exact_t) if lam_t.size else np.inf
    elapsed = time.perf_counter() - t0
    ok = err_d <= 1e-8 and err_t <= 1e-8 and elapsed < 10 and len(lam_d) == 5
    record(3, ok, f"dirichlet {err_d:.1e}, periodic transport {err_t:.1e} (<= 1e-8), {elapsed:.2f} s (< 10 s)")
    assert ok


def test_criterion_04_resolvent_identity(record):
    g, bc = presets("dendrite-bdprime")
    sys = SecularSystem(g, bc)
    k = 1 + 1j
    gk = assemble_kernel(sys, k)
    seeds = np.random.default_rng(5)
    funcs = [[_smooth_random(seeds, a) for a in g.lengths] for _ in range(20)]
    ns = (100, 200, 400)
    upwind, second = [], []
    for n in ns:
        op = assemble(g, bc, n)
        ru, rs = [], []
        for fs in funcs:
            u = EdgeFunction.from_callables(g, n, fs)
            w = apply_resolvent(gk, u)
            # rows of A_h as integrated by the time stepper: M^{-1}(K y + E z), z from the constraints
            y, z = op.split(w)
            uy, _ = op.split(u)
            ru.append(op.norm((op.K @ y + op.E @ z) / op.mass + k**2 * y - uy) / op.norm(uy))
            rs.append(l2_norm(fd_apply(w) + w * k**2 - u) / l2_norm(u))
        upwind.append(max(ru))
        second.append(max(rs))
    order = min(_orders(upwind))
    ok = upwind[1] <= 5e-3 and order >= 1
    record(
        4,
        ok,
        f"A_h (upwind) residual at n=200 {upwind[1]:.2e} (<= 5e-3), order {order:.2f} (>= 1); "
        f"residuals {', '.join(f'{r:.1e}' for r in upwind)} at n={ns}; "
        f"second-order stencil {', '.join(f'{r:.1e}' for r in second)}",
    )
    assert ok


def test_criterion_05_omega_certification(record, rng):
    g, bc = presets("dendrite-bdprime")
    omega = minimal_omega(bc)
    n = bc.n
    worst = np.inf
    mask = np.zeros(n)
    mask[: 2 * g.D] = 1.0
    Pp = bc.Pperp
    for _ in range(10):
        x = rng.standard_normal((100_000, n)) + 1j * rng.standard_normal((100_000, n))
        x = x @ Pp.T
        x /= np.linalg.norm(x, axis=1, keepdims=True)
        form = np.real(np.einsum("si,ij,sj->s", x.conj(), bc.L, x)) + omega * (np.abs(x) ** 2 @ mask)
        worst = min(worst, float(form.min()))
    ok = omega <= 1.5 + 1e-9 and worst >= -1e-12
    record(5, ok, f"minimal omega {omega:.6f} (<= 1.5), min of Re<Lx,x> + omega|x_d|^2 over 1e6 samples {worst:.2e}")
    assert ok


def test_criterion_06_contractivity(record, rng):
    worst = -np.inf
    for _ in range(50):
        D, T = 0, 0
        while D + T == 0:
            D, T = int(rng.integers(0, 4)), int(rng.integers(0, 4))
        g = MetricGraph(tuple(rng.uniform(0.5, 2, D)), tuple(rng.uniform(0.5, 2, T)))
        bc = random_bc(D, T, rng, dissipative=True)
        op = assemble(g, bc, 40)
        u0 = EdgeFunction.from_callables(g, 40, [_smooth_random(rng, a) for a in g.lengths])
        traj = evolve(op, u0, 0.5, 0.01)
        inc = np.diff(traj.l2_norms)
        worst = max(worst, float(inc.max()))
    ok = worst <= 1e-10
    record(6, ok, f"largest one-step norm increase over 50 random dissipative bc {worst:.2e} (<= 1e-10)")
    assert ok


def test_criterion_07_quasi_contractivity(record, rng):
    g, bc = presets("dendrite-bdprime")
    wt = omega_tilde(bc, graph_trace_constant(g))
    op = assemble(g, bc, 100)
    worst = -np.inf
    for _ in range(20):
        fs = [lambda x, f=_smooth_random(rng, a): f(x).real for a in g.lengths]
        u0 = EdgeFunction.from_callables(g, 100, fs)
        traj = evolve(op, u0, 2.0, 0.01)
        ratio = traj.l2_norms[1:] / (np.exp((wt + 0.1) * traj.times[1:]) * traj.l2_norms[0])
        worst = max(worst, float(ratio.max()))
    ok = worst <= 1.0
    record(7, ok, f"max over 0 < t <= 2 of ||u(t)|| / (e^((w+0.1)t) ||u0||) = {worst:.3f} (<= 1), omega tilde {wt:.3f}")
    assert ok


def test_criterion_08_reality(record, rng):
    worst = 0.0
    names = ("dendrite-bdprime", "dendrite-derived", "alpha-example", "secular-example",
             "lc-example", "dirichlet", "neumann", "periodic-transport")
    for name in names:
        g, bc = presets(name)
        assert bc.is_real
        op = assemble(g, bc, 60)
        fs = [lambda x, f=_smooth_random(rng, a): f(x).real for a in g.lengths]
        u0 = EdgeFunction.from_callables(g, 60, fs)
        for scheme in ("be", "cn"):
            traj = evolve(op, u0, 1.0, 0.01, scheme=scheme)
            worst = max(worst, float(np.max(traj.max_imag)))
    ok = worst <= 1e-12
    record(8, ok, f"max imaginary part over {len(names)} real presets, BE and CN: {worst:.1e} (<= 1e-12)")
    assert ok


def test_criterion_09_adjoint_pairing(record, rng):
    worst = 0.0
    for _ in range(50):
        D, T = 0, 0
        while D + T == 0:
            D, T = int(rng.integers(0, 3)), int(rng.integers(0, 3))
        g = MetricGraph(tuple(rng.uniform(0.5, 2, D)), tuple(rng.uniform(0.5, 2, T)))
        bc = random_bc(D, T, rng)
        res = adjoint_pairing_test(g, bc, samples=1, n=400, rng=rng)
        worst = max(worst, res.max_residual)
    ok = worst <= 1e-6
    record(9, ok, f"max boundary-form residual over 50 pairs at n=400 {worst:.1e} (<= 1e-6)")
    assert ok


def test_criterion_10_bd_vs_bdprime(record, rng):
    orders, rel, ab = [], [], []
    for _ in range(5):
        prob = smooth_compatible_problem(rng)
        assert prob.is_compatible()
        rep = convergence_study(prob, 2.0, 2e-3, 50, levels=3)
        orders.append(rep.min_order)
        rel.append(rep.relative[-1])
        ab.append(rep.sup_difference[-1])
    ok = min(orders) >= 0.9 and max(rel) <= 2e-2
    record(
        10,
        ok,
        f"min order {min(orders):.2f} (>= 0.9); at n=200, dt=5e-4 sup discrepancy relative to the "
        f"solution size {max(rel):.1e} (<= 2e-2), absolute {max(ab):.1e}",
    )
    assert ok


def test_criterion_11_laplace_cross_check(record):
    g, bc = presets("dirichlet")
    sys = SecularSystem(g, bc)
    n, t = 400, 0.1
    u0 = EdgeFunction.from_callables(g, n, lambda x: np.sin(np.pi * x))
    exact = u0 * np.exp(-np.pi**2 * t)
    lap = laplace_evolve(sys, u0, t)
    traj = evolve(assemble(g, bc, n), u0, t, 1e-4, scheme="cn")
    e_lap = float(np.max(np.abs(lap.values[0] - exact.values[0])))
    e_ev = float(np.max(np.abs(traj.final.values[0] - exact.values[0])))
    ok = e_lap <= 1e-4 and e_ev <= 1e-4
    record(11, ok, f"max error vs heat solution: laplace {e_lap:.1e}, evolve {e_ev:.1e} (<= 1e-4)")
    assert ok


def test_criterion_12_finite_speed(record):
    g, bc = presets("dendrite-bdprime")
    n, dt, t = 400, 1e-3, 0.3
    e = 2  # the transport edge
    lo, hi = 0.2, 0.4

    def bump(x):
        x = np.asarray(x, dtype=float)
        inside = (x > lo) & (x < hi)
        return np.where(inside, np.sin(np.pi * (x - lo) / (hi - lo)) ** 4, 0.0)

    def bump2(x):
        s = np.pi * (np.asarray(x, dtype=float) - lo) / (hi - lo)
        inside = (x > lo) & (x < hi)
        c = (np.pi / (hi - lo)) ** 2
        return np.where(inside, c * (12 * np.sin(s) ** 2 * np.cos(s) ** 2 - 4 * np.sin(s) ** 4), 0.0)

    zero = lambda x: 0 * x  # noqa: E731
    fs = [zero, zero, bump]
    u0 = EdgeFunction.from_callables(g, n, fs)
    traj = evolve(assemble(g, bc, n), u0, t, dt)
    x = u0.grid(e)
    h = u0.h(e)
    xf = np.linspace(0, 1, 200_001)
    l1_second = float(np.sum(np.abs(bump2(xf))) * (xf[1] - xf[0]))
    err = float(np.sum(np.abs(traj.final.values[e] - bump(x - t))) * h)
    bound = smearing_bound(l1_second, h, dt, t)
    distance = 1.0 - hi
    coupling = max(float(np.max(np.abs(s.values[f]))) for s in traj.snapshots for f in (0, 1))
    ok = err <= bound and coupling <= 1e-12 and t < 0.6 * distance
    record(12, ok, f"L1 error {err:.2e} (<= smearing bound {bound:.2e}), coupling edges max |u| {coupling:.1e} (<= 1e-12)")
    assert ok
