import dataclasses

import numpy as np
import pytest
from scipy.integrate import quad

from mixgraph.boundary import presets, random_bc
from mixgraph.errors import ResolventError
from mixgraph.evolution import _smooth_random, fd_apply
from mixgraph.graph import EdgeFunction, MetricGraph, cotrace, endpoint_derivatives, l2_norm
from mixgraph.resolvent import (
    _sweep,
    apply_resolvent,
    assemble_kernel,
    branch_k,
    kernel_eval,
    resolve,
    resolve_lambda,
    resolvent_traces,
)
from mixgraph.spectral import SecularSystem, eigenfunction, find_eigenvalues


def _sys(name, **kw):
    return SecularSystem(*presets(name, **kw))


def _random_u(g, n, rng, modes=4):
    return EdgeFunction.from_callables(g, n, [_smooth_random(rng, a, modes) for a in g.lengths])


def test_branch_k():
    for lam in (-4.0, 3.0, 1j, -1 - 2j, 0.5 - 0.1j):
        k = branch_k(lam)
        assert -k * k == pytest.approx(lam)
        assert k.imag >= 0


def test_dirichlet_green_function_at_k_i():
    gk = assemble_kernel(_sys("dirichlet"), 1j)
    # w'' - w = u, w(0) = w(1) = 0
    G = lambda x, y: -np.sinh(min(x, y)) * np.sinh(1 - max(x, y)) / np.sinh(1.0)  # noqa: E731
    for x in np.linspace(0, 1, 11):
        for y in np.linspace(0, 1, 11):
            assert abs(kernel_eval(gk, (0, x), (0, y)) - G(x, y)) <= 1e-10


@pytest.mark.parametrize("name", ["dendrite-bdprime", "secular-example", "alpha-example", "periodic-transport"])
def test_kernel_is_finite_away_from_spectrum(name):
    gk = assemble_kernel(_sys(name), 1.3 + 0.9j)
    assert np.all(np.isfinite(gk.sigma)) and np.isfinite(gk.cond) and gk.abs_det > 0


def test_sigma_blows_up_at_a_root():
    sys = _sys("dirichlet")
    scaled = [np.linalg.norm(assemble_kernel(sys, np.pi + d).sigma) * d for d in (1e-2, 1e-3, 1e-4)]
    assert scaled[0] == pytest.approx(scaled[2], rel=0.02)
    with pytest.raises(ResolventError, match="lambda-in-spectrum"):
        assemble_kernel(sys, np.pi)


def test_lambda_in_spectrum_for_zero_eigenvalue():
    with pytest.raises(ResolventError, match="lambda-in-spectrum"):
        resolve_lambda(_sys("neumann"), 0.0, EdgeFunction.zeros(presets("neumann")[0], 8))


def test_transport_free_part_vanishes_below_diagonal():
    gk = assemble_kernel(_sys("periodic-transport", a=1.0), 0.7 + 0.4j)
    k = gk.k
    for x, y in [(0.6, 0.2), (0.5, 0.5), (0.9, 0.0), (0.1, 0.3)]:
        corr = gk.Phi(0, x) @ gk.sigma @ gk.Psi(0, y)
        r0 = np.exp(k * k * (x - y)) if x < y else 0.0
        assert kernel_eval(gk, (0, x), (0, y)) == pytest.approx(r0 - corr, abs=1e-13)


def test_diffusion_diagonal_weight():
    gk = assemble_kernel(_sys("dirichlet"), 0.5 + 0.5j)
    assert gk.W[0] == pytest.approx(1 / (2j * gk.k))
    corr = gk.Phi(0, 0.3) @ gk.sigma @ gk.Psi(0, 0.3)
    assert kernel_eval(gk, (0, 0.3), (0, 0.3)) == pytest.approx((1 - corr) * gk.W[0])


def test_kernel_is_edge_diagonal_without_correction():
    gk = assemble_kernel(_sys("dendrite-bdprime"), 1 + 1j)
    bare = dataclasses.replace(gk, sigma=np.zeros_like(gk.sigma))
    assert kernel_eval(bare, (0, 0.4), (1, 0.4)) == 0
    assert kernel_eval(bare, (2, 0.1), (0, 0.7)) == 0


def test_zero_input_gives_zero():
    sys = _sys("dendrite-bdprime")
    u = EdgeFunction.zeros(sys.graph, 16)
    assert np.all(resolve(sys, 1 + 1j, u).flat() == 0)


@pytest.mark.parametrize("name", ["dendrite-bdprime", "secular-example", "alpha-example", "lc-example"])
def test_resolvent_residual_is_second_order(name, rng):
    sys = _sys(name)
    k = 1.1 + 0.7j
    gk = assemble_kernel(sys, k)
    fs = [_smooth_random(rng, a) for a in sys.graph.lengths]
    errs = []
    for n in (100, 200, 400):
        u = EdgeFunction.from_callables(sys.graph, n, fs)
        w = apply_resolvent(gk, u)
        errs.append(l2_norm(fd_apply(w) + w * k**2 - u) / l2_norm(u))
    assert np.log2(errs[0] / errs[1]) > 1.8 and np.log2(errs[1] / errs[2]) > 1.8


def test_matches_direct_kernel_quadrature(rng):
    sys = _sys("dendrite-bdprime")
    gk = assemble_kernel(sys, 0.9 + 0.6j)
    fs = [_smooth_random(rng, a) for a in sys.graph.lengths]
    u = EdgeFunction.from_callables(sys.graph, 200, fs)
    w = apply_resolvent(gk, u)
    for e, x in [(0, 0.3), (1, 0.75), (2, 0.5)]:
        direct = 0j
        for f in range(3):
            for part in (np.real, np.imag):
                pts = [x] if f == e else None
                val = quad(lambda y: part(kernel_eval(gk, (e, x), (f, y)) * fs[f](np.array([y]))[0]),
                           0, sys.graph.lengths[f], points=pts, limit=200)[0]
                direct += val if part is np.real else 1j * val
        i = int(round(x * 200))
        assert w.values[e][i] == pytest.approx(direct, abs=2e-4)


def test_eigenfunction_scaling():
    sys = _sys("dirichlet")
    rec = find_eigenvalues(sys, (2.5, 3.5, -0.5, 0.5))[0]
    phi = eigenfunction(sys, rec, 400)
    for lam in (-9.0, -10.5 + 0.3j, -5.0):
        w = resolve_lambda(sys, lam, phi)
        expect = l2_norm(phi) / abs(lam - rec.lam)
        assert l2_norm(w) == pytest.approx(expect, rel=1e-4)


def test_resolvent_identity(rng):
    sys = _sys("dendrite-bdprime")
    k1, k2 = 1 + 1j, 0.6 + 1.4j
    g1, g2 = assemble_kernel(sys, k1), assemble_kernel(sys, k2)
    u = _random_u(sys.graph, 1000, rng)
    lhs = apply_resolvent(g1, u) - apply_resolvent(g2, u)
    rhs = apply_resolvent(g1, apply_resolvent(g2, u)) * (k2**2 - k1**2)
    assert l2_norm(lhs - rhs) / l2_norm(lhs) <= 1e-6


@pytest.mark.parametrize("D, T", [(2, 1), (1, 1), (1, 2), (0, 2)])
def test_boundary_membership(D, T, rng):
    g = MetricGraph(tuple(rng.uniform(0.5, 1.5, D)), tuple(rng.uniform(0.5, 1.5, T)))
    for _ in range(25):
        bc = random_bc(D, T, rng)
        gk = assemble_kernel(SecularSystem(g, bc), 0.8 + 1.1j)
        ubar, ucot = resolvent_traces(gk, _random_u(g, 40, rng))
        scale = max(1.0, np.linalg.norm(ubar) + np.linalg.norm(ucot))
        assert np.linalg.norm(bc.residual(ubar, ucot)) <= 1e-6 * scale


def test_traces_match_stencils(rng):
    sys = _sys("dendrite-bdprime")
    gk = assemble_kernel(sys, 1 + 1j)
    u = _random_u(sys.graph, 800, rng)
    ubar, ucot = resolvent_traces(gk, u)
    w = apply_resolvent(gk, u)
    np.testing.assert_allclose(ucot, cotrace(w).vector, atol=1e-5)


def test_endpoint_identities(rng):
    # the four diffusion identities and the two transport ones, for the free part
    a, n, k = 1.3, 400, 0.9 + 0.5j
    f = _smooth_random(rng, a)
    x = np.linspace(0, a, n + 1)
    u = f(x)
    h = a / n

    def integral(g):
        re = quad(lambda y: np.real(g(y) * f(np.array([y]))[0]), 0, a, limit=200)[0]
        im = quad(lambda y: np.imag(g(y) * f(np.array([y]))[0]), 0, a, limit=200)[0]
        return re + 1j * im

    z = np.array([1j * k * h])
    w0 = (_sweep(u, np.exp(z), h, z, False) + _sweep(u, np.exp(z), h, z, True))[0]
    Ip = integral(lambda y: np.exp(1j * k * y))
    Im = integral(lambda y: np.exp(-1j * k * y))
    d0, da = endpoint_derivatives(w0, h)
    tol = 5e-5
    assert abs(w0[0] - Ip) < tol
    assert abs(w0[-1] - np.exp(1j * k * a) * Im) < tol
    assert abs(-d0 - 1j * k * Ip) < tol
    assert abs(da - 1j * k * np.exp(1j * k * a) * Im) < tol
    zt = np.array([-k * k * h])
    wt = _sweep(u, np.exp(zt), h, zt, True)[0]
    assert abs(wt[0] - integral(lambda y: np.exp(-k * k * y))) < tol
    assert wt[-1] == 0


def test_matrix_form_of_traces(rng):
    sys = _sys("secular-example", a_d=0.8, a_t=1.2)
    gk = assemble_kernel(sys, 0.7 + 0.9j)
    g = sys.graph
    fs = [_smooth_random(rng, a) for a in g.lengths]
    u = EdgeFunction.from_callables(g, 200, fs)
    ubar, ucot = resolvent_traces(gk, u)
    # int Psi W u by adaptive quadrature
    I = np.zeros(sys.n, dtype=complex)
    Wn = gk.W[np.r_[np.arange(g.D), np.arange(g.D), g.D + np.arange(g.T)]]
    for e, a in enumerate(g.lengths):
        for j in range(sys.n):
            for part, unit in ((np.real, 1), (np.imag, 1j)):
                I[j] += unit * quad(lambda y: part(gk.Psi(e, y)[j] * Wn[j] * fs[e](np.array([y]))[0]), 0, a)[0]
    X, Y = sys.XY(gk.k)
    np.testing.assert_allclose(ubar, (gk.R2 - X @ gk.sigma) @ I, atol=5e-5)
    np.testing.assert_allclose(ucot, (gk.R1 - Y @ gk.sigma) @ I, atol=5e-5)


def test_k_and_minus_k_agree(rng):
    sys = _sys("dendrite-bdprime")
    u = _random_u(sys.graph, 64, rng)
    np.testing.assert_allclose(resolve(sys, 1 + 1j, u).flat(), resolve(sys, -1 - 1j, u).flat(), atol=1e-13)
