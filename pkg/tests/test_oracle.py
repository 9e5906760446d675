import math

import numpy as np
import pytest

from striplab import oracle
from striplab.errors import TailTooLarge


def test_transverse_energies():
    assert oracle.transverse_energy(1, math.pi / 2) == pytest.approx(1.0, abs=1e-15)
    assert oracle.transverse_energy(2, 1.0) == pytest.approx(math.pi**2, rel=1e-15)


def test_mode_value_at_axis():
    # sqrt(2/pi) sin(pi/2)
    val = oracle.mode_function(1, math.pi / 2, 0.0)
    assert val == pytest.approx(0.7978845608028654, abs=1e-12)


def test_mode_orthonormality_by_quadrature():
    a = 1.3
    nodes, weights = np.polynomial.legendre.leggauss(160)
    x = a * nodes
    w = a * weights
    modes = oracle.transverse_modes(a, 4)
    for m in modes:
        assert abs(np.sum(w * m(x) ** 2) - 1.0) < 1e-10
        assert abs(m(np.array(a))) < 1e-12 and abs(m(np.array(-a))) < 1e-12
    assert abs(np.sum(w * modes[0](x) * modes[1](x))) < 1e-10


def test_gauss_kernel_value():
    assert oracle.gauss_kernel(0.0, 0.0, 1.0) == pytest.approx(
        0.28209479177387814, abs=1e-15
    )


def test_flat_kernel_symmetry():
    a = 1.0
    v1, _ = oracle.flat_kernel((0.3, 0.2), (-0.5, -0.4), 0.7, a)
    v2, _ = oracle.flat_kernel((-0.5, -0.4), (0.3, 0.2), 0.7, a)
    assert v1 == pytest.approx(v2, rel=1e-14)


def test_flat_kernel_chapman_kolmogorov():
    a = 1.0
    x = (0.2, 0.1)
    xp = (-0.3, 0.4)
    t1, t2 = 0.4, 0.6
    n1, w1 = np.polynomial.legendre.leggauss(120)
    z1 = 8.0 * n1
    wz1 = 8.0 * w1
    n2, w2 = np.polynomial.legendre.leggauss(80)
    z2 = a * n2
    wz2 = a * w2
    acc = 0.0
    for zi, wi in zip(z1, wz1):
        left = np.array([oracle.flat_kernel(x, (zi, z2j), t1, a)[0] for z2j in z2])
        right = np.array([oracle.flat_kernel((zi, z2j), xp, t2, a)[0] for z2j in z2])
        acc += wi * np.sum(wz2 * left * right)
    direct, _ = oracle.flat_kernel(x, xp, t1 + t2, a)
    assert abs(acc - direct) < 1e-6


def test_halfline_kernel_value_and_limits():
    v = oracle.killed_halfline_kernel(1.0, 1.0, 1.0)
    exact = (1.0 - math.exp(-1.0)) / math.sqrt(4.0 * math.pi)
    assert v == pytest.approx(exact, abs=1e-15)
    assert v == pytest.approx(0.178325, abs=1e-5)  # printed approximation
    assert oracle.killed_halfline_kernel(1.0, 1.0, 1e-12) < 1e-11
    # dominated by the free kernel
    xs = np.linspace(0.1, 3.0, 7)
    p0 = oracle.killed_halfline_kernel(0.8, xs, xs[::-1])
    p = oracle.gauss_kernel(xs, xs[::-1], 0.8)
    assert np.all(p0 <= p + 1e-15)


def test_halfline_kernel_heat_residual():
    h = 1e-3
    xs = np.linspace(0.5, 2.5, 9)
    t = 1.2
    dpt = (
        oracle.killed_halfline_kernel(t + h, xs, 1.0)
        - oracle.killed_halfline_kernel(t - h, xs, 1.0)
    ) / (2 * h)
    dxx = (
        oracle.killed_halfline_kernel(t, xs + h, 1.0)
        - 2 * oracle.killed_halfline_kernel(t, xs, 1.0)
        + oracle.killed_halfline_kernel(t, xs - h, 1.0)
    ) / h**2
    assert np.abs(dpt - dxx).max() < 1e-4


def test_flat_survival_whole_strip_long_time_limit():
    a = math.pi / 2
    t = 12.0
    v, _ = oracle.flat_survival((0.0, 0.0), None, t, a)
    j1 = oracle.mode_function(1, a, 0.0)
    intj1 = math.sqrt(1.0 / a) * (2.0 * a / math.pi) * 2.0
    assert v * math.exp(t) == pytest.approx(j1 * intj1, rel=1e-6)


def test_flat_survival_bounded_box_polynomial_decay():
    a = math.pi / 2
    B = ((-0.5, 0.5), (-a, a))
    t1, t2 = 8.0, 32.0
    v1, _ = oracle.flat_survival((0.0, 0.0), B, t1, a)
    v2, _ = oracle.flat_survival((0.0, 0.0), B, t2, a)
    ratio = (v2 * math.exp(t2)) / (v1 * math.exp(t1))
    assert ratio == pytest.approx(0.5, rel=0.05)  # t^{-1/2} between t and 4t


def test_flat_kernel_marginal_matches_survival():
    a = 1.0
    t = 0.8
    x0 = (0.0, 0.3)
    B = ((-1.0, 2.0), (-0.5, 0.8))
    nodes1, w1 = np.polynomial.legendre.leggauss(80)
    y1 = 0.5 * (nodes1 + 1.0) * 3.0 - 1.0
    wy1 = w1 * 1.5
    nodes2, w2 = np.polynomial.legendre.leggauss(60)
    y2 = 0.5 * (nodes2 + 1.0) * 1.3 - 0.5
    wy2 = w2 * 0.65
    acc = 0.0
    for yi, wi in zip(y1, wy1):
        vals = np.array([oracle.flat_kernel(x0, (yi, yj), t, a)[0] for yj in y2])
        acc += wi * np.sum(wy2 * vals)
    direct, _ = oracle.flat_survival(x0, B, t, a)
    assert acc == pytest.approx(direct, abs=1e-8)


def test_tail_refusals():
    with pytest.raises(TailTooLarge):
        oracle.flat_kernel((0, 0), (0, 0), 0.005, 1.0)
    with pytest.raises(TailTooLarge):
        oracle.flat_survival((0, 0), None, 0.02, 1.0, n_terms=1, tol=1e-12)


def test_tail_bound_honest():
    a = 1.0
    coarse, tail = oracle.flat_kernel((0.0, 0.1), (0.2, -0.3), 0.05, a, n_terms=8, tol=1.0)
    fine, _ = oracle.flat_kernel((0.0, 0.1), (0.2, -0.3), 0.05, a, n_terms=200, tol=1.0)
    assert abs(fine - coarse) <= tail
