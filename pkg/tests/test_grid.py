import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tails2d.grid import EVEN, GHOSTS, NONE, ODD, GridFunction, d_r, d_rr, interp, make_grid, pad, quad


def test_uniform_nodes():
    g = make_grid(10.0, 16)
    assert g.r[0] == pytest.approx(10.0 / 32)
    g = make_grid(10.0, 20)
    assert g.r[0] == 0.25 and g.r[-1] == 9.75
    with pytest.raises(ValueError):
        make_grid(10.0, 10)


def test_cfl_balanced(mink_fol, pert_fol):
    for fol in (mink_fol, pert_fol):
        g = make_grid(400.0, 512, "cfl-balanced", fol)
        assert g.r[0] > 0 and np.all(np.diff(g.r) > 0)
        assert np.all(g.r_y > 0)
        speed = (2.0 / fol.h(g.r)) * g.y_r  # outgoing speed in y
        assert speed.max() <= 1.05
        assert g.r[-1] < 400.0 and g.R_max == 400.0


def test_stretch_needs_foliation():
    with pytest.raises(ValueError):
        make_grid(10.0, 64, "cfl-balanced")
    with pytest.raises(ValueError):
        make_grid(10.0, 64, "log")


def test_axis_ghosts():
    f = np.arange(1.0, 9.0)
    p = pad(f, EVEN)
    assert np.array_equal(p[:GHOSTS], f[GHOSTS - 1::-1])
    p = pad(f, ODD)
    assert np.array_equal(p[:GHOSTS], -f[GHOSTS - 1::-1])


def test_first_derivative_even():
    g = make_grid(4.0, 400)
    d = d_r(GridFunction(g.r**2, EVEN), g)
    assert d.parity == ODD
    j = np.argmin(np.abs(g.r - 1.0))
    assert d.values[j] == pytest.approx(2 * g.r[j], abs=1e-12)


def test_second_derivative_odd():
    g = make_grid(4.0, 400)
    assert np.max(np.abs(d_rr(GridFunction(g.r, ODD), g).values)) < 1e-10


def _err(J, stretch, fol):
    g = make_grid(12.0, J, stretch, fol)
    r = g.r
    f = np.sin(r) * np.exp(-r * r / 8)
    exact = np.cos(r) * np.exp(-r * r / 8) - r / 4 * np.sin(r) * np.exp(-r * r / 8)
    return np.max(np.abs(d_r(GridFunction(f, ODD), g).values - exact))


@pytest.mark.parametrize("stretch", ["uniform", "cfl-balanced"])
def test_derivative_convergence(stretch, mink_fol):
    e1, e2 = _err(256, stretch, mink_fol), _err(512, stretch, mink_fol)
    assert 12.0 < e1 / e2 < 20.0


def test_quadrature_examples(mink_fol):
    g = make_grid(1.0, 64)
    assert quad(np.ones(g.J), g) == pytest.approx(1.0, abs=1e-10)
    g = make_grid(40.0, 2048)
    assert quad(np.exp(-g.r), g) == pytest.approx(1.0 - np.exp(-40.0), abs=1e-8)
    g = make_grid(40.0, 1024, "cfl-balanced", mink_fol)
    total = quad(mink_fol.h(g.r), g) + float(mink_fol.H(40.0))
    assert total == pytest.approx(mink_fol.H0, abs=1e-8)


def test_partial_and_weighted_quadrature():
    g = make_grid(10.0, 1024)
    assert quad(g.r, g, r_lo=1.0, r_hi=3.0) == pytest.approx(4.0, abs=1e-12)
    assert quad(np.ones(g.J), g, weight=lambda r: r * r, r_hi=2.0) == pytest.approx(8 / 3, abs=1e-12)
    with pytest.raises(ValueError):
        quad(np.ones(g.J), g, r_hi=11.0)


def test_interp_exact_for_cubics():
    g = make_grid(5.0, 64)
    f = lambda r: 1 + 2 * r**2 - 0.3 * r**3
    x = np.linspace(0.5, 4.5, 37)
    assert np.max(np.abs(interp(GridFunction(f(g.r), NONE), g, x) - f(x))) < 1e-11
    even = lambda r: 1 - r**2
    x = np.linspace(0.0, 0.2, 9)
    assert np.max(np.abs(interp(GridFunction(even(g.r), EVEN), g, x) - even(x))) < 1e-12
    with pytest.raises(ValueError):
        interp(GridFunction(f(g.r)), g, [6.0])


@settings(max_examples=30, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 2**31))
def test_derivatives_are_linear(a, b, seed):
    g = make_grid(6.0, 48)
    rng = np.random.default_rng(seed)
    u, v = rng.normal(size=(2, g.J))
    lhs = d_r(GridFunction(a * u + b * v, EVEN), g).values
    rhs = a * d_r(GridFunction(u, EVEN), g).values + b * d_r(GridFunction(v, EVEN), g).values
    assert np.allclose(lhs, rhs, atol=1e-9 * (1 + abs(a) + abs(b)))
    lq = quad(a * u + b * v, g)
    assert lq == pytest.approx(a * quad(u, g) + b * quad(v, g), abs=1e-10 * (1 + abs(a) + abs(b)))
