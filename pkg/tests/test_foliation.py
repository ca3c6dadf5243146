import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tails2d.foliation import causal_outer_radius, delta_h, frame_convert, make_foliation

from conftest import simpson

R = np.concatenate([np.linspace(0.0, 10.0, 1001), np.geomspace(10.5, 1e6, 300)])


def _H_oracle(fol, r0):
    # brute-force Simpson up to 2 r_plateau, analytic power-law tail beyond
    rp, eta = fol.r_plateau, fol.eta_h
    tail = fol.c_t * (1 + 2 * rp) ** -eta / eta
    return simpson(fol.h, r0, 2 * rp) + tail if r0 < 2 * rp else fol.c_t * (1 + r0) ** -eta / eta


def test_plateau(mink_fol):
    assert mink_fol.h(0.5) == 1.0
    assert mink_fol.h(0.0) == 1.0


def test_delta_h():
    assert delta_h(2.0) == pytest.approx(1.0 / 12.0, rel=1e-15)
    assert delta_h() == pytest.approx(1.0 / 12.0, rel=1e-15)


def test_h_range_and_decay(pert_fol):
    h = pert_fol.h(R)
    assert np.all((h > 0) & (h < 2))
    upper = h * (1 + R) ** (1 + pert_fol.eta_h)
    lower = h * (1 + R) ** pert_fol.C_h
    assert upper.max() < 10.0
    assert lower.min() > 0.5


def test_h_flat_at_axis(mink_fol):
    e = 0.05
    x = e * np.arange(-4, 5)
    vals = mink_fol.h(np.abs(x))
    assert np.max(np.abs(np.diff(vals, n=4))) < 1e-14
    assert mink_fol.dh(0.0) == 0.0 and mink_fol.ddh(0.0) == 0.0


def test_H0_against_simpson(mink_fol, pert_fol):
    oracle = _H_oracle(mink_fol, 0.0)
    assert mink_fol.H0 == pytest.approx(oracle, rel=1e-10)
    assert pert_fol.H0 == pytest.approx(oracle, rel=1e-10)  # h does not see the metric


def test_u_tends_to_one_at_infinity(mink_fol):
    assert abs(mink_fol.u(0.0, 1e12) - 1.0) < 1e-5


def test_axis_time(mink_fol):
    assert mink_fol.t(0.0, 0.0) == pytest.approx(2.0 * (1.0 + 0.5 * mink_fol.H0), rel=1e-15)


def test_coordinates_at_sample_point(pert, pert_fol):
    H2 = _H_oracle(pert_fol, 2.0)
    Gt2 = simpson(lambda x: 1.0 / pert.G(x), 0.0, 2.0)
    u = 3.0 + 1.0 + 0.5 * H2
    assert pert_fol.u(3.0, 2.0) == pytest.approx(u, rel=1e-12)
    assert pert_fol.v(3.0, 2.0) == pytest.approx(u + Gt2, rel=1e-12)
    assert pert_fol.t(3.0, 2.0) == pytest.approx(2 * u + Gt2, rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 500.0), st.floats(0.0, 300.0))
def test_coordinate_round_trips(tau, r):
    fol = _fol()
    assert fol.tau_from_u(fol.u(tau, r), r) == pytest.approx(tau, abs=1e-9)
    assert fol.tau_from_t(fol.t(tau, r), r) == pytest.approx(tau, abs=1e-9)


_cache = {}


def _fol():
    if "f" not in _cache:
        from tails2d.background import make_background
        _cache["f"] = make_foliation(make_background("default-perturbed", 0.05, 2.0))
    return _cache["f"]


def test_r_at_v_inverts_v(pert_fol):
    for tau, v in [(0.0, 50.0), (30.0, 400.0), (5.0, 20.0)]:
        r = pert_fol.r_at_v(tau, v)
        assert pert_fol.v(tau, r) == pytest.approx(v, abs=1e-9)
    assert pert_fol.r_at_v(100.0, 50.0) == 0.0


def test_frame_static_plateau(mink_fol):
    fs = frame_convert(mink_fol, 0.5, 3.0, 2.0, 0.0)
    assert (fs.T, fs.L, fs.Lbar, fs.Z) == (1.0, 1.0, 1.0, 0.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(0.0, 50.0))
def test_frame_relations(dtau, dr, r):
    fol = _fol()
    fs = frame_convert(fol, r, 1.0, dtau, dr)
    G, h = fol.bg.G(r), fol.h(r)
    assert fs.T == pytest.approx(0.5 * (fs.L + fs.Lbar), abs=1e-12)
    assert fs.L == G * h * fs.T + G * fs.X
    assert G * fs.Z == pytest.approx(fs.L - fs.T, abs=1e-12)


def test_Z_two_paths(pert_fol):
    rng = np.random.default_rng(3)
    r = 7.0
    G, h = pert_fol.bg.G(r), pert_fol.h(r)
    for dtau, dr in rng.normal(size=(10, 2)):
        fs = frame_convert(pert_fol, r, 0.0, dtau, dr)
        assert fs.Z == pytest.approx(fs.X + (h - 1.0 / G) * fs.T, abs=1e-14)


def test_causal_outer_radius(mink_fol):
    assert causal_outer_radius(mink_fol, 10.0, 0.0) == 5.0
    R = 50.0
    for _ in range(100):  # fixed point of R = 50 - 1 - H(R)/2
        R = 49.0 - 0.5 * float(mink_fol.H(R))
    got = causal_outer_radius(mink_fol, 200.0, 50.0, margin=0.0)
    assert got == pytest.approx(R, abs=1e-9)
    assert causal_outer_radius(mink_fol, 200.0, 50.0) >= 45.0
    sweep = [causal_outer_radius(mink_fol, 1.0, v) for v in np.linspace(0, 500, 41)]
    assert np.all(np.diff(sweep) >= 0)
    with pytest.raises(ValueError):
        causal_outer_radius(mink_fol, -1.0, 10.0)


def test_parameter_validation(mink):
    with pytest.raises(ValueError):
        make_foliation(mink, eta_h=1.5)
    with pytest.raises(ValueError):
        make_foliation(mink, r_plateau=0.5)
    with pytest.raises(ValueError, match="spacelike|misconfigured"):
        make_foliation(mink, h_match=3.0)
