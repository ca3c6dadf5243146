import numpy as np
import pytest
from scipy.integrate import quad as adaptive_quad

from tails2d.background import mink_fields
from tails2d.diagnostics import (MAX_T_ORDER, EnergySeries, EnergySpec, SliceContext, Tower, _mink_tower,
                                 data_norm, derive_slice, energies, energy_series, inhom_norm,
                                 modified_T_energy, T_energy)
from tails2d.evolution import EvolutionConfig, InitialData, SourceSpec, data_presets, evolve
from tails2d.grid import EVEN, ODD, make_grid


@pytest.fixture(scope="module")
def short_run(pert, pert_fol):
    g = make_grid(80.0, 512, "cfl-balanced", pert_fol)
    data = InitialData({0: data_presets("gaussian-even").modes[0],
                        2: data_presets("gaussian-mode-m", m=2).modes[2]}, 0.0, "mixed")
    return evolve(data, g, pert, pert_fol, EvolutionConfig(tau_max=12.0, cadence=0.25))


def static_tower(values, parity, half=False, m=0, order=1):
    return Tower(tuple([values] + [np.zeros_like(values)] * order), parity, half, m)


def test_constant_has_no_energy(pert, pert_fol):
    g = make_grid(60.0, 256, "cfl-balanced", pert_fol)
    ctx = SliceContext(g, pert, pert_fol)
    one = static_tower(np.ones(g.J), EVEN, order=3)
    assert abs(T_energy(ctx, one, g.R_max)) < 1e-25
    assert np.max(np.abs(ctx.Psi0(one).levels[0])) < 1e-12
    assert np.max(np.abs(ctx.rL(one).levels[0])) < 1e-12


def test_energies_are_quadratic(short_run):
    slc = derive_slice(short_run, 8.0, t_order=4)
    spec = EnergySpec(rl_order=1, t_order=1)
    base = energies(slc, 60.0, spec).values
    slc.phi = {m: Tower(tuple(-2.5 * x for x in f.levels), f.parity, f.half, f.m) for m, f in slc.phi.items()}
    scaled = energies(slc, 60.0, spec).values
    for k, v in base.items():
        assert scaled[k] == pytest.approx(6.25 * v, rel=1e-12)


def test_modes_decouple(short_run):
    slc = derive_slice(short_run, 8.0, t_order=3)
    spec = EnergySpec(rl_order=1, t_order=0)
    both = energies(slc, 60.0, spec).values
    phi = dict(slc.phi)
    slc.phi = {0: phi[0]}
    only0 = energies(slc, 60.0, spec).values
    slc.phi = {2: phi[2]}
    only2 = energies(slc, 60.0, spec).values
    assert both["E"] == pytest.approx(only0["E"] + only2["E"], rel=1e-13)
    assert both["E1"] == pytest.approx(only0["E1"] + only2["E1"], rel=1e-13)
    assert "Etil_m1" in both and "Etil_m1" not in only0


def test_column_names(short_run):
    slc = derive_slice(short_run, 8.0, t_order=MAX_T_ORDER)
    names = set(energies(slc, 60.0).values)
    for base in ("E", "E1", "E2", "Erp1", "Erp1d", "EtilPsi0", "Etil0Psi0", "Etil1Psi0", "Etil1.1Psi0",
                 "Etil_m1", "Etil0_m1"):
        assert base in names and base + "_T1" in names and base + "_T2" in names


def test_energy_series(short_run):
    s = energy_series(short_run, 60.0, EnergySpec(rl_order=0, t_order=1), taus=[4.0, 6.0, 8.0])
    assert s.taus.tolist() == [4.0, 6.0, 8.0]
    assert np.all(s.column("E") > 0)
    with pytest.raises(ValueError):
        s.append(s.samples[0])
    assert EnergySeries().names == []


def test_caps():
    with pytest.raises(ValueError):
        EnergySpec(rl_order=3)
    with pytest.raises(ValueError):
        EnergySpec(t_order=3)


def test_energy_cut_beyond_grid(short_run):
    slc = derive_slice(short_run, 4.0)
    with pytest.raises(ValueError, match="beyond the grid"):
        energies(slc, 1e4, EnergySpec(rl_order=0, t_order=0))


def test_psi0_axis_behaviour(short_run):
    slc = derive_slice(short_run, 6.0)
    ctx = slc.ctx
    r = ctx.r
    P = np.abs(ctx.value(slc.Psi0))
    inner = r < 10 * r[0]
    slope = np.polyfit(np.log(r[inner]), np.log(P[inner]), 1)[0]
    assert slope == pytest.approx(1.5, abs=0.1)


def test_psi0_two_paths(short_run):
    slc = derive_slice(short_run, 6.0)
    ctx, f = slc.ctx, slc.phi[0]
    direct = ctx.value(slc.Psi0)
    via = ctx.sqr * (ctx.L(f) - ctx.value(f, 1))
    assert np.max(np.abs(direct - via)) < 1e-12 * np.max(np.abs(direct))


def test_frame_relations_on_slice(short_run):
    slc = derive_slice(short_run, 6.0)
    ctx, f = slc.ctx, slc.phi[0]
    T = ctx.value(f, 1)
    assert np.allclose(ctx.L(f) + ctx.Lbar(f), 2.0 * T, rtol=0, atol=1e-13)


def test_mink_tower_derivatives(pert, pert_fol):
    r = np.array([0.5, 3.0, 40.0])
    tower = _mink_tower(pert, pert_fol, 10.0, r, MAX_T_ORDER)
    e = 1e-2
    for k in range(MAX_T_ORDER):
        lo = _mink_tower(pert, pert_fol, 10.0 - e, r, MAX_T_ORDER)[k]
        hi = _mink_tower(pert, pert_fol, 10.0 + e, r, MAX_T_ORDER)[k]
        lo2 = _mink_tower(pert, pert_fol, 10.0 - 2 * e, r, MAX_T_ORDER)[k]
        hi2 = _mink_tower(pert, pert_fol, 10.0 + 2 * e, r, MAX_T_ORDER)[k]
        d = (lo2 - 8 * lo + 8 * hi - hi2) / (12 * e) / 2.0  # T = d_tau / 2 at fixed r
        assert np.allclose(d, tower[k + 1], rtol=1e-7)
    with pytest.raises(ValueError):
        _mink_tower(pert, pert_fol, 10.0, r, MAX_T_ORDER + 1)


def test_rl_of_mink_is_bounded(mink, mink_fol):
    g = make_grid(200.0, 1024, "cfl-balanced", mink_fol)
    ctx = SliceContext(g, mink, mink_fol)
    for tau in (0.0, 10.0, 100.0):
        tower = Tower(tuple(_mink_tower(mink, mink_fol, tau, g.r, 2)), EVEN)
        rl = ctx.value(ctx.rL(tower))
        assert np.max(np.abs(rl) / tower.levels[0]) < 1.0


def test_modified_energy_against_dense_quadrature(mink, mink_fol):
    # Phi = r^{3/2} e^{-r^2}, static, on Minkowski: (L Phi)^2 + h (Lbar Phi)^2 + Phi^2 / r^2
    g = make_grid(10.0, 4096)
    ctx = SliceContext(g, mink, mink_fol)
    Phi = static_tower(g.r * np.exp(-g.r**2), ODD, half=True)
    got = modified_T_energy(ctx, Phi, g.R_max)

    def dens(r):
        dP = (1.5 * r**0.5 - 2.0 * r**2.5) * np.exp(-r * r)
        return (1.0 + mink_fol.h(r)) * dP**2 + r * np.exp(-2 * r * r)

    oracle = 2 * np.pi * adaptive_quad(dens, 0.0, 10.0, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
    assert got == pytest.approx(oracle, abs=1e-8)


def test_inhom_norm_basics(pert, pert_fol):
    assert inhom_norm(pert, pert_fol, SourceSpec(), 1.0, 0, 0.0, np.inf, 100.0) == 0.0
    one = inhom_norm(pert, pert_fol, SourceSpec("mink-tinv1", amplitude=1.0), 1.0, 1, 5.0, 50.0, 200.0)
    two = inhom_norm(pert, pert_fol, SourceSpec("mink-tinv1", amplitude=2.0), 1.0, 1, 5.0, 50.0, 200.0)
    assert one > 0 and two == pytest.approx(4.0 * one, rel=1e-12)
    with pytest.raises(ValueError):
        inhom_norm(pert, pert_fol, SourceSpec(), 1.0, 2, 0.0, 1.0, 10.0)


def test_inhom_norm_decay(pert, pert_fol):
    # tau^-3 log tau asymptotically; local slopes approach -3 from above
    src = SourceSpec("mink-tinv1", amplitude=1.0)
    taus = np.array([100.0, 200.0, 400.0, 800.0])
    vals = np.array([inhom_norm(pert, pert_fol, src, 1.0, 0, t, np.inf, 1e5) for t in taus])
    slopes = np.diff(np.log(vals)) / np.log(2.0)
    assert np.all(np.diff(slopes) < 0)
    assert slopes[-1] < -2.65


def test_data_norm(mink, mink_fol):
    g = make_grid(60.0, 512, "cfl-balanced", mink_fol)
    zero = InitialData({0: (lambda r: 0 * r, lambda r: 0 * r)}, 0.0, "zero")
    assert data_norm(zero, g, mink, mink_fol) == 0.0
    d = data_presets("gaussian-even")
    base = data_norm(d, g, mink, mink_fol, N=1)
    assert data_norm(d.scaled(3.0), g, mink, mink_fol, N=1) == pytest.approx(9.0 * base, rel=1e-10)
    fine = data_norm(d, make_grid(60.0, 1024, "cfl-balanced", mink_fol), mink, mink_fol, N=1)
    assert fine == pytest.approx(base, rel=1e-3)
    with pytest.raises(ValueError):
        data_norm(d, g, mink, mink_fol, N=3)
