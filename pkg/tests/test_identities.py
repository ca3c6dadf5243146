import numpy as np
import pytest

from tails2d.identities import (ENTRIES, Calculus, _identity_d, _identity_h, _run_pair, check_identities,
                                named_weights, random_field, sample_points, weight_operator)


@pytest.fixture(scope="module")
def reports(mink, pert, mink_fol, pert_fol):
    return {"minkowski": check_identities(mink, mink_fol), "perturbed": check_identities(pert, pert_fol)}


@pytest.mark.parametrize("name", ["minkowski", "perturbed"])
def test_all_entries_pass(reports, name):
    rep = reports[name]
    assert [r.key for r in rep.results] == list(ENTRIES)
    for res in rep.results:
        assert res.passed, (res.key, res.mismatches, res.ratios)
    assert rep.passed


def test_report_access(reports):
    rep = reports["perturbed"]
    assert rep["g"].key == "g"
    d = rep.as_dict()
    assert d["passed"] is True and len(d["entries"]) == len(ENTRIES)
    with pytest.raises(KeyError):
        rep["z"]


def test_subset_and_validation(mink, mink_fol):
    rep = check_identities(mink, mink_fol, suite=("a", "g"))
    assert [r.key for r in rep.results] == ["a", "g"]
    with pytest.raises(ValueError):
        check_identities(mink, mink_fol, suite=("q",))
    with pytest.raises(ValueError):
        check_identities(mink, mink_fol, steps=(0.01,))


def test_seeded_fields_are_reproducible():
    a = random_field(np.random.default_rng(5))
    b = random_field(np.random.default_rng(5))
    assert a(1.0, 2.0) == b(1.0, 2.0)
    t1, r1 = sample_points(np.random.default_rng(5))
    t2, r2 = sample_points(np.random.default_rng(5))
    assert np.array_equal(t1, t2) and np.array_equal(r1, r2)


def _pair(builder, bg, fol, m=0):
    rng = np.random.default_rng(0)
    fields = [random_field(rng) for _ in range(2)]
    return _run_pair(builder, bg, fol, fields, sample_points(rng), (0.02, 0.01, 0.005), m)


def test_F_identity_sign(pert, pert_fol):
    good, scale = _pair(lambda C, p: _identity_d(C, p, sign=-1.0), pert, pert_fol, 2)
    bad, _ = _pair(lambda C, p: _identity_d(C, p, sign=1.0), pert, pert_fol, 2)
    assert good[-1] < 1e-6 * scale
    # the opposite sign leaves a mismatch that does not shrink with the step
    assert bad[-1] > 0.01 * scale and bad[0] / bad[-1] < 1.5


def test_modified_T_identity_needs_G(pert, pert_fol):
    f = lambda r: (1.0 + r) ** -0.5
    f1 = lambda r: 0.1 / (1.0 + r * r)
    good, scale = _pair(lambda C, p: _identity_h(C, p, f, f1=f1), pert, pert_fol)
    bad, _ = _pair(lambda C, p: _identity_h(C, p, f, f1=f1, without_G=True), pert, pert_fol)
    assert good[-1] < 1e-6 * scale
    assert bad[-1] > 1e-5 and bad[0] / bad[-1] < 1.5
    # on flat space G = 1 and both forms agree
    from tails2d.background import make_background
    from tails2d.foliation import make_foliation
    mink = make_background("minkowski")
    fol = make_foliation(mink)
    flat, _ = _pair(lambda C, p: _identity_h(C, p, f, f1=f1, without_G=True), mink, fol)
    assert flat[-1] < 1e-6


def test_coefficient_facts():
    w = {x.name: x for x in named_weights(1.5)}
    assert len(w) == 3
    vals = [x.exact(np.array(x.points, dtype=float))[0] for x in w.values()]
    assert 0.0 in vals and 1.0 in vals
    assert any(abs(v + 0.25 * 2**-0.5) < 1e-15 for v in vals)
    for x in w.values():
        r = np.array(x.points, dtype=float)
        assert np.allclose(weight_operator(x.g, 1e-3)(r), x.exact(r), atol=1e-9)


def test_box_forms_agree(pert, pert_fol):
    phi = random_field(np.random.default_rng(2))
    tau, r = sample_points(np.random.default_rng(3))
    C = Calculus(pert, pert_fol, 0.005, 2)
    a = C.box_divergence(phi)(tau, r)
    b = C.box_tau_r(phi)(tau, r)
    c = C.box_double_null(phi)(tau, r)
    assert np.max(np.abs(a - b)) < 1e-7 * np.max(np.abs(a))
    assert np.max(np.abs(a - c)) < 1e-7 * np.max(np.abs(a))
