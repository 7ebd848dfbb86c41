import numpy as np
import pytest
from hypothesis import given, strategies as st

from sclc.errors import (AngleOutOfRange, DimensionMismatch, EmptyFamily, NotSectorial,
                         PerturbationTooLarge, SpectrumInSector)
from sclc.linop import LinOp, op_norm
from sclc.sector import (GridSpec, Sector, estimate_r_bound, estimate_sectorial, max_sector_angle,
                         neumann_perturb, r_sectorial_probe, resolvent_norms, shift_bound_check,
                         shift_scalar_sup)


def test_identity_certificate_closed_form():
    cert = estimate_sectorial(LinOp.identity(2), np.pi / 2)
    # (1+t)/sqrt(1+t^2) is maximal at t = 1
    assert cert.kappa_raw == pytest.approx(np.sqrt(2), abs=1e-12)
    assert abs(cert.sup_location) == pytest.approx(1.0)
    assert cert.kappa_safe >= cert.kappa_raw
    js = cert.to_json()
    assert set(js) == {"theta", "kappa_raw", "kappa_safe", "grid", "sup_location"}
    assert {"lambda_re", "lambda_im", "value"} == set(js["grid"][0])


def test_positive_ray_certificate():
    assert estimate_sectorial(LinOp.diag([1, 2]), 0.0).kappa_raw == pytest.approx(1.0, abs=1e-12)


def test_spectrum_on_sector_boundary():
    with pytest.raises(SpectrumInSector):
        estimate_sectorial(LinOp([[0, 1], [-1, 0]]), np.pi / 2)


def test_sector_angle_validation():
    with pytest.raises(AngleOutOfRange):
        Sector(np.pi)
    assert Sector(0.5).contains(np.exp(0.4j))


def test_batched_norms_match_direct(g):
    a = g.standard_normal((4, 4)) + 5 * np.eye(4)
    lams = np.array([1.0, 2j, 3 - 1j])
    direct = [np.linalg.norm(np.linalg.inv(a + l * np.eye(4)), 2) for l in lams]
    np.testing.assert_allclose(resolvent_norms(a, lams), direct, rtol=1e-12)


@given(d=st.lists(st.floats(0.1, 100), min_size=1, max_size=5),
       t1=st.floats(0.0, 2.5), t2=st.floats(0.0, 2.5))
def test_kappa_monotone_in_angle_for_positive_diagonals(d, t1, t2):
    lo, hi = sorted((t1, t2))
    A = LinOp.diag(d)
    assert estimate_sectorial(A, lo).kappa_raw <= estimate_sectorial(A, hi).kappa_raw * (1 + 1e-12)


def test_max_sector_angle():
    th = max_sector_angle(LinOp.diag([1, 3]), 10.0)
    assert estimate_sectorial(LinOp.diag([1, 3]), th).kappa_raw <= 10.0
    # the identity bound (1+t)/|1+t e^{i th}| stays below 25 until close to pi
    assert max_sector_angle(LinOp.identity(2), 25.0) >= 3.04
    # spectrum on the imaginary axis: fine at 0, refused at pi/2
    th = max_sector_angle(LinOp([[0, 1], [-1, 0]]), 10.0)
    assert 0 < th < np.pi / 2


def test_max_sector_angle_requires_angle_zero():
    with pytest.raises(NotSectorial):
        max_sector_angle(LinOp.diag([-1.0, 2.0]), 10.0)


def test_r_bound_examples():
    e1, e2 = np.eye(2)
    assert estimate_r_bound([LinOp(2 * np.eye(2))], [e1]).value == pytest.approx(2)
    assert estimate_r_bound([LinOp.identity(2)] * 2, [e1, e1]).value == pytest.approx(1)
    fam = [LinOp.diag([1, 0]), LinOp.diag([0, 1])]
    assert estimate_r_bound(fam, [e1, e2]).value == pytest.approx(1)
    with pytest.raises(EmptyFamily):
        estimate_r_bound([], [])
    with pytest.raises(DimensionMismatch):
        estimate_r_bound([LinOp.identity(2), LinOp.identity(3)], [e1, e1])


@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 5))
def test_r_bound_singleton_equals_ratio(seed, n):
    g = np.random.default_rng(seed)
    T = g.standard_normal((n, n)) + 1j * g.standard_normal((n, n))
    x = g.standard_normal(n) + 1j * g.standard_normal(n)
    est = estimate_r_bound([LinOp(T)], [x]).value
    assert est == pytest.approx(np.linalg.norm(T @ x) / np.linalg.norm(x), rel=1e-12)


@given(seed=st.integers(0, 2**32 - 1), k=st.integers(2, 9), trials=st.integers(1, 64))
def test_sampled_r_bound_never_exceeds_exhaustive(seed, k, trials):
    g = np.random.default_rng(seed)
    fam = [LinOp(g.standard_normal((3, 3))) for _ in range(k)]
    x = g.standard_normal((k, 3))
    ex = estimate_r_bound(fam, x, "exhaustive").value
    sa = estimate_r_bound(fam, x, "sampled", trials=trials, seed=seed).value
    assert sa <= ex * (1 + 1e-12)


def test_r_probe_examples():
    assert r_sectorial_probe(LinOp.identity(2), 0.0, seed=1).value <= 1 + 1e-12
    cert = estimate_sectorial(LinOp.diag([1, 4]), np.pi / 2)
    v = r_sectorial_probe(LinOp.diag([1, 4]), np.pi / 2, n_lambdas=8, seed=3).value
    assert np.isfinite(v) and v <= cert.kappa_safe
    assert r_sectorial_probe(LinOp.identity(2), np.pi / 2, lambdas=[1j, 2j]).value <= np.sqrt(2)


def test_r_probe_dominates_member_norms():
    A = LinOp([[1, 3], [0, 2]])
    lams = np.array([0.5, 1j, 4 - 2j])
    v = r_sectorial_probe(A, np.pi / 2, lambdas=lams).value
    norms = [op_norm(l * np.linalg.inv(A.entries + l * np.eye(2))) for l in lams]
    assert v >= max(norms) * (1 - 1e-12)


def test_shift_bound_examples():
    rep = shift_bound_check(LinOp.identity(2), np.pi / 2 - 1e-9, 0.0, 0.0, seed=1)
    assert rep.passed
    rep = shift_bound_check(LinOp.diag([1, 2]), np.pi / 3, 5.0, 0.0, seed=2)
    assert rep.passed and rep.rhs == pytest.approx(rep.c_A / np.sin(np.pi / 3))
    assert shift_scalar_sup(np.pi / 2, 1.0) <= 1.0
    with pytest.raises(AngleOutOfRange):
        shift_bound_check(LinOp.identity(2), 1.0, 1j, 0.1)
    with pytest.raises(AngleOutOfRange):
        shift_bound_check(LinOp.identity(2), 1.0, 1.0, 1.5)


@given(seed=st.integers(0, 2**32 - 1))
def test_shift_bound_random_diagonals(seed):
    g = np.random.default_rng(seed)
    A = LinOp.diag(g.uniform(0.1, 10, 3))
    theta = g.uniform(0.2, 1.4)
    omega = g.uniform(0, 0.95 * min(theta, np.pi - theta))
    c = g.uniform(0, 10) * np.exp(1j * g.uniform(-omega, omega))
    assert shift_bound_check(A, theta, c, omega, seed=seed).passed


def test_neumann_examples():
    rep = neumann_perturb(LinOp.identity(2), LinOp(np.zeros((2, 2))), np.pi / 2, lambdas=[1.0])
    assert rep.table[0].terms == 1 and rep.table[0].error == 0
    rep = neumann_perturb(LinOp.diag([1, 2]), LinOp.diag([0.1, 0]), np.pi / 2, lambdas=[1.0])
    np.testing.assert_allclose(rep.table[0].resolvent, np.diag([1 / 2.1, 1 / 3]), atol=1e-10)
    with pytest.raises(PerturbationTooLarge):
        neumann_perturb(LinOp.identity(2), LinOp(0.9 * np.eye(2)), np.pi / 2, seed=1)


def test_grid_refinement_doubles_density():
    gs = GridSpec()
    r = gs.refined()
    assert r.per_decade == 2 * gs.per_decade and r.rays_per_half == 2 * gs.rays_per_half - 1
    assert gs.points(0.5)[0] == 0
