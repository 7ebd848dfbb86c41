import numpy as np
import pytest
from hypothesis import given, strategies as st

from sclc.contour import (FUNCTION_BANK, QuadSettings, build_contour, complex_power, dunford,
                          gauss_legendre, kw_sum_norm, power_decay_probe, power_semigroup_residual,
                          residue_oracle, rule_from_settings)
from sclc.errors import AngleConflict, BadGeometry, BranchConflict, NotInvertible
from sclc.linop import LinOp, op_norm


def test_gauss_legendre_exact_for_polynomials():
    x, w = gauss_legendre(0.0, 2.0, 7)
    assert np.sum(w * x ** 13) == pytest.approx(2 ** 14 / 14, rel=1e-13)


def test_arc_only_rule():
    theta = np.pi / 2
    rule = build_contour(1.0, theta, r_trunc=1.0)
    assert set(rule.segment) == {"arc"}
    # clockwise arc from theta to 2 pi - theta
    assert rule.integrate(1 / rule.points) == pytest.approx(-1j * (2 * np.pi - 2 * theta), abs=1e-13)


def test_open_path_with_closing_arc_encloses_pole():
    theta, R = 3 * np.pi / 4, 1e4
    rule = build_contour(0.5, theta, r_trunc=R, nodes_per_decade=40)
    open_part = rule.integrate(1 / (rule.points - 1))
    # the outer arc |lam| = R from theta through 0 to -theta closes the path
    ph, wp = gauss_legendre(-theta, theta, 400)
    z = R * np.exp(1j * ph)
    closing = np.sum(wp * 1j * z / (z - 1))
    assert abs(open_part - closing - (-2j * np.pi)) < 1e-8


def test_two_ray_rule_without_arc():
    rule = build_contour(0.0, 1.0, r_trunc=1e3, r_min=1e-3)
    assert "arc" not in set(rule.segment)


@pytest.mark.parametrize("kw", [dict(rho=1.0, theta=1.0, r_trunc=5.0), dict(rho=1.0, theta=1.0, r_trunc=0.5),
                                dict(rho=1.0, theta=0.0, r_trunc=100.0), dict(rho=-1.0, theta=1.0, r_trunc=100.0)])
def test_bad_geometry(kw):
    with pytest.raises(BadGeometry):
        build_contour(**kw)


def test_rule_json_reintegrates():
    rule = rule_from_settings(0.5, 2.0, 1.0, tail_decay=1.0)
    js = rule.to_json()
    nd = js["nodes"]
    pts = np.array(nd["point_re"]) + 1j * np.array(nd["point_im"])
    wts = np.array(nd["weight_re"]) + 1j * np.array(nd["weight_im"])
    f = lambda z: 1 / ((z - 1) * (z - 2))
    assert np.sum(wts * f(pts)) == pytest.approx(rule.integrate(f(rule.points)), abs=1e-15)


def test_bank_functions_respect_their_envelopes():
    for f in FUNCTION_BANK.values():
        assert f.decay_ratio(seed=0) <= 1.0


def test_dunford_examples():
    f = FUNCTION_BANK["sqrt_resolvent"]
    np.testing.assert_allclose(dunford(f, LinOp.identity(2)).entries, 0.5 * np.eye(2), atol=1e-7)
    for f in FUNCTION_BANK.values():
        np.testing.assert_allclose(dunford(f, LinOp.diag([1, 4])).entries,
                                   np.diag(f(-np.array([1, 4]))), atol=1e-10)
    h = FUNCTION_BANK["lambda_resolvent_sq"]
    assert dunford(h, LinOp.diag([2])).entries[0, 0] == pytest.approx(2 / 9, abs=1e-10)


def test_dunford_rejects_narrow_contour():
    f = FUNCTION_BANK["sqrt_resolvent"]
    rule = build_contour(0.5, f.phi / 2, r_trunc=100.0)
    with pytest.raises(AngleConflict):
        dunford(f, LinOp.identity(1), rule=rule)


@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 5), key=st.sampled_from(sorted(FUNCTION_BANK)))
def test_diagonalization_equivariance(seed, n, key):
    g = np.random.default_rng(seed)
    d = g.uniform(0.3, 8.0, n) * np.exp(1j * g.uniform(-1.0, 1.0, n))
    V = np.eye(n) + 0.3 * g.standard_normal((n, n))
    Vi = np.linalg.inv(V)
    f = FUNCTION_BANK[key]
    lhs = dunford(f, LinOp(V @ np.diag(d) @ Vi)).entries
    rhs = V @ dunford(f, LinOp.diag(d)).entries @ Vi
    assert op_norm(lhs - rhs) <= 1e-8 * np.linalg.cond(V) * max(1.0, op_norm(rhs))


def test_quadrature_converges_under_refinement():
    A = LinOp([[2, 1], [0, 3]])
    f = FUNCTION_BANK["three_quarter"]
    ref = residue_oracle(f, A)
    errs = [op_norm(dunford(f, A, quad=QuadSettings(panels=p, arc=a)).entries - ref)
            for p, a in ((1, 8), (2, 16), (4, 64))]
    assert errs[0] > errs[1] > errs[2] or errs[2] < 1e-11
    assert errs[2] < 1e-9


def test_path_independence():
    A = LinOp([[1, 0.5], [0, 2]])
    f = FUNCTION_BANK["lambda_resolvent_sq"]
    r1 = build_contour(0.3, 1.2, r_trunc=1e7, tail_decay=1.0)
    r2 = build_contour(0.8, 2.4, r_trunc=1e7, tail_decay=1.0)
    np.testing.assert_allclose(dunford(f, A, rule=r1).entries, dunford(f, A, rule=r2).entries, atol=1e-9)


def test_complex_power_examples():
    np.testing.assert_allclose(complex_power(LinOp.diag([4]), -0.5).entries, [[0.5]], atol=1e-10)
    np.testing.assert_allclose(complex_power(LinOp([[1, 1], [0, 1]]), -1).entries,
                               [[1, -1], [0, 1]], atol=1e-9)
    ev = np.linalg.eigvals(complex_power(LinOp.diag([1, 10]), 1j).entries)
    np.testing.assert_allclose(np.abs(ev), 1, atol=1e-9)
    assert np.min(np.abs(ev - np.exp(1j * np.log(10)))) < 1e-8
    half = complex_power(LinOp([[2, 1], [0, 3]]), 0.5).entries
    np.testing.assert_allclose(half @ half, [[2, 1], [0, 3]], atol=1e-9)
    assert np.array_equal(complex_power(LinOp.diag([3]), 0).entries, [[1]])


def test_complex_power_errors():
    with pytest.raises(NotInvertible):
        complex_power(LinOp.diag([0, 1]), -0.5)
    with pytest.raises(BranchConflict):
        complex_power(LinOp.diag([1, 2]), -0.5, rule=build_contour(2.0, 2.0, r_trunc=100.0))


def test_semigroup_examples():
    assert power_semigroup_residual(LinOp.diag([4, 9]), -0.5, -0.5) <= 1e-8
    assert power_semigroup_residual(LinOp.diag([2]), -0.3, -0.7) <= 1e-8
    assert power_semigroup_residual(LinOp([[2, 1], [0, 3]]), -0.25, -0.75) <= 1e-6
    with pytest.raises(ValueError):
        power_semigroup_residual(LinOp.diag([2]), 0.3, -0.7)


@given(s1=st.floats(0.05, 0.95), s2=st.floats(0.05, 0.95))
def test_semigroup_property(s1, s2):
    A = LinOp([[1, 0.3], [0, 5]])
    assert power_semigroup_residual(A, -s1, -s2) <= 1e-7


def test_decay_probe():
    pr = power_decay_probe(LinOp.diag([1]), 0.5, 0.0, 0.4)
    assert pr.passed and pr.fitted_slope == pytest.approx(-1, abs=0.05)
    assert power_decay_probe(LinOp.diag([1, 100]), 0.3, 0.0, 0.6, z_grid=np.logspace(0, 4, 81)).passed
    with pytest.raises(ValueError):
        power_decay_probe(LinOp.diag([1]), 0.5, 0.0, 0.5)


def test_kw_sum_examples():
    h = FUNCTION_BANK["lambda_resolvent_sq"]
    assert kw_sum_norm(LinOp.diag([1]), h, 1.0, np.zeros(5)) == pytest.approx(0, abs=1e-14)
    assert kw_sum_norm(LinOp.diag([1]), h, 1.0, [1.0]) == pytest.approx(0.25, abs=1e-10)
    v20 = kw_sum_norm(LinOp.diag([1, 4]), h, 1.0, np.ones(20))
    v30 = kw_sum_norm(LinOp.diag([1, 4]), h, 1.0, np.ones(30))
    direct = max(abs(sum(a * 2.0 ** -k / (1 + a * 2.0 ** -k) ** 2 for k in range(20))) for a in (1, 4))
    assert v20 == pytest.approx(direct, rel=1e-8)
    assert abs(v30 - v20) < 0.05 * v20


def test_quad_settings_parse():
    q = QuadSettings.parse("decades=5,panels=3,arc=32")
    assert (q.decades, q.panels, q.arc, q.order) == (5.0, 3, 32, 7)
    with pytest.raises(ValueError):
        QuadSettings.parse("bogus=1")
