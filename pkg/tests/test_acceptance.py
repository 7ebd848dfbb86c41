"""Acceptance criteria, one test per criterion.

Each test prints a single ``ACCEPTANCE <n> PASS|FAIL`` line with the measured
values, then asserts.  Run alone with ``pytest tests/test_acceptance.py -v -s``
or as a script: ``python3 tests/test_acceptance.py``.
"""

import json
import time

import numpy as np
import pytest

from sclc.cli import main as cli_main
from sclc.contour import FUNCTION_BANK, complex_power, dunford, power_decay_probe, power_semigroup_residual
from sclc.linop import LinOp, op_norm
from sclc.parabolic import oracle_direct, solve_nonautonomous
from sclc.scenarios import (KW_NS, PARABOLIC_FAMILIES, S_VALUES, _problem, kw_experiment, matrix_bank,
                            random_diagonalizable)
from sclc.sector import GridSpec, neumann_perturb, r_sectorial_probe, sample_sector
from sclc.sums import (commuting_pair, dpg_bundle, eps_pair, find_shift, random_sectorial_pair,
                       sum_inverse, sum_sectoriality)
from sclc.util import DEFAULT_SEED

SEED = DEFAULT_SEED
_LINES = []


def record(num, title, passed, detail, capsys=None):
    line = f"ACCEPTANCE {num:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
    _LINES.append(line)
    if capsys is not None:
        with capsys.disabled():
            print("\n" + line)
    else:
        print(line)
    assert passed, line


def test_01_commuting_collapse(capsys):
    t0 = time.perf_counter()
    si = sum_inverse(commuting_pair(), 0.0)
    err = op_norm(si.inv.entries - np.diag([1 / 4, 1 / 7]))
    dt = time.perf_counter() - t0
    b = si.bundle
    ok = b.norm_P <= 1e-8 and b.norm_T <= 1e-8 and err <= 1e-8 and dt < 5
    record(1, "commuting collapse", ok,
           f"|P0|={b.norm_P:.2e} |T0|={b.norm_T:.2e} inverse err={err:.2e} (<=1e-8), {dt:.2f}s (<5s)", capsys)


def test_02_perturbation_decay(capsys):
    t0 = time.perf_counter()
    pair = eps_pair(0.1)
    cs = [10.0, 1e2, 1e3, 1e4]
    nt = [dpg_bundle(pair, c).norm_T for c in cs]
    dt = time.perf_counter() - t0
    ratio = nt[-1] / nt[0]
    ok = all(np.diff(nt) <= 0) and ratio <= 1e-2 and dt < 60
    record(2, "perturbation decay", ok,
           f"|T_c| = {', '.join(f'{v:.2e}' for v in nt)}; ratio={ratio:.2e} (<=1e-2), {dt:.2f}s (<60s)", capsys)


@pytest.mark.parametrize("label", ["eps-pair", "random-pair"])
def test_03_inverse_residuals(capsys, label):
    t0 = time.perf_counter()
    pair = eps_pair(0.1) if label == "eps-pair" else random_sectorial_pair(6, SEED)
    c0 = find_shift(pair, 0.5).c0
    si = sum_inverse(pair, c0)
    dense = np.linalg.inv(pair.shifted(c0).entries)
    rel = op_norm(si.inv.entries - dense) / op_norm(dense)
    dt = time.perf_counter() - t0
    ok = si.residual_left <= 1e-6 and si.residual_right <= 1e-6 and rel <= 1e-6 and dt < 30
    record(3, f"inverse residuals ({label})", ok,
           f"c0={c0:g} left={si.residual_left:.2e} right={si.residual_right:.2e} "
           f"dense rel={rel:.2e} (<=1e-6), {dt:.2f}s (<30s)", capsys)


@pytest.mark.parametrize("label", ["eps-pair", "random-pair"])
def test_04_sum_sectoriality(capsys, label):
    pair = eps_pair(0.1) if label == "eps-pair" else random_sectorial_pair(6, SEED)
    c0 = find_shift(pair, 0.5).c0
    k1 = sum_sectoriality(pair, c0, 0.0, GridSpec()).kappa_safe
    k2 = sum_sectoriality(pair, c0, 0.0, GridSpec().refined()).kappa_safe
    change = abs(k2 - k1) / k1
    ok = np.isfinite(k1) and change < 0.05
    record(4, f"sum sectoriality ({label})", ok, f"kappa={k1:.6g} -> {k2:.6g}, change={change:.2e} (<5%)", capsys)


def test_05_power_calculus(capsys):
    worst, worst_inv = 0.0, 0.0
    for A in matrix_bank(SEED).values():
        for s1 in S_VALUES:
            for s2 in S_VALUES:
                worst = max(worst, power_semigroup_residual(A, -s1, -s2))
        worst_inv = max(worst_inv, op_norm(complex_power(A, -1).entries - np.linalg.inv(A.entries)))
    ok = worst <= 1e-6 and worst_inv <= 1e-8
    record(5, "power calculus", ok, f"max semigroup residual={worst:.2e} (<=1e-6), "
                                    f"max |A^-1 - inv|={worst_inv:.2e} (<=1e-8)", capsys)


def test_06_dunford_vs_residue(capsys):
    t0 = time.perf_counter()
    g = np.random.default_rng(SEED)
    worst, max_cond = 0.0, 0.0
    for _ in range(20):
        A, V, d = random_diagonalizable(g)
        cv = np.linalg.cond(V)
        max_cond = max(max_cond, cv)
        Vi = np.linalg.inv(V)
        for f in FUNCTION_BANK.values():
            ref = V @ np.diag(f(-d)) @ Vi
            err = op_norm(dunford(f, A).entries - ref) / op_norm(ref)
            worst = max(worst, err / cv)
    dt = time.perf_counter() - t0
    ok = worst <= 1e-6 and max_cond <= 100 and dt < 60
    record(6, "Dunford vs residue oracle", ok,
           f"max rel err / cond(V)={worst:.2e} (<=1e-6), max cond(V)={max_cond:.1f}, {dt:.2f}s (<60s)", capsys)


def test_07_resolvent_power_decay(capsys):
    details, ok = [], True
    for name, A in matrix_bank(SEED).items():
        for rho, eta in ((0.3, 0.6), (0.5, 0.4)):
            pr = power_decay_probe(A, rho, 0.0, eta)
            ok &= pr.fitted_slope <= -eta + 0.05
            details.append(f"{name}({rho},{eta}):{pr.fitted_slope:.3f}")
    record(7, "resolvent-power decay slopes", ok, "; ".join(details) + " (each <= -eta+0.05)", capsys)


def test_08_kw_unconditionality(capsys):
    details, ok = [], True
    for name, A in matrix_bank(SEED).items():
        _, _, maxima, slope, ratio = kw_experiment(A, SEED)
        ok &= abs(slope) < 0.05 and ratio <= 3.0
        details.append(f"{name}: slope={slope:.4f} max/n5={ratio:.3f}")
    record(8, "dyadic sum boundedness", ok, "; ".join(details) + f" over n={KW_NS} (|s|<0.05, <=3x)", capsys)


def test_09_neumann_perturbation(capsys):
    g = np.random.default_rng(SEED)
    worst = 0.0
    for k in range(20):
        n = int(g.integers(2, 6))
        q, _ = np.linalg.qr(g.standard_normal((n, n)))
        A = LinOp(q @ np.diag(g.uniform(1, 5, n)) @ q.T)
        theta = float(g.uniform(0.3, np.pi / 2))
        Braw = g.standard_normal((n, n)) + 1j * g.standard_normal((n, n))
        c_a = r_sectorial_probe(A, theta, seed=SEED + k).value
        B = LinOp(Braw * (0.5 / (1 + c_a)) / op_norm(Braw @ np.linalg.inv(A.entries)))
        lam = sample_sector(theta, 1, seed=SEED + 1000 + k)
        row = neumann_perturb(A, B, theta, lambdas=lam, seed=SEED + k).table[0]
        direct = np.linalg.inv(A.entries + B.entries + lam[0] * np.eye(n))
        worst = max(worst, op_norm(row.resolvent - direct))
    record(9, "Neumann perturbation", worst <= 1e-8, f"max |series - direct|={worst:.2e} over 20 triples (<=1e-8)",
           capsys)


def test_10_parabolic_closed_form(capsys):
    t0 = time.perf_counter()
    errs = {}
    for m in (128, 256):
        sol = solve_nonautonomous(_problem("scalar-constant", m))
        errs[m] = float(np.max(np.abs(sol.u[:, 0] - (1 - np.exp(-sol.t)))))
        uT = sol.u[-1, 0].real
    dt = time.perf_counter() - t0
    ratio = errs[128] / errs[256]
    end_err = abs(uT - (1 - np.exp(-1)))
    ok = end_err <= 5e-3 and 1.6 <= ratio <= 2.4 and dt < 10
    record(10, "parabolic closed form", ok,
           f"u(1)={uT:.6f} err={end_err:.2e} (<=5e-3), error ratio m=128/256={ratio:.3f} (2 +-20%), "
           f"{dt:.2f}s (<10s)", capsys)


@pytest.mark.parametrize("name", ["scalar-affine-two-patch", "trig-2x2"])
def test_11_oracle_equivalence(capsys, name):
    prob = _problem(name, 128)
    sol = solve_nonautonomous(prob)
    o = oracle_direct(prob)
    gap = np.linalg.norm(sol.u - o) / np.linalg.norm(o)
    ok = gap <= 1e-8 and sol.right_inverse_residual <= 1e-8
    record(11, f"oracle equivalence ({name})", ok,
           f"patches={sol.patches_used} c={sol.c_used:g} gap={gap:.2e} right-inverse residual="
           f"{sol.right_inverse_residual:.2e} (both <=1e-8)", capsys)


def test_12_mr_stability(capsys):
    details, ok = [], True
    for name in PARABOLIC_FAMILIES:
        mr = [solve_nonautonomous(_problem(name, m)).mr_constant for m in (64, 128, 256)]
        var = (max(mr) - min(mr)) / min(mr)
        ok &= var < 0.1
        details.append(f"{name}: {var:.2e}")
    record(12, "maximal-regularity stability", ok, "; ".join(details) + " (variation <10%)", capsys)


def test_13_determinism(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("SCLC_SEED", "4242")
    same = True
    for scen in ("dunford-residue", "kw-unconditional", "neumann-perturbation"):
        texts = []
        for run in ("a", "b"):
            out = tmp_path / f"{scen}-{run}"
            cli_main(["run", scen, "--out", str(out)])
            lines = (out / "report.json").read_text().splitlines()
            texts.append("\n".join(l for l in lines if '"timestamp"' not in l))
        same &= texts[0] == texts[1]
        json.loads((tmp_path / f"{scen}-a" / "report.json").read_text())
    record(13, "determinism", same, "report.json byte-identical after timestamp removal for 3 seeded scenarios", capsys)


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q", "-s"]))
