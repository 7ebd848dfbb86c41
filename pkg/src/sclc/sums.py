"""Inversion of A + B + c for non-commuting sectorial pairs.

For a pair with angle sum theta_A + theta_B > pi the contour integrals

    K_c = (1/2 pi i) int (A - z)^{-1} (B_c + z)^{-1} dz      (B_c = B + c)
    L_c = (1/2 pi i) int (B_c + z)^{-1} (A - z)^{-1} dz

invert A + B_c exactly when the resolvents commute.  Otherwise

    (A + B_c) L_c = I + T_c,        A K_c (A + B_c) A^{-1} = I + P_c,

with T_c, P_c integrals of resolvent commutators that shrink as |c| grows.
Commutators are evaluated through the cancellation-free identity
[X^{-1}, Y^{-1}] = Y^{-1} X^{-1} [X, Y] X^{-1} Y^{-1}, where [X, Y] = [A, B].
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .contour import DEFAULT_QUAD, TWO_PI_I, ContourRule, QuadSettings, rule_from_settings
from .errors import (AngleConflict, AngleOutOfRange, GridTooSmall, NoShiftFound,
                     NotCommuting, ShiftTooSmall)
from .linop import LinOp, batched_resolvents, matrix_to_json, op_norm
from .sector import GridSpec, SectorialCertificate, estimate_sectorial, max_sector_angle
from .util import rng

LOW_MARGIN = 0.05
DEFAULT_KAPPA_CAP = 100.0


@dataclass(frozen=True)
class OperatorPair:
    A: LinOp
    B: LinOp
    cert_A: SectorialCertificate
    cert_B: SectorialCertificate

    @property
    def theta_A(self) -> float:
        return self.cert_A.theta

    @property
    def theta_B(self) -> float:
        return self.cert_B.theta

    @property
    def parabolicity(self) -> float:
        return self.theta_A + self.theta_B - np.pi

    @property
    def flags(self) -> list[str]:
        return ["LOW_MARGIN"] if self.parabolicity <= LOW_MARGIN else []

    @property
    def commutator(self) -> NDArray:
        a, b = self.A.entries, self.B.entries
        return a @ b - b @ a

    def shifted(self, c: complex) -> LinOp:
        return self.A + self.B + c


def make_pair(A: LinOp, B: LinOp, theta_A: float | None = None, theta_B: float | None = None,
              kappa_cap: float = DEFAULT_KAPPA_CAP) -> OperatorPair:
    """Certify both operators; missing angles come from max_sector_angle."""
    if theta_A is None:
        theta_A = max_sector_angle(A, kappa_cap)
    if theta_B is None:
        theta_B = max_sector_angle(B, kappa_cap)
    return OperatorPair(A, B, estimate_sectorial(A, theta_A), estimate_sectorial(B, theta_B))


# --------------------------------------------------------------- built-in pairs


def commuting_pair() -> OperatorPair:
    return make_pair(LinOp.diag([1, 2], "A"), LinOp.diag([3, 5], "B"))


def eps_pair(eps: float = 0.1) -> OperatorPair:
    return make_pair(LinOp.diag([1, 2], "A"), LinOp([[3, eps], [0, 5]], "B"))


def random_sectorial_pair(dim: int = 6, seed: int | None = None, skew: float = 0.05) -> OperatorPair:
    """Positive-definite Hermitian matrices plus a small skew-Hermitian part."""
    g = rng(seed)

    def one(label, lo, hi):
        q, _ = np.linalg.qr(g.standard_normal((dim, dim)) + 1j * g.standard_normal((dim, dim)))
        h = q @ np.diag(g.uniform(lo, hi, dim)) @ q.conj().T
        s = g.standard_normal((dim, dim)) + 1j * g.standard_normal((dim, dim))
        s = s - s.conj().T
        return LinOp(h + skew * s / op_norm(s), label)

    return make_pair(one("A", 1.0, 3.0), one("B", 2.0, 6.0))


# --------------------------------------------------------------- commutators


def _comm_from_resolvents(RX: NDArray, RY: NDArray, cxy: NDArray) -> NDArray:
    """[X^{-1}, Y^{-1}] = Y^{-1} X^{-1} [X,Y] X^{-1} Y^{-1} (broadcast over stacks)."""
    return RY @ RX @ cxy @ RX @ RY


def commutator_norm(A: LinOp, B: LinOp, lam: complex, mu: complex, norm_variant: str = "i") -> float:
    """Norm of [(A+lam)^{-1}, (B+mu)^{-1}], composed with A per variant (i)/(ii)/(iii)."""
    from .linop import resolvent_apply

    eye = np.eye(A.dim)
    ra = resolvent_apply(A, lam, eye)
    rb = resolvent_apply(B, mu, eye)
    cab = A.entries @ B.entries - B.entries @ A.entries
    k = _comm_from_resolvents(ra, rb, cab)
    return op_norm(_variant(k, A, norm_variant))


def _variant(k, A: LinOp, v: str):
    if v == "i":
        return k
    if v == "ii":
        return A.entries @ k
    if v == "iii":
        return A.entries @ k @ np.linalg.inv(A.entries)
    raise ValueError(f"unknown commutator variant {v!r}")


@dataclass(frozen=True)
class DecayGrid:
    r_min: float = 1e-1
    r_max: float = 1e3
    per_decade: int = 3
    angle_fracs: tuple = (0.0, 0.5, 1.0)

    def radii(self) -> NDArray:
        nd = np.log10(self.r_max / self.r_min) if self.r_max > self.r_min else 0.0
        return np.logspace(np.log10(self.r_min), np.log10(self.r_max), int(round(nd * self.per_decade)) + 1)

    def points(self, theta: float):
        fr = np.unique(np.concatenate([np.asarray(self.angle_fracs), -np.asarray(self.angle_fracs)]))
        r = self.radii()
        pts = (r[None, :] * np.exp(1j * theta * fr)[:, None]).ravel()
        return pts


VARIANT_RULES = {
    "i": "alpha + beta > 2, alpha > 0, beta > 0",
    "ii": "alpha + beta > 1, beta > 0",
    "iii": "alpha + beta > 2, beta > 0",
}


@dataclass(frozen=True)
class CommutatorDecayFit:
    C: float
    alpha: float | None
    beta: float | None
    variant: str
    residual: float
    inner_residual: float
    passed: bool
    unconstrained: bool
    lambdas: NDArray = field(repr=False)
    mus: NDArray = field(repr=False)
    norms: NDArray = field(repr=False)

    def bound(self) -> NDArray:
        a = self.alpha or 0.0
        b = self.beta or 0.0
        return self.C / ((1 + np.abs(self.lambdas)[:, None] ** a) * (1 + np.abs(self.mus)[None, :] ** b))

    def to_json(self) -> dict:
        return {"variant": self.variant, "C": self.C, "alpha": self.alpha, "beta": self.beta,
                "residual": self.residual, "inner_residual": self.inner_residual,
                "passed": self.passed, "unconstrained": self.unconstrained,
                "condition": VARIANT_RULES[self.variant]}


def _variant_ok(v, a, b) -> bool:
    if v == "i":
        return a + b > 2 and a > 0 and b > 0
    if v == "ii":
        return a + b > 1 and b > 0
    return a + b > 2 and b > 0


def _outer_slope(radii, norms_by_radius) -> float:
    top = radii >= radii.max() / 100 * (1 - 1e-12)
    return float(np.polyfit(np.log(radii[top]), np.log(norms_by_radius[top]), 1)[0])


def fit_decay(A: LinOp, B: LinOp, theta_A: float, theta_B: float,
              grid_spec: DecayGrid | None = None) -> dict[str, CommutatorDecayFit]:
    """Fit N(lam, mu) <= C / ((1+|lam|^alpha)(1+|mu|^beta)) for the three variants."""
    gs = grid_spec or DecayGrid()
    radii = gs.radii()
    outer = radii >= radii.max() / 100 * (1 - 1e-12)
    if len(radii) < 2 or outer.sum() < 2:
        raise GridTooSmall("need at least two radii in the outer two decades")
    estimate_sectorial(A, theta_A)
    estimate_sectorial(B, theta_B)
    lams, mus = gs.points(theta_A), gs.points(theta_B)
    RA = batched_resolvents(A.entries, lams)
    RB = batched_resolvents(B.entries, mus)
    cab = A.entries @ B.entries - B.entries @ A.entries
    # K[i, j] = RB_j RA_i cab RA_i RB_j
    mid = RA @ cab @ RA
    K = RB[None] @ mid[:, None] @ RB[None]
    ainv = np.linalg.inv(A.entries)
    out = {}
    lr, mr = np.abs(lams), np.abs(mus)
    scale = max(1.0, op_norm(A) * op_norm(B))
    for v in ("i", "ii", "iii"):
        if v == "i":
            M = K
        elif v == "ii":
            M = A.entries @ K
        else:
            M = A.entries @ K @ ainv
        N = np.linalg.norm(M, ord=2, axis=(2, 3))
        if N.max() < 1e-13 * scale:
            C = max(float(N.max()), np.finfo(float).tiny)
            out[v] = CommutatorDecayFit(C, None, None, v, 0.0, 0.0, True, True, lams, mus, N)
            continue
        by_l = np.array([N[lr == r].max() for r in radii])
        by_m = np.array([N[:, mr == r].max() for r in radii])
        alpha = max(0.0, -_outer_slope(radii, by_l))
        beta = max(0.0, -_outer_slope(radii, by_m))
        env = (1 + lr[:, None] ** alpha) * (1 + mr[None, :] ** beta)
        C = float(np.max(N * env)) * (1 + 1e-9)
        dev = np.abs(N * env / C - 1)
        inner = (lr[:, None] < radii.max() / 100) | (mr[None, :] < radii.max() / 100)
        out[v] = CommutatorDecayFit(C, alpha, beta, v, float(dev.max()),
                                    float(dev[inner].max()) if inner.any() else 0.0,
                                    _variant_ok(v, alpha, beta), False, lams, mus, N)
    return out


# --------------------------------------------------------------- K, L, P, T


def _check_pair(pair: OperatorPair, c: complex) -> None:
    if pair.parabolicity <= 0:
        raise AngleConflict(f"theta_A + theta_B - pi = {pair.parabolicity:.4g} is not positive")
    lim = np.pi - max(pair.theta_A, pair.theta_B)
    if c != 0 and abs(np.angle(c)) >= lim:
        raise AngleConflict(f"shift c={c} is outside S_omega for omega < {lim:.4g}")


def _rho_scale(pair: OperatorPair, c: complex):
    mA = pair.A.min_abs_eig
    eb = pair.B.spectrum.eigenvalues + c
    rho = 0.25 * min(mA, float(np.min(np.abs(eb))))
    scale = abs(c) + max(float(np.max(np.abs(pair.A.spectrum.eigenvalues))), float(np.max(np.abs(pair.B.spectrum.eigenvalues))))
    return rho, scale


def k_angle(pair: OperatorPair) -> float:
    return 0.5 * ((np.pi - pair.theta_A) + pair.theta_B)


def t_angle(pair: OperatorPair) -> float:
    return 0.5 * ((np.pi - pair.theta_B) + pair.theta_A)


def default_rules(pair: OperatorPair, c: complex, quad: QuadSettings | None = None):
    """(rule for K/L/P, rule for T) with the reference geometry."""
    rho, scale = _rho_scale(pair, c)
    rk = rule_from_settings(rho, k_angle(pair), scale, quad)
    rt = rule_from_settings(rho, t_angle(pair), scale, quad)
    return rk, rt


def _admissible(rule: ContourRule, lo: float, hi: float, what: str) -> None:
    if not lo < rule.theta < hi:
        raise AngleConflict(f"{what} contour angle {rule.theta:.4g} not in ({lo:.4g}, {hi:.4g})")


def _k_side(pair, c, rule, decay):
    _admissible(rule, np.pi - pair.theta_A, pair.theta_B, "K/L/P")
    rule = rule.with_tail_decay(decay) if rule.tail_decay is None else rule
    bc = pair.B.entries + c * np.eye(pair.A.dim)
    RA = batched_resolvents(-pair.A.entries, rule.points) * -1.0   # (A - z)^{-1}
    RB = batched_resolvents(bc, rule.points)                         # (B_c + z)^{-1}
    return rule, RA, RB


def _t_side(pair, c, rule):
    _admissible(rule, np.pi - pair.theta_B, pair.theta_A, "T")
    rule = rule.with_tail_decay(2.0) if rule.tail_decay is None else rule
    bc = pair.B.entries + c * np.eye(pair.A.dim)
    RA = batched_resolvents(pair.A.entries, rule.points)             # (A + z)^{-1}
    RB = batched_resolvents(-bc, rule.points) * -1.0                 # (B_c - z)^{-1}
    return rule, RA, RB


def _integral(rule: ContourRule, stack: NDArray) -> NDArray:
    return rule.integrate(stack) / TWO_PI_I


def _tail_norm(rule: ContourRule, stack: NDArray) -> float:
    m = rule.tail_mask()
    if not m.any():
        return 0.0
    return op_norm(np.tensordot(rule.weights[m], stack[m], axes=(0, 0)) / TWO_PI_I)


def compute_K(pair: OperatorPair, c: complex = 0.0, rule: ContourRule | None = None,
              quad: QuadSettings | None = None) -> LinOp:
    _check_pair(pair, c)
    rule = rule or default_rules(pair, c, quad)[0]
    rule, RA, RB = _k_side(pair, c, rule, 1.0)
    return LinOp(_integral(rule, RA @ RB), "K")


def compute_L(pair: OperatorPair, c: complex = 0.0, rule: ContourRule | None = None,
              quad: QuadSettings | None = None) -> LinOp:
    _check_pair(pair, c)
    rule = rule or default_rules(pair, c, quad)[0]
    rule, RA, RB = _k_side(pair, c, rule, 1.0)
    return LinOp(_integral(rule, RB @ RA), "L")


def _p_integrand(pair, rule, RA, RB):
    a = pair.A.entries
    # X = A - z, Y = B_c + z, so [X, Y] = [A, B]
    comm = _comm_from_resolvents(RA, RB, pair.commutator)
    ainv = np.linalg.inv(a)
    z = rule.points[:, None, None]
    return -z * (a @ comm @ ainv) + a @ comm


def _t_integrand(pair, rule, RA, RB):
    a = pair.A.entries
    comm = _comm_from_resolvents(RA, RB, pair.commutator)
    z = rule.points[:, None, None]
    return -z * comm - a @ comm


def compute_P(pair: OperatorPair, c: complex = 0.0, rule: ContourRule | None = None,
              quad: QuadSettings | None = None) -> LinOp:
    _check_pair(pair, c)
    rule = rule or default_rules(pair, c, quad)[0]
    rule, RA, RB = _k_side(pair, c, rule, 2.0)
    return LinOp(_integral(rule, _p_integrand(pair, rule, RA, RB)), "P")


def compute_T(pair: OperatorPair, c: complex = 0.0, rule: ContourRule | None = None,
              quad: QuadSettings | None = None) -> LinOp:
    _check_pair(pair, c)
    rule = rule or default_rules(pair, c, quad)[1]
    rule, RA, RB = _t_side(pair, c, rule)
    return LinOp(_integral(rule, _t_integrand(pair, rule, RA, RB)), "T")


@dataclass(frozen=True)
class DPGBundle:
    c: complex
    K: LinOp
    L: LinOp
    P: LinOp
    T: LinOp
    norm_P: float
    norm_T: float
    quad_diag: dict
    flags: tuple = ()

    @property
    def quad_error(self) -> float:
        """Measured defect of the two exact identities tying K, L to P, T."""
        return max(self.quad_diag["right_identity_defect"], self.quad_diag["left_identity_defect"])

    def to_json(self) -> dict:
        return {
            "c": {"re": complex(self.c).real, "im": complex(self.c).imag},
            "K": matrix_to_json(self.K), "L": matrix_to_json(self.L),
            "P": matrix_to_json(self.P), "T": matrix_to_json(self.T),
            "norms": {"P": self.norm_P, "T": self.norm_T},
            "quad_diag": self.quad_diag, "flags": list(self.flags),
        }


def dpg_bundle(pair: OperatorPair, c: complex = 0.0, quad: QuadSettings | None = None,
               rules: tuple[ContourRule, ContourRule] | None = None) -> DPGBundle:
    """K, L, P, T at shift c sharing resolvent evaluations, plus diagnostics."""
    _check_pair(pair, c)
    rk, rt = rules or default_rules(pair, c, quad)
    # K, L decay like |z|^-2 and P like |z|^-3; a single tail exponent of 1 is exact for
    # the leading term of both and over-resolves the faster one.
    rk, RA, RB = _k_side(pair, c, rk, 1.0)
    Kint, Lint = RA @ RB, RB @ RA
    Pint = _p_integrand(pair, rk, RA, RB)
    rt, RA2, RB2 = _t_side(pair, c, rt)
    Tint = _t_integrand(pair, rt, RA2, RB2)
    K, L, P, T = (_integral(rk, Kint), _integral(rk, Lint), _integral(rk, Pint), _integral(rt, Tint))
    n = pair.A.dim
    eye = np.eye(n)
    s = pair.shifted(c).entries
    a = pair.A.entries
    diag = {
        "k_rule": {"rho": rk.rho, "theta": rk.theta, "r_trunc": rk.r_trunc, "nodes": rk.size,
                   "tail_decay": rk.tail_decay},
        "t_rule": {"rho": rt.rho, "theta": rt.theta, "r_trunc": rt.r_trunc, "nodes": rt.size,
                   "tail_decay": rt.tail_decay},
        "tail_K": _tail_norm(rk, Kint),
        "tail_T": _tail_norm(rt, Tint),
        "right_identity_defect": op_norm(s @ L - eye - T),
        "left_identity_defect": op_norm(a @ K @ s @ np.linalg.inv(a) - eye - P),
        "K_minus_L": op_norm(K - L),
    }
    return DPGBundle(complex(c), LinOp(K, "K"), LinOp(L, "L"), LinOp(P, "P"), LinOp(T, "T"),
                     op_norm(P), op_norm(T), diag, tuple(pair.flags))


# --------------------------------------------------------------- shift search and inverse


@dataclass(frozen=True)
class ShiftSearch:
    c0: float
    history: list  # (c, norm_P, norm_T), sorted by c

    def to_json(self) -> dict:
        return {"c0": self.c0, "history": [{"c": c, "norm_P": p, "norm_T": t} for c, p, t in self.history]}


def find_shift(pair: OperatorPair, nu_target: float, quad: QuadSettings | None = None,
               c_max: float = 1e8) -> ShiftSearch:
    """Smallest tested c with max(||P_c||, ||T_c||) <= nu_target: doubling, then bisection."""
    if not 0 < nu_target < 1:
        raise ValueError(f"nu_target must lie in (0, 1), got {nu_target}")
    seen = {}

    def size(c):
        if c not in seen:
            b = dpg_bundle(pair, c, quad)
            seen[c] = (b.norm_P, b.norm_T)
        return max(seen[c])

    def hist():
        return [(c, *seen[c]) for c in sorted(seen)]

    if size(0.0) <= nu_target:
        return ShiftSearch(0.0, hist())
    lo, hi = 0.0, 1.0
    while size(hi) > nu_target:
        lo, hi = hi, 2 * hi
        if hi > c_max:
            best = min(max(v) for v in seen.values())
            raise NoShiftFound(f"no shift up to {c_max:g} reaches {nu_target}; best {best:.4g}", best)
    while hi - lo > 0.01 * hi:
        mid = 0.5 * (lo + hi)
        if size(mid) <= nu_target:
            hi = mid
        else:
            lo = mid
    return ShiftSearch(hi, hist())


@dataclass(frozen=True)
class SumInverse:
    inv: LinOp
    residual_right: float
    residual_left: float
    left_formula_gap: float
    bundle: DPGBundle
    condition: float

    def to_json(self) -> dict:
        return {"inv": matrix_to_json(self.inv),
                "residuals": {"right": self.residual_right, "left": self.residual_left},
                "left_formula_gap": self.left_formula_gap, "condition_I_plus_T": self.condition,
                "norm_P": self.bundle.norm_P, "norm_T": self.bundle.norm_T,
                "quad_error": self.bundle.quad_error}


def sum_inverse(pair: OperatorPair, c: complex = 0.0, quad: QuadSettings | None = None) -> SumInverse:
    """(A + B + c)^{-1} = L_c (I + T_c)^{-1}, with residuals on both sides."""
    b = dpg_bundle(pair, c, quad)
    if b.norm_T >= 1:
        raise ShiftTooSmall(f"||T_c|| = {b.norm_T:.4g} >= 1 at c={c}")
    if b.norm_P >= 1:
        raise ShiftTooSmall(f"||P_c|| = {b.norm_P:.4g} >= 1 at c={c}")
    n = pair.A.dim
    eye = np.eye(n)
    ipt = eye + b.T.entries
    cond = float(np.linalg.cond(ipt))
    if cond > 1e6:
        warnings.warn(f"I + T_c is ill-conditioned (cond={cond:.3g})", RuntimeWarning, stacklevel=2)
    inv = np.linalg.solve(ipt.T, b.L.entries.T).T
    s = pair.shifted(c).entries
    a = pair.A.entries
    # left form: A^{-1} (I + P_c)^{-1} A K_c
    left = np.linalg.solve(a, np.linalg.solve(eye + b.P.entries, a @ b.K.entries))
    return SumInverse(LinOp(inv, "inv"), op_norm(s @ inv - eye), op_norm(inv @ s - eye),
                      op_norm(left - inv), b, cond)


def sum_sectoriality(pair: OperatorPair, c0: complex, omega: float, grid_spec: GridSpec | None = None,
                     quad: QuadSettings | None = None) -> SectorialCertificate:
    lim = np.pi - max(pair.theta_A, pair.theta_B)
    if not 0 <= omega < lim:
        raise AngleOutOfRange(f"omega={omega} not in [0, {lim:.4g})")
    sum_inverse(pair, c0, quad)
    return estimate_sectorial(pair.shifted(c0), omega, grid_spec)


@dataclass(frozen=True)
class UniformReport:
    sectorial_bounds: list
    mixed_norms: list
    max_sectorial: float
    max_mixed: float
    passed: bool

    def to_json(self) -> dict:
        return {"sectorial_bounds": self.sectorial_bounds, "mixed_norms": self.mixed_norms,
                "max_sectorial": self.max_sectorial, "max_mixed": self.max_mixed, "passed": self.passed}


def uniform_family_check(A: LinOp, family: list[LinOp], theta_B: float, nu_grid,
                         grid_spec: GridSpec | None = None) -> UniformReport:
    """Sectorial bounds of A + B(xi) and ||B(xi)(A+B(xi)+nu)^{-1}|| across a commuting family."""
    if not family:
        from .errors import EmptyFamily
        raise EmptyFamily("empty family")
    a = A.entries
    for k, B in enumerate(family):
        cn = op_norm(a @ B.entries - B.entries @ a)
        if cn >= 1e-12 * max(1.0, op_norm(A) * op_norm(B)):
            raise NotCommuting(f"member {k} has commutator norm {cn:.3g}")
        estimate_sectorial(B, theta_B, grid_spec)
    sect, mixed = [], []
    eye = np.eye(A.dim)
    for B in family:
        S = A + B
        sect.append(estimate_sectorial(S, 0.0, grid_spec).kappa_safe)
        mixed.append(max(op_norm(B.entries @ np.linalg.inv(S.entries + nu * eye)) for nu in nu_grid))
    h = (len(family) + 1) // 2
    halves = [slice(0, h), slice(len(family) - h, len(family))]

    def ok(vals):
        return all(max(vals) <= 2 * max(vals[s]) for s in halves)

    return UniformReport(sect, mixed, max(sect), max(mixed), ok(sect) and ok(mixed))
