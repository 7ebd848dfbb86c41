"""Sectorial certificates, Rademacher-sign R-bounds, shift and perturbation checks."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import (AngleOutOfRange, DimensionMismatch, EmptyFamily, NotSectorial,
                     PerturbationTooLarge, SpectrumInSector)
from .linop import LinOp, op_norm, resolvent_apply
from .util import rng

SAFETY = 1.05  # inflation of the sampled sup
ANGLE_TOL = 1e-9


@dataclass(frozen=True)
class Sector:
    """Closed sector |arg z| <= theta together with the origin."""

    theta: float
    includes_origin: bool = True

    def __post_init__(self):
        if not 0 <= self.theta < np.pi:
            raise AngleOutOfRange(f"sector angle {self.theta} not in [0, pi)")

    def contains(self, z, tol: float = ANGLE_TOL):
        z = np.asarray(z, dtype=complex)
        return (np.abs(z) == 0) | (np.abs(np.angle(z)) <= self.theta + tol)


@dataclass(frozen=True)
class GridSpec:
    r_min: float = 1e-3
    r_max: float = 1e3
    per_decade: int = 25
    rays_per_half: int = 9

    def refined(self) -> "GridSpec":
        return GridSpec(self.r_min, self.r_max, 2 * self.per_decade, 2 * self.rays_per_half - 1)

    def points(self, theta: float) -> NDArray[np.complex128]:
        nd = np.log10(self.r_max / self.r_min)
        radii = np.logspace(np.log10(self.r_min), np.log10(self.r_max),
                            int(round(nd * self.per_decade)) + 1)
        if theta == 0:
            angles = np.array([0.0])
        else:
            half = np.linspace(0.0, theta, self.rays_per_half)
            angles = np.concatenate([-half[:0:-1], half])
        pts = (radii[None, :] * np.exp(1j * angles)[:, None]).ravel()
        return np.concatenate([[0.0], pts])


@dataclass(frozen=True)
class SectorialCertificate:
    theta: float
    kappa_raw: float
    kappa_safe: float
    grid_lambdas: NDArray[np.complex128] = field(repr=False)
    grid_values: NDArray[np.float64] = field(repr=False)
    sup_location: complex

    @property
    def kappa(self) -> float:
        return self.kappa_safe

    def to_json(self, with_grid: bool = True) -> dict:
        out = {"theta": self.theta, "kappa_raw": self.kappa_raw, "kappa_safe": self.kappa_safe,
               "sup_location": {"re": self.sup_location.real, "im": self.sup_location.imag}}
        if with_grid:
            out["grid"] = [{"lambda_re": float(z.real), "lambda_im": float(z.imag), "value": float(v)}
                           for z, v in zip(self.grid_lambdas, self.grid_values)]
        return out


@dataclass(frozen=True)
class RBoundEstimate:
    value: float
    n_ops: int
    sign_search: str
    trials: int


def check_sector_spectrum(A: LinOp, theta: float) -> None:
    """Raise SpectrumInSector if some eigenvalue of -A lies in the closed sector."""
    neg = -A.spectrum.eigenvalues
    scale = max(1.0, float(np.max(np.abs(neg))))
    bad = (np.abs(neg) <= 1e-12 * scale) | (np.abs(np.angle(neg)) <= theta + ANGLE_TOL)
    if np.any(bad):
        raise SpectrumInSector(f"eigenvalue {-neg[np.argmax(bad)]} of {A.label} puts -A in S_{theta:.4g}")


def resolvent_norms(a: NDArray, lams: NDArray) -> NDArray[np.float64]:
    """||(a + lam)^{-1}|| for each lam, via the smallest singular value."""
    n = a.shape[0]
    out = np.empty(len(lams))
    chunk = max(1, 200_000 // (n * n))
    for s in range(0, len(lams), chunk):
        stack = a[None] + lams[s:s + chunk, None, None] * np.eye(n)[None]
        smin = np.linalg.svd(stack, compute_uv=False)[:, -1]
        with np.errstate(divide="ignore"):
            out[s:s + chunk] = 1.0 / smin
    return out


def estimate_sectorial(A: LinOp, theta: float, grid_spec: GridSpec | None = None) -> SectorialCertificate:
    """Sampled sup of (1+|lam|)||(A+lam)^{-1}|| over a log-radial grid of S_theta."""
    Sector(theta)
    check_sector_spectrum(A, theta)
    gs = grid_spec or GridSpec()
    lams = gs.points(theta)
    vals = (1 + np.abs(lams)) * resolvent_norms(A.entries, lams)
    k = int(np.argmax(vals))
    raw = float(vals[k])
    return SectorialCertificate(theta, raw, SAFETY * raw, lams, vals, complex(lams[k]))


def max_sector_angle(A: LinOp, kappa_cap: float, resolution: float = 1e-3,
                     grid_spec: GridSpec | None = None) -> float:
    """Largest bisection-grid angle whose certificate exists with kappa_safe <= kappa_cap."""

    def ok(th):
        try:
            return estimate_sectorial(A, th, grid_spec).kappa_safe <= kappa_cap
        except SpectrumInSector:
            return False

    if not ok(0.0):
        raise NotSectorial(f"{A.label} has no certificate with kappa <= {kappa_cap} even at angle 0")
    lo, hi = 0.0, np.pi - resolution
    if ok(hi):
        return hi
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


# ------------------------------------------------------------ R-bounds


def _sign_patterns(n: int) -> NDArray[np.float64]:
    # first sign fixed to +1: norms are invariant under a global flip
    rest = np.array(list(itertools.product((1.0, -1.0), repeat=n - 1))).reshape(2 ** (n - 1), n - 1)
    return np.hstack([np.ones((rest.shape[0], 1)), rest])


def _as_tuples(vectors, n, dim):
    arr = np.asarray(vectors, dtype=complex)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[1] != n or arr.shape[2] != dim:
        raise DimensionMismatch(f"vector tuples of shape {arr.shape} do not match ({n}, {dim})")
    return arr


def estimate_r_bound(family: Sequence[LinOp], vectors, mode: str = "exhaustive",
                     trials: int = 4096, seed: int | None = None) -> RBoundEstimate:
    """Rademacher-sign ratio max_eps ||sum eps T x|| / max_eps ||sum eps x||.

    ``vectors`` holds one tuple (n x dim) or several (k x n x dim); the result
    is the maximum over tuples.  In sampled mode the numerator uses random
    sign patterns while the denominator is enumerated exactly for n <= 20, so
    the estimate never exceeds the exhaustive one.
    """
    if len(family) == 0:
        raise EmptyFamily("operator family is empty")
    n = len(family)
    dim = family[0].dim
    if any(T.dim != dim for T in family):
        raise DimensionMismatch("family members have different dimensions")
    tuples = _as_tuples(vectors, n, dim)
    ops = np.stack([T.entries for T in family])
    if mode == "exhaustive":
        if n > 12:
            raise ValueError("exhaustive sign search is limited to n <= 12")
        num_pat = den_pat = _sign_patterns(n)
        used = 2 ** n
    elif mode == "sampled":
        if trials >= 2 ** n:
            num_pat = den_pat = _sign_patterns(n)
            mode, used = "exhaustive", 2 ** n
        else:
            g = rng(seed)
            num_pat = g.choice([-1.0, 1.0], size=(trials, n))
            den_pat = _sign_patterns(n) if n <= 20 else num_pat
            used = trials
    else:
        raise ValueError(f"unknown sign-search mode {mode!r}")
    best = 0.0
    for x in tuples:
        y = np.einsum("kij,kj->ki", ops, x)
        den = np.max(np.linalg.norm(den_pat @ x, axis=1))
        if den == 0:
            continue
        num = np.max(np.linalg.norm(num_pat @ y, axis=1))
        best = max(best, float(num / den))
    return RBoundEstimate(best, n, mode, used)


def sample_sector(theta: float, n: int, seed: int | None = None, r_min=1e-3, r_max=1e3):
    """Log-uniform moduli and uniform arguments in S_theta minus the origin."""
    g = rng(seed)
    r = 10 ** g.uniform(np.log10(r_min), np.log10(r_max), n)
    a = g.uniform(-theta, theta, n)
    return r * np.exp(1j * a)


def r_sectorial_probe(A: LinOp, theta: float, n_lambdas: int = 8, vectors=None,
                      lambdas=None, seed: int | None = None) -> RBoundEstimate:
    """R-bound surrogate for {lam (A+lam)^{-1}} on sampled lam in S_theta.

    Besides the tuple built from ``vectors`` (default: standard basis, cycled),
    each member is also probed alone on its top right-singular vector, so the
    value dominates every member's operator norm.
    """
    check_sector_spectrum(A, theta)
    lams = np.asarray(lambdas, dtype=complex) if lambdas is not None else sample_sector(theta, n_lambdas, seed)
    n, dim = len(lams), A.dim
    eye = np.eye(dim)
    fam = [LinOp(l * resolvent_apply(A, l, eye)) for l in lams]
    basis = eye if vectors is None else np.atleast_2d(np.asarray(vectors, dtype=complex))
    main = np.stack([basis[k % basis.shape[0]] for k in range(n)])
    tuples = [main]
    for k, T in enumerate(fam):
        v = np.linalg.svd(T.entries)[2][0].conj()
        t = np.zeros((n, dim), dtype=complex)
        t[k] = v
        tuples.append(t)
    mode = "exhaustive" if n <= 12 else "sampled"
    return estimate_r_bound(fam, np.stack(tuples), mode=mode, seed=seed)


@dataclass(frozen=True)
class ShiftBoundReport:
    lhs: float
    rhs: float
    c_A: float
    passed: bool


def shift_bound_check(A: LinOp, theta: float, c: complex, omega: float, n_lambdas: int = 8,
                      seed: int | None = None, lambdas=None) -> ShiftBoundReport:
    """Compare the shifted family's R-bound with C_A / sin(theta + omega)."""
    if not 0 <= omega < min(theta, np.pi - theta):
        raise AngleOutOfRange(f"omega={omega} outside [0, min(theta, pi-theta))")
    if c != 0 and abs(np.angle(c)) > omega + ANGLE_TOL:
        raise AngleOutOfRange(f"shift c={c} is not in S_omega")
    lams = np.asarray(lambdas, dtype=complex) if lambdas is not None else sample_sector(theta, n_lambdas, seed)
    c_a = r_sectorial_probe(A, theta, lambdas=lams, seed=seed).value
    lhs = r_sectorial_probe(A + c, theta, lambdas=lams, seed=seed).value
    rhs = c_a / np.sin(theta + omega)
    return ShiftBoundReport(lhs, rhs, c_a, bool(lhs <= rhs * (1 + 1e-6)))


def shift_scalar_sup(theta: float, c: complex, grid_spec: GridSpec | None = None) -> float:
    """Sampled sup over S_theta of |lam / (c + lam)|."""
    lams = (grid_spec or GridSpec(r_min=1e-4, r_max=1e6)).points(theta)[1:]
    return float(np.max(np.abs(lams / (c + lams))))


@dataclass(frozen=True)
class NeumannRow:
    lam: complex
    terms: int
    tail_bound: float
    error: float
    resolvent: NDArray[np.complex128] = field(repr=False)


@dataclass(frozen=True)
class NeumannReport:
    table: list
    bound: float
    c_A: float
    rel_size: float


def neumann_perturb(A: LinOp, B: LinOp, theta: float, lambdas=None, n_lambdas: int = 8,
                    seed: int | None = None) -> NeumannReport:
    """Resolvent of A+B from the Neumann series in B(A+lam)^{-1}, checked against direct solves."""
    if B.dim != A.dim:
        raise DimensionMismatch("A and B differ in dimension")
    eye = np.eye(A.dim)
    c_a = r_sectorial_probe(A, theta, n_lambdas=n_lambdas, seed=seed).value
    q0 = op_norm(B.entries @ resolvent_apply(A, 0.0, eye))
    if q0 >= 1.0 / (1.0 + c_a):
        raise PerturbationTooLarge(f"||B A^-1|| = {q0:.4g} >= 1/(1+C_A) = {1 / (1 + c_a):.4g}")
    lams = np.asarray(lambdas, dtype=complex) if lambdas is not None else sample_sector(theta, n_lambdas, seed)
    rows = []
    AB = A + B
    for lam in lams:
        R = resolvent_apply(A, lam, eye)
        M = B.entries @ R
        q = op_norm(M)
        if q >= 1:
            raise PerturbationTooLarge(f"||B (A+lam)^-1|| = {q:.4g} >= 1 at lam={lam}")
        nR = op_norm(R)
        S, term, k = R.copy(), R.copy(), 1
        tail = nR * q / (1 - q)
        while tail >= 1e-12 and k < 10_000:
            term = -term @ M
            S += term
            k += 1
            tail = nR * q ** k / (1 - q)
        direct = resolvent_apply(AB, lam, eye)
        err = op_norm(S - direct)
        if err > 1e-8:
            raise ArithmeticError(f"Neumann series disagrees with direct resolvent by {err:.3g}")
        rows.append(NeumannRow(complex(lam), k, float(tail), err, S))
    bound = c_a / (1 - (1 + c_a) * q0)
    return NeumannReport(rows, float(bound), float(c_a), float(q0))
