"""Non-autonomous problem u' + A(t) u = g, u(0) = 0, on a uniform time grid.

Time is discretized by backward differences, so the space-time operator is
B (x) I_n + blockdiag A(t_j) with B lower bidiagonal.  The patched solver
freezes A(t) near patch centers t_i, inverts each local operator by a
Neumann series, and glues the local inverses with a partition of unity
(chi_i, psi_i, phi_i).  The gluing leaves a fixed-point equation

    u = sum psi_i R_i Phi_i g + sum psi_i R_i [B_c, Phi_i] u,

which is a contraction once the exponential shift c is large enough.  The
shift is applied through the conjugation B_c = W^{-1} B W, W = diag(e^{c t_j}),
so undoing it is exact: u_j = e^{c t_j} v_j.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.linalg as sla
from numpy.typing import NDArray

from .errors import (ConfigError, CoverageGap, NestingViolation, NotContractive,
                     PatchTooWide)
from .linop import LinOp, matrix_from_json, op_norm
from .sector import GridSpec, SectorialCertificate, estimate_sectorial

# nesting factors relative to the patch radius r: (plateau, support)
CHI = (1.0, 2.0)
PSI = (0.9, 1.0)
CHI_HAT = (0.1, 0.85)
COVERAGE_MIN = 1e-3
FAMILY_THETA = np.pi / 2 + 0.25
DERIVATIVE_THETA = np.pi / 2 + 0.3
CT_MAX = 30.0


# --------------------------------------------------------------- grid and derivative


@dataclass(frozen=True)
class TimeGrid:
    T: float
    m: int
    p: float = 2.0

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError("final time must be positive")
        if int(self.m) != self.m or self.m < 1:
            raise ValueError("need at least one time node")
        if not 1 < self.p < np.inf:
            raise ValueError("Lebesgue exponent must lie in (1, inf)")

    @property
    def h(self) -> float:
        return self.T / self.m

    @property
    def nodes(self) -> NDArray[np.float64]:
        return self.T * np.arange(1, self.m + 1) / self.m

    def lp_norm(self, v: NDArray) -> float:
        """(sum_j h |v_j|^p)^{1/p} with the Euclidean norm in space."""
        v = np.asarray(v).reshape(self.m, -1)
        return float((self.h * np.sum(np.linalg.norm(v, axis=1) ** self.p)) ** (1.0 / self.p))


def derivative_matrix(grid: TimeGrid, c: float = 0.0) -> NDArray[np.float64]:
    """Backward difference; with c > 0 the conjugate W^{-1} B W, W = diag(e^{c t_j})."""
    m, h = grid.m, grid.h
    return (np.eye(m) - np.exp(-c * h) * np.eye(m, k=-1)) / h


@dataclass(frozen=True)
class DerivativeOp:
    matrix: NDArray[np.float64] = field(repr=False)
    grid: TimeGrid

    @property
    def certificate(self) -> SectorialCertificate:
        return _derivative_certificate(self.grid.T, self.grid.m)


@lru_cache(maxsize=32)
def _derivative_certificate(T: float, m: int) -> SectorialCertificate:
    # coarse grid: every sample costs an m-by-m SVD
    return estimate_sectorial(LinOp(derivative_matrix(TimeGrid(T, m)), "B"), DERIVATIVE_THETA,
                              GridSpec(per_decade=5, rays_per_half=5))


def build_derivative(grid: TimeGrid) -> DerivativeOp:
    return DerivativeOp(derivative_matrix(grid), grid)


# --------------------------------------------------------------- operator families


@dataclass(frozen=True)
class OperatorFamily:
    kind: str
    n: int
    func: Callable[[float], NDArray] = field(repr=False)
    params: dict = field(default_factory=dict, repr=False)

    def eval(self, t: float) -> LinOp:
        return LinOp(self.func(t), f"A({t:g})")

    def stack(self, ts) -> NDArray[np.complex128]:
        return np.stack([np.asarray(self.func(t), dtype=complex) for t in ts])

    def continuity_modulus(self, grid: TimeGrid) -> float:
        ts = np.concatenate([[0.0], grid.nodes])
        mats = self.stack(ts)
        d = np.linalg.norm(np.diff(mats, axis=0), ord=2, axis=(1, 2))
        return float(np.max(d / np.diff(ts)))

    def certify(self, T: float, theta: float = FAMILY_THETA, samples: int = 9,
                grid_spec: GridSpec | None = None) -> SectorialCertificate:
        """One certificate valid for A(t) at every sampled t (kappa = the largest)."""
        certs = [estimate_sectorial(self.eval(t), theta, grid_spec) for t in np.linspace(0, T, samples)]
        worst = max(certs, key=lambda c: c.kappa_raw)
        return worst


def _mat(obj, n=None):
    a = matrix_from_json(obj)
    if a.shape == (1, 1) and n is not None and n > 1:
        a = a[0, 0] * np.eye(n)
    return a


def affine_family(A0, A1) -> OperatorFamily:
    a0, a1 = np.atleast_2d(np.asarray(A0, dtype=complex)), np.atleast_2d(np.asarray(A1, dtype=complex))
    return OperatorFamily("affine", a0.shape[0], lambda t: a0 + t * a1, {"A0": a0, "A1": a1})


def trig_family(A0, A1, A2=None, omega: float = 1.0) -> OperatorFamily:
    a0 = np.atleast_2d(np.asarray(A0, dtype=complex))
    a1 = np.atleast_2d(np.asarray(A1, dtype=complex))
    a2 = np.zeros_like(a0) if A2 is None else np.atleast_2d(np.asarray(A2, dtype=complex))
    return OperatorFamily("trig", a0.shape[0],
                          lambda t: a0 + np.sin(omega * t) * a1 + np.cos(omega * t) * a2,
                          {"A0": a0, "A1": a1, "A2": a2, "omega": omega})


def tabulated_family(times, mats) -> OperatorFamily:
    ts = np.asarray(times, dtype=float)
    ms = np.stack([np.asarray(m, dtype=complex) for m in mats])
    if ts.ndim != 1 or len(ts) != len(ms) or len(ts) < 1 or np.any(np.diff(ts) <= 0):
        raise ConfigError("tabulated family needs increasing times matching the matrices")

    def f(t):
        if len(ts) == 1:
            return ms[0]
        k = int(np.clip(np.searchsorted(ts, t) - 1, 0, len(ts) - 2))
        w = np.clip((t - ts[k]) / (ts[k + 1] - ts[k]), 0.0, 1.0)
        return (1 - w) * ms[k] + w * ms[k + 1]

    return OperatorFamily("file", ms.shape[1], f, {"times": ts, "matrices": ms})


def family_from_json(obj: dict, base_dir: Path | None = None) -> OperatorFamily:
    kind = obj.get("kind")
    try:
        if kind == "affine":
            a0 = _mat(obj["A0"])
            return affine_family(a0, _mat(obj.get("A1", 0.0), a0.shape[0]))
        if kind == "trig":
            a0 = _mat(obj["A0"])
            n = a0.shape[0]
            return trig_family(a0, _mat(obj.get("A1", 0.0), n), _mat(obj.get("A2", 0.0), n),
                               float(obj.get("omega", 1.0)))
        if kind == "file":
            path = Path(obj["path"])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            if not path.exists():
                raise ConfigError(f"family file not found: {path}")
            data = json.loads(path.read_text())
            return tabulated_family(data["times"], [matrix_from_json(m) for m in data["matrices"]])
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad family specification: {exc!r}") from None
    raise ConfigError(f"unknown family kind {kind!r}")


# --------------------------------------------------------------- problems


@dataclass(frozen=True)
class SpaceTimeProblem:
    grid: TimeGrid
    family: OperatorFamily
    g: NDArray[np.complex128] = field(repr=False)
    c_shift: float = 0.0
    theta: float = FAMILY_THETA
    patches: dict = field(default_factory=lambda: {"auto": True})
    config: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.g.shape != (self.grid.m, self.family.n):
            raise ConfigError(f"forcing shape {self.g.shape} != ({self.grid.m}, {self.family.n})")

    @property
    def n(self) -> int:
        return self.family.n

    @cached_property
    def a_stack(self) -> NDArray[np.complex128]:
        return self.family.stack(self.grid.nodes)

    def with_m(self, m: int) -> "SpaceTimeProblem":
        cfg = dict(self.config, m=m)
        return problem_from_json(cfg, self.config.get("_base_dir"))


def _forcing(spec, grid: TimeGrid, n: int, base_dir) -> NDArray[np.complex128]:
    if spec is None or spec == "const":
        spec = {"kind": "const"}
    if isinstance(spec, str):
        spec = {"kind": spec}
    kind = spec.get("kind")
    if kind == "const":
        v = np.asarray(spec.get("value", np.ones(n)), dtype=complex).ravel()
        if v.size == 1:
            v = np.full(n, v[0])
        if v.size != n:
            raise ConfigError(f"forcing value has {v.size} entries, need {n}")
        return np.tile(v, (grid.m, 1))
    if kind == "file":
        path = Path(spec["path"])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        if not path.exists():
            raise ConfigError(f"forcing file not found: {path}")
        data = np.asarray(json.loads(path.read_text()), dtype=complex)
        if data.ndim == 1:
            data = data[:, None]
        if data.shape != (grid.m, n):
            raise ConfigError(f"forcing file has shape {data.shape}, need ({grid.m}, {n})")
        return data
    raise ConfigError(f"unknown forcing kind {kind!r}")


def problem_from_json(obj: dict, base_dir=None) -> SpaceTimeProblem:
    """Build a problem from the JSON schema {T, m, p, family, g, patches}."""
    try:
        grid = TimeGrid(float(obj["T"]), int(obj["m"]), float(obj.get("p", 2.0)))
        family = family_from_json(obj["family"], Path(base_dir) if base_dir else None)
    except KeyError as exc:
        raise ConfigError(f"problem is missing field {exc}") from None
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    g_spec = obj.get("g", "const")
    if isinstance(g_spec, str) and "g_value" in obj:
        g_spec = {"kind": g_spec, "value": obj["g_value"]}
    g = _forcing(g_spec, grid, family.n, base_dir)
    cfg = dict(obj)
    if base_dir is not None:
        cfg["_base_dir"] = str(base_dir)
    return SpaceTimeProblem(grid, family, g, float(obj.get("c_shift", 0.0)),
                            float(obj.get("theta", FAMILY_THETA)), obj.get("patches", {"auto": True}), cfg)


def load_problem(path) -> SpaceTimeProblem:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"problem file not found: {p}")
    try:
        obj = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: {exc}") from None
    return problem_from_json(obj, p.parent)


# --------------------------------------------------------------- partition of unity


def _g(x):
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        return np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)


def _dg(x):
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        xs = np.where(x > 0, x, 1.0)
        return np.where(x > 0, np.exp(-1.0 / xs) / xs ** 2, 0.0)


def smooth_step(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1."""
    x = np.clip(np.asarray(x, float), 0.0, 1.0)
    a, b = _g(x), _g(1 - x)
    return a / (a + b)


def smooth_step_prime(x):
    x = np.asarray(x, float)
    inside = (x > 0) & (x < 1)
    xc = np.clip(x, 1e-300, 1 - 1e-16)
    a, b = _g(xc), _g(1 - xc)
    d = (_dg(xc) * b + a * _dg(1 - xc)) / (a + b) ** 2
    return np.where(inside, d, 0.0)


def plateau(t, center: float, inner: float, outer: float):
    """(value, derivative) of the bump equal to 1 for |t-center| <= inner, 0 beyond outer."""
    t = np.asarray(t, float)
    d = t - center
    x = (outer - np.abs(d)) / (outer - inner)
    return smooth_step(x), -np.sign(d) * smooth_step_prime(x) / (outer - inner)


@dataclass(frozen=True)
class PartitionOfUnity:
    centers: NDArray[np.float64]
    radii: NDArray[np.float64]
    grid: TimeGrid
    chi: NDArray[np.float64] = field(repr=False)
    psi: NDArray[np.float64] = field(repr=False)
    phi: NDArray[np.float64] = field(repr=False)
    dpsi: NDArray[np.float64] = field(repr=False)
    dphi: NDArray[np.float64] = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.centers)

    def identity_defects(self) -> tuple[float, float]:
        """max |sum psi phi - 1| and max |sum psi phi'| over the grid nodes."""
        return (float(np.max(np.abs(np.sum(self.psi * self.phi, axis=0) - 1))),
                float(np.max(np.abs(np.sum(self.psi * self.dphi, axis=0)))))

    def to_json(self) -> dict:
        return {"centers": self.centers.tolist(), "radii": self.radii.tolist()}


def _bumps(t, centers, radii):
    chi = [plateau(t, c, CHI[0] * r, CHI[1] * r) for c, r in zip(centers, radii)]
    psi = [plateau(t, c, PSI[0] * r, PSI[1] * r) for c, r in zip(centers, radii)]
    hat = [plateau(t, c, CHI_HAT[0] * r, CHI_HAT[1] * r) for c, r in zip(centers, radii)]
    return chi, psi, hat


def build_partition(grid: TimeGrid, centers, radii) -> PartitionOfUnity:
    centers = np.atleast_1d(np.asarray(centers, float))
    radii = np.atleast_1d(np.asarray(radii, float))
    if centers.shape != radii.shape or centers.size == 0:
        raise ValueError("centers and radii must be non-empty and of equal length")
    if np.any(radii <= 0):
        raise NestingViolation("radii must be positive")
    fine = np.union1d(np.linspace(0.0, grid.T, 4001), grid.nodes)
    chi_f, psi_f, hat_f = _bumps(fine, centers, radii)
    cover = np.sum([h for h, _ in hat_f], axis=0)
    if cover.min() < COVERAGE_MIN:
        where = fine[np.argmin(cover)]
        raise CoverageGap(f"patches leave t={where:.4g} uncovered (coverage {cover.min():.3g})")
    for (c, _), (p, _), (h, _) in zip(chi_f, psi_f, hat_f):
        if np.any((p > 0) & (c < 1)) or np.any((h > 0) & (p < 1)):
            raise NestingViolation("support nesting chi = 1 on supp psi, psi = 1 on supp phi failed")
    t = grid.nodes
    chi, psi, hat = _bumps(t, centers, radii)
    S = np.sum([h for h, _ in hat], axis=0)
    dS = np.sum([d for _, d in hat], axis=0)
    phi = np.array([h / S for h, _ in hat])
    dphi = np.array([(d * S - h * dS) / S ** 2 for h, d in hat])
    return PartitionOfUnity(centers, radii, grid, np.array([v for v, _ in chi]),
                            np.array([v for v, _ in psi]), phi,
                            np.array([d for _, d in psi]), dphi)


def uniform_partition(grid: TimeGrid, n: int) -> PartitionOfUnity:
    r = grid.T / n
    return build_partition(grid, (np.arange(n) + 0.5) * r, np.full(n, r))


def partition_from_spec(grid: TimeGrid, spec) -> PartitionOfUnity:
    if spec in (None, "auto") or (isinstance(spec, dict) and spec.get("auto")):
        return uniform_partition(grid, 1)
    if isinstance(spec, dict) and "centers" in spec:
        return build_partition(grid, spec["centers"], spec["radii"])
    if isinstance(spec, dict) and "n" in spec:
        return uniform_partition(grid, int(spec["n"]))
    raise ConfigError(f"bad patch specification {spec!r}")


# --------------------------------------------------------------- space-time operators


def _blockdiag(stack: NDArray) -> NDArray:
    return sla.block_diag(*stack)


def _kron_time(b: NDArray, n: int) -> NDArray:
    return np.kron(b, np.eye(n))


def _time_mult(w: NDArray, n: int) -> NDArray:
    return np.kron(np.diag(w), np.eye(n))


def _local_blocks(problem: SpaceTimeProblem, pou: PartitionOfUnity, i: int):
    """(frozen stack A(t_i), perturbation stack chi_i(t_j)(A(t_j) - A(t_i)))."""
    ai = np.asarray(problem.family.func(pou.centers[i]), dtype=complex)
    frozen = np.broadcast_to(ai, problem.a_stack.shape)
    pert = pou.chi[i][:, None, None] * (problem.a_stack - ai[None])
    return frozen, pert


def build_local_op(problem: SpaceTimeProblem, pou: PartitionOfUnity, i: int) -> LinOp:
    """B (x) I + blockdiag[A(t_i) + chi_i(t_j)(A(t_j) - A(t_i))]."""
    frozen, pert = _local_blocks(problem, pou, i)
    b = _kron_time(derivative_matrix(problem.grid), problem.n)
    return LinOp(b + _blockdiag(frozen + pert), f"A_{i}")


@dataclass(frozen=True)
class LocalResolvent:
    matrix: NDArray[np.complex128] = field(repr=False)
    nu: float
    terms: int
    crosscheck: float

    @property
    def op(self) -> LinOp:
        return LinOp(self.matrix, "R_i")


def local_resolvent(problem: SpaceTimeProblem, pou: PartitionOfUnity, i: int, c: float) -> LocalResolvent:
    """(A_i + c)^{-1} as R0 sum (-M)^k, M = chi_i (A(t) - A(t_i)) R0."""
    frozen, pert = _local_blocks(problem, pou, i)
    bc = _kron_time(derivative_matrix(problem.grid, c), problem.n)
    R0 = np.linalg.inv(bc + _blockdiag(frozen))
    X = _blockdiag(pert)
    M = X @ R0
    nu = op_norm(M)
    if nu >= 1:
        raise PatchTooWide(f"patch {i}: nu = {nu:.4g} >= 1 (shrink the radius or raise c)", nu)
    S, term, k = R0.copy(), R0, 1
    stop = 1e-12 * (1 - nu) * max(1.0, np.linalg.norm(R0))
    while nu > 0 and np.linalg.norm(term) >= stop and k < 100_000:
        term = -term @ M
        S += term
        k += 1
    direct = np.linalg.inv(bc + _blockdiag(frozen + pert))
    rel = float(np.linalg.norm(S - direct) / np.linalg.norm(direct))
    if rel > 1e-8:
        raise ArithmeticError(f"patch {i}: Neumann series deviates from the dense inverse by {rel:.3g}")
    return LocalResolvent(S, float(nu), k, rel)


@dataclass(frozen=True)
class LeftInverse:
    u_map: NDArray[np.complex128] = field(repr=False)
    N: NDArray[np.complex128] = field(repr=False)
    M: NDArray[np.complex128] = field(repr=False)
    contraction_norm: float
    c: float
    nus: tuple
    resolvents: tuple = field(repr=False, default=())

    def fixed_point(self, f: NDArray, tol: float = 1e-12, max_iter: int = 10_000):
        """Iterate u <- N f + M u from u = 0; returns (u, iterations)."""
        base = self.N @ f
        u = base.copy()
        for k in range(1, max_iter + 1):
            nxt = base + self.M @ u
            done = np.linalg.norm(nxt - u) <= tol * max(np.linalg.norm(nxt), 1e-300)
            u = nxt
            if done:
                return u, k
        return u, max_iter


def assemble_left_inverse(problem: SpaceTimeProblem, pou: PartitionOfUnity, c: float,
                          check: bool = True) -> LeftInverse:
    """Dense (I - sum psi R [B_c, Phi])^{-1} sum psi R Phi on the shifted space-time space."""
    n = problem.n
    bc = _kron_time(derivative_matrix(problem.grid, c), n)
    dim = bc.shape[0]
    Nmat = np.zeros((dim, dim), dtype=complex)
    Mmat = np.zeros((dim, dim), dtype=complex)
    res = []
    for i in range(pou.size):
        R = local_resolvent(problem, pou, i, c)
        res.append(R)
        Psi = pou.psi[i].repeat(n)[:, None]
        Phi = _time_mult(pou.phi[i], n)
        C = bc @ Phi - Phi @ bc
        Nmat += Psi * (R.matrix @ Phi)
        Mmat += Psi * (R.matrix @ C)
    q = op_norm(Mmat)
    if check and q >= 1:
        raise NotContractive(f"contraction norm {q:.4g} >= 1 at c={c}", q)
    # [B_c, Phi] is strictly block-lower and R is block-lower, so I - M is unit lower triangular
    u_map = sla.solve_triangular(np.eye(dim) - Mmat, Nmat, lower=True, unit_diagonal=True)
    return LeftInverse(u_map, Nmat, Mmat, q, float(c), tuple(r.nu for r in res), tuple(res))


def shifted_operator(problem: SpaceTimeProblem, c: float) -> NDArray[np.complex128]:
    return _kron_time(derivative_matrix(problem.grid, c), problem.n) + _blockdiag(problem.a_stack)


def right_inverse_residual(problem: SpaceTimeProblem, pou: PartitionOfUnity, c: float, u_map) -> float:
    """|| (A + B_c) u_map - I || on the space-time space."""
    op = shifted_operator(problem, c)
    return op_norm(op @ u_map - np.eye(op.shape[0]))


def right_inverse_expansion(problem: SpaceTimeProblem, pou: PartitionOfUnity, li: LeftInverse):
    """sum psi (Phi + C L) + sum [B_c, Psi] R (Phi + C L): the product (A + B_c) L term by term."""
    n = problem.n
    bc = _kron_time(derivative_matrix(problem.grid, li.c), n)
    L = li.u_map
    out = np.zeros_like(L)
    for i, R in enumerate(li.resolvents):
        Psi = _time_mult(pou.psi[i], n)
        Phi = _time_mult(pou.phi[i], n)
        inner = Phi + (bc @ Phi - Phi @ bc) @ L
        out += Psi @ inner + (bc @ Psi - Psi @ bc) @ (R.matrix @ inner)
    return out


def oracle_direct(problem: SpaceTimeProblem) -> NDArray[np.complex128]:
    """Block forward substitution (I/h + A(t_j)) u_j = g_j + u_{j-1}/h."""
    h, n = problem.grid.h, problem.n
    u = np.zeros((problem.grid.m, n), dtype=complex)
    prev = np.zeros(n, dtype=complex)
    for j in range(problem.grid.m):
        prev = np.linalg.solve(np.eye(n) / h + problem.a_stack[j], problem.g[j] + prev / h)
        u[j] = prev
    return u


# --------------------------------------------------------------- driver


@dataclass(frozen=True)
class CPolicy:
    start: float = 1.0
    factor: float = 2.0
    target: float = 0.5
    cap: float = 1e6

    @classmethod
    def from_json(cls, obj) -> "CPolicy":
        return cls(**obj) if obj else cls()


@dataclass(frozen=True)
class Solution:
    t: NDArray[np.float64] = field(repr=False)
    u: NDArray[np.complex128] = field(repr=False)
    residual: float
    mr_constant: float
    c_used: float
    patches_used: int
    iters: int
    contraction_norm: float
    nu_max: float
    right_inverse_residual: float
    partition: PartitionOfUnity = field(repr=False)
    family_certificate: SectorialCertificate | None = field(repr=False, default=None)
    derivative_certificate: SectorialCertificate | None = field(repr=False, default=None)

    def report(self) -> dict:
        out = {"residual": self.residual, "mr_constant": self.mr_constant, "c_used": self.c_used,
               "patches_used": self.patches_used, "iters": self.iters,
               "contraction_norm": self.contraction_norm, "nu_max": self.nu_max,
               "right_inverse_residual": self.right_inverse_residual,
               "partition": self.partition.to_json()}
        if self.family_certificate is not None:
            out["family_certificate"] = self.family_certificate.to_json(with_grid=False)
        if self.derivative_certificate is not None:
            out["derivative_certificate"] = self.derivative_certificate.to_json(with_grid=False)
        return out


def _max_nu(problem, pou, c):
    try:
        return max(local_resolvent(problem, pou, i, c).nu for i in range(pou.size))
    except PatchTooWide as exc:
        return exc.nu


def solve_nonautonomous(problem: SpaceTimeProblem, pou_spec=None, c_policy: CPolicy | None = None,
                        certify: bool = True) -> Solution:
    """Patched left-inverse solve with automatic shift and (optionally) patch count."""
    grid, n = problem.grid, problem.n
    pol = c_policy or CPolicy()
    spec = problem.patches if pou_spec is None else pou_spec
    fam_cert = problem.family.certify(grid.T, problem.theta) if certify else None
    der_cert = build_derivative(grid).certificate if certify else None
    auto = spec in ("auto",) or (isinstance(spec, dict) and spec.get("auto"))
    if auto:
        k = 1
        pou = uniform_partition(grid, k)
        while _max_nu(problem, pou, pol.start) > 0.5 and k < 64:
            k *= 2
            pou = uniform_partition(grid, k)
    else:
        pou = partition_from_spec(grid, spec)
    c = pol.start
    while True:
        if c * grid.T > CT_MAX or c > pol.cap:
            raise NotContractive(f"no shift with c*T <= {CT_MAX} made the patched map contract", None)
        li = assemble_left_inverse(problem, pou, c, check=False)
        if li.contraction_norm < pol.target:
            break
        c *= pol.factor
    w = np.exp(c * grid.nodes)
    f = (problem.g / w[:, None]).ravel()
    v, iters = li.fixed_point(f)
    u = v.reshape(grid.m, n) * w[:, None]
    bu = derivative_matrix(grid) @ u
    au = np.einsum("jab,jb->ja", problem.a_stack, u)
    resid = grid.lp_norm(bu + au - problem.g)
    gn = grid.lp_norm(problem.g)
    mr = (grid.lp_norm(bu) + grid.lp_norm(au)) / gn if gn > 0 else 0.0
    rir = right_inverse_residual(problem, pou, c, li.u_map)
    return Solution(grid.nodes, u, resid, mr, c, pou.size, iters, li.contraction_norm,
                    max(li.nus), rir, pou, fam_cert, der_cert)
