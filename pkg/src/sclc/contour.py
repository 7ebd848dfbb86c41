"""Contour paths, quadrature rules and the Dunford functional calculus.

The path with parameters (rho, theta) runs in along the lower ray
r e^{-i theta}, around the circle of radius rho through the negative real
axis, and out along the upper ray r e^{i theta}.  With this orientation the
part of the plane containing the negative reals lies to the left, so for a
pole -a of the resolvent (a in the spectrum of A)

    (1/2 pi i) * integral f(lam) (A + lam)^{-1} dlam = f(-A).

Radial pieces use composite Gauss-Legendre panels with geometric edges; the
arc uses Gauss-Legendre in the angle.  Beyond the truncation radius an
optional mapped tail r = R u^{-1/tau} integrates integrands decaying like
r^{-1-tau} exactly up to the smooth remainder.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from .errors import (AngleConflict, BadGeometry, BranchConflict, NotInvertible,
                     NotSectorial)
from .linop import SPECTRUM_GUARD, LinOp, batched_resolvents, op_norm
from .util import rng

TWO_PI_I = 2j * np.pi


@lru_cache(maxsize=64)
def _leggauss(n: int):
    return np.polynomial.legendre.leggauss(n)


def gauss_legendre(a: float, b: float, n: int):
    x, w = _leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


@dataclass(frozen=True)
class QuadSettings:
    """Reference quadrature parameters (the --quad flag edits these)."""

    decades: float = 6.0   # truncation radius = 10**decades * scale
    panels: int = 4        # Gauss-Legendre panels per radial decade
    order: int = 7         # nodes per panel
    arc: int = 64          # nodes on the circular arc
    tail: int = 16         # nodes on the mapped tail

    @property
    def nodes_per_decade(self) -> int:
        return self.panels * self.order

    @classmethod
    def parse(cls, text: str | None) -> "QuadSettings":
        if not text:
            return cls()
        kw = {}
        for item in text.split(","):
            if not item.strip():
                continue
            key, _, val = item.partition("=")
            key = key.strip()
            if key not in cls.__dataclass_fields__ or not val:
                raise ValueError(f"unknown quadrature setting {item!r}")
            kw[key] = float(val) if key == "decades" else int(val)
        return cls(**kw)

    def to_json(self) -> dict:
        return {"decades": self.decades, "panels": self.panels, "order": self.order,
                "arc": self.arc, "tail": self.tail}

    def refined(self) -> "QuadSettings":
        return replace(self, panels=2 * self.panels, arc=2 * self.arc, tail=2 * self.tail)


DEFAULT_QUAD = QuadSettings()


@dataclass(frozen=True)
class ContourRule:
    rho: float
    theta: float
    shift: complex
    r_trunc: float
    points: NDArray[np.complex128] = field(repr=False)
    weights: NDArray[np.complex128] = field(repr=False)
    tangents: NDArray[np.complex128] = field(repr=False)
    segment: NDArray = field(repr=False)
    tail_decay: float | None = None
    nodes_per_decade: int = 28
    arc_nodes: int = 64
    panel_order: int = 7
    tail_nodes: int = 16
    r_min: float = 0.0

    @property
    def size(self) -> int:
        return len(self.points)

    def integrate(self, values: NDArray) -> NDArray:
        """Sum of weight * value over nodes (the first axis of ``values``)."""
        return np.tensordot(self.weights, values, axes=(0, 0))

    def tail_mask(self) -> NDArray[np.bool_]:
        return np.char.startswith(self.segment.astype(str), "tail")

    def with_tail_decay(self, decay: float | None) -> "ContourRule":
        if decay == self.tail_decay:
            return self
        return build_contour(self.rho, self.theta, self.shift, self.r_trunc, self.nodes_per_decade,
                             self.arc_nodes, tail_decay=decay, panel_order=self.panel_order,
                             tail_nodes=self.tail_nodes, r_min=self.r_min or None)

    def distance_to_path(self, z) -> NDArray[np.float64]:
        """Distance from each z to the (untruncated) mathematical path."""
        w = np.asarray(z, dtype=complex) - self.shift
        r, a = np.abs(w), np.abs(np.angle(w))
        d_rays = []
        for s in (1, -1):
            e = np.exp(s * 1j * self.theta)
            t = np.maximum((w * e.conjugate()).real, self.rho)
            d_rays.append(np.abs(w - t * e))
        d = np.minimum(*d_rays)
        if self.rho > 0:
            on_arc = a >= self.theta
            d_arc = np.where(on_arc, np.abs(r - self.rho), np.inf)
            d = np.minimum(d, d_arc)
        return d

    def to_json(self) -> dict:
        return {
            "rho": self.rho, "theta": self.theta,
            "shift": {"re": complex(self.shift).real, "im": complex(self.shift).imag},
            "r_trunc": self.r_trunc, "tail_decay": self.tail_decay, "orientation": "positive",
            "nodes_per_decade": self.nodes_per_decade, "arc_nodes": self.arc_nodes,
            "nodes": {
                "point_re": self.points.real.tolist(), "point_im": self.points.imag.tolist(),
                "weight_re": self.weights.real.tolist(), "weight_im": self.weights.imag.tolist(),
                "tangent_re": self.tangents.real.tolist(), "tangent_im": self.tangents.imag.tolist(),
                "segment": self.segment.astype(str).tolist(),
            },
        }


def _radial_nodes(r0: float, r1: float, panels_per_decade: int, order: int):
    nd = np.log10(r1 / r0)
    npan = max(1, int(np.ceil(nd * panels_per_decade - 1e-9)))
    edges = np.geomspace(r0, r1, npan + 1)
    xs, ws = zip(*(gauss_legendre(a, b, order) for a, b in zip(edges[:-1], edges[1:])))
    return np.concatenate(xs), np.concatenate(ws)


def build_contour(rho: float, theta: float, shift: complex = 0.0, r_trunc: float | None = None,
                  nodes_per_decade: int = 28, arc_nodes: int = 64, *, tail_decay: float | None = None,
                  panel_order: int = 7, tail_nodes: int = 16, r_min: float | None = None) -> ContourRule:
    """Quadrature rule on shift + path(rho, theta).

    ``r_trunc == rho > 0`` gives the arc alone.  With ``rho == 0`` the rays
    start at the vertex; a single Gauss panel covers [0, r_min].
    ``tail_decay`` (tau > 0) appends the mapped tail beyond r_trunc.
    """
    if not 0 < theta < np.pi:
        raise BadGeometry(f"ray angle {theta} not in (0, pi)")
    if rho < 0 or r_trunc is None or not np.isfinite(r_trunc):
        raise BadGeometry("need rho >= 0 and a finite truncation radius")
    arc_only = rho > 0 and r_trunc == rho
    if not arc_only:
        if r_trunc <= rho:
            raise BadGeometry(f"r_trunc={r_trunc} must exceed rho={rho}")
        if r_trunc < 10 * rho:
            raise BadGeometry(f"r_trunc={r_trunc} must be at least 10*rho={10 * rho}")
    if tail_decay is not None and tail_decay <= 0:
        raise BadGeometry("tail decay exponent must be positive")
    order = int(panel_order)
    ppd = max(1, int(np.ceil(nodes_per_decade / order)))
    shift = complex(shift)
    if r_min is None:
        r_min = 0.5 * abs(shift) if (rho == 0 and shift != 0) else 1e-10
    pts, wts, tans, seg = [], [], [], []
    up, lo = np.exp(1j * theta), np.exp(-1j * theta)

    def add(z, w, t, name):
        pts.append(z)
        wts.append(w)
        tans.append(np.broadcast_to(t, z.shape).astype(complex))
        seg.append(np.full(z.shape, name, dtype="<U8"))

    if not arc_only:
        r0 = rho if rho > 0 else r_min
        if r_trunc <= r0:
            raise BadGeometry(f"r_trunc={r_trunc} must exceed the inner radius {r0}")
        r, w = _radial_nodes(r0, r_trunc, ppd, order)
        if rho == 0:
            x, wx = gauss_legendre(0.0, r_min, order)
            r, w = np.concatenate([x, r]), np.concatenate([wx, w])
        # lower ray traversed inward: reverse order so nodes follow the path
        add(r[::-1] * lo, -w[::-1] * lo, -lo, "ray_lo")
    if rho > 0:
        ph, wp = gauss_legendre(theta, 2 * np.pi - theta, arc_nodes)
        ph, wp = ph[::-1], wp[::-1]  # clockwise: angle decreasing
        z = rho * np.exp(1j * ph)
        add(z, -1j * z * wp, -1j * np.exp(1j * ph), "arc")
    if not arc_only:
        add(r * up, w * up, up, "ray_up")
    if tail_decay is not None and not arc_only:
        u, wu = gauss_legendre(0.0, 1.0, tail_nodes)
        rt = r_trunc * u ** (-1.0 / tail_decay)
        wt = wu * (r_trunc / tail_decay) * u ** (-1.0 / tail_decay - 1.0)
        add(rt[::-1] * lo, -wt[::-1] * lo, -lo, "tail_lo")
        add(rt * up, wt * up, up, "tail_up")
    points = np.concatenate(pts) + shift
    return ContourRule(float(rho), float(theta), shift, float(r_trunc), points, np.concatenate(wts),
                       np.concatenate(tans), np.concatenate(seg), tail_decay, int(nodes_per_decade),
                       int(arc_nodes), order, int(tail_nodes), float(r_min))


def rule_from_settings(rho: float, theta: float, scale: float, quad: QuadSettings | None = None,
                       shift: complex = 0.0, tail_decay: float | None = None) -> ContourRule:
    q = quad or DEFAULT_QUAD
    r_trunc = 10.0 ** q.decades * max(1.0, scale)
    return build_contour(rho, theta, shift, r_trunc, q.nodes_per_decade, q.arc, tail_decay=tail_decay,
                         panel_order=q.order, tail_nodes=q.tail)


# ------------------------------------------------------------ functions


@dataclass(frozen=True)
class HoloFunction:
    """Holomorphic function off the closed sector S_phi with two-sided power decay."""

    eval: Callable[[NDArray], NDArray]
    phi: float
    decay_eta: float
    decay_c: float
    label: str = "f"

    def __call__(self, lam):
        return self.eval(np.asarray(lam, dtype=complex))

    def scaled(self, s: float, label: str | None = None) -> "HoloFunction":
        """lam -> f(s lam) for s > 0; same sector and decay exponent."""
        f = self.eval
        c = self.decay_c * max(s, 1 / s) ** self.decay_eta
        return HoloFunction(lambda lam: f(s * lam), self.phi, self.decay_eta, c,
                            label or f"{self.label}(s={s:g})")

    def decay_ratio(self, n: int = 1000, seed: int | None = None) -> float:
        """max |f| / (c (|lam|/(1+|lam|^2))^eta) on n log-uniform samples off S_phi."""
        g = rng(seed)
        r = 10 ** g.uniform(-6, 6, n)
        a = g.uniform(self.phi + 1e-9, np.pi, n) * g.choice([-1.0, 1.0], n)
        lam = r * np.exp(1j * a)
        env = self.decay_c * (r / (1 + r ** 2)) ** self.decay_eta
        return float(np.max(np.abs(self(lam)) / env))


def _mlog(lam):
    # principal log of -lam: cut along lam in [0, inf)
    return np.log(-np.asarray(lam, dtype=complex))


def _bank(phi: float = np.pi / 8) -> dict[str, HoloFunction]:
    k = 1.0 - np.cos(phi)
    return {
        "sqrt_resolvent": HoloFunction(lambda l: np.exp(0.5 * _mlog(l)) / (1 - l), phi, 0.5, k ** -0.5,
                                       "(-l)^(1/2)/(1-l)"),
        "lambda_resolvent_sq": HoloFunction(lambda l: -l / (1 - l) ** 2, phi, 1.0, 1 / k,
                                            "(-l)/(1-l)^2"),
        "three_quarter": HoloFunction(lambda l: np.exp(0.75 * _mlog(l) - 1.5 * np.log(1 - l)), phi, 0.75,
                                      k ** -0.75, "(-l)^(3/4)/(1-l)^(3/2)"),
    }


FUNCTION_BANK = _bank()


# ------------------------------------------------------------ geometry helpers


def spectral_angle(A: LinOp) -> float:
    """max |arg mu| over the spectrum; -A avoids S_theta iff theta < pi - this."""
    return float(np.max(np.abs(np.angle(A.spectrum.eigenvalues))))


def _check_poles(A: LinOp, rule: ContourRule, err=NotSectorial) -> None:
    """All poles -mu must lie strictly left of the path (outside the arc disk)."""
    w = -A.spectrum.eigenvalues - rule.shift
    bad = (np.abs(np.angle(w)) <= rule.theta + 1e-12) | (np.abs(w) <= rule.rho * (1 + 1e-12))
    if np.any(bad):
        raise err(f"spectrum of {A.label} is not separated by the path (rho={rule.rho:.3g}, "
                  f"theta={rule.theta:.3g}, shift={rule.shift})")


def _default_rule(A: LinOp, phi: float, tail: float | None, quad: QuadSettings | None) -> ContourRule:
    lim = np.pi - spectral_angle(A)
    if lim <= phi:
        raise NotSectorial(f"{A.label} is not sectorial beyond angle {phi:.4g}")
    mins = A.min_abs_eig
    if mins < SPECTRUM_GUARD:
        raise NotInvertible(f"{A.label} is singular")
    scale = float(np.max(np.abs(A.spectrum.eigenvalues)))
    return rule_from_settings(0.5 * mins, 0.5 * (phi + lim), scale, quad, tail_decay=tail)


def _contract(rule: ContourRule, a: NDArray, scalars: NDArray) -> NDArray:
    """(1/2 pi i) sum_k w_k s_k (a + z_k)^{-1}; ``scalars`` may carry extra leading axes."""
    R = batched_resolvents(a, rule.points)
    ws = scalars * rule.weights
    return np.tensordot(ws, R, axes=(-1, 0)) / TWO_PI_I


def dunford(f: HoloFunction, A: LinOp, rule: ContourRule | None = None,
            quad: QuadSettings | None = None) -> LinOp:
    """f(-A) as the contour integral of f(lam) (A + lam)^{-1}."""
    if rule is None:
        rule = _default_rule(A, f.phi, f.decay_eta, quad)
    elif f.phi >= rule.theta:
        raise AngleConflict(f"function angle {f.phi:.4g} >= contour angle {rule.theta:.4g}")
    if rule.tail_decay is None:
        rule = rule.with_tail_decay(f.decay_eta)
    _check_poles(A, rule)
    return LinOp(_contract(rule, A.entries, f(rule.points)), f"{f.label}(-{A.label})")


def residue_oracle(f: HoloFunction, A: LinOp) -> NDArray[np.complex128]:
    """V diag(f(-mu)) V^{-1}; needs a diagonalizable A."""
    sp = A.spectrum
    if sp.defective:
        raise ValueError("residue oracle needs a diagonalizable matrix")
    V = sp.vectors
    return V @ np.diag(f(-sp.eigenvalues)) @ np.linalg.inv(V)


def _power_weights(z: complex, pts: NDArray) -> NDArray:
    return np.exp(z * _mlog(pts))


def _shifted_power_rule(A: LinOp, z: complex, quad: QuadSettings | None) -> ContourRule:
    delta = min(0.5 * A.min_abs_eig, 0.1)
    lim = np.pi - spectral_angle(A)
    scale = float(np.max(np.abs(A.spectrum.eigenvalues)))
    return rule_from_settings(0.0, 0.5 * lim, scale, quad, shift=-delta, tail_decay=-z.real)


def complex_power(A: LinOp, z: complex, rule: ContourRule | None = None,
                  quad: QuadSettings | None = None) -> LinOp:
    """A^z from the resolvent integral of (-lam)^z (cut on the positive reals).

    Re z < 0 is integrated directly, Re z > 0 inverts A^{-z}, and purely
    imaginary z uses A^{z-1} A with A^{z-1} taken on the path shifted left by
    delta = min(|mu|_min / 2, 0.1).
    """
    z = complex(z)
    mins = A.min_abs_eig
    if mins < SPECTRUM_GUARD:
        raise NotInvertible(f"{A.label} has 0 in its spectrum")
    if z == 0:
        return LinOp(np.eye(A.dim), f"{A.label}^0")
    if rule is not None:
        if rule.shift == 0 and not 0 < rule.rho < mins:
            raise BranchConflict(f"arc radius {rule.rho:.4g} must lie in (0, {mins:.4g})")
        if rule.shift != 0 and not (rule.shift.real < 0 and abs(rule.shift) < mins):
            raise BranchConflict("shifted path must sit left of the origin inside the spectral gap")
    if z.real > 0:
        inner = complex_power(A, -z, rule, quad)
        return LinOp(np.linalg.inv(inner.entries), f"{A.label}^{z}")
    if z.real == 0:
        zm = z - 1
        r = rule if (rule is not None and rule.shift != 0) else _shifted_power_rule(A, zm, quad)
        r = r.with_tail_decay(-zm.real) if r.tail_decay is None else r
        _check_poles(A, r, BranchConflict)
        m = _contract(r, A.entries, _power_weights(zm, r.points))
        return LinOp(m @ A.entries, f"{A.label}^{z}")
    if rule is None:
        rule = _default_rule(A, 0.0, -z.real, quad)
    if rule.tail_decay is None:
        rule = rule.with_tail_decay(-z.real)
    _check_poles(A, rule, BranchConflict)
    return LinOp(_contract(rule, A.entries, _power_weights(z, rule.points)), f"{A.label}^{z}")


def power_semigroup_residual(A: LinOp, z1: complex, z2: complex, rule: ContourRule | None = None,
                             quad: QuadSettings | None = None) -> float:
    if complex(z1).real >= 0 or complex(z2).real >= 0:
        raise ValueError("semigroup residual needs Re z1, Re z2 < 0")
    p1 = complex_power(A, z1, rule, quad).entries
    p2 = complex_power(A, z2, rule, quad).entries
    p12 = complex_power(A, complex(z1) + complex(z2), rule, quad).entries
    return op_norm(p1 @ p2 - p12)


@dataclass(frozen=True)
class DecayProbe:
    sup_value: float
    fitted_slope: float
    slope_contract: float
    passed: bool
    radii: NDArray = field(repr=False)
    norms: NDArray = field(repr=False)


def power_decay_probe(A: LinOp, rho_exp: float, phi: float, eta: float, z_grid=None,
                      quad: QuadSettings | None = None) -> DecayProbe:
    """sup (1+|z|^eta) ||A^rho (A+z)^{-1}|| on S_phi and the log-log slope on the top decade."""
    if not 0 < rho_exp < 1:
        raise ValueError("rho_exp must lie in (0, 1)")
    if not 0 <= eta < 1 - rho_exp:
        raise ValueError(f"need 0 <= eta < 1 - rho_exp = {1 - rho_exp}")
    if np.pi - spectral_angle(A) <= phi:
        raise NotSectorial(f"{A.label} is not sectorial beyond angle {phi:.4g}")
    if z_grid is None:
        radii = np.logspace(-2, 4, 151)
        angles = np.array([0.0]) if phi == 0 else np.linspace(-phi, phi, 5)
        z_grid = (radii[None, :] * np.exp(1j * angles)[:, None]).ravel()
    z = np.asarray(z_grid, dtype=complex)
    Ap = complex_power(A, rho_exp, quad=quad).entries
    R = batched_resolvents(A.entries, z)
    norms = np.linalg.norm(Ap[None] @ R, ord=2, axis=(1, 2))
    sup = float(np.max((1 + np.abs(z) ** eta) * norms))
    r = np.abs(z)
    top = r >= r.max() / 10 * (1 - 1e-12)
    ur = np.unique(r[top])
    best = np.array([norms[top][r[top] == v].max() for v in ur])
    slope = float(np.polyfit(np.log(ur), np.log(best), 1)[0]) if len(ur) > 1 else float("nan")
    contract = -eta + 0.05
    return DecayProbe(sup, slope, contract, bool(np.isfinite(sup) and slope <= contract), r, norms)


def kw_sum_norm(A: LinOp, h: HoloFunction, t: float, coeffs, quad: QuadSettings | None = None):
    """|| sum_k a_k h(-t 2^{-k} A) || with all terms on one shared contour.

    ``coeffs`` may be a single sequence or a 2-D array of draws (one per
    row); the return value is a float or an array accordingly.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    a = np.asarray(coeffs, dtype=complex)
    single = a.ndim == 1
    a = np.atleast_2d(a)
    if np.any(np.abs(a) > 1 + 1e-12):
        raise ValueError("coefficients must lie in the closed unit disk")
    n = a.shape[1]
    if n == 0 or not np.any(a):
        return 0.0 if single else np.zeros(a.shape[0])
    lim = np.pi - spectral_angle(A)
    if lim <= h.phi:
        raise NotSectorial(f"{A.label} is not sectorial beyond angle {h.phi:.4g}")
    scale = max(float(np.max(np.abs(A.spectrum.eigenvalues))), 2.0 ** (n - 1) / t)
    rule = rule_from_settings(0.5 * A.min_abs_eig, 0.5 * (h.phi + lim), scale, quad,
                              tail_decay=h.decay_eta)
    _check_poles(A, rule)
    s = t * 2.0 ** -np.arange(n)
    H = h(s[:, None] * rule.points[None, :])          # (n, nodes)
    combo = a @ H                                      # (draws, nodes)
    mats = _contract(rule, A.entries, combo)           # (draws, dim, dim)
    vals = np.linalg.norm(mats, ord=2, axis=(1, 2))
    return float(vals[0]) if single else vals
