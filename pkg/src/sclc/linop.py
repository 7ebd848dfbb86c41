"""Dense complex operators: construction, resolvent solves, norms, spectra and I/O."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Union

import numpy as np
import scipy.linalg as sla
from numpy.typing import ArrayLike, NDArray

from .errors import ConfigError, DimensionMismatch, SingularResolvent

# absolute distance to the spectrum below which a shifted solve is refused
SPECTRUM_GUARD = 1e-9
# eigenvector-basis condition above which a matrix is treated as defective
DEFECTIVE_COND = 1e12

_MAGIC = b"SCLC"


class LinOp:
    """Immutable square complex matrix standing in for an operator.

    The complex Schur form is computed once and reused for every shifted
    solve, so ``resolvent_apply`` costs two triangular solves per call.
    """

    def __init__(self, entries: ArrayLike, label: str = "A"):
        a = np.array(entries, dtype=complex)
        if a.ndim == 0:
            a = a.reshape(1, 1)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise DimensionMismatch(f"operator must be a non-empty square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("operator entries must be finite")
        a.setflags(write=False)
        self._entries = a
        self.label = str(label)

    @property
    def entries(self) -> NDArray[np.complex128]:
        return self._entries

    @property
    def dim(self) -> int:
        return self._entries.shape[0]

    def __repr__(self):
        return f"LinOp(label={self.label!r}, dim={self.dim})"

    # construction helpers
    @classmethod
    def identity(cls, n: int, label: str = "I") -> "LinOp":
        return cls(np.eye(n), label)

    @classmethod
    def diag(cls, values: ArrayLike, label: str = "D") -> "LinOp":
        return cls(np.diag(np.asarray(values, dtype=complex)), label)

    # algebra; results are new operators
    def _other(self, other):
        if isinstance(other, LinOp):
            if other.dim != self.dim:
                raise DimensionMismatch(f"dims {self.dim} and {other.dim} differ")
            return other.entries
        if np.isscalar(other):
            return other * np.eye(self.dim)
        return NotImplemented

    def __add__(self, other):
        o = self._other(other)
        return LinOp(self.entries + o, self.label) if o is not NotImplemented else NotImplemented

    __radd__ = __add__

    def __sub__(self, other):
        o = self._other(other)
        return LinOp(self.entries - o, self.label) if o is not NotImplemented else NotImplemented

    def __neg__(self):
        return LinOp(-self.entries, self.label)

    def __mul__(self, s):
        if np.isscalar(s):
            return LinOp(s * self.entries, self.label)
        return NotImplemented

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, LinOp):
            if other.dim != self.dim:
                raise DimensionMismatch(f"dims {self.dim} and {other.dim} differ")
            return LinOp(self.entries @ other.entries, self.label)
        return self.entries @ np.asarray(other)

    # cached factorizations (pure functions of the immutable entries)
    @cached_property
    def _schur(self):
        t, q = sla.schur(self._entries, output="complex")
        return t, q

    @cached_property
    def spectrum(self) -> "Spectrum":
        return _compute_spectrum(self._entries)

    @cached_property
    def min_abs_eig(self) -> float:
        return float(np.min(np.abs(self.spectrum.eigenvalues)))


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues with multiplicity plus eigenbasis conditioning."""

    eigenvalues: NDArray[np.complex128]
    condition_estimate: float
    defective: bool = False
    vectors: NDArray[np.complex128] | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.eigenvalues.ndim != 1:
            raise ValueError("eigenvalues must be one-dimensional")

    def sorted(self) -> NDArray[np.complex128]:
        ev = self.eigenvalues
        return ev[np.lexsort((np.round(ev.imag, 12), np.round(ev.real, 12)))]


def _compute_spectrum(a: NDArray) -> Spectrum:
    w, v = np.linalg.eig(a)
    cond = float(np.linalg.cond(v))
    defective = not np.isfinite(cond) or cond > DEFECTIVE_COND
    return Spectrum(w, float("inf") if defective else cond, defective, v)


def spectrum_of(A: LinOp) -> Spectrum:
    return A.spectrum


def op_norm(A: Union[LinOp, NDArray]) -> float:
    """Spectral norm (largest singular value)."""
    a = A.entries if isinstance(A, LinOp) else np.asarray(A)
    if a.size == 0:
        return 0.0
    return float(np.linalg.norm(a, 2))


def _check_shift(A: LinOp, lam: complex) -> None:
    d = np.min(np.abs(A.spectrum.eigenvalues + lam))
    if d < SPECTRUM_GUARD:
        raise SingularResolvent(f"-lambda={-lam} is within {d:.3g} of the spectrum of {A.label}")


def resolvent_apply(A: LinOp, lam: complex, X: ArrayLike) -> NDArray[np.complex128]:
    """Solve (A + lam I) Y = X using the cached Schur form and one refinement step."""
    x = np.asarray(X, dtype=complex)
    if x.shape[0] != A.dim or x.ndim not in (1, 2):
        raise DimensionMismatch(f"right-hand side of shape {x.shape} does not fit dim {A.dim}")
    _check_shift(A, lam)
    t, q = A._schur
    ts = t + lam * np.eye(A.dim)

    def solve(rhs):
        return q @ sla.solve_triangular(ts, q.conj().T @ rhs, lower=False)

    y = solve(x)
    r = x - (A.entries @ y + lam * y)
    return y + solve(r)


def resolvent_identity_residual(A: LinOp, lam: complex, mu: complex) -> float:
    """Norm of the first resolvent identity defect at (lam, mu)."""
    eye = np.eye(A.dim)
    ra = resolvent_apply(A, lam, eye)
    rb = resolvent_apply(A, mu, eye)
    return op_norm(ra - rb - (mu - lam) * (ra @ rb))


def batched_resolvents(a: NDArray, z: NDArray) -> NDArray[np.complex128]:
    """Stack of (a + z_k I)^{-1} for a vector of shifts z."""
    n = a.shape[0]
    stack = a[None, :, :] + np.asarray(z)[:, None, None] * np.eye(n)[None]
    return np.linalg.inv(stack)


# ---------------------------------------------------------------- I/O


def matrix_to_json(A: Union[LinOp, NDArray]) -> dict:
    a = A.entries if isinstance(A, LinOp) else np.asarray(A, dtype=complex)
    return {"dim": int(a.shape[0]), "re": a.real.tolist(), "im": a.imag.tolist()}


def matrix_from_json(obj) -> NDArray[np.complex128]:
    """Accepts the {"dim","re","im"} object, a nested list, or a scalar."""
    if isinstance(obj, dict):
        try:
            re = np.asarray(obj["re"], dtype=float)
            im = np.asarray(obj.get("im", np.zeros_like(re)), dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad matrix object: {exc}") from None
        a = re + 1j * im
        a = np.atleast_2d(a)
        if "dim" in obj and a.shape != (obj["dim"], obj["dim"]):
            raise ConfigError(f"matrix shape {a.shape} disagrees with dim={obj['dim']}")
        return a
    try:
        a = np.atleast_2d(np.asarray(obj, dtype=complex))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad matrix literal: {exc}") from None
    return a


def write_binary(A: Union[LinOp, NDArray], path) -> None:
    a = A.entries if isinstance(A, LinOp) else np.asarray(A, dtype=complex)
    n = a.shape[0]
    buf = np.empty(2 * n * n, dtype="<f8")
    col = a.flatten(order="F")
    buf[0::2] = col.real
    buf[1::2] = col.imag
    with open(path, "wb") as fh:
        fh.write(_MAGIC + struct.pack("<I", n) + buf.tobytes())


def read_binary(path) -> NDArray[np.complex128]:
    raw = Path(path).read_bytes()
    if len(raw) < 8 or raw[:4] != _MAGIC:
        raise ConfigError(f"{path}: missing SCLC header")
    (n,) = struct.unpack("<I", raw[4:8])
    vals = np.frombuffer(raw[8:], dtype="<f8")
    if n < 1 or vals.size != 2 * n * n:
        raise ConfigError(f"{path}: expected {2 * n * n} doubles, found {vals.size}")
    col = vals[0::2] + 1j * vals[1::2]
    return col.reshape((n, n), order="F")


def load_matrix(path, label: str | None = None) -> LinOp:
    """Load a LinOp from a JSON or binary file (chosen by the header bytes)."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"operator file not found: {p}")
    head = p.read_bytes()[:4]
    if head == _MAGIC:
        a = read_binary(p)
    else:
        try:
            a = matrix_from_json(json.loads(p.read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: {exc}") from None
    return LinOp(a, label or p.stem)


def save_matrix_json(A: Union[LinOp, NDArray], path) -> None:
    Path(path).write_text(json.dumps(matrix_to_json(A)))
