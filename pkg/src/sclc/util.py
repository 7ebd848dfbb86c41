"""Seeds, smooth numeric helpers and small shared utilities."""

from __future__ import annotations

import os

import numpy as np

DEFAULT_SEED = 20240601


def resolve_seed(seed: int | None = None) -> int:
    """Explicit seed, else the SCLC_SEED environment variable, else a fixed default."""
    if seed is not None:
        return int(seed)
    env = os.environ.get("SCLC_SEED")
    if env:
        return int(env) % 2**64
    return DEFAULT_SEED


def rng(seed: int | None = None) -> np.random.Generator:
    return np.random.default_rng(resolve_seed(seed))


def loglog_slope(x, y) -> float:
    """Least-squares slope of log y against log x."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    return float(np.polyfit(lx, ly, 1)[0])


def cplx(z) -> dict:
    z = complex(z)
    return {"re": z.real, "im": z.imag}
