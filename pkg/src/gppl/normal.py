"""Standard normal distribution helpers and the seeded random streams built on them."""
from __future__ import annotations

import numpy as np
from scipy import special

_SQRT2 = np.sqrt(2.0)


def norm_cdf(x):
    return 0.5 * special.erfc(-np.asarray(x, dtype=float) / _SQRT2)


def norm_sf(x):
    return 0.5 * special.erfc(np.asarray(x, dtype=float) / _SQRT2)


def norm_ppf(q):
    """Inverse of :func:`norm_cdf`; relative accuracy near machine precision."""
    q = np.asarray(q, dtype=float)
    if np.any((q < 0) | (q > 1)):
        raise ValueError("probabilities must lie in [0, 1]")
    return special.ndtri(q)


def two_sided_pvalue(z):
    """2 * (1 - Phi(|z|)), evaluated without cancellation."""
    return special.erfc(np.abs(np.asarray(z, dtype=float)) / _SQRT2)


def stream(seed: int, *stream_id: int) -> np.random.Generator:
    """Independent Philox (counter-based) generator for the sub-stream ``stream_id`` of ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream_id))
    return np.random.Generator(np.random.Philox(ss))


def uniform_open(rng: np.random.Generator, size) -> np.ndarray:
    """Uniforms on the open interval (0, 1) from 53 random bits."""
    bits = rng.bit_generator.random_raw(size) >> np.uint64(11)
    return (bits.astype(float) + 0.5) * 2.0 ** -53


def standard_normal(rng: np.random.Generator, size) -> np.ndarray:
    """Standard normal draws by inverse-CDF transform of :func:`uniform_open`."""
    return special.ndtri(uniform_open(rng, size))
