"""Deterministic counter-based randomness.

Point-set queries must be pure functions of (spec, box): the same cell of a
Poisson realization, or the displacement of a given scatterer, has to come out
identical no matter which box or worker asked for it.  Everything here is
built on the splitmix64 finalizer, applied to (seed, key...) tuples, so there
is no sequential RNG state to share.
"""

from __future__ import annotations

import numpy as np

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)
_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S1 = np.uint64(30)
_S2 = np.uint64(27)
_S3 = np.uint64(31)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


def mix64(x):
    """splitmix64 finalizer; accepts scalar or array of uint64."""
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        x = (x ^ (x >> _S1)) * _M1 & _MASK
        x = (x ^ (x >> _S2)) * _M2 & _MASK
        x = x ^ (x >> _S3)
    return x


def combine(seed, *keys):
    """Hash a seed with integer keys (scalars or equal-length arrays).

    int64 keys are reinterpreted as uint64, so negative cell indices are fine.
    """
    h = mix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF))
    with np.errstate(over="ignore"):
        for k in keys:
            k = np.asarray(k)
            if k.dtype.kind == "i":
                k = k.astype(np.int64).view(np.uint64)
            else:
                k = k.astype(np.uint64)
            h = mix64((h ^ k) + _GAMMA & _MASK)
    return h


def hash_floats(seed, coords):
    """Hash a seed with the raw bit patterns of float64 coordinates.

    coords: array (..., d). Returns uint64 array of shape (...).  Used to give
    every scatterer a stable identity for jitter draws.
    """
    coords = np.ascontiguousarray(coords, dtype=np.float64)
    bits = coords.view(np.uint64)
    h = np.full(bits.shape[:-1], mix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF)),
                dtype=np.uint64)
    with np.errstate(over="ignore"):
        for j in range(bits.shape[-1]):
            h = mix64((h ^ bits[..., j]) + _GAMMA & _MASK)
    return h


def uniforms(state, n):
    """n uniforms in [0,1) from a uint64 stream state; returns (u, new_state).

    state may be a scalar or an array; with array state, n draws are produced
    per stream (output shape (*state.shape, n)).
    """
    state = np.asarray(state, dtype=np.uint64)
    with np.errstate(over="ignore"):
        idx = np.arange(1, n + 1, dtype=np.uint64) * _GAMMA & _MASK
        vals = mix64(state[..., None] + idx & _MASK)
        u = (vals >> np.uint64(11)).astype(np.float64) * _INV53
        new_state = state + np.uint64(n) * _GAMMA & _MASK
    return u, new_state


def poisson_counts(state, lam):
    """Poisson(lam) draw per stream state (Knuth), consuming a varying number
    of uniforms; deterministic per state.  Suitable for lam up to ~50.

    Returns (counts, consumed_streams) where the per-cell position draws
    should use a state offset past the consumed block; we simply derive the
    position stream from mix64(state ^ const) so no offset bookkeeping is
    needed.
    """
    state = np.asarray(state, dtype=np.uint64)
    shape = state.shape
    flat = state.ravel()
    L = np.exp(-float(lam))
    counts = np.zeros(flat.shape, dtype=np.int64)
    prod = np.ones(flat.shape)
    active = np.ones(flat.shape, dtype=bool)
    k = np.uint64(0)
    # Knuth: multiply uniforms until the product drops below e^-lam.
    with np.errstate(over="ignore"):
        while np.any(active):
            k = k + np.uint64(1)
            vals = mix64(flat + k * _GAMMA & _MASK)
            u = (vals >> np.uint64(11)).astype(np.float64) * _INV53
            prod[active] *= u[active]
            done = active & (prod < L)
            counts[active] += 1
            counts[done] -= 1
            active &= ~done
            if k > np.uint64(2000):
                raise RuntimeError("poisson_counts: intensity too large")
    return counts.reshape(shape)
