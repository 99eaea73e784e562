"""Kicked-Hamiltonian dynamics in the geometric representation (d=2).

Scatterers are slabs {0} x r*Sigma placed at the integer grid (kick time m,
site j); the particle moves ballistically with phat = (1, p) and receives a
momentum kick p -> p - kappa*w when it crosses a kick time inside a slab
(w = transverse offset in units of r, Sigma = (-1/2, 1/2)).  The first
component of phat is the constant of motion and stays 1 throughout.

Stepping is exact: there is nothing to search between kick times.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit


@dataclass(frozen=True)
class KickedConfig:
    radius: float
    kappa: float = 1.0
    kick_spacing: float = 1.0

    def __post_init__(self):
        if self.radius <= 0 or self.radius >= 1:
            raise ValueError("slab radius must be in (0, 1)")
        if self.kick_spacing <= 0:
            raise ValueError("kick spacing must be positive")

    @property
    def density(self):
        return 1.0 / self.kick_spacing

    @property
    def mean_collision_time(self):
        # 1 / (nbar * vol(r * Sigma)) with vol Sigma = 1.
        return self.kick_spacing / self.radius


@njit(cache=True)
def _kicked_first_hits(spacing, r, t0, rho0, p, max_time, out_t, out_j):
    half = 0.5 * r
    for i in range(t0.shape[0]):
        ti = t0[i]
        rho = rho0[i]
        pi = p[i]
        k = np.floor(ti / spacing) + 1.0
        hit_t = np.inf
        hit_j = 0.0
        while k * spacing <= max_time[i]:
            tau = k * spacing - ti
            x = rho + tau * pi
            j = np.rint(x)
            if abs(x - j) < half:
                hit_t = tau
                hit_j = j
                break
            k += 1.0
        out_t[i] = hit_t
        out_j[i] = hit_j


def kicked_first_hits(config: KickedConfig, t0, rho0, p, max_time):
    """Time to the first slab collision for each launch (inf if none before
    max_time).  t0 is the launch time, rho0 the transverse position at t0."""
    t0 = np.ascontiguousarray(t0, dtype=float)
    rho0 = np.ascontiguousarray(rho0, dtype=float)
    p = np.broadcast_to(np.asarray(p, dtype=float), t0.shape).copy()
    max_time = np.broadcast_to(np.asarray(max_time, dtype=float),
                               t0.shape).copy()
    out_t = np.empty_like(t0)
    out_j = np.empty_like(t0)
    _kicked_first_hits(config.kick_spacing, config.radius, t0, rho0, p,
                       max_time, out_t, out_j)
    return out_t, out_j


@njit(cache=True)
def _kicked_trajectories(spacing, r, kappa, rho0, p0, n_col, max_kicks):
    n = rho0.shape[0]
    tau = np.full((n, n_col), np.nan)
    w_arr = np.full((n, n_col), np.nan)
    p_arr = np.full((n, n_col), np.nan)
    n_done = np.zeros(n, dtype=np.int64)
    censored = np.zeros(n, dtype=np.bool_)
    half = 0.5 * r
    for i in range(n):
        rho = rho0[i]
        p = p0[i]
        t_last = 0.0  # time of the last collision (or launch)
        t_prev = 0.0  # time of the previous kick
        k = 1
        nth = 0
        while nth < n_col:
            if k > max_kicks:
                censored[i] = True
                break
            t_now = k * spacing
            x = rho + (t_now - t_prev) * p
            j = np.rint(x)
            if abs(x - j) < half:
                w = (x - j) / r
                tau[i, nth] = t_now - t_last
                w_arr[i, nth] = w
                p = p - kappa * w
                p_arr[i, nth] = p
                t_last = t_now
                nth += 1
                n_done[i] = nth
            rho = x
            t_prev = t_now
            k += 1
    return tau, w_arr, p_arr, n_done, censored


def kicked_run_batch(config: KickedConfig, rho0, p0, n_collisions,
                     max_kicks=10_000_000):
    """Full kicked dynamics: collision times, impact parameters w in Sigma,
    and post-kick momenta, per trajectory.

    max_kicks caps the total kick count per trajectory (censoring guard for
    locked-in channels at rational momenta).
    """
    rho0 = np.ascontiguousarray(rho0, dtype=float)
    p0 = np.broadcast_to(np.asarray(p0, dtype=float), rho0.shape).copy()
    tau, w, p, n_done, censored = _kicked_trajectories(
        config.kick_spacing, config.radius, config.kappa, rho0, p0,
        int(n_collisions), int(max_kicks))
    return {"tau": tau, "w": w, "p": p, "n_done": n_done,
            "censored": censored, "phat0": 1.0}
