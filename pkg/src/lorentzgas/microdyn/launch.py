"""Finite-volume mean free path / mean collision time estimates.

The launch measure follows the truncated construction: fix a bounded convex
domain, launch from scatterer surfaces and from the domain boundary with
weights proportional to their transverse measures, and treat the boundary as
an absorbing scatterer.  As the domain grows the mean converges to
(1 - nbar r^d vol B^d)/(nbar r^(d-1) vol B^(d-1)) for the Lorentz gas and to
1/(nbar vol(r Sigma)) for the kicked system, independently of the domain
shape and of the configuration.
"""

from __future__ import annotations

import numpy as np

from ..kernels import kicked_mean_collision_time, micro_mean_free_path
from ..pointset import (ConfigError, LatticeSpec, PoissonSpec,
                        ScattererConfig)
from . import batch
from .kicked import KickedConfig, kicked_first_hits

_I64_SENT = np.int64(-(2 ** 62))


def _sample_lattice_scatterers(spec: LatticeSpec, T, r, n, rng):
    """Uniform draw among lattice points inside the ball of radius T - r."""
    R = T - r
    binv = np.linalg.inv(spec.basis)
    corners = np.array([[R, R], [R, -R], [-R, R], [-R, -R]]) @ binv
    cmin = np.floor(corners.min(axis=0)).astype(np.int64)
    cmax = np.ceil(corners.max(axis=0)).astype(np.int64)
    out = np.empty((n, 2))
    midx = np.empty((n, 2), dtype=np.int64)
    got = 0
    while got < n:
        take = 2 * (n - got) + 16
        c = np.stack([rng.integers(cmin[0], cmax[0] + 1, take),
                      rng.integers(cmin[1], cmax[1] + 1, take)], axis=1)
        y = c.astype(float) @ spec.basis
        ok = np.einsum("ij,ij->i", y, y) <= R * R
        k = min(int(ok.sum()), n - got)
        out[got:got + k] = y[ok][:k]
        midx[got:got + k] = c[ok][:k]
        got += k
    return out, midx


def _sample_poisson_scatterers(spec: PoissonSpec, T, r, n, rng, cap=24):
    """Uniform draw among Poisson points inside the ball of radius T - r
    (uniform cell, then point acceptance proportional to cell occupancy)."""
    R = T - r
    lim = int(np.ceil(R))
    out = np.empty((n, 2))
    got = 0
    while got < n:
        take = 4 * (n - got) + 32
        cells = np.stack([rng.integers(-lim, lim, take),
                          rng.integers(-lim, lim, take)], axis=1)
        pts = spec.cell_points(cells)
        if len(pts) == 0:
            continue
        # Each point of a uniformly drawn cell accepted with prob 1/cap:
        # uniform over points regardless of cell occupancy.
        u = rng.random(len(pts))
        keep = (u < 1.0 / cap) & (np.einsum("ij,ij->i", pts, pts) <= R * R)
        sel = pts[keep]
        k = min(len(sel), n - got)
        out[got:got + k] = sel[:k]
        got += k
    return out


def mean_free_path_check(config: ScattererConfig, T, n_launches, seed,
                         domain="ball", L_pad=1.05):
    """Empirical launch-measure mean free path on the truncated domain.

    domain "ball": |q| <= T; domain "square": [-T, T]^2.  Returns a dict
    with the empirical mean, its standard error, the infinite-volume target,
    and bookkeeping weights.
    """
    if config.dim != 2:
        raise ConfigError("launch harness is 2D")
    rng = np.random.default_rng(seed)
    r = config.radius
    nbar = config.density
    d = 2

    phi = rng.uniform(0.0, 2 * np.pi, n_launches)
    v = np.stack([np.cos(phi), np.sin(phi)], axis=1)
    vperp = np.stack([-v[:, 1], v[:, 0]], axis=1)

    if domain == "ball":
        vol = np.pi * T * T
        W_bd = np.full(n_launches, 2.0 * T)
    elif domain == "square":
        vol = 4.0 * T * T
        W_bd = 2.0 * T * (np.abs(v[:, 0]) + np.abs(v[:, 1]))
    else:
        raise ConfigError("domain must be 'ball' or 'square'")

    if domain == "ball":
        vol_r = np.pi * (T - r) ** 2
    else:
        vol_r = 4.0 * (T - r) ** 2
    N_sc = nbar * vol_r
    W_sc = N_sc * 2.0 * r

    from_scatterer = rng.random(n_launches) < W_sc / (W_sc + W_bd)
    n_sc = int(from_scatterer.sum())

    q = np.empty((n_launches, 2))
    exclude_lattice = np.full((n_launches, 2), _I64_SENT, dtype=np.int64)
    exclude_coords = np.full((n_launches, 2), np.nan)

    src = config.source
    if n_sc:
        if isinstance(src, LatticeSpec):
            if domain == "square":
                # Rejection against the square via the circumscribed ball.
                centers = np.empty((n_sc, 2))
                midx = np.empty((n_sc, 2), dtype=np.int64)
                got = 0
                while got < n_sc:
                    cc, mm = _sample_lattice_scatterers(
                        src, T * np.sqrt(2.0), r, 2 * (n_sc - got) + 16, rng)
                    ok = np.all(np.abs(cc) <= T - r, axis=1)
                    k = min(int(ok.sum()), n_sc - got)
                    centers[got:got + k] = cc[ok][:k]
                    midx[got:got + k] = mm[ok][:k]
                    got += k
            else:
                centers, midx = _sample_lattice_scatterers(src, T, r, n_sc,
                                                           rng)
            exclude_lattice[from_scatterer] = midx
        elif isinstance(src, PoissonSpec):
            if domain == "square":
                centers = np.empty((n_sc, 2))
                got = 0
                while got < n_sc:
                    cc = _sample_poisson_scatterers(
                        src, T * np.sqrt(2.0), r, 2 * (n_sc - got) + 16, rng)
                    ok = np.all(np.abs(cc) <= T - r, axis=1)
                    k = min(int(ok.sum()), n_sc - got)
                    centers[got:got + k] = cc[ok][:k]
                    got += k
            else:
                centers = _sample_poisson_scatterers(src, T, r, n_sc, rng)
            exclude_coords[from_scatterer] = centers
        else:
            raise ConfigError("mean_free_path_check supports lattice and "
                              "Poisson sources")
        h = rng.uniform(-r, r, n_sc)
        fwd = np.sqrt(r * r - h * h)
        q[from_scatterer] = (centers + h[:, None] * vperp[from_scatterer]
                             + fwd[:, None] * v[from_scatterer])

    n_bd = n_launches - n_sc
    if n_bd:
        vb = v[~from_scatterer]
        vpb = vperp[~from_scatterer]
        if domain == "ball":
            h = rng.uniform(-T, T, n_bd)
            back = np.sqrt(np.maximum(T * T - h * h, 0.0))
            q[~from_scatterer] = h[:, None] * vpb - back[:, None] * vb
        else:
            # Two rear faces; choose by their projected measure.
            wx = np.abs(vb[:, 0])
            wy = np.abs(vb[:, 1])
            pick_x = rng.random(n_bd) < wx / (wx + wy)
            u = rng.uniform(-T, T, n_bd)
            qb = np.empty((n_bd, 2))
            qb[pick_x, 0] = np.where(vb[pick_x, 0] > 0, -T, T)
            qb[pick_x, 1] = u[pick_x]
            qb[~pick_x, 1] = np.where(vb[~pick_x, 1] > 0, -T, T)
            qb[~pick_x, 0] = u[~pick_x]
            q[~from_scatterer] = qb

    # Exit time from the domain (boundary treated as a scatterer).
    if domain == "ball":
        qv = np.einsum("ij,ij->i", q, v)
        qq = np.einsum("ij,ij->i", q, q)
        t_exit = -qv + np.sqrt(np.maximum(qv * qv + T * T - qq, 0.0))
    else:
        with np.errstate(divide="ignore"):
            tx = np.where(v[:, 0] > 0, (T - q[:, 0]) / v[:, 0],
                          np.where(v[:, 0] < 0, (-T - q[:, 0]) / v[:, 0],
                                   np.inf))
            ty = np.where(v[:, 1] > 0, (T - q[:, 1]) / v[:, 1],
                          np.where(v[:, 1] < 0, (-T - q[:, 1]) / v[:, 1],
                                   np.inf))
        t_exit = np.minimum(tx, ty)

    t_hit = batch.first_hit_batch(config, q, v, float(t_exit.max() * L_pad),
                                  exclude_lattice=exclude_lattice,
                                  exclude_coords=exclude_coords)
    tau1 = np.minimum(t_hit, t_exit)
    target = micro_mean_free_path(d, nbar, r)
    return {
        "mean": float(tau1.mean()),
        "stderr": float(tau1.std(ddof=1) / np.sqrt(n_launches)),
        "target": float(target),
        "boundary_fraction": n_bd / n_launches,
        "scatterer_weight": float(W_sc),
        "boundary_weight": float(W_bd.mean()),
        "n_launches": n_launches,
    }


def kicked_mean_collision_time_check(config: KickedConfig, p, L, n_launches,
                                     seed):
    """Empirical launch-measure mean collision time for fixed phat = (1, p)
    on the domain [0, L]^2; target 1/(nbar vol(r Sigma))."""
    rng = np.random.default_rng(seed)
    r = config.radius
    spacing = config.kick_spacing
    p = float(p)

    n_kicks = int(np.floor(L / spacing)) + 1
    n_sites = int(np.floor(L)) + 1
    N_sc = n_kicks * n_sites
    W_sc = N_sc * r
    W_bd = L * (1.0 + abs(p))

    from_scatterer = rng.random(n_launches) < W_sc / (W_sc + W_bd)
    n_sc = int(from_scatterer.sum())
    n_bd = n_launches - n_sc

    t0 = np.empty(n_launches)
    rho0 = np.empty(n_launches)

    if n_sc:
        m = rng.integers(0, n_kicks, n_sc)
        j = rng.integers(0, n_sites, n_sc)
        h = rng.uniform(-0.5 * r, 0.5 * r, n_sc)
        t0[from_scatterer] = m * spacing
        rho0[from_scatterer] = j + h
    if n_bd:
        # Shadow coordinate of the box under direction (1, p).
        if p >= 0:
            hsh = rng.uniform(-p * L, L, n_bd)
        else:
            hsh = rng.uniform(0.0, L * (1.0 - p), n_bd)
        t_in = np.where((hsh >= 0) & (hsh <= L), 0.0,
                        np.where(hsh < 0, -hsh / p if p != 0 else np.inf,
                                 (L - hsh) / p if p != 0 else np.inf))
        t0[~from_scatterer] = t_in
        rho0[~from_scatterer] = hsh + t_in * p

    # Exit time: leave the box in time or transversally.
    with np.errstate(divide="ignore", invalid="ignore"):
        t_time = L - t0
        if p > 0:
            t_trans = (L - rho0) / p
        elif p < 0:
            t_trans = (0.0 - rho0) / p
        else:
            t_trans = np.full(n_launches, np.inf)
    t_exit = np.minimum(t_time, np.maximum(t_trans, 0.0))

    hit_t, _ = kicked_first_hits(config, t0, rho0, p, t0 + t_exit)
    tau1 = np.minimum(hit_t, t_exit)
    target = kicked_mean_collision_time(config.density, r, 2, 1.0)
    return {
        "mean": float(tau1.mean()),
        "stderr": float(tau1.std(ddof=1) / np.sqrt(n_launches)),
        "target": float(target),
        "boundary_fraction": n_bd / n_launches,
        "p": p,
        "n_launches": n_launches,
    }
