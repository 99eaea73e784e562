"""Reference event-driven engine.

Works on any ScattererConfig through points_in_box queries, with a lazily
built uniform-grid spatial index and ray traversal visiting cells in order.
It is the correctness baseline: the compiled fast paths in batch.py are
cross-checked against it.  Use it directly for cut-and-project, Delone,
jittered, or d>=3 configurations at desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..pointset import Box, ScattererConfig, ConfigError

DISC_TOL = 1e-14   # discriminant below this (times r^2) is a grazing miss
T_MIN_FACTOR = 1e-12  # hits closer than this (times r) are the departing wall


class InvalidState(ValueError):
    """Launch point inside a scatterer, or overlap detected in flight."""


@dataclass
class ParticleState:
    q: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.v = np.asarray(self.v, dtype=float)

    def validated(self):
        if abs(np.linalg.norm(self.v) - 1.0) > 1e-12:
            raise InvalidState("velocity must be a unit vector")
        return self


@dataclass
class CollisionEvent:
    index: int
    t: float
    center: np.ndarray
    w_vec: np.ndarray
    s_vec: np.ndarray
    v_in: np.ndarray
    v_out: np.ndarray
    ell: float

    @property
    def w_signed(self):
        """Signed impact parameter (d=2): component along the CCW
        perpendicular of v_in."""
        perp = np.array([-self.v_in[1], self.v_in[0]])
        return float(self.w_vec @ perp)

    @property
    def s_signed(self):
        perp = np.array([-self.v_out[1], self.v_out[0]])
        return float(self.s_vec @ perp)


@dataclass
class TrajectoryRecord:
    initial: ParticleState
    events: list
    termination: str  # "count" | "time" | "censored" | "escaped"
    radius: float

    def free_paths(self, skip_first=True):
        start = 1 if skip_first else 0
        return np.array([e.ell for e in self.events[start:]])


class _Censored:
    """Sentinel returned when no collision occurs within L_max."""

    def __init__(self, L_max):
        self.L_max = L_max

    def __repr__(self):
        return f"Censored(L_max={self.L_max})"


class Engine:
    """Grid-indexed exact first-collision search over a ScattererConfig."""

    def __init__(self, config: ScattererConfig):
        if config.geometry != "sphere":
            raise ConfigError("Engine handles spherical geometry; use the "
                              "kicked module for slabs")
        self.config = config
        self.r = config.radius
        self.d = config.dim
        reff = config.radius + config.displacement_bound()
        dens = config.density
        natural = (1.0 / dens) ** (1.0 / self.d) if dens > 0 else 1.0
        self.h = max(2.0 * reff, natural)
        self._cells: dict = {}

    def _cell_points(self, idx):
        key = tuple(int(i) for i in idx)
        pts = self._cells.get(key)
        if pts is None:
            lo = np.array(key, dtype=float) * self.h
            pts = self.config.points_in_box(Box(lo, lo + self.h))
            self._cells[key] = pts
        return pts

    def _neighborhood(self, idx):
        offs = np.array(np.meshgrid(*[[-1, 0, 1]] * self.d,
                                    indexing="ij")).reshape(self.d, -1).T
        parts = [self._cell_points(idx + o) for o in offs]
        parts = [p for p in parts if len(p)]
        if not parts:
            return np.empty((0, self.d))
        return np.concatenate(parts)

    def first_collision(self, state: ParticleState, L_max,
                        exclude_center=None):
        """Earliest ray-sphere intersection within path length L_max.

        Returns (t, center) or a Censored sentinel.  exclude_center removes
        the departing scatterer for the whole flight (a straight ray cannot
        legitimately re-hit the sphere it just left).
        """
        state.validated()
        q, v, r = state.q, state.v, self.r
        h = self.h
        cell = np.floor(q / h).astype(np.int64)

        # Launch-point validity: not inside any nearby scatterer.
        near = self._neighborhood(cell)
        if len(near):
            dist2 = np.sum((near - q) ** 2, axis=1)
            inside = dist2 < (r * (1 - 1e-12)) ** 2
            if exclude_center is not None:
                inside &= ~np.all(np.abs(near - exclude_center) < 1e-12,
                                  axis=1)
            if np.any(inside):
                raise InvalidState("state starts inside a scatterer")

        tmax = np.empty(self.d)
        tdelta = np.empty(self.d)
        step = np.zeros(self.d, dtype=np.int64)
        for a in range(self.d):
            if v[a] > 0:
                step[a] = 1
                tmax[a] = ((cell[a] + 1) * h - q[a]) / v[a]
                tdelta[a] = h / v[a]
            elif v[a] < 0:
                step[a] = -1
                tmax[a] = (cell[a] * h - q[a]) / v[a]
                tdelta[a] = -h / v[a]
            else:
                tmax[a] = np.inf
                tdelta[a] = np.inf

        t_min = T_MIN_FACTOR * r
        best_t = np.inf
        best_c = None
        t_enter = 0.0
        while True:
            cands = self._neighborhood(cell)
            if len(cands):
                b = cands - q
                bv = b @ v
                disc = bv ** 2 - (np.sum(b * b, axis=1) - r * r)
                ok = disc > DISC_TOL * r * r
                if exclude_center is not None:
                    ok &= ~np.all(np.abs(cands - exclude_center) < 1e-12,
                                  axis=1)
                if np.any(ok):
                    roots = bv[ok] - np.sqrt(disc[ok])
                    lows = bv[ok] + np.sqrt(disc[ok])
                    # A strictly interior start (root straddle) means overlap
                    # with the departing sphere geometry: invalid input.
                    straddle = (roots < -t_min) & (lows > t_min)
                    if np.any(straddle):
                        raise InvalidState("ray starts inside a scatterer "
                                           "(overlap during traversal)")
                    roots = roots[roots > t_min]
                    if len(roots):
                        tr = roots.min()
                        if tr < best_t:
                            best_t = tr
                            sel = np.where(ok)[0]
                            hit_roots = bv[ok] - np.sqrt(disc[ok])
                            j = sel[np.argmin(np.where(hit_roots > t_min,
                                                       hit_roots, np.inf))]
                            best_c = cands[j]
            t_exit = float(tmax.min())
            if best_t <= t_exit + 1e-12:
                break
            if t_exit > L_max:
                break
            a = int(np.argmin(tmax))
            cell[a] += step[a]
            tmax[a] += tdelta[a]
            t_enter = t_exit
        if best_t > L_max or best_c is None:
            return _Censored(L_max)
        return float(best_t), best_c


def first_collision(config, state, L_max, exclude_center=None, engine=None):
    """Module-level convenience; builds an Engine if one is not supplied."""
    eng = engine if engine is not None else Engine(config)
    return eng.first_collision(state, L_max, exclude_center)


def run_trajectory(config, smap, state, n_collisions=None, time_max=None,
                   L_max=None, engine=None):
    """Alternate free flights and instantaneous scatterings.

    Stops at n_collisions, at time_max, or on a censored flight (no
    collision within L_max).  Deterministic: all randomness, if any, went
    into the initial state.
    """
    if n_collisions is None and time_max is None:
        raise ConfigError("need a stop criterion (n_collisions or time_max)")
    eng = engine if engine is not None else Engine(config)
    r = config.radius
    if L_max is None:
        L_max = 1e3 / (config.density * 2 * r) if config.density > 0 else 1e6
    state = ParticleState(np.array(state.q, dtype=float),
                          np.array(state.v, dtype=float)).validated()
    initial = ParticleState(state.q.copy(), state.v.copy())
    events = []
    t = 0.0
    exclude = None
    termination = "count"
    while True:
        if n_collisions is not None and len(events) >= n_collisions:
            termination = "count"
            break
        res = eng.first_collision(state, L_max, exclude_center=exclude)
        if isinstance(res, _Censored):
            termination = "censored"
            break
        ell, center = res
        if time_max is not None and t + ell > time_max:
            termination = "time"
            break
        t += ell
        hit = state.q + ell * state.v
        b_vec = (hit - center) / r
        w_vec = b_vec - (b_vec @ state.v) * state.v
        v_in = state.v.copy()
        v_out, s_vec = smap.apply_scattering(v_in, w_vec)
        slen2 = float(s_vec @ s_vec)
        exit_point = center + r * (s_vec + np.sqrt(max(0.0, 1.0 - slen2))
                                   * v_out)
        events.append(CollisionEvent(
            index=len(events) + 1, t=t, center=center, w_vec=w_vec,
            s_vec=s_vec, v_in=v_in, v_out=v_out.copy(), ell=ell))
        state = ParticleState(exit_point, v_out)
        exclude = center
    return TrajectoryRecord(initial=initial, events=events,
                            termination=termination, radius=r)


def sample_initial_state(config, box, rng, max_tries=1000):
    """Uniform launch point in the box, outside all scatterers, with a
    uniform direction (d=2) or a uniform sphere direction (d>2)."""
    if not isinstance(box, Box):
        box = Box(*box)
    d = config.dim
    r = config.radius
    pts_box = box.inflate(r + config.displacement_bound())
    centers = config.points_in_box(pts_box)
    for _ in range(max_tries):
        q = box.lo + rng.random(d) * (box.hi - box.lo)
        if len(centers):
            if np.min(np.sum((centers - q) ** 2, axis=1)) <= r * r:
                continue
        if d == 2:
            phi = rng.uniform(0.0, 2 * np.pi)
            v = np.array([np.cos(phi), np.sin(phi)])
        else:
            v = rng.standard_normal(d)
            v /= np.linalg.norm(v)
        return ParticleState(q, v)
    raise ConfigError("could not find a free launch point")


def macroscopic_rescale(record: TrajectoryRecord, r=None):
    """Free paths and times in macroscopic units: xi = r^(d-1) * ell."""
    r = record.radius if r is None else r
    d = record.initial.q.size
    fac = r ** (d - 1)
    events = [CollisionEvent(index=e.index, t=e.t * fac, center=e.center,
                             w_vec=e.w_vec, s_vec=e.s_vec, v_in=e.v_in,
                             v_out=e.v_out, ell=e.ell * fac)
              for e in record.events]
    return TrajectoryRecord(initial=record.initial, events=events,
                            termination=record.termination, radius=r)


def rescale_paths(ell, r, d=2):
    """Array version of the macroscopic rescaling."""
    return np.asarray(ell, dtype=float) * r ** (d - 1)
