"""Scatterer location sets: lattices, cut-and-project sets, Delone unions,
Poisson realizations, and jittered variants.

All queries are pure functions of (spec, box).  Boxes are half-open
[lo, hi) on every axis, which makes enumeration over disjoint boxes exactly
consistent.  Points are returned sorted lexicographically.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from . import seeds

# Golden ratio, used by the Fibonacci chain constructors.
TAU = (1.0 + np.sqrt(5.0)) / 2.0

# Refuse to enumerate more integer candidates than this in one query.
MAX_CANDIDATES = 80_000_000

# Above this candidate count a query box is split in half: the integer
# bounding box of a skewed preimage parallelotope grows quadratically with
# the box length, so long boxes are enumerated chunk by chunk.
SPLIT_THRESHOLD = 4_000_000

WINDOW_POINT_TOL = 1e-9


class ConfigError(ValueError):
    """Raised when a spec fails validation or a query is malformed."""


@dataclass(frozen=True)
class Box:
    """Axis-aligned half-open box [lo, hi)."""

    lo: np.ndarray
    hi: np.ndarray

    def __init__(self, lo, hi):
        lo = np.atleast_1d(np.asarray(lo, dtype=float)).copy()
        hi = np.atleast_1d(np.asarray(hi, dtype=float)).copy()
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ConfigError("box lo/hi must be equal-length vectors")
        if not np.all(hi > lo):
            raise ConfigError("box must have positive extent on every axis")
        if not np.all(np.isfinite(lo)) or not np.all(np.isfinite(hi)):
            raise ConfigError("box must be finite")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self):
        return self.lo.size

    @property
    def volume(self):
        return float(np.prod(self.hi - self.lo))

    def contains(self, pts):
        pts = np.atleast_2d(pts)
        return np.all((pts >= self.lo) & (pts < self.hi), axis=1)

    def inflate(self, margin):
        return Box(self.lo - margin, self.hi + margin)

    def scaled(self, T):
        return Box(self.lo * T, self.hi * T)


def _readonly(a):
    a = np.asarray(a, dtype=float).copy()
    a.flags.writeable = False
    return a


def _lexsort(pts):
    if len(pts) == 0:
        return pts
    order = np.lexsort(tuple(pts[:, j] for j in range(pts.shape[1] - 1, -1, -1)))
    return pts[order]


def _integer_ranges(box_corners):
    """Integer coordinate bounds covering a set of corner points, slightly
    inflated against roundoff."""
    lo = box_corners.min(axis=0)
    hi = box_corners.max(axis=0)
    pad = 1e-9 * np.maximum(1.0, np.abs(box_corners).max())
    return np.ceil(lo - pad).astype(np.int64), np.floor(hi + pad).astype(np.int64)


def _corner_matrix(lo, hi):
    d = lo.size
    corners = np.array(np.meshgrid(*[[lo[j], hi[j]] for j in range(d)],
                                   indexing="ij")).reshape(d, -1).T
    return corners


def _enumerate_integer_box(cmin, cmax):
    """All integer vectors in the closed box [cmin, cmax], as an (N, d) array."""
    spans = cmax - cmin + 1
    if np.any(spans <= 0):
        return np.empty((0, cmin.size), dtype=np.int64)
    total = int(np.prod(spans.astype(float)))
    if total > MAX_CANDIDATES:
        raise ConfigError(
            f"query would enumerate {total} integer candidates "
            f"(> {MAX_CANDIDATES}); shrink the box")
    axes = [np.arange(cmin[j], cmax[j] + 1, dtype=np.int64)
            for j in range(cmin.size)]
    grid = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grid], axis=1)


def _candidate_count(box_corners):
    cmin, cmax = _integer_ranges(box_corners)
    spans = np.maximum(cmax - cmin + 1, 0)
    return float(np.prod(spans.astype(float)))


def _split_query(query_fn, box, depth=0):
    """Run an enumeration query, halving the box along its longest axis
    while the candidate bounding box stays too large."""
    too_big, result = query_fn(box)
    if not too_big:
        return result
    if depth > 48:
        raise ConfigError("query box cannot be split further")
    axis = int(np.argmax(box.hi - box.lo))
    mid = 0.5 * (box.lo[axis] + box.hi[axis])
    lo2 = box.lo.copy()
    lo2[axis] = mid
    hi1 = box.hi.copy()
    hi1[axis] = mid
    left = _split_query(query_fn, Box(box.lo, hi1), depth + 1)
    right = _split_query(query_fn, Box(lo2, box.hi), depth + 1)
    return np.concatenate([left, right])


# ---------------------------------------------------------------------------
# Source specs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LatticeSpec:
    """Full-rank lattice {c @ basis : c in Z^d}; basis rows are the generators."""

    basis: np.ndarray

    def __init__(self, basis):
        basis = np.atleast_2d(np.asarray(basis, dtype=float))
        if basis.shape[0] != basis.shape[1]:
            raise ConfigError("lattice basis must be square (rows = generators)")
        det = np.linalg.det(basis)
        scale = np.abs(basis).max()
        if abs(det) <= 1e-12 * max(scale, 1.0) ** basis.shape[0]:
            raise ConfigError("lattice basis is singular")
        object.__setattr__(self, "basis", _readonly(basis))

    @property
    def dim(self):
        return self.basis.shape[0]

    @property
    def density(self):
        return 1.0 / abs(np.linalg.det(self.basis))

    def points_in_box(self, box):
        inv = np.linalg.inv(self.basis)

        def query(b):
            corners = _corner_matrix(b.lo, b.hi) @ inv
            if _candidate_count(corners) > SPLIT_THRESHOLD:
                return True, None
            cmin, cmax = _integer_ranges(corners)
            cands = _enumerate_integer_box(cmin, cmax)
            pts = cands.astype(float) @ self.basis
            return False, pts[b.contains(pts)]

        return _split_query(query, box)


def square_lattice(d=2):
    return LatticeSpec(np.eye(d))


@dataclass(frozen=True)
class WindowSpec:
    """Window in the internal space: a union of half-open boxes and/or a
    finite point list (matched to tolerance 1e-9)."""

    boxes: tuple
    points: Optional[np.ndarray] = None

    def __init__(self, boxes=(), points=None):
        bs = []
        for b in boxes:
            if not isinstance(b, Box):
                b = Box(*b)
            bs.append(b)
        if points is not None:
            points = np.atleast_2d(np.asarray(points, dtype=float))
            points = _readonly(points)
        if not bs and points is None:
            raise ConfigError("window must have at least one box or point")
        object.__setattr__(self, "boxes", tuple(bs))
        object.__setattr__(self, "points", points)

    @property
    def measure(self):
        """Haar measure of the window when the internal group is R^m
        (box windows); point windows carry counting measure."""
        if self.boxes:
            return float(sum(b.volume for b in self.boxes))
        return float(len(self.points))

    def bounding(self):
        los = [b.lo for b in self.boxes]
        his = [b.hi for b in self.boxes]
        if self.points is not None:
            los.append(self.points.min(axis=0) - 2 * WINDOW_POINT_TOL)
            his.append(self.points.max(axis=0) + 2 * WINDOW_POINT_TOL)
        return np.min(los, axis=0), np.max(his, axis=0)

    def contains(self, pts):
        pts = np.atleast_2d(pts)
        inside = np.zeros(len(pts), dtype=bool)
        for b in self.boxes:
            inside |= b.contains(pts)
        if self.points is not None:
            for p in self.points:
                inside |= np.max(np.abs(pts - p), axis=1) < WINDOW_POINT_TOL
        return inside


@dataclass(frozen=True)
class CutProjectSpec:
    """Cut-and-project set: physical projections of ambient lattice points
    whose internal projection falls in the window.

    ambient basis is (d+m)x(d+m); the first d coordinates are physical, the
    last m internal.  A point is kept iff internal - internal_shift lies in
    the window.
    """

    dim_phys: int
    dim_int: int
    basis: np.ndarray
    window: WindowSpec
    internal_shift: np.ndarray

    def __init__(self, dim_phys, dim_int, basis, window, internal_shift=None):
        basis = np.atleast_2d(np.asarray(basis, dtype=float))
        n = dim_phys + dim_int
        if basis.shape != (n, n):
            raise ConfigError("ambient basis must be (d+m) x (d+m)")
        det = np.linalg.det(basis)
        if abs(det) <= 1e-12:
            raise ConfigError("ambient basis is singular")
        if not isinstance(window, WindowSpec):
            raise ConfigError("window must be a WindowSpec")
        if internal_shift is None:
            internal_shift = np.zeros(dim_int)
        internal_shift = np.atleast_1d(np.asarray(internal_shift, dtype=float))
        if internal_shift.shape != (dim_int,):
            raise ConfigError("internal_shift must have the internal dimension")
        object.__setattr__(self, "dim_phys", int(dim_phys))
        object.__setattr__(self, "dim_int", int(dim_int))
        object.__setattr__(self, "basis", _readonly(basis))
        object.__setattr__(self, "window", window)
        object.__setattr__(self, "internal_shift", _readonly(internal_shift))

    @property
    def dim(self):
        return self.dim_phys

    @property
    def density(self):
        """Point density from the window measure over the ambient covolume.

        Valid when the internal closure is all of R^m (box windows, as in the
        Fibonacci or Wennberg sets).  Point windows do not determine the
        density without the sublattice covolume; construct those through
        DeloneUnionSpec instead.
        """
        if not self.window.boxes:
            raise ConfigError("density formula needs a box window")
        return self.window.measure / abs(np.linalg.det(self.basis))

    def lattice_points_in_box(self, box):
        """Returns (physical points, integer coefficient rows) for the query
        box, before lexicographic sorting.

        For one physical plus one internal dimension the preimage of
        box x window is a parallelogram, enumerated by column scan in O(box
        length); higher ambient dimensions go through bounding-box
        enumeration with automatic box splitting.
        """
        if box.dim != self.dim_phys:
            raise ConfigError("box dimension must match the physical space")
        wlo, whi = self.window.bounding()
        inv = np.linalg.inv(self.basis)

        if self.dim_phys + self.dim_int == 2:
            lo0, hi0 = box.lo[0], box.hi[0]
            wl = wlo[0] + self.internal_shift[0]
            wh = whi[0] + self.internal_shift[0]
            poly = np.array([[lo0, wl], [hi0, wl], [hi0, wh], [lo0, wh]])
            full, cands = lattice_points_in_polygon(self.basis, poly)
            phys = full[:, :1]
            internal = full[:, 1:] - self.internal_shift
            keep = box.contains(phys) & self.window.contains(internal)
            return phys[keep], cands[keep]

        def query(b):
            lo = np.concatenate([b.lo, wlo + self.internal_shift])
            hi = np.concatenate([b.hi, whi + self.internal_shift])
            corners = _corner_matrix(lo, hi) @ inv
            if _candidate_count(corners) > SPLIT_THRESHOLD:
                return True, None
            cmin, cmax = _integer_ranges(corners)
            cands = _enumerate_integer_box(cmin, cmax)
            full = cands.astype(float) @ self.basis
            phys = full[:, :self.dim_phys]
            internal = full[:, self.dim_phys:] - self.internal_shift
            keep = b.contains(phys) & self.window.contains(internal)
            return False, np.concatenate(
                [phys[keep], cands[keep].astype(float)], axis=1)

        merged = _split_query(query, box)
        d = self.dim_phys
        return merged[:, :d], merged[:, d:].astype(np.int64)

    def points_in_box(self, box):
        pts, _ = self.lattice_points_in_box(box)
        return pts

    def validate_injectivity(self, box):
        """Check that distinct lattice points project to distinct physical
        points on the sample box (the defining bijectivity assumption)."""
        pts, _ = self.lattice_points_in_box(box)
        if len(pts) < 2:
            return
        pts = _lexsort(pts)
        gaps = np.max(np.abs(np.diff(pts, axis=0)), axis=1)
        if np.any(gaps < WINDOW_POINT_TOL):
            raise ConfigError("cut-and-project physical projection is not "
                              "injective on the sampled box")


@dataclass(frozen=True)
class DeloneUnionSpec:
    """Union of translates t_j + L0 of one lattice; translates must give
    pairwise disjoint copies."""

    base: LatticeSpec
    translates: np.ndarray

    def __init__(self, base, translates):
        if not isinstance(base, LatticeSpec):
            base = LatticeSpec(base)
        translates = np.atleast_2d(np.asarray(translates, dtype=float))
        if translates.shape[1] != base.dim:
            raise ConfigError("translate dimension mismatch")
        # Disjointness: no two translates may differ by a lattice vector.
        inv = np.linalg.inv(base.basis)
        for i in range(len(translates)):
            for j in range(i + 1, len(translates)):
                c = (translates[i] - translates[j]) @ inv
                if np.max(np.abs(c - np.round(c))) < 1e-9:
                    raise ConfigError("translated lattice copies coincide")
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "translates", _readonly(translates))

    @property
    def dim(self):
        return self.base.dim

    @property
    def density(self):
        return len(self.translates) * self.base.density

    def points_in_box(self, box):
        parts = []
        for t in self.translates:
            base_pts = self.base.points_in_box(Box(box.lo - t, box.hi - t))
            parts.append(base_pts + t)
        pts = np.concatenate(parts) if parts else np.empty((0, self.dim))
        return pts[box.contains(pts)]

    def as_cut_project(self):
        """Equivalent cut-and-project realization with a point window
        (one internal unit vector per translate)."""
        m = len(self.translates)
        d = self.dim
        n = d + m
        basis = np.zeros((n, n))
        basis[:d, :d] = self.base.basis
        for j in range(m):
            basis[d + j, :d] = self.translates[j]
            basis[d + j, d + j] = 1.0
        window = WindowSpec(points=np.eye(m))
        return CutProjectSpec(d, m, basis, window)


@dataclass(frozen=True)
class PoissonSpec:
    """Homogeneous Poisson process, realized lazily on the unit-cell grid.

    Each cell's points come from a hash of (seed, cell index), so queries are
    deterministic and consistent across overlapping boxes.
    """

    intensity: float
    seed: int
    dim: int = 2

    def __init__(self, intensity, seed, dim=2):
        if intensity <= 0:
            raise ConfigError("Poisson intensity must be positive")
        object.__setattr__(self, "intensity", float(intensity))
        object.__setattr__(self, "seed", int(seed))
        object.__setattr__(self, "dim", int(dim))

    @property
    def density(self):
        return self.intensity

    def cell_points(self, cells):
        """Points of the cells listed in an (N, d) integer array."""
        cells = np.atleast_2d(np.asarray(cells, dtype=np.int64))
        state = seeds.combine(self.seed, *(cells[:, j] for j in range(self.dim)))
        counts = seeds.poisson_counts(state, self.intensity)
        total = int(counts.sum())
        if total == 0:
            return np.empty((0, self.dim))
        cell_idx = np.repeat(np.arange(len(cells)), counts)
        # Per-point uniforms from a position stream decoupled from the
        # count stream.
        pos_state = seeds.mix64(state ^ np.uint64(0xA5A5A5A5A5A5A5A5))
        within = np.concatenate([np.arange(c) for c in counts if c > 0])
        coords = np.empty((total, self.dim))
        with np.errstate(over="ignore"):
            for axis in range(self.dim):
                key = (within.astype(np.uint64) * np.uint64(self.dim)
                       + np.uint64(axis) + np.uint64(1))
                vals = seeds.mix64(pos_state[cell_idx]
                                   + key * np.uint64(0x9E3779B97F4A7C15))
                coords[:, axis] = ((vals >> np.uint64(11)).astype(float)
                                   * seeds._INV53)
        return cells[cell_idx] + coords

    def points_in_box(self, box):
        cmin = np.floor(box.lo).astype(np.int64)
        cmax = np.floor(box.hi - 1e-12).astype(np.int64)
        ncells = np.prod((cmax - cmin + 1).astype(float))
        if ncells * max(self.intensity, 1.0) > MAX_CANDIDATES:
            raise ConfigError("Poisson query too large; shrink the box")
        cells = _enumerate_integer_box(cmin, cmax)
        pts = self.cell_points(cells)
        return pts[box.contains(pts)]


@dataclass(frozen=True)
class FinitePointsSpec:
    """Explicit finite point list (test scaffolding and tiny scenes)."""

    points: np.ndarray

    def __init__(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        object.__setattr__(self, "points", _readonly(points))

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def density(self):
        return 0.0

    def points_in_box(self, box):
        return self.points[box.contains(self.points)]


@dataclass(frozen=True)
class JitterSpec:
    """Rotation-invariant per-scatterer displacement, in units of the
    scatterer radius: displacement = r * amplitude * u with u drawn from the
    unit law ("ball", "sphere", or "gauss" truncated at norm 8)."""

    amplitude: float
    seed: int
    law: str = "ball"

    def __post_init__(self):
        if self.amplitude < 0:
            raise ConfigError("jitter amplitude must be >= 0")
        if self.law not in ("ball", "sphere", "gauss"):
            raise ConfigError(f"unknown jitter law {self.law!r}")

    @property
    def max_unit_norm(self):
        return 8.0 if self.law == "gauss" else 1.0

    def unit_samples(self, base_points):
        """One unit-law sample per base point, keyed by the point identity."""
        base_points = np.atleast_2d(base_points)
        n, d = base_points.shape
        state = seeds.hash_floats(self.seed, base_points)
        u, state = seeds.uniforms(state, 2 * d)
        # Box-Muller pairs -> d gaussians per point.
        eps = 1e-300
        g = np.sqrt(-2.0 * np.log(np.maximum(u[..., 0:2 * d:2], eps))) \
            * np.cos(2 * np.pi * u[..., 1:2 * d:2])
        norms = np.linalg.norm(g, axis=1, keepdims=True)
        norms = np.maximum(norms, 1e-300)
        if self.law == "gauss":
            return np.clip(g, -8.0, 8.0) * np.minimum(1.0, 8.0 / norms)
        direction = g / norms
        if self.law == "sphere":
            return direction
        radial, _ = seeds.uniforms(seeds.mix64(state), 1)
        return direction * radial[..., 0:1] ** (1.0 / d)


# ---------------------------------------------------------------------------
# Scatterer configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScattererConfig:
    """A point set plus scatterer radius and geometry kind.

    geometry "sphere": balls of radius r (Lorentz gas).
    geometry "slab": sets {0} x r*Sigma at each point (kicked Hamiltonians);
    the transverse cross section Sigma is handled by the kicked engine.
    """

    source: object
    radius: float
    geometry: str = "sphere"
    jitter: Optional[JitterSpec] = None

    def __post_init__(self):
        if self.radius <= 0:
            raise ConfigError("radius must be positive")
        if self.geometry not in ("sphere", "slab"):
            raise ConfigError(f"unknown geometry {self.geometry!r}")

    @property
    def dim(self):
        return self.source.dim

    @property
    def density(self):
        return self.source.density

    def displacement_bound(self):
        if self.jitter is None:
            return 0.0
        return self.radius * self.jitter.amplitude * self.jitter.max_unit_norm

    def points_in_box(self, box):
        if self.jitter is None:
            return _lexsort(self.source.points_in_box(box))
        margin = self.displacement_bound()
        base = self.source.points_in_box(box.inflate(margin))
        if len(base) == 0:
            return base
        disp = (self.radius * self.jitter.amplitude
                * self.jitter.unit_samples(base))
        pts = base + disp
        return _lexsort(pts[box.contains(pts)])

    def validate_nonoverlap(self, box):
        """Reject configurations whose scatterers overlap inside the box."""
        if self.geometry != "sphere":
            return
        pts = self.points_in_box(box)
        if len(pts) < 2:
            return
        gap = min_gap_points(pts)
        if gap <= 2 * self.radius:
            raise ConfigError(
                f"scatterers overlap: min center distance {gap:.6g} "
                f"<= 2r = {2 * self.radius:.6g}")


# ---------------------------------------------------------------------------
# Query operations
# ---------------------------------------------------------------------------

def points_in_box(obj, box):
    """Enumerate the points of a spec or config inside a half-open box,
    sorted lexicographically."""
    if not isinstance(box, Box):
        box = Box(*box)
    if isinstance(obj, ScattererConfig):
        return obj.points_in_box(box)
    return _lexsort(obj.points_in_box(box))


def count_in_box(obj, box):
    if not isinstance(box, Box):
        box = Box(*box)
    if isinstance(obj, ScattererConfig):
        return len(obj.points_in_box(box))
    return len(obj.points_in_box(box))


def min_gap_points(pts):
    pts = np.atleast_2d(pts)
    if len(pts) < 2:
        raise ConfigError("min_gap needs at least 2 points")
    tree = cKDTree(pts)
    dist, _ = tree.query(pts, k=2)
    return float(dist[:, 1].min())


def min_gap(obj, box):
    """Smallest pairwise distance among the points inside the box."""
    return min_gap_points(points_in_box(obj, box))


def estimate_density(obj, T_list, region):
    """#(P cap T*D) / vol(T*D) for each T.

    region: a Box (then D is that box) or ("ball", radius).
    """
    out = []
    for T in T_list:
        if isinstance(region, Box):
            box = region.scaled(T)
            n = count_in_box(obj, box)
            vol = box.volume
        elif isinstance(region, tuple) and region[0] == "ball":
            R = region[1] * T
            d = obj.dim
            box = Box(-R * np.ones(d), R * np.ones(d))
            pts = points_in_box(obj, box)
            n = int(np.sum(np.einsum("ij,ij->i", pts, pts) < R * R))
            from scipy.special import gamma
            vol = np.pi ** (d / 2) / gamma(d / 2 + 1) * R ** d
        else:
            raise ConfigError("region must be a Box or ('ball', radius)")
        out.append(n / vol)
    return np.array(out)


# ---------------------------------------------------------------------------
# Named constructions
# ---------------------------------------------------------------------------

def fibonacci_spec():
    """Fibonacci chain as a d=1, m=1 cut-and-project set.

    Points are j/sqrt(1+tau^2) + round(j/tau)/(tau*sqrt(1+tau^2)); the two
    gap lengths are tau/sqrt(1+tau^2) and 1/sqrt(1+tau^2) (ratio tau) and the
    density is tau^2/sqrt(1+tau^2).
    """
    s = np.sqrt(1.0 + TAU * TAU)
    basis = np.array([
        [1.0 / s, 1.0],        # generator for the index j
        [1.0 / (TAU * s), -TAU],  # generator for the rounding integer
    ])
    window = WindowSpec(boxes=[Box([-TAU / 2], [TAU / 2])])
    return CutProjectSpec(1, 1, basis, window)


def fibonacci_points(j):
    """Direct scalar evaluation of the Fibonacci chain (test oracle)."""
    j = np.asarray(j, dtype=float)
    s = np.sqrt(1.0 + TAU * TAU)
    return j / s + np.round(j / TAU) / (TAU * s)


def wennberg_spec():
    """Product of the Fibonacci chain with Z, as a d=2, m=1 cut-and-project
    set; density equals the chain density times 1."""
    s = np.sqrt(1.0 + TAU * TAU)
    basis = np.array([
        [1.0 / s, 0.0, 1.0],
        [1.0 / (TAU * s), 0.0, -TAU],
        [0.0, 1.0, 0.0],
    ])
    window = WindowSpec(boxes=[Box([-TAU / 2], [TAU / 2])])
    return CutProjectSpec(2, 1, basis, window)


def honeycomb_spec(a=1.0):
    """Honeycomb arrangement as a Delone union of two triangular-lattice
    translates with nearest-neighbor distance a."""
    basis = a * np.array([[np.sqrt(3.0), 0.0],
                          [np.sqrt(3.0) / 2.0, 1.5]])
    return DeloneUnionSpec(LatticeSpec(basis),
                           [[0.0, 0.0], [np.sqrt(3.0) * a / 2, a / 2]])


# ---------------------------------------------------------------------------
# Lattice enumeration inside convex polygons (renormalized-process queries)
# ---------------------------------------------------------------------------

def lattice_points_in_polygon(basis, vertices):
    """Integer combinations c @ basis lying inside a convex polygon (d=2).

    The polygon is mapped to coefficient space, scanned column by column in
    the first integer coordinate, and candidates are filtered exactly.  Cost
    is proportional to the number of occupied columns, which keeps long thin
    slab queries cheap.
    """
    basis = np.asarray(basis, dtype=float)
    vertices = np.asarray(vertices, dtype=float)
    inv = np.linalg.inv(basis)
    poly = vertices @ inv
    # Half-plane representation a . c <= b, counterclockwise orientation.
    area2 = 0.0
    k = len(poly)
    for i in range(k):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % k]
        area2 += x1 * y2 - x2 * y1
    if area2 < 0:
        poly = poly[::-1]
    normals = []
    offsets = []
    for i in range(len(poly)):
        p, q = poly[i], poly[(i + 1) % len(poly)]
        e = q - p
        n_in = np.array([e[1], -e[0]])  # outward for CCW
        normals.append(n_in)
        offsets.append(n_in @ p)
    normals = np.array(normals)
    offsets = np.array(offsets) + 1e-9 * max(1.0, np.abs(poly).max())

    c1_lo = int(np.ceil(poly[:, 0].min() - 1e-9))
    c1_hi = int(np.floor(poly[:, 0].max() + 1e-9))
    if c1_hi < c1_lo:
        return np.empty((0, 2)), np.empty((0, 2), dtype=np.int64)
    cols = np.arange(c1_lo, c1_hi + 1, dtype=np.int64)
    lo = np.full(len(cols), -np.inf)
    hi = np.full(len(cols), np.inf)
    for n_vec, b in zip(normals, offsets):
        rhs = b - n_vec[0] * cols
        if n_vec[1] > 1e-15:
            hi = np.minimum(hi, rhs / n_vec[1])
        elif n_vec[1] < -1e-15:
            lo = np.maximum(lo, rhs / n_vec[1])
        else:
            dead = rhs < 0
            lo[dead] = np.inf
    lo_i = np.ceil(lo).astype(np.int64, copy=False)
    hi_i = np.floor(hi).astype(np.int64, copy=False)
    counts = np.maximum(hi_i - lo_i + 1, 0)
    total = int(counts.sum())
    if total == 0:
        return np.empty((0, 2)), np.empty((0, 2), dtype=np.int64)
    if total > MAX_CANDIDATES:
        raise ConfigError("polygon query too large")
    c1 = np.repeat(cols, counts)
    starts = np.repeat(lo_i, counts)
    within = np.concatenate([np.arange(c) for c in counts if c > 0])
    c2 = starts + within
    cands = np.stack([c1, c2], axis=1)
    pts = cands.astype(float) @ basis
    # Exact point-in-polygon filter in physical space via the same
    # half-planes expressed there.
    cc = cands.astype(float)
    inside = np.ones(len(cc), dtype=bool)
    for n_vec, b in zip(normals, offsets):
        inside &= cc @ n_vec <= b
    return pts[inside], cands[inside]
