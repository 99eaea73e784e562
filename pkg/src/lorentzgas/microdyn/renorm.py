"""The renormalized point process: the scatterer set seen from a collision,
rotated into the outgoing frame and stretched anisotropically,

    Theta_r(w') = (P - y) S(w') D(r) - (0, w'),
    D(r) = diag(r^(d-1), r^-1 I).

Its r -> 0 limit determines the transition kernel; the toolkit probes the
convergence empirically through counting statistics in fixed test boxes.
"""

from __future__ import annotations

import numpy as np

from ..pointset import (Box, ConfigError, LatticeSpec, PoissonSpec,
                        ScattererConfig, lattice_points_in_polygon, _lexsort)
from ..scatter import LorentzScatteringMap, specular_angle


class ThetaView:
    """Queryable view of Theta_r(w') supporting points_in_box.

    smap selects the frame map: a LorentzScatteringMap (default, specular)
    uses the scattering rotation for the label w' in the unit interval; a
    KickPotential uses the momentum shear, with w' in the cross section.
    """

    def __init__(self, config: ScattererConfig, y, w_prime, r, smap=None):
        if config.dim != 2:
            raise ConfigError("renormalized process implemented for d = 2")
        self.config = config
        self.y = np.asarray(y, dtype=float)
        self.w_prime = float(w_prime)
        self.r = float(r)
        from ..scatter import KickPotential
        if isinstance(smap, KickPotential):
            if not smap.contains(np.array([self.w_prime])):
                raise ConfigError("w' must lie in the kick cross section")
            self.S = smap.shear_matrix(np.array([self.w_prime]))
        else:
            if abs(self.w_prime) >= 1.0:
                raise ConfigError("|w'| must be < 1")
            if smap is None:
                smap = LorentzScatteringMap(2, specular_angle())
            if self.w_prime == 0.0:
                # Backscattering frame: S is the rotation by pi.
                self.S = -np.eye(2)
            else:
                self.S = smap.scattering_matrix(np.array([self.w_prime]))
        self.D = np.diag([r, 1.0 / r])
        self.offset = np.array([0.0, self.w_prime])
        self.fwd = self.S @ self.D           # row-vector action: x -> x @ fwd
        self.inv = np.linalg.inv(self.fwd)

    def _preimage_polygon(self, box: Box):
        corners = np.array([[box.lo[0], box.lo[1]],
                            [box.hi[0], box.lo[1]],
                            [box.hi[0], box.hi[1]],
                            [box.lo[0], box.hi[1]]])
        return (corners + self.offset) @ self.inv + self.y

    def points_in_box(self, box):
        if not isinstance(box, Box):
            box = Box(*box)
        poly = self._preimage_polygon(box)
        src = self.config.source
        if isinstance(src, LatticeSpec) and self.config.jitter is None:
            pts, _ = lattice_points_in_polygon(src.basis, poly)
        elif isinstance(src, PoissonSpec) and self.config.jitter is None:
            pts = self._poisson_points_in_polygon(poly)
        else:
            lo = poly.min(axis=0)
            hi = poly.max(axis=0)
            pad = 1e-9 * max(1.0, np.abs(poly).max())
            pts = self.config.points_in_box(Box(lo - pad, hi + pad))
        img = (pts - self.y) @ self.fwd - self.offset
        return _lexsort(img[box.contains(img)])

    def _poisson_points_in_polygon(self, poly):
        # A unit cell [i,i+1)^2 meets the convex preimage iff its lower
        # corner (i,j) lies in the Minkowski sum poly + [-1,0]^2; enumerate
        # the integer points of that hull.
        from scipy.spatial import ConvexHull
        eps = 1e-9
        shifts = np.array([[0.0, 0.0], [-1.0, 0.0], [0.0, -1.0],
                           [-1.0, -1.0]]) * (1.0 + eps) - eps
        cloud = (poly[:, None, :] + shifts[None, :, :]).reshape(-1, 2)
        hull = ConvexHull(cloud)
        verts = cloud[hull.vertices]
        cells, _ = lattice_points_in_polygon(np.eye(2), verts)
        if len(cells) == 0:
            return np.empty((0, 2))
        cells = np.unique(np.rint(cells).astype(np.int64), axis=0)
        return self.config.source.cell_points(cells)

    def count_in_box(self, box):
        return len(self.points_in_box(box))


def renormalized_process(config, y, w_prime, r, smap=None):
    """Construct the Theta_r(w') view anchored at scatterer y."""
    return ThetaView(config, y, w_prime, r, smap=smap)
