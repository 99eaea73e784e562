"""Scattering maps.

Lorentz scattering is spherically symmetric and elastic: the outgoing
direction is the incoming one rotated by a scattering angle theta(w) that
depends only on the length of the impact parameter w (measured in units of
the scatterer radius, in the hyperplane orthogonal to the incoming velocity).
Kicked-Hamiltonian scattering is a momentum shear p -> p - grad W(w).

Sign convention in d=2 (a choice the rest of the package relies on):
impact and exit parameters are signed scalars measured against the
counterclockwise perpendicular of the respective velocity, and a positive
impact parameter deflects counterclockwise under condition (A).  With this
convention the signed exit parameter equals the signed impact parameter
(angular momentum about the scatterer center is conserved).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

W_CLAMP = 1.0 - 1e-8  # grazing-impact guard for cross-section evaluation


class ScatterError(ValueError):
    pass


@dataclass(frozen=True)
class AngleFunction:
    """Scattering angle theta on [0,1) with its derivative.

    condition "A": theta strictly decreasing, theta(0)=pi, theta>0;
    condition "B": strictly increasing, theta(0)=-pi, theta<0.
    """

    theta: Callable[[np.ndarray], np.ndarray]
    dtheta: Callable[[np.ndarray], np.ndarray]
    condition: str = "A"

    def __post_init__(self):
        if self.condition not in ("A", "B"):
            raise ScatterError("condition must be 'A' or 'B'")
        self.validate()

    def validate(self, n=1000):
        w = np.linspace(0.0, W_CLAMP, n)
        th = self.theta(w)
        dth = self.dtheta(w)
        if self.condition == "A":
            ok = (abs(th[0] - np.pi) < 1e-9 and np.all(th > 0)
                  and np.all(dth < 0))
        else:
            ok = (abs(th[0] + np.pi) < 1e-9 and np.all(th < 0)
                  and np.all(dth > 0))
        if not ok:
            raise ScatterError(
                f"angle function violates condition ({self.condition})")

    def __call__(self, w):
        w = np.asarray(w, dtype=float)
        if np.any(w < 0) or np.any(w >= 1):
            raise ScatterError("impact parameter length must be in [0, 1)")
        return self.theta(w)


def specular_angle():
    """Hard-sphere specular reflection: theta(w) = pi - 2 arcsin(w)."""
    return AngleFunction(
        theta=lambda w: np.pi - 2.0 * np.arcsin(w),
        dtheta=lambda w: -2.0 / np.sqrt(1.0 - np.asarray(w) ** 2),
        condition="A",
    )


def tabulated_angle(w_points, theta_points):
    """Angle function from (w, theta) samples via monotone cubic
    interpolation; condition inferred from the endpoints."""
    w_points = np.asarray(w_points, dtype=float)
    theta_points = np.asarray(theta_points, dtype=float)
    if w_points.ndim != 1 or w_points.shape != theta_points.shape:
        raise ScatterError("tabulated angle needs matching 1-d arrays")
    if not np.all(np.diff(w_points) > 0):
        raise ScatterError("w samples must be strictly increasing")
    interp = PchipInterpolator(w_points, theta_points)
    deriv = interp.derivative()
    condition = "A" if theta_points[0] > 0 else "B"
    return AngleFunction(theta=interp, dtheta=deriv, condition=condition)


def _perp2(v):
    """Counterclockwise perpendicular in the plane."""
    v = np.asarray(v, dtype=float)
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


@dataclass(frozen=True)
class LorentzScatteringMap:
    dim: int
    angle: AngleFunction

    def __post_init__(self):
        if self.dim < 2:
            raise ScatterError("Lorentz scattering needs d >= 2")

    @property
    def sigma_bar(self):
        return ball_volume(self.dim - 1)

    def scattering_matrix(self, w_vec):
        """Rotation S(w) in SO(d) for an impact vector w in the last d-1
        coordinates (the frame where v_in = e1).  Rodrigues form of the block
        exponential."""
        w_vec = np.atleast_1d(np.asarray(w_vec, dtype=float))
        if w_vec.shape != (self.dim - 1,):
            raise ScatterError("impact vector must have dimension d-1")
        wlen = np.linalg.norm(w_vec)
        if wlen >= 1.0:
            raise ScatterError("impact parameter must satisfy |w| < 1")
        if wlen == 0.0:
            raise ScatterError("w = 0 is the backscattering branch; "
                               "apply_scattering handles it")
        what = w_vec / wlen
        th = float(self.angle(np.array([wlen]))[0])
        N = np.zeros((self.dim, self.dim))
        N[0, 1:] = -what
        N[1:, 0] = what
        return np.eye(self.dim) + np.sin(th) * N + (1 - np.cos(th)) * (N @ N)

    def deflect_2d(self, v, w_signed):
        """v_out for d=2 with the signed impact/CCW convention; vectorized
        over leading axes."""
        v = np.asarray(v, dtype=float)
        w_signed = np.asarray(w_signed, dtype=float)
        th = np.where(w_signed == 0.0, np.pi,
                      self.angle(np.abs(w_signed)) * np.sign(w_signed))
        c, s = np.cos(th), np.sin(th)
        vx, vy = v[..., 0], v[..., 1]
        return np.stack([c * vx - s * vy, s * vx + c * vy], axis=-1)

    def apply_scattering(self, v_in, w_vec):
        """(v_out, s_vec): outgoing velocity and exit vector for an incoming
        unit velocity and an impact vector w_vec orthogonal to it (physical
        coordinates, units of r)."""
        v_in = np.asarray(v_in, dtype=float)
        w_vec = np.asarray(w_vec, dtype=float)
        if abs(np.linalg.norm(v_in) - 1.0) > 1e-9:
            raise ScatterError("v_in must be a unit vector")
        if abs(float(v_in @ w_vec)) > 1e-9:
            raise ScatterError("impact vector must be orthogonal to v_in")
        wlen = np.linalg.norm(w_vec)
        if wlen >= 1.0:
            raise ScatterError("|w| must be < 1")
        if wlen == 0.0:
            return -v_in, np.zeros_like(v_in)
        if self.dim == 2:
            w_signed = float(w_vec @ _perp2(v_in))
            v_out = self.deflect_2d(v_in, w_signed)
            return v_out, w_signed * _perp2(v_out)
        # General d: work in an orthonormal frame with first axis v_in.
        F = _frame_with_first_axis(v_in)
        w_frame = F[1:] @ w_vec
        S = self.scattering_matrix(w_frame)
        Sinv = S.T
        v_out_frame = np.concatenate([[1.0], np.zeros(self.dim - 1)]) @ Sinv
        s_frame = np.concatenate([[0.0], w_frame]) @ Sinv
        return v_out_frame @ F, s_frame @ F

    def differential_cross_section(self, w):
        """sigma at impact length w via the spherically symmetric change of
        variables w^(d-2) |dw/dtheta| / sin^(d-2)(theta).

        Grazing impacts are clamped to 1 - 1e-8; the second return value
        flags when clamping happened.
        """
        w = np.asarray(w, dtype=float)
        clamped = w > W_CLAMP
        w = np.minimum(w, W_CLAMP)
        th = np.abs(self.angle(w))
        dth = self.angle.dtheta(w)
        if np.any(dth == 0):
            raise ScatterError("theta'(w)=0 violates strict monotonicity")
        sigma = np.abs(1.0 / dth)
        if self.dim > 2:
            sigma = sigma * w ** (self.dim - 2) / np.sin(th) ** (self.dim - 2)
        return sigma, bool(np.any(clamped))

    def sigma_of_theta(self, theta_value):
        """sigma as a function of the scattering angle (inverts theta)."""
        target = abs(float(theta_value))
        f = lambda w: abs(float(self.angle(np.array([w]))[0])) - target
        w = brentq(f, 0.0, W_CLAMP)
        return self.differential_cross_section(np.array([w]))[0][0]


def _frame_with_first_axis(v):
    """Orthonormal basis whose first row is v (rows are the frame axes)."""
    d = v.size
    F = np.zeros((d, d))
    F[0] = v
    k = int(np.argmin(np.abs(v)))
    F[1] = 0.0
    F[1, k] = 1.0
    F[1] -= (F[1] @ v) * v
    F[1] /= np.linalg.norm(F[1])
    for i in range(2, d):
        e = np.zeros(d)
        e[(k + i - 1) % d] = 1.0
        for j in range(i):
            e -= (e @ F[j]) * F[j]
        nrm = np.linalg.norm(e)
        if nrm < 1e-12:
            e = np.random.default_rng(i).standard_normal(d)
            for j in range(i):
                e -= (e @ F[j]) * F[j]
            nrm = np.linalg.norm(e)
        F[i] = e / nrm
    return F


def ball_volume(k):
    """Volume of the unit ball in R^k (vol B_1^0 = 1)."""
    from scipy.special import gamma
    return float(np.pi ** (k / 2) / gamma(k / 2 + 1))


def sphere_area(k):
    """Surface measure of the unit sphere S^(k-1) in R^k."""
    return k * ball_volume(k)


# ---------------------------------------------------------------------------
# Kicked Hamiltonians
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KickPotential:
    """Momentum kick p -> p - grad_W(w) on the cross section Sigma.

    Sigma is the box (-1/2, 1/2)^n; grad_W must be injective on it, with
    grad_inv its inverse.  sigma_bar = vol Sigma = 1 in these units.
    """

    dim_internal: int
    grad: Callable
    grad_inv: Callable
    kappa: float = 1.0

    @property
    def sigma_bar(self):
        return 1.0

    def contains(self, w):
        w = np.atleast_1d(np.asarray(w, dtype=float))
        return bool(np.all(np.abs(w) < 0.5))

    def apply(self, p_in, w):
        """p_out = p_in - grad_W(w); raises if w is outside Sigma."""
        w = np.atleast_1d(np.asarray(w, dtype=float))
        if not self.contains(w):
            raise ScatterError("kick evaluated outside the cross section")
        return np.atleast_1d(np.asarray(p_in, dtype=float)) - self.grad(w)

    def shear_matrix(self, w):
        """The d x d shear [[1, grad_W(w)], [0, I]] used by the renormalized
        process in the kicked setting."""
        w = np.atleast_1d(np.asarray(w, dtype=float))
        d = self.dim_internal + 1
        S = np.eye(d)
        S[0, 1:] = self.grad(w)
        return S

    def cross_section_density(self, p):
        """sigma(p) with sigma(p) dp = dw; for the linear kick it is the
        constant kappa^(-n)."""
        del p
        return self.kappa ** (-self.dim_internal)


def linear_kick(kappa=1.0, dim_internal=1):
    """Default kick potential with grad_W(w) = kappa * w on the unit box."""
    if kappa == 0:
        raise ScatterError("kappa must be nonzero for invertibility")
    return KickPotential(
        dim_internal=dim_internal,
        grad=lambda w: kappa * np.asarray(w, dtype=float),
        grad_inv=lambda p: np.asarray(p, dtype=float) / kappa,
        kappa=kappa,
    )


def map_by_name(name, dim=2):
    """Scattering map selection by name: "specular", "kick-linear:kappa",
    or "tabulated:file.csv" with (w, theta) rows."""
    if name == "specular":
        return LorentzScatteringMap(dim, specular_angle())
    if name.startswith("kick-linear:"):
        return linear_kick(float(name.split(":", 1)[1]), dim - 1)
    if name.startswith("tabulated:"):
        data = np.loadtxt(name.split(":", 1)[1], delimiter=",")
        return LorentzScatteringMap(dim, tabulated_angle(data[:, 0],
                                                         data[:, 1]))
    raise ScatterError(f"unknown scattering map {name!r}")
