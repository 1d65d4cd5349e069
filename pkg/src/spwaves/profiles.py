"""Doping profiles and their sampled fields, norms, and ball geometry.

Supported background-charge shapes: identically zero, Gaussian
eps * exp(-alpha |x|^2), power law eps / (1+|x|)^alpha with alpha > 2, and
finite unions of disjoint ball indicators sum_i alpha_i chi_{B_i}.  The
smooth shapes carry an analytic x . grad(rho); the indicator class instead
supports the boundary surface functional used in the Pohozaev identity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .grid import Grid3, RealField, lp_norm

__all__ = [
    "ZeroProfile",
    "GaussianProfile",
    "PowerLawProfile",
    "BallSpec",
    "BallsProfile",
    "DopingProfile",
    "BallGeometry",
    "UnsupportedDerivativeError",
    "sample_rho",
    "sample_x_grad_rho",
    "rho_norms",
    "powerlaw_tail_bound",
    "ball_geometry",
    "a3_boundary",
    "profile_label",
]


class UnsupportedDerivativeError(ValueError):
    """x . grad(rho) requested for a profile that is not weakly differentiable."""


@dataclass(frozen=True)
class ZeroProfile:
    pass


@dataclass(frozen=True)
class GaussianProfile:
    """rho(x) = epsilon * exp(-alpha |x|^2)."""

    epsilon: float
    alpha: float

    def __post_init__(self):
        if self.epsilon <= 0.0:
            raise ValueError("Gaussian profile amplitude must be positive")
        if self.alpha <= 0.0:
            raise ValueError("Gaussian profile decay rate must be positive")


@dataclass(frozen=True)
class PowerLawProfile:
    """rho(x) = epsilon / (1 + |x|)^alpha, alpha > 2."""

    epsilon: float
    alpha: float

    def __post_init__(self):
        if self.epsilon <= 0.0:
            raise ValueError("power-law profile amplitude must be positive")
        if self.alpha <= 2.0:
            raise ValueError("power-law exponent must exceed 2")


@dataclass(frozen=True)
class BallSpec:
    """One ball indicator: amplitude on |x - center| <= radius."""

    center: tuple[float, float, float]
    radius: float
    amplitude: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if len(self.center) != 3:
            raise ValueError("ball center must be a 3-vector")
        if self.radius <= 0.0:
            raise ValueError("ball radius must be positive")
        if self.amplitude <= 0.0:
            raise ValueError("ball amplitude must be positive")

    def boundary_sup(self) -> float:
        """sup of |x| over the boundary sphere."""
        return float(np.linalg.norm(self.center)) + self.radius


@dataclass(frozen=True)
class BallsProfile:
    """rho(x) = sum_i alpha_i chi_{B_i}(x) over pairwise disjoint balls."""

    balls: tuple[BallSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "balls", tuple(self.balls))
        if not self.balls:
            raise ValueError("balls profile needs at least one ball")
        for i, a in enumerate(self.balls):
            for b in self.balls[i + 1 :]:
                gap = np.linalg.norm(np.subtract(a.center, b.center))
                if gap < a.radius + b.radius:
                    raise ValueError("balls must be pairwise disjoint")


DopingProfile = Union[ZeroProfile, GaussianProfile, PowerLawProfile, BallsProfile]


def profile_label(profile: DopingProfile) -> str:
    return type(profile).__name__.removesuffix("Profile").lower()


def _check_ball_in_box(ball: BallSpec, grid: Grid3):
    margin = 2.0 * grid.spacing
    half = grid.length / 2.0
    for c in ball.center:
        if abs(c) + ball.radius > half - margin:
            raise ValueError(
                f"ball (center {ball.center}, radius {ball.radius}) does not fit "
                f"in the box with a {margin:g} margin"
            )


def sample_rho(profile: DopingProfile, grid: Grid3) -> RealField:
    """Pointwise samples of rho at the grid nodes (cell-center rule for indicators)."""
    if isinstance(profile, ZeroProfile):
        return RealField(grid, np.zeros((grid.n,) * 3))
    if isinstance(profile, GaussianProfile):
        return RealField(grid, profile.epsilon * np.exp(-profile.alpha * grid.radius_sq()))
    if isinstance(profile, PowerLawProfile):
        r = np.sqrt(grid.radius_sq())
        return RealField(grid, profile.epsilon / (1.0 + r) ** profile.alpha)
    if isinstance(profile, BallsProfile):
        out = np.zeros((grid.n,) * 3)
        x, y, z = grid.coords()
        for ball in profile.balls:
            _check_ball_in_box(ball, grid)
            cx, cy, cz = ball.center
            inside = (x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2 <= ball.radius**2
            out += ball.amplitude * inside
        return RealField(grid, out)
    raise TypeError(f"unknown profile type {type(profile)!r}")


def sample_x_grad_rho(profile: DopingProfile, grid: Grid3) -> RealField:
    """Analytic x . grad(rho) sampled at the nodes (smooth profiles only)."""
    if isinstance(profile, ZeroProfile):
        return RealField(grid, np.zeros((grid.n,) * 3))
    if isinstance(profile, GaussianProfile):
        r2 = grid.radius_sq()
        vals = -2.0 * profile.alpha * profile.epsilon * r2 * np.exp(-profile.alpha * r2)
        return RealField(grid, vals)
    if isinstance(profile, PowerLawProfile):
        r = np.sqrt(grid.radius_sq())
        vals = -profile.alpha * profile.epsilon * r / (1.0 + r) ** (profile.alpha + 1.0)
        return RealField(grid, vals)
    if isinstance(profile, BallsProfile):
        raise UnsupportedDerivativeError(
            "a characteristic-function profile has no weak derivative; "
            "use a3_boundary for the surface form instead"
        )
    raise TypeError(f"unknown profile type {type(profile)!r}")


def rho_norms(profile: DopingProfile, grid: Grid3) -> tuple[float, float | None]:
    """(L^{6/5} norm of rho, L^{6/5} norm of x.grad(rho) or None for indicators)."""
    rho = sample_rho(profile, grid)
    n1 = lp_norm(rho, 1.2)
    if isinstance(profile, BallsProfile):
        return n1, None
    return n1, lp_norm(sample_x_grad_rho(profile, grid), 1.2)


def powerlaw_tail_bound(profile: PowerLawProfile, grid: Grid3) -> float:
    """Bound for the part of ||x.grad rho||_{6/5} lost outside the box.

    |x.grad rho| <= alpha eps / (1+r)^alpha, so the missing tail integral
    from R = L/2 outward has the closed form below (finite since alpha > 2
    gives 6 alpha / 5 > 3 after adding the r^2 volume factor).
    """
    p = 1.2
    a = profile.alpha * p
    r0 = grid.length / 2.0
    # integral_{r0}^inf (alpha eps)^p (1+r)^{-a} r^2 dr, with r^2 <= (1+r)^2
    coef = (profile.alpha * profile.epsilon) ** p * 4.0 * np.pi
    tail = coef * (1.0 + r0) ** (3.0 - a) / (a - 3.0)
    return float(tail ** (1.0 / p))


@dataclass(frozen=True)
class BallGeometry:
    """Geometric quantities entering the indicator-profile smallness condition."""

    boundary_sup: float  # sup over the boundary of |x|
    volume: float
    surface: float
    kappa1: float  # |boundary| / |volume|
    kappa2: float  # sup over the boundary of |grad w| for the torsion solution
    d_value: float

    def __post_init__(self):
        if self.kappa2 < 1.0:
            raise ValueError("kappa2 must be at least 1")


def ball_geometry(ball: BallSpec) -> BallGeometry:
    """Closed-form geometry of a ball.

    The torsion problem Delta w = kappa1 in B, dw/dn = 1 on the boundary is
    solved by w = |x - c|^2 / (2R), whose boundary gradient has modulus 1
    everywhere, so kappa2 = 1 for every ball.
    """
    r = ball.radius
    volume = 4.0 * np.pi * r**3 / 3.0
    surface = 4.0 * np.pi * r**2
    kappa1 = 3.0 / r
    kappa2 = 1.0
    sup = ball.boundary_sup()
    d_value = (
        sup
        * volume ** (1.0 / 6.0)
        * surface**0.5
        * (kappa1 * volume ** (1.0 / 3.0) + kappa2) ** 0.5
    )
    return BallGeometry(sup, volume, surface, kappa1, kappa2, d_value)


def _sphere_quadrature(n_theta: int, n_phi: int):
    """Gauss-Legendre x trapezoid product rule on the unit sphere.

    Returns unit direction vectors (m, 3) and weights summing to 4 pi.
    """
    nodes, wts = np.polynomial.legendre.leggauss(n_theta)  # nodes = cos(theta)
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    ct = np.repeat(nodes, n_phi)
    st = np.sqrt(1.0 - ct**2)
    ph = np.tile(phi, n_theta)
    dirs = np.stack([st * np.cos(ph), st * np.sin(ph), ct], axis=-1)
    weights = np.repeat(wts, n_phi) * (2.0 * np.pi / n_phi)
    return dirs, weights


def _trilinear(values: np.ndarray, grid: Grid3, points: np.ndarray) -> np.ndarray:
    """Trilinear interpolation at points strictly inside the box."""
    h = grid.spacing
    fi = (points + grid.length / 2.0) / h
    i0 = np.floor(fi).astype(int)
    frac = fi - i0
    if np.any(i0 < 0) or np.any(i0 + 1 > grid.n - 1):
        raise ValueError("interpolation point outside the grid box")
    out = np.zeros(len(points))
    for dx in (0, 1):
        for dy in (0, 1):
            for dz in (0, 1):
                w = (
                    (frac[:, 0] if dx else 1.0 - frac[:, 0])
                    * (frac[:, 1] if dy else 1.0 - frac[:, 1])
                    * (frac[:, 2] if dz else 1.0 - frac[:, 2])
                )
                out += w * values[i0[:, 0] + dx, i0[:, 1] + dy, i0[:, 2] + dz]
    return out


def a3_boundary(
    s1_field: RealField,
    balls: tuple[BallSpec, ...] | list[BallSpec],
    n_theta: int = 32,
    n_phi: int = 64,
) -> float:
    """Boundary form of the dilation functional for indicator profiles:

        -(1/2) sum_i alpha_i  surf_int_{|x-c_i|=R_i}  S1 (x . n) dS.
    """
    grid = s1_field.grid
    dirs, weights = _sphere_quadrature(n_theta, n_phi)
    total = 0.0
    for ball in balls:
        _check_ball_in_box(ball, grid)
        pts = np.asarray(ball.center) + ball.radius * dirs
        s1 = _trilinear(s1_field.values, grid, pts)
        x_dot_n = np.einsum("ij,ij->i", pts, dirs)
        integral = float(np.sum(weights * s1 * x_dot_n)) * ball.radius**2
        total += -0.5 * ball.amplitude * integral
    return total
