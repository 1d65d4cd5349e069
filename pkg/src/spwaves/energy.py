"""Energy decomposition for the doped Schrodinger-Poisson functional.

The working functional on states u with mass constraint |u|_2^2 = mu is

    E(u) = 1/2 |grad u|^2 - 1/(p+1) |u|_{p+1}^{p+1}
           + e^2 A1(u) + 2 e^2 A2(u),

with the nonlocal pieces built from the Newtonian potentials
S1(u) = (-Delta)^{-1}(|u|^2/2) and S2 = (-Delta)^{-1}(-rho/2):

    A1 = 1/4 int S1(u) |u|^2      (self-repulsion, >= 0)
    A2 = -1/4 int S1(u) rho       (= 1/4 int S2 |u|^2 by symmetry, <= 0)
    A0 = -1/4 int S2 rho          (state-independent)
    A3 = 1/2 int S1(u) x.grad rho (dilation term; boundary form for balls).

The full energy is scriptE = E + e^2 A0.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .grid import (
    ComplexField,
    Grid3,
    RealField,
    SpectralWorkspace,
    coulomb_solve,
    grad_norm_sq,
    integrate,
    laplacian,
)
from .profiles import (
    BallsProfile,
    DopingProfile,
    ZeroProfile,
    a3_boundary,
    profile_label,
    sample_rho,
    sample_x_grad_rho,
)

__all__ = [
    "PhysParams",
    "RegimeWarning",
    "SPFields",
    "EnergyBreakdown",
    "Residual",
    "ScalingEntry",
    "ScalingReport",
    "solve_S1",
    "compute_S2",
    "energy_breakdown",
    "grad_E",
    "lagrange_multiplier",
    "nehari_residual",
    "pohozaev_residual",
    "lemma23_residual",
    "scaling_check",
]

THEORY_P_LOW = 2.0
THEORY_P_HIGH = 7.0 / 3.0


class RegimeWarning(UserWarning):
    """Operation invoked outside the 2 < p < 7/3 theory regime."""


@dataclass(frozen=True)
class PhysParams:
    """Nonlinearity exponent p and coupling strength e."""

    p: float
    e: float

    def __post_init__(self):
        if not (1.0 < self.p < 5.0):
            raise ValueError(f"p must lie in (1, 5), got {self.p}")
        if self.e <= 0.0:
            raise ValueError(f"coupling e must be positive, got {self.e}")

    @property
    def in_theory_regime(self) -> bool:
        return THEORY_P_LOW < self.p < THEORY_P_HIGH

    def warn_outside_regime(self, operation: str):
        if not self.in_theory_regime:
            warnings.warn(
                f"{operation}: p = {self.p} is outside the 2 < p < 7/3 regime; "
                "results are exploratory",
                RegimeWarning,
                stacklevel=3,
            )


@dataclass(frozen=True)
class SPFields:
    """The two Newtonian potentials and their sum for one state."""

    s1: RealField
    s2: RealField
    s: RealField


def _profile_cache(profile: DopingProfile, ws: SpectralWorkspace) -> dict:
    """Per-workspace cache of rho samples, S2, and A0 for one profile."""
    entry = ws._s2_cache.get(profile)
    if entry is None:
        rho = sample_rho(profile, ws.grid).values
        if isinstance(profile, ZeroProfile):
            s2 = np.zeros_like(rho)
        else:
            s2 = ws.coulomb(-0.5 * rho)
        a0 = -0.25 * float(np.sum(s2 * rho)) * ws.grid.cell_volume
        entry = {"rho": rho, "s2": s2, "a0": a0}
        ws._s2_cache[profile] = entry
    return entry


def solve_S1(u: ComplexField, ws: SpectralWorkspace) -> RealField:
    """S1(u) = (-Delta)^{-1}(|u|^2 / 2)."""
    dens = u.abs_sq()
    return coulomb_solve(RealField(u.grid, 0.5 * dens.values), ws)


def compute_S2(profile: DopingProfile, ws: SpectralWorkspace) -> RealField:
    """S2 = (-Delta)^{-1}(-rho/2), cached per (profile, workspace)."""
    return RealField(ws.grid, _profile_cache(profile, ws)["s2"].copy())


def assemble_sp_fields(u: ComplexField, profile: DopingProfile, ws: SpectralWorkspace) -> SPFields:
    s1 = solve_S1(u, ws)
    s2 = compute_S2(profile, ws)
    return SPFields(s1, s2, RealField(ws.grid, s1.values + s2.values))


@dataclass(frozen=True)
class EnergyBreakdown:
    """Every scalar energy component for one state."""

    kinetic: float  # 1/2 |grad u|^2
    power: float  # 1/(p+1) |u|_{p+1}^{p+1}
    a0: float
    a1: float
    a2: float
    a2prime: float
    a3: float | None
    a3_form: str  # "smooth", "boundary", or "none"
    energy: float  # E
    script_energy: float  # E + e^2 A0
    mass: float
    p: float
    e: float

    def to_dict(self) -> dict:
        d = {
            "kinetic": self.kinetic,
            "power": self.power,
            "a0": self.a0,
            "a1": self.a1,
            "a2": self.a2,
            "a2prime": self.a2prime,
            "a3": self.a3,
            "a3_form": self.a3_form,
            "energy": self.energy,
            "script_energy": self.script_energy,
            "mass": self.mass,
            "p": self.p,
            "e": self.e,
        }
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @staticmethod
    def csv_header() -> str:
        return "kinetic,power,a0,a1,a2,a2prime,a3,a3_form,energy,script_energy,mass,p,e"

    def csv_row(self) -> str:
        a3 = "" if self.a3 is None else repr(self.a3)
        return ",".join(
            [
                repr(self.kinetic),
                repr(self.power),
                repr(self.a0),
                repr(self.a1),
                repr(self.a2),
                repr(self.a2prime),
                a3,
                self.a3_form,
                repr(self.energy),
                repr(self.script_energy),
                repr(self.mass),
                repr(self.p),
                repr(self.e),
            ]
        )

    @property
    def grad_l2_sq(self) -> float:
        return 2.0 * self.kinetic

    def lp1_power(self) -> float:
        """|u|_{p+1}^{p+1}."""
        return (self.p + 1.0) * self.power


def _abs_sq(values: np.ndarray) -> np.ndarray:
    return values.real**2 + values.imag**2


def energy_breakdown(
    u: ComplexField,
    profile: DopingProfile,
    params: PhysParams,
    ws: SpectralWorkspace,
) -> EnergyBreakdown:
    grid = u.grid
    dv = grid.cell_volume
    cache = _profile_cache(profile, ws)
    rho, s2, a0 = cache["rho"], cache["s2"], cache["a0"]

    dens = _abs_sq(u.values)
    mass = float(np.sum(dens)) * dv
    kinetic = 0.5 * grad_norm_sq(u, ws)
    power = float(np.sum(dens ** ((params.p + 1.0) / 2.0))) * dv / (params.p + 1.0)

    s1 = ws.coulomb(0.5 * dens)
    a1 = 0.25 * float(np.sum(s1 * dens)) * dv
    a2 = -0.25 * float(np.sum(s1 * rho)) * dv
    a2prime = 0.25 * float(np.sum(s2 * dens)) * dv

    if isinstance(profile, ZeroProfile):
        a3, a3_form = None, "none"
    elif isinstance(profile, BallsProfile):
        a3 = a3_boundary(RealField(grid, s1), profile.balls)
        a3_form = "boundary"
    else:
        xgr = sample_x_grad_rho(profile, grid).values
        a3 = 0.5 * float(np.sum(s1 * xgr)) * dv
        a3_form = "smooth"

    e2 = params.e**2
    energy = kinetic - power + e2 * a1 + 2.0 * e2 * a2
    return EnergyBreakdown(
        kinetic=kinetic,
        power=power,
        a0=a0,
        a1=a1,
        a2=a2,
        a2prime=a2prime,
        a3=a3,
        a3_form=a3_form,
        energy=energy,
        script_energy=energy + e2 * a0,
        mass=mass,
        p=params.p,
        e=params.e,
    )


def grad_E(
    u: ComplexField,
    profile: DopingProfile,
    params: PhysParams,
    ws: SpectralWorkspace,
) -> ComplexField:
    """L^2 gradient of E: -Delta u - |u|^{p-1} u + e^2 (S1(u) + S2) u."""
    cache = _profile_cache(profile, ws)
    dens = _abs_sq(u.values)
    s = ws.coulomb(0.5 * dens) + cache["s2"]
    lap = laplacian(u, ws)
    nl = dens ** ((params.p - 1.0) / 2.0)
    vals = -lap.values - nl * u.values + params.e**2 * s * u.values
    return ComplexField(u.grid, vals)


def lagrange_multiplier(breakdown: EnergyBreakdown) -> float:
    """omega extracted from the Nehari identity:

    omega = (|u|_{p+1}^{p+1} - |grad u|^2 - 4 e^2 A1 - 4 e^2 A2) / |u|_2^2.
    """
    if breakdown.mass <= 0.0:
        raise ValueError("Lagrange multiplier undefined for zero mass")
    e2 = breakdown.e**2
    return (
        breakdown.lp1_power()
        - breakdown.grad_l2_sq
        - 4.0 * e2 * breakdown.a1
        - 4.0 * e2 * breakdown.a2
    ) / breakdown.mass


class Residual(NamedTuple):
    """Signed identity residual plus its scale-free normalization."""

    value: float
    normalized: float


def _residual_from_terms(terms: list[float]) -> Residual:
    value = float(sum(terms))
    scale = float(sum(abs(t) for t in terms))
    return Residual(value, value / scale if scale > 0.0 else 0.0)


def nehari_residual(breakdown: EnergyBreakdown, omega: float) -> Residual:
    """|grad u|^2 + omega |u|^2 - |u|_{p+1}^{p+1} + 4 e^2 A1 + 4 e^2 A2."""
    e2 = breakdown.e**2
    return _residual_from_terms(
        [
            breakdown.grad_l2_sq,
            omega * breakdown.mass,
            -breakdown.lp1_power(),
            4.0 * e2 * breakdown.a1,
            4.0 * e2 * breakdown.a2,
        ]
    )


def pohozaev_residual(breakdown: EnergyBreakdown, omega: float) -> Residual:
    """1/2 |grad u|^2 + (3 omega/2) |u|^2 - 3/(p+1) |u|_{p+1}^{p+1}
    + 5 e^2 A1 + 10 e^2 A2 - e^2 A3.

    Vanishes only at true solutions; not algebraically forced.  A3 uses the
    boundary form for indicator profiles and is zero when rho = 0.
    """
    e2 = breakdown.e**2
    a3 = breakdown.a3 if breakdown.a3 is not None else 0.0
    return _residual_from_terms(
        [
            0.5 * breakdown.grad_l2_sq,
            1.5 * omega * breakdown.mass,
            -3.0 / (breakdown.p + 1.0) * breakdown.lp1_power(),
            5.0 * e2 * breakdown.a1,
            10.0 * e2 * breakdown.a2,
            -e2 * a3,
        ]
    )


def lemma23_residual(breakdown: EnergyBreakdown, omega: float) -> Residual:
    """(5p-7) E - 2(p-2)|grad u|^2 + ((3p-5) omega/2)|u|^2 - 8 e^2 A2
    + (3-p) e^2 A3.

    Equals 2 * (Nehari residual) + (p-3) * (Pohozaev residual) identically.
    """
    p = breakdown.p
    e2 = breakdown.e**2
    a3 = breakdown.a3 if breakdown.a3 is not None else 0.0
    return _residual_from_terms(
        [
            (5.0 * p - 7.0) * breakdown.energy,
            -2.0 * (p - 2.0) * breakdown.grad_l2_sq,
            0.5 * (3.0 * p - 5.0) * omega * breakdown.mass,
            -8.0 * e2 * breakdown.a2,
            (3.0 - p) * e2 * a3,
        ]
    )


@dataclass(frozen=True)
class ScalingEntry:
    name: str
    ratio_measured: float
    ratio_exact: float
    exponent_measured: float | None
    exponent_exact: float

    @property
    def exponent_error(self) -> float:
        if self.exponent_measured is None:
            return abs(self.ratio_measured - self.ratio_exact)
        return abs(self.exponent_measured - self.exponent_exact)


@dataclass(frozen=True)
class ScalingReport:
    a: float
    b: float
    lam: float
    entries: tuple[ScalingEntry, ...]

    def entry(self, name: str) -> ScalingEntry:
        for ent in self.entries:
            if ent.name == name:
                return ent
        raise KeyError(name)


def _gaussian_state(grid: Grid3, amplitude: float, width: float) -> ComplexField:
    vals = amplitude * np.exp(-grid.radius_sq() / (2.0 * width**2))
    return ComplexField(grid, vals.astype(complex))


def scaling_check(
    width: float,
    a: float,
    b: float,
    lam: float,
    ws: SpectralWorkspace,
    amplitude: float = 1.0,
) -> ScalingReport:
    """Measure the dilation laws on u_lam(x) = lam^a u(lam^b x).

    The base state is the analytic Gaussian amplitude * exp(-|x|^2/(2 w^2)),
    and u_lam is sampled in closed form (never interpolated), so measured
    exponents isolate the quadrature and Coulomb-solve accuracy.  Reported
    exponents: mass 2a-3b, kinetic 2a-b, A1 4a-5b, S1 at the origin 2a-2b.
    """
    if width <= 0.0 or lam <= 0.0:
        raise ValueError("width and lam must be positive")
    grid = ws.grid
    dv = grid.cell_volume

    base = _gaussian_state(grid, amplitude, width)
    scaled = _gaussian_state(grid, amplitude * lam**a, width / lam**b)

    origin = tuple(np.argmin(np.abs(grid.axis_coords())) for _ in range(3))

    def measures(u: ComplexField) -> dict[str, float]:
        dens = _abs_sq(u.values)
        s1 = ws.coulomb(0.5 * dens)
        return {
            "mass": float(np.sum(dens)) * dv,
            "kinetic": grad_norm_sq(u, ws),
            "a1": 0.25 * float(np.sum(s1 * dens)) * dv,
            "s1_origin": float(s1[origin]),
        }

    m0 = measures(base)
    m1 = measures(scaled)
    exponents = {"mass": 2 * a - 3 * b, "kinetic": 2 * a - b, "a1": 4 * a - 5 * b, "s1_origin": 2 * a - 2 * b}

    entries = []
    loglam = np.log(lam)
    for name, expo in exponents.items():
        ratio = m1[name] / m0[name]
        measured = None if lam == 1.0 else float(np.log(ratio) / loglam)
        entries.append(ScalingEntry(name, float(ratio), float(lam**expo), measured, float(expo)))
    return ScalingReport(a, b, lam, tuple(entries))
