"""Constrained minimization of E on the mass sphere |u|_2^2 = mu.

The workhorse is a normalized gradient flow (imaginary-time method): step
against the L^2 gradient, renormalize the mass, with Barzilai-Borwein step
sizes guarded by backtracking so the energy never increases.  The flow
certifies upper bounds for the ground-state energy curves

    c(mu)      with the doping profile present,
    c_inf(mu)  for the autonomous problem (rho = 0),

and everything derived from them: the critical mass mu* where c_inf turns
negative, sub-additivity margins, and the spectral floor of the linear
operator -Delta + 2 e^2 S2.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.fft as sfft

from .energy import (
    EnergyBreakdown,
    PhysParams,
    energy_breakdown,
    lagrange_multiplier,
    lemma23_residual,
    nehari_residual,
    pohozaev_residual,
    _profile_cache,
)
from .grid import ComplexField, Grid3, SpectralWorkspace
from .profiles import DopingProfile, ZeroProfile

__all__ = [
    "MinimizeConfig",
    "MinimizerResult",
    "CurvePoint",
    "CurveTable",
    "MuStarResult",
    "SubadditivityReport",
    "FloorPoint",
    "NumericalAbort",
    "BracketError",
    "minimize_at_mass",
    "c_curve",
    "mu_star",
    "subadditivity_scan",
    "spectral_floor",
    "lower_bound_estimate",
]

_FFT_WORKERS = -1


class NumericalAbort(RuntimeError):
    """NaN or overflow encountered inside an iteration."""


class BracketError(ValueError):
    """A bisection bracket whose endpoints do not straddle the predicate."""


@dataclass(frozen=True)
class MinimizeConfig:
    """Knobs of the normalized gradient flow."""

    tau0: float = 0.1
    max_iters: int = 4000
    grad_tol: float = 1e-7  # on |grad E + omega u|_2 / |u|_{H^1}
    energy_tol: float = 1e-9  # stall detection scale; eps_neg = 10x this
    step_control: str = "bb"  # "bb" or "backtracking"
    initializer: str = "gaussian"  # "gaussian", "previous", or "file"
    init_width: float | None = None
    init_field: ComplexField | None = None
    init_path: str | None = None
    seed: int = 0
    n_restarts: int = 3
    tau_min: float = 1e-7
    tau_max: float = 50.0
    backtrack_max: int = 40
    stall_iters: int = 100

    def __post_init__(self):
        if self.tau0 <= 0.0:
            raise ValueError("initial step must be positive")
        if self.grad_tol <= 0.0 or self.energy_tol <= 0.0:
            raise ValueError("tolerances must be positive")
        if self.step_control not in ("bb", "backtracking"):
            raise ValueError(f"unknown step control {self.step_control!r}")
        if self.initializer not in ("gaussian", "previous", "file"):
            raise ValueError(f"unknown initializer {self.initializer!r}")

    @property
    def eps_neg(self) -> float:
        """Threshold below which an energy counts as genuinely negative."""
        return 10.0 * self.energy_tol


@dataclass(frozen=True)
class MinimizerResult:
    u_min: ComplexField
    breakdown: EnergyBreakdown
    omega: float
    residuals: dict[str, float]  # normalized nehari/pohozaev/lemma23 + gradient
    iterations: int
    converged: bool
    c_value: float
    mu: float


class _Objective:
    """Energy/gradient evaluations sharing one Coulomb solve per point."""

    def __init__(self, profile: DopingProfile, params: PhysParams, ws: SpectralWorkspace):
        cache = _profile_cache(profile, ws)
        self.s2 = cache["s2"]
        self.params = params
        self.ws = ws
        self.dv = ws.grid.cell_volume
        self.inv_n3 = 1.0 / ws.grid.n**3

    def __call__(self, vals: np.ndarray, need_grad: bool):
        p, e2 = self.params.p, self.params.e**2
        ws = self.ws
        dens = vals.real**2 + vals.imag**2
        mass = float(np.sum(dens)) * self.dv
        uhat = sfft.fftn(vals, workers=_FFT_WORKERS)
        ksq = float(np.sum(ws.k2 * (uhat.real**2 + uhat.imag**2))) * self.dv * self.inv_n3
        s1 = ws.coulomb(0.5 * dens)
        a1 = 0.25 * float(np.sum(s1 * dens)) * self.dv
        a2 = 0.25 * float(np.sum(self.s2 * dens)) * self.dv
        power = float(np.sum(dens ** ((p + 1.0) / 2.0))) * self.dv / (p + 1.0)
        energy = 0.5 * ksq - power + e2 * a1 + 2.0 * e2 * a2
        if not np.isfinite(energy):
            raise NumericalAbort("energy became non-finite")
        grad = None
        if need_grad:
            lap = sfft.ifftn(-ws.k2 * uhat, workers=_FFT_WORKERS)
            grad = -lap - dens ** ((p - 1.0) / 2.0) * vals + e2 * (s1 + self.s2) * vals
        return energy, grad, ksq, mass


class _RayleighObjective:
    """Quadratic form int(|grad u|^2 + 2 e^2 S2 |u|^2) for the spectral floor."""

    def __init__(self, profile: DopingProfile, e: float, ws: SpectralWorkspace):
        self.s2 = _profile_cache(profile, ws)["s2"]
        self.coef = 2.0 * e**2
        self.ws = ws
        self.dv = ws.grid.cell_volume
        self.inv_n3 = 1.0 / ws.grid.n**3

    def __call__(self, vals: np.ndarray, need_grad: bool):
        ws = self.ws
        dens = vals.real**2 + vals.imag**2
        mass = float(np.sum(dens)) * self.dv
        uhat = sfft.fftn(vals, workers=_FFT_WORKERS)
        ksq = float(np.sum(ws.k2 * (uhat.real**2 + uhat.imag**2))) * self.dv * self.inv_n3
        pot = self.coef * float(np.sum(self.s2 * dens)) * self.dv
        energy = ksq + pot
        if not np.isfinite(energy):
            raise NumericalAbort("Rayleigh quotient became non-finite")
        grad = None
        if need_grad:
            lap = sfft.ifftn(-ws.k2 * uhat, workers=_FFT_WORKERS)
            grad = 2.0 * (-lap + self.coef * self.s2 * vals)
        return energy, grad, ksq, mass


@dataclass
class _FlowState:
    vals: np.ndarray
    energy: float
    grad: np.ndarray
    ksq: float
    iterations: int
    converged: bool
    grad_res: float


def _rescale_mass(vals: np.ndarray, mu: float, dv: float) -> np.ndarray:
    mass = float(np.sum(vals.real**2 + vals.imag**2)) * dv
    if mass <= 0.0:
        raise NumericalAbort("iterate lost all mass")
    return vals * np.sqrt(mu / mass)


def _real_inner(a: np.ndarray, b: np.ndarray, dv: float) -> float:
    return float(np.sum(a.real * b.real + a.imag * b.imag)) * dv


def _normalized_flow(mu: float, objective, u0: np.ndarray, config: MinimizeConfig) -> _FlowState:
    """Monotone normalized gradient flow from u0; returns the best iterate."""
    dv = objective.dv
    vals = _rescale_mass(u0.astype(np.complex128), mu, dv)
    energy, grad, ksq, _ = objective(vals, need_grad=True)

    tau = config.tau0
    prev_vals = prev_grad = None
    best = dict(vals=vals, energy=energy, grad=grad, ksq=ksq, res=np.inf)
    stall_anchor = energy
    stall_count = 0
    converged = False
    grad_res = np.inf
    it = 0

    for it in range(1, config.max_iters + 1):
        omega = -_real_inner(grad, vals, dv) / mu
        resid = grad + omega * vals
        h1 = np.sqrt(mu + ksq)
        grad_res = float(np.sqrt(_real_inner(resid, resid, dv))) / h1
        if grad_res < best["res"]:
            best = dict(vals=vals, energy=energy, grad=grad, ksq=ksq, res=grad_res)
        if grad_res < config.grad_tol:
            converged = True
            break

        if config.step_control == "bb" and prev_vals is not None:
            s = vals - prev_vals
            y = grad - prev_grad
            sy = _real_inner(s, y, dv)
            yy = _real_inner(y, y, dv)
            if yy > 0.0 and np.isfinite(sy):
                tau = abs(sy) / yy
            tau = min(max(tau, config.tau_min), config.tau_max)

        accepted = False
        trial_tau = tau
        for _ in range(config.backtrack_max):
            trial = _rescale_mass(vals - trial_tau * grad, mu, dv)
            e_trial, _, _, _ = objective(trial, need_grad=False)
            if e_trial <= energy:
                accepted = True
                break
            trial_tau *= 0.5
        if not accepted:
            break  # numerically stationary: no descent direction at any step
        tau = trial_tau

        prev_vals, prev_grad = vals, grad
        vals = trial
        energy, grad, ksq, _ = objective(vals, need_grad=True)

        if stall_anchor - energy < config.energy_tol:
            stall_count += 1
            if stall_count >= config.stall_iters:
                break
        else:
            stall_anchor = energy
            stall_count = 0

    # prefer the last iterate (lowest energy); best["res"] tracks the
    # smallest residual seen in case the loop exited on a stall
    omega = -_real_inner(grad, vals, dv) / mu
    resid = grad + omega * vals
    grad_res = float(np.sqrt(_real_inner(resid, resid, dv))) / np.sqrt(mu + ksq)
    return _FlowState(vals, energy, grad, ksq, it, converged, grad_res)


def _gaussian_trial(grid: Grid3, width: float, mu: float) -> np.ndarray:
    vals = np.exp(-grid.radius_sq() / (2.0 * width**2)).astype(np.complex128)
    mass = float(np.sum(vals.real**2)) * grid.cell_volume
    return vals * np.sqrt(mu / mass)


def _initial_states(mu: float, objective, config: MinimizeConfig, grid: Grid3) -> list[np.ndarray]:
    if config.initializer == "previous":
        if config.init_field is None:
            raise ValueError("initializer 'previous' requires init_field")
        return [config.init_field.values.copy()]
    if config.initializer == "file":
        from .fieldio import read_field

        if config.init_path is None:
            raise ValueError("initializer 'file' requires init_path")
        fld = read_field(config.init_path, kind="complex")
        if fld.grid != grid:
            raise ValueError("initializer field lives on a different grid")
        return [fld.values.copy()]

    # gaussian: scan widths for the lowest trial energy, then fan out
    if config.init_width is not None:
        best_width = config.init_width
    else:
        widths = np.geomspace(3.0 * grid.spacing, grid.length / 5.0, 10)
        energies = []
        for w in widths:
            e_w, _, _, _ = objective(_gaussian_trial(grid, w, mu), need_grad=False)
            energies.append(e_w)
        best_width = float(widths[int(np.argmin(energies))])

    factors = [1.0, 0.6, 1.7, 0.35, 2.8]
    rng = np.random.default_rng(config.seed)
    states = []
    for k in range(max(1, config.n_restarts)):
        w = best_width * factors[k % len(factors)]
        vals = _gaussian_trial(grid, w, mu)
        if k > 0:
            noise = rng.standard_normal(vals.shape) + 1j * rng.standard_normal(vals.shape)
            noise = sfft.ifftn(sfft.fftn(noise) * np.exp(-grid.wavenumber_sq()))
            vals = vals + 0.02 * np.max(np.abs(vals)) * noise
        states.append(vals)
    return states


def _fix_global_phase(vals: np.ndarray) -> np.ndarray:
    total = np.sum(vals)
    if abs(total) > 0.0:
        vals = vals * np.exp(-1j * np.angle(total))
    return vals


def minimize_at_mass(
    mu: float,
    profile: DopingProfile,
    params: PhysParams,
    config: MinimizeConfig,
    ws: SpectralWorkspace,
) -> MinimizerResult:
    """Normalized-gradient-flow upper bound for c(mu), with diagnostics.

    Non-convergence is reported through the flag, never raised; a NaN in
    the energy aborts with NumericalAbort.
    """
    if mu <= 0.0:
        raise ValueError("mass must be positive")
    objective = _Objective(profile, params, ws)
    states = _initial_states(mu, objective, config, ws.grid)

    best: _FlowState | None = None
    for u0 in states:
        state = _normalized_flow(mu, objective, u0, config)
        if best is None or state.energy < best.energy:
            best = state

    vals = _fix_global_phase(_rescale_mass(best.vals, mu, ws.grid.cell_volume))
    u = ComplexField(ws.grid, vals)
    bd = energy_breakdown(u, profile, params, ws)
    omega = lagrange_multiplier(bd)
    residuals = {
        "nehari": nehari_residual(bd, omega).normalized,
        "pohozaev": pohozaev_residual(bd, omega).normalized,
        "lemma23": lemma23_residual(bd, omega).normalized,
        "gradient": best.grad_res,
    }
    return MinimizerResult(
        u_min=u,
        breakdown=bd,
        omega=omega,
        residuals=residuals,
        iterations=best.iterations,
        converged=best.converged,
        c_value=bd.energy,
        mu=mu,
    )


@dataclass(frozen=True)
class CurvePoint:
    mu: float
    c: float
    omega: float
    nehari: float
    pohozaev: float
    lemma23: float
    grad_res: float
    iterations: int
    converged: bool


@dataclass(frozen=True)
class CurveTable:
    points: tuple[CurvePoint, ...]
    nonincreasing: bool  # within 2x energy tolerance

    CSV_HEADER = "mu,c,omega,nehari,pohozaev,lemma23,grad_res,iters,converged"

    def csv_rows(self) -> list[str]:
        return [
            ",".join(
                [
                    repr(p.mu),
                    repr(p.c),
                    repr(p.omega),
                    repr(p.nehari),
                    repr(p.pohozaev),
                    repr(p.lemma23),
                    repr(p.grad_res),
                    str(p.iterations),
                    str(p.converged).lower(),
                ]
            )
            for p in self.points
        ]


def c_curve(
    mu_list,
    profile: DopingProfile,
    params: PhysParams,
    config: MinimizeConfig,
    ws: SpectralWorkspace,
) -> CurveTable:
    """Sweep c(mu) over ascending masses, warm-starting from the previous
    minimizer rescaled; failures flag the row instead of aborting the sweep."""
    mus = [float(m) for m in mu_list]
    if any(m <= 0.0 for m in mus):
        raise ValueError("masses must be positive")
    if sorted(mus) != mus:
        raise ValueError("mass list must be sorted ascending")

    points = []
    prev_field: ComplexField | None = None
    cfg = config
    for m in mus:
        if prev_field is not None:
            cfg = replace(config, initializer="previous", init_field=prev_field, n_restarts=1)
        try:
            res = minimize_at_mass(m, profile, params, cfg, ws)
        except NumericalAbort:
            points.append(CurvePoint(m, np.nan, np.nan, np.nan, np.nan, np.nan, np.nan, 0, False))
            prev_field = None
            continue
        points.append(
            CurvePoint(
                m,
                res.c_value,
                res.omega,
                res.residuals["nehari"],
                res.residuals["pohozaev"],
                res.residuals["lemma23"],
                res.residuals["gradient"],
                res.iterations,
                res.converged,
            )
        )
        prev_field = res.u_min

    cs = [p.c for p in points if np.isfinite(p.c)]
    slack = 2.0 * config.energy_tol
    nonincreasing = all(cs[i + 1] <= cs[i] + slack for i in range(len(cs) - 1))
    return CurveTable(tuple(points), nonincreasing)


@dataclass(frozen=True)
class MuStarResult:
    value: float
    bracket_low: float
    bracket_high: float
    energy_low: float
    energy_high: float
    evaluations: int


def mu_star(
    params: PhysParams,
    config: MinimizeConfig,
    bracket: tuple[float, float],
    tol: float,
    ws: SpectralWorkspace,
) -> MuStarResult:
    """Bisection for mu* = inf{mu : c_inf(mu) < -eps_neg}.

    The bracket must satisfy c_inf(low) >= -eps_neg and c_inf(high) < -eps_neg;
    otherwise the measured endpoint energies are reported in the error.
    """
    params.warn_outside_regime("mu_star")
    lo, hi = float(bracket[0]), float(bracket[1])
    if not (0.0 < lo < hi):
        raise BracketError(f"bracket must satisfy 0 < low < high, got ({lo}, {hi})")
    zero = ZeroProfile()
    eps = config.eps_neg
    evals = 0

    def c_inf(m: float) -> float:
        nonlocal evals
        evals += 1
        return minimize_at_mass(m, zero, params, config, ws).c_value

    e_lo, e_hi = c_inf(lo), c_inf(hi)
    if not (e_lo >= -eps and e_hi < -eps):
        raise BracketError(
            f"invalid bracket: c_inf({lo}) = {e_lo:.3e}, c_inf({hi}) = {e_hi:.3e}, "
            f"eps_neg = {eps:.1e}"
        )
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if c_inf(mid) < -eps:
            hi = mid
        else:
            lo = mid
    return MuStarResult(0.5 * (lo + hi), lo, hi, e_lo, e_hi, evals)


@dataclass(frozen=True)
class SplitPoint:
    fraction: float
    mu_part: float
    c_part: float
    c_inf_rest: float
    margin: float  # c(mu') + c_inf(mu - mu') - c(mu); positive = consistent
    converged: bool


@dataclass(frozen=True)
class HomogeneityPoint:
    lam: float
    s: float
    diagnostic: float  # c(lam s) - lam c(s); negative = consistent
    converged: bool


@dataclass(frozen=True)
class SubadditivityReport:
    mu: float
    c_total: float
    splits: tuple[SplitPoint, ...]
    homogeneity: tuple[HomogeneityPoint, ...]
    caveat: str = (
        "all c values are upper bounds from a heuristic flow; margins are "
        "consistent-with checks, not proofs"
    )

    SPLIT_CSV_HEADER = "fraction,mu_part,c_part,c_inf_rest,margin,converged"

    def split_csv_rows(self) -> list[str]:
        return [
            ",".join(
                [
                    repr(s.fraction),
                    repr(s.mu_part),
                    repr(s.c_part),
                    repr(s.c_inf_rest),
                    repr(s.margin),
                    str(s.converged).lower(),
                ]
            )
            for s in self.splits
        ]


def subadditivity_scan(
    mu: float,
    split_fractions,
    profile: DopingProfile,
    params: PhysParams,
    config: MinimizeConfig,
    ws: SpectralWorkspace,
) -> SubadditivityReport:
    """Strict sub-additivity margins c(mu') + c_inf(mu - mu') - c(mu) and the
    homogeneity diagnostic c(lam s) - lam c(s) at s = mu / 2."""
    params.warn_outside_regime("subadditivity_scan")
    if mu <= 0.0:
        raise ValueError("mass must be positive")
    fractions = [float(f) for f in split_fractions]
    if any(not (0.0 < f < 1.0) for f in fractions):
        raise ValueError("split fractions must lie in (0, 1)")
    zero = ZeroProfile()

    total = minimize_at_mass(mu, profile, params, config, ws)
    splits = []
    for f in fractions:
        part = minimize_at_mass(f * mu, profile, params, config, ws)
        rest = minimize_at_mass((1.0 - f) * mu, zero, params, config, ws)
        margin = part.c_value + rest.c_value - total.c_value
        splits.append(
            SplitPoint(f, f * mu, part.c_value, rest.c_value, margin, part.converged and rest.converged)
        )

    s = 0.5 * mu
    base = minimize_at_mass(s, profile, params, config, ws)
    homogeneity = []
    for lam in (1.25, 1.5, 2.0):
        scaled = minimize_at_mass(lam * s, profile, params, config, ws)
        homogeneity.append(
            HomogeneityPoint(lam, s, scaled.c_value - lam * base.c_value, scaled.converged and base.converged)
        )
    return SubadditivityReport(mu, total.c_value, tuple(splits), tuple(homogeneity))


@dataclass(frozen=True)
class FloorPoint:
    box_length: float
    floor: float
    converged: bool
    iterations: int


def spectral_floor(
    profile: DopingProfile,
    e: float,
    box_lengths,
    config: MinimizeConfig,
    points_per_axis: int,
) -> list[FloorPoint]:
    """Rayleigh-quotient floor of -Delta + 2 e^2 S2 on boxes of growing size.

    Runs the same normalized flow on the quadratic functional at unit mass;
    the sequence of floors across box sizes probes whether the doping well
    binds a state (floor stays negative) or not (floor drains to zero).
    """
    if e <= 0.0:
        raise ValueError("coupling must be positive")
    out = []
    for length in box_lengths:
        grid = Grid3(points_per_axis, float(length))
        if isinstance(profile, ZeroProfile):
            out.append(FloorPoint(float(length), 0.0, True, 0))
            continue
        ws = SpectralWorkspace(grid)
        objective = _RayleighObjective(profile, e, ws)
        # width scan for the Rayleigh quotient, mirrors the energy initializer
        widths = np.geomspace(3.0 * grid.spacing, grid.length / 4.0, 10)
        trials = [objective(_gaussian_trial(grid, w, 1.0), need_grad=False)[0] for w in widths]
        w0 = float(widths[int(np.argmin(trials))])
        try:
            state = _normalized_flow(1.0, objective, _gaussian_trial(grid, w0, 1.0), config)
            out.append(FloorPoint(float(length), state.energy, state.converged, state.iterations))
        except NumericalAbort:
            out.append(FloorPoint(float(length), np.nan, False, 0))
    return out


def lower_bound_estimate(mu: float, params: PhysParams, rho_norm: float, constant: float = 10.0) -> float:
    """Coarse floor -C mu^{(5-p)/(7-3p)} - C e^{8/3} mu |rho|_{6/5}^{4/3}.

    The constant is an empirical calibration of the Gagliardo-Nirenberg /
    Young chain, generous by design; reported c values must stay above it.
    """
    p, e = params.p, params.e
    return -constant * mu ** ((5.0 - p) / (7.0 - 3.0 * p)) - constant * e ** (8.0 / 3.0) * mu * rho_norm ** (4.0 / 3.0)
