"""Common (T_eq, mu_eq) reached once all flows vanish.

Total particle number and energy are conserved, so the equilibrium point
solves two equations in two unknowns::

    sum_j N_j(T_eq, mu_eq) = N_total
    sum_j E_j(T_eq, mu_eq) = E_total

For all-alpha = 1 ensembles there is a closed form in terms of
B-weighted means.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import X_MIN_DEFAULT, ReservoirState, check_x_min
from .errors import EquilibriumSolverError, InvalidInputError, SommerfeldDomainError, UnsupportedCaseError
from .thermo import PI2_6, totals

MAX_ITER = 100
MAX_HALVINGS = 50
RESIDUAL_TOL = 1e-12
POLISH_STEPS = 3
STEP_RTOL = 4 * np.finfo(float).eps


@dataclass(frozen=True)
class EquilibriumPoint:
    T_eq: float
    mu_eq: float
    N_total: float
    E_total: float
    residual: float
    iterations: int = 0

    @property
    def x_eq(self) -> float:
        return self.mu_eq / self.T_eq


def _sums(T, mu, alpha, B):
    """Total N, E and their (T, mu) partials for a common (T, mu)."""
    cn = PI2_6 * alpha * (alpha - 1.0)
    ce = PI2_6 * alpha * (alpha + 1.0)
    ke = B * alpha / (alpha + 1.0)
    N = B * (mu**alpha + cn * mu ** (alpha - 2.0) * T**2)
    E = ke * (mu ** (alpha + 1.0) + ce * mu ** (alpha - 1.0) * T**2)
    dN_dT = B * 2.0 * cn * mu ** (alpha - 2.0) * T
    dN_dmu = B * (alpha * mu ** (alpha - 1.0) + cn * (alpha - 2.0) * mu ** (alpha - 3.0) * T**2)
    dE_dT = ke * 2.0 * ce * mu ** (alpha - 1.0) * T
    dE_dmu = ke * ((alpha + 1.0) * mu**alpha + ce * (alpha - 1.0) * mu ** (alpha - 2.0) * T**2)
    jac = np.array([[dN_dT.sum(), dN_dmu.sum()], [dE_dT.sum(), dE_dmu.sum()]])
    return math.fsum(N), math.fsum(E), jac


def _validate(initial, x_min):
    if len(initial) < 2:
        raise InvalidInputError("equilibrium needs at least two reservoirs")
    for i, r in enumerate(initial):
        r.check_degenerate(x_min, index=i)


def solve_equilibrium(initial: Sequence[ReservoirState], x_min=X_MIN_DEFAULT) -> EquilibriumPoint:
    """Damped Newton iteration on the two conservation equations.

    Starts from the B-weighted means of T and mu. A step is halved while it
    would leave T > 0, x >= 3.
    """
    x_min = check_x_min(x_min)
    _validate(initial, x_min)
    alpha = np.array([r.alpha for r in initial])
    B = np.array([r.prefactor for r in initial])
    N_tot, E_tot = totals(initial, x_min)

    w = B / B.sum()
    T = float(w @ [r.temperature for r in initial])
    mu = float(w @ [r.chemical_potential for r in initial])

    def residuals(T, mu):
        N, E, jac = _sums(T, mu, alpha, B)
        return np.array([(N - N_tot) / N_tot, (E - E_tot) / E_tot]), jac

    res, jac = residuals(T, mu)
    it = 0
    polish = 0
    while polish < POLISH_STEPS:
        if np.max(np.abs(res)) < RESIDUAL_TOL:
            # T enters E only through a term small against mu^(alpha+1) at large
            # x, so a tiny residual can still leave T inaccurate; keep taking
            # full Newton steps until they reach the rounding level
            polish += 1
        elif it >= MAX_ITER:
            raise EquilibriumSolverError(
                f"no convergence after {MAX_ITER} iterations",
                iterate=(T, mu),
                residuals=tuple(res),
            )
        it += 1
        scaled = jac / np.array([[N_tot], [E_tot]])
        try:
            dT, dmu = -np.linalg.solve(scaled, res)
        except np.linalg.LinAlgError as exc:
            raise EquilibriumSolverError("singular Jacobian", iterate=(T, mu), residuals=tuple(res)) from exc
        if polish and abs(dT) <= STEP_RTOL * T and abs(dmu) <= STEP_RTOL * abs(mu):
            break
        step = 1.0
        for _ in range(MAX_HALVINGS):
            T_new, mu_new = T + step * dT, mu + step * dmu
            if T_new > 0 and mu_new / T_new >= 3.0:
                break
            step *= 0.5
        else:
            raise EquilibriumSolverError(
                "step halving could not keep the iterate in T > 0, x >= 3",
                iterate=(T, mu),
                residuals=tuple(res),
            )
        res_new, jac_new = residuals(float(T_new), float(mu_new))
        if polish and np.max(np.abs(res_new)) >= RESIDUAL_TOL:
            break
        T, mu = float(T_new), float(mu_new)
        res, jac = res_new, jac_new

    if mu / T < x_min:
        raise SommerfeldDomainError(
            f"equilibrium x = mu/T = {mu / T:.6g} is below x_min = {x_min:g}", x=mu / T
        )
    return EquilibriumPoint(float(T), float(mu), N_tot, E_tot, float(np.max(np.abs(res))), it)


def weighted_mean(values, weights) -> float:
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    return float(values @ weights / weights.sum())


def equilibrium_closed_form_2d(initial: Sequence[ReservoirState]) -> EquilibriumPoint:
    """Closed form for alpha = 1 (planar reservoirs with quadratic dispersion).

    mu_eq = <mu>,  T_eq^2 = <T^2> + (<mu^2> - <mu>^2) / (pi^2/3)
    """
    if len(initial) < 1:
        raise InvalidInputError("no reservoirs")
    bad = [i for i, r in enumerate(initial) if r.alpha != 1.0]
    if bad:
        raise UnsupportedCaseError(f"closed form needs alpha = 1 for every reservoir; not for {bad}")
    B = [r.prefactor for r in initial]
    mu = np.array([r.chemical_potential for r in initial])
    T = np.array([r.temperature for r in initial])
    mu_eq = weighted_mean(mu, B)
    # centred second moment; <mu^2> - <mu>^2 would cancel
    spread = weighted_mean((mu - mu_eq) ** 2, B)
    T_eq = math.sqrt(weighted_mean(T**2, B) + spread / (2.0 * PI2_6))
    Bv = np.asarray(B)
    N_tot = math.fsum(Bv * mu)
    E_tot = math.fsum(0.5 * Bv * (mu**2 + 2.0 * PI2_6 * T**2))
    N_eq = Bv.sum() * mu_eq
    E_eq = 0.5 * Bv.sum() * (mu_eq**2 + 2.0 * PI2_6 * T_eq**2)
    residual = max(abs(N_eq - N_tot) / abs(N_tot), abs(E_eq - E_tot) / E_tot) if N_tot else 0.0
    return EquilibriumPoint(T_eq, mu_eq, N_tot, E_tot, residual)


def chemical_potential_spread(initial: Sequence[ReservoirState]) -> float:
    """``D_mu = <mu^2> - <mu>^2`` with B weights, evaluated as ``<(mu - <mu>)^2>``."""
    B = [r.prefactor for r in initial]
    mu = np.array([r.chemical_potential for r in initial])
    return weighted_mean((mu - weighted_mean(mu, B)) ** 2, B)


def temperature_bounds_2d(initial: Sequence[ReservoirState]) -> tuple[float, float]:
    """Bounds on ``T_eq^2`` for alpha = 1 ensembles: ``min/max T_j^2 + D_mu/(pi^2/3)``."""
    shift = chemical_potential_spread(initial) / (2.0 * PI2_6)
    t2 = [r.temperature**2 for r in initial]
    return min(t2) + shift, max(t2) + shift
