"""Reservoir particle number and energy in the degenerate (Sommerfeld) limit,
an exact quadrature reference, and the rate equations for (T, x = mu/T).

With ``B = A V / alpha`` the expansions read

    N = B Q_alpha(x) T^alpha
    E = B alpha / (alpha + 1) Q_{alpha+1}(x) T^(alpha+1)

where ``Q_a(x) = x^a + (pi^2/6) a (a-1) x^(a-2)``. Note ``dQ_a/dx = a Q_{a-1}``.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy import integrate, special

from .core import X_MIN_DEFAULT, ReservoirState, SystemSpec, check_x_min
from .errors import InvalidInputError, QuadratureError, SingularJacobianError, SommerfeldDomainError
from .flows import coupling_matrix, pairwise_flow_arrays

PI2_6 = math.pi**2 / 6.0
ORACLE_TAIL = 60.0
_SINGULAR_RTOL = 1e-12


def sommerfeld_poly(alpha, x):
    """``Q_alpha(x)``; broadcasts."""
    alpha = np.asarray(alpha, dtype=float)
    x = np.asarray(x, dtype=float)
    return x**alpha + PI2_6 * alpha * (alpha - 1.0) * x ** (alpha - 2.0)


def _degenerate(r: ReservoirState, x_min):
    r.check_degenerate(x_min)
    return r.temperature, r.x, r.alpha, r.prefactor


def particle_count(r: ReservoirState, x_min=X_MIN_DEFAULT) -> float:
    T, x, a, B = _degenerate(r, x_min)
    return float(B * sommerfeld_poly(a, x) * T**a)


def energy_content(r: ReservoirState, x_min=X_MIN_DEFAULT) -> float:
    T, x, a, B = _degenerate(r, x_min)
    return float(B * a / (a + 1.0) * sommerfeld_poly(a + 1.0, x) * T ** (a + 1.0))


def partials_T_x(r: ReservoirState, x_min=X_MIN_DEFAULT) -> np.ndarray:
    """``[[dN/dT, dN/dx], [dE/dT, dE/dx]]`` in the (T, x) variables."""
    T, x, a, B = _degenerate(r, x_min)
    q_m, q_0, q_p = (float(sommerfeld_poly(a + k, x)) for k in (-1.0, 0.0, 1.0))
    return B * a * np.array(
        [
            [q_0 * T ** (a - 1.0), q_m * T**a],
            [q_p * T**a, q_0 * T ** (a + 1.0)],
        ]
    )


def partials_T_mu(r: ReservoirState, x_min=X_MIN_DEFAULT) -> np.ndarray:
    """``[[dN/dT, dN/dmu], [dE/dT, dE/dmu]]`` in the (T, mu) variables."""
    T, _, a, B = _degenerate(r, x_min)
    mu = r.chemical_potential
    cn = PI2_6 * a * (a - 1.0)
    ce = PI2_6 * a * (a + 1.0)
    ke = B * a / (a + 1.0)
    return np.array(
        [
            [B * 2.0 * cn * mu ** (a - 2.0) * T, B * (a * mu ** (a - 1.0) + cn * (a - 2.0) * mu ** (a - 3.0) * T**2)],
            [ke * 2.0 * ce * mu ** (a - 1.0) * T, ke * ((a + 1.0) * mu**a + ce * (a - 1.0) * mu ** (a - 2.0) * T**2)],
        ]
    )


def fermi_integral_oracle(f_exponent, mu, T, rtol=1e-10) -> float:
    """``int_0^inf eps^p / (exp((eps - mu)/T) + 1) d eps`` by adaptive quadrature.

    The integral is split at ``mu`` and the upper piece is cut at
    ``mu + 60 T``; :func:`oracle_tail_bound` bounds what is discarded.
    """
    p = float(f_exponent)
    mu = float(mu)
    T = float(T)
    if p < 0:
        raise InvalidInputError("f_exponent must be non-negative")
    if not T > 0:
        raise InvalidInputError("temperature must be positive")

    def f(eps):
        v = (eps - mu) / T
        if v >= 0:
            e = math.exp(-v)
            occ = e / (1.0 + e)
        else:
            occ = 1.0 / (1.0 + math.exp(v))
        return eps**p * occ

    lower_end = max(mu, 0.0)
    upper_end = max(mu + ORACLE_TAIL * T, 0.0)
    pieces = []
    for a, b in ((0.0, lower_end), (lower_end, upper_end)):
        if b <= a:
            continue
        val, err, info = integrate.quad(f, a, b, epsabs=0.0, epsrel=1e-13, limit=500, full_output=1)[:3]
        pieces.append((val, err, info))
    total = sum(v for v, _, _ in pieces)
    err = sum(e for _, e, _ in pieces)
    if not math.isfinite(total) or err > rtol * abs(total):
        raise QuadratureError(
            f"quadrature did not reach rtol={rtol:g}: value={total!r}, "
            f"error estimate={err!r}, evaluations={[i['neval'] for _, _, i in pieces]}"
        )
    return total


def oracle_tail_bound(f_exponent, mu, T) -> float:
    """Upper bound on the integral beyond ``mu + 60 T`` (Boltzmann majorant)."""
    p = float(f_exponent)
    a = (mu + ORACLE_TAIL * T) / T
    return float(T ** (p + 1.0) * math.exp(mu / T) * special.gamma(p + 1.0) * special.gammaincc(p + 1.0, a))


def exact_particle_count(r: ReservoirState) -> float:
    """Particle number from the exact Fermi integral (reference only)."""
    return r.prefactor * r.alpha * fermi_integral_oracle(r.alpha - 1.0, r.chemical_potential, r.temperature)


def exact_energy_content(r: ReservoirState) -> float:
    return r.prefactor * r.alpha * fermi_integral_oracle(r.alpha, r.chemical_potential, r.temperature)


class RateKernel:
    """``(dT/dt, dx/dt)`` from flows with the alpha-dependent constants hoisted.

    ``Q_{a+k}(x)`` is factored as ``x^(a+k) (1 + c_k / x^2)``.
    """

    def __init__(self, alpha, B):
        alpha = np.asarray(alpha, dtype=float)
        self.alpha = alpha
        self.c_m = PI2_6 * (alpha - 1.0) * (alpha - 2.0)
        self.c_0 = PI2_6 * alpha * (alpha - 1.0)
        self.c_p = PI2_6 * (alpha + 1.0) * alpha
        # A~ V = A V pi^2/3 = B alpha pi^2/3
        self.av = np.asarray(B, dtype=float) * alpha * (2.0 * PI2_6)

    def __call__(self, T, x, J, P):
        x2 = x * x
        gap = x2 - self.c_0
        if (gap < _SINGULAR_RTOL * x2).any():
            bad = int(np.argmin(gap / x2))
            raise SingularJacobianError(
                f"reservoir {bad}: x^2 - (pi^2/6) alpha (alpha-1) = {gap[bad]:.3g} at x = {x[bad]:.6g}"
            )
        inv = 1.0 / x2
        xa = x**self.alpha
        q_m = xa / x * (1.0 + self.c_m * inv)
        q_0 = xa * (1.0 + self.c_0 * inv)
        q_p = xa * x * (1.0 + self.c_p * inv)
        xr = xa * inv  # x^(2a-4) = (x^a / x^2)^2
        den = self.av * T**self.alpha * (xr * xr) * gap
        TP = T * P
        T_dot = (q_0 * TP - q_m * J) / den
        x_dot = (q_0 * J - q_p * TP) / (den * T)
        return T_dot, x_dot


def rate_arrays(T, x, alpha, B, J, P):
    """``(dT/dt, dx/dt)`` arrays from flows; no domain checks."""
    return RateKernel(alpha, B)(np.asarray(T, float), np.asarray(x, float), J, P)


def _arrays(reservoirs):
    T = np.array([r.temperature for r in reservoirs])
    x = np.array([r.x for r in reservoirs])
    alpha = np.array([r.alpha for r in reservoirs])
    B = np.array([r.prefactor for r in reservoirs])
    return T, x, alpha, B


def ode_rhs(sys: SystemSpec, reservoirs: Sequence[ReservoirState], x_min=X_MIN_DEFAULT) -> np.ndarray:
    """Rates ``(dT_j/dt, dx_j/dt)`` as an ``(n, 2)`` array, flows from the pairwise form."""
    x_min = check_x_min(x_min)
    for i, r in enumerate(reservoirs):
        r.check_degenerate(x_min, index=i)
    T, x, alpha, B = _arrays(reservoirs)
    mu = x * T
    G = coupling_matrix(sys.omega, reservoirs)
    J, P, _, _ = pairwise_flow_arrays(sys.omega, T, mu, G)
    T_dot, x_dot = rate_arrays(T, x, alpha, B, J, P)
    return np.column_stack([T_dot, x_dot])


def ode_rhs_linear_solve(sys: SystemSpec, reservoirs: Sequence[ReservoirState], x_min=X_MIN_DEFAULT) -> np.ndarray:
    """Same rates obtained by inverting the (T, mu) Jacobian of (N, E) numerically.

    Independent of the closed-form rate expressions; used for cross-validation.
    """
    from .flows import stationary_flows_pairwise

    flows = stationary_flows_pairwise(sys, reservoirs)
    out = np.empty((len(reservoirs), 2))
    for j, r in enumerate(reservoirs):
        M = partials_T_mu(r, x_min)
        T_dot, mu_dot = -np.linalg.solve(M, [flows.particles[j], flows.energy[j]])
        out[j] = T_dot, (mu_dot - r.x * T_dot) / r.temperature
    return out


def large_x_temperature_rate(r: ReservoirState, heat_flow) -> float:
    """Leading large-x form ``-Y / (A~ V T^alpha x^(alpha-1))``."""
    a, T, x = r.alpha, r.temperature, r.x
    return float(-heat_flow / (r.prefactor * a * 2.0 * PI2_6 * T**a * x ** (a - 1.0)))


def totals(reservoirs: Sequence[ReservoirState], x_min=X_MIN_DEFAULT) -> tuple[float, float]:
    """Total particle number and energy."""
    n = [particle_count(r, x_min) for r in reservoirs]
    e = [energy_content(r, x_min) for r in reservoirs]
    return math.fsum(n), math.fsum(e)


def totals_arrays(T, x, alpha, B):
    N = B * sommerfeld_poly(alpha, x) * T**alpha
    E = B * alpha / (alpha + 1.0) * sommerfeld_poly(alpha + 1.0, x) * T ** (alpha + 1.0)
    return math.fsum(N), math.fsum(E)


__all__ = [
    "SommerfeldDomainError",
    "energy_content",
    "exact_energy_content",
    "exact_particle_count",
    "fermi_integral_oracle",
    "large_x_temperature_rate",
    "ode_rhs",
    "ode_rhs_linear_solve",
    "oracle_tail_bound",
    "particle_count",
    "partials_T_mu",
    "partials_T_x",
    "sommerfeld_poly",
    "totals",
]
