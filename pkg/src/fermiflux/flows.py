"""Quasi-stationary energy, particle and heat flows out of each reservoir.

Two evaluations are provided. :func:`stationary_flows_direct` sums
``gamma_j (n_j - n_weighted)`` mode by mode exactly as written.
:func:`stationary_flows_pairwise` expands ``n_j - n_weighted`` into pairwise
occupancy differences and evaluates each difference with hyperbolic
functions in an overflow-free factored form. The pairwise form is the one
the integrator uses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    FlowSet,
    ReservoirState,
    SystemSpec,
    fermi_occupancy,
    hole_occupancy,
    occupancy_difference_reduced,
)
from .errors import InvalidInputError

FLUSH_BELOW = 1e-250


@dataclass(frozen=True, eq=False)
class PairwiseKernel:
    """Symmetric pair weights and reduced energies for one state.

    weights[j, q, k] = gamma_j(w_k) gamma_q(w_k) / sum_q' gamma_q'(w_k)
    reduced[j, k]    = (w_k - mu_j) / T_j
    """

    weights: np.ndarray
    reduced: np.ndarray


def coupling_matrix(omega, reservoirs: Sequence[ReservoirState]) -> np.ndarray:
    """``gamma_j(omega_k)`` as an ``(n_reservoirs, n_modes)`` array."""
    omega = np.asarray(omega, dtype=float)
    return np.array([np.broadcast_to(r.gamma(omega), omega.shape) for r in reservoirs], dtype=float)


def _check(sys: SystemSpec, reservoirs):
    if not sys.modes:
        raise InvalidInputError("empty mode list")
    if len(reservoirs) < 2:
        raise InvalidInputError("flows need at least two reservoirs")


def _state_arrays(reservoirs):
    T = np.array([r.temperature for r in reservoirs])
    mu = np.array([r.chemical_potential for r in reservoirs])
    return T, mu


def pairwise_kernel(sys: SystemSpec, reservoirs: Sequence[ReservoirState]) -> PairwiseKernel:
    _check(sys, reservoirs)
    omega = sys.omega
    G = coupling_matrix(omega, reservoirs)
    T, mu = _state_arrays(reservoirs)
    weights = G[:, None, :] * G[None, :, :] / G.sum(axis=0)
    reduced = (omega[None, :] - mu[:, None]) / T[:, None]
    return PairwiseKernel(weights, reduced)


def pairwise_flow_arrays(omega, T, mu, G, weights=None, scales=True):
    """Energy and particle flows from plain arrays.

    Returns ``(J, P, scale_J, scale_P)`` where the scales are the largest
    absolute summands (``None`` when ``scales`` is false). With ``scales`` the
    per-reservoir totals are also correctly rounded; the integrator skips both. ``weights`` may be
    passed precomputed since it does not depend on the reservoir state.
    Magnitudes below ``FLUSH_BELOW`` are returned as exact zeros.
    """
    if weights is None:
        weights = G[:, None, :] * G[None, :, :] / G.sum(axis=0)
    h = (omega[None, :] - mu[:, None]) * (0.5 / T)[:, None]
    # n_j - n_q, exactly antisymmetric in (j, q); same factorisation as
    # occupancy_difference_reduced, fused here because it is the hot path
    a = np.abs(h)
    s = np.sign(h)
    g = 1.0 + np.exp(-2.0 * a)
    d = h[:, None, :] - h[None, :, :]
    e = np.abs(d)
    expo = np.where(s[:, None, :] == s[None, :, :], -2.0 * np.minimum(a[:, None, :], a[None, :, :]), 0.0)
    diff = np.sign(d) * (np.exp(expo) * np.expm1(-2.0 * e) / (g[:, None, :] * g[None, :, :]))
    terms = weights * diff
    # pair totals are exactly antisymmetric, so sum_j of the row sums cancels
    # up to the rounding of the row sums alone
    pair_P = terms.sum(axis=2)
    pair_J = terms @ omega
    if scales:
        P = np.array([math.fsum(row) for row in pair_P])
        J = np.array([math.fsum(row) for row in pair_J])
    else:
        P = pair_P.sum(axis=1)
        J = pair_J.sum(axis=1)
    P[np.abs(P) < FLUSH_BELOW] = 0.0
    J[np.abs(J) < FLUSH_BELOW] = 0.0
    if not scales:
        return J, P, None, None
    scale_P = float(np.max(np.abs(terms), initial=0.0))
    scale_J = float(np.max(np.abs(terms) * omega, initial=0.0))
    return J, P, scale_J, scale_P


def entropy_production_arrays(heat, T) -> float:
    terms = -(np.asarray(heat) / np.asarray(T))
    # ascending magnitude keeps the near-equilibrium cancellation small
    total = 0.0
    for value in terms[np.argsort(np.abs(terms))]:
        total += float(value)
    return total


def _flowset(J, P, mu, T, scale_J, scale_P) -> FlowSet:
    J = np.where(np.abs(J) < FLUSH_BELOW, 0.0, J)
    P = np.where(np.abs(P) < FLUSH_BELOW, 0.0, P)
    Y = J - mu * P
    Y = np.where(np.abs(Y) < FLUSH_BELOW, 0.0, Y)
    return FlowSet(
        energy=J,
        particles=P,
        heat=Y,
        temperatures=T,
        entropy_production=entropy_production_arrays(Y, T),
        scale_energy=scale_J,
        scale_particles=scale_P,
    )


def stationary_flows_pairwise(sys: SystemSpec, reservoirs: Sequence[ReservoirState]) -> FlowSet:
    _check(sys, reservoirs)
    omega = sys.omega
    G = coupling_matrix(omega, reservoirs)
    T, mu = _state_arrays(reservoirs)
    J, P, sJ, sP = pairwise_flow_arrays(omega, T, mu, G)
    return _flowset(J, P, mu, T, sJ, sP)


def stationary_flows_direct(sys: SystemSpec, reservoirs: Sequence[ReservoirState]) -> FlowSet:
    """Mode sums ``sum_k w_k gamma_j (n_j - n~)`` evaluated as written.

    Where the weighted occupancy exceeds 1/2 the difference is formed from the
    hole occupancies ``(1 - n~) - (1 - n_j)``; this is the same subtraction,
    just performed on the representation that is not rounded to 1.
    """
    _check(sys, reservoirs)
    omega = sys.omega
    G = coupling_matrix(omega, reservoirs)
    T, mu = _state_arrays(reservoirs)
    n = fermi_occupancy(omega[None, :], mu[:, None], T[:, None])
    holes = hole_occupancy(omega[None, :], mu[:, None], T[:, None])
    total = G.sum(axis=0)
    n_w = (G * n).sum(axis=0) / total
    h_w = (G * holes).sum(axis=0) / total
    diff = np.where(n_w > 0.5, h_w[None, :] - holes, n - n_w[None, :])
    terms = G * diff
    P = terms.sum(axis=1)
    J = terms @ omega
    return _flowset(
        J,
        P,
        mu,
        T,
        float(np.max(np.abs(terms) * omega, initial=0.0)),
        float(np.max(np.abs(terms), initial=0.0)),
    )


def entropy_production(flows: FlowSet, reservoirs: Sequence[ReservoirState]) -> float:
    """Entropy production rate ``-sum_j Y_j / T_j`` (non-negative up to rounding)."""
    if len(flows.heat) != len(reservoirs):
        raise InvalidInputError(
            f"{len(flows.heat)} heat flows for {len(reservoirs)} reservoirs"
        )
    T = np.array([r.temperature for r in reservoirs])
    return entropy_production_arrays(flows.heat, T)


def entropy_production_terms(sys: SystemSpec, reservoirs: Sequence[ReservoirState]) -> np.ndarray:
    """Per (j, q, mode) contributions whose sum is the entropy production.

    Each entry is ``Gamma_jqk (v_j - v_q)(n_q - n_j) / 2`` and is non-negative
    term by term; summing over all indices reproduces ``-sum_j Y_j / T_j``.
    """
    k = pairwise_kernel(sys, reservoirs)
    v = k.reduced
    dv = v[:, None, :] - v[None, :, :]
    dn = occupancy_difference_reduced(v[:, None, :], v[None, :, :])
    return -0.5 * k.weights * dv * dn
