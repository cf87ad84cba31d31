"""Invariant checks over randomly drawn states.

The generator draws systems of two to six reservoirs and one to eight modes
in the degenerate regime, with modes placed among the chemical potentials so
that the flows are not exponentially small. ``FERMIFLUX_SEED`` seeds it.

Couplings span two decades in amplitude with the default exponent
``alpha - 1``. The direct flow form subtracts occupancies that agree to about
``min gamma / sum gamma``, so its rounding error grows with the coupling
contrast; the pairwise form does not have this loss.

Comparisons are relative to the reference value, except the flow sums, which
vanish exactly and are measured against the largest flow.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import SystemSpec, reservoir
from .equilibrium import equilibrium_closed_form_2d, solve_equilibrium, temperature_bounds_2d
from .flows import FLUSH_BELOW, stationary_flows_direct, stationary_flows_pairwise
from .thermo import ode_rhs, ode_rhs_linear_solve, partials_T_x

SEED_ENV = "FERMIFLUX_SEED"
DEFAULT_SEED = 20240611
DEFAULT_STATES = 10_000
DEFAULT_ENSEMBLES = 1000

FLOW_RTOL = 1e-10
CHAIN_RTOL = 1e-9
LINEAR_SOLVE_RTOL = 1e-8
CLOSED_FORM_RTOL = 1e-10
CONSERVATION_RTOL = 8 * np.finfo(float).eps


def seed_from_env(default=DEFAULT_SEED) -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return default
    try:
        return int(raw)
    except ValueError:
        from .errors import InvalidInputError

        raise InvalidInputError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def random_state(rng: np.random.Generator, alpha=None, n_reservoirs=None, n_modes=None):
    """``(SystemSpec, reservoirs)`` drawn in the degenerate regime."""
    n = int(n_reservoirs or rng.integers(2, 7))
    m = int(n_modes or rng.integers(1, 9))
    res = []
    for _ in range(n):
        a = float(alpha if alpha is not None else rng.choice([1.0, 1.5, 3.0]))
        T = float(rng.uniform(0.1, 2.0))
        x = float(rng.uniform(5.0, 40.0))
        res.append(
            reservoir(
                T,
                x * T,
                alpha=a,
                prefactor=float(10 ** rng.uniform(0, 4)),
                amplitude=float(10 ** rng.uniform(-5, -3)),
            )
        )
    mu = np.array([r.chemical_potential for r in res])
    spread = 3.0 * max(r.temperature for r in res)
    modes = rng.uniform(mu.min() - spread, mu.max() + spread, size=m)
    modes = np.maximum(modes, 0.05)
    return SystemSpec(tuple(float(w) for w in modes)), res


def _rel(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    keep = np.abs(b) > FLUSH_BELOW
    return float(np.max(np.abs(a[keep] - b[keep]) / np.abs(b[keep]), initial=0.0))


@dataclass
class CheckResult:
    name: str
    tolerance: float
    cases: int = 0
    worst: float = 0.0
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def record(self, value, case):
        self.cases += 1
        self.worst = max(self.worst, value)
        if not value <= self.tolerance:
            self.failures.append((case, value))

    def line(self) -> str:
        verdict = "PASS" if self.passed else f"FAIL ({len(self.failures)})"
        return f"{verdict:10s} {self.name:34s} cases={self.cases:6d} worst={self.worst:.3e} tol={self.tolerance:.0e}"


def check_state(sys, res, results: dict[str, CheckResult], case):
    """Run every per-state check and record into ``results``."""
    pw = stationary_flows_pairwise(sys, res)
    dr = stationary_flows_direct(sys, res)

    # second law: sigma >= -tolerance, recorded as the normalized excursion
    slot = results["second_law"]
    excess = -pw.entropy_production / pw.slot_tolerance if pw.slot_tolerance > 0 else 0.0
    slot.record(max(excess, 0.0), case)

    # the integrated (pairwise) flows must cancel over the reservoirs, relative
    # to the largest of the flows being summed
    cons = results["flow_conservation"]
    for flows in (pw.energy, pw.particles):
        top = float(np.max(np.abs(flows)))
        cons.record(abs(math.fsum(flows)) / top if top > 0 else 0.0, case)

    eqv = results["direct_vs_pairwise"]
    eqv.record(_rel(dr.energy, pw.energy), case)
    eqv.record(_rel(dr.particles, pw.particles), case)

    # dN/dt and dE/dt rebuilt from the rates must give back -P and -J
    rates = ode_rhs(sys, res)
    chain = results["chain_rule"]
    for j, r in enumerate(res):
        dN, dE = partials_T_x(r) @ rates[j]
        chain.record(_rel([dN, dE], [-pw.particles[j], -pw.energy[j]]), case)

    results["linear_solve"].record(_rel(ode_rhs_linear_solve(sys, res), rates), case)


def random_planar_ensemble(rng: np.random.Generator, x_min=5.0):
    """alpha = 1 reservoirs whose common equilibrium is itself degenerate.

    A wide spread of chemical potentials heats the equilibrium enough to
    leave the degenerate regime; such draws are discarded.
    """
    while True:
        n = int(rng.integers(2, 6))
        res = []
        for _ in range(n):
            T = float(rng.uniform(0.1, 2.0))
            res.append(reservoir(T, float(rng.uniform(5.5, 40.0)) * T, alpha=1.0, prefactor=float(10 ** rng.uniform(0, 4))))
        if equilibrium_closed_form_2d(res).x_eq >= x_min:
            return res


def check_equilibrium(rng, results: dict[str, CheckResult], case):
    res = random_planar_ensemble(rng)
    newton = solve_equilibrium(res)
    closed = equilibrium_closed_form_2d(res)
    cf = results["closed_form"]
    cf.record(abs(newton.T_eq - closed.T_eq) / closed.T_eq, case)
    cf.record(abs(newton.mu_eq - closed.mu_eq) / closed.mu_eq, case)
    lo, hi = temperature_bounds_2d(res)
    t2 = newton.T_eq**2
    margin = 1e-12 * hi
    results["temperature_bounds"].record(0.0 if lo - margin <= t2 <= hi + margin else 1.0, case)


def new_results() -> dict[str, CheckResult]:
    return {
        "second_law": CheckResult("second law (sigma/-tolerance)", 1.0),
        "flow_conservation": CheckResult("sum of flows / largest flow", CONSERVATION_RTOL),
        "direct_vs_pairwise": CheckResult("direct vs pairwise flows", FLOW_RTOL),
        "chain_rule": CheckResult("chain rule dN/dt, dE/dt", CHAIN_RTOL),
        "linear_solve": CheckResult("rates vs linear solve", LINEAR_SOLVE_RTOL),
        "closed_form": CheckResult("Newton vs alpha=1 closed form", CLOSED_FORM_RTOL),
        "temperature_bounds": CheckResult("alpha=1 T_eq^2 bounds", 0.0),
    }


def run_invariants(
    n_states=DEFAULT_STATES,
    n_ensembles=DEFAULT_ENSEMBLES,
    seed=None,
    progress: Callable[[str], None] | None = None,
) -> dict[str, CheckResult]:
    """Run all checks; returns the results keyed by check name."""
    seed = seed_from_env() if seed is None else seed
    rng = np.random.default_rng(seed)
    results = new_results()
    for i in range(n_states):
        sys, res = random_state(rng)
        check_state(sys, res, results, i)
    for i in range(n_ensembles):
        check_equilibrium(rng, results, i)
    if progress:
        progress(f"seed {seed}: {n_states} states, {n_ensembles} alpha=1 ensembles")
        for r in results.values():
            progress(r.line())
    return results
