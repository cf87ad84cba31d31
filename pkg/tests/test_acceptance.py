"""Acceptance criteria 1-13, one test each.

Every test records a one-line verdict that is printed in the terminal summary
(and immediately, when output capture is off).
"""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE, TRAJECTORY_SCENARIOS
from fermiflux.core import SystemSpec, classify_regime, crossover_frequency, reservoir, weighted_occupancy
from fermiflux.dynamics import mode_occupation_relaxation, timescale_separation
from fermiflux.events import CHEMICAL_POTENTIAL_SWAP, CROSSOVER_SINGULARITY, TEMPERATURE_SWAP, pair_values
from fermiflux.flows import coupling_matrix, stationary_flows_pairwise
from fermiflux.runner import run
from fermiflux.scenario import load_scenario
from fermiflux.thermo import (
    energy_content,
    exact_energy_content,
    exact_particle_count,
    ode_rhs,
    partials_T_x,
    particle_count,
)
from fermiflux.verify import run_invariants


def verdict(n, passed, detail):
    ACCEPTANCE[n] = (bool(passed), detail)
    print(f"criterion {n}: {'PASS' if passed else 'FAIL'}  {detail}")
    assert passed, detail


@pytest.fixture(scope="module")
def invariants():
    """The ``fermiflux verify`` suite at its default size and seed."""
    return run_invariants(n_states=10_000, n_ensembles=1000, seed=20240611)


def test_criterion_01_transient_cooling(tmp_path):
    t0 = time.perf_counter()
    result = run("fig1", tmp_path, plots=False)
    elapsed = time.perf_counter() - t0
    ratio = result.summary["min_ratio"]
    ok = abs(ratio - 0.60) <= 0.05 and elapsed < 10.0
    verdict(1, ok, f"fig1 min T1(t)/T1(0) = {ratio:.6f} (0.60 +- 0.05), runtime {elapsed:.2f} s (< 10 s)")


def test_criterion_02_overshooting_equilibrium(bundled_run):
    parts, ok = [], True
    for name in ("fig1", "fig4"):
        result = bundled_run(name)
        eq = result.equilibrium
        T_max = max(r.temperature for r in result.trajectory.initial)
        T_lim, mu_lim = result.trajectory.limit()
        dT = abs(T_lim - eq.T_eq) / eq.T_eq
        dmu = abs(mu_lim - eq.mu_eq) / eq.mu_eq
        ok &= eq.T_eq > T_max and dT <= 1e-6 and dmu <= 1e-6
        parts.append(f"{name}: T_eq {eq.T_eq:.6f} > {T_max}, limit rel diff T {dT:.1e} mu {dmu:.1e}")
    verdict(2, ok, "; ".join(parts))


def test_criterion_03_second_law(bundled_run, invariants):
    worst = -math.inf
    for name in TRAJECTORY_SCENARIOS:
        s = bundled_run(name).trajectory.steps
        # excursion below zero in units of 1e-12 * scale
        worst = max(worst, float(np.max(-s.sigma / s.slot_tolerance)))
    random = invariants["second_law"]
    ok = worst <= 1.0 and random.passed and random.cases == 10_000
    verdict(
        3,
        ok,
        f"max(-sigma / 1e-12 scale): scenarios {max(worst, 0.0):.2e}, "
        f"{random.cases} random states {random.worst:.2e} (<= 1)",
    )


def test_criterion_04_slot_arithmetic(tmp_path):
    s = run("slot_example", tmp_path).summary
    Y = np.array([1.0, -5.0, 20.0, -16.0])
    T = np.array([10.0, 20.0, 60.0, 70.0])
    independent = math.fsum(Y / T)
    ok = (
        abs(s["sum_heat"]) <= 1e-12
        and abs(s["sum_heat_over_T"] - independent) <= 1e-12
        and abs(s["sum_heat_over_T"] - (-0.045238)) <= 1e-6
        and s["sum_heat_over_T"] <= 0
        and s["second_law_holds"]
    )
    verdict(4, ok, f"sum Y = {s['sum_heat']:g}, sum Y/T = {s['sum_heat_over_T']:.12f} (~ -0.045238, <= 0)")


def test_criterion_05_conservation(bundled_run):
    drifts = {}
    for name in TRAJECTORY_SCENARIOS:
        traj = bundled_run(name).trajectory
        assert traj.options.rtol == 1e-9
        drifts[name] = max(traj.conservation_drift())
    worst = max(drifts.values())
    verdict(5, worst <= 1e-6, "max relative drift of sum N, sum E at rtol 1e-9: " + ", ".join(f"{k} {v:.1e}" for k, v in drifts.items()))


def test_criterion_06_flow_form_equivalence(invariants):
    c = invariants["direct_vs_pairwise"]
    ok = c.passed and c.cases == 2 * 10_000
    verdict(6, ok, f"direct vs pairwise over 10^4 random states: worst rel {c.worst:.2e} (<= 1e-10)")


def test_criterion_07_sommerfeld_oracle():
    worst = {10.0: 0.0, 30.0: 0.0}
    limits = {10.0: 1e-3, 30.0: 1e-5}
    failures = []
    monotone = True
    grid = [10.0, 15.0, 20.0, 30.0, 40.0]
    for alpha in (1.0, 1.5, 3.0):
        for name, approx, exact in (
            ("N", particle_count, exact_particle_count),
            ("E", energy_content, exact_energy_content),
        ):
            errs = []
            for x in grid:
                r = reservoir(1.0, x, alpha=alpha, prefactor=1.0)
                errs.append(abs(approx(r) / exact(r) - 1.0))
            # strictly decreasing until the error reaches the rounding floor
            floor = 4 * np.finfo(float).eps
            monotone &= all(a > b or a <= floor for a, b in zip(errs, errs[1:]))
            for x, lim in limits.items():
                e = errs[grid.index(x)]
                worst[x] = max(worst[x], e)
                if e > lim:
                    failures.append(f"{name} alpha={alpha:g} x={x:g}: {e:.2e} > {lim:.0e}")
    ok = not failures and monotone
    detail = f"worst rel error x=10 {worst[10.0]:.2e} (<= 1e-3), x=30 {worst[30.0]:.2e} (<= 1e-5), monotone {monotone}"
    if failures:
        detail += "; " + "; ".join(failures)
    verdict(7, ok, detail)


def test_criterion_08_closed_form_equilibrium(invariants):
    cf, bounds = invariants["closed_form"], invariants["temperature_bounds"]
    ok = cf.passed and bounds.passed and bounds.cases == 1000
    verdict(8, ok, f"Newton vs closed form on {bounds.cases} ensembles: worst rel {cf.worst:.2e} (<= 1e-10); T_eq^2 bounds violations {len(bounds.failures)}")


UPPER = {  # T1 < T2, mu1 > mu2: (j1, p1, y1, j2, p2, y2)
    "w<mu2": (1, 1, -1, -1, -1, 1),
    "mu2<w<mu1": (1, 1, -1, -1, -1, -1),
    "mu1<w<wt": (1, 1, 1, -1, -1, -1),
    "wt<w": (-1, -1, -1, 1, 1, 1),
}
LOWER = {  # T1 > T2, mu1 > mu2
    "w<wt": (-1, -1, 1, 1, 1, -1),
    "wt<w<mu2": (1, 1, -1, -1, -1, 1),
    "mu2<w<mu1": (1, 1, -1, -1, -1, -1),
    "mu1<w": (1, 1, 1, -1, -1, -1),
}


def _interior(lo, hi, k=12):
    return np.linspace(lo, hi, k + 2)[1:-1]


def test_criterion_09_regime_table():
    mismatches, samples = [], 0
    r1, r2 = reservoir(0.6, 20.8), reservoir(1.0, 16.0)
    wt = crossover_frequency(r1, r2)
    upper = {"w<mu2": (1.0, 16.0), "mu2<w<mu1": (16.0, 20.8), "mu1<w<wt": (20.8, wt), "wt<w": (wt, 40.0)}
    s1, s2 = reservoir(1.0, 20.0), reservoir(0.5, 16.0)
    wt2 = crossover_frequency(s1, s2)
    lower = {"w<wt": (0.5, wt2), "wt<w<mu2": (wt2, 16.0), "mu2<w<mu1": (16.0, 20.0), "mu1<w": (20.0, 40.0)}
    for table, cells, a, b in ((UPPER, upper, r1, r2), (LOWER, lower, s1, s2)):
        for key, (lo, hi) in cells.items():
            for w in _interior(lo, hi):
                samples += 1
                if tuple(classify_regime(w, a, b)) != table[key]:
                    mismatches.append((key, w))
    verdict(9, not mismatches, f"{samples} frequencies over 8 cells (12 each), {len(mismatches)} mismatches")


def _perturbed_flow(sys, res, k, field, delta):
    r = res[k]
    if field == "T":
        new = r.with_state(r.temperature * (1 + delta), r.chemical_potential)
    else:
        new = r.with_state(r.temperature, r.chemical_potential * (1 + delta))
    return float(stationary_flows_pairwise(sys, [*res[:k], new, *res[k + 1 :]]).energy[k])


def test_criterion_10_uniqueness():
    rng = np.random.default_rng(2024)
    undetected, nonzero_at_equal, zero_elsewhere, trials = 0, 0, 0, 0
    for _ in range(200):
        sys = SystemSpec(tuple(rng.uniform(15, 25, rng.integers(2, 5))))
        n = int(rng.integers(2, 5))
        T, mu = rng.uniform(0.3, 1.5), rng.uniform(15, 25)
        res = [reservoir(T, mu, amplitude=10 ** rng.uniform(-5, -3)) for _ in range(n)]
        base = stationary_flows_pairwise(sys, res)
        nonzero_at_equal += int(np.any(base.energy != 0) or np.any(base.particles != 0))
        scale = float(np.max(coupling_matrix(sys.omega, res) * sys.omega))
        for k in range(n):
            for field in ("T", "mu"):
                trials += 1
                small = _perturbed_flow(sys, res, k, field, 1e-6)
                double = _perturbed_flow(sys, res, k, field, 2e-6)
                # detectable: nonzero and following linear response, so that it
                # is signal rather than rounding; modes many T away from mu give
                # flows far below the coupling scale that are nonetheless exact
                if not (small != 0.0 and abs(double / small - 2.0) < 1e-3):
                    undetected += 1
        # an arbitrary unequal state with >= 2 distinct modes carries flow
        other = [reservoir(rng.uniform(0.3, 1.5), rng.uniform(15, 25)) for _ in range(n)]
        f = stationary_flows_pairwise(sys, other)
        zero_elsewhere += int(np.max(np.abs(f.energy)) <= 1e-13 * scale)
    ok = undetected == 0 and nonzero_at_equal == 0 and zero_elsewhere == 0
    verdict(
        10,
        ok,
        f"equal states with nonzero flow {nonzero_at_equal}/200; unequal states with zero flow {zero_elsewhere}/200; "
        f"undetected 1e-6 perturbations {undetected}/{trials}",
    )


def test_criterion_11_ordering_swaps(bundled_run):
    fig2 = bundled_run("fig2").trajectory
    swaps = fig2.events_of(TEMPERATURE_SWAP)
    sings = fig2.events_of(CROSSOVER_SINGULARITY)
    t_ok = bool(swaps) and bool(sings) and sings[0].time == swaps[0].time
    fig3 = bundled_run("fig3").trajectory
    mswaps = fig3.events_of(CHEMICAL_POTENTIAL_SWAP)
    dev = math.inf
    if mswaps:
        v = pair_values(fig3.state_at(mswaps[0].time), 2, 0, 1)
        mu1, mu2 = v["mu"]
        dev = max(abs(mu1 - mu2) / mu1, abs(v["omega_tilde"] - mu1) / mu1)
    ok = t_ok and dev <= 1e-6
    verdict(
        11,
        ok,
        f"fig2 temperature swap + singularity at t = {swaps[0].time:.6e}; "
        f"fig3 mu swap at t = {mswaps[0].time:.6e}, max(|mu1-mu2|, |omega~-mu1|)/mu1 = {dev:.1e} (<= 1e-6)",
    )


def test_criterion_12_quasi_stationarity():
    sc = load_scenario("fig1")
    nt = np.atleast_1d(weighted_occupancy(sc.system.omega, sc.reservoirs))
    out = mode_occupation_relaxation(sc.system, sc.reservoirs, [0.0, 1.0], [1e3, 1e5, 1e7])
    fixed = float(np.max(np.abs(out.stationary - nt)))
    late = float(np.max(np.abs(out.occupations[-1] - nt)))
    still = mode_occupation_relaxation(sc.system, sc.reservoirs, nt, [0.0, 1e4])
    flat = float(np.max(np.abs(still.occupations - nt)))
    sep = timescale_separation(sc.system, sc.reservoirs)
    ok = fixed <= 1e-12 and late <= 1e-12 and flat <= 1e-12 and sep.ratio > 1e2
    verdict(
        12,
        ok,
        f"fixed point vs weighted occupancy {max(fixed, late, flat):.1e} (<= 1e-12); "
        f"fast/slow rate ratio {sep.ratio:.3e} (> 1e2)",
    )


def test_criterion_13_chain_rule(invariants):
    c = invariants["chain_rule"]
    sc = load_scenario("fig1")
    rates = ode_rhs(sc.system, sc.reservoirs)
    flows = stationary_flows_pairwise(sc.system, sc.reservoirs)
    fig1 = 0.0
    for j, r in enumerate(sc.reservoirs):
        dN, dE = partials_T_x(r) @ rates[j]
        fig1 = max(fig1, abs(dN + flows.particles[j]) / abs(flows.particles[j]), abs(dE + flows.energy[j]) / abs(flows.energy[j]))
    ok = c.passed and fig1 < 1e-9
    verdict(13, ok, f"(dN/dt, dE/dt) vs (-P, -J): random states worst {c.worst:.2e}, fig1 {fig1:.2e} (<= 1e-9)")
