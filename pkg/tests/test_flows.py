import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fermiflux.core import SLOT_RTOL, SystemSpec, reservoir
from fermiflux.errors import InvalidInputError
from fermiflux.flows import (
    FLUSH_BELOW,
    coupling_matrix,
    entropy_production,
    entropy_production_arrays,
    entropy_production_terms,
    pairwise_kernel,
    stationary_flows_direct,
    stationary_flows_pairwise,
)
from fermiflux.verify import random_state

EPS = np.finfo(float).eps


def eq9_mp(sys, res, prec=200):
    """Energy and particle flows summed exactly as written, in extended precision."""
    with mp.workprec(prec):
        J, P = [], []
        for j in range(len(res)):
            Jj = Pj = mp.mpf(0)
            for w in sys.modes:
                w = mp.mpf(w)
                g = [mp.mpf(r.coupling.amplitude) * w ** mp.mpf(r.coupling.exponent) for r in res]
                n = [1 / (mp.exp((w - mp.mpf(r.chemical_potential)) / mp.mpf(r.temperature)) + 1) for r in res]
                nt = sum(gi * ni for gi, ni in zip(g, n)) / sum(g)
                term = g[j] * (n[j] - nt)
                Pj += term
                Jj += w * term
            J.append(float(Jj))
            P.append(float(Pj))
    return np.array(J), np.array(P)


FIG1 = SystemSpec((21.1, 21.5))


def fig1_reservoirs():
    return [reservoir(0.6, 20.8, prefactor=1000.0), reservoir(1.0, 16.0, prefactor=1000.0)]


class TestDirect:
    def test_identical_states_zero(self):
        res = [reservoir(0.8, 18.0, amplitude=a) for a in (1e-4, 3e-3, 2e-5)]
        for f in (stationary_flows_direct, stationary_flows_pairwise):
            flows = f(FIG1, res)
            assert np.all(flows.energy == 0.0)
            assert np.all(flows.particles == 0.0)
            assert flows.entropy_production == 0.0

    def test_single_mode_pair_form(self):
        r1, r2 = reservoir(0.6, 20.8, amplitude=2e-4), reservoir(1.0, 16.0, amplitude=5e-5)
        w = 21.1
        flows = stationary_flows_direct(SystemSpec((w,)), [r1, r2])
        g1, g2 = r1.gamma(w), r2.gamma(w)
        big = g1 * g2 / (g1 + g2)
        p1 = big * (r1.occupancy(w) - r2.occupancy(w))
        assert flows.particles[0] == pytest.approx(p1, rel=1e-13)
        assert flows.energy[0] == pytest.approx(w * p1, rel=1e-13)

    def test_fig1_cold_reservoir_loses_everything(self):
        flows = stationary_flows_direct(FIG1, fig1_reservoirs())
        assert flows.particles[0] > 0
        assert flows.energy[0] > 0
        assert flows.heat[0] > 0

    def test_fig1_against_extended_precision(self):
        J, P = eq9_mp(FIG1, fig1_reservoirs())
        for f in (stationary_flows_direct, stationary_flows_pairwise):
            flows = f(FIG1, fig1_reservoirs())
            np.testing.assert_allclose(flows.energy, J, rtol=1e-13)
            np.testing.assert_allclose(flows.particles, P, rtol=1e-13)

    def test_empty_modes_and_single_reservoir(self):
        with pytest.raises(InvalidInputError):
            stationary_flows_direct(FIG1, [reservoir(1.0, 10.0)])
        with pytest.raises(InvalidInputError):
            stationary_flows_pairwise(FIG1, [reservoir(1.0, 10.0)])


class TestPairwise:
    def test_kernel_symmetric(self):
        res = [reservoir(0.6, 20.8, amplitude=1e-4), reservoir(1.0, 16.0, amplitude=3e-3), reservoir(0.3, 19.0, alpha=3.0)]
        k = pairwise_kernel(FIG1, res)
        assert np.array_equal(k.weights, k.weights.transpose(1, 0, 2))
        assert np.all(k.weights >= 0)
        assert k.reduced[0, 0] == pytest.approx((21.1 - 20.8) / 0.6)

    def test_deep_tail_against_extended_precision(self):
        # (w - mu)/T = 50 for the cold reservoir, -10 for the hot one
        sys = SystemSpec((25.0,))
        res = [reservoir(0.1, 20.0), reservoir(0.5, 30.0, amplitude=1e-3)]
        J, P = eq9_mp(sys, res)
        pw = stationary_flows_pairwise(sys, res)
        np.testing.assert_allclose(pw.energy, J, rtol=1e-13)
        np.testing.assert_allclose(pw.particles, P, rtol=1e-13)

    def test_hole_tail_where_subtraction_loses_digits(self):
        # both reservoirs have the mode deep below mu: 1 - n ~ e^-50 and e^-60;
        # n_j - n~ formed from n values near 1 cancels every significant digit
        sys = SystemSpec((10.0,))
        res = [reservoir(0.2, 20.0), reservoir(0.25, 25.0)]
        J, P = eq9_mp(sys, res)
        pw = stationary_flows_pairwise(sys, res)
        np.testing.assert_allclose(pw.particles, P, rtol=1e-13)
        g = coupling_matrix(sys.omega, res)[:, 0]
        n = np.array([r.occupancy(10.0) for r in res])
        naive = g * (n - (g @ n) / g.sum())
        assert np.all(naive == 0.0) or np.max(np.abs(naive - P) / np.abs(P)) > 1e-3

    def test_agrees_with_direct_on_moderate_states(self, rng):
        for _ in range(200):
            sys, res = random_state(rng)
            dr = stationary_flows_direct(sys, res)
            pw = stationary_flows_pairwise(sys, res)
            keep = np.abs(pw.energy) > FLUSH_BELOW
            np.testing.assert_allclose(dr.energy[keep], pw.energy[keep], rtol=1e-10)
            np.testing.assert_allclose(dr.particles[keep], pw.particles[keep], rtol=1e-10)

    def test_random_states_against_extended_precision(self, rng):
        for _ in range(25):
            sys, res = random_state(rng, n_modes=2)
            J, P = eq9_mp(sys, res, prec=300)
            pw = stationary_flows_pairwise(sys, res)
            np.testing.assert_allclose(pw.energy, J, rtol=1e-12, atol=1e-300)
            np.testing.assert_allclose(pw.particles, P, rtol=1e-12, atol=1e-300)

    def test_flush_below_threshold(self):
        # occupancies ~ e^-700 differ: the flow is subnormal-scale and flushed
        sys = SystemSpec((400.0,))
        res = [reservoir(0.5, 20.0), reservoir(0.51, 20.0)]
        pw = stationary_flows_pairwise(sys, res)
        assert np.all(pw.energy == 0.0) and np.all(pw.particles == 0.0)


class TestConservation:
    def test_pairwise_sums_vanish(self, rng):
        for _ in range(500):
            sys, res = random_state(rng)
            pw = stationary_flows_pairwise(sys, res)
            for flows in (pw.energy, pw.particles):
                assert abs(math.fsum(flows)) <= 8 * EPS * np.max(np.abs(flows))

    def test_two_reservoirs_exact(self):
        pw = stationary_flows_pairwise(FIG1, fig1_reservoirs())
        assert pw.energy[0] == -pw.energy[1]
        assert pw.particles[0] == -pw.particles[1]

    def test_heat_definition(self):
        res = fig1_reservoirs()
        pw = stationary_flows_pairwise(FIG1, res)
        mu = np.array([r.chemical_potential for r in res])
        assert np.array_equal(pw.heat, pw.energy - mu * pw.particles)


class TestSecondLaw:
    def test_text_example(self):
        Y = np.array([1.0, -5.0, 20.0, -16.0])
        T = np.array([10.0, 20.0, 60.0, 70.0])
        assert math.fsum(Y) == 0.0
        sigma = entropy_production_arrays(Y, T)
        expected = -(1 / 10 - 5 / 20 + 20 / 60 - 16 / 70)
        assert sigma == pytest.approx(expected, abs=1e-15)
        assert sigma == pytest.approx(0.045238, abs=5e-7)

    def test_zero_flows(self):
        assert entropy_production_arrays(np.zeros(3), np.ones(3)) == 0.0

    def test_length_mismatch(self):
        pw = stationary_flows_pairwise(FIG1, fig1_reservoirs())
        with pytest.raises(InvalidInputError):
            entropy_production(pw, fig1_reservoirs()[:1])

    def test_terms_non_negative(self, rng):
        for _ in range(300):
            sys, res = random_state(rng)
            terms = entropy_production_terms(sys, res)
            assert np.all(terms >= -1e-15 * np.max(np.abs(terms), initial=0.0))

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=200, deadline=None)
    def test_sigma_non_negative(self, seed):
        sys, res = random_state(np.random.default_rng(seed))
        pw = stationary_flows_pairwise(sys, res)
        assert pw.entropy_production >= -pw.slot_tolerance
        assert pw.slot_tolerance == SLOT_RTOL * np.max(np.abs(pw.heat / pw.temperatures))

    def test_equal_potentials_heat_flows_from_hot(self, rng):
        for _ in range(300):
            mu = rng.uniform(10, 30)
            t_hot, t_cold = np.sort(rng.uniform(0.2, 2.0, 2))[::-1]
            modes = SystemSpec(tuple(rng.uniform(mu - 5, mu + 5, rng.integers(1, 5))))
            res = [reservoir(t_hot, mu, amplitude=10 ** rng.uniform(-5, -3)), reservoir(t_cold, mu, amplitude=10 ** rng.uniform(-5, -3))]
            pw = stationary_flows_pairwise(modes, res)
            assert pw.heat[0] >= 0.0


class TestZeroFlowCharacterization:
    @pytest.mark.parametrize("delta", [1e-3, 1e-6])
    @pytest.mark.parametrize("field", ["temperature", "chemical_potential"])
    def test_single_perturbation_detected(self, rng, delta, field):
        for _ in range(50):
            sys = SystemSpec(tuple(rng.uniform(15, 25, rng.integers(2, 5))))
            T, mu = rng.uniform(0.3, 1.5), rng.uniform(15, 25)
            n = int(rng.integers(2, 5))
            res = [reservoir(T, mu, amplitude=10 ** rng.uniform(-5, -3)) for _ in range(n)]
            zero = stationary_flows_pairwise(sys, res)
            assert np.all(zero.energy == 0) and np.all(zero.particles == 0)
            k = int(rng.integers(n))
            r = res[k]
            value = getattr(r, field) * (1 + delta)
            res[k] = r.with_state(value, r.chemical_potential) if field == "temperature" else r.with_state(r.temperature, value)
            pw = stationary_flows_pairwise(sys, res)
            scale = np.max(np.abs(coupling_matrix(sys.omega, res)) * sys.omega)
            assert np.max(np.abs(pw.energy)) > 1e-13 * scale or np.max(np.abs(pw.particles)) > 1e-13 * scale / max(sys.modes)

    def test_single_mode_admits_nonequilibrium_zero_flow(self):
        # with one frequency, any pair crossing exactly there exchanges nothing
        w = 20.0
        r1 = reservoir(0.5, 19.0)
        r2 = reservoir(1.0, w - (w - 19.0) * 2.0)
        pw = stationary_flows_pairwise(SystemSpec((w,)), [r1, r2])
        assert abs(pw.particles[0]) < 1e-16
        assert not SystemSpec((w,)).equilibrium_is_unique
