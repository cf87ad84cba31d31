"""Time evolution of the reservoir temperatures and chemical potentials.

The integrated state is ``y = (T_1..T_n, x_1..x_n)`` with ``x = mu/T``. Flows
come from the pairwise hyperbolic form. After every accepted step the
entropy production, the conserved totals and the degeneracy condition are
checked; a violation is treated as a defect, not as something to recover from.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .core import X_MIN_DEFAULT, X_MIN_FLOOR, SLOT_RTOL, ReservoirState, SystemSpec, check_x_min, weighted_occupancy
from .errors import (
    IntegrityError,
    InvalidInputError,
    SingularJacobianError,
    SommerfeldDomainError,
    StiffnessError,
)
from .events import Event, EventDetector
from .flows import FLUSH_BELOW, coupling_matrix, entropy_production_arrays, pairwise_flow_arrays
from .integrator import DenseSegment, DormandPrince, RadauStepper, stable_step_limit
from .thermo import RateKernel, totals_arrays

RTOL_RANGE = (1e-12, 1e-3)
METHODS = ("dopri5", "radau")
# accepted steps between refreshes of the stability step limit
STABILITY_REFRESH = 10


@dataclass(frozen=True)
class IntegrationOptions:
    """Knobs for :func:`integrate`.

    ``equilibrium_threshold`` is relative: integration stops once the entropy
    production and every ``|dT_j/dt|``, ``|dx_j/dt|`` have fallen below this
    fraction of their initial maxima. ``sampling`` is ``"log"`` (samples
    spread logarithmically in time, suited to multi-decade relaxation) or
    ``"linear"``.

    ``method`` selects the explicit Dormand-Prince pair (default) or the
    implicit Radau IIA solver. Explicit steps on a stiff problem are held
    inside the stability region; once that limit rather than accuracy has
    shortened more than ``max_stiff_steps`` steps, a :class:`StiffnessError`
    recommending ``method = "radau"`` is raised. The method is never switched
    behind the caller's back.
    """

    rtol: float = 1e-9
    atol: float = 1e-14
    t_end: float = 1e13
    n_samples: int = 400
    equilibrium_threshold: float = 1e-12
    x_min: float = X_MIN_DEFAULT
    max_steps: int = 1_000_000
    conservation_tol: float = 1e-6
    sampling: str = "log"
    method: str = "dopri5"
    max_stiff_steps: int = 20_000

    def __post_init__(self):
        lo, hi = RTOL_RANGE
        if not lo <= self.rtol <= hi:
            raise InvalidInputError(f"rtol must lie in [{lo:g}, {hi:g}], got {self.rtol:g}")
        if not self.atol > 0:
            raise InvalidInputError("atol must be positive")
        if not (self.t_end > 0 and math.isfinite(self.t_end)):
            raise InvalidInputError("t_end must be positive and finite")
        if int(self.n_samples) != self.n_samples or self.n_samples < 2:
            raise InvalidInputError("n_samples must be an integer >= 2")
        if not 0 <= self.equilibrium_threshold < 1:
            raise InvalidInputError("equilibrium_threshold must lie in [0, 1)")
        check_x_min(self.x_min)
        if int(self.max_steps) != self.max_steps or self.max_steps < 1:
            raise InvalidInputError("max_steps must be a positive integer")
        if not self.conservation_tol > 0:
            raise InvalidInputError("conservation_tol must be positive")
        if self.sampling not in ("log", "linear"):
            raise InvalidInputError("sampling must be 'log' or 'linear'")
        if self.method not in METHODS:
            raise InvalidInputError(f"method must be one of {', '.join(METHODS)}, got {self.method!r}")
        if int(self.max_stiff_steps) != self.max_stiff_steps or self.max_stiff_steps < 1:
            raise InvalidInputError("max_stiff_steps must be a positive integer")


@dataclass(eq=False)
class StepLog:
    """Diagnostics recorded at every accepted step (index 0 is the initial state)."""

    t: np.ndarray
    y: np.ndarray
    sigma: np.ndarray
    slot_tolerance: np.ndarray
    drift_N: np.ndarray
    drift_E: np.ndarray


@dataclass(eq=False)
class Trajectory:
    """Sampled relaxation history.

    Sample arrays have one row per sample time; per-reservoir arrays have one
    column per reservoir and ``omega_tilde`` one column per pair in
    ``pairs`` (NaN where the crossover is singular).
    """

    system: SystemSpec
    initial: tuple[ReservoirState, ...]
    options: IntegrationOptions
    t: np.ndarray
    T: np.ndarray
    mu: np.ndarray
    x: np.ndarray
    J: np.ndarray
    P: np.ndarray
    Y: np.ndarray
    sigma: np.ndarray
    sum_N: np.ndarray
    sum_E: np.ndarray
    omega_tilde: np.ndarray
    pairs: list[tuple[int, int]]
    events: list[Event]
    steps: StepLog
    segments: list[DenseSegment] = field(repr=False)
    y_final: np.ndarray = None
    termination: str = ""
    error_estimate: np.ndarray = None
    stats: dict = field(default_factory=dict)

    @property
    def n_reservoirs(self) -> int:
        return len(self.initial)

    @property
    def t_final(self) -> float:
        return float(self.steps.t[-1])

    def state_at(self, t):
        """Integrated state ``(T_1..T_n, x_1..x_n)`` at time ``t`` from the dense output."""
        t = float(t)
        if not self.steps.t[0] <= t <= self.steps.t[-1]:
            raise InvalidInputError(f"t = {t:g} is outside [0, {self.t_final:g}]")
        if not self.segments:
            return self.steps.y[0].copy()
        i = int(np.searchsorted(self.steps.t, t, side="right")) - 1
        i = min(max(i, 0), len(self.segments) - 1)
        return self.segments[i](t)

    def final_states(self) -> list[ReservoirState]:
        n = self.n_reservoirs
        T = self.y_final[:n]
        mu = self.y_final[n:] * T
        return [r.with_state(float(T[j]), float(mu[j])) for j, r in enumerate(self.initial)]

    def limit(self) -> tuple[float, float]:
        """B-weighted mean of the final (T, mu), the trajectory's equilibrium estimate."""
        B = np.array([r.prefactor for r in self.initial])
        states = self.final_states()
        T = np.array([r.temperature for r in states])
        mu = np.array([r.chemical_potential for r in states])
        return float(B @ T / B.sum()), float(B @ mu / B.sum())

    def conservation_drift(self) -> tuple[float, float]:
        """Largest relative drift of total N and E over all accepted steps."""
        return float(np.max(self.steps.drift_N)), float(np.max(self.steps.drift_E))

    def min_temperature_ratio(self, index=None) -> tuple[float, float]:
        """``(min_t T_j(t)/T_j(0), argmin)``; defaults to the initially coldest reservoir.

        The minimum over step endpoints is refined on the dense output of the
        two neighbouring steps.
        """
        if index is None:
            index = int(np.argmin([r.temperature for r in self.initial]))
        T0 = self.initial[index].temperature
        Ts = self.steps.y[:, index]
        k = int(np.argmin(Ts))
        best_t, best_T = float(self.steps.t[k]), float(Ts[k])
        for s in (k - 1, k):
            if 0 <= s < len(self.segments):
                seg = self.segments[s]
                res = minimize_scalar(
                    lambda t: seg(t)[index], bounds=(seg.t0, seg.t1), method="bounded", options={"xatol": 1e-12 * (seg.t1 - seg.t0)}
                )
                if res.fun < best_T:
                    best_t, best_T = float(res.x), float(res.fun)
        return best_T / T0, best_t

    def events_of(self, kind) -> list[Event]:
        return [e for e in self.events if e.kind == kind]


class _System:
    """Array view of the ODE with constants hoisted out of the right-hand side."""

    def __init__(self, sys: SystemSpec, initial: Sequence[ReservoirState]):
        self.n = len(initial)
        self.omega = sys.omega
        self.G = coupling_matrix(self.omega, initial)
        self.weights = self.G[:, None, :] * self.G[None, :, :] / self.G.sum(axis=0)
        self.alpha = np.array([r.alpha for r in initial])
        self.B = np.array([r.prefactor for r in initial])
        self.kernel = RateKernel(self.alpha, self.B)

    def split(self, y):
        return y[: self.n], y[self.n :]

    def flows(self, y):
        T, x = self.split(y)
        mu = x * T
        J, P, _, _ = pairwise_flow_arrays(self.omega, T, mu, self.G, self.weights, scales=False)
        return J, P, mu

    def rates(self, y, J, P):
        T, x = self.split(y)
        return self.kernel(T, x, J, P)

    def rhs(self, t, y):
        T, x = self.split(y)
        # outside the admissible domain (NaN fails both comparisons): let the
        # stepper reject the trial stage
        if not ((T > 0).all() and (x >= X_MIN_FLOOR).all()):
            return np.full_like(y, np.nan)
        J, P, _ = self.flows(y)
        self._last = (y, J, P)
        try:
            T_dot, x_dot = self.rates(y, J, P)
        except SingularJacobianError:
            return np.full_like(y, np.nan)
        return np.concatenate([T_dot, x_dot])

    def jacobian_eigenvalues(self, y, f):
        """Eigenvalues of a forward-difference Jacobian of the right-hand side."""
        m = y.size
        jac = np.empty((m, m))
        for i in range(m):
            d = 1.49e-8 * max(abs(y[i]), 1e-8)
            yp = y.copy()
            yp[i] += d
            jac[:, i] = (self.rhs(0.0, yp) - f) / d
        if not np.all(np.isfinite(jac)):
            return np.zeros(0)
        return np.linalg.eigvals(jac)

    def diagnostics(self, y, f=None):
        """``(sigma, slot_tol, N, E, max|T_dot|, max|x_dot|)``; ``f`` is the known rhs at ``y``."""
        T, x = self.split(y)
        last = getattr(self, "_last", None)
        if last is not None and last[0] is y:
            J, P = last[1], last[2]
            mu = x * T
        else:
            J, P, mu = self.flows(y)
        Y = J - mu * P
        Y = np.where(np.abs(Y) < FLUSH_BELOW, 0.0, Y)
        sigma = entropy_production_arrays(Y, T)
        slot = SLOT_RTOL * float(np.max(np.abs(Y / T)))
        N, E = totals_arrays(T, x, self.alpha, self.B)
        if f is None:
            T_dot, x_dot = self.rates(y, J, P)
        else:
            T_dot, x_dot = f[: self.n], f[self.n :]
        return sigma, slot, N, E, float(np.max(np.abs(T_dot))), float(np.max(np.abs(x_dot)))


def _sample_times(t_final, first_step, n, mode):
    if t_final <= 0.0:
        return np.zeros(1)
    if mode == "linear" or first_step >= t_final:
        return np.linspace(0.0, t_final, n)
    t = np.empty(n)
    t[0] = 0.0
    t[1:] = np.geomspace(first_step, t_final, n - 1)
    t[-1] = t_final
    return t


def integrate(sys: SystemSpec, initial: Sequence[ReservoirState], opts: IntegrationOptions | None = None) -> Trajectory:
    """Integrate the reservoir ODEs until equilibrium or ``opts.t_end``.

    Raises
    ------
    SommerfeldDomainError
        An accepted step left ``x >= x_min``.
    IntegrityError
        Entropy production fell below ``-eps_slot`` or a conserved total
        drifted by more than ``opts.conservation_tol``.
    StiffnessError
        Step size underflow, more than ``opts.max_steps`` steps, or more than
        ``opts.max_stiff_steps`` stability-limited explicit steps.

    Each of these carries the history up to the failure as ``exc.trajectory``.
    """
    opts = opts or IntegrationOptions()
    initial = tuple(initial)
    if len(initial) < 2:
        raise InvalidInputError("integration needs at least two reservoirs")
    for i, r in enumerate(initial):
        r.check_degenerate(opts.x_min, index=i)
    run = _Run(sys, initial, opts)
    try:
        run.advance()
    except (IntegrityError, SommerfeldDomainError, StiffnessError) as exc:
        # hand the history up to the failure to the caller for inspection
        run.termination = f"error: {type(exc).__name__}"
        exc.trajectory = run.trajectory()
        raise
    return run.trajectory()


class _Run:
    """Mutable state of one integration; owned by a single call of :func:`integrate`."""

    def __init__(self, sys, initial, opts):
        self.wall0 = time.perf_counter()
        self.sys = sys
        self.initial = initial
        self.opts = opts
        self.model = model = _System(sys, initial)
        T0 = np.array([r.temperature for r in initial])
        self.y0 = y0 = np.concatenate([T0, np.array([r.x for r in initial])])
        self.sigma0, slot0, self.N0, self.E0, self.Td0, self.xd0 = model.diagnostics(y0)
        self.y = y0
        self.log = {"t": [0.0], "y": [y0.copy()], "sigma": [self.sigma0], "slot": [slot0], "dN": [0.0], "dE": [0.0]}
        self.segments: list[DenseSegment] = []
        self.detector = EventDetector(model.n, model.omega, y0)
        self.err_sum = np.zeros_like(y0)
        self.first_step = None
        self.termination = "t_end"
        self.stats = {"n_accepted": 0, "n_rejected": 0, "nfev": 1, "n_stability_limited": 0}

    def at_equilibrium(self, sigma, Td, xd):
        thr = self.opts.equilibrium_threshold
        return sigma <= thr * self.sigma0 and Td <= thr * self.Td0 and xd <= thr * self.xd0

    def advance(self):
        opts, model, n = self.opts, self.model, self.model.n
        if self.at_equilibrium(self.sigma0, self.Td0, self.xd0):
            self.termination = "equilibrium"
            return
        explicit = opts.method == "dopri5"
        if explicit:
            stepper = DormandPrince(model.rhs, 0.0, self.y0, opts.rtol, opts.atol)
        else:
            stepper = RadauStepper(model.rhs, 0.0, self.y0, opts.rtol, opts.atol, opts.t_end)
        n_capped = 0
        try:
            while True:
                if stepper.n_accepted >= opts.max_steps:
                    raise StiffnessError(
                        f"more than {opts.max_steps} steps before t = {stepper.t:.6g}", t=stepper.t, state=stepper.y.copy()
                    )
                if explicit and stepper.n_accepted % STABILITY_REFRESH == 0:
                    # explicit steps on the stability boundary would leave the fast
                    # relaxation parked at the tolerance level instead of decaying
                    stepper.max_step = stable_step_limit(model.jacobian_eigenvalues(stepper.y, stepper.f))
                step = stepper.step(opts.t_end)
                n_capped += int(stepper.capped)
                if n_capped > opts.max_stiff_steps:
                    raise StiffnessError(
                        f"stability rather than accuracy limited {n_capped} steps by t = {step.t:.6g}; "
                        "the problem is stiff, use method = 'radau'",
                        t=step.t,
                        state=step.y.copy(),
                    )
                y = step.y
                x_now = y[n:]
                if np.any(x_now < opts.x_min):
                    j = int(np.argmin(x_now))
                    raise SommerfeldDomainError(
                        f"reservoir {j + 1} left the degenerate regime at t = {step.t:.6g}: "
                        f"x = {x_now[j]:.6g} < x_min = {opts.x_min:g}",
                        index=j,
                        x=float(x_now[j]),
                    )
                sigma, slot, N, E, Td, xd = model.diagnostics(y, stepper.f)
                if sigma < -slot:
                    raise IntegrityError(
                        f"entropy production {sigma:.6g} below -{slot:.3g} at t = {step.t:.6g}",
                        t=step.t,
                        detail={"sigma": sigma, "slot_tolerance": slot, "state": y.tolist()},
                    )
                dN = abs(N - self.N0) / self.N0
                dE = abs(E - self.E0) / self.E0
                if max(dN, dE) > opts.conservation_tol:
                    raise IntegrityError(
                        f"conservation drift N {dN:.3g}, E {dE:.3g} exceeds {opts.conservation_tol:g} at t = {step.t:.6g}",
                        t=step.t,
                        detail={"drift_N": dN, "drift_E": dE, "state": y.tolist()},
                    )
                self._accept(step, sigma, slot, dN, dE)
                if self.at_equilibrium(sigma, Td, xd):
                    self.termination = "equilibrium"
                    break
                if stepper.t >= opts.t_end:
                    break
        finally:
            self.stats = {
                "n_accepted": stepper.n_accepted,
                "n_rejected": stepper.n_rejected,
                "nfev": stepper.nfev,
                "n_stability_limited": n_capped,
            }

    def _accept(self, step, sigma, slot, dN, dE):
        if self.first_step is None:
            self.first_step = step.t - step.t_old
        self.y = step.y
        self.segments.append(step.dense)
        self.err_sum += np.abs(step.local_error)
        log = self.log
        log["t"].append(step.t)
        log["y"].append(step.y.copy())
        log["sigma"].append(sigma)
        log["slot"].append(slot)
        log["dN"].append(dN)
        log["dE"].append(dE)
        self.detector.update(step.t_old, step.t, step.y, step.dense)

    def trajectory(self) -> Trajectory:
        n = self.model.n
        log = self.log
        steps = StepLog(
            t=np.array(log["t"]),
            y=np.array(log["y"]),
            sigma=np.array(log["sigma"]),
            slot_tolerance=np.array(log["slot"]),
            drift_N=np.array(log["dN"]),
            drift_E=np.array(log["dE"]),
        )
        stats = dict(self.stats, method=self.opts.method, wall_time=time.perf_counter() - self.wall0)
        empty = np.empty((0, n))
        traj = Trajectory(
            system=self.sys,
            initial=self.initial,
            options=self.opts,
            t=np.empty(0),
            T=empty,
            mu=empty,
            x=empty,
            J=empty,
            P=empty,
            Y=empty,
            sigma=np.empty(0),
            sum_N=np.empty(0),
            sum_E=np.empty(0),
            omega_tilde=np.empty((0, 0)),
            pairs=list(combinations(range(n), 2)),
            events=list(self.detector.events),
            steps=steps,
            segments=list(self.segments),
            y_final=self.y.copy(),
            termination=self.termination,
            error_estimate=self.err_sum.copy(),
            stats=stats,
        )
        times = _sample_times(steps.t[-1], self.first_step or 0.0, self.opts.n_samples, self.opts.sampling)
        _fill_samples(traj, self.model, times)
        return traj


def _fill_samples(traj: Trajectory, model: _System, times):
    n = model.n
    rows = len(times)
    Y_state = np.array([traj.state_at(t) for t in times])
    Y_state[-1] = traj.y_final
    T = Y_state[:, :n]
    x = Y_state[:, n:]
    mu = x * T
    # the first row reproduces the configured state exactly
    T[0] = [r.temperature for r in traj.initial]
    mu[0] = [r.chemical_potential for r in traj.initial]
    x[0] = mu[0] / T[0]

    J = np.empty((rows, n))
    P = np.empty((rows, n))
    sigma = np.empty(rows)
    sN = np.empty(rows)
    sE = np.empty(rows)
    for i in range(rows):
        J[i], P[i], _ = model.flows(np.concatenate([T[i], x[i]]))
        sN[i], sE[i] = totals_arrays(T[i], x[i], model.alpha, model.B)
    Y = J - mu * P
    Y = np.where(np.abs(Y) < FLUSH_BELOW, 0.0, Y)
    for i in range(rows):
        sigma[i] = entropy_production_arrays(Y[i], T[i])

    wt = np.full((rows, len(traj.pairs)), np.nan)
    for c, (a, b) in enumerate(traj.pairs):
        den = T[:, a] - T[:, b]
        ok = np.abs(den) > 1e-14 * np.maximum(T[:, a], T[:, b])
        wt[ok, c] = (T[ok, a] * mu[ok, b] - T[ok, b] * mu[ok, a]) / den[ok]

    traj.t = np.asarray(times, dtype=float)
    traj.T, traj.mu, traj.x = T, mu, x
    traj.J, traj.P, traj.Y = J, P, Y
    traj.sigma, traj.sum_N, traj.sum_E = sigma, sN, sE
    traj.omega_tilde = wt


@dataclass(frozen=True, eq=False)
class ModeRelaxation:
    """Occupations of each OQS mode under frozen reservoirs.

    ``occupations[i, k]`` is the mean occupation of mode ``k`` at ``times[i]``;
    ``stationary`` is the weighted occupancy and ``rates`` the total coupling
    ``sum_j gamma_j(omega_k)``.
    """

    times: np.ndarray
    occupations: np.ndarray
    stationary: np.ndarray
    rates: np.ndarray


def mode_occupation_relaxation(sys: SystemSpec, reservoirs: Sequence[ReservoirState], n0, times) -> ModeRelaxation:
    """Solve ``dn_k/dt = sum_j gamma_j(omega_k) (n_j(omega_k) - n_k)`` exactly.

    The equation is linear with constant coefficients, so each mode relaxes
    exponentially to the weighted occupancy at rate ``sum_j gamma_j``.
    """
    if not reservoirs:
        raise InvalidInputError("no reservoirs")
    omega = sys.omega
    n0 = np.asarray(n0, dtype=float)
    if n0.shape != omega.shape:
        raise InvalidInputError(f"expected {omega.size} initial occupations, got {n0.size}")
    if not np.all((n0 >= 0.0) & (n0 <= 1.0)):
        raise InvalidInputError("initial occupations must lie in [0, 1]")
    times = np.asarray(times, dtype=float)
    if np.any(times < 0) or not np.all(np.isfinite(times)):
        raise InvalidInputError("times must be finite and non-negative")
    G = coupling_matrix(omega, reservoirs)
    rates = G.sum(axis=0)
    stationary = np.atleast_1d(weighted_occupancy(omega, reservoirs))
    decay = -np.expm1(-rates[None, :] * times[:, None])
    occ = n0[None, :] + (stationary - n0)[None, :] * decay
    return ModeRelaxation(times, occ, stationary, rates)


@dataclass(frozen=True)
class TimescaleSeparation:
    fast_rate: float
    slow_rate: float

    @property
    def ratio(self) -> float:
        return self.fast_rate / self.slow_rate if self.slow_rate > 0 else math.inf


def timescale_separation(sys: SystemSpec, reservoirs: Sequence[ReservoirState]) -> TimescaleSeparation:
    """Slowest mode relaxation rate against the fastest relative temperature rate."""
    model = _System(sys, reservoirs)
    fast = float(np.min(model.G.sum(axis=0)))
    T = np.array([r.temperature for r in reservoirs])
    y = np.concatenate([T, [r.x for r in reservoirs]])
    J, P, _ = model.flows(y)
    T_dot, _ = model.rates(y, J, P)
    return TimescaleSeparation(fast, float(np.max(np.abs(T_dot / T))))
