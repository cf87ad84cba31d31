"""Domain types and single-frequency quantities.

Units: hbar = k_B = 1 and every energy/temperature is stored in units of the
reference temperature ``unit_scale`` (kelvin), so ``omega / unit_scale`` in
the coupling law is simply ``omega``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from .errors import InvalidInputError, SommerfeldDomainError

X_MIN_DEFAULT = 5.0
X_MIN_FLOOR = 3.0

_CROSSOVER_RTOL = 1e-14
SLOT_RTOL = 1e-12
_SIGN_DEADBAND = 1e-15


def _finite(name, value):
    try:
        v = float(value)
    except (TypeError, ValueError) as exc:
        raise InvalidInputError(f"{name} must be a real number, got {value!r}") from exc
    if not math.isfinite(v):
        raise InvalidInputError(f"{name} must be finite, got {value!r}")
    return v


def check_x_min(x_min):
    x_min = _finite("x_min", x_min)
    if x_min < X_MIN_FLOOR:
        raise InvalidInputError(
            f"x_min={x_min} is below the hard floor {X_MIN_FLOOR}; "
            "the Sommerfeld expansions are meaningless there"
        )
    return x_min


@dataclass(frozen=True)
class SystemSpec:
    """Mode frequencies of the quadratic open system and the unit scale."""

    modes: tuple[float, ...]
    unit_scale: float = 1000.0

    def __post_init__(self):
        modes = tuple(_finite("mode frequency", w) for w in np.atleast_1d(self.modes))
        if not modes:
            raise InvalidInputError("at least one mode frequency is required")
        if any(w <= 0 for w in modes):
            raise InvalidInputError(f"mode frequencies must be positive, got {modes}")
        object.__setattr__(self, "modes", modes)
        scale = _finite("unit_scale", self.unit_scale)
        if scale <= 0:
            raise InvalidInputError("unit_scale must be positive")
        object.__setattr__(self, "unit_scale", scale)

    @property
    def omega(self) -> np.ndarray:
        return np.asarray(self.modes, dtype=float)

    @property
    def n_distinct_modes(self) -> int:
        return len(set(self.modes))

    @property
    def equilibrium_is_unique(self) -> bool:
        """False for systems with a single distinct frequency.

        With one frequency any pair of reservoirs whose occupancies cross
        exactly at that frequency exchanges nothing, so zero flow no longer
        implies equal (T, mu).
        """
        return self.n_distinct_modes >= 2


@dataclass(frozen=True)
class ReservoirGeometry:
    """Spectral exponent ``alpha = D/d`` and density-of-states scale ``B``.

    ``prefactor`` is ``A V / alpha``; dimension, dispersion constant and volume
    are all absorbed into it.
    """

    alpha: float = 1.5
    prefactor: float = 1.0

    def __post_init__(self):
        a = _finite("alpha", self.alpha)
        b = _finite("prefactor", self.prefactor)
        if a <= 0:
            raise InvalidInputError(f"alpha must be positive, got {a}")
        if b <= 0:
            raise InvalidInputError(f"prefactor must be positive, got {b}")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "prefactor", b)


@dataclass(frozen=True)
class SpectralCoupling:
    """Power-law dissipation rate ``gamma(omega) = amplitude * omega**exponent``."""

    amplitude: float = 1e-4
    exponent: float = 0.5

    def __post_init__(self):
        g = _finite("coupling amplitude", self.amplitude)
        p = _finite("coupling exponent", self.exponent)
        if g <= 0:
            raise InvalidInputError(f"coupling amplitude must be positive, got {g}")
        object.__setattr__(self, "amplitude", g)
        object.__setattr__(self, "exponent", p)

    def rate(self, omega):
        return self.amplitude * np.power(omega, self.exponent)


@dataclass(frozen=True)
class ReservoirState:
    temperature: float
    chemical_potential: float
    geometry: ReservoirGeometry = field(default_factory=ReservoirGeometry)
    coupling: SpectralCoupling = field(default_factory=SpectralCoupling)

    def __post_init__(self):
        t = _finite("temperature", self.temperature)
        mu = _finite("chemical_potential", self.chemical_potential)
        if t <= 0:
            raise InvalidInputError(f"temperature must be positive, got {t}")
        object.__setattr__(self, "temperature", t)
        object.__setattr__(self, "chemical_potential", mu)

    @property
    def x(self) -> float:
        return self.chemical_potential / self.temperature

    @property
    def alpha(self) -> float:
        return self.geometry.alpha

    @property
    def prefactor(self) -> float:
        return self.geometry.prefactor

    def gamma(self, omega):
        return self.coupling.rate(omega)

    def occupancy(self, omega):
        return fermi_occupancy(omega, self.chemical_potential, self.temperature)

    def with_state(self, temperature, chemical_potential) -> "ReservoirState":
        return replace(self, temperature=temperature, chemical_potential=chemical_potential)

    def check_degenerate(self, x_min=X_MIN_DEFAULT, index=None):
        x_min = check_x_min(x_min)
        if not self.x >= x_min:
            who = "reservoir" if index is None else f"reservoir {index}"
            raise SommerfeldDomainError(
                f"{who}: x = mu/T = {self.x:.6g} is below x_min = {x_min:g}",
                index=index,
                x=self.x,
            )


def reservoir(
    temperature,
    chemical_potential,
    *,
    alpha=1.5,
    prefactor=1.0,
    amplitude=1e-4,
    exponent=None,
) -> ReservoirState:
    """Shorthand constructor; the coupling exponent defaults to ``alpha - 1``."""
    if exponent is None:
        exponent = float(alpha) - 1.0
    return ReservoirState(
        temperature,
        chemical_potential,
        ReservoirGeometry(alpha, prefactor),
        SpectralCoupling(amplitude, exponent),
    )


@dataclass(frozen=True, eq=False)
class FlowSet:
    """Quasi-stationary flows out of each reservoir.

    Positive ``energy``/``particles`` means the reservoir loses energy/particles.
    ``scale_energy`` and ``scale_particles`` are the largest absolute summands
    that entered the totals; they set the rounding floor for conservation checks.
    """

    energy: np.ndarray
    particles: np.ndarray
    heat: np.ndarray
    temperatures: np.ndarray
    entropy_production: float
    scale_energy: float = 0.0
    scale_particles: float = 0.0

    @property
    def slot_tolerance(self) -> float:
        """Admissible negative excursion of the entropy production (rounding)."""
        return SLOT_RTOL * float(np.max(np.abs(self.heat / self.temperatures), initial=0.0))

    def __len__(self):
        return len(self.energy)


def _as_array(x):
    a = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(a)):
        raise InvalidInputError("non-finite input")
    return a


def _scalar_or_array(a):
    return float(a) if np.ndim(a) == 0 else a


def fermi_occupancy(omega, mu, T):
    """Fermi-Dirac occupancy ``1 / (exp((omega - mu)/T) + 1)``.

    Evaluated through ``exp(-|v|)`` so that reduced energies of either sign up
    to several hundred never overflow. Broadcasts over array arguments.
    """
    w, m, t = _as_array(omega), _as_array(mu), _as_array(T)
    if np.any(t <= 0):
        raise InvalidInputError("temperature must be positive")
    v = (w - m) / t
    e = np.exp(-np.abs(v))
    n = np.where(v >= 0, e / (1.0 + e), 1.0 / (1.0 + e))
    return _scalar_or_array(n)


def hole_occupancy(omega, mu, T):
    """``1 - n`` without cancellation."""
    return fermi_occupancy(-np.asarray(omega, float), -np.asarray(mu, float), T)


def weighted_occupancy(omega, reservoirs: Sequence[ReservoirState]):
    """Coupling-weighted mean occupancy, the stationary filling of a mode at ``omega``."""
    if not reservoirs:
        raise InvalidInputError("at least one reservoir is required")
    w = _as_array(omega)
    if np.any(w <= 0):
        raise InvalidInputError("frequency must be positive")
    g = np.array([r.gamma(w) for r in reservoirs])
    n = np.array([r.occupancy(w) for r in reservoirs])
    return _scalar_or_array((g * n).sum(axis=0) / g.sum(axis=0))


def _half_difference(hj, hq):
    """``-sinh(hj - hq) / (2 cosh(hj) cosh(hq))`` in overflow-free factored form.

    With ``a = |h|`` and ``e = |hj - hq|``::

        sinh(e) / (2 cosh(hj) cosh(hq))
            = exp(e - (a_j + a_q)) (1 - exp(-2e)) / ((1 + exp(-2 a_j)) (1 + exp(-2 a_q)))

    The exponent ``e - (a_j + a_q)`` equals ``-2 min(a_j, a_q)`` when the
    arguments share a sign and 0 otherwise; it is taken in that form because
    the subtraction would cost ``eps * max(a)`` of relative accuracy. Every
    factor is symmetric in (j, q) apart from the sign, so the result is
    exactly antisymmetric.
    """
    d = hj - hq
    e = np.abs(d)
    aj = np.abs(hj)
    aq = np.abs(hq)
    expo = np.where(np.sign(hj) == np.sign(hq), -2.0 * np.minimum(aj, aq), 0.0)
    num = np.exp(expo) * -np.expm1(-2.0 * e)
    den = (1.0 + np.exp(-2.0 * aj)) * (1.0 + np.exp(-2.0 * aq))
    return -np.sign(d) * (num / den)


def occupancy_difference_reduced(v_j, v_q):
    """``n(v_j) - n(v_q)`` for reduced energies ``v = (omega - mu)/T``.

    Uses ``n_j - n_q = -sinh(d) / (2 cosh(v_j/2) cosh(v_q/2))`` with
    ``d = (v_j - v_q)/2``. The result is exactly antisymmetric under exchange
    of its arguments and keeps full relative precision deep in either Fermi
    tail, where ``n_j - n_q`` formed by subtraction would lose every digit.
    """
    return _half_difference(np.asarray(v_j, float) * 0.5, np.asarray(v_q, float) * 0.5)


def crossover_frequency(r1: ReservoirState, r2: ReservoirState):
    """Frequency at which the two occupancies coincide, or ``None`` if T1 == T2."""
    t1, t2 = r1.temperature, r2.temperature
    m1, m2 = r1.chemical_potential, r2.chemical_potential
    if abs(t1 - t2) <= _CROSSOVER_RTOL * max(t1, t2):
        return None
    return (t1 * m2 - t2 * m1) / (t1 - t2)


class RegimeSigns(NamedTuple):
    """Signs (-1, 0, +1) of the single-frequency energy, particle and heat flows."""

    j1: int
    p1: int
    y1: int
    j2: int
    p2: int
    y2: int

    def of(self, k: int) -> tuple[int, int, int]:
        return (self.j1, self.p1, self.y1) if k == 1 else (self.j2, self.p2, self.y2)


def _sign(value, scale):
    if abs(value) <= _SIGN_DEADBAND * abs(scale):
        return 0
    return 1 if value > 0 else -1


def pair_particle_flow(omega, r1: ReservoirState, r2: ReservoirState) -> float:
    """Single-frequency particle flow out of ``r1`` for a two-reservoir system."""
    g1, g2 = float(r1.gamma(omega)), float(r2.gamma(omega))
    big = g1 * g2 / (g1 + g2)
    v1 = (omega - r1.chemical_potential) / r1.temperature
    v2 = (omega - r2.chemical_potential) / r2.temperature
    return big * float(occupancy_difference_reduced(v1, v2))


def classify_regime(omega, r1: ReservoirState, r2: ReservoirState) -> RegimeSigns:
    omega = _finite("omega", omega)
    if omega <= 0:
        raise InvalidInputError("frequency must be positive")
    g1, g2 = float(r1.gamma(omega)), float(r2.gamma(omega))
    big = g1 * g2 / (g1 + g2)
    p1 = pair_particle_flow(omega, r1, r2)
    # the relevant magnitude in a Fermi tail is the smaller of n and 1 - n
    tails = [min(r.occupancy(omega), 1.0 - r.occupancy(omega)) for r in (r1, r2)]
    p_scale = big * max(max(tails), 1e-300)
    sp1 = _sign(p1, p_scale)
    sp2 = -sp1
    s1 = _sign(omega - r1.chemical_potential, max(abs(omega), abs(r1.chemical_potential)))
    s2 = _sign(omega - r2.chemical_potential, max(abs(omega), abs(r2.chemical_potential)))
    return RegimeSigns(sp1, sp1, s1 * sp1, sp2, sp2, s2 * sp2)
