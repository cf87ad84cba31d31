"""One-step integrators sharing a small stepping interface.

:class:`DormandPrince` is an explicit 5(4) pair with PI step-size control and
quartic dense output (standard DOPRI5 tableau, Shampine's continuous
extension, controller constants as in the DOPRI5 code of Hairer and Wanner).
:class:`RadauStepper` adapts scipy's implicit Radau IIA solver to the same
interface for problems whose stiffness makes explicit stepping impractical.

Both expose ``t``, ``y``, ``f`` (the derivative at ``(t, y)``), ``max_step``,
``n_accepted``, ``n_rejected``, ``nfev`` and ``step(t_bound) -> Step``.

A right-hand side may return non-finite values to signal that a trial stage
left the admissible domain; the step is then rejected and retried smaller.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import Radau

from .errors import StiffnessError

C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
]
B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
# difference between the 5th and embedded 4th order weights (7 stages, FSAL)
E = np.array([-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
P = np.array(
    [
        [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
        [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
        [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)

SAFETY = 0.9
BETA = 0.04
EXPO = 0.2 - 0.75 * BETA
FAC_MIN = 0.2
FAC_MAX = 10.0


def stability_function(z):
    """Amplification factor of one step on ``y' = lambda y`` with ``z = h lambda``."""
    z = np.asarray(z, dtype=complex)
    return 1 + z * (1 + z * (1 / 2 + z * (1 / 6 + z * (1 / 24 + z * (1 / 120 + z / 600)))))


def stable_step_limit(eigenvalues, fraction=0.9, significant=0.05):
    """``fraction`` of the largest step keeping every eigen-direction stable.

    Along the ray of each eigenvalue the stability boundary ``|R(h lambda)| = 1``
    is located; on the negative real axis ``fraction = 0.9`` damps by about 2
    per step. Eigenvalues below ``significant`` times the spectral radius (the
    neutral directions of conserved quantities, for instance) are ignored.
    Returns ``inf`` when nothing constrains the step.
    """
    lam = np.asarray(eigenvalues, dtype=complex)
    rho = float(np.max(np.abs(lam), initial=0.0))
    if rho == 0.0:
        return np.inf
    lam = lam[(np.abs(lam) >= significant * rho) & (lam.real < 0)]
    if lam.size == 0:
        return np.inf
    s = np.linspace(0.0, 4.0, 801)[1:]
    unstable = np.abs(stability_function(s[:, None] * (lam / rho)[None, :])) > 1.0
    bad = np.any(unstable, axis=1)
    c = s[np.argmax(bad)] if np.any(bad) else s[-1]
    return fraction * c / rho


@dataclass(frozen=True, eq=False)
class DenseSegment:
    """Quartic interpolant on ``[t0, t1]``."""

    t0: float
    t1: float
    y0: np.ndarray
    Q: np.ndarray  # (n, 4)

    def __call__(self, t):
        h = self.t1 - self.t0
        theta = (np.asarray(t, dtype=float) - self.t0) / h
        if theta.ndim == 0:
            powers = theta ** np.arange(1, 5)
            return self.y0 + h * (self.Q @ powers)
        powers = theta[None, :] ** np.arange(1, 5)[:, None]
        return self.y0[:, None] + h * (self.Q @ powers)


@dataclass(frozen=True, eq=False)
class WrappedSegment:
    """Dense output of a foreign solver on ``[t0, t1]``."""

    t0: float
    t1: float
    fn: object

    def __call__(self, t):
        return self.fn(t)


@dataclass(frozen=True, eq=False)
class Step:
    t_old: float
    t: float
    y_old: np.ndarray
    y: np.ndarray
    local_error: np.ndarray
    dense: DenseSegment


def _rms(v):
    return float(np.sqrt(np.mean(v * v)))


class DormandPrince:
    def __init__(self, fun, t0, y0, rtol, atol, first_step=None, max_step=np.inf):
        self.fun = fun
        self.t = float(t0)
        self.y = np.array(y0, dtype=float)
        self.rtol = float(rtol)
        self.atol = float(atol)
        self.max_step = max_step
        self.f = np.asarray(fun(self.t, self.y), dtype=float)
        if not np.all(np.isfinite(self.f)):
            raise StiffnessError("right-hand side is not finite at the initial state", t=self.t, state=self.y)
        self.h = float(first_step) if first_step else self._initial_step()
        # true when the controller proposed a longer next step than max_step
        self.capped = False
        self.fac_old = 1e-4
        self.n_accepted = 0
        self.n_rejected = 0
        self.nfev = 1

    def _scale(self, y_new=None):
        y_abs = np.abs(self.y) if y_new is None else np.maximum(np.abs(self.y), np.abs(y_new))
        return self.atol + self.rtol * y_abs

    def _initial_step(self):
        sk = self._scale()
        d0 = _rms(self.y / sk)
        d1 = _rms(self.f / sk)
        if d1 == 0.0:
            return np.inf if self.max_step == np.inf else self.max_step
        h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        f1 = np.asarray(self.fun(self.t + h0, self.y + h0 * self.f), dtype=float)
        self.nfev = getattr(self, "nfev", 0) + 1
        d2 = _rms((f1 - self.f) / sk) / h0 if np.all(np.isfinite(f1)) else np.inf
        if max(d1, d2) <= 1e-15:
            h1 = max(1e-6, h0 * 1e-3)
        else:
            h1 = (0.01 / max(d1, d2)) ** 0.2
        return min(100.0 * h0, h1, self.max_step)

    def _attempt(self, h):
        t, y = self.t, self.y
        K = np.empty((7, y.size))
        K[0] = self.f
        for i in range(1, 6):
            K[i] = self.fun(t + C[i] * h, y + h * (A[i] @ K[:i]))
        y_new = y + h * (B5 @ K[:6])
        K[6] = self.fun(t + h, y_new)
        self.nfev += 6
        return K, y_new

    def step(self, t_bound=np.inf) -> Step:
        """Advance by one accepted step, never past ``t_bound``."""
        h = min(self.h, self.max_step)
        last_rejected = False
        while True:
            # stretch onto the bound rather than leave a sliver of a few ulps
            if t_bound - self.t <= h + 16.0 * np.spacing(max(abs(t_bound), 1.0)):
                h = t_bound - self.t
            if h <= 10.0 * np.spacing(max(abs(self.t), 1.0)):
                raise StiffnessError(
                    f"step size underflow at t = {self.t:.6g} (h = {h:.3g})", t=self.t, state=self.y.copy()
                )
            K, y_new = self._attempt(h)
            if not (np.all(np.isfinite(y_new)) and np.all(np.isfinite(K))):
                self.n_rejected += 1
                last_rejected = True
                h *= 0.25
                continue
            local_error = h * (E @ K)
            err = _rms(local_error / self._scale(y_new))
            fac11 = err**EXPO if err > 0 else 0.0
            if err <= 1.0:
                fac = fac11 / self.fac_old**BETA
                fac = max(1.0 / FAC_MAX, min(1.0 / FAC_MIN, fac / SAFETY))
                h_new = h / fac if fac > 0 else h * FAC_MAX
                if last_rejected:
                    h_new = min(h_new, h)
                self.fac_old = max(err, 1e-4)
                break
            self.n_rejected += 1
            last_rejected = True
            h = h / min(1.0 / FAC_MIN, fac11 / SAFETY)

        dense = DenseSegment(self.t, self.t + h, self.y.copy(), K.T @ P)
        step = Step(self.t, self.t + h, self.y, y_new, local_error, dense)
        self.t = self.t + h if h != t_bound - self.t else float(t_bound)
        self.y = y_new
        self.f = K[6]
        self.capped = bool(h_new > self.max_step)
        self.h = min(h_new, self.max_step)
        self.n_accepted += 1
        return step


class RadauStepper:
    """scipy's Radau IIA (order 5) behind the :class:`DormandPrince` interface.

    scipy does not expose its local error estimate, so ``Step.local_error``
    carries the bound implied by step acceptance instead: an accepted step has
    scaled RMS error at most one, hence ``|e_i| <= sqrt(n) (atol + rtol |y_i|)``.
    """

    def __init__(self, fun, t0, y0, rtol, atol, t_bound, first_step=None, max_step=np.inf):
        self.fun = fun
        self.rtol = float(rtol)
        self.atol = float(atol)
        self.max_step = max_step
        self._solver = Radau(fun, float(t0), np.array(y0, dtype=float), float(t_bound), rtol=rtol, atol=atol, first_step=first_step)
        self.t = self._solver.t
        self.y = self._solver.y.copy()
        self.f = np.asarray(fun(self.t, self.y), dtype=float)
        if not np.all(np.isfinite(self.f)):
            raise StiffnessError("right-hand side is not finite at the initial state", t=self.t, state=self.y)
        self.capped = False
        self.n_accepted = 0
        self._extra_fev = 1

    @property
    def n_rejected(self):
        return 0

    @property
    def nfev(self):
        return self._solver.nfev + self._extra_fev

    def step(self, t_bound=np.inf) -> Step:
        s = self._solver
        if s.status != "running":
            raise StiffnessError(f"Radau solver is {s.status} at t = {self.t:.6g}", t=self.t, state=self.y.copy())
        t_old, y_old = s.t, s.y.copy()
        message = s.step()
        if s.status == "failed":
            raise StiffnessError(f"Radau: {message} at t = {t_old:.6g}", t=t_old, state=y_old)
        y = s.y.copy()
        bound = np.sqrt(y.size) * (self.atol + self.rtol * np.maximum(np.abs(y_old), np.abs(y)))
        dense = WrappedSegment(t_old, s.t, s.dense_output())
        self.t, self.y = s.t, y
        self.f = np.asarray(self.fun(self.t, y), dtype=float)
        self._extra_fev += 1
        self.n_accepted += 1
        return Step(t_old, s.t, y_old, y, bound, dense)
