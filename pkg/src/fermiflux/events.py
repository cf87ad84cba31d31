"""Ordering and crossover events along a trajectory.

Each watched quantity is a smooth function of the integrated state
``y = (T_1..T_n, x_1..x_n)``. A sign is only considered definite outside a
small relative dead band, so that rounding noise near equilibrium does not
produce spurious swaps. When the definite sign changes across an accepted
step the crossing is located on the step's dense output.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.optimize import brentq

TEMPERATURE_SWAP = "temperature-order-swap"
CHEMICAL_POTENTIAL_SWAP = "chemical-potential-order-swap"
CROSSOVER_SIGN_CHANGE = "crossover-sign-change"
CROSSOVER_SINGULARITY = "crossover-singularity"
MODE_CROSSOVER_ENTRY = "mode-crossover-entry"

EVENT_KINDS = (
    TEMPERATURE_SWAP,
    CHEMICAL_POTENTIAL_SWAP,
    CROSSOVER_SIGN_CHANGE,
    CROSSOVER_SINGULARITY,
    MODE_CROSSOVER_ENTRY,
)

DEADBAND = 1e-10


@dataclass(frozen=True)
class Event:
    kind: str
    time: float
    reservoirs: tuple[int, ...]
    modes: tuple[int, ...] = ()
    values: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "kind": self.kind,
            "time": self.time,
            "reservoirs": list(self.reservoirs),
            "modes": list(self.modes),
            "values": self.values,
        }


def _pair_quantities(y, n, a, b, w_lo, w_hi):
    T = y[:n]
    mu = y[n:] * T
    den = T[a] - T[b]
    num = T[a] * mu[b] - T[b] * mu[a]
    return {
        "dT": (den, max(T[a], T[b])),
        "dmu": (mu[a] - mu[b], max(abs(mu[a]), abs(mu[b]))),
        "num": (num, T[a] * abs(mu[b]) + T[b] * abs(mu[a])),
        "lo": (num - w_lo * den, T[a] * abs(mu[b]) + T[b] * abs(mu[a]) + w_lo * max(T[a], T[b])),
        "hi": (num - w_hi * den, T[a] * abs(mu[b]) + T[b] * abs(mu[a]) + w_hi * max(T[a], T[b])),
    }


def _definite(value, scale):
    if abs(value) <= DEADBAND * scale:
        return 0
    return 1 if value > 0 else -1


def _inside(q):
    den = q["dT"][0]
    if _definite(*q["dT"]) == 0:
        return False
    return (q["lo"][0] / den) > 0 and (q["hi"][0] / den) < 0


def pair_values(y, n, a, b):
    T = y[:n]
    mu = y[n:] * T
    den = T[a] - T[b]
    wt = None
    if abs(den) > 1e-14 * max(T[a], T[b]):
        wt = float((T[a] * mu[b] - T[b] * mu[a]) / den)
    return {
        "T": [float(T[a]), float(T[b])],
        "mu": [float(mu[a]), float(mu[b])],
        "omega_tilde": wt,
    }


class EventDetector:
    """Online detector fed with accepted steps."""

    def __init__(self, n_reservoirs, modes, y0):
        self.n = n_reservoirs
        self.modes = np.asarray(modes, dtype=float)
        self.w_lo = float(self.modes.min())
        self.w_hi = float(self.modes.max())
        self.mode_ids = (int(np.argmin(self.modes)), int(np.argmax(self.modes)))
        self.pairs = list(combinations(range(n_reservoirs), 2))
        self.events: list[Event] = []
        self._signs = {}
        self._inside = {}
        for a, b in self.pairs:
            q = _pair_quantities(y0, self.n, a, b, self.w_lo, self.w_hi)
            for key in ("dT", "dmu", "num"):
                self._signs[(a, b, key)] = _definite(*q[key])
            self._inside[(a, b)] = _inside(q)

    def _q(self, y, a, b):
        return _pair_quantities(y, self.n, a, b, self.w_lo, self.w_hi)

    def _root(self, dense, t0, t1, a, b, key):
        def f(t):
            return self._q(dense(t), a, b)[key][0]

        f0, f1 = f(t0), f(t1)
        if f0 == 0.0:
            return t0
        if f0 * f1 > 0:
            # the crossing happened inside the dead band before this step
            return t0
        return brentq(f, t0, t1, xtol=1e-13 * (t1 - t0), rtol=4 * np.finfo(float).eps)

    def _bisect_entry(self, dense, t0, t1, a, b):
        lo, hi = t0, t1
        tol = 1e-12 * (t1 - t0)
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if _inside(self._q(dense(mid), a, b)):
                hi = mid
            else:
                lo = mid
        return hi

    def _emit(self, kind, t, dense, a, b, modes=(), extra=None):
        values = pair_values(dense(t), self.n, a, b)
        if extra:
            values.update(extra)
        self.events.append(Event(kind, float(t), (a, b), tuple(modes), values))

    def update(self, t0, t1, y1, dense):
        found = []
        for a, b in self.pairs:
            q = self._q(y1, a, b)
            for key, kinds in (
                ("dT", (TEMPERATURE_SWAP, CROSSOVER_SINGULARITY)),
                ("dmu", (CHEMICAL_POTENTIAL_SWAP,)),
                ("num", (CROSSOVER_SIGN_CHANGE,)),
            ):
                s_new = _definite(*q[key])
                s_old = self._signs[(a, b, key)]
                if s_new == 0:
                    continue
                if s_old != 0 and s_new != s_old:
                    tc = self._root(dense, t0, t1, a, b, key)
                    for kind in kinds:
                        extra = None
                        if kind == CROSSOVER_SINGULARITY:
                            before = pair_values(dense(t0), self.n, a, b)["omega_tilde"]
                            after = pair_values(y1, self.n, a, b)["omega_tilde"]
                            extra = {"omega_tilde_before": before, "omega_tilde_after": after}
                        found.append((tc, kind, a, b, (), extra))
                self._signs[(a, b, key)] = s_new
            inside = _inside(q)
            if inside and not self._inside[(a, b)]:
                tc = self._bisect_entry(dense, t0, t1, a, b)
                found.append((tc, MODE_CROSSOVER_ENTRY, a, b, self.mode_ids, None))
            self._inside[(a, b)] = inside
        found.sort(key=lambda e: e[0])
        for tc, kind, a, b, modes, extra in found:
            self._emit(kind, tc, dense, a, b, modes, extra)
        return found
