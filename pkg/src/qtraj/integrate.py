"""Adaptive Runge-Kutta stepping and reproducible random streams.

The stepper is the embedded Cash-Karp 4(5) pair with the classic
step-doubling controller: the error estimate of each component is compared
against ``eps * (|y| + |h dy/dt|) + floor``, failed attempts shrink the step
and are redone, and every accepted step proposes a trial size for the next.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import math

import numpy as np

from .errors import StiffnessError

# Cash-Karp tableau
A2, A3, A4, A5, A6 = 0.2, 0.3, 0.6, 1.0, 0.875
B21 = 0.2
B31, B32 = 3.0 / 40.0, 9.0 / 40.0
B41, B42, B43 = 0.3, -0.9, 1.2
B51, B52, B53, B54 = -11.0 / 54.0, 2.5, -70.0 / 27.0, 35.0 / 27.0
B61, B62, B63, B64, B65 = (
    1631.0 / 55296.0,
    175.0 / 512.0,
    575.0 / 13824.0,
    44275.0 / 110592.0,
    253.0 / 4096.0,
)
C1, C3, C4, C6 = 37.0 / 378.0, 250.0 / 621.0, 125.0 / 594.0, 512.0 / 1771.0
DC1 = C1 - 2825.0 / 27648.0
DC3 = C3 - 18575.0 / 48384.0
DC4 = C4 - 13525.0 / 55296.0
DC5 = -277.0 / 14336.0
DC6 = C6 - 0.25

# controller constants
SAFETY = 0.9
PGROW = -0.2
PSHRNK = -0.25
ERRCON = 1.89e-4  # (5 / SAFETY) ** (1 / PGROW)
MAX_GROWTH = 5.0
MIN_SHRINK = 0.1

#: absolute floor added to every component's error scale
ABS_FLOOR = 1e-30
#: a step below UNDERFLOW * max(t_scale, |t|) is treated as a stiffness failure
UNDERFLOW = 1e-12


@dataclass
class OdeStepper:
    """Controller state for the adaptive stepper.

    ``dttry`` is the step the next call will attempt and ``dtdid`` the one the
    last call accepted. ``t_scale`` sets the underflow threshold and defaults
    to the initial trial step.
    """

    eps: float = 1e-6
    dttry: float = 1e-2
    dtdid: float = 0.0
    t_scale: Optional[float] = None
    floor: float = ABS_FLOOR
    nfev: int = 0
    nreject: int = 0

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.dttry <= 0:
            raise ValueError(f"dttry must be positive, got {self.dttry}")
        if self.t_scale is None:
            self.t_scale = self.dttry


def cash_karp(f, t, y, h, k1):
    """One Cash-Karp evaluation from ``(t, y)`` with ``k1 = f(t, y)``.

    Returns the fifth-order solution and the embedded error estimate.
    """
    k2 = f(t + A2 * h, y + h * (B21 * k1))
    k3 = f(t + A3 * h, y + h * (B31 * k1 + B32 * k2))
    k4 = f(t + A4 * h, y + h * (B41 * k1 + B42 * k2 + B43 * k3))
    k5 = f(t + A5 * h, y + h * (B51 * k1 + B52 * k2 + B53 * k3 + B54 * k4))
    k6 = f(t + A6 * h, y + h * (B61 * k1 + B62 * k2 + B63 * k3 + B64 * k4 + B65 * k5))
    y_new = y + h * (C1 * k1 + C3 * k3 + C4 * k4 + C6 * k6)
    y_err = h * (DC1 * k1 + DC3 * k3 + DC4 * k4 + DC5 * k5 + DC6 * k6)
    return y_new, y_err


def adaptive_step(f, y, t, h, eps, t_scale, floor=ABS_FLOOR):
    """Retry Cash-Karp steps from ``h`` downward until the error is within ``eps``.

    Returns ``(y_new, hdid, hnext, nfev, nreject)``.
    """
    k1 = f(t, y)
    nfev = 1
    nreject = 0
    scale = np.abs(y) + np.abs(h * k1) + floor
    while True:
        y_new, y_err = cash_karp(f, t, y, h, k1)
        nfev += 5
        errmax = float(np.max(np.abs(y_err) / scale)) / eps if y.size else 0.0
        if errmax <= 1.0:
            break
        nreject += 1
        if math.isfinite(errmax):
            h = max(SAFETY * h * errmax**PSHRNK, MIN_SHRINK * h)
        else:
            h = MIN_SHRINK * h
        if h < UNDERFLOW * max(t_scale, abs(t)):
            raise StiffnessError(f"step size underflow at t={t:.6g} (h={h:.3g})")
    if errmax > ERRCON:
        hnext = SAFETY * h * errmax**PGROW
    else:
        hnext = MAX_GROWTH * h
    return y_new, h, hnext, nfev, nreject


def ode_step(f: Callable, y: np.ndarray, t: float, stepper: OdeStepper):
    """Advance ``dy/dt = f(t, y)`` by one accepted adaptive step.

    Returns ``(y_new, t + dtdid, stepper)``; the stepper is updated in place
    with the accepted ``dtdid`` and the proposed ``dttry``.
    """
    y_new, hdid, hnext, nfev, nrej = adaptive_step(
        f, y, t, stepper.dttry, stepper.eps, stepper.t_scale, stepper.floor
    )
    stepper.dtdid = hdid
    stepper.dttry = hnext
    stepper.nfev += nfev
    stepper.nreject += nrej
    return y_new, t + hdid, stepper


def ode_integrate(f, y0, t0, t1, eps=1e-6, dttry=None):
    """Integrate from ``t0`` to exactly ``t1``, shortening only the final step."""
    y = np.asarray(y0, dtype=complex)
    if dttry is None:
        dttry = (t1 - t0) / 100.0
    stepper = OdeStepper(eps=eps, dttry=dttry)
    t = t0
    tiny = 1e-14 * max(1.0, abs(t1))
    while t1 - t > tiny:
        stepper.dttry = min(stepper.dttry, t1 - t)
        y, t, stepper = ode_step(f, y, t, stepper)
    return y


class RngStream:
    """Seeded uniform random numbers (PCG64)."""

    def __init__(self, seed: int = 0):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def uniform(self) -> float:
        return float(self._gen.random())

    def __repr__(self):
        return f"RngStream(seed={self.seed})"


def uniform(stream: RngStream) -> float:
    """Next draw in ``[0, 1)``."""
    return stream.uniform()
