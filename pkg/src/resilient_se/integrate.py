"""Classic fixed-step RK4 for linear systems with a known input signal.

For ``dx/dt = F x + G u(t)`` one RK4 step is linear in ``x`` and in the
three input samples ``u(t)``, ``u(t + h/2)``, ``u(t + h)``::

    x+ = T x + G0 u(t) + Gm u(t + h/2) + G1 u(t + h)

The maps are obtained by pushing identity blocks through the stage
formulas, so the result is the RK4 step itself and not an approximation
of it.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def rk4_step(F, G, h, x, u0, um, u1):
    k1 = F @ x + G @ u0
    k2 = F @ (x + 0.5 * h * k1) + G @ um
    k3 = F @ (x + 0.5 * h * k2) + G @ um
    k4 = F @ (x + h * k3) + G @ u1
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass(frozen=True)
class Rk4Maps:
    T: np.ndarray
    G0: np.ndarray
    Gm: np.ndarray
    G1: np.ndarray
    h: float

    @property
    def spectral_radius(self):
        if self.T.size == 0:
            return 0.0
        return float(np.max(np.abs(np.linalg.eigvals(self.T))))


def rk4_maps(F, G, h):
    F = np.atleast_2d(np.asarray(F, float))
    n = F.shape[0]
    G = np.asarray(G, float)
    if G.ndim != 2:
        G = G.reshape(n, -1)
    p = G.shape[1]
    zx, zu = np.zeros((n, p)), np.zeros((p, p))
    T = rk4_step(F, G, h, np.eye(n), np.zeros((p, n)), np.zeros((p, n)), np.zeros((p, n)))
    G0 = rk4_step(F, G, h, zx, np.eye(p), zu, zu)
    Gm = rk4_step(F, G, h, zx, zu, np.eye(p), zu)
    G1 = rk4_step(F, G, h, zx, zu, zu, np.eye(p))
    return Rk4Maps(T, G0, Gm, G1, float(h))


def uniform_step(t, rtol=1e-6):
    """Step of a uniform time grid, or ``None`` if ``t`` is not one."""
    t = np.asarray(t, float)
    if t.ndim != 1 or t.size < 2:
        return None
    d = np.diff(t)
    if d[0] <= 0 or not np.allclose(d, d[0], rtol=rtol, atol=0.0):
        return None
    return float(d[0])
