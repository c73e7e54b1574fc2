"""Luenberger observers for the standard and the resilient estimation loop.

Gains come from the filter Riccati equation with unit weights on the
shifted matrix ``A + alpha I``, which places every observable pole left of
``-alpha``.  The error-system analysis checks the pole-zero cancellation
of the zero mode when attacked outputs are replaced by cluster surrogates.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import GridMismatch, NotDetectable, SolveFailed
from .integrate import rk4_maps, uniform_step
from .lti import LtiSystem, default_tol_zero, observability_rank, stable_subspace

# fraction of the slowest unobservable decay rate used as the shift when
# that rate is below the requested margin
SHIFT_BACKOFF = 0.9


@dataclass(frozen=True)
class ObserverDesign:
    L: np.ndarray
    C_used: np.ndarray
    stability_margin: float  # achieved: -max Re of the assigned poles
    requested_margin: float
    shift: float
    zero_mode_assigned: bool
    poles: np.ndarray = field(repr=False)

    @property
    def q(self):
        return self.C_used.shape[0]


def _riccati_gain(A, C, alpha):
    n = A.shape[0]
    if C.shape[0] == 0:
        return np.zeros((n, 0))
    As = A + alpha * np.eye(n)
    try:
        P = sla.solve_continuous_are(As.T, C.T, np.eye(n), np.eye(C.shape[0]))
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolveFailed(f"filter Riccati equation failed: {exc}") from None
    res = As @ P + P @ As.T - P @ C.T @ C @ P + np.eye(n)
    if not np.all(np.isfinite(P)) or np.linalg.norm(res) > 1e-6 * max(1.0, np.linalg.norm(P)) ** 2:
        raise SolveFailed("filter Riccati solution has a large residual")
    return P @ C.T


def _shift_for(margin, unobservable, tol_zero):
    """Largest usable shift given the unobservable (stable) eigenvalues."""
    stable = [lam for lam in unobservable if abs(lam) > tol_zero]
    if not stable:
        return float(margin)
    slowest = -max(lam.real for lam in stable)
    return float(min(margin, SHIFT_BACKOFF * slowest))


def design_gain(sys, C_used, margin=0.1, tol=1e-9, allow_unobservable_zero_mode=False, tol_zero=None):
    """Observer gain ``L`` for ``(A, C_used)`` with requested decay ``margin``.

    Unobservable stable modes stay where they are and cap the achievable
    margin.  An unobservable zero mode makes the pair undetectable, which
    raises ``NotDetectable`` unless ``allow_unobservable_zero_mode`` is set;
    then the gain is designed on the stable subspace and that mode is left
    unassigned.
    """
    A = sys.Acl if isinstance(sys, LtiSystem) else np.atleast_2d(np.asarray(sys, float))
    n = A.shape[0]
    C_used = np.asarray(C_used, float).reshape(-1, n)
    if not margin >= 0:
        raise ValueError(f"margin must be >= 0, got {margin}")
    tol_zero = default_tol_zero(A) if tol_zero is None else tol_zero

    obs = observability_rank(A, C_used, tol=tol)
    unobs = obs.unobservable_eigenvalues
    growing = [lam for lam in unobs if lam.real > -tol_zero and abs(lam) > tol_zero]
    if growing:
        raise NotDetectable(f"unobservable eigenvalues with Re >= 0: {np.array(growing)}")
    zero_unobs = any(abs(lam) <= tol_zero for lam in unobs)
    if zero_unobs and not allow_unobservable_zero_mode:
        raise NotDetectable("the zero mode is not observable from the given measurements")

    alpha = _shift_for(margin, unobs, tol_zero)
    if zero_unobs:
        dec = stable_subspace(A, tol_zero)
        L = dec.U_bar @ _riccati_gain(dec.A_bar, C_used @ dec.U_bar, alpha)
    else:
        L = _riccati_gain(A, C_used, alpha)

    poles = np.linalg.eigvals(A - L @ C_used)
    assigned = poles[np.abs(poles) > tol_zero] if zero_unobs else poles
    achieved = float(-assigned.real.max()) if assigned.size else float("inf")
    return ObserverDesign(L, C_used.copy(), achieved, float(margin), alpha, not zero_unobs, poles)


@dataclass(frozen=True)
class ObserverRun:
    t: np.ndarray
    x_hat: np.ndarray
    y_hat: np.ndarray
    r: np.ndarray  # y_hat - y


def run_observer(sys, design, y_stream, x_hat0=None, t=None, dt=None):
    """Integrate ``dxhat/dt = A xhat + L (y - C xhat)`` over a sampled ``y``.

    ``y_stream`` is ``(N, q)`` on a uniform grid.  Midpoint samples needed by
    RK4 are linear interpolants.
    """
    A = sys.Acl if isinstance(sys, LtiSystem) else np.asarray(sys, float)
    n = A.shape[0]
    Y = np.atleast_2d(np.asarray(y_stream, float))
    if Y.shape[1] != design.q:
        raise GridMismatch(f"y_stream has {Y.shape[1]} channels, the design expects {design.q}")
    if t is None:
        if dt is None:
            raise GridMismatch("either the time grid or dt is required")
        t = np.arange(Y.shape[0]) * float(dt)
    t = np.asarray(t, float)
    if t.shape[0] != Y.shape[0]:
        raise GridMismatch(f"time grid has {t.shape[0]} points, y_stream {Y.shape[0]}")
    h = uniform_step(t) if t.size > 1 else (dt or 0.0)
    if t.size > 1 and (h is None or (dt is not None and not np.isclose(h, dt, rtol=1e-9, atol=0.0))):
        raise GridMismatch("y_stream is not sampled on the simulator's uniform grid")
    x = np.zeros(n) if x_hat0 is None else np.asarray(x_hat0, float).copy()
    if x.shape != (n,):
        raise GridMismatch(f"x_hat0 has shape {x.shape}, expected ({n},)")

    C = design.C_used
    L = design.L
    X = np.empty((t.size, n))
    X[0] = x
    if t.size > 1:
        mp = rk4_maps(A - L @ C, L, h)
        in0 = Y[:-1] @ mp.G0.T
        inm = (0.5 * (Y[:-1] + Y[1:])) @ mp.Gm.T
        in1 = Y[1:] @ mp.G1.T
        drive = in0 + inm + in1
        for k in range(t.size - 1):
            x = mp.T @ x + drive[k]
            X[k + 1] = x
    Yh = X @ C.T
    return ObserverRun(t, X, Yh, Yh - Y)


@dataclass(frozen=True)
class ErrorSystemPoles:
    poles: np.ndarray
    max_real_part: float
    zero_mode_residue: float
    zero_mode_cancelled: bool


def error_system_poles(sys, Pi, dec=None, tol=1e-8):
    """Poles of ``g_e(s) = (I - Pi^T Pi) C (sI - A)^{-1}`` and its residue at 0.

    The zero mode is dropped from the pole list when the projected output
    direction ``(I - Pi^T Pi) C u_max`` is below ``tol * max(||C||, 1)``.
    """
    A, C = sys.Acl, sys.C
    Pi = np.asarray(Pi, float)
    dec = dec or stable_subspace(sys)
    Pbar = np.eye(C.shape[0]) - Pi.T @ Pi
    lam = np.linalg.eigvals(A)
    if dec.z == 0:
        return ErrorSystemPoles(lam, float(lam.real.max()) if lam.size else -np.inf, 0.0, True)
    w = Pbar @ C @ dec.u_max
    residue = float(np.linalg.norm(w @ dec.v_max.T, 2))
    cancelled = np.linalg.norm(w) <= tol * max(np.linalg.norm(C, 2), 1.0)
    if cancelled:
        idx = np.argsort(np.abs(lam))[dec.z:]
        lam = lam[np.sort(idx)]
    mrp = float(lam.real.max()) if lam.size else -np.inf
    return ErrorSystemPoles(lam, mrp, residue, bool(cancelled))
