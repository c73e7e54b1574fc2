"""Coordinated false-data injection on measurement channels.

The attacked index set is an input (detection and localization happen
elsewhere).  ``inject`` adds the attack signals to the attacked channels
inside the attack window and leaves everything else untouched.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigInvalid
from .lti import observability_rank

SIGNAL_KINDS = ("bias", "ramp", "sinusoid")


@dataclass(frozen=True)
class AttackSignal:
    """``bias``: amplitude; ``ramp``: amplitude + slope*(t - t_start);
    ``sinusoid``: amplitude*sin(2 pi frequency (t - t_start) + phase)."""

    kind: str = "bias"
    amplitude: float = 0.0
    slope: float = 0.0
    frequency: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in SIGNAL_KINDS:
            raise ConfigInvalid(f"attack signal kind must be one of {SIGNAL_KINDS}, got {self.kind!r}")
        for name in ("amplitude", "slope", "frequency", "phase"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigInvalid(f"attack signal {name} must be finite")

    def value(self, tau):
        if self.kind == "bias":
            return self.amplitude
        if self.kind == "ramp":
            return self.amplitude + self.slope * tau
        return self.amplitude * math.sin(2.0 * math.pi * self.frequency * tau + self.phase)

    def values(self, tau):
        """Vectorized ``value`` over an array of elapsed times."""
        tau = np.asarray(tau, float)
        if self.kind == "bias":
            return np.full(tau.shape, self.amplitude)
        if self.kind == "ramp":
            return self.amplitude + self.slope * tau
        return self.amplitude * np.sin(2.0 * np.pi * self.frequency * tau + self.phase)


@dataclass(frozen=True)
class AttackScenario:
    signals: dict  # measurement index -> AttackSignal
    t_start: float = 0.0
    t_end: float = math.inf
    m: int = None  # number of measurements, for index validation
    attacked: tuple = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "attacked", tuple(sorted(int(i) for i in self.signals)))
        if not self.t_start < self.t_end:
            raise ConfigInvalid(f"attack window must satisfy t_start < t_end, got [{self.t_start}, {self.t_end}]")
        if self.m is not None:
            bad = [i for i in self.attacked if not 0 <= i < self.m]
            if bad:
                raise ConfigInvalid(f"attacked indices {bad} outside 0..{self.m - 1}")

    def active(self, t):
        return self.t_start <= t <= self.t_end

    def vector(self, t, m):
        """Full-length ``(e_A)^T y_a(t)``."""
        out = np.zeros(m)
        if self.active(t):
            tau = t - self.t_start
            for i, sig in self.signals.items():
                out[i] = sig.value(tau)
        return out


def inject(y, scenario, t):
    """Measurements received by the control center at time ``t``."""
    y = np.asarray(y, float)
    if scenario is None or not scenario.active(t):
        return y.copy()
    return y + scenario.vector(t, y.shape[0])


@dataclass(frozen=True)
class Classification:
    status: str  # "Observable" | "RequiresAugmentation"
    trusted: tuple
    attacked: tuple
    rank: int
    unobservable_eigenvalues: np.ndarray

    @property
    def requires_augmentation(self):
        return self.status == "RequiresAugmentation"


def split_measurements(C, attacked):
    """Return ``(C_1, C_A, trusted, attacked)``."""
    C = np.asarray(C, float)
    attacked = sorted(set(int(i) for i in attacked))
    aset = set(attacked)
    trusted = [i for i in range(C.shape[0]) if i not in aset]
    return C[trusted], C[attacked], trusted, attacked


def classify(sys, C, attacked, tol=1e-9):
    """Whether the trusted measurements alone still make the plant observable."""
    C1, _, trusted, attacked = split_measurements(C, attacked)
    res = observability_rank(sys.Acl, C1, tol=tol)
    status = "Observable" if res.is_observable else "RequiresAugmentation"
    return Classification(status, tuple(trusted), tuple(attacked), res.rank, res.unobservable_eigenvalues)
