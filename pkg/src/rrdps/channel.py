"""Detection and error model linking physical parameters to Q, e_bit and e_src.

The composite transmittance ``eta_sy = eta_ch * eta_d`` is formed by the
caller (see ``ChannelParams.eta_sy``) so each formula below stays a
one-liner that can be checked by eye.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from .security import (
    SourceSpec,
    VacuumBounds,
    phase_error_case_i,
    poisson_tail,
)

DEFAULT_ALPHA = 0.2
DEFAULT_ETA_D = 0.15
DEFAULT_P_D = 5e-7
DEFAULT_E_SYM = 0.05
DEFAULT_F_EC = 1.16


@dataclass(frozen=True)
class ChannelParams:
    l: float = 0.0
    alpha: float = DEFAULT_ALPHA
    eta_d: float = DEFAULT_ETA_D
    p_d: float = DEFAULT_P_D
    e_sym: float = DEFAULT_E_SYM
    f_EC: float = DEFAULT_F_EC

    def __post_init__(self) -> None:
        if self.l < 0:
            raise ValueError(f"distance must be non-negative, got {self.l}")
        if self.alpha < 0:
            raise ValueError(f"loss coefficient must be non-negative, got {self.alpha}")
        for name in ("eta_d", "p_d"):
            x = getattr(self, name)
            if not 0.0 <= x <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {x}")
        if not 0.0 <= self.e_sym <= 0.5:
            raise ValueError(f"e_sym must lie in [0, 0.5], got {self.e_sym}")
        if self.f_EC < 1.0:
            raise ValueError(f"f_EC must be >= 1, got {self.f_EC}")

    @property
    def eta_ch(self) -> float:
        return channel_transmittance(self.l, self.alpha)

    @property
    def eta_sy(self) -> float:
        return self.eta_ch * self.eta_d

    def at(self, l: float) -> "ChannelParams":
        return ChannelParams(**{**asdict(self), "l": float(l)})


@dataclass(frozen=True)
class OperatingPoint:
    """Block length and per-pulse mean photon numbers for the two bit values."""

    L: int
    mu0: float
    mu1_range: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if self.mu0 < 0:
            raise ValueError(f"mu0 must be non-negative, got {self.mu0}")
        lo, hi = self.range
        if lo < 0 or hi < lo:
            raise ValueError(f"invalid mu1 range {self.mu1_range}")

    @property
    def range(self) -> tuple[float, float]:
        return self.mu1_range if self.mu1_range is not None else (self.mu0, self.mu0)


def channel_transmittance(l: float, alpha: float = DEFAULT_ALPHA) -> float:
    """Fibre transmittance ``10^(-alpha l / 10)``."""
    if l < 0:
        raise ValueError(f"distance must be non-negative, got {l}")
    return 10.0 ** (-alpha * l / 10.0)


def detection_rate(L: int, mu0, eta_sy: float, p_d: float):
    """Probability that Bob records exactly one photon in a block.

    Works elementwise when ``mu0`` is an array.
    """
    x = L * np.asarray(mu0, dtype=float) * eta_sy
    Q = x * np.exp(-x) / 2.0 + L * p_d
    return Q if Q.ndim else float(Q)


def bit_error_rate(L: int, mu0, eta_sy: float, p_d: float, e_sym: float):
    x = L * np.asarray(mu0, dtype=float) * eta_sy
    Q = x * np.exp(-x) / 2.0 + L * p_d
    if np.any(Q == 0.0):
        raise ZeroDivisionError("bit error rate undefined when Q = 0")
    e = (x * np.exp(-x) * e_sym / 2.0 + L * p_d / 2.0) / Q
    return e if e.ndim else float(e)


def e_src_case_i(L: int, mu: float, nu_th: int) -> float:
    return poisson_tail(L * mu, nu_th)


def e_src_case_ii(L: int, mu0: float, mu1_range: tuple[float, float], nu_th: int) -> float:
    """Worst-case tail over mean photon numbers in ``{mu0} ∪ mu1_range``.

    The Poisson CDF at fixed ``nu_th`` falls as the mean grows, so the
    minimum of the CDF sits at the largest admissible mean.
    """
    lo, hi = mu1_range
    if hi < lo:
        raise ValueError(f"invalid range {mu1_range}")
    return poisson_tail(L * max(hi, mu0), nu_th)


def vacuum_bounds_case_ii(mu0: float, mu1_range: tuple[float, float]) -> VacuumBounds:
    lo, hi = mu1_range
    if mu0 < 0 or lo < 0 or hi < lo:
        raise ValueError(f"invalid mean photon numbers mu0={mu0}, range={mu1_range}")
    p0 = math.exp(-mu0)
    return VacuumBounds(p_U0=p0, p_L0=p0, p_U1=math.exp(-lo), p_L1=math.exp(-hi))


def tha_nu_th_increase(L: int, mu_out: float) -> int:
    """Extra photons a Trojan-horse probe can add to a block (rounded up)."""
    if mu_out < 0:
        raise ValueError(f"mu_out must be non-negative, got {mu_out}")
    return math.ceil(L * mu_out)


def tha_phase_error_delta(L: int, mu_out: float, base_spec: SourceSpec, Q: float) -> float:
    """Increase of the case-i phase-error bound caused by back-reflected light."""
    extra = tha_nu_th_increase(L, mu_out)
    before = phase_error_case_i(base_spec.e_src, Q, base_spec.nu_th, L).e_ph
    after = phase_error_case_i(base_spec.e_src, Q, base_spec.nu_th + extra, L).e_ph
    return after - before
