"""Security kernel: entropies, Poisson tails, Chernoff machinery and
phase-error-rate bounds for RRDPS with flawed sources.

Everything here is a pure function of its arguments. The vectorised
helpers (``poisson_tails``, ``deviation_term_table``) are what the
optimizer leans on; the scalar functions are the public contract.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Union

import numpy as np
from scipy.special import gammaln, rel_entr

from .errors import ConfigurationError, DegenerateInputError

MAX_BLOCK_LENGTH = 4096
BISECTION_TOL = 1e-12
# Number of points used to guard the choice of average in the Chernoff term.
P_AVE_GRID_POINTS = 50

_BISECTION_STEPS = math.ceil(math.log2(1.0 / BISECTION_TOL)) + 1


def _check_probability(name: str, x: float) -> None:
    if not (0.0 <= x <= 1.0) or math.isnan(x):
        raise ValueError(f"{name} must lie in [0, 1], got {x!r}")


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VacuumBounds:
    """Upper/lower bounds on the vacuum-emission probability per bit value."""

    p_U0: float
    p_L0: float
    p_U1: float
    p_L1: float

    def __post_init__(self) -> None:
        for name in ("p_U0", "p_L0", "p_U1", "p_L1"):
            _check_probability(name, getattr(self, name))
        if self.p_L0 > self.p_U0 or self.p_L1 > self.p_U1:
            raise ValueError(f"lower bound exceeds upper bound in {self}")

    def as_dict(self) -> dict:
        return {"p_U0": self.p_U0, "p_L0": self.p_L0, "p_U1": self.p_U1, "p_L1": self.p_L1}


@dataclass(frozen=True)
class IdenticalVacuum:
    """Both bit values have the same vacuum probability on every pulse."""


@dataclass(frozen=True)
class BoundedVacuum:
    bounds: VacuumBounds


@dataclass(frozen=True)
class CorrelatedCoherent:
    """Coherent pulses whose per-pulse mean photon number for bit ``b``
    lies in ``[mu_min_b, mu_max_b]`` for every internal source state."""

    mu_min0: float
    mu_max0: float
    mu_min1: float
    mu_max1: float

    def __post_init__(self) -> None:
        for b in (0, 1):
            lo, hi = getattr(self, f"mu_min{b}"), getattr(self, f"mu_max{b}")
            if lo < 0 or hi < lo:
                raise ValueError(f"invalid mean-photon range for bit {b}: [{lo}, {hi}]")

    @property
    def mu_max(self) -> float:
        return max(self.mu_max0, self.mu_max1)

    def vacuum_bounds(self) -> VacuumBounds:
        return VacuumBounds(
            p_U0=math.exp(-self.mu_min0),
            p_L0=math.exp(-self.mu_max0),
            p_U1=math.exp(-self.mu_min1),
            p_L1=math.exp(-self.mu_max1),
        )


SourceMode = Union[IdenticalVacuum, BoundedVacuum, CorrelatedCoherent]


@dataclass(frozen=True)
class SourceSpec:
    """Block-level source description.

    Attributes:
        L: pulses per block.
        nu_th: photon-number threshold for the whole block.
        e_src: probability that the block carries more than ``nu_th`` photons.
        mode: vacuum-probability model for the two bit values.
    """

    L: int
    nu_th: int
    e_src: float
    mode: SourceMode = field(default_factory=IdenticalVacuum)

    def __post_init__(self) -> None:
        if int(self.L) != self.L or self.L < 2:
            raise ValueError(f"L must be an integer >= 2, got {self.L!r}")
        if self.L > MAX_BLOCK_LENGTH:
            raise ConfigurationError(f"L={self.L} exceeds the supported cap {MAX_BLOCK_LENGTH}")
        if int(self.nu_th) != self.nu_th or self.nu_th < 0:
            raise ValueError(f"nu_th must be a non-negative integer, got {self.nu_th!r}")
        if self.nu_th >= self.L:
            raise ConfigurationError(f"nu_th={self.nu_th} must be below L={self.L}")
        _check_probability("e_src", self.e_src)


@dataclass(frozen=True)
class SuperpositionVacuum:
    p_plus: float
    p_minus: float
    d: float


@dataclass(frozen=True)
class PhaseErrorBound:
    """Upper bound on the phase error rate plus the pieces it was built from.

    ``term_src`` is ``e_src/Q`` (case i) or ``p_err/Q``; ``insecure`` is set
    when that fraction reaches 1 and the bound is vacuous.
    """

    e_ph: float
    term_src: float
    n_vac_upper: float
    nu_th_used: int
    insecure: bool = False


# ---------------------------------------------------------------------------
# Entropy and photon statistics
# ---------------------------------------------------------------------------


def binary_entropy(x: float) -> float:
    """Binary Shannon entropy in bits, with h(0) = h(1) = 0."""
    _check_probability("x", x)
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def binary_entropy_array(x: np.ndarray) -> np.ndarray:
    """Elementwise ``binary_entropy`` for arrays already known to be in [0, 1]."""
    x = np.asarray(x, dtype=float)
    inner = (x > 0.0) & (x < 1.0)
    xs = np.where(inner, x, 0.5)
    out = -xs * np.log2(xs) - (1.0 - xs) * np.log2(1.0 - xs)
    return np.where(inner, out, 0.0)


def poisson_tails(mean: float, nu_max: int) -> np.ndarray:
    """Return ``P[N > nu]`` for ``nu = 0..nu_max`` with ``N ~ Poisson(mean)``.

    Tails above the mode are accumulated from a fixed far end downwards so
    that values far below machine epsilon keep full relative precision, and
    every entry is bit-identical whatever ``nu_max`` is requested.
    """
    if mean < 0 or math.isnan(mean):
        raise ValueError(f"mean must be non-negative, got {mean!r}")
    if int(nu_max) != nu_max or nu_max < 0:
        raise ValueError(f"nu_max must be a non-negative integer, got {nu_max!r}")
    nu_max = int(nu_max)
    if mean == 0.0:
        return np.zeros(nu_max + 1)

    top_nu = max(nu_max, MAX_BLOCK_LENGTH)
    n = np.arange(top_nu + 2)
    log_pmf = -mean + n * math.log(mean) - gammaln(n + 1)
    pmf = np.exp(log_pmf)
    tails = 1.0 - np.cumsum(pmf[: top_nu + 1])

    start = math.floor(mean)  # first nu with nu + 1 > mean
    if start <= top_nu:
        # series sum_{n > top_nu} pmf(n) / pmf(top_nu + 1); ratios are < 1 here
        k = top_nu + 1
        series, term = 1.0, 1.0
        while True:
            k += 1
            term *= mean / k
            series += term
            if term < 1e-17 * series:
                break
        top = math.exp(log_pmf[top_nu + 1] + math.log(series))
        # tails[nu] = tails[nu + 1] + pmf[nu + 1], summed from the far end
        acc = np.cumsum(np.concatenate(([top], pmf[top_nu:start:-1])))
        tails[start:] = acc[::-1]
    return np.clip(tails[: nu_max + 1], 0.0, 1.0)


def poisson_tail(mean: float, nu_th: int) -> float:
    """``P[N > nu_th]`` for ``N ~ Poisson(mean)``."""
    return float(poisson_tails(mean, nu_th)[-1])


# ---------------------------------------------------------------------------
# Vacuum superposition probabilities
# ---------------------------------------------------------------------------


def superposition_vacuum(p0: float, p1: float, d: float) -> SuperpositionVacuum:
    """Vacuum probabilities of the (|Psi_0> +- |Psi_1>) superpositions.

    ``d`` is the overlap parameter; ``d = 2`` is only meaningful for
    ``p0 == p1``, where the minus branch is defined as 0.
    """
    _check_probability("p0", p0)
    _check_probability("p1", p1)
    if d <= -2.0:
        raise ZeroDivisionError("overlap d = -2 makes the plus branch undefined")
    if d > 2.0:
        raise ValueError(f"overlap d must be <= 2, got {d}")
    s0, s1 = math.sqrt(p0), math.sqrt(p1)
    p_plus = (s0 + s1) ** 2 / (2.0 + d)
    if d == 2.0:
        if p0 != p1:
            raise ZeroDivisionError("overlap d = 2 requires p0 == p1")
        p_minus = 0.0
    else:
        p_minus = (s0 - s1) ** 2 / (2.0 - d)
    return SuperpositionVacuum(p_plus=p_plus, p_minus=p_minus, d=d)


def minus_given_vacuum(p0: float, p1: float) -> float:
    """Probability of the X-basis outcome ``-`` given a vacuum emission."""
    _check_probability("p0", p0)
    _check_probability("p1", p1)
    if p0 + p1 == 0.0:
        raise DegenerateInputError("p0 + p1 must be positive")
    # (sqrt p0 - sqrt p1)^2 <= p0 + p1; the clamp only removes rounding
    return min((math.sqrt(p0) - math.sqrt(p1)) ** 2 / (2.0 * (p0 + p1)), 0.5)


def minus_given_vacuum_upper(b: VacuumBounds) -> float:
    """Largest ``minus_given_vacuum`` over the box of admissible (p0, p1).

    The ratio only depends on p1/p0, so the extremes sit at the two
    corners (p_U0, p_L1) and (p_L0, p_U1).
    """
    ratios = []
    for a, c in ((b.p_U0, b.p_L1), (b.p_L0, b.p_U1)):
        if a + c > 0.0:
            ratios.append((math.sqrt(a) - math.sqrt(c)) ** 2 / (a + c))
    if not ratios:
        raise DegenerateInputError("both corner denominators vanish")
    return min(0.5 * max(ratios), 0.5)


# ---------------------------------------------------------------------------
# Chernoff machinery
# ---------------------------------------------------------------------------


def kl_bernoulli(p, q):
    """Bernoulli relative entropy D(p||q) in nats (vectorised)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    out = rel_entr(p, q) + rel_entr(1.0 - p, 1.0 - q)
    return out if out.ndim else float(out)


def chernoff_epsilon(p_ave: float, t: float, N: int) -> float:
    """Failure probability ``exp(-D(p_ave + t || p_ave) N)``."""
    if not (0.0 < p_ave < 1.0):
        raise ValueError(f"p_ave must lie in (0, 1), got {p_ave!r}")
    if t < 0.0 or t > 1.0 - p_ave + 1e-15:
        raise ValueError(f"t must lie in [0, 1 - p_ave], got {t!r}")
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N!r}")
    a = min(p_ave + t, 1.0)
    return math.exp(-kl_bernoulli(a, p_ave) * N)


def _deviation(p: np.ndarray, N: np.ndarray, log_inv_eps: float) -> np.ndarray:
    """Vectorised bisection for the smallest t with N D(p+t||p) >= log(1/eps)."""
    p, N = np.broadcast_arrays(np.asarray(p, dtype=float), np.asarray(N, dtype=float))
    lo = np.zeros(p.shape)
    hi = 1.0 - p
    if log_inv_eps <= 0.0:
        return lo
    positive = p > 0.0
    ps = np.where(positive, p, 0.5)  # placeholder avoids log(0) warnings
    reach = N * np.log(1.0 / ps) >= log_inv_eps  # D(1||p) = ln(1/p)
    for _ in range(_BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        ok = N * kl_bernoulli(np.minimum(ps + mid, 1.0), ps) >= log_inv_eps
        hi = np.where(ok, mid, hi)
        lo = np.where(ok, lo, mid)
    t = np.where(reach, hi, 1.0 - p)
    return np.where(positive, t, 0.0)


def chernoff_deviation(p_ave_upper: float, N: int, epsilon: float) -> float:
    """Smallest deviation t in [0, 1 - p] with ``chernoff_epsilon <= epsilon``.

    Returns ``1 - p`` when even the full range cannot reach ``epsilon`` and
    0 when ``p`` is 0 (the divergence is infinite for any t > 0).
    """
    _check_probability("p_ave_upper", p_ave_upper)
    if p_ave_upper == 1.0:
        return 0.0
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N!r}")
    if not (0.0 < epsilon <= 1.0):
        raise ValueError(f"epsilon must lie in (0, 1], got {epsilon!r}")
    return float(_deviation(p_ave_upper, N, -math.log(epsilon)))


@lru_cache(maxsize=65536)
def _deviation_term_table_cached(p_bar: float, n_max: int, epsilon: float) -> np.ndarray:
    N = np.arange(1, n_max + 1, dtype=float)
    if p_bar == 0.0 or epsilon >= 1.0:
        table = np.zeros(n_max)
    else:
        grid = p_bar * np.arange(1, P_AVE_GRID_POINTS + 1) / P_AVE_GRID_POINTS
        t = _deviation(grid[:, None], N[None, :], -math.log(epsilon))
        t_eff = t.max(axis=0)  # last grid row is p_bar itself
        table = np.maximum.accumulate(N * t_eff)
    table.flags.writeable = False
    return table


def deviation_term_table(p_bar: float, n_max: int, epsilon: float) -> np.ndarray:
    """``out[n-1] = max_{1 <= N <= n} N t(N)`` for ``n = 1..n_max``.

    ``t(N)`` is the Chernoff deviation maximised over a grid of averages in
    ``(0, p_bar]``, so the result stays conservative even where the
    deviation is not monotone in the average.
    """
    if n_max < 1:
        raise ConfigurationError("need at least one vacuum slot (L - 1 - nu_th >= 1)")
    if not (0.0 < epsilon <= 1.0):
        raise ValueError(f"epsilon must lie in (0, 1], got {epsilon!r}")
    return _deviation_term_table_cached(float(p_bar), int(n_max), float(epsilon))


def n_vac_count_bound(L: int, nu_th: int, bounds: VacuumBounds, epsilon: float) -> float:
    slots = L - 1 - nu_th
    if slots < 1:
        raise ConfigurationError(f"nu_th={nu_th} leaves no vacuum slots for L={L}")
    p_bar = minus_given_vacuum_upper(bounds)
    return slots * p_bar + float(deviation_term_table(p_bar, slots, epsilon)[-1])


def n_vac_upper(spec: SourceSpec, epsilon: float) -> float:
    """Upper bound on the number of ``-`` outcomes among vacuum slots."""
    if not isinstance(spec.mode, BoundedVacuum):
        raise ConfigurationError("n_vac_upper needs a BoundedVacuum source")
    return n_vac_count_bound(spec.L, spec.nu_th, spec.mode.bounds, epsilon)


# ---------------------------------------------------------------------------
# Phase error rate
# ---------------------------------------------------------------------------


def _check_Q(Q: float) -> None:
    if not (0.0 < Q <= 1.0):
        raise ValueError(f"Q must lie in (0, 1], got {Q!r}")


def _assemble(frac: float, count: float, L: int, nu_th: int, n_vac: float) -> PhaseErrorBound:
    if frac >= 1.0:
        return PhaseErrorBound(0.5, frac, n_vac, nu_th, insecure=True)
    e_ph = frac + (1.0 - frac) * count / (L - 1)
    return PhaseErrorBound(min(e_ph, 0.5), frac, n_vac, nu_th)


def phase_error_case_i(e_src: float, Q: float, nu_th: int, L: int) -> PhaseErrorBound:
    """Phase-error bound when both bit values share their vacuum probability."""
    _check_probability("e_src", e_src)
    _check_Q(Q)
    if L < 2:
        raise ValueError(f"L must be >= 2, got {L}")
    return _assemble(e_src / Q, nu_th, L, nu_th, 0.0)


def p_err(e_src: float, epsilon: float) -> float:
    """Union of the photon-cap and Chernoff failure events."""
    return e_src + epsilon - e_src * epsilon


def phase_error_case_ii(spec: SourceSpec, epsilon: float, Q: float) -> PhaseErrorBound:
    """Phase-error bound with per-bit vacuum probabilities known only within bounds."""
    _check_Q(Q)
    if not (0.0 < epsilon <= 1.0):
        raise ValueError(f"epsilon must lie in (0, 1], got {epsilon!r}")
    n_vac = n_vac_upper(spec, epsilon)
    frac = p_err(spec.e_src, epsilon) / Q
    return _assemble(frac, spec.nu_th + n_vac, spec.L, spec.nu_th, n_vac)


def coherent_photon_cap(L: int, mu_max: float, e_src: float, mean_scale: str = "block") -> int:
    """Smallest photon count whose Poisson tail does not exceed ``e_src``.

    ``mean_scale="block"`` treats ``mu_max`` as a per-pulse mean and uses
    ``L * mu_max`` for the block; ``"pulse"`` uses ``mu_max`` unscaled.
    """
    if mean_scale == "block":
        mean = L * mu_max
    elif mean_scale == "pulse":
        mean = mu_max
    else:
        raise ValueError(f"mean_scale must be 'block' or 'pulse', got {mean_scale!r}")
    tails = poisson_tails(mean, L - 1)
    hits = np.nonzero(tails <= e_src)[0]
    if hits.size == 0 or hits[0] >= L - 1:
        raise ConfigurationError(
            f"no photon cap below L-1={L - 1} reaches e_src={e_src:g} for mean {mean:g}"
        )
    return int(hits[0])


def phase_error_correlated_coherent(
    spec: SourceSpec, epsilon: float, Q: float, mean_scale: str = "block"
) -> PhaseErrorBound:
    """Phase-error bound for classically correlated coherent pulses.

    The photon cap is re-derived from ``spec.e_src`` and the largest mean
    photon number; ``spec.nu_th`` is not consulted.
    """
    mode = spec.mode
    if not isinstance(mode, CorrelatedCoherent):
        raise ConfigurationError("phase_error_correlated_coherent needs a CorrelatedCoherent source")
    _check_Q(Q)
    if not (0.0 < epsilon <= 1.0):
        raise ValueError(f"epsilon must lie in (0, 1], got {epsilon!r}")
    nu_max = coherent_photon_cap(spec.L, mode.mu_max, spec.e_src, mean_scale)
    n_vac = n_vac_count_bound(spec.L, nu_max, mode.vacuum_bounds(), epsilon)
    frac = p_err(spec.e_src, epsilon) / Q
    return _assemble(frac, nu_max + n_vac, spec.L, nu_max, n_vac)


# ---------------------------------------------------------------------------
# Key rate
# ---------------------------------------------------------------------------


def key_rate(Q: float, e_bit: float, e_ph: float, f_EC: float, L: int, clamp: bool = True) -> float:
    """Secret bits per transmitted pulse; negative raw values clamp to 0."""
    _check_probability("Q", Q)
    for name, x in (("e_bit", e_bit), ("e_ph", e_ph)):
        if not (0.0 <= x <= 0.5):
            raise ValueError(f"{name} must lie in [0, 0.5], got {x!r}")
    if f_EC < 1.0:
        raise ValueError(f"f_EC must be >= 1, got {f_EC}")
    if L < 2:
        raise ValueError(f"L must be >= 2, got {L}")
    raw = Q * (1.0 - f_EC * binary_entropy(e_bit) - binary_entropy(e_ph)) / L
    return max(raw, 0.0) if clamp else raw
