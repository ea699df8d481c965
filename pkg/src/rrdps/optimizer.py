"""Key-rate maximisation over (mu0, nu_th, epsilon) and distance sweeps.

The grid search is evaluated on whole numpy arrays; everything that does
not depend on distance (Poisson tails, Chernoff deviation tables) is
computed once per configuration and reused along a curve. The best grid
point is then polished by a golden-section search on ``mu0`` using the
scalar ``evaluate_point`` path.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from . import __version__
from .channel import (
    ChannelParams,
    bit_error_rate,
    detection_rate,
    e_src_case_i,
    e_src_case_ii,
    vacuum_bounds_case_ii,
)
from .security import (
    BoundedVacuum,
    CorrelatedCoherent,
    SourceSpec,
    binary_entropy_array,
    deviation_term_table,
    key_rate,
    minus_given_vacuum_upper,
    p_err,
    phase_error_case_i,
    phase_error_case_ii,
    phase_error_correlated_coherent,
    poisson_tail,
    poisson_tails,
)

CASES = ("i", "ii", "coherent")
CSV_COLUMNS = ["l_km", "mu0", "nu_th", "epsilon", "Q", "e_bit", "e_ph", "R"]
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class OptimizeConfig:
    """Search space and physical setting for the key-rate optimisation.

    ``mu_grid`` and ``epsilon_grid`` are ``(min, max, points)`` geometric
    grids; ``mu_grid`` is in per-pulse mean photon number. ``spread`` is the
    relative half-width of the bit-1 intensity range in case ``"ii"``; for
    ``"coherent"`` the per-bit relative half-widths are ``spread0`` and
    ``spread``.
    """

    L: int = 128
    case: str = "i"
    spread: float = 0.01
    spread0: float = 0.0
    channel: ChannelParams = field(default_factory=ChannelParams)
    mu_grid: tuple[float, float, int] = (1e-4, 1e-1, 200)
    nu_th_max: int = 40
    epsilon_grid: tuple[float, float, int] = (1e-15, 1e-3, 13)
    mean_scale: str = "block"
    refine: bool = True

    def __post_init__(self) -> None:
        if self.case not in CASES:
            raise ValueError(f"case must be one of {CASES}, got {self.case!r}")
        if self.L < 3:
            raise ValueError("L must be >= 3 to leave room for a vacuum slot")
        if self.spread < 0 or self.spread0 < 0 or self.spread > 1 or self.spread0 > 1:
            raise ValueError("spreads must lie in [0, 1]")
        lo, hi, n = self.mu_grid
        if not (0 < lo <= hi) or n < 1:
            raise ValueError(f"invalid mu grid {self.mu_grid}")
        lo, hi, n = self.epsilon_grid
        if not (0 < lo <= hi <= 1) or n < 1:
            raise ValueError(f"invalid epsilon grid {self.epsilon_grid}")
        if self.nu_th_max < 0:
            raise ValueError("nu_th_max must be non-negative")
        if self.mean_scale not in ("block", "pulse"):
            raise ValueError("mean_scale must be 'block' or 'pulse'")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mu_grid"] = list(self.mu_grid)
        d["epsilon_grid"] = list(self.epsilon_grid)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizeConfig":
        d = dict(d)
        if "channel" in d and isinstance(d["channel"], dict):
            d["channel"] = ChannelParams(**d["channel"])
        for key in ("mu_grid", "epsilon_grid"):
            if key in d:
                lo, hi, n = d[key]
                d[key] = (float(lo), float(hi), int(n))
        return cls(**d)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @property
    def mus(self) -> np.ndarray:
        lo, hi, n = self.mu_grid
        return np.geomspace(lo, hi, n)

    @property
    def epsilons(self) -> np.ndarray:
        if self.case == "i":
            return np.array([np.nan])
        lo, hi, n = self.epsilon_grid
        return np.geomspace(lo, hi, n)

    @property
    def nus(self) -> np.ndarray:
        return np.arange(min(self.nu_th_max, self.L - 2) + 1)

    def mu1_range(self, mu0: float) -> tuple[float, float]:
        return ((1.0 - self.spread) * mu0, (1.0 + self.spread) * mu0)

    def coherent_mode(self, mu0: float) -> CorrelatedCoherent:
        return CorrelatedCoherent(
            mu_min0=(1.0 - self.spread0) * mu0,
            mu_max0=(1.0 + self.spread0) * mu0,
            mu_min1=(1.0 - self.spread) * mu0,
            mu_max1=(1.0 + self.spread) * mu0,
        )

    def cap_mean(self, mu0: float) -> float:
        """Mean photon number whose Poisson tail defines e_src."""
        if self.case == "i":
            return self.L * mu0
        if self.case == "ii":
            return self.L * max(self.mu1_range(mu0)[1], mu0)
        mu_max = self.coherent_mode(mu0).mu_max
        return self.L * mu_max if self.mean_scale == "block" else mu_max

    def minus_upper(self, mu0: float) -> float:
        if self.case == "i":
            return 0.0
        if self.case == "ii":
            return minus_given_vacuum_upper(vacuum_bounds_case_ii(mu0, self.mu1_range(mu0)))
        return minus_given_vacuum_upper(self.coherent_mode(mu0).vacuum_bounds())


@dataclass(frozen=True)
class KeyRatePoint:
    l: float
    mu0: float
    nu_th: int
    epsilon: float | None
    Q: float
    e_bit: float
    e_src: float
    e_ph: float
    n_vac_upper: float
    R: float
    R_raw: float
    insecure: bool

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class CurveResult:
    points: list[KeyRatePoint]
    config_hash: str
    version: str = __version__

    def to_csv(self, per_block: bool = False, L: int | None = None) -> str:
        buf = io.StringIO()
        buf.write(f"# rrdps {self.version} config_hash={self.config_hash}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        scale = L if per_block and L else 1
        for p in self.points:
            eps = "" if p.epsilon is None else repr(p.epsilon)
            w.writerow([repr(p.l), repr(p.mu0), p.nu_th, eps, repr(p.Q), repr(p.e_bit),
                        repr(p.e_ph), repr(p.R * scale)])
        return buf.getvalue()


# ---------------------------------------------------------------------------
# Scalar evaluation
# ---------------------------------------------------------------------------


def evaluate_point(l: float, mu0: float, nu_th: int, epsilon: float | None, cfg: OptimizeConfig) -> KeyRatePoint:
    """Key rate at one operating point, recording every intermediate."""
    if mu0 < 0:
        raise ValueError(f"mu0 must be non-negative, got {mu0}")
    if not 0 <= nu_th <= cfg.L - 2:
        raise ValueError(f"nu_th must lie in [0, L-2], got {nu_th}")
    if cfg.case != "i" and (epsilon is None or not 0.0 < epsilon <= 1.0):
        raise ValueError(f"case {cfg.case} needs epsilon in (0, 1], got {epsilon!r}")
    ch = cfg.channel.at(l)
    L = cfg.L
    Q = detection_rate(L, mu0, ch.eta_sy, ch.p_d)
    eps = None if cfg.case == "i" else float(epsilon)
    if Q <= 0.0:
        return KeyRatePoint(float(l), mu0, int(nu_th), eps, 0.0, 0.5, 0.0, 0.5, 0.0, 0.0, 0.0, True)
    e_bit = bit_error_rate(L, mu0, ch.eta_sy, ch.p_d, ch.e_sym)

    if cfg.case == "i":
        e_src = e_src_case_i(L, mu0, nu_th)
        pe = phase_error_case_i(e_src, Q, nu_th, L)
    elif cfg.case == "ii":
        rng = cfg.mu1_range(mu0)
        e_src = e_src_case_ii(L, mu0, rng, nu_th)
        spec = SourceSpec(L, nu_th, e_src, BoundedVacuum(vacuum_bounds_case_ii(mu0, rng)))
        pe = phase_error_case_ii(spec, eps, Q)
    else:
        e_src = poisson_tail(cfg.cap_mean(mu0), nu_th)
        spec = SourceSpec(L, nu_th, e_src, cfg.coherent_mode(mu0))
        pe = phase_error_correlated_coherent(spec, eps, Q, cfg.mean_scale)

    raw = key_rate(Q, e_bit, pe.e_ph, ch.f_EC, L, clamp=False)
    return KeyRatePoint(
        l=float(l), mu0=float(mu0), nu_th=int(pe.nu_th_used), epsilon=eps, Q=Q, e_bit=e_bit,
        e_src=e_src, e_ph=pe.e_ph, n_vac_upper=pe.n_vac_upper, R=max(raw, 0.0), R_raw=raw,
        insecure=pe.insecure or raw <= 0.0,
    )


# ---------------------------------------------------------------------------
# Grid search
# ---------------------------------------------------------------------------


class _Tables:
    """Distance-independent arrays for one configuration."""

    def __init__(self, cfg: OptimizeConfig):
        self.cfg = cfg

    @cached_property
    def e_src(self) -> np.ndarray:
        cfg = self.cfg
        nu_top = int(cfg.nus[-1])
        return np.array([poisson_tails(cfg.cap_mean(m), nu_top) for m in cfg.mus])

    @cached_property
    def nu_eff(self) -> np.ndarray:
        """Photon cap actually charged at each grid point (M, V)."""
        nus = np.broadcast_to(self.cfg.nus, self.e_src.shape)
        if self.cfg.case != "coherent":
            return nus
        # the cap is re-derived from e_src; flat (underflowed) tails pick the first index
        return np.array([np.searchsorted(-row, -row, side="left") for row in self.e_src])

    @cached_property
    def n_vac(self) -> np.ndarray:
        """``n_vac_upper`` on the (M, V, E) grid; zero for case i."""
        cfg = self.cfg
        M, V, E = len(cfg.mus), len(cfg.nus), len(cfg.epsilons)
        out = np.zeros((M, V, E))
        if cfg.case == "i":
            return out
        slots = cfg.L - 1 - self.nu_eff  # (M, V)
        for m, mu in enumerate(cfg.mus):
            p_bar = cfg.minus_upper(mu)
            for e, eps in enumerate(cfg.epsilons):
                table = deviation_term_table(p_bar, cfg.L - 1, float(eps))
                out[m, :, e] = slots[m] * p_bar + table[slots[m] - 1]
        return out


def _grid_rates(l: float, cfg: OptimizeConfig, tables: _Tables) -> tuple[np.ndarray, dict]:
    ch = cfg.channel.at(l)
    L = cfg.L
    mus = cfg.mus
    Q = detection_rate(L, mus, ch.eta_sy, ch.p_d)
    safe_Q = np.where(Q > 0, Q, 1.0)
    x = L * mus * ch.eta_sy
    e_bit = np.where(Q > 0, (x * np.exp(-x) * ch.e_sym / 2.0 + L * ch.p_d / 2.0) / safe_Q, 0.5)

    e_src = tables.e_src[:, :, None]
    if cfg.case == "i":
        fail = e_src
    else:
        eps = cfg.epsilons[None, None, :]
        fail = p_err(e_src, eps)
    frac = fail / safe_Q[:, None, None]
    count = tables.nu_eff[:, :, None] + tables.n_vac
    e_ph = np.minimum(frac + (1.0 - frac) * count / (L - 1), 0.5)
    e_ph = np.where(frac >= 1.0, 0.5, e_ph)
    e_ph = np.broadcast_to(e_ph, tables.n_vac.shape)

    head = Q * (1.0 - ch.f_EC * binary_entropy_array(e_bit))
    R = (head[:, None, None] - Q[:, None, None] * binary_entropy_array(e_ph)) / L
    R = np.where((Q > 0)[:, None, None], R, 0.0)
    return R, {"Q": Q, "e_bit": e_bit, "e_ph": e_ph}


def _golden_max(f, a: float, b: float, iters: int = 60) -> tuple[float, float]:
    c, d = b - _GOLDEN * (b - a), a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if b - a <= 1e-9 * max(abs(a), abs(b)):
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def optimize_point(l: float, cfg: OptimizeConfig, tables: _Tables | None = None) -> KeyRatePoint:
    """Best key rate at distance ``l`` over the configured grids.

    Ties go to the smallest mu0, then the smallest nu_th, then the smallest
    epsilon (``np.argmax`` on the C-ordered grid). An all-insecure grid
    yields an ``R = 0`` point flagged insecure.
    """
    tables = tables or _Tables(cfg)
    R, _ = _grid_rates(l, cfg, tables)
    # clamp first so an all-insecure grid ties at R = 0 and falls to index 0
    flat = int(np.argmax(np.maximum(R, 0.0)))
    m, v, e = np.unravel_index(flat, R.shape)
    nu = int(cfg.nus[v])
    eps = None if cfg.case == "i" else float(cfg.epsilons[e])
    best = evaluate_point(l, float(cfg.mus[m]), nu, eps, cfg)

    if cfg.refine and best.R_raw > 0 and len(cfg.mus) > 1:
        lo = cfg.mus[max(m - 1, 0)]
        hi = cfg.mus[min(m + 1, len(cfg.mus) - 1)]
        cache: dict[float, KeyRatePoint] = {}

        def f(mu: float) -> float:
            cache[mu] = evaluate_point(l, mu, nu, eps, cfg)
            return cache[mu].R_raw

        mu_star, r_star = _golden_max(f, float(lo), float(hi))
        if r_star > best.R_raw:
            best = cache[mu_star]
    return best


def curve(distances: Sequence[float], cfg: OptimizeConfig, workers: int = 1) -> CurveResult:
    """Optimised key rate at each distance (must be sorted ascending)."""
    distances = [float(x) for x in distances]
    if any(b < a for a, b in zip(distances, distances[1:])):
        raise ValueError("distances must be sorted ascending")
    tables = _Tables(cfg)
    if distances:
        tables.n_vac  # build shared tables before fanning out
    if workers > 1 and len(distances) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(lambda d: optimize_point(d, cfg, tables), distances))
    else:
        points = [optimize_point(d, cfg, tables) for d in distances]
    return CurveResult(points=points, config_hash=cfg.config_hash())
