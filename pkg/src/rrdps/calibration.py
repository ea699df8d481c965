"""Estimating vacuum-emission bounds for the two bit values.

Two routes are provided: an off-line detector-decoy measurement (two
attenuations in front of a threshold detector) and on-line intensity
monitoring of a coherent source. ``tha_adjust`` folds in the attenuation
of Trojan-horse light leaking back out of the transmitter.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, InconsistentDataError
from .security import VacuumBounds


@dataclass(frozen=True)
class DecoyRecord:
    """Counts from a two-setting detector-decoy run for one bit value.

    Setting 1 uses the larger transmittance (``eta1 > eta2``). ``delta1`` and
    ``delta2`` are finite-size slacks added to / subtracted from the
    no-click counts, whichever direction loosens the bound.
    """

    eta1: float
    eta2: float
    N1: int
    N2: int
    N1_vac: float
    N2_vac: float
    eta_d: float
    p_d: float
    delta1: float = 0.0
    delta2: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 < self.eta2 < self.eta1 <= 1.0:
            raise ValueError(f"need 0 < eta2 < eta1 <= 1, got eta1={self.eta1}, eta2={self.eta2}")
        for j in (1, 2):
            N, vac = getattr(self, f"N{j}"), getattr(self, f"N{j}_vac")
            if N <= 0 or not 0 <= vac <= N:
                raise ValueError(f"setting {j}: need 0 <= N_vac <= N and N > 0, got {vac}/{N}")
            if getattr(self, f"delta{j}") < 0:
                raise ValueError("finite-size slack must be non-negative")
        if not 0.0 < self.eta_d <= 1.0:
            raise ValueError(f"eta_d must lie in (0, 1], got {self.eta_d}")
        if not 0.0 <= self.p_d < 1.0:
            raise ValueError(f"p_d must lie in [0, 1), got {self.p_d}")


@dataclass(frozen=True)
class DecoyEstimate:
    p_L: float
    p_U: float
    clamped: bool = False


@dataclass(frozen=True)
class MonitorRecord:
    """Power-meter intervals for the pulses sent with one bit value."""

    eta: float
    beta_minus: Sequence[float]
    beta_plus: Sequence[float]

    def __post_init__(self) -> None:
        if not 0.0 < self.eta < 1.0:
            raise ValueError(f"tap transmittance must lie in (0, 1), got {self.eta}")
        lo = np.asarray(self.beta_minus, dtype=float)
        hi = np.asarray(self.beta_plus, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1 or lo.size == 0:
            raise ValueError("beta_minus and beta_plus must be equal-length non-empty sequences")
        if np.any(lo < 0) or np.any(hi < lo):
            raise ValueError("each interval needs 0 <= beta_minus <= beta_plus")


def finite_size_slack(N: int, confidence_epsilon: float) -> float:
    """Hoeffding deviation ``sqrt(N ln(1/eps) / 2)`` for a sum of N bits."""
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if not 0.0 < confidence_epsilon <= 1.0:
        raise ValueError(f"confidence_epsilon must lie in (0, 1], got {confidence_epsilon}")
    return math.sqrt(N * math.log(1.0 / confidence_epsilon) / 2.0)


def expected_vacuum_fraction(pn, eta_j: float, eta_d: float, p_d: float) -> float:
    """Asymptotic no-click fraction for photon-number distribution ``pn``."""
    pn = np.asarray(pn, dtype=float)
    if np.any(pn < 0) or abs(pn.sum() - 1.0) > 1e-11:
        raise ValueError("pn must be a probability vector (truncated tail < 1e-12)")
    x = 1.0 - eta_j * eta_d
    return float((1.0 - p_d) * np.sum(pn * x ** np.arange(pn.size)))


def decoy_vacuum_bounds(rec: DecoyRecord) -> DecoyEstimate:
    """Lower and upper bound on p(0) from two attenuation settings."""
    x1 = 1.0 - rec.eta_d * rec.eta1
    x2 = 1.0 - rec.eta_d * rec.eta2
    keep = 1.0 - rec.p_d
    # p_U grows with every N_vac; p_L grows with N1_vac and shrinks with N2_vac
    up1 = (rec.N1_vac + rec.delta1) / rec.N1
    up2 = (rec.N2_vac + rec.delta2) / rec.N2
    lo1 = (rec.N1_vac - rec.delta1) / rec.N1
    lo2 = (rec.N2_vac + rec.delta2) / rec.N2

    denom = rec.eta_d * (rec.eta2 - rec.eta1) * keep
    p_L = (x1 * lo2 - x2 * lo1) / denom
    p_U = min(up1, up2) / keep

    clamped = not (0.0 <= p_L <= 1.0 and 0.0 <= p_U <= 1.0)
    p_L = min(max(p_L, 0.0), 1.0)
    p_U = min(max(p_U, 0.0), 1.0)
    if p_L > p_U:
        raise InconsistentDataError(
            f"lower bound {p_L:.6g} exceeds upper bound {p_U:.6g}; check eta values or statistics"
        )
    return DecoyEstimate(p_L=p_L, p_U=p_U, clamped=clamped)


def monitor_vacuum_bounds(rec: MonitorRecord, amplitude: bool = False) -> tuple[float, float]:
    """``(p_U, p_L)`` from monitored intensity intervals.

    ``beta`` is read as an intensity. With ``amplitude=True`` the values are
    treated as field amplitudes and squared first.
    """
    lo = np.asarray(rec.beta_minus, dtype=float)
    hi = np.asarray(rec.beta_plus, dtype=float)
    if amplitude:
        lo, hi = lo**2, hi**2
    p_U = float(np.max(np.exp(-rec.eta * lo)))
    p_L = float(np.min(np.exp(-rec.eta * hi)))
    return p_U, p_L


def tha_adjust(b, mu_out: float):
    """Attenuate vacuum bounds by ``exp(-mu_out)`` for back-reflected light.

    Accepts a ``VacuumBounds`` or a plain ``(p_L, p_U)`` pair and returns
    the same kind.
    """
    if mu_out < 0:
        raise ValueError(f"mu_out must be non-negative, got {mu_out}")
    f = math.exp(-mu_out)
    if isinstance(b, VacuumBounds):
        return VacuumBounds(p_U0=f * b.p_U0, p_L0=f * b.p_L0, p_U1=f * b.p_U1, p_L1=f * b.p_L1)
    lo, hi = b
    return (f * lo, f * hi)


# ---------------------------------------------------------------------------
# JSON-lines ingestion
# ---------------------------------------------------------------------------


def _read_jsonl(source: str | Path | Iterable[str]) -> list[dict]:
    if isinstance(source, (str, Path)):
        with open(source) as fh:
            lines = fh.read().splitlines()
    else:
        lines = list(source)
    out = []
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            out.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    return out


def decoy_records_from_jsonl(
    source, eta_d: float, p_d: float, confidence: float | None = None
) -> dict[int, DecoyRecord]:
    """Group ``{"bit", "eta", "N", "N_vac"}`` rows into one record per bit.

    Each bit needs exactly two rows with distinct ``eta``. When
    ``confidence`` is given, Hoeffding slacks are attached per setting.
    """
    rows: dict[int, list[dict]] = {0: [], 1: []}
    for obj in _read_jsonl(source):
        missing = {"bit", "eta", "N", "N_vac"} - obj.keys()
        if missing:
            raise ValueError(f"calibration row {obj} lacks {sorted(missing)}")
        if obj["bit"] not in (0, 1):
            raise ValueError(f"bit must be 0 or 1, got {obj['bit']!r}")
        rows[obj["bit"]].append(obj)

    records = {}
    for bit, settings in rows.items():
        if len(settings) != 2:
            raise ConfigurationError(f"bit {bit}: expected 2 settings, found {len(settings)}")
        s1, s2 = sorted(settings, key=lambda r: r["eta"], reverse=True)
        d1 = d2 = 0.0
        if confidence is not None:
            d1 = finite_size_slack(int(s1["N"]), confidence)
            d2 = finite_size_slack(int(s2["N"]), confidence)
        records[bit] = DecoyRecord(
            eta1=float(s1["eta"]), eta2=float(s2["eta"]),
            N1=int(s1["N"]), N2=int(s2["N"]),
            N1_vac=float(s1["N_vac"]), N2_vac=float(s2["N_vac"]),
            eta_d=eta_d, p_d=p_d, delta1=d1, delta2=d2,
        )
    return records


def calibrate_decoy(records: dict[int, DecoyRecord]) -> tuple[VacuumBounds, dict[int, bool]]:
    est = {bit: decoy_vacuum_bounds(rec) for bit, rec in records.items()}
    bounds = VacuumBounds(p_U0=est[0].p_U, p_L0=est[0].p_L, p_U1=est[1].p_U, p_L1=est[1].p_L)
    return bounds, {bit: e.clamped for bit, e in est.items()}


def monitor_records_from_jsonl(source, eta: float) -> dict[int, MonitorRecord]:
    """One ``{"bit", "beta_minus", "beta_plus"}`` row per monitored pulse."""
    lo: dict[int, list[float]] = {0: [], 1: []}
    hi: dict[int, list[float]] = {0: [], 1: []}
    for obj in _read_jsonl(source):
        bit = obj.get("bit")
        if bit not in (0, 1):
            raise ValueError(f"bit must be 0 or 1, got {bit!r}")
        lo[bit].append(float(obj["beta_minus"]))
        hi[bit].append(float(obj["beta_plus"]))
    if not lo[0] or not lo[1]:
        raise ConfigurationError("monitor data must contain pulses for both bit values")
    return {bit: MonitorRecord(eta=eta, beta_minus=lo[bit], beta_plus=hi[bit]) for bit in (0, 1)}


def calibrate_monitor(records: dict[int, MonitorRecord], amplitude: bool = False) -> VacuumBounds:
    u0, l0 = monitor_vacuum_bounds(records[0], amplitude)
    u1, l1 = monitor_vacuum_bounds(records[1], amplitude)
    return VacuumBounds(p_U0=u0, p_L0=l0, p_U1=u1, p_L1=l1)
