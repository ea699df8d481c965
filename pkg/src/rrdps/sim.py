"""Seeded Monte Carlo simulation of RRDPS blocks.

Two fidelities are available:

* ``Fidelity.MODEL`` draws block outcomes straight from the closed-form
  detection model (signal event, dark event or nothing) and is what the
  channel formulas are validated against.
* ``Fidelity.PULSE`` simulates the L-pulse train as coherent states, the
  variable-delay interferometer and photon-number-resolving detectors,
  then postselects blocks with exactly one registered photon.

Blocks are processed in fixed-size chunks. Chunk ``c`` draws from a PCG64
stream seeded with ``SeedSequence(seed, spawn_key=(c,))``, so the result
does not depend on how chunks are scheduled across workers.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelParams
from .errors import ConfigurationError

MODEL_CHUNK = 1 << 16
PULSE_CHUNK = 1 << 12
DEFAULT_MAX_PULSES = 10**10


class Fidelity(str, enum.Enum):
    MODEL = "model"
    PULSE = "pulse"


@dataclass(frozen=True)
class SimConfig:
    L: int
    mu0: float
    mu1: float | None = None
    channel: ChannelParams = field(default_factory=ChannelParams)
    n_blocks: int = 10**5
    seed: int = 0
    fidelity: Fidelity = Fidelity.MODEL
    max_pulses: int = DEFAULT_MAX_PULSES

    def __post_init__(self) -> None:
        if self.L < 2:
            raise ValueError(f"L must be >= 2, got {self.L}")
        if self.mu0 < 0 or (self.mu1 is not None and self.mu1 < 0):
            raise ValueError("mean photon numbers must be non-negative")
        if self.n_blocks < 1:
            raise ValueError(f"n_blocks must be >= 1, got {self.n_blocks}")
        if self.n_blocks * self.L > self.max_pulses:
            raise ConfigurationError(
                f"n_blocks*L = {self.n_blocks * self.L} exceeds the budget of {self.max_pulses} pulses"
            )
        object.__setattr__(self, "fidelity", Fidelity(self.fidelity))

    @property
    def mu_bit1(self) -> float:
        return self.mu0 if self.mu1 is None else self.mu1


@dataclass
class SimResult:
    n_blocks: int
    n_detected: int
    n_errors: int
    offset_hist: np.ndarray  # index r = 1..L-1; entry 0 unused

    @property
    def Q_hat(self) -> float:
        return self.n_detected / self.n_blocks

    @property
    def e_bit_hat(self) -> float:
        return self.n_errors / self.n_detected if self.n_detected else 0.0

    @property
    def se_Q(self) -> float:
        q = self.Q_hat
        return math.sqrt(q * (1.0 - q) / self.n_blocks)

    @property
    def se_e(self) -> float:
        if not self.n_detected:
            return 0.0
        e = self.e_bit_hat
        return math.sqrt(e * (1.0 - e) / self.n_detected)


@dataclass
class Detections:
    """Postselected single-photon events; ``k_d`` is 1-based."""

    block: np.ndarray
    k_d: np.ndarray
    r: np.ndarray
    bob_bit: np.ndarray


def chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(chunk,))))


def sift_keys(alice_bits: np.ndarray, det: Detections) -> tuple[np.ndarray, np.ndarray]:
    """Alice's bit ``a[k_d] xor a[k_d + r]`` and Bob's detector bit per event."""
    alice_bits = np.asarray(alice_bits)
    L = alice_bits.shape[1]
    if np.any(det.k_d < 1) or np.any(det.k_d + det.r > L):
        raise IndexError("detection slot outside the interfering range")
    first = alice_bits[det.block, det.k_d - 1]
    second = alice_bits[det.block, det.k_d - 1 + det.r]
    return (first ^ second).astype(np.int8), np.asarray(det.bob_bit, dtype=np.int8)


def pairing_distribution(i: int, L: int, n_samples: int, seed: int) -> np.ndarray:
    """Counts of partner slot ``j = i + (-1)^b r (mod L)``; ``out[j-1]`` is slot j."""
    if not 1 <= i <= L:
        raise ValueError(f"slot i must lie in [1, L], got {i}")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    r = rng.integers(1, L, n_samples)
    b = rng.integers(0, 2, n_samples)
    j = (i - 1 + np.where(b == 0, r, -r)) % L + 1
    return np.bincount(j - 1, minlength=L)


def _model_chunk(cfg: SimConfig, chunk: int, size: int) -> tuple[int, int, np.ndarray]:
    rng = chunk_rng(cfg.seed, chunk)
    L, ch = cfg.L, cfg.channel
    x = L * cfg.mu0 * ch.eta_sy
    p_sig = x * math.exp(-x) / 2.0
    p_dark = L * ch.p_d

    u = rng.random(size)
    sig = u < p_sig
    dark = (u >= p_sig) & (u < p_sig + p_dark)
    n_det = int(sig.sum() + dark.sum())
    is_sig = sig[sig | dark]
    flip = rng.random(n_det) < np.where(is_sig, ch.e_sym, 0.5)
    r = rng.integers(1, L, n_det)
    rng.integers(1, L - r + 1)  # k_d, uniform over the interfering slots
    return n_det, int(flip.sum()), np.bincount(r, minlength=L)


def _pulse_chunk(cfg: SimConfig, chunk: int, size: int) -> tuple[int, int, np.ndarray]:
    alice, det = simulate_pulse_chunk(cfg, chunk, size)
    a_key, b_key = sift_keys(alice, det)
    return det.k_d.size, int(np.sum(a_key != b_key)), np.bincount(det.r, minlength=cfg.L)


def simulate_pulse_chunk(cfg: SimConfig, chunk: int, size: int) -> tuple[np.ndarray, Detections]:
    """Pulse-level simulation of ``size`` blocks; returns Alice's bits and valid detections."""
    rng = chunk_rng(cfg.seed, chunk)
    L, ch = cfg.L, cfg.channel
    vis = 1.0 - 2.0 * ch.e_sym
    lam_dark = -math.log1p(-ch.p_d) if ch.p_d < 1.0 else np.inf

    a = rng.integers(0, 2, (size, L), dtype=np.int8)
    r = rng.integers(1, L, size)
    mu = np.where(a == 0, cfg.mu0, cfg.mu_bit1) * ch.eta_sy
    n_gates = 2 * (L + r)  # two detectors watch slots 1..L+r
    total = mu.sum(axis=1) + n_gates * lam_dark
    n_photons = rng.poisson(total)
    keep = np.nonzero(n_photons == 1)[0]

    blocks, k_ds, rs, bits = [], [], [], []
    if keep.size:
        # Split the single registered photon over modes in proportion to their means.
        amp = np.sqrt(mu[keep]) * np.where(a[keep] == 0, 1.0, -1.0)
        rk = r[keep]
        t = np.arange(1, 2 * L)[None, :]  # output slot
        direct = np.where(t <= L, np.pad(amp, ((0, 0), (0, L - 1)))[:, : 2 * L - 1], 0.0) / math.sqrt(2)
        src = t - rk[:, None]
        valid = (src >= 1) & (src <= L)
        delayed = np.where(valid, np.take_along_axis(amp, np.clip(src - 1, 0, L - 1), axis=1), 0.0) / math.sqrt(2)
        base = (direct**2 + delayed**2) / 2.0
        cross = vis * direct * delayed
        m0, m1 = base + cross, base - cross
        sig_w = np.concatenate([m0, m1], axis=1)
        dark_w = n_gates[keep] * lam_dark
        weights = np.concatenate([sig_w, dark_w[:, None]], axis=1)
        cdf = np.cumsum(weights, axis=1)
        pick = (rng.random(keep.size) * cdf[:, -1])[:, None]
        idx = np.minimum((cdf <= pick).sum(axis=1), weights.shape[1] - 1)

        n_slot = 2 * L - 1
        is_dark = idx == 2 * n_slot
        det_bit = np.where(is_dark, rng.integers(0, 2, keep.size), idx // n_slot)
        slot = np.where(is_dark, rng.integers(1, L + rk + 1), idx % n_slot + 1)
        in_overlap = (slot >= rk + 1) & (slot <= L)
        blocks.append(keep[in_overlap])
        k_ds.append(slot[in_overlap] - rk[in_overlap])
        rs.append(rk[in_overlap])
        bits.append(det_bit[in_overlap])

    cat = lambda xs: np.concatenate(xs) if xs else np.zeros(0, dtype=np.int64)
    return a, Detections(cat(blocks), cat(k_ds), cat(rs), cat(bits))


def run_blocks(cfg: SimConfig, workers: int = 1) -> SimResult:
    """Simulate ``cfg.n_blocks`` blocks and aggregate detection statistics."""
    if cfg.fidelity is Fidelity.MODEL:
        step, fn = MODEL_CHUNK, _model_chunk
        x = cfg.L * cfg.mu0 * cfg.channel.eta_sy
        if x * math.exp(-x) / 2.0 + cfg.L * cfg.channel.p_d > 1.0:
            raise ConfigurationError("signal and dark-count probabilities exceed 1")
    else:
        step, fn = PULSE_CHUNK, _pulse_chunk
    sizes = [min(step, cfg.n_blocks - start) for start in range(0, cfg.n_blocks, step)]
    jobs = list(enumerate(sizes))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda job: fn(cfg, *job), jobs))
    else:
        parts = [fn(cfg, c, n) for c, n in jobs]

    hist = np.zeros(cfg.L, dtype=np.int64)
    n_det = n_err = 0
    for d, e, h in parts:
        n_det += d
        n_err += e
        hist += h
    return SimResult(n_blocks=cfg.n_blocks, n_detected=n_det, n_errors=n_err, offset_hist=hist)
