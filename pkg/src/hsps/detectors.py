"""Two-beam-splitter, three-detector readout and its photon-number correction."""

from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

DETECTOR_CHANNELS = (1, 2, 3)


@dataclass(frozen=True)
class DetectorConfig:
    """Beam-splitter tree: channel 1 takes r1, channel 2 takes (1-r1)*r2, channel 3 the rest.

    ``dead_time_ns=None`` means each detector registers at most one photon per
    excitation pulse. ``0`` disables dead time entirely (photon-number resolving).
    """

    r1: float = 0.4
    r2: float = 0.5
    dead_time_ns: Optional[float] = None
    jitter_sigma_ps: float = 0.0

    def __post_init__(self):
        for name in ("r1", "r2"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v!r}")
        if self.dead_time_ns is not None and self.dead_time_ns < 0:
            raise ValueError("dead_time_ns must be >= 0")
        if self.jitter_sigma_ps < 0:
            raise ValueError("jitter_sigma_ps must be >= 0")

    @classmethod
    def ideal(cls):
        """A single photon-number-resolving detector on channel 1."""
        return cls(r1=1.0, r2=0.5, dead_time_ns=0.0)

    @property
    def number_resolving(self):
        return self.dead_time_ns == 0

    def channel_probs(self):
        return np.array([self.r1, (1 - self.r1) * self.r2, (1 - self.r1) * (1 - self.r2)])

    def to_dict(self):
        return asdict(self)


def correction_factors(r1, r2):
    """Inverse probabilities that 2 (3) photons all land on different detectors."""
    if not (0 < r1 < 1 and 0 < r2 < 1):
        raise ValueError(f"degenerate splitter (r1={r1}, r2={r2}): correction undefined")
    p2 = 2 * r1 * (1 - r1) + (1 - r1) ** 2 * 2 * r2 * (1 - r2)
    p3 = 6 * r1 * r2 * (1 - r1) ** 2 * (1 - r2)
    return 1.0 / p2, 1.0 / p3


def response_matrix(d: DetectorConfig, n_max=3):
    """``M[j-1, k-1]`` = P(j detectors fire | k photons), by enumerating routings."""
    q = d.channel_probs()
    m = np.zeros((n_max, n_max))
    for k in range(1, n_max + 1):
        for route in itertools.product(range(3), repeat=k):
            m[len(set(route)) - 1, k - 1] += np.prod(q[list(route)])
    return m


def multiplicity_weights(d: DetectorConfig):
    """Per-pulse weights (1, c2, c3) applied to pulses with 1, 2, >=3 detections."""
    if d.number_resolving:
        return np.ones(3)
    c2, c3 = correction_factors(d.r1, d.r2)
    return np.array([1.0, c2, c3])


def unfold_counts(n_obs, d: DetectorConfig):
    """True (N1, N2, N3) pulse counts from observed detector multiplicities.

    The diagonal of the response matrix is exactly ``1/c2`` and ``1/c3``; the
    off-diagonal terms move pulses that lost photons to collisions back to
    their true multiplicity.
    """
    n_obs = np.asarray(n_obs, dtype=float)
    if d.number_resolving:
        return n_obs.copy()
    correction_factors(d.r1, d.r2)
    m = response_matrix(d)
    return np.linalg.solve(m, n_obs)


def route(n, d: DetectorConfig, rng):
    """Draw a detector channel for each of ``n`` photons."""
    u1 = rng.random(n)
    u2 = rng.random(n)
    return np.where(u1 < d.r1, 1, np.where(u2 < d.r2, 2, 3)).astype(np.uint8)


def dead_time_mask(times_ns, channels, d: DetectorConfig, pulse=None):
    """Boolean mask of registered photons. Inputs must be sorted by time."""
    times_ns = np.asarray(times_ns, dtype=float)
    channels = np.asarray(channels)
    keep = np.ones(times_ns.shape, dtype=bool)
    if times_ns.size < 2 or d.dead_time_ns == 0:
        return keep
    if d.dead_time_ns is None:
        # without pulse indices the whole input is one pulse
        pulse = np.zeros(times_ns.size, dtype=np.int64) if pulse is None else np.asarray(pulse, dtype=np.int64)
        key = pulse * 4 + channels
        # first occurrence in time order wins
        _, first = np.unique(key, return_index=True)
        keep[:] = False
        keep[first] = True
        return keep
    dead = d.dead_time_ns
    for ch in np.unique(channels):
        idx = np.flatnonzero(channels == ch)
        t = times_ns[idx]
        close = np.flatnonzero(np.diff(t) < dead) + 1
        last_kept = -np.inf
        sub = np.ones(t.size, dtype=bool)
        for i in close:
            if sub[i - 1]:
                last_kept = t[i - 1]
            if t[i] - last_kept < dead:
                sub[i] = False
        keep[idx] = sub
    return keep


def apply_detector_tree(arrival_times_ns, d: DetectorConfig, rng, pulse=None):
    """Route sorted arrivals through the splitter tree.

    Returns ``(times_ns, channels, kept)`` where ``kept`` indexes the input
    photons that were registered. Jitter is added after routing and dead time.
    """
    t = np.asarray(arrival_times_ns, dtype=float)
    if t.size and np.any(np.diff(t) < 0):
        raise ValueError("arrival times must be sorted ascending")
    ch = route(t.size, d, rng)
    keep = dead_time_mask(t, ch, d, pulse)
    out_t = t[keep]
    if d.jitter_sigma_ps > 0:
        out_t = out_t + rng.normal(0.0, d.jitter_sigma_ps * 1e-3, out_t.size)
    return out_t, ch[keep], np.flatnonzero(keep)
