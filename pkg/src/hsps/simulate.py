"""Seeded Monte Carlo generator of time-tagged cascade emission.

Pulses are generated in fixed-size blocks. Each block owns an independent
Philox stream keyed by ``(seed, block index)``, so the output depends only on
the configuration and never on how many worker threads produced it.
"""

from __future__ import annotations

import logging
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .detectors import DetectorConfig, dead_time_mask, route
from .emitter import EmitterParams, NoiseParams
from .timetag import EventStream

log = logging.getLogger(__name__)

BLOCK_PULSES = 1 << 16

# photon origin codes used in SimTruth.source
BX, X, CORRELATED_NOISE, UNCORRELATED_NOISE = 0, 1, 2, 3


@dataclass(frozen=True)
class SimConfig:
    emitter: EmitterParams
    noise: NoiseParams = field(default_factory=NoiseParams)
    detectors: DetectorConfig = field(default_factory=DetectorConfig)
    n_pulses: int = 1
    rep_period_ns: float = 500.0
    seed: int = 0

    def __post_init__(self):
        if int(self.n_pulses) != self.n_pulses or self.n_pulses < 1:
            raise ValueError(f"n_pulses must be a positive integer, got {self.n_pulses!r}")
        if not self.rep_period_ns > 0:
            raise ValueError("rep_period_ns must be > 0")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.rep_period_ns < 5 * self.emitter.tau_x_ns:
            warnings.warn(
                f"repetition period {self.rep_period_ns} ns is shorter than 5 exciton lifetimes; "
                "photons beyond the period are discarded", stacklevel=2)

    @property
    def rep_period_ps(self):
        return int(round(self.rep_period_ns * 1000))

    def to_dict(self):
        return {
            "emitter": self.emitter.to_dict(),
            "noise": self.noise.to_dict(),
            "detectors": self.detectors.to_dict(),
            "n_pulses": int(self.n_pulses),
            "rep_period_ns": self.rep_period_ns,
            "seed": int(self.seed),
        }


@dataclass
class Emissions:
    """Per-pulse ground truth before the detector tree."""

    t_bx: np.ndarray
    t_x: np.ndarray
    bx_detected: np.ndarray
    x_detected: np.ndarray
    cn: np.ndarray
    t_cn: np.ndarray
    un: np.ndarray
    t_un: np.ndarray


@dataclass
class SimTruth:
    """Origin of every photon tag, aligned with the photon tags of the stream."""

    pulse: np.ndarray
    source: np.ndarray
    n_lost_late: int = 0
    n_lost_dead_time: int = 0


def block_rng(seed, block):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))


def _draw_emissions(cfg: SimConfig, rng, n):
    p, nz = cfg.emitter, cfg.noise
    t_bx = rng.exponential(p.tau_bx_ns, n)
    t_x = t_bx + rng.exponential(p.tau_x_ns, n)
    u = rng.random((4, n))
    t_cn = rng.exponential(nz.tau_cn_ns, n)
    t_un = rng.uniform(0.0, cfg.rep_period_ps * 1e-3, n)
    return Emissions(
        t_bx=t_bx,
        t_x=t_x,
        bx_detected=u[0] < p.alpha * p.qy_bx,
        x_detected=u[1] < p.alpha * p.qy_x,
        cn=u[2] < p.alpha * nz.eta_cn,
        t_cn=t_cn,
        un=u[3] < p.alpha * nz.eta_un,
        t_un=t_un,
    )


def _block(cfg: SimConfig, b: int):
    start = b * BLOCK_PULSES
    n = min(BLOCK_PULSES, cfg.n_pulses - start)
    rng = block_rng(cfg.seed, b)
    em = _draw_emissions(cfg, rng, n)
    idx = np.arange(start, start + n, dtype=np.int64)
    parts = [(em.bx_detected, em.t_bx, BX), (em.x_detected, em.t_x, X),
             (em.cn, em.t_cn, CORRELATED_NOISE), (em.un, em.t_un, UNCORRELATED_NOISE)]
    pulse = np.concatenate([idx[m] for m, _, _ in parts])
    local = np.concatenate([t[m] for m, t, _ in parts])
    source = np.concatenate([np.full(np.count_nonzero(m), s, dtype=np.uint8) for m, _, s in parts])
    order = np.lexsort((local, pulse))
    pulse, local, source = pulse[order], local[order], source[order]
    channel = route(pulse.size, cfg.detectors, rng)
    sigma = cfg.detectors.jitter_sigma_ps
    jitter = rng.normal(0.0, sigma * 1e-3, pulse.size) if sigma > 0 else None
    return pulse, local, source, channel, jitter


def _n_blocks(cfg):
    return -(-cfg.n_pulses // BLOCK_PULSES)


def _workers(workers):
    if workers is None:
        workers = int(os.environ.get("HSPS_THREADS", "1") or 1)
    return max(1, workers)


def simulate_emissions(cfg: SimConfig) -> Emissions:
    """Per-pulse emission ground truth, drawn from the same streams as :func:`simulate_stream`."""
    blocks = [_draw_emissions(cfg, block_rng(cfg.seed, b), min(BLOCK_PULSES, cfg.n_pulses - b * BLOCK_PULSES))
              for b in range(_n_blocks(cfg))]
    return Emissions(*(np.concatenate([getattr(e, f) for e in blocks]) for f in Emissions.__dataclass_fields__))


def simulate_stream(cfg: SimConfig, *, workers: Optional[int] = None, return_truth=False):
    """Generate the sync + detector tag stream for ``cfg``.

    With ``return_truth`` a :class:`SimTruth` describing each photon tag is
    returned alongside the stream.
    """
    nb = _n_blocks(cfg)
    w = _workers(workers)
    if w > 1 and nb > 1:
        with ThreadPoolExecutor(max_workers=w) as ex:
            parts = list(ex.map(lambda b: _block(cfg, b), range(nb)))
    else:
        parts = [_block(cfg, b) for b in range(nb)]
    pulse, local, source, channel = (np.concatenate([p[i] for p in parts]) for i in range(4))
    jitter = None if parts[0][4] is None else np.concatenate([p[4] for p in parts])

    period_ps = cfg.rep_period_ps
    period_ns = period_ps * 1e-3
    inside = local < period_ns
    n_late = int(np.count_nonzero(~inside))
    if n_late:
        log.info("discarded %d photon(s) arriving after the next excitation pulse", n_late)
    keep = inside
    # detectors see true arrival times; pulse-ordered local times are globally ordered
    registered = dead_time_mask(pulse[keep] * period_ns + local[keep], channel[keep], cfg.detectors, pulse[keep])
    sel = np.flatnonzero(keep)[registered]
    n_dead = int(keep.sum() - sel.size)
    pulse, local, source, channel = pulse[sel], local[sel], source[sel], channel[sel]
    if jitter is not None:
        local = np.clip(local + jitter[sel], 0.0, None)

    local_ps = np.minimum(np.rint(local * 1000).astype(np.int64), period_ps - 1)
    ph_time = pulse.astype(np.uint64) * np.uint64(period_ps) + local_ps.astype(np.uint64)
    order = np.lexsort((channel, ph_time))
    ph_time, channel, pulse, source = ph_time[order], channel[order], pulse[order], source[order]

    # merge: pulse k's sync precedes all of its photons, so photon j sits at j + pulse + 1
    n_total = cfg.n_pulses + ph_time.size
    out_t = np.empty(n_total, dtype=np.uint64)
    out_c = np.zeros(n_total, dtype=np.uint8)
    ph_pos = np.arange(ph_time.size, dtype=np.int64) + pulse + 1
    is_ph = np.zeros(n_total, dtype=bool)
    is_ph[ph_pos] = True
    out_t[ph_pos] = ph_time
    out_c[ph_pos] = channel
    out_t[~is_ph] = np.arange(cfg.n_pulses, dtype=np.uint64) * np.uint64(period_ps)
    stream = EventStream(out_c, out_t, period_ps)
    if return_truth:
        return stream, SimTruth(pulse, source, n_late, n_dead)
    return stream
