"""Time-tag streams: TTS1/CSV I/O, pulse localisation, histograms, raw purity.

A stream is a time-ordered list of ``(channel, global_time_ps)`` tags. Channel 0
is the laser sync, channels 1-3 are detectors.

TTS1 layout (little-endian)::

    header  16 bytes  magic b"TTS1", version u16, reserved u16, rep_period_ps u64
    record   9 bytes  channel u8, global_time_ps u64
"""

from __future__ import annotations

import io
import logging
import math
import os
import struct
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Optional

import numpy as np

from .detectors import DetectorConfig, unfold_counts

log = logging.getLogger(__name__)

MAGIC = b"TTS1"
VERSION = 1
HEADER = struct.Struct("<4sHHQ")
RECORD_DTYPE = np.dtype([("channel", "u1"), ("time", "<u8")])
CSV_HEADER = "channel,global_time_ps"
MAX_CHANNEL = 3


class StreamFormatError(ValueError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class TagRecord(NamedTuple):
    channel: int
    global_time_ps: int


class EventStream:
    """Columnar tag stream. Indexing and iteration yield :class:`TagRecord`."""

    def __init__(self, channel, time_ps, rep_period_ps=0):
        self.channel = np.ascontiguousarray(channel, dtype=np.uint8)
        self.time_ps = np.ascontiguousarray(time_ps, dtype=np.uint64)
        if self.channel.shape != self.time_ps.shape:
            raise ValueError("channel and time arrays differ in length")
        self.rep_period_ps = int(rep_period_ps)

    @classmethod
    def from_records(cls, records, rep_period_ps=0):
        records = list(records)
        ch = np.array([r[0] for r in records], dtype=np.uint8)
        t = np.array([r[1] for r in records], dtype=np.uint64)
        return cls(ch, t, rep_period_ps)

    @classmethod
    def sorted_from(cls, channel, time_ps, rep_period_ps=0):
        order = np.lexsort((channel, time_ps))
        return cls(np.asarray(channel)[order], np.asarray(time_ps)[order], rep_period_ps)

    def __len__(self):
        return self.channel.size

    def __getitem__(self, i):
        return TagRecord(int(self.channel[i]), int(self.time_ps[i]))

    def __iter__(self):
        for c, t in zip(self.channel.tolist(), self.time_ps.tolist()):
            yield TagRecord(c, t)

    def __eq__(self, other):
        if not isinstance(other, EventStream):
            return NotImplemented
        return (self.rep_period_ps == other.rep_period_ps
                and np.array_equal(self.channel, other.channel)
                and np.array_equal(self.time_ps, other.time_ps))

    def __repr__(self):
        return f"EventStream({len(self)} tags, rep_period_ps={self.rep_period_ps})"

    @property
    def n_sync(self):
        return int(np.count_nonzero(self.channel == 0))

    @property
    def n_photons(self):
        return int(np.count_nonzero(self.channel != 0))

    def first_violation(self):
        """Index of the first record breaking channel range or (time, channel) order."""
        bad_ch = np.flatnonzero(self.channel > MAX_CHANNEL)
        t, c = self.time_ps, self.channel
        bad_order = np.flatnonzero((t[1:] < t[:-1]) | ((t[1:] == t[:-1]) & (c[1:] < c[:-1]))) + 1
        hits = [(int(i[0]), kind) for i, kind in ((bad_ch, "unknown channel"), (bad_order, "non-monotone timestamp"))
                if i.size]
        return min(hits) if hits else None


# -- I/O ---------------------------------------------------------------------

def _is_csv(path):
    return os.fspath(path).lower().endswith(".csv")


def encode_tts1(stream: EventStream) -> bytes:
    rec = np.empty(len(stream), dtype=RECORD_DTYPE)
    rec["channel"] = stream.channel
    rec["time"] = stream.time_ps
    return HEADER.pack(MAGIC, VERSION, 0, stream.rep_period_ps) + rec.tobytes()


def decode_tts1(data: bytes) -> EventStream:
    if len(data) < HEADER.size:
        raise StreamFormatError("truncated header", len(data))
    magic, version, _reserved, period = HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise StreamFormatError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise StreamFormatError(f"unsupported version {version}", 4)
    body = memoryview(data)[HEADER.size:]
    n, rem = divmod(len(body), RECORD_DTYPE.itemsize)
    if rem:
        raise StreamFormatError("truncated record", HEADER.size + n * RECORD_DTYPE.itemsize)
    rec = np.frombuffer(body, dtype=RECORD_DTYPE, count=n)
    stream = EventStream(rec["channel"], rec["time"], period)
    bad = stream.first_violation()
    if bad is not None:
        i, kind = bad
        raise StreamFormatError(f"{kind} at record {i}", HEADER.size + i * RECORD_DTYPE.itemsize)
    return stream


def encode_csv(stream: EventStream) -> bytes:
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    if len(stream):
        np.savetxt(buf, np.column_stack([stream.channel.astype(np.uint64), stream.time_ps]),
                   fmt="%d", delimiter=",")
    return buf.getvalue().encode()


def decode_csv(data: bytes, rep_period_ps=0) -> EventStream:
    text = data.decode()
    first, _, rest = text.partition("\n")
    if first.strip() != CSV_HEADER:
        raise StreamFormatError("bad CSV header", 0)
    offset = len(first) + 1
    chans, times = [], []
    for line in rest.splitlines(keepends=True):
        s = line.strip()
        if s:
            parts = s.split(",")
            try:
                if len(parts) != 2:
                    raise ValueError
                c, t = int(parts[0]), int(parts[1])
                if c < 0 or t < 0:
                    raise ValueError
            except ValueError:
                raise StreamFormatError(f"malformed CSV row {s!r}", offset) from None
            if c > MAX_CHANNEL:
                raise StreamFormatError(f"unknown channel {c}", offset)
            if times and (t < times[-1] or (t == times[-1] and c < chans[-1])):
                raise StreamFormatError(f"non-monotone timestamp at record {len(times)}", offset)
            chans.append(c)
            times.append(t)
        offset += len(line.encode())
    return EventStream(np.array(chans, dtype=np.uint8), np.array(times, dtype=np.uint64), rep_period_ps)


def read_stream(source, *, csv=None) -> EventStream:
    """Read a TTS1 or CSV stream from a path or binary file object."""
    if hasattr(source, "read"):
        data = source.read()
        name = getattr(source, "name", "")
    else:
        name = os.fspath(source)
        with open(name, "rb") as f:
            data = f.read()
    use_csv = _is_csv(name) if csv is None else csv
    return decode_csv(data) if use_csv else decode_tts1(data)


def write_stream(stream: EventStream, sink, *, csv=None):
    """Write ``stream`` to a path or binary file object."""
    if hasattr(sink, "write"):
        use_csv = _is_csv(getattr(sink, "name", "")) if csv is None else csv
        sink.write(encode_csv(stream) if use_csv else encode_tts1(stream))
        return
    use_csv = _is_csv(sink) if csv is None else csv
    with open(sink, "wb") as f:
        f.write(encode_csv(stream) if use_csv else encode_tts1(stream))


# -- pulse groups -------------------------------------------------------------

class PulseGroup(NamedTuple):
    pulse_index: int
    events: tuple  # ((channel, local_time_ps), ...) sorted by local time


@dataclass
class PulseGroups:
    """Photon events assigned to excitation pulses, stored column-wise.

    Events are sorted by pulse index, then local time. Pulses without photons
    have no events but still count towards ``n_pulses``.
    """

    n_pulses: int
    pulse: np.ndarray
    channel: np.ndarray
    local_ps: np.ndarray
    rep_period_ps: int = 0
    n_dropped: int = 0

    @cached_property
    def local_ns(self):
        return self.local_ps.astype(np.float64) * 1e-3

    @cached_property
    def _slots(self):
        # dense index over non-empty pulses
        return np.unique(self.pulse, return_inverse=True)

    @property
    def occupied(self):
        return self._slots[0]

    @property
    def slot(self):
        return self._slots[1]

    @property
    def n_events(self):
        return int(self.pulse.size)

    def channels_present(self):
        return set(np.unique(self.channel).tolist())

    def select(self, mask) -> "PulseGroups":
        return PulseGroups(self.n_pulses, self.pulse[mask], self.channel[mask],
                           self.local_ps[mask], self.rep_period_ps, self.n_dropped)

    def after(self, t_f_ns) -> "PulseGroups":
        """Events with local time >= ``t_f_ns``."""
        if t_f_ns <= 0:
            return self
        return self.select(self.local_ps >= round(t_f_ns * 1000))

    def counts_per_slot(self, mask=None):
        """Per-occupied-pulse event counts, optionally restricted by ``mask``."""
        n = self.occupied.size
        if mask is None:
            return np.bincount(self.slot, minlength=n)
        return np.bincount(self.slot[mask], minlength=n)

    def sizes(self):
        """Event count for every pulse, including empty ones."""
        return np.bincount(self.pulse, minlength=self.n_pulses)

    def multiplicity_histogram(self, n_max=3):
        """Number of pulses with 1, 2, ... , >=n_max events."""
        k = self.counts_per_slot()
        return np.array([np.count_nonzero(k == j) for j in range(1, n_max)] + [np.count_nonzero(k >= n_max)])

    def group(self, pulse_index) -> PulseGroup:
        lo, hi = np.searchsorted(self.pulse, [pulse_index, pulse_index + 1])
        ev = tuple(zip(self.channel[lo:hi].tolist(), self.local_ps[lo:hi].tolist()))
        return PulseGroup(int(pulse_index), ev)

    def __iter__(self):
        """Iterate over non-empty pulse groups."""
        starts = np.flatnonzero(np.r_[True, self.pulse[1:] != self.pulse[:-1]]) if self.pulse.size else []
        bounds = list(starts) + [self.pulse.size]
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            ev = tuple(zip(self.channel[lo:hi].tolist(), self.local_ps[lo:hi].tolist()))
            yield PulseGroup(int(self.pulse[lo]), ev)


def localize(stream: EventStream, rep_period_ps: Optional[int] = None) -> PulseGroups:
    """Assign every photon to the nearest preceding sync tag."""
    ch, t = stream.channel, stream.time_ps
    is_sync = ch == 0
    sync = t[is_sync]
    ph_t, ph_ch = t[~is_sync], ch[~is_sync]
    period = rep_period_ps or stream.rep_period_ps

    if t.size == 0:
        empty = np.empty(0, dtype=np.int64)
        return PulseGroups(0, empty, np.empty(0, dtype=np.uint8), empty.copy(), int(period or 0), 0)
    if sync.size:
        pulse = np.searchsorted(sync, ph_t, side="right").astype(np.int64) - 1
        early = pulse < 0
        n_dropped = int(np.count_nonzero(early))
        if n_dropped:
            warnings.warn(f"dropped {n_dropped} photon(s) preceding the first sync tag", stacklevel=2)
            pulse, ph_t, ph_ch = pulse[~early], ph_t[~early], ph_ch[~early]
        local = (ph_t - sync[pulse]).astype(np.int64)
        n_pulses = int(sync.size)
        if not period and sync.size > 1:
            period = int(np.median(np.diff(sync)))
    else:
        if not period:
            raise ValueError("stream has no sync tags and no repetition period was given")
        pulse = (ph_t // np.uint64(period)).astype(np.int64)
        local = (ph_t - pulse.astype(np.uint64) * np.uint64(period)).astype(np.int64)
        n_pulses = int(pulse[-1]) + 1 if pulse.size else 0
        n_dropped = 0

    # stable re-sort within a pulse by local time (jittered tags can tie-break differently)
    order = np.lexsort((ph_ch, local, pulse))
    return PulseGroups(n_pulses, pulse[order], ph_ch[order], local[order], int(period or 0), n_dropped)


# -- histograms & purity -------------------------------------------------------

@dataclass
class Histogram:
    bin_width_ps: int
    counts: np.ndarray
    origin_ps: int = 0

    @property
    def total(self):
        return int(self.counts.sum())

    @property
    def edges_ns(self):
        return (self.origin_ps + self.bin_width_ps * np.arange(self.counts.size + 1)) * 1e-3

    @property
    def centers_ns(self):
        e = self.edges_ns
        return 0.5 * (e[:-1] + e[1:])

    def to_dict(self):
        return {"bin_width_ps": self.bin_width_ps, "origin_ps": self.origin_ps,
                "counts": self.counts.tolist()}


def lifetime_histogram(groups: PulseGroups, bin_width_ps, n_bins=None, channels=(1, 2, 3)) -> Histogram:
    """Histogram of local times over the selected detector channels."""
    if bin_width_ps <= 0:
        raise ValueError("bin_width_ps must be > 0")
    sel = np.isin(groups.channel, channels)
    local = groups.local_ps[sel]
    if n_bins is None:
        if groups.rep_period_ps:
            n_bins = math.ceil(groups.rep_period_ps / bin_width_ps)
        else:
            n_bins = int(local.max() // bin_width_ps) + 1 if local.size else 1
    idx = local // int(bin_width_ps)
    idx = idx[idx < n_bins]
    return Histogram(int(bin_width_ps), np.bincount(idx, minlength=n_bins).astype(np.int64))


def multiplicity_counts(groups: PulseGroups, t_f_ns=0.0):
    """Observed (N1m, N2m, N3m) pulse counts after dropping events before ``t_f_ns``."""
    kept = groups.after(t_f_ns)
    n_obs = kept.multiplicity_histogram(4)
    if n_obs[3]:
        log.warning("%d pulse(s) with more than 3 detections counted as 3-photon events", n_obs[3])
    return np.array([n_obs[0], n_obs[1], n_obs[2] + n_obs[3]])


def raw_purity(groups: PulseGroups, alpha, d: DetectorConfig, t_f_ns=0.0):
    """Unheralded purity ``N1 / (N1 + N2/alpha + N3/alpha^2)`` with photon-number correction.

    Returns ``None`` when no photons survive the filter.
    """
    n1, n2, n3 = unfold_counts(multiplicity_counts(groups, t_f_ns), d)
    n1 = max(n1, 0.0)
    den = n1 + n2 / alpha + n3 / alpha ** 2
    if den <= 0:
        return None
    return n1 / den
