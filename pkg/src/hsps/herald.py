"""Offline emulation of the purification schemes over localised pulse groups.

Every emulator first drops events with local time below ``t_f_ns`` (the
correlated-noise filter), then classifies each pulse as trigger / success and
counts the signal photons of successful pulses. Heralded purity is
``1 - N2 / (alpha * N1)`` with N1 (N2) the number of successes carrying one
(two or more) signal photons.

When the detectors are not photon-number resolving, pulses with k >= 2
detections are weighted by the photon-number correction factor c_k, which
undoes same-detector collisions in expectation.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .detectors import DetectorConfig, multiplicity_weights, unfold_counts
from .timetag import PulseGroups, multiplicity_counts

log = logging.getLogger(__name__)

DEFAULT_T_F_NS = 0.3
SCHEMES = ("timed", "ash", "tgf", "bs")


class SchemeMismatchError(ValueError):
    """The stream cannot support the requested scheme."""


@dataclass(frozen=True)
class HeraldReport:
    scheme: str
    n_pulses: int
    n_triggers: int
    n_success: int
    n_success_corrected: float
    n_signal_1: int
    n_signal_2: int
    n_signal_1_corrected: float
    n_signal_2_corrected: float
    efficiency: float
    purity: Optional[float]
    determinicity: Optional[float]
    params: dict = field(default_factory=dict)

    @property
    def efficiency_stderr(self):
        """Binomial standard error of the efficiency."""
        if self.n_pulses == 0:
            return 0.0
        p = self.n_success / self.n_pulses
        scale = self.n_success_corrected / self.n_success if self.n_success else 1.0
        return scale * math.sqrt(max(p * (1 - p), 1.0 / self.n_pulses) / self.n_pulses)

    def to_row(self):
        row = asdict(self)
        params = row.pop("params")
        row.update(params)
        return row


def _report(scheme, n_pulses, n_triggers, n_success, w_success, n1, n2, w1, w2, alpha,
            params, heralded=True):
    eff = w_success / n_pulses if n_pulses else 0.0
    if w1 > 0:
        purity = float(max(0.0, 1.0 - w2 / (alpha * w1)))
    else:
        purity = None
    if heralded:
        det = float(min(1.0, w_success / n_triggers)) if n_triggers else None
    else:
        det = None
    return HeraldReport(scheme, int(n_pulses), int(n_triggers), int(n_success), float(w_success),
                        int(n1), int(n2), float(w1), float(w2), float(eff), purity, det, params)


def _classify(scheme, groups, n_trigger_mask, n_signal, n_total, alpha, d, params):
    w = multiplicity_weights(d)[np.clip(n_total, 1, 3) - 1]
    trigger = n_trigger_mask
    success = trigger & (n_signal >= 1)
    one = success & (n_signal == 1)
    many = success & (n_signal >= 2)
    if np.any(n_signal[success] > 2):
        log.warning("%d success(es) with more than two signal photons counted as N2",
                    int(np.count_nonzero(n_signal[success] > 2)))
    return _report(scheme, groups.n_pulses, trigger.sum(), success.sum(), w[success].sum(),
                   one.sum(), many.sum(), w[one].sum(), w[many].sum(), alpha, params)


def emulate_timed(groups: PulseGroups, t_c_ns, t_f_ns=DEFAULT_T_F_NS, alpha=1.0,
                  d: DetectorConfig = DetectorConfig()) -> HeraldReport:
    """Passive heralding: idler window [t_f, t_c], signal window after t_c."""
    if t_c_ns < t_f_ns:
        raise ValueError("t_c_ns must not precede t_f_ns")
    params = {"t_c_ns": t_c_ns, "t_f_ns": t_f_ns}
    g = groups.after(t_f_ns)
    if g.n_events == 0:
        return _report("timed", g.n_pulses, 0, 0, 0.0, 0, 0, 0.0, 0.0, alpha, params)
    idler = g.local_ns <= t_c_ns
    n_id = g.counts_per_slot(idler)
    n_sig = g.counts_per_slot(~idler)
    return _classify("timed", g, n_id >= 1, n_sig, n_id + n_sig, alpha, d, params)


def emulate_ash(groups: PulseGroups, t_r_ns, t_f_ns=DEFAULT_T_F_NS, alpha=1.0,
                d: DetectorConfig = DetectorConfig()) -> HeraldReport:
    """Active heralding: the first surviving photon triggers; later photons beyond t_r are signal."""
    if t_r_ns < 0 or t_f_ns < 0:
        raise ValueError("t_r_ns and t_f_ns must be >= 0")
    params = {"t_r_ns": t_r_ns, "t_f_ns": t_f_ns}
    g = groups.after(t_f_ns)
    if g.n_events == 0:
        return _report("ash", g.n_pulses, 0, 0, 0.0, 0, 0, 0.0, 0.0, alpha, params)
    lt = g.local_ns
    # events are pulse-major and time-sorted, so the first event of each slot is the trigger
    _, first = np.unique(g.slot, return_index=True)
    t_trigger = lt[first][g.slot]
    n_sig = g.counts_per_slot(lt > t_trigger + t_r_ns)
    n_tot = g.counts_per_slot()
    return _classify("ash", g, n_tot >= 1, n_sig, n_tot, alpha, d, params)


def emulate_bs_herald(groups: PulseGroups, alpha=1.0, d: DetectorConfig = DetectorConfig(),
                      t_f_ns=0.0) -> HeraldReport:
    """Beam-splitter heralding: channel 1 is the idler arm, channels 2-3 the signal arm."""
    params = {"t_f_ns": t_f_ns}
    g = groups.after(t_f_ns)
    if g.n_events == 0:
        return _report("bs", g.n_pulses, 0, 0, 0.0, 0, 0, 0.0, 0.0, alpha, params)
    if len(groups.channels_present()) < 2:
        raise SchemeMismatchError("beam-splitter heralding needs at least two detector channels")
    idler = g.channel == 1
    n_id = g.counts_per_slot(idler)
    n_sig = g.counts_per_slot(~idler)
    trigger = n_id >= 1
    success = trigger & (n_sig >= 1)
    one = success & (n_sig == 1)
    many = success & (n_sig >= 2)
    return _report("bs", g.n_pulses, trigger.sum(), success.sum(), success.sum(),
                   one.sum(), many.sum(), one.sum(), many.sum(), alpha, params)


def emulate_tgf(groups: PulseGroups, t_f_ns, alpha=1.0, d: DetectorConfig = DetectorConfig()) -> HeraldReport:
    """Time-gated filtering: efficiency is the rate of pulses left with exactly one photon."""
    params = {"t_f_ns": t_f_ns}
    n_obs = multiplicity_counts(groups, t_f_ns)
    n1, n2, n3 = unfold_counts(n_obs, d)
    n1 = max(n1, 0.0)
    den = n1 + n2 / alpha + n3 / alpha ** 2
    purity = float(n1 / den) if den > 0 else None
    n_pulses = groups.n_pulses
    return HeraldReport("tgf", int(n_pulses), int(n_obs.sum()), int(n_obs[0]), float(n1),
                        int(n_obs[0]), int(n_obs[1] + n_obs[2]), float(n1), float(n2 + n3),
                        float(n1 / n_pulses) if n_pulses else 0.0, purity, None, params)


_EMULATORS = {
    "timed": emulate_timed,
    "ash": emulate_ash,
    "tgf": emulate_tgf,
    "bs": emulate_bs_herald,
}


def emulate(groups, scheme, **kwargs) -> HeraldReport:
    try:
        fn = _EMULATORS[scheme.lower()]
    except KeyError:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}") from None
    return fn(groups, **kwargs)


def _grid_points(grid):
    if isinstance(grid, dict):
        keys = list(grid)
        return [dict(zip(keys, vals)) for vals in itertools.product(*(grid[k] for k in keys))]
    return [dict(g) for g in grid]


def sweep(groups: PulseGroups, scheme, grid, **fixed) -> list[HeraldReport]:
    """One report per grid point, in grid order.

    ``grid`` is either ``{param: values}`` (cartesian product) or a list of
    parameter dicts. ``fixed`` holds the remaining keyword arguments.
    """
    points = _grid_points(grid)
    if not points:
        raise ValueError("empty parameter grid")
    return [emulate(groups, scheme, **fixed, **pt) for pt in points]


# -- serialisation -------------------------------------------------------------

def reports_to_rows(reports, extra_columns=None):
    rows = []
    for i, r in enumerate(reports):
        row = r.to_row()
        if extra_columns:
            for name, values in extra_columns.items():
                row[name] = values[i]
        rows.append(row)
    return rows


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    if not rows:
        return ""
    cols = list(rows[0])
    for r in rows[1:]:
        cols += [c for c in r if c not in cols]
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def rows_to_json(rows) -> str:
    return json.dumps(rows, indent=1)
