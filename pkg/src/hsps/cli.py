"""Command-line entry point: ``hsps {simulate,emulate,analytic,fit,budget}``.

Exit codes: 0 success, 2 configuration error, 3 solver/estimation failure,
4 I/O error. Tables go to stdout (or ``-o``), diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import budget, emitter
from .detectors import DetectorConfig
from .emitter import EmitterParams, NoiseParams, NoSolutionError
from .estimation import (CalibrationError, FitError, NoEstimateError, derive_emitter_params,
                         fit_exponentials, measure_p1)
from .herald import (DEFAULT_T_F_NS, SchemeMismatchError, reports_to_rows, rows_to_csv, rows_to_json,
                     sweep)
from .presets import PRESETS, get_preset
from .simulate import SimConfig, simulate_stream
from .timetag import StreamFormatError, lifetime_histogram, localize, read_stream, write_stream

log = logging.getLogger("hsps")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4

DEFAULT_BIN_PS = 100


class ConfigError(ValueError):
    pass


# -- config resolution ---------------------------------------------------------

_SECTIONS = {"emitter": EmitterParams, "noise": NoiseParams, "detectors": DetectorConfig}
_TOP_KEYS = {"preset", "n_pulses", "rep_period_ns", "seed"} | set(_SECTIONS)


def _build(cls, values: dict, where: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}")
    try:
        return cls(**values)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}") from None


def sim_config_from_dict(raw: dict) -> SimConfig:
    """Resolve a JSON run config (optionally starting from a preset) to a SimConfig."""
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"config: unknown key(s) {sorted(unknown)}")
    base = get_preset(raw.get("preset", "paper-nqd"))
    parts = {}
    for name, cls in _SECTIONS.items():
        merged = dataclasses.asdict(getattr(base, name))
        sub = raw.get(name, {})
        if not isinstance(sub, dict):
            raise ConfigError(f"config.{name} must be an object")
        extra = set(sub) - set(merged)
        if extra:
            raise ConfigError(f"config.{name}: unknown key(s) {sorted(extra)}")
        merged.update(sub)
        parts[name] = _build(cls, merged, f"config.{name}")
    try:
        return SimConfig(parts["emitter"], parts["noise"], parts["detectors"],
                         n_pulses=_count(raw.get("n_pulses", 1), "n_pulses"),
                         rep_period_ns=float(raw.get("rep_period_ns", base.rep_period_ns)),
                         seed=int(raw.get("seed", 0)))
    except ValueError as e:
        raise ConfigError(f"config: {e}") from None


def _count(value, name):
    try:
        f = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: not a number: {value!r}") from None
    if not f.is_integer() or f < 1:
        raise ConfigError(f"{name} must be a positive integer, got {value!r}")
    return int(f)


def _load_json(path):
    try:
        with open(path) as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return data


def sidecar_path(stream_path) -> Path:
    return Path(str(stream_path) + ".json")


# -- output --------------------------------------------------------------------

def _emit(text: str, out: Optional[str]):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)
        if text and not text.endswith("\n"):
            sys.stdout.write("\n")


def _format_rows(rows, fmt):
    return rows_to_json(rows) + "\n" if fmt == "json" else rows_to_csv(rows)


def _clean(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, float) and math.isnan(v):
        return None
    return v


# -- simulate ------------------------------------------------------------------

def cmd_simulate(args):
    raw = _load_json(args.config) if args.config else {}
    if args.preset:
        raw["preset"] = args.preset
    if args.pulses is not None:
        raw["n_pulses"] = args.pulses
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.rep_period_ns is not None:
        raw["rep_period_ns"] = args.rep_period_ns
    cfg = sim_config_from_dict(raw)
    stream = simulate_stream(cfg)
    write_stream(stream, args.output)
    side = {"command": "simulate", "preset": raw.get("preset", "paper-nqd"), "config": cfg.to_dict(),
            "n_tags": len(stream), "n_photons": stream.n_photons}
    sidecar_path(args.output).write_text(json.dumps(side, indent=1) + "\n")
    print(f"wrote {len(stream)} tags ({stream.n_photons} photons) to {args.output}", file=sys.stderr)
    return EXIT_OK


# -- emulate -------------------------------------------------------------------

def _parse_values(spec: str):
    """``a:b:n`` (inclusive linspace) or a comma list."""
    try:
        if ":" in spec:
            a, b, n = spec.split(":")
            return [float(x) for x in np.linspace(float(a), float(b), int(n))]
        return [float(x) for x in spec.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse value list {spec!r}") from None


_SCHEME_PARAM = {"timed": "t_c_ns", "ash": "t_r_ns", "tgf": "t_f_ns", "bs": "t_f_ns"}


def _stream_context(args):
    """Emitter, alpha and detectors for a stream: sidecar, then preset, then flags."""
    p, d = None, DetectorConfig()
    side = sidecar_path(args.stream)
    if not args.preset and side.exists():
        c = _load_json(side).get("config", {})
        if c:
            p = _build(EmitterParams, c["emitter"], "sidecar.emitter")
            d = _build(DetectorConfig, c["detectors"], "sidecar.detectors")
    if args.preset:
        pre = get_preset(args.preset)
        p, d = pre.emitter, pre.detectors
    if args.r1 is not None or args.r2 is not None:
        d = dataclasses.replace(d, r1=args.r1 if args.r1 is not None else d.r1,
                                r2=args.r2 if args.r2 is not None else d.r2)
    alpha = args.alpha if args.alpha is not None else (p.alpha if p else 1.0)
    return p, alpha, d


def _analytic_efficiency(p: EmitterParams, scheme, point, d: DetectorConfig):
    if scheme == "timed":
        return emitter.eta_timed(p, point["t_c_ns"])
    if scheme == "ash":
        return emitter.eta_ash(p, point["t_r_ns"])
    if scheme == "tgf":
        return emitter.tgf_metrics(p, point["t_f_ns"]).efficiency
    # idler arm = first splitter reflection
    return p.alpha ** 2 * p.qy_x * p.qy_bx * 2 * d.r1 * (1 - d.r1)


def cmd_emulate(args):
    scheme = args.scheme
    p, alpha, d = _stream_context(args)
    stream = read_stream(args.stream)
    groups = localize(stream, args.rep_period_ps)

    # scalar defaults for every parameter of the scheme; a sweep overrides one of them
    params = {"t_f_ns": args.t_f if args.t_f is not None else (0.0 if scheme == "bs" else DEFAULT_T_F_NS)}
    if scheme == "timed":
        if args.t_c is not None:
            params["t_c_ns"] = args.t_c
        elif p is not None:
            params["t_c_ns"] = emitter.tc_opt(p.tau_x_ns, p.tau_bx_ns)
        elif not (args.sweep or "").startswith("t_c"):
            raise ConfigError("timed needs --t-c (or emitter parameters for the optimal cutoff)")
    elif scheme == "ash":
        params["t_r_ns"] = args.t_r if args.t_r is not None else 0.0

    grid = {}
    if args.sweep:
        name, _, spec = args.sweep.partition("=")
        name = name.strip().replace("-", "_")
        if not name.endswith("_ns"):
            name += "_ns"
        if name not in params and not (scheme == "timed" and name == "t_c_ns"):
            raise ConfigError(f"scheme {scheme} has no parameter {name!r}")
        grid[name] = _parse_values(spec)
        params.pop(name, None)
    else:
        key = _SCHEME_PARAM[scheme]
        grid[key] = [params.pop(key)]

    reports = sweep(groups, scheme, grid, alpha=alpha, d=d, **params)
    rows = reports_to_rows(reports)
    for r, rep in zip(rows, reports):
        r["efficiency_stderr"] = rep.efficiency_stderr
    if args.overlay_analytic:
        if p is None:
            raise ConfigError("--overlay-analytic needs emitter parameters (--preset or a sidecar)")
        for r in rows:
            r["analytic_efficiency"] = float(_analytic_efficiency(p, scheme, r, d))
    _emit(_format_rows(rows, args.format), args.output)
    return EXIT_OK


# -- analytic ------------------------------------------------------------------

ANALYTIC_OPS = ("qy-ratio", "path-probs", "standalone", "tc-opt", "eta-timed", "eta-timed-opt", "eta-ash",
                "bs", "tgf", "solve-tgf", "determinicity", "noise-purity")


def _emitter_from_args(args) -> EmitterParams:
    if args.preset:
        base = get_preset(args.preset).emitter
        qx = args.qyx if args.qyx is not None else base.qy_x
        qb = args.qybx if args.qybx is not None else base.qy_bx
        al = args.alpha if args.alpha is not None else base.alpha
        tx = args.taux if args.taux is not None else base.tau_x_ns
        tb = args.taubx if args.taubx is not None else base.tau_bx_ns
        return EmitterParams(qx, qb, tx, tb, args.beta, al)
    qx = 1.0 if args.qyx is None else args.qyx
    qb = 1.0 if args.qybx is None else args.qybx
    al = 1.0 if args.alpha is None else args.alpha
    tx = 1.0 if args.taux is None else args.taux
    if args.taubx is not None:
        return EmitterParams(qx, qb, tx, args.taubx, args.beta, al)
    return EmitterParams.from_beta(qx, qb, tx, beta=args.beta, alpha=al)


def _gate_values(args, attr, default):
    v = getattr(args, attr)
    if v is None:
        return [default]
    return _parse_values(v)


def cmd_analytic(args):
    op = args.op
    p = _emitter_from_args(args)
    rows = []
    if op == "qy-ratio":
        rows.append({"qy_ratio": emitter.qy_ratio(p.tau_x_ns, p.tau_bx_ns, p.beta)})
    elif op == "tc-opt":
        rows.append({"tc_opt_ns": emitter.tc_opt(p.tau_x_ns, p.tau_bx_ns)})
    elif op == "standalone":
        m = emitter.standalone_metrics(p)
        rows.append({"efficiency": m.efficiency, "purity": m.purity})
    elif op == "bs":
        rows.append({"efficiency": emitter.bs_herald_efficiency(p)})
    elif op == "eta-timed-opt":
        rows.append({"t_c_ns": emitter.tc_opt(p.tau_x_ns, p.tau_bx_ns), "efficiency": emitter.eta_timed_opt(p)})
    elif op == "eta-timed":
        for t in _gate_values(args, "tc", emitter.tc_opt(p.tau_x_ns, p.tau_bx_ns)):
            rows.append({"t_c_ns": t, "efficiency": emitter.eta_timed(p, t)})
    elif op == "eta-ash":
        for t in _gate_values(args, "tr", 0.0):
            rows.append({"t_r_ns": t, "efficiency": emitter.eta_ash(p, t)})
    elif op == "path-probs":
        for t in _gate_values(args, "gate", emitter.tc_opt(p.tau_x_ns, p.tau_bx_ns)):
            rows.append({"gate_ns": t, **dataclasses.asdict(emitter.path_probabilities(p, t))})
    elif op == "tgf":
        for t in _gate_values(args, "tf", DEFAULT_T_F_NS):
            m = emitter.tgf_metrics(p, t)
            rows.append({"t_f_ns": t, "efficiency": m.efficiency, "purity": m.purity})
    elif op == "solve-tgf":
        t, eff = emitter.solve_tgf_gate(p, args.s_target)
        rows.append({"s_target": args.s_target, "t_f_ns": t, "efficiency": eff})
    elif op == "determinicity":
        scheme = args.scheme.upper()
        default = emitter.tc_opt(p.tau_x_ns, p.tau_bx_ns) if scheme == "TIMED" else 0.0
        for t in _gate_values(args, "gate", default):
            rows.append({"scheme": scheme, "gate_ns": t, "determinicity": emitter.determinicity(p, scheme, t)})
    elif op == "noise-purity":
        n = NoiseParams(args.eta_cn, args.tau_cn, args.eta_un)
        rows.append({"include_correlated": not args.uncorrelated_only,
                     "purity": emitter.noise_adjusted_purity(p, n, not args.uncorrelated_only)})
    rows = [{k: _clean(v) for k, v in r.items()} for r in rows]
    if len(rows) == 1 and len(rows[0]) - _n_inputs(rows[0]) == 1 and args.format is None:
        value = [v for k, v in rows[0].items() if not _is_input(k)][0]
        _emit(repr(value), args.output)
    else:
        _emit(_format_rows(rows, args.format or "csv"), args.output)
    return EXIT_OK


_INPUT_KEYS = {"t_c_ns", "t_r_ns", "t_f_ns", "gate_ns", "s_target", "scheme", "include_correlated"}


def _is_input(k):
    return k in _INPUT_KEYS


def _n_inputs(row):
    return sum(_is_input(k) for k in row)


# -- fit -----------------------------------------------------------------------

def cmd_fit(args):
    stream = read_stream(args.stream)
    groups = localize(stream, args.rep_period_ps)
    h = lifetime_histogram(groups, args.bin_ps)
    fit = fit_exponentials(h, args.k, t_min_ns=args.t_min_ns, t_max_ns=args.t_max_ns)
    out = {"histogram": {"bin_width_ps": h.bin_width_ps, "total": h.total}, "fit": fit.to_dict()}
    alpha = args.alpha
    if alpha is None and sidecar_path(args.stream).exists():
        alpha = _load_json(sidecar_path(args.stream)).get("config", {}).get("emitter", {}).get("alpha")
    if alpha is not None and args.k >= 2:
        p1 = measure_p1(groups, args.t_f)
        derived = derive_emitter_params(fit, alpha, args.beta, p1)
        out["p1_measured"] = p1
        out["derived"] = derived.to_dict()
    _emit(json.dumps(out, indent=1) + "\n", args.output)
    return EXIT_OK


# -- budget --------------------------------------------------------------------

def cmd_budget(args):
    what = args.what
    if what == "response-time":
        hw = budget.HardwareConfig.preset(args.detector, args.layout)
        if args.format is None:
            _emit(repr(budget.response_time(hw)), args.output)
            return EXIT_OK
        rows = [{"config": hw.name, "response_time_ps": budget.response_time(hw)}]
    elif what == "table":
        rows = [{"config": hw.name, **{k: v for k, v in dataclasses.asdict(hw).items() if k != "name"},
                 "response_time_ps": budget.response_time(hw)} for hw in budget.all_presets()]
    elif what == "rates":
        p = get_preset(args.preset).emitter
        hw = budget.HardwareConfig.preset(args.detector, args.layout)
        rows = []
        for scheme in ("ash", "timed", "tgf", "bs"):
            rate = budget.rate_projection(p, scheme, args.rep_rate, hardware=hw, s_target=args.s_target)
            rows.append({"scheme": scheme, "rep_rate_hz": args.rep_rate, "rate_hz": rate,
                         "efficiency": rate / args.rep_rate})
    elif what == "diff-map":
        grid = np.linspace(1.0 / args.n, 1.0, args.n)
        m = budget.scheme_difference_map(grid, grid, args.s_target, args.alpha, args.beta, args.tr_over_taux)
        rows = m.rows()
    elif what == "curves":
        p = get_preset(args.preset).emitter
        taus = np.geomspace(args.tau_min, args.tau_max, args.n)
        curves = budget.rate_vs_lifetime_curve(p, taus, s_target=args.s_target)
        rows = curves.rows()
        for k, v in curves.crossovers_ns.items():
            print(f"crossover {k}: {'none' if v is None else f'{v:.4g} ns'}", file=sys.stderr)
    else:  # pragma: no cover - argparse restricts choices
        raise ConfigError(what)
    _emit(_format_rows(rows, args.format or "csv"), args.output)
    return EXIT_OK


# -- parser --------------------------------------------------------------------

def _add_emitter_flags(sp):
    sp.add_argument("--preset", choices=sorted(PRESETS))
    sp.add_argument("--qyx", type=float)
    sp.add_argument("--qybx", type=float)
    sp.add_argument("--taux", type=float, help="exciton lifetime (ns)")
    sp.add_argument("--taubx", type=float, help="biexciton lifetime (ns); derived from beta if omitted")
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--beta", type=float, default=4.0)


def build_parser():
    ap = argparse.ArgumentParser(prog="hsps", description="Cascade single-photon source simulator and analysis")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a time-tag stream")
    s.add_argument("--preset", choices=sorted(PRESETS))
    s.add_argument("--config", help="JSON run config")
    s.add_argument("--pulses", type=float)
    s.add_argument("--seed", type=int)
    s.add_argument("--rep-period-ns", type=float)
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("emulate", help="emulate a purification scheme on a stream")
    e.add_argument("stream")
    e.add_argument("--scheme", choices=sorted(_SCHEME_PARAM), required=True)
    e.add_argument("--preset", choices=sorted(PRESETS))
    e.add_argument("--t-c", type=float)
    e.add_argument("--t-r", type=float)
    e.add_argument("--t-f", type=float)
    e.add_argument("--sweep", help="PARAM=start:stop:n or PARAM=v1,v2,... e.g. t_c=0:5:51")
    e.add_argument("--alpha", type=float)
    e.add_argument("--r1", type=float)
    e.add_argument("--r2", type=float)
    e.add_argument("--rep-period-ps", type=int)
    e.add_argument("--overlay-analytic", action="store_true")
    e.add_argument("--format", choices=("csv", "json"), default="csv")
    e.add_argument("-o", "--output")
    e.set_defaults(func=cmd_emulate)

    a = sub.add_parser("analytic", help="evaluate closed-form cascade formulas")
    a.add_argument("op", choices=ANALYTIC_OPS)
    _add_emitter_flags(a)
    a.add_argument("--tc", help="cutoff time(s), value, list or a:b:n")
    a.add_argument("--tr", help="response time(s)")
    a.add_argument("--tf", help="filter gate(s)")
    a.add_argument("--gate", help="gate time(s) for path-probs/determinicity")
    a.add_argument("--scheme", choices=("timed", "ash", "TIMED", "ASH"), default="TIMED")
    a.add_argument("--s-target", type=float, default=budget.DEFAULT_S_TARGET)
    a.add_argument("--eta-cn", type=float, default=0.0)
    a.add_argument("--tau-cn", type=float, default=0.3)
    a.add_argument("--eta-un", type=float, default=0.0)
    a.add_argument("--uncorrelated-only", action="store_true")
    a.add_argument("--format", choices=("csv", "json"))
    a.add_argument("-o", "--output")
    a.set_defaults(func=cmd_analytic)

    f = sub.add_parser("fit", help="lifetime fit and yield extraction from a stream")
    f.add_argument("stream")
    f.add_argument("--k", type=int, default=3)
    f.add_argument("--bin-ps", type=int, default=DEFAULT_BIN_PS)
    f.add_argument("--t-min-ns", type=float, default=0.0)
    f.add_argument("--t-max-ns", type=float)
    f.add_argument("--t-f", type=float, default=DEFAULT_T_F_NS, help="filter used for the p1 measurement")
    f.add_argument("--alpha", type=float)
    f.add_argument("--beta", type=float, default=4.0)
    f.add_argument("--rep-period-ps", type=int)
    f.add_argument("-o", "--output")
    f.set_defaults(func=cmd_fit)

    b = sub.add_parser("budget", help="response-time budget and rate projections")
    b.add_argument("what", choices=("response-time", "table", "rates", "diff-map", "curves"))
    b.add_argument("--detector", choices=sorted(budget.DETECTORS), default="snspd")
    b.add_argument("--layout", choices=sorted(budget.LAYOUTS), default="on-chip")
    b.add_argument("--preset", choices=sorted(PRESETS), default="model-system")
    b.add_argument("--rep-rate", type=float, default=200e6)
    b.add_argument("--s-target", type=float, default=budget.DEFAULT_S_TARGET)
    b.add_argument("--alpha", type=float, default=1.0)
    b.add_argument("--beta", type=float, default=4.0)
    b.add_argument("--tr-over-taux", type=float, default=0.0)
    b.add_argument("--n", type=int, default=20)
    b.add_argument("--tau-min", type=float, default=0.05)
    b.add_argument("--tau-max", type=float, default=5.0)
    b.add_argument("--format", choices=("csv", "json"))
    b.add_argument("-o", "--output")
    b.set_defaults(func=cmd_budget)
    return ap


def _fail(code, exc):
    body = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(body), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if getattr(args, "stream", None) is None and args.command in ("emulate", "fit"):
        return _fail(EXIT_CONFIG, ConfigError("missing stream path"))
    try:
        return args.func(args)
    except (NoSolutionError, FitError, CalibrationError, NoEstimateError) as e:
        return _fail(EXIT_SOLVER, e)
    except (StreamFormatError, OSError) as e:
        return _fail(EXIT_IO, e)
    except (SchemeMismatchError, ConfigError, ValueError) as e:
        return _fail(EXIT_CONFIG, e)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
