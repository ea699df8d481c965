"""Command-line entry point.

Exit codes: 0 success, 1 any error (usage, validation, I/O),
2 the requested operating point is insecure (R = 0).

Plotting a curve needs no extra dependency here; for example::

    rrdps curve --out c.csv && python -c "import pandas as pd; \
pd.read_csv('c.csv', comment='#').plot(x='l_km', y='R', logy=True).figure.savefig('c.png')"
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

from . import __version__
from . import config as cfgmod
from .calibration import (
    calibrate_decoy,
    calibrate_monitor,
    decoy_records_from_jsonl,
    monitor_records_from_jsonl,
    tha_adjust,
)
from .channel import bit_error_rate, detection_rate
from .errors import RRDPSError
from .optimizer import curve, evaluate_point, optimize_point
from .security import VacuumBounds
from .sim import run_blocks

EXIT_OK, EXIT_ERROR, EXIT_INSECURE = 0, 1, 2
SIM_COLUMNS = ["distance_km", "n_blocks", "Q_hat", "Q_model", "e_bit_hat", "e_bit_model", "se_Q", "se_e"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def dumps(obj) -> str:
    """Canonical JSON used for every structured output."""
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _write(text: str, out: str | None) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _stamp(doc: dict, **extra) -> dict:
    return {"tool_version": __version__, "config_hash": cfgmod.config_hash({"scenario": doc, **extra})}


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    return max(1, int(os.environ.get("RRDPS_THREADS", "1")))


def _scenario(args) -> dict:
    """Effective scenario: defaults < --config file < explicit flags."""
    over: dict = {"source": {}, "sim": {}}
    for flag, key in (("L", "L"), ("case", "case"), ("spread", "spread")):
        val = getattr(args, flag, None)
        if val is not None:
            over["source"][key] = val
    for flag in ("seed", "n_blocks", "fidelity"):
        val = getattr(args, flag, None)
        if val is not None:
            over["sim"][flag] = val
    return cfgmod.load_scenario(args.config, {k: v for k, v in over.items() if v})


def point_payload(point, doc: dict, **extra) -> dict:
    return {**point.to_dict(), **_stamp(doc, **extra)}


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_keyrate(args, doc: dict) -> int:
    cfg = cfgmod.optimize_config(doc)
    eps = args.epsilon if cfg.case != "i" else None
    p = evaluate_point(args.distance, args.mu0, args.nu_th, eps, cfg)
    extra = {"l": args.distance, "mu0": args.mu0, "nu_th": args.nu_th, "epsilon": eps}
    _write(dumps(point_payload(p, doc, command="keyrate", **extra)), args.out)
    return EXIT_INSECURE if p.insecure else EXIT_OK


def cmd_optimize(args, doc: dict) -> int:
    p = optimize_point(args.distance, cfgmod.optimize_config(doc))
    _write(dumps(point_payload(p, doc, command="optimize", l=args.distance)), args.out)
    return EXIT_INSECURE if p.insecure else EXIT_OK


def cmd_curve(args, doc: dict) -> int:
    cfg = cfgmod.optimize_config(doc)
    n = int(math.floor((args.to - args.start) / args.step + 1e-9)) + 1
    distances = [round(args.start + k * args.step, 12) for k in range(max(n, 0))]
    res = curve(distances, cfg, workers=_threads(args))
    res.config_hash = _stamp(doc, command="curve", distances=distances, per_block=args.per_block)["config_hash"]
    _write(res.to_csv(per_block=args.per_block, L=cfg.L), args.out)
    return EXIT_OK


def cmd_simulate(args, doc: dict) -> int:
    distances = doc["sim"]["distances"] if args.distances is None else args.distances
    stamp = _stamp(doc, command="simulate", distances=distances)
    lines = [f"# rrdps {__version__} config_hash={stamp['config_hash']}", ",".join(SIM_COLUMNS)]
    for l in distances:
        sc = cfgmod.sim_config(doc, l)
        res = run_blocks(sc, workers=_threads(args))
        eta = sc.channel.eta_sy
        Q = detection_rate(sc.L, sc.mu0, eta, sc.channel.p_d)
        e = bit_error_rate(sc.L, sc.mu0, eta, sc.channel.p_d, sc.channel.e_sym) if Q > 0 else 0.0
        row = [l, sc.n_blocks, res.Q_hat, Q, res.e_bit_hat, e, res.se_Q, res.se_e]
        lines.append(",".join(repr(float(x)) if i != 1 else str(x) for i, x in enumerate(row)))
    _write("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_calibrate_decoy(args, doc: dict) -> int:
    eta_d = doc["channel"]["eta_d"] if args.eta_d is None else args.eta_d
    p_d = doc["channel"]["p_d"] if args.p_d is None else args.p_d
    records = decoy_records_from_jsonl(args.input, eta_d, p_d, args.confidence)
    bounds, clamped = calibrate_decoy(records)
    stamp = _stamp(doc, command="calibrate-decoy", eta_d=eta_d, p_d=p_d, confidence=args.confidence,
                   input=Path(args.input).read_text())
    payload = {**bounds.as_dict(), "clamped": [clamped[0], clamped[1]], **stamp}
    _write(dumps(payload), args.out)
    return EXIT_OK


def cmd_calibrate_monitor(args, doc: dict) -> int:
    records = monitor_records_from_jsonl(args.input, args.eta)
    bounds = calibrate_monitor(records, amplitude=args.amplitude)
    stamp = _stamp(doc, command="calibrate-monitor", eta=args.eta, amplitude=args.amplitude,
                   input=Path(args.input).read_text())
    _write(dumps({**bounds.as_dict(), **stamp}), args.out)
    return EXIT_OK


def cmd_tha_adjust(args, doc: dict) -> int:
    with open(args.input) as fh:
        raw = json.load(fh)
    bounds = VacuumBounds(**{k: raw[k] for k in ("p_U0", "p_L0", "p_U1", "p_L1")})
    adjusted = tha_adjust(bounds, args.mu_out)
    stamp = _stamp(doc, command="tha-adjust", mu_out=args.mu_out, bounds=bounds.as_dict())
    _write(dumps({**adjusted.as_dict(), **stamp}), args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario JSON overriding the built-in defaults")
    common.add_argument("--emit-config", action="store_true", help="print the effective scenario and exit")
    common.add_argument("--threads", type=int, help="worker cap (fallback: $RRDPS_THREADS)")
    common.add_argument("--out", help="output file (default: stdout)")

    source = argparse.ArgumentParser(add_help=False)
    source.add_argument("--case", choices=["i", "ii", "coherent"])
    source.add_argument("--spread", type=float, help="relative half-width of the bit-1 intensity range")
    source.add_argument("--L", type=int, help="pulses per block")

    p = _Parser(prog="rrdps", description="RRDPS key-rate, calibration and simulation tools.")
    p.add_argument("--version", action="version", version=f"rrdps {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("keyrate", parents=[common, source], help="evaluate one operating point")
    s.add_argument("--distance", type=float, required=True)
    s.add_argument("--mu0", type=float, required=True)
    s.add_argument("--nu-th", dest="nu_th", type=int, required=True)
    s.add_argument("--epsilon", type=float, default=1e-10)
    s.set_defaults(func=cmd_keyrate)

    s = sub.add_parser("optimize", parents=[common, source], help="optimise the key rate at one distance")
    s.add_argument("--distance", type=float, required=True)
    s.set_defaults(func=cmd_optimize)

    s = sub.add_parser("curve", parents=[common, source], help="optimised key rate versus distance (CSV)")
    s.add_argument("--from", dest="start", type=float, default=0.0)
    s.add_argument("--to", type=float, default=200.0)
    s.add_argument("--step", type=float, default=5.0)
    s.add_argument("--per-block", action="store_true", help="report R per block instead of per pulse")
    s.set_defaults(func=cmd_curve)

    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo check of Q and e_bit (CSV)")
    s.add_argument("--L", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--n-blocks", dest="n_blocks", type=int)
    s.add_argument("--fidelity", choices=["model", "pulse"])
    s.add_argument("--distances", type=float, nargs="+")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("calibrate-decoy", parents=[common], help="vacuum bounds from detector-decoy counts")
    s.add_argument("--input", required=True, help="JSON lines: {bit, eta, N, N_vac}")
    s.add_argument("--eta-d", dest="eta_d", type=float)
    s.add_argument("--p-d", dest="p_d", type=float)
    s.add_argument("--confidence", type=float, help="Hoeffding failure probability per setting")
    s.set_defaults(func=cmd_calibrate_decoy)

    s = sub.add_parser("calibrate-monitor", parents=[common], help="vacuum bounds from intensity monitoring")
    s.add_argument("--input", required=True, help="JSON lines: {bit, beta_minus, beta_plus}")
    s.add_argument("--eta", type=float, required=True, help="tap transmittance towards Bob")
    s.add_argument("--amplitude", action="store_true", help="read beta as a field amplitude")
    s.set_defaults(func=cmd_calibrate_monitor)

    s = sub.add_parser("tha-adjust", parents=[common], help="attenuate vacuum bounds for Trojan-horse light")
    s.add_argument("--input", required=True, help="VacuumBounds JSON")
    s.add_argument("--mu-out", dest="mu_out", type=float, required=True)
    s.set_defaults(func=cmd_tha_adjust)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        doc = _scenario(args)
        if args.emit_config:
            _write(dumps(doc), args.out)
            return EXIT_OK
        return args.func(args, doc)
    except (OSError, ValueError, KeyError, ZeroDivisionError, RRDPSError, json.JSONDecodeError) as exc:
        print(f"rrdps {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
