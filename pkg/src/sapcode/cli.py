"""Command-line entry point: ``sapcode <subcommand> ...``.

Exit status is 0 when every requested output was written.  Failures print a
single JSON line ``{"error": kind, "message": ...}`` to stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness, qln_decoder, quantum_core
from .superimposed_code import CodeParameterError, DecodeFailure, construct_codebook, load_codebook, save_codebook

EXIT_CONFIG, EXIT_IO, EXIT_RUNTIME = 2, 3, 4


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON experiment config")
    p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    p.add_argument("--trials", type=int, help="Monte Carlo trials")
    p.add_argument("--out", type=Path, help="output path")


def _kv(text: str) -> tuple[str, object]:
    key, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    try:
        return key, json.loads(value)
    except json.JSONDecodeError:
        return key, value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sapcode", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("codebook", help="construct, export or verify a codebook")
    _common(p)
    p.add_argument("--q", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--K", dest="code_K", type=int)
    p.add_argument("--G", type=int)
    p.add_argument("--verify", type=Path, help="load and verify an exported codebook instead")

    p = sub.add_parser("calibrate", help="eigenvalue-ratio threshold for zero false alarm")
    _common(p)
    p.add_argument("--antennas", type=int)
    p.add_argument("--users", type=int)
    p.add_argument("--target-pf", type=float, default=0.0)

    p = sub.add_parser("simulate", help="run a Monte Carlo scenario")
    _common(p)
    p.add_argument("--attack", choices=["SC", "WB-PJ", "PB-PJ", "mixed"])
    p.add_argument("--workers", type=int)

    p = sub.add_parser("figure", help="write the data behind a figure as CSV")
    _common(p)
    p.add_argument("name", choices=sorted(harness.FIGURE_DEFAULTS))
    p.add_argument("--set", dest="overrides", type=_kv, action="append", default=[],
                   metavar="KEY=JSON", help="override a figure option, e.g. --set users=[12,16]")

    p = sub.add_parser("quantum-truth-table", help="parity circuit on the four one-bit functions")
    _common(p)
    return parser


def _config(args, **extra) -> harness.ExperimentConfig:
    return harness.load_config(args.config, seed=args.seed, trials=args.trials, **extra)


def cmd_codebook(args) -> dict:
    if args.verify:
        book = load_codebook(args.verify, verify=True)
        return {"verified": str(args.verify), "params": book.params.__dict__, "length": book.length}
    cfg = _config(args, q=args.q, k=args.k, code_K=args.code_K, G=args.G)
    book = construct_codebook(cfg.code)
    info = {"q": cfg.q, "k": cfg.k, "K": cfg.code_K, "G": cfg.G, "length": book.length, "cardinality": len(book)}
    if args.out:
        save_codebook(book, args.out)
        info["out"] = str(args.out)
    return info


def cmd_calibrate(args) -> dict:
    cfg = _config(args)
    s = cfg.system
    antennas = args.antennas or s.n_antennas
    users = args.users or s.n_users
    trials = args.trials or cfg.calibration_trials
    thr = qln_decoder.calibrate_threshold(antennas, users, args.target_pf, trials, seed=cfg.seed)
    info = {
        "n_antennas": antennas, "n_users": users, "target_pf": args.target_pf, "trials": trials,
        "threshold": thr, "mp_bound": qln_decoder.mp_ratio_bound(antennas, users + 2),
    }
    if args.out:
        args.out.write_text(json.dumps(info, indent=2))
    return info


def cmd_simulate(args) -> dict:
    cfg = _config(args, attack_mode=args.attack, workers=args.workers)
    out = args.out or (Path(cfg.out) if cfg.out else None)
    if cfg.sweep is not None:
        points = harness.run_sweep(cfg)
        rows = [{"value": v, **json.loads(s.to_json())} for v, s in points]
        if out:
            out.write_text(json.dumps(rows, indent=2))
        return {"sweep": rows}
    summary, records = harness.run_scenario(cfg)
    if out:
        harness.write_records(out, records, cfg.to_dict())
        out.with_suffix(".summary.json").write_text(summary.to_json())
    return json.loads(summary.to_json())


def cmd_figure(args) -> dict:
    overrides = dict(args.overrides)
    if args.trials is not None and args.name == "fig6":
        overrides["trials"] = args.trials
    if args.seed is not None and args.name == "fig6":
        overrides["seed"] = args.seed
    if args.config:
        overrides = {**json.loads(args.config.read_text()).get(args.name, {}), **overrides}
    harness.figure_options(args.name, overrides)  # validate before writing
    out = args.out or Path(f"{args.name}.csv")
    harness.figure_command(args.name, out, overrides)
    return {"figure": args.name, "out": str(out)}


def cmd_truth_table(args) -> dict:
    rows = quantum_core.truth_table()
    table = [{"function": n, "f0": a, "f1": b, "parity": bit, "probability": p} for n, a, b, bit, p in rows]
    if args.out:
        args.out.write_text(json.dumps(table, indent=2))
    return {"truth_table": table}


COMMANDS = {
    "codebook": cmd_codebook,
    "calibrate": cmd_calibrate,
    "simulate": cmd_simulate,
    "figure": cmd_figure,
    "quantum-truth-table": cmd_truth_table,
}


def _fail(kind: str, exc: Exception, code: int) -> int:
    print(json.dumps({"error": kind, "message": str(exc)}), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        result = COMMANDS[args.command](args)
    except (harness.ConfigError, CodeParameterError, qln_decoder.CalibrationError, json.JSONDecodeError) as exc:
        return _fail("config", exc, EXIT_CONFIG)
    except OSError as exc:
        return _fail("io", exc, EXIT_IO)
    except (DecodeFailure, ValueError, RuntimeError) as exc:
        return _fail("runtime", exc, EXIT_RUNTIME)
    print(json.dumps(result, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
