"""Command-line experiment runner.

    dcflab encrypt INPUT --key STRING [--config C] [--seed N] [--out DIR]
    dcflab attack  [--config C] [--seed N] [--out DIR]
    dcflab heatmap [--config C] [--seed N] [--out DIR]
    dcflab report  [--config C] [--seed N] [--out DIR]

``--config`` takes a JSON file or a bundled preset (``presets/vulnerable``,
``presets/dcf-full``, ``presets/fullscan``).  Exit codes: 0 success, 1 usage,
config or analysis error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import config as config_mod
from .analysis import constancy_report, render_heatmap
from .dcf_guard import encrypt_file, key_from_string
from .errors import LabError
from .timing_attack import run_attack, write_profiles_csv

EXIT_OK, EXIT_USAGE, EXIT_IO = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load(args) -> config_mod.ExperimentConfig:
    cfg = config_mod.load(args.config) if args.config else config_mod.ExperimentConfig()
    return cfg.with_overrides(seed=args.seed, output_dir=args.out)


def _out_dir(cfg) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_encrypt(args) -> int:
    cfg = _load(args)
    key = key_from_string(args.key)
    src = Path(args.input)
    dst = Path(args.output) if args.output else _out_dir(cfg) / (src.name + ".enc")
    log = dst.with_name(dst.name + ".cycles.csv")
    res = encrypt_file(cfg.guard_config, cfg.cache, key, src, dst, log)
    print(f"wrote {dst} ({len(res.ciphertext)} bytes), cycle log {log}, "
          f"{len(res.job.flush_events)} flushes")
    return EXIT_OK


def cmd_attack(args) -> int:
    cfg = _load(args)
    a = cfg.attack
    outcome = run_attack(cfg.cache, cfg.guard_config, a.samples, cfg.seed, a.method, a.positions,
                         a.profiling_samples)
    out = _out_dir(cfg)
    report = {"config": cfg.to_dict(), **outcome.report()}
    path = out / "attack_report.json"
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    write_profiles_csv(out / "reference_profiles.csv", outcome.reference_profiles, "reference")
    write_profiles_csv(out / "attack_profiles.csv", outcome.attack_profiles, "attack")
    print(f"bytes correct {outcome.bytes_correct}/16, line-level {outcome.line_bits_correct}/16; "
          f"report {path}")
    return EXIT_OK


def cmd_heatmap(args) -> int:
    cfg = _load(args)
    hm = render_heatmap(cfg.heatmap, seed=cfg.seed)
    paths = hm.write(_out_dir(cfg))
    print(f"wrote {paths['pgm']}, {paths['csv']}")
    return EXIT_OK


def cmd_report(args) -> int:
    cfg = _load(args)
    rep = constancy_report(cfg.cache, cfg.guard_config, cfg.report.blocks, cfg.seed, cfg.report.warmup)
    paths = rep.write(_out_dir(cfg))
    print(f"k_i {rep.k_i:g}, coefficient of variation {rep.coefficient_of_variation:.6f}; "
          f"wrote {paths['summary']}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file or presets/<name>")
    common.add_argument("--seed", type=int, help="experiment seed (overrides the config)")
    common.add_argument("--out", help="output directory (overrides the config)")

    p = _Parser(prog="dcflab", description="Cache-timing lab: table-driven cipher, attack and DCF guard.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    e = sub.add_parser("encrypt", parents=[common], help="encrypt a file under the configured guard")
    e.add_argument("input")
    e.add_argument("--key", required=True, help="key string; the first 16 UTF-8 bytes are used")
    e.add_argument("--output", help="ciphertext path (default OUT/INPUT.enc)")
    e.set_defaults(func=cmd_encrypt)

    sub.add_parser("attack", parents=[common], help="profiling + attack run").set_defaults(func=cmd_attack)
    sub.add_parser("heatmap", parents=[common], help="timing heatmap (PGM + CSV)").set_defaults(func=cmd_heatmap)
    sub.add_parser("report", parents=[common], help="constancy report").set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except OSError as e:
        print(f"dcflab: I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except (LabError, ValueError) as e:
        print(f"dcflab: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
