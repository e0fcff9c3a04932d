"""Command line entry point: ``ampse <mode> --config path``."""

from __future__ import annotations

import argparse
import dataclasses
import sys

from .harness import MODES, ConfigError, RunError, check_config, emit_report, parse_config, \
    run_ensemble, write_report


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ampse", description="AMP state-evolution experiments")
    p.add_argument("mode", choices=MODES)
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", help="report path (default: config output.path, else stdout)")
    p.add_argument("--format", choices=("csv", "json"), help="report format")
    p.add_argument("--workers", type=int, help="replicates run in parallel")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with open(args.config, "rb") as fh:
            text = fh.read()
    except OSError as e:
        print(f"ampse: cannot read config: {e}", file=sys.stderr)
        return 2
    try:
        cfg = parse_config(text)
        over = {"mode": args.mode}
        for flag, key in (("seed", "seed"), ("out", "output_path"), ("format", "output_format"),
                          ("workers", "workers")):
            if getattr(args, flag) is not None:
                over[key] = getattr(args, flag)
        cfg = check_config(dataclasses.replace(cfg, **over))
        report = run_ensemble(cfg)
        for msg in report.metadata.get("precision_warnings", []):
            print(f"ampse: warning: {msg}", file=sys.stderr)
        if cfg.output_path:
            write_report(report, cfg.output_path, cfg.output_format)
        else:
            sys.stdout.buffer.write(emit_report(report, cfg.output_format))
            sys.stdout.flush()
    except (ConfigError, RunError) as e:
        print(f"ampse: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
