"""``homecare`` command line: generate, run, report, inspect."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .cohort import CohortDataError
from .runner import ExperimentConfig, ExperimentError, inspect_weights, report, run_experiment
from .synthgen import ConfigError, SyntheticConfig, write_cohort

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG, EXIT_DATA, EXIT_USAGE = 0, 1, 2, 3, 64


def _split(text: str | None) -> list[str] | None:
    if text is None:
        return None
    return [part.strip() for part in text.split(",") if part.strip()]


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="homecare", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic cohort CSV")
    g.add_argument("--config", help="synthetic cohort config (JSON); defaults if omitted")
    g.add_argument("--out", required=True, help="output CSV path")
    g.add_argument("--seed", type=int, help="override the config seed")

    r = sub.add_parser("run", help="run an experiment")
    r.add_argument("--config", required=True, help="experiment config (JSON)")
    r.add_argument("--out", help="output directory (overrides config)")
    r.add_argument("--seed", type=int, help="override the config seed")
    r.add_argument("--methods", help="comma list overriding config methods")
    r.add_argument("--levels", help="comma list overriding config info_levels")

    rep = sub.add_parser("report", help="recompute averages.csv from monthly.csv")
    rep.add_argument("--out", required=True, help="run output directory")

    i = sub.add_parser("inspect", help="rank a linear model's features by |weight|")
    i.add_argument("--model", required=True, help="model JSON written by run")
    i.add_argument("--schema", help="schema.json (default: next to the model)")
    i.add_argument("--top", type=int, default=None, help="show only the first N features")
    return p


def _generate(args) -> None:
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    if args.seed is not None:
        data["seed"] = args.seed
    config = SyntheticConfig.from_dict(data)
    frame = write_cohort(config, args.out)
    print(f"wrote {len(frame)} rows for {frame['citizen_id'].nunique()} citizens to {args.out}")


def _run(args) -> None:
    config = ExperimentConfig.load(args.config)
    data = config.to_dict()
    if args.out is not None:
        data["output_dir"] = args.out
    if args.seed is not None:
        data["seed"] = args.seed
    if args.methods is not None:
        data["methods"] = _split(args.methods)
    if args.levels is not None:
        data["info_levels"] = _split(args.levels)
    config = ExperimentConfig.from_dict(data)
    if not Path(config.input_csv).exists():
        raise ConfigError(f"input_csv not found: {config.input_csv}")
    result = run_experiment(config)
    print(f"{len(result.averages)} cells in {result.wall_clock:.1f}s -> {config.output_dir}")
    for (method, level), value in result.averages.items():
        print(f"  {method:<24} {level:<5} {value:.4f}")


def _report(args) -> None:
    out = Path(args.out)
    if not (out / "monthly.csv").exists():
        raise ConfigError(f"no monthly.csv in {out}")
    averages = report(out)
    for (method, level), value in averages.items():
        print(f"{method:<24} {level:<5} {value:.4f}")


def _inspect(args) -> None:
    ranked = inspect_weights(args.model, args.schema)
    for name, weight in ranked[: args.top] if args.top else ranked:
        print(f"{name:<24} {weight:.4f}")


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    handler = {"generate": _generate, "run": _run, "report": _report,
               "inspect": _inspect}[args.command]
    try:
        handler(args)
    except ConfigError as exc:
        print(f"error[config]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CohortDataError as exc:
        print(f"error[data]: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ExperimentError as exc:
        print(f"error[run]: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, OSError) as exc:
        print(f"error[{args.command}]: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
