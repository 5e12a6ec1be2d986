"""Command-line front end.

Subcommands ``describe``, ``unitroot``, ``causality`` and ``estimate`` run one
section of a configuration; ``replicate`` runs all of them; ``ingest`` loads,
classifies and transforms the input data and writes it back out.

Exit codes: 0 success, 1 validation error, 2 estimation error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from .config import ConfigError, RunConfig, load_config, replication_config
from .ingest import write_csv
from .pipeline import (EXIT_IO, EXIT_OK, EXIT_VALIDATION, PipelineError, load_data, model_panel,
                       run_pipeline)

SECTIONS = {
    "describe": ["describe"],
    "unitroot": ["unit_root"],
    "causality": ["causality"],
    "estimate": ["models"],
    "replicate": None,
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, default=None,
                   help="YAML run configuration (default: the bundled replication config)")
    p.add_argument("--out", type=Path, default=Path("dynpanel-out"),
                   help="output directory (default: %(default)s)")
    p.add_argument("--offline", action="store_true",
                   help="never touch the network; indicator fetches must hit the cache")
    p.add_argument("--seed", type=int, default=None,
                   help="seed for the synthetic data source (overrides the config)")
    p.add_argument("--data", type=Path, default=None,
                   help="wide CSV input; overrides the configured data source")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dynpanel",
        description="Dynamic panel GMM, panel unit-root and Granger non-causality tests, "
                    "and the trade-facilitation replication pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "ingest": "load, classify and transform the input panel; write data.csv and model_data.csv",
        "describe": "descriptive statistics table",
        "unitroot": "Levin-Lin-Chu and Im-Pesaran-Shin panel unit-root tests",
        "causality": "Dumitrescu-Hurlin panel Granger non-causality tests",
        "estimate": "difference / system GMM regression tables with diagnostics",
        "replicate": "run every configured section",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        _add_common(p)
    return parser


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else replication_config()
    if args.data is not None:
        cfg = dataclasses.replace(cfg, data=dataclasses.replace(cfg.data, source="csv",
                                                                csv=args.data))
    return cfg


def _ingest(cfg: RunConfig, args) -> int:
    raw = load_data(cfg, seed=args.seed, offline=args.offline)
    panel = model_panel(raw, cfg)
    args.out.mkdir(parents=True, exist_ok=True)
    write_csv(raw, args.out / "data.csv")
    write_csv(panel, args.out / "model_data.csv")
    print(f"{raw.n_units} units x {raw.n_periods} periods = {raw.n_units * raw.n_periods} rows")
    if raw.group_tag is not None:
        for g in raw.groups():
            n = raw.group_tag.count(g)
            print(f"  {g}: {n} units, {n * raw.n_periods} observations")
    print(f"wrote {args.out / 'data.csv'} and {args.out / 'model_data.csv'}")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        if args.command == "ingest":
            return _ingest(cfg, args)
        sections = SECTIONS[args.command]
        if sections is not None and not any(s in cfg.sections() for s in sections):
            print(f"error: configuration has no {sections[0]} section", file=sys.stderr)
            return EXIT_VALIDATION
        result = run_pipeline(cfg, args.out, sections=sections, seed=args.seed,
                              offline=args.offline)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    names: List[str] = sorted(p.name for p in result.files)
    print(f"wrote {len(names)} files to {args.out}: {', '.join(names)}")
    print(f"errors: {result.log.count('error')}  warnings: {result.log.count('warning')}")
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
