"""Command line entry point.

Exit codes: 0 success, 1 configuration error, 2 backend error, 3 data error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import BackendError, ConfigError, DataError, EmptyInputError, PersistenceError
from .runner import ALL_STRATEGIES, BUILTIN, RunConfig, builtin_path, run
from .survey import dataset_stats, load_dataset

EXIT_OK, EXIT_CONFIG, EXIT_BACKEND, EXIT_DATA = 0, 1, 2, 3


def _strategies(value: str) -> list[str]:
    if value == "all":
        return list(ALL_STRATEGIES)
    return [s.strip() for s in value.split(",") if s.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rfot", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="evaluate strategies on a dataset and write a report")
    r.add_argument("--config", help="TOML config file; flags override its values")
    r.add_argument("--dataset", help=f"JSONL/CSV dataset, or '{BUILTIN}' for the bundled fixture")
    r.add_argument("--strategy", type=_strategies, dest="strategies",
                   help=f"comma list from {','.join(ALL_STRATEGIES)} or 'all'")
    r.add_argument("--seed", type=int)
    r.add_argument("--samples", type=int)
    r.add_argument("--backend-url", dest="backend_url")
    r.add_argument("--model")
    r.add_argument("--api-key", dest="api_key")
    r.add_argument("--cassette", help=f"cassette file to replay (or record into), or '{BUILTIN}'")
    r.add_argument("--record", action="store_true", default=None,
                   help="call the live backend and persist every exchange into --cassette")
    r.add_argument("--jobs", type=int)
    r.add_argument("--out")
    r.add_argument("--trees", type=int, dest="n_trees", help="forest size M")
    r.add_argument("--k", type=int, help="thoughts drawn per tree")
    r.add_argument("--mode", choices=("majority_vote", "ordinal_mean"))
    r.add_argument("--chains", type=int, dest="n_chains")
    r.add_argument("--breadth", type=int)
    r.add_argument("--depth", type=int)
    r.add_argument("--llm-name", dest="llm_name", help="label for the LLM column of the report")

    s = sub.add_parser("stats", help="label counts and turns per record")
    s.add_argument("dataset")
    return parser


def _run(args) -> int:
    overrides = {
        k: getattr(args, k)
        for k in ("dataset", "strategies", "seed", "samples", "backend_url", "model", "api_key", "cassette",
                  "record", "jobs", "out", "n_trees", "k", "mode", "n_chains", "breadth", "depth", "llm_name")
    }
    if args.config:
        config = RunConfig.from_file(args.config, **overrides)
    else:
        config = RunConfig(**{k: v for k, v in overrides.items() if v is not None})
    result = run(config)
    sys.stdout.write((result.out_dir / "results.txt").read_text(encoding="utf-8"))
    return EXIT_OK


def _stats(args) -> int:
    path = builtin_path("synthetic_happiness.jsonl") if args.dataset == BUILTIN else args.dataset
    stats = dataset_stats(load_dataset(path))
    print(f"{'label':<14}{'samples':>8}{'turns':>7}")
    for name, count, turns in stats.as_rows():
        print(f"{name:<14}{count:>8}{turns:>7}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args) if args.command == "run" else _stats(args)
    except (ConfigError, PersistenceError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (DataError, EmptyInputError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
