"""Command-line entry point.

    closmcast fig3 --preset paper --groups 100 --seed 7 --out results/
    closmcast replay-fig1

Settings come from built-in defaults, then ``--config``, then flags. The
seed falls back to ``$CLOSMCAST_SEED`` when neither config nor flag sets it.
On failure a single ``closmcast: error: <kind>: <message>`` line goes to
stderr and the exit status is nonzero.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .experiments import (
    EXPERIMENTS,
    ConfigError,
    make_config,
    read_config_file,
    replay_fig1,
    run,
    summarize,
)

EXIT_USAGE = 2
EXIT_FAILURE = 1


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # keep argparse failures to one line
        raise _UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="closmcast", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="key = value settings file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--preset", choices=["paper", "fig1"])
        for key in ("n", "m", "l", "s", "u"):
            p.add_argument(f"--{key}", type=int)
        p.add_argument("--d", help="comma-separated group sizes")
        p.add_argument("--k", help="comma-separated cluster counts")
        p.add_argument("--groups", type=int, help="groups per (d, k) cell")
        p.add_argument("--flow-pkts", type=int)
        p.add_argument("--restarts", type=int)
        p.add_argument("--groups-file", help="pinned groups, one 'g <id> src <h> members ...' per line")
        p.add_argument("--verbose", action="store_true", default=None)

    p = sub.add_parser("replay-fig1", help="replay the four-pod worked example")
    p.add_argument("--seed", type=int)
    p.add_argument("--json", action="store_true", help="print the result as JSON")
    return parser


def _settings(args: argparse.Namespace) -> dict:
    settings: dict = {}
    if args.config:
        settings.update(read_config_file(args.config))
    flags = {
        "seed": args.seed,
        "out": args.out,
        "preset": args.preset,
        "n": args.n, "m": args.m, "l": args.l, "s": args.s, "u": args.u,
        "d": args.d,
        "k": args.k,
        "groups": args.groups,
        "flow_pkts": args.flow_pkts,
        "restarts": args.restarts,
        "groups_file": args.groups_file,
        "verbose": args.verbose,
    }
    if flags["groups"] is not None:
        settings.pop("n_groups", None)
    settings.update({k: v for k, v in flags.items() if v is not None})
    if "seed" not in settings and os.environ.get("CLOSMCAST_SEED"):
        settings["seed"] = os.environ["CLOSMCAST_SEED"]
    return settings


def _seed_value(raw) -> int:
    try:
        seed = int(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"seed must be an integer, got {raw!r}") from exc
    if not 0 <= seed < 2**64:
        raise ConfigError(f"seed {seed} is not a u64")
    return seed


def _replay(args) -> int:
    seed = args.seed
    if seed is None:
        seed = _seed_value(os.environ.get("CLOSMCAST_SEED", 0))
    res = replay_fig1(seed)
    if args.json:
        print(json.dumps(res, indent=2))
        return 0
    print(f"clusters (1-based pods): {res['clusters']}")
    print(f"Elmo extra transmissions, computed OR rule: {res['et_elmo_or']}")
    print(f"Elmo extra transmissions, stated 1111 rule: {res['et_elmo_stated']} "
          f"(simulated {res['sim_elmo_stated']})")
    print(f"Bert extra transmissions: {res['et_bert']} (simulated {res['sim_bert']})")
    print(f"Bert extra upstream packets per layer: {res['upstream_extra']}")
    print(f"header bits: Elmo {res['elmo_bits']}, Bert {res['bert_bits']}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
        )
        if args.command == "replay-fig1":
            return _replay(args)
        settings = _settings(args)
        if "seed" in settings:
            settings["seed"] = _seed_value(settings["seed"])
        cfg = make_config(args.command, settings)
        print(summarize(run(cfg)))
        return 0
    except (_UsageError, ConfigError) as exc:
        print(f"closmcast: error: usage: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        print(f"closmcast: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
