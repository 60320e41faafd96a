"""Command-line entry point: ``sketchreg <experiment|run|gen|diag> ...``.

Exit codes: 0 success, 2 invalid configuration, 1 invariant violation or
other library error, 130 on interrupt (partial results are flushed).
"""

from __future__ import annotations

import argparse
import json
import sys

from . import instances
from .errors import ConfigInvalid, InvalidParams, InvariantViolation, SketchRegError
from .harness import EXPERIMENTS, ExperimentConfig, load_preset, preset_names, run_experiment

GEN_KINDS = ("cs-adversarial", "lev-adversarial", "lower-bound-d1", "lower-bound-d2", "random-wellcond")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _add_experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--s", type=int, help="Count-Sketch nonzeros per column")
    p.add_argument("--alpha", type=int)
    p.add_argument("--beta", type=int)
    p.add_argument("--eps", type=float, help="accuracy scale (default sqrt(d/m))")
    p.add_argument("--slack-C", dest="slack_C", type=float)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", dest="master_seed", type=int)
    p.add_argument("--sketch", help="gaussian|srht|countsketch|leverage|composed:<chain>")
    p.add_argument("--noise", type=float, help="linf-positive target noise level")
    p.add_argument("--mixture", action="store_const", const=True,
                   help="lower-bound-l2: draw each trial from either hard distribution with probability 1/2")
    p.add_argument("--aips-c", dest="aips_c", type=float)
    p.add_argument("--out", dest="out_path")
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--workers", type=int)


CONFIG_KEYS = ("n", "d", "m", "s", "alpha", "beta", "eps", "slack_C", "trials", "master_seed", "sketch",
               "noise", "mixture", "aips_c", "out_path", "format", "workers")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sketchreg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in EXPERIMENTS:
        _add_experiment_flags(sub.add_parser(name, help=f"run the {name} experiment"))
    run = sub.add_parser("run", help="run a shipped preset (flags override it)")
    run.add_argument("--preset", required=True, help="one of: " + ", ".join(preset_names()))
    _add_experiment_flags(run)
    diag = sub.add_parser("diag", help="alias for diagnostics-suite")
    _add_experiment_flags(diag)

    gen = sub.add_parser("gen", help="write an instance in the plain-text matrix format")
    gen.add_argument("kind", choices=GEN_KINDS)
    gen.add_argument("--n", type=int)
    gen.add_argument("--d", type=int, required=True)
    gen.add_argument("--alpha", type=int)
    gen.add_argument("--beta", type=int)
    gen.add_argument("--noise", type=float, default=1.0)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True, help="output prefix (writes .A.txt, .b.txt, .json)")
    return parser


def _config_from_args(args) -> ExperimentConfig:
    overrides = {k: getattr(args, k) for k in CONFIG_KEYS if getattr(args, k, None) is not None}
    if args.command == "run":
        return load_preset(args.preset, **overrides)
    experiment = "diagnostics-suite" if args.command == "diag" else args.command
    return ExperimentConfig(experiment=experiment, **overrides)


def _gen(args) -> dict:
    kind = args.kind
    if kind == "cs-adversarial":
        p = instances.CsAdversarialParams(args.d, args.alpha, args.n)
        inst, params = instances.gen_cs_adversarial(p), instances.params_dict(p)
    elif kind == "lev-adversarial":
        p = instances.LevAdversarialParams(args.d, args.alpha, args.beta)
        inst, params = instances.gen_lev_adversarial(p), instances.params_dict(p)
    elif kind == "lower-bound-d1":
        inst, params = instances.gen_lower_bound_d1(args.n, args.d, args.seed), {"n": args.n, "d": args.d}
    elif kind == "lower-bound-d2":
        inst, params = instances.gen_lower_bound_d2(args.n, args.d, args.seed), {"n": args.n, "d": args.d}
    else:
        inst = instances.gen_random_wellcond(args.n, args.d, args.noise, args.seed)
        params = {"n": args.n, "d": args.d, "noise": args.noise}
    paths = instances.save_instance(inst, args.out, params=params, seed=args.seed)
    return {"written": [str(p) for p in paths], "n": inst.n, "d": inst.d}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "gen":
            try:
                print(json.dumps(_gen(args)))
            except (InvalidParams, TypeError) as exc:
                raise ConfigInvalid("gen", str(exc)) from None
            return 0
        cfg = _config_from_args(args)
        summary = run_experiment(cfg)
    except ConfigInvalid as exc:
        print(f"sketchreg: invalid configuration: {exc}", file=sys.stderr)
        return 2
    except InvariantViolation as exc:
        print(f"sketchreg: invariant violation (library bug): {exc}", file=sys.stderr)
        return 1
    except SketchRegError as exc:
        print(f"sketchreg: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print("sketchreg: interrupted; partial results flushed", file=sys.stderr)
        return 130
    print(json.dumps(summary.to_dict(), sort_keys=True, indent=1))
    return 0


if __name__ == "__main__":
    sys.exit(main())
