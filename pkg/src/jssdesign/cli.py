"""Command line entry point.

Every stage reads and writes files, so each can be rerun on its own::

    jssdesign gen-family --jobs 4 --machines 3 --steps 40
    jssdesign gen-data --mode standard
    jssdesign gen-data --mode od
    jssdesign train --data jssdesign-out/od.jsonl
    jssdesign evaluate --data jssdesign-out/od.jsonl --model jssdesign-out/model_od.json
    jssdesign run --config experiment.cfg --set od.epochs=200

Settings come from a ``key=value`` file (``--config``), then from flags,
then from ``--set`` pairs; later sources win. ``JSSDESIGN_OUTPUT_DIR``
sets the default output directory. Exit codes: 0 ok, 1 usage, 2 stage
failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import datagen, pwl
from .experiment import ExperimentConfig, StageError, _stage, base_instance, parse_pairs, run_experiment
from .instance import perturb_family
from .learner import build_model, evaluate, load_model, save_model, train

log = logging.getLogger("jssdesign")

ENV_OUTPUT_DIR = "JSSDESIGN_OUTPUT_DIR"
EXIT_OK, EXIT_USAGE, EXIT_STAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


_CONFIG_FIELDS = [f for f in dataclasses.fields(ExperimentConfig) if f.name != "overrides"]


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value settings file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="extra setting, e.g. od.epochs=200 (repeatable)")
    g = p.add_argument_group("settings")
    for f in _CONFIG_FIELDS:
        g.add_argument("--" + f.name.replace("_", "-"), dest=f.name, default=None, metavar="V")


def _config(args) -> ExperimentConfig:
    pairs: Dict[str, str] = {}
    if os.environ.get(ENV_OUTPUT_DIR):
        pairs["out_dir"] = os.environ[ENV_OUTPUT_DIR]
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
        pairs.update(parse_pairs(text.splitlines()))
    for f in _CONFIG_FIELDS:
        value = getattr(args, f.name)
        if value is not None:
            pairs[f.name] = value
    pairs.update(parse_pairs(args.set))
    try:
        return ExperimentConfig.from_pairs(pairs)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad settings: {exc}") from exc


def _out(cfg: ExperimentConfig, given: Optional[str], default_name: str) -> Path:
    path = Path(given) if given else Path(cfg.out_dir) / default_name
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_family(args) -> int:
    cfg = _config(args)
    base = _stage("load-instance", base_instance, cfg)
    family = _stage("gen-family", perturb_family, base, cfg.perturbation())
    path = _out(cfg, args.out, "family.jsonl")
    datagen.save_family(family, path)
    print(f"wrote {len(family)} instances to {path}")
    return EXIT_OK


def cmd_gen_data(args) -> int:
    cfg = _config(args)
    fam_path = args.family or str(Path(cfg.out_dir) / "family.jsonl")
    family = _stage("load-family", datagen.load_family, fam_path)
    budget = cfg.budget(args.mode)
    if args.mode == datagen.STANDARD:
        ds = _stage("gen-data standard", datagen.generate_standard, family, budget,
                    budget.seed, cfg.workers)
    else:
        ds = _stage("gen-data od", datagen.generate_od, family, budget)
    path = _out(cfg, args.out, f"{args.mode}.jsonl")
    datagen.save_dataset(ds, path)
    print(f"wrote {len(ds)} {args.mode} entries to {path}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    ds = _stage("load-data", datagen.load_dataset, args.data)
    tcfg = cfg.train_config(ds.mode)
    inst = ds.entries[0].instance
    model, hist = _stage("train", train, build_model(inst.shape, tcfg.seed, inst.machine), ds, tcfg)
    path = _out(cfg, args.out, f"model_{ds.mode}.json")
    save_model(model, path)
    final = hist.loss[-1] if hist.loss else float("nan")
    print(f"trained {tcfg.epochs} epochs, final loss {final:.6g}; wrote {path}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    ds = _stage("load-data", datagen.load_dataset, args.data)
    model = _stage("load-model", load_model, args.model)
    m = _stage("evaluate", evaluate, model, ds)
    text = json.dumps(dataclasses.asdict(m), indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def theory_check(trials: int = 1000, seed: int = 0) -> Dict[str, object]:
    """Numerical checks of the PWL formulas; ``ok`` is the overall verdict."""
    f_p = pwl.PwlFunction.from_pieces([0, 1, 2], [0, 1], [0, -1])
    f_q = pwl.PwlFunction.from_pieces([0, 2], [0], [0])
    bound, actual = pwl.approximation_bound(f_p, f_q)
    rng = np.random.default_rng(seed)
    violations = 0
    for _ in range(trials):
        g = pwl.random_pwl(rng)
        b, a = pwl.approximation_bound(g, pwl.merge_approximant(g, rng))
        violations += int(a > b + 1e-9 * max(1.0, b))
    capacity = {
        "relu_p4_k1": pwl.relu_capacity(4, 1)[0],
        "relu_p16_k2": pwl.relu_capacity(16, 2)[0],
        "lipschitz_n1_L1_eps3": pwl.lipschitz_capacity(1, 1, 3),
        "lipschitz_n2_L2_eps1": pwl.lipschitz_capacity(2, 2, 1),
    }
    expected = {"relu_p4_k1": 1.0, "relu_p16_k2": 3.0,
                "lipschitz_n1_L1_eps3": 2, "lipschitz_n2_L2_eps1": 28}
    ok = violations == 0 and abs(bound - actual) < 1e-12 and capacity == expected
    return {"ok": ok, "trials": trials, "bound_violations": violations,
            "tight_example": {"bound": bound, "actual": actual}, "capacity": capacity}


def cmd_theory_check(args) -> int:
    result = theory_check(args.trials, args.seed)
    print(json.dumps(result, indent=2, sort_keys=True))
    return EXIT_OK if result["ok"] else EXIT_STAGE


def cmd_run(args) -> int:
    cfg = _config(args)
    report = run_experiment(cfg)
    for row in report.rows:
        lip = "n/a" if row.lipschitz_constant is None else f"{row.lipschitz_constant:.4g}"
        print(f"{row.mode:>8}: TV={row.total_variation:.6g} L={lip} "
              f"err={row.prediction_error:.4g}% viol={row.constraint_violation:.4g}% "
              f"gap={row.optimality_gap:.4g}% gen={row.generation_seconds:.2f}s")
    print(f"outputs in {cfg.out_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="jssdesign", description="Standard vs OD training data for job shop surrogates")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-family", help="write a slowdown family")
    _add_config_flags(p)
    p.add_argument("--out", help="family JSONL path")
    p.set_defaults(func=cmd_gen_family)

    p = sub.add_parser("gen-data", help="solve a family into a dataset")
    _add_config_flags(p)
    p.add_argument("--mode", choices=datagen.MODES, required=True)
    p.add_argument("--family", help="family JSONL (default: <out_dir>/family.jsonl)")
    p.add_argument("--out", help="dataset JSONL path")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model on a dataset")
    _add_config_flags(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="checkpoint path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", help="also write the metrics JSON here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("theory-check", help="check the PWL approximation formulas")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_theory_check)

    p = sub.add_parser("run", help="full pipeline for both modes")
    _add_config_flags(p)
    p.set_defaults(func=cmd_run)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except ValueError as exc:
        # malformed key=value lines in --set
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
