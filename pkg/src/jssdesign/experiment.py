"""End-to-end Standard vs OD experiment: config, pipeline and report files."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import datagen
from .datagen import OD, STANDARD, Dataset
from .instance import JssInstance, PerturbationSpec, parse_instance, perturb_family, random_instance
from .learner import TrainConfig, build_model, evaluate, save_model, train
from .solver import SolveBudget

log = logging.getLogger(__name__)

REPORT_SCHEMA = "jssdesign-report"
REPORT_VERSION = 1
ROW_COLUMNS = (
    "mode",
    "total_variation",
    "lipschitz_constant",
    "prediction_error",
    "constraint_violation",
    "optimality_gap",
)
CURVE_COLUMNS = ("index", STANDARD, OD)


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage


# ---------------------------------------------------------------------------
# config

_MODE_KEYS = ("time_limit", "node_limit", "solve_seed", "epochs", "batch_size",
              "learning_rate", "dual_learning_rate", "train_seed", "optimizer",
              "standardize_inputs")


@dataclass
class ExperimentConfig:
    """Flat experiment settings.

    Solver and training keys apply to both modes unless overridden by a
    ``standard.``- or ``od.``-prefixed key in ``overrides``.
    """

    instance: Optional[str] = None
    jobs: int = 4
    machines: int = 3
    duration_min: int = 1
    duration_max: int = 9
    instance_seed: int = 0
    slow_machine: int = 0
    steps: int = 40
    max_increase: float = 0.5
    scale: int = 100
    time_limit: float = 60.0
    node_limit: Optional[int] = None
    solve_seed: int = 0
    epochs: int = 500
    batch_size: int = 16
    learning_rate: float = 2e-3
    dual_learning_rate: float = 1e-2
    train_seed: int = 0
    optimizer: str = "adam"
    standardize_inputs: bool = True
    workers: int = 1
    out_dir: str = "jssdesign-out"
    overrides: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.duration_min < 0 or self.duration_max < self.duration_min:
            raise ValueError("duration range must satisfy 0 <= duration_min <= duration_max")
        if self.jobs < 1 or self.machines < 1:
            raise ValueError("jobs and machines must be positive")
        for key in self.overrides:
            mode, _, name = key.partition(".")
            if mode not in (STANDARD, OD) or name not in _MODE_KEYS:
                raise ValueError(f"unknown per-mode key {key!r}")
        self.perturbation()
        for mode in (STANDARD, OD):
            self.budget(mode)
            self.train_config(mode)

    # -- typed views -------------------------------------------------------

    def _get(self, mode: str, name: str):
        raw = self.overrides.get(f"{mode}.{name}")
        if raw is None:
            return getattr(self, name)
        return _coerce(name, raw)

    def perturbation(self) -> PerturbationSpec:
        return PerturbationSpec(self.slow_machine, self.steps, self.max_increase, self.scale)

    def budget(self, mode: str) -> SolveBudget:
        return SolveBudget(self._get(mode, "time_limit"), self._get(mode, "node_limit"),
                           self._get(mode, "solve_seed"))

    def train_config(self, mode: str) -> TrainConfig:
        return TrainConfig(
            epochs=self._get(mode, "epochs"),
            batch_size=self._get(mode, "batch_size"),
            learning_rate=self._get(mode, "learning_rate"),
            dual_learning_rate=self._get(mode, "dual_learning_rate"),
            seed=self._get(mode, "train_seed"),
            optimizer=self._get(mode, "optimizer"),
            standardize_inputs=self._get(mode, "standardize_inputs"),
        )

    # -- key=value text ----------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            if f.name == "overrides":
                continue
            value = getattr(self, f.name)
            if value is not None:
                lines.append(f"{f.name}={_render(value)}")
        lines.extend(f"{k}={v}" for k, v in sorted(self.overrides.items()))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_pairs(cls, pairs: Dict[str, str]) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)} - {"overrides"}
        kwargs, overrides = {}, {}
        for key, raw in pairs.items():
            if "." in key:
                overrides[key] = raw
            elif key in known:
                kwargs[key] = _coerce(key, raw)
            else:
                raise ValueError(f"unknown config key {key!r}")
        return cls(**kwargs, overrides=overrides)

    @classmethod
    def from_text(cls, text: str, extra: Optional[Dict[str, str]] = None) -> "ExperimentConfig":
        """Parse ``key=value`` lines; ``extra`` pairs (e.g. flags) win."""
        pairs = parse_pairs(text.splitlines())
        pairs.update(extra or {})
        return cls.from_pairs(pairs)


_INT_KEYS = {"jobs", "machines", "duration_min", "duration_max", "instance_seed", "slow_machine",
             "steps", "scale", "node_limit", "solve_seed", "epochs", "batch_size", "train_seed",
             "workers"}
_FLOAT_KEYS = {"max_increase", "time_limit", "learning_rate", "dual_learning_rate"}
_BOOL_KEYS = {"standardize_inputs"}


def _coerce(name: str, raw: str):
    raw = raw.strip()
    if name in _INT_KEYS:
        if raw.lower() in ("", "none"):
            if name == "node_limit":
                return None
            raise ValueError(f"{name} needs a value")
        return int(raw)
    if name in _FLOAT_KEYS:
        return float(raw)
    if name in _BOOL_KEYS:
        if raw.lower() in ("1", "true", "yes"):
            return True
        if raw.lower() in ("0", "false", "no"):
            return False
        raise ValueError(f"{name} must be a boolean, got {raw!r}")
    return raw


def _render(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_pairs(lines) -> Dict[str, str]:
    pairs = {}
    for n, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {n}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        pairs[key.strip()] = value.strip()
    return pairs


# ---------------------------------------------------------------------------
# report


@dataclass
class ModeRow:
    mode: str
    total_variation: float
    lipschitz_constant: Optional[float]
    prediction_error: float
    constraint_violation: float
    optimality_gap: float
    generation_seconds: float = field(default=0.0, compare=False)


@dataclass
class Report:
    rows: List[ModeRow]
    curve: List[Dict[str, int]] = field(default_factory=list)

    def to_json(self) -> str:
        """Versioned JSON. Wall-times are left out so reruns are byte-identical."""
        rows = [{c: getattr(r, c) for c in ROW_COLUMNS} for r in self.rows]
        return json.dumps(
            {"schema": REPORT_SCHEMA, "version": REPORT_VERSION, "rows": rows, "curve": self.curve},
            indent=2, sort_keys=True,
        ) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Report":
        obj = json.loads(text)
        if obj.get("schema") != REPORT_SCHEMA or obj.get("version") != REPORT_VERSION:
            raise ValueError("not a version-1 report")
        return cls([ModeRow(**r) for r in obj["rows"]], obj["curve"])

    def rows_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(ROW_COLUMNS)
        for r in self.rows:
            w.writerow(["" if getattr(r, c) is None else _render(getattr(r, c)) for c in ROW_COLUMNS])
        return buf.getvalue()

    def curve_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CURVE_COLUMNS)
        for point in self.curve:
            w.writerow([point[c] for c in CURVE_COLUMNS])
        return buf.getvalue()

    def timings(self) -> Dict[str, float]:
        return {r.mode: r.generation_seconds for r in self.rows}


def emit_report(report: Report, out_dir, formats=("json", "csv")) -> List[Path]:
    """Write ``report.json`` and/or ``report.csv`` + ``curve.csv``.

    CSV columns: ``report.csv`` has one row per mode with the columns of
    ``ROW_COLUMNS``; ``curve.csv`` has ``index,standard,od``, the L1
    distance of each solution to the first entry's solution.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for fmt in formats:
        if fmt == "json":
            written.append(out / "report.json")
            written[-1].write_text(report.to_json(), encoding="utf-8")
        elif fmt == "csv":
            (out / "report.csv").write_text(report.rows_csv(), encoding="utf-8")
            (out / "curve.csv").write_text(report.curve_csv(), encoding="utf-8")
            written += [out / "report.csv", out / "curve.csv"]
        else:
            raise ValueError(f"unknown report format {fmt!r}")
    return written


# ---------------------------------------------------------------------------
# pipeline


def base_instance(cfg: ExperimentConfig) -> JssInstance:
    if cfg.instance:
        return parse_instance(Path(cfg.instance).read_text(encoding="utf-8"))
    rng = np.random.default_rng(cfg.instance_seed)
    return random_instance(cfg.jobs, cfg.machines, rng, cfg.duration_min, cfg.duration_max)


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except Exception as exc:
        raise StageError(name, exc) from exc


def mode_row(ds: Dataset, metrics, seconds: float) -> ModeRow:
    try:
        lip = datagen.lipschitz_constant(ds)
    except ValueError:
        lip = None  # adjacent inputs identical
    tv = datagen.total_variation(ds) if len(ds) > 1 else 0.0
    return ModeRow(ds.mode, tv, lip, metrics.prediction_error, metrics.constraint_violation,
                   metrics.optimality_gap, seconds)


def run_experiment(cfg: ExperimentConfig) -> Report:
    """Family -> Standard and OD data -> one model per mode -> report files."""
    out = Path(cfg.out_dir)
    _stage("setup", out.mkdir, parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.to_text(), encoding="utf-8")
    base = _stage("load-instance", base_instance, cfg)
    family = _stage("gen-family", perturb_family, base, cfg.perturbation())
    datagen.save_family(family, out / "family.jsonl")

    rows, datasets = [], {}
    for mode in (STANDARD, OD):
        t0 = time.perf_counter()
        if mode == STANDARD:
            ds = _stage("gen-data standard", datagen.generate_standard, family, cfg.budget(mode),
                        cfg.budget(mode).seed, cfg.workers)
        else:
            ds = _stage("gen-data od", datagen.generate_od, family, cfg.budget(mode))
        seconds = time.perf_counter() - t0
        datagen.save_dataset(ds, out / f"{mode}.jsonl")
        tcfg = cfg.train_config(mode)
        model, hist = _stage(f"train {mode}", train,
                             build_model(base.shape, tcfg.seed, base.machine), ds, tcfg)
        save_model(model, out / f"model_{mode}.json")
        metrics = _stage(f"evaluate {mode}", evaluate, model, ds)
        rows.append(mode_row(ds, metrics, seconds))
        datasets[mode] = ds
        log.info("%s: %s", mode, rows[-1])

    curves = {m: datagen.distance_curve(ds) for m, ds in datasets.items()}
    curve = [{"index": i, STANDARD: curves[STANDARD][i], OD: curves[OD][i]} for i in range(len(family))]
    report = Report(rows, curve)
    _stage("report", emit_report, report, out)
    (out / "timings.json").write_text(json.dumps(report.timings(), indent=2) + "\n", encoding="utf-8")
    return report
