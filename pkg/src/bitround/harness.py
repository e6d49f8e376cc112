"""Level sweeps over instance sets, with seed replication and aggregate tables.

For every (instance, seed) the original program is solved first; each rounded
level is then solved and its solution is scored under the original objective.
Aggregates use the shifted geometric mean.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from .generators import CflpRecipe, KnapsackRecipe, generate_cflp, generate_knapsack
from .model import BinaryProgram, Sense, evaluate_objective, read_opb
from .rounding import UndefinedLoss, loss_bound_traditional, objective_loss, round_objective
from .solvers import SolveBudget, Status, knapsack_data, solve_bp, solve_knapsack
from .symmetry import detect_symmetry

log = logging.getLogger(__name__)

ORIGINAL = "original"

RECORD_FIELDS = [
    "instance", "seed", "level", "generators", "symmetry_timed_out", "status",
    "value", "loss_percent", "loss_available", "bound_ok", "time_s", "nodes",
]
AGGREGATE_FIELDS = ["level", "sgm_generators", "sgm_loss_percent", "sgm_time_s", "solved", "loss_n"]


class ConfigError(ValueError):
    pass


def shifted_geometric_mean(values: Sequence, shift=1) -> float:
    """``exp(mean(log(v + s))) - s``.

    Evaluated as ``s * expm1(mean(log1p(v / s)))`` so that results near zero
    keep full relative accuracy.
    """
    if not values:
        raise ValueError("shifted geometric mean of an empty list")
    if any(v < 0 for v in values):
        raise ValueError("values must be non-negative")
    if shift < 0:
        raise ValueError("shift must be non-negative")
    if shift == 0:
        if any(v == 0 for v in values):
            raise ValueError("zero value with zero shift")
        result = math.exp(math.fsum(math.log(v) for v in values) / len(values))
    else:
        mean = math.fsum(math.log1p(float(Fraction(v) / Fraction(shift))) for v in values) / len(values)
        result = float(shift) * math.expm1(mean)
    # the exact value lies between min and max; keep the last-bit error from leaving that range
    return min(max(result, float(min(values))), float(max(values)))


@dataclass(frozen=True)
class InstanceSource:
    """An OPB path or a generator recipe."""

    path: str | None = None
    recipe: CflpRecipe | KnapsackRecipe | None = None

    @property
    def label(self) -> str:
        if self.path is not None:
            return Path(self.path).stem
        r = self.recipe
        if isinstance(r, CflpRecipe):
            return f"cflp_n{r.n}_m{r.m}_r{r.decimals}"
        return f"knapsack_n{r.n}_k{r.k}_{'bal' if r.balanced else 'rnd'}"


def generate(recipe):
    return generate_cflp(recipe) if isinstance(recipe, CflpRecipe) else generate_knapsack(recipe)


@dataclass(frozen=True)
class ExperimentConfig:
    instance_sources: tuple[InstanceSource, ...]
    levels: tuple = (ORIGINAL, 5, 4, 3, 2)
    seeds: int = 5
    budget: SolveBudget = SolveBudget()
    symmetry_budget: int = 10**6
    sgm_shift_time: Fraction = Fraction(1)
    sgm_shift_generators: Fraction = Fraction(1)
    sgm_shift_loss: Fraction = Fraction(1, 100)
    output: str | None = None
    timing: str = "off"
    workers: int = 1

    def __post_init__(self):
        if not self.levels:
            raise ConfigError("levels must be nonempty")
        for lv in self.levels:
            if lv != ORIGINAL and not (isinstance(lv, int) and lv >= 0):
                raise ConfigError(f"invalid level {lv!r}")
        if self.seeds < 1:
            raise ConfigError("seeds must be at least 1")
        if self.timing not in ("wall", "off"):
            raise ConfigError("timing must be 'wall' or 'off'")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")


def _recipe_from_json(fields: dict):
    fields = dict(fields)
    kind = fields.pop("generator")
    try:
        if kind == "cflp":
            if "fixed_cost_range" in fields and fields["fixed_cost_range"] is not None:
                fields["fixed_cost_range"] = tuple(fields["fixed_cost_range"])
            return CflpRecipe(**fields)
        if kind == "knapsack":
            return KnapsackRecipe(**fields)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {kind} recipe: {exc}") from exc
    raise ConfigError(f"unknown generator {kind!r}")


def load_config(data: dict, base_dir: str | os.PathLike = ".") -> ExperimentConfig:
    """Build a config from its JSON form (field names as in :class:`ExperimentConfig`)."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    sources = []
    for item in data.get("instance_sources", []):
        if isinstance(item, str):
            item = {"path": item}
        if "path" in item:
            p = Path(item["path"])
            sources.append(InstanceSource(path=str(p if p.is_absolute() else Path(base_dir) / p)))
        elif "generator" in item:
            sources.append(InstanceSource(recipe=_recipe_from_json(item)))
        else:
            raise ConfigError(f"instance source needs 'path' or 'generator': {item!r}")
    if not sources:
        raise ConfigError("no instance sources")
    kwargs = {"instance_sources": tuple(sources)}
    try:
        if "levels" in data:
            kwargs["levels"] = tuple(data["levels"])
        if "seeds" in data:
            kwargs["seeds"] = int(data["seeds"])
        if "budget" in data:
            b = data["budget"]
            kwargs["budget"] = SolveBudget(
                max_nodes=int(b.get("max_nodes", 10**7)),
                max_time=float(b.get("max_time", float("inf"))),
            )
        if "symmetry_budget" in data:
            kwargs["symmetry_budget"] = int(data["symmetry_budget"])
        for key in ("sgm_shift_time", "sgm_shift_generators", "sgm_shift_loss"):
            if key in data:
                kwargs[key] = Fraction(str(data[key]))
        for key in ("output", "timing"):
            if key in data:
                kwargs[key] = data[key]
        if "workers" in data:
            kwargs["workers"] = int(data["workers"])
        return ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class ExperimentRecord:
    instance: str
    seed: int
    level: str
    generator_count: int | None
    symmetry_timed_out: bool
    status: str
    value: int | None
    loss: Fraction | None
    time_s: float | None
    nodes: int
    bound_ok: bool | None = None
    error: str | None = None

    @property
    def loss_available(self) -> bool:
        return self.loss is not None

    def row(self) -> dict:
        return {
            "instance": self.instance,
            "seed": self.seed,
            "level": self.level,
            "generators": "" if self.generator_count is None else self.generator_count,
            "symmetry_timed_out": int(self.symmetry_timed_out),
            "status": self.status,
            "value": "" if self.value is None else self.value,
            "loss_percent": "" if self.loss is None else f"{float(self.loss * 100):.6g}",
            "loss_available": int(self.loss_available),
            "bound_ok": "" if self.bound_ok is None else int(self.bound_ok),
            "time_s": "" if self.time_s is None else f"{self.time_s:.6f}",
            "nodes": self.nodes,
        }


@dataclass(frozen=True)
class AggregateRow:
    level: str
    sgm_generators: float | None
    sgm_loss_percent: float | None
    sgm_time: float | None
    solved_count: int
    loss_sample_size: int


def _solve(bp: BinaryProgram, budget: SolveBudget, seed: int):
    data = knapsack_data(bp)
    if data is not None:
        return solve_knapsack(*data, budget=budget)
    return solve_bp(bp, budget, tie_rotation=seed)


def _materialize(source: InstanceSource, seed: int) -> BinaryProgram:
    if source.path is not None:
        return read_opb(source.path)
    recipe = source.recipe
    return generate(type(recipe)(**{**recipe.__dict__, "seed": recipe.seed + seed}))


def _run_cell(args) -> list[ExperimentRecord]:
    """All levels of one (instance, seed) pair."""
    cfg, index, seed = args
    source = cfg.instance_sources[index]
    label = f"{index}:{source.label}"
    timed = cfg.timing == "wall"
    try:
        bp = _materialize(source, seed)
    except (OSError, ValueError) as exc:
        log.warning("instance %s unavailable: %s", label, exc)
        return [
            ExperimentRecord(label, seed, str(lv), None, False, "error", None, None, None, 0, error=str(exc))
            for lv in cfg.levels
        ]
    bounded = bp.sense is Sense.MAXIMIZE and all(v >= 0 for v in bp.objective.values())
    original = _solve(bp, cfg.budget, seed)
    out = []
    for lv in cfg.levels:
        start = time.perf_counter()
        if lv == ORIGINAL:
            prog, result = bp, original
        else:
            prog, _ = round_objective(bp, lv)
            result = _solve(prog, cfg.budget, seed)
        sym = detect_symmetry(prog, cfg.symmetry_budget)
        elapsed = result.elapsed if lv != ORIGINAL else original.elapsed
        loss = None
        value = None
        if result.optimal:
            value = evaluate_objective(bp, result.best_assignment)
        if original.optimal and result.optimal:
            try:
                loss = objective_loss(original.best_value, value)
            except UndefinedLoss:
                loss = None
        bound_ok = None
        if bounded and loss is not None and lv != ORIGINAL and lv >= 1:
            bound_ok = loss <= loss_bound_traditional(lv)
        out.append(ExperimentRecord(
            instance=label,
            seed=seed,
            level=str(lv),
            generator_count=sym.generator_count,
            symmetry_timed_out=sym.timed_out,
            status=result.status.value,
            value=value,
            loss=loss,
            time_s=elapsed if timed else None,
            nodes=result.nodes_explored,
            bound_ok=bound_ok,
        ))
        log.debug("%s seed %d level %s done in %.3fs", label, seed, lv, time.perf_counter() - start)
    return out


def aggregate(cfg: ExperimentConfig, records: Sequence[ExperimentRecord]) -> list[AggregateRow]:
    rows = []
    for lv in cfg.levels:
        recs = [r for r in records if r.level == str(lv) and r.status != "error"]
        gens = [r.generator_count for r in recs]
        losses = [r.loss * 100 for r in recs if r.loss is not None]
        times = [Fraction(r.time_s) for r in recs if r.time_s is not None]
        rows.append(AggregateRow(
            level=str(lv),
            sgm_generators=shifted_geometric_mean(gens, cfg.sgm_shift_generators) if gens else None,
            sgm_loss_percent=_sgm_or_none(losses, cfg.sgm_shift_loss),
            sgm_time=shifted_geometric_mean(times, cfg.sgm_shift_time) if times else None,
            solved_count=sum(r.status == Status.OPTIMAL.value for r in recs),
            loss_sample_size=len(losses),
        ))
    return rows


def _sgm_or_none(values, shift):
    if not values:
        return None
    if shift == 0 and any(v == 0 for v in values):
        return 0.0
    return shifted_geometric_mean(values, shift)


def run_experiment(cfg: ExperimentConfig) -> tuple[list[ExperimentRecord], list[AggregateRow]]:
    cells = [(cfg, i, seed) for i in range(len(cfg.instance_sources)) for seed in range(cfg.seeds)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            chunks = list(pool.map(_run_cell, cells))
    else:
        chunks = [_run_cell(c) for c in cells]
    records = [r for chunk in chunks for r in chunk]
    return records, aggregate(cfg, records)


def format_loss_percent(percent) -> str:
    """Two decimals from 1%% upwards, ``3.41e-1`` style below, ``+0.00`` for zero."""
    if percent is None:
        return "n/a"
    p = float(percent)
    if p == 0:
        return "+0.00"
    if abs(p) >= 1:
        return f"{p:.2f}"
    mantissa, exp = f"{p:.2e}".split("e")
    return f"{mantissa}e{int(exp)}"


def _fmt(v):
    return "n/a" if v is None else f"{v:.2f}"


def emit_report(rows: Sequence[AggregateRow], records: Sequence[ExperimentRecord] = (),
                format: str = "csv", cfg: ExperimentConfig | None = None) -> str:
    cells = [
        [r.level, _fmt(r.sgm_generators), format_loss_percent(r.sgm_loss_percent),
         _fmt(r.sgm_time), str(r.solved_count), str(r.loss_sample_size)]
        for r in rows
    ]
    if format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(AGGREGATE_FIELDS)
        w.writerows(cells)
        return buf.getvalue()
    if format != "markdown":
        raise ValueError(f"unknown report format {format!r}")
    lines = []
    if cfg is not None:
        lines += [
            "# Rounding experiment",
            "",
            f"- instances: {len(cfg.instance_sources)}, seeds: {cfg.seeds}, records: {len(records)}",
            f"- SGM shifts: time {cfg.sgm_shift_time}, generators {cfg.sgm_shift_generators}, "
            f"loss % {cfg.sgm_shift_loss}",
            f"- node budget: {cfg.budget.max_nodes}, symmetry budget: {cfg.symmetry_budget}",
            "- Time is this package's exact solver time and is not comparable to MIP/CP solver runtimes.",
            "- Generators are counted on the formulation as given (no presolve).",
            "",
        ]
    lines.append("| level | # Gen. | % Obj. Loss | Time [s] | # Solved | loss n |")
    lines.append("|---|---:|---:|---:|---:|---:|")
    lines += ["| " + " | ".join(c) + " |" for c in cells]
    violations = [r for r in records if r.bound_ok is False]
    if violations:
        lines += ["", f"**{len(violations)} loss-bound violation(s)**"]
    errors = [r for r in records if r.status == "error"]
    if errors:
        lines += ["", f"{len(errors)} record(s) with unavailable instances"]
    return "\n".join(lines) + "\n"


def records_csv(records: Sequence[ExperimentRecord]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=RECORD_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in records:
        w.writerow(r.row())
    return buf.getvalue()


def write_outputs(cfg: ExperimentConfig, records, rows, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "records.csv").write_text(records_csv(records), encoding="utf-8")
    (out / "aggregates.csv").write_text(emit_report(rows, records, "csv"), encoding="utf-8")
    (out / "report.md").write_text(emit_report(rows, records, "markdown", cfg), encoding="utf-8")


def bound_violations(records) -> list[ExperimentRecord]:
    return [r for r in records if r.bound_ok is False]


def load_config_file(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return load_config(data, Path(path).parent)
