"""Experiment runner: JSON configs, seeded repetitions and CSV exports.

Output layout::

    <out>/config.json          normalized configuration
    <out>/summary.csv          min / mean / std of final discrepancies
    <out>/runs.csv             one row per repetition
    <out>/run_000/trace.csv
    <out>/run_000/population.csv   scaled feature vectors (point-set CSV)
    <out>/run_000/genotypes.txt    sidecar listing the genotype files
    <out>/run_000/genotypes/...
    <out>/run_000/features.csv     raw and scaled features plus quality
"""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import image as image_mod
from . import tsp as tsp_mod
from .discrepancy import MAX_EXACT_DIM, write_points_csv
from .diversity import (
    DiversityOptimizer,
    FeatureSpec,
    GenerationTrace,
    Individual,
    InitializationError,
)

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


class FeatureConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    f_min: Optional[float] = None
    f_max: Optional[float] = None
    weight: float = Field(1.0, ge=0)


class TspConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n: int = Field(15, ge=4, le=tsp_mod.MAX_EXACT_CITIES)
    sigma: float = Field(0.025, gt=0)
    p_m: Optional[float] = Field(None, ge=0, le=1)
    init_budget: int = Field(20000, ge=1)
    init_strategy: Literal["chained", "independent"] = "chained"
    seed_dir: Optional[str] = None


class ImageConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    reference: str = "builtin:gradient64"
    offset_radius: int = Field(30, ge=0, le=255)
    t_max: float = 1000.0
    t_lb: int = Field(1000, ge=1)
    t_ub: int = Field(20000, ge=1)
    F: float = Field(2.0, gt=1)
    k: int = Field(8, ge=1)
    circular_hue: bool = False


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    domain: Literal["tsp", "image"]
    mode: Literal["D", "C", "T"] = "D"
    mu: int = 20
    lam: int = Field(1, alias="lambda", ge=1)
    generations: int = 2000
    features: list[Union[str, FeatureConfig]]
    alpha: Optional[float] = None
    tsp: TspConfig = Field(default_factory=TspConfig)
    image: ImageConfig = Field(default_factory=ImageConfig)
    repetitions: int = 1
    seed: int = Field(0, ge=0, lt=2**64)
    out: str = "runs"
    contribution: Literal["gap_product", "gap_sum"] = "gap_product"
    one_sided: bool = False

    @field_validator("mu")
    @classmethod
    def _mu(cls, v):
        if v < 2:
            raise ValueError("μ ≥ 2")
        return v

    @field_validator("generations")
    @classmethod
    def _generations(cls, v):
        if v < 1:
            raise ValueError("generations ≥ 1")
        return v

    @field_validator("repetitions")
    @classmethod
    def _repetitions(cls, v):
        if v < 1:
            raise ValueError("repetitions ≥ 1")
        return v

    @field_validator("features")
    @classmethod
    def _feature_count(cls, v):
        if not 1 <= len(v) <= MAX_EXACT_DIM:
            raise ValueError(f"exact discrepancy supports d ≤ {MAX_EXACT_DIM} (got {len(v)} features)")
        return [FeatureConfig(name=f) if isinstance(f, str) else f for f in v]

    @model_validator(mode="after")
    def _resolve(self):
        table = tsp_mod.DEFAULT_RANGES if self.domain == "tsp" else image_mod.DEFAULT_RANGES
        for i, f in enumerate(self.features):
            if f.name not in table:
                raise ValueError(f"features[{i}].name: unknown {self.domain} feature {f.name!r}")
            lo, hi = table[f.name]
            f.f_min = lo if f.f_min is None else f.f_min
            f.f_max = hi if f.f_max is None else f.f_max
            if not f.f_min < f.f_max:
                raise ValueError(f"features[{i}]: f_min must be < f_max")
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ValueError("features: duplicate feature names")
        if self.alpha is None:
            self.alpha = tsp_mod.DEFAULT_ALPHA if self.domain == "tsp" else image_mod.MSE_THRESHOLD
        if self.domain == "tsp" and self.alpha < 1:
            raise ValueError("alpha: approximation-ratio threshold must be ≥ 1")
        if self.domain == "image":
            im = self.image
            if not im.t_lb <= im.t_max <= im.t_ub:
                raise ValueError("image.t_max: must satisfy t_lb ≤ t_max ≤ t_ub")
            ref = im.reference
            if not ref.startswith("builtin:") and not os.path.isfile(ref):
                raise ValueError(f"image.reference: file not found: {ref}")
        if self.domain == "tsp" and self.tsp.seed_dir is not None and not os.path.isdir(self.tsp.seed_dir):
            raise ValueError(f"tsp.seed_dir: not a directory: {self.tsp.seed_dir}")
        return self

    @property
    def feature_specs(self) -> list[FeatureSpec]:
        return [FeatureSpec(f.name, f.f_min, f.f_max, f.weight) for f in self.features]

    def dump(self) -> str:
        return json.dumps(self.model_dump(by_alias=True), indent=2, sort_keys=True) + "\n"


def _format_errors(err: ValidationError) -> str:
    parts = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"])
        msg = e["msg"].removeprefix("Value error, ")
        parts.append(f"{loc}: {msg}" if loc else msg)
    return "; ".join(parts)


def parse_config(data: dict, base_dir: str | os.PathLike | None = None) -> ExperimentConfig:
    """Validate a config mapping; relative paths resolve against ``base_dir``."""
    data = json.loads(json.dumps(data))
    if base_dir is not None:
        ref = data.get("image", {}).get("reference")
        if isinstance(ref, str) and not ref.startswith("builtin:") and not os.path.isabs(ref):
            data["image"]["reference"] = os.path.join(base_dir, ref)
        seed_dir = data.get("tsp", {}).get("seed_dir")
        if isinstance(seed_dir, str) and not os.path.isabs(seed_dir):
            data["tsp"]["seed_dir"] = os.path.join(base_dir, seed_dir)
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigError(_format_errors(err)) from None


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON: {err}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return parse_config(data, base_dir=os.path.dirname(os.path.abspath(path)))


def build_domain(config: ExperimentConfig):
    names = [f.name for f in config.features]
    if config.domain == "tsp":
        t = config.tsp
        seeds = tsp_mod.read_instance_dir(t.seed_dir) if t.seed_dir else None
        return tsp_mod.TspDomain(n=t.n, alpha=config.alpha, features=names, sigma=t.sigma,
                                 p_m=t.p_m, init_budget=t.init_budget,
                                 init_strategy=t.init_strategy, seed_instances=seeds)
    im = config.image
    walk = image_mod.WalkParams(t_max=im.t_max, t_lb=im.t_lb, t_ub=im.t_ub, F=im.F, k=im.k,
                                r=im.offset_radius)
    return image_mod.ImageDomain(image_mod.load_reference(im.reference), features=names,
                                 threshold=config.alpha, walk=walk,
                                 circular_hue=im.circular_hue)


def summarize(values: Sequence[float]) -> tuple[float, float, float]:
    """Minimum, mean and population standard deviation."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("summarize needs at least one value")
    return float(v.min()), float(v.mean()), float(v.std())


def _fmt(x) -> str:
    return format(float(x), ".17g")


def export_trace_csv(traces: Sequence[GenerationTrace], feature_names, path) -> None:
    state_keys = sorted(traces[0].domain_state) if traces else []
    header = ["generation", "discrepancy", "accepted"]
    for name in feature_names:
        header += [f"{name}_min", f"{name}_max"]
    header += ["quality_min", "quality_max"] + state_keys
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for t in traces:
            row = [t.generation, _fmt(t.discrepancy), int(t.accepted)]
            for lo, hi in zip(t.feature_min, t.feature_max):
                row += [_fmt(lo), _fmt(hi)]
            row += [_fmt(t.quality_min), _fmt(t.quality_max)]
            row += [_fmt(t.domain_state[k]) for k in state_keys]
            w.writerow(row)


def export_feature_csv(population: Sequence[Individual], feature_names, path) -> None:
    """One row per individual: raw features, scaled features, quality."""
    if not population:
        raise ValueError("population is empty")
    header = [f"{n}_raw" for n in feature_names] + [f"{n}_scaled" for n in feature_names] + ["quality"]
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for ind in population:
                w.writerow([_fmt(x) for x in ind.raw_features]
                           + [_fmt(x) for x in ind.scaled_features] + [_fmt(ind.quality)])
    except OSError as err:
        raise OSError(f"cannot write feature CSV {path}: {err}") from err


def read_feature_csv(path) -> dict[str, np.ndarray]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    return {name: body[:, i] for i, name in enumerate(header)}


def export_population(population: Sequence[Individual], domain, run_dir: Path) -> None:
    write_points_csv(np.array([ind.scaled_features for ind in population]), run_dir / "population.csv")
    gdir = run_dir / "genotypes"
    gdir.mkdir(exist_ok=True)
    names = []
    for i, ind in enumerate(population):
        name = f"ind_{i:03d}{domain.genotype_suffix}"
        domain.write_genotype(ind.genotype, gdir / name)
        names.append(f"genotypes/{name}")
    (run_dir / "genotypes.txt").write_text("\n".join(names) + "\n", encoding="utf-8")


@dataclass
class RunRecord:
    run_id: str
    seed: int
    status: str
    initial_discrepancy: float = float("nan")
    final_discrepancy: float = float("nan")

    @property
    def completed(self) -> bool:
        return self.status == "ok"


@dataclass
class RunSummary:
    runs: list[RunRecord]
    minimum: float = float("nan")
    mean: float = float("nan")
    std: float = float("nan")
    final_discrepancies: list[float] = field(default_factory=list)

    @property
    def all_completed(self) -> bool:
        return all(r.completed for r in self.runs)


def run_repetition(config: ExperimentConfig, rep: int, out_dir: str | os.PathLike) -> RunRecord:
    """Run one repetition with seed ``config.seed + rep`` and write its files."""
    seed = config.seed + rep
    run_id = f"run_{rep:03d}"
    run_dir = Path(out_dir) / run_id
    run_dir.mkdir(parents=True, exist_ok=True)
    domain = build_domain(config)
    est = DiversityOptimizer(mu=config.mu, lam=config.lam, generations=config.generations,
                             mode=config.mode, feature_specs=config.feature_specs,
                             contribution=config.contribution, one_sided=config.one_sided,
                             random_state=seed)
    try:
        est.fit(domain)
    except InitializationError as err:
        logger.warning("%s aborted: %s", run_id, err)
        return RunRecord(run_id, seed, f"init-failed: {err}")
    names = domain.feature_names
    export_trace_csv(est.trace_, names, run_dir / "trace.csv")
    export_population(est.population_, domain, run_dir)
    export_feature_csv(est.population_, names, run_dir / "features.csv")
    return RunRecord(run_id, seed, "ok", est.initial_discrepancy_, est.discrepancy_)


def _run_one(args):
    config_json, rep, out_dir = args
    return run_repetition(ExperimentConfig.model_validate_json(config_json), rep, out_dir)


def default_jobs() -> int:
    return max(1, int(os.environ.get("DIVOPT_JOBS", "1")))


def run_experiment(config: ExperimentConfig, out_dir: str | os.PathLike | None = None,
                   jobs: int | None = None) -> RunSummary:
    """Run every repetition, write per-run files and the aggregate summary."""
    out = Path(out_dir if out_dir is not None else config.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(config.dump(), encoding="utf-8")
    jobs = default_jobs() if jobs is None else max(1, jobs)
    tasks = [(config.model_dump_json(by_alias=True), rep, str(out)) for rep in range(config.repetitions)]
    if jobs == 1 or len(tasks) == 1:
        records = [_run_one(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_run_one, tasks))
    summary = RunSummary(records)
    finals = [r.final_discrepancy for r in records if r.completed]
    summary.final_discrepancies = finals
    if finals:
        summary.minimum, summary.mean, summary.std = summarize(finals)
    with open(out / "runs.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run_id", "seed", "status", "initial_discrepancy", "final_discrepancy"])
        for r in records:
            w.writerow([r.run_id, r.seed, r.status, _fmt(r.initial_discrepancy), _fmt(r.final_discrepancy)])
    with open(out / "summary.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["domain", "mode", "features", "completed", "repetitions", "min", "mean", "std"])
        w.writerow([config.domain, config.mode, "+".join(f.name for f in config.features),
                    len(finals), config.repetitions,
                    _fmt(summary.minimum), _fmt(summary.mean), _fmt(summary.std)])
    return summary
