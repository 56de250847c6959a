"""End-to-end runs: data, split, optional feature construction, fit, report.

Every random stream derives from ``RunConfig.seed`` through fixed offsets
(``SEED_OFFSETS``), so all models in a comparison share one split and
adding a model never disturbs another model's stream.
"""
from __future__ import annotations

import csv
import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import anfis as anfis_mod
from . import gep as gep_mod
from . import sbsr as sbsr_mod
from .anfis import AnfisConfig
from .data import (INPUTS, OUTPUT, Dataset, GeneratorSpec, generate_synthetic, load_csv,
                   split_dataset, split_manifest_text)
from .errors import ConfigError, PipelineError, SonrebError
from .gep import GepConfig
from .hcvcm import (DEFAULT_LIBRARY, FeatureSet, FeatureTransform, materialize, reduce_best_per_parent,
                    run_generations, write_report)
from .metrics import REPORT_FIELDS, MetricsReport, coeff_det, evaluate

log = logging.getLogger(__name__)

MODELS = ("sbsr", "gep", "anfis")
FEATURE_MODES = ("best", "all")
SEED_OFFSETS = {"split": 0, "gep": 1000, "anfis": 2000}

REPORT_COLUMNS = ("model", "split") + REPORT_FIELDS
COMPARE_COLUMNS = ("model",) + tuple(f"{s}_{f}" for s in ("train", "test") for f in REPORT_FIELDS)
PREDICTION_COLUMNS = ("index", "split", "actual", "predicted", "error")


def parse_model_label(label: str) -> tuple[str, bool]:
    """``"hcvcm-anfis" -> ("anfis", True)``; also accepts the HCVCVM spelling."""
    low = label.strip().lower()
    hcvcm = False
    for prefix in ("hcvcm-", "hcvcvm-"):
        if low.startswith(prefix):
            low, hcvcm = low[len(prefix):], True
    if low not in MODELS:
        raise ConfigError(f"unknown model {label!r}; expected one of {MODELS}")
    return low, hcvcm


@dataclass
class RunConfig:
    model: str
    data_path: str | None = None
    synthetic: GeneratorSpec | None = None
    hcvcm: bool = False
    hcvcm_generations: int = 1
    feature_mode: str = "best"
    train_fraction: float = 0.7
    seed: int = 0
    gep: GepConfig = field(default_factory=GepConfig)
    anfis: AnfisConfig = field(default_factory=AnfisConfig)
    library: tuple = DEFAULT_LIBRARY
    out_dir: str | None = None

    @property
    def label(self) -> str:
        return ("HCVCM-" if self.hcvcm else "") + self.model.upper()

    def validate(self) -> None:
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}")
        if (self.data_path is None) == (self.synthetic is None):
            raise ConfigError("exactly one data source (csv path or synthetic spec) is required")
        if self.feature_mode not in FEATURE_MODES:
            raise ConfigError(f"feature_mode must be one of {FEATURE_MODES}")
        if self.hcvcm_generations < 1:
            raise ConfigError("hcvcm_generations must be at least 1")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction must lie in (0, 1)")

    def source_key(self):
        if self.data_path is not None:
            return ("csv", str(Path(self.data_path).resolve()))
        s = self.synthetic
        moments = tuple(sorted((k, dataclasses.astuple(v)) for k, v in s.target_moments.items()))
        return ("synthetic", s.n, s.seed, s.variables, moments, s.target_corr.tobytes())


@dataclass
class PredictionRow:
    index: int
    split: str
    actual: float
    predicted: float

    @property
    def error(self) -> float:
        return self.actual - self.predicted


@dataclass
class RunResult:
    label: str
    train_report: MetricsReport
    test_report: MetricsReport
    predictions: list
    inputs: tuple
    selected_features: FeatureSet | None
    split_manifest: str
    model_text: str
    model_path: str | None = None


def load_data(cfg: RunConfig) -> Dataset:
    if cfg.data_path is not None:
        return load_csv(cfg.data_path)
    return generate_synthetic(cfg.synthetic)


def hcvcm_features(d: Dataset, cfg: RunConfig) -> tuple[FeatureSet, list[str]]:
    """Selected features plus the model input list.

    An input with no surviving transform is passed through unchanged so that
    every original input stays represented.
    """
    fs = run_generations(d, INPUTS, cfg.library, cfg.hcvcm_generations, OUTPUT)
    if cfg.feature_mode == "best":
        fs = reduce_best_per_parent(fs)
    covered = {f.origin for f in fs.selected}
    extra = []
    y = d.train().column(OUTPUT)
    for p in INPUTS:
        if p not in covered:
            log.info("no transform of %s survived; using it unchanged", p)
            extra.append(FeatureTransform.make("identity", p, r2_output=coeff_det(d.train().column(p), y)))
    if extra:
        selected = fs.selected + tuple(extra)
        cols = [f.name for f in selected]
        tr = materialize(d.train(), cols)
        n = len(selected)
        cross = np.eye(n)
        for i in range(n):
            for j in range(i + 1, n):
                cross[i, j] = cross[j, i] = coeff_det(tr.column(cols[i]), tr.column(cols[j]))
        fs = FeatureSet(selected, cross, fs.outcomes)
    return fs, fs.names


class _Stage:
    def __init__(self, stage, module):
        self.stage, self.module = stage, module

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and isinstance(exc, (SonrebError, ValueError, ArithmeticError, np.linalg.LinAlgError)) \
                and not isinstance(exc, PipelineError):
            raise PipelineError(self.stage, self.module, exc) from exc
        return False


def run(cfg: RunConfig) -> RunResult:
    with _Stage("config", "pipeline"):
        cfg.validate()
    with _Stage("load", "core-data"):
        d = load_data(cfg)
    with _Stage("split", "core-data"):
        d = split_dataset(d, cfg.train_fraction, cfg.seed + SEED_OFFSETS["split"])

    fs = None
    inputs = list(INPUTS)
    if cfg.hcvcm:
        with _Stage("features", "hcvcm"):
            fs, inputs = hcvcm_features(d, cfg)
            d = materialize(d, inputs)

    if cfg.model == "sbsr":
        with _Stage("fit", "regress-sbsr"):
            model = sbsr_mod.sbsr_fit(d, inputs, OUTPUT)
            pred = sbsr_mod.sbsr_predict(model, d)
            model_text = sbsr_mod.dumps(model)
            aux = None
    elif cfg.model == "gep":
        with _Stage("fit", "gep"):
            gcfg = dataclasses.replace(cfg.gep, seed=cfg.seed + SEED_OFFSETS["gep"])
            model = gep_mod.evolve(d, inputs, OUTPUT, gcfg)
            pred = gep_mod.gep_predict(model, d)
            model_text = gep_mod.dumps(model)
            aux = ("gep_log.csv", lambda p: gep_mod.write_log(model, p))
    else:
        with _Stage("fit", "anfis"):
            acfg = dataclasses.replace(cfg.anfis, seed=cfg.seed + SEED_OFFSETS["anfis"])
            res = anfis_mod.train_hybrid(d, inputs, OUTPUT, acfg)
            pred = anfis_mod.predict(res.model, d)
            model_text = anfis_mod.dumps(res.model)
            aux = ("anfis_trace.csv", lambda p: anfis_mod.write_trace(res, p))

    with _Stage("evaluate", "metrics"):
        y = d.column(OUTPUT)
        train_report = evaluate(y[d.train_idx], pred[d.train_idx])
        test_report = evaluate(y[d.test_idx], pred[d.test_idx])

    split_of = np.empty(len(d), dtype=object)
    split_of[d.train_idx] = "train"
    split_of[d.test_idx] = "test"
    predictions = [PredictionRow(i, split_of[i], float(y[i]), float(pred[i])) for i in range(len(d))]
    result = RunResult(
        label=cfg.label,
        train_report=train_report,
        test_report=test_report,
        predictions=predictions,
        inputs=tuple(inputs),
        selected_features=fs,
        split_manifest=split_manifest_text(d),
        model_text=model_text,
    )
    if cfg.out_dir is not None:
        with _Stage("write", "pipeline-cli"):
            write_run(result, cfg.out_dir, aux)
    return result


def _fmt(v: float) -> str:
    return repr(float(v))


def report_rows(result: RunResult) -> list[list[str]]:
    return [[result.label, split] + [_fmt(v) for v in rep.values()]
            for split, rep in (("train", result.train_report), ("test", result.test_report))]


def write_report_csv(results, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in results:
            w.writerows(report_rows(r))


def write_predictions(result: RunResult, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PREDICTION_COLUMNS)
        for p in result.predictions:
            w.writerow([p.index, p.split, _fmt(p.actual), _fmt(p.predicted), _fmt(p.error)])


def write_run(result: RunResult, out_dir, aux=None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "split.csv").write_text(result.split_manifest, encoding="utf-8")
    write_report_csv([result], out / "report.csv")
    write_predictions(result, out / "predictions.csv")
    model_path = out / "model.txt"
    model_path.write_text(result.model_text, encoding="utf-8")
    result.model_path = str(model_path)
    if result.selected_features is not None:
        write_report(result.selected_features, out / "hcvcm.csv")
    if aux is not None:
        name, writer = aux
        writer(out / name)


@dataclass
class Comparison:
    results: list

    def rows(self) -> list[list[str]]:
        return [[r.label] + [_fmt(v) for v in r.train_report.values() + r.test_report.values()]
                for r in self.results]

    def to_csv(self) -> str:
        lines = [",".join(COMPARE_COLUMNS)] + [",".join(row) for row in self.rows()]
        return "\n".join(lines) + "\n"


def compare(cfgs, out_dir=None) -> Comparison:
    """Run several configurations on one shared split and tabulate them side by side."""
    cfgs = list(cfgs)
    if not cfgs:
        raise ConfigError("nothing to compare")
    first = cfgs[0]
    for c in cfgs[1:]:
        if c.source_key() != first.source_key():
            raise ConfigError("all runs must use the same data source")
        if c.seed != first.seed or c.train_fraction != first.train_fraction:
            raise ConfigError("all runs must use the same seed and train_fraction")
    results = []
    for c in cfgs:
        sub = None
        if out_dir is not None:
            sub = str(Path(out_dir) / c.label.lower())
        results.append(run(dataclasses.replace(c, out_dir=sub)))
    manifests = {r.split_manifest for r in results}
    if len(manifests) != 1:
        raise PipelineError("compare", "pipeline-cli", RuntimeError("runs did not share one split"))
    table = Comparison(results)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "compare.csv").write_text(table.to_csv(), encoding="utf-8")
        write_report_csv(results, out / "report.csv")
        (out / "split.csv").write_text(results[0].split_manifest, encoding="utf-8")
    return table
