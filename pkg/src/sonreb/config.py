"""Flat ``key = value`` configuration files.

Blank lines and lines starting with ``#`` are ignored. Keys are
case-sensitive; values are stripped.

Generator spec files accept::

    n = 516
    seed = 0
    ccs.average = 276.92     # any of min, max, average, sd, median per variable
    r2.rn.ccs = 0.758        # squared correlation; sign taken as positive
    corr.rn.ccs = 0.87       # or a signed Pearson correlation

Run/compare files accept::

    data = readings.csv      # or: synthetic = spec.txt (paths relative to the file)
    seed = 0
    train_fraction = 0.7
    models = sbsr, hcvcm-sbsr, gep, hcvcm-gep, anfis, hcvcm-anfis
    hcvcm_generations = 1
    feature_mode = best      # best | all
    library = square, cube, exp
    gep.generations = 200    # any GepConfig field
    anfis.epochs = 100       # any AnfisConfig field
"""
from __future__ import annotations

import dataclasses
from pathlib import Path

from .anfis import AnfisConfig
from .data import BASE_COLUMNS, REFERENCE_STATS, REFERENCE_R2, GeneratorSpec, SummaryStats, corr_from_r2
from .errors import ConfigError
from .gep import GepConfig
from .hcvcm import DEFAULT_LIBRARY


def parse_kv(text: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        out[key.strip()] = value.strip()
    return out


def read_kv(path) -> dict[str, str]:
    return parse_kv(Path(path).read_text(encoding="utf-8"))


def _number(key, value, kind=float):
    try:
        return kind(value)
    except ValueError:
        raise ConfigError(f"{key}: not a valid {kind.__name__}: {value!r}") from None


def generator_spec_from_kv(kv: dict) -> GeneratorSpec:
    """Reference statistics as defaults, overridden by the given keys."""
    moments = {v: dataclasses.asdict(REFERENCE_STATS[v]) for v in BASE_COLUMNS}
    r2 = dict(REFERENCE_R2)
    signed = {}
    n, seed = 516, 0
    for key, value in kv.items():
        parts = key.split(".")
        if key == "n":
            n = _number(key, value, int)
        elif key == "seed":
            seed = _number(key, value, int)
        elif len(parts) == 2 and parts[0] in moments and parts[1] in moments[parts[0]]:
            moments[parts[0]][parts[1]] = _number(key, value)
        elif len(parts) == 3 and parts[0] in ("r2", "corr"):
            pair = tuple(parts[1:])
            if not set(pair) <= set(BASE_COLUMNS) or pair[0] == pair[1]:
                raise ConfigError(f"{key}: unknown variable pair")
            canon = next((p for p in REFERENCE_R2 if set(p) == set(pair)), pair)
            if parts[0] == "r2":
                r2[canon] = _number(key, value)
                signed.pop(canon, None)
            else:
                signed[canon] = _number(key, value)
        else:
            raise ConfigError(f"unknown generator key {key!r}")
    corr = corr_from_r2({k: v for k, v in r2.items() if k not in signed})
    pos = {v: i for i, v in enumerate(BASE_COLUMNS)}
    for (a, b), r in signed.items():
        corr[pos[a], pos[b]] = corr[pos[b], pos[a]] = r
    return GeneratorSpec(n=n, seed=seed,
                         target_moments={v: SummaryStats(**m) for v, m in moments.items()},
                         target_corr=corr)


def _coerce(cls, key, field_name, value):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    if field_name not in fields:
        raise ConfigError(f"unknown key {key!r}")
    default = fields[field_name].default
    if isinstance(default, bool):
        if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise ConfigError(f"{key}: expected a boolean, got {value!r}")
        return value.lower() in ("true", "1", "yes")
    if isinstance(default, int):
        return _number(key, value, int)
    if isinstance(default, float):
        return _number(key, value)
    if field_name == "constants_range":
        lo, hi = (_number(key, v) for v in value.split(","))
        return (lo, hi)
    return tuple(v.strip() for v in value.split(",") if v.strip())


def model_configs(kv: dict) -> tuple[GepConfig, AnfisConfig]:
    gep_kw, anfis_kw = {}, {}
    for key, value in kv.items():
        if key.startswith("gep."):
            name = key[4:]
            gep_kw[name] = _coerce(GepConfig, key, name, value)
        elif key.startswith("anfis."):
            name = key[6:]
            anfis_kw[name] = _coerce(AnfisConfig, key, name, value)
    return GepConfig(**gep_kw), AnfisConfig(**anfis_kw)


RUN_KEYS = {"data", "synthetic", "seed", "train_fraction", "models", "model", "hcvcm",
            "hcvcm_generations", "feature_mode", "library"}


def run_configs_from_kv(kv: dict, base_dir=".") -> list:
    """Expand a compare/run file into one RunConfig per listed model."""
    from .pipeline import RunConfig, parse_model_label

    unknown = [k for k in kv if k not in RUN_KEYS and not k.startswith(("gep.", "anfis."))]
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(unknown)}")
    base_dir = Path(base_dir)
    data_path = synthetic = None
    if "data" in kv:
        data_path = str(base_dir / kv["data"])
    if "synthetic" in kv:
        spec_file = kv["synthetic"]
        synthetic = generator_spec_from_kv(read_kv(base_dir / spec_file) if spec_file else {})
    if (data_path is None) == (synthetic is None):
        raise ConfigError("exactly one of 'data' or 'synthetic' is required")

    gep_cfg, anfis_cfg = model_configs(kv)
    labels = kv.get("models") or kv.get("model")
    if not labels:
        raise ConfigError("no models listed")
    common = dict(
        data_path=data_path,
        synthetic=synthetic,
        seed=_number("seed", kv.get("seed", "0"), int),
        train_fraction=_number("train_fraction", kv.get("train_fraction", "0.7")),
        hcvcm_generations=_number("hcvcm_generations", kv.get("hcvcm_generations", "1"), int),
        feature_mode=kv.get("feature_mode", "best"),
        library=tuple(v.strip() for v in kv["library"].split(",")) if "library" in kv else DEFAULT_LIBRARY,
        gep=gep_cfg,
        anfis=anfis_cfg,
    )
    all_hcvcm = kv.get("hcvcm", "false").lower() in ("true", "1", "yes", "on")
    out = []
    for label in (v.strip() for v in labels.split(",")):
        if not label:
            continue
        model, hcvcm = parse_model_label(label)
        out.append(RunConfig(model=model, hcvcm=hcvcm or all_hcvcm, **common))
    return out

