"""High-correlated-variable creation: transform, gate, prune.

Each input is passed through a library of unary transforms. A transformed
variable survives when

1. its r² with the output beats its parent's r² with the output, and
2. for every surviving variable built from a *different* parent, the r²
   between the two transformed columns stays below the r² between the two
   parents.

Pairs breaking rule 2 are resolved greedily: candidates are ranked by r² with
the output (descending), then by their largest cross-r² with a conflicting
candidate (ascending), then by name, and each one is kept only if it
conflicts with no already-kept candidate. All correlations use the training
rows only.

Feature names nest as ``kind(parent)``, e.g. ``square(exp(upv))``, which is
enough to rebuild any feature column from the raw inputs.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset, OUTPUT
from .errors import DegenerateInputError, DomainError, SchemaError
from .metrics import coeff_det

TRANSFORMS = {
    "identity": lambda x: x,
    "square": np.square,
    "cube": lambda x: x ** 3,
    "pow4": lambda x: x ** 4,
    "pow5": lambda x: x ** 5,
    "sqrt": np.sqrt,
    "reciprocal": lambda x: 1.0 / x,
    "ln": np.log,
    "exp": np.exp,
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "tanh": np.tanh,
}

DEFAULT_LIBRARY = (
    "square", "cube", "pow4", "pow5", "sqrt", "reciprocal", "ln",
    "exp", "sin", "cos", "tan", "sinh", "cosh", "tanh",
)


def register_transform(kind: str, func) -> None:
    """Add a user-defined elementwise transform under ``kind``."""
    if not kind.isidentifier():
        raise DomainError(f"transform name must be an identifier: {kind!r}")
    TRANSFORMS[kind] = func


def feature_name(kind: str, parent: str) -> str:
    return parent if kind == "identity" else f"{kind}({parent})"


@dataclass(frozen=True)
class FeatureTransform:
    name: str
    parent: str
    kind: str
    r2_output: float = math.nan
    generation: int = 1
    origin: str = ""

    def __post_init__(self):
        if self.kind not in TRANSFORMS:
            raise DomainError(f"unknown transform kind {self.kind!r}")
        if not self.origin:
            object.__setattr__(self, "origin", self.parent)

    @classmethod
    def make(cls, kind, parent, **kw) -> "FeatureTransform":
        return cls(name=feature_name(kind, parent), parent=parent, kind=kind, **kw)


@dataclass(frozen=True)
class CandidateOutcome:
    feature: FeatureTransform
    baseline_r2: float
    passed_rule1: bool
    passed_rule2: bool | None  # None when rule 1 already rejected it


@dataclass(frozen=True, eq=False)
class FeatureSet:
    selected: tuple[FeatureTransform, ...] = ()
    r2_cross: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    outcomes: tuple[CandidateOutcome, ...] = ()

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.selected]

    def __len__(self):
        return len(self.selected)


def _split_name(name):
    """``"exp(upv)" -> ("exp", "upv")``; ``None`` when not a transform name."""
    if not name.endswith(")"):
        return None
    i = name.find("(")
    if i <= 0 or name[:i] not in TRANSFORMS:
        return None
    return name[:i], name[i + 1:-1]


def feature_column(name: str, d: Dataset) -> np.ndarray:
    """Column ``name`` from ``d``, rebuilding nested transforms from their parents."""
    if d.has_column(name):
        return d.column(name)
    parts = _split_name(name)
    if parts is None:
        raise SchemaError(name)
    kind, parent = parts
    with np.errstate(all="ignore"):
        return TRANSFORMS[kind](feature_column(parent, d))


def materialize(d: Dataset, names) -> Dataset:
    """Append every named feature column that ``d`` does not already hold."""
    for name in names:
        if not d.has_column(name):
            d = d.with_column(name, feature_column(name, d))
    return d


def apply_transform(t: FeatureTransform, d: Dataset) -> np.ndarray | None:
    """Apply ``t`` to its parent column; ``None`` if any value is non-finite."""
    parent = feature_column(t.parent, d)
    with np.errstate(all="ignore"):
        out = np.asarray(TRANSFORMS[t.kind](parent), dtype=float)
    if not np.all(np.isfinite(out)):
        return None
    return out


def generate_candidates(d: Dataset, inputs, library=DEFAULT_LIBRARY, output: str = OUTPUT,
                        generation: int = 1, origins: dict | None = None) -> list[FeatureTransform]:
    """Every ``input x kind`` transform whose column is finite on all rows.

    ``r2_output`` is computed on the training rows. Candidates that are
    constant on the training rows carry no correlation and are dropped too.
    """
    if not inputs:
        raise DomainError("inputs must be nonempty")
    origins = origins or {}
    train_idx = d.train_idx if d.has_split else slice(None)
    y = d.train().column(output)
    out = []
    for parent in inputs:
        for kind in library:
            if kind == "identity":
                continue
            t = FeatureTransform.make(kind, parent, generation=generation,
                                      origin=origins.get(parent, parent))
            col = apply_transform(t, d)
            if col is None:
                continue
            try:
                r2 = coeff_det(col[train_idx], y)
            except DegenerateInputError:
                continue
            out.append(replace(t, r2_output=r2))
    return out


def _train_col(name, d, cache):
    if name not in cache:
        cache[name] = feature_column(name, d.train())
    return cache[name]


def select_features(candidates, d: Dataset, output: str = OUTPUT) -> FeatureSet:
    """Gate candidates on output correlation, then prune cross-correlated pairs."""
    candidates = list(candidates)
    if not candidates:
        return FeatureSet()
    cache = {}
    y = d.train().column(output)

    baseline = {}
    for c in candidates:
        if c.parent not in baseline:
            baseline[c.parent] = coeff_det(_train_col(c.parent, d, cache), y)
    passed = [c for c in candidates if c.r2_output > baseline[c.parent]]

    parent_r2 = {}

    def threshold(p1, p2):
        key = (p1, p2) if p1 < p2 else (p2, p1)
        if key not in parent_r2:
            parent_r2[key] = coeff_det(_train_col(p1, d, cache), _train_col(p2, d, cache))
        return parent_r2[key]

    n = len(passed)
    cross = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            cross[i, j] = cross[j, i] = coeff_det(_train_col(passed[i].name, d, cache),
                                                  _train_col(passed[j].name, d, cache))
    conflict = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(i + 1, n):
            pi, pj = passed[i].parent, passed[j].parent
            if pi != pj and cross[i, j] >= threshold(pi, pj):
                conflict[i, j] = conflict[j, i] = True

    worst = [max((cross[i, j] for j in range(n) if conflict[i, j]), default=0.0) for i in range(n)]
    order = sorted(range(n), key=lambda i: (-passed[i].r2_output, worst[i], passed[i].name))
    kept = []
    for i in order:
        if not any(conflict[i, k] for k in kept):
            kept.append(i)
    kept_set = set(kept)
    # Report in candidate order, not priority order.
    kept = sorted(kept)

    outcomes = []
    pos = {id(c): i for i, c in enumerate(passed)}
    for c in candidates:
        i = pos.get(id(c))
        outcomes.append(CandidateOutcome(c, baseline[c.parent], i is not None,
                                         None if i is None else i in kept_set))
    return FeatureSet(
        selected=tuple(passed[i] for i in kept),
        r2_cross=cross[np.ix_(kept, kept)],
        outcomes=tuple(outcomes),
    )


def run_generations(d: Dataset, inputs, library=DEFAULT_LIBRARY, n_gen: int = 1,
                    output: str = OUTPUT) -> FeatureSet:
    """Repeat candidate generation and selection, feeding each generation's picks forward.

    Stops early when a generation selects nothing and returns the previous
    generation's selection. ``outcomes`` accumulates every generation's
    candidates.
    """
    if n_gen < 1:
        raise DomainError("n_gen must be at least 1")
    parents = list(inputs)
    origins = {p: p for p in parents}
    best = None
    history = []
    for g in range(1, n_gen + 1):
        cands = generate_candidates(d, parents, library, output, generation=g, origins=origins)
        fs = select_features(cands, d, output)
        history.extend(fs.outcomes)
        if not fs.selected:
            break
        best = fs
        parents = fs.names
        origins = {f.name: f.origin for f in fs.selected}
    if best is None:
        return FeatureSet(outcomes=tuple(history))
    return replace(best, outcomes=tuple(history))


def reduce_best_per_parent(fs: FeatureSet) -> FeatureSet:
    """Keep the highest-r² feature for each original input (ties: first name)."""
    best = {}
    for i, f in enumerate(fs.selected):
        cur = best.get(f.origin)
        if cur is None:
            best[f.origin] = i
            continue
        g = fs.selected[cur]
        if f.r2_output > g.r2_output or (f.r2_output == g.r2_output and f.name < g.name):
            best[f.origin] = i
    keep = sorted(best.values())
    return FeatureSet(
        selected=tuple(fs.selected[i] for i in keep),
        r2_cross=fs.r2_cross[np.ix_(keep, keep)],
        outcomes=fs.outcomes,
    )


REPORT_COLUMNS = ("feature", "parent", "kind", "generation", "r2_output", "passed_rule1", "passed_rule2")


def write_report(fs: FeatureSet, path) -> None:
    """One row per evaluated candidate; ``passed_rule2`` is blank when rule 1 failed."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for o in fs.outcomes:
            f = o.feature
            rule2 = "" if o.passed_rule2 is None else str(o.passed_rule2).lower()
            w.writerow([f.name, f.parent, f.kind, f.generation, f"{f.r2_output:.6f}",
                        str(o.passed_rule1).lower(), rule2])
