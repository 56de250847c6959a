"""Datasets of UPV / rebound-number / strength readings.

A :class:`Dataset` is an immutable table of named float columns with an
optional train/test partition. The three measured columns are ``upv``
(km/s), ``rn`` (dimensionless) and ``ccs`` (kg/cm²); derived feature columns
may be appended with :meth:`Dataset.with_column`.
"""
from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError, ParseError, SchemaError
from .metrics import coeff_det

log = logging.getLogger(__name__)

BASE_COLUMNS = ("upv", "rn", "ccs")
INPUTS = ("upv", "rn")
OUTPUT = "ccs"


@dataclass(frozen=True)
class Sample:
    upv: float
    rn: float
    ccs: float

    def __post_init__(self):
        for name in BASE_COLUMNS:
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")
        if self.upv <= 0:
            raise DomainError(f"upv must be positive, got {self.upv}")
        if self.ccs <= 0:
            raise DomainError(f"ccs must be positive, got {self.ccs}")
        if self.rn < 0:
            raise DomainError(f"rn must be non-negative, got {self.rn}")


@dataclass(frozen=True)
class SummaryStats:
    min: float
    max: float
    average: float
    sd: float
    median: float


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable column table with optional split bookkeeping.

    ``values`` has shape ``(n_rows, len(columns))``. When a split is present,
    ``train_idx`` and ``test_idx`` are sorted, disjoint and cover every row.
    """

    columns: tuple[str, ...]
    values: np.ndarray
    train_idx: np.ndarray | None = None
    test_idx: np.ndarray | None = None
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float, copy=True)
        if values.ndim != 2:
            values = values.reshape(-1, len(self.columns))
        if values.shape[1] != len(self.columns):
            raise DomainError("values do not match the column list")
        if len(set(self.columns)) != len(self.columns):
            raise DomainError("duplicate column names")
        values.setflags(write=False)
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "_index", {c: i for i, c in enumerate(self.columns)})
        if (self.train_idx is None) != (self.test_idx is None):
            raise DomainError("train_idx and test_idx must be given together")
        if self.train_idx is not None:
            tr = np.sort(np.asarray(self.train_idx, dtype=np.int64))
            te = np.sort(np.asarray(self.test_idx, dtype=np.int64))
            cover = np.concatenate([tr, te])
            if cover.size != len(self) or not np.array_equal(np.sort(cover), np.arange(len(self))):
                raise DomainError("split must partition the rows")
            tr.setflags(write=False)
            te.setflags(write=False)
            object.__setattr__(self, "train_idx", tr)
            object.__setattr__(self, "test_idx", te)

    @classmethod
    def from_samples(cls, samples) -> "Dataset":
        rows = [(s.upv, s.rn, s.ccs) for s in samples]
        return cls(BASE_COLUMNS, np.array(rows, dtype=float).reshape(-1, 3))

    @classmethod
    def from_columns(cls, data: dict) -> "Dataset":
        names = tuple(data)
        return cls(names, np.column_stack([np.asarray(data[c], dtype=float) for c in names]))

    def __len__(self):
        return self.values.shape[0]

    @property
    def has_split(self) -> bool:
        return self.train_idx is not None

    @property
    def samples(self) -> list[Sample]:
        cols = [self.column(c) for c in BASE_COLUMNS]
        return [Sample(*map(float, row)) for row in zip(*cols)]

    def _resolve(self, name):
        if name in self._index:
            return self._index[name]
        lowered = name.lower()
        if lowered in self._index:
            return self._index[lowered]
        raise SchemaError(name)

    def has_column(self, name) -> bool:
        try:
            self._resolve(name)
        except SchemaError:
            return False
        return True

    def column(self, name) -> np.ndarray:
        return self.values[:, self._resolve(name)]

    def matrix(self, names) -> np.ndarray:
        return self.values[:, [self._resolve(n) for n in names]]

    def rows(self, idx) -> "Dataset":
        """Row subset without split information."""
        return Dataset(self.columns, self.values[np.asarray(idx, dtype=np.int64)])

    def train(self) -> "Dataset":
        """Training rows, or every row when no split has been made."""
        return self if not self.has_split else self.rows(self.train_idx)

    def test(self) -> "Dataset":
        if not self.has_split:
            raise DomainError("dataset has no split")
        return self.rows(self.test_idx)

    def with_column(self, name, values) -> "Dataset":
        values = np.asarray(values, dtype=float).reshape(-1)
        if values.size != len(self):
            raise DomainError(f"column {name!r} has {values.size} values for {len(self)} rows")
        if name in self._index:
            raise DomainError(f"column {name!r} already exists")
        return Dataset(
            self.columns + (name,),
            np.column_stack([self.values, values]),
            self.train_idx,
            self.test_idx,
        )

    def with_split(self, train_idx, test_idx) -> "Dataset":
        return Dataset(self.columns, self.values, train_idx, test_idx)


# --------------------------------------------------------------------------
# CSV


def load_csv(path) -> Dataset:
    """Read a comma-separated file with (at least) ``upv``, ``rn``, ``ccs`` columns.

    Column order and header case are free; extra columns are ignored with a
    warning. Blank lines are skipped.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = None
        for header in reader:
            if any(cell.strip() for cell in header):
                break
        else:
            header = None
        if header is None:
            raise SchemaError("upv", "file has no header row; expected columns upv, rn, ccs")
        names = [h.strip().lower() for h in header]
        where = {}
        for col in BASE_COLUMNS:
            if col not in names:
                raise SchemaError(col)
            where[col] = names.index(col)
        extra = [h for h in names if h not in BASE_COLUMNS]
        if extra:
            warnings.warn(f"ignoring extra columns: {', '.join(extra)}", stacklevel=2)

        samples = []
        for row in reader:
            line = reader.line_num
            if not any(cell.strip() for cell in row):
                continue
            vals = []
            for col in BASE_COLUMNS:
                j = where[col]
                try:
                    v = float(row[j])
                except (IndexError, ValueError):
                    cell = row[j] if j < len(row) else ""
                    raise ParseError(f"line {line}: column {col}: not a number: {cell!r}", row=line) from None
                if not math.isfinite(v):
                    raise ParseError(f"line {line}: column {col}: non-finite value {v}", row=line)
                vals.append(v)
            try:
                samples.append(Sample(*vals))
            except DomainError as exc:
                raise ParseError(f"line {line}: {exc}", row=line) from None
    return Dataset.from_samples(samples)


def write_csv(d: Dataset, path, columns=BASE_COLUMNS) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in d.matrix(columns):
            w.writerow([repr(float(v)) for v in row])


def write_split_manifest(d: Dataset, path) -> None:
    if not d.has_split:
        raise DomainError("dataset has no split")
    Path(path).write_text(split_manifest_text(d), encoding="utf-8")


def split_manifest_text(d: Dataset) -> str:
    lines = [f"train,{i}" for i in d.train_idx] + [f"test,{i}" for i in d.test_idx]
    return "\n".join(lines) + "\n"


def read_split_manifest(path) -> tuple[np.ndarray, np.ndarray]:
    train, test = [], []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        tag, idx = line.split(",")
        (train if tag == "train" else test).append(int(idx))
    return np.array(train, dtype=np.int64), np.array(test, dtype=np.int64)


# --------------------------------------------------------------------------
# splitting and summaries


def split_dataset(d: Dataset, train_fraction: float = 0.7, seed: int = 0) -> Dataset:
    """Seeded uniform random train/test partition.

    The first ``round(train_fraction * n)`` entries of a seeded permutation
    (half rounds up) form the training set.
    """
    if not 0.0 < train_fraction < 1.0:
        raise DomainError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n = len(d)
    if n < 2:
        raise DomainError("need at least 2 rows to split")
    n_train = int(math.floor(train_fraction * n + 0.5))
    perm = np.random.default_rng(seed).permutation(n)
    return d.with_split(perm[:n_train], perm[n_train:])


def summarize(d: Dataset, column: str) -> SummaryStats:
    x = d.column(column)
    if x.size == 0:
        raise DomainError("cannot summarize an empty column")
    sd = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
    return SummaryStats(
        min=float(x.min()),
        max=float(x.max()),
        average=float(x.mean()),
        sd=sd,
        median=float(np.median(x)),
    )


def r2_table(d: Dataset, columns=BASE_COLUMNS) -> dict[tuple[str, str], float]:
    """Pairwise coefficients of determination, keyed by ``(a, b)`` with ``a`` before ``b``."""
    out = {}
    for i, a in enumerate(columns):
        for b in columns[i + 1:]:
            out[(a, b)] = coeff_det(d.column(a), d.column(b))
    return out


# --------------------------------------------------------------------------
# synthetic data

#: Reference summary statistics of the 516-sample field dataset.
REFERENCE_STATS = {
    "upv": SummaryStats(min=3.37, max=5.22, average=4.44, sd=0.35, median=4.45),
    "rn": SummaryStats(min=3.0, max=52.0, average=29.0, sd=7.32, median=28.0),
    "ccs": SummaryStats(min=113.33, max=569.21, average=276.92, sd=98.60, median=261.97),
}

#: Reference coefficients of determination between the variables.
REFERENCE_R2 = {
    ("upv", "ccs"): 0.443,
    ("rn", "ccs"): 0.758,
    ("upv", "rn"): 0.513,
}


@dataclass(frozen=True, eq=False)
class GeneratorSpec:
    """Calibration targets for :func:`generate_synthetic`.

    ``target_corr`` holds signed Pearson correlations in ``variables`` order.
    Moments whose ``min``/``max`` are infinite are not clipped.
    """

    n: int
    seed: int
    target_moments: dict
    target_corr: np.ndarray
    variables: tuple[str, ...] = BASE_COLUMNS

    def __post_init__(self):
        object.__setattr__(self, "target_corr", np.asarray(self.target_corr, dtype=float))
        object.__setattr__(self, "variables", tuple(self.variables))

    def validate(self) -> None:
        k = len(self.variables)
        c = self.target_corr
        if self.n < 2:
            raise DomainError("n must be at least 2")
        if c.shape != (k, k):
            raise DomainError(f"target_corr must be {k}x{k}")
        if not np.all(np.isfinite(c)):
            raise DomainError("target_corr must be finite")
        if not np.allclose(c, c.T, atol=1e-12):
            raise DomainError("target_corr must be symmetric")
        if not np.allclose(np.diag(c), 1.0, atol=1e-12):
            raise DomainError("target_corr must have a unit diagonal")
        lam = np.linalg.eigvalsh(c)
        if lam.min() < -1e-10:
            raise DomainError(f"target_corr is not positive semidefinite (eigenvalue {lam.min():.3g})")
        for v in self.variables:
            m = self.target_moments.get(v)
            if m is None:
                raise DomainError(f"no target moments for {v}")
            if m.sd < 0 or not m.min < m.max:
                raise DomainError(f"invalid target moments for {v}")
            if not m.min <= m.average <= m.max:
                raise DomainError(f"target mean of {v} lies outside [min, max]")


def corr_from_r2(r2: dict, variables=BASE_COLUMNS) -> np.ndarray:
    """Correlation matrix with positive ``r = sqrt(r2)`` off-diagonal entries."""
    k = len(variables)
    c = np.eye(k)
    pos = {v: i for i, v in enumerate(variables)}
    for (a, b), val in r2.items():
        i, j = pos[a], pos[b]
        c[i, j] = c[j, i] = math.sqrt(val)
    return c


def default_generator_spec(n: int = 516, seed: int = 0) -> GeneratorSpec:
    """Generator targets taken from the reference dataset statistics."""
    return GeneratorSpec(n=n, seed=seed, target_moments=dict(REFERENCE_STATS), target_corr=corr_from_r2(REFERENCE_R2))


def _psd_sqrt(c):
    lam, vec = np.linalg.eigh(c)
    return vec * np.sqrt(np.clip(lam, 0.0, None))


def _nearest_corr(c):
    lam, vec = np.linalg.eigh((c + c.T) / 2)
    c = (vec * np.clip(lam, 1e-9, None)) @ vec.T
    s = np.sqrt(np.diag(c))
    c = c / np.outer(s, s)
    np.fill_diagonal(c, 1.0)
    return c


def generate_synthetic(spec: GeneratorSpec, max_iter: int = 100, tol: float = 1e-10) -> Dataset:
    """Draw correlated samples through a Gaussian copula.

    Latent normals are whitened so their sample covariance is exactly the
    identity, then coloured with the latent correlation, scaled to the target
    mean/SD and clipped to ``[min, max]``. Clipping shifts the realized
    moments, so the latent correlation, location and scale are refined by
    fixed-point iteration on the same draws until the clipped sample matches
    the targets.
    """
    spec.validate()
    k = len(spec.variables)
    rng = np.random.default_rng(spec.seed)
    z = rng.standard_normal((spec.n, k))
    if spec.n > k + 1:
        z = z - z.mean(axis=0)
        chol = np.linalg.cholesky(np.cov(z, rowvar=False))
        z = np.linalg.solve(chol, z.T).T

    moments = [spec.target_moments[v] for v in spec.variables]
    mu_t = np.array([m.average for m in moments])
    sd_t = np.array([m.sd for m in moments])
    lo = np.array([m.min for m in moments])
    hi = np.array([m.max for m in moments])
    target = spec.target_corr

    mu, sd, latent = mu_t.copy(), sd_t.copy(), target.copy()
    active = sd_t > 0
    for _ in range(max_iter):
        x = np.clip(mu + sd * (z @ _psd_sqrt(latent).T), lo, hi)
        m = x.mean(axis=0)
        s = x.std(axis=0, ddof=1)
        err_m = mu_t - m
        err_s = np.where(active, sd_t - s, 0.0)
        if np.all(active) and spec.n > 2 and np.all(s > 0):
            err_c = target - np.corrcoef(x, rowvar=False)
        else:
            err_c = np.zeros_like(target)
        if max(np.abs(err_m / np.maximum(sd_t, 1e-300)).max(), np.abs(err_s / np.maximum(sd_t, 1e-300)).max(),
               np.abs(err_c).max()) < tol:
            break
        mu = mu + err_m
        sd = np.where(active & (s > 0), sd * sd_t / np.where(s > 0, s, 1.0), sd)
        latent = _nearest_corr(latent + err_c)

    d = Dataset(spec.variables, x)
    base = [c for c in BASE_COLUMNS if c in spec.variables]
    if len(base) == len(BASE_COLUMNS):
        bad = (d.column("upv") <= 0) | (d.column("ccs") <= 0) | (d.column("rn") < 0)
        if np.any(bad):
            raise DomainError("generated samples violate positivity; set finite min bounds")
    return d
