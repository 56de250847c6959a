"""Grid-partitioned Takagi-Sugeno ANFIS with Gaussian memberships.

Layer 1 evaluates ``exp(-(x - C)^2 / (2 sigma^2))`` for every input and
membership function, layer 2 multiplies one membership per input into each
rule's firing strength, layer 3 normalizes the strengths, layer 4 weights
each rule's linear consequent and layer 5 sums.

Rules are the lexicographic product of membership indices: with two inputs
and three MFs each, rule 0 is (0, 0), rule 1 is (0, 1), ..., rule 8 is (2, 2).
Each rule's consequent row holds one coefficient per input followed by the
constant term.
"""
from __future__ import annotations

import csv
import itertools
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, OUTPUT
from .errors import ConfigError, DomainError

log = logging.getLogger(__name__)

UNDERFLOW = 1e-300
MAX_RULES = 10_000
SIGMA_FLOOR = 1e-6  # relative to the input's training range
DEAD_RULE = 1e-12


@dataclass
class AnfisConfig:
    mfs_per_input: int = 3
    epochs: int = 100
    learning_rate: float = 0.01
    seed: int = 0
    hybrid: bool = True

    def validate(self, n_inputs: int) -> None:
        if self.mfs_per_input < 2:
            raise ConfigError("mfs_per_input must be at least 2")
        if self.epochs < 1:
            raise ConfigError("epochs must be at least 1")
        if not self.learning_rate >= 0:
            raise ConfigError("learning_rate must be non-negative")
        if n_inputs < 1:
            raise ConfigError("need at least one input")
        if self.mfs_per_input ** n_inputs > MAX_RULES:
            raise ConfigError(f"{self.mfs_per_input}^{n_inputs} rules exceeds the limit of {MAX_RULES}")


@dataclass(eq=False)
class AnfisModel:
    """``centers``/``sigmas`` have shape (inputs, mfs); ``consequents`` (rules, inputs + 1)."""

    input_names: tuple
    centers: np.ndarray
    sigmas: np.ndarray
    consequents: np.ndarray
    dead_rules: tuple = ()

    def __post_init__(self):
        self.input_names = tuple(self.input_names)
        self.centers = np.asarray(self.centers, dtype=float)
        self.sigmas = np.asarray(self.sigmas, dtype=float)
        k, m = self.centers.shape
        if self.sigmas.shape != (k, m) or len(self.input_names) != k:
            raise DomainError("premise arrays do not match the inputs")
        if np.any(self.sigmas <= 0):
            raise DomainError("all sigmas must be positive")
        if self.consequents is None:
            self.consequents = np.zeros((m ** k, k + 1))
        self.consequents = np.asarray(self.consequents, dtype=float)
        if self.consequents.shape != (m ** k, k + 1):
            raise DomainError(f"consequents must have shape {(m ** k, k + 1)}")

    @property
    def n_inputs(self) -> int:
        return self.centers.shape[0]

    @property
    def n_mfs(self) -> int:
        return self.centers.shape[1]

    @property
    def n_rules(self) -> int:
        return self.n_mfs ** self.n_inputs

    @property
    def rule_table(self) -> np.ndarray:
        return rule_table(self.n_inputs, self.n_mfs)

    def copy(self) -> "AnfisModel":
        return AnfisModel(self.input_names, self.centers.copy(), self.sigmas.copy(),
                          self.consequents.copy(), self.dead_rules)

    def save(self, path) -> None:
        Path(path).write_text(dumps(self), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "AnfisModel":
        return loads(Path(path).read_text(encoding="utf-8"))


def rule_table(n_inputs: int, n_mfs: int) -> np.ndarray:
    """MF index per (rule, input), in lexicographic order."""
    return np.array(list(itertools.product(range(n_mfs), repeat=n_inputs)), dtype=np.int64).reshape(-1, n_inputs)


def membership(x, c, sigma):
    """Gaussian membership ``exp(-(x - c)^2 / (2 sigma^2))``."""
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        raise DomainError("sigma must be positive")
    return np.exp(-((np.asarray(x, dtype=float) - c) ** 2) / (2.0 * sigma ** 2))


@dataclass
class Layers:
    mu: np.ndarray  # (rows, inputs, mfs)
    w: np.ndarray  # (rows, rules)
    wbar: np.ndarray  # (rows, rules)
    f: np.ndarray  # (rows, rules)
    y: np.ndarray  # (rows,)
    underflow: np.ndarray  # (rows,) bool


def layers(m: AnfisModel, X) -> Layers:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    mu = membership(X[:, :, None], m.centers[None], m.sigmas[None])
    rules = m.rule_table
    w = np.ones((X.shape[0], rules.shape[0]))
    for i in range(m.n_inputs):
        w = w * mu[:, i, rules[:, i]]
    total = w.sum(axis=1)
    underflow = ~(w.max(axis=1) >= UNDERFLOW)
    safe = np.where(underflow, 1.0, total)
    wbar = np.where(underflow[:, None], 1.0 / rules.shape[0], w / safe[:, None])
    f = X @ m.consequents[:, :-1].T + m.consequents[:, -1]
    y = np.sum(wbar * f, axis=1)
    return Layers(mu, w, wbar, f, y, underflow)


def forward(m: AnfisModel, row) -> tuple[float, np.ndarray]:
    """Five-layer pass for one input row; returns (prediction, normalized weights)."""
    L = layers(m, np.asarray(row, dtype=float).reshape(1, -1))
    if L.underflow[0]:
        log.warning("all rule firing strengths underflowed; using uniform weights")
    return float(L.y[0]), L.wbar[0]


def predict(m: AnfisModel, rows: Dataset) -> np.ndarray:
    return layers(m, rows.matrix(m.input_names)).y


def _design(wbar, X):
    n, r = wbar.shape
    ext = np.column_stack([X, np.ones(n)])
    return (wbar[:, :, None] * ext[:, None, :]).reshape(n, r * ext.shape[1])


def fit_consequents_lse(m: AnfisModel, X, y) -> AnfisModel:
    """Least-squares consequents with the premises held fixed (minimum-norm solution).

    Rules whose normalized firing never exceeds ``DEAD_RULE`` are listed in
    ``dead_rules`` of the returned model.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    L = layers(m, X)
    A = _design(L.wbar, X)
    theta = np.linalg.lstsq(A, y, rcond=None)[0]
    dead = tuple(int(r) for r in np.nonzero(L.wbar.max(axis=0) <= DEAD_RULE)[0])
    cons = theta.reshape(m.n_rules, m.n_inputs + 1)
    if dead:
        cons[list(dead)] = 0.0
        log.info("rules never fire: %s", dead)
    return AnfisModel(m.input_names, m.centers, m.sigmas, cons, dead)


def mse(m: AnfisModel, X, y) -> float:
    e = layers(m, X).y - np.asarray(y, dtype=float)
    return float(np.mean(e * e))


def premise_gradients(m: AnfisModel, X, y) -> tuple[np.ndarray, np.ndarray]:
    """Analytic d(MSE)/dC and d(MSE)/dsigma with the consequents fixed."""
    X = np.asarray(X, dtype=float)
    L = layers(m, X)
    n = X.shape[0]
    e = L.y - np.asarray(y, dtype=float)
    total = np.where(L.underflow, 1.0, L.w.sum(axis=1))
    # d y / d W_r = (f_r - y) / sum(W); frozen on underflow rows
    g = (2.0 / n) * e[:, None] * (L.f - L.y[:, None]) / total[:, None] * L.w
    g[L.underflow] = 0.0
    rules = m.rule_table
    dc = np.zeros_like(m.centers)
    ds = np.zeros_like(m.sigmas)
    for i in range(m.n_inputs):
        onehot = np.zeros((m.n_rules, m.n_mfs))
        onehot[np.arange(m.n_rules), rules[:, i]] = 1.0
        G = g @ onehot  # (rows, mfs)
        diff = X[:, i, None] - m.centers[i]
        s = m.sigmas[i]
        dc[i] = np.sum(G * diff / s ** 2, axis=0)
        ds[i] = np.sum(G * diff ** 2 / s ** 3, axis=0)
    return dc, ds


def consequent_gradient(m: AnfisModel, X, y) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    L = layers(m, X)
    e = L.y - np.asarray(y, dtype=float)
    A = _design(L.wbar, X)
    return ((2.0 / X.shape[0]) * (A.T @ e)).reshape(m.consequents.shape)


def init_premises(X, n_mfs: int) -> tuple[np.ndarray, np.ndarray]:
    """Centers equally spaced over each input's range; sigma = range / (2 * n_mfs)."""
    X = np.asarray(X, dtype=float)
    lo, hi = X.min(axis=0), X.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    centers = lo[:, None] + span[:, None] * np.linspace(0.0, 1.0, n_mfs)[None, :]
    sigmas = np.repeat((span / (2.0 * n_mfs))[:, None], n_mfs, axis=1)
    return centers, sigmas


@dataclass
class AnfisResult:
    model: AnfisModel
    trace: list = field(default_factory=list)  # (epoch, train_rmse)
    best_epoch: int = 0


def train_hybrid(d: Dataset, inputs, output: str = OUTPUT, cfg: AnfisConfig | None = None) -> AnfisResult:
    """Alternate LSE consequent fits with one full-batch gradient step on the premises.

    Gradient steps are taken in range-normalized premise coordinates on the
    MSE divided by the output variance, i.e. ``C -= lr * range^2 * dMSE/dC / var(y)``,
    so ``learning_rate`` does not depend on the data units. The model with
    the lowest training RMSE over all epochs is returned. With
    ``cfg.hybrid = False`` the consequents take gradient steps as well
    instead of being solved for.
    """
    cfg = cfg or AnfisConfig()
    inputs = tuple(inputs)
    cfg.validate(len(inputs))
    tr = d.train()
    X = tr.matrix(inputs)
    y = tr.column(output)
    n_params = len(inputs) + 1
    if cfg.hybrid and X.shape[0] < cfg.mfs_per_input ** len(inputs) * n_params:
        log.warning("fewer training rows than consequent parameters; using the minimum-norm fit")

    centers, sigmas = init_premises(X, cfg.mfs_per_input)
    span = np.ptp(X, axis=0)
    span = np.where(span > 0, span, 1.0)
    floor = (SIGMA_FLOOR * span)[:, None]
    var_y = float(np.var(y)) or 1.0
    scale = (span ** 2)[:, None] / var_y

    m = AnfisModel(inputs, centers, sigmas, None)
    if not cfg.hybrid:
        m.consequents[:, -1] = y.mean()
        ext = np.column_stack([X, np.ones(len(X))])
        cons_scale = 1.0 / np.maximum(np.mean(ext ** 2, axis=0), 1e-300)

    best, best_rmse, best_epoch, trace = None, np.inf, 0, []
    for epoch in range(1, cfg.epochs + 1):
        if cfg.hybrid:
            m = fit_consequents_lse(m, X, y)
        rmse = float(np.sqrt(mse(m, X, y)))
        trace.append((epoch, rmse))
        if rmse < best_rmse:
            best, best_rmse, best_epoch = m.copy(), rmse, epoch
        if cfg.learning_rate == 0:
            continue
        dc, ds = premise_gradients(m, X, y)
        new_c = m.centers - cfg.learning_rate * scale * dc
        new_s = np.maximum(m.sigmas - cfg.learning_rate * scale * ds, floor)
        cons = m.consequents
        if not cfg.hybrid:
            cons = cons - cfg.learning_rate * cons_scale[None, :] * consequent_gradient(m, X, y)
        m = AnfisModel(inputs, new_c, new_s, cons, m.dead_rules)
    return AnfisResult(model=best, trace=trace, best_epoch=best_epoch)


def dumps(m: AnfisModel) -> str:
    fmt = lambda row: " ".join(repr(float(v)) for v in row)
    lines = ["inputs " + " ".join(m.input_names), f"mfs {m.n_mfs}"]
    for i, name in enumerate(m.input_names):
        lines.append(f"centers {name} {fmt(m.centers[i])}")
        lines.append(f"sigmas {name} {fmt(m.sigmas[i])}")
    for r, row in enumerate(m.consequents):
        lines.append(f"rule {r} {fmt(row)}")
    return "\n".join(lines) + "\n"


def loads(text: str) -> AnfisModel:
    names, centers, sigmas, cons = (), {}, {}, {}
    for line in text.splitlines():
        parts = line.split()
        if not parts:
            continue
        tag = parts[0]
        if tag == "inputs":
            names = tuple(parts[1:])
        elif tag == "centers":
            centers[parts[1]] = [float(v) for v in parts[2:]]
        elif tag == "sigmas":
            sigmas[parts[1]] = [float(v) for v in parts[2:]]
        elif tag == "rule":
            cons[int(parts[1])] = [float(v) for v in parts[2:]]
    return AnfisModel(names, np.array([centers[n] for n in names]), np.array([sigmas[n] for n in names]),
                      np.array([cons[r] for r in sorted(cons)]))


def write_trace(result: AnfisResult, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("epoch", "train_rmse"))
        for epoch, rmse in result.trace:
            w.writerow((epoch, repr(rmse)))
