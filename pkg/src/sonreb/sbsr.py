"""Step-by-step regression.

Inputs are ranked by r² with the output. Cell 1 regresses the output on the
best input; every later cell regresses it on the next input plus the
previous cell's prediction. A final least-squares stage combines all cell
predictions.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .data import Dataset, OUTPUT
from .errors import DomainError, SingularDesignError
from .metrics import coeff_det

RANK_TOL = 1e-10


def ols_fit(design, y, names=None) -> np.ndarray:
    """Least-squares coefficients for ``design @ b ~ y``.

    ``design`` should already carry its column of ones. The normal equations
    are solved through a column-pivoted QR factorization; a pivot below
    ``RANK_TOL`` times the largest one marks the design as singular.
    """
    X = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or X.shape[0] != y.size:
        raise DomainError("design and response shapes do not match")
    n, k = X.shape
    if n < k:
        raise DomainError(f"need at least {k} rows, got {n}")
    q, r, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    small = np.nonzero(diag < RANK_TOL * diag[0])[0] if diag.size and diag[0] > 0 else np.arange(k)
    if small.size:
        col = int(piv[small[0]])
        label = names[col] if names is not None else col
        raise SingularDesignError(label)
    b = np.empty(k)
    b[piv] = scipy.linalg.solve_triangular(r, q.T @ y)
    return b


def _with_ones(*cols):
    return np.column_stack([np.ones(len(cols[0]))] + list(cols))


@dataclass(frozen=True, eq=False)
class SbsrModel:
    """``cells[0]`` is (b1, b2); later cells are (intercept, input coef, previous-cell coef).

    ``final`` is the intercept followed by one coefficient per cell.
    """

    order: tuple[str, ...]
    cells: tuple[np.ndarray, ...]
    final: np.ndarray

    @property
    def n_coefficients(self) -> int:
        return sum(c.size for c in self.cells) + self.final.size

    def save(self, path) -> None:
        Path(path).write_text(dumps(self), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "SbsrModel":
        return loads(Path(path).read_text(encoding="utf-8"))


def rank_inputs(d: Dataset, inputs, output=OUTPUT) -> list[tuple[str, float]]:
    """Inputs with their training r², best first; ties broken by name."""
    tr = d.train()
    y = tr.column(output)
    scored = [(name, coeff_det(tr.column(name), y)) for name in inputs]
    return sorted(scored, key=lambda t: (-t[1], t[0]))


def cell_outputs(m: SbsrModel, X) -> np.ndarray:
    """Predictions of every cell, shape ``(rows, cells)``; ``X`` columns follow ``m.order``."""
    F = np.empty((X.shape[0], len(m.cells)))
    b = m.cells[0]
    F[:, 0] = b[0] + b[1] * X[:, 0]
    for i in range(1, len(m.cells)):
        b = m.cells[i]
        F[:, i] = b[0] + b[1] * X[:, i] + b[2] * F[:, i - 1]
    return F


def sbsr_fit(d: Dataset, inputs, output: str = OUTPUT) -> SbsrModel:
    if not inputs:
        raise DomainError("need at least one input")
    order = tuple(name for name, _ in rank_inputs(d, inputs, output))
    tr = d.train()
    X = tr.matrix(order)
    y = tr.column(output)

    cells = [ols_fit(_with_ones(X[:, 0]), y, ["const", order[0]])]
    prev = cells[0][0] + cells[0][1] * X[:, 0]
    for i in range(1, len(order)):
        b = ols_fit(_with_ones(X[:, i], prev), y, ["const", order[i], f"F{i}"])
        cells.append(b)
        prev = b[0] + b[1] * X[:, i] + b[2] * prev
    partial = SbsrModel(order, tuple(cells), np.zeros(len(cells) + 1))
    F = cell_outputs(partial, X)
    final = ols_fit(_with_ones(*F.T), y, ["const"] + [f"F{i + 1}" for i in range(len(cells))])
    return SbsrModel(order, tuple(cells), final)


def sbsr_predict(m: SbsrModel, rows: Dataset) -> np.ndarray:
    F = cell_outputs(m, rows.matrix(m.order))
    return m.final[0] + F @ m.final[1:]


def dumps(m: SbsrModel) -> str:
    lines = ["order " + " ".join(m.order)]
    for i, c in enumerate(m.cells, 1):
        lines.append(f"cell{i} " + " ".join(repr(float(v)) for v in c))
    lines.append("final " + " ".join(repr(float(v)) for v in m.final))
    return "\n".join(lines) + "\n"


def loads(text: str) -> SbsrModel:
    order, cells, final = None, [], None
    for line in text.splitlines():
        if not line.strip():
            continue
        tag, *rest = line.split()
        if tag == "order":
            order = tuple(rest)
        elif tag.startswith("cell"):
            cells.append(np.array([float(v) for v in rest]))
        elif tag == "final":
            final = np.array([float(v) for v in rest])
        else:
            raise DomainError(f"unknown SBSR record {tag!r}")
    if order is None or final is None or len(cells) != len(order):
        raise DomainError("incomplete SBSR model text")
    return SbsrModel(order, tuple(cells), final)
