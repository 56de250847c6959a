"""Independent oracles and data builders shared by the test modules.

The oracles here deliberately avoid the package's numerical code paths:
plain Python loops, the ``math`` module and explicit formulas.
"""
import math

import numpy as np

from sonreb.data import Dataset

# --------------------------------------------------------------------------
# correlation


def r2_loop(x, y):
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    sxy = sxx = syy = 0.0
    for a, b in zip(x, y):
        sxy += (a - mx) * (b - my)
        sxx += (a - mx) ** 2
        syy += (b - my) ** 2
    if sxx == 0.0 or syy == 0.0:
        return None
    return sxy * sxy / (sxx * syy)


MATH_TRANSFORMS = {
    "square": lambda v: v * v,
    "cube": lambda v: v ** 3,
    "pow4": lambda v: v ** 4,
    "pow5": lambda v: v ** 5,
    "sqrt": math.sqrt,
    "reciprocal": lambda v: 1.0 / v,
    "ln": math.log,
    "exp": math.exp,
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "sinh": math.sinh,
    "cosh": math.cosh,
    "tanh": math.tanh,
}


def _apply(kind, col):
    out = []
    for v in col:
        try:
            r = MATH_TRANSFORMS[kind](v)
        except (ValueError, OverflowError, ZeroDivisionError):
            return None
        if not math.isfinite(r):
            return None
        out.append(r)
    return out


def hcvcm_oracle(columns, train_rows, inputs, output, library):
    """Literal rule 1 / rule 2 filter over every input x kind candidate.

    ``columns`` maps names to Python lists covering all rows. Returns the
    selected candidate names in enumeration order, and the number of
    conflicting pairs seen.
    """
    def train(col):
        return [col[i] for i in train_rows]

    y = train(columns[output])
    cands = []  # (name, parent, r2, train column)
    for parent in inputs:
        for kind in library:
            col = _apply(kind, columns[parent])
            if col is None:
                continue
            r2 = r2_loop(train(col), y)
            if r2 is None:
                continue
            cands.append((f"{kind}({parent})", parent, r2, train(col)))

    base = {p: r2_loop(train(columns[p]), y) for p in inputs}
    rule1 = [c for c in cands if c[2] > base[c[1]]]

    def violates(a, b):
        if a[1] == b[1]:
            return False
        return r2_loop(a[3], b[3]) >= r2_loop(train(columns[a[1]]), train(columns[b[1]]))

    conflicts = {}
    for a in rule1:
        for b in rule1:
            if a is not b and violates(a, b):
                conflicts.setdefault(a[0], []).append(r2_loop(a[3], b[3]))

    # Drop the lower-r2 member of each violating pair, strongest candidates first;
    # ties go against the larger cross r2, then the later name.
    ranked = sorted(rule1, key=lambda c: (-c[2], max(conflicts.get(c[0], [0.0])), c[0]))
    kept = []
    for c in ranked:
        if all(not violates(c, k) for k in kept):
            kept.append(c)
    keep_names = {c[0] for c in kept}
    n_conflicts = sum(len(v) for v in conflicts.values()) // 2
    return [c[0] for c in cands if c[0] in keep_names], n_conflicts


# --------------------------------------------------------------------------
# Karva reference decoder (recursive, positional)

ARITY = {"+": 2, "-": 2, "*": 2, "/": 2, "sqrt": 1, "ln": 1, "exp": 1, "sin": 1, "cos": 1, "sq": 1}


def karva_levels(gene):
    """Split the used prefix of ``gene`` into breadth-first levels."""
    levels = [[gene[0]]]
    pos = 1
    while True:
        need = sum(ARITY.get(s, 0) for s in levels[-1])
        if need == 0:
            return levels
        levels.append(list(gene[pos:pos + need]))
        pos += need


def karva_to_nested(gene):
    """Nested tuples ``(symbol, child, ...)`` built level by level."""
    levels = karva_levels(gene)
    nodes = [[(s, []) for s in lvl] for lvl in levels]
    for depth in range(len(levels) - 1):
        kids = iter(nodes[depth + 1])
        for sym, children in nodes[depth]:
            for _ in range(ARITY.get(sym, 0)):
                children.append(next(kids))

    def freeze(node):
        sym, children = node
        return (sym,) + tuple(freeze(c) for c in children)

    return freeze(nodes[0][0])


def eval_nested(node, row, constants=None):
    sym, *kids = node
    if not kids:
        if sym.startswith("?"):
            return float(constants[int(sym[1:])])
        return float(row[sym])
    v = [eval_nested(k, row, constants) for k in kids]
    if sym == "+":
        out = v[0] + v[1]
    elif sym == "-":
        out = v[0] - v[1]
    elif sym == "*":
        out = v[0] * v[1]
    elif sym == "/":
        out = 1.0 if abs(v[1]) < 1e-12 else v[0] / v[1]
    elif sym == "sqrt":
        out = math.sqrt(abs(v[0]))
    elif sym == "ln":
        out = 0.0 if abs(v[0]) < 1e-12 else math.log(abs(v[0]))
    elif sym == "exp":
        out = math.exp(min(max(v[0], -60.0), 60.0))
    elif sym == "sin":
        out = math.sin(v[0])
    elif sym == "cos":
        out = math.cos(v[0])
    elif sym == "sq":
        out = v[0] * v[0]
    else:
        raise KeyError(sym)
    if math.isnan(out):
        raise ArithmeticError("nan")
    return min(max(out, -1e150), 1e150)


# --------------------------------------------------------------------------
# data builders


def whitened_normals(rng, n, k):
    z = rng.standard_normal((n, k))
    z -= z.mean(axis=0)
    return np.linalg.solve(np.linalg.cholesky(np.cov(z, rowvar=False)), z.T).T


def engineered_reference_data(n=516, seed=0):
    """Strength driven by ``rn**2`` and ``exp(upv)`` with the reference pairwise r² exactly.

    UPV and RN are correlated normals with the reference moments. Strength is a mix
    of standardized ``rn**2``, ``exp(upv)`` and noise orthogonal to the
    inputs, with mixing weights solved so that r²(rn, ccs) = 0.758 and
    r²(upv, ccs) = 0.443 hold on the sample.
    """
    rng = np.random.default_rng(seed)
    z = whitened_normals(rng, n, 3)
    r = math.sqrt(0.513)
    upv = 4.44 + 0.35 * z[:, 0]
    rn = 29.0 + 7.32 * (r * z[:, 0] + math.sqrt(1.0 - r * r) * z[:, 1])

    def std(v):
        return (v - v.mean()) / v.std(ddof=1)

    u, v = std(rn ** 2), std(np.exp(upv))
    basis = np.column_stack([np.ones(n), u, v, rn, upv])
    e = z[:, 2] - basis @ np.linalg.lstsq(basis, z[:, 2], rcond=None)[0]
    e = std(e)
    srn, supv = std(rn), std(upv)
    G = np.array([[u @ srn, v @ srn], [u @ supv, v @ supv]]) / (n - 1)
    a, b = np.linalg.solve(G, [math.sqrt(0.758), math.sqrt(0.443)])
    c2 = 1.0 - np.var(a * u + b * v, ddof=1)
    assert c2 > 0
    ccs = 276.92 + 98.6 * (a * u + b * v + math.sqrt(c2) * e)
    return Dataset.from_columns({"upv": upv, "rn": rn, "ccs": ccs})


def random_hcvcm_dataset(rng, n, k):
    """Positive correlated inputs and a nonlinear noisy output."""
    names = [f"x{i}" for i in range(k)]
    rho = rng.uniform(0.2, 0.95)
    z = rng.standard_normal((n, k))
    z[:, 1:] = rho * z[:, :1] + math.sqrt(1 - rho * rho) * z[:, 1:]
    cols = {}
    for i, name in enumerate(names):
        cols[name] = np.abs(rng.uniform(0.5, 3.0) + rng.uniform(0.2, 1.0) * z[:, i]) + 0.05
    w = rng.normal(size=k)
    powers = rng.choice([0.5, 1.0, 2.0, 3.0], size=k)
    signal = sum(w[i] * cols[n_] ** powers[i] for i, n_ in enumerate(names))
    cols["y"] = signal + rng.normal(scale=0.3 * np.std(signal) + 1e-3, size=n)
    return Dataset.from_columns(cols), names
