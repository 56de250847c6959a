"""Gene expression programming with Karva-encoded multigenic chromosomes.

Each gene is a fixed-length symbol string: a head of length ``h`` that may
hold functions or terminals, followed by a terminal-only tail of length
``h * (max_arity - 1) + 1``. Genes are read breadth first into expression
trees and the trees of one chromosome are added together.

Terminals are input column names and the constant references ``?0``,
``?1``, ... which index a per-gene table of numeric constants drawn once at
initialization.

All functions are protected, so evaluation is total:

* division by ``|d| < DIV_EPS`` returns 1,
* ``sqrt`` and ``ln`` act on ``|x|``; ``ln`` of ``|x| < DIV_EPS`` returns 0,
* ``exp`` clamps its argument to ``[-EXP_CLAMP, EXP_CLAMP]``,
* every node output is clipped to ``[-VALUE_LIMIT, VALUE_LIMIT]``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, OUTPUT
from .errors import ConfigError, EncodingError

DIV_EPS = 1e-12
EXP_CLAMP = 60.0
VALUE_LIMIT = 1e150
PERFECT_FITNESS = 1000.0


def _div(a, b):
    b = np.asarray(b, dtype=float)
    small = np.abs(b) < DIV_EPS
    with np.errstate(all="ignore"):
        return np.where(small, 1.0, np.asarray(a, dtype=float) / np.where(small, 1.0, b))


def _ln(a):
    a = np.abs(np.asarray(a, dtype=float))
    small = a < DIV_EPS
    return np.where(small, 0.0, np.log(np.where(small, 1.0, a)))


FUNCTIONS = {
    "+": (2, np.add),
    "-": (2, np.subtract),
    "*": (2, np.multiply),
    "/": (2, _div),
    "sqrt": (1, lambda a: np.sqrt(np.abs(a))),
    "ln": (1, _ln),
    "exp": (1, lambda a: np.exp(np.clip(a, -EXP_CLAMP, EXP_CLAMP))),
    "sin": (1, np.sin),
    "cos": (1, np.cos),
    "sq": (1, np.square),
}

DEFAULT_FUNCTIONS = ("+", "-", "*", "/", "sqrt", "ln", "exp", "sin", "cos", "sq")

INFIX = {"+", "-", "*", "/"}


def arity(symbol: str) -> int:
    f = FUNCTIONS.get(symbol)
    return 0 if f is None else f[0]


def const_symbol(k: int) -> str:
    return f"?{k}"


@dataclass
class GepConfig:
    head_length: int = 7
    genes_per_chromosome: int = 3
    population: int = 50
    generations: int = 200
    mutation_rate: float = 0.044
    one_point_recomb_rate: float = 0.3
    two_point_recomb_rate: float = 0.3
    gene_recomb_rate: float = 0.1
    is_transposition_rate: float = 0.1
    function_set: tuple = DEFAULT_FUNCTIONS
    constants_range: tuple = (-10.0, 10.0)
    constants_count: int = 10
    seed: int = 0
    patience: int = 50

    def validate(self) -> None:
        if self.population < 2:
            raise ConfigError("population must be at least 2")
        if self.head_length < 1 or self.genes_per_chromosome < 1:
            raise ConfigError("head_length and genes_per_chromosome must be positive")
        if self.generations < 0 or self.patience < 0 or self.constants_count < 0:
            raise ConfigError("generations, patience and constants_count must be non-negative")
        for name in ("mutation_rate", "one_point_recomb_rate", "two_point_recomb_rate",
                     "gene_recomb_rate", "is_transposition_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if not self.function_set:
            raise ConfigError("function_set is empty")
        unknown = [f for f in self.function_set if f not in FUNCTIONS]
        if unknown:
            raise ConfigError(f"unknown functions: {unknown}")
        lo, hi = self.constants_range
        if not lo <= hi:
            raise ConfigError("constants_range must be increasing")

    @property
    def max_arity(self) -> int:
        return max(arity(f) for f in self.function_set)

    @property
    def tail_length(self) -> int:
        return self.head_length * (self.max_arity - 1) + 1

    @property
    def gene_length(self) -> int:
        return self.head_length + self.tail_length


# --------------------------------------------------------------------------
# expression trees


@dataclass(frozen=True)
class Node:
    symbol: str
    children: tuple = ()
    value: float | None = None  # set on constant terminals


@dataclass(frozen=True)
class ExpressionTree:
    root: Node

    def evaluate(self, row):
        return evaluate_tree(self, row)

    def infix(self) -> str:
        return _infix(self.root)

    def __str__(self):
        return self.infix()


def _infix(node):
    if not node.children:
        return repr(node.value) if node.value is not None else node.symbol
    if node.symbol in INFIX:
        a, b = node.children
        return f"({_infix(a)} {node.symbol} {_infix(b)})"
    return f"{node.symbol}({', '.join(_infix(c) for c in node.children)})"


def decode(gene, max_arity: int = 2, constants=None) -> ExpressionTree:
    """Breadth-first (Karva) reading of ``gene``; unused trailing symbols are ignored."""
    gene = tuple(gene)
    n = len(gene)
    if max_arity < 1 or n == 0 or (n - 1) % max_arity:
        raise EncodingError(f"gene length {n} does not fit max_arity {max_arity}")
    head = (n - 1) // max_arity
    for i in range(head, n):
        if arity(gene[i]) > 0:
            raise EncodingError(f"function {gene[i]!r} at tail position {i}")
    ar = [arity(s) for s in gene]
    if max(ar) > max_arity:
        raise EncodingError("gene contains a function wider than max_arity")

    used, j = 1, 0
    while j < used:
        used += ar[j]
        j += 1
    first_child = [0] * used
    nxt = 1
    for j in range(used):
        first_child[j] = nxt
        nxt += ar[j]

    def build(j):
        sym = gene[j]
        if ar[j]:
            return Node(sym, tuple(build(first_child[j] + c) for c in range(ar[j])))
        value = None
        if sym.startswith("?"):
            if constants is None:
                raise EncodingError(f"constant {sym} without a constant table")
            value = float(constants[int(sym[1:])])
        return Node(sym, value=value)

    return ExpressionTree(build(0))


def _eval(node, row):
    if not node.children:
        if node.value is not None:
            return node.value
        return row[node.symbol]
    fn = FUNCTIONS[node.symbol][1]
    with np.errstate(all="ignore"):
        out = fn(*(_eval(c, row) for c in node.children))
    return np.clip(out, -VALUE_LIMIT, VALUE_LIMIT)


def evaluate_tree(t: ExpressionTree, row):
    """Evaluate on a mapping of terminal name to value (scalars or equal-length arrays)."""
    out = _eval(t.root, row)
    return float(out) if np.ndim(out) == 0 else np.asarray(out, dtype=float)


def link(trees) -> ExpressionTree:
    """Join gene trees with addition."""
    trees = list(trees)
    root = trees[0].root
    for t in trees[1:]:
        root = Node("+", (root, t.root))
    return ExpressionTree(root)


# --------------------------------------------------------------------------
# chromosomes


@dataclass(eq=False)
class GepChromosome:
    genes: list
    constants: list
    fitness: float = 0.0

    def copy(self) -> "GepChromosome":
        return GepChromosome([list(g) for g in self.genes], [c.copy() for c in self.constants], self.fitness)

    def key(self):
        return (tuple(tuple(g) for g in self.genes), tuple(c.tobytes() for c in self.constants))

    def trees(self, max_arity: int) -> list[ExpressionTree]:
        return [decode(g, max_arity, c) for g, c in zip(self.genes, self.constants)]

    def tree(self, max_arity: int) -> ExpressionTree:
        return link(self.trees(max_arity))


class GepSpace:
    """Symbol alphabet and structural rules for one configuration and input set."""

    def __init__(self, cfg: GepConfig, inputs):
        cfg.validate()
        self.cfg = cfg
        self.functions = tuple(cfg.function_set)
        self.terminals = tuple(inputs) + tuple(const_symbol(k) for k in range(cfg.constants_count))
        if not self.terminals:
            raise ConfigError("no terminals")
        bad = [t for t in inputs if t in FUNCTIONS or t.startswith("?")]
        if bad:
            raise ConfigError(f"input names clash with GEP symbols: {bad}")
        self.head_symbols = self.functions + self.terminals
        self.h = cfg.head_length
        self.length = cfg.gene_length
        self.max_arity = cfg.max_arity

    def random_gene(self, rng) -> list:
        head = [self.head_symbols[i] for i in rng.integers(0, len(self.head_symbols), self.h)]
        tail = [self.terminals[i] for i in rng.integers(0, len(self.terminals), self.length - self.h)]
        return head + tail

    def random_constants(self, rng) -> np.ndarray:
        lo, hi = self.cfg.constants_range
        return rng.uniform(lo, hi, self.cfg.constants_count)

    def random_chromosome(self, rng) -> GepChromosome:
        n = self.cfg.genes_per_chromosome
        genes = [self.random_gene(rng) for _ in range(n)]
        return GepChromosome(genes, [self.random_constants(rng) for _ in range(n)])

    def is_valid(self, c: GepChromosome) -> bool:
        if len(c.genes) != self.cfg.genes_per_chromosome or len(c.constants) != len(c.genes):
            return False
        heads, terms = set(self.head_symbols), set(self.terminals)
        for g, k in zip(c.genes, c.constants):
            if len(g) != self.length or k.shape != (self.cfg.constants_count,):
                return False
            if any(s not in heads for s in g[:self.h]) or any(s not in terms for s in g[self.h:]):
                return False
        return True


# --------------------------------------------------------------------------
# genetic operators (in place)


def mutate(c: GepChromosome, space: GepSpace, rate: float, rng) -> None:
    for g in c.genes:
        hits = np.nonzero(rng.random(len(g)) < rate)[0]
        for i in hits:
            pool = space.head_symbols if i < space.h else space.terminals
            g[i] = pool[rng.integers(0, len(pool))]


def is_transpose(c: GepChromosome, space: GepSpace, rng) -> None:
    """Insert a short fragment of a gene into that gene's head, after the root."""
    if space.h < 2:
        return
    g = c.genes[rng.integers(0, len(c.genes))]
    start = int(rng.integers(0, len(g)))
    size = int(rng.integers(1, 4))
    frag = g[start:start + size]
    target = int(rng.integers(1, space.h))
    head = (g[:target] + frag + g[target:space.h])[:space.h]
    g[:space.h] = head


def _flat_swap(a: GepChromosome, b: GepChromosome, lo: int, hi: int, length: int) -> None:
    """Swap the flat symbol range [lo, hi) of two chromosomes; wholly covered genes swap constants."""
    for gi in range(len(a.genes)):
        g0, g1 = gi * length, (gi + 1) * length
        s, e = max(lo, g0), min(hi, g1)
        if s >= e:
            continue
        ga, gb = a.genes[gi], b.genes[gi]
        ga[s - g0:e - g0], gb[s - g0:e - g0] = gb[s - g0:e - g0], ga[s - g0:e - g0]
        if s == g0 and e == g1:
            a.constants[gi], b.constants[gi] = b.constants[gi], a.constants[gi]


def one_point_recombine(a, b, space: GepSpace, rng) -> None:
    total = space.length * len(a.genes)
    p = int(rng.integers(1, total))
    _flat_swap(a, b, p, total, space.length)


def two_point_recombine(a, b, space: GepSpace, rng) -> None:
    total = space.length * len(a.genes)
    p, q = sorted(int(v) for v in rng.choice(np.arange(1, total + 1), size=2, replace=False))
    _flat_swap(a, b, p, q, space.length)


def gene_recombine(a, b, space: GepSpace, rng) -> None:
    gi = int(rng.integers(0, len(a.genes)))
    _flat_swap(a, b, gi * space.length, (gi + 1) * space.length, space.length)


def roulette(fitness, n: int, rng) -> np.ndarray:
    """Fitness-proportional selection of ``n`` indices (uniform if all fitness is zero)."""
    f = np.asarray(fitness, dtype=float)
    total = f.sum()
    if not total > 0:
        return rng.integers(0, f.size, n)
    wheel = np.cumsum(f / total)
    wheel[-1] = 1.0
    return np.searchsorted(wheel, rng.random(n), side="right")


# --------------------------------------------------------------------------
# fitness and evolution


def predict_chromosome(c: GepChromosome, rows, max_arity: int = 2) -> np.ndarray:
    """Sum of gene outputs; ``rows`` maps terminal names to arrays."""
    n = len(next(iter(rows.values())))
    total = np.zeros(n)
    for t in c.trees(max_arity):
        total = total + np.broadcast_to(evaluate_tree(t, rows), (n,))
    return total


def fitness(c: GepChromosome, rows, y, max_arity: int = 2) -> float:
    """``1000 / (1 + RMSE)``; zero when the prediction is not finite."""
    pred = predict_chromosome(c, rows, max_arity)
    with np.errstate(all="ignore"):
        rmse = float(np.sqrt(np.mean((np.asarray(y, dtype=float) - pred) ** 2)))
    if not np.isfinite(rmse):
        return 0.0
    return PERFECT_FITNESS / (1.0 + rmse)


@dataclass
class GepResult:
    best: GepChromosome
    tree: ExpressionTree
    inputs: tuple
    max_arity: int
    log: list = field(default_factory=list)  # (generation, best_fitness, mean_fitness)

    def predict(self, rows: Dataset) -> np.ndarray:
        return gep_predict(self, rows)

    def expression(self) -> str:
        return self.tree.infix()


def _columns(d: Dataset, inputs):
    return {name: d.column(name) for name in inputs}


def evolve(d: Dataset, inputs, output: str = OUTPUT, cfg: GepConfig | None = None) -> GepResult:
    """Run the generational loop on the training rows of ``d``.

    Each generation keeps the best chromosome unchanged, fills the rest by
    roulette selection and then applies mutation, IS transposition,
    one-point, two-point and gene recombination. Stops after
    ``cfg.generations``, on a perfect fit, or after ``cfg.patience``
    generations without an improvement above 1e-9 (``patience=0`` disables
    the plateau stop).
    """
    cfg = cfg or GepConfig()
    inputs = tuple(inputs)
    space = GepSpace(cfg, inputs)
    rng = np.random.default_rng(cfg.seed)
    tr = d.train()
    rows = _columns(tr, inputs)
    y = tr.column(output)
    a = space.max_arity

    pop = [space.random_chromosome(rng) for _ in range(cfg.population)]
    for c in pop:
        c.fitness = fitness(c, rows, y, a)
    best_i = int(np.argmax([c.fitness for c in pop]))
    best = pop[best_i].copy()
    log = [(0, best.fitness, float(np.mean([c.fitness for c in pop])))]
    stale = 0

    for gen in range(1, cfg.generations + 1):
        if best.fitness >= PERFECT_FITNESS:
            break
        if cfg.patience and stale >= cfg.patience:
            break
        fits = np.array([c.fitness for c in pop])
        picks = roulette(fits, cfg.population - 1, rng)
        kids = [pop[i].copy() for i in picks]
        for c in kids:
            mutate(c, space, cfg.mutation_rate, rng)
        for c in kids:
            if rng.random() < cfg.is_transposition_rate:
                is_transpose(c, space, rng)
        for rate, op in ((cfg.one_point_recomb_rate, one_point_recombine),
                         (cfg.two_point_recomb_rate, two_point_recombine),
                         (cfg.gene_recomb_rate, gene_recombine)):
            if len(kids) < 2:
                break
            for i in range(len(kids)):
                if rng.random() < rate:
                    j = int(rng.integers(0, len(kids) - 1))
                    j += j >= i
                    op(kids[i], kids[j], space, rng)
        for c in kids:
            c.fitness = fitness(c, rows, y, a)
        pop = [best.copy()] + kids
        gen_best = max(pop, key=lambda c: c.fitness)
        if gen_best.fitness > best.fitness + 1e-9:
            stale = 0
        else:
            stale += 1
        if gen_best.fitness > best.fitness:
            best = gen_best.copy()
        log.append((gen, best.fitness, float(np.mean([c.fitness for c in pop]))))

    return GepResult(best=best, tree=best.tree(a), inputs=inputs, max_arity=a, log=log)


def gep_predict(result: GepResult, rows: Dataset) -> np.ndarray:
    return predict_chromosome(result.best, _columns(rows, result.inputs), result.max_arity)


def dumps(result: GepResult) -> str:
    lines = ["inputs " + " ".join(result.inputs), f"max_arity {result.max_arity}",
             f"fitness {result.best.fitness!r}", f"expression {result.expression()}"]
    for g, k in zip(result.best.genes, result.best.constants):
        lines.append("gene " + " ".join(g))
        lines.append("constants " + " ".join(repr(float(v)) for v in k))
    return "\n".join(lines) + "\n"


def loads(text: str) -> GepResult:
    inputs, max_arity, fit, genes, consts = (), 2, 0.0, [], []
    for line in text.splitlines():
        tag, _, rest = line.partition(" ")
        if tag == "inputs":
            inputs = tuple(rest.split())
        elif tag == "max_arity":
            max_arity = int(rest)
        elif tag == "fitness":
            fit = float(rest)
        elif tag == "gene":
            genes.append(rest.split())
        elif tag == "constants":
            consts.append(np.array([float(v) for v in rest.split()]))
    best = GepChromosome(genes, consts, fit)
    return GepResult(best=best, tree=best.tree(max_arity), inputs=inputs, max_arity=max_arity)


def save(result: GepResult, path) -> None:
    Path(path).write_text(dumps(result), encoding="utf-8")


def write_log(result: GepResult, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("generation", "best_fitness", "mean_fitness"))
        for g, b, m in result.log:
            w.writerow((g, repr(b), repr(m)))
