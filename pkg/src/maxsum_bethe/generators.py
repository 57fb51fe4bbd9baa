"""Seeded random instance families (grid, complete, chain, random tree).

Random numbers come from numpy's PCG64 bit generator seeded with the instance's
integer seed, drawn in this fixed stream order:

1. topology (``random_tree`` only): parent of vertex i is ``integers(0, i)``
   for i = 1..n-1;
2. unary tables, variable by variable: ``uniform(-1, 1, K) * unary_scale``;
3. pairwise tables in canonical edge order (edges sorted by variable pair):

   - ``random``: ``uniform(-1, 1, K*K) * pairwise_scale``
   - ``attractive``: ``w = uniform(0, 1)``; ``pairwise_scale * w * [x == y]``
   - ``repulsive``: ``w = uniform(0, 1)``; ``-pairwise_scale * w * [x == y]``
   - ``mixed``: ``sign = +1 if uniform(0, 1) < 0.5 else -1``, then ``w`` as above;
     ``sign * pairwise_scale * w * [x == y]``
   - ``circular_distance``: ``w = uniform(0, 1)``;
     ``-pairwise_scale * w * min(|x - y|, K - |x - y|)``
   - ``supermodular_ising`` (K = 2 only): as ``attractive``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from itertools import combinations

import numpy as np

from .model import Model

TOPOLOGIES = ("grid", "complete", "chain", "random_tree")
INTERACTIONS = ("random", "attractive", "repulsive", "mixed", "circular_distance", "supermodular_ising")


@dataclass(frozen=True)
class InstanceSpec:
    topology: str = "grid"
    rows: int = 1
    cols: int = 1
    n: int = 1  # vertex count for complete / chain / random_tree
    labels: int = 2
    interaction: str = "random"
    unary_scale: float = 1.0
    pairwise_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.topology not in TOPOLOGIES:
            raise ValueError(f"unknown topology {self.topology!r}; choose from {TOPOLOGIES}")
        if self.interaction not in INTERACTIONS:
            raise ValueError(f"unknown interaction {self.interaction!r}; choose from {INTERACTIONS}")
        if self.topology == "grid" and (self.rows < 1 or self.cols < 1):
            raise ValueError(f"grid needs rows, cols >= 1, got {self.rows}x{self.cols}")
        if self.topology != "grid" and self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.labels < 2:
            raise ValueError(f"labels must be >= 2, got {self.labels}")
        if self.interaction == "supermodular_ising" and self.labels != 2:
            raise ValueError("supermodular_ising requires labels == 2")
        if self.unary_scale < 0 or self.pairwise_scale < 0:
            raise ValueError("scales must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def num_vars(self) -> int:
        return self.rows * self.cols if self.topology == "grid" else self.n

    def as_dict(self) -> dict:
        return asdict(self)


def grid_edges(rows: int, cols: int) -> list[tuple[int, int]]:
    edges = []
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if c + 1 < cols:
                edges.append((i, i + 1))
            if r + 1 < rows:
                edges.append((i, i + cols))
    return sorted(edges)


def _edges(spec: InstanceSpec, rng: np.random.Generator) -> list[tuple[int, int]]:
    if spec.topology == "grid":
        return grid_edges(spec.rows, spec.cols)
    if spec.topology == "complete":
        return list(combinations(range(spec.n), 2))
    if spec.topology == "chain":
        return [(i, i + 1) for i in range(spec.n - 1)]
    parents = [int(rng.integers(0, i)) for i in range(1, spec.n)]
    return sorted((p, i) for i, p in zip(range(1, spec.n), parents))


def _pair_table(spec: InstanceSpec, rng: np.random.Generator) -> np.ndarray:
    K, s = spec.labels, spec.pairwise_scale
    x, y = np.meshgrid(np.arange(K), np.arange(K), indexing="ij")
    same = (x == y).astype(float)
    kind = spec.interaction
    if kind == "random":
        return rng.uniform(-1.0, 1.0, size=K * K).reshape(K, K) * s
    if kind in ("attractive", "supermodular_ising"):
        return s * rng.uniform(0.0, 1.0) * same
    if kind == "repulsive":
        return -s * rng.uniform(0.0, 1.0) * same
    if kind == "mixed":
        sign = 1.0 if rng.uniform(0.0, 1.0) < 0.5 else -1.0
        return sign * s * rng.uniform(0.0, 1.0) * same
    dist = np.abs(x - y)
    return -s * rng.uniform(0.0, 1.0) * np.minimum(dist, K - dist)


def generate(spec: InstanceSpec) -> Model:
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    edges = _edges(spec, rng)
    K = spec.labels
    unary = [rng.uniform(-1.0, 1.0, size=K) * spec.unary_scale for _ in range(spec.num_vars)]
    factors = [(e, _pair_table(spec, rng)) for e in edges]
    return Model([K] * spec.num_vars, unary, factors)


def is_supermodular(table: np.ndarray) -> bool:
    """``t(min(x,y)) + t(max(x,y)) >= t(x) + t(y)`` for every pair of 2-D cells."""
    t = np.asarray(table)
    n1, n2 = t.shape
    for i in range(n1):
        for k in range(i + 1, n1):
            for j in range(n2):
                for l in range(j + 1, n2):
                    if t[i, j] + t[k, l] < t[i, l] + t[k, j] - 1e-12:
                        return False
    return True
