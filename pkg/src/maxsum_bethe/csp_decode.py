"""Rounding tables to their argmax sets and searching the resulting CSP."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence

import numpy as np

from .errors import DegenerateModelError, ModelError
from .model import Hypergraph, Model

DEFAULT_EPS = 1e-8
DEFAULT_LIMIT = 10**6
DEFAULT_MAX_NODES = 10**7


class Potentials(Protocol):
    unary: Sequence[np.ndarray]

    @property
    def factor_tables(self) -> Sequence[np.ndarray]: ...


@dataclass(frozen=True)
class Tables:
    """Plain potentials: unary tables and shaped factor tables."""

    unary: Sequence[np.ndarray]
    factor_tables: Sequence[np.ndarray]


@dataclass(frozen=True)
class ActiveMask:
    unary: tuple[np.ndarray, ...]
    factors: tuple[np.ndarray, ...]

    def tables(self) -> list[np.ndarray]:
        return list(self.unary) + list(self.factors)

    def digest_bytes(self) -> bytes:
        return np.packbits(np.concatenate([t.ravel() for t in self.tables()] or [np.zeros(0, bool)])).tobytes()

    def __eq__(self, other) -> bool:
        if not isinstance(other, ActiveMask):
            return NotImplemented
        a, b = self.tables(), other.tables()
        return len(a) == len(b) and all(x.shape == y.shape and np.array_equal(x, y) for x, y in zip(a, b))

    __hash__ = None


def _active(table: np.ndarray, eps: float, what: str) -> np.ndarray:
    t = np.asarray(table, dtype=float)
    top = t.max()
    if top == -np.inf:
        raise DegenerateModelError(f"{what} is entirely -inf")
    out = (t >= top - eps) & (t > -np.inf)
    out.setflags(write=False)
    return out


def active_mask(p: Potentials, eps: float = DEFAULT_EPS) -> ActiveMask:
    """Entry is active iff it is within ``eps`` of its table's maximum."""
    if not eps >= 0:
        raise ValueError(f"eps must be >= 0, got {eps}")
    return ActiveMask(
        tuple(_active(u, eps, f"unary table {v}") for v, u in enumerate(p.unary)),
        tuple(_active(f, eps, f"factor table {a}") for a, f in enumerate(p.factor_tables)),
    )


class CSPSolutions(frozenset):
    """Solution set; ``truncated`` is set when the solution or node limit stopped the search."""

    truncated: bool

    def __new__(cls, items: Iterable[tuple[int, ...]] = (), truncated: bool = False):
        obj = super().__new__(cls, items)
        obj.truncated = truncated
        return obj

    def __repr__(self) -> str:
        return f"CSPSolutions(n={len(self)}, truncated={self.truncated})"


def _check_shapes(h: Hypergraph, c: ActiveMask) -> None:
    if len(c.unary) != h.num_vars or len(c.factors) != len(h.edges):
        raise ModelError("mask does not match the hypergraph")
    for v, (u, d) in enumerate(zip(c.unary, h.domains)):
        if u.shape != (d,):
            raise ModelError(f"unary mask {v} has shape {u.shape}, expected ({d},)")
    for a, (f, vars_) in enumerate(zip(c.factors, h.edges)):
        want = tuple(h.domains[v] for v in vars_)
        if f.shape != want:
            raise ModelError(f"factor mask {a} has shape {f.shape}, expected {want}")


def solve_csp(h: Hypergraph, c: ActiveMask, limit: int = DEFAULT_LIMIT,
              max_nodes: int = DEFAULT_MAX_NODES) -> CSPSolutions:
    """All assignments allowed by every mask table, by backtracking in variable order.

    Candidate states come from the unary masks; a factor is checked as soon
    as its last variable is assigned.
    """
    _check_shapes(h, c)
    n = h.num_vars
    if n == 0:
        return CSPSolutions([()])
    closing: list[list[tuple[tuple[int, ...], np.ndarray]]] = [[] for _ in range(n)]
    for vars_, f in zip(h.edges, c.factors):
        closing[vars_[-1]].append((vars_, f))
    candidates = [np.flatnonzero(u).tolist() for u in c.unary]

    found: list[tuple[int, ...]] = []
    x = [0] * n
    pos = [0] * n  # next candidate index per depth
    depth, nodes = 0, 0
    while depth >= 0:
        if pos[depth] >= len(candidates[depth]):
            pos[depth] = 0
            depth -= 1
            continue
        x[depth] = candidates[depth][pos[depth]]
        pos[depth] += 1
        nodes += 1
        if nodes > max_nodes:
            return CSPSolutions(found, truncated=True)
        if not all(f[tuple(x[v] for v in vars_)] for vars_, f in closing[depth]):
            continue
        if depth == n - 1:
            found.append(tuple(x))
            if len(found) >= limit:
                return CSPSolutions(found, truncated=True)
        else:
            depth += 1
    return CSPSolutions(found)


def decode_ground_states(m: Model, p: Potentials | None = None, eps: float = DEFAULT_EPS,
                         limit: int = DEFAULT_LIMIT) -> CSPSolutions:
    """``solve_csp`` on the active mask of ``p`` (the model's own potentials by default)."""
    return solve_csp(m.hypergraph, active_mask(m if p is None else p, eps), limit)
