"""Problem instances: hypergraph, potentials, messages and reparameterizations.

Factor tables are numpy arrays whose axes follow the factor's (strictly
increasing) variable tuple, so a C-order ``ravel`` gives the canonical file
layout with the last listed variable varying fastest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import ModelError
from .semiring import NEG_INF, TemperatureLike, as_temperature, reduce_axis


@dataclass(frozen=True)
class Hypergraph:
    domains: tuple[int, ...]
    edges: tuple[tuple[int, ...], ...]

    @property
    def num_vars(self) -> int:
        return len(self.domains)

    def __post_init__(self):
        for d in self.domains:
            if int(d) < 1:
                raise ModelError(f"domain sizes must be >= 1, got {d}")
        seen = set()
        for a, vars_ in enumerate(self.edges):
            if len(vars_) < 2:
                raise ModelError(f"factor {a} has {len(vars_)} variable(s); singleton factors are not allowed")
            if any(v1 >= v2 for v1, v2 in zip(vars_, vars_[1:])):
                raise ModelError(f"factor {a} variables {vars_} are not strictly increasing")
            if vars_[0] < 0 or vars_[-1] >= len(self.domains):
                raise ModelError(f"factor {a} references a variable outside 0..{len(self.domains) - 1}")
            if vars_ in seen:
                raise ModelError(f"factor {a} duplicates hyperedge {vars_}")
            seen.add(vars_)

    def is_acyclic(self) -> bool:
        """True when the factor graph (variables + hyperedges as nodes) is a forest."""
        parent = list(range(self.num_vars + len(self.edges)))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for a, vars_ in enumerate(self.edges):
            fa = self.num_vars + a
            for v in vars_:
                r1, r2 = find(fa), find(v)
                if r1 == r2:
                    return False
                parent[r1] = r2
        return True


@dataclass(frozen=True, eq=False)
class Factor:
    vars: tuple[int, ...]
    table: np.ndarray


class Layout(NamedTuple):
    """Flat arrays describing a model, consumed by the compiled kernels.

    A *pair* ``p`` is the incidence of factor ``pair_factor[p]`` and variable
    ``fvars[p]``; pairs of factor ``a`` occupy ``fptr[a]:fptr[a+1]``.
    """

    dom: np.ndarray  # (n,)
    uoff: np.ndarray  # (n+1,) offsets into the flat unary array
    fptr: np.ndarray  # (m+1,)
    fvars: np.ndarray  # (P,)
    fstride: np.ndarray  # (P,) row-major stride of the variable inside its factor table
    foff: np.ndarray  # (m+1,) offsets into the flat factor array
    moff: np.ndarray  # (P+1,) offsets into the flat message array
    pair_factor: np.ndarray  # (P,)
    vptr: np.ndarray  # (n+1,)
    vpairs: np.ndarray  # pairs incident to each variable
    theta_u: np.ndarray
    theta_f: np.ndarray
    order: np.ndarray  # factor indices sorted by variable tuple
    koff: np.ndarray  # (P+1,) offsets into kx
    kx: np.ndarray  # state of the pair's variable at each entry of its factor table

    @property
    def num_pairs(self) -> int:
        return len(self.fvars)

    @property
    def max_factor_size(self) -> int:
        return int(np.max(np.diff(self.foff))) if len(self.foff) > 1 else 1

    @property
    def max_domain(self) -> int:
        return int(np.max(self.dom)) if len(self.dom) else 1


def _row_major_strides(shape: tuple[int, ...]) -> list[int]:
    out, acc = [], 1
    for d in reversed(shape):
        out.append(acc)
        acc *= d
    return out[::-1]


def _as_table(values, shape: tuple[int, ...], what: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    size = math.prod(shape)
    if arr.size != size:
        raise ModelError(f"{what} has {arr.size} entries, expected {size}")
    arr = arr.reshape(shape)
    if np.isnan(arr).any() or (arr == np.inf).any():
        raise ModelError(f"{what} contains NaN or +inf")
    if arr.size and (arr == NEG_INF).all():
        raise ModelError(f"{what} is entirely -inf")
    arr.setflags(write=False)
    return arr


class Model:
    """Hypergraph plus potentials ``theta``; immutable once constructed.

    ``factors`` may be :class:`Factor` objects or ``(vars, table)`` pairs, with
    tables given flat (canonical order) or already shaped.
    """

    def __init__(self, domains: Sequence[int], unary: Sequence, factors: Iterable = ()):
        domains = tuple(int(d) for d in domains)
        flist = []
        for f in factors:
            vars_, table = (f.vars, f.table) if isinstance(f, Factor) else f
            flist.append((tuple(int(v) for v in vars_), table))
        self.hypergraph = Hypergraph(domains, tuple(v for v, _ in flist))
        if len(unary) != len(domains):
            raise ModelError(f"{len(unary)} unary tables for {len(domains)} variables")
        self.unary = tuple(_as_table(u, (d,), f"unary table {v}") for v, (u, d) in enumerate(zip(unary, domains)))
        self.factors = tuple(
            Factor(vars_, _as_table(t, tuple(domains[v] for v in vars_), f"factor {a} table"))
            for a, (vars_, t) in enumerate(flist)
        )

    @property
    def domains(self) -> tuple[int, ...]:
        return self.hypergraph.domains

    @property
    def num_vars(self) -> int:
        return len(self.domains)

    @property
    def num_factors(self) -> int:
        return len(self.factors)

    @property
    def factor_tables(self) -> tuple[np.ndarray, ...]:
        return tuple(f.table for f in self.factors)

    @cached_property
    def incident(self) -> tuple[tuple[int, ...], ...]:
        """Factor indices containing each variable."""
        out = [[] for _ in self.domains]
        for a, f in enumerate(self.factors):
            for v in f.vars:
                out[v].append(a)
        return tuple(tuple(x) for x in out)

    @cached_property
    def layout(self) -> Layout:
        n, m = self.num_vars, self.num_factors
        dom = np.array(self.domains, dtype=np.int64)
        uoff = np.zeros(n + 1, dtype=np.int64)
        uoff[1:] = np.cumsum(dom)
        fptr = np.zeros(m + 1, dtype=np.int64)
        fptr[1:] = np.cumsum([len(f.vars) for f in self.factors])
        fvars = np.array([v for f in self.factors for v in f.vars], dtype=np.int64)
        fstride = np.array([s for f in self.factors for s in _row_major_strides(f.table.shape)],
                           dtype=np.int64)
        foff = np.zeros(m + 1, dtype=np.int64)
        foff[1:] = np.cumsum([f.table.size for f in self.factors])
        moff = np.zeros(len(fvars) + 1, dtype=np.int64)
        moff[1:] = np.cumsum(dom[fvars]) if len(fvars) else []
        pair_factor = np.repeat(np.arange(m, dtype=np.int64), np.diff(fptr))
        counts = np.bincount(fvars, minlength=n) if len(fvars) else np.zeros(n, dtype=np.int64)
        vptr = np.zeros(n + 1, dtype=np.int64)
        vptr[1:] = np.cumsum(counts)
        vpairs = np.argsort(fvars, kind="stable").astype(np.int64)
        theta_u = np.concatenate([u for u in self.unary]) if n else np.zeros(0)
        theta_f = np.concatenate([f.table.ravel() for f in self.factors]) if m else np.zeros(0)
        order = np.array(sorted(range(m), key=lambda a: self.factors[a].vars), dtype=np.int64)
        sizes = np.diff(foff)[pair_factor] if len(fvars) else np.zeros(0, dtype=np.int64)
        koff = np.zeros(len(fvars) + 1, dtype=np.int64)
        koff[1:] = np.cumsum(sizes)
        kx = np.concatenate([(np.arange(sz) // st) % dom[v] for sz, st, v in zip(sizes, fstride, fvars)]
                            ).astype(np.int64) if len(fvars) else np.zeros(0, dtype=np.int64)
        for arr in (theta_u, theta_f):
            arr.setflags(write=False)
        return Layout(dom, uoff, fptr, fvars, fstride, foff, moff, pair_factor,
                      vptr, vpairs, theta_u, theta_f, order, koff, kx)

    def pair_index(self, a: int, v: int) -> int:
        f = self.factors[a]
        try:
            return int(self.layout.fptr[a]) + f.vars.index(v)
        except ValueError:
            raise ModelError(f"variable {v} is not in factor {a} {f.vars}") from None

    def joint_states(self) -> int:
        return math.prod(self.domains)

    def with_tables(self, unary: Sequence[np.ndarray], factor_tables: Sequence[np.ndarray]) -> "Model":
        return Model(self.domains, unary, [(f.vars, t) for f, t in zip(self.factors, factor_tables)])

    def equals(self, other: "Model") -> bool:
        """Bit-exact equality of structure and tables."""
        return (
            self.hypergraph == other.hypergraph
            and all(np.array_equal(a, b) for a, b in zip(self.unary, other.unary))
            and all(np.array_equal(f.table, g.table) for f, g in zip(self.factors, other.factors))
        )

    def __repr__(self) -> str:
        return f"Model(vars={self.num_vars}, factors={self.num_factors}, max_domain={max(self.domains, default=0)})"


def check_assignment(m: Model, x: Sequence[int]) -> tuple[int, ...]:
    x = tuple(int(s) for s in x)
    if len(x) != m.num_vars:
        raise ModelError(f"assignment has {len(x)} entries for {m.num_vars} variables")
    for v, (s, d) in enumerate(zip(x, m.domains)):
        if not 0 <= s < d:
            raise ModelError(f"state {s} of variable {v} outside 0..{d - 1}")
    return x


def evaluate(m: Model, x: Sequence[int]) -> float:
    """Energy ``<theta, delta(x)>``: sum of the selected unary and factor entries."""
    x = check_assignment(m, x)
    total = 0.0
    for v, s in enumerate(x):
        total += m.unary[v][s]
    for f in m.factors:
        total += f.table[tuple(x[v] for v in f.vars)]
    return float(total)


def compatibility_violations(m: Model) -> list[tuple[int, int, int]]:
    """Triples ``(a, v, x_v)`` where ``theta_v(x_v) > -inf`` disagrees with
    ``max_{x_{a\\v}} theta_a(x_a) > -inf``."""
    out = []
    for a, f in enumerate(m.factors):
        for i, v in enumerate(f.vars):
            other = tuple(j for j in range(len(f.vars)) if j != i)
            live_f = np.max(f.table, axis=other) > NEG_INF
            live_u = m.unary[v] > NEG_INF
            for s in np.flatnonzero(live_f != live_u):
                out.append((a, v, int(s)))
    return out


class MessageVector:
    """Messages ``alpha_{av}``: one finite table over ``X_v`` per incident pair."""

    def __init__(self, model: Model, data: np.ndarray | None = None):
        self.model = model
        size = int(model.layout.moff[-1])
        if data is None:
            data = np.zeros(size)
        data = np.array(data, dtype=float)
        if data.shape != (size,):
            raise ModelError(f"message vector has shape {data.shape}, expected ({size},)")
        if not np.isfinite(data).all():
            raise ModelError("messages must be finite")
        self.data = data

    @classmethod
    def zeros(cls, model: Model) -> "MessageVector":
        return cls(model)

    @classmethod
    def random(cls, model: Model, rng: np.random.Generator, scale: float = 1.0) -> "MessageVector":
        return cls(model, rng.uniform(-scale, scale, size=int(model.layout.moff[-1])))

    def _slice(self, a: int, v: int) -> slice:
        p = self.model.pair_index(a, v)
        return slice(int(self.model.layout.moff[p]), int(self.model.layout.moff[p + 1]))

    def __getitem__(self, key: tuple[int, int]) -> np.ndarray:
        a, v = key
        return self.data[self._slice(a, v)]

    def __setitem__(self, key: tuple[int, int], values) -> None:
        a, v = key
        values = np.asarray(values, dtype=float)
        if not np.isfinite(values).all():
            raise ModelError("messages must be finite")
        self.data[self._slice(a, v)] = values

    def copy(self) -> "MessageVector":
        return MessageVector(self.model, self.data.copy())

    def __neg__(self) -> "MessageVector":
        return MessageVector(self.model, -self.data)


class TildeTheta:
    """Per-variable log-potentials of the outer loop, (+)-normalized per variable."""

    def __init__(self, model: Model, data: np.ndarray | None = None):
        self.model = model
        size = int(model.layout.uoff[-1])
        data = np.zeros(size) if data is None else np.array(data, dtype=float)
        if data.shape != (size,):
            raise ModelError(f"tilde vector has shape {data.shape}, expected ({size},)")
        if np.isnan(data).any() or (data == np.inf).any():
            raise ModelError("tilde vector contains NaN or +inf")
        self.data = data

    @classmethod
    def zeros(cls, model: Model) -> "TildeTheta":
        return cls(model)

    @classmethod
    def uniform(cls, model: Model, t: TemperatureLike) -> "TildeTheta":
        """Normalized constant over live unary states (all zeros at beta = inf)."""
        t = as_temperature(t)
        tables = []
        for u in model.unary:
            raw = np.where(u > NEG_INF, 0.0, NEG_INF)
            tables.append(raw - reduce_axis(t, raw))
        return cls.from_tables(model, tables)

    @classmethod
    def from_tables(cls, model: Model, tables: Sequence) -> "TildeTheta":
        if len(tables) != model.num_vars:
            raise ModelError(f"{len(tables)} tilde tables for {model.num_vars} variables")
        for v, (t, d) in enumerate(zip(tables, model.domains)):
            if np.size(t) != d:
                raise ModelError(f"tilde table {v} has {np.size(t)} entries, expected {d}")
        return cls(model, np.concatenate([np.asarray(t, dtype=float).ravel() for t in tables]))

    @classmethod
    def random(cls, model: Model, rng: np.random.Generator, t: TemperatureLike) -> "TildeTheta":
        """Uniform[-1, 1] log-potentials, normalized; dead unary states stay -inf."""
        t = as_temperature(t)
        tables = []
        for u in model.unary:
            raw = np.where(u > NEG_INF, rng.uniform(-1.0, 1.0, size=u.shape), NEG_INF)
            tables.append(raw - reduce_axis(t, raw))
        return cls.from_tables(model, tables)

    def __getitem__(self, v: int) -> np.ndarray:
        lo, hi = self.model.layout.uoff[v], self.model.layout.uoff[v + 1]
        return self.data[lo:hi]

    def tables(self) -> list[np.ndarray]:
        return [self[v] for v in range(self.model.num_vars)]

    def normalization_error(self, t: TemperatureLike) -> float:
        return max((abs(reduce_axis(t, tab)) for tab in self.tables()), default=0.0)

    def copy(self) -> "TildeTheta":
        return TildeTheta(self.model, self.data.copy())


def reparam_unary(m: Model, alpha: MessageVector, v: int, x_v: int) -> float:
    """``theta^alpha_v(x_v) = theta_v(x_v) - sum_{a ∋ v} alpha_{av}(x_v)``."""
    total = m.unary[v][x_v]
    for a in m.incident[v]:
        total -= alpha[a, v][x_v]
    return float(total)


def reparam_factor(m: Model, alpha: MessageVector, a: int, x_a: Sequence[int]) -> float:
    """``theta^alpha_a(x_a) = theta_a(x_a) + sum_{v ∈ a} alpha_{av}(x_v)``."""
    f = m.factors[a]
    x_a = tuple(int(s) for s in x_a)
    total = f.table[x_a]
    for v, s in zip(f.vars, x_a):
        total += alpha[a, v][s]
    return float(total)


def _broadcast_unary(f: Factor, i: int, values: np.ndarray) -> np.ndarray:
    shape = [1] * len(f.vars)
    shape[i] = len(values)
    return np.reshape(values, shape)


def materialize_reparam(m: Model, alpha: MessageVector) -> Model:
    """New model whose potentials are ``theta^alpha``."""
    unary = [u.copy() for u in m.unary]
    tables = []
    for a, f in enumerate(m.factors):
        t = f.table.copy()
        for i, v in enumerate(f.vars):
            msg = alpha[a, v]
            t = t + _broadcast_unary(f, i, msg)
            unary[v] = unary[v] - msg
        tables.append(t)
    return m.with_tables(unary, tables)


def hat_theta(m: Model, tilde: TildeTheta | Sequence) -> Model:
    """Unary tables copied, each factor table plus the tilde tables of its variables."""
    if not isinstance(tilde, TildeTheta):
        tilde = TildeTheta.from_tables(m, tilde)
    elif tilde.data.shape != (int(m.layout.uoff[-1]),):
        raise ModelError("tilde tables do not match the model")
    tables = []
    for f in m.factors:
        t = f.table
        for i, v in enumerate(f.vars):
            t = t + _broadcast_unary(f, i, tilde[v])
        tables.append(t)
    return m.with_tables(m.unary, tables)
