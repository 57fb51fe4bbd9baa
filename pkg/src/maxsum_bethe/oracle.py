"""Exact quantities by brute-force enumeration of all joint states.

The full energy tensor (one axis per variable) is built by broadcasting, so
the cap on joint states also bounds memory: 2**22 states is 32 MiB.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import CapacityError, DegenerateModelError
from .model import Model
from .semiring import NEG_INF, Temperature, TemperatureLike, as_temperature, reduce_axis

DEFAULT_CAP = 2**22


@dataclass
class BeliefVector:
    """Per-table (log-)marginal approximations.

    ``scale`` is ``"probability"`` (tables sum to 1) or ``"log"`` (tables are
    (+)-normalized under ``temperature``; max-normalized at beta = inf).
    """

    unary: list[np.ndarray]
    factors: list[np.ndarray]
    scale: str
    temperature: Temperature

    @property
    def factor_tables(self) -> list[np.ndarray]:
        return self.factors

    def tables(self) -> list[np.ndarray]:
        return list(self.unary) + list(self.factors)

    def to_probability(self) -> "BeliefVector":
        if self.scale == "probability":
            return self
        if self.temperature.is_infinite:
            raise ValueError("max-marginals have no probability scale")
        b = self.temperature.beta
        return BeliefVector([np.exp(b * u) for u in self.unary], [np.exp(b * f) for f in self.factors],
                            "probability", self.temperature)

    def to_log(self) -> "BeliefVector":
        if self.scale == "log":
            return self
        b = self.temperature.beta
        with np.errstate(divide="ignore"):
            return BeliefVector([np.log(u) / b for u in self.unary], [np.log(f) / b for f in self.factors],
                                "log", self.temperature)

    def normalization_error(self) -> float:
        """Largest deviation of any table from its normalization constraint."""
        if self.scale == "probability":
            return max((abs(float(np.sum(t)) - 1.0) for t in self.tables()), default=0.0)
        return max((abs(reduce_axis(self.temperature, t)) for t in self.tables()), default=0.0)


def _check_cap(m: Model, cap: int) -> None:
    n = m.joint_states()
    if n > cap:
        raise CapacityError(f"{n} joint states exceed the enumeration cap of {cap}")


def energy_tensor(m: Model, cap: int = DEFAULT_CAP) -> np.ndarray:
    """Energy of every joint state, as an array with one axis per variable."""
    _check_cap(m, cap)
    n = m.num_vars
    energy = np.zeros(m.domains)
    for v, u in enumerate(m.unary):
        shape = [1] * n
        shape[v] = len(u)
        energy += u.reshape(shape)
    for f in m.factors:
        shape = [1] * n
        for v, d in zip(f.vars, f.table.shape):
            shape[v] = d
        energy += f.table.reshape(shape)
    return energy


def log_partition(m: Model, t: TemperatureLike, cap: int = DEFAULT_CAP) -> float:
    """``(1/beta) log sum_x exp(beta <theta, delta(x)>)``; the max energy at beta = inf."""
    return float(reduce_axis(t, energy_tensor(m, cap)))


def _reduce_onto(t: Temperature, energy: np.ndarray, keep: Sequence[int]) -> np.ndarray:
    other = tuple(i for i in range(energy.ndim) if i not in keep)
    if not other:
        return energy.copy()
    return reduce_axis(t, energy, axis=other)


def exact_marginals(m: Model, t: TemperatureLike, cap: int = DEFAULT_CAP) -> BeliefVector:
    """Probability-scale marginals at finite beta; log-scale max-marginals at beta = inf."""
    t = as_temperature(t)
    energy = energy_tensor(m, cap)
    phi = float(reduce_axis(t, energy))
    if phi == NEG_INF:
        raise DegenerateModelError("every joint state has energy -inf")
    if t.is_infinite:
        unary = [_reduce_onto(t, energy, (v,)) - phi for v in range(m.num_vars)]
        factors = [_reduce_onto(t, energy, f.vars) - phi for f in m.factors]
        return BeliefVector(unary, factors, "log", t)
    p = np.exp(t.beta * (energy - phi))
    p /= p.sum()
    unary = [p.sum(axis=tuple(i for i in range(m.num_vars) if i != v)) for v in range(m.num_vars)]
    factors = [p.sum(axis=tuple(i for i in range(m.num_vars) if i not in f.vars)) if len(f.vars) < m.num_vars
               else p.copy() for f in m.factors]
    return BeliefVector(unary, factors, "probability", t)


def ground_states(m: Model, cap: int = DEFAULT_CAP) -> set[tuple[int, ...]]:
    """All assignments attaining the maximum energy (exact float equality)."""
    energy = energy_tensor(m, cap)
    best = energy.max()
    if best == NEG_INF:
        raise DegenerateModelError("every joint state has energy -inf")
    return {tuple(int(s) for s in idx) for idx in np.argwhere(energy == best)}
