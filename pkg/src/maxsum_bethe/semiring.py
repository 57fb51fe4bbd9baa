"""Tempered log-sum-exp ``x (+)_beta y`` and its max-plus limit.

The infinite inverse temperature is carried as ``math.inf`` inside a
:class:`Temperature`, and every reduction branches on it explicitly instead of
approximating the limit with a large finite beta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Union

import numpy as np

NEG_INF = -math.inf


@dataclass(frozen=True)
class Temperature:
    """Inverse temperature ``beta`` in ``(0, inf]``."""

    beta: float

    def __post_init__(self):
        beta = float(self.beta)
        if math.isnan(beta) or beta <= 0.0:
            raise ValueError(f"inverse temperature must be > 0, got {self.beta!r}")
        object.__setattr__(self, "beta", beta)

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.beta)

    @classmethod
    def parse(cls, text: str) -> "Temperature":
        """Parse ``"inf"`` or a positive decimal number."""
        t = str(text).strip().lower()
        if t in ("inf", "infinity", "+inf"):
            return cls(math.inf)
        try:
            value = float(t)
        except ValueError:
            raise ValueError(f"cannot parse inverse temperature {text!r}") from None
        return cls(value)

    def __str__(self) -> str:
        return "inf" if self.is_infinite else repr(self.beta)


ZERO_TEMPERATURE = Temperature(math.inf)

TemperatureLike = Union[Temperature, float, int, str]


def as_temperature(t: TemperatureLike) -> Temperature:
    if isinstance(t, Temperature):
        return t
    if isinstance(t, str):
        return Temperature.parse(t)
    return Temperature(t)


def combine(t: TemperatureLike, x: float, y: float) -> float:
    """``(1/beta) log(exp(beta x) + exp(beta y))``, or ``max(x, y)`` at beta = inf."""
    t = as_temperature(t)
    hi, lo = (x, y) if x >= y else (y, x)
    if t.is_infinite or hi == NEG_INF:
        return float(hi)
    d = math.log1p(math.exp(t.beta * (lo - hi))) / t.beta
    r = hi + d
    # round toward hi so that 0 <= r - hi <= d also holds in floating point
    return float(math.nextafter(r, hi) if r - hi > d else r)


def combine_reduce(t: TemperatureLike, values: Iterable[float]) -> float:
    """Fold :func:`combine` over ``values`` in one max-shifted pass."""
    arr = np.asarray(list(values) if not isinstance(values, np.ndarray) else values,
                     dtype=float).ravel()
    if arr.size == 0:
        raise ValueError("combine_reduce needs at least one value")
    return float(reduce_axis(t, arr, axis=None))


def reduce_axis(t: TemperatureLike, arr: np.ndarray, axis=None, keepdims: bool = False):
    """Array version of :func:`combine_reduce` along ``axis`` (a tuple is allowed).

    Slices that are entirely -inf reduce to -inf.
    """
    t = as_temperature(t)
    arr = np.asarray(arr, dtype=float)
    m = np.max(arr, axis=axis, keepdims=True)
    if t.is_infinite:
        out = m
    else:
        finite = np.isfinite(m)
        shift = np.where(finite, m, 0.0)
        with np.errstate(under="ignore"):
            s = np.sum(np.exp(t.beta * (arr - shift)), axis=axis, keepdims=True)
        with np.errstate(divide="ignore"):
            out = np.where(finite, shift + np.log(s) / t.beta, NEG_INF)
    if keepdims:
        return out
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def normalize(t: TemperatureLike, table: np.ndarray) -> np.ndarray:
    """Shift ``table`` so that its (+)-reduction is 0 (its max at beta = inf)."""
    table = np.asarray(table, dtype=float)
    return table - reduce_axis(t, table)
