"""Coordinate descent on the reparameterization dual of the convex free energy.

At finite beta this minimizes ``U(theta^alpha)``, the sum of per-table
log-sum-exp values; at beta = inf it is max-sum diffusion, minimizing the
LP-relaxation bound ``U_inf``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .errors import ModelError
from .model import Model, MessageVector, compatibility_violations
from .oracle import BeliefVector
from .semiring import ZERO_TEMPERATURE, TemperatureLike, as_temperature, normalize

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-9
DEFAULT_MAX_SWEEPS = 10_000


@dataclass(frozen=True)
class SweepOrder:
    """Factors in lexicographic order of their variable tuples, variables in
    factor order; ``symmetric`` appends the reversed pass to every sweep."""

    symmetric: bool = False

    def pairs(self, m: Model) -> np.ndarray:
        L = m.layout
        out = [p for a in L.order for p in range(L.fptr[a], L.fptr[a + 1])]
        if self.symmetric:
            out = out + out[::-1]
        return np.array(out, dtype=np.int64)


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    final_residual: float
    dual_value: float
    final_max_residual: float = 0.0
    # (sweep, mean residual, dual value) after each sweep
    residual_trace: list[tuple[int, float, float]] = field(default_factory=list)
    max_residual_trace: list[float] = field(default_factory=list)


class Scratch:
    """Work buffers sized for one model."""

    def __init__(self, m: Model):
        L = m.layout
        self.buf = np.empty(max(L.max_factor_size, 1))
        d = max(L.max_domain, 1)
        self.urep = np.empty(d)
        self.red = np.empty(d)
        self.tmp = np.empty(d)
        self.urep_all = np.empty(int(L.uoff[-1]))


def check_compatible(m: Model) -> None:
    bad = compatibility_violations(m)
    if bad:
        a, v, s = bad[0]
        raise ModelError(
            f"{len(bad)} compatibility violation(s); first: factor {a}, variable {v}, state {s} "
            "(theta_v(x_v) > -inf must match max over the rest of theta_a > -inf)"
        )


class DiffusionState:
    """Base model, messages and temperature for :func:`run_to_convergence`."""

    def __init__(self, model: Model, temperature: TemperatureLike = ZERO_TEMPERATURE,
                 messages: MessageVector | None = None, order: SweepOrder | None = None):
        check_compatible(model)
        self.model = model
        self.temperature = as_temperature(temperature)
        self.messages = messages.copy() if messages is not None else MessageVector.zeros(model)
        if self.messages.data.shape != (int(model.layout.moff[-1]),):
            raise ModelError("message vector does not match the model")
        self.order = order or SweepOrder()
        self.sweep_count = 0
        self.last_residual = math.nan
        self._pairs = self.order.pairs(model)
        self._aug = np.zeros(int(model.layout.uoff[-1]))
        self._scratch = Scratch(model)

    @property
    def alpha(self) -> np.ndarray:
        return self.messages.data


# Thin wrappers binding a layout to the kernels; shared with the double loop.

def _dual(m: Model, beta: float, alpha: np.ndarray, aug: np.ndarray, sc: Scratch) -> float:
    return float(K.dual_value(m.layout, beta, alpha, aug, sc.buf, sc.urep))


def _residual(m: Model, beta: float, alpha: np.ndarray, aug: np.ndarray, sc: Scratch) -> tuple[float, float]:
    mean, worst = K.diffusion_residual(m.layout, beta, alpha, aug, sc.buf, sc.urep_all, sc.red, sc.tmp)
    return float(mean), float(worst)


def _update_pair(m: Model, beta: float, p: int, alpha: np.ndarray, aug: np.ndarray, sc: Scratch) -> float:
    return float(K.sweep(m.layout, np.array([p], dtype=np.int64), beta, alpha, aug, sc.buf, sc.urep, sc.red, sc.tmp))


def _sweep(m: Model, beta: float, pairs: np.ndarray, alpha: np.ndarray, aug: np.ndarray, sc: Scratch) -> float:
    return float(K.sweep(m.layout, pairs, beta, alpha, aug, sc.buf, sc.urep, sc.red, sc.tmp))


def _run(m: Model, beta: float, pairs: np.ndarray, alpha: np.ndarray, aug: np.ndarray, sc: Scratch,
         tol: float, max_sweeps: int, record_dual: bool = True) -> SolveReport:
    if not tol > 0:
        raise ValueError(f"tol must be > 0, got {tol}")
    if max_sweeps < 0:
        raise ValueError(f"max_sweeps must be >= 0, got {max_sweeps}")
    res = np.empty(max_sweeps)
    worst = np.empty(max_sweeps)
    dual = np.empty(max_sweeps)
    n = int(K.run_diffusion(m.layout, pairs, beta, tol, max_sweeps, alpha, aug, sc.buf, sc.urep, sc.red,
                            sc.tmp, sc.urep_all, res, worst, dual, record_dual))
    if not record_dual:
        dual[:n] = math.nan
    if n == 0:
        final, final_max = _residual(m, beta, alpha, aug, sc)
    else:
        final, final_max = float(res[n - 1]), float(worst[n - 1])
    value = float(dual[n - 1]) if n and record_dual else _dual(m, beta, alpha, aug, sc)
    return SolveReport(
        converged=final <= tol,
        iterations=n,
        final_residual=final,
        dual_value=value,
        final_max_residual=final_max,
        residual_trace=[(i + 1, float(res[i]), float(dual[i])) for i in range(n)],
        max_residual_trace=[float(w) for w in worst[:n]],
    )


def _flat_tables(m: Model, alpha: np.ndarray, aug: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Flat ``theta^alpha`` unaries and ``theta^alpha_a + aug`` factor tables."""
    L = m.layout
    u = np.empty(int(L.uoff[-1]))
    K.all_unary_rep(L, alpha, u)
    f = np.empty(int(L.foff[-1]))
    K.factor_tables(L, alpha, aug, f)
    return u, f


def _split(m: Model, u: np.ndarray, f: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    L = m.layout
    unary = [u[L.uoff[v]:L.uoff[v + 1]].copy() for v in range(m.num_vars)]
    factors = [f[L.foff[a]:L.foff[a + 1]].reshape(fac.table.shape).copy() for a, fac in enumerate(m.factors)]
    return unary, factors


def _normalized_beliefs(m: Model, t, u: np.ndarray, f: np.ndarray) -> BeliefVector:
    unary, factors = _split(m, u, f)
    return BeliefVector([normalize(t, x) for x in unary], [normalize(t, x) for x in factors], "log", t)


def dual_objective(s: DiffusionState) -> float:
    """``U(theta^alpha)`` (``U_inf`` at beta = inf)."""
    return _dual(s.model, s.temperature.beta, s.alpha, s._aug, s._scratch)


def fixed_point_residual(s: DiffusionState) -> float:
    """Mean violation of ``(+)_{x_a\\v} theta^alpha_a(x_a) = theta^alpha_v(x_v)`` over live states."""
    return _residual(s.model, s.temperature.beta, s.alpha, s._aug, s._scratch)[0]


def update_pair(s: DiffusionState, a: int, v: int) -> float:
    """Enforce the fixed-point equality on the pair ``(a, v)``; returns the largest message change."""
    p = s.model.pair_index(a, v)
    return _update_pair(s.model, s.temperature.beta, p, s.alpha, s._aug, s._scratch)


def sweep(s: DiffusionState, order: SweepOrder | None = None) -> float:
    """One pass of pair updates; returns the fixed-point residual afterwards."""
    pairs = s._pairs if order is None else order.pairs(s.model)
    _sweep(s.model, s.temperature.beta, pairs, s.alpha, s._aug, s._scratch)
    s.sweep_count += 1
    s.last_residual = fixed_point_residual(s)
    return s.last_residual


def pseudo_marginals(s: DiffusionState) -> BeliefVector:
    """Log-scale beliefs: each table of ``theta^alpha`` shifted to (+)-reduce to 0."""
    u, f = _flat_tables(s.model, s.alpha, s._aug)
    return _normalized_beliefs(s.model, s.temperature, u, f)


def reparameterized(s: DiffusionState) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Unary and factor tables of ``theta^alpha``."""
    return _split(s.model, *_flat_tables(s.model, s.alpha, s._aug))


def run_to_convergence(s: DiffusionState, tol: float = DEFAULT_TOL,
                       max_sweeps: int = DEFAULT_MAX_SWEEPS) -> SolveReport:
    report = _run(s.model, s.temperature.beta, s._pairs, s.alpha, s._aug, s._scratch, tol, max_sweeps)
    s.sweep_count += report.iterations
    s.last_residual = report.final_residual
    if not report.converged:
        log.info("diffusion stopped after %d sweeps at residual %.3e", report.iterations, report.final_residual)
    return report
