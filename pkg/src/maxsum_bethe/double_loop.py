"""Double-loop minorize-maximize algorithm converging to a BP fixed point.

Each outer iteration runs diffusion on the implicit ``theta_hat^alpha``
(factor tables augmented by the current tilde-theta of their variables),
then resets tilde-theta to the normalized reparameterized unaries.  The
messages ``alpha`` are kept across outer iterations.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .diffusion import (
    DEFAULT_MAX_SWEEPS,
    Scratch,
    SolveReport,
    SweepOrder,
    _dual,
    _flat_tables,
    _normalized_beliefs,
    _run,
    _split,
    check_compatible,
)
from .csp_decode import Tables
from .errors import ModelError
from .model import MessageVector, Model, TildeTheta, hat_theta
from .oracle import BeliefVector
from .semiring import NEG_INF, ZERO_TEMPERATURE, TemperatureLike, as_temperature, reduce_axis

log = logging.getLogger(__name__)

DEFAULT_OUTER_TOL = 1e-6
DEFAULT_MAX_OUTER = 500
MIN_INNER_TOL = 1e-9
# The first inner loop starts far from its fixed point; stopping it early
# leaves near-ties in theta_hat unresolved for many later iterations.
FIRST_INNER_TOL = 1e-12
MASK_EPS = 1e-8


class DoubleLoopState:
    def __init__(self, model: Model, temperature: TemperatureLike = ZERO_TEMPERATURE,
                 tilde: TildeTheta | None = None, messages: MessageVector | None = None,
                 order: SweepOrder | None = None):
        self.model = model
        self.temperature = as_temperature(temperature)
        self.tilde = tilde.copy() if tilde is not None else TildeTheta.uniform(model, self.temperature)
        err = self.tilde.normalization_error(self.temperature)
        if err > 1e-9:
            raise ModelError(f"initial tilde tables are not normalized (error {err:.3e})")
        check_compatible(hat_theta(model, self.tilde))
        self.messages = messages.copy() if messages is not None else MessageVector.zeros(model)
        if self.messages.data.shape != (int(model.layout.moff[-1]),):
            raise ModelError("message vector does not match the model")
        self.order = order or SweepOrder()
        self.outer_count = 0
        self._pairs = self.order.pairs(model)
        self._scratch = Scratch(model)

    @property
    def alpha(self) -> np.ndarray:
        return self.messages.data

    @property
    def beta(self) -> float:
        return self.temperature.beta


@dataclass
class OuterRecord:
    outer_iter: int
    bp_residual: float
    u_hat: float  # U(theta_hat^alpha) at the end of the inner loop
    u_hat_after_update: float  # same, after tilde-theta was reset
    mask_digest: str  # digest of the active mask of theta_hat^alpha at the end of the inner loop
    inner_sweeps: int
    inner_converged: bool
    inner_residual: float


@dataclass
class OuterTrace:
    initial_residual: float
    records: list[OuterRecord] = field(default_factory=list)
    converged: bool = False

    @property
    def final_residual(self) -> float:
        return self.records[-1].bp_residual if self.records else self.initial_residual

    def mask_changes(self) -> list[int]:
        out = []
        for i, r in enumerate(self.records):
            out.append(0 if i == 0 else int(r.mask_digest != self.records[i - 1].mask_digest))
        return out

    def csv_rows(self) -> list[tuple]:
        rows = []
        for r, changed in zip(self.records, self.mask_changes()):
            lr = math.log10(r.bp_residual) if r.bp_residual > 0 else -math.inf
            rows.append((r.outer_iter, lr, r.u_hat, changed, r.inner_sweeps))
        return rows


def _unary_reps(s: DoubleLoopState) -> np.ndarray:
    u = np.empty(int(s.model.layout.uoff[-1]))
    K.all_unary_rep(s.model.layout, s.alpha, u)
    return u


def mask_digest(values_u: np.ndarray, values_f: np.ndarray, m: Model, eps: float = MASK_EPS) -> str:
    """SHA-1 of the packed active mask (unary tables, then factor tables)."""
    L = m.layout
    mu = np.empty(len(values_u), dtype=np.bool_)
    mf = np.empty(len(values_f), dtype=np.bool_)
    K.active_flat(values_u, L.uoff, eps, mu)
    K.active_flat(values_f, L.foff, eps, mf)
    return hashlib.sha1(np.packbits(np.concatenate([mu, mf])).tobytes()).hexdigest()


def hat_tables(s: DoubleLoopState) -> tuple[np.ndarray, np.ndarray]:
    """Flat ``theta_hat^alpha``: unaries ``theta^alpha_v`` and factors ``theta^alpha_a + sum tilde``."""
    return _flat_tables(s.model, s.alpha, s.tilde.data)


def hat_potentials(s: DoubleLoopState) -> Tables:
    """``theta_hat^alpha`` as shaped tables (for masking and decoding)."""
    return Tables(*_split(s.model, *hat_tables(s)))


def u_hat(s: DoubleLoopState) -> float:
    """``U(theta_hat^alpha)`` under the current tilde-theta."""
    return _dual(s.model, s.beta, s.alpha, s.tilde.data, s._scratch)


def inner_solve(s: DoubleLoopState, tol: float = MIN_INNER_TOL, max_sweeps: int = DEFAULT_MAX_SWEEPS,
                record_dual: bool = True) -> SolveReport:
    """Diffusion on ``theta_hat`` with messages updated in place.

    Without ``record_dual`` the per-sweep dual values in the trace are NaN.
    """
    return _run(s.model, s.beta, s._pairs, s.alpha, s.tilde.data, s._scratch, tol, max_sweeps, record_dual)


def bp_residual(s: DoubleLoopState) -> float:
    """Mean over pairs of how far ``(+)_{x_a\\v}[theta^alpha_a + sum_u theta^alpha_u] - theta^alpha_v``
    is from constant in ``x_v``."""
    sc = s._scratch
    return float(K.bp_residual(s.model.layout, s.beta, s.alpha, sc.urep_all, sc.buf, sc.red, sc.tmp))


def update_tilde(s: DoubleLoopState) -> None:
    """``tilde_v <- theta^alpha_v - (+)_{x_v} theta^alpha_v(x_v)`` for every variable."""
    L = s.model.layout
    u = _unary_reps(s)
    for v in range(s.model.num_vars):
        lo, hi = L.uoff[v], L.uoff[v + 1]
        s.tilde.data[lo:hi] = u[lo:hi] - reduce_axis(s.temperature, u[lo:hi])


def outer_step(s: DoubleLoopState, inner_tol: float = MIN_INNER_TOL,
               max_inner: int = DEFAULT_MAX_SWEEPS) -> OuterRecord:
    """Inner loop to ``inner_tol``, then the tilde-theta update."""
    report = inner_solve(s, inner_tol, max_inner, record_dual=False)
    hu, hf = hat_tables(s)
    digest = mask_digest(hu, hf, s.model)
    value = u_hat(s)
    update_tilde(s)
    s.outer_count += 1
    return OuterRecord(
        outer_iter=s.outer_count,
        bp_residual=bp_residual(s),
        u_hat=value,
        u_hat_after_update=u_hat(s),
        mask_digest=digest,
        inner_sweeps=report.iterations,
        inner_converged=report.converged,
        inner_residual=report.final_residual,
    )


def scheduled_inner_tol(previous_residual: float, outer_iter: int = 1) -> float:
    """Inner tolerance for outer iteration ``outer_iter`` (1-based)."""
    if outer_iter <= 1:
        return FIRST_INNER_TOL
    return max(MIN_INNER_TOL, previous_residual * 1e-3)


def run(s: DoubleLoopState, outer_tol: float = DEFAULT_OUTER_TOL, max_outer: int = DEFAULT_MAX_OUTER,
        inner_tol: float | None = None, max_inner: int = DEFAULT_MAX_SWEEPS, callback=None) -> OuterTrace:
    """Outer iterations until the BP residual is <= ``outer_tol``.

    ``inner_tol=None`` runs the first inner loop to ``FIRST_INNER_TOL`` and then
    tightens the inner tolerance with the last BP residual.
    """
    if not outer_tol > 0 or (inner_tol is not None and not inner_tol > 0):
        raise ValueError("tolerances must be > 0")
    trace = OuterTrace(initial_residual=bp_residual(s))
    previous = trace.initial_residual
    for _ in range(max_outer):
        tol = scheduled_inner_tol(previous, s.outer_count + 1) if inner_tol is None else inner_tol
        rec = outer_step(s, tol, max_inner)
        trace.records.append(rec)
        if callback is not None:
            callback(rec)
        previous = rec.bp_residual
        if rec.bp_residual <= outer_tol:
            trace.converged = True
            break
    else:
        log.info("double loop hit %d outer iterations at residual %.3e", max_outer, previous)
    return trace


@dataclass
class KeyObservation:
    """Whether ``U(theta_hat)`` and the active mask stayed fixed from outer iteration 1 on."""

    holds: bool
    max_u_change: float
    mask_changes: int
    first_violation: int | None  # outer iteration at which the first change was seen


def key_observation(trace: OuterTrace, u_tol: float = 1e-6) -> KeyObservation:
    recs = trace.records
    worst, changes, first = 0.0, 0, None
    for prev, cur in zip(recs, recs[1:]):
        du = abs(cur.u_hat - prev.u_hat) if cur.u_hat != prev.u_hat else 0.0
        moved = cur.mask_digest != prev.mask_digest
        worst = max(worst, du)
        changes += moved
        if first is None and (moved or not du <= u_tol):
            first = cur.outer_iter
    return KeyObservation(first is None, worst, changes, first)


def bp_marginals(s: DoubleLoopState) -> BeliefVector:
    """Log-scale beliefs: ``theta^alpha_v`` and ``theta^alpha_a + sum_{u in a} theta^alpha_u``, normalized."""
    u = _unary_reps(s)
    _, f = _flat_tables(s.model, s.alpha, u)
    return _normalized_beliefs(s.model, s.temperature, u, f)


def hat_model(s: DoubleLoopState) -> Model:
    """``theta_hat`` under the current tilde-theta (base potentials, messages not applied)."""
    return hat_theta(s.model, s.tilde)


def tilde_mismatch(s: DoubleLoopState) -> float:
    """Largest ``|tilde_v - (theta^alpha_v - (+) theta^alpha_v)|`` over live states."""
    L = s.model.layout
    u = _unary_reps(s)
    worst = 0.0
    for v in range(s.model.num_vars):
        lo, hi = L.uoff[v], L.uoff[v + 1]
        target = u[lo:hi] - reduce_axis(s.temperature, u[lo:hi])
        live = L.theta_u[lo:hi] > NEG_INF
        if live.any():
            worst = max(worst, float(np.max(np.abs(s.tilde.data[lo:hi][live] - target[live]))))
    return worst
