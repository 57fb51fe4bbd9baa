"""Residual-trace experiments of the zero-temperature double loop.

A cell is one generated instance run from tilde-theta = 0.  Each cell writes a
trace CSV; cells whose run violates the fixed-mask/fixed-value observation
(or fails to converge) also get a counterexample directory holding the model
file and the full per-iteration record, enough to replay the run.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import double_loop as dl
from .generators import InstanceSpec, generate
from .model import Model
from .serialization import dumps_model, json_text, write_atomic

log = logging.getLogger(__name__)

TRACE_HEADER = ("outer_iter", "log10_bp_residual", "u_hat", "mask_changed", "inner_sweeps")

# (interaction, labels, topology) one per benchmark cell
BENCHMARK_CELLS = (
    ("random", 4, "grid"),
    ("attractive", 4, "grid"),
    ("repulsive", 4, "grid"),
    ("repulsive", 2, "grid"),
    ("mixed", 4, "grid"),
    ("circular_distance", 4, "grid"),
    ("random", 4, "complete"),
    ("attractive", 4, "complete"),
    ("repulsive", 4, "complete"),
)


@dataclass(frozen=True)
class RunSettings:
    outer_tol: float = dl.DEFAULT_OUTER_TOL
    max_outer: int = dl.DEFAULT_MAX_OUTER
    inner_tol: float | None = None
    max_inner: int = dl.DEFAULT_MAX_SWEEPS
    u_tol: float = 1e-6


@dataclass
class CellResult:
    name: str
    spec: dict
    status: str = "ok"  # or "error"
    error: str | None = None
    converged: bool = False
    outer_iterations: int = 0
    initial_residual: float = math.nan
    final_residual: float = math.nan
    decades: float = math.nan
    key_observation: dict = field(default_factory=dict)
    trace_csv: str | None = None
    counterexample: str | None = None
    seconds: float = 0.0


def cell_name(interaction: str, labels: int, topology: str) -> str:
    return f"{topology}_{interaction}_{labels}labels"


def trace_csv(trace: dl.OuterTrace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    for it, lr, u, changed, sweeps in trace.csv_rows():
        w.writerow((it, repr(lr), repr(u), changed, sweeps))
    return buf.getvalue()


def decades(trace: dl.OuterTrace) -> float:
    a, b = trace.initial_residual, trace.final_residual
    if a <= 0:
        return 0.0
    if b <= 0:
        return math.inf
    return math.log10(a) - math.log10(b)


def run_instance(m: Model, settings: RunSettings) -> tuple[dl.OuterTrace, dl.KeyObservation]:
    s = dl.DoubleLoopState(m)
    trace = dl.run(s, settings.outer_tol, settings.max_outer, settings.inner_tol, settings.max_inner)
    return trace, dl.key_observation(trace, settings.u_tol)


def dump_counterexample(directory: Path, m: Model, spec: dict | None, settings: RunSettings,
                        trace: dl.OuterTrace, verdict: dl.KeyObservation, reason: str) -> Path:
    """Model file plus everything needed to replay and inspect the run."""
    directory.mkdir(parents=True, exist_ok=True)
    write_atomic(directory / "model.json", dumps_model(m))
    details = {
        "reason": reason,
        "instance_spec": spec,
        "settings": asdict(settings),
        "replay": "double_loop.run(DoubleLoopState(model), outer_tol, max_outer, inner_tol, max_inner)",
        "key_observation": asdict(verdict),
        "converged": trace.converged,
        "initial_residual": trace.initial_residual,
        "records": [asdict(r) for r in trace.records],
    }
    write_atomic(directory / "details.json", json_text(details))
    return directory


def run_cell(spec: InstanceSpec, out_dir: Path, settings: RunSettings, name: str | None = None) -> CellResult:
    name = name or f"{spec.topology}_{spec.interaction}_{spec.labels}labels_seed{spec.seed}"
    res = CellResult(name=name, spec=spec.as_dict())
    t0 = time.perf_counter()
    try:
        m = generate(spec)
        trace, verdict = run_instance(m, settings)
    except Exception as exc:  # recorded in the manifest, never fatal
        log.exception("cell %s failed", name)
        res.status, res.error = "error", f"{type(exc).__name__}: {exc}"
        res.seconds = time.perf_counter() - t0
        return res
    path = out_dir / f"{name}.csv"
    write_atomic(path, trace_csv(trace))
    res.trace_csv = str(path)
    res.converged = trace.converged
    res.outer_iterations = len(trace.records)
    res.initial_residual = trace.initial_residual
    res.final_residual = trace.final_residual
    res.decades = decades(trace)
    res.key_observation = asdict(verdict)
    reasons = []
    if not verdict.holds:
        reasons.append("key observation violated")
    if not trace.converged:
        reasons.append("outer iteration cap reached")
    if reasons:
        ce = dump_counterexample(out_dir / "counterexamples" / name, m, spec.as_dict(), settings, trace, verdict,
                                 "; ".join(reasons))
        res.counterexample = str(ce)
    res.seconds = time.perf_counter() - t0
    return res


def benchmark_specs(rows: int, cols: int, complete_n: int, labels: int, seed: int) -> list[tuple[str, InstanceSpec]]:
    out = []
    for interaction, k, topology in BENCHMARK_CELLS:
        k = labels if k == 4 else k
        spec = InstanceSpec(topology=topology, rows=rows, cols=cols, n=complete_n, labels=k,
                            interaction=interaction, seed=seed)
        out.append((cell_name(interaction, k, topology), spec))
    return out


def run_experiment(out_dir: Path, rows: int = 10, cols: int = 10, complete_n: int = 15, labels: int = 4,
                   seed: int = 0, settings: RunSettings = RunSettings(), workers: int = 1) -> dict:
    """Run the nine benchmark cells; writes one CSV per cell and ``manifest.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = benchmark_specs(rows, cols, complete_n, labels, seed)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(lambda c: run_cell(c[1], out_dir, settings, c[0]), cells))
    manifest = {
        "settings": asdict(settings),
        "sizes": {"rows": rows, "cols": cols, "complete_n": complete_n, "labels": labels, "seed": seed},
        "cells": [asdict(r) for r in results],
    }
    write_atomic(out_dir / "manifest.json", json_text(manifest))
    return manifest
