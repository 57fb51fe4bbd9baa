"""Command-line driver.

Exit codes: 0 success (converged), 2 usage or invalid input, 3 iteration cap
reached, 4 oracle enumeration cap exceeded.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import diffusion as dm
from . import double_loop as dl
from . import oracle
from .csp_decode import DEFAULT_EPS, Tables, decode_ground_states
from .errors import CapacityError, ModelError
from .experiment import RunSettings, run_experiment, trace_csv
from .generators import INTERACTIONS, TOPOLOGIES, InstanceSpec, generate
from .model import Model, TildeTheta, evaluate
from .oracle import BeliefVector
from .semiring import Temperature, normalize
from .serialization import dump_model, json_text, load_model, write_atomic

EXIT_OK, EXIT_USAGE, EXIT_CAP, EXIT_CAPACITY = 0, 2, 3, 4

log = logging.getLogger("maxsum_bethe")


class UsageError(Exception):
    pass


def _beta(text: str) -> Temperature:
    try:
        return Temperature.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _positive(kind):
    def parse(text: str):
        try:
            value = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid value {text!r}") from None
        if not value > 0:
            raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
        return value
    return parse


def _nonneg(kind):
    def parse(text: str):
        try:
            value = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid value {text!r}") from None
        if not value >= 0:
            raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
        return value
    return parse


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("model", type=Path, help="model JSON file")
    p.add_argument("--algorithm", choices=("diffusion", "double_loop", "oracle"), default="diffusion")
    p.add_argument("--beta", type=_beta, default=Temperature(math.inf), help='inverse temperature or "inf"')
    p.add_argument("--tol", type=_positive(float), default=dm.DEFAULT_TOL, help="diffusion residual tolerance")
    p.add_argument("--max-sweeps", type=_nonneg(int), default=dm.DEFAULT_MAX_SWEEPS)
    p.add_argument("--outer-tol", type=_positive(float), default=dl.DEFAULT_OUTER_TOL)
    p.add_argument("--max-outer", type=_nonneg(int), default=dl.DEFAULT_MAX_OUTER)
    p.add_argument("--inner-tol", type=_positive(float), default=None,
                   help="fixed inner tolerance (default: tightening schedule)")
    p.add_argument("--max-inner", type=_nonneg(int), default=dl.DEFAULT_MAX_SWEEPS)
    p.add_argument("--tilde-init", choices=("zero", "random"), default="zero",
                   help="zero: uniform tables (exactly 0 at beta=inf); random: seeded uniform[-1,1], normalized")
    p.add_argument("--tilde-seed", type=_nonneg(int), default=0, help="seed for --tilde-init random")
    p.add_argument("--eps-active", type=_nonneg(float), default=DEFAULT_EPS)
    p.add_argument("--limit", type=_positive(int), default=1000, help="max decoded assignments")
    p.add_argument("--cap", type=_positive(int), default=oracle.DEFAULT_CAP, help="oracle joint-state cap")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maxsum-bethe", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a random instance")
    g.add_argument("--topology", choices=TOPOLOGIES, default="grid")
    g.add_argument("--rows", type=int, default=1)
    g.add_argument("--cols", type=int, default=1)
    g.add_argument("--n", type=int, default=1, help="vertices for complete/chain/random_tree")
    g.add_argument("--labels", type=int, default=2)
    g.add_argument("--interaction", choices=INTERACTIONS, default="random")
    g.add_argument("--unary-scale", type=float, default=1.0)
    g.add_argument("--pairwise-scale", type=float, default=1.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-o", "--output", type=Path, required=True)

    s = sub.add_parser("solve", help="run a solver and write results JSON")
    _add_solver_flags(s)
    s.add_argument("-o", "--output", type=Path, default=None, help="results JSON (default: stdout)")
    s.add_argument("--trace", type=Path, default=None, help="trace CSV path")

    c = sub.add_parser("compare", help="compare a solver against the exact oracle")
    _add_solver_flags(c)
    c.add_argument("-o", "--output", type=Path, default=None, help="report JSON (default: stdout)")

    e = sub.add_parser("experiment", help="residual traces of the nine benchmark cells")
    e.add_argument("--rows", type=_positive(int), default=10)
    e.add_argument("--cols", type=_positive(int), default=10)
    e.add_argument("--complete-n", type=_positive(int), default=15)
    e.add_argument("--labels", type=int, default=4)
    e.add_argument("--seed", type=_nonneg(int), default=0)
    e.add_argument("--outer-tol", type=_positive(float), default=dl.DEFAULT_OUTER_TOL)
    e.add_argument("--max-outer", type=_nonneg(int), default=dl.DEFAULT_MAX_OUTER)
    e.add_argument("--inner-tol", type=_positive(float), default=None)
    e.add_argument("--max-inner", type=_nonneg(int), default=dl.DEFAULT_MAX_SWEEPS)
    e.add_argument("--workers", type=_positive(int), default=1)
    e.add_argument("-o", "--output-dir", type=Path, required=True)
    return parser


# ---- solving -------------------------------------------------------------

def _belief_json(b: BeliefVector) -> dict:
    return {"scale": b.scale, "unary": b.unary, "factors": [f.ravel() for f in b.factors]}


def _decoded(m: Model, p, eps: float, limit: int) -> dict:
    sols = decode_ground_states(m, p, eps, limit)
    items = sorted(sols)
    return {
        "eps": eps,
        "count": len(items),
        "truncated": sols.truncated,
        "assignments": [{"x": list(x), "energy": evaluate(m, x)} for x in items],
    }


def _diffusion_csv(report: dm.SolveReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("sweep", "log10_residual", "dual_value"))
    for it, res, dual in report.residual_trace:
        w.writerow((it, repr(math.log10(res)) if res > 0 else "-inf", repr(dual)))
    return buf.getvalue()


def solve(m: Model, args) -> tuple[dict, str | None, BeliefVector]:
    """Results dict, optional trace CSV text, and the beliefs."""
    t = args.beta
    out: dict = {"algorithm": args.algorithm, "beta": str(t)}
    if args.algorithm == "oracle":
        beliefs = oracle.exact_marginals(m, t, args.cap)
        phi = oracle.log_partition(m, t, args.cap)
        out.update(converged=True, log_partition=phi, beliefs=_belief_json(beliefs))
        if t.is_infinite:
            out["decoded"] = _decoded(m, beliefs, 0.0, args.limit)
        return out, None, beliefs

    if args.algorithm == "diffusion":
        s = dm.DiffusionState(m, t)
        report = dm.run_to_convergence(s, args.tol, args.max_sweeps)
        beliefs = dm.pseudo_marginals(s)
        out.update(
            converged=report.converged,
            iterations=report.iterations,
            dual_value=report.dual_value,
            residual=report.final_residual,
            beliefs=_belief_json(beliefs),
            decoded=_decoded(m, Tables(*dm.reparameterized(s)), args.eps_active, args.limit),
        )
        return out, _diffusion_csv(report), beliefs

    if args.tilde_init == "random":
        tilde = TildeTheta.random(m, np.random.Generator(np.random.PCG64(args.tilde_seed)), t)
    else:
        tilde = TildeTheta.uniform(m, t)
    s = dl.DoubleLoopState(m, t, tilde)
    trace = dl.run(s, args.outer_tol, args.max_outer, args.inner_tol, args.max_inner)
    verdict = dl.key_observation(trace)
    beliefs = dl.bp_marginals(s)
    out.update(
        converged=trace.converged,
        iterations=len(trace.records),
        dual_value=trace.records[-1].u_hat if trace.records else dl.u_hat(s),
        residual=trace.final_residual,
        initial_residual=trace.initial_residual,
        key_observation=vars(verdict),
        beliefs=_belief_json(beliefs),
        decoded=_decoded(m, dl.hat_potentials(s), args.eps_active, args.limit),
    )
    return out, trace_csv(trace), beliefs


def _max_abs(a: list[np.ndarray], b: list[np.ndarray]) -> float:
    worst = 0.0
    for x, y in zip(a, b):
        both = (x == -np.inf) & (y == -np.inf)
        d = np.where(both, 0.0, np.abs(x - y))
        worst = max(worst, float(np.max(d)) if d.size else 0.0)
    return worst


def compare(m: Model, args) -> tuple[dict, bool]:
    """Report dict and whether the solver converged."""
    t = args.beta
    exact = oracle.exact_marginals(m, t, args.cap)
    phi = oracle.log_partition(m, t, args.cap)
    result, _, approx = solve(m, args)
    if t.is_infinite:
        a_u = [normalize(t, u) for u in approx.unary]
        a_f = [normalize(t, f) for f in approx.factors]
        e_u, e_f = list(exact.unary), list(exact.factors)
    else:
        p = approx.to_probability() if approx.scale == "log" else approx
        a_u, a_f, e_u, e_f = list(p.unary), list(p.factors), list(exact.unary), list(exact.factors)
    report = {
        "algorithm": args.algorithm,
        "beta": str(t),
        "converged": result["converged"],
        "belief_error": {"unary": _max_abs(a_u, e_u), "factor": _max_abs(a_f, e_f)},
        "log_partition": phi,
        "dual_value": result.get("dual_value"),
        "dual_gap": result["dual_value"] - phi if args.algorithm == "diffusion" else None,
    }
    decoded = result.get("decoded")
    if t.is_infinite and decoded is not None:
        energies = [d["energy"] for d in decoded["assignments"]]
        truth = oracle.ground_states(m, args.cap)
        got = {tuple(d["x"]) for d in decoded["assignments"]}
        report.update(
            decoded_count=len(got),
            decoded_energy_gap=(phi - max(energies)) if energies else None,
            csp_solvable=bool(energies),
            ground_states_equal=(got == truth) and not decoded["truncated"],
            ground_state_count=len(truth),
        )
    return report, bool(result["converged"])


# ---- commands ------------------------------------------------------------

def _emit(text: str, path: Path | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        write_atomic(path, text)


def cmd_generate(args) -> int:
    try:
        spec = InstanceSpec(topology=args.topology, rows=args.rows, cols=args.cols, n=args.n, labels=args.labels,
                            interaction=args.interaction, unary_scale=args.unary_scale,
                            pairwise_scale=args.pairwise_scale, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    m = generate(spec)
    dump_model(m, args.output)
    print(f"wrote {args.output}: vars={m.num_vars} edges={m.num_factors} labels={spec.labels}")
    return EXIT_OK


def cmd_solve(args) -> int:
    m = load_model(args.model)
    result, trace, _ = solve(m, args)
    trace_path = args.trace
    if trace_path is None and trace is not None and args.output is not None and args.algorithm == "double_loop":
        trace_path = args.output.with_suffix(".trace.csv")
    if trace is not None and trace_path is not None:
        write_atomic(trace_path, trace)
    result["trace_csv"] = str(trace_path) if trace_path is not None and trace is not None else None
    _emit(json_text(result), args.output)
    return EXIT_OK if result["converged"] else EXIT_CAP


def cmd_compare(args) -> int:
    m = load_model(args.model)
    report, converged = compare(m, args)
    _emit(json_text(report), args.output)
    return EXIT_OK if converged else EXIT_CAP


def cmd_experiment(args) -> int:
    if args.labels < 2:
        raise UsageError(f"labels must be >= 2, got {args.labels}")
    settings = RunSettings(args.outer_tol, args.max_outer, args.inner_tol, args.max_inner)
    manifest = run_experiment(args.output_dir, args.rows, args.cols, args.complete_n, args.labels, args.seed,
                              settings, args.workers)
    for cell in manifest["cells"]:
        ko = cell["key_observation"]
        print(f"{cell['name']:<40} {cell['status']:<5} converged={cell['converged']!s:<5} "
              f"iters={cell['outer_iterations']:<4} decades={cell['decades']:.2f} "
              f"key_obs={'-' if not ko else ko['holds']} {cell['seconds']:.1f}s")
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "solve": cmd_solve, "compare": cmd_compare, "experiment": cmd_experiment}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except CapacityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (UsageError, ModelError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
