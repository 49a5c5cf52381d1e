"""Command-line harness: ``qpspec {solve,sweep,decay,field,validate} --config FILE``.

Exit status is 0 on success, 2 for configuration or input errors and 3 for
numerical failures (non-converged eigenpairs, failed resolvent solves).
Artifacts are still written when a numerical failure occurs.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import artifacts
from .config import (
    Box,
    ConfigError,
    RunConfig,
    SweepConfig,
    load_run_config,
    load_sweep_config,
    with_axis_value,
)
from .diagnostics import (
    decay_profile,
    eigenfunction_l2_error,
    eigenvalue_error,
    evaluate_physical,
    participation_ratio,
    sample_box,
    truncation_curve,
)
from .eigensolver import EigenPairSet, condition_estimate, solve_smallest
from .indicator import ResolventError, indicator_value, local_half_widths, make_square_region, probe_vector
from .lattice import (
    FrequencyIndexSet,
    ResourceBudgetError,
    build_full_index_set,
    build_reduced_index_set,
    max_projected_norm,
)
from .operator import HamiltonianOperator, build_operator

log = logging.getLogger("qpspec")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


@dataclass
class Solution:
    config: RunConfig
    index_set: FrequencyIndexSet
    H: HamiltonianOperator
    pairs: EigenPairSet
    timings_ms: dict


def build_index_set(cfg: RunConfig) -> FrequencyIndexSet:
    P = cfg.P
    if cfg.method == "pm":
        return build_full_index_set(P.n, cfg.N, cfg.budget)
    return build_reduced_index_set(P, cfg.N, cfg.D, cfg.truncation_norm, cfg.budget)


def prepare(cfg: RunConfig) -> tuple[FrequencyIndexSet, HamiltonianOperator]:
    S = build_index_set(cfg)
    if cfg.solver.num_eigs >= S.size:
        raise ConfigError("solver.num_eigs", f"must be smaller than the {S.size} retained modes")
    return S, build_operator(cfg.P, cfg.potential, S, cfg.budget)


def solve(cfg: RunConfig) -> Solution:
    """Build the index set and operator for ``cfg`` and compute its eigenpairs."""
    t0 = time.perf_counter()
    S, H = prepare(cfg)
    t1 = time.perf_counter()
    pairs = solve_smallest(H, cfg.solver)
    t2 = time.perf_counter()
    timings = {"build_ms": 1e3 * (t1 - t0), "solve_ms": 1e3 * (t2 - t1), "total_ms": 1e3 * (t2 - t0)}
    return Solution(cfg, S, H, pairs, timings)


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.outputs)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_run(sol: Solution, command: str, extra: Optional[dict] = None) -> None:
    payload = {
        "command": command,
        "config": sol.config.to_dict(),
        "dof": sol.index_set.size,
        "matvecs": sol.pairs.matvecs,
        "restarts": sol.pairs.restarts,
        "all_converged": sol.pairs.all_converged,
        "timings_ms": sol.timings_ms,
    }
    payload.update(extra or {})
    artifacts.write_json(_out_dir(sol.config) / artifacts.RUN_JSON, payload)


def _status(pairs: EigenPairSet) -> int:
    if pairs.all_converged:
        return EXIT_OK
    log.error("%d eigenpair(s) did not converge", sum(not p.converged for p in pairs))
    return EXIT_NUMERIC


def cmd_solve(cfg: RunConfig) -> int:
    sol = solve(cfg)
    out = _out_dir(cfg)
    artifacts.write_solution(out, sol.index_set, sol.pairs)
    _write_run(sol, "solve")
    return _status(sol.pairs)


def _first_eigenfunction_error(a: Solution, b: Solution, box) -> float:
    fa = sample_box(a.pairs[0].coefficients, a.index_set, a.config.P, box.lo, box.hi, box.samples)
    fb = sample_box(b.pairs[0].coefficients, b.index_set, b.config.P, box.lo, box.hi, box.samples)
    return eigenfunction_l2_error(fa, fb, box.cell_volume)


def _default_delta_box(d: int) -> Box:
    return Box((0.0,) * d, (1.0,) * d, (512,) * d)


def run_sweep(sc: SweepConfig) -> tuple[list[str], list[list]]:
    """Rows of the sweep table; a failed row carries its message in ``error``."""
    ref = solve(sc.reference) if sc.reference is not None else None
    box = sc.delta_domain or _default_delta_box(sc.base.P.d)
    header = [sc.axis, "dof", "time_ms", "converged"]
    if ref is not None:
        header += ["eps", "delta"]
    if sc.condition:
        header += ["condition"]
    header += ["error"]
    rows = []
    for value in sc.values:
        cfg = with_axis_value(sc.base, sc.axis, value)
        row = {sc.axis: int(value) if sc.axis == "N" else value}
        try:
            best = None
            for _ in range(sc.repeats):
                sol = solve(cfg)
                if best is None or sol.timings_ms["total_ms"] < best.timings_ms["total_ms"]:
                    best = sol
            row.update(dof=best.index_set.size, time_ms=best.timings_ms["total_ms"], converged=best.pairs.all_converged)
            if ref is not None:
                row["eps"] = eigenvalue_error(best.pairs, ref.pairs, sc.count)
                row["delta"] = _first_eigenfunction_error(best, ref, box)
            if sc.condition:
                row["condition"] = condition_estimate(best.H)
        except (ResourceBudgetError, ConfigError, ValueError, ArithmeticError) as exc:
            log.error("sweep row %s=%g failed: %s", sc.axis, value, exc)
            row["error"] = str(exc)
        rows.append([row.get(h) for h in header])
    return header, rows


def cmd_sweep(sc: SweepConfig) -> int:
    out = _out_dir(sc.base)
    header, rows = run_sweep(sc)
    artifacts.write_csv(out / "sweep.csv", header, rows)
    failed = any(r[header.index("error")] for r in rows) or not all(r[header.index("converged")] in (True, None) for r in rows)
    return EXIT_NUMERIC if failed else EXIT_OK


def cmd_decay(cfg: RunConfig, indices: Sequence[int]) -> int:
    k = cfg.solver.num_eigs
    bad = [i for i in indices if not 1 <= i <= k]
    if bad:
        raise ConfigError("--indices", f"{bad[0]} is outside 1..solver.num_eigs={k}")
    sol = solve(cfg)
    out = _out_dir(cfg)
    artifacts.write_solution(out, sol.index_set, sol.pairs)
    P, S = cfg.P, sol.index_set
    Dmax = max_projected_norm(P, cfg.N, cfg.truncation_norm)
    Ds = np.arange(0, math.ceil(Dmax) + 1, dtype=float)
    for i in indices:
        u = sol.pairs[i - 1].coefficients
        prof = decay_profile(u, S, P, cfg.truncation_norm)
        artifacts.write_csv(out / f"decay_{i}.csv", ["qnorm", "magnitude"], zip(prof.qnorm, prof.magnitude))
        errs = truncation_curve(u, S, P, Ds, cfg.truncation_norm)
        artifacts.write_csv(out / f"errD_{i}.csv", ["D", "err"], zip(Ds, errs))
    _write_run(sol, "decay", {"indices": list(indices)})
    return _status(sol.pairs)


def normalized_field(u, S, P, box):
    """Box samples normalized to unit discrete L2 and rotated to be real-positive at the centre."""
    samples = sample_box(u, S, P, box.lo, box.hi, box.samples)
    centre = [0.5 * (a + b) for a, b in zip(box.lo, box.hi)]
    c = evaluate_physical(u, S, P, [centre]).values[0]
    vals = samples.values
    if abs(c) > 0.0:
        vals = vals * (np.conj(c) / abs(c))
    vals = vals / np.sqrt(box.cell_volume * np.sum(np.abs(vals) ** 2))
    return samples.points, vals


def cmd_field(cfg: RunConfig, indices: Optional[Sequence[int]] = None) -> int:
    if cfg.domain is None:
        raise ConfigError("domain", "field needs domain.min, domain.max and domain.samples")
    sol = solve(cfg)
    out = _out_dir(cfg)
    artifacts.write_solution(out, sol.index_set, sol.pairs)
    box = cfg.domain
    indices = indices or list(range(1, len(sol.pairs) + 1))
    header = [f"z{j + 1}" for j in range(box.d)] + ["abs", "re", "im"]
    pr_rows = []
    for i in indices:
        if not 1 <= i <= len(sol.pairs):
            raise ConfigError("--indices", f"{i} is outside 1..{len(sol.pairs)}")
        pts, vals = normalized_field(sol.pairs[i - 1].coefficients, sol.index_set, cfg.P, box)
        rows = (list(p) + [abs(v), v.real, v.imag] for p, v in zip(pts, vals))
        artifacts.write_csv(out / f"field_{i}.csv", header, rows)
        pr_rows.append((i, sol.pairs[i - 1].E, participation_ratio(vals, box.cell_volume)))
    artifacts.write_csv(out / "pr.csv", ["index", "eigenvalue", "participation_ratio"], pr_rows)
    _write_run(sol, "field", {"indices": list(indices)})
    return _status(sol.pairs)


def cmd_validate(
    cfg: RunConfig,
    half_width: Optional[float] = None,
    threshold: Optional[float] = None,
    n0: Optional[int] = None,
) -> int:
    out = Path(cfg.outputs)
    path = out / artifacts.EIGENVALUES_CSV
    if not path.exists():
        raise ConfigError("outputs", f"{path} not found; run solve first")
    E = artifacts.read_eigenvalues(path)
    vc = cfg.validate
    half_width = half_width if half_width is not None else vc.half_width
    threshold = threshold if threshold is not None else vc.threshold
    n0 = n0 or vc.n0
    header = ["eigenvalue", "indicator", "accepted", "error"]
    if E.size == 0:
        artifacts.write_csv(out / "validate.csv", header, [])
        return EXIT_OK
    if half_width is None:
        if E.size < 2:
            raise ConfigError("validate.half_width", "required when only one eigenvalue is listed")
        widths = local_half_widths(E, E)
    else:
        if half_width <= 0:
            raise ConfigError("--half-width", "must be positive")
        widths = np.full(E.size, half_width)
    _S, H = prepare(replace(cfg, solver=replace(cfg.solver, num_eigs=1)))
    f = probe_vector(H, vc.probe, cfg.solver.seed)
    rows, failed = [], False
    for e, h in zip(E, widths):
        try:
            ind = indicator_value(H, make_square_region(e, h, n0), f, vc.gmres)
            rows.append([e, ind, ind >= threshold, ""])
        except ResolventError as exc:
            failed = True
            rows.append([e, None, False, str(exc)])
    artifacts.write_csv(out / "validate.csv", header, rows)
    return EXIT_NUMERIC if failed else EXIT_OK


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qpspec", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--out", type=Path, help="output directory (overrides 'outputs')")
        return sp

    common("solve", "compute the smallest eigenpairs")
    common("sweep", "repeat a solve over N, D or E0")
    sp = common("decay", "coefficient decay and Err(D) curves")
    sp.add_argument("--indices", type=_int_list, default=[1], help="1-based eigenfunction indices, e.g. 1,50")
    sp = common("field", "eigenfunctions on a physical box and participation ratios")
    sp.add_argument("--indices", type=_int_list, default=None)
    sp = common("validate", "contour-integral check of the eigenvalues in eigenvalues.csv")
    sp.add_argument("--half-width", type=float, default=None)
    sp.add_argument("--threshold", type=float, default=None)
    sp.add_argument("--nodes", type=int, default=None, help="quadrature nodes (multiple of 4)")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "sweep":
            sc = load_sweep_config(args.config)
            if args.out is not None:
                sc = replace(sc, base=replace(sc.base, outputs=args.out))
            return cmd_sweep(sc)
        cfg = load_run_config(args.config)
        if args.out is not None:
            cfg = replace(cfg, outputs=args.out)
        if args.command == "solve":
            return cmd_solve(cfg)
        if args.command == "decay":
            return cmd_decay(cfg, args.indices)
        if args.command == "field":
            return cmd_field(cfg, args.indices)
        if args.nodes is not None and (args.nodes < 4 or args.nodes % 4):
            raise ConfigError("--nodes", "must be a positive multiple of 4")
        return cmd_validate(cfg, args.half_width, args.threshold, args.nodes)
    except (ConfigError, ResourceBudgetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ResolventError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
