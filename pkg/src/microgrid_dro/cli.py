"""Command-line entry point: ``microgrid-dro {gen-case,solve,evaluate,compare}``.

Exit codes: 0 ok, 2 not converged, 3 infeasible, 4 I/O or input error, 5 solver backend failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from .dro import METHODS, MasterInfeasible, Solution, load_solution, run_ccg, save_solution
from .ieee37 import build_ieee37_case
from .netdata import CaseData, CaseFileError, case_fingerprint, load_case, save_case, validate_case
from .scenarios import SamplerConfig, compare_methods, evaluate_policy, sample_scenarios, write_comparison, write_stats
from .solvers import BackendUnavailable, SolverError

logger = logging.getLogger("microgrid_dro")

EXIT_OK = 0
EXIT_NOT_CONVERGED = 2
EXIT_INFEASIBLE = 3
EXIT_IO = 4
EXIT_BACKEND = 5


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _out_dir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("", encoding="utf-8")
        probe.unlink()
    except OSError as exc:
        raise CliError(f"output directory {out} is not writable: {exc}", EXIT_IO) from exc
    return out


def _case(path: Optional[str]) -> CaseData:
    if not path:
        raise CliError("--case is required", EXIT_IO)
    try:
        case = load_case(path)
    except (OSError, CaseFileError) as exc:
        raise CliError(f"cannot read case {path}: {exc}", EXIT_IO) from exc
    report = validate_case(case)
    if not report.ok:
        raise CliError(f"case {path} is invalid:\n{report}", EXIT_IO)
    return case


def _solution(path: str, case: CaseData) -> Solution:
    try:
        sol = load_solution(path, case)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(f"cannot read solution {path}: {exc}", EXIT_IO) from exc
    if sol.case_hash != case_fingerprint(case):
        raise CliError(
            f"solution {path} was computed for case {sol.case_hash}, not {case_fingerprint(case)}", EXIT_IO
        )
    return sol


def _sampler(args) -> SamplerConfig:
    try:
        return SamplerConfig(n_scenarios=args.scenarios, seed=args.seed, perturbation=args.perturbation)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_IO) from exc


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", EXIT_IO) from exc


def cmd_gen_case(args) -> int:
    overrides = {}
    if args.horizon is not None:
        overrides["horizon_steps"] = args.horizon
    if args.k is not None:
        overrides["k"] = args.k
    try:
        case = build_ieee37_case(overrides)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_IO) from exc
    target = Path(args.out)
    if target.suffix != ".json":
        target = _out_dir(args.out) / "case.json"
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        save_case(case, target)
    except OSError as exc:
        raise CliError(f"cannot write case to {target}: {exc}", EXIT_IO) from exc
    print(target)
    return EXIT_OK


def cmd_solve(args) -> int:
    case = _case(args.case)
    out = _out_dir(args.out)
    code = EXIT_OK
    done: list[Solution] = []
    # most restricted first, so later methods can start from earlier incumbents
    for method in sorted(dict.fromkeys(args.method), key=lambda m: -METHODS.index(m)):
        started = time.time()
        sol = run_ccg(case, method, tol=args.tol, max_iter=args.max_iter, backend=args.backend,
                      mip_gap=args.mip_gap, time_limit=args.time_limit, seeds=done)
        done.append(sol)
        save_solution(sol, case, out / f"solution_{method}.json")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "lower_bound", "upper_bound", "subproblem_value", "failed"])
        for r in sol.log:
            w.writerow([r.iteration, repr(r.lower_bound), repr(r.upper_bound), repr(r.sub_value), " ".join(r.failed)])
        _write(out / f"iterations_{method}.csv", buf.getvalue())
        # wall-clock data lives apart from the reproducible outputs
        timing = {
            "method": method,
            "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
            "wall_time": time.time() - started,
            "iterations": [{"iteration": r.iteration, "master_time": r.master_time, "subproblem_time": r.sub_time}
                           for r in sol.log],
        }
        _write(out / f"timing_{method}.json", json.dumps(timing, indent=2) + "\n")
        status = "converged" if sol.converged else "NOT converged"
        print(f"{method}: objective {sol.objective:.6g} $/h, {sol.iterations} iterations, {status}")
        if not sol.converged:
            code = EXIT_NOT_CONVERGED
    return code


def cmd_evaluate(args) -> int:
    case = _case(args.case)
    out = _out_dir(args.out)
    cfg = _sampler(args)
    scenarios = sample_scenarios(case, cfg)
    for path in args.solution:
        sol = _solution(path, case)
        st = evaluate_policy(sol, scenarios, case, backend=args.backend, seed=cfg.seed)
        stem = Path(path).stem.replace("solution_", "") or sol.method
        write_stats(st, out / f"eval_{stem}.json", out / f"eval_{stem}.csv")
        print(f"{sol.method}: expected VoLL {st.expected_total:.6g} $ over {st.n} scenarios (seed {cfg.seed})")
    return EXIT_OK


def cmd_compare(args) -> int:
    case = _case(args.case)
    out = _out_dir(args.out)
    cfg = _sampler(args)
    sols = [_solution(p, case) for p in args.solution]
    labels = []
    for s in sols:
        label, n = s.method, 2
        while label in labels:
            label, n = f"{s.method}#{n}", n + 1
        labels.append(label)
    table = compare_methods(sols, sample_scenarios(case, cfg), case, backend=args.backend, labels=labels, seed=cfg.seed)
    write_comparison(table, out)
    rows = table.step_rows()
    print("row      " + "  ".join(f"{m:>12}" for m in table.methods))
    for i, r in enumerate(rows):
        lab = "Total" if i == len(rows) - 1 else f"step {i + 1}"
        print(f"{lab:<8} " + "  ".join(f"{v:12.2f}" for v in r))
    for m, red in table.reductions().items():
        print(f"reduction of {table.methods[0]} vs {m}: {100 * red:.1f}%")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="microgrid-dro", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenarios=False):
        p.add_argument("--case", help="case JSON file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--backend", default=None, help="solver backend (highs, glpk)")
        if scenarios:
            p.add_argument("--scenarios", type=int, default=1000)
            p.add_argument("--seed", type=int, default=0)
            p.add_argument("--perturbation", type=float, default=0.1)

    g = sub.add_parser("gen-case", help="write the modified IEEE 37-node case")
    g.add_argument("--out", default="case.json", help="file (*.json) or directory")
    g.add_argument("--horizon", type=int, default=None, help="number of time steps")
    g.add_argument("--k", type=int, default=None, help="contingency budget")
    g.set_defaults(func=cmd_gen_case)

    s = sub.add_parser("solve", help="run column-and-constraint generation")
    common(s)
    s.add_argument("--method", nargs="+", choices=METHODS, default=["dr-dmf"])
    s.add_argument("--tol", type=float, default=1e-4)
    s.add_argument("--max-iter", type=int, default=50)
    s.add_argument("--mip-gap", type=float, default=1e-4)
    s.add_argument("--time-limit", type=float, default=None,
                   help="seconds per master/subproblem solve (doubled when a stop at the limit stalls progress)")
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("evaluate", help="Monte Carlo VoLL of stored solutions")
    common(e, scenarios=True)
    e.add_argument("--solution", nargs="+", required=True)
    e.set_defaults(func=cmd_evaluate)

    c = sub.add_parser("compare", help="side-by-side VoLL table of stored solutions")
    common(c, scenarios=True)
    c.add_argument("--solution", nargs="+", required=True, help="first file is the reference method")
    c.set_defaults(func=cmd_compare)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except MasterInfeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except BackendUnavailable as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
