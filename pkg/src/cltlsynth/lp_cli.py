"""Solve an LP-format file and write a ``name value`` solution file.

Usage::

    python -m cltlsynth.lp_cli model.lp out.sol

Exit code 0 on success (including a proven-infeasible instance, reported
in the solution file's status line); nonzero on I/O or format errors.
This makes the module directly usable as a ``--solver-cmd`` target:
``python -m cltlsynth.lp_cli {lp} {sol}``.
"""

from __future__ import annotations

import sys

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, milp

from .ilp import BINARY, INTEGER
from .lp_format import parse_lp, sanitize_names, write_solution_file


def solve_lp_file(lp_path: str, sol_path: str) -> str:
    model = parse_lp(lp_path)
    n = model.n_vars
    names = sanitize_names(model)
    integrality = np.array(
        [1 if model.vars[v].kind in (BINARY, INTEGER) else 0 for v in range(n)])
    lb = np.array([float(model.vars[v].lo) for v in range(n)])
    ub = np.array([float(model.vars[v].hi) for v in range(n)])

    rows, lo_b, hi_b = [], [], []
    for con in model.constraints:
        rows.append(con.expr.coeffs)
        if con.sense == "<=":
            lo_b.append(-np.inf)
            hi_b.append(con.rhs)
        elif con.sense == ">=":
            lo_b.append(con.rhs)
            hi_b.append(np.inf)
        else:
            lo_b.append(con.rhs)
            hi_b.append(con.rhs)
    data, ri, ci = [], [], []
    for r, coeff in enumerate(rows):
        for v, c in coeff.items():
            data.append(c)
            ri.append(r)
            ci.append(v)
    a = sparse.csr_matrix((data, (ri, ci)), shape=(len(rows), n))

    c = np.zeros(n)
    if model.objective is not None:
        for v, coef in model.objective.coeffs.items():
            c[v] = coef

    constraints = LinearConstraint(a, np.array(lo_b), np.array(hi_b)) if rows else ()
    res = milp(c=c, constraints=constraints, integrality=integrality,
               bounds=Bounds(lb, ub))
    if res.status == 2:
        write_solution_file(sol_path, "infeasible")
        return "infeasible"
    if res.x is None:
        write_solution_file(sol_path, "unknown")
        return "unknown"
    values = {}
    for v in range(n):
        x = res.x[v]
        values[names[v]] = int(round(x)) if integrality[v] else float(x)
    write_solution_file(sol_path, "feasible", values)
    return "feasible"


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 2:
        print("usage: python -m cltlsynth.lp_cli model.lp out.sol", file=sys.stderr)
        return 2
    try:
        status = solve_lp_file(argv[0], argv[1])
    except Exception as exc:  # surface parse/IO problems to the caller
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(status)
    return 0


if __name__ == "__main__":
    sys.exit(main())
