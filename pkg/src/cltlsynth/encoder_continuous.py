"""Mixed-integer encoding for affine continuous-state robots.

States are never decision variables: each w[n][t] is the affine image of
the inputs by forward substitution, so only inputs, loop selectors and the
logic binaries remain.  Atomic propositions are convex polytopes; a
binary per polytope face plus a conjunction gadget tests membership up to
a configurable strictness margin epsilon.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .formula import OuterFormula, atoms_of, iter_outer, normalize, ONot
from .ilp import IlpModel, LinExpr, Solution, VarId
from .system import ContinuousSystem
from .encoder_sync import (EncodedProblem, EncodingError, InnerEncoder, Layout,
                           OuterEncoder, ExtractionError)
from .encoder_robust import RobustOuterEncoder
from .trajectory import ContinuousTrajectory

import warnings


def encode_cont_dynamics_loop(model: IlpModel, sys: ContinuousSystem, h: int,
                              tau: int = 0) -> Layout:
    """Input variables plus symbolic states, box constraints keeping every
    state inside the declared bounds, and big-M loop closure with the radius
    taken from the box diameter (the largest spread the box permits)."""
    problems = sys.validate()
    if problems:
        raise EncodingError("; ".join(problems))
    layout = Layout(model, sys.n_robots, h, tau)
    layout.instance = sys
    lo_w, hi_w = sys.state_bounds
    lo_u, hi_u = sys.input_bounds
    d_w, d_u = sys.d_w, sys.d_u
    radius = hi_w - lo_w

    for n in range(sys.n_robots):
        f, g, c = sys.dynamics[n]
        state = [LinExpr(const=float(x)) for x in sys.init[n]]
        layout.state_exprs[(n, 0)] = state
        for t in range(h):
            u_row = [model.add_continuous(f"u_{n}_{t}_{k}", float(lo_u[k]),
                                          float(hi_u[k]), tag="continuous",
                                          decision=True)
                     for k in range(d_u)]
            layout.input_vars[(n, t)] = u_row
            nxt = []
            for i in range(d_w):
                expr = LinExpr(const=float(c[i]))
                for j in range(d_w):
                    if f[i, j]:
                        expr = expr + state[j] * float(f[i, j])
                for k in range(d_u):
                    if g[i, k]:
                        expr.add_term(u_row[k], float(g[i, k]))
                nxt.append(expr)
            layout.state_exprs[(n, t + 1)] = nxt
            state = nxt
            for i in range(d_w):
                if not nxt[i].coeffs:
                    # Constant trajectory dimension: check the box once.
                    if not (lo_w[i] - 1e-9 <= nxt[i].const <= hi_w[i] + 1e-9):
                        raise EncodingError(
                            f"robot {n} dimension {i} leaves its bounds at step {t + 1}")
                    continue
                model.add_constraint(nxt[i], "<=", float(hi_w[i]), tag="continuous")
                model.add_constraint(nxt[i], ">=", float(lo_w[i]), tag="continuous")

    layout.loop_vars = [model.add_binary(f"zloop_{t}", tag="loop", decision=True)
                        for t in range(h)]
    model.add_constraint(LinExpr.sum_of(layout.loop_vars), "=", 1, tag="loop")
    for n in range(sys.n_robots):
        final = layout.state_exprs[(n, h)]
        for t in range(h):
            z = layout.loop_vars[t]
            cur = layout.state_exprs[(n, t)]
            for i in range(d_w):
                m = float(radius[i]) if radius[i] > 0 else 1.0
                diff = final[i] - cur[i]
                model.add_constraint(diff + LinExpr({z: m}), "<=", m, tag="loop")
                model.add_constraint(diff - LinExpr({z: m}), ">=", -m, tag="loop")

    # Post-loop states for robust windows are genuine variables pinned to
    # their wrapped loop positions.
    for n in range(sys.n_robots):
        for k in range(1, tau + 1):
            row = [model.add_continuous(f"w_{n}_{h + k}_{i}", float(lo_w[i]),
                                        float(hi_w[i]), tag="robust")
                   for i in range(d_w)]
            layout.state_exprs[(n, h + k)] = [LinExpr({v: 1}) for v in row]
            for l, z in enumerate(layout.loop_vars):
                src = layout.state_exprs[(n, layout.wrap_index(l, h + k))]
                for i in range(d_w):
                    m = float(radius[i]) if radius[i] > 0 else 1.0
                    diff = LinExpr({row[i]: 1}) - src[i]
                    model.add_constraint(diff + LinExpr({z: m}), "<=", m, tag="robust")
                    model.add_constraint(diff - LinExpr({z: m}), ">=", -m, tag="robust")
    return layout


def _face_big_m(hrow: np.ndarray, offset: float, lo: np.ndarray, hi: np.ndarray) -> float:
    """Largest |H_i w - h_i| over the state box, plus slack."""
    reach = abs(offset)
    for j, coef in enumerate(hrow):
        reach += abs(coef) * max(abs(lo[j]), abs(hi[j]))
    return reach + 1.0


def polytope_atom_backend(layout: Layout, sys: ContinuousSystem,
                          epsilon: float = 1e-6):
    """Membership test for polytope atoms: one binary per face, true iff the
    face inequality holds (with margin epsilon on the violating side), and a
    conjunction binary equal to full membership."""
    model = layout.model
    lo_w, hi_w = sys.state_bounds
    memo: dict[tuple[str, int, int], VarId] = {}

    def backend(name: str, n: int, t: int) -> VarId:
        key = (name, n, t)
        if key in memo:
            return memo[key]
        if name not in sys.atoms:
            raise EncodingError(f"no polytope registered for proposition {name!r}")
        hmat, hvec = sys.atoms[name]
        state = layout.state_exprs[(n, t)]
        rows = hmat.shape[0]
        faces = []
        for i in range(rows):
            e = model.add_binary(f"e_{name}_{n}_{t}_{i}", tag="polytope",
                                 decision=True)
            faces.append(e)
            expr = LinExpr()
            for j, coef in enumerate(hmat[i]):
                if coef:
                    expr = expr + state[j] * float(coef)
            m = _face_big_m(hmat[i], float(hvec[i]), lo_w, hi_w)
            model.add_constraint(expr + LinExpr({e: m}), "<=", float(hvec[i]) + m,
                                 tag="polytope")
            model.add_constraint(expr + LinExpr({e: m}), ">=", float(hvec[i]) + epsilon,
                                 tag="polytope")
        z = model.add_binary(f"z_{name}_{n}_{t}", tag="polytope")
        for e in faces:
            model.add_constraint(LinExpr({z: 1, e: -1}), "<=", 0, tag="polytope")
        expr = LinExpr({z: 1})
        for e in faces:
            expr.add_term(e, -1)
        model.add_constraint(expr, ">=", 1 - rows, tag="polytope")
        memo[key] = z
        return z

    return backend


def encode_polytope_ap(model: IlpModel, layout: Layout, sys: ContinuousSystem,
                       name: str, n: int, t: int, epsilon: float = 1e-6) -> VarId:
    backend = getattr(layout, "_polytope_backend", None)
    if backend is None:
        backend = polytope_atom_backend(layout, sys, epsilon)
        layout._polytope_backend = backend
    return backend(name, n, t)


def build_cont_problem(sys: ContinuousSystem, mu: OuterFormula, h: int,
                       tau: int = 0, epsilon: float = 1e-6,
                       pool_tcp_disjunctions: bool = True) -> EncodedProblem:
    """Feasibility program over inputs; solutions drive every robot so the
    induced polytope-membership trace satisfies the formula."""
    missing = atoms_of(mu) - set(sys.ap)
    if missing:
        raise EncodingError(f"formula uses unknown propositions: {sorted(missing)}")
    if tau > 0 and any(isinstance(node, ONot) for node in iter_outer(mu)):
        warnings.warn("formula normalized to positive normal form for the "
                      "robust encoding")
    norm = normalize(mu, sys.n_robots, robust=tau > 0)
    model = IlpModel("continuous")
    layout = encode_cont_dynamics_loop(model, sys, h, tau)
    backend = polytope_atom_backend(layout, sys, epsilon)
    layout._polytope_backend = backend
    inner = InnerEncoder(model, layout, backend, allow_inner_next=tau == 0)
    layout.inner_encoder = inner
    if tau == 0:
        outer = OuterEncoder(model, layout, inner, sys.n_robots)
    else:
        outer = RobustOuterEncoder(model, layout, inner, sys.n_robots, tau,
                                   pool_tcp_disjunctions)
    layout.outer_encoder = outer
    root = outer.var(norm, 0)
    model.add_constraint(LinExpr({root: 1}), "=", 1, tag="root")
    return EncodedProblem(model, layout, sys, norm, mu, h, tau, "continuous")


def extract_continuous(problem: EncodedProblem, sol: Solution) -> list[ContinuousTrajectory]:
    """Inputs and replayed states per robot, plus the chosen loop point."""
    if not sol.feasible:
        raise ExtractionError("solution is not feasible")
    layout = problem.layout
    sys: ContinuousSystem = problem.instance
    loop_hits = [t for t, z in enumerate(layout.loop_vars) if round(sol[z]) == 1]
    if len(loop_hits) != 1:
        raise ExtractionError(f"expected exactly one loop start, found {loop_hits}")
    l = loop_hits[0]
    out = []
    for n in range(sys.n_robots):
        inputs = tuple(
            tuple(float(sol[v]) for v in layout.input_vars[(n, t)])
            for t in range(problem.h))
        f, g, c = sys.dynamics[n]
        w = np.asarray(sys.init[n], dtype=float)
        states = [tuple(float(x) for x in w)]
        for t in range(problem.h):
            w = f @ w + g @ np.asarray(inputs[t], dtype=float) + c
            states.append(tuple(float(x) for x in w))
        out.append(ContinuousTrajectory(inputs, tuple(states), l))
    return out


def membership_trace(sys: ContinuousSystem, traj: ContinuousTrajectory,
                     epsilon: float = 1e-6) -> list[frozenset]:
    """Atom sets per step from direct polytope evaluation (strict by the
    same margin the encoding uses); feeds the oracle for verification."""
    out = []
    for w in traj.states:
        vec = np.asarray(w, dtype=float)
        labels = set()
        for name, (hmat, hvec) in sys.atoms.items():
            if np.all(hmat @ vec <= hvec + 1e-9):
                labels.add(name)
        out.append(frozenset(labels))
    return out
