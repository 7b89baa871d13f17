"""Affine continuous-state encoder: forward-substituted dynamics, loop
closure, polytope membership gadgets, robust windows over them."""

import random

import numpy as np
import pytest

from cltlsynth.formula import (IAtom, OAnd, OEventually, Tcp)
from cltlsynth.ilp import IlpModel, LinExpr
from cltlsynth.oracle import CollectiveExecution, Lasso, eval_outer
from cltlsynth.solver import solve_bnb
from cltlsynth.system import ContinuousSystem
from cltlsynth.encoder_continuous import (build_cont_problem,
                                          encode_cont_dynamics_loop,
                                          extract_continuous,
                                          membership_trace,
                                          polytope_atom_backend)
from cltlsynth.encoder_sync import EncodingError


def integrators(n_robots=1, init=0.0, box=10.0, u_max=1.0):
    """1-D integrator robots: w(t+1) = w(t) + u(t)."""
    f = np.array([[1.0]])
    g = np.array([[1.0]])
    c = np.zeros(1)
    inits = [np.array([init + 0.0 * k]) for k in range(n_robots)]
    atoms = {
        "A": (np.array([[1.0], [-1.0]]), np.array([1.1, -0.9])),
        "C": (np.array([[1.0], [-1.0]]), np.array([0.1, 0.1])),
    }
    return ContinuousSystem(
        dynamics=tuple((f, g, c) for _ in range(n_robots)),
        init=tuple(inits),
        atoms=atoms,
        state_bounds=(np.array([-box]), np.array([box])),
        input_bounds=(np.array([-u_max]), np.array([u_max])),
    )


def test_zero_input_constant_state_loops_immediately():
    sys_ = integrators()
    model = IlpModel()
    layout = encode_cont_dynamics_loop(model, sys_, h=3)
    for t in range(3):
        for v in layout.input_vars[(0, t)]:
            model.add_constraint(LinExpr({v: 1}), "=", 0, tag="fix")
    sol = solve_bnb(model)
    assert sol.feasible
    for t in range(4):
        value = layout.state_exprs[(0, t)][0]
        total = value.const + sum(c * sol[v] for v, c in value.coeffs.items())
        assert abs(total) < 1e-9


def test_reach_target_in_two_steps():
    sys_ = integrators()
    problem = build_cont_problem(sys_, OEventually(Tcp(IAtom("A"), 1)), h=2)
    sol = solve_bnb(problem.model)
    assert sol.feasible
    trajs = extract_continuous(problem, sol)
    assert any(0.9 - 1e-9 <= w[0] <= 1.1 + 1e-9 for w in trajs[0].states)


def test_unbounded_box_rejected():
    sys_ = integrators()
    bad = ContinuousSystem(sys_.dynamics, sys_.init, sys_.atoms,
                           (np.array([-np.inf]), np.array([np.inf])),
                           sys_.input_bounds)
    with pytest.raises(EncodingError, match="finite"):
        build_cont_problem(bad, Tcp(IAtom("A"), 1), h=2)


# ---------------------------------------------------------------------------
# Polytope membership gadget
# ---------------------------------------------------------------------------

def membership_model(point, epsilon=1e-6):
    """Pin a 2-D state to `point` and encode membership in the unit box."""
    f = np.eye(2)
    g = np.zeros((2, 1))
    c = np.zeros(2)
    sys_ = ContinuousSystem(
        dynamics=((f, g, c),),
        init=(np.array(point, dtype=float),),
        atoms={"B": (np.vstack([np.eye(2), -np.eye(2)]),
                     np.array([1.0, 1.0, 0.0, 0.0]))},
        state_bounds=(np.array([-5.0, -5.0]), np.array([5.0, 5.0])),
        input_bounds=(np.zeros(1), np.zeros(1)),
    )
    model = IlpModel()
    layout = encode_cont_dynamics_loop(model, sys_, h=1)
    backend = polytope_atom_backend(layout, sys_, epsilon)
    z = backend("B", 0, 0)
    return model, z


def test_point_inside_forces_membership():
    model, z = membership_model([0.5, 0.5])
    sol = solve_bnb(model)
    assert sol.feasible and sol[z] == 1
    model, z = membership_model([0.5, 0.5])
    model.add_constraint(LinExpr({z: 1}), "=", 0, tag="force")
    assert solve_bnb(model).status == "infeasible"


def test_point_outside_forces_nonmembership():
    model, z = membership_model([1.5, 0.5])
    sol = solve_bnb(model)
    assert sol.feasible and sol[z] == 0
    model, z = membership_model([1.5, 0.5])
    model.add_constraint(LinExpr({z: 1}), "=", 1, tag="force")
    assert solve_bnb(model).status == "infeasible"


def test_boundary_shell_is_excluded():
    # the closed face itself still counts as inside; the open shell
    # (face, face + epsilon) admits no face assignment at all
    model, z = membership_model([1.0, 0.5], epsilon=1e-3)
    sol = solve_bnb(model)
    assert sol.feasible and sol[z] == 1
    model, _ = membership_model([1.0 + 5e-4, 0.5], epsilon=1e-3)
    assert solve_bnb(model).status == "infeasible"


def test_membership_gadget_matches_direct_evaluation():
    rng = random.Random(113)
    hmat = np.vstack([np.eye(2), -np.eye(2)])
    hvec = np.array([1.0, 1.0, 0.0, 0.0])
    agree = 0
    for _ in range(1000):
        point = [rng.uniform(-2, 2), rng.uniform(-2, 2)]
        margins = np.abs(hmat @ np.array(point) - hvec)
        if margins.min() <= 1e-5:  # stay clear of the excluded shell
            continue
        expected = bool(np.all(hmat @ np.array(point) <= hvec))
        model, z = membership_model(point)
        sol = solve_bnb(model)
        assert sol.feasible
        assert bool(sol[z]) == expected, f"{point}"
        agree += 1
    assert agree > 900


# ---------------------------------------------------------------------------
# Whole problems
# ---------------------------------------------------------------------------

def test_two_integrators_meet_in_target():
    sys_ = integrators(n_robots=2)
    mu = OEventually(Tcp(IAtom("A"), 2))
    problem = build_cont_problem(sys_, mu, h=5)
    sol = solve_bnb(problem.model)
    assert sol.feasible
    trajs = extract_continuous(problem, sol)
    inside = [
        {t for t, w in enumerate(traj.states) if 0.9 - 1e-9 <= w[0] <= 1.1 + 1e-9}
        for traj in trajs]
    assert inside[0] & inside[1], "no simultaneous visit"
    lassos = [Lasso(membership_trace(sys_, traj), traj.loop_start)
              for traj in trajs]
    assert eval_outer(lassos, CollectiveExecution.synchronous(2), 0, mu)


def test_threshold_above_fleet_size_infeasible():
    sys_ = integrators(n_robots=2)
    problem = build_cont_problem(sys_, OEventually(Tcp(IAtom("A"), 3)), h=4)
    assert solve_bnb(problem.model).status == "infeasible"


def test_replay_matches_encoded_states():
    sys_ = integrators(n_robots=2)
    problem = build_cont_problem(sys_, OEventually(Tcp(IAtom("A"), 2)), h=4)
    sol = solve_bnb(problem.model)
    assert sol.feasible
    trajs = extract_continuous(problem, sol)
    for n, traj in enumerate(trajs):
        replayed = traj.replay(sys_.dynamics[n])
        for t in range(problem.h + 1):
            expr = problem.layout.state_exprs[(n, t)][0]
            encoded = expr.const + sum(c * sol[v] for v, c in expr.coeffs.items())
            assert abs(replayed[t][0] - encoded) <= 1e-6
            assert abs(traj.states[t][0] - encoded) <= 1e-6


def test_instantaneous_visits_fail_under_asynchrony():
    # visiting both regions within h = 2 leaves no time to dwell anywhere
    # for two consecutive steps, which the one-step drift demands
    sys_ = integrators(n_robots=2)
    mu = OAnd((OEventually(Tcp(IAtom("A"), 2)), OEventually(Tcp(IAtom("C"), 2))))
    sync = build_cont_problem(sys_, mu, h=2, tau=0)
    assert solve_bnb(sync.model).feasible
    robust = build_cont_problem(sys_, mu, h=2, tau=1)
    assert solve_bnb(robust.model).status == "infeasible"
    # with room to dwell the robust variant becomes feasible again
    relaxed = build_cont_problem(sys_, mu, h=4, tau=1)
    sol = solve_bnb(relaxed.model)
    assert sol.feasible
    trajs = extract_continuous(relaxed, sol)
    lassos = [Lasso(membership_trace(sys_, traj), traj.loop_start)
              for traj in trajs]
    from cltlsynth.oracle import check_robust
    assert not check_robust(lassos, mu, tau=1, max_T=6).falsified
