"""Asynchrony-robust encoding.

A solution must satisfy the formula under every execution whose local
counters never drift apart by more than tau.  The encoding extends each
trajectory tau steps past the loop, replaces each per-robot satisfaction
variable by a windowed conjunction over tau+1 consecutive steps, and
strengthens the counting, disjunction and until encodings so that every
anchored interleaving of local times keeps the formula true.

With tau = 0 the whole pipeline reduces to the synchronous encoder and
produces the identical constraint set.
"""

from __future__ import annotations

import warnings
from typing import Optional

from .formula import (INext, IOr, ITrue, InnerFormula, ONext, ONot, OOr,
                      OTrue, OuterFormula, Tcp, iter_inner, iter_outer,
                      iter_tcps, normalize)
from .ilp import IlpModel, LinExpr, VarId
from .system import MultiRobotInstance
from .encoder_sync import (EncodedProblem, EncodingError, InnerEncoder, Layout,
                           OuterEncoder, _check_instance, build_sync_problem,
                           discrete_atom_backend, encode_collision,
                           encode_dynamics, encode_loop)


def extend_states(model: IlpModel, layout: Layout, h: int, tau: int) -> None:
    """One-hot state vectors for steps h+1 .. h+tau, pinned to their wrapped
    loop positions once the loop start is chosen."""
    if tau == 0:
        return
    for n in range(layout.n_robots):
        n_states = len(layout.state_vars[(n, 0)])
        for k in range(1, tau + 1):
            row = [model.add_binary(f"w_{n}_{h + k}_{i}", tag="robust", decision=True)
                   for i in range(n_states)]
            layout.state_vars[(n, h + k)] = row
            model.add_constraint(LinExpr.sum_of(row), "=", 1, tag="robust")
            for l, z in enumerate(layout.loop_vars):
                src = layout.state_vars[(n, layout.wrap_index(l, h + k))]
                for i in range(n_states):
                    model.add_constraint(
                        LinExpr({row[i]: 1, src[i]: -1, z: 1}), "<=", 1, tag="robust")
                    model.add_constraint(
                        LinExpr({row[i]: -1, src[i]: 1, z: 1}), "<=", 1, tag="robust")


class RobustOuterEncoder(OuterEncoder):
    """Outer encoding whose satisfaction variables certify the formula at
    *anchor* times: true no matter how local counters in [t, t+tau] are
    interleaved."""

    TAG = "robust"

    def __init__(self, model: IlpModel, layout: Layout, inner: InnerEncoder,
                 n_robots: int, tau: int, pool_tcp_disjunctions: bool = True):
        super().__init__(model, layout, inner, n_robots)
        self.tau = tau
        self.pool_tcp_disjunctions = pool_tcp_disjunctions

    # -- windowed per-robot satisfaction -----------------------------------

    def robust_var(self, phi: InnerFormula, n: int, t: int) -> VarId:
        """Conjunction of z[phi][n][t..t+tau]: robot n satisfies phi at
        every local time an anchored adversary could pick."""
        if self.tau == 0:
            return self.inner.var(phi, n, t)
        lay = self.layout
        key = (phi, n, t)
        if key not in lay.robust:
            window = [self.inner.var(phi, n, t + k) for k in range(self.tau + 1)]
            lay.robust[key] = self.model.bool_and(
                window, name=f"r{lay.fid(phi)}_n{n}_t{t}", tag="robust")
        return lay.robust[key]

    # -- counting propositions ------------------------------------------------

    def _tcp_row(self, tcp: Tcp) -> None:
        lay = self.layout
        model = self.model
        scope = self._tcp_scope(tcp)
        big_m = len(scope) + 1
        full_scope = len(scope) == self.n_robots
        for t in range(lay.h):
            if tcp.m == 0:
                self._set(tcp, t, model.constant(1))
                continue
            robust_sum = LinExpr.sum_of(self.robust_var(tcp.inner, n, t) for n in scope)
            if tcp.m == 1 and full_scope:
                # Either some robot holds phi through the whole window, or
                # every robot holds phi at exactly t: the anchoring robot's
                # local time is t, so one of them is caught satisfying phi.
                y_tilde = model.indicator_geq(
                    robust_sum, 1, big_m, name=f"yt{lay.fid(tcp)}_t{t}", tag="robust")
                plain_sum = LinExpr.sum_of(self.inner.var(tcp.inner, n, t) for n in scope)
                y_bar = model.indicator_geq(
                    plain_sum, len(scope), big_m, name=f"yb{lay.fid(tcp)}_t{t}",
                    tag="robust")
                lay.outer_extra[(tcp, t, "tilde")] = y_tilde
                lay.outer_extra[(tcp, t, "bar")] = y_bar
                y = model.bool_or([y_tilde, y_bar], name=f"y{lay.fid(tcp)}_t{t}",
                                  tag="robust")
            else:
                y = model.indicator_geq(robust_sum, tcp.m, big_m,
                                        name=f"y{lay.fid(tcp)}_t{t}", tag="robust")
            self._set(tcp, t, y)

    # -- disjunction -----------------------------------------------------------

    def _or_row(self, mu: OOr) -> None:
        lay = self.layout
        model = self.model
        for c in mu.children:
            self.ensure_row(c)
        pooled = [c for c in mu.children
                  if isinstance(c, Tcp) and c.group is None and c.m >= 1]
        use_pool = self.pool_tcp_disjunctions and self.tau > 0 and len(pooled) >= 2
        if use_pool:
            # A robot may contribute to different disjuncts at different
            # local times; pooling counts robots that hold the disjunction
            # of the inner tasks through the whole window.  If more than
            # sum(m_i - 1) such robots exist, some disjunct reaches its
            # threshold at every anchored interleaving.
            phi_or = IOr(tuple(c.inner for c in pooled))
            threshold = 1 + sum(c.m - 1 for c in pooled)
            for t in range(lay.h):
                pool_sum = LinExpr.sum_of(
                    self.robust_var(phi_or, n, t) for n in range(self.n_robots))
                pool_y = model.indicator_geq(
                    pool_sum, threshold, self.n_robots + 1,
                    name=f"yp{lay.fid(mu)}_t{t}", tag="robust")
                lay.outer_extra[(mu, t, "pool")] = pool_y
                v = model.bool_or(
                    [lay.outer[(c, t)] for c in mu.children] + [pool_y],
                    name=f"y{lay.fid(mu)}_t{t}", tag="robust")
                self._set(mu, t, v)
        else:
            super()._or_row(mu)

    # -- until ----------------------------------------------------------------

    def _until_guard(self, mu) -> OuterFormula:
        # While waiting for the right side, the *disjunction* of both sides
        # must hold robustly; under asynchrony the handover step may show a
        # mix of robots still on the left task and robots already on the
        # right one.
        if self.tau == 0:
            return mu.lhs
        return OOr((mu.lhs, mu.rhs))


def create_robust_encoders(model: IlpModel, layout: Layout,
                           inst: MultiRobotInstance, tau: int,
                           pool_tcp_disjunctions: bool = True
                           ) -> tuple[InnerEncoder, RobustOuterEncoder]:
    inner = InnerEncoder(model, layout, discrete_atom_backend(layout, inst),
                         allow_inner_next=False)
    layout.inner_encoder = inner
    outer = RobustOuterEncoder(model, layout, inner, inst.n_robots, tau,
                               pool_tcp_disjunctions)
    layout.outer_encoder = outer
    return inner, outer


def encode_robust_z(model: IlpModel, layout: Layout, phi: InnerFormula,
                    n: int) -> list[VarId]:
    """Row of windowed satisfaction variables r[phi][n][t] for t = 0..h-1."""
    outer = layout.outer_encoder
    if not isinstance(outer, RobustOuterEncoder):
        raise EncodingError("robust windows need a robust encoder")
    return [outer.robust_var(phi, n, t) for t in range(layout.h)]


def encode_robust_tcp(model: IlpModel, layout: Layout, tcp: Tcp, t: int) -> VarId:
    outer = layout.outer_encoder
    if not isinstance(outer, RobustOuterEncoder):
        raise EncodingError("robust counting needs a robust encoder")
    return outer.var(tcp, t)


def encode_robust_disjunction(model: IlpModel, layout: Layout, mu: OOr, t: int) -> VarId:
    outer = layout.outer_encoder
    if not isinstance(outer, RobustOuterEncoder):
        raise EncodingError("robust disjunction needs a robust encoder")
    return outer.var(mu, t)


def encode_robust_until_release(model: IlpModel, layout: Layout, mu, t: int) -> VarId:
    outer = layout.outer_encoder
    if not isinstance(outer, RobustOuterEncoder):
        raise EncodingError("robust until/release needs a robust encoder")
    return outer.var(mu, t)


def build_robust_problem(inst: MultiRobotInstance, mu: OuterFormula, h: int,
                         tau: int, collision: Optional[str] = None,
                         pool_tcp_disjunctions: bool = True) -> EncodedProblem:
    """Feasibility program whose solutions tolerate any counter drift up to
    ``tau``.  ``tau = 0`` delegates to the synchronous builder and yields the
    identical constraint set."""
    for tcp in iter_tcps(mu):
        if any(isinstance(node, INext) for node in iter_inner(tcp.inner)):
            raise EncodingError(
                "inner next is not robust to asynchrony: a single delayed "
                "robot can violate it")
    if tau == 0:
        return build_sync_problem(inst, mu, h, collision=collision)
    if any(isinstance(node, ONot) for node in iter_outer(mu)):
        warnings.warn("formula normalized to positive normal form for the "
                      "robust encoding")
    if collision is not None:
        inst = MultiRobotInstance(inst.systems, inst.initial_states, inst.groups,
                                  collision, inst.grid_shape)
    _check_instance(inst, mu)
    norm = normalize(mu, inst.n_robots, robust=True, groups=inst.groups)
    if any(isinstance(node, ONext) for node in iter_outer(norm)):
        warnings.warn(
            "outer next under asynchrony is encoded as a plain one-step "
            "shift of anchor times; interleavings inside the shifted window "
            "are not constrained beyond that")
    model = IlpModel("robust")
    layout = encode_dynamics(model, inst, h, tau=tau)
    encode_loop(model, layout, h)
    extend_states(model, layout, h, tau)
    encode_collision(model, layout, inst, h, tau=tau)
    inner, outer = create_robust_encoders(model, layout, inst, tau,
                                          pool_tcp_disjunctions)
    root = outer.var(norm, 0)
    model.add_constraint(LinExpr({root: 1}), "=", 1, tag="root")
    return EncodedProblem(model, layout, inst, norm, mu, h, tau, "cltlplus")
