"""Prefix-suffix trajectories extracted from solutions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .system import TransitionSystem


@dataclass(frozen=True)
class LassoTrajectory:
    """Finite word s_0 .. s_h with s_h = s_{loop_start}, denoting the
    infinite trajectory s_0 .. s_{l-1} (s_l .. s_{h-1})^omega."""

    states: tuple[int, ...]
    loop_start: int

    def __post_init__(self):
        h = len(self.states) - 1
        if h < 1:
            raise ValueError("a lasso needs at least two positions")
        if not (0 <= self.loop_start <= h - 1):
            raise ValueError("loop start must lie in [0, h-1]")
        if self.states[h] != self.states[self.loop_start]:
            raise ValueError("lasso must close: states[h] != states[loop_start]")

    @property
    def horizon(self) -> int:
        return len(self.states) - 1

    @property
    def period(self) -> int:
        return self.horizon - self.loop_start

    def position(self, k: int) -> int:
        """Canonical index of local counter value k (wraps through the loop)."""
        h = self.horizon
        if k < h:
            return k
        return self.loop_start + (k - self.loop_start) % self.period

    def state_at(self, k: int) -> int:
        return self.states[self.position(k)]

    def validate_against(self, ts: TransitionSystem) -> list[str]:
        out = []
        for s in self.states:
            if not (0 <= s < ts.n_states):
                out.append(f"state index {s} out of range")
                return out
        for t in range(self.horizon):
            if (self.states[t], self.states[t + 1]) not in ts.transitions:
                out.append(f"invalid transition at step {t}: "
                           f"{ts.states[self.states[t]]} -> {ts.states[self.states[t + 1]]}")
        return out


@dataclass(frozen=True)
class ContinuousTrajectory:
    """Input sequence and the states it induces under affine dynamics."""

    inputs: tuple[tuple[float, ...], ...]   # length h, each of dimension d_u
    states: tuple[tuple[float, ...], ...]   # length h+1, each of dimension d_w
    loop_start: int

    @property
    def horizon(self) -> int:
        return len(self.states) - 1

    def replay(self, dynamics) -> np.ndarray:
        """Recompute states from inputs under (F, G, c); for cross-checking."""
        f, g, c = dynamics
        w = np.asarray(self.states[0], dtype=float)
        out = [w]
        for u in self.inputs:
            w = f @ w + g @ np.asarray(u, dtype=float) + c
            out.append(w)
        return np.array(out)
