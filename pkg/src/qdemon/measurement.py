"""QND projective readout, the error-prone feedback readout and the conditional pi-pulse.

A projective readout collapses the state onto {|g>, |e>} at the start of the
window (Born rule) and then lets the collapsed state relax through the window.
The reported label is the sign of the time-averaged <sigma_z> over the window,
so a jump in the first half of the window flips the report.

The variable-strength feedback readout is a classical noisy label: the outcome
of the window is inverted with the configured conditional error probabilities.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import JumpEvent, Outcome, PhysicalParams, PureState
from .trajectory import (
    DEFAULT_DT,
    EvolutionConfig,
    _abs2,
    _check_normalized,
    apply_pi_pulse,
    evolve_batch,
    jump_probabilities,
    n_steps,
)

G, E = int(Outcome.G), int(Outcome.E)


@dataclass(frozen=True)
class ReadoutWindow:
    width: float = 0.5  # us
    dt: float = DEFAULT_DT

    def __post_init__(self):
        if not self.width >= 0:
            raise ValueError("window width must be non-negative")
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    @property
    def steps(self) -> int:
        return n_steps(self.width, self.dt)

    @property
    def step_length(self) -> float:
        n = self.steps
        return self.width / n if n else 0.0


@dataclass(frozen=True)
class FeedbackErrorModel:
    """Conditional flip probabilities eps(k=e|y=g) and eps(k=g|y=e)."""

    eps_e_given_g: float = 0.0
    eps_g_given_e: float = 0.0

    def __post_init__(self):
        for name in ("eps_e_given_g", "eps_g_given_e"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")

    @classmethod
    def symmetric(cls, eps: float) -> "FeedbackErrorModel":
        return cls(eps, eps)

    @property
    def is_perfect(self) -> bool:
        return self.eps_e_given_g == 0.0 and self.eps_g_given_e == 0.0

    def flip_probability(self, true_outcome: Outcome) -> float:
        return self.eps_e_given_g if Outcome.parse(true_outcome) is Outcome.G else self.eps_g_given_e

    def joint(self, p_y_g: float) -> tuple[float, float]:
        """Joint errors (eps(y=g,k=e), eps(y=e,k=g)) given p(y=g)."""
        return self.eps_e_given_g * p_y_g, self.eps_g_given_e * (1.0 - p_y_g)

    def eps_fb(self, p_y_g: float) -> float:
        a, b = self.joint(p_y_g)
        return a + b


def collapse_batch(cg: np.ndarray, ce: np.ndarray, u_born: np.ndarray) -> np.ndarray:
    """Projective measurement in the energy basis, in place; returns the labels."""
    labels = (u_born < _abs2(ce)).astype(np.int8)
    cg[:] = 1.0 - labels
    ce[:] = labels
    return labels


def readout_batch(cg, ce, u_born, uniforms, a_down: float, a_up: float, n: int):
    """Collapse then relax through an ``n``-step window; label = sign of mean <sigma_z>."""
    collapsed = collapse_batch(cg, ce, u_born)
    if n == 0:
        return collapsed, []
    pe_sum, jumps = evolve_batch(cg, ce, uniforms, a_down, a_up, n, track_pe=True)
    # mean sigma_z > 0  <=>  mean p_e > 1/2
    labels = (pe_sum > 0.5 * n).astype(np.int8)
    return labels, jumps


def flip_batch(labels: np.ndarray, u: np.ndarray, errors: FeedbackErrorModel) -> np.ndarray:
    p_flip = np.where(labels == G, errors.eps_e_given_g, errors.eps_g_given_e)
    return np.where(u < p_flip, 1 - labels, labels).astype(np.int8)


def projective_readout(state: PureState, window: ReadoutWindow, params: PhysicalParams,
                       rng: np.random.Generator, t0: float = 0.0) -> tuple[Outcome, PureState, list[JumpEvent]]:
    """QND readout starting at ``t0``; returns (reported outcome, post-window state, jumps)."""
    _check_normalized(state)
    n = window.steps
    EvolutionConfig(window.dt).check(params)
    a_down, a_up = jump_probabilities(params, window.step_length) if n else (0.0, 0.0)
    cg = np.array([state.c_g])
    ce = np.array([state.c_e])
    u_born = np.array([rng.random()])
    uniforms = rng.random((1, n)) if n and (a_down or a_up) else None
    labels, raw = readout_batch(cg, ce, u_born, uniforms, a_down, a_up, n)
    h = window.step_length
    jumps = [JumpEvent(t0 + (s + 1) * h, "down" if d[0] else "up") for s, _, d in raw]
    return Outcome(int(labels[0])), PureState(cg[0], ce[0]), jumps


def feedback_readout(true_outcome: Outcome, errors: FeedbackErrorModel, rng: np.random.Generator) -> Outcome:
    """Report ``true_outcome`` through the classical flip channel."""
    true_outcome = Outcome.parse(true_outcome)
    if rng.random() < errors.flip_probability(true_outcome):
        return true_outcome.flipped()
    return true_outcome


def feedback_branch(k: Outcome, state: PureState) -> PureState:
    """Apply the pi-pulse iff the feedback outcome reads excited."""
    return apply_pi_pulse(state) if Outcome.parse(k) is Outcome.E else state


def repeated_readout_counts(state: PureState, window: ReadoutWindow, gap: float, params: PhysicalParams,
                            n_shots: int, master_seed: int = 0) -> np.ndarray:
    """Two back-to-back readouts separated by ``gap`` us; returns counts[first, second].

    Each shot uses its own substream, so the table does not depend on batching.
    """
    from .rng import shot_rngs

    _check_normalized(state)
    EvolutionConfig(window.dt).check(params)
    n = window.steps
    a_down, a_up = jump_probabilities(params, window.step_length) if n else (0.0, 0.0)
    m = n_steps(gap, window.dt)
    g_down, g_up = jump_probabilities(params, gap / m) if m else (0.0, 0.0)
    gens = shot_rngs(master_seed, 0, n_shots)
    relaxing = params.relaxing

    def draw(k):
        if not (k and relaxing):
            return None
        out = np.empty((n_shots, k))
        for row, g in zip(out, gens):
            g.random(out=row)
        return out

    def born():
        return np.fromiter((g.random() for g in gens), dtype=float, count=n_shots)

    real = state.c_g.imag == 0 and state.c_e.imag == 0
    cg = np.full(n_shots, state.c_g.real if real else state.c_g)
    ce = np.full(n_shots, state.c_e.real if real else state.c_e)
    first, _ = readout_batch(cg, ce, born(), draw(n), a_down, a_up, n)
    evolve_batch(cg, ce, draw(m), g_down, g_up, m)
    second, _ = readout_batch(cg, ce, born(), draw(n), a_down, a_up, n)
    return np.bincount(first.astype(np.int64) * 2 + second, minlength=4).reshape(2, 2)
