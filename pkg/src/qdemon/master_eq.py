"""Density-matrix oracle for the feedback protocols.

Populations are propagated with the closed-form solution of the two-level
relaxation/excitation master equation. A readout window is handled exactly by
dynamic programming over (level, number of samples spent in |e>), which gives
the joint law of the reported label (sign of the time-averaged <sigma_z>) and
the level at the end of the window. Enumerating all outcome tuples then yields
exact outcome probabilities to compare Monte-Carlo ensembles against.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import Outcome, PhysicalParams
from .measurement import FeedbackErrorModel
from .protocol import READOUT_KINDS, ProtocolTimeline
from .trajectory import DEFAULT_DT, n_steps

G, E = 0, 1


@dataclass(frozen=True)
class DensityMatrix2:
    """Qubit density matrix in the energy basis: populations and the g-e coherence."""

    p_e: float
    coherence: complex = 0j

    def __post_init__(self):
        if not -1e-12 <= self.p_e <= 1 + 1e-12:
            raise ValueError(f"p_e={self.p_e} outside [0, 1]")
        if abs(self.coherence) ** 2 > self.p_e * (1 - self.p_e) + 1e-12:
            raise ValueError("density matrix is not positive semidefinite")

    @property
    def p_g(self) -> float:
        return 1.0 - self.p_e

    def matrix(self) -> np.ndarray:
        return np.array([[self.p_g, self.coherence], [np.conj(self.coherence), self.p_e]])

    @classmethod
    def from_populations(cls, p_e: float) -> "DensityMatrix2":
        return cls(p_e)


def relax(rho: DensityMatrix2, duration: float, params: PhysicalParams) -> DensityMatrix2:
    """p_e(t) = p_inf + (p_e(0) - p_inf) exp(-t/T1); coherence decays at 1/(2 T1)."""
    if duration < 0:
        raise ValueError("duration must be non-negative")
    if duration == 0 or not params.relaxing:
        return rho
    decay = math.exp(-duration / params.t1)
    p_inf = params.p_stationary
    p_e = p_inf + (rho.p_e - p_inf) * decay
    return DensityMatrix2(min(max(p_e, 0.0), 1.0), rho.coherence * math.sqrt(decay))


def transition_matrix(duration: float, params: PhysicalParams) -> np.ndarray:
    """P[s, s'] = probability of level s' after ``duration`` starting from level s."""
    out = np.empty((2, 2))
    for s in (G, E):
        p_e = relax(DensityMatrix2(float(s)), duration, params).p_e
        out[s] = (1.0 - p_e, p_e)
    return out


@lru_cache(maxsize=256)
def _window_kernel(n: int, h: float, t1: float, p_inf: float) -> np.ndarray:
    if n == 0:
        kern = np.zeros((2, 2, 2))
        kern[G, G, G] = kern[E, E, E] = 1.0
        return kern
    if math.isinf(t1):
        step = np.eye(2)
    else:
        decay = math.exp(-h / t1)
        step = np.array([[1 - p_inf * (1 - decay), p_inf * (1 - decay)],
                         [(1 - p_inf) * (1 - decay), p_inf + (1 - p_inf) * decay]])
    kern = np.zeros((2, 2, 2))
    for s0 in (G, E):
        # f[s, c]: probability of level s with c of the samples so far in |e>
        f = np.zeros((2, n + 1))
        f[s0, 0] = 1.0
        for _ in range(n):
            to_g = f[G] * step[G, G] + f[E] * step[E, G]
            to_e = f[G] * step[G, E] + f[E] * step[E, E]
            f = np.zeros_like(f)
            f[G] = to_g
            f[E, 1:] = to_e[:-1]
        counts = np.arange(n + 1)
        excited_label = counts > 0.5 * n
        for s1 in (G, E):
            kern[s0, E, s1] = f[s1, excited_label].sum()
            kern[s0, G, s1] = f[s1, ~excited_label].sum()
    return kern


def readout_kernel(width: float, params: PhysicalParams, dt: float = DEFAULT_DT) -> np.ndarray:
    """K[s_start, label, s_end] for a window of ``width`` us sampled every ``dt``.

    ``s_start`` is the level right after the projection at the window start.
    """
    n = n_steps(width, dt)
    h = width / n if n else 0.0
    return _window_kernel(n, h, params.t1, params.p_stationary if params.relaxing else 0.0)


def _flip_matrix(errors: FeedbackErrorModel) -> np.ndarray:
    """F[true, reported]."""
    a, b = errors.eps_e_given_g, errors.eps_g_given_e
    return np.array([[1 - a, a], [b, 1 - b]])


def exact_outcome_distribution(protocol: str, p_e_init: float, params: PhysicalParams,
                               errors: FeedbackErrorModel | None = None,
                               timeline: ProtocolTimeline | None = None,
                               dt: float = DEFAULT_DT) -> dict[tuple, float]:
    """Exact probabilities of every outcome tuple (x, k, y, z).

    Protocol A keys are ``(x, None, None, z)``; protocol B keys hold four
    :class:`Outcome` values. Probabilities sum to one.
    """
    protocol = protocol.upper()
    errors = errors or FeedbackErrorModel()
    timeline = timeline or ProtocolTimeline.default(protocol)
    if timeline.protocol != protocol:
        raise ValueError(f"timeline describes protocol {timeline.protocol}, expected {protocol}")
    flip = _flip_matrix(errors)

    rho = None  # density matrix before the first projection
    # branches: label tuple -> population vector over levels after the first projection
    branches: dict[tuple, np.ndarray] | None = None
    started = False
    t = 0.0

    def propagate(duration):
        nonlocal rho, branches
        if branches is None:
            rho = relax(rho, duration, params)
        else:
            tm = transition_matrix(duration, params)
            branches = {key: vec @ tm for key, vec in branches.items()}

    for ev in timeline.events:
        if ev.kind == "excite":
            rho = DensityMatrix2(p_e_init, math.sqrt(p_e_init * (1 - p_e_init)))
            started, t = True, ev.end
            continue
        if not started or ev.kind == "init_readout":
            continue
        propagate(ev.start - t)
        if ev.kind in READOUT_KINDS:
            kern = readout_kernel(ev.duration, params, dt)
            if branches is None:
                projected = np.array([rho.p_g, rho.p_e])
                branches = {(): projected}
            new = {}
            for key, vec in branches.items():
                for label in (G, E):
                    new[key + ((ev.kind, label),)] = vec @ kern[:, label, :]
            branches = new
            if ev.kind == "readout_k":
                new = {}
                for key, vec in branches.items():
                    true_k = key[-1][1]
                    for rep in (G, E):
                        new[key + (("k", rep),)] = vec * flip[true_k, rep]
                branches = new
        elif ev.kind == "feedback":
            new = {}
            for key, vec in branches.items():
                labels = dict(key)
                if "k" in labels:
                    decisions = ((labels["k"], 1.0),)
                else:
                    x = labels["readout_x"]
                    decisions = ((G, flip[x, G]), (E, flip[x, E]))
                for d, w in decisions:
                    out = vec[::-1] if d == E else vec
                    dkey = key + (("decision", d),)
                    new[dkey] = new.get(dkey, 0.0) + w * out
            branches = new
            propagate(ev.duration)
        else:
            propagate(ev.duration)
        t = ev.end

    table: dict[tuple, float] = {}
    for key, vec in branches.items():
        labels = dict(key)
        x = Outcome(labels["readout_x"])
        z = Outcome(labels["readout_z"])
        if protocol == "B":
            out = (x, Outcome(labels["k"]), Outcome(labels["readout_y"]), z)
        else:
            out = (x, None, None, z)
        table[out] = table.get(out, 0.0) + float(vec.sum())
    return table


def distribution_array(table: dict[tuple, float]) -> np.ndarray:
    """Embed an outcome table into a (2, 2, 2, 2) array over (x, k, y, z); protocol A uses k = y = x."""
    arr = np.zeros((2, 2, 2, 2))
    for (x, k, y, z), p in table.items():
        k = x if k is None else k
        y = x if y is None else y
        arr[int(x), int(k), int(y), int(z)] += p
    return arr


def free_decay_population(p_e0: float, t: float, params: PhysicalParams) -> float:
    return relax(DensityMatrix2(p_e0), t, params).p_e
