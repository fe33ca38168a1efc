"""Monte-Carlo wave-function engine for a qubit with relaxation and excitation jumps.

The qubit is simulated in its rotating frame, so between pulses only the
anti-Hermitian part ``-i/2 * sum_k L_k^dag L_k`` of the effective Hamiltonian
acts, with ``L_0 = sqrt(Gamma_down) sigma_-`` and ``L_1 = sqrt(Gamma_up) sigma_+``.

The batch kernels operate in place on arrays of amplitudes (one entry per shot);
the scalar functions wrap a batch of one so both share the same update rule.
"""
from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from .core import JumpEvent, PhysicalParams, PureState, NORM_TOL

DEFAULT_DT = 1e-3  # 1 ns in us
MAX_JUMP_PROBABILITY = 0.1

_active_faults: set[str] = set()
KNOWN_FAULTS = ("jump_normalization",)


@contextmanager
def inject_fault(name: str):
    """Negative-control hook used by ``qdemon validate --inject-fault``."""
    if name not in KNOWN_FAULTS:
        raise ValueError(f"unknown fault {name!r}; known: {KNOWN_FAULTS}")
    _active_faults.add(name)
    try:
        yield
    finally:
        _active_faults.discard(name)


@dataclass(frozen=True)
class EvolutionConfig:
    """Integration settings. ``dt`` in us; ``dt <= t1 * max_dt_fraction`` is enforced."""

    dt: float = DEFAULT_DT
    max_dt_fraction: float = 1e-3

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    def check(self, params: PhysicalParams) -> None:
        if params.relaxing and self.dt > params.t1 * self.max_dt_fraction:
            raise ValueError(
                f"dt={self.dt} us exceeds T1*{self.max_dt_fraction} = {params.t1 * self.max_dt_fraction} us"
            )
        jump_probabilities(params, self.dt)


def n_steps(duration: float, dt: float) -> int:
    """Number of steps ceil(duration/dt) covering ``duration``."""
    if duration < 0:
        raise ValueError("duration must be non-negative")
    return max(0, math.ceil(duration / dt - 1e-9))


def jump_probabilities(params: PhysicalParams, dt: float) -> tuple[float, float]:
    """Per-step jump weights (Gamma_down*dt, Gamma_up*dt) for a fully occupied level."""
    if not params.relaxing:
        return 0.0, 0.0
    a_down, a_up = params.gamma_down * dt, params.gamma_up * dt
    if a_down + a_up >= MAX_JUMP_PROBABILITY:
        raise ValueError(f"dt={dt} us too large: jump probability per step {a_down + a_up:.3g} >= 0.1")
    return a_down, a_up


def _abs2(c: np.ndarray) -> np.ndarray:
    if np.iscomplexobj(c):
        return c.real * c.real + c.imag * c.imag
    return c * c


def step_batch(cg: np.ndarray, ce: np.ndarray, u: np.ndarray, a_down: float, a_up: float,
               pg: np.ndarray | None = None, pe: np.ndarray | None = None):
    """Advance every shot by one step, in place.

    ``u`` holds one uniform draw per shot. A jump happens when ``u < dp``; the
    channel is down when ``u < dp_0``, which selects L_k with probability dp_k/dp.
    Returns ``(indices of jumping shots, boolean mask of down-jumps among them)``.
    """
    if pg is None:
        pg = _abs2(cg)
    if pe is None:
        pe = _abs2(ce)
    dp0 = a_down * pe
    dp = dp0 + a_up * pg
    idx = np.flatnonzero(u < dp)
    if idx.size:
        cg_j, ce_j = cg[idx], ce[idx]
        down = u[idx] < dp0[idx]
    # no-jump branch: (1 - i H dt) with H = -i/2 sum L^dag L, then renormalize
    fg = 1.0 - 0.5 * a_up
    fe = 1.0 - 0.5 * a_down
    inv = 1.0 / np.sqrt(pg * (fg * fg) + pe * (fe * fe))
    cg *= fg * inv
    ce *= fe * inv
    if idx.size:
        with np.errstate(divide="ignore", invalid="ignore"):
            if "jump_normalization" in _active_faults:
                new_g = np.where(down, ce_j * math.sqrt(a_down), 0.0)
                new_e = np.where(down, 0.0, cg_j * math.sqrt(a_up))
            else:
                new_g = np.where(down, ce_j / np.abs(ce_j), 0.0)
                new_e = np.where(down, 0.0, cg_j / np.abs(cg_j))
        cg[idx] = new_g
        ce[idx] = new_e
        return idx, down
    return idx, np.zeros(0, dtype=bool)


def evolve_batch(cg: np.ndarray, ce: np.ndarray, uniforms: np.ndarray | None, a_down: float, a_up: float,
                 n: int, track_pe: bool = False):
    """Run ``n`` steps on every shot in place.

    ``uniforms`` has shape ``(batch, n)``; it may be ``None`` only when both rates
    vanish, in which case every step is the identity. Returns
    ``(pe_sum, jumps)`` where ``pe_sum`` is the sum of excited populations sampled
    after each step (or None) and ``jumps`` is a list of ``(step, shot_idx, down_mask)``.
    """
    jumps = []
    if n == 0:
        return (np.zeros(cg.shape) if track_pe else None), jumps
    if a_down == 0.0 and a_up == 0.0:
        return (n * _abs2(ce) if track_pe else None), jumps
    if uniforms is None or uniforms.shape != (cg.shape[0], n):
        raise ValueError("need one uniform per shot and step")
    cols = np.ascontiguousarray(uniforms.T)
    acc = np.zeros(cg.shape) if track_pe else None
    for s in range(n):
        pg = _abs2(cg)
        pe = _abs2(ce)
        if track_pe and s:
            acc += pe
        idx, down = step_batch(cg, ce, cols[s], a_down, a_up, pg, pe)
        if idx.size:
            jumps.append((s, idx, down))
    if track_pe:
        acc += _abs2(ce)
    return acc, jumps


def _check_normalized(state: PureState) -> None:
    if not state.is_normalized(NORM_TOL):
        raise ValueError(f"state not normalized: |psi|^2 = {state.p_g + state.p_e!r}")


def mcwf_step(state: PureState, params: PhysicalParams, dt: float, rng: np.random.Generator,
              t: float = 0.0) -> tuple[PureState, JumpEvent | None]:
    """One quantum-trajectory step of length ``dt`` (us) starting at time ``t``."""
    _check_normalized(state)
    a_down, a_up = jump_probabilities(params, dt)
    cg = np.array([state.c_g])
    ce = np.array([state.c_e])
    u = np.array([rng.random()])
    idx, down = step_batch(cg, ce, u, a_down, a_up)
    jump = None
    if idx.size:
        jump = JumpEvent(t + dt, "down" if down[0] else "up")
    return PureState(cg[0], ce[0]), jump


def evolve(state: PureState, duration: float, params: PhysicalParams, config: EvolutionConfig,
           rng: np.random.Generator, t0: float = 0.0) -> tuple[PureState, list[JumpEvent]]:
    """Evolve over ``duration`` us with ceil(duration/dt) equal steps."""
    _check_normalized(state)
    config.check(params)
    n = n_steps(duration, config.dt)
    if n == 0:
        return state, []
    h = duration / n
    a_down, a_up = jump_probabilities(params, h)
    cg = np.array([state.c_g])
    ce = np.array([state.c_e])
    uniforms = rng.random((1, n)) if (a_down or a_up) else None
    _, raw = evolve_batch(cg, ce, uniforms, a_down, a_up, n)
    jumps = [JumpEvent(t0 + (s + 1) * h, "down" if d[0] else "up") for s, _, d in raw]
    return PureState(cg[0], ce[0]), jumps


def apply_pi_pulse(state: PureState) -> PureState:
    """Instantaneous sigma_x: swaps the amplitudes."""
    return PureState(state.c_e, state.c_g)


def pi_pulse_batch(cg: np.ndarray, ce: np.ndarray, mask: np.ndarray) -> None:
    tmp = cg[mask]
    cg[mask] = ce[mask]
    ce[mask] = tmp


def prepare_initial(p_e_target: float) -> PureState:
    """cos(theta/2)|g> + sin(theta/2)|e> with sin^2(theta/2) = p_e_target."""
    if not 0.0 <= p_e_target <= 1.0:
        raise ValueError("p_e_target must lie in [0, 1]")
    return PureState(math.sqrt(1.0 - p_e_target), math.sqrt(p_e_target))
