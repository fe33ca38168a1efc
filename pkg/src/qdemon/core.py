"""Domain types shared across the simulator.

Unit system used everywhere inside the package:

* energies in units of hbar*omega_q, so E(g) = 0 and E(e) = 1;
* times in microseconds, rates in 1/us;
* temperatures in kelvin, converted to the dimensionless
  ``beta_eps = hbar*omega_q / (k_B T)`` through the configured qubit frequency.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from enum import IntEnum

import numpy as np
from scipy.constants import hbar, k as k_B
from scipy.special import expit

NORM_TOL = 1e-9

#: omega_q / 2pi of the device, in GHz.
DEFAULT_QUBIT_GHZ = 6.6296
DEFAULT_T1_US = 24.0
DEFAULT_BATH_K = 0.16


class Outcome(IntEnum):
    G = 0
    E = 1

    @property
    def label(self) -> str:
        return "g" if self is Outcome.G else "e"

    @property
    def energy(self) -> int:
        """Level energy in units of hbar*omega_q."""
        return int(self)

    def flipped(self) -> "Outcome":
        return Outcome(1 - int(self))

    @classmethod
    def parse(cls, value) -> "Outcome":
        if isinstance(value, Outcome):
            return value
        if isinstance(value, str):
            key = value.strip().lower()
            if key in ("g", "0"):
                return cls.G
            if key in ("e", "1"):
                return cls.E
            raise ValueError(f"unknown outcome label {value!r}")
        return cls(int(value))


@dataclass(frozen=True)
class PureState:
    """Qubit wave function c_g|g> + c_e|e>."""

    c_g: complex
    c_e: complex

    def __post_init__(self):
        object.__setattr__(self, "c_g", complex(self.c_g))
        object.__setattr__(self, "c_e", complex(self.c_e))
        if not (np.isfinite(self.c_g) and np.isfinite(self.c_e)):
            raise ValueError("amplitudes must be finite")

    @classmethod
    def ground(cls) -> "PureState":
        return cls(1.0, 0.0)

    @classmethod
    def excited(cls) -> "PureState":
        return cls(0.0, 1.0)

    @property
    def p_g(self) -> float:
        return abs(self.c_g) ** 2

    @property
    def p_e(self) -> float:
        return abs(self.c_e) ** 2

    @property
    def norm(self) -> float:
        return math.sqrt(self.p_g + self.p_e)

    def is_normalized(self, tol: float = NORM_TOL) -> bool:
        return abs(self.p_g + self.p_e - 1.0) <= tol

    def normalized(self) -> "PureState":
        n = self.norm
        if n == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return PureState(self.c_g / n, self.c_e / n)

    def sigma_z(self) -> float:
        """<sigma_z> with sigma_z|e> = +|e>."""
        return self.p_e - self.p_g

    def fidelity(self, other: "PureState") -> float:
        overlap = self.c_g.conjugate() * other.c_g + self.c_e.conjugate() * other.c_e
        return abs(overlap) ** 2


def hw_over_kb(omega_q: float) -> float:
    """hbar*omega_q / k_B in kelvin."""
    return hbar * omega_q / k_B


@dataclass(frozen=True)
class InverseTemperature:
    """Dimensionless inverse temperature beta*hbar*omega_q (may be negative or infinite)."""

    beta_eps: float

    def __post_init__(self):
        if math.isnan(self.beta_eps):
            raise ValueError("beta_eps is NaN")
        object.__setattr__(self, "beta_eps", float(self.beta_eps))

    @classmethod
    def from_temperature(cls, temperature: float, omega_q: float) -> "InverseTemperature":
        if temperature == 0:
            return cls(math.inf)
        return cls(hw_over_kb(omega_q) / temperature)

    @classmethod
    def from_inverse_temperature(cls, inv_t: float, omega_q: float) -> "InverseTemperature":
        """From 1/T in 1/K; 0 is infinite temperature, negative values are inverted populations."""
        return cls(hw_over_kb(omega_q) * inv_t)

    def temperature(self, omega_q: float) -> float:
        if self.beta_eps == 0:
            return math.inf
        return hw_over_kb(omega_q) / self.beta_eps

    @property
    def partition_function(self) -> float:
        return 1.0 + math.exp(-self.beta_eps)

    @property
    def occupancy(self) -> tuple[float, float]:
        return canonical_occupancy(self)


def canonical_occupancy(beta: InverseTemperature | float) -> tuple[float, float]:
    """Canonical (p_g, p_e) with E(g)=0, E(e)=hbar*omega_q; ``p_g + p_e == 1`` exactly."""
    eps = beta.beta_eps if isinstance(beta, InverseTemperature) else float(beta)
    # evaluate the smaller population directly, the larger one as its complement
    if eps >= 0:
        p_e = float(expit(-eps))
        return 1.0 - p_e, p_e
    p_g = float(expit(eps))
    return p_g, 1.0 - p_g


def beta_from_occupancy(p_g: float, p_e: float) -> InverseTemperature:
    """Invert :func:`canonical_occupancy`: ``beta_eps = ln(p_g / p_e)``."""
    if not (0.0 <= p_g <= 1.0 and 0.0 <= p_e <= 1.0):
        raise ValueError(f"probabilities out of range: p_g={p_g}, p_e={p_e}")
    if p_g == 0.0 and p_e == 0.0:
        raise ValueError("both occupancies are zero")
    if abs(p_g + p_e - 1.0) > 1e-9:
        raise ValueError(f"occupancies must sum to 1, got {p_g + p_e}")
    if p_e == 0.0:
        return InverseTemperature(math.inf)
    if p_g == 0.0:
        return InverseTemperature(-math.inf)
    return InverseTemperature(math.log(p_g) - math.log(p_e))


@dataclass(frozen=True)
class PhysicalParams:
    """Qubit and bath parameters.

    ``omega_q`` is an angular frequency in rad/s, ``t1`` is in microseconds
    (``math.inf`` disables relaxation), ``temp_bath`` in kelvin. The up/down
    rates follow from T1 and detailed balance at the bath temperature.
    """

    omega_q: float = 2 * math.pi * DEFAULT_QUBIT_GHZ * 1e9
    t1: float = DEFAULT_T1_US
    temp_bath: float = DEFAULT_BATH_K

    def __post_init__(self):
        if not self.omega_q > 0:
            raise ValueError("omega_q must be positive")
        if not self.t1 > 0:
            raise ValueError("t1 must be positive")
        if not self.temp_bath >= 0:
            raise ValueError("bath temperature must be non-negative")

    @classmethod
    def from_ghz(cls, freq_ghz: float = DEFAULT_QUBIT_GHZ, t1_us: float | None = DEFAULT_T1_US,
                 temp_bath: float = DEFAULT_BATH_K) -> "PhysicalParams":
        return cls(2 * math.pi * freq_ghz * 1e9, math.inf if t1_us is None else t1_us, temp_bath)

    @property
    def relaxing(self) -> bool:
        return math.isfinite(self.t1)

    @property
    def bath_beta(self) -> InverseTemperature:
        return InverseTemperature.from_temperature(self.temp_bath, self.omega_q)

    @property
    def gamma_total(self) -> float:
        return 1.0 / self.t1

    @property
    def gamma_down(self) -> float:
        return self.gamma_total * canonical_occupancy(self.bath_beta)[0]

    @property
    def gamma_up(self) -> float:
        return self.gamma_total * canonical_occupancy(self.bath_beta)[1]

    @property
    def p_stationary(self) -> float:
        """Steady-state excited population Gamma_up / (Gamma_up + Gamma_down)."""
        return canonical_occupancy(self.bath_beta)[1]


@dataclass(frozen=True)
class JumpEvent:
    time: float  # us, measured from the protocol origin
    kind: str  # "up" or "down"

    def __post_init__(self):
        if self.kind not in ("up", "down"):
            raise ValueError(f"unknown jump kind {self.kind!r}")


@dataclass(frozen=True)
class ShotRecord:
    """One trajectory: TPM outcomes x, z, optional feedback/verification outcomes k, y."""

    x: Outcome
    z: Outcome
    k: Outcome | None = None
    y: Outcome | None = None
    work: int | None = None
    jumps: tuple[JumpEvent, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "x", Outcome.parse(self.x))
        object.__setattr__(self, "z", Outcome.parse(self.z))
        if (self.k is None) != (self.y is None):
            raise ValueError("k and y must be both present or both absent")
        if self.k is not None:
            object.__setattr__(self, "k", Outcome.parse(self.k))
            object.__setattr__(self, "y", Outcome.parse(self.y))
        expected = work_from_outcomes(self.x, self.z)
        if self.work is None:
            object.__setattr__(self, "work", expected)
        elif self.work != expected:
            raise ValueError(f"work {self.work} inconsistent with x={self.x.label}, z={self.z.label}")
        object.__setattr__(self, "jumps", tuple(self.jumps))

    @property
    def has_feedback_readout(self) -> bool:
        return self.k is not None


def work_from_outcomes(x: Outcome, z: Outcome) -> int:
    """Extracted work W = E(x) - E(z) in units of hbar*omega_q."""
    return Outcome.parse(x).energy - Outcome.parse(z).energy


@dataclass
class EnsembleSummary:
    n_shots: int
    beta_eps: float
    avg_exp_sigma_ish: float
    avg_exp_sigma_iqc: float
    avg_exp_betaW: float
    mean_iqc: float
    mean_ish: float
    mean_betaW: float
    lambda_fb_theory: float
    eta: float
    second_law_gap: float
    eps_fb: float
    stderr_avg_exp_sigma_ish: float = math.nan
    stderr_avg_exp_sigma_iqc: float = math.nan
    stderr_avg_exp_betaW: float = math.nan
    stderr_mean_iqc: float = math.nan
    stderr_mean_ish: float = math.nan
    stderr_mean_betaW: float = math.nan
    stderr_eta: float = math.nan
    stderr_second_law_gap: float = math.nan
    n_excluded: int = 0
    lambda_fb_cells: float = math.nan
    flags: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not (0.0 <= self.lambda_fb_theory <= 1.0):
            raise ValueError(f"lambda_fb out of [0,1]: {self.lambda_fb_theory}")

    def to_dict(self) -> dict:
        return asdict(self)
