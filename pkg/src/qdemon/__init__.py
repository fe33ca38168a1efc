"""Quantum-trajectory simulator of a qubit Maxwell's demon with measurement and feedback."""
from .core import (EnsembleSummary, InverseTemperature, JumpEvent, Outcome, PhysicalParams, PureState, ShotRecord,
                   beta_from_occupancy, canonical_occupancy, work_from_outcomes)
from .measurement import FeedbackErrorModel, ReadoutWindow, feedback_readout, projective_readout
from .trajectory import EvolutionConfig, apply_pi_pulse, evolve, inject_fault, mcwf_step, prepare_initial
from .protocol import ConfigurationError, ProtocolTimeline, ShotTable, run_ensemble, run_shot_A, run_shot_B
from .master_eq import DensityMatrix2, exact_outcome_distribution, free_decay_population, relax
from .thermo import (DivergenceError, ensemble_summary, exact_summary, info_records, lambda_fb_theory,
                     qc_mutual_info, second_law_check, shannon_info)

__version__ = "0.1.0"
