"""Information-thermodynamic estimators.

Per shot with outcomes (x, k, y, z) and extracted work W = E(x) - E(z):

* stochastic Shannon information  I_Sh = -ln p(x)
* stochastic QC-mutual information I_QC = ln p(y|k) - ln p(x)
* entropy production sigma = -beta W (no free-energy change)

Probabilities are plug-in estimates from the same ensemble. Every ensemble
statistic depends on the shots only through the 16 cell counts over
(x, k, y, z), so estimators take a count (or probability) array of shape
``(..., 2, 2, 2, 2)``; protocol-A shots are embedded with k = y = x, which makes
I_QC coincide with I_Sh.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .core import EnsembleSummary, InverseTemperature, Outcome, canonical_occupancy
from .measurement import FeedbackErrorModel
from .protocol import ShotTable
from .rng import bootstrap_rng

MIN_CELL_COUNT = 10
DEFAULT_RESAMPLES = 1000

_X = np.arange(2).reshape(2, 1, 1, 1)
_K = np.arange(2).reshape(1, 2, 1, 1)
_Y = np.arange(2).reshape(1, 1, 2, 1)
_Z = np.arange(2).reshape(1, 1, 1, 2)
WORK = (_X - _Z) * np.ones((2, 2, 2, 2), dtype=int)


class DivergenceError(ArithmeticError):
    """Raised when an information quantity would be infinite."""


def shannon_info(x: Outcome, p_hat) -> float:
    """-ln p_hat(x); ``p_hat`` maps outcomes (or 0/1) to probabilities."""
    p = p_hat[int(Outcome.parse(x))]
    if p <= 0:
        raise DivergenceError(f"outcome {Outcome.parse(x).label} has zero estimated probability")
    return -math.log(p)


def qc_mutual_info(p_x: float, p_y_given_k: float) -> float:
    """ln p(y|k) - ln p(x) for the probabilities of the observed outcomes."""
    if p_x <= 0:
        raise DivergenceError("p(x) = 0")
    if p_y_given_k <= 0:
        raise DivergenceError("p(y|k) = 0: absolutely irreversible event")
    return math.log(p_y_given_k) - math.log(p_x)


def lambda_fb_theory(beta: InverseTemperature | float, errors: FeedbackErrorModel | None = None,
                     p_k=None, p_y=None, weights: str = "conditional") -> float:
    """Probability of absolutely irreversible time-reversed events.

    1 - lambda = p(k=g)[p_can(g)(1 - e_ge) + p_can(e) e_ge]
               + p(k=e)[p_can(e) e_eg + p_can(g)(1 - e_eg)]

    ``e_ge``/``e_eg`` are the weights of the erroneous branch of the feedback
    operation given k. With ``weights="conditional"`` (default) they are
    eps(k=e|y=g) and eps(k=g|y=e), which makes the expression exact for
    erroneous feedback after a projective record; ``"joint"`` uses
    eps(y=g,k=e) = eps(k=e|y=g) p(y=g) and eps(y=e,k=g) = eps(k=g|y=e) p(y=e).
    ``p_y`` defaults to the canonical occupancy; ``p_k`` defaults to p_y pushed
    through the error channel. Both may be sequences (p(g), p(e)).
    """
    errors = errors or FeedbackErrorModel()
    pc_g, pc_e = canonical_occupancy(beta)
    if p_y is None:
        p_y = (pc_g, pc_e)
    py_g = float(p_y[0])
    if p_k is None:
        pk_e = py_g * errors.eps_e_given_g + (1 - py_g) * (1 - errors.eps_g_given_e)
        p_k = (1 - pk_e, pk_e)
    e_ge, e_eg = _branch_weights(errors, py_g, weights)
    one_minus = (p_k[0] * (pc_g * (1 - e_ge) + pc_e * e_ge)
                 + p_k[1] * (pc_e * e_eg + pc_g * (1 - e_eg)))
    return float(min(max(1.0 - one_minus, 0.0), 1.0))


def _branch_weights(errors: FeedbackErrorModel, py_g, weights: str):
    if weights == "conditional":
        return errors.eps_e_given_g, errors.eps_g_given_e
    if weights == "joint":
        return errors.joint(py_g)
    raise ValueError(f"unknown error weighting {weights!r}")


def _lambda_vec(beta_eps: np.ndarray, errors: FeedbackErrorModel, pk_g, py_g,
                weights: str = "conditional") -> np.ndarray:
    pc_e = _p_can_e(beta_eps)
    pc_g = 1.0 - pc_e
    e_ge, e_eg = _branch_weights(errors, py_g, weights)
    one_minus = pk_g * (pc_g * (1 - e_ge) + pc_e * e_ge) + (1 - pk_g) * (pc_e * e_eg + pc_g * (1 - e_eg))
    return np.clip(1.0 - one_minus, 0.0, 1.0)


def lambda_fb_cells(weights: np.ndarray, beta_eps) -> np.ndarray:
    """Absolute irreversibility read off the (k, y) table.

    lambda = sum_k p(k) sum_{y: p(y|k)=0} p_can(U_k y), with U_e = sigma_x and
    U_g = identity: the reverse process starting from the canonical state
    reaches the unobserved y with that probability.
    """
    w = np.asarray(weights, dtype=float)
    w_ky = w.sum(axis=(-4, -1))
    total = w_ky.sum(axis=(-2, -1))
    p_k = w_ky.sum(axis=-1) / total[..., None]
    pc_e = _p_can_e(beta_eps)
    pc = np.stack([1.0 - pc_e, pc_e], axis=-1)  # (..., z)
    # z reached by U_k from y: k=g keeps y, k=e flips it
    pc_kz = np.stack([pc, pc[..., ::-1]], axis=-2)  # (..., k, y)
    empty = (w_ky == 0) & (p_k[..., None] > 0)
    return (p_k[..., None] * np.where(empty, pc_kz, 0.0)).sum(axis=(-2, -1))


def _p_can_e(beta_eps):
    return expit(-np.asarray(beta_eps, dtype=float))


def expanded_fluctuation_average(p_x, p_z_given_x, beta_eps: float) -> float:
    """<exp(beta W - I_Sh)> for a two-point measurement from the four-term expansion.

    ``p_x[x]`` and ``p_z_given_x[x][z]`` are the measured tables; I(x) = -ln p(x).
    """
    pg, pe = p_x
    return (pg * p_z_given_x[0][1] * math.exp(-beta_eps) * pg
            + pe * p_z_given_x[1][0] * math.exp(beta_eps) * pe
            + pe * p_z_given_x[1][1] * pe
            + pg * p_z_given_x[0][0] * pg)


@dataclass
class InfoRecord:
    """Per-shot information content (arrays of length n_shots)."""

    i_sh: np.ndarray
    i_qc: np.ndarray  # NaN where divergent/flagged
    beta_w: np.ndarray
    flagged: np.ndarray

    @property
    def exp_terms(self) -> dict[str, np.ndarray]:
        with np.errstate(over="ignore"):
            return {
                "exp_bW_minus_Ish": np.exp(self.beta_w - self.i_sh),
                "exp_bW_minus_Iqc": np.exp(self.beta_w - self.i_qc),
                "exp_bW": np.exp(self.beta_w),
            }


def _beta_times_work(beta_eps, work):
    beta_eps = np.asarray(beta_eps, dtype=float)[..., None, None, None, None]
    with np.errstate(invalid="ignore"):
        bw = beta_eps * work
    return np.where(work == 0, 0.0, bw)


def info_records(table: ShotTable, beta: InverseTemperature | None = None,
                 min_count: int = MIN_CELL_COUNT) -> InfoRecord:
    """Per-shot I_Sh, I_QC and beta*W with plug-in probabilities from ``table``.

    ``beta`` defaults to the estimate from the x frequencies.
    """
    counts = table.counts()
    n = counts.sum()
    p_x = counts.sum(axis=(1, 2, 3)) / n
    n_ky = counts.sum(axis=(0, 3))
    n_k = n_ky.sum(axis=1)
    if beta is None:
        beta = _estimate_beta(p_x)
    x = table.x.astype(np.int64)
    k = np.where(table.k < 0, x, table.k).astype(np.int64)
    y = np.where(table.y < 0, x, table.y).astype(np.int64)
    cell = n_ky[k, y]
    flagged = cell < min_count
    i_sh = -np.log(p_x[x])
    with np.errstate(divide="ignore"):
        i_qc = np.log(cell / n_k[k]) - np.log(p_x[x])
    i_qc = np.where(flagged, np.nan, i_qc)
    work = table.work.astype(np.int64)
    beta_w = np.where(work == 0, 0.0, beta.beta_eps * work)
    return InfoRecord(i_sh, i_qc, beta_w, flagged)


def _estimate_beta(p_x) -> InverseTemperature:
    from .core import beta_from_occupancy
    return beta_from_occupancy(float(p_x[0]), float(p_x[1]))


def estimate(weights: np.ndarray, beta_eps=None, errors: FeedbackErrorModel | None = None,
             min_count: float | None = MIN_CELL_COUNT) -> dict[str, np.ndarray]:
    """All ensemble statistics from cell weights of shape ``(..., 2, 2, 2, 2)``.

    ``weights`` are counts (then cells (k, y) with fewer than ``min_count`` shots
    are flagged and excluded from the I_QC averages) or probabilities (pass
    ``min_count=None``; only empty cells are excluded). ``beta_eps=None`` estimates
    beta from the x frequencies.
    """
    errors = errors or FeedbackErrorModel()
    w = np.asarray(weights, dtype=float)
    total = w.sum(axis=(-4, -3, -2, -1))
    T = total[..., None, None, None, None]
    p_x = w.sum(axis=(-3, -2, -1)) / total[..., None]
    w_ky = w.sum(axis=(-4, -1))
    w_k = w_ky.sum(axis=-1)
    p_y = w.sum(axis=(-4, -3, -1)) / total[..., None]
    p_k = w_k / total[..., None]
    with np.errstate(divide="ignore", invalid="ignore"):
        if beta_eps is None:
            beta_eps = np.log(p_x[..., 0]) - np.log(p_x[..., 1])
        beta_eps = np.broadcast_to(np.asarray(beta_eps, dtype=float), total.shape)
        bw = _beta_times_work(beta_eps, WORK)

        px_cell = np.broadcast_to(p_x[..., :, None, None, None], w.shape)
        log_px = np.log(px_cell)
        p_y_given_k = w_ky / w_k[..., :, None]
        pyk_cell = np.broadcast_to(p_y_given_k[..., None, :, :, None], w.shape)
        wky_cell = np.broadcast_to(w_ky[..., None, :, :, None], w.shape)
        occupied = w > 0
        trusted = wky_cell >= min_count if min_count is not None else wky_cell > 0
        use_qc = occupied & trusted
        i_sh = -log_px
        i_qc = np.log(pyk_cell) - log_px

        def avg(values, mask, norm):
            return np.where(mask, w * values, 0.0).sum(axis=(-4, -3, -2, -1)) / norm

        n_qc = np.where(use_qc, w, 0.0).sum(axis=(-4, -3, -2, -1))
        out = {
            "beta_eps": beta_eps,
            "avg_exp_sigma_ish": avg(np.exp(bw + log_px), occupied, total),
            "avg_exp_sigma_iqc": avg(np.exp(bw - i_qc), use_qc, n_qc),
            "avg_exp_betaW": avg(np.exp(bw), occupied, total),
            "mean_ish": avg(i_sh, occupied, total),
            "mean_iqc": avg(i_qc, use_qc, n_qc),
            "mean_betaW": avg(bw, occupied, total),
        }
        lam = _lambda_vec(beta_eps, errors, p_k[..., 0], p_y[..., 0])
        out["lambda_fb_theory"] = lam
        out["lambda_fb_cells"] = lambda_fb_cells(w, beta_eps)
        out["eta"] = out["mean_betaW"] / out["mean_iqc"]
        out["second_law_gap"] = out["mean_betaW"] - (out["mean_ish"] + np.log1p(-lam))
        mismatch = (_K != _Y) * np.ones_like(w)
        out["eps_fb"] = (w * mismatch).sum(axis=(-4, -3, -2, -1)) / total
        out["n_excluded"] = total - n_qc
        out["p_x_e"] = p_x[..., 1]
    return out


STAT_FIELDS = ("avg_exp_sigma_ish", "avg_exp_sigma_iqc", "avg_exp_betaW", "mean_iqc", "mean_ish",
               "mean_betaW", "eta", "second_law_gap")


def ensemble_summary(records, beta: InverseTemperature | float | None = None,
                     errors: FeedbackErrorModel | None = None, beta_source: str = "configured",
                     n_resamples: int = DEFAULT_RESAMPLES, seed: int = 0,
                     min_count: int = MIN_CELL_COUNT) -> EnsembleSummary:
    """Fluctuation-theorem averages, lambda_fb, efficiency and bootstrap errors.

    With ``beta_source="configured"`` the supplied ``beta`` is used; with
    ``"estimated"`` beta is re-estimated from the x frequencies in every resample.
    Bootstrap resamples shots with replacement; as all statistics depend on the
    cell counts only, a resample is drawn as a multinomial over the cells.
    """
    table = ShotTable.from_records(records)
    if len(table) < 1:
        raise ValueError("need at least one record")
    errors = errors or FeedbackErrorModel()
    if beta_source == "configured":
        if beta is None:
            raise ValueError("configured beta source requires beta")
        beta_eps = beta.beta_eps if isinstance(beta, InverseTemperature) else float(beta)
    elif beta_source == "estimated":
        beta_eps = None
    else:
        raise ValueError(f"unknown beta source {beta_source!r}")

    counts = table.counts()
    n = int(counts.sum())
    point = estimate(counts, beta_eps, errors, min_count)
    flags = []
    if point["n_excluded"] > 0:
        flags.append(f"{int(point['n_excluded'])} shots in (k,y) cells with < {min_count} counts excluded from I_QC")
    for name in ("beta_eps",) + STAT_FIELDS:
        if not np.isfinite(point[name]):
            flags.append(f"{name} is not finite")

    stderr = {}
    if n_resamples > 0:
        rng = bootstrap_rng(seed)
        boot = rng.multinomial(n, counts.ravel() / n, size=n_resamples).reshape(n_resamples, 2, 2, 2, 2)
        stats = estimate(boot, beta_eps, errors, min_count)
        for name in STAT_FIELDS:
            vals = stats[name]
            vals = vals[np.isfinite(vals)]
            stderr[name] = float(np.std(vals, ddof=1)) if vals.size > 1 else math.nan

    return EnsembleSummary(
        n_shots=n,
        beta_eps=float(point["beta_eps"]),
        avg_exp_sigma_ish=float(point["avg_exp_sigma_ish"]),
        avg_exp_sigma_iqc=float(point["avg_exp_sigma_iqc"]),
        avg_exp_betaW=float(point["avg_exp_betaW"]),
        mean_iqc=float(point["mean_iqc"]),
        mean_ish=float(point["mean_ish"]),
        mean_betaW=float(point["mean_betaW"]),
        lambda_fb_theory=float(point["lambda_fb_theory"]),
        eta=float(point["eta"]),
        second_law_gap=float(point["second_law_gap"]),
        eps_fb=float(point["eps_fb"]) if table.protocol == "B" else math.nan,
        **{f"stderr_{name}": stderr.get(name, math.nan) for name in STAT_FIELDS},
        n_excluded=int(point["n_excluded"]),
        lambda_fb_cells=float(point["lambda_fb_cells"]),
        flags=flags,
    )


def exact_summary(table: dict[tuple, float], beta: InverseTemperature | float,
                  errors: FeedbackErrorModel | None = None) -> dict[str, float]:
    """Infinite-ensemble values of the statistics for an exact outcome table."""
    from .master_eq import distribution_array

    beta_eps = beta.beta_eps if isinstance(beta, InverseTemperature) else beta
    res = estimate(distribution_array(table), beta_eps, errors, min_count=None)
    return {key: float(val) for key, val in res.items()}


@dataclass(frozen=True)
class SecondLawCheck:
    lhs: float
    rhs: float
    satisfied: bool
    margin: float
    diverged: bool = False


def second_law_check(summary: EnsembleSummary, n_sigma: float = 3.0) -> SecondLawCheck:
    """beta<W> <= <I_Sh> + ln(1 - lambda_fb), within ``n_sigma`` bootstrap errors of the gap."""
    lhs = summary.mean_betaW
    if summary.lambda_fb_theory >= 1.0:
        return SecondLawCheck(lhs, -math.inf, False, -math.inf, diverged=True)
    rhs = summary.mean_ish + math.log1p(-summary.lambda_fb_theory)
    err = summary.stderr_second_law_gap
    err = 0.0 if not math.isfinite(err) else err
    return SecondLawCheck(lhs, rhs, lhs <= rhs + n_sigma * err, rhs - lhs)
