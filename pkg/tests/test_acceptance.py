"""Acceptance criteria 1-8 at their stated tolerances.

Each test prints one ``PASS``/``FAIL`` line (visible even with output capture on).
"""
import json
import math
import time

import numpy as np
import pytest

from qdemon.cli import main
from qdemon.core import InverseTemperature, PhysicalParams, PureState, canonical_occupancy
from qdemon.master_eq import distribution_array, exact_outcome_distribution
from qdemon.measurement import FeedbackErrorModel, ReadoutWindow, repeated_readout_counts
from qdemon.protocol import run_ensemble
from qdemon.thermo import ensemble_summary, exact_summary, lambda_fb_theory
from qdemon.validation import cell_deviations, free_decay_counts

N = 100_000
IDEAL = PhysicalParams(t1=math.inf)
DEVICE = PhysicalParams()
P_E = 0.097
BETA = InverseTemperature(math.log((1 - P_E) / P_E))

pytestmark = pytest.mark.acceptance


@pytest.fixture
def report(capsys):
    def emit(number, ok, text):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {text}")
    return emit


def test_criterion_1_eq1_temperature_sweep(report):
    t0 = time.perf_counter()
    rows = []
    for i, eps in enumerate(np.linspace(-6, 6, 13)):
        p_g, p_e = canonical_occupancy(eps)
        tab = run_ensemble("A", N, p_e, IDEAL, master_seed=100 + i)
        s = ensemble_summary(tab, eps, seed=100 + i)
        dev = abs(s.avg_exp_sigma_ish - p_g)
        rows.append((eps, s.avg_exp_sigma_ish, p_g, dev, s.stderr_avg_exp_sigma_ish))
    elapsed = time.perf_counter() - t0
    bad = [r for r in rows if not r[3] <= 3 * r[4] + 1e-12]
    worst = max(r[3] / r[4] if r[4] > 0 else (0 if r[3] < 1e-12 else math.inf) for r in rows)
    report(1, not bad, f"<e^(bW-I_Sh)> vs 1/(1+e^-eps) at 13 points, worst {worst:.2f} sigma, {elapsed:.0f} s")
    assert not bad, bad


def test_criterion_2_eq2_error_sweep(report):
    rows = []
    for i, eps_fb in enumerate([0.0, 0.1, 0.2, 0.3, 0.4, 0.5]):
        err = FeedbackErrorModel.symmetric(eps_fb)
        tab = run_ensemble("B", N, P_E, IDEAL, err, master_seed=200 + i)
        rows.append((eps_fb, ensemble_summary(tab, BETA, err, seed=200 + i)))
    iqc_ok = [abs(s.avg_exp_sigma_iqc - 1) <= 3 * s.stderr_avg_exp_sigma_iqc for _, s in rows]
    dist = [abs(s.avg_exp_betaW - 1) for _, s in rows]
    s0 = rows[0][1]
    bw_deviates = dist[0] > 3 * s0.stderr_avg_exp_betaW
    last = rows[-1][1]
    converges = (all(b <= a + 3 * s.stderr_avg_exp_betaW for a, b, (_, s) in zip(dist, dist[1:], rows[1:]))
                 and dist[-1] <= 3 * last.stderr_avg_exp_betaW)
    ok = all(iqc_ok) and bw_deviates and converges
    detail = ", ".join(f"{e:.1f}: {s.avg_exp_sigma_iqc:.4f}+-{s.stderr_avg_exp_sigma_iqc:.4f}" for e, s in rows)
    failing = [e for (e, _), good in zip(rows, iqc_ok) if not good]
    report(2, ok, f"<e^(bW-I_QC)> = {detail}; <e^bW> at 0: {s0.avg_exp_betaW:.3f}, at 0.5: {last.avg_exp_betaW:.3f}"
           + (f"; off unity at eps_fb = {failing} (lambda_fb from empty (k,y) cells = "
              f"{rows[0][1].lambda_fb_cells:.4f})" if failing else ""))
    assert bw_deviates and converges
    assert all(iqc_ok), f"<e^(bW-I_QC)> differs from 1 beyond 3 sigma at eps_fb = {failing}"


def test_criterion_3_lambda_closed_form(report):
    grid = np.linspace(-6, 6, 121)
    worst = max(abs(lambda_fb_theory(b) - canonical_occupancy(b)[1]) for b in grid)
    for pk in (0.0, 0.3, 1.0):
        worst = max(worst, max(abs(lambda_fb_theory(b, p_k=(pk, 1 - pk)) - canonical_occupancy(b)[1])
                               for b in grid))
    at_097 = 1 - lambda_fb_theory(BETA)
    ok = worst <= 1e-12 and abs(at_097 - 0.903) <= 1e-12
    report(3, ok, f"max |lambda - p_can(e)| = {worst:.1e}; 1 - lambda at p_e = 0.097: {at_097:.12f}")
    assert ok


def test_criterion_4_second_law_saturation(report):
    tab = run_ensemble("A", N, P_E, IDEAL, master_seed=400)
    s = ensemble_summary(tab, BETA, seed=400)
    rhs = s.mean_ish + math.log1p(-s.lambda_fb_theory)
    mc_ok = abs(s.mean_betaW - rhs) <= 3 * s.stderr_second_law_gap
    ex = exact_summary(exact_outcome_distribution("A", P_E, IDEAL), BETA)
    ex_rhs = ex["mean_ish"] + math.log1p(-ex["lambda_fb_theory"])
    # quoted as 0.2164 = 0.3185 - 0.1021; both right-hand terms are rounded, so compare at 1e-4
    exact_ok = (abs(ex["mean_betaW"] - ex_rhs) <= 1e-9 and abs(ex["mean_betaW"] - 0.2164) <= 1e-4
                and abs(ex["mean_ish"] - 0.3185) <= 1e-4 and abs(math.log1p(-ex["lambda_fb_theory"]) + 0.1021) <= 1e-4)
    ok = mc_ok and exact_ok
    report(4, ok, f"MC bW = {s.mean_betaW:.5f}, rhs = {rhs:.5f} (+-{s.stderr_second_law_gap:.1e}); oracle "
           f"{ex['mean_betaW']:.4f} = {ex['mean_ish']:.4f} {math.log1p(-ex['lambda_fb_theory']):+.4f}")
    assert ok


def test_criterion_5_efficiency_bracket(report):
    tab = run_ensemble("B", N, P_E, IDEAL, master_seed=500)
    ideal = ensemble_summary(tab, BETA, seed=500)
    ideal_ok = abs(ideal.eta - 0.679) <= 3 * ideal.stderr_eta
    tab = run_ensemble("B", N, P_E, DEVICE, master_seed=501)
    dev = ensemble_summary(tab, BETA, seed=501)
    oracle = exact_summary(exact_outcome_distribution("B", P_E, DEVICE), BETA)["eta"]
    dev_ok = 0.5 < dev.eta < 0.679 and 0.5 < oracle < 0.679
    ok = ideal_ok and dev_ok
    report(5, ok, f"eta(T1=inf) = {ideal.eta:.4f}+-{ideal.stderr_eta:.4f}; eta(T1=24us) = {dev.eta:.4f}"
           f"+-{dev.stderr_eta:.4f} (oracle {oracle:.4f})")
    assert ok


def test_criterion_6_engine_equivalence(report):
    rng = np.random.default_rng(6)
    worst, lines = 0.0, []
    for i in range(10):
        protocol = "AB"[i % 2]
        beta = rng.uniform(-3, 3)
        err = FeedbackErrorModel(*rng.uniform(0, 0.5, size=2))
        params = DEVICE if i % 4 < 2 else IDEAL
        p_e = canonical_occupancy(beta)[1]
        tab = run_ensemble(protocol, N, p_e, params, err, master_seed=600 + i)
        probs = distribution_array(exact_outcome_distribution(protocol, p_e, params, err))
        z = float(cell_deviations(tab.counts(), probs).max())
        worst = max(worst, z)
        lines.append(f"{protocol} b={beta:+.2f} T1={params.t1:g}: {z:.2f}")
    n_decay = N
    k = free_decay_counts(DEVICE, DEVICE.t1, DEVICE.t1 * 1e-3, n_decay, 606)
    p_inf = DEVICE.p_stationary
    frac = (k / n_decay - p_inf) / (1 - p_inf)
    sigma = math.sqrt(k / n_decay * (1 - k / n_decay) / n_decay) / (1 - p_inf)
    decay_ok = abs(frac - math.exp(-1)) <= 3 * sigma
    ok = worst <= 3 and decay_ok
    report(6, ok, f"max cell deviation {worst:.2f} sigma over 10 configs; free decay (p_e-p_inf)/(1-p_inf) at T1 = "
           f"{frac:.4f}+-{sigma:.4f} vs e^-1 = {math.exp(-1):.4f}")
    assert worst <= 3, lines
    assert decay_ok


def test_criterion_7_qnd_fidelity(report):
    counts = repeated_readout_counts(PureState.excited(), ReadoutWindow(1.0), 0.3, DEVICE, N, master_seed=700)
    stay = counts[1, 1] / counts[1].sum()
    ok = abs(stay - 0.966) <= 0.02
    report(7, ok, f"P(second = e | first = e) = {stay:.4f} (target 0.966 +- 0.02)")
    assert ok


def test_criterion_8_determinism(report, tmp_path):
    doc = {"protocol": "B", "errors": {"eps_e_given_g": 0.1, "eps_g_given_e": 0.05},
           "sweep": {"axis": "beta_eps", "grid": [-1.0, 2.231]}, "n_shots": 20000, "bootstrap": 200,
           "master_seed": 8}
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(doc))
    assert main(["sweep", "--config", str(cfg), "--threads", "1", "--out", str(tmp_path / "t1")]) == 0
    assert main(["sweep", "--config", str(cfg), "--threads", "4", "--out", str(tmp_path / "t4")]) == 0
    a = (tmp_path / "t1" / "sweep.csv").read_bytes()
    b = (tmp_path / "t4" / "sweep.csv").read_bytes()
    ok = a == b
    report(8, ok, f"sweep.csv bodies at 1 and 4 threads identical ({len(a)} bytes)")
    assert ok
