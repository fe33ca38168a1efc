import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qdemon.core import PhysicalParams
from qdemon.master_eq import (DensityMatrix2, distribution_array, exact_outcome_distribution,
                              free_decay_population, readout_kernel, relax, transition_matrix)
from qdemon.measurement import FeedbackErrorModel
from qdemon.protocol import ProtocolTimeline

# conditional agreement of two 1 us readouts of |e> with a 0.3 us gap at the default device
QND_CONDITIONAL = 0.9536441604526475


def test_free_decay_closed_form(params):
    p_inf = params.p_stationary
    assert free_decay_population(1.0, params.t1, params) == pytest.approx(p_inf + (1 - p_inf) / math.e, rel=1e-14)
    assert free_decay_population(p_inf, 7.0, params) == pytest.approx(p_inf, rel=1e-14)


def test_relax_coherence_decays_at_half_rate(params):
    rho = relax(DensityMatrix2(0.5, 0.5), params.t1, params)
    assert abs(rho.coherence) == pytest.approx(0.5 * math.exp(-0.5))
    with pytest.raises(ValueError):
        DensityMatrix2(0.5, 0.6)
    assert relax(rho, 0.0, params) is rho


@given(st.floats(0, 50))
def test_transition_matrix_stochastic(t):
    m = transition_matrix(t, PhysicalParams())
    assert np.allclose(m.sum(axis=1), 1.0, atol=1e-14) and (m >= 0).all()


def test_kernel_zero_width_and_infinite_t1(params, ideal):
    k0 = readout_kernel(0.0, params)
    assert k0[0, 0, 0] == 1 and k0[1, 1, 1] == 1 and k0.sum() == 2
    ki = readout_kernel(0.5, ideal)
    assert ki[1, 1, 1] == 1 and ki[0, 0, 0] == 1


def test_kernel_normalized(params):
    k = readout_kernel(0.5, params)
    assert k.sum(axis=(1, 2)) == pytest.approx([1, 1], abs=1e-12)


def test_qnd_back_to_back(params):
    k = readout_kernel(1.0, params)
    t = transition_matrix(0.3, params)
    first = k[1, 1].sum()
    both = k[1, 1] @ t @ k[:, 1].sum(axis=1)
    assert both / first == pytest.approx(QND_CONDITIONAL, abs=1e-12)


@given(st.sampled_from("AB"), st.floats(0, 1), st.floats(0, 0.5), st.floats(0, 0.5),
       st.sampled_from([24.0, math.inf]))
def test_distribution_sums_to_one(protocol, p_e, a, b, t1):
    d = exact_outcome_distribution(protocol, p_e, PhysicalParams(t1=t1), FeedbackErrorModel(a, b))
    assert sum(d.values()) == pytest.approx(1.0, abs=1e-12)
    assert all(v >= -1e-15 for v in d.values())


def test_ideal_a_distribution(ideal):
    d = exact_outcome_distribution("A", 0.097, ideal)
    arr = distribution_array(d)
    assert arr[1, 1, 1, 0] == pytest.approx(0.097) and arr[0, 0, 0, 0] == pytest.approx(0.903)
    assert arr.sum() == pytest.approx(1)


def test_protocol_mismatch(ideal):
    with pytest.raises(ValueError):
        exact_outcome_distribution("A", 0.1, ideal, timeline=ProtocolTimeline.default("B"))
