import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import dense_layer_ptms, dense_run, expansion_noise
from qemlab.accumulation import (
    CumulativeNoiseState,
    accumulate_noise,
    apply_ptm,
    layer_ptms,
    noise_envelope,
    pauli_vector,
    state_from_pauli_vector,
    track,
)
from qemlab.circuits import build_ising_trotter, random_circuit, random_noise
from qemlab.noise import DecoherenceSpec, attach_noise
from qemlab.pauli import mnd
from qemlab.simulator import run


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 3), st.integers(1, 4))
def test_layer_ptms_match_dense(seed, n, L):
    rng = np.random.default_rng(seed)
    circ = random_noise(random_circuit(n, L, rng), rng)
    for (i, nz), (di, dn) in zip(layer_ptms(circ), dense_layer_ptms(circ)):
        np.testing.assert_allclose(i, di, atol=1e-12)
        np.testing.assert_allclose(nz, dn, atol=1e-12)


@pytest.mark.parametrize("p_source", ["gates", "mnd"])
def test_reconstruction_on_trotter(p_source):
    circ = attach_noise(build_ising_trotter(3, 0.6, 1.0, 0.9, 4), DecoherenceSpec(seed=3))
    ideal_states = run(circ, "noiseless")
    noisy_states = dense_run(circ)
    for state, rho, rho_noisy in zip(track(circ, p_source), ideal_states, noisy_states):
        recon = state.survival * rho + apply_ptm(state.circuit_ptm @ state.noise_ptm @ state.circuit_ptm.T, rho)
        np.testing.assert_allclose(recon, rho_noisy, atol=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 2), st.integers(1, 4))
def test_recursion_matches_expansion(seed, n, L):
    rng = np.random.default_rng(seed)
    circ = random_noise(random_circuit(n, L, rng), rng, max_error=0.05)
    dense = dense_layer_ptms(circ)
    ideals = [d[0] for d in dense]
    channels = [nz @ i.T for i, nz in dense]
    ps = [mnd(e).p for e in channels]
    survival, expected = expansion_noise(ideals, channels, ps)
    state = CumulativeNoiseState.initial(n)
    for (i, nz), p in zip(dense, ps):
        state = accumulate_noise(state, i, nz, p)
    assert state.survival == pytest.approx(survival, abs=1e-14)
    np.testing.assert_allclose(state.noise_ptm, expected, atol=1e-10)


def test_noiseless_circuit_has_zero_noise():
    circ = attach_noise(build_ising_trotter(2, 0.6, 1.0, 1.0, 3), DecoherenceSpec.noiseless())
    for state in track(circ):
        assert state.survival == 1.0
        assert np.all(state.noise_ptm == 0)


def test_invalid_p():
    eye = np.eye(4)
    with pytest.raises(ValueError):
        accumulate_noise(CumulativeNoiseState.initial(1), eye, eye, 1.5)


def test_track_cap():
    circ = attach_noise(build_ising_trotter(4, 0.6, 1.0, 1.0, 1), DecoherenceSpec())
    with pytest.raises(ValueError):
        track(circ)


def test_pauli_vector_roundtrip():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    rho = a @ a.conj().T
    rho /= np.trace(rho)
    np.testing.assert_allclose(state_from_pauli_vector(pauli_vector(rho)), rho, atol=1e-14)


def test_envelope_impact_matches_noisy_expectation():
    circ = attach_noise(build_ising_trotter(2, 0.6, 1.0, 0.7, 3), DecoherenceSpec(seed=1))
    obs = circ.observable.index
    for state, rho, rho_noisy in zip(track(circ), run(circ, "noiseless"), run(circ)):
        env = noise_envelope(state, rho, obs)
        y, y_noisy = pauli_vector(rho)[obs], pauli_vector(rho_noisy)[obs]
        if env.degenerate:
            continue
        # ỹ = (survival + r) y
        assert y_noisy == pytest.approx((state.survival + env.r) * y, abs=1e-12)


def test_envelope_degenerate_flag():
    state = CumulativeNoiseState.initial(1)
    rho = np.eye(2) / 2
    env = noise_envelope(state, rho, 3)
    assert env.degenerate and env.r == 0.0
