import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qemlab.baselines import (
    CliffordSubstitution,
    OverheadLedger,
    SPLModel,
    cdr_mitigate,
    pec_mitigate,
    richardson_coefficients,
    spl_calibrate,
    zne_mitigate,
)
from qemlab.baselines.cdr import DegenerateRegression, clifford_weights, is_clifford_angle, near_clifford_variant
from qemlab.baselines.overhead import ml_ledger, noisy_ledger
from qemlab.baselines.pec import anticommutation_matrix, calibrate_circuit
from qemlab.baselines.zne import unfold
from qemlab.circuits import Gate, LayeredCircuit, build_ising_trotter, gate_counts, random_circuit
from qemlab.noise import DecoherenceSpec, GateNoise, attach_noise, two_qubit_channel
from qemlab.pauli import PauliChannel, PauliString
from qemlab.simulator import exact_executor, simulate


def small_trotter(n=3, L=2, seed=0, t1=23.2357):
    return attach_noise(build_ising_trotter(n, 0.6, 1.0, 0.8, L), DecoherenceSpec.scaled(t1, seed=seed))


# -- Richardson / ZNE ------------------------------------------------------------


@pytest.mark.parametrize("scales,expected", [((1, 3), (1.5, -0.5)), ((1, 2, 3), (3.0, -3.0, 1.0)), ((1,), (1.0,))])
def test_richardson_coefficients(scales, expected):
    np.testing.assert_allclose(richardson_coefficients(scales).coefficients, expected, atol=1e-14)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=1, max_size=4), st.integers(1, 4))
def test_richardson_is_exact_for_polynomials(poly, k):
    scales = [1 + 2 * i for i in range(max(k, len(poly)))]
    plan = richardson_coefficients(scales)
    values = [np.polyval(poly[::-1], s) for s in scales]
    assert float(plan.extrapolate(values)) == pytest.approx(poly[0], abs=1e-9 * (1 + sum(map(abs, poly))) * 100)


@pytest.mark.parametrize("scales", [(), (1, 1), (3, 1)])
def test_richardson_rejects_bad_scales(scales):
    with pytest.raises(ValueError):
        richardson_coefficients(scales)


def test_unfold_counts_and_noise():
    c = small_trotter()
    u = unfold(c, 3)
    base = gate_counts(c)
    assert gate_counts(u) == {**base, "CNOT": 3 * base["CNOT"]}
    assert len(u.noise[0]) == len(u.layers[0])
    with pytest.raises(ValueError):
        unfold(c, 2)
    # noiseless behaviour is unchanged since CNOT is self-inverse
    np.testing.assert_allclose(simulate(u, "noiseless"), simulate(c, "noiseless"), atol=1e-13)


def test_zne_linear_decay_intercept():
    c = small_trotter()
    base = gate_counts(c)["CNOT"]

    def linear(circuit):
        lam = gate_counts(circuit)["CNOT"] / base
        return np.array([0.8 - 0.07 * lam, -0.3 + 0.02 * lam])

    values, ledger = zne_mitigate(c, executor=linear)
    np.testing.assert_allclose(values, [0.8, -0.3], atol=1e-12)
    assert ledger.total == 18384


def test_zne_improves_exact_expectations():
    c = small_trotter(L=3)
    ideal = simulate(c, "noiseless")
    noisy = simulate(c)
    mitigated, _ = zne_mitigate(c, executor=exact_executor("noisy"))
    assert np.mean(np.abs(mitigated - ideal)) < np.mean(np.abs(noisy - ideal))


# -- SPL / PEC -------------------------------------------------------------------


def test_anticommutation_matrix_shape():
    m = anticommutation_matrix(2)
    assert m.shape == (15, 15)
    # every non-identity Pauli anticommutes with exactly half of the others plus itself excluded
    np.testing.assert_array_equal(m.sum(axis=1), np.full(15, 8))


def test_spl_fidelity_formula_against_product_of_factors():
    rng = np.random.default_rng(2)
    lam = rng.uniform(0, 0.01, 15)
    model = SPLModel(lam)
    # the channel is the ordered product of (ω I + (1-ω) P_k); build it term by term
    ch = PauliChannel.identity(2)
    for k, w in enumerate(model.omegas, start=1):
        coeffs = np.zeros(16)
        coeffs[0], coeffs[k] = w, 1 - w
        ch = ch.compose(PauliChannel(2, coeffs))
    np.testing.assert_allclose(ch.fidelities(), model.fidelities(), atol=1e-14)
    np.testing.assert_allclose(model.channel().coeffs, ch.coeffs, atol=1e-14)


def test_spl_gamma_and_inverse():
    model = SPLModel(np.full(15, 0.001))
    assert model.gamma == pytest.approx(math.exp(0.03))
    inv = model.inverse()
    np.testing.assert_allclose(inv.compose(model.channel()).coeffs, np.eye(16)[0], atol=1e-14)
    # sampling the factor-by-factor inverse costs exactly γ; the collapsed map can only be cheaper
    per_factor = np.prod(1.0 / (2 * model.omegas - 1))
    assert per_factor == pytest.approx(model.gamma, rel=1e-12)
    assert np.abs(inv.coeffs).sum() <= model.gamma + 1e-12


def test_spl_validation():
    with pytest.raises(ValueError):
        SPLModel(np.zeros(3))
    with pytest.raises(ValueError):
        SPLModel(-np.ones(15))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_spl_calibrate_recovers_planted_lambdas(seed):
    lam = np.random.default_rng(seed).uniform(0, 0.02, 15)
    got = spl_calibrate(Gate("CNOT", (0, 1)), SPLModel(lam).channel(), "exact")
    np.testing.assert_allclose(got.lambdas, lam, atol=1e-6)
    assert not got.clamped


def test_spl_sampled_calibration_is_close():
    lam = np.full(15, 0.002)
    rng = np.random.default_rng(0)
    got = spl_calibrate(Gate("CNOT", (0, 1)), SPLModel(lam).channel(), "sampled", shots=200000, rng=rng)
    assert abs(got.lambdas.sum() - lam.sum()) < 0.01


def test_spl_sampled_rejects_odd_repetitions():
    with pytest.raises(ValueError):
        spl_calibrate(Gate("CNOT", (0, 1)), two_qubit_channel(DecoherenceSpec()), "sampled", repetitions=(1, 2))


def planted_circuit(seed=0):
    rng = np.random.default_rng(seed)
    circ = build_ising_trotter(3, 0.6, 1.0, 0.8, 3).compile()
    noise = []
    for l, layer in enumerate(circ.layers):
        row = []
        for g, gate in enumerate(layer):
            if gate.kind == "CNOT":
                ch = SPLModel(rng.uniform(0, 0.01, 15)).channel()
            else:
                ch = PauliChannel.identity(1)
            row.append(GateNoise((l, g), ch, ch.error_rate))
        noise.append(row)
    return circ.with_noise(noise)


def test_pec_exact_cancels_planted_noise():
    circ = planted_circuit()
    models = calibrate_circuit(circ, "exact")
    values, ledger = pec_mitigate(circ, models, "exact")
    np.testing.assert_allclose(values, simulate(circ, "noiseless"), atol=1e-8)
    assert ledger.total == 116384
    assert ledger.shots_per_instance == pytest.approx(163.84)


def test_pec_sampled_is_unbiased_on_average():
    circ = planted_circuit(1)
    models = calibrate_circuit(circ, "exact")
    rng = np.random.default_rng(4)
    runs = np.array([pec_mitigate(circ, models, "sampled", rng=rng)[0] for _ in range(30)])
    ideal = simulate(circ, "noiseless")
    stderr = runs.std(axis=0) / math.sqrt(len(runs))
    assert np.all(np.abs(runs.mean(axis=0) - ideal) < 5 * stderr + 1e-3)


def test_pec_requires_models():
    circ = planted_circuit()
    with pytest.raises(ValueError):
        pec_mitigate(circ, {}, "exact")


def test_pec_gamma_overflow():
    circ = planted_circuit()
    models = {k: SPLModel(np.full(15, 1.0)) for k in calibrate_circuit(circ, "exact")}
    with pytest.raises(OverflowError):
        pec_mitigate(circ, models, "exact")


# -- CDR -------------------------------------------------------------------------


@pytest.mark.parametrize("angle,expected", [(0.0, True), (math.pi / 2, True), (-math.pi, True), (0.3, False), (3 * math.pi / 2 + 1e-12, True)])
def test_is_clifford_angle(angle, expected):
    assert is_clifford_angle(angle) is expected


def test_clifford_weights_prefer_nearest():
    w = clifford_weights("RZ", 0.1)
    assert w.sum() == pytest.approx(1.0)
    assert np.argmax(w) == 0
    assert np.argmax(clifford_weights("RX", math.pi / 2 + 0.05)) == 1


def test_near_clifford_variant_respects_limits():
    rng = np.random.default_rng(0)
    c = small_trotter(n=4, L=3)
    sub = CliffordSubstitution(rate=0.5, max_nonclifford=5)
    v = near_clifford_variant(c, sub, rng)
    remaining = sum(1 for _, _, g in v.gates() if g.is_rotation and not is_clifford_angle(g.angle))
    assert remaining <= 5
    assert [len(l) for l in v.layers] == [len(l) for l in c.layers]
    with pytest.raises(ValueError):
        near_clifford_variant(build_ising_trotter(2, 0.6, 1.0, 0.8, 1), sub, rng)


def depolarized_single_qubit(seed, L=4, p=0.03):
    rng = np.random.default_rng(seed)
    circ = random_circuit(1, L, rng).with_observable("Z")
    dep = PauliChannel(1, [1 - p, p / 3, p / 3, p / 3])
    noise = [[GateNoise((l, g), dep, p) for g in range(len(layer))] for l, layer in enumerate(circ.layers)]
    return circ.with_noise(noise)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_cdr_exact_under_affine_noise(seed):
    # depolarizing noise commutes with every gate, so each layer's noisy value is a fixed multiple of the ideal one
    circ = depolarized_single_qubit(seed)
    rng = np.random.default_rng(seed)
    values, ledger = cdr_mitigate(circ, rng=rng, noisy_executor=exact_executor("noisy"), on_degenerate="noisy")
    ideal = simulate(circ, "noiseless")
    for l in range(circ.depth):
        assert values[l] == pytest.approx(ideal[l], abs=1e-10) or np.isclose(values[l], simulate(circ)[l])
    assert ledger.total == 101112


def test_cdr_degenerate_handling():
    circ = LayeredCircuit(1, [[Gate("H", (0,))]], PauliString("Z"))
    circ = circ.with_noise([[GateNoise((0, 0), PauliChannel.identity(1), 0.0)]])
    with pytest.raises(DegenerateRegression):
        cdr_mitigate(circ, rng=np.random.default_rng(0), noisy_executor=exact_executor("noisy"))
    values, _ = cdr_mitigate(circ, rng=np.random.default_rng(0), noisy_executor=exact_executor("noisy"), on_degenerate="noisy")
    assert values[0] == pytest.approx(0.0, abs=1e-12)


# -- ledgers ---------------------------------------------------------------------


@pytest.mark.parametrize(
    "ledger,total",
    [(noisy_ledger(), 0), (ml_ledger(), 9192), (OverheadLedger("zne", 2, 16384), 18384), (OverheadLedger("cdr", 11, 11 * 8192), 101112)],
)
def test_ledger_totals(ledger, total):
    assert ledger.total == total


def test_ledger_validation():
    with pytest.raises(ValueError):
        OverheadLedger("x", -1, 0)
