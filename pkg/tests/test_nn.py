import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gradcheck import check_model, random_batch
from qemlab.nn.autodiff import Tensor, as_tensor, concat, parameter, stack
from qemlab.nn.models import DENOMINATOR_FLOOR, KINDS, Batch, FeatureSpec, SurrogateModel, Variable, task_features
from qemlab.nn.training import TrainingConfig, TrainingDiverged, group_by_length, mse, train


def numeric_grad(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


OPS = {
    "tanh": lambda t: t.tanh().sum(),
    "exp": lambda t: t.exp().sum(),
    "softmax": lambda t: (t.softmax(axis=-1) * Tensor(np.arange(12.0).reshape(3, 4))).sum(),
    "pow": lambda t: (t**3).sum(),
    "div": lambda t: (1.0 / (t * t + 1.0)).sum(),
    "matmul": lambda t: (t @ Tensor(np.ones((4, 2))) @ Tensor(np.arange(2.0))).sum(),
    "getitem": lambda t: (t[:, 1:3] * 2.0).sum() + t[0, 0] * 5.0,
    "transpose": lambda t: (t.transpose() @ Tensor(np.arange(3.0))).sum(),
    "reshape": lambda t: (t.reshape(4, 3) * Tensor(np.arange(12.0).reshape(4, 3))).sum(),
    "mean": lambda t: t.mean(axis=0).tanh().sum(),
    "broadcast": lambda t: (t + Tensor(np.arange(4.0))).tanh().sum(),
    "guard": lambda t: (1.0 / t.guard(0.1)).sum(),
}


@pytest.mark.parametrize("name", sorted(OPS))
def test_op_gradients(name):
    rng = np.random.default_rng(0)
    x0 = rng.uniform(0.2, 1.0, size=(3, 4))
    t = parameter(x0)
    OPS[name](t).backward()
    num = numeric_grad(lambda x: OPS[name](Tensor(x)).value, x0)
    np.testing.assert_allclose(t.grad, num, rtol=1e-6, atol=1e-8)


def test_stack_concat_gradients():
    a, b = parameter(np.ones((2, 3))), parameter(np.full((2, 3), 2.0))
    out = (stack([a, b], axis=1) * Tensor(np.arange(12.0).reshape(2, 2, 3))).sum()
    out = out + (concat([a, b], axis=0) ** 2).sum()
    out.backward()
    np.testing.assert_allclose(a.grad, np.arange(12.0).reshape(2, 2, 3)[:, 0] + 2 * a.value)
    np.testing.assert_allclose(b.grad, np.arange(12.0).reshape(2, 2, 3)[:, 1] + 2 * b.value)


def test_reused_node_accumulates():
    x = parameter(np.array(3.0))
    y = x * x + x
    y.backward()
    assert x.grad == pytest.approx(7.0)


def test_softmax_rows_sum_to_one():
    s = as_tensor(np.random.default_rng(1).normal(size=(2, 3, 5))).softmax(axis=-1).value
    np.testing.assert_allclose(s.sum(axis=-1), 1.0)


@pytest.mark.parametrize("kind", KINDS)
def test_model_gradients_small(kind):
    rng = np.random.default_rng(5)
    model = SurrogateModel(kind, task_features(), hidden=4, max_len=6, seed=1, mlp_width=5)
    worst = check_model(model, random_batch(rng, L=4), rng, elementwise_limit=10**6)
    assert max(worst.values()) < 1e-4, worst


def test_variable_validation():
    with pytest.raises(ValueError):
        Variable("x", "zz")
    with pytest.raises(ValueError):
        Variable("x", "sc", 3)
    spec = task_features()
    assert spec.rows == 9
    assert FeatureSpec.from_json(spec.to_json()) == spec


def test_batch_survival_is_cumulative_product():
    b = Batch.from_arrays(np.zeros(13), [0.5, 0.4, 0.3], [0.1, 0.2, 0.0])
    np.testing.assert_allclose(b.survival[0], [0.9, 0.72, 0.72])


def test_readout_formula():
    rng = np.random.default_rng(0)
    model = SurrogateModel("NEA", task_features(), hidden=6, max_len=5, seed=0)
    batch = random_batch(rng, L=5)
    model.params["out.b"].value = rng.normal(size=5) * 0.01
    X = model.embed(batch.raw, batch.noisy, 5)
    r = np.stack([(h @ model.params["nea.w3"] + model.params["nea.b3"]).value for h in model.hidden_states(X)], axis=1)
    expected = batch.noisy / (batch.survival + r) + model.params["out.b"].value
    np.testing.assert_allclose(model.predict(batch), expected, atol=1e-14)


def test_zero_readout_divides_by_survival():
    model = SurrogateModel("NNAS", task_features(), hidden=4, max_len=4, seed=0)
    model.params["ext.wr"].value[:] = 0.0
    batch = random_batch(np.random.default_rng(1), L=4)
    np.testing.assert_allclose(model.predict(batch), batch.noisy / batch.survival, atol=1e-14)


def test_denominator_guard_flags():
    model = SurrogateModel("NEA", task_features(), hidden=4, max_len=3, seed=0)
    model.params["nea.w3"].value[:] = 0.0
    model.params["nea.b3"].value = np.array(-1.0)
    batch = Batch.from_arrays(np.zeros(13), [0.2, 0.2, 0.2], [0.0, 0.0, 0.0])
    out = model.predict(batch)
    assert np.all(np.isfinite(out))
    assert model.last_flags.tolist() == [True]
    assert np.max(np.abs(out)) <= 0.2 / DENOMINATOR_FLOOR + 1e-6


def test_surrogates_shapes():
    model = SurrogateModel("NNAS", task_features(), hidden=8, max_len=5, seed=0)
    parts = model.surrogates(random_batch(np.random.default_rng(0), B=2, L=3))
    assert len(parts) == 3
    assert parts[0]["N"].shape == (2, 8) and parts[0]["S"].shape == (2, 8, 8)
    np.testing.assert_allclose(parts[0]["S"].sum(axis=-1), 1.0)
    with pytest.raises(ValueError):
        SurrogateModel("NEA", task_features()).surrogates(random_batch(np.random.default_rng(0)))


def test_length_and_width_checks():
    model = SurrogateModel("NNAS", task_features(), hidden=4, max_len=3)
    with pytest.raises(ValueError):
        model.predict(random_batch(np.random.default_rng(0), L=4))
    with pytest.raises(ValueError):
        model.predict(Batch.from_arrays(np.zeros(5), [0.1], [0.0]))
    with pytest.raises(ValueError):
        SurrogateModel("RF", task_features())


@pytest.mark.parametrize("kind", KINDS)
def test_checkpoint_roundtrip(kind, tmp_path):
    model = SurrogateModel(kind, task_features(), hidden=5, max_len=4, seed=3)
    path = tmp_path / "m.json"
    model.save(path)
    back = SurrogateModel.load(path)
    batch = random_batch(np.random.default_rng(0), L=4)
    np.testing.assert_array_equal(back.predict(batch), model.predict(batch))
    assert back.config_hash() == model.config_hash()


def test_checkpoint_tamper_detected():
    blob = SurrogateModel("NEA", task_features(), hidden=3, max_len=2).to_json()
    blob["config"]["hidden"] = 4
    with pytest.raises(ValueError):
        SurrogateModel.from_json(blob)
    with pytest.raises(ValueError):
        SurrogateModel.from_json({**blob, "format": "other"})


def toy_data(rng, count=24):
    out = []
    for i in range(count):
        L = 3 + i % 2
        b = random_batch(rng, B=1, L=L)
        b.target = b.noisy / b.survival * 1.02
        out.append(b)
    return out


@pytest.mark.parametrize("kind", KINDS)
def test_training_reduces_loss(kind):
    rng = np.random.default_rng(0)
    data = toy_data(rng)
    model = SurrogateModel(kind, task_features(), hidden=8, max_len=4, seed=0)
    curve = train(model, data, TrainingConfig(learning_rate=3e-3, epochs=15, batch_size=8))
    assert len(curve) == 16
    assert curve[-1] < curve[0]
    assert curve[-1] == pytest.approx(mse(model, group_by_length(data)))


def test_training_is_deterministic():
    rng = np.random.default_rng(0)
    data = toy_data(rng, 10)
    runs = []
    for _ in range(2):
        model = SurrogateModel("NNAS", task_features(), hidden=4, max_len=4, seed=2)
        runs.append(train(model, data, TrainingConfig(epochs=3, seed=9)))
    assert runs[0] == runs[1]


def test_group_by_length():
    data = toy_data(np.random.default_rng(0), 6)
    groups = group_by_length(data)
    assert [g.length for g in groups] == [3, 4]
    assert sum(g.noisy.shape[0] for g in groups) == 6


def test_divergence_is_reported():
    rng = np.random.default_rng(0)
    data = toy_data(rng, 8)
    for b in data:
        b.target = b.target * 1e4
    model = SurrogateModel("NNA", task_features(), hidden=4, max_len=4, mlp_width=4)
    with pytest.raises(TrainingDiverged):
        train(model, data, TrainingConfig(epochs=1))


@pytest.mark.parametrize("kwargs", [dict(learning_rate=0), dict(epochs=0), dict(batch_size=0), dict(optimizer="lbfgs")])
def test_training_config_validation(kwargs):
    with pytest.raises(ValueError):
        TrainingConfig(**kwargs)


def test_empty_training_set():
    with pytest.raises(ValueError):
        train(SurrogateModel("NEA", task_features(), hidden=3), [])


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(KINDS))
def test_prediction_is_finite_and_batch_independent(seed, kind):
    rng = np.random.default_rng(seed)
    model = SurrogateModel(kind, task_features(), hidden=6, max_len=5, seed=seed % 7)
    batch = random_batch(rng, B=3, L=5)
    full = model.predict(batch)
    assert np.all(np.isfinite(full))
    single = Batch(batch.raw[1:2], batch.noisy[1:2], batch.survival[1:2], batch.target[1:2])
    np.testing.assert_allclose(model.predict(single)[0], full[1], atol=1e-13)
