import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qemlab.dataset import (
    PLANS,
    DatasetConfig,
    DatasetError,
    RegimePlan,
    SequenceRecord,
    dataset_header,
    generate_dataset,
    generate_records,
    ghz_circuits,
    noise_code,
    observable_code,
    plan_for,
    read_dataset,
    record_circuits,
    record_features,
    sample_max_length,
    to_batches,
    write_dataset,
)
from qemlab.noise import DecoherenceSpec, table_row
from qemlab.simulator import simulate


@pytest.mark.parametrize("task,base", [("trotter", 10), ("ghz", 5)])
def test_zero_rate_gives_base_length(task, base):
    rng = np.random.default_rng(0)
    assert {sample_max_length(task, 0.0, rng) for _ in range(200)} == {base}


@settings(max_examples=50)
@given(st.sampled_from(["trotter", "ghz"]), st.floats(0, 1))
def test_probabilities_sum_to_one(task, p_r):
    assert sum(PLANS[task].probabilities(p_r)) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("p_r", [-0.1, 1.5])
def test_rate_validation(p_r):
    with pytest.raises(ValueError):
        sample_max_length("trotter", p_r, 0)


def test_bucket_frequencies():
    rng = np.random.default_rng(0)
    plan = PLANS["trotter"]
    draws = np.array([plan.sample(0.25, rng) for _ in range(100_000)])
    buckets = np.array([plan.bucket_of(int(d)) for d in draws])
    freq = np.bincount(buckets, minlength=4) / draws.size
    np.testing.assert_allclose(freq, plan.probabilities(0.25), atol=0.01)
    assert draws.min() == 10 and draws.max() == 20


def test_published_point_count():
    # 100 sequences at p_r = 0.25 give 1140 points when each bucket counts its upper edge
    assert 100 * PLANS["trotter"].nominal_length(0.25) == pytest.approx(1140)
    assert 100 * PLANS["trotter"].expected_length(0.25) == pytest.approx(1111.25)


@pytest.mark.parametrize(
    "task,max_length,expected",
    [
        ("trotter", 10, RegimePlan(5, ((6, 6, 0.5), (7, 8, 0.3), (9, 10, 0.2)))),
        ("ghz", 6, RegimePlan(3, ((4, 4, 0.7), (5, 6, 0.3)))),
        ("trotter", 20, PLANS["trotter"]),
    ],
)
def test_scaled_plans(task, max_length, expected):
    assert plan_for(task, max_length) == expected


def test_regime_plan_validation():
    with pytest.raises(ValueError):
        RegimePlan(5, ((6, 8, 0.5),))
    with pytest.raises(ValueError):
        RegimePlan(5, ((4, 8, 1.0),))


def test_record_validation():
    with pytest.raises(ValueError):
        SequenceRecord("trotter", {}, 2, 2, [0.1], [0.1, 0.2], [0.0, 0.0], 0)
    with pytest.raises(ValueError):
        SequenceRecord("trotter", {}, 2, 1, [1.5], [0.1], [0.0], 0)
    with pytest.raises(ValueError):
        SequenceRecord("trotter", {}, 2, 1, [0.5], [0.1], [1.0], 0)


def test_config_validation():
    with pytest.raises(ValueError):
        DatasetConfig(task="qaoa")
    with pytest.raises(ValueError):
        DatasetConfig(split="dev")
    with pytest.raises(ValueError):
        DatasetConfig(size=-1)


def small_cfg(**kw):
    base = dict(task="trotter", n=3, size=4, max_length=6)
    return DatasetConfig(**{**base, **kw})


def test_empty_dataset_has_header(tmp_path):
    path = tmp_path / "empty.jsonl"
    generate_dataset(path, small_cfg(size=0), DecoherenceSpec(), 1)
    header, records = read_dataset(path)
    assert records == [] and header["schema"] == "qemlab-dataset"


def test_generation_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    generate_dataset(a, small_cfg(), DecoherenceSpec(), 7)
    generate_dataset(b, small_cfg(), DecoherenceSpec(), 7)
    assert a.read_bytes() == b.read_bytes()
    generate_dataset(b, small_cfg(), DecoherenceSpec(), 8)
    assert a.read_bytes() != b.read_bytes()


def test_header_records_config(tmp_path):
    path = tmp_path / "d.jsonl"
    cfg = small_cfg()
    generate_dataset(path, cfg, DecoherenceSpec(), 3)
    header, _ = read_dataset(path)
    assert header == json.loads(json.dumps(dataset_header(cfg, DecoherenceSpec(), 3), sort_keys=True))
    # regenerating from the header reproduces the file
    again = tmp_path / "again.jsonl"
    generate_dataset(again, DatasetConfig(**header["dataset"]), DecoherenceSpec.from_json(header["noise"]), header["seed"])
    assert again.read_bytes() == path.read_bytes()


def test_noiseless_pipeline():
    cfg = DatasetConfig(task="trotter", n=4, size=1, max_length=5)
    (rec,) = generate_records(cfg, DecoherenceSpec.noiseless(), 0)
    assert rec.p_hats == [0.0] * rec.length
    sigma = 1 / math.sqrt(cfg.shots)
    assert np.all(np.abs(np.array(rec.noisy) - rec.noiseless) < 5 * sigma)


def test_trotter_records_are_consistent():
    spec = DecoherenceSpec()
    recs = generate_records(small_cfg(size=3), spec, 0)
    for rec in recs:
        assert 0.5 <= rec.params["hdt"] <= 2.0
        (circ,), how = record_circuits(rec, spec)
        assert how == "prefix"
        np.testing.assert_allclose(simulate(circ, "noiseless"), rec.noiseless, atol=1e-12)
        np.testing.assert_allclose(circ.layer_effectiveness(), rec.p_hats, atol=1e-15)
        assert np.all(np.abs(np.array(rec.noisy) - simulate(circ)) < 6 / math.sqrt(8192))


def test_test_split_uses_max_length():
    recs = generate_records(small_cfg(split="test", size=3), DecoherenceSpec(), 0)
    assert {r.length for r in recs} == {6}


def test_ghz_grids_do_not_overlap():
    train = generate_records(DatasetConfig(task="ghz", size=500, max_length=2, p_r=0.0), DecoherenceSpec.noiseless(), 0)
    test = generate_records(DatasetConfig(task="ghz", size=510, max_length=2, split="test"), DecoherenceSpec.noiseless(), 0)
    a = {r.params["theta"] for r in train}
    b = {r.params["theta"] for r in test}
    assert len(a) == 50 and len(b) == 51 and not a & b
    assert min(a) == pytest.approx(0.1) and max(a) == pytest.approx(5.0)
    assert min(b) == pytest.approx(0.05) and max(b) == pytest.approx(5.05)


def test_ghz_records():
    spec = DecoherenceSpec()
    (rec,) = generate_records(DatasetConfig(task="ghz", size=1, max_length=4, split="test"), spec, 0)
    theta = rec.params["theta"]
    np.testing.assert_allclose(rec.noiseless, np.cos(theta * np.arange(1, 5)), atol=1e-12)
    circuits, how = record_circuits(rec, spec)
    assert how == "final" and [c.n for c in circuits] == [1, 2, 3, 4]
    # gate noise is shared: survival of each circuit equals the product of the record's (1 - p)
    for k, c in enumerate(circuits):
        surv = np.prod([1 - gn.channel.error_rate for row in c.noise for gn in row])
        assert surv == pytest.approx(np.prod(1 - np.array(rec.p_hats[: k + 1])), rel=1e-12)
    assert np.all(np.array(rec.p_hats) > 0)


def test_ghz_noise_shared_between_sizes():
    circuits = ghz_circuits(0.3, 3, DecoherenceSpec(seed=5))
    small, big = circuits[1], circuits[2]
    table = {(g.kind, g.qubits): big.noise[l][i].channel.coeffs.tolist() for l, i, g in big.gates()}
    for l, i, g in small.gates():
        assert small.noise[l][i].channel.coeffs.tolist() == table[(g.kind, g.qubits)]


def test_read_errors(tmp_path):
    with pytest.raises(DatasetError):
        read_dataset(tmp_path / "missing.jsonl")
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"schema": "other"}\n')
    with pytest.raises(DatasetError):
        read_dataset(bad)
    bad.write_text("not json\n")
    with pytest.raises(DatasetError):
        read_dataset(bad)
    header = dataset_header(small_cfg(), DecoherenceSpec(), 0)
    bad.write_text(json.dumps(header) + '\n{"task": "trotter"}\n')
    with pytest.raises(DatasetError):
        read_dataset(bad)


@pytest.mark.parametrize("t1,code", [(20, 1), (23.2357, 2), (30, 3), (40, 4), (55, 5)])
def test_noise_code(t1, code):
    assert noise_code(DecoherenceSpec.scaled(t1)) == code
    assert noise_code(DecoherenceSpec.noiseless()) == 0


def test_observable_code():
    assert observable_code("trotter", 4) == [0, 0, 0, 3, 0, 0]
    assert observable_code("ghz", 3) == [1, 1, 1, 0, 0, 0]


def test_features_and_batches():
    spec = DecoherenceSpec()
    recs = generate_records(small_cfg(size=2), spec, 0)
    f = record_features(recs[0], spec)
    assert f.shape == (13,)
    assert f[0] == 3 and f[1] == 0 and f[2] == 2
    assert f[3] == pytest.approx(100 * table_row(spec.t1, spec.t2, 18.0)[0])  # percent, at the 18 ns gate time
    assert f[4] == pytest.approx(0.4100, rel=0.005)
    batches = to_batches(recs, spec, p_scale=1.1)
    np.testing.assert_allclose(batches[0].survival[0], np.cumprod(1 - 1.1 * np.array(recs[0].p_hats)))
