import importlib

import numpy as np
import pytest

from bytesieve.neural import (
    AdamState,
    Dataset,
    FormatError,
    LstmCell,
    ModelBundle,
    ModelConfig,
    SampleRecord,
    TrainingExample,
    adam_step,
    build_dataset,
    bytes_to_bits,
    chunk_and_pad,
    evaluate,
    forward,
    load_model,
    loss_and_grads,
    lstm_cell_forward,
    mae_loss,
    param_count,
    predict_heatmap,
    read_samples,
    save_model,
    segments,
    train,
    write_samples,
)
from bytesieve.neural.io import dumps, loads, stored_float_count
from bytesieve.neural.model import named_gradients
from bytesieve.neural.train import sample_bin
from oracles import PARAM_GRID, finite_difference_gradients, lstm_sequence, reference_forward, relative_error

train_mod = importlib.import_module("bytesieve.neural.train")

TENSOR_NAMES = ["W_f", "W_i", "W_C", "W_o", "b_f", "b_i", "b_C", "b_o"]


def random_model(arch, layers, chunk=64, seed=0, scale=0.5, dtype=np.float64):
    return ModelBundle.init_uniform(ModelConfig(arch, layers, chunk), np.random.default_rng(seed), scale, dtype)


def cell_tensors(model):
    return [tuple(np.array(t, dtype=np.float64) for t in c.tensors()) for c in model.cells]


# ---------------------------------------------------------------- encoding

def test_bytes_to_bits_msb_first():
    assert bytes_to_bits(b"\x00").tolist() == [0] * 8
    assert bytes_to_bits(b"\xff").tolist() == [1] * 8
    assert bytes_to_bits(b"\x80").tolist() == [1, 0, 0, 0, 0, 0, 0, 0]


@pytest.mark.parametrize("n,expected_T", [(296, 5), (640, 10), (0, 0), (1, 1)])
def test_chunk_and_pad(n, expected_T):
    bits = np.random.default_rng(n).integers(0, 2, n)
    chunks, valid = chunk_and_pad(bits, 64)
    assert chunks.shape == (expected_T, 64) and valid == n
    assert chunks.ravel()[:n].tolist() == bits.tolist()
    assert not chunks.ravel()[n:].any()


def test_chunk_size_validated():
    with pytest.raises(ValueError):
        chunk_and_pad([1, 0], 32)


def test_segments():
    assert [len(s) for s in segments(bytes(25_000))] == [10_000, 10_000, 5_000]
    assert segments(b"") == []


# ---------------------------------------------------------------- lstm cell

def test_zero_cell_outputs_zero():
    cell = LstmCell(4, 3, np.float64)
    h, c = lstm_cell_forward(cell, np.ones(4), np.full(3, 0.3), np.zeros(3))
    assert np.all(h == 0)


def test_saturated_gates_preserve_cell_state():
    cell = LstmCell(4, 3, np.float64)
    cell.b[0:3] = 50.0  # forget gate -> 1
    cell.b[3:6] = -50.0  # input gate -> 0
    c_prev = np.array([0.7, -1.2, 2.0])
    _, c = lstm_cell_forward(cell, np.random.default_rng(0).normal(size=4), np.zeros(3), c_prev)
    np.testing.assert_allclose(c, c_prev, atol=1e-12)


def test_scalar_cell_against_hand_evaluation():
    cell = LstmCell(1, 1, np.float64)
    # rows: [x, h]; columns f, i, C, o
    cell.W[...] = [[0.5, -0.3, 0.8, 0.1], [0.2, 0.4, -0.6, 0.9]]
    cell.b[...] = [0.1, 0.0, -0.2, 0.3]
    x, h0, c0 = 0.7, -0.4, 0.25
    sig = lambda v: 1 / (1 + np.exp(-v))
    f = sig(0.5 * x + 0.2 * h0 + 0.1)
    i = sig(-0.3 * x + 0.4 * h0)
    cand = np.tanh(0.8 * x - 0.6 * h0 - 0.2)
    o = sig(0.1 * x + 0.9 * h0 + 0.3)
    c_exp = f * c0 + i * cand
    h, c = lstm_cell_forward(cell, np.array([x]), np.array([h0]), np.array([c0]))
    np.testing.assert_allclose(c, [c_exp], rtol=1e-12)
    np.testing.assert_allclose(h, [o * np.tanh(c_exp)], rtol=1e-12)


# ---------------------------------------------------------------- forward

ALL_CONFIGS = [("lstm", 1), ("lstm", 2), ("bilstm", 1), ("bilstm", 2), ("seq2seq", 2)]


@pytest.mark.parametrize("arch,layers", ALL_CONFIGS)
def test_forward_matches_reference(arch, layers):
    model = random_model(arch, layers, seed=3)
    X = np.random.default_rng(4).integers(0, 2, (3, 64))
    ours = forward(model, X)
    ref = reference_forward(arch, layers, cell_tensors(model), X)[0]
    np.testing.assert_allclose(ours, ref, rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("arch,layers", ALL_CONFIGS)
def test_forward_range_and_zero_model(arch, layers):
    rng = np.random.default_rng(7)
    for trial in range(20):
        model = random_model(arch, layers, seed=trial, scale=float(rng.uniform(0.05, 3.0)), dtype=np.float32)
        P = forward(model, rng.integers(0, 2, (int(rng.integers(1, 5)), 64)))
        assert np.all((P >= 0) & (P <= 1))
    zero = ModelBundle.zeros(ModelConfig(arch, layers, 64))
    assert np.all(forward(zero, rng.integers(0, 2, (3, 64))) == 0.5)


@pytest.mark.parametrize("arch,layers", [("lstm", 1), ("lstm", 2)])
def test_unidirectional_models_are_causal(arch, layers):
    model = random_model(arch, layers, seed=1)
    rng = np.random.default_rng(2)
    X = rng.integers(0, 2, (5, 64))
    X2 = X.copy()
    X2[3:] = 1 - X2[3:]
    a, b = forward(model, X), forward(model, X2)
    np.testing.assert_array_equal(a[:3], b[:3])
    assert not np.allclose(a[3:], b[3:])


def test_bidirectional_models_see_the_future():
    model = random_model("bilstm", 1, seed=1)
    X = np.random.default_rng(2).integers(0, 2, (4, 64))
    X2 = X.copy()
    X2[3] = 1 - X2[3]
    assert not np.allclose(forward(model, X)[0], forward(model, X2)[0])


def test_chunk_width_checked():
    with pytest.raises(ValueError):
        forward(random_model("lstm", 1), np.zeros((2, 128)))


# ---------------------------------------------------------------- sizes

@pytest.mark.parametrize("key", sorted(PARAM_GRID))
def test_param_count_table(key):
    cfg = ModelConfig(*key)
    assert param_count(cfg) == PARAM_GRID[key]
    assert ModelBundle.zeros(cfg).param_count() == PARAM_GRID[key]


def test_seq2seq_needs_two_layers():
    with pytest.raises(ValueError):
        ModelConfig("seq2seq", 1, 64)
    with pytest.raises(ValueError):
        ModelConfig("gru", 1, 64)


# ---------------------------------------------------------------- loss

def test_mae_examples():
    y = np.array([0, 1, 1, 0, 1])
    assert mae_loss(y.astype(float), y, 5) == 0
    assert mae_loss(np.full(5, 0.5), y, 5) == 0.5
    assert mae_loss([0.2, 0.8], [0, 1], 2) == pytest.approx(0.2)
    assert mae_loss([0.2, 0.8, 0.0], [0, 1, 1], 2) == pytest.approx(0.2)  # bits past `valid` ignored


def test_loss_and_grads_loss_matches_mae():
    model = random_model("lstm", 1, seed=5)
    rng = np.random.default_rng(5)
    X, Y = rng.integers(0, 2, (2, 64)), rng.integers(0, 2, (2, 64))
    loss, _ = loss_and_grads(model, X, Y, 100)
    assert loss == pytest.approx(mae_loss(forward(model, X), Y, 100), rel=1e-12)


# ---------------------------------------------------------------- gradients

@pytest.mark.parametrize("arch,layers", [("lstm", 2), ("bilstm", 1)])
def test_gradients_match_finite_differences(arch, layers):
    # the acceptance suite covers the smallest config of every architecture;
    # here the remaining wirings get one full check each
    rng = np.random.default_rng(17)
    model = random_model(arch, layers, seed=17)
    X, Y = rng.integers(0, 2, (2, 64)), rng.integers(0, 2, (2, 64))
    valid = int(rng.integers(65, 129))
    _, grads = loss_and_grads(model, X, Y, valid)
    fd = finite_difference_gradients(arch, layers, cell_tensors(model), X, Y, valid, eps=1e-4)
    named = named_gradients(model, grads)
    for k in range(len(model.cells)):
        for j, name in enumerate(TENSOR_NAMES):
            assert relative_error(named[f"cell{k}.{name}"], fd[k][j]).max() < 1e-4, (k, name)


def test_gradient_vanishes_when_targets_equal_predictions():
    model = random_model("lstm", 1, seed=2)
    X = np.random.default_rng(2).integers(0, 2, (2, 64))
    P = forward(model, X)
    loss, grads = loss_and_grads(model, X, P, 128)
    assert loss == 0
    assert all(np.all(g == 0) for g in grads)


def test_padding_chunks_get_no_gradient_in_unidirectional_model():
    model = random_model("lstm", 1, seed=8)
    rng = np.random.default_rng(8)
    X, Y = rng.integers(0, 2, (3, 64)), rng.integers(0, 2, (3, 64))
    # only the first chunk is valid: the loss is then a function of chunk 0
    # alone, so changing chunks 1-2 cannot change any gradient
    _, g1 = loss_and_grads(model, X, Y, 64)
    X2 = X.copy()
    X2[1:] = 1 - X2[1:]
    _, g2 = loss_and_grads(model, X2, Y, 64)
    for a, b in zip(g1, g2):
        np.testing.assert_array_equal(a, b)


def test_batched_loss_is_mean_of_sequences():
    model = random_model("bilstm", 2, seed=4)
    rng = np.random.default_rng(4)
    X, Y = rng.integers(0, 2, (3, 2, 64)), rng.integers(0, 2, (3, 2, 64))
    valid = np.array([70, 128, 100])
    loss, grads = loss_and_grads(model, X, Y, valid)
    parts = [loss_and_grads(model, X[i], Y[i], int(valid[i])) for i in range(3)]
    assert loss == pytest.approx(np.mean([p[0] for p in parts]), rel=1e-12)
    for j, g in enumerate(grads):
        np.testing.assert_allclose(g, np.mean([p[1][j] for p in parts], axis=0), rtol=1e-9, atol=1e-14)


# ---------------------------------------------------------------- adam

def test_adam_zero_gradient_keeps_parameters():
    params = [np.arange(6, dtype=np.float64).reshape(2, 3)]
    new, state = adam_step(params, [np.zeros((2, 3))], AdamState.fresh(params), lr=0.1)
    np.testing.assert_array_equal(new[0], params[0])
    assert state.t == 1


def test_adam_first_step_moves_by_lr():
    params = [np.zeros(5)]
    g = np.array([0.3, -2.0, 1e-3, 5.0, -0.01])
    new, _ = adam_step(params, [g], AdamState.fresh(params), lr=1e-3)
    np.testing.assert_allclose(new[0], -1e-3 * np.sign(g), rtol=1e-4)


def test_adam_is_pure():
    params = [np.ones(3)]
    state = AdamState.fresh(params)
    g = [np.array([0.1, 0.2, -0.3])]
    a = adam_step(params, g, state, lr=0.01)
    b = adam_step(params, g, state, lr=0.01)
    np.testing.assert_array_equal(a[0][0], b[0][0])
    np.testing.assert_array_equal(params[0], np.ones(3))
    assert state.t == 0


def test_adam_matches_closed_form_second_step():
    p = [np.array([1.0])]
    g1, g2 = np.array([0.5]), np.array([-0.2])
    p1, s1 = adam_step(p, [g1], AdamState.fresh(p), lr=0.01)
    p2, _ = adam_step(p1, [g2], s1, lr=0.01)
    m = 0.9 * 0.1 * g1 + 0.1 * g2
    v = 0.999 * 0.001 * g1 ** 2 + 0.001 * g2 ** 2
    expected = p1[0] - 0.01 * (m / (1 - 0.9 ** 2)) / (np.sqrt(v / (1 - 0.999 ** 2)) + 1e-8)
    np.testing.assert_allclose(p2[0], expected, rtol=1e-12)


# ---------------------------------------------------------------- data

def test_build_dataset_filters_and_labels():
    recs = [SampleRecord(b"\x00\x00", b"\x01\x00", 3), SampleRecord(b"\x00\x00", b"\x80\x00", 0)]
    ds = build_dataset(recs)
    assert len(ds) == 1
    ex = next(ds.examples())
    assert ex.y.tolist() == [0] * 7 + [1] + [0] * 8
    assert len(build_dataset(recs, gamma=3)) == 0


def test_build_dataset_segments_long_inputs():
    x = bytes(25_000)
    x2 = bytes([1]) + bytes(24_999)
    ds = build_dataset([SampleRecord(x, x2, 1)])
    lengths = sorted(len(ex.x) for ex in ds.examples())
    assert lengths == [5_000, 10_000, 10_000]


def test_dataset_bins_by_chunk_count():
    ds = Dataset(64)
    for n in (1, 8, 9, 16, 17):
        ds.add(TrainingExample(bytes(n), np.zeros(8 * n, np.uint8), 1))
    assert {k: len(v) for k, v in ds.bins.items()} == {1: 2, 2: 2, 3: 1}
    X, Y, valid = ds.batch(2, [0, 1])
    assert X.shape == (2, 2, 64) and valid.tolist() == [72, 128]


def test_samples_file_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    recs = []
    for _ in range(20):
        n = int(rng.integers(1, 50))
        recs.append(SampleRecord(rng.bytes(n), rng.bytes(n), int(rng.integers(0, 5))))
    path = tmp_path / "s.nfzd"
    assert write_samples(path, recs) == 20
    assert read_samples(path) == recs
    blob = path.read_bytes()
    path.write_bytes(b"XXXX" + blob[4:])
    with pytest.raises(FormatError):
        read_samples(path)
    path.write_bytes(blob[:-3])
    with pytest.raises(FormatError):
        read_samples(path)


def test_sample_record_validation():
    with pytest.raises(ValueError):
        SampleRecord(b"ab", b"a", 1)


# ---------------------------------------------------------------- training

def tiny_dataset(seed=0, n=12, length=9):
    rng = np.random.default_rng(seed)
    recs = []
    for _ in range(n):
        x = rng.bytes(length)
        x2 = bytearray(x)
        x2[0] ^= 0xFF
        recs.append(SampleRecord(x, bytes(x2), 1))
    return build_dataset(recs)


def test_zero_steps_returns_initialisation():
    ds = tiny_dataset()
    cfg = ModelConfig("lstm", 1, 64)
    model = train(ds, cfg, steps=0, rng=5)
    init = ModelBundle.init_uniform(cfg, np.random.default_rng(5), 0.08)
    for a, b in zip(model.params(), init.params()):
        np.testing.assert_array_equal(a, b)


def test_overfit_single_example():
    ds = tiny_dataset(n=1)
    model = train(ds, ModelConfig("lstm", 1, 64), steps=500, batch=1, rng=0, lr=1e-2)
    assert evaluate(model, ds) < 0.5
    assert np.mean(model.loss_history[-20:]) < 0.5


def test_training_reduces_loss_at_default_lr():
    ds = tiny_dataset()
    model = train(ds, ModelConfig("lstm", 1, 64), steps=300, batch=8, rng=1)
    assert np.mean(model.loss_history[-20:]) < np.mean(model.loss_history[:20])


def test_training_is_deterministic():
    ds = tiny_dataset()
    a = train(ds, ModelConfig("bilstm", 1, 64), steps=20, batch=4, rng=3)
    b = train(ds, ModelConfig("bilstm", 1, 64), steps=20, batch=4, rng=3)
    assert a.loss_history == b.loss_history


def test_training_rejects_mismatched_inputs():
    with pytest.raises(ValueError):
        train(Dataset(64), ModelConfig())
    with pytest.raises(ValueError):
        train(tiny_dataset(), ModelConfig("lstm", 1, 128))


def test_bin_sampling_is_size_proportional():
    ds = Dataset(64)
    for n, count in ((8, 10), (16, 30), (24, 60)):
        for _ in range(count):
            ds.add(TrainingExample(bytes(n), np.zeros(8 * n, np.uint8), 1))
    rng = np.random.default_rng(0)
    draws = [sample_bin(ds, rng) for _ in range(10_000)]
    for key, frac in ((1, 0.1), (2, 0.3), (3, 0.6)):
        assert abs(draws.count(key) / 10_000 - frac) <= 0.05 * frac


# ---------------------------------------------------------------- heat maps

def test_zero_model_heat_is_half():
    heat = predict_heatmap(ModelBundle.zeros(ModelConfig()), b"some bytes")
    assert np.all(heat == 0.5)


def test_heat_is_mean_of_bit_predictions(monkeypatch):
    monkeypatch.setattr(train_mod, "bit_outputs", lambda model, x: np.array([1, 1, 1, 1, 0, 0, 0, 0] * len(x), float))
    assert predict_heatmap(None, b"ab").tolist() == [0.5, 0.5]


@pytest.mark.parametrize("n", [1, 7, 64, 10_000, 10_001, 30_000])
def test_heat_length_matches_input(n):
    model = random_model("lstm", 1, seed=0, scale=0.08, dtype=np.float32)
    heat = predict_heatmap(model, bytes(np.random.default_rng(n).integers(0, 256, n, dtype=np.uint8)))
    assert heat.shape == (n,) and np.all((heat >= 0) & (heat <= 1))


def test_heat_rejects_empty_input():
    with pytest.raises(ValueError):
        predict_heatmap(ModelBundle.zeros(ModelConfig()), b"")


# ---------------------------------------------------------------- model files

@pytest.mark.parametrize("arch,layers", ALL_CONFIGS)
def test_model_file_round_trip(tmp_path, arch, layers):
    model = random_model(arch, layers, seed=9, dtype=np.float32)
    path = tmp_path / "m.nfzm"
    save_model(model, path)
    back = load_model(path)
    assert back.config == model.config
    X = np.random.default_rng(0).integers(0, 2, (3, 64))
    np.testing.assert_array_equal(forward(back, X), forward(model, X))
    assert dumps(back) == path.read_bytes()
    assert stored_float_count(path.read_bytes()) == param_count(model.config)


def test_model_file_errors():
    blob = dumps(random_model("lstm", 1, dtype=np.float32))
    with pytest.raises(FormatError):
        loads(b"JUNK" + blob[4:])
    with pytest.raises(FormatError):
        loads(blob[:-4])
    with pytest.raises(FormatError):
        loads(blob + b"\x00")
    with pytest.raises(FormatError):
        loads(blob[:4] + b"\x09\x00" + blob[6:])  # version


def test_reference_sequence_helper_agrees_with_cell():
    # sanity check of the oracle itself against the scalar hand evaluation path
    cell = LstmCell(2, 2, np.float64)
    rng = np.random.default_rng(0)
    cell.W[...] = rng.normal(size=cell.W.shape)
    cell.b[...] = rng.normal(size=cell.b.shape)
    X = rng.normal(size=(1, 3, 2))
    out, h, c = lstm_sequence(X, tuple(cell.tensors()))
    hh, cc = np.zeros(2), np.zeros(2)
    for t in range(3):
        hh, cc = lstm_cell_forward(cell, X[0, t], hh, cc)
    np.testing.assert_allclose(h[0], hh, rtol=1e-12)
    np.testing.assert_allclose(c[0], cc, rtol=1e-12)
