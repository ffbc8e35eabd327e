"""Mixed edges/cells against straight-line references, supernet geometry,
search bookkeeping, and checkpoint round-trips."""

from __future__ import annotations

import numpy as np
import pytest

from cardionas import autodiff as ad
from cardionas.autodiff import Parameter, Tensor
from cardionas.errors import CheckpointError, ConfigError, StateError
from cardionas.search_space import NUM_EDGES, NUM_OPS, Genotype
from cardionas.supernet import (MAX_CONV_KERNEL, MixedCell, MixedEdge,
                                SearchConfig, SearchRun, Supernet,
                                read_checkpoint_alphas, reduction_indices,
                                run_search)

from oracles import mixed_cell_reference, mixed_edge_reference


def small_config(**overrides) -> SearchConfig:
    base = dict(epochs=2, batch_size=16, init_channels=4, cells=3, seed=0)
    base.update(overrides)
    return SearchConfig(**base)


def test_reduction_indices_at_one_and_two_thirds():
    assert reduction_indices(8) == frozenset({2, 5})
    assert reduction_indices(3) == frozenset({1, 2})
    assert reduction_indices(6) == frozenset({2, 4})
    assert reduction_indices(15) == frozenset({5, 10})


@pytest.mark.parametrize("stride", [1, 2])
def test_mixed_edge_matches_reference(rng, stride):
    for trial in range(12):
        b = int(rng.integers(1, 3))
        c = int(rng.integers(2, 5))
        length = int(rng.integers(8, 21))
        edge = MixedEdge("e", 3, c, stride, rng, dtype=np.float64)
        x = Tensor(rng.standard_normal((b, c, length)))
        alpha = Parameter(rng.normal(0, 1, (NUM_EDGES, NUM_OPS)), id="a",
                          group="arch")
        cols = ad.unfold(x, MAX_CONV_KERNEL, stride=stride)
        got = edge(x, cols, alpha, training=True, tape=None)
        want = mixed_edge_reference(edge, x.data, alpha.data[3])
        np.testing.assert_allclose(got.data, want, rtol=1e-9, atol=1e-9)


@pytest.mark.parametrize("reduction,reduction_prev",
                         [(False, False), (True, False), (False, True)])
def test_mixed_cell_matches_reference(rng, reduction, reduction_prev):
    for trial in range(6):
        c = int(rng.integers(2, 5))
        length = int(rng.integers(10, 21))
        prev_len = 2 * length if reduction_prev else length
        cell = MixedCell("cell", c + 1, c, c, reduction=reduction,
                         reduction_prev=reduction_prev, rng=rng,
                         dtype=np.float64)
        s0 = Tensor(rng.standard_normal((2, c + 1, prev_len)))
        s1 = Tensor(rng.standard_normal((2, c, length)))
        alpha = Parameter(rng.normal(0, 1, (NUM_EDGES, NUM_OPS)), id="a",
                          group="arch")
        got = cell(s0, s1, alpha, training=True, tape=None)
        want = mixed_cell_reference(cell, s0.data, s1.data, alpha.data)
        assert got.data.shape == want.shape
        np.testing.assert_allclose(got.data, want, rtol=1e-9, atol=1e-9)


def test_supernet_length_ladder_and_head(rng):
    net = Supernet(leads=1, classes=5, init_channels=16, cells=8, rng=rng)
    x = Tensor(rng.standard_normal((2, 1, 300)).astype(np.float32))
    s0 = s1 = net.stem(x, training=False, tape=None)
    assert s1.data.shape == (2, 16, 75)
    lengths, channels = [], []
    for cell in net.cells:
        alpha = net.arch.alpha_reduce if cell.reduction else net.arch.alpha_normal
        s0, s1 = s1, cell(s0, s1, alpha, training=False, tape=None)
        lengths.append(s1.data.shape[2])
        channels.append(s1.data.shape[1])
    assert lengths == [75, 75, 38, 38, 38, 19, 19, 19]
    assert channels == [64, 64, 128, 128, 128, 256, 256, 256]
    logits = net.forward(x, training=False)
    assert logits.data.shape == (2, 5, 1)


def test_supernet_parameter_bookkeeping(rng):
    net = Supernet(leads=2, classes=5, init_channels=4, cells=3, rng=rng)
    ids = [p.id for p in net.weight_parameters + net.arch_parameters]
    assert len(ids) == len(set(ids))
    assert all(p.group == "weight" for p in net.weight_parameters)
    assert [p.id for p in net.arch_parameters] == ["alpha.normal", "alpha.reduce"]
    with pytest.raises(ConfigError):
        Supernet(leads=1, classes=5, init_channels=4, cells=0, rng=rng)


def test_load_parameter_arrays_round_trip_and_guards(rng):
    net = Supernet(leads=1, classes=3, init_channels=4, cells=3, rng=rng)
    arrays = {k: v.copy() for k, v in net.all_parameter_arrays().items()}
    other = Supernet(leads=1, classes=3, init_channels=4, cells=3,
                     rng=np.random.Generator(np.random.PCG64(999)))
    other.load_parameter_arrays(arrays)
    for k, v in other.all_parameter_arrays().items():
        np.testing.assert_array_equal(v, arrays[k])

    missing = dict(arrays)
    missing.pop("alpha.normal")
    with pytest.raises(CheckpointError):
        other.load_parameter_arrays(missing)
    bad_shape = dict(arrays)
    bad_shape["alpha.normal"] = np.zeros((2, 2), dtype=np.float32)
    with pytest.raises(CheckpointError):
        other.load_parameter_arrays(bad_shape)
    with pytest.raises(CheckpointError):
        other.load_state_arrays({"nope": np.zeros(1)})


def test_search_config_validation():
    small_config().validate()
    for bad in (dict(epochs=0), dict(batch_size=1), dict(init_channels=0),
                dict(cells=2), dict(classes=1)):
        with pytest.raises(ConfigError):
            small_config(**bad).validate()


def test_search_run_requires_split_beats(tiny_dataset):
    from cardionas.pipeline import HeartbeatDataset
    test_only = HeartbeatDataset(
        windows=tiny_dataset.windows.copy(),
        labels=tiny_dataset.labels.copy(),
        splits=np.full(len(tiny_dataset), 2, dtype=np.uint8),
        record_ids=list(tiny_dataset.record_ids),
        r_peaks=tiny_dataset.r_peaks.copy())
    with pytest.raises(ConfigError):
        SearchRun(small_config(), test_only)


def test_search_epoch_bookkeeping(tiny_dataset):
    run = SearchRun(small_config(epochs=1), tiny_dataset)
    run.run_epoch()
    s = run.state
    assert s.epoch == 1
    assert len(s.train_loss) == len(s.val_loss) == 1
    assert np.isfinite(s.train_loss[0]) and np.isfinite(s.val_loss[0])
    assert len(s.alpha_normal_history) == 1
    assert s.alpha_normal_history[0].shape == (NUM_EDGES, NUM_OPS)
    # 96 search_train beats at batch 16 -> 6 alternating steps
    assert run.opt_w.step_count == 6
    assert run.opt_a.step_count == 6
    assert isinstance(run.genotype(), Genotype)


def test_search_is_seed_deterministic(tiny_dataset):
    a = SearchRun(small_config(epochs=1), tiny_dataset)
    a.run()
    b = SearchRun(small_config(epochs=1), tiny_dataset)
    b.run()
    assert a.checkpoint() == b.checkpoint()
    c = SearchRun(small_config(epochs=1, seed=5), tiny_dataset)
    c.run()
    assert a.checkpoint() != c.checkpoint()


def test_checkpoint_restore_resumes_bitwise(tiny_dataset):
    straight = SearchRun(small_config(), tiny_dataset)
    straight.run()  # 2 epochs, uninterrupted

    first = SearchRun(small_config(), tiny_dataset)
    first.run(epochs=1)
    blob = first.checkpoint()
    resumed = SearchRun.restore(blob, tiny_dataset)
    assert resumed.checkpoint() == blob  # re-emit before any step
    resumed.run()
    assert resumed.state.epoch == 2
    assert resumed.state.train_loss == straight.state.train_loss
    assert resumed.state.val_loss == straight.state.val_loss
    assert resumed.checkpoint() == straight.checkpoint()


def test_read_checkpoint_alphas(tiny_dataset):
    run = SearchRun(small_config(epochs=1), tiny_dataset)
    run.run()
    an, ar = read_checkpoint_alphas(run.checkpoint())
    np.testing.assert_array_equal(an, run.net.arch.alpha_normal.data)
    np.testing.assert_array_equal(ar, run.net.arch.alpha_reduce.data)


def test_restore_rejects_mismatched_dataset(tiny_dataset):
    from cardionas.synthetic import make_synthetic_dataset
    run = SearchRun(small_config(epochs=1), tiny_dataset)
    run.run()
    blob = run.checkpoint()
    wrong = make_synthetic_dataset(seed=7, per_class=10, length=32)
    with pytest.raises(CheckpointError):
        SearchRun.restore(blob, wrong)
    with pytest.raises(CheckpointError):
        SearchRun.restore(blob[:50], tiny_dataset)


def test_run_search_returns_valid_genotype(tiny_dataset):
    genotype, state = run_search(small_config(epochs=1), tiny_dataset)
    assert Genotype.from_json_text(genotype.to_json_text()) == genotype
    assert state.epoch == 1


# -- saturated mixing weights --------------------------------------------------

def saturated_alpha(choices: dict[int, int]) -> Parameter:
    """Rows at +-400 so the float64 softmax is exactly one-hot per edge."""
    a = np.full((NUM_EDGES, NUM_OPS), -400.0)
    for k in range(NUM_EDGES):
        a[k, choices.get(k, 9)] = 400.0  # default saturation: the zero op
    return Parameter(a, id="a", group="arch")


def test_cell_with_all_zero_alpha_outputs_zeros(rng):
    cell = MixedCell("cell", 3, 3, 3, reduction=False, reduction_prev=False,
                     rng=rng, dtype=np.float64)
    s0 = Tensor(rng.standard_normal((2, 3, 12)))
    s1 = Tensor(rng.standard_normal((2, 3, 12)))
    out = cell(s0, s1, saturated_alpha({}), training=True, tape=None)
    assert out.data.shape == (2, 12, 12)
    assert not out.data.any()


def test_cell_with_skip_from_second_input_tiles_it(rng):
    """skip_connect saturated on every edge leaving input node 1, zero
    elsewhere: each intermediate node reduces to the adapted s1, so the
    output is that state concatenated four times."""
    from cardionas.search_space import EDGES

    cell = MixedCell("cell", 3, 3, 3, reduction=False, reduction_prev=False,
                     rng=rng, dtype=np.float64)
    choices = {k: 8 for k, (pred, _) in enumerate(EDGES) if pred == 1}
    s0 = Tensor(rng.standard_normal((2, 3, 12)))
    s1 = Tensor(rng.standard_normal((2, 3, 12)))
    out = cell(s0, s1, saturated_alpha(choices), training=True, tape=None)
    adapted = cell.pre1(s1, None)
    want = np.concatenate([adapted.data] * 4, axis=1)
    np.testing.assert_array_equal(out.data, want)


# -- alternating-update group isolation ------------------------------------

def sha_of(params):
    import hashlib
    return {p.id: hashlib.sha256(p.data.tobytes()).hexdigest() for p in params}


def test_half_steps_touch_only_their_parameter_group(tiny_dataset):
    from cardionas.autodiff import Tape, backward, cross_entropy, frozen
    from cardionas.optim import clip_grad_norm

    run = SearchRun(small_config(), tiny_dataset)
    net = run.net
    ds = tiny_dataset
    x = Tensor(ds.windows[:8].astype(np.float32))
    y = ds.labels[:8].astype(np.int64)

    w_hash = sha_of(net.weight_parameters)
    a_hash = sha_of(net.arch_parameters)
    with frozen(net.weight_parameters):  # score update on the val batch
        tape = Tape()
        loss = cross_entropy(net.forward(x, training=True, tape=tape), y, tape)
        backward(loss, tape, parameters=net.arch_parameters)
        run.opt_a.step(net.arch_parameters)
    assert sha_of(net.weight_parameters) == w_hash
    assert all(sha_of(net.arch_parameters)[k] != v for k, v in a_hash.items())

    a_hash = sha_of(net.arch_parameters)
    with frozen(net.arch_parameters):  # weight update on the train batch
        tape = Tape()
        loss = cross_entropy(net.forward(x, training=True, tape=tape), y, tape)
        backward(loss, tape, parameters=net.weight_parameters)
        clip_grad_norm(net.weight_parameters, run.config.grad_clip)
        run.opt_w.step(net.weight_parameters)
    assert sha_of(net.arch_parameters) == a_hash
    assert sha_of(net.weight_parameters) != w_hash


# -- toy problem convergence -----------------------------------------------

def test_search_separates_two_easy_classes():
    """Sinusoid-vs-constant windows: ~200 alternating steps push the
    validation loss well below chance (ln 2)."""
    from cardionas.pipeline import Heartbeat, build_dataset

    g = np.random.Generator(np.random.PCG64(0))
    length = 32
    t = np.arange(length)
    beats = []
    for i in range(16):
        phase = g.uniform(0, 2 * np.pi)
        wave = np.sin(2 * np.pi * 3 * t / length + phase)[None, :]
        beats.append(Heartbeat(window=wave, label=0, record_id="sine", r_peak=i))
        flat = np.full((1, length), 0.7)
        beats.append(Heartbeat(window=flat, label=1, record_id="flat", r_peak=i))
    ds = build_dataset(beats, seed=0)
    cfg = small_config(epochs=67, batch_size=8, classes=2)  # 3 steps/epoch
    run = SearchRun(cfg, ds)
    run.run()
    assert run.opt_w.step_count == 201
    assert run.state.val_loss[-1] < np.log(2.0)
