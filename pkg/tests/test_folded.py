import numpy as np
import pytest

from frnn.cells import param_count_shared
from frnn.folded import ConvSpec, FoldedStack, LayerSpec, StateSet, TopologySpec, cost_report
from frnn.tensor import Tensor, make_rng, no_grad


def small_spec(image=(1, 8, 8)):
    return TopologySpec(pre_convs=[ConvSpec(4, 3, "tanh")],
                        bgru_layers=[LayerSpec(6, 3, True), LayerSpec(6, 3, False), LayerSpec(8, 1, True)],
                        image=image)


@pytest.fixture
def stack():
    return FoldedStack.create(small_spec(), make_rng(0))


@pytest.fixture
def frames():
    return make_rng(1).uniform(0, 1, (2, 6, 1, 8, 8)).astype(np.float32)


def test_paper_topology_encodes_table():
    spec = TopologySpec.paper()
    assert [c.channels for c in spec.pre_convs] == [32, 64]
    assert all(c.kernel == 5 and c.activation == "tanh" for c in spec.pre_convs)
    assert [l.channels for l in spec.bgru_layers] == [128, 128, 256, 256, 512, 512, 256, 256]
    assert [l.kernel for l in spec.bgru_layers] == [5, 5, 5, 5, 3, 3, 3, 3]
    assert [l.pooled for l in spec.bgru_layers] == [True, False] * 4


def test_paper_state_shapes():
    shapes = FoldedStack.create(TopologySpec.paper()).reset_states(2).shapes()
    assert shapes == [(2, 64, 64, 64), (2, 128, 32, 32), (2, 128, 32, 32), (2, 256, 16, 16),
                      (2, 256, 16, 16), (2, 512, 8, 8), (2, 512, 8, 8), (2, 256, 4, 4), (2, 256, 4, 4)]


def test_pool_divisibility_checked():
    with pytest.raises(ValueError, match="divisible"):
        small_spec(image=(1, 6, 6))


def test_reset_states_zero_and_pure(stack):
    a, b = stack.reset_states(3), stack.reset_states(3)
    assert a.shapes() == b.shapes()
    assert all(np.all(t.data == 0) for t in a.h)
    with pytest.raises(ValueError):
        stack.reset_states(0)


def test_encode_zero_weights():
    stack = FoldedStack.create(small_spec())
    stack.pre[0].bias.data[:] = [0.1, -0.2, 0.3, 0.0]
    frame = Tensor(make_rng(2).uniform(0, 1, (2, 1, 8, 8)))
    states = stack.encode_frame(frame, stack.reset_states(2))
    np.testing.assert_allclose(states[0].data, np.tanh(stack.pre[0].bias.data)[None, :, None, None]
                               * np.ones((2, 4, 8, 8)), rtol=1e-6)
    assert all(np.all(t.data == 0) for t in states.h[1:])


def test_encode_shape_invariant_and_deterministic(stack, frames):
    states = stack.reset_states(2)
    shapes = states.shapes()
    for t in range(6):
        states = stack.encode_frame(Tensor(frames[:, t]), states)
        assert states.shapes() == shapes
    again = stack.reset_states(2)
    for t in range(6):
        again = stack.encode_frame(Tensor(frames[:, t]), again)
    assert all(np.array_equal(a.data, b.data) for a, b in zip(states.h, again.h))


def test_encode_rejects_wrong_frame(stack):
    with pytest.raises(ValueError):
        stack.encode_frame(Tensor(np.zeros((2, 1, 4, 4))), stack.reset_states(2))


def test_predict_shape_and_range(stack, frames):
    states = stack.reset_states(2)
    for t in range(3):
        states = stack.encode_frame(Tensor(frames[:, t]), states)
    frame, states2 = stack.predict_frame(states)
    assert frame.shape == (2, 1, 8, 8)
    assert np.all((frame.data > 0) & (frame.data < 1))
    assert states2.shapes() == states.shapes()


def _predict_many(stack, states, n, corrupt):
    out = []
    for _ in range(n):
        frame, states = stack.predict_frame(states)
        out.append(frame.data.copy())
        if corrupt:
            frame.data[...] = np.nan
    return out


def test_emitted_frames_are_never_read(stack, frames):
    with no_grad():
        states = stack.reset_states(2)
        for t in range(3):
            states = stack.encode_frame(Tensor(frames[:, t]), states)
        clean = _predict_many(stack, states, 10, corrupt=False)
        dirty = _predict_many(stack, states, 10, corrupt=True)
    assert all(np.array_equal(a, b) for a, b in zip(clean, dirty))


def test_run_sequence_shapes_and_counts(stack, frames):
    out = stack.run_sequence(frames[:, :4], 2)
    assert out.shape == (2, 2, 1, 8, 8)
    assert stack.calls["pre"] == 4 and stack.calls["post"] == 2


def test_run_sequence_minimal_and_deterministic(stack, frames):
    a = stack.run_sequence(frames[:, :1], 1).data
    b = stack.run_sequence(frames[:, :1], 1).data
    assert a.shape == (2, 1, 1, 8, 8) and np.array_equal(a, b)


def test_run_sequence_errors(stack):
    with pytest.raises(ValueError):
        stack.run_sequence(np.zeros((2, 0, 1, 8, 8)), 1)
    with pytest.raises(ValueError):
        stack.run_sequence(np.zeros((2, 1, 1, 8, 8)), 0)


def test_truncate_identity_and_composition(stack):
    assert stack.truncate(0) == stack
    for k in range(stack.n_layers + 1):
        for j in range(stack.n_layers - k + 1):
            assert stack.truncate(k).truncate(j) == stack.truncate(k + j)
    with pytest.raises(ValueError):
        stack.truncate(4)
    with pytest.raises(ValueError):
        stack.truncate(-1)


def test_truncate_all_layers_is_pre_then_post(stack, frames):
    bare = stack.truncate(stack.n_layers)
    with no_grad():
        states = bare.reset_states(2)
        for t in range(3):
            states = bare.encode_frame(Tensor(frames[:, t]), states)
        frame, after = bare.predict_frame(states)
        direct = bare.post_transform(bare.pre_transform(Tensor(frames[:, 2])))
    assert len(after) == 1
    assert np.array_equal(frame.data, direct.data)


def test_truncate_paper_topology():
    stack = FoldedStack.create(TopologySpec.paper()).truncate(2)
    assert stack.n_layers == 6
    assert stack.reset_states(1).shapes()[-1] == (1, 512, 8, 8)


@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_truncated_runs_keep_shape_and_range(stack, frames, k):
    with no_grad():
        out = stack.truncate(k).run_sequence(frames[:, :3], 3).data
    assert out.shape == (2, 3, 1, 8, 8) and np.all((out >= 0) & (out <= 1))


def test_shallow_perturbation_does_not_reach_deeper_states(stack, frames):
    n = stack.n_layers
    m = n - 1
    with no_grad():
        states = stack.reset_states(2)
        for t in range(3):
            states = stack.encode_frame(Tensor(frames[:, t]), states)
        _, states = stack.predict_frame(states)
        noisy = StateSet([Tensor(t.data + (1.0 if i < m else 0.0)) for i, t in enumerate(states.h)])
        _, clean_next = stack.predict_frame(states)
        _, noisy_next = stack.predict_frame(noisy)
    for l in range(m, n + 1):
        assert np.array_equal(clean_next[l].data, noisy_next[l].data)
    assert not np.array_equal(clean_next[0].data, noisy_next[0].data)


def test_cost_counts_paper():
    rep = cost_report(TopologySpec.paper(), 10, 10)
    assert rep.gate_evals_folded == 170 and rep.gate_evals_bridged == 320
    assert rep.memory_ratio == 2
    assert rep.weights_folded == sum(param_count_shared(a, b, k * k)
                                     for a, b, k, _ in TopologySpec.paper().layer_dims())
    assert rep.layers[0]["ratio"] == pytest.approx(1.4444444, abs=1e-6)


def test_cost_uniform_dense_ratio():
    spec = TopologySpec([ConvSpec(16, 1)], [LayerSpec(16, 1)] * 4, image=(1, 8, 8))
    rep = cost_report(spec, 3, 5)
    assert rep.weight_ratio == 1.5
    assert rep.memory_ratio == 2


def test_cost_matches_enumerated_model():
    stack = FoldedStack.create(small_spec(), make_rng(0))
    rep = cost_report(stack.spec, 2, 2)
    assert rep.weights_folded == sum(l.weight_count() for l in stack.layers)


@pytest.mark.slow
def test_paper_topology_ten_in_ten_out():
    stack = FoldedStack.create(TopologySpec.paper(), make_rng(0))
    inputs = make_rng(1).uniform(0, 1, (1, 10, 1, 64, 64))
    with no_grad():
        out = stack.run_sequence(inputs, 10)
    assert out.shape == (1, 10, 1, 64, 64)
    assert np.all((out.data >= 0) & (out.data <= 1))


def test_cost_report_without_recurrent_layers():
    spec = TopologySpec([ConvSpec(2)], [LayerSpec(3)], image=(1, 8, 8)).truncated(1)
    report = cost_report(spec, 2, 2)
    assert report.weights_folded == 0 and np.isnan(report.weight_ratio)
    assert report.memory_ratio == 2.0
