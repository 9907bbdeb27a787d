import numpy as np
import pytest

from oracles import central_diff, rel_err
from randecoc import nncore
from randecoc.errors import EmptyVector, InconsistentDims, LengthMismatch, ParseError, ShapeMismatch, TraceMismatch
from randecoc.nncore import Dense, Dropout, Network, ReLU, RmsPropState, Tanh


def test_init_shapes_and_bound():
    net = nncore.init_network([Dense(2, 3)], seed=1)
    W, b = net.params()
    assert W.shape == (3, 2) and b.shape == (3,)
    assert np.all(np.abs(W) <= np.sqrt(6 / 5)) and np.all(b == 0)


def test_init_deterministic():
    spec = [Dense(4, 8), ReLU(), Dense(8, 2)]
    a, b = Network(spec, 3), Network(spec, 3)
    for x, y in zip(a.params(), b.params()):
        assert x.tobytes() == y.tobytes()
    assert not np.array_equal(Network(spec, 4).params()[0], a.params()[0])


@pytest.mark.parametrize("spec", [[], [ReLU()], [Dense(2, 3), Dense(4, 1)], [Dense(0, 1)], [Dense(2, 2), Dropout(1.0)]])
def test_bad_specs(spec):
    with pytest.raises(InconsistentDims):
        Network(spec)


def test_forward_examples():
    net = Network([Dense(2, 2)])
    net.set_params([np.eye(2), np.zeros(2)])
    np.testing.assert_array_equal(net([3.0, -2.0]), [3.0, -2.0])

    net = Network([Dense(1, 1), Tanh()])
    net.set_params([np.array([[2.0]]), np.array([1.0])])
    assert net([0.0])[0] == pytest.approx(0.761594, abs=1e-6)
    assert net([0.0])[0] == np.tanh(1.0)


def test_dropout_eval_identity():
    net = Network([Dense(3, 3), Dropout(0.5)])
    net.set_params([np.eye(3), np.zeros(3)])
    x = np.array([1.0, -2.0, 3.0])
    np.testing.assert_array_equal(net.forward(x, train=False)[0], x)


def test_dropout_train_expectation():
    net = Network([Dense(4, 4), Dropout(0.5)], seed=9)
    net.set_params([np.eye(4), np.zeros(4)])
    x = np.array([1.0, -2.0, 0.5, 3.0])
    n = 20000
    samples = np.array([net.forward(x, train=True)[0] for _ in range(n)])
    assert set(np.unique(samples / x).tolist()) <= {0.0, 2.0}
    se = samples.std(axis=0) / np.sqrt(n)
    assert np.all(np.abs(samples.mean(axis=0) - x) < 3 * se)


def test_forward_length_mismatch():
    with pytest.raises(LengthMismatch):
        Network([Dense(3, 1)])([1.0, 2.0])


def test_eval_forward_is_pure():
    net = Network([Dense(5, 4), ReLU(), Dropout(0.3), Dense(4, 1), Tanh()], seed=2)
    x = np.linspace(-1, 1, 5)
    assert net(x).tobytes() == net(x).tobytes()


def test_mse_loss():
    v, g = nncore.mse_loss([1.0, -1.0], [1.0, -1.0])
    assert v == 0 and np.all(g == 0)
    v, g = nncore.mse_loss([1.0, -1.0], [1.0, 1.0])
    assert v == 2.0 and g.tolist() == [0.0, -2.0]
    v, g = nncore.mse_loss([0.0], [1.0])
    assert v == 1.0 and g.tolist() == [-2.0]
    with pytest.raises(LengthMismatch):
        nncore.mse_loss([1.0], [1.0, 2.0])
    with pytest.raises(EmptyVector):
        nncore.mse_loss([], [])


def test_mse_grad_matches_finite_differences():
    rng = np.random.default_rng(0)
    pred, target = rng.normal(size=7), rng.normal(size=7)
    _, g = nncore.mse_loss(pred, target)
    num = central_diff(lambda: nncore.mse_loss(pred, target)[0], pred)
    assert rel_err(g, num) < 1e-6


def test_backward_hand_example():
    net = Network([Dense(1, 1)])
    net.set_params([np.array([[2.0]]), np.array([0.0])])
    y, tr = net.forward([3.0])
    gs = net.backward(tr, [1.0])
    assert gs.params[0].tolist() == [[3.0]] and gs.params[1].tolist() == [1.0]
    assert gs.input.tolist() == [2.0]


def test_backward_zero_grad():
    net = Network([Dense(3, 4), ReLU(), Dense(4, 2), Tanh()], seed=1)
    _, tr = net.forward(np.ones(3))
    gs = net.backward(tr, np.zeros(2))
    assert all(np.all(g == 0) for g in gs.params) and np.all(gs.input == 0)


def test_backward_trace_mismatch():
    a = Network([Dense(2, 1)], 0)
    b = Network([Dense(2, 1)], 1)
    _, tr = a.forward([1.0, 2.0])
    with pytest.raises(TraceMismatch):
        b.backward(tr, [1.0])
    with pytest.raises(TraceMismatch):
        a.backward(tr, [1.0, 2.0])


def test_relu_kink_passes_zero():
    net = Network([Dense(1, 1), ReLU()])
    net.set_params([np.array([[1.0]]), np.array([0.0])])
    _, tr = net.forward([0.0])
    assert net.backward(tr, [1.0]).params[0][0, 0] == 0.0


SPECS = {
    "dense": [Dense(5, 3)],
    "relu": [Dense(5, 6), ReLU(), Dense(6, 3)],
    "tanh": [Dense(5, 6), Tanh(), Dense(6, 3), Tanh()],
    "dropout": [Dense(5, 6), ReLU(), Dropout(0.4), Dense(6, 3), Tanh()],
    "deep": [Dense(5, 8), ReLU(), Dropout(0.5), Dense(8, 6), ReLU(), Dropout(0.2), Dense(6, 4), Tanh(), Dense(4, 1), Tanh()],
}


def gradient_check(spec, seed, train, batch=3):
    """Max relative error between backprop and central differences over all arrays."""
    rng = np.random.default_rng(seed)
    net = Network(spec, seed)
    for p in net.params():
        p += rng.normal(scale=0.1, size=p.shape)  # nonzero biases
    x = rng.normal(size=(batch, spec[0].in_dim))
    r = rng.normal(size=(batch, net.out_dim))
    mask_seed = int(rng.integers(1 << 30))

    def loss():
        net.rng = np.random.default_rng(mask_seed)  # same dropout mask every call
        return float(np.sum(net.forward(x, train=train)[0] * r))

    net.rng = np.random.default_rng(mask_seed)
    _, tr = net.forward(x, train=train)
    gs = net.backward(tr, r)
    errs = [rel_err(g, central_diff(loss, p)) for p, g in zip(net.params(), gs.params)]
    errs.append(rel_err(gs.input, central_diff(loss, x)))
    return max(errs)


@pytest.mark.parametrize("name", list(SPECS))
@pytest.mark.parametrize("train", [False, True])
def test_gradient_check(name, train):
    for seed in range(3):
        assert gradient_check(SPECS[name], seed, train) < 1e-6


def test_rmsprop_single_step():
    w = np.array([1.0])
    st = RmsPropState.for_params([w])
    nncore.rmsprop_step([w], [np.array([1.0])], st)
    assert st.accum[0][0] == pytest.approx(0.01, abs=1e-15)
    expected = 1.0 - 3e-4 * 1.0 / (np.sqrt(0.01) + 1e-8)
    assert w[0] == pytest.approx(expected, abs=1e-15)
    assert abs(w[0] - 0.997) < 1e-9


def test_rmsprop_zero_grad_and_two_steps():
    w = np.array([0.5, -0.5])
    st = RmsPropState(accum=[np.array([0.04, 1.0])])
    nncore.rmsprop_step([w], [np.zeros(2)], st)
    assert w.tolist() == [0.5, -0.5]
    np.testing.assert_allclose(st.accum[0], [0.0396, 0.99], rtol=1e-15)

    w = np.array([1.0])
    st = RmsPropState.for_params([w])
    for _ in range(2):
        nncore.rmsprop_step([w], [np.array([1.0])], st)
    assert st.accum[0][0] == pytest.approx(0.0199, abs=1e-15)


def test_rmsprop_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        nncore.rmsprop_step([np.zeros(2)], [np.zeros(3)], RmsPropState())


def test_rmsprop_state_validation():
    with pytest.raises(ValueError):
        RmsPropState(decay=1.0)
    with pytest.raises(ValueError):
        RmsPropState(lr=0.0)


def test_checkpoint_roundtrip(tmp_path):
    spec = SPECS["deep"]
    net = Network(spec, 5)
    path = tmp_path / "n.ecnn"
    nncore.save_network(net, path)
    raw = path.read_bytes()
    assert raw[:4] == b"ECNN"
    assert int.from_bytes(raw[4:8], "little") == 1 and int.from_bytes(raw[8:12], "little") == 4
    back = nncore.load_network(path, spec)
    for a, b in zip(net.params(), back.params()):
        assert a.tobytes() == b.tobytes()
    assert nncore.params_to_bytes(back) == raw


@pytest.mark.parametrize("mutate", [lambda r: b"XXXX" + r[4:], lambda r: r[:-3], lambda r: r + b"\0"])
def test_checkpoint_corrupt(tmp_path, mutate):
    raw = nncore.params_to_bytes(Network(SPECS["relu"], 0))
    with pytest.raises(ParseError):
        nncore.params_from_bytes(mutate(raw))


def test_checkpoint_wrong_spec(tmp_path):
    path = tmp_path / "n.ecnn"
    nncore.save_network(Network(SPECS["relu"], 0), path)
    with pytest.raises(ShapeMismatch):
        nncore.load_network(path, SPECS["deep"])
