import math

import numpy as np
import pytest

import deepdist.autodiff as ad
from deepdist.autodiff import checkpoint
from deepdist.autodiff.layers import lstm_init
from deepdist.errors import DataError, ShapeError


def grad_check(build, arrays, rtol=1e-6, atol=1e-8, h=1e-6):
    """Compare reverse-mode gradients of ``sum(w * build(*leaves))`` with central differences."""
    leaves = [ad.Tensor(a.copy(), requires_grad=True) for a in arrays]
    out = build(*leaves)
    w = np.random.default_rng(99).normal(size=out.shape)
    loss = ad.reduce_sum(ad.mul(out, w))
    loss.backward()
    for k, a in enumerate(arrays):
        num = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            plus, minus = [x.copy() for x in arrays], [x.copy() for x in arrays]
            plus[k][idx] += h
            minus[k][idx] -= h
            fp = np.sum(build(*[ad.Tensor(x) for x in plus]).data * w)
            fm = np.sum(build(*[ad.Tensor(x) for x in minus]).data * w)
            num[idx] = (fp - fm) / (2 * h)
        np.testing.assert_allclose(leaves[k].grad, num, rtol=rtol, atol=atol, err_msg=f"input {k}")


rng = np.random.default_rng(0)
A = rng.normal(size=(3, 4))
B = rng.normal(size=(3, 4))
POS = rng.uniform(0.5, 2.0, size=(3, 4))


# --- core ops -------------------------------------------------------------------


def test_matmul_identity_and_softplus():
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(ad.matmul(m, np.eye(2)).data, m)
    assert ad.softplus(ad.Tensor(0.0)).item() == pytest.approx(math.log(2), abs=1e-15)


@pytest.mark.parametrize("name, build, arrays", [
    ("add", ad.add, [A, B]),
    ("sub", ad.sub, [A, B]),
    ("mul", ad.mul, [A, B]),
    ("div", ad.div, [A, POS]),
    ("scalar_mul", lambda a, s: ad.mul(a, s), [A, np.array(1.7)]),
    ("matmul", ad.matmul, [A, rng.normal(size=(4, 2))]),
    ("tanh", ad.tanh, [A]),
    ("sigmoid", ad.sigmoid, [A]),
    ("relu", ad.relu, [A + 0.05 * np.sign(A)]),
    ("exp", ad.exp, [A]),
    ("log", ad.log, [POS]),
    ("softplus", ad.softplus, [3 * A]),
    ("slice", lambda a: ad.slice_(a, (slice(None), slice(1, 3))), [A]),
    ("concat", lambda a, b: ad.concat([a, b], axis=1), [A, B]),
    ("reshape", lambda a: ad.reshape(a, (2, 6)), [A]),
    ("reduce_sum", lambda a: ad.reduce_sum(a, axis=0), [A]),
    ("reduce_mean", lambda a: ad.reduce_mean(a), [A]),
    ("bias_add", ad.bias_add, [A, rng.normal(size=4)]),
])
def test_core_op_gradients(name, build, arrays):
    grad_check(build, arrays)


def test_shape_mismatch_names_op():
    with pytest.raises(ShapeError, match=r"matmul.*\(3, 4\).*\(3, 4\)"):
        ad.matmul(A, B)
    with pytest.raises(ShapeError, match="add"):
        ad.add(A, np.ones((2, 2)))


def test_graph_visits_shared_node_once():
    x = ad.Tensor(np.array([1.5, -0.5]), requires_grad=True)
    y = ad.tanh(x)
    z = ad.reduce_sum(ad.add(ad.mul(y, y), y))
    graph = ad.Graph.from_root(z)
    assert len({id(n) for n in graph.nodes}) == len(graph.nodes)
    assert graph.nodes.index(x) < graph.nodes.index(y) < graph.nodes.index(z)
    z.backward()
    t = np.tanh(x.data)
    np.testing.assert_allclose(x.grad, (2 * t + 1) * (1 - t * t), rtol=1e-14)


# --- layers ---------------------------------------------------------------------


def test_dense_examples():
    assert np.all(ad.dense(np.ones((2, 3)), np.zeros((3, 4)), np.zeros(4)).data == 0)
    out = ad.dense(np.array([[2.0, 3.0]]), np.array([[1.0], [1.0]]), np.array([0.0]))
    np.testing.assert_array_equal(out.data, [[5.0]])


@pytest.mark.parametrize("act", ["linear", "tanh", "sigmoid"])
def test_dense_gradient(act):
    grad_check(lambda x, w, b: ad.dense(x, w, b, act),
               [rng.normal(size=(5, 3)), rng.normal(size=(3, 2)), rng.normal(size=2)])


def _lstm_reference(x, wx, wh, bias, return_sequences):
    """Plain composition of core ops, gate order (input, forget, candidate, output)."""
    b, t, _ = x.shape
    hdim = wh.shape[0]
    hs = ad.Tensor(np.zeros((b, hdim)))
    cs = ad.Tensor(np.zeros((b, hdim)))
    outs = []
    for s in range(t):
        xs = ad.reshape(ad.slice_(x, (slice(None), s, slice(None))), (b, -1))
        z = ad.bias_add(ad.add(ad.matmul(xs, wx), ad.matmul(hs, wh)), bias)
        i = ad.sigmoid(ad.slice_(z, (slice(None), slice(0, hdim))))
        f = ad.sigmoid(ad.slice_(z, (slice(None), slice(hdim, 2 * hdim))))
        g = ad.tanh(ad.slice_(z, (slice(None), slice(2 * hdim, 3 * hdim))))
        o = ad.sigmoid(ad.slice_(z, (slice(None), slice(3 * hdim, 4 * hdim))))
        cs = ad.add(ad.mul(f, cs), ad.mul(i, g))
        hs = ad.mul(o, ad.tanh(cs))
        outs.append(ad.reshape(hs, (b, 1, hdim)))
    return ad.concat(outs, axis=1) if return_sequences else hs


def test_lstm_zero_weights_give_zero_output():
    x = rng.normal(size=(2, 6, 3))
    out = ad.lstm_layer(x, np.zeros((3, 8)), np.zeros((2, 8)), np.zeros(8))
    assert np.all(out.data == 0.0)


def test_lstm_single_step_consistency():
    r = np.random.default_rng(1)
    x = r.normal(size=(3, 1, 2))
    wx, wh, bias = lstm_init(r, 2, 5)
    seq = ad.lstm_layer(x, wx, wh, bias, return_sequences=True).data
    last = ad.lstm_layer(x, wx, wh, bias, return_sequences=False).data
    np.testing.assert_array_equal(seq[:, 0, :], last)


@pytest.mark.parametrize("return_sequences", [True, False])
def test_lstm_matches_core_op_composition(return_sequences):
    r = np.random.default_rng(2)
    arrays = [r.normal(size=(3, 4, 2)), *(0.5 * v for v in lstm_init(r, 2, 3))]
    fused = ad.lstm_layer(*arrays, return_sequences=return_sequences).data
    ref = _lstm_reference(*[ad.Tensor(a) for a in arrays], return_sequences).data
    np.testing.assert_allclose(fused, ref, atol=1e-14)


@pytest.mark.parametrize("return_sequences", [True, False])
def test_lstm_gradient_seed3(return_sequences):
    r = np.random.default_rng(3)
    x = r.normal(size=(2, 5, 3))
    wx, wh, bias = (r.normal(0, 0.6, size=s) for s in [(3, 16), (4, 16), (16,)])
    grad_check(lambda *a: ad.lstm_layer(*a, return_sequences=return_sequences),
               [x, wx, wh, bias], rtol=1e-5)


def test_conv_and_pool_examples():
    x = np.array([1.0, 2.0, 3.0, 4.0]).reshape(1, 4, 1)
    conv = ad.conv1d(x, np.ones((2, 1, 1)), np.zeros(1))
    np.testing.assert_array_equal(conv.data.ravel(), [3.0, 5.0, 7.0])
    np.testing.assert_array_equal(ad.maxpool1d(conv, 2).data.ravel(), [5.0])
    with pytest.raises(ShapeError):
        ad.conv1d(np.ones((1, 1, 1)), np.ones((2, 1, 1)), np.zeros(1))


def test_maxpool_ties_route_to_first_index():
    x = ad.Tensor(np.array([2.0, 2.0, 1.0, 3.0]).reshape(1, 4, 1), requires_grad=True)
    ad.reduce_sum(ad.maxpool1d(x, 2)).backward()
    np.testing.assert_array_equal(x.grad.ravel(), [1.0, 0.0, 0.0, 1.0])


def test_conv_pool_composite_gradient_seed5():
    r = np.random.default_rng(5)
    x = r.normal(size=(2, 7, 3))
    kern = r.normal(size=(2, 3, 4))
    bias = r.normal(size=4)
    grad_check(lambda a, k, b: ad.flatten(ad.maxpool1d(ad.conv1d(a, k, b, "relu"), 2)),
               [x, kern, bias], rtol=1e-5)


def test_dropout():
    x = ad.Tensor(np.arange(6.0))
    assert ad.dropout(x, 0.0, True, np.random.default_rng(0)) is x
    assert ad.dropout(x, 0.3, False) is x
    vals = np.full(100_000, 2.0)
    out = ad.dropout(ad.Tensor(vals), 0.02, True, np.random.default_rng(4)).data
    # mean of 2 * Bernoulli(0.98) / 0.98: standard error sqrt(p(1-p)/n) * 2 / 0.98
    se = math.sqrt(0.02 * 0.98 / vals.size) * 2.0 / 0.98
    assert abs(out.mean() - 2.0) < 3 * se
    assert set(np.unique(out)) <= {0.0, 2.0 / 0.98}


def test_dropout_gradient_uses_same_mask():
    x = ad.Tensor(np.ones(50), requires_grad=True)
    out = ad.dropout(x, 0.5, True, np.random.default_rng(1))
    ad.reduce_sum(out).backward()
    np.testing.assert_array_equal(x.grad, out.data)


# --- optimiser --------------------------------------------------------------------


def test_adam_first_step():
    (p,), state = ad.adam_step([np.array(0.0)], [np.array(1.0)], ad.AdamState())
    assert p == pytest.approx(-0.002 / (1 + 1e-8), rel=1e-12)
    assert state.step == 1


def test_adam_zero_grads_keep_params():
    params = [np.array([1.0, -2.0]), np.ones((2, 2))]
    state = ad.AdamState()
    for _ in range(20):
        params, state = ad.adam_step(params, [np.zeros(2), np.zeros((2, 2))], state)
    np.testing.assert_array_equal(params[0], [1.0, -2.0])
    np.testing.assert_array_equal(params[1], np.ones((2, 2)))


def test_adam_against_hand_recursion():
    g_seq = [np.array([0.3]), np.array([-1.2]), np.array([0.7])]
    p, state = [np.array([0.5])], ad.AdamState(lr=0.01)
    m = v = 0.0
    ref = 0.5
    for t, g in enumerate(g_seq, start=1):
        p, state = ad.adam_step(p, [g], state)
        m = 0.9 * m + 0.1 * g[0]
        v = 0.999 * v + 0.001 * g[0] ** 2
        ref -= 0.01 * (m / (1 - 0.9**t)) / (math.sqrt(v / (1 - 0.999**t)) + 1e-8)
    assert p[0][0] == pytest.approx(ref, rel=1e-14)


def test_adam_deterministic():
    def run():
        r = np.random.default_rng(7)
        params, state = [r.normal(size=(3, 3))], ad.AdamState()
        for _ in range(30):
            params, state = ad.adam_step(params, [r.normal(size=(3, 3))], state)
        return params[0]

    assert run().tobytes() == run().tobytes()


def test_l2_penalty():
    loss, grads = ad.l2_penalty([np.array([3.0])], 0.002)
    assert loss == pytest.approx(0.018, abs=1e-15)
    assert grads[0][0] == pytest.approx(0.012, abs=1e-15)
    assert ad.l2_penalty([np.array([3.0])], 0.0)[0] == 0.0
    w = rng.normal(size=(4, 3))
    _, g = ad.l2_penalty([w], 0.002)
    h = 1e-6
    for idx in [(0, 0), (2, 1), (3, 2)]:
        wp, wm = w.copy(), w.copy()
        wp[idx] += h
        wm[idx] -= h
        fd = (ad.l2_penalty([wp], 0.002)[0] - ad.l2_penalty([wm], 0.002)[0]) / (2 * h)
        assert g[0][idx] == pytest.approx(fd, rel=1e-6)


def test_clip_global_norm():
    grads = [np.array([3.0]), np.array([4.0])]
    clipped, norm = ad.clip_global_norm(grads, 1.0)
    assert norm == 5.0
    assert math.hypot(clipped[0][0], clipped[1][0]) == pytest.approx(1.0, abs=1e-15)
    same, _ = ad.clip_global_norm(grads, 10.0)
    np.testing.assert_array_equal(same[0], grads[0])


# --- checkpoints -----------------------------------------------------------------


def test_checkpoint_round_trip(tmp_path):
    tensors = {"w": rng.normal(size=(3, 2)), "b": rng.normal(size=2), "s": np.array(1.5)}
    path = tmp_path / "m.ckpt"
    checkpoint.save(path, tensors)
    blob = path.read_bytes()
    assert blob[:6] == b"DCKPT1"
    back = checkpoint.load(path)
    assert list(back) == list(tensors)
    for k in tensors:
        np.testing.assert_array_equal(back[k], tensors[k])


def test_checkpoint_rejects_corruption():
    blob = checkpoint.dumps({"w": np.ones(3)})
    with pytest.raises(DataError):
        checkpoint.loads(b"XXXXXX" + blob[6:])
    with pytest.raises(DataError):
        checkpoint.loads(blob[:-4])
    with pytest.raises(DataError):
        checkpoint.loads(blob + b"\x00")
