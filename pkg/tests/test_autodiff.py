import numpy as np
import pytest

from trajgroup import autodiff as ad
from trajgroup.autodiff import Tensor


def _numeric_grad(fn, x, h=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        up = fn(x)
        x[idx] = old - h
        down = fn(x)
        x[idx] = old
        g[idx] = (up - down) / (2 * h)
    return g


def _check(build, *shapes, seed=0, atol=1e-7):
    """Gradient of sum(build(*tensors) * w) against central differences for every input."""
    rng = np.random.default_rng(seed)
    arrays = [rng.normal(size=s) for s in shapes]
    weights = None

    def value(*arrs):
        nonlocal weights
        out = build(*[Tensor(a) for a in arrs]).data
        if weights is None:
            weights = rng.normal(size=out.shape)
        return float(np.sum(out * weights))

    value(*arrays)
    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    out = build(*tensors)
    ad.sum(out * weights).backward()
    for k, (a, t) in enumerate(zip(arrays, tensors)):
        def partial(x, k=k):
            args = list(arrays)
            args[k] = x
            return value(*args)

        np.testing.assert_allclose(t.grad, _numeric_grad(partial, a.copy()), rtol=1e-6, atol=atol)


@pytest.mark.parametrize(
    "name, build, shapes",
    [
        ("add broadcast", lambda a, b: a + b, [(3, 4), (4,)]),
        ("sub", lambda a, b: a - b, [(2, 3), (2, 3)]),
        ("mul broadcast", lambda a, b: a * b, [(2, 1, 3), (4, 3)]),
        ("matmul", lambda a, b: ad.matmul(a, b), [(3, 4), (4, 2)]),
        ("batched matmul", lambda a, b: ad.matmul(a, b), [(2, 3, 4), (4, 5)]),
        ("square", lambda a: ad.square(a), [(5,)]),
        ("exp", lambda a: ad.exp(a), [(2, 3)]),
        ("tanh", lambda a: ad.tanh(a), [(2, 3)]),
        ("sigmoid", lambda a: ad.sigmoid(a), [(2, 3)]),
        ("sum axis", lambda a: ad.sum(a, axis=1), [(3, 4)]),
        ("mean", lambda a: ad.mean(a, axis=-1), [(3, 4)]),
        ("reshape", lambda a: ad.reshape(a, (6, 2)), [(3, 4)]),
        ("broadcast_to", lambda a: ad.broadcast_to(a, (4, 2, 3)), [(2, 3)]),
        ("slice", lambda a: a[..., 1:3], [(3, 4)]),
        ("fancy index", lambda a: a[np.array([0, 2, 2])], [(3, 4)]),
        ("concat", lambda a, b: ad.concat([a, b], axis=-1), [(2, 3), (2, 1)]),
        ("stack", lambda a, b: ad.stack([a, b], axis=1), [(2, 3), (2, 3)]),
        ("min_over", lambda a: ad.min_over(a, axis=0), [(4, 5)]),
    ],
)
def test_op_gradients(name, build, shapes):
    _check(build, *shapes)


def test_relu_gradient_away_from_kink():
    x = Tensor(np.array([-2.0, -0.5, 0.5, 3.0]), requires_grad=True)
    ad.sum(ad.relu(x)).backward()
    assert x.grad.tolist() == [0, 0, 1, 1]


def test_masked_max():
    a = Tensor(np.array([[1.0, 5.0, 3.0], [2.0, 0.0, 9.0]]), requires_grad=True)
    mask = np.array([[True, False, True], [False, False, False]])
    out = ad.masked_max(a, mask, axis=-1)
    assert out.data.tolist() == [3.0, 0.0]
    ad.sum(out).backward()
    assert a.grad.tolist() == [[0, 0, 1], [0, 0, 0]]


def test_lstm_cell_matches_gatewise_reference():
    rng = np.random.default_rng(4)
    x, h, c = rng.normal(size=(3, 2)), rng.normal(size=(3, 5)), rng.normal(size=(3, 5))
    wx, wh, b = rng.normal(size=(2, 20)), rng.normal(size=(5, 20)), rng.normal(size=20)
    pre = x @ wx + h @ wh + b
    sig = lambda v: 1 / (1 + np.exp(-v))
    i, f, g, o = sig(pre[:, :5]), sig(pre[:, 5:10]), np.tanh(pre[:, 10:15]), sig(pre[:, 15:])
    c_new = f * c + i * g
    out = ad.lstm_cell(x, h, c, wx, wh, b).data
    np.testing.assert_allclose(out, np.concatenate([o * np.tanh(c_new), c_new], axis=1), rtol=1e-13)
    _check(lambda *t: ad.lstm_cell(*t), (2, 3, 2), (2, 3, 5), (2, 3, 5), (2, 20), (5, 20), (20,))


def test_shared_subexpression_accumulates():
    x = Tensor(np.array([1.5, -2.0]), requires_grad=True)
    y = x * x + x
    ad.sum(y * y).backward()
    expected = 2 * (x.data**2 + x.data) * (2 * x.data + 1)
    np.testing.assert_allclose(x.grad, expected)
