import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from pnpreg.tensor import (
    Adam, AdamState, DimensionError, Tensor, absolute, adam_step, backward, concat, conv2d,
    elementwise, index, mean_all, mul, no_grad, pad2d, relu, resample, scale, square, sub,
    sum_all,
)
from pnpreg.tensor.serialize import (
    FormatError, decode_ptns, encode_ptns, load_ptns, save_ptns,
)

from conftest import fd_grad, rel_err


def loop_conv(x, k, padding, stride):
    """Scalar-loop 'same' cross-correlation, output index 0 aligned with input index 0."""
    n, c, h, w = x.shape
    o, _, kh, kw = k.shape
    ho, wo = -(-h // stride), -(-w // stride)
    out = np.zeros((n, o, ho, wo))
    for b in range(n):
        for oc in range(o):
            for i in range(ho):
                for j in range(wo):
                    s = 0.0
                    for ic in range(c):
                        for di in range(kh):
                            for dj in range(kw):
                                r = i * stride + di - kh // 2
                                q = j * stride + dj - kw // 2
                                if padding == "circular":
                                    s += k[oc, ic, di, dj] * x[b, ic, r % h, q % w]
                                elif 0 <= r < h and 0 <= q < w:
                                    s += k[oc, ic, di, dj] * x[b, ic, r, q]
                    out[b, oc, i, j] = s
    return out


def autodiff_grads(fn, arrays, weights):
    ts = [Tensor(a, requires_grad=True) for a in arrays]
    out = fn(*ts)
    (out * Tensor(weights)).sum().backward()
    return [t.grad for t in ts]


def check_fd(fn, arrays, rng, tol=1e-6):
    out = fn(*[Tensor(a) for a in arrays])
    w = rng.standard_normal(out.shape)
    grads = autodiff_grads(fn, arrays, w)
    for i, a in enumerate(arrays):
        def f(v, i=i):
            args = [Tensor(v if j == i else arrays[j]) for j in range(len(arrays))]
            return float(np.sum(fn(*args).data * w))
        assert rel_err(grads[i], fd_grad(f, a)) <= tol


# ---------------------------------------------------------------- conv2d

@pytest.mark.parametrize("padding", ["zero", "circular"])
@pytest.mark.parametrize("stride", [1, 2])
def test_conv2d_matches_scalar_loop(rng, padding, stride):
    x = rng.standard_normal((2, 3, 6, 6))
    k = rng.standard_normal((2, 3, 3, 3))
    out = conv2d(Tensor(x), Tensor(k), padding=padding, stride=stride).data
    np.testing.assert_allclose(out, loop_conv(x, k, padding, stride), atol=1e-12)


def test_conv2d_identity_kernel(rng):
    x = rng.standard_normal((1, 1, 5, 7))
    out = conv2d(Tensor(x), Tensor(np.ones((1, 1, 1, 1))))
    np.testing.assert_array_equal(out.data, x)


def test_conv2d_one_hot_is_circular_shift(rng):
    x = rng.standard_normal((1, 1, 8, 8))
    k = np.zeros((1, 1, 3, 3))
    k[0, 0, 1, 2] = 1.0  # offset (0, +1)
    out = conv2d(Tensor(x), Tensor(k), padding="circular").data
    np.testing.assert_array_equal(out, np.roll(x, -1, axis=-1))


@pytest.mark.parametrize("padding,stride", [("zero", 1), ("circular", 1), ("circular", 2),
                                            ("zero", 2)])
def test_conv2d_gradients_fd(rng, padding, stride):
    for _ in range(3):
        x = rng.standard_normal((1, 2, 6, 6))
        k = rng.standard_normal((2, 2, 3, 3))
        check_fd(lambda a, b: conv2d(a, b, padding=padding, stride=stride), [x, k], rng)


def test_relu_conv_composition_fd(rng):
    x = rng.standard_normal((1, 1, 6, 6))
    k = rng.standard_normal((1, 1, 3, 3))
    check_fd(lambda a, b: relu(conv2d(a, b, padding="circular")), [x, k], rng)


def test_conv2d_errors():
    x = Tensor(np.zeros((1, 2, 6, 6)))
    with pytest.raises(ValueError):
        conv2d(x, Tensor(np.zeros((1, 2, 2, 2))))
    with pytest.raises(DimensionError):
        conv2d(x, Tensor(np.zeros((1, 3, 3, 3))))
    with pytest.raises(DimensionError):
        conv2d(Tensor(np.zeros((2, 6, 6))), Tensor(np.zeros((1, 2, 3, 3))))
    with pytest.raises(ValueError):
        conv2d(x, Tensor(np.zeros((1, 2, 3, 3))), stride=0)
    with pytest.raises((ValueError, DimensionError)):
        conv2d(Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.zeros((1, 1, 5, 5))), padding="circular")


def test_conv2d_circular_output_size(rng):
    x = Tensor(rng.standard_normal((1, 1, 8, 12)))
    out = conv2d(x, Tensor(rng.standard_normal((1, 1, 3, 3))), padding="circular", stride=2)
    assert out.shape == (1, 1, 4, 6)


# ---------------------------------------------------------------- elementwise

def test_relu_values_and_gradient():
    x = Tensor(np.array([-1.0, 2.0]), requires_grad=True)
    y = relu(x)
    np.testing.assert_array_equal(y.data, [0.0, 2.0])
    y.sum().backward()
    np.testing.assert_array_equal(x.grad, [0.0, 1.0])


def test_scale_zero_gives_zero_gradient(rng):
    x = Tensor(rng.standard_normal(4), requires_grad=True)
    y = scale(x, 0.0)
    assert np.all(y.data == 0)
    y.sum().backward()
    np.testing.assert_array_equal(x.grad, np.zeros(4))


@pytest.mark.parametrize("op", ["add", "sub", "mul"])
def test_elementwise_broadcast_gradients(rng, op):
    a = rng.standard_normal((2, 3, 4))
    b = rng.standard_normal((1, 3, 1))
    check_fd(lambda u, v: elementwise(op, u, v), [a, b], rng)


def test_incompatible_shapes_raise():
    with pytest.raises(DimensionError):
        mul(Tensor(np.zeros(3)), Tensor(np.zeros(4)))


def test_unary_ops_gradients(rng):
    x = rng.standard_normal((3, 4)) + 0.1
    check_fd(lambda a: square(a), [x], rng)
    check_fd(lambda a: absolute(a), [x], rng)
    check_fd(lambda a: mean_all(a), [x], rng)
    check_fd(lambda a: sum_all(a), [x], rng)


def test_structural_ops_gradients(rng):
    a, b = rng.standard_normal((1, 2, 3, 3)), rng.standard_normal((1, 1, 3, 3))
    check_fd(lambda u, v: concat([u, v], axis=1), [a, b], rng)
    check_fd(lambda u: pad2d(u, 2, 1), [a], rng)
    check_fd(lambda u: index(u, (slice(None), slice(None), slice(0, 2), slice(1, 3))), [a], rng)


# ---------------------------------------------------------------- resample

def test_resample_down_up_roundtrip(rng):
    x = rng.standard_normal((1, 2, 3, 5))
    up = resample(Tensor(x), 3, "up")
    np.testing.assert_array_equal(resample(up, 3, "down").data, x)


def test_resample_down_constant():
    x = Tensor(np.ones((1, 1, 4, 4)))
    np.testing.assert_array_equal(resample(x, 2, "down").data, np.ones((1, 1, 2, 2)))


def test_resample_adjoint(rng):
    for t in (2, 3):
        x = rng.standard_normal((2, 1, 6 * t, 4 * t))
        y = rng.standard_normal((2, 1, 6, 4))
        lhs = np.vdot(resample(Tensor(x), t, "down").data, y)
        rhs = np.vdot(x, resample(Tensor(y), t, "up").data)
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


def test_resample_keeps_index_zero(rng):
    x = rng.standard_normal((1, 1, 4, 4))
    np.testing.assert_array_equal(resample(Tensor(x), 2, "down").data, x[..., ::2, ::2])


def test_resample_non_divisible_raises():
    with pytest.raises(DimensionError):
        resample(Tensor(np.zeros((1, 1, 5, 4))), 2, "down")


def test_resample_gradients(rng):
    check_fd(lambda a: resample(a, 2, "down"), [rng.standard_normal((1, 1, 4, 6))], rng)
    check_fd(lambda a: resample(a, 2, "up"), [rng.standard_normal((1, 1, 2, 3))], rng)


# ---------------------------------------------------------------- backward

def test_backward_sum_of_squares():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    (x * x).sum().backward()
    np.testing.assert_array_equal(x.grad, [2.0, 4.0])


def test_backward_accumulates(rng):
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    (x * x).sum().backward()
    (x * x).sum().backward()
    np.testing.assert_array_equal(x.grad, [4.0, 8.0])


def test_backward_non_scalar_raises():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError):
        backward(x * x)


def test_detached_branch_has_no_gradient(rng):
    x = Tensor(rng.standard_normal(3), requires_grad=True)
    y = (x * x).sum() + (x.detach() * 5.0).sum()
    y.backward()
    np.testing.assert_allclose(x.grad, 2 * x.data)


def test_no_grad_records_nothing(rng):
    x = Tensor(rng.standard_normal(3), requires_grad=True)
    with no_grad():
        y = (x * x).sum()
    assert not y.requires_grad


def test_graph_released_after_backward(rng):
    x = Tensor(rng.standard_normal(3), requires_grad=True)
    y = (x * x).sum()
    y.backward()
    with pytest.raises(RuntimeError):
        y.backward()


def test_diamond_graph_visits_each_node_once(rng):
    x = Tensor(rng.standard_normal(4), requires_grad=True)
    h = x * 3.0
    y = (h * h + h).sum()
    y.backward()
    np.testing.assert_allclose(x.grad, 18 * x.data + 3)


def test_three_step_chain_fd(rng):
    k = rng.standard_normal((1, 1, 3, 3)) * 0.3
    mu = 0.2

    def chain(x0, kt):
        x = x0
        for _ in range(3):
            g = conv2d(relu(conv2d(x, kt, padding="circular")), kt, padding="circular")
            x = sub(x, scale(g, mu))
        return square(x).mean()

    check_fd(chain, [rng.standard_normal((1, 1, 5, 5)), k], rng, tol=1e-5)


def test_fp32_and_fp64_supported(rng):
    for dt in (np.float32, np.float64):
        x = Tensor(rng.standard_normal((1, 1, 4, 4)).astype(dt), requires_grad=True)
        k = Tensor(rng.standard_normal((1, 1, 3, 3)).astype(dt))
        out = conv2d(x, k)
        assert out.dtype == dt
        out.sum().backward()
        assert x.grad.dtype == dt and x.grad.shape == x.shape


def test_determinism(rng):
    x = rng.standard_normal((2, 2, 8, 8))
    k = rng.standard_normal((3, 2, 3, 3))
    a = conv2d(Tensor(x), Tensor(k), padding="circular").data
    b = conv2d(Tensor(x), Tensor(k), padding="circular").data
    assert a.tobytes() == b.tobytes()


# ---------------------------------------------------------------- Adam

def test_adam_first_step_magnitude():
    (p,) = adam_step([np.array([1.0, -2.0])], [np.array([0.3, -5.0])], AdamState(lr=0.01))
    np.testing.assert_allclose(np.abs(p - np.array([1.0, -2.0])), 0.01, atol=1e-6)


def test_adam_zero_gradient_keeps_params():
    st_ = AdamState(lr=0.1)
    p = [np.array([1.0, 2.0])]
    for _ in range(20):
        p = adam_step(p, [np.zeros(2)], st_)
    np.testing.assert_array_equal(p[0], [1.0, 2.0])


def test_adam_quadratic_monotone():
    # 50 steps of size ~lr from p=10 never reach the minimum
    st_ = AdamState(lr=0.1)
    p = np.array([10.0])
    vals = [float(p[0] ** 2)]
    for _ in range(50):
        (p,) = adam_step([p], [2 * p], st_)
        vals.append(float(p[0] ** 2))
    assert all(b <= a for a, b in zip(vals, vals[1:]))
    assert vals[-1] < vals[0]


def test_adam_matches_reference_formula(rng):
    g_seq = rng.standard_normal((5, 3))
    p = rng.standard_normal(3)
    st_ = AdamState(lr=0.05)
    m = v = np.zeros(3)
    ref = p.copy()
    for t, g in enumerate(g_seq, start=1):
        (p,) = adam_step([p], [g], st_)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref = ref - 0.05 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    np.testing.assert_allclose(p, ref, rtol=1e-12)
    assert st_.step == 5


def test_adam_nan_gradient_leaves_params():
    st_ = AdamState(lr=0.1)
    p = np.array([1.0, 2.0])
    with pytest.raises(FloatingPointError):
        adam_step([p], [np.array([np.nan, 0.0])], st_)
    assert st_.step == 0 and not st_.m


def test_adam_optimizer_on_tensors():
    w = Tensor(np.array([3.0]), requires_grad=True)
    opt = Adam([w], lr=0.1)
    for _ in range(100):
        opt.zero_grad()
        (w * w).sum().backward()
        opt.step()
    assert abs(w.data[0]) < 0.5


# ---------------------------------------------------------------- PTNS1

@settings(max_examples=40, deadline=None)
@given(hnp.arrays(st.sampled_from([np.float32, np.float64]),
                  hnp.array_shapes(min_dims=0, max_dims=4, max_side=5)))
def test_ptns_roundtrip_bit_exact(arr):
    out, end = decode_ptns(encode_ptns(arr))
    assert out.dtype == arr.dtype and out.shape == arr.shape
    assert out.tobytes() == arr.tobytes()


def test_ptns_layout():
    buf = encode_ptns(np.arange(6, dtype=np.float32).reshape(2, 3))
    assert buf[:5] == b"PTNS1"
    assert struct.unpack_from("<I", buf, 5) == (2,)
    assert struct.unpack_from("<2Q", buf, 9) == (2, 3)
    assert buf[25] == 1
    assert np.frombuffer(buf[26:], "<f4").tolist() == [0, 1, 2, 3, 4, 5]


def test_ptns_truncation_reports_offset(rng):
    buf = encode_ptns(rng.standard_normal((3, 4)))
    for cut in range(len(buf)):
        with pytest.raises(FormatError) as exc:
            decode_ptns(buf[:cut])
        assert 0 <= exc.value.offset <= cut


def test_ptns_bad_magic_and_dtype():
    buf = bytearray(encode_ptns(np.zeros(2)))
    with pytest.raises(FormatError):
        decode_ptns(b"XTNS1" + bytes(buf[5:]))
    buf[17] = 9  # dtype byte follows magic(5) + rank(4) + one extent(8)
    with pytest.raises(FormatError) as exc:
        decode_ptns(bytes(buf))
    assert exc.value.offset == 17


def test_ptns_file_roundtrip_and_trailing(tmp_path, rng):
    a = rng.standard_normal((2, 2))
    p = tmp_path / "a.ptns"
    save_ptns(p, a)
    assert load_ptns(p).tobytes() == a.tobytes()
    with open(p, "ab") as fh:
        fh.write(b"\0")
    with pytest.raises(FormatError):
        load_ptns(p)


def test_ptns_rejects_int():
    with pytest.raises(ValueError):
        encode_ptns(np.zeros(3, dtype=np.int32))
