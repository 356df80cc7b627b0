import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pnpreg.priors import (
    DenoiserNet, LaplacianPrior, ReGNet, TikhonovPrior, UnsupportedOperationError, ZeroPrior,
    decode_checkpoint, denoise, encode_checkpoint, jacobian_asymmetry, load_checkpoint,
    prior_grad, prior_prox,
    reg_grad, residual_identity_error, save_checkpoint,
)
from pnpreg.priors.networks import DenoiserPrior, ReGPrior
from pnpreg.tensor.serialize import FormatError


def dense_laplacian(h, w):
    n = h * w
    L = np.zeros((n, n))
    for i in range(h):
        for j in range(w):
            r = i * w + j
            L[r, r] += 4
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                L[r, ((i + di) % h) * w + (j + dj) % w] -= 1
    return L


# -- analytic priors -------------------------------------------------------

def test_tikhonov_worked_example():
    p = TikhonovPrior()
    x = prior_prox(p, np.array([[1.5]]), 1.0)
    assert x[0, 0] == 0.75
    assert prior_grad(p, x)[0, 0] == 0.75
    assert 1.0 ** 2 * 0.75 == 1.5 - 0.75
    assert p.value(np.array([[2.0, 0.0]])) == 2.0


@pytest.mark.parametrize("prior", [TikhonovPrior(), LaplacianPrior(), ZeroPrior()])
def test_prox_at_zero_sigma_is_identity(prior, rng):
    z = rng.random((1, 6, 6))
    assert np.allclose(prior.prox(z, 0.0), z, atol=0)


def test_laplacian_prox_matches_dense_solve(rng):
    z = rng.standard_normal((8, 8))
    sigma = 0.7
    L = dense_laplacian(8, 8)
    ref = np.linalg.solve(np.eye(64) + sigma ** 2 * L.T @ L, z.reshape(-1)).reshape(8, 8)
    got = LaplacianPrior().prox(z, sigma)
    assert np.max(np.abs(got - ref)) <= 1e-8


def test_laplacian_grad_matches_dense(rng):
    x = rng.standard_normal((5, 7))
    L = dense_laplacian(5, 7)
    assert np.allclose(LaplacianPrior().grad(x).reshape(-1), L.T @ L @ x.reshape(-1))
    assert np.isclose(LaplacianPrior().value(x), 0.5 * np.sum((L @ x.reshape(-1)) ** 2))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 31), sigma=st.floats(0.01, 2.0))
def test_residual_identity_exact_for_analytic_priors(seed, sigma):
    z = np.random.default_rng(seed).standard_normal((1, 6, 6))
    for p in (TikhonovPrior(), LaplacianPrior(tol=1e-14, maxiter=1000)):
        x = p.prox(z, sigma)
        lhs, rhs = sigma ** 2 * p.grad(x), z - x
        assert np.max(np.abs(lhs - rhs)) <= 1e-10 * max(np.max(np.abs(rhs)), 1e-12) + 1e-12


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 31), sigma=st.floats(0.0, 3.0))
def test_quadratic_prox_is_nonexpansive(seed, sigma):
    a, b = np.random.default_rng(seed).standard_normal((2, 1, 5, 5))
    for p in (TikhonovPrior(), LaplacianPrior()):
        assert np.linalg.norm(p.prox(a, sigma) - p.prox(b, sigma)) <= np.linalg.norm(a - b) + 1e-9


def test_missing_capability_raises(rng):
    net = ReGNet(1, base_channels=2, seed=0)
    with pytest.raises(UnsupportedOperationError):
        prior_prox(ReGPrior(net), rng.random((1, 4, 4)), 0.1)
    with pytest.raises(UnsupportedOperationError):
        prior_grad(DenoiserPrior(DenoiserNet(1, base_channels=2)), rng.random((1, 4, 4)))
    with pytest.raises(ValueError):
        prior_prox(TikhonovPrior(), rng.random((1, 4, 4)), -0.1)


# -- residual identity error -----------------------------------------------

@pytest.mark.parametrize("sigma", [0.01, 0.05, 0.1, 0.15, 0.2])
def test_residual_identity_error_flat_for_tikhonov(sigma, rng):
    assert residual_identity_error(TikhonovPrior(), TikhonovPrior(), rng.random((1, 8, 8)), sigma) < 1e-30


def test_residual_identity_error_positive_for_random_nets(rng):
    G = ReGNet(1, base_channels=4, seed=1, dtype=np.float64)
    D = DenoiserNet(1, base_channels=4, seed=2, dtype=np.float64)
    assert residual_identity_error(G, D, rng.random((1, 8, 8)), 0.1) > 0


def test_residual_identity_error_value(rng):
    # G = 2x with Tikhonov D: residual = (2 sigma^2 - sigma^2) z/(1+sigma^2)
    class Twice(TikhonovPrior):
        def grad(self, x):
            return 2 * np.asarray(x)

    z = rng.random((1, 4, 4))
    s = 0.5
    expect = np.mean((s ** 2 * z / (1 + s ** 2)) ** 2)
    assert np.isclose(residual_identity_error(Twice(), TikhonovPrior(), z, s), expect, rtol=1e-12)
    with pytest.raises(ValueError):
        residual_identity_error(TikhonovPrior(), TikhonovPrior(), z, 0.0)


# -- networks --------------------------------------------------------------

def test_bias_free_zero_in_zero_out():
    D = DenoiserNet(3, seed=4, dtype=np.float64)
    G = ReGNet(3, seed=5, dtype=np.float64)
    assert np.all(denoise(D, np.zeros((3, 16, 16)), 0.0) == 0)
    assert np.all(reg_grad(G, np.zeros((3, 16, 16))) == 0)


@pytest.mark.parametrize("alpha", [0.5, 2.0, 7.3])
def test_denoiser_positive_homogeneity(alpha, rng):
    D = DenoiserNet(1, seed=6, dtype=np.float64)
    z = rng.random((1, 16, 16))
    a = denoise(D, alpha * z, alpha * 0.05, sigma_max=np.inf)
    b = alpha * denoise(D, z, 0.05)
    assert np.max(np.abs(a - b)) <= 1e-6 * np.max(np.abs(b))


def test_reg_net_positive_homogeneity(rng):
    G = ReGNet(1, seed=7, dtype=np.float64)
    x = rng.random((1, 12, 12))
    assert np.allclose(reg_grad(G, 3 * x), 3 * reg_grad(G, x), rtol=1e-9, atol=1e-12)


def test_odd_shapes_preserved(rng):
    G = ReGNet(3, seed=1)
    D = DenoiserNet(3, seed=1)
    x = rng.random((3, 17, 23))
    assert reg_grad(G, x).shape == (3, 17, 23)
    assert denoise(D, x, 0.1).shape == (3, 17, 23)


def test_grayscale_net_applied_per_channel(rng):
    G = ReGNet(1, seed=2, dtype=np.float64)
    x = rng.random((3, 8, 8))
    out = reg_grad(G, x)
    for c in range(3):
        assert np.allclose(out[c], reg_grad(G, x[c:c + 1])[0])


def test_denoise_sigma_out_of_range_warns_and_clamps(rng):
    D = DenoiserNet(1, seed=3, dtype=np.float64)
    z = rng.random((1, 8, 8))
    with pytest.warns(RuntimeWarning):
        hi = denoise(D, z, 1.0)
    assert np.array_equal(hi, denoise(D, z, 50 / 255))
    with pytest.warns(RuntimeWarning):
        lo = denoise(D, z, -0.1)
    assert np.array_equal(lo, denoise(D, z, 0.0))


def test_forward_is_pure(rng):
    D = DenoiserNet(1, seed=3)
    z = rng.random((1, 8, 8))
    assert np.array_equal(denoise(D, z, 0.1), denoise(D, z, 0.1))
    assert np.array_equal(denoise(D, z, 0.1), denoise(DenoiserNet(1, seed=3), z, 0.1))


def test_channel_mismatch_rejected(rng):
    with pytest.raises(ValueError):
        reg_grad(ReGNet(3), rng.random((2, 8, 8)))


# -- checkpoints -----------------------------------------------------------

@pytest.mark.parametrize("cls,dtype", [(DenoiserNet, np.float32), (ReGNet, np.float64)])
def test_checkpoint_roundtrip(cls, dtype, tmp_path, rng):
    net = cls(2, base_channels=4, scales=3, blocks=1, seed=11, dtype=dtype)
    net.step = 1234
    path = tmp_path / "n.pnpr"
    save_checkpoint(str(path), net)
    twin = load_checkpoint(str(path))
    assert type(twin) is cls and twin.step == 1234 and twin.dtype == dtype
    assert twin.architecture() == net.architecture()
    for k, v in net.state_dict().items():
        assert np.array_equal(v, twin.state_dict()[k])
    x = rng.random((2, 8, 8))
    if cls is DenoiserNet:
        assert np.array_equal(denoise(net, x, 0.1), denoise(twin, x, 0.1))
    else:
        assert np.array_equal(reg_grad(net, x), reg_grad(twin, x))


def test_checkpoint_header_layout():
    buf = encode_checkpoint(ReGNet(1, base_channels=2, scales=2, blocks=1))
    assert buf[:5] == b"PNPR1"
    assert int.from_bytes(buf[5:9], "little") == 1
    assert buf[9] == 2


def test_checkpoint_truncation_reports_offset():
    buf = encode_checkpoint(DenoiserNet(1, base_channels=2, blocks=1))
    for cut in (3, 8, 20, len(buf) // 2, len(buf) - 4):
        with pytest.raises(FormatError) as ei:
            decode_checkpoint(buf[:cut])
        assert ei.value.offset <= cut
    with pytest.raises(FormatError) as ei:
        decode_checkpoint(b"XXXXX" + buf[5:])
    assert ei.value.offset == 0
    with pytest.raises(FormatError):
        decode_checkpoint(buf + b"\0")
    bad = bytearray(buf)
    bad[9] = 7
    with pytest.raises(FormatError) as ei:
        decode_checkpoint(bytes(bad))
    assert ei.value.offset == 9


# -- Jacobian diagnostic ---------------------------------------------------

def test_jacobian_asymmetry_zero_for_true_gradients(rng):
    x = rng.standard_normal((1, 4, 5))
    assert jacobian_asymmetry(TikhonovPrior(), x) < 1e-8
    assert jacobian_asymmetry(LaplacianPrior(), x) < 1e-8


def test_jacobian_asymmetry_matches_dense_oracle(rng):
    G = ReGNet(1, base_channels=2, scales=2, blocks=1, seed=4, dtype=np.float64)
    x = rng.random((1, 4, 4))
    eps = 1e-6
    J = np.zeros((16, 16))
    for j in range(16):
        e = np.zeros(16)
        e[j] = eps
        J[:, j] = (reg_grad(G, x + e.reshape(x.shape)) - reg_grad(G, x - e.reshape(x.shape))
                   ).reshape(-1) / (2 * eps)
    expect = np.linalg.norm(J - J.T) / np.linalg.norm(J)
    got = jacobian_asymmetry(G, x)
    assert got > 0
    assert abs(got - expect) <= 1e-6 * expect
