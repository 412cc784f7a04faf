"""WIC layer: init, forward/reverse, det and shift losses, augmentation."""

import math

import numpy as np
import pytest

from wicnet import linalg
from wicnet import tensor as T
from wicnet import wic
from wicnet.errors import UsageError, WellPosednessError

from reference import fd_grad, rel_err


def c(arr):
    return T.constant(np.asarray(arr, dtype=np.float64))


# ---------------------------------------------------------------------------
# construction


def test_init_square_is_orthogonal_with_zero_det_loss():
    layer = wic.wic_init(4, 4, 4, seed=7)
    g = linalg.gram(layer.kernel.numpy())
    assert rel_err(g, np.eye(4)) < 1e-12
    assert abs(wic.wic_det_loss(layer).item()) < 1e-12
    assert layer.case == "over" and not layer.augmented


def test_init_under_case_augments_with_offsets():
    layer = wic.wic_init(3, 1, 3, seed=0)
    assert layer.case == "under" and layer.augmented
    assert layer.M == 3 and layer.m == 1
    assert layer.offsets == [(0, 1, 1), (0, 2, 2)]
    g = linalg.gram(layer.kernel.numpy())
    assert rel_err(g, np.eye(3)) < 1e-12


def test_init_over_case_no_offsets():
    layer = wic.wic_init(2, 4, 4, seed=1)
    assert layer.case == "over" and not layer.augmented
    assert layer.offsets == [] and layer.kernel.shape == (4, 2)


def test_init_under_default_m_equals_n():
    layer = wic.wic_init(6, 3, seed=2)
    assert (layer.M, layer.n, layer.m) == (6, 6, 3)
    assert layer.offsets == [(k, 1, 1) for k in range(3)]


def test_init_rejects_insufficient_augmentation():
    with pytest.raises(WellPosednessError):
        wic.wic_init(4, 2, 3, seed=0)


def test_init_deterministic():
    a = wic.wic_init(5, 3, seed=42).kernel.numpy()
    b = wic.wic_init(5, 3, seed=42).kernel.numpy()
    np.testing.assert_array_equal(a, b)


def test_offset_schedule_collision_free():
    sched = wic.offset_schedule(3, 9)
    assert len(set(sched)) == 6
    assert all(off != (0, 0) for _, *off in [(s, d1, d2) for s, d1, d2 in sched])
    assert sched[0] == (0, 1, 1) and sched[3] == (0, 2, 2) and sched[5] == (2, 2, 2)


# ---------------------------------------------------------------------------
# forward


def test_forward_identity_kernel_bit_exact(rng):
    layer = wic.WicLayer(np.eye(3), m=3)
    x = rng.standard_normal((2, 3, 4, 4))
    np.testing.assert_array_equal(wic.wic_forward(layer, c(x)).numpy(), x)


def test_forward_hand_case_uses_live_rows_only():
    kernel = np.array([[1.0, 1.0], [0.5, -0.3]])  # row 1 is augmentation
    layer = wic.WicLayer(kernel, m=1)
    x = c(np.array([[[[1.0, 2.0]], [[3.0, 4.0]]]]))
    y = wic.wic_forward(layer, x)
    np.testing.assert_array_equal(y.numpy(), [[[[4.0, 6.0]]]])


def test_forward_zero_input():
    layer = wic.wic_init(3, 2, seed=3)
    y = wic.wic_forward(layer, c(np.zeros((1, 3, 2, 2))))
    np.testing.assert_array_equal(y.numpy(), np.zeros((1, 2, 2, 2)))


def test_forward_ignores_augmented_rows_on_both_paths(rng):
    x = rng.standard_normal((1, 4, 5, 5))
    layer = wic.wic_init(4, 2, seed=5)
    y_ref = wic.wic_forward(layer, c(x)).numpy()
    poisoned = wic.WicLayer(layer.kernel.numpy().copy(), m=2)
    poisoned.kernel[2:] = 1e12
    assert np.array_equal(wic.wic_forward(poisoned, c(x)).numpy(), y_ref)
    # tracked path convolves the full kernel then splits; live-output rows
    # are still bitwise independent of the augmented rows
    def taped(lay):
        tape = T.Tape()
        kl = tape.leaf(lay.kernel, name="k")
        return wic.wic_forward(lay, c(x), kernel=kl).numpy()

    assert np.array_equal(taped(poisoned), taped(layer))


def test_forward_cost_independent_of_augmentation(rng, monkeypatch):
    # the untracked forward of an augmented layer must convolve with the
    # same (m, n) kernel shape as a plain layer: cost parity in M
    shapes = []
    orig = T.conv1x1

    def spy(x, w):
        shapes.append(w.shape)
        return orig(x, w)

    monkeypatch.setattr(T, "conv1x1", spy)
    monkeypatch.setattr(wic.T, "conv1x1", spy)
    x = rng.standard_normal((1, 4, 4, 4))
    aug = wic.wic_init(4, 2, seed=1)      # M = 4, two augmented rows
    plain = wic.WicLayer(aug.kernel.numpy()[:2], m=2)
    wic.wic_forward(aug, c(x))
    wic.wic_forward(plain, c(x))
    assert shapes == [(2, 4), (2, 4)]


# ---------------------------------------------------------------------------
# reverse


def test_reverse_over_roundtrip(rng):
    for seed in range(5):
        layer = wic.wic_init(3, 5, seed=seed)
        x = rng.standard_normal((2, 3, 6, 6))
        xr = wic.wic_reverse(layer, wic.wic_forward(layer, c(x)))
        assert np.max(np.abs(xr.numpy() - x)) < 1e-10


def test_reverse_over_random_well_conditioned(rng):
    q, _ = np.linalg.qr(rng.standard_normal((5, 3)))
    w = q * np.array([1.0, 3.0, 9.0])  # condition of Gram = 81
    layer = wic.WicLayer(w, m=5)
    x = rng.standard_normal((1, 3, 4, 4))
    xr = wic.wic_reverse(layer, wic.wic_forward(layer, c(x)))
    assert np.max(np.abs(xr.numpy() - x)) < 1e-10


def test_reverse_under_error_bound(rng):
    # algebraic identity: x_rec - x = P (shift(y) - aug response), so the
    # reconstruction error is bounded by |P|_op times the residual norm
    for seed in range(10):
        layer = wic.wic_init(5, 2, seed=seed)
        x = rng.standard_normal((1, 5, 6, 6))
        xt = c(x)
        y = wic.wic_forward(layer, xt)
        xr = wic.wic_reverse(layer, y)
        k = layer.kernel.numpy()
        aug = T.conv1x1(xt, c(k[layer.m:])).numpy()
        target = T.shift(y, layer.offsets).numpy()
        resid = np.linalg.norm(aug - target)
        p = linalg.left_inverse(k)
        opnorm = np.linalg.svd(p, compute_uv=False)[0]
        err = np.linalg.norm(xr.numpy() - x)
        assert err <= opnorm * resid + 1e-9


def test_reverse_under_zero_residual_reconstructs(rng):
    # build x in the nullspace of (aug - shift o live) so the augmented rows
    # exactly reproduce shift(y); then reconstruction is exact
    layer = wic.wic_init(3, 2, seed=11)
    k = layer.kernel.numpy()
    h = w = 2
    npix = h * w

    def plane_op(row):
        # linear map from flattened x (n*npix) to one output plane (npix)
        out = np.zeros((npix, layer.n * npix))
        for ch in range(layer.n):
            out[:, ch * npix:(ch + 1) * npix] = row[ch] * np.eye(npix)
        return out

    def shift_matrix(di, dj):
        s = np.zeros((npix, npix))
        for r in range(h):
            for cc in range(w):
                rs, cs = r + di, cc + dj
                if 0 <= rs < h and 0 <= cs < w:
                    s[r * w + cc, rs * w + cs] = 1.0
        return s

    blocks = []
    for idx, (src, di, dj) in enumerate(layer.offsets):
        aug_row = plane_op(k[layer.m + idx])
        live_row = plane_op(k[src])
        blocks.append(aug_row - shift_matrix(di, dj) @ live_row)
    a = np.vstack(blocks)
    _, s, vt = np.linalg.svd(a)
    xflat = vt[-1]  # nullspace exists: fewer constraints than unknowns
    assert np.linalg.norm(a @ xflat) < 1e-10
    x = xflat.reshape(1, layer.n, h, w)
    y = wic.wic_forward(layer, c(x))
    assert wic.wic_shift_loss(layer, c(x), y).item() < 1e-12
    xr = wic.wic_reverse(layer, y)
    assert np.max(np.abs(xr.numpy() - x)) < 1e-9


def test_reverse_singular_kernel_raises():
    layer = wic.WicLayer(np.array([[1.0, 2.0], [2.0, 4.0]]), m=2)
    with pytest.raises(WellPosednessError):
        wic.wic_reverse(layer, c(np.zeros((1, 2, 2, 2))))


def test_reverse_f32_roundtrip_tolerance(rng):
    layer = wic.wic_init(4, 4, seed=9, dtype="f32")
    x = rng.standard_normal((1, 4, 8, 8)).astype(np.float32)
    xr = wic.wic_reverse(layer, wic.wic_forward(layer, T.constant(x)))
    assert np.max(np.abs(xr.numpy() - x)) < 1e-4


# ---------------------------------------------------------------------------
# det loss


def test_det_loss_diag_kernel_hand_value():
    layer = wic.WicLayer(np.diag([2.0, 3.0]), m=2)
    assert abs(layer and wic.wic_det_loss(layer).item() - math.log(36.0)) < 1e-12


def test_det_loss_abs_penalizes_collapse():
    shrunk = wic.WicLayer(np.diag([0.1, 0.1]), m=2)
    val = wic.wic_det_loss(shrunk).item()
    assert val > 0  # |log det| reading: collapse is penalized, not rewarded
    signed = wic.WicLayer(np.diag([0.1, 0.1]), m=2, det_signed=True)
    assert wic.wic_det_loss(signed).item() < 0


def test_det_loss_singular_barrier_constant_zero_grad():
    before = wic.BARRIER_EVENTS
    tape = T.Tape()
    kl = tape.leaf(np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]]), name="k")
    layer = wic.WicLayer(kl.value, m=3)
    loss = wic.wic_det_loss(layer, kernel=kl)
    assert loss.item() == wic.DET_BARRIER
    assert wic.BARRIER_EVENTS == before + 1
    g = tape.backward(loss)["k"].numpy()
    np.testing.assert_array_equal(g, np.zeros((3, 2)))


def test_det_loss_gradient_matches_finite_differences(rng):
    # singular values chosen so log det(Gram) != 0 (away from the |.| kink)
    w0 = np.linalg.qr(rng.standard_normal((4, 3)))[0] * np.array([1.0, 2.0, 0.7])

    def f(w):
        layer = wic.WicLayer(w, m=4)
        return wic.wic_det_loss(layer).item()

    tape = T.Tape()
    kl = tape.leaf(w0, name="k")
    layer = wic.WicLayer(w0, m=4)
    g = tape.backward(wic.wic_det_loss(layer, kernel=kl))["k"].numpy()
    assert rel_err(g, fd_grad(f, w0)) < 1e-6


def test_left_inverse_op_gradient_matches_finite_differences(rng):
    w0 = np.linalg.qr(rng.standard_normal((5, 3)))[0] * np.array([1.0, 1.5, 0.7])
    t0 = rng.standard_normal((3, 5))

    def f(w):
        return float(np.sum(linalg.left_inverse(w) * t0))

    tape = T.Tape()
    kl = tape.leaf(w0, name="k")
    p = wic.left_inverse_op(kl)
    loss = T.sum_all(T.mul(p, T.constant(t0)))
    g = tape.backward(loss)["k"].numpy()
    assert rel_err(g, fd_grad(f, w0)) < 1e-6


def test_left_inverse_op_square_case_reduces_to_inverse_rule(rng):
    w0 = random_spd_ish = rng.standard_normal((3, 3)) + 3.0 * np.eye(3)
    t0 = rng.standard_normal((3, 3))
    tape = T.Tape()
    kl = tape.leaf(w0, name="k")
    loss = T.sum_all(T.mul(wic.left_inverse_op(kl), T.constant(t0)))
    g = tape.backward(loss)["k"].numpy()
    winv = np.linalg.inv(w0)
    expected = -winv.T @ t0 @ winv.T
    assert rel_err(g, expected) < 1e-9


# ---------------------------------------------------------------------------
# shift loss


def test_shift_loss_zero_residual_instance():
    # covered constructively in test_reverse_under_zero_residual_reconstructs;
    # here check the trivial all-zero input
    layer = wic.wic_init(3, 1, seed=4)
    x = c(np.zeros((1, 3, 3, 3)))
    y = wic.wic_forward(layer, x)
    assert wic.wic_shift_loss(layer, x, y).item() == 0.0


def test_shift_loss_degenerate_scalar_hand_value():
    # m = 1, n = 1, M = 2: augmented square kernel, offset (0, 1, 1)
    w1, w2 = 0.8, -0.6
    layer = wic.WicLayer(np.array([[w1], [w2]]), m=1)
    a, b_, cc, d = 1.0, 2.0, 3.0, 4.0
    x = np.array([[[[a, b_], [cc, d]]]])
    xt = c(x)
    y = wic.wic_forward(layer, xt)
    got = wic.wic_shift_loss(layer, xt, y).item()
    expected = (abs(w2 * a - w1 * d) + abs(w2 * b_) + abs(w2 * cc) + abs(w2 * d)) / 4.0
    assert abs(got - expected) < 1e-12


def test_shift_loss_l1_homogeneity(rng):
    layer = wic.wic_init(4, 2, seed=6)
    x = rng.standard_normal((1, 4, 5, 5))
    y = wic.wic_forward(layer, c(x))
    base = wic.wic_shift_loss(layer, c(x), y).item()
    doubled = wic.WicLayer(layer.kernel.numpy().copy(), m=2)
    k = doubled.kernel.numpy().copy()
    # doubling the residual: scale augmented rows toward 2*aug - shift target
    # is messy; instead scale x and y jointly, which scales the residual
    y2 = wic.wic_forward(doubled, c(2.0 * x))
    assert abs(wic.wic_shift_loss(doubled, c(2.0 * x), y2).item() - 2.0 * base) < 1e-10


def test_shift_loss_requires_augmented_layer():
    layer = wic.wic_init(2, 4, 4, seed=0)
    x = c(np.zeros((1, 2, 3, 3)))
    y = wic.wic_forward(layer, x)
    with pytest.raises(UsageError):
        wic.wic_shift_loss(layer, x, y)


def test_shift_loss_gradient_matches_finite_differences(rng):
    x0 = rng.standard_normal((1, 3, 4, 4))
    layer = wic.wic_init(3, 1, seed=8)
    k0 = layer.kernel.numpy()

    def f_kernel(kv):
        lay = wic.WicLayer(kv, m=1)
        xt = c(x0)
        return wic.wic_shift_loss(lay, xt, wic.wic_forward(lay, xt)).item()

    def f_x(xv):
        xt = c(xv)
        return wic.wic_shift_loss(layer, xt, wic.wic_forward(layer, xt)).item()

    tape = T.Tape()
    kl = tape.leaf(k0, name="k")
    xl = tape.leaf(x0, name="x")
    y = wic.wic_forward(layer, xl, kernel=kl)
    loss = wic.wic_shift_loss(layer, xl, y, kernel=kl)
    g = tape.backward(loss)
    assert rel_err(g["k"].numpy(), fd_grad(f_kernel, k0)) < 1e-6
    assert rel_err(g["x"].numpy(), fd_grad(f_x, x0)) < 1e-6


def test_shift_loss_detached_target_changes_gradient(rng):
    x0 = rng.standard_normal((1, 3, 4, 4))
    base = wic.wic_init(3, 1, seed=8)
    k0 = base.kernel.numpy()

    def kernel_grad(detached):
        lay = wic.WicLayer(k0.copy(), m=1, shift_detached=detached)
        tape = T.Tape()
        kl = tape.leaf(k0, name="k")
        y = wic.wic_forward(lay, c(x0), kernel=kl)
        return tape.backward(wic.wic_shift_loss(lay, c(x0), y, kernel=kl))["k"].numpy()

    full = kernel_grad(False)
    detached = kernel_grad(True)
    assert not np.allclose(full, detached)
    # detached target: live rows get no gradient from the shift loss
    np.testing.assert_array_equal(detached[:1], np.zeros((1, 3)))


def test_wic_f32_kernel_left_inverse_still_f64_internally(rng):
    layer = wic.wic_init(6, 3, seed=13, dtype="f32")
    x = rng.standard_normal((1, 6, 4, 4)).astype(np.float32)
    y = wic.wic_forward(layer, T.constant(x))
    xr = wic.wic_reverse(layer, y)
    assert xr.dtype == y.value.dtype
