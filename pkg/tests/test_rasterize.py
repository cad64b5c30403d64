"""Rasterization: two-splat closed-form compositing oracle, brute-force
per-pixel oracle over full images, backend equivalence, gradients, and the
threshold semantics (weight cap, drop, early termination)."""

import numpy as np
import pytest

from helpers import (T_EPS, W_CAP, W_MIN, finite_diff_scalar, gaussian_weight,
                     oracle_composite, rel_err)
from motiongs._kernels import available_backends, get_backend
from motiongs.autodiff import Tensor
from motiongs.camera import look_at
from motiongs.render import TILE_SIZE, bin_tiles, rasterize

BACKENDS = available_backends()


def kernel_args(rng, n, size, alpha_lo=0.2, alpha_hi=0.95, sigma=3.0):
    mean = rng.uniform(0, size, (n, 2))
    theta = rng.uniform(0, np.pi, n)
    s1 = rng.uniform(1.0, sigma, n) ** 2
    s2 = rng.uniform(1.0, sigma, n) ** 2
    ct, st = np.cos(theta), np.sin(theta)
    cov = np.ascontiguousarray(np.stack([
        ct * ct * s1 + st * st * s2, ct * st * (s1 - s2),
        st * st * s1 + ct * ct * s2], axis=1))
    rgb = rng.uniform(0, 1, (n, 3))
    alpha = rng.uniform(alpha_lo, alpha_hi, n)
    bg = rng.uniform(0, 1, 3)
    lam = 0.5 * (cov[:, 0] + cov[:, 2]) + np.sqrt(
        0.25 * (cov[:, 0] - cov[:, 2]) ** 2 + cov[:, 1] ** 2)
    radius = 3.0 * np.sqrt(lam) + 1.0
    tid, toff = bin_tiles(mean, radius, size, size, TILE_SIZE)
    return (mean, cov, rgb, alpha, bg, size, size, tid, toff, TILE_SIZE)


@pytest.mark.parametrize("backend", BACKENDS)
def test_two_splat_compositing_oracle_100_cases(backend, rng):
    """Closed-form two-splat blend at the pixel under both splats, 1e-6."""
    be = get_backend(backend)
    size = 16
    for _ in range(100):
        px, py = 7.0, 8.0
        means = np.ascontiguousarray(np.array([px, py]) + rng.normal(0, 1.5, (2, 2)))
        s = rng.uniform(1.5, 3.0, 2)
        b = rng.uniform(-0.5, 0.5, 2) * s
        cov = np.ascontiguousarray(np.stack([s ** 2, b, s ** 2 * rng.uniform(0.8, 1.2, 2)], 1))
        rgb = rng.uniform(0, 1, (2, 3))
        alpha = rng.uniform(0.3, 0.999, 2)
        bg = rng.uniform(0, 1, 3)
        lam = cov[:, 0] + cov[:, 2]
        radius = 3.0 * np.sqrt(lam) + 1.0
        tid, toff = bin_tiles(means, radius, size, size, TILE_SIZE)
        img, amap = be.forward(means, cov, rgb, alpha, bg, size, size,
                               tid, toff, TILE_SIZE)
        ref_col, ref_a = oracle_composite(px, py, means, cov, rgb, alpha, bg)
        # independent closed form, written out explicitly
        w1 = gaussian_weight(px, py, means[0], cov[0], alpha[0])
        w2 = gaussian_weight(px, py, means[1], cov[1], alpha[1])
        manual = (w1 * rgb[0] + (1 - w1) * w2 * rgb[1]
                  + (1 - w1) * (1 - w2) * bg)
        assert np.max(np.abs(ref_col - manual)) < 1e-12
        assert np.max(np.abs(img[int(py), int(px)] - ref_col)) < 1e-6
        assert abs(amap[int(py), int(px)] - ref_a) < 1e-6


@pytest.mark.parametrize("backend", BACKENDS)
def test_full_image_brute_force_oracle(backend, rng):
    be = get_backend(backend)
    size = 32
    args = kernel_args(rng, 15, size)
    img, amap = be.forward(*args)
    mean, cov, rgb, alpha, bg = args[:5]
    tid, toff = args[7], args[8]
    ntx = (size + TILE_SIZE - 1) // TILE_SIZE
    for py in range(0, size, 3):
        for px in range(0, size, 3):
            t = (py // TILE_SIZE) * ntx + (px // TILE_SIZE)
            ids = tid[toff[t]:toff[t + 1]]
            col, a = oracle_composite(px, py, mean[ids], cov[ids], rgb[ids],
                                      alpha[ids], bg)
            assert np.max(np.abs(img[py, px] - col)) < 1e-10
            assert abs(amap[py, px] - a) < 1e-10


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled backend unavailable")
def test_backend_forward_bit_identical(rng):
    cy, npb = get_backend("cython"), get_backend("numpy")
    for n in (1, 40, 300):
        args = kernel_args(rng, n, 64)
        i1, a1 = cy.forward(*args)
        i2, a2 = npb.forward(*args)
        assert np.array_equal(i1, i2)
        assert np.array_equal(a1, a2)


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled backend unavailable")
def test_backend_backward_equivalent(rng):
    cy, npb = get_backend("cython"), get_backend("numpy")
    args = kernel_args(rng, 100, 64)
    gi = np.ascontiguousarray(rng.normal(0, 1, (64, 64, 3)))
    ga = np.ascontiguousarray(rng.normal(0, 1, (64, 64)))
    g1 = cy.backward(*args, gi, ga)
    g2 = npb.backward(*args, gi, ga)
    for a, b in zip(g1, g2):
        scale = max(np.abs(a).max(), 1.0)
        assert np.abs(a - b).max() / scale < 1e-11


@pytest.mark.parametrize("backend", BACKENDS)
def test_empty_scene_is_background(backend):
    be = get_backend(backend)
    size = 32
    bg = np.array([0.2, 0.4, 0.6])
    tid = np.zeros(0, dtype=np.int64)
    toff = np.zeros(5, dtype=np.int64)
    img, amap = be.forward(np.zeros((0, 2)), np.zeros((0, 3)), np.zeros((0, 3)),
                           np.zeros(0), bg, size, size, tid, toff, TILE_SIZE)
    assert np.array_equal(img, np.broadcast_to(bg, (size, size, 3)))
    assert np.array_equal(amap, np.zeros((size, size)))


@pytest.mark.parametrize("backend", BACKENDS)
def test_weight_cap_and_drop(backend):
    """A giant-alpha splat saturates at W_CAP; a tiny one is dropped."""
    be = get_backend(backend)
    size = 16
    mean = np.array([[8.0, 8.0]])
    cov = np.array([[4.0, 0.0, 4.0]])
    tid = np.zeros(1, dtype=np.int64)
    toff = np.array([0, 1], dtype=np.int64)
    img, amap = be.forward(mean, cov, np.array([[1.0, 0.0, 0.0]]),
                           np.array([50.0]), np.zeros(3), size, size,
                           tid, toff, TILE_SIZE)
    assert np.isclose(amap[8, 8], W_CAP, atol=1e-12)
    img2, amap2 = be.forward(mean, cov, np.array([[1.0, 0.0, 0.0]]),
                             np.array([W_MIN / 2]), np.zeros(3), size, size,
                             tid, toff, TILE_SIZE)
    assert np.array_equal(amap2, np.zeros((size, size)))


@pytest.mark.parametrize("backend", BACKENDS)
def test_early_termination(backend):
    """Once transmittance drops below T_EPS, later splats cannot contribute."""
    be = get_backend(backend)
    size = 16
    n = 80
    mean = np.ascontiguousarray(np.tile([8.0, 8.0], (n, 1)))
    cov = np.ascontiguousarray(np.tile([9.0, 0.0, 9.0], (n, 1)))
    rgb = np.zeros((n, 3))
    rgb[-1] = 1.0                        # only the last splat is bright
    alpha = np.full(n, 0.5)
    tid = np.arange(n, dtype=np.int64)
    toff = np.array([0, n], dtype=np.int64)
    img, amap = be.forward(mean, cov, rgb, alpha, np.zeros(3), size, size,
                           tid, toff, TILE_SIZE)
    # transmittance after k front splats is (1-w)^k << T_EPS long before n-1
    assert img[8, 8, 0] < 1e-6
    assert amap[8, 8] > 1.0 - 2e-4


def test_rasterize_tape_gradients(rng):
    """End-to-end gradient of the rasterize custom op vs finite differences."""
    cam = look_at(np.array([0.0, 0.0, 3.0]), np.zeros(3), width=24, height=24)
    n = 6
    mean0 = rng.uniform(6, 18, (n, 2))
    cov0 = np.stack([np.full(n, 6.0), rng.uniform(-1, 1, n), np.full(n, 5.0)], 1)
    rgb0 = rng.uniform(0.1, 0.9, (n, 3))
    al0 = rng.uniform(0.3, 0.8, n)
    depth = np.arange(n, dtype=np.float64)
    valid = np.ones(n, dtype=bool)
    target = rng.uniform(0, 1, (24, 24, 3))

    def loss_np(m, c, r, a):
        img, amap = rasterize(Tensor(m), Tensor(c), Tensor(r), Tensor(a),
                              depth, valid, cam)
        return float(((img.data - target) ** 2).sum() + amap.data.sum())

    tm, tc = Tensor(mean0, requires_grad=True), Tensor(cov0, requires_grad=True)
    tr, ta = Tensor(rgb0, requires_grad=True), Tensor(al0, requires_grad=True)
    img, amap = rasterize(tm, tc, tr, ta, depth, valid, cam)
    (((img - Tensor(target)) ** 2).sum() + amap.sum()).backward()
    for t, x0, other in (
        (tm, mean0, lambda x: loss_np(x, cov0, rgb0, al0)),
        (tc, cov0, lambda x: loss_np(mean0, x, rgb0, al0)),
        (tr, rgb0, lambda x: loss_np(mean0, cov0, x, al0)),
        (ta, al0, lambda x: loss_np(mean0, cov0, rgb0, x)),
    ):
        num = finite_diff_scalar(other, x0, h=1e-6)
        assert rel_err(t.grad, num, floor=1e-2) < 1e-4


def test_rasterize_rejects_non_psd(rng):
    cam = look_at(np.array([0.0, 0.0, 3.0]), np.zeros(3), width=16, height=16)
    mean = Tensor(np.array([[8.0, 8.0]]))
    bad = Tensor(np.array([[1.0, 2.0, 1.0]]))   # det < 0
    with pytest.raises(ValueError):
        rasterize(mean, bad, Tensor(np.ones((1, 3))), Tensor(np.ones(1)),
                  np.zeros(1), np.ones(1, dtype=bool), cam)


def test_depth_ordering_stable_tiebreak(rng):
    """Equal depths keep splat-index order, so renders are reproducible."""
    cam = look_at(np.array([0.0, 0.0, 3.0]), np.zeros(3), width=16, height=16)
    mean = Tensor(np.tile([8.0, 8.0], (2, 1)))
    cov = Tensor(np.tile([4.0, 0.0, 4.0], (2, 1)))
    rgb = Tensor(np.array([[1.0, 0, 0], [0, 1.0, 0]]))
    al = Tensor(np.array([0.9, 0.9]))
    depth = np.zeros(2)
    img, _ = rasterize(mean, cov, rgb, al, depth, np.ones(2, dtype=bool), cam)
    # splat 0 (red) must be composited first
    assert img.data[8, 8, 0] > img.data[8, 8, 1]
