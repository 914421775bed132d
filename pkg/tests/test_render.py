"""Warp, compositing, and texture-gradient unit tests.

The warp is linear in the texel values, so finite differences on the
composited image are exact up to float noise; the naive per-pixel
sampler below restates the documented convention independently of the
vectorized implementation.
"""

import numpy as np
import pytest

from patchpose.geometry import PatchPlacement, intrinsics_from_fov
from patchpose.render import (
    CompositeRecord,
    DegenerateHomographyError,
    apply_patch,
    backprop_to_texture,
    empty_record,
    insert_patch,
    texture_corners,
    texture_from_png,
    texture_to_png,
    warp_patch,
)


def _naive_sample(q: np.ndarray, tx: float, ty: float) -> np.ndarray:
    """Reference bilinear lookup following the module's stated convention."""
    th, tw = q.shape[:2]
    sx = min(max(tx - 0.5, 0.0), tw - 1.0)
    sy = min(max(ty - 0.5, 0.0), th - 1.0)
    ix = min(int(np.floor(sx)), tw - 2) if tw > 1 else 0
    iy = min(int(np.floor(sy)), th - 2) if th > 1 else 0
    fx, fy = sx - ix, sy - iy
    return ((1 - fx) * (1 - fy) * q[iy, ix] + fx * (1 - fy) * q[iy, ix + 1]
            + (1 - fx) * fy * q[iy + 1, ix] + fx * fy * q[iy + 1, ix + 1])


def test_texture_corners_order():
    assert np.allclose(texture_corners(8, 16),
                       [[0, 0], [16, 0], [16, 8], [0, 8]])


def test_identity_warp_reproduces_texture():
    rng = np.random.default_rng(0)
    q = rng.uniform(0, 1, size=(64, 64, 3))
    quad = texture_corners(64, 64)
    image, mask, rec = warp_patch(q, np.eye(3), 64, 64, quad)
    assert mask.sum() == 64 * 64
    assert np.max(np.abs(image - q)) < 1e-12
    assert rec.n_pixels == 64 * 64


def test_warp_matches_naive_sampler():
    rng = np.random.default_rng(1)
    q = rng.uniform(0, 1, size=(8, 8, 3))
    # scale texture [0,8]^2 up onto a 20x20 image region with a shift
    h = np.array([[2.0, 0.0, 1.5], [0.0, 2.0, 0.5], [0.0, 0.0, 1.0]])
    quad = np.array([[1.5, 0.5], [17.5, 0.5], [17.5, 16.5], [1.5, 16.5]])
    image, mask, rec = warp_patch(q, h, 20, 20, quad)
    hinv = np.linalg.inv(h)
    for r in range(20):
        for c in range(20):
            if not mask[r, c]:
                continue
            src = hinv @ [c + 0.5, r + 0.5, 1.0]
            want = _naive_sample(q, src[0] / src[2], src[1] / src[2])
            assert np.max(np.abs(image[r, c] - want)) < 1e-12


def test_weights_partition_of_unity():
    k = intrinsics_from_fov(60.0, 64, 64)
    rng = np.random.default_rng(2)
    scene = np.zeros((64, 64, 3))
    for _ in range(20):
        placement = PatchPlacement(
            yaw_deg=float(rng.uniform(-70, 70)),
            roll_deg=float(rng.uniform(-180, 180)),
            depth=float(rng.uniform(4, 10)),
            side=2.0,
        )
        q = rng.uniform(0, 1, size=(16, 16, 3))
        _, rec = apply_patch(q, placement, k, scene)
        if rec.n_pixels == 0:
            continue
        assert np.allclose(rec.weights.sum(axis=1), 1.0)
        assert rec.weights.min() >= 0.0
        assert rec.tex_idx.min() >= 0 and rec.tex_idx.max() < 16 * 16


def test_full_cover_placement():
    # side chosen so the projected square spans the image exactly
    k = intrinsics_from_fov(60.0, 64, 64)
    z = 7.0
    side = 64.0 * z / k.fx
    q = np.random.default_rng(3).uniform(0, 1, size=(32, 32, 3))
    scene = np.full((64, 64, 3), 0.25)
    out, rec = apply_patch(q, PatchPlacement(depth=z, side=side), k, scene)
    assert rec.mask.sum() == 64 * 64
    assert not np.any(out == 0.25)


def test_warp_linearity_in_texels():
    k = intrinsics_from_fov(60.0, 64, 64)
    rng = np.random.default_rng(4)
    scene = np.zeros((64, 64, 3))
    placement = PatchPlacement(yaw_deg=35.0, roll_deg=20.0, depth=6.0)
    q1 = rng.uniform(0, 1, size=(16, 16, 3))
    q2 = rng.uniform(0, 1, size=(16, 16, 3))
    a, b = 0.3, 0.7
    out1, _ = apply_patch(q1, placement, k, scene)
    out2, _ = apply_patch(q2, placement, k, scene)
    mix, _ = apply_patch(a * q1 + b * q2, placement, k, scene)
    assert np.max(np.abs(mix - (a * out1 + b * out2))) < 1e-12


def test_texture_gradient_finite_difference():
    k = intrinsics_from_fov(60.0, 64, 64)
    rng = np.random.default_rng(5)
    scene = rng.uniform(0, 1, size=(64, 64, 3))
    grad_out = rng.normal(size=(64, 64, 3))
    placement = PatchPlacement(yaw_deg=25.0, roll_deg=-40.0, depth=6.5)
    q = rng.uniform(0.2, 0.8, size=(8, 8, 3))
    _, rec = apply_patch(q, placement, k, scene)
    grad = backprop_to_texture(rec, grad_out)

    eps = 1e-4
    for _ in range(12):
        i = int(rng.integers(0, 8))
        j = int(rng.integers(0, 8))
        c = int(rng.integers(0, 3))
        qp, qm = q.copy(), q.copy()
        qp[i, j, c] += eps
        qm[i, j, c] -= eps
        lp = float((apply_patch(qp, placement, k, scene)[0] * grad_out).sum())
        lm = float((apply_patch(qm, placement, k, scene)[0] * grad_out).sum())
        fd = (lp - lm) / (2 * eps)
        assert abs(fd - grad[i, j, c]) < 1e-6 * max(1.0, abs(fd))


def test_degenerate_placement_passthrough():
    k = intrinsics_from_fov(60.0, 64, 64)
    scene = np.random.default_rng(6).uniform(0, 1, size=(64, 64, 3))
    q = np.full((16, 16, 3), 0.5)
    out, rec = apply_patch(q, PatchPlacement(yaw_deg=180.0), k, scene)
    assert out is scene or np.array_equal(out, scene)
    assert rec.n_pixels == 0
    assert np.array_equal(backprop_to_texture(rec, np.ones((64, 64, 3))),
                          np.zeros((16, 16, 3)))


def test_empty_record_shapes():
    rec = empty_record((8, 8), (32, 32))
    assert rec.n_pixels == 0
    assert rec.mask.shape == (32, 32)
    with pytest.raises(ValueError):
        backprop_to_texture(rec, np.ones((16, 16, 3)))  # wrong image shape


def test_warp_rejects_singular_homography():
    q = np.zeros((4, 4, 3))
    h = np.zeros((3, 3))
    with pytest.raises(DegenerateHomographyError):
        warp_patch(q, h, 8, 8, texture_corners(4, 4))


def test_insert_patch_semantics():
    scene = np.zeros((4, 4, 3))
    warped = np.ones((4, 4, 3))
    mask = np.zeros((4, 4))
    mask[1, 2] = 1.0
    out = insert_patch(warped, mask, scene)
    assert out[1, 2, 0] == 1.0
    assert out.sum() == 3.0
    with pytest.raises(ValueError):
        insert_patch(warped, np.zeros((3, 3)), scene)
    with pytest.raises(ValueError):
        insert_patch(np.ones((2, 2, 3)), mask, scene)


def test_png_roundtrip(tmp_path):
    rng = np.random.default_rng(7)
    q = rng.uniform(0, 1, size=(16, 16, 3))
    p = tmp_path / "t.png"
    texture_to_png(q, p)
    back = texture_from_png(p)
    assert back.shape == q.shape
    assert np.max(np.abs(back - q)) <= 0.5 / 255 + 1e-12

    # exactly representable values survive untouched
    exact = (np.arange(48).reshape(4, 4, 3) % 256) / 255.0
    texture_to_png(exact, p)
    assert np.array_equal(texture_from_png(p), exact)


def test_png_write_deterministic(tmp_path):
    q = np.random.default_rng(8).uniform(0, 1, size=(16, 16, 3))
    a, b = tmp_path / "a.png", tmp_path / "b.png"
    texture_to_png(q, a)
    texture_to_png(q, b)
    assert a.read_bytes() == b.read_bytes()
