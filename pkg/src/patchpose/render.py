"""Differentiable texture warping and compositing.

The forward path pulls each composited pixel back through the inverse
homography into texture coordinates and samples bilinearly (inverse
mapping, so the warp is hole-free). The interior mask is hard binary;
sampling inside is bilinear, which keeps the map linear in the texel
values and makes the backward pass an exact transposition of the
cached sampling weights.

Texture coordinate convention: the texture covers [0, tw] x [0, th]
with texel (row i, col j) centered at (j + 0.5, i + 0.5). Destination
pixels sample at their centers. Coordinates within half a texel of the
texture border clamp to the border texel (no wrap).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import CameraIntrinsics, PatchPlacement, homography_from_correspondences, project_patch


class DegenerateHomographyError(ValueError):
    """The warp homography is not invertible."""


def texture_corners(th: int, tw: int) -> np.ndarray:
    """Outer corners of the texture domain, order TL, TR, BR, BL."""
    return np.array([[0.0, 0.0], [tw, 0.0], [tw, th], [0.0, th]])


@dataclass(frozen=True)
class CompositeRecord:
    """Bookkeeping for one warp+insert, enough to run the backward pass.

    ``pix_rows``/``pix_cols`` index the in-mask destination pixels;
    ``tex_idx``/``weights`` give each pixel's four bilinear source texels
    (flat row-major indices) and weights, which sum to 1 per pixel.
    """

    texture_shape: tuple[int, int]
    image_shape: tuple[int, int]
    homography: np.ndarray | None
    mask: np.ndarray
    pix_rows: np.ndarray
    pix_cols: np.ndarray
    tex_idx: np.ndarray
    weights: np.ndarray

    @property
    def n_pixels(self) -> int:
        return int(self.pix_rows.size)


def empty_record(texture_shape: tuple[int, int], image_shape: tuple[int, int]) -> CompositeRecord:
    """Record for a degenerate placement: no pixels touched, zero gradients."""
    return CompositeRecord(
        texture_shape=tuple(texture_shape),
        image_shape=tuple(image_shape),
        homography=None,
        mask=np.zeros(image_shape),
        pix_rows=np.zeros(0, dtype=np.intp),
        pix_cols=np.zeros(0, dtype=np.intp),
        tex_idx=np.zeros((0, 4), dtype=np.intp),
        weights=np.zeros((0, 4)),
    )


def _points_in_quad(px: np.ndarray, py: np.ndarray, quad: np.ndarray) -> np.ndarray:
    """Inclusive point-in-convex-quad test, tolerant of either winding."""
    q = np.asarray(quad, dtype=float)
    e = np.roll(q, -1, axis=0) - q
    x, y = q[:, 0], q[:, 1]
    area2 = float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))
    sign = 1.0 if area2 >= 0 else -1.0
    inside = np.ones(px.shape, dtype=bool)
    for i in range(4):
        cross = e[i, 0] * (py - q[i, 1]) - e[i, 1] * (px - q[i, 0])
        inside &= sign * cross >= 0.0
    return inside


def warp_patch(q: np.ndarray, h: np.ndarray, out_w: int, out_h: int,
               quad: np.ndarray) -> tuple[np.ndarray, np.ndarray, CompositeRecord]:
    """Warp texture q into an (out_h, out_w, 3) image under homography h.

    h maps texture coordinates (see module docstring) to destination pixel
    coordinates; quad is the footprint outline in the destination image.
    Pixels outside the quad, or whose pre-image falls outside the texture
    domain, get mask 0.
    """
    q = np.asarray(q, dtype=float)
    th, tw = q.shape[0], q.shape[1]
    h = np.asarray(h, dtype=float)
    det = np.linalg.det(h)
    if not np.isfinite(det) or abs(det) < 1e-12:
        raise DegenerateHomographyError(f"homography is not invertible (det={det})")
    hinv = np.linalg.inv(h)

    quad = np.asarray(quad, dtype=float)
    lo = np.floor(quad.min(axis=0)).astype(int)
    hi = np.ceil(quad.max(axis=0)).astype(int)
    x0, y0 = max(lo[0], 0), max(lo[1], 0)
    x1, y1 = min(hi[0] + 1, out_w), min(hi[1] + 1, out_h)

    image = np.zeros((out_h, out_w, 3))
    mask = np.zeros((out_h, out_w))
    if x0 >= x1 or y0 >= y1:
        return image, mask, empty_record((th, tw), (out_h, out_w))

    ys, xs = np.mgrid[y0:y1, x0:x1]
    cx = xs.ravel() + 0.5
    cy = ys.ravel() + 0.5
    keep = _points_in_quad(cx, cy, quad)

    ones = np.ones(cx.shape)
    src = np.stack([cx, cy, ones], axis=1) @ hinv.T
    w = src[:, 2]
    keep &= np.abs(w) > 1e-12
    tx = np.where(keep, src[:, 0] / np.where(keep, w, 1.0), -1.0)
    ty = np.where(keep, src[:, 1] / np.where(keep, w, 1.0), -1.0)
    keep &= (tx >= 0.0) & (tx <= tw) & (ty >= 0.0) & (ty <= th)

    rows = ys.ravel()[keep]
    cols = xs.ravel()[keep]
    sx = np.clip(tx[keep] - 0.5, 0.0, tw - 1.0)
    sy = np.clip(ty[keep] - 0.5, 0.0, th - 1.0)
    ix0 = np.clip(np.floor(sx).astype(np.intp), 0, max(tw - 2, 0))
    iy0 = np.clip(np.floor(sy).astype(np.intp), 0, max(th - 2, 0))
    fx = sx - ix0
    fy = sy - iy0
    ix1 = np.minimum(ix0 + 1, tw - 1)
    iy1 = np.minimum(iy0 + 1, th - 1)

    weights = np.stack([
        (1.0 - fx) * (1.0 - fy),
        fx * (1.0 - fy),
        (1.0 - fx) * fy,
        fx * fy,
    ], axis=1)
    tex_idx = np.stack([
        iy0 * tw + ix0,
        iy0 * tw + ix1,
        iy1 * tw + ix0,
        iy1 * tw + ix1,
    ], axis=1)

    flat = q.reshape(th * tw, 3)
    sampled = np.einsum("pk,pkc->pc", weights, flat[tex_idx])
    image[rows, cols] = sampled
    mask[rows, cols] = 1.0

    rec = CompositeRecord(
        texture_shape=(th, tw),
        image_shape=(out_h, out_w),
        homography=h.copy(),
        mask=mask,
        pix_rows=rows,
        pix_cols=cols,
        tex_idx=tex_idx,
        weights=weights,
    )
    return image, mask, rec


def insert_patch(warped: np.ndarray, mask: np.ndarray, scene: np.ndarray) -> np.ndarray:
    """Composite: mask*warped + (1-mask)*scene, element-wise."""
    warped = np.asarray(warped, dtype=float)
    scene = np.asarray(scene, dtype=float)
    mask = np.asarray(mask, dtype=float)
    if warped.shape != scene.shape or mask.shape != scene.shape[:2]:
        raise ValueError(
            f"shape mismatch: warped {warped.shape}, mask {mask.shape}, scene {scene.shape}"
        )
    m = mask[..., None]
    return m * warped + (1.0 - m) * scene


def apply_patch(q: np.ndarray, placement: PatchPlacement, k: CameraIntrinsics,
                scene: np.ndarray) -> tuple[np.ndarray, CompositeRecord]:
    """Full applicator: project outline, fit homography, warp, composite.

    Degenerate placements (edge-on, back-facing, sub-minimal area) return
    the scene unchanged with an empty record, so pose sweeps stay defined.
    """
    q = np.asarray(q, dtype=float)
    scene = np.asarray(scene, dtype=float)
    out_h, out_w = scene.shape[0], scene.shape[1]
    quad = project_patch(placement, k)
    if quad is None:
        return scene, empty_record((q.shape[0], q.shape[1]), (out_h, out_w))
    h = homography_from_correspondences(texture_corners(q.shape[0], q.shape[1]), quad)
    warped, mask, rec = warp_patch(q, h, out_w, out_h, quad)
    return insert_patch(warped, mask, scene), rec


def backprop_to_texture(rec: CompositeRecord, grad_out: np.ndarray) -> np.ndarray:
    """Pull a composited-image gradient back onto the texels.

    dL/dq[t] = sum over recorded pixels p of w(p, t) * grad_out(p); the
    homography is a constant of the forward pass, so no pose gradients.
    """
    grad_out = np.asarray(grad_out, dtype=float)
    if grad_out.shape != (*rec.image_shape, 3):
        raise ValueError(
            f"grad_out shape {grad_out.shape} does not match record image shape {rec.image_shape}"
        )
    th, tw = rec.texture_shape
    grad_flat = np.zeros((th * tw, 3))
    if rec.n_pixels:
        gpix = grad_out[rec.pix_rows, rec.pix_cols]
        for corner in range(4):
            np.add.at(grad_flat, rec.tex_idx[:, corner], rec.weights[:, corner, None] * gpix)
    return grad_flat.reshape(th, tw, 3)


def texture_to_png(texture: np.ndarray, path: str | Path) -> None:
    """Quantize a [0,1] texture to 8-bit RGB and write a PNG."""
    from PIL import Image as PILImage

    arr = np.asarray(texture, dtype=float)
    q8 = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    PILImage.fromarray(q8, mode="RGB").save(Path(path), format="PNG")


def texture_from_png(path: str | Path) -> np.ndarray:
    """Read a PNG back into a float [0,1] texture."""
    from PIL import Image as PILImage

    with PILImage.open(Path(path)) as im:
        arr = np.asarray(im.convert("RGB"), dtype=float)
    return arr / 255.0


def write_json_sidecar(meta: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
