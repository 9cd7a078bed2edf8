"""Discrete Laplacian filtering, energy functionals, and heatmap rendering.

All image fields are C x H x W float arrays. The Laplacian uses the 5-point
stencil [[0,1,0],[1,-4,1],[0,1,0]] with replicate (edge-clamp) padding, so
constants are annihilated exactly and no spurious boundary energy is
introduced into the energy functionals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve

from .errors import DimensionMismatchError

LAPLACIAN_KERNEL = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])

#: Denominator guard for the top-k high-frequency share.
TOPK_FLOOR = 1e-12

#: Number of entries in the fixed blue-to-red color ramp.
RAMP_SIZE = 256


def _as_image(data) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.ndim == 2:
        arr = arr[None, :, :]
    if arr.ndim != 3:
        raise DimensionMismatchError(f"expected C x H x W image, got shape {arr.shape}")
    if arr.shape[1] < 1 or arr.shape[2] < 1:
        raise DimensionMismatchError(f"empty image plane: shape {arr.shape}")
    return arr


def laplacian(img) -> np.ndarray:
    """Per-channel 5-point Laplacian under replicate padding.

    Output shape equals input shape. A constant image maps to exact zeros;
    a linear ramp is annihilated in the interior and leaves +/-1 second
    differences on the clamped edge rows.
    """
    arr = _as_image(img)
    out = np.empty_like(arr)
    for c in range(arr.shape[0]):
        out[c] = convolve(arr[c], LAPLACIAN_KERNEL, mode="nearest")
    return out


def variance_energy(field) -> float:
    """Population variance (divide by N) over all channel-pixel entries."""
    arr = np.asarray(field, dtype=float)
    if arr.size < 1:
        raise DimensionMismatchError("variance_energy needs at least one element")
    return float(arr.var())


def mav_energy(field) -> float:
    """Mean absolute value over all entries."""
    arr = np.asarray(field, dtype=float)
    if arr.size < 1:
        raise DimensionMismatchError("mav_energy needs at least one element")
    return float(np.abs(arr).mean())


def phfe(p1, mode: str = "variance") -> float:
    """High-frequency energy of a projection field: energy(laplacian(p1)).

    ``mode`` selects the energy functional: population variance (default) or
    mean absolute value.
    """
    lap = laplacian(p1)
    if mode == "variance":
        return variance_energy(lap)
    if mode == "mav":
        return mav_energy(lap)
    raise ValueError(f"unknown phfe mode {mode!r}; expected 'variance' or 'mav'")


def topk_share(magnitudes, k_percent: float, floor: float = TOPK_FLOOR) -> float:
    """Share of total magnitude carried by the top k% pixels.

    Selects exactly max(1, floor(k% * number of pixels)) entries with the
    largest magnitude; ties break by row-major index (stable). Returns
    selected-sum / (total-sum + floor).
    """
    m = np.asarray(magnitudes, dtype=float).ravel()
    if m.size < 1:
        raise DimensionMismatchError("topk_share needs at least one pixel")
    if not 0.0 < k_percent < 100.0:
        raise ValueError(f"k_percent must lie in (0, 100), got {k_percent}")
    n_sel = max(1, int(np.floor(k_percent / 100.0 * m.size)))
    # stable sort on (-m) keeps row-major order among ties
    order = np.argsort(-m, kind="stable")
    selected = m[order[:n_sel]]
    return float(selected.sum() / (m.sum() + floor))


def topk_hf_share(img, k_percent: float, floor: float = TOPK_FLOOR) -> float:
    """Top-k concentration of the channel-mean absolute Laplacian response."""
    arr = _as_image(img)
    m = np.abs(laplacian(arr)).mean(axis=0)
    return topk_share(m, k_percent, floor)


@dataclass
class HeatMap:
    """A min-max normalized H x W intensity map.

    ``normalization`` records the (min, max) used; constant inputs normalize
    to all zeros.
    """

    data: np.ndarray
    normalization: tuple[float, float]

    def to_csv(self, path) -> None:
        """Row-major CSV dump of the normalized values, 9 significant digits."""
        lines = []
        for row in self.data:
            lines.append(",".join("%.9g" % v for v in row))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")


def normalize_heatmap(raw) -> HeatMap:
    """Min-max normalize a raw H x W map into [0, 1]."""
    arr = np.asarray(raw, dtype=float)
    lo, hi = float(arr.min()), float(arr.max())
    if hi > lo:
        data = (arr - lo) / (hi - lo)
    else:
        data = np.zeros_like(arr)
    return HeatMap(data=data, normalization=(lo, hi))


def jacobian_norm_map(j, shape: tuple[int, int, int]) -> HeatMap:
    """Pixel-wise Frobenius norm of a subspace Jacobian, min-max normalized.

    ``j`` may be a SubspaceJacobian or a raw (C*H*W) x P matrix; each pixel
    aggregates over channels and all probed subspace columns.
    """
    matrix = getattr(j, "matrix", j)
    matrix = np.asarray(matrix, dtype=float)
    c, h, w = shape
    if matrix.shape[0] != c * h * w:
        raise DimensionMismatchError(
            f"jacobian rows {matrix.shape[0]} != C*H*W = {c * h * w}"
        )
    sq = (matrix**2).sum(axis=1).reshape(c, h, w)
    return normalize_heatmap(np.sqrt(sq.sum(axis=0)))


def _color_ramp() -> np.ndarray:
    t = np.arange(RAMP_SIZE) / (RAMP_SIZE - 1)
    return np.stack([t, np.zeros_like(t), 1.0 - t], axis=1)


def _upsample(data: np.ndarray, target: tuple[int, int], mode: str) -> np.ndarray:
    h, w = data.shape
    th, tw = target
    if th < 1 or tw < 1:
        raise DimensionMismatchError(f"target size must be positive, got {target}")
    if mode == "nearest":
        rows = np.minimum((np.arange(th) * h) // th, h - 1)
        cols = np.minimum((np.arange(tw) * w) // tw, w - 1)
        return data[np.ix_(rows, cols)]
    if mode == "bilinear":
        ys = np.arange(th) * ((h - 1) / (th - 1)) if th > 1 else np.zeros(1)
        xs = np.arange(tw) * ((w - 1) / (tw - 1)) if tw > 1 else np.zeros(1)
        y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
        x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
        y1 = np.minimum(y0 + 1, h - 1)
        x1 = np.minimum(x0 + 1, w - 1)
        fy = (ys - y0)[:, None]
        fx = (xs - x0)[None, :]
        top = data[np.ix_(y0, x0)] * (1 - fx) + data[np.ix_(y0, x1)] * fx
        bot = data[np.ix_(y1, x0)] * (1 - fx) + data[np.ix_(y1, x1)] * fx
        return top * (1 - fy) + bot * fy
    raise ValueError(f"unknown upsample mode {mode!r}")


def render_heatmap(heatmap: HeatMap, target: tuple[int, int], mode: str = "nearest") -> np.ndarray:
    """Upsample a normalized map and apply the fixed blue-to-red ramp.

    Returns a 3 x H' x W' float array with entries in [0, 1]; value 0 maps to
    the first ramp color (blue), 1 to the last (red). Deterministic bytes for
    identical input.
    """
    up = np.clip(_upsample(heatmap.data, target, mode), 0.0, 1.0)
    idx = np.clip(np.rint(up * (RAMP_SIZE - 1)).astype(int), 0, RAMP_SIZE - 1)
    return _color_ramp()[idx].transpose(2, 0, 1)


def save_heatmap_png(heatmap: HeatMap, path, target: tuple[int, int] | None = None,
                     mode: str = "nearest") -> None:
    """Render and write a heatmap as lossless 8-bit RGB PNG."""
    from PIL import Image

    if target is None:
        target = heatmap.data.shape
    rgb = render_heatmap(heatmap, target, mode)
    arr = np.rint(rgb * 255.0).astype(np.uint8).transpose(1, 2, 0)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")
