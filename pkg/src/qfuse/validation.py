"""Input checks shared by the estimators and the CLI."""
from __future__ import annotations

import numpy as np


def to_quaternion(rgb) -> np.ndarray:
    """Pure-quaternion encoding: r, g, b become the i, j, k parts."""
    rgb = np.asarray(rgb, dtype=float)
    if rgb.ndim != 3 or rgb.shape[-1] != 3:
        raise ValueError(f"expected an (M, N, 3) RGB array, got {rgb.shape}")
    out = np.zeros(rgb.shape[:2] + (4,))
    out[..., 1:] = rgb
    return out


def from_quaternion(Q, atol: float | None = None) -> np.ndarray:
    """Drop the real part and clamp the colour channels to [0, 1].

    With ``atol`` set, a real part larger than ``atol`` raises.
    """
    Q = np.asarray(Q, dtype=float)
    if atol is not None and Q.size and np.abs(Q[..., 0]).max() > atol:
        raise ValueError(f"quaternion image has a real part above {atol:g}")
    return np.clip(Q[..., 1:], 0.0, 1.0)


def check_quaternion_image(X) -> np.ndarray:
    """Accept an RGB ``(M, N, 3)`` or quaternion ``(M, N, 4)`` float image."""
    X = np.asarray(X)
    if X.ndim != 3 or X.shape[-1] not in (3, 4):
        raise ValueError(f"expected an (M, N, 3) RGB or (M, N, 4) quaternion image, got {X.shape}")
    if X.shape[0] == 0 or X.shape[1] == 0:
        raise ValueError("image is empty")
    if not np.issubdtype(X.dtype, np.floating):
        raise TypeError(f"expected float intensities in [0, 1], got dtype {X.dtype}")
    if not np.all(np.isfinite(X)):
        raise ValueError("image contains non-finite values")
    return to_quaternion(X) if X.shape[-1] == 3 else X.astype(float, copy=False)


def check_image_stack(images) -> list[np.ndarray]:
    """Validate N >= 2 aligned images and return them as quaternion arrays."""
    if isinstance(images, np.ndarray) and images.ndim == 4:
        images = list(images)
    images = [check_quaternion_image(im) for im in images]
    if len(images) < 2:
        raise ValueError(f"fusion needs at least two inputs, got {len(images)}")
    shape = images[0].shape
    for k, im in enumerate(images[1:], start=2):
        if im.shape != shape:
            raise ValueError(f"input {k} has shape {im.shape[:2]}, expected {shape[:2]}")
    return images
