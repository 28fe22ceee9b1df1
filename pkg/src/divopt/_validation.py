"""Input validation helpers shared by the estimators and domain code."""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils.validation import check_array


def check_points(points) -> np.ndarray:
    """Validate a (k, d) array of points in the unit cube."""
    pts = check_array(points, dtype=np.float64, ensure_2d=True, input_name="points")
    if pts.shape[1] < 1:
        raise ValueError("points must have at least one coordinate")
    if np.any(pts < 0.0) or np.any(pts > 1.0):
        raise ValueError("points must lie in [0, 1]^d")
    return pts


def check_instance(cities, min_cities: int = 1) -> np.ndarray:
    """Validate TSP city coordinates, shape (n, 2), inside the unit square."""
    arr = check_array(cities, dtype=np.float64, input_name="cities", ensure_min_samples=min_cities)
    if arr.shape[1] != 2:
        raise ValueError(f"cities must have shape (n, 2), got {arr.shape}")
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError("city coordinates must lie in [0, 1]")
    return arr


def check_image(image) -> np.ndarray:
    """Validate an (H, W, 3) RGB raster with 8-bit channels; returns uint8."""
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"image must have shape (H, W, 3), got {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError("image must have at least one pixel")
    if arr.dtype != np.uint8:
        if np.any(arr < 0) or np.any(arr > 255):
            raise ValueError("image channels must lie in [0, 255]")
        if not np.all(arr == np.round(arr)):
            raise ValueError("image channels must be integers")
        arr = arr.astype(np.uint8)
    return arr


def as_generator(random_state) -> np.random.Generator:
    if isinstance(random_state, np.random.Generator):
        return random_state
    if random_state is None or isinstance(random_state, numbers.Integral):
        return np.random.default_rng(random_state)
    raise TypeError(f"cannot build a Generator from {random_state!r}")
