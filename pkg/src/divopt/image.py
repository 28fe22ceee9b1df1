"""RGB images as genotypes: MSE gate, aesthetic features and random-walk mutation.

Images are ``(H, W, 3)`` uint8 arrays indexed ``[row, col, channel]``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from matplotlib.colors import hsv_to_rgb as _hsv_to_rgb
from matplotlib.colors import rgb_to_hsv as _rgb_to_hsv
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_image
from .diversity import FeatureSpec

MSE_THRESHOLD = 500.0

# Best-guess alignment of the published ranges, which list one more value than
# there are features; the second 0.42..0.5 pair is taken to be a repeat.
DEFAULT_RANGES = {
    "sd_hue": (0.42, 0.7),
    "mean_hue": (0.25, 0.4),
    "mean_saturation": (0.42, 0.5),
    "smoothness": (0.906, 0.918),
    "gcf": (0.0245, 0.0275),
    "symmetry": (0.715, 0.74),
}

LUMA = np.array([0.299, 0.587, 0.114])
GCF_SIZES = (1, 2, 4, 8, 16, 25, 50, 100, 200)


def mse(image, reference) -> float:
    a = check_image(image).astype(np.float64)
    b = check_image(reference).astype(np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shape {a.shape} does not match reference {b.shape}")
    return float(np.mean((a - b) ** 2))


def rgb_to_hsv(pixels) -> np.ndarray:
    """Hexcone HSV of 8-bit RGB values; works on a single pixel or any (..., 3) array."""
    rgb = np.asarray(pixels, dtype=np.float64)
    if rgb.shape[-1] != 3 or np.any(rgb < 0) or np.any(rgb > 255):
        raise ValueError("expected (..., 3) channel values in [0, 255]")
    return _rgb_to_hsv(rgb / 255.0)


def hsv_to_rgb(hsv) -> np.ndarray:
    return np.round(_hsv_to_rgb(np.asarray(hsv, dtype=np.float64)) * 255.0).astype(np.uint8)


def luminance(image) -> np.ndarray:
    """Per-pixel luminance in [0, 1]."""
    return check_image(image).astype(np.float64) @ LUMA / 255.0


def feature_mean_hue(image, circular: bool = False) -> float:
    h = rgb_to_hsv(check_image(image))[..., 0]
    if circular:
        ang = 2 * np.pi * h
        mean = math.atan2(np.sin(ang).mean(), np.cos(ang).mean()) / (2 * np.pi)
        return float(mean % 1.0)
    return float(h.mean())


def feature_sd_hue(image) -> float:
    return float(rgb_to_hsv(check_image(image))[..., 0].std())


def feature_mean_saturation(image) -> float:
    return float(rgb_to_hsv(check_image(image))[..., 1].mean())


def feature_symmetry(image) -> float:
    """1 minus the mean luminance difference to the left-right mirror image."""
    lum = luminance(image)
    return float(1.0 - np.abs(lum - lum[:, ::-1]).mean())


def feature_smoothness(image) -> float:
    return float(1.0 / (1.0 + luminance(image).var()))


def _gcf_weight(i: int) -> float:
    x = i / 9.0
    return (-0.406385 * x + 0.334573) * x + 0.0877526


def _local_contrast(L: np.ndarray) -> float:
    # mean over cells of the mean absolute difference to existing 4-neighbours
    total = np.zeros_like(L)
    count = np.zeros_like(L)
    dv = np.abs(np.diff(L, axis=0))
    dh = np.abs(np.diff(L, axis=1))
    total[:-1, :] += dv
    total[1:, :] += dv
    count[:-1, :] += 1
    count[1:, :] += 1
    total[:, :-1] += dh
    total[:, 1:] += dh
    count[:, :-1] += 1
    count[:, 1:] += 1
    return float((total / count).mean())


def feature_gcf(image) -> float:
    """Global contrast factor: weighted local contrast over nine superpixel sizes.

    Sizes that leave fewer than two superpixels are skipped and the remaining
    weights are rescaled to the full weight total.
    """
    img = check_image(image)
    gray = img.astype(np.float64) @ LUMA
    linear = (gray / 255.0) ** 2.2
    h, w = linear.shape
    weights, contrasts = [], []
    for i, size in enumerate(GCF_SIZES, start=1):
        rows, cols = h // size, w // size
        if size > min(h, w) or rows * cols < 2:
            continue
        blocks = linear[: rows * size, : cols * size].reshape(rows, size, cols, size).mean(axis=(1, 3))
        weights.append(_gcf_weight(i))
        contrasts.append(_local_contrast(100.0 * np.sqrt(blocks)))
    if not weights:
        return 0.0
    full = sum(_gcf_weight(i) for i in range(1, len(GCF_SIZES) + 1))
    scale = full / sum(weights)
    return float(sum(wt * c for wt, c in zip(weights, contrasts)) * scale)


FEATURES = {
    "mean_hue": feature_mean_hue,
    "sd_hue": feature_sd_hue,
    "mean_saturation": feature_mean_saturation,
    "symmetry": feature_symmetry,
    "smoothness": feature_smoothness,
    "gcf": feature_gcf,
}


def default_specs(names: Sequence[str]) -> list[FeatureSpec]:
    return [FeatureSpec(name, *DEFAULT_RANGES[name]) for name in names]


def _extract(image, name, circular_hue):
    if name == "mean_hue":
        return feature_mean_hue(image, circular=circular_hue)
    return FEATURES[name](image)


class ImageFeatureExtractor(TransformerMixin, BaseEstimator):
    def __init__(self, features=("sd_hue", "mean_saturation"), circular_hue=False):
        self.features = features
        self.circular_hue = circular_hue

    def fit(self, X=None, y=None):
        unknown = [f for f in self.features if f not in FEATURES]
        if unknown:
            raise ValueError(f"unknown image features: {unknown}")
        self.n_features_out_ = len(self.features)
        return self

    def transform(self, X):
        return np.array([[_extract(img, f, self.circular_hue) for f in self.features] for img in X])

    def get_feature_names_out(self, input_features=None):
        return np.asarray(self.features, dtype=object)


@dataclass(frozen=True)
class WalkParams:
    t_max: float = 1000.0
    t_lb: int = 1000
    t_ub: int = 20000
    F: float = 2.0
    k: int = 8
    r: int = 30

    def __post_init__(self):
        if not self.t_lb <= self.t_max <= self.t_ub:
            raise ValueError(f"t_max={self.t_max} outside [{self.t_lb}, {self.t_ub}]")
        if self.t_lb < 1:
            raise ValueError("t_lb must be >= 1")
        if not self.F > 1:
            raise ValueError("F must be > 1")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.r < 0:
            raise ValueError("r must be >= 0")


def adapt_walk_length(params: WalkParams, success: bool) -> WalkParams:
    if success:
        t = min(params.F * params.t_max, params.t_ub)
    else:
        t = max(params.F ** (-1.0 / params.k) * params.t_max, params.t_lb)
    return replace(params, t_max=t)


# up, down, left, right as (row, col) steps
_MOVES = np.array([[-1, 0], [1, 0], [0, -1], [0, 1]])


def walk_positions(shape, steps: int, rng: np.random.Generator, start=None) -> np.ndarray:
    """Visited (row, col) positions of a toroidal 4-neighbour random walk."""
    h, w = shape
    if start is None:
        start = (rng.integers(h), rng.integers(w))
    moves = _MOVES[rng.integers(0, 4, size=steps - 1)]
    path = np.vstack([np.asarray(start)[None, :], moves]).cumsum(axis=0)
    path[:, 0] %= h
    path[:, 1] %= w
    return path


def offset_random_walk_mutation(image, params: WalkParams, rng: np.random.Generator) -> np.ndarray:
    """Add one random RGB offset to every pixel a random walk visits.

    A pixel visited ``m`` times receives ``m`` offsets; channels saturate at
    0 and 255. Because the offset has a fixed sign per channel, clipping once
    after adding ``m * offset`` is the same as clipping after every visit.
    """
    img = check_image(image)
    steps = int(math.floor(params.t_max))
    if steps < 1:
        raise ValueError("t_max must be >= 1")
    h, w, _ = img.shape
    start = (rng.integers(h), rng.integers(w))
    offset = rng.integers(-params.r, params.r + 1, size=3)
    path = walk_positions((h, w), steps, rng, start)
    visits = np.bincount(path[:, 0] * w + path[:, 1], minlength=h * w).reshape(h, w)
    out = img.astype(np.int64) + visits[..., None] * offset[None, None, :]
    return np.clip(out, 0, 255).astype(np.uint8)


def gradient_reference(size: int = 64) -> np.ndarray:
    """Synthetic reference: red rises left to right, green top to bottom, blue falls diagonally."""
    ramp = np.linspace(0.0, 255.0, size)
    r = np.broadcast_to(ramp[None, :], (size, size))
    g = np.broadcast_to(ramp[:, None], (size, size))
    b = 255.0 - (r + g) / 2.0
    return np.round(np.stack([r, g, b], axis=-1)).astype(np.uint8)


BUILTIN_REFERENCES = {"gradient64": lambda: gradient_reference(64)}


class ImageDomain:
    """Images whose MSE to ``reference`` stays below ``threshold``."""

    name = "image"
    genotype_suffix = ".ppm"

    def __init__(self, reference, features: Sequence[str] = ("sd_hue", "mean_saturation"),
                 threshold: float = MSE_THRESHOLD, walk: WalkParams | None = None,
                 circular_hue: bool = False):
        self.reference = check_image(reference)
        unknown = [f for f in features if f not in FEATURES]
        if unknown:
            raise ValueError(f"unknown image features: {unknown}")
        self.feature_names = tuple(features)
        self.threshold = threshold
        self.initial_walk = walk or WalkParams()
        self.circular_hue = circular_hue
        self.start_run()

    def start_run(self) -> None:
        self.walk = self.initial_walk

    def initialize(self, rng):
        return self.reference.copy(), 0.0

    def mutate(self, genotype, rng):
        return offset_random_walk_mutation(genotype, self.walk, rng)

    def quality(self, genotype, rng) -> float:
        return mse(genotype, self.reference)

    def accepts(self, quality: float) -> bool:
        return quality < self.threshold

    def features(self, genotype) -> np.ndarray:
        return np.array([_extract(genotype, f, self.circular_hue) for f in self.feature_names])

    def adapt(self, success: bool) -> None:
        self.walk = adapt_walk_length(self.walk, success)

    def state(self) -> dict:
        return {"t_max": self.walk.t_max}

    def write_genotype(self, genotype, path) -> None:
        write_ppm(genotype, path)


def write_ppm(image, path: str | os.PathLike) -> None:
    img = check_image(image)
    h, w, _ = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img).tobytes())


def _ppm_tokens(data: bytes, count: int):
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        end = pos
        while end < len(data) and not data[end : end + 1].isspace():
            end += 1
        tokens.append(data[pos:end])
        pos = end
    return tokens, pos + 1


def read_ppm(path: str | os.PathLike) -> np.ndarray:
    """Read a binary (P6) pixmap with maxval 255."""
    with open(path, "rb") as fh:
        data = fh.read()
    (magic, w, h, maxval), pos = _ppm_tokens(data, 4)
    if magic != b"P6":
        raise ValueError(f"{path}: not a binary PPM (magic {magic!r})")
    if int(maxval) != 255:
        raise ValueError(f"{path}: maxval must be 255, got {int(maxval)}")
    w, h = int(w), int(h)
    pixels = np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=pos)
    return pixels.reshape(h, w, 3).copy()


def load_reference(spec: str) -> np.ndarray:
    """``builtin:<name>`` or a path to a PPM file."""
    if spec.startswith("builtin:"):
        name = spec.split(":", 1)[1]
        if name not in BUILTIN_REFERENCES:
            raise ValueError(f"unknown builtin reference {name!r}")
        return BUILTIN_REFERENCES[name]()
    return read_ppm(spec)
