"""Exact star discrepancy for small point sets in [0, 1]^d, d <= 3.

The supremum over origin-anchored boxes is attained on the grid whose
per-axis values are the point coordinates together with 1, so every routine
here enumerates that grid. For each grid corner ``u`` two deviations are
evaluated: the closed-box overcount ``#{p <= u}/k - vol(u)`` and the open-box
undercount ``vol(u) - #{p < u}/k``.
"""

from __future__ import annotations

import itertools
import os
from typing import Sequence

import numpy as np

from ._validation import check_points

__all__ = [
    "MAX_EXACT_DIM",
    "TIE_TOL",
    "UnsupportedDimensionError",
    "box_deviation",
    "star_discrepancy",
    "star_discrepancy_oracle",
    "min_removal_scan",
    "read_points_csv",
    "write_points_csv",
]

MAX_EXACT_DIM = 3
TIE_TOL = 1e-12


class UnsupportedDimensionError(ValueError):
    pass


def box_deviation(points, u) -> tuple[float, float]:
    """Return ``(over, under)`` for the anchored box with upper corner ``u``."""
    pts = check_points(points)
    u = np.asarray(u, dtype=float)
    if u.shape != (pts.shape[1],):
        raise ValueError(f"corner has shape {u.shape}, expected ({pts.shape[1]},)")
    k = pts.shape[0]
    vol = float(np.prod(u))
    closed = int(np.all(pts <= u, axis=1).sum())
    opened = int(np.all(pts < u, axis=1).sum())
    return closed / k - vol, vol - opened / k


def _critical_grid(pts: np.ndarray) -> list[np.ndarray]:
    return [np.union1d(pts[:, a], [1.0]) for a in range(pts.shape[1])]


def _grid_membership(pts, grid, strict):
    """Boolean (n_corners, k) matrix: point j inside the box of corner i."""
    member = None
    for a, values in enumerate(grid):
        if strict:
            inside = pts[:, a][None, :] < values[:, None]
        else:
            inside = pts[:, a][None, :] <= values[:, None]
        if member is None:
            member = inside
        else:
            member = (member[:, None, :] & inside[None, :, :]).reshape(-1, pts.shape[0])
    return member


def _grid_volumes(grid) -> np.ndarray:
    vol = grid[0]
    for values in grid[1:]:
        vol = (vol[:, None] * values[None, :]).ravel()
    return vol


def _one_sided_membership(pts, grid):
    # literal half-open definition: sup over [0, u) approaches the closed box
    # from the right except on axes already at 1, where p_a = 1 stays outside
    member = None
    for a, values in enumerate(grid):
        col = pts[:, a][None, :]
        inside = np.where(values[:, None] < 1.0, col <= values[:, None], col < 1.0)
        if member is None:
            member = inside
        else:
            member = (member[:, None, :] & inside[None, :, :]).reshape(-1, pts.shape[0])
    return member


def _check_dim(pts):
    if pts.shape[1] > MAX_EXACT_DIM:
        raise UnsupportedDimensionError(
            f"exact star discrepancy supports d <= {MAX_EXACT_DIM}, got d={pts.shape[1]}"
        )


def star_discrepancy(points, one_sided: bool = False) -> float:
    """Exact star discrepancy of a point multiset.

    Parameters
    ----------
    points : array-like of shape (k, d)
        Points in the unit cube, ``k >= 1`` and ``d <= 3``.
    one_sided : bool, default=False
        Use the literal one-sided form ``sup (#{p in [0,u)}/k - vol)``
        instead of the standard two-sided value.

    Returns
    -------
    float
    """
    pts = check_points(points)
    _check_dim(pts)
    k = pts.shape[0]
    grid = _critical_grid(pts)
    vol = _grid_volumes(grid)
    if one_sided:
        counts = _one_sided_membership(pts, grid).sum(axis=1)
        return float(max(0.0, np.max(counts / k - vol)))
    closed = _grid_membership(pts, grid, strict=False).sum(axis=1)
    opened = _grid_membership(pts, grid, strict=True).sum(axis=1)
    over = closed / k - vol
    under = vol - opened / k
    return float(max(over.max(), under.max()))


def star_discrepancy_oracle(points) -> float:
    """Brute-force reference value; naive loops, meant for tests (k <= 12)."""
    pts = [tuple(float(c) for c in p) for p in check_points(points)]
    k, d = len(pts), len(pts[0])
    if d > MAX_EXACT_DIM:
        raise UnsupportedDimensionError(f"oracle supports d <= {MAX_EXACT_DIM}")
    axes = [sorted({p[a] for p in pts} | {1.0}) for a in range(d)]
    best = 0.0
    for u in itertools.product(*axes):
        vol = 1.0
        for c in u:
            vol *= c
        closed = 0
        opened = 0
        for p in pts:
            if all(p[a] <= u[a] for a in range(d)):
                closed += 1
            if all(p[a] < u[a] for a in range(d)):
                opened += 1
        best = max(best, closed / k - vol, vol - opened / k)
    return best


def min_removal_scan(points, tol: float = TIE_TOL, one_sided: bool = False):
    """Find the removals that leave the smallest discrepancy.

    All ``k`` leave-one-out discrepancies are evaluated on the critical grid
    of the full set, which contains the grid of every subset.

    Returns
    -------
    tied_indices : list of int
        Ascending indices whose removal is within ``tol`` of the best value.
    value : float
        The smallest leave-one-out discrepancy.
    """
    pts = check_points(points)
    _check_dim(pts)
    k = pts.shape[0]
    if k < 2:
        raise ValueError("min_removal_scan needs at least 2 points")
    grid = _critical_grid(pts)
    vol = _grid_volumes(grid)[:, None]
    if one_sided:
        member = _one_sided_membership(pts, grid)
        counts = member.sum(axis=1, keepdims=True)
        dev = (counts - member) / (k - 1) - vol
        values = np.maximum(dev.max(axis=0), 0.0)
    else:
        closed = _grid_membership(pts, grid, strict=False)
        opened = _grid_membership(pts, grid, strict=True)
        over = (closed.sum(axis=1, keepdims=True) - closed) / (k - 1) - vol
        under = vol - (opened.sum(axis=1, keepdims=True) - opened) / (k - 1)
        values = np.maximum(over.max(axis=0), under.max(axis=0))
    best = float(values.min())
    tied = np.flatnonzero(values <= best + tol)
    return [int(i) for i in tied], best


def write_points_csv(points, path: str | os.PathLike) -> None:
    pts = check_points(points)
    k, d = pts.shape
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# d={d} k={k}\n")
        for p in pts:
            fh.write(",".join(f"{c:.17g}" for c in p) + "\n")


def read_points_csv(path: str | os.PathLike) -> np.ndarray:
    """Read a point file; the ``# d=.. k=..`` header is checked when present."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    header: dict[str, int] = {}
    rows: list[Sequence[float]] = []
    for ln in lines:
        if ln.startswith("#"):
            for tok in ln[1:].split():
                key, _, val = tok.partition("=")
                if val:
                    header[key] = int(val)
            continue
        rows.append([float(c) for c in ln.split(",")])
    if not rows:
        raise ValueError(f"{path}: no points")
    pts = check_points(rows)
    if "d" in header and header["d"] != pts.shape[1]:
        raise ValueError(f"{path}: header says d={header['d']}, rows have d={pts.shape[1]}")
    if "k" in header and header["k"] != pts.shape[0]:
        raise ValueError(f"{path}: header says k={header['k']}, file has {pts.shape[0]} rows")
    return pts
