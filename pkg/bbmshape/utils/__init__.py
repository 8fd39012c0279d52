"""
Utility functions for bbmshape
"""

import hashlib
import json
import math
from pathlib import Path

import numpy as np


def ensure_dir(path: str | Path) -> Path:
    """
    Create a directory if needed.

    Args:
        path: Directory path

    Returns:
        The directory as a Path
    """
    directory = Path(path)
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def stable_hash(payload: dict) -> str:
    """
    Hash a JSON-serializable mapping independently of key order.

    Args:
        payload: Mapping to hash

    Returns:
        Hex sha256 digest of the canonical JSON text
    """
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def unit_vector(e, dim: int | None = None, tol: float = 1e-12) -> np.ndarray:
    """
    Validate a direction and return it as a float array.

    Args:
        e: Direction (scalar allowed in d=1)
        dim: Expected dimension, if known
        tol: Allowed deviation of |e| from 1

    Returns:
        1-D float array of unit length

    Raises:
        ValueError: If the length or dimension is wrong
    """
    vec = np.atleast_1d(np.asarray(e, dtype=float)).ravel()
    if dim is not None and vec.size != dim:
        raise ValueError(f"Direction {vec.tolist()} has dimension {vec.size}, expected {dim}")
    norm = float(np.linalg.norm(vec))
    if abs(norm - 1.0) > tol:
        raise ValueError(f"Direction {vec.tolist()} is not a unit vector (norm {norm})")
    return vec


def direction_grid(dim: int, n_directions: int) -> np.ndarray:
    """
    Directions spread uniformly over the unit sphere.

    d=1 always returns {+1, -1}; d=2 uses equal angles starting at 0;
    d=3 uses a Fibonacci lattice.

    Args:
        dim: Space dimension
        n_directions: Requested number of directions

    Returns:
        Array of shape (n, dim)
    """
    if n_directions < 2:
        raise ValueError(f"Need at least 2 directions, got {n_directions}")
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        angles = 2.0 * np.pi * np.arange(n_directions) / n_directions
        return np.column_stack([np.cos(angles), np.sin(angles)])
    if dim == 3:
        index = np.arange(n_directions) + 0.5
        z = 1.0 - 2.0 * index / n_directions
        radius = np.sqrt(np.clip(1.0 - z**2, 0.0, None))
        azimuth = math.pi * (3.0 - math.sqrt(5.0)) * index
        return np.column_stack([radius * np.cos(azimuth), radius * np.sin(azimuth), z])
    raise ValueError(f"Unsupported dimension {dim}")


def direction_angles(directions: np.ndarray) -> np.ndarray:
    """Polar angle in [0, 2pi) of planar directions."""
    return np.mod(np.arctan2(directions[:, 1], directions[:, 0]), 2.0 * np.pi)


def parabola_vertex(x: np.ndarray, y: np.ndarray) -> tuple[float, float] | None:
    """
    Vertex of the parabola through three (possibly nonuniform) points.

    Args:
        x: Three abscissae
        y: Three ordinates

    Returns:
        (x_vertex, y_vertex), or None if the points are collinear
    """
    x0, x1, x2 = (float(v) for v in x)
    y0, y1, y2 = (float(v) for v in y)
    denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
    if denom == 0.0:
        return None
    a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
    if a == 0.0:
        return None
    b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / denom
    c = (x1 * x2 * (x1 - x2) * y0 + x2 * x0 * (x2 - x0) * y1 + x0 * x1 * (x0 - x1) * y2) / denom
    xv = -b / (2.0 * a)
    return xv, c - b * b / (4.0 * a)


def second_differences(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Second divided differences on a nonuniform grid (scaled to approximate y'')."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slopes = np.diff(y) / np.diff(x)
    return 2.0 * np.diff(slopes) / (x[2:] - x[:-2])


def loglog_slope(x, y) -> float:
    """Least-squares slope of log(y) against log(x)."""
    slope, _ = np.polyfit(np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float)), 1)
    return float(slope)
