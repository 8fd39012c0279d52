"""
Periodic branching-rate environments
"""

import logging
import math
from collections.abc import Iterable
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from bbmshape.constants import FieldConstants
from bbmshape.exceptions import FieldError, NegativeFieldError, ZeroFieldError
from bbmshape.utils import stable_hash

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FourierMode:
    """One term amp * cos(2 pi k.x + phase)"""

    k: tuple[int, ...]
    amp: float
    phase: float = 0.0

    def to_dict(self) -> dict:
        return {"k": list(self.k), "amp": self.amp, "phase": self.phase}


@dataclass(frozen=True)
class PeriodicField:
    """
    Real trigonometric polynomial g(x) = offset + sum_k a_k cos(2 pi k.x + phi_k).

    Instances are immutable and hashable, so they can key solver caches
    and be shipped to worker processes.
    """

    dim: int
    modes: tuple[FourierMode, ...]
    offset: float

    def __call__(self, x) -> np.ndarray:
        """Evaluate on points of shape (..., dim); d=1 also accepts plain arrays."""
        points = np.asarray(x, dtype=float)
        if self.dim == 1 and (points.ndim == 0 or points.shape[-1] != 1):
            points = points[..., None]
        values = np.full(points.shape[:-1], self.offset, dtype=float)
        for mode in self.modes:
            arg = 2.0 * np.pi * (points @ np.asarray(mode.k, dtype=float)) + mode.phase
            values += mode.amp * np.cos(arg)
        return values

    @property
    def mean(self) -> float:
        # zero wavevectors are rejected at construction, so every mode averages out
        return float(self.offset)

    @property
    def max_wavenumber(self) -> int:
        """Largest |k_i| over all modes."""
        if not self.modes:
            return 0
        return max(max(abs(c) for c in mode.k) for mode in self.modes)

    @property
    def is_constant(self) -> bool:
        return all(mode.amp == 0.0 for mode in self.modes)

    def sup_norm_bound(self) -> float:
        """Upper bound |offset| + sum |a_k| on ||g||_inf."""
        return abs(self.offset) + sum(abs(mode.amp) for mode in self.modes)

    def fourier_coefficients(self) -> dict[tuple[int, ...], complex]:
        """Map wavevector -> complex coefficient of exp(2 pi i k.x)."""
        coefficients: dict[tuple[int, ...], complex] = {(0,) * self.dim: complex(self.offset)}
        for mode in self.modes:
            if mode.amp == 0.0:
                continue
            half = 0.5 * mode.amp * complex(math.cos(mode.phase), math.sin(mode.phase))
            minus_k = tuple(-c for c in mode.k)
            coefficients[mode.k] = coefficients.get(mode.k, 0j) + half
            coefficients[minus_k] = coefficients.get(minus_k, 0j) + half.conjugate()
        return coefficients

    def scaled(self, factor: float) -> "PeriodicField":
        """factor * g, without the non-negativity check."""
        modes = tuple(FourierMode(m.k, factor * m.amp, m.phase) for m in self.modes)
        return PeriodicField(self.dim, modes, factor * self.offset)

    def grid_values(self, n: int, shift: float = 0.0) -> np.ndarray:
        """
        Values on the uniform torus grid {(j + shift)/n}^d.

        Large grids are filled in slabs along the first axis.

        Args:
            n: Points per axis
            shift: Offset of the nodes in units of the spacing (0.5 gives midpoints)

        Returns:
            Array of shape (n,)*dim indexed 'ij'
        """
        axis = (np.arange(n) + shift) / n
        out = np.full((n,) * self.dim, self.offset, dtype=float)
        chunk = FieldConstants.VALIDATION_CHUNK if self.dim == 3 else n
        for start in range(0, n, chunk):
            stop = min(start + chunk, n)
            slab = out[start:stop]
            for mode in self.modes:
                phase = np.full(slab.shape, mode.phase, dtype=float)
                for i, k_i in enumerate(mode.k):
                    if k_i == 0:
                        continue
                    coord = axis[start:stop] if i == 0 else axis
                    shape = [1] * self.dim
                    shape[i] = coord.size
                    phase = phase + 2.0 * np.pi * k_i * coord.reshape(shape)
                slab += mode.amp * np.cos(phase)
        return out

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "offset": self.offset,
            "modes": [mode.to_dict() for mode in self.modes],
        }

    @cached_property
    def field_hash(self) -> str:
        return stable_hash(self.to_dict())

    def __repr__(self) -> str:
        terms = ", ".join(f"{m.amp:g}cos(2pi{list(m.k)}.x+{m.phase:g})" for m in self.modes)
        return f"PeriodicField(d={self.dim}, offset={self.offset:g}, modes=[{terms}])"


def _coerce_mode(mode, dim: int) -> FourierMode:
    if isinstance(mode, FourierMode):
        k, amp, phase = mode.k, mode.amp, mode.phase
    elif isinstance(mode, dict):
        k, amp, phase = mode.get("k"), mode.get("amp"), mode.get("phase", 0.0)
    else:
        k, amp, *rest = mode
        phase = rest[0] if rest else 0.0

    k_tuple = tuple(int(c) for c in np.atleast_1d(k))
    if len(k_tuple) != dim:
        raise FieldError(f"Wavevector {list(k_tuple)} does not have dimension {dim}")
    if all(c == 0 for c in k_tuple):
        raise FieldError("Mode with zero wavevector; fold it into the offset")
    amp = float(amp)
    phase = float(phase)
    if not (math.isfinite(amp) and math.isfinite(phase)):
        raise FieldError(f"Non-finite amplitude or phase for wavevector {list(k_tuple)}")
    return FourierMode(k_tuple, amp, phase)


def make_trig_field(dim: int, modes: Iterable = (), offset: float = 0.0) -> PeriodicField:
    """
    Build and validate a trigonometric branching-rate field.

    Args:
        dim: Space dimension (1, 2 or 3)
        modes: FourierMode, dict {k, amp, phase} or (k, amp[, phase]) items
        offset: Constant term, which is also the mean

    Returns:
        Validated PeriodicField

    Raises:
        NegativeFieldError: If the minimum over the 256^d grid is negative
        ZeroFieldError: If the field vanishes identically
        FieldError: On malformed input
    """
    if dim not in FieldConstants.SUPPORTED_DIMS:
        raise FieldError(f"Unsupported dimension {dim}")
    offset = float(offset)
    if not math.isfinite(offset):
        raise FieldError("Non-finite offset")

    field = PeriodicField(dim, tuple(_coerce_mode(m, dim) for m in modes), offset)

    values = field.grid_values(FieldConstants.VALIDATION_GRID)
    low = float(values.min())
    high = float(values.max())
    if low < 0.0:
        raise NegativeFieldError(f"Field minimum {low:.6g} < 0 on the validation grid")
    if high <= FieldConstants.ZERO_TOL:
        raise ZeroFieldError("Field vanishes identically")
    if low == 0.0:
        logger.warning("Field touches zero; solver checks are only exercised on positive fields")

    logger.debug(f"Built {field!r} with grid range [{low:.6g}, {high:.6g}]")
    return field


def field_from_dict(data: dict) -> PeriodicField:
    """Build a field from its config block {dim, offset, modes}."""
    try:
        dim = int(data["dim"])
    except (KeyError, TypeError, ValueError) as e:
        raise FieldError(f"Field block needs an integer 'dim': {e}") from e
    return make_trig_field(dim, data.get("modes", []), data.get("offset", 0.0))


def field_mean(field: PeriodicField) -> float:
    """Torus average of g, which is the offset."""
    return field.mean


def field_extrema(field: PeriodicField, grid_n: int = 256) -> tuple[float, float]:
    """
    Grid minimum and maximum of g.

    These approximate the true extrema to within the field's modulus of
    continuity at spacing 1/grid_n.

    Args:
        field: Environment
        grid_n: Points per axis, at least 64

    Returns:
        (min, max) over the grid
    """
    if grid_n < FieldConstants.MIN_EXTREMA_GRID:
        raise FieldError(f"grid_n must be >= {FieldConstants.MIN_EXTREMA_GRID}, got {grid_n}")
    values = field.grid_values(grid_n)
    return float(values.min()), float(values.max())


def field_quadrature_mean(field: PeriodicField, n: int = 256) -> float:
    """Midpoint-rule mean of g over the unit cell."""
    return float(field.grid_values(n, shift=0.5).mean())
