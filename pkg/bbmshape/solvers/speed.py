"""
Front speed c*(e) = min_lambda gamma(e, lambda)/lambda and the rate function I_e
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import partial
from typing import NamedTuple

import numpy as np
from scipy.optimize import minimize_scalar

from bbmshape.constants import FieldConstants, SpeedConstants
from bbmshape.exceptions import (
    BracketError,
    NotConvexError,
    SpeedBoundError,
    SpeedError,
    TangencyError,
)
from bbmshape.models.field import PeriodicField, field_extrema
from bbmshape.solvers.spectral import cumulant_limit, gamma_value
from bbmshape.utils import direction_grid, parabola_vertex, second_differences, unit_vector
from bbmshape.utils.parallel import run_blocks

logger = logging.getLogger(__name__)


class LegendreBound(Enum):
    """Sentinel for a Legendre supremum that runs off the sampled grid"""

    GRID_BOUNDARY = "grid_boundary"


GRID_BOUNDARY = LegendreBound.GRID_BOUNDARY

SPEED_CSV_TAIL = ("lambda_e", "gamma_e", "c_star")


class LambdaSolution(NamedTuple):
    lambda_e: float
    gamma_e: float
    c_star: float


@dataclass(frozen=True)
class SpeedEntry:
    direction: tuple[float, ...]
    lambda_e: float
    gamma_e: float
    c_star: float


@dataclass(frozen=True)
class SpeedProfile:
    """Front speeds over a direction grid for one field"""

    entries: tuple[SpeedEntry, ...]
    field_id: str
    dim: int

    @property
    def directions(self) -> np.ndarray:
        return np.array([entry.direction for entry in self.entries], dtype=float)

    @property
    def c_star(self) -> np.ndarray:
        return np.array([entry.c_star for entry in self.entries], dtype=float)

    def columns(self) -> list[str]:
        """CSV header: e_1..e_d, lambda_e, gamma_e, c_star."""
        return [f"e_{i + 1}" for i in range(self.dim)] + list(SPEED_CSV_TAIL)

    def to_rows(self) -> list[list[float]]:
        return [
            [*entry.direction, entry.lambda_e, entry.gamma_e, entry.c_star] for entry in self.entries
        ]

    def entry_for(self, e) -> SpeedEntry:
        """Entry whose direction is closest to e."""
        vec = np.atleast_1d(np.asarray(e, dtype=float))
        return self.entries[int(np.argmax(self.directions @ vec))]


@dataclass(frozen=True)
class RateFunction:
    """I_e tabulated on a zeta grid"""

    direction: tuple[float, ...]
    zeta_grid: np.ndarray
    values: np.ndarray
    maximizers: np.ndarray
    argmin: float
    c_star: float


def _h(field: PeriodicField, e: np.ndarray, N: int | None, lam: float) -> float:
    return gamma_value(field, e, lam, N) / lam


def _grow_bracket(f, a: float, c: float, lower: float, upper: float) -> tuple[float, float, float]:
    """
    Expand (a, b, c) until f(b) < f(a) and f(b) < f(c).

    Raises:
        BracketError: If the bracket leaves [lower, upper]
    """
    golden = 0.5 * (3.0 - math.sqrt(5.0))
    b = a + golden * (c - a)
    fa, fb, fc = f(a), f(b), f(c)
    while not (fb < fa and fb < fc):
        if fa <= fb:
            a, b, c = a * 0.5, a, b
            if a < lower:
                raise BracketError(f"No unimodal bracket above {lower}")
            fa, fb, fc = f(a), fa, fb
        else:
            a, b, c = b, c, c * 2.0
            if c > upper:
                raise BracketError(f"No unimodal bracket below {upper}")
            fa, fb, fc = fb, fc, f(c)
        logger.debug(f"Bracket grown to ({a:.6g}, {b:.6g}, {c:.6g})")
    return a, b, c


def find_lambda_e(field: PeriodicField, e, N: int | None = None) -> LambdaSolution:
    """
    Minimizer lambda_e of gamma(e, lambda)/lambda and the speed c*(e).

    Golden-section search on a bracket seeded by [sqrt(2 min g), sqrt(2 max g)]
    and extended outward until unimodal. The tangency
    gamma(e, lambda_e)/lambda_e = d gamma/d lambda at lambda_e is checked
    with a central difference.

    Args:
        field: Environment
        e: Unit direction
        N: Fourier truncation order

    Returns:
        LambdaSolution(lambda_e, gamma_e, c_star)

    Raises:
        BracketError: If no bracket exists within (1e-6, 50]
        TangencyError: If the tangency identity fails
    """
    direction = unit_vector(e, field.dim)
    g_min, g_max = field_extrema(field, FieldConstants.VALIDATION_GRID if field.dim < 3 else 64)
    lo = math.sqrt(2.0 * max(g_min, SpeedConstants.RATE_FLOOR))
    hi = math.sqrt(2.0 * max(g_max, SpeedConstants.RATE_FLOOR))
    a = max(0.5 * lo, SpeedConstants.LAMBDA_MIN)
    c = min(2.0 * hi, SpeedConstants.LAMBDA_MAX)

    objective = partial(_h, field, direction, N)
    a, b, c = _grow_bracket(objective, a, c, SpeedConstants.LAMBDA_MIN, SpeedConstants.LAMBDA_MAX)
    result = minimize_scalar(
        objective,
        bracket=(a, b, c),
        method="golden",
        options={"xtol": SpeedConstants.GOLDEN_XTOL},
    )
    lambda_e = float(result.x)
    gamma_e = gamma_value(field, direction, lambda_e, N)
    c_star = gamma_e / lambda_e

    step = SpeedConstants.TANGENCY_STEP
    slope = (
        gamma_value(field, direction, lambda_e + step, N)
        - gamma_value(field, direction, lambda_e - step, N)
    ) / (2.0 * step)
    if abs(c_star - slope) > SpeedConstants.TANGENCY_TOL:
        raise TangencyError(
            f"c*={c_star:.10g} differs from d gamma/d lambda={slope:.10g} at lambda_e={lambda_e:.10g}"
        )
    logger.debug(f"e={direction.tolist()}: lambda_e={lambda_e:.8g}, c*={c_star:.8g}")
    return LambdaSolution(lambda_e, gamma_e, c_star)


def _speed_entry(task: tuple[PeriodicField, tuple[float, ...], int | None]) -> SpeedEntry:
    field, direction, N = task
    solution = find_lambda_e(field, direction, N)
    return SpeedEntry(direction, solution.lambda_e, solution.gamma_e, solution.c_star)


def speed_profile(
    field: PeriodicField,
    n_directions: int,
    N: int | None = None,
    threads: int = 1,
    progress: bool = False,
) -> SpeedProfile:
    """
    c*(e) over a uniform direction grid.

    d=1 always uses {+1, -1}. Every entry is checked against the lower bound
    c* >= sqrt(2 mean(g)) and the upper bound c*(e) <= gamma(e, 1).

    Raises:
        SpeedBoundError: If a bound is violated
    """
    directions = direction_grid(field.dim, n_directions)
    tasks = [(field, tuple(float(v) for v in row), N) for row in directions]
    entries = run_blocks(_speed_entry, tasks, threads=threads, desc="speed", progress=progress)

    lower = math.sqrt(2.0 * field.mean) - SpeedConstants.BOUND_TOL
    upper = max(gamma_value(field, entry.direction, 1.0, N) for entry in entries)
    for entry in entries:
        if entry.c_star < lower:
            raise SpeedBoundError(
                f"c*({list(entry.direction)})={entry.c_star:.8g} below sqrt(2 gbar)={lower:.8g}"
            )
        if entry.c_star > upper + SpeedConstants.BOUND_TOL:
            raise SpeedBoundError(
                f"c*({list(entry.direction)})={entry.c_star:.8g} above max gamma(e,1)={upper:.8g}"
            )

    profile = SpeedProfile(tuple(entries), field.field_hash, field.dim)
    speeds = profile.c_star
    logger.info(
        f"Speed profile over {len(entries)} directions: c* in [{speeds.min():.6f}, {speeds.max():.6f}]"
    )
    return profile


def default_zeta_grid(c_star: float) -> np.ndarray:
    """
    Zeta grid on [0.2 c*, 2.5 c*]: spacing c*/200 within +-30% of c*, c*/50 elsewhere.

    c* itself is always a node.
    """
    low, high = SpeedConstants.ZETA_RANGE
    band = SpeedConstants.ZETA_FINE_BAND
    fine = c_star / SpeedConstants.ZETA_FINE_DIVISOR
    coarse = c_star / SpeedConstants.ZETA_COARSE_DIVISOR
    left = np.arange(low * c_star, (1.0 - band) * c_star, coarse)
    n_fine = int(round(2.0 * band * c_star / fine))
    middle = (1.0 - band) * c_star + fine * np.arange(n_fine + 1)
    right = np.arange((1.0 + band) * c_star + coarse, high * c_star + 0.5 * coarse, coarse)
    grid = np.concatenate([left, middle, right, [c_star]])
    grid = np.unique(np.round(grid / c_star, 12)) * c_star
    return grid


def _legendre_objective(field, direction, lambda_e, N, zeta, eta):
    return eta * zeta - cumulant_limit(field, direction, eta, lambda_e, N)


def _sup_over_eta(objective) -> tuple[float, float]:
    """Maximize a concave function of eta; returns (value, maximizer)."""
    step = SpeedConstants.ETA_STEP
    a, b, c = -step, 0.0, step
    fa, fb, fc = objective(a), objective(b), objective(c)
    while not (fb >= fa and fb >= fc):
        if fc > fb:
            a, b, c = b, c, c + 2.0 * (c - b)
            fa, fb, fc = fb, fc, objective(c)
        else:
            a, b, c = a - 2.0 * (b - a), a, b
            fa, fb, fc = objective(a), fa, fb
        if max(abs(a), abs(c)) > SpeedConstants.ETA_MAX:
            raise BracketError(f"Legendre maximizer beyond |eta| <= {SpeedConstants.ETA_MAX}")
    if fb == fa or fb == fc:
        # flat top at a node, e.g. zeta = c* where the maximizer is eta = 0
        return fb, b
    result = minimize_scalar(
        lambda eta: -objective(eta),
        bracket=(a, b, c),
        method="golden",
        options={"xtol": SpeedConstants.GOLDEN_XTOL},
    )
    value = -float(result.fun)
    if value < fb:
        return fb, b
    return value, float(result.x)


def rate_at(
    field: PeriodicField,
    e,
    zeta: float,
    solution: LambdaSolution | None = None,
    N: int | None = None,
) -> float:
    """I_e(zeta) = sup_eta [eta zeta - Lambda(eta)]."""
    direction = unit_vector(e, field.dim)
    if solution is None:
        solution = find_lambda_e(field, direction, N)
    objective = partial(_legendre_objective, field, direction, solution.lambda_e, N, float(zeta))
    value, _ = _sup_over_eta(objective)
    return max(value, 0.0)


def _rate_task(task) -> tuple[float, float]:
    field, direction, lambda_e, N, zeta = task
    objective = partial(_legendre_objective, field, np.asarray(direction), lambda_e, N, zeta)
    return _sup_over_eta(objective)


def rate_function(
    field: PeriodicField,
    e,
    zeta_grid=None,
    solution: LambdaSolution | None = None,
    N: int | None = None,
    threads: int = 1,
) -> RateFunction:
    """
    Rate function I_e on a zeta grid by golden-section Legendre maximization.

    Raises:
        NotConvexError: If the tabulated I_e is not convex
        BracketError: If a maximizer lies beyond |eta| = 50
    """
    direction = unit_vector(e, field.dim)
    if solution is None:
        solution = find_lambda_e(field, direction, N)
    grid = default_zeta_grid(solution.c_star) if zeta_grid is None else np.asarray(zeta_grid, float)
    if np.any(np.diff(grid) <= 0):
        raise SpeedError("zeta_grid must be strictly increasing")

    tasks = [(field, tuple(direction.tolist()), solution.lambda_e, N, float(z)) for z in grid]
    results = run_blocks(_rate_task, tasks, threads=threads)
    values = np.array([max(v, 0.0) for v, _ in results])
    maximizers = np.array([eta for _, eta in results])

    if grid.size >= 3:
        curvature = second_differences(grid, values)
        if np.min(curvature) < -SpeedConstants.RATE_CONVEXITY_TOL:
            raise NotConvexError(f"I_e not convex on grid (min second difference {curvature.min():.3g})")

    argmin = float(grid[int(np.argmin(values))])
    logger.info(
        f"Rate function on {grid.size} points: min {values.min():.3g} at zeta={argmin:.6f} "
        f"(c*={solution.c_star:.6f})"
    )
    return RateFunction(tuple(direction.tolist()), grid, values, maximizers, argmin, solution.c_star)


def legendre(eta_grid, values, zeta: float) -> float | LegendreBound:
    """
    Discrete Legendre transform sup_eta [eta zeta - Lambda(eta)] of convex samples.

    The winning node is refined with the parabola through its neighbours.

    Args:
        eta_grid: Increasing eta nodes
        values: Lambda at the nodes
        zeta: Dual variable

    Returns:
        The supremum, or GRID_BOUNDARY when the maximizer sits on a grid end

    Raises:
        NotConvexError: If a second difference is <= -1e-10
    """
    eta = np.asarray(eta_grid, dtype=float)
    lam = np.asarray(values, dtype=float)
    if eta.size < 3 or np.any(np.diff(eta) <= 0):
        raise SpeedError("eta_grid needs at least 3 increasing nodes")
    curvature = second_differences(eta, lam)
    if np.any(curvature <= -SpeedConstants.LEGENDRE_CONVEXITY_TOL):
        raise NotConvexError(f"Samples not convex (min second difference {curvature.min():.3g})")

    objective = eta * zeta - lam
    best = int(np.argmax(objective))
    if best == 0 or best == eta.size - 1:
        return GRID_BOUNDARY
    vertex = parabola_vertex(eta[best - 1 : best + 2], objective[best - 1 : best + 2])
    if vertex is None or vertex[1] < objective[best]:
        return float(objective[best])
    return float(vertex[1])


def propI_small_kappa_check(
    field: PeriodicField,
    e,
    beta: float,
    solution: LambdaSolution | None = None,
    N: int | None = None,
) -> float | None:
    """
    Largest kappa in {2^-k} with I_e((1 -+ kappa) c*) < kappa beta on both sides.

    Returns:
        kappa, or None if no grid value qualifies
    """
    if beta <= 0:
        raise SpeedError(f"beta must be positive, got {beta}")
    direction = unit_vector(e, field.dim)
    if solution is None:
        solution = find_lambda_e(field, direction, N)
    for k in range(1, SpeedConstants.KAPPA_MAX_POWER + 1):
        kappa = 2.0**-k
        below = rate_at(field, direction, (1.0 - kappa) * solution.c_star, solution, N)
        above = rate_at(field, direction, (1.0 + kappa) * solution.c_star, solution, N)
        if below < kappa * beta and above < kappa * beta:
            logger.debug(f"kappa threshold {kappa:g} for beta={beta:.6g}")
            return kappa
    logger.warning(f"No kappa <= 1/2 satisfies the small-deviation bound for beta={beta:.6g}")
    return None


def growth_exponent(
    field: PeriodicField,
    e,
    epsilon: float,
    alpha: float,
    solution: LambdaSolution | None = None,
    N: int | None = None,
) -> float:
    """alpha eps gamma(e, lambda_e) - 2 I_e((1 - alpha eps) c*(e))."""
    direction = unit_vector(e, field.dim)
    if solution is None:
        solution = find_lambda_e(field, direction, N)
    rate = rate_at(field, direction, (1.0 - alpha * epsilon) * solution.c_star, solution, N)
    return alpha * epsilon * solution.gamma_e - 2.0 * rate


def offspring_exponent(
    field: PeriodicField,
    e,
    epsilon: float,
    solution: LambdaSolution | None = None,
    N: int | None = None,
) -> float:
    """
    eps gamma(e, lambda_e) - I_e((1 - eps) c*): exponential rate of the expected
    number of particles advancing (1 - eps) c* T0 in direction e over a window T0.
    """
    direction = unit_vector(e, field.dim)
    if solution is None:
        solution = find_lambda_e(field, direction, N)
    rate = rate_at(field, direction, (1.0 - epsilon) * solution.c_star, solution, N)
    return epsilon * solution.gamma_e - rate


def tune_window(
    field: PeriodicField,
    e,
    epsilon: float,
    target: float = 2.0,
    T0_grid=None,
    solution: LambdaSolution | None = None,
    N: int | None = None,
) -> float:
    """
    Smallest window T0 on a grid with T0 * offspring_exponent >= log(target).

    Args:
        field: Environment
        e: Unit direction
        epsilon: Speed deficit of the embedded generations
        target: Required predicted mean offspring (> 1)
        T0_grid: Candidate windows (default 0.5, 1.0, ..., 20)

    Raises:
        SpeedError: The predicted exponent is not positive, or no grid window suffices
    """
    if target <= 1.0:
        raise SpeedError(f"target mean offspring must exceed 1, got {target}")
    rate = offspring_exponent(field, e, epsilon, solution, N)
    if rate <= 0.0:
        raise SpeedError(f"Offspring exponent {rate:.4g} is not positive at eps={epsilon}")
    grid = np.arange(0.5, 20.0 + 1e-9, 0.5) if T0_grid is None else np.sort(np.asarray(T0_grid, float))
    for T0 in grid:
        if T0 * rate >= math.log(target):
            logger.info(f"Tuned T0={T0:g} (offspring exponent {rate:.4g}, eps={epsilon})")
            return float(T0)
    raise SpeedError(f"No window up to T0={grid[-1]:g} reaches mean offspring {target}")
