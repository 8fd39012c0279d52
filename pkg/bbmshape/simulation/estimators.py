"""
Empirical estimators on g-BBM and single-path simulations

Every estimator returns a small frozen result with CSV columns/rows and a
passed flag for the property it checks. Thinning tolerance is decided per
estimator: exact expectations run strict (CapThinnedError), monotone
events accept thinning and report the share of thinned replicas.
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass
from functools import partial
from typing import Literal

import numpy as np
from scipy import stats

from bbmshape.constants import SimulationConstants
from bbmshape.exceptions import SimulationError
from bbmshape.models.field import PeriodicField, field_mean
from bbmshape.simulation.bbm import (
    TRACK_RUN_MAX,
    EnsembleSnapshot,
    generation_counts,
    projection_reducer,
    simulate_ensemble,
)
from bbmshape.simulation.brownian import (
    FunctionalKind,
    PathFunctional,
    WeightedMean,
    feynman_kac_mean,
    first_branch_times,
    sample_mean,
    time_averages,
)
from bbmshape.solvers.spectral import branching_decay_rate, malthusian_rate
from bbmshape.solvers.speed import LambdaSolution, SpeedProfile, find_lambda_e, offspring_exponent, tune_window
from bbmshape.solvers.wulff import (
    CaratheodoryDecomposition,
    ConvexHullBody,
    WulffShape,
    build_wulff,
    caratheodory,
    hausdorff,
)
from bbmshape.utils import loglog_slope, unit_vector

logger = logging.getLogger(__name__)

ThinningPolicy = Literal["reject", "conservative"]

# independent random streams per estimator role
STREAM_BBM = 1
STREAM_PATHS = 2
STREAM_TAIL = 3
STREAM_ERGODIC = 4
STREAM_GENERATION = 5
STREAM_WINDOW = 6


def extremal_projections(snapshot: EnsembleSnapshot, e) -> tuple[np.ndarray, np.ndarray]:
    """Per-replica M_t = max (X_t(v) - x0).e and M_t^- = min (X_t(v) - x0).e."""
    disp = snapshot.displacement(unit_vector(e, snapshot.origins.shape[1]))
    return snapshot.per_replica_max(disp), snapshot.per_replica_min(disp)


def period_cell_positions(dim: int, n: int = SimulationConstants.KERNEL_POSITIONS) -> np.ndarray:
    """n starting points j/n * (1, ..., 1) spread along the cell diagonal."""
    return np.outer(np.arange(n) / n, np.ones(dim))


def _origin(field: PeriodicField, x0) -> np.ndarray:
    return np.zeros(field.dim) if x0 is None else np.atleast_1d(np.asarray(x0, dtype=float))


def _proportion(hits: np.ndarray) -> tuple[float, float]:
    p = float(np.mean(hits))
    return p, math.sqrt(max(p * (1.0 - p), 0.0) / hits.size)


@dataclass(frozen=True)
class ZCheck:
    """Two Monte Carlo estimates of the same expectation"""

    name: str
    lhs: WeightedMean
    rhs: WeightedMean

    @property
    def z(self) -> float:
        return self.lhs.z_against(self.rhs)

    def passed(self, z_max: float = 3.0) -> bool:
        return abs(self.z) <= z_max

    def columns(self) -> list[str]:
        return ["check", "lhs", "lhs_se", "rhs", "rhs_se", "z"]

    def to_rows(self) -> list[list]:
        return [[self.name, self.lhs.mean, self.lhs.se, self.rhs.mean, self.rhs.se, self.z]]


@dataclass(frozen=True)
class BranchingTail:
    t_grid: np.ndarray
    survival: np.ndarray
    fitted_rate: float
    decay_rate: float  # spectral Theta
    prefactor: float  # smallest theta with theta^-1 e^{-t Theta} <= P <= theta e^{-t Theta}

    @property
    def relative_error(self) -> float:
        return abs(self.fitted_rate - self.decay_rate) / self.decay_rate

    def columns(self) -> list[str]:
        return ["t", "survival", "lower_bound", "upper_bound"]

    def to_rows(self) -> list[list[float]]:
        base = np.exp(-self.t_grid * self.decay_rate)
        return [
            [t, p, lo, hi]
            for t, p, lo, hi in zip(
                self.t_grid, self.survival, base / self.prefactor, base * self.prefactor, strict=True
            )
        ]


def branching_time_tail(
    field: PeriodicField,
    x0,
    t_grid,
    reps: int,
    seed: int,
    dt: float = SimulationConstants.MAX_DT,
    N: int | None = None,
    threads: int = 1,
) -> BranchingTail:
    """
    Empirical P[tau > t] of the first branching time and its exponential rate.

    The rate is the negative least-squares slope of log P over the t grid
    (points with no survivors are dropped) and is compared with
    Theta = -Gamma from the spectral solver.
    """
    if reps < SimulationConstants.MIN_TAIL_REPS:
        raise SimulationError(f"Tail estimates need reps >= {SimulationConstants.MIN_TAIL_REPS}, got {reps}")
    grid = np.sort(np.asarray(t_grid, dtype=float))
    tau = first_branch_times(field, _origin(field, x0), float(grid.max()), reps, seed, dt, STREAM_TAIL, threads)
    survival = np.mean(tau[None, :] > grid[:, None], axis=1)
    usable = survival > 0.0
    if usable.sum() < 2:
        raise SimulationError("Fewer than two grid times with surviving particles; shorten the grid")
    slope, _ = np.polyfit(grid[usable], np.log(survival[usable]), 1)
    theta_rate = branching_decay_rate(field, N)
    ratio = survival[usable] * np.exp(grid[usable] * theta_rate)
    prefactor = float(max(ratio.max(), (1.0 / ratio).max()))
    result = BranchingTail(grid, survival, float(-slope), theta_rate, prefactor)
    logger.info(
        f"Branching tail: fitted rate {result.fitted_rate:.4f} vs Theta {theta_rate:.4f} "
        f"({100 * result.relative_error:.1f}%), prefactor {prefactor:.3f}"
    )
    return result


@dataclass(frozen=True)
class ErgodicTable:
    t_list: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    slope: float  # nan when the integrand is constant
    field_mean: float
    reps: int

    @property
    def z_final(self) -> float:
        se = math.sqrt(self.variances[-1] / self.reps)
        if se == 0.0:
            return 0.0
        return float((self.means[-1] - self.field_mean) / se)

    @property
    def passed(self) -> bool:
        slope_ok = math.isnan(self.slope) or self.slope <= SimulationConstants.ERGODIC_MAX_SLOPE
        return slope_ok and abs(self.z_final) <= 3.0

    def columns(self) -> list[str]:
        return ["t", "mean", "variance"]

    def to_rows(self) -> list[list[float]]:
        return [list(row) for row in zip(self.t_list, self.means, self.variances, strict=True)]


def ergodic_check(
    field: PeriodicField,
    t_list,
    reps: int,
    seed: int,
    dt: float = SimulationConstants.MAX_DT,
    threads: int = 1,
) -> ErgodicTable:
    """Variance of (1/t) int g(B_s) ds across t; its log-log slope should be near -1."""
    times = np.asarray(t_list, dtype=float)
    if times.size < 2 or np.any(np.diff(times) <= 0):
        raise SimulationError("t_list must hold at least two increasing times")
    if reps < SimulationConstants.MIN_TAIL_REPS:
        raise SimulationError(f"Ergodic check needs reps >= {SimulationConstants.MIN_TAIL_REPS}, got {reps}")
    averages = time_averages(field, times, reps, seed, dt, stream=STREAM_ERGODIC, threads=threads)
    means = averages.mean(axis=1)
    variances = averages.var(axis=1, ddof=1)
    slope = float("nan") if variances.max() <= 1e-20 else loglog_slope(times, variances)
    table = ErgodicTable(times, means, variances, slope, field_mean(field), reps)
    logger.info(f"Ergodic averages: variance slope {slope:.3f}, final z {table.z_final:.2f}")
    return table


def _functional_sum(functional: PathFunctional, snapshot: EnsembleSnapshot) -> np.ndarray:
    e = functional.e
    disp = snapshot.displacement(e)
    max_disp = None
    if functional.needs_path_max:
        max_disp = snapshot.extras[TRACK_RUN_MAX] - (snapshot.origins @ e)[snapshot.owner]
    return snapshot.per_replica_sum(functional(disp, max_disp))


def many_to_one_check(
    field: PeriodicField,
    functional_id: str,
    t: float,
    reps: int,
    seed: int,
    e=None,
    level: float = 0.0,
    x0=None,
    dt: float = SimulationConstants.MAX_DT,
    cap: int = SimulationConstants.DEFAULT_CAP,
    threads: int = 1,
) -> ZCheck:
    """
    E_x[sum over v in N_t of F(path of v)] from the particle system against
    E_x[exp(int g(B_s) ds) F(B)] from single paths.

    Raises:
        CapThinnedError: If any replica hit the population cap
    """
    if t > SimulationConstants.MANY_TO_ONE_MAX_T:
        raise SimulationError(f"Many-to-one check needs t <= {SimulationConstants.MANY_TO_ONE_MAX_T}")
    functional = PathFunctional.parse(functional_id, field.dim, e, level)
    origin = _origin(field, x0)
    track = (TRACK_RUN_MAX,) if functional.needs_path_max else ()
    (sums,) = simulate_ensemble(
        field, origin, t, dt, cap, seed, reps=reps, stream=STREAM_BBM, track=track,
        direction=functional.e, reducer=partial(_functional_sum, functional), strict=True, threads=threads,
    )
    lhs = sample_mean(sums)
    rhs = feynman_kac_mean(field, origin, t, functional, reps, seed, dt, STREAM_PATHS, threads=threads)
    check = ZCheck(f"many_to_one:{functional.kind.value}", lhs, rhs)
    logger.info(f"Many-to-one {functional.kind.value}: {lhs.mean:.4f} vs {rhs.mean:.4f} (z={check.z:.2f})")
    return check


@dataclass(frozen=True)
class HalfspaceTable:
    """Probability of a half-space event per time"""

    event: str  # "upper" or "lower"
    t_list: np.ndarray
    probabilities: np.ndarray
    standard_errors: np.ndarray
    thinned_share: np.ndarray
    epsilon: float
    c_star: float
    reference_exponent: float
    policy: str

    @property
    def slope(self) -> float:
        """Least-squares slope of log P over the times with P > 0."""
        positive = self.probabilities > 0.0
        if positive.sum() < 2:
            return float("nan")
        slope, _ = np.polyfit(self.t_list[positive], np.log(self.probabilities[positive]), 1)
        return float(slope)

    @property
    def nonincreasing(self) -> bool:
        late = self.probabilities[self.t_list >= 4.0]
        return bool(np.all(np.diff(late) <= 0.0))

    @property
    def strictly_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.probabilities) < 0.0))

    @property
    def is_upper_bound(self) -> bool:
        return self.event == "lower" and bool(np.any(self.thinned_share > 0.0))

    def columns(self) -> list[str]:
        return ["t", "probability", "se", "threshold", "thinned_share"]

    def to_rows(self) -> list[list[float]]:
        scale = 1.0 + self.epsilon if self.event == "upper" else 1.0 - self.epsilon
        return [
            [t, p, se, scale * self.c_star * t, share]
            for t, p, se, share in zip(
                self.t_list, self.probabilities, self.standard_errors, self.thinned_share, strict=True
            )
        ]


def _halfspace_table(
    event: str,
    field: PeriodicField,
    e,
    epsilon: float,
    t_list,
    reps: int,
    seed: int,
    dt: float,
    cap: int,
    x0,
    solution: LambdaSolution | None,
    policy: ThinningPolicy,
    threads: int,
) -> HalfspaceTable:
    if not 0.0 < epsilon < 1.0:
        raise SimulationError(f"epsilon must lie in (0, 1), got {epsilon}")
    if reps < SimulationConstants.MIN_HALFSPACE_REPS:
        raise SimulationError(f"Half-space estimates need reps >= {SimulationConstants.MIN_HALFSPACE_REPS}")
    direction = unit_vector(e, field.dim)
    if solution is None:
        solution = find_lambda_e(field, direction)
    times = np.sort(np.asarray(t_list, dtype=float))
    tables = simulate_ensemble(
        field, _origin(field, x0), float(times.max()), dt, cap, seed, times, reps=reps,
        stream=STREAM_BBM, reducer=projection_reducer(direction), strict=policy == "reject",
        threads=threads,
    )
    probabilities, errors, shares = [], [], []
    for t, table in zip(times, tables, strict=True):
        if event == "upper":
            hits = table[:, 0] >= (1.0 + epsilon) * solution.c_star * t
        else:
            hits = table[:, 0] <= (1.0 - epsilon) * solution.c_star * t
        p, se = _proportion(hits)
        probabilities.append(p)
        errors.append(se)
        shares.append(float(np.mean(table[:, 3])))
    result = HalfspaceTable(
        event, times, np.array(probabilities), np.array(errors), np.array(shares), epsilon,
        solution.c_star, -epsilon * solution.gamma_e, policy,
    )
    if np.any(result.thinned_share > 0.0):
        logger.warning(
            f"{event} half-space estimate used thinned replicas (max share "
            f"{result.thinned_share.max():.2f}); treat it as one-sided"
        )
    logger.info(f"{event} half-space probabilities {np.round(result.probabilities, 4).tolist()}")
    return result


def halfspace_upper_stat(
    field: PeriodicField,
    e,
    epsilon: float,
    t_list,
    reps: int,
    seed: int,
    dt: float = SimulationConstants.MAX_DT,
    cap: int = SimulationConstants.DEFAULT_CAP,
    x0=None,
    solution: LambdaSolution | None = None,
    threads: int = 1,
) -> HalfspaceTable:
    """P[some particle has (X_t(v) - x0).e >= (1 + eps) c*(e) t] per t; thinning tolerated."""
    return _halfspace_table(
        "upper", field, e, epsilon, t_list, reps, seed, dt, cap, x0, solution, "conservative", threads
    )


def halfspace_lower_stat(
    field: PeriodicField,
    e,
    epsilon: float,
    t_list,
    reps: int,
    seed: int,
    dt: float = SimulationConstants.MAX_DT,
    cap: int = SimulationConstants.DEFAULT_CAP,
    x0=None,
    solution: LambdaSolution | None = None,
    policy: ThinningPolicy = "reject",
    threads: int = 1,
) -> HalfspaceTable:
    """
    P[every particle has (X_t(v) - x0).e <= (1 - eps) c*(e) t] per t.

    Thinning can only raise this probability, so policy="conservative"
    yields an upper bound; "reject" raises CapThinnedError instead.
    """
    return _halfspace_table("lower", field, e, epsilon, t_list, reps, seed, dt, cap, x0, solution, policy, threads)


@dataclass(frozen=True)
class GenerationSummary:
    mean_offspring: float
    offspring_se: float
    survival: float
    T0: float
    n_max: int
    epsilon: float
    member_capped_share: float
    predicted_exponent: float

    def columns(self) -> list[str]:
        return ["T0", "epsilon", "n_max", "mean_offspring", "se", "survival", "member_capped_share", "predicted_exponent"]

    def to_rows(self) -> list[list[float]]:
        return [
            [
                self.T0, self.epsilon, self.n_max, self.mean_offspring, self.offspring_se, self.survival,
                self.member_capped_share, self.predicted_exponent,
            ]
        ]


def generation_process(
    field: PeriodicField,
    e,
    epsilon: float,
    T0: float,
    n_max: int,
    reps: int,
    seed: int,
    dt: float = SimulationConstants.MAX_DT,
    cap: int = SimulationConstants.DEFAULT_CAP,
    x0=None,
    solution: LambdaSolution | None = None,
    threads: int = 1,
) -> GenerationSummary:
    """
    Mean first-generation size and survival fraction of the embedded process.

    Survival to n_max is a lower bound: past the first generation only a
    bounded random subset of members is followed per replica.
    """
    direction = unit_vector(e, field.dim)
    if solution is None:
        solution = find_lambda_e(field, direction)
    predicted = offspring_exponent(field, direction, epsilon, solution)
    if predicted <= 0.0:
        raise SimulationError(f"Predicted offspring exponent {predicted:.4g} is not positive at eps={epsilon}")
    origins = np.repeat(_origin(field, x0).reshape(1, -1), reps, axis=0)
    counts = generation_counts(
        field, direction, epsilon, T0, solution.c_star, n_max, origins, dt, cap, seed,
        stream=STREAM_GENERATION, threads=threads,
    )
    summary = GenerationSummary(
        counts.mean_offspring, counts.offspring_se, counts.survival_fraction, T0, n_max, epsilon,
        float(np.mean(counts.member_capped)), predicted,
    )
    logger.info(
        f"Generation process T0={T0:g}: mean offspring {summary.mean_offspring:.3f} "
        f"+- {summary.offspring_se:.3f}, survival to n={n_max}: {summary.survival:.3f}"
    )
    return summary


@dataclass(frozen=True)
class KernelCondition:
    positions: np.ndarray
    means: np.ndarray
    standard_errors: np.ndarray
    T0: float

    @property
    def passed(self) -> bool:
        return bool(np.all(self.means > 1.0))

    def columns(self) -> list[str]:
        return [f"x_{i + 1}" for i in range(self.positions.shape[1])] + ["mean_offspring", "se"]

    def to_rows(self) -> list[list[float]]:
        return [[*x, m, se] for x, m, se in zip(self.positions, self.means, self.standard_errors, strict=True)]


def kernel_condition_check(
    field: PeriodicField,
    e,
    epsilon: float,
    T0: float,
    reps: int,
    seed: int,
    n_positions: int = SimulationConstants.KERNEL_POSITIONS,
    dt: float = SimulationConstants.MAX_DT,
    cap: int = SimulationConstants.DEFAULT_CAP,
    solution: LambdaSolution | None = None,
    threads: int = 1,
) -> KernelCondition:
    """Mean number of first-generation members from n starting points of the cell."""
    direction = unit_vector(e, field.dim)
    if solution is None:
        solution = find_lambda_e(field, direction)
    positions = period_cell_positions(field.dim, n_positions)
    means, errors = [], []
    for i, x in enumerate(positions):
        counts = generation_counts(
            field, direction, epsilon, T0, solution.c_star, 1, np.repeat(x[None, :], reps, axis=0), dt,
            cap, seed, stream=STREAM_GENERATION + 100 * (i + 1), threads=threads,
        )
        means.append(counts.mean_offspring)
        errors.append(counts.offspring_se)
    result = KernelCondition(positions, np.array(means), np.array(errors), T0)
    logger.info(f"Mean offspring at {n_positions} positions: {np.round(result.means, 3).tolist()}")
    return result


def verified_window(
    field: PeriodicField,
    e,
    epsilon: float,
    target: float = 2.0,
    reps: int = 20_000,
    seed: int = 0,
    dt: float = SimulationConstants.MAX_DT,
    n_positions: int = SimulationConstants.KERNEL_POSITIONS,
    solution: LambdaSolution | None = None,
    threads: int = 1,
) -> float:
    """
    Window T0 whose expected first generation reaches target from every start.

    Starts at the spectral tune_window value and checks
    E_x[#members] = E_x[exp(int g) 1{(B_T0 - x).e >= (1 - eps) c* T0}]
    at n_positions cell points by drifted Feynman-Kac sampling, lengthening
    T0 until all estimates reach target.
    """
    direction = unit_vector(e, field.dim)
    if solution is None:
        solution = find_lambda_e(field, direction)
    T0 = tune_window(field, direction, epsilon, target, solution=solution)
    speed = (1.0 - epsilon) * solution.c_star
    positions = period_cell_positions(field.dim, n_positions)
    while T0 <= SimulationConstants.WINDOW_MAX:
        functional = PathFunctional(FunctionalKind.ENDPOINT, tuple(direction.tolist()), speed * T0)
        estimates = [
            feynman_kac_mean(
                field, x, T0, functional, reps, seed, dt, STREAM_WINDOW + i, drift=speed * direction,
                threads=threads,
            ).mean
            for i, x in enumerate(positions)
        ]
        if min(estimates) >= target:
            logger.info(f"Window T0={T0:g} verified: min expected offspring {min(estimates):.3f}")
            return float(T0)
        logger.debug(f"T0={T0:g} gives min expected offspring {min(estimates):.3f} < {target}")
        T0 += SimulationConstants.WINDOW_STEP
    raise SimulationError(f"No window up to T0={SimulationConstants.WINDOW_MAX:g} reaches {target}")


def _replica_clouds(snapshot: EnsembleSnapshot) -> list[np.ndarray]:
    order = np.argsort(snapshot.owner, kind="stable")
    relative = snapshot.positions[order] - snapshot.origins[snapshot.owner[order]]
    return np.split(relative, np.cumsum(snapshot.counts)[:-1])


def _shape_reducer(shape: WulffShape, epsilon: float, snapshot: EnsembleSnapshot) -> np.ndarray:
    rows = np.empty((snapshot.reps, 4))
    inner_points = (1.0 - epsilon) * shape.vertices
    for r, cloud in enumerate(_replica_clouds(snapshot)):
        hull = ConvexHullBody.from_points(cloud / snapshot.time)
        rows[r, 0] = hausdorff(hull, shape)
        rows[r, 1] = bool(np.all(shape.contains(hull.vertices, scale=1.0 + epsilon)))
        rows[r, 2] = bool(np.all(hull.contains(inner_points)))
        rows[r, 3] = snapshot.thinned[r]
    return rows


@dataclass(frozen=True)
class ShapeErrorTable:
    t_list: np.ndarray
    errors: np.ndarray  # (T, reps) Hausdorff distances
    outer_rate: np.ndarray  # share with hull/t inside (1 + eps) W
    inner_rate: np.ndarray  # share with (1 - eps) W inside hull/t
    thinned_share: np.ndarray
    epsilon: float

    @property
    def medians(self) -> np.ndarray:
        return np.median(self.errors, axis=1)

    @property
    def decreasing(self) -> bool:
        return bool(np.all(np.diff(self.medians) < 0.0))

    def columns(self) -> list[str]:
        return ["t", "median_error", "mean_error", "outer_rate", "inner_rate", "thinned_share"]

    def to_rows(self) -> list[list[float]]:
        return [
            [t, med, float(err.mean()), o, i, s]
            for t, med, err, o, i, s in zip(
                self.t_list, self.medians, self.errors, self.outer_rate, self.inner_rate,
                self.thinned_share, strict=True,
            )
        ]


def _as_shape(shape_or_profile: WulffShape | SpeedProfile) -> WulffShape:
    if isinstance(shape_or_profile, SpeedProfile):
        return build_wulff(shape_or_profile)
    return shape_or_profile


def shape_error(
    field: PeriodicField,
    profile: WulffShape | SpeedProfile,
    t_list,
    reps: int,
    cap: int,
    seed: int,
    epsilon: float = 0.25,
    dt: float = SimulationConstants.MAX_DT,
    x0=None,
    threads: int = 1,
) -> ShapeErrorTable:
    """
    Hausdorff distance between the normalized hull (H_t - x0)/t and W per
    replica, with the rates of the two one-sided inclusions at scale 1 +- eps.

    Thinned clouds shrink the hull: the outer inclusion rate is then
    conservative and the inner one optimistic.
    """
    if field.dim not in (1, 2):
        raise SimulationError("Shape errors are computed for d in {1, 2}")
    if cap < SimulationConstants.SHAPE_MIN_CAP:
        raise SimulationError(f"Shape runs need cap >= {SimulationConstants.SHAPE_MIN_CAP}, got {cap}")
    shape = _as_shape(profile)
    times = np.sort(np.asarray(t_list, dtype=float))
    if times.min() <= 0.0:
        raise SimulationError("Shape times must be positive")
    tables = simulate_ensemble(
        field, _origin(field, x0), float(times.max()), dt, cap, seed, times, reps=reps,
        stream=STREAM_BBM, reducer=partial(_shape_reducer, shape, epsilon), threads=threads,
    )
    result = ShapeErrorTable(
        times,
        np.array([table[:, 0] for table in tables]),
        np.array([table[:, 1].mean() for table in tables]),
        np.array([table[:, 2].mean() for table in tables]),
        np.array([table[:, 3].mean() for table in tables]),
        epsilon,
    )
    logger.info(f"Median shape error per t: {np.round(result.medians, 4).tolist()}")
    return result


def _ball_hits(target: np.ndarray, radius: float, snapshot: EnsembleSnapshot) -> np.ndarray:
    disp = snapshot.positions - snapshot.origins[snapshot.owner]
    near = np.linalg.norm(disp - snapshot.time * target, axis=1) <= radius * snapshot.time
    return np.column_stack([snapshot.per_replica_max(near.astype(float), empty=0.0), snapshot.thinned])


@dataclass(frozen=True)
class HitResult:
    xi: np.ndarray
    epsilon: float
    t: float
    fraction: float
    se: float
    inside: bool
    decomposition: CaratheodoryDecomposition | None

    def columns(self) -> list[str]:
        return [f"xi_{i + 1}" for i in range(self.xi.size)] + ["epsilon", "t", "fraction", "se", "inside"]

    def to_rows(self) -> list[list]:
        return [[*self.xi, self.epsilon, self.t, self.fraction, self.se, int(self.inside)]]


def caratheodory_hit(
    field: PeriodicField,
    profile: WulffShape | SpeedProfile,
    xi,
    epsilon: float,
    t: float,
    reps: int,
    seed: int,
    dt: float = SimulationConstants.MAX_DT,
    cap: int = SimulationConstants.DEFAULT_CAP,
    x0=None,
    threads: int = 1,
) -> HitResult:
    """
    Share of replicas with a particle in x0 + t B(xi, eps) at time t.

    Points of W are reached along the vertex path given by a Caratheodory
    decomposition of xi, which is attached to the result.
    """
    shape = _as_shape(profile)
    target = np.atleast_1d(np.asarray(xi, dtype=float))
    inside = bool(shape.contains(target[None, :])[0])
    decomposition = None
    if inside and shape.vertices is not None:
        decomposition = caratheodory(shape, target)
    else:
        logger.warning(f"xi={target.tolist()} lies outside W; expecting a small hit fraction")
    (table,) = simulate_ensemble(
        field, _origin(field, x0), t, dt, cap, seed, reps=reps, stream=STREAM_BBM,
        reducer=partial(_ball_hits, target, epsilon), threads=threads,
    )
    fraction, se = _proportion(table[:, 0] > 0.0)
    logger.info(f"Ball hit fraction at xi={np.round(target, 3).tolist()}, t={t:g}: {fraction:.3f}")
    return HitResult(target, epsilon, t, fraction, se, inside, decomposition)


@dataclass(frozen=True)
class CutoffResult:
    delta: float
    L: float
    count_floor: int
    p_min_below: float
    p_count_below: float

    def columns(self) -> list[str]:
        return ["delta", "L", "count_floor", "p_min_below", "p_count_below"]

    def to_rows(self) -> list[list[float]]:
        return [[self.delta, self.L, self.count_floor, self.p_min_below, self.p_count_below]]


def cutoff_check(
    field: PeriodicField,
    e,
    delta: float,
    L: float,
    count_floor: int,
    reps: int,
    seed: int,
    dt: float = SimulationConstants.MAX_DT,
    cap: int = SimulationConstants.DEFAULT_CAP,
    x0=None,
    threads: int = 1,
) -> CutoffResult:
    """Empirical P[M_L^- <= -delta L] and P[#N_L <= count_floor]."""
    if count_floor >= cap:
        raise SimulationError("count_floor must stay below the population cap")
    direction = unit_vector(e, field.dim)
    (table,) = simulate_ensemble(
        field, _origin(field, x0), L, dt, cap, seed, reps=reps, stream=STREAM_BBM,
        reducer=projection_reducer(direction), threads=threads,
    )
    p_min, _ = _proportion(table[:, 1] <= -delta * L)
    p_count, _ = _proportion(table[:, 2] <= count_floor)
    return CutoffResult(delta, L, count_floor, p_min, p_count)


def _counts(snapshot: EnsembleSnapshot) -> np.ndarray:
    return snapshot.counts.astype(float)


@dataclass(frozen=True)
class GrowthTable:
    t_list: np.ndarray
    means: np.ndarray
    standard_errors: np.ndarray
    reference_rate: float

    @property
    def rates(self) -> np.ndarray:
        return np.log(self.means) / self.t_list

    def columns(self) -> list[str]:
        return ["t", "mean_count", "se", "rate", "malthusian_rate"]

    def to_rows(self) -> list[list[float]]:
        return [
            [t, m, se, r, self.reference_rate]
            for t, m, se, r in zip(self.t_list, self.means, self.standard_errors, self.rates, strict=True)
        ]


def growth_rate_check(
    field: PeriodicField,
    t_list,
    reps: int,
    seed: int,
    dt: float = SimulationConstants.MAX_DT,
    cap: int = SimulationConstants.DEFAULT_CAP,
    x0=None,
    N: int | None = None,
    threads: int = 1,
) -> GrowthTable:
    """(1/t) log mean #N_t against gamma(e, 0); runs are rejected when thinned."""
    times = np.sort(np.asarray(t_list, dtype=float))
    tables = simulate_ensemble(
        field, _origin(field, x0), float(times.max()), dt, cap, seed, times, reps=reps,
        stream=STREAM_BBM, reducer=_counts, strict=True, threads=threads,
    )
    means = np.array([table.mean() for table in tables])
    errors = np.array([table.std(ddof=1) / math.sqrt(table.size) for table in tables])
    return GrowthTable(times, means, errors, malthusian_rate(field, N))


@dataclass(frozen=True)
class KsResult:
    rate: float
    samples: int
    statistic: float
    pvalue: float

    @property
    def scaled_statistic(self) -> float:
        return math.sqrt(self.samples) * self.statistic

    @property
    def passed(self) -> bool:
        return self.scaled_statistic < SimulationConstants.KS_CRITICAL_1PCT

    def columns(self) -> list[str]:
        return ["rate", "samples", "statistic", "scaled_statistic", "pvalue"]

    def to_rows(self) -> list[list[float]]:
        return [[self.rate, self.samples, self.statistic, self.scaled_statistic, self.pvalue]]


def inter_branch_ks(
    field: PeriodicField,
    reps: int,
    seed: int,
    dt: float = SimulationConstants.MAX_DT,
    threads: int = 1,
) -> KsResult:
    """Kolmogorov-Smirnov distance of simulated branching times from Exp(beta), g = beta."""
    if not field.is_constant:
        raise SimulationError("The exponential clock test needs a constant field")
    beta = field.offset
    tau = first_branch_times(field, np.zeros(field.dim), 30.0 / beta, reps, seed, dt, STREAM_TAIL, threads)
    tau = tau[np.isfinite(tau)]
    test = stats.kstest(tau, "expon", args=(0.0, 1.0 / beta))
    result = KsResult(beta, tau.size, float(test.statistic), float(test.pvalue))
    logger.info(f"Branching clock KS: sqrt(n) D = {result.scaled_statistic:.3f} (p={result.pvalue:.3f})")
    return result


def _interpolation_reducer(snapshots: Sequence[EnsembleSnapshot]) -> np.ndarray:
    first = snapshots[0]
    base = _replica_clouds(first)
    worst = np.zeros(first.reps)
    for later in snapshots[1:]:
        for r, cloud in enumerate(_replica_clouds(later)):
            worst[r] = max(worst[r], hausdorff(base[r], cloud) / first.time)
    return np.column_stack([worst, snapshots[-1].thinned])


@dataclass(frozen=True)
class InterpolationResult:
    t: float
    kappa: float
    ratios: np.ndarray  # per replica max_l d_H(X_t, X_l) / t
    thinned_share: float

    @property
    def share_below(self) -> float:
        return float(np.mean(self.ratios < self.kappa))

    @property
    def passed(self) -> bool:
        return self.share_below >= SimulationConstants.INTERPOLATION_SHARE

    def columns(self) -> list[str]:
        return ["t", "kappa", "share_below", "max_ratio", "thinned_share"]

    def to_rows(self) -> list[list[float]]:
        return [[self.t, self.kappa, self.share_below, float(self.ratios.max()), self.thinned_share]]


def interpolation_check(
    field: PeriodicField,
    t: float,
    reps: int,
    seed: int,
    kappa: float = SimulationConstants.INTERPOLATION_KAPPA,
    dt: float = SimulationConstants.MAX_DT,
    cap: int = SimulationConstants.DEFAULT_CAP,
    threads: int = 1,
) -> InterpolationResult:
    """max over l in [t, t + 1] of d_H(X_t, X_l) / t per replica, on a quarter-unit grid of l."""
    times = [t] + [t + offset for offset in SimulationConstants.INTERPOLATION_OFFSETS]
    (table,) = simulate_ensemble(
        field, np.zeros(field.dim), times[-1], dt, cap, seed, times, reps=reps, stream=STREAM_BBM,
        reducer=_interpolation_reducer, reduce_all=True, threads=threads,
    )
    result = InterpolationResult(t, kappa, table[:, 0], float(table[:, 1].mean()))
    if result.thinned_share > 0.0:
        logger.warning(f"Interpolation check saw thinning in {100 * result.thinned_share:.1f}% of replicas")
    return result

