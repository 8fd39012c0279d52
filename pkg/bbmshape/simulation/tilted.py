"""
Tilted diffusion dY = phi(Y) dt + dW with phi = grad psi / psi + lambda e

Paths are integrated by Euler-Maruyama with the drift interpolated from the
spectral eigenfunction. Under the tilt at lambda_e the directional rate
Y_hat_t = e.(Y_t - Y_0)/t concentrates at c*(e).
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.special import logsumexp

from bbmshape.constants import SimulationConstants, TiltedConstants
from bbmshape.exceptions import SimulationError, TooFewHitsError
from bbmshape.models.field import PeriodicField
from bbmshape.simulation.brownian import PathFunctional, feynman_kac_mean, sample_mean
from bbmshape.simulation.estimators import ZCheck
from bbmshape.solvers.spectral import EigenResult, cumulant_limit, principal_eigen
from bbmshape.solvers.speed import LambdaSolution, find_lambda_e, rate_at
from bbmshape.utils import loglog_slope, unit_vector
from bbmshape.utils.parallel import block_rng, replica_blocks, run_blocks

logger = logging.getLogger(__name__)

STREAM_TILTED = 21
STREAM_PLAIN = 22


@dataclass(frozen=True, eq=False)
class TiltedDrift:
    """phi(x) = grad log psi(x) + lambda e, periodic cubic-spline interpolation"""

    direction: np.ndarray
    lam: float
    grid_n: int
    spline_coefficients: tuple[np.ndarray, ...] | None  # None when psi is constant
    bound: float

    def __call__(self, x) -> np.ndarray:
        """Drift at points of shape (m, d) (or (m,) for d=1); returns (m, d)."""
        flat = np.asarray(x, dtype=float).reshape(-1, self.direction.size)
        out = np.tile(self.lam * self.direction, (flat.shape[0], 1))
        if self.spline_coefficients is not None:
            coords = (np.mod(flat, 1.0) * self.grid_n).T
            for i, coefficients in enumerate(self.spline_coefficients):
                out[:, i] += ndimage.map_coordinates(
                    coefficients, coords, order=3, mode="grid-wrap", prefilter=False
                )
        return out


def drift_field(eigen: EigenResult, grid_n: int | None = None) -> TiltedDrift:
    """
    Drift of the tilted diffusion for one eigenpair.

    grad log psi is synthesized on a fine periodic grid and interpolated
    with periodic cubic splines; psi > 0 keeps it bounded.
    """
    dim = eigen.dim
    direction = np.asarray(eigen.direction, dtype=float)
    n = grid_n or TiltedConstants.DRIFT_GRID[dim]
    psi, grad = eigen.synthesize(n)
    if np.min(psi) <= 0.0:
        raise SimulationError("Eigenfunction is not positive on the drift grid")
    log_grad = grad / psi[..., None]
    peak = float(np.max(np.linalg.norm(log_grad.reshape(-1, dim), axis=1)))
    if peak < 1e-14:
        return TiltedDrift(direction, eigen.lam, n, None, abs(eigen.lam))
    coefficients = tuple(
        ndimage.spline_filter(np.ascontiguousarray(log_grad[..., i]), order=3, mode="grid-wrap")
        for i in range(dim)
    )
    return TiltedDrift(direction, eigen.lam, n, coefficients, peak + abs(eigen.lam))


@dataclass(frozen=True)
class TiltedPath:
    """One tilted path sampled at the record times"""

    e: tuple[float, ...]
    lam: float
    times: np.ndarray
    positions: np.ndarray  # (T, d)
    y_hat: float


@dataclass(frozen=True, eq=False)
class TiltedEnsemble:
    """Tilted paths recorded at a grid of times"""

    e: np.ndarray
    lam: float
    times: np.ndarray
    origins: np.ndarray  # (reps, d)
    positions: np.ndarray  # (T, reps, d)
    run_max: np.ndarray  # (T, reps) running max of e.(Y_s - Y_0)
    jumps: int  # steps whose increment exceeded the continuity bound
    steps: int

    @property
    def reps(self) -> int:
        return self.origins.shape[0]

    def displacement(self, index: int = -1) -> np.ndarray:
        return (self.positions[index] - self.origins) @ self.e

    def y_hat(self, index: int = -1) -> np.ndarray:
        return self.displacement(index) / self.times[index]

    @property
    def jump_share(self) -> float:
        return self.jumps / max(self.steps, 1)

    def paths(self) -> list[TiltedPath]:
        y_hat = self.y_hat()
        return [
            TiltedPath(tuple(self.e.tolist()), self.lam, self.times, self.positions[:, r, :], float(y_hat[r]))
            for r in range(self.reps)
        ]


@dataclass(frozen=True)
class _TiltedTask:
    drift: TiltedDrift
    origins: np.ndarray
    times: tuple[float, ...]
    dt: float
    seed: int
    stream: int
    block: int


def _tilted_block(task: _TiltedTask) -> tuple[np.ndarray, np.ndarray, int, int]:
    rng = block_rng(task.seed, task.stream, task.block)
    m, dim = task.origins.shape
    e = task.drift.direction
    y = task.origins.copy()
    start = task.origins @ e
    run_max = np.zeros(m)
    out_pos = np.empty((len(task.times), m, dim))
    out_max = np.empty((len(task.times), m))
    jumps = 0
    steps = 0
    now = 0.0
    for i, target in enumerate(task.times):
        while target - now > 1e-12:
            h = min(task.dt, target - now)
            increment = task.drift(y) * h + math.sqrt(h) * rng.standard_normal((m, dim))
            limit = task.drift.bound * h + TiltedConstants.JUMP_SIGMAS * math.sqrt(h)
            jumps += int(np.count_nonzero(np.abs(increment).max(axis=1) > limit))
            steps += m
            y = y + increment
            run_max = np.maximum(run_max, y @ e - start)
            now = target if target - now <= task.dt else now + h
        out_pos[i] = y
        out_max[i] = run_max
    return out_pos, out_max, jumps, steps


def simulate_tilted(
    field: PeriodicField,
    e,
    lam: float,
    x0,
    t_end: float,
    dt: float,
    reps: int,
    seed: int,
    record_times=None,
    N: int | None = None,
    stream: int = STREAM_TILTED,
    threads: int = 1,
) -> TiltedEnsemble:
    """
    Euler-Maruyama paths of the diffusion tilted by (e, lambda).

    Args:
        field: Environment
        e: Unit direction
        lam: Tilt lambda
        x0: Start point
        t_end: Final time
        dt: Step (<= 0.005)
        reps: Number of paths
        seed: Experiment seed
        record_times: Times in (0, t_end] to record (default [t_end])
        N: Fourier truncation order of the eigen solve
    """
    if not 0.0 < dt <= TiltedConstants.MAX_DT:
        raise SimulationError(f"dt must lie in (0, {TiltedConstants.MAX_DT}], got {dt}")
    direction = unit_vector(e, field.dim)
    times = np.sort(np.atleast_1d(np.asarray([t_end] if record_times is None else record_times, dtype=float)))
    if times.min() <= 0.0 or times.max() > t_end + 1e-12:
        raise SimulationError(f"Record times must lie in (0, {t_end}]")
    drift = drift_field(principal_eigen(field, direction, lam, N))
    origin = np.atleast_1d(np.asarray(x0, dtype=float)).reshape(1, field.dim)

    tasks = [
        _TiltedTask(drift, np.repeat(origin, size, axis=0), tuple(times.tolist()), dt, seed, stream, block)
        for block, size in replica_blocks(reps, SimulationConstants.REPLICA_BLOCK * 16)
    ]
    logger.debug(f"Tilted paths: {reps} reps, lambda={lam:.6g}, dt={dt}, seed={seed}")
    parts = run_blocks(_tilted_block, tasks, threads=threads)
    ensemble = TiltedEnsemble(
        direction,
        float(lam),
        times,
        np.repeat(origin, reps, axis=0),
        np.concatenate([p[0] for p in parts], axis=1),
        np.concatenate([p[1] for p in parts], axis=1),
        sum(p[2] for p in parts),
        sum(p[3] for p in parts),
    )
    if ensemble.jump_share > TiltedConstants.CONTINUITY_SHARE:
        logger.warning(
            f"{100 * ensemble.jump_share:.3f}% of tilted steps exceeded the continuity bound; reduce dt"
        )
    return ensemble


def change_of_measure_check(
    field: PeriodicField,
    e,
    lam: float,
    functional_id: str,
    t: float,
    reps: int,
    seed: int,
    level: float = 0.0,
    x0=None,
    dt: float = TiltedConstants.MAX_DT,
    N: int | None = None,
    threads: int = 1,
) -> ZCheck:
    """
    Tilted-path estimate of E_x[exp(int g(B_s) ds) F(B)] against plain paths.

    Each tilted path carries the weight
    psi(x)/psi(Y_t) exp(-lambda e.(Y_t - Y_0) + t gamma(e, lambda)).
    """
    if t > TiltedConstants.CHANGE_OF_MEASURE_MAX_T:
        raise SimulationError(f"Change of measure check needs t <= {TiltedConstants.CHANGE_OF_MEASURE_MAX_T}")
    direction = unit_vector(e, field.dim)
    functional = PathFunctional.parse(functional_id, field.dim, direction, level)
    origin = np.zeros(field.dim) if x0 is None else np.atleast_1d(np.asarray(x0, dtype=float))
    eigen = principal_eigen(field, direction, lam, N)
    paths = simulate_tilted(field, direction, lam, origin, t, dt, reps, seed, N=N, threads=threads)

    shift = paths.displacement()
    psi_ratio = eigen.psi_at(origin[None, :])[0] / eigen.psi_at(paths.positions[-1])
    weights = psi_ratio * np.exp(-lam * shift + t * eigen.gamma)
    along = paths.positions[-1] - paths.origins
    values = weights * functional(along @ functional.e, paths.run_max[-1])
    lhs = sample_mean(values)
    rhs = feynman_kac_mean(field, origin, t, functional, reps, seed, dt, STREAM_PLAIN, threads=threads)
    check = ZCheck(f"change_of_measure:{functional.kind.value}", lhs, rhs)
    logger.info(f"Change of measure {functional.kind.value}: {lhs.mean:.4f} vs {rhs.mean:.4f} (z={check.z:.2f})")
    return check


@dataclass(frozen=True)
class CumulantEstimate:
    eta: float
    t: float
    value: float
    se: float
    reference: float
    heavy_tail: bool

    @property
    def z(self) -> float:
        if self.se == 0.0:
            return 0.0 if self.value == self.reference else math.inf
        return (self.value - self.reference) / self.se

    def columns(self) -> list[str]:
        return ["eta", "t", "estimate", "se", "reference", "z", "heavy_tail"]

    def to_rows(self) -> list[list]:
        return [[self.eta, self.t, self.value, self.se, self.reference, self.z, int(self.heavy_tail)]]


def _log_mean_exp(values: np.ndarray) -> float:
    return float(logsumexp(values) - math.log(values.size))


def _jackknife_se(values: np.ndarray, t: float, groups: int) -> float:
    chunks = np.array_split(values, groups)
    estimates = np.array(
        [_log_mean_exp(np.concatenate(chunks[:k] + chunks[k + 1 :])) / t for k in range(groups)]
    )
    return float(math.sqrt((groups - 1) / groups * np.sum((estimates - estimates.mean()) ** 2)))


def cumulant_from_ensemble(ensemble: TiltedEnsemble, eta: float, reference: float) -> CumulantEstimate:
    """(1/t) log mean exp(eta t Y_hat_t) with a delete-one-group jackknife SE."""
    t = float(ensemble.times[-1])
    exponents = eta * ensemble.displacement()
    value = _log_mean_exp(exponents) / t
    se = _jackknife_se(exponents, t, TiltedConstants.JACKKNIFE_GROUPS)
    weights = np.exp(exponents - exponents.max())
    top = np.sort(weights)[-max(1, weights.size // 100) :]
    heavy = bool(top.sum() > SimulationConstants.HEAVY_TAIL_SHARE * weights.sum())
    if heavy:
        logger.warning(f"Top 1% of weights carry over half the mean at eta={eta}; raise reps or lower |eta|")
    return CumulantEstimate(eta, t, value, se, reference, heavy)


def empirical_cumulant(
    field: PeriodicField,
    e,
    eta: float,
    t: float,
    reps: int,
    seed: int,
    x0=None,
    dt: float = TiltedConstants.MAX_DT,
    solution: LambdaSolution | None = None,
    N: int | None = None,
    threads: int = 1,
) -> CumulantEstimate:
    """Finite-t cumulant of t Y_hat_t under the tilt at lambda_e, with its spectral limit."""
    lo, hi = TiltedConstants.CUMULANT_T_RANGE
    if abs(eta) > 1.0:
        raise SimulationError(f"|eta| must be <= 1, got {eta}")
    if not lo <= t <= hi:
        raise SimulationError(f"t must lie in [{lo:g}, {hi:g}], got {t}")
    if reps < TiltedConstants.MIN_CUMULANT_REPS:
        raise SimulationError(f"Cumulant estimates need reps >= {TiltedConstants.MIN_CUMULANT_REPS}")
    direction = unit_vector(e, field.dim)
    if solution is None:
        solution = find_lambda_e(field, direction, N)
    origin = np.zeros(field.dim) if x0 is None else x0
    ensemble = simulate_tilted(field, direction, solution.lambda_e, origin, t, dt, reps, seed, N=N, threads=threads)
    reference = cumulant_limit(field, direction, eta, solution.lambda_e, N)
    estimate = cumulant_from_ensemble(ensemble, eta, reference)
    logger.info(f"Cumulant eta={eta:+.2f}: {estimate.value:.5f} +- {estimate.se:.5f} vs {reference:.5f}")
    return estimate


@dataclass(frozen=True)
class LdpTable:
    interval: tuple[float, float]
    t_list: np.ndarray
    probabilities: np.ndarray
    hits: np.ndarray
    reference: float  # inf of I_e over the interval
    contains_c_star: bool

    @property
    def testable(self) -> np.ndarray:
        return self.hits >= SimulationConstants.MIN_HITS

    @property
    def exponents(self) -> np.ndarray:
        """-(1/t) log P per t; nan where nothing was hit."""
        with np.errstate(divide="ignore"):
            values = -np.log(self.probabilities) / self.t_list
        return np.where(self.probabilities > 0.0, values, np.nan)

    @property
    def incremental_exponents(self) -> np.ndarray:
        """Slope of -log P between consecutive testable times (nan for the first)."""
        out = np.full(self.t_list.size, np.nan)
        usable = np.nonzero(self.testable)[0]
        for prev, cur in zip(usable[:-1], usable[1:], strict=True):
            rise = np.log(self.probabilities[prev]) - np.log(self.probabilities[cur])
            out[cur] = rise / (self.t_list[cur] - self.t_list[prev])
        return out

    @property
    def final_exponent(self) -> float:
        """Exponent at the largest testable t (incremental when available)."""
        last = int(np.nonzero(self.testable)[0][-1])
        incremental = self.incremental_exponents[last]
        return float(self.exponents[last] if math.isnan(incremental) else incremental)

    @property
    def passed(self) -> bool:
        value = self.final_exponent
        if self.contains_c_star:
            return abs(value - self.reference) <= TiltedConstants.LDP_ABSOLUTE_TOL
        return abs(value - self.reference) <= TiltedConstants.LDP_RELATIVE_TOL * self.reference

    def columns(self) -> list[str]:
        return ["t", "probability", "hits", "exponent", "incremental_exponent", "rate_reference"]

    def to_rows(self) -> list[list[float]]:
        return [
            [t, p, int(h), x, inc, self.reference]
            for t, p, h, x, inc in zip(
                self.t_list, self.probabilities, self.hits, self.exponents, self.incremental_exponents,
                strict=True,
            )
        ]


def ldp_tail_check(
    field: PeriodicField,
    e,
    interval: tuple[float, float],
    t_list,
    reps: int,
    seed: int,
    x0=None,
    dt: float = TiltedConstants.MAX_DT,
    solution: LambdaSolution | None = None,
    N: int | None = None,
    threads: int = 1,
) -> LdpTable:
    """
    -(1/t) log P[Y_hat_t in C] against inf_C I_e by direct counting.

    Raises:
        TooFewHitsError: If no time reaches the minimum hit count
    """
    if reps < TiltedConstants.MIN_LDP_REPS:
        raise SimulationError(f"Tail exponents need reps >= {TiltedConstants.MIN_LDP_REPS}, got {reps}")
    lo, hi = float(interval[0]), float(interval[1])
    if not lo < hi:
        raise SimulationError(f"Empty interval ({lo}, {hi})")
    direction = unit_vector(e, field.dim)
    if solution is None:
        solution = find_lambda_e(field, direction, N)
    c_star = solution.c_star
    contains = lo <= c_star <= hi
    gap = max(lo - c_star, c_star - hi, 0.0)
    if not contains and gap < TiltedConstants.LDP_MIN_GAP * c_star:
        raise SimulationError(
            f"Interval ({lo:g}, {hi:g}) sits {gap:.3g} from c*={c_star:.4g}; need >= "
            f"{TiltedConstants.LDP_MIN_GAP} c* or an interval containing c*"
        )
    if contains:
        reference = 0.0
    else:
        nearest = lo if lo > c_star else hi
        reference = rate_at(field, direction, nearest, solution, N)

    times = np.sort(np.asarray(t_list, dtype=float))
    origin = np.zeros(field.dim) if x0 is None else x0
    ensemble = simulate_tilted(
        field, direction, solution.lambda_e, origin, float(times.max()), dt, reps, seed, times, N, threads=threads
    )
    hits = np.array([np.count_nonzero((y >= lo) & (y <= hi)) for y in (ensemble.y_hat(i) for i in range(times.size))])
    table = LdpTable((lo, hi), times, hits / reps, hits, float(reference), contains)
    if not table.testable.any():
        raise TooFewHitsError(
            f"Interval ({lo:g}, {hi:g}) is untestable at reps={reps}: "
            f"max hits {int(hits.max())} < {SimulationConstants.MIN_HITS}"
        )
    logger.info(f"LDP tail exponent {table.final_exponent:.4f} vs rate {reference:.4f}")
    return table


@dataclass(frozen=True)
class LlnResult:
    times: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    c_star: float
    reps: int

    @property
    def z_final(self) -> float:
        se = math.sqrt(self.variances[-1] / self.reps)
        return 0.0 if se == 0.0 else float((self.means[-1] - self.c_star) / se)

    @property
    def variance_slope(self) -> float:
        if self.times.size < 2 or np.max(self.variances) <= 0.0:
            return float("nan")
        return loglog_slope(self.times, self.variances)

    @property
    def passed(self) -> bool:
        lo, hi = TiltedConstants.LLN_SLOPE_RANGE
        slope = self.variance_slope
        slope_ok = math.isnan(slope) or lo <= slope <= hi
        return abs(self.z_final) <= 3.0 and slope_ok

    def columns(self) -> list[str]:
        return ["t", "mean_y_hat", "variance", "c_star"]

    def to_rows(self) -> list[list[float]]:
        return [[t, m, v, self.c_star] for t, m, v in zip(self.times, self.means, self.variances, strict=True)]


def lln_check(ensemble: TiltedEnsemble, c_star: float) -> LlnResult:
    """Mean of Y_hat_t against c*(e) and the decay of its variance in t."""
    y_hat = np.array([ensemble.y_hat(i) for i in range(ensemble.times.size)])
    result = LlnResult(ensemble.times, y_hat.mean(axis=1), y_hat.var(axis=1, ddof=1), c_star, ensemble.reps)
    logger.info(
        f"Tilted LLN: mean Y_hat {result.means[-1]:.4f} vs c* {c_star:.4f} "
        f"(z={result.z_final:.2f}, variance slope {result.variance_slope:.3f})"
    )
    return result
