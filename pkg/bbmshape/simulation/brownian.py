"""
Single Brownian path estimators

Feynman-Kac weighted means E_x[exp(int_0^t g(B_s) ds) F(B)], first
branching times of a lone particle and time averages of g along a path.
"""

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from bbmshape.constants import SimulationConstants
from bbmshape.exceptions import SimulationError
from bbmshape.models.field import PeriodicField
from bbmshape.utils import unit_vector
from bbmshape.utils.parallel import block_rng, replica_blocks, run_blocks

logger = logging.getLogger(__name__)


class FunctionalKind(str, Enum):
    """Path functionals shared by the many-to-one and change-of-measure checks"""

    ONE = "one"
    ENDPOINT = "endpoint"  # 1{(B_t - B_0).e > level}
    PATH_MAX = "path_max"  # 1{max_s (B_s - B_0).e > level}


@dataclass(frozen=True)
class PathFunctional:
    kind: FunctionalKind
    direction: tuple[float, ...]
    level: float = 0.0

    @classmethod
    def parse(cls, functional_id: str, dim: int, e=None, level: float = 0.0) -> "PathFunctional":
        try:
            kind = FunctionalKind(functional_id)
        except ValueError as exc:
            choices = ", ".join(k.value for k in FunctionalKind)
            raise SimulationError(f"Unknown functional '{functional_id}' (choose from {choices})") from exc
        vec = np.eye(dim)[0] if e is None else unit_vector(e, dim)
        return cls(kind, tuple(vec.tolist()), float(level))

    @property
    def e(self) -> np.ndarray:
        return np.asarray(self.direction, dtype=float)

    @property
    def needs_path_max(self) -> bool:
        return self.kind is FunctionalKind.PATH_MAX

    def __call__(self, displacement: np.ndarray, max_displacement: np.ndarray | None = None) -> np.ndarray:
        """
        Evaluate on per-path summaries.

        Args:
            displacement: (B_t - B_0).e
            max_displacement: max_s (B_s - B_0).e (PATH_MAX only)
        """
        if self.kind is FunctionalKind.ONE:
            return np.ones_like(displacement, dtype=float)
        if self.kind is FunctionalKind.ENDPOINT:
            return (displacement > self.level).astype(float)
        if max_displacement is None:
            raise SimulationError("Path-max functional needs the running maximum")
        return (max_displacement > self.level).astype(float)


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """Independent Brownian paths summarized at record times"""

    times: np.ndarray
    origins: np.ndarray  # (reps, d)
    positions: np.ndarray  # (T, reps, d)
    integrals: np.ndarray  # (T, reps) trapezoid int_0^t g(B_s) ds
    run_max: np.ndarray | None  # (T, reps) max_s B_s.e
    log_weights: np.ndarray  # (T, reps) likelihood ratio of the drifted sampler

    @property
    def reps(self) -> int:
        return self.origins.shape[0]

    def displacement(self, e: np.ndarray, index: int = -1) -> np.ndarray:
        return (self.positions[index] - self.origins) @ e

    def max_displacement(self, e: np.ndarray, index: int = -1) -> np.ndarray | None:
        if self.run_max is None:
            return None
        return self.run_max[index] - self.origins @ e


@dataclass(frozen=True)
class _PathTask:
    field: PeriodicField
    origins: np.ndarray
    times: tuple[float, ...]
    dt: float
    seed: int
    stream: int
    block: int
    direction: np.ndarray | None
    drift: np.ndarray | None


def _path_block(task: _PathTask) -> tuple[np.ndarray, ...]:
    rng = block_rng(task.seed, task.stream, task.block)
    m, dim = task.origins.shape
    pos = task.origins.astype(float).copy()
    g_prev = task.field(pos)
    integral = np.zeros(m)
    run_max = None if task.direction is None else pos @ task.direction
    n_times = len(task.times)
    out_pos = np.empty((n_times, m, dim))
    out_int = np.empty((n_times, m))
    out_max = None if run_max is None else np.empty((n_times, m))
    now = 0.0
    for i, target in enumerate(task.times):
        while target - now > 1e-12:
            h = min(task.dt, target - now)
            step = np.sqrt(h) * rng.standard_normal((m, dim))
            if task.drift is not None:
                step += h * task.drift
            pos = pos + step
            g_new = task.field(pos)
            integral += 0.5 * h * (g_prev + g_new)
            g_prev = g_new
            if run_max is not None:
                run_max = np.maximum(run_max, pos @ task.direction)
            now = target if target - now <= task.dt else now + h
        out_pos[i] = pos
        out_int[i] = integral
        if out_max is not None:
            out_max[i] = run_max
    return out_pos, out_int, out_max


def simulate_paths(
    field: PeriodicField,
    x0,
    times,
    reps: int,
    seed: int,
    dt: float = SimulationConstants.MAX_DT,
    stream: int = 0,
    direction=None,
    drift=None,
    threads: int = 1,
) -> PathEnsemble:
    """
    reps Brownian paths from x0, each accumulating int g(B_s) ds.

    With drift mu the paths are B_t + mu t and log_weights carry the
    likelihood ratio -mu.(X_t - x0) + |mu|^2 t / 2, so weighted means are
    unbiased for plain Brownian motion.

    Args:
        field: Environment
        x0: Start point, or one start point per path with shape (reps, d)
        times: Record times (sorted ascending)
        reps: Number of paths (ignored when x0 lists one point per path)
        seed: Experiment seed
        dt: Time step
        stream: Estimator stream id
        direction: Track the running max of B.direction when given
        drift: Constant importance drift vector
        threads: Worker processes
    """
    if not 0.0 < dt <= SimulationConstants.MAX_DT:
        raise SimulationError(f"dt must lie in (0, {SimulationConstants.MAX_DT}], got {dt}")
    if reps < 2:
        raise SimulationError(f"Need at least 2 paths, got {reps}")
    record = np.sort(np.atleast_1d(np.asarray(times, dtype=float)))
    if record.min() < 0.0:
        raise SimulationError("Record times must be nonnegative")
    start = np.asarray(x0, dtype=float)
    if start.ndim == 2 and start.shape[0] > 1:
        origins = start.reshape(-1, field.dim)
        reps = origins.shape[0]
    else:
        origins = np.repeat(np.atleast_1d(start).reshape(1, field.dim), reps, axis=0)
    vec = None if direction is None else unit_vector(direction, field.dim)
    mu = None if drift is None else np.atleast_1d(np.asarray(drift, dtype=float))

    tasks = []
    first = 0
    for block, size in replica_blocks(reps, SimulationConstants.REPLICA_BLOCK * 16):
        tasks.append(
            _PathTask(field, origins[first : first + size], tuple(record.tolist()), dt, seed, stream, block, vec, mu)
        )
        first += size
    parts = run_blocks(_path_block, tasks, threads=threads)
    positions = np.concatenate([p[0] for p in parts], axis=1)
    integrals = np.concatenate([p[1] for p in parts], axis=1)
    run_max = None if vec is None else np.concatenate([p[2] for p in parts], axis=1)

    if mu is None:
        log_weights = np.zeros_like(integrals)
    else:
        shift = (positions - origins[None, :, :]) @ mu
        log_weights = -shift + 0.5 * float(mu @ mu) * record[:, None]
    return PathEnsemble(record, origins, positions, integrals, run_max, log_weights)


@dataclass(frozen=True)
class WeightedMean:
    mean: float
    se: float
    reps: int

    def z_against(self, other: "WeightedMean") -> float:
        pooled = np.hypot(self.se, other.se)
        if pooled == 0.0:
            return 0.0 if self.mean == other.mean else float(np.sign(self.mean - other.mean) * np.inf)
        return float((self.mean - other.mean) / pooled)


def sample_mean(values: np.ndarray) -> WeightedMean:
    values = np.asarray(values, dtype=float)
    return WeightedMean(float(values.mean()), float(values.std(ddof=1) / np.sqrt(values.size)), values.size)


def feynman_kac_mean(
    field: PeriodicField,
    x0,
    t: float,
    functional: PathFunctional,
    reps: int,
    seed: int,
    dt: float = SimulationConstants.MAX_DT,
    stream: int = 0,
    drift=None,
    threads: int = 1,
) -> WeightedMean:
    """MC estimate of E_x[exp(int_0^t g(B_s) ds) F(B)]."""
    paths = simulate_paths(
        field, x0, [t], reps, seed, dt, stream,
        direction=functional.e if functional.needs_path_max else None,
        drift=drift, threads=threads,
    )
    e = functional.e
    values = np.exp(paths.integrals[-1] + paths.log_weights[-1]) * functional(
        paths.displacement(e), paths.max_displacement(e)
    )
    return sample_mean(values)


@dataclass(frozen=True)
class _BranchTask:
    field: PeriodicField
    origin: np.ndarray
    size: int
    t_max: float
    dt: float
    seed: int
    stream: int
    block: int


def _first_branch_block(task: _BranchTask) -> np.ndarray:
    rng = block_rng(task.seed, task.stream, task.block)
    dim = task.origin.size
    pos = np.repeat(task.origin.reshape(1, dim), task.size, axis=0)
    threshold = rng.exponential(1.0, task.size)
    clock = np.zeros(task.size)
    g_prev = task.field(pos)
    tau = np.full(task.size, np.inf)
    alive = np.arange(task.size)
    now = 0.0
    while alive.size and task.t_max - now > 1e-12:
        h = min(task.dt, task.t_max - now)
        pos_alive = pos[alive] + np.sqrt(h) * rng.standard_normal((alive.size, dim))
        g_new = task.field(pos_alive)
        increment = 0.5 * h * (g_prev[alive] + g_new)
        clock_new = clock[alive] + increment
        fire = clock_new >= threshold[alive]
        if fire.any():
            u = (threshold[alive][fire] - clock[alive][fire]) / increment[fire]
            tau[alive[fire]] = now + u * h
        pos[alive] = pos_alive
        clock[alive] = clock_new
        g_prev[alive] = g_new
        alive = alive[~fire]
        now = task.t_max if task.t_max - now <= task.dt else now + h
    return tau


def first_branch_times(
    field: PeriodicField,
    x0,
    t_max: float,
    reps: int,
    seed: int,
    dt: float = SimulationConstants.MAX_DT,
    stream: int = 0,
    threads: int = 1,
) -> np.ndarray:
    """
    First branching instant of a lone particle from x0; inf if none by t_max.

    The crossing of the Exp(1) threshold by the trapezoid clock is located by
    linear interpolation inside the step, as in the g-BBM engine.
    """
    if not 0.0 < dt <= SimulationConstants.MAX_DT:
        raise SimulationError(f"dt must lie in (0, {SimulationConstants.MAX_DT}], got {dt}")
    origin = np.atleast_1d(np.asarray(x0, dtype=float)).reshape(field.dim)
    tasks = [
        _BranchTask(field, origin, size, t_max, dt, seed, stream, block)
        for block, size in replica_blocks(reps, SimulationConstants.REPLICA_BLOCK * 16)
    ]
    return np.concatenate(run_blocks(_first_branch_block, tasks, threads=threads))


def time_averages(
    field: PeriodicField,
    t_list,
    reps: int,
    seed: int,
    dt: float = SimulationConstants.MAX_DT,
    x0=None,
    stream: int = 0,
    threads: int = 1,
) -> np.ndarray:
    """(1/t) int_0^t g(B_s) ds for each t in t_list; shape (len(t_list), reps)."""
    times = np.asarray(t_list, dtype=float)
    if np.any(times <= 0.0):
        raise SimulationError("Averaging times must be positive")
    if x0 is None:
        # uniform starts on the cell are stationary for the torus-projected path
        origin = block_rng(seed, stream, 0).random((reps, field.dim))
        stream += 1
    else:
        origin = x0
    paths = simulate_paths(field, origin, times, reps, seed, dt, stream, threads=threads)
    return paths.integrals / paths.times[:, None]
