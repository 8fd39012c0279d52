"""
g-BBM Monte Carlo engine

Each particle carries an Exp(1) threshold and a clock accumulating the
integral of g along its path (trapezoid rule per Euler step). When the
clock crosses the threshold inside a step, the crossing instant is
interpolated, the parent's position at that instant is drawn from the
Brownian bridge over the step, and two children start there with fresh
thresholds and zero clocks for the rest of the step.

Replicas are simulated together in blocks; particles carry the index of
the replica they belong to.
"""

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field as dataclass_field
from functools import partial
from typing import Any

import numpy as np

from bbmshape.constants import SimulationConstants
from bbmshape.exceptions import CapThinnedError, SimulationError
from bbmshape.models.field import PeriodicField
from bbmshape.utils.parallel import block_rng, replica_blocks, run_blocks

logger = logging.getLogger(__name__)

TRACK_RUN_MAX = "run_max"
TRACK_ANCHOR = "anchor"
LINEAGE_GEN = "gen_id"
LINEAGE_ANCESTOR = "ancestor"


@dataclass(frozen=True)
class Particle:
    """
    One live particle of a snapshot.

    gen_id counts the completed lineage windows of length T0, which is the
    generation index of the embedded branching process; ancestor_tag is the
    rank, within its replica, of the particle's ancestor alive at gen_id * T0.
    Both stay at their defaults unless the run tracked lineage.
    """

    position: np.ndarray
    clock: float
    threshold: float
    gen_id: int = 0
    ancestor_tag: int | None = None


@dataclass(frozen=True, eq=False)
class EnsembleSnapshot:
    """All particles of a replica block (or merged blocks) at one time"""

    time: float
    positions: np.ndarray
    clocks: np.ndarray
    thresholds: np.ndarray
    owner: np.ndarray
    origins: np.ndarray
    thinned: np.ndarray
    extras: dict[str, np.ndarray] = dataclass_field(default_factory=dict)

    @property
    def reps(self) -> int:
        return self.origins.shape[0]

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.owner, minlength=self.reps)

    def replica(self, r: int) -> "BBMSnapshot":
        mask = self.owner == r
        return BBMSnapshot(
            time=self.time,
            positions=self.positions[mask],
            count=int(mask.sum()),
            origin=self.origins[r],
            thinned=bool(self.thinned[r]),
            clocks=self.clocks[mask],
            thresholds=self.thresholds[mask],
            gen_ids=self.extras[LINEAGE_GEN][mask] if LINEAGE_GEN in self.extras else None,
            ancestor_tags=self.extras[LINEAGE_ANCESTOR][mask] if LINEAGE_ANCESTOR in self.extras else None,
        )

    def displacement(self, e: np.ndarray) -> np.ndarray:
        """(X_t(v) - x0).e for every particle."""
        return (self.positions - self.origins[self.owner]) @ e

    def per_replica_max(self, values: np.ndarray, empty: float = -np.inf) -> np.ndarray:
        out = np.full(self.reps, empty)
        np.maximum.at(out, self.owner, values)
        return out

    def per_replica_min(self, values: np.ndarray, empty: float = np.inf) -> np.ndarray:
        out = np.full(self.reps, empty)
        np.minimum.at(out, self.owner, values)
        return out

    def per_replica_sum(self, values: np.ndarray) -> np.ndarray:
        return np.bincount(self.owner, weights=values, minlength=self.reps)


@dataclass(frozen=True, eq=False)
class BBMSnapshot:
    """Particle positions of one g-BBM replica at time t"""

    time: float
    positions: np.ndarray
    count: int
    origin: np.ndarray
    thinned: bool = False
    clocks: np.ndarray | None = None
    thresholds: np.ndarray | None = None
    gen_ids: np.ndarray | None = None
    ancestor_tags: np.ndarray | None = None

    def particles(self) -> list[Particle]:
        clocks = np.zeros(self.count) if self.clocks is None else self.clocks
        thresholds = np.full(self.count, np.inf) if self.thresholds is None else self.thresholds
        gen_ids = np.zeros(self.count, dtype=np.int64) if self.gen_ids is None else self.gen_ids
        return [
            Particle(
                self.positions[i].copy(),
                float(clocks[i]),
                float(thresholds[i]),
                int(gen_ids[i]),
                None if self.ancestor_tags is None else int(self.ancestor_tags[i]),
            )
            for i in range(self.count)
        ]


class _Population:
    """Struct-of-arrays particle store"""

    __slots__ = ("pos", "g", "clock", "threshold", "owner", "extra")

    def __init__(self, pos, g, clock, threshold, owner, extra):
        self.pos = pos
        self.g = g
        self.clock = clock
        self.threshold = threshold
        self.owner = owner
        self.extra = extra

    @property
    def size(self) -> int:
        return self.clock.size

    def take(self, index) -> "_Population":
        return _Population(
            self.pos[index],
            self.g[index],
            self.clock[index],
            self.threshold[index],
            self.owner[index],
            {key: value[index] for key, value in self.extra.items()},
        )

    @staticmethod
    def concat(parts: list["_Population"], template: "_Population") -> "_Population":
        if not parts:
            return template.take(np.zeros(0, dtype=int))
        if len(parts) == 1:
            return parts[0]
        return _Population(
            np.concatenate([p.pos for p in parts]),
            np.concatenate([p.g for p in parts]),
            np.concatenate([p.clock for p in parts]),
            np.concatenate([p.threshold for p in parts]),
            np.concatenate([p.owner for p in parts]),
            {key: np.concatenate([p.extra[key] for p in parts]) for key in template.extra},
        )


def _seed_population(
    field: PeriodicField,
    origins: np.ndarray,
    rng: np.random.Generator,
    track: Sequence[str],
    direction: np.ndarray | None,
    lineage: bool = False,
) -> _Population:
    reps = origins.shape[0]
    pos = origins.astype(float).copy()
    extra: dict[str, np.ndarray] = {}
    if TRACK_RUN_MAX in track:
        if direction is None:
            raise SimulationError("Tracking the running maximum needs a direction")
        extra[TRACK_RUN_MAX] = pos @ direction
    if TRACK_ANCHOR in track:
        extra[TRACK_ANCHOR] = pos.copy()
    if lineage:
        extra[LINEAGE_GEN] = np.zeros(reps, dtype=np.int64)
        extra[LINEAGE_ANCESTOR] = np.zeros(reps, dtype=np.int64)
    return _Population(
        pos,
        field(pos),
        np.zeros(reps),
        rng.exponential(1.0, reps),
        np.arange(reps),
        extra,
    )


def _relabel(pop: _Population, reps: int) -> None:
    """Open a new lineage window: bump gen_id and tag every particle as its own ancestor."""
    pop.extra[LINEAGE_GEN] = pop.extra[LINEAGE_GEN] + 1
    order = np.argsort(pop.owner, kind="stable")
    counts = np.bincount(pop.owner, minlength=reps)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    ranks = np.empty(pop.size, dtype=np.int64)
    ranks[order] = np.arange(pop.size) - starts[pop.owner[order]]
    pop.extra[LINEAGE_ANCESTOR] = ranks


def _advance(
    pop: _Population,
    h: float,
    field: PeriodicField,
    rng: np.random.Generator,
    direction: np.ndarray | None = None,
) -> _Population:
    """Move every particle through one step of length h, resolving branchings."""
    dim = pop.pos.shape[1]
    finished: list[_Population] = []
    segment = pop
    tau = np.full(segment.size, h)

    for _ in range(SimulationConstants.BRANCH_ITER_MAX):
        m = segment.size
        if m == 0:
            break
        x_end = segment.pos + np.sqrt(tau)[:, None] * rng.standard_normal((m, dim))
        g_end = field(x_end)
        increment = 0.5 * tau * (segment.g + g_end)
        clock_end = segment.clock + increment
        fire = clock_end >= segment.threshold

        stay = ~fire
        if stay.any():
            done = segment.take(stay)
            done.pos = x_end[stay]
            done.g = g_end[stay]
            done.clock = clock_end[stay]
            if TRACK_RUN_MAX in done.extra:
                done.extra[TRACK_RUN_MAX] = np.maximum(done.extra[TRACK_RUN_MAX], done.pos @ direction)
            finished.append(done)
        if not fire.any():
            segment = segment.take(np.zeros(0, dtype=int))
            break

        parents = segment.take(fire)
        k = parents.size
        tau_fire = tau[fire]
        u = np.clip((parents.threshold - parents.clock) / increment[fire], 0.0, 1.0)
        bridge_sd = np.sqrt(u * (1.0 - u) * tau_fire)
        x_birth = (
            parents.pos
            + u[:, None] * (x_end[fire] - parents.pos)
            + bridge_sd[:, None] * rng.standard_normal((k, dim))
        )

        twice = np.repeat(np.arange(k), 2)
        children = parents.take(twice)
        children.pos = x_birth[twice]
        children.g = field(children.pos)
        children.clock = np.zeros(2 * k)
        children.threshold = rng.exponential(1.0, 2 * k)
        if TRACK_RUN_MAX in children.extra:
            children.extra[TRACK_RUN_MAX] = np.maximum(
                children.extra[TRACK_RUN_MAX], children.pos @ direction
            )
        tau = (1.0 - u)[twice] * tau_fire[twice]
        segment = children

    if segment.size:
        logger.warning(f"{segment.size} particles still branching after the iteration limit")
        segment.pos = segment.pos + np.sqrt(tau)[:, None] * rng.standard_normal(segment.pos.shape)
        segment.g = field(segment.pos)
        segment.clock = np.minimum(segment.clock, np.nextafter(segment.threshold, 0.0))
        finished.append(segment)
    return _Population.concat(finished, pop)


def _thin(
    pop: _Population, cap: int, reps: int, rng: np.random.Generator, thinned: np.ndarray
) -> _Population:
    """Uniformly thin every replica above cap down to cap particles."""
    counts = np.bincount(pop.owner, minlength=reps)
    over = np.nonzero(counts > cap)[0]
    if over.size == 0:
        return pop
    order = np.argsort(pop.owner, kind="stable")
    pop = pop.take(order)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    keep = np.ones(pop.size, dtype=bool)
    for r in over:
        drop = rng.choice(counts[r], size=counts[r] - cap, replace=False)
        keep[starts[r] + drop] = False
        thinned[r] = True
    return pop.take(keep)


def _snapshot(pop: _Population, time: float, origins: np.ndarray, thinned: np.ndarray) -> EnsembleSnapshot:
    return EnsembleSnapshot(
        time=time,
        positions=pop.pos.copy(),
        clocks=pop.clock.copy(),
        thresholds=pop.threshold.copy(),
        owner=pop.owner.copy(),
        origins=origins,
        thinned=thinned.copy(),
        extras={key: value.copy() for key, value in pop.extra.items()},
    )


def _check_args(dt: float, cap: int, t_end: float, times: np.ndarray) -> None:
    if not 0.0 < dt <= SimulationConstants.MAX_DT:
        raise SimulationError(f"dt must lie in (0, {SimulationConstants.MAX_DT}], got {dt}")
    if cap < SimulationConstants.MIN_CAP:
        raise SimulationError(f"cap must be >= {SimulationConstants.MIN_CAP}, got {cap}")
    if times.size and (times.min() < 0.0 or times.max() > t_end + 1e-12):
        raise SimulationError(f"Snapshot times must lie in [0, {t_end}]")


@dataclass(frozen=True)
class _BlockTask:
    field: PeriodicField
    origins: np.ndarray
    times: tuple[float, ...]
    dt: float
    cap: int
    seed: int
    stream: int
    block: int
    track: tuple[str, ...]
    direction: np.ndarray | None
    reducer: Callable[..., Any] | None
    strict: bool
    reduce_all: bool
    lineage_T0: float | None = None


def _run_block(task: _BlockTask) -> list[Any]:
    rng = block_rng(task.seed, task.stream, task.block)
    reps = task.origins.shape[0]
    lineage = task.lineage_T0 is not None
    pop = _seed_population(task.field, task.origins, rng, task.track, task.direction, lineage)
    thinned = np.zeros(reps, dtype=bool)
    outputs: list[Any] = []
    now = 0.0
    boundary = task.lineage_T0 if lineage else np.inf
    for target in task.times:
        while target - now > 1e-12:
            h = min(task.dt, target - now, boundary - now)
            pop = _advance(pop, h, task.field, rng, task.direction)
            now = target if target - now <= h else now + h
            if boundary - now <= 1e-12:
                _relabel(pop, reps)
                boundary += task.lineage_T0
            pop = _thin(pop, task.cap, reps, rng, thinned)
            if task.strict and thinned.any():
                raise CapThinnedError(
                    f"Population exceeded cap={task.cap} by t={now:.3f} in block {task.block}"
                )
        snap = _snapshot(pop, target, task.origins, thinned)
        outputs.append(snap if task.reducer is None or task.reduce_all else task.reducer(snap))
    if task.reduce_all and task.reducer is not None:
        return [task.reducer(outputs)]
    return outputs


def _merge(parts: list[EnsembleSnapshot], origins: np.ndarray) -> EnsembleSnapshot:
    offsets = np.cumsum([0] + [p.reps for p in parts[:-1]])
    return EnsembleSnapshot(
        time=parts[0].time,
        positions=np.concatenate([p.positions for p in parts]),
        clocks=np.concatenate([p.clocks for p in parts]),
        thresholds=np.concatenate([p.thresholds for p in parts]),
        owner=np.concatenate([p.owner + off for p, off in zip(parts, offsets, strict=True)]),
        origins=origins,
        thinned=np.concatenate([p.thinned for p in parts]),
        extras={key: np.concatenate([p.extras[key] for p in parts]) for key in parts[0].extras},
    )


def simulate_ensemble(
    field: PeriodicField,
    origins,
    t_end: float,
    dt: float,
    cap: int,
    seed: int,
    snapshot_times=None,
    reps: int | None = None,
    stream: int = 0,
    track: Sequence[str] = (),
    direction=None,
    reducer: Callable[..., Any] | None = None,
    strict: bool = False,
    reduce_all: bool = False,
    threads: int = 1,
    lineage_T0: float | None = None,
) -> list[Any]:
    """
    Independent g-BBM replicas started from one particle each.

    Replicas are split into fixed blocks with their own random streams
    (seed, stream, block), so results do not depend on worker count.

    Args:
        field: Branching rate g
        origins: Start point(s); a single point is repeated reps times
        t_end: Final time
        dt: Euler step (<= 0.01)
        cap: Per-replica population cap (>= 1000); excess is thinned uniformly
        seed: Experiment seed
        snapshot_times: Times in [0, t_end] to record (default [t_end])
        reps: Replica count when a single origin is given
        stream: Estimator stream id
        track: Extra per-particle state: "run_max" (running max of x.direction), "anchor"
        direction: Unit vector for run_max
        reducer: Per-block snapshot reduction returning per-replica arrays
        strict: Raise CapThinnedError on any thinning
        reduce_all: Pass the reducer the list of all snapshots of a block at once
        threads: Worker processes
        lineage_T0: Window length for gen_id and ancestor_tag tracking (off when None)

    Returns:
        Merged EnsembleSnapshot per time, or concatenated reducer outputs per time
    """
    start = np.asarray(origins, dtype=float)
    if start.ndim <= 1:
        if field.dim == 1 and start.ndim == 1 and start.size > 1:
            start = start.reshape(-1, 1)
        else:
            start = np.tile(start.reshape(1, field.dim), (reps or 1, 1))
    if start.shape[1] != field.dim:
        raise SimulationError(f"Origins have dimension {start.shape[1]}, field has {field.dim}")
    times = np.sort(np.atleast_1d(np.asarray([t_end] if snapshot_times is None else snapshot_times, float)))
    _check_args(dt, cap, t_end, times)
    if lineage_T0 is not None and lineage_T0 <= 0.0:
        raise SimulationError(f"lineage_T0 must be positive, got {lineage_T0}")
    vec = None if direction is None else np.atleast_1d(np.asarray(direction, dtype=float))

    tasks = []
    first = 0
    for block, size in replica_blocks(start.shape[0], SimulationConstants.REPLICA_BLOCK):
        tasks.append(
            _BlockTask(
                field, start[first : first + size], tuple(times.tolist()), dt, cap, seed,
                stream, block, tuple(track), vec, reducer, strict, reduce_all, lineage_T0,
            )
        )
        first += size
    logger.debug(
        f"Simulating {start.shape[0]} replicas in {len(tasks)} blocks "
        f"(seed={seed}, stream={stream}, dt={dt}, cap={cap}, field={field.field_hash[:12]})"
    )
    per_block = run_blocks(_run_block, tasks, threads=threads)

    if reduce_all and reducer is not None:
        return [np.concatenate([np.atleast_1d(outputs[0]) for outputs in per_block])]
    merged = []
    for i in range(times.size):
        parts = [outputs[i] for outputs in per_block]
        if reducer is None:
            merged.append(_merge(parts, start))
        else:
            merged.append(np.concatenate([np.atleast_1d(p) for p in parts]))
    return merged


def simulate(
    field: PeriodicField,
    x0,
    t_end: float,
    dt: float,
    cap: int,
    seed: int,
    snapshot_times=None,
    lineage_T0: float | None = None,
) -> list[BBMSnapshot]:
    """Single g-BBM run from x0, recorded at snapshot_times (default [t_end])."""
    origin = np.atleast_1d(np.asarray(x0, dtype=float)).reshape(1, field.dim)
    snapshots = simulate_ensemble(field, origin, t_end, dt, cap, seed, snapshot_times, lineage_T0=lineage_T0)
    result = [snap.replica(0) for snap in snapshots]
    if result[-1].thinned:
        logger.warning(f"Run thinned at cap={cap}; counts after thinning are not unbiased")
    return result


def count_reducer(snapshot: EnsembleSnapshot) -> np.ndarray:
    """Per-replica (#N_t, thinned flag) pairs."""
    return np.column_stack([snapshot.counts, snapshot.thinned])


def max_projection_reducer(e: np.ndarray, snapshot: EnsembleSnapshot) -> np.ndarray:
    """Per-replica (M_t, M_t^-, #N_t, thinned) for direction e."""
    disp = snapshot.displacement(e)
    return np.column_stack(
        [
            snapshot.per_replica_max(disp),
            snapshot.per_replica_min(disp),
            snapshot.counts,
            snapshot.thinned,
        ]
    )


def projection_reducer(e) -> Callable[[EnsembleSnapshot], np.ndarray]:
    return partial(max_projection_reducer, np.atleast_1d(np.asarray(e, dtype=float)))


@dataclass(frozen=True)
class GenerationResult:
    """Embedded discrete-time branching process counts"""

    counts: np.ndarray  # (reps, n_max) members per generation
    member_capped: np.ndarray  # (reps,) whether member subsampling kicked in
    T0: float
    threshold: float

    @property
    def mean_offspring(self) -> float:
        return float(self.counts[:, 0].mean())

    @property
    def offspring_se(self) -> float:
        return float(self.counts[:, 0].std(ddof=1) / np.sqrt(self.counts.shape[0]))

    @property
    def survival_fraction(self) -> float:
        return float(np.mean(self.counts[:, -1] > 0))


@dataclass(frozen=True)
class _GenerationTask:
    field: PeriodicField
    origins: np.ndarray
    e: np.ndarray
    threshold: float
    T0: float
    n_max: int
    dt: float
    cap: int
    member_cap: int
    seed: int
    stream: int
    block: int


def _run_generation_block(task: _GenerationTask) -> tuple[np.ndarray, np.ndarray]:
    rng = block_rng(task.seed, task.stream, task.block)
    reps = task.origins.shape[0]
    pop = _seed_population(task.field, task.origins, rng, (TRACK_ANCHOR,), None)
    counts = np.zeros((reps, task.n_max), dtype=np.int64)
    capped = np.zeros(reps, dtype=bool)
    never = np.zeros(reps, dtype=bool)

    for n in range(task.n_max):
        elapsed = 0.0
        while task.T0 - elapsed > 1e-12:
            h = min(task.dt, task.T0 - elapsed)
            pop = _advance(pop, h, task.field, rng)
            elapsed = task.T0 if task.T0 - elapsed <= task.dt else elapsed + h
            if np.bincount(pop.owner, minlength=reps).max(initial=0) > task.cap:
                raise CapThinnedError(
                    f"Generation process exceeded cap={task.cap}; lower T0 or member_cap"
                )
        advance = (pop.pos - pop.extra[TRACK_ANCHOR]) @ task.e
        members = advance >= task.threshold
        pop = pop.take(members)
        counts[:, n] = np.bincount(pop.owner, minlength=reps)
        # survival is monotone in the member set, so subsampling keeps a lower bound
        pop = _thin(pop, task.member_cap, reps, rng, capped if n else never)
        pop.extra[TRACK_ANCHOR] = pop.pos.copy()
        if pop.size == 0:
            break
    return counts, capped


def generation_counts(
    field: PeriodicField,
    e,
    epsilon: float,
    T0: float,
    c_star: float,
    n_max: int,
    origins,
    dt: float,
    cap: int,
    seed: int,
    member_cap: int = SimulationConstants.MEMBER_CAP,
    stream: int = 0,
    threads: int = 1,
) -> GenerationResult:
    """
    Members of the embedded generations: particles whose displacement in
    direction e over their window of length T0 is at least (1 - eps) c* T0,
    counted only among descendants of the previous generation's members.

    Generation 1 is counted exactly; later generations descend from at most
    member_cap members per replica.
    """
    if not 1 <= n_max <= SimulationConstants.GENERATION_MAX:
        raise SimulationError(f"n_max must lie in [1, {SimulationConstants.GENERATION_MAX}]")
    direction = np.atleast_1d(np.asarray(e, dtype=float))
    start = np.atleast_2d(np.asarray(origins, dtype=float)).reshape(-1, field.dim)
    threshold = (1.0 - epsilon) * c_star * T0
    tasks = []
    first = 0
    for block, size in replica_blocks(start.shape[0], SimulationConstants.REPLICA_BLOCK):
        tasks.append(
            _GenerationTask(
                field, start[first : first + size], direction, threshold, T0, n_max, dt, cap,
                member_cap, seed, stream, block,
            )
        )
        first += size
    results = run_blocks(_run_generation_block, tasks, threads=threads)
    counts = np.concatenate([c for c, _ in results])
    capped = np.concatenate([m for _, m in results])
    return GenerationResult(counts, capped, T0, threshold)
