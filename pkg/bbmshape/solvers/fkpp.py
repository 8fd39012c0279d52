"""
1-D F-KPP solver: dq/dt = 1/2 q'' + g(x) (q - q^2)

Explicit central differences for the diffusion and explicit Euler for the
reaction, Dirichlet values taken from the initial data at both ends. The
front position is the 1/2-level set, tracked in the direction the front
moves.
"""

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from functools import partial

import numba
import numpy as np

from bbmshape.constants import FkppConstants, SimulationConstants
from bbmshape.exceptions import (
    CflViolationError,
    DomainTooSmallError,
    FkppError,
    NotLinearError,
)
from bbmshape.models.field import PeriodicField
from bbmshape.simulation.bbm import simulate_ensemble

logger = logging.getLogger(__name__)

INIT_HEAVISIDE = "heaviside"
INIT_BUMP = "compact-bump"
INIT_IDS = (INIT_HEAVISIDE, INIT_BUMP)

F_HALFSPACE = "halfspace"
F_SIGMOID = "sigmoid"
F_ONE = "one"
F_ZERO = "zero"
F_IDS = (F_HALFSPACE, F_SIGMOID, F_ONE, F_ZERO)


@numba.jit(nopython=True, cache=True)
def _advance(q: np.ndarray, g: np.ndarray, dt: float, dx: float, steps: int) -> np.ndarray:
    """steps explicit updates of q with fixed end values."""
    n = q.size
    coef = 0.5 * dt / (dx * dx)
    current = q.copy()
    scratch = q.copy()
    for _ in range(steps):
        for i in range(1, n - 1):
            qi = current[i]
            scratch[i] = (
                qi
                + coef * (current[i + 1] - 2.0 * qi + current[i - 1])
                + dt * g[i] * qi * (1.0 - qi)
            )
        scratch[0] = current[0]
        scratch[n - 1] = current[n - 1]
        current, scratch = scratch, current
    return current


@dataclass(frozen=True, eq=False)
class FkppRun:
    """Frames of one F-KPP solve on [-L, L]"""

    field: PeriodicField
    L: float
    dx: float
    dt: float
    x: np.ndarray
    times: np.ndarray
    frames: np.ndarray  # (F, n)
    level_positions: np.ndarray  # (F,) nan where no 1/2-level exists
    direction: int
    init_id: str
    monotone_violations: int

    def q_at(self, x, frame: int = -1) -> np.ndarray:
        return np.interp(np.asarray(x, dtype=float), self.x, self.frames[frame])

    def columns(self) -> list[str]:
        return ["t", "level_position"]

    def to_rows(self) -> list[list[float]]:
        return [[t, p] for t, p in zip(self.times, self.level_positions, strict=True)]


def _initial_profile(init_id: str, x: np.ndarray, direction: int) -> np.ndarray:
    s = direction * x
    if init_id == INIT_HEAVISIDE:
        # q = 1 behind the front; the node on the jump takes the midpoint value
        return np.where(s < 0.0, 1.0, np.where(s > 0.0, 0.0, 0.5))
    if init_id == INIT_BUMP:
        return np.where(np.abs(x) < 1.0, 1.0, np.where(np.abs(x) > 1.0, 0.0, 0.5))
    raise FkppError(f"Unknown initial data '{init_id}' (choose from {', '.join(INIT_IDS)})")


def _level_position(x: np.ndarray, q: np.ndarray, direction: int) -> float:
    """Outermost crossing of q = 1/2 in the front direction, linearly interpolated."""
    above = np.nonzero(q >= 0.5)[0]
    if above.size == 0:
        return math.nan
    if direction > 0:
        i = int(above[-1])
        if i == x.size - 1:
            return float(x[i])
        j = i + 1
    else:
        i = int(above[0])
        if i == 0:
            return float(x[0])
        j = i - 1
    # q[i] >= 1/2 > q[j]
    weight = (q[i] - 0.5) / (q[i] - q[j])
    return float(x[i] + weight * (x[j] - x[i]))


def _is_monotone(q0: np.ndarray, direction: int) -> bool:
    return bool(np.all(direction * np.diff(q0) <= 0.0))


def _monotone_breaks(q: np.ndarray, direction: int, period_steps: int, constant: bool) -> int:
    """Grid points where q grows in the front direction under a one-period shift."""
    oriented = q if direction > 0 else q[::-1]
    breaks = 0
    if period_steps:
        shifted = oriented[period_steps:] - oriented[:-period_steps]
        breaks += int(np.count_nonzero(shifted > FkppConstants.MONOTONE_TOL))
    if constant:
        breaks += int(np.count_nonzero(np.diff(oriented) > FkppConstants.MONOTONE_TOL))
    return breaks


def solve_fkpp(
    field: PeriodicField,
    init_id: str,
    L: float,
    dx: float,
    dt: float,
    t_end: float,
    front_direction: int = 1,
    q0: np.ndarray | Callable[[np.ndarray], np.ndarray] | None = None,
    frame_every: float = FkppConstants.FRAME_EVERY,
    c_star: float | None = None,
    track_level: bool = True,
) -> FkppRun:
    """
    Integrate the F-KPP equation on [-L, L] up to t_end.

    Args:
        field: Environment (d=1)
        init_id: "heaviside" (q=1 behind the front) or "compact-bump"
        L: Domain half-width
        dx: Grid spacing
        dt: Time step, at most dx^2/2
        t_end: Final time
        front_direction: +1 for a front moving right, -1 for the mirrored setup
        q0: Initial data overriding init_id (array on the grid or callable)
        frame_every: Time between stored frames
        c_star: Front speed; when given, L >= c* t_end + 10 is enforced upfront
        track_level: Raise DomainTooSmallError when the 1/2-level nears the far boundary

    Raises:
        CflViolationError: dt above dx^2/2
        DomainTooSmallError: Front within 5 units of the boundary it moves to
    """
    if field.dim != 1:
        raise FkppError(f"The F-KPP solver is one-dimensional, got d={field.dim}")
    if front_direction not in (1, -1):
        raise FkppError(f"front_direction must be +1 or -1, got {front_direction}")
    if dx <= 0.0 or dt <= 0.0 or t_end <= 0.0:
        raise FkppError("dx, dt and t_end must be positive")
    if dt > 0.5 * dx * dx + 1e-15:
        raise CflViolationError(f"dt={dt:g} exceeds dx^2/2={0.5 * dx * dx:g}")
    if c_star is not None and L < c_star * t_end + 10.0:
        raise DomainTooSmallError(f"L={L:g} is below c* t_end + 10 = {c_star * t_end + 10.0:g}")

    x = np.arange(-L, L + 0.5 * dx, dx)
    if q0 is None:
        q = _initial_profile(init_id, x, front_direction)
    elif callable(q0):
        q = np.asarray(q0(x), dtype=float)
    else:
        q = np.asarray(q0, dtype=float).copy()
    if q.shape != x.shape:
        raise FkppError(f"Initial data has shape {q.shape}, grid has {x.shape}")
    if q.min() < 0.0 or q.max() > 1.0:
        raise FkppError("Initial data must take values in [0, 1]")
    g = np.ascontiguousarray(field(x), dtype=float)

    total_steps = math.ceil(t_end / dt - 1e-9)
    step = t_end / total_steps
    stride = max(1, round(frame_every / step))
    monotone = _is_monotone(q, front_direction)
    # integer shifts by one period exist only when 1/dx is an integer
    period_steps = round(1.0 / dx) if abs(1.0 / dx - round(1.0 / dx)) < 1e-6 else 0

    times = [0.0]
    frames = [q.copy()]
    levels = [_level_position(x, q, front_direction)]
    violations = 0
    done = 0
    while done < total_steps:
        steps = min(stride, total_steps - done)
        q = _advance(q, g, step, dx, steps)
        done += steps
        now = done * step
        if q.min() < -FkppConstants.BOUNDS_TOL or q.max() > 1.0 + FkppConstants.BOUNDS_TOL:
            raise FkppError(f"q left [0, 1] at t={now:.3f} (min {q.min():.3g}, max {q.max():.3g})")
        level = _level_position(x, q, front_direction)
        if track_level and not math.isnan(level) and front_direction * level > L - FkppConstants.BOUNDARY_LAYER:
            raise DomainTooSmallError(
                f"1/2-level at {level:.2f} reached the boundary layer of [-{L:g}, {L:g}] at t={now:.2f}"
            )
        if monotone:
            violations += _monotone_breaks(q, front_direction, period_steps, field.is_constant)
        times.append(now)
        frames.append(q.copy())
        levels.append(level)

    if violations:
        logger.warning(f"Front monotonicity broken at {violations} grid points across frames")
    logger.debug(f"F-KPP solve: {x.size} nodes, {total_steps} steps of {step:.3g}, {len(frames)} frames")
    return FkppRun(
        field, float(L), float(dx), float(step), x, np.array(times), np.array(frames), np.array(levels),
        int(front_direction), init_id if q0 is None else "custom", violations,
    )


@dataclass(frozen=True)
class FrontSpeed:
    speed: float
    intercept: float
    r_squared: float
    log_corrected: float  # c in x(t) = c t + a log t + b
    log_coefficient: float
    frames_used: int
    c_star: float | None = None
    ahead_max: float | None = None  # max q beyond (1 + eps) c* t
    behind_max: float | None = None  # max (1 - q) within (1 - eps) c* t

    @property
    def relative_error(self) -> float | None:
        if self.c_star is None:
            return None
        return abs(self.speed - self.c_star) / self.c_star

    @property
    def tails_ok(self) -> bool | None:
        if self.ahead_max is None or self.behind_max is None:
            return None
        return self.ahead_max < FkppConstants.TAIL_THRESHOLD and self.behind_max < FkppConstants.TAIL_THRESHOLD

    def columns(self) -> list[str]:
        return ["speed", "r_squared", "log_corrected", "log_coefficient", "c_star", "relative_error", "ahead_max", "behind_max"]

    def to_rows(self) -> list[list]:
        return [
            [
                self.speed, self.r_squared, self.log_corrected, self.log_coefficient, self.c_star,
                self.relative_error, self.ahead_max, self.behind_max,
            ]
        ]


def front_speed_estimate(
    run: FkppRun,
    c_star: float | None = None,
    epsilon: float = FkppConstants.TAIL_EPSILON,
    fit_from: float | None = None,
) -> FrontSpeed:
    """
    Least-squares slope of the 1/2-level position over the last half of the run.

    With c_star, also measures max q beyond (1 + eps) c* t and max (1 - q)
    within (1 - eps) c* t at the final frame.

    Raises:
        NotLinearError: R^2 below 0.99
    """
    start = 0.5 * run.times[-1] if fit_from is None else fit_from
    use = (run.times >= start) & np.isfinite(run.level_positions) & (run.times > 0.0)
    if use.sum() < FkppConstants.MIN_FRAMES:
        raise FkppError(f"Only {int(use.sum())} frames in the fit window; need {FkppConstants.MIN_FRAMES}")
    t = run.times[use]
    s = run.direction * run.level_positions[use]
    slope, intercept = np.polyfit(t, s, 1)
    residual = s - (slope * t + intercept)
    spread = np.sum((s - s.mean()) ** 2)
    r_squared = 1.0 - float(np.sum(residual**2) / spread) if spread > 0.0 else 0.0
    if r_squared < FkppConstants.MIN_R_SQUARED:
        raise NotLinearError(f"Level position is not linear in t (R^2={r_squared:.4f})")
    design = np.column_stack([t, np.log(t), np.ones_like(t)])
    (log_speed, log_coefficient, _), *_ = np.linalg.lstsq(design, s, rcond=None)

    ahead = behind = None
    if c_star is not None:
        final_t = float(run.times[-1])
        oriented = run.direction * run.x
        q_final = run.frames[-1]
        ahead_zone = oriented >= (1.0 + epsilon) * c_star * final_t
        behind_zone = np.abs(oriented) <= (1.0 - epsilon) * c_star * final_t
        ahead = float(q_final[ahead_zone].max()) if ahead_zone.any() else 0.0
        behind = float((1.0 - q_final[behind_zone]).max()) if behind_zone.any() else 0.0

    result = FrontSpeed(
        float(slope), float(intercept), r_squared, float(log_speed), float(log_coefficient), int(use.sum()),
        c_star, ahead, behind,
    )
    message = f"Front speed {result.speed:.5f} (R^2={r_squared:.5f}, log-corrected {result.log_corrected:.5f})"
    if c_star is not None:
        message += f" vs c*={c_star:.5f}: {100 * result.relative_error:.2f}%"
    logger.info(message)
    return result


def initial_functional(f_id: str, y: np.ndarray) -> np.ndarray:
    """f in the product E[prod f(X_t(v))]; values in [0, 1]."""
    if f_id == F_HALFSPACE:
        return (y <= 0.0).astype(float)
    if f_id == F_SIGMOID:
        return 0.5 * (1.0 - np.tanh(0.5 * y / FkppConstants.SIGMOID_WIDTH))
    if f_id == F_ONE:
        return np.ones_like(y, dtype=float)
    if f_id == F_ZERO:
        return np.zeros_like(y, dtype=float)
    raise FkppError(f"Unknown functional '{f_id}' (choose from {', '.join(F_IDS)})")


def _pde_initial_data(f_id: str, x: np.ndarray) -> np.ndarray:
    q0 = 1.0 - initial_functional(f_id, x)
    if f_id == F_HALFSPACE:
        q0[x == 0.0] = 0.5
    return q0


def _product_reducer(f_id: str, snapshot) -> np.ndarray:
    values = initial_functional(f_id, snapshot.positions[:, 0])
    with np.errstate(divide="ignore"):
        logs = np.log(values)
    totals = snapshot.per_replica_sum(np.where(values > 0.0, logs, 0.0))
    zero_hits = snapshot.per_replica_sum((values <= 0.0).astype(float))
    return np.where(zero_hits > 0.0, 0.0, np.exp(totals))


@dataclass(frozen=True)
class McKeanTable:
    f_id: str
    t: float
    probes: np.ndarray
    pde_q: np.ndarray
    mc_q: np.ndarray
    mc_se: np.ndarray

    @property
    def z(self) -> np.ndarray:
        gap = self.mc_q - self.pde_q
        with np.errstate(divide="ignore", invalid="ignore"):
            scores = gap / self.mc_se
        return np.where(self.mc_se > 0.0, scores, np.where(np.abs(gap) < 1e-12, 0.0, np.inf))

    def passed(self, z_max: float = 3.0) -> bool:
        return bool(np.all(np.abs(self.z) <= z_max))

    def columns(self) -> list[str]:
        return ["x", "pde_q", "mc_q", "mc_se", "z"]

    def to_rows(self) -> list[list[float]]:
        return [list(row) for row in zip(self.probes, self.pde_q, self.mc_q, self.mc_se, self.z, strict=True)]


def mckean_check(
    field: PeriodicField,
    f_id: str,
    t: float,
    reps: int,
    seed: int,
    x_probes: Sequence[float],
    dx: float = 0.05,
    bbm_dt: float = SimulationConstants.MAX_DT,
    cap: int = SimulationConstants.DEFAULT_CAP,
    threads: int = 1,
) -> McKeanTable:
    """
    q(t, x) = 1 - E_x[prod over v in N_t of f(X_t(v))] from particles
    against the F-KPP solution with q0 = 1 - f.

    Raises:
        CapThinnedError: If a replica hit the cap (the product needs every particle)
    """
    if t > SimulationConstants.MANY_TO_ONE_MAX_T:
        raise FkppError(f"McKean check needs t <= {SimulationConstants.MANY_TO_ONE_MAX_T}")
    initial_functional(f_id, np.zeros(1))
    probes = np.asarray(x_probes, dtype=float)
    L = float(np.max(np.abs(probes))) + 8.0 * t + 15.0
    run = solve_fkpp(
        field, INIT_HEAVISIDE, L, dx, 0.5 * dx * dx, t, q0=partial(_pde_initial_data, f_id), track_level=False
    )
    pde_q = run.q_at(probes)

    mc_q, mc_se = [], []
    for i, x in enumerate(probes):
        (products,) = simulate_ensemble(
            field, np.array([x]), t, bbm_dt, cap, seed, reps=reps, stream=31 + i,
            reducer=partial(_product_reducer, f_id), strict=True, threads=threads,
        )
        mc_q.append(1.0 - float(products.mean()))
        mc_se.append(float(products.std(ddof=1) / math.sqrt(products.size)))
    table = McKeanTable(f_id, t, probes, pde_q, np.array(mc_q), np.array(mc_se))
    logger.info(f"McKean {f_id} at t={t:g}: max |z| = {float(np.max(np.abs(table.z))):.2f}")
    return table
