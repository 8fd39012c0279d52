"""
verify-all: the acceptance suite

Each criterion runs at desk scale on a fixed reference field and reports a
value, a pass flag and a one-line detail. Results go to acceptance.csv; the
tables behind each criterion are written next to it.
"""

import logging
import math
import time
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from bbmshape.cli.artifacts import RunRecord
from bbmshape.cli_strings import CliStrings
from bbmshape.constants import AcceptanceConstants, SimulationConstants, SpeedConstants, WulffConstants
from bbmshape.exceptions import BBMShapeError, ConfigValidationError
from bbmshape.models.config_manager import ExperimentConfig
from bbmshape.models.field import PeriodicField, field_extrema, make_trig_field
from bbmshape.simulation.brownian import FunctionalKind
from bbmshape.simulation.estimators import (
    branching_time_tail,
    ergodic_check,
    generation_process,
    halfspace_lower_stat,
    halfspace_upper_stat,
    kernel_condition_check,
    many_to_one_check,
    shape_error,
    verified_window,
)
from bbmshape.simulation.tilted import (
    change_of_measure_check,
    cumulant_from_ensemble,
    ldp_tail_check,
    lln_check,
    simulate_tilted,
)
from bbmshape.solvers.fkpp import INIT_HEAVISIDE, front_speed_estimate, solve_fkpp
from bbmshape.solvers.spectral import cumulant_limit, first_axis, principal_eigen
from bbmshape.solvers.speed import (
    find_lambda_e,
    growth_exponent,
    propI_small_kappa_check,
    rate_at,
    rate_function,
    speed_profile,
)
from bbmshape.solvers.wulff import approx_inner, approx_outer, build_wulff, certificate_trials
from bbmshape.utils import second_differences

logger = logging.getLogger(__name__)

LAMBDA_GRID = np.arange(0.0, 4.0 + 1e-9, 0.5)
HALFSPACE_EPSILON = 0.3
UPPER_TIMES = (1.0, 2.0, 3.0, 4.0)
LOWER_TIMES = (4.0, 8.0, 12.0)
TILTED_HORIZON = 50.0
TILTED_RECORD_TIMES = (5.0, 10.0, 20.0, 50.0)
TILTED_REPS = 10_000
CUMULANT_ETAS = (-0.3, 0.3)
ERGODIC_TIMES = (5.0, 10.0, 20.0, 40.0)
ERGODIC_SLOPE_RANGE = (-1.3, -0.8)
TAIL_RELATIVE_TOL = 0.1
LDP_TIMES = (1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0)
FKPP_HORIZON = 100.0
FKPP_DX = 0.05


@dataclass(frozen=True)
class Outcome:
    passed: bool
    value: float | str
    detail: str


@dataclass(frozen=True)
class CriterionResult:
    criterion: str
    reference: str
    passed: bool
    value: float | str
    detail: str
    seconds: float


@dataclass
class SuiteContext:
    record: RunRecord
    seed: int
    threads: int
    tilted_cache: dict | None = None

    def table(self, criterion: str, name: str, table) -> None:
        self.record.table(f"{criterion}_{name}.csv", table)


def cosine_field() -> PeriodicField:
    """g(x) = 1 + 0.5 cos(2 pi x) on the line."""
    return make_trig_field(1, [((1,), 0.5)], 1.0)


def laminate_field() -> PeriodicField:
    """g(x) = 1 + 0.5 cos(2 pi x_1) in the plane."""
    return make_trig_field(2, [((1, 0), 0.5)], 1.0)


def mixed_field() -> PeriodicField:
    return make_trig_field(2, [((1, 0), 0.3), ((1, 1), 0.2, 0.7), ((0, 2), 0.1)], 1.2)


def homogeneous_field(dim: int, beta: float = 1.0) -> PeriodicField:
    return make_trig_field(dim, [], beta)


def _tilted_run(ctx: SuiteContext) -> dict:
    """Cosine-field tilted ensemble shared by the LLN and cumulant criteria."""
    if ctx.tilted_cache is None:
        field = cosine_field()
        e = first_axis(1)
        solution = find_lambda_e(field, e)
        ensemble = simulate_tilted(
            field, e, solution.lambda_e, np.zeros(1), TILTED_HORIZON, 0.005, TILTED_REPS, ctx.seed,
            TILTED_RECORD_TIMES, threads=ctx.threads,
        )
        ctx.tilted_cache = {"field": field, "e": e, "solution": solution, "ensemble": ensemble}
    return ctx.tilted_cache


def check_homogeneous(ctx: SuiteContext) -> Outcome:
    worst_gamma = worst_speed = 0.0
    for beta in AcceptanceConstants.HOMOGENEOUS_RATES:
        field = homogeneous_field(1, beta)
        e = first_axis(1)
        for lam in LAMBDA_GRID:
            gamma = principal_eigen(field, e, float(lam)).gamma
            worst_gamma = max(worst_gamma, abs(gamma - (beta + 0.5 * lam**2)))
        solution = find_lambda_e(field, e)
        exact = math.sqrt(2.0 * beta)
        worst_speed = max(worst_speed, abs(solution.lambda_e - exact), abs(solution.c_star - exact))
    passed = worst_gamma <= 1e-8 and worst_speed <= 1e-6
    return Outcome(passed, worst_gamma, f"max |gamma error| {worst_gamma:.2e}, max |lambda_e/c* error| {worst_speed:.2e}")


def check_eigen_bounds(ctx: SuiteContext) -> Outcome:
    rows = []
    ok = True
    for name, field in (("cosine", cosine_field()), ("laminate", laminate_field()), ("mixed", mixed_field())):
        low, high = field_extrema(field)
        e = first_axis(field.dim) if name != "mixed" else np.array([0.6, 0.8])
        gammas = np.array([principal_eigen(field, e, float(lam)).gamma for lam in LAMBDA_GRID])
        lower = low + 0.5 * LAMBDA_GRID**2
        upper = high + 0.5 * LAMBDA_GRID**2
        bounds = bool(np.all(gammas >= lower - 1e-8) and np.all(gammas <= upper + 1e-8))
        convex = bool(np.all(second_differences(LAMBDA_GRID, gammas) > 0.0))
        ok = ok and bounds and convex
        rows.extend([name, lam, g, lo, hi] for lam, g, lo, hi in zip(LAMBDA_GRID, gammas, lower, upper, strict=True))
    ctx.record.csv("eigen_bounds_gamma.csv", ["field", "lambda", "gamma", "lower_bound", "upper_bound"], rows)
    return Outcome(ok, len(rows), "bounds and strict convexity on 3 fields x 9 lambdas")


def check_speed_bound(ctx: SuiteContext) -> Outcome:
    field = laminate_field()
    profile = speed_profile(field, 64, threads=ctx.threads)
    ctx.table("speed_bound", "profile", profile)
    bound = math.sqrt(2.0 * field.mean)
    c_min = float(profile.c_star.min())
    return Outcome(c_min >= bound - SpeedConstants.BOUND_TOL, c_min, f"min c* {c_min:.6f} vs sqrt(2 gbar) {bound:.6f}")


def check_fkpp_speed(ctx: SuiteContext) -> Outcome:
    field = cosine_field()
    worst = 0.0
    details = []
    for direction in (1, -1):
        c_star = find_lambda_e(field, [-float(direction)]).c_star
        run = solve_fkpp(
            field, INIT_HEAVISIDE, c_star * FKPP_HORIZON + 20.0, FKPP_DX, 0.4 * FKPP_DX**2, FKPP_HORIZON,
            front_direction=direction, c_star=c_star,
        )
        estimate = front_speed_estimate(run, c_star=c_star)
        ctx.table("fkpp_speed", "plus" if direction > 0 else "minus", estimate)
        worst = max(worst, estimate.relative_error)
        details.append(f"{direction:+d}: {estimate.speed:.4f} vs {c_star:.4f}")
    return Outcome(worst <= AcceptanceConstants.SPEED_RELATIVE_TOL, worst, "; ".join(details))


def check_rate_function(ctx: SuiteContext) -> Outcome:
    field = cosine_field()
    e = first_axis(1)
    solution = find_lambda_e(field, e)
    # raises NotConvexError when the tabulated I_e is not convex
    rates = rate_function(field, e, solution=solution, threads=ctx.threads)
    ctx.record.csv("rate_function_table.csv", ["zeta", "rate"], zip(rates.zeta_grid, rates.values, strict=True))
    at_c_star = rate_at(field, e, solution.c_star, solution)
    epsilon = propI_small_kappa_check(field, e, 0.5 * solution.gamma_e, solution)
    if epsilon is None:
        return Outcome(False, at_c_star, "no deviation threshold found for beta = gamma/2")
    exponents = [growth_exponent(field, e, epsilon, alpha, solution) for alpha in SpeedConstants.GROWTH_ALPHAS]
    passed = at_c_star <= 1e-8 and all(x > 0.0 for x in exponents)
    return Outcome(passed, at_c_star, f"eps={epsilon:g}, growth exponents {np.round(exponents, 6).tolist()}")


def check_oracles(ctx: SuiteContext) -> Outcome:
    field = cosine_field()
    e = first_axis(1)
    solution = find_lambda_e(field, e)
    reps = SimulationConstants.MIN_TAIL_REPS
    checks = []
    for kind in FunctionalKind:
        checks.append(many_to_one_check(field, kind.value, 2.0, reps, ctx.seed, level=1.0, threads=ctx.threads))
        checks.append(
            change_of_measure_check(
                field, e, solution.lambda_e, kind.value, 2.0, reps, ctx.seed, level=1.0, threads=ctx.threads
            )
        )
    ctx.record.csv("oracles_z.csv", checks[0].columns(), [row for c in checks for row in c.to_rows()])
    worst = max(abs(c.z) for c in checks)
    return Outcome(worst <= AcceptanceConstants.Z_MAX, worst, f"{len(checks)} checks, max |z| {worst:.2f}")


def check_tilted_lln(ctx: SuiteContext) -> Outcome:
    run = _tilted_run(ctx)
    lln = lln_check(run["ensemble"], run["solution"].c_star)
    ctx.table("tilted_lln", "means", lln)
    passed = abs(lln.z_final) <= AcceptanceConstants.Z_MAX
    return Outcome(passed, float(lln.means[-1]), f"c*={lln.c_star:.5f}, z={lln.z_final:.2f}")


def check_cumulant(ctx: SuiteContext) -> Outcome:
    run = _tilted_run(ctx)
    estimates = [
        cumulant_from_ensemble(
            run["ensemble"], eta, cumulant_limit(run["field"], run["e"], eta, run["solution"].lambda_e)
        )
        for eta in CUMULANT_ETAS
    ]
    ctx.record.csv("cumulant_estimates.csv", estimates[0].columns(), [row for c in estimates for row in c.to_rows()])
    worst = max(abs(c.z) for c in estimates)
    return Outcome(worst <= AcceptanceConstants.Z_MAX, worst, f"z per eta {[round(c.z, 2) for c in estimates]}")


def check_ldp_tail(ctx: SuiteContext) -> Outcome:
    field = homogeneous_field(1, 1.0)
    interval = (1.9 * math.sqrt(2.0), math.inf)
    table = ldp_tail_check(field, first_axis(1), interval, LDP_TIMES, 100_000, ctx.seed, threads=ctx.threads)
    ctx.table("ldp_tail", "exponents", table)
    value = table.final_exponent
    return Outcome(table.passed, value, f"exponent {value:.4f} vs rate {table.reference:.4f}")


def _strictly_decreasing_to_zero(values: np.ndarray) -> bool:
    """Strictly decreasing while positive; zeros may repeat once reached."""
    steps = zip(values[:-1], values[1:], strict=True)
    return all(b < a or a == b == 0.0 for a, b in steps)


def check_halfspace(ctx: SuiteContext) -> Outcome:
    field = cosine_field()
    e = first_axis(1)
    solution = find_lambda_e(field, e)
    upper = halfspace_upper_stat(
        field, e, HALFSPACE_EPSILON, UPPER_TIMES, 4000, ctx.seed, solution=solution, threads=ctx.threads
    )
    lower = halfspace_lower_stat(
        field, e, HALFSPACE_EPSILON, LOWER_TIMES, SimulationConstants.MIN_HALFSPACE_REPS,
        ctx.seed, cap=5000, solution=solution, policy="conservative", threads=ctx.threads,
    )
    ctx.table("halfspace", "upper", upper)
    ctx.table("halfspace", "lower", lower)
    ratio = upper.slope / upper.reference_exponent if upper.reference_exponent != 0.0 else math.nan
    upper_ok = upper.slope < 0.0 and 0.5 <= ratio <= 2.0
    lower_ok = _strictly_decreasing_to_zero(lower.probabilities) and lower.probabilities[-1] <= 0.1
    detail = (
        f"upper slope {upper.slope:.4f} vs {upper.reference_exponent:.4f}; "
        f"lower {np.round(lower.probabilities, 4).tolist()}"
    )
    return Outcome(upper_ok and lower_ok, upper.slope, detail)


def check_embedded_process(ctx: SuiteContext) -> Outcome:
    field = cosine_field()
    e = first_axis(1)
    solution = find_lambda_e(field, e)
    T0 = verified_window(field, e, HALFSPACE_EPSILON, seed=ctx.seed, solution=solution, threads=ctx.threads)
    kernel = kernel_condition_check(field, e, HALFSPACE_EPSILON, T0, 500, ctx.seed, solution=solution, threads=ctx.threads)
    generations = generation_process(
        field, e, HALFSPACE_EPSILON, T0, 5, 200, ctx.seed, solution=solution, threads=ctx.threads
    )
    ctx.table("embedded_process", "kernel", kernel)
    ctx.table("embedded_process", "generations", generations)
    passed = kernel.passed and generations.survival > AcceptanceConstants.SURVIVAL_MIN
    return Outcome(
        passed,
        generations.survival,
        f"T0={T0:g}, min mean offspring {kernel.means.min():.3f}, survival {generations.survival:.3f}",
    )


def check_shape(ctx: SuiteContext) -> Outcome:
    medians = {}
    decreasing = True
    for name, field in (("homogeneous", homogeneous_field(2)), ("laminate", laminate_field())):
        profile = speed_profile(field, 64, threads=ctx.threads)
        table = shape_error(
            field, profile, AcceptanceConstants.SHAPE_TIMES, 50, SimulationConstants.SHAPE_MIN_CAP, ctx.seed,
            threads=ctx.threads,
        )
        ctx.table("shape", name, table)
        medians[name] = np.round(table.medians, 4).tolist()
        decreasing = decreasing and table.decreasing
    final = medians["homogeneous"][-1]
    passed = decreasing and final <= AcceptanceConstants.SHAPE_HOMOGENEOUS_MAX
    return Outcome(passed, final, f"medians {medians}")


def check_certificates(ctx: SuiteContext) -> Outcome:
    shape = build_wulff(speed_profile(laminate_field(), 64, threads=ctx.threads))
    rows = []
    ok = True
    for i, epsilon in enumerate((0.1, 0.2)):
        outer = approx_outer(shape, epsilon, WulffConstants.COVER_SAMPLES)
        trials = certificate_trials(shape, approx_inner(shape, epsilon), n_trials=50, seed=ctx.seed + i)
        rows.append([epsilon, outer.directions.shape[0], outer.samples_checked, trials.trials, trials.contained])
        ok = ok and trials.passed
    ctx.record.csv(
        "certificates_summary.csv", ["epsilon", "outer_directions", "cover_samples", "trials", "contained"], rows
    )
    return Outcome(ok, sum(r[4] for r in rows), "outer covers verified, inner trials all contained" if ok else str(rows))


def check_branching_tail(ctx: SuiteContext) -> Outcome:
    tail = branching_time_tail(cosine_field(), None, np.linspace(2.0, 6.0, 9), 100_000, ctx.seed, threads=ctx.threads)
    ctx.table("branching_tail", "survival", tail)
    return Outcome(
        tail.relative_error <= TAIL_RELATIVE_TOL,
        tail.fitted_rate,
        f"fitted {tail.fitted_rate:.4f} vs Theta {tail.decay_rate:.4f}",
    )


def check_ergodic(ctx: SuiteContext) -> Outcome:
    table = ergodic_check(cosine_field(), ERGODIC_TIMES, SimulationConstants.MIN_TAIL_REPS, ctx.seed, threads=ctx.threads)
    ctx.table("ergodic", "variances", table)
    lo, hi = ERGODIC_SLOPE_RANGE
    return Outcome(lo <= table.slope <= hi, table.slope, f"variance slope {table.slope:.3f}")


Check = Callable[[SuiteContext], Outcome]

# name -> (reference, check), in reporting order
CRITERIA: dict[str, tuple[str, Check]] = {
    "homogeneous_exactness": ("gamma = beta + lambda^2/2; lambda_e = c* = sqrt(2 beta)", check_homogeneous),
    "eigenvalue_bounds": ("min g + lambda^2/2 <= gamma <= max g + lambda^2/2; convex", check_eigen_bounds),
    "speed_lower_bound": ("c*(e) >= sqrt(2 mean g)", check_speed_bound),
    "fkpp_front_speed": ("|front speed - c*| / c* <= 0.02", check_fkpp_speed),
    "rate_function": ("I_e(c*) = 0; growth exponents > 0", check_rate_function),
    "many_to_one_change_of_measure": ("|z| <= 3", check_oracles),
    "tilted_lln": ("mean Y_hat_50 = c*", check_tilted_lln),
    "empirical_cumulant": ("Lambda(eta) within 3 SE", check_cumulant),
    "ldp_tail": ("exponent = 0.81 +- 40%", check_ldp_tail),
    "halfspace_decay": ("upper slope ~ -eps gamma; lower decreasing, <= 0.1", check_halfspace),
    "embedded_process": ("mean offspring > 1; survival > 0.2", check_embedded_process),
    "shape_convergence": ("median Hausdorff decreasing; <= 0.25 at t=12", check_shape),
    "wulff_certificates": ("outer cover and inner containment", check_certificates),
    "branching_tail": ("fitted rate within 10% of Theta", check_branching_tail),
    "ergodic_averaging": ("variance slope in [-1.3, -0.8]", check_ergodic),
}


def select_criteria(names: list[str]) -> list[str]:
    """Requested criteria in suite order; empty means all."""
    if not names:
        return list(CRITERIA)
    unknown = [n for n in names if n not in CRITERIA]
    if unknown:
        raise ConfigValidationError(f"'verify_all.criteria': unknown criteria {unknown}; choose from {list(CRITERIA)}")
    return [n for n in CRITERIA if n in names]


def run_criterion(name: str, ctx: SuiteContext) -> CriterionResult:
    reference, check = CRITERIA[name]
    logger.info(f"Criterion {name}")
    started = time.perf_counter()
    try:
        outcome = check(ctx)
    except BBMShapeError as e:
        logger.error(f"Criterion {name} raised {type(e).__name__}: {e}")
        outcome = Outcome(False, "", CliStrings.ERROR_RUN.format(name=type(e).__name__, message=e))
    seconds = round(time.perf_counter() - started, 3)
    status = CliStrings.RESULT_PASSED if outcome.passed else CliStrings.RESULT_FAILED
    logger.info(f"{status} {name}: {outcome.detail} ({seconds:.1f}s)")
    return CriterionResult(name, reference, bool(outcome.passed), outcome.value, outcome.detail, seconds)


def run_acceptance(config: ExperimentConfig, record: RunRecord) -> bool:
    """
    Run the selected criteria and write acceptance.csv.

    Returns:
        True when every selected criterion passed
    """
    names = select_criteria(config.block("verify_all")["criteria"])
    ctx = SuiteContext(record, config.seed, config.threads)
    logger.info("=" * 60)
    logger.info(f"Acceptance suite: {len(names)} criteria, seed {config.seed}, threads {config.threads}")
    logger.info("=" * 60)
    results = [run_criterion(name, ctx) for name in names]
    record.csv(
        "acceptance.csv",
        ["criterion", "reference", "passed", "value", "detail", "seconds"],
        ([r.criterion, r.reference, r.passed, r.value, r.detail, r.seconds] for r in results),
    )
    passed = sum(r.passed for r in results)
    record.summary["criteria"] = {r.criterion: r.passed for r in results}
    logger.info(CliStrings.RESULT_SUMMARY.format(passed=passed, total=len(results)))
    return passed == len(results)
