"""
Subcommands: one reproducible experiment each, writing CSV/JSON artifacts
and a manifest into the output directory.
"""

import argparse
import logging
import math
from collections.abc import Callable
from pathlib import Path

import numpy as np

from bbmshape.cli.artifacts import RunRecord
from bbmshape.cli_strings import CliStrings
from bbmshape.constants import AcceptanceConstants, SpeedConstants
from bbmshape.exceptions import BBMShapeError, ConfigValidationError, SpeedError, TooFewHitsError
from bbmshape.models.config_manager import ConfigManager, ExperimentConfig
from bbmshape.models.field import field_extrema
from bbmshape.simulation.bbm import LINEAGE_ANCESTOR, LINEAGE_GEN, simulate_ensemble
from bbmshape.simulation.brownian import FunctionalKind
from bbmshape.simulation.estimators import (
    STREAM_BBM,
    extremal_projections,
    generation_process,
    halfspace_lower_stat,
    halfspace_upper_stat,
    kernel_condition_check,
    shape_error,
)
from bbmshape.simulation.tilted import (
    change_of_measure_check,
    cumulant_from_ensemble,
    ldp_tail_check,
    lln_check,
    simulate_tilted,
)
from bbmshape.solvers.fkpp import front_speed_estimate, mckean_check, solve_fkpp
from bbmshape.solvers.spectral import (
    branching_decay_rate,
    cumulant_limit,
    first_axis,
    malthusian_rate,
    principal_eigen,
)
from bbmshape.solvers.speed import (
    find_lambda_e,
    growth_exponent,
    propI_small_kappa_check,
    rate_at,
    rate_function,
    speed_profile,
    tune_window,
)
from bbmshape.solvers.wulff import (
    approx_inner,
    approx_outer,
    build_wulff,
    certificate_trials,
    radial_extent,
    spreading_speed,
)
from bbmshape.utils import direction_grid, ensure_dir, second_differences, unit_vector

logger = logging.getLogger(__name__)

# change-of-measure checks run at this horizon and endpoint/path-max level
CHANGE_OF_MEASURE_T = 2.0
CHANGE_OF_MEASURE_LEVEL = 1.0


def direction_from_config(value, dim: int) -> np.ndarray:
    """Config direction (null = first axis), normalized to unit length."""
    if value is None:
        return first_axis(dim)
    vec = np.atleast_1d(np.asarray(value, dtype=float)).ravel()
    norm = float(np.linalg.norm(vec))
    if vec.size != dim or norm == 0.0:
        raise ConfigValidationError(f"'direction' must be a nonzero vector of length {dim}, got {value!r}")
    return unit_vector(vec / norm, dim)


def origin_from_config(value, dim: int) -> np.ndarray:
    if value is None:
        return np.zeros(dim)
    vec = np.atleast_1d(np.asarray(value, dtype=float)).ravel()
    if vec.size != dim:
        raise ConfigValidationError(f"'x0' must have length {dim}, got {value!r}")
    return vec


def _require_dims(command: str, dim: int, dims: tuple[int, ...]) -> None:
    if dim not in dims:
        raise BBMShapeError(CliStrings.ERROR_DIMENSION.format(command=command, dims=list(dims), dim=dim))


def _grid_coordinates(n: int, dim: int) -> np.ndarray:
    axes = np.indices((n,) * dim).reshape(dim, -1).T
    return axes / n


def run_eigen(config: ExperimentConfig, record: RunRecord) -> bool:
    block = config.block("eigen")
    field = record.field
    e = direction_from_config(block["direction"], field.dim)
    low, high = field_extrema(field)
    grid = np.asarray(block["lambda_grid"], dtype=float)

    results = [principal_eigen(field, e, float(lam), block["truncation"]) for lam in grid]
    gammas = np.array([r.gamma for r in results])
    lower = low + 0.5 * grid**2
    upper = high + 0.5 * grid**2
    rows = [
        [lam, r.gamma, lo, hi, r.residual, r.truncation]
        for lam, r, lo, hi in zip(grid, results, lower, upper, strict=True)
    ]
    record.csv("eigen.csv", ["lambda", "gamma", "lower_bound", "upper_bound", "residual", "truncation"], rows)

    bounds_ok = bool(np.all(gammas >= lower - 1e-8) and np.all(gammas <= upper + 1e-8))
    convex = grid.size < 3 or bool(np.all(second_differences(grid, gammas) > 0.0))
    record.summary.update(
        {
            "direction": e.tolist(),
            "bounds_ok": bounds_ok,
            "convex": convex,
            "malthusian_rate": malthusian_rate(field, block["truncation"]),
            "branching_decay_rate": branching_decay_rate(field, block["truncation"]),
        }
    )

    if config.dump:
        n = int(block["psi_grid"])
        psi, grad = results[-1].synthesize(n)
        coords = _grid_coordinates(n, field.dim)
        flat_grad = grad.reshape(-1, field.dim)
        columns = [f"x_{i + 1}" for i in range(field.dim)] + ["psi"] + [f"dlogpsi_{i + 1}" for i in range(field.dim)]
        rows = [[*x, p, *g] for x, p, g in zip(coords, psi.ravel(), flat_grad, strict=True)]
        record.csv("psi.csv", columns, rows)
    logger.info(f"Eigen: {grid.size} lambdas, bounds {'ok' if bounds_ok else 'VIOLATED'}, convex={convex}")
    return bounds_ok and convex


def run_speed(config: ExperimentConfig, record: RunRecord) -> bool:
    block = config.block("speed")
    field = record.field
    profile = speed_profile(field, block["n_directions"], block["truncation"], threads=config.threads, progress=True)
    record.table("speed.csv", profile)
    bound = math.sqrt(2.0 * field.mean)
    c_min = float(profile.c_star.min())
    record.summary.update({"c_star_min": c_min, "c_star_max": float(profile.c_star.max()), "lower_bound": bound})
    logger.info(f"c* in [{c_min:.6f}, {profile.c_star.max():.6f}], sqrt(2 gbar)={bound:.6f}")
    return c_min >= bound - SpeedConstants.BOUND_TOL


def run_rate(config: ExperimentConfig, record: RunRecord) -> bool:
    block = config.block("rate")
    field = record.field
    e = direction_from_config(block["direction"], field.dim)
    solution = find_lambda_e(field, e)
    rates = rate_function(field, e, solution=solution, threads=config.threads)
    record.csv(
        "rate.csv",
        ["zeta", "rate", "eta_max"],
        zip(rates.zeta_grid, rates.values, rates.maximizers, strict=True),
    )

    epsilon = block["epsilon"]
    exponents = [
        [alpha, growth_exponent(field, e, epsilon, alpha, solution)] for alpha in SpeedConstants.GROWTH_ALPHAS
    ]
    record.csv("growth_exponents.csv", ["alpha", "exponent"], exponents)
    at_c_star = rate_at(field, e, solution.c_star, solution)
    kappa = propI_small_kappa_check(field, e, block["beta_fraction"] * solution.gamma_e, solution)
    try:
        window = tune_window(field, e, epsilon, block["window_target"], solution=solution)
    except SpeedError as exc:
        logger.warning(f"No window: {exc}")
        window = None

    record.summary.update(
        {
            "lambda_e": solution.lambda_e,
            "gamma_e": solution.gamma_e,
            "c_star": solution.c_star,
            "rate_at_c_star": at_c_star,
            "kappa": kappa,
            "T0": window,
        }
    )
    positive = all(value > 0.0 for _, value in exponents)
    return at_c_star <= 1e-8 and positive and kappa is not None


def run_wulff(config: ExperimentConfig, record: RunRecord) -> bool:
    block = config.block("wulff")
    field = record.field
    profile = speed_profile(field, block["n_directions"], threads=config.threads)
    shape = build_wulff(profile)
    record.json("wulff.json", shape.to_dict())
    if field.dim == 3:
        logger.info("d=3: support function only, no certificates")
        return True

    samples = direction_grid(field.dim, max(2, int(block["spreading_samples"])))
    record.csv(
        "spreading.csv",
        [f"e_{i + 1}" for i in range(field.dim)] + ["w", "radial_extent", "support"],
        [[*e, spreading_speed(shape, e), radial_extent(shape, e), float(shape.support_at(e)[0])] for e in samples],
    )

    rows = []
    passed = True
    for i, epsilon in enumerate(block["epsilons"]):
        outer = approx_outer(shape, epsilon)
        inner = approx_inner(shape, epsilon)
        trials = certificate_trials(shape, inner, seed=config.seed + i)
        rows.append([epsilon, "outer", outer.directions.shape[0], outer.samples_checked, "", ""])
        rows.append([epsilon, "inner", inner.directions.shape[0], trials.trials, trials.contained, inner.theta])
        passed = passed and trials.passed
    record.csv("certificates.csv", ["epsilon", "kind", "directions", "checked", "contained", "theta"], rows)
    return passed


def run_simulate(config: ExperimentConfig, record: RunRecord) -> bool:
    block = config.block("simulate")
    field = record.field
    x0 = origin_from_config(block["x0"], field.dim)
    e = direction_from_config(block["direction"], field.dim)
    times = sorted(float(t) for t in block["snapshot_times"])
    t_end = max([float(block["t_end"]), *times])
    snapshots = simulate_ensemble(
        field, x0, t_end, block["dt"], block["cap"], config.seed, times, reps=block["reps"],
        stream=STREAM_BBM, threads=config.threads, lineage_T0=block["T0"],
    )

    rows = []
    for snap in snapshots:
        upper, lower = extremal_projections(snap, e)
        for r in range(snap.reps):
            rows.append([snap.time, r, int(snap.counts[r]), int(snap.thinned[r]), upper[r], lower[r]])
    record.csv("simulate.csv", ["t", "replica", "count", "thinned", "max_projection", "min_projection"], rows)
    record.summary["mean_counts"] = {f"{s.time:g}": float(s.counts.mean()) for s in snapshots}

    if config.dump:
        columns = ["t", "replica"] + [f"x_{i + 1}" for i in range(field.dim)]
        dump_rows = ([snap.time, int(o), *p] for snap in snapshots for o, p in zip(snap.owner, snap.positions, strict=True))
        if block["T0"] is not None:
            columns += ["gen_id", "ancestor"]
            dump_rows = (
                [snap.time, int(o), *p, int(gen), int(tag)]
                for snap in snapshots
                for o, p, gen, tag in zip(
                    snap.owner, snap.positions, snap.extras[LINEAGE_GEN], snap.extras[LINEAGE_ANCESTOR], strict=True
                )
            )
        record.csv("positions.csv", columns, dump_rows)
    return True


def run_halfspace(config: ExperimentConfig, record: RunRecord) -> bool:
    block = config.block("halfspace")
    field = record.field
    e = direction_from_config(block["direction"], field.dim)
    solution = find_lambda_e(field, e)
    epsilon = block["epsilon"]
    common = {"dt": block["dt"], "cap": block["cap"], "solution": solution, "threads": config.threads}

    upper = halfspace_upper_stat(field, e, epsilon, block["upper_t_list"], block["reps"], config.seed, **common)
    lower = halfspace_lower_stat(
        field, e, epsilon, block["lower_t_list"], block["reps"], config.seed, policy=block["policy"], **common
    )
    record.table("halfspace_upper.csv", upper)
    record.table("halfspace_lower.csv", lower)

    T0 = block["T0"] if block["T0"] is not None else tune_window(field, e, epsilon, solution=solution)
    generations = generation_process(
        field, e, epsilon, T0, block["n_max"], block["survival_reps"], config.seed, **common
    )
    kernel = kernel_condition_check(field, e, epsilon, T0, block["kernel_reps"], config.seed, **common)
    record.table("generations.csv", generations)
    record.table("kernel_condition.csv", kernel)

    record.summary.update(
        {
            "upper_slope": upper.slope,
            "reference_exponent": upper.reference_exponent,
            "lower_nonincreasing": lower.nonincreasing,
            "lower_is_upper_bound": lower.is_upper_bound,
            "T0": T0,
            "survival": generations.survival,
        }
    )
    return upper.slope < 0.0 and lower.nonincreasing and kernel.passed


def run_shape(config: ExperimentConfig, record: RunRecord) -> bool:
    block = config.block("shape")
    field = record.field
    _require_dims("shape", field.dim, (1, 2))
    profile = speed_profile(field, block["n_directions"], threads=config.threads)
    table = shape_error(
        field, profile, block["t_list"], block["reps"], block["cap"], config.seed,
        epsilon=block["epsilon"], dt=block["dt"], threads=config.threads,
    )
    record.table("shape.csv", table)
    if config.dump:
        record.csv(
            "shape_errors.csv",
            ["t", "replica", "hausdorff"],
            ([t, r, err] for t, row in zip(table.t_list, table.errors, strict=True) for r, err in enumerate(row)),
        )
    record.summary["medians"] = table.medians
    return table.decreasing


def run_tilted(config: ExperimentConfig, record: RunRecord) -> bool:
    block = config.block("tilted")
    field = record.field
    e = direction_from_config(block["direction"], field.dim)
    solution = find_lambda_e(field, e)
    horizon = float(block["t"])
    times = sorted({float(t) for t in block["record_t_list"] if t <= horizon} | {horizon})

    ensemble = simulate_tilted(
        field, e, solution.lambda_e, np.zeros(field.dim), horizon, block["dt"], block["reps"], config.seed,
        times, threads=config.threads,
    )
    lln = lln_check(ensemble, solution.c_star)
    record.table("tilted_lln.csv", lln)

    cumulants = [
        cumulant_from_ensemble(ensemble, eta, cumulant_limit(field, e, eta, solution.lambda_e))
        for eta in block["etas"]
    ]
    if cumulants:
        record.csv("cumulants.csv", cumulants[0].columns(), [row for c in cumulants for row in c.to_rows()])

    checks = [
        change_of_measure_check(
            field, e, solution.lambda_e, kind.value, CHANGE_OF_MEASURE_T, block["reps"], config.seed,
            level=CHANGE_OF_MEASURE_LEVEL, threads=config.threads,
        )
        for kind in FunctionalKind
    ]
    record.csv("change_of_measure.csv", checks[0].columns(), [row for c in checks for row in c.to_rows()])

    passed = lln.passed and all(abs(c.z) <= AcceptanceConstants.Z_MAX for c in cumulants)
    passed = passed and all(c.passed(AcceptanceConstants.Z_MAX) for c in checks)

    if block["ldp_interval"] is not None:
        interval = (float(block["ldp_interval"][0]), float(block["ldp_interval"][1]))
        try:
            ldp = ldp_tail_check(
                field, e, interval, block["ldp_t_list"], block["ldp_reps"], config.seed,
                solution=solution, threads=config.threads,
            )
        except TooFewHitsError as exc:
            logger.warning(str(exc))
            record.summary["ldp"] = "untestable"
        else:
            record.table("ldp.csv", ldp)
            record.summary["ldp_exponent"] = ldp.final_exponent
            passed = passed and ldp.passed

    if config.dump:
        record.csv(
            "y_hat.csv",
            ["t", "replica", "y_hat"],
            ([t, r, y] for i, t in enumerate(ensemble.times) for r, y in enumerate(ensemble.y_hat(i))),
        )
    record.summary.update({"c_star": solution.c_star, "jump_share": ensemble.jump_share})
    return passed


def _fkpp_dt(block: dict) -> float:
    return block["dt"] if block["dt"] is not None else 0.4 * block["dx"] ** 2


def run_fkpp(config: ExperimentConfig, record: RunRecord) -> bool:
    block = config.block("fkpp")
    field = record.field
    _require_dims("fkpp", field.dim, (1,))
    rows = []
    passed = True
    for direction in (1, -1):
        tag = "plus" if direction > 0 else "minus"
        c_star = find_lambda_e(field, [-float(direction)]).c_star
        run = solve_fkpp(
            field, block["init"], block["L"], block["dx"], _fkpp_dt(block), block["t_end"],
            front_direction=direction, frame_every=block["frame_every"], c_star=c_star,
        )
        estimate = front_speed_estimate(run, c_star=c_star)
        record.table(f"fkpp_levels_{tag}.csv", run)
        rows.extend([[direction, *row] for row in estimate.to_rows()])
        passed = passed and estimate.relative_error <= AcceptanceConstants.SPEED_RELATIVE_TOL
        if config.dump:
            record.csv(
                f"fkpp_frames_{tag}.csv",
                ["t", "x", "q"],
                ([t, x, q] for t, frame in zip(run.times, run.frames, strict=True) for x, q in zip(run.x, frame, strict=True)),
            )
    record.csv("fkpp_speed.csv", ["front_direction", *estimate.columns()], rows)
    return passed


def run_mckean(config: ExperimentConfig, record: RunRecord) -> bool:
    block = config.block("mckean")
    field = record.field
    _require_dims("mckean", field.dim, (1,))
    table = mckean_check(
        field, block["functional"], block["t"], block["reps"], config.seed, block["x_probes"],
        dx=block["dx"], bbm_dt=block["dt"], cap=block["cap"], threads=config.threads,
    )
    record.table("mckean.csv", table)
    return table.passed(AcceptanceConstants.Z_MAX)


def run_verify_all(config: ExperimentConfig, record: RunRecord) -> bool:
    # deferred: the suite imports every module above
    from bbmshape.cli.acceptance import run_acceptance

    return run_acceptance(config, record)


COMMANDS: dict[str, tuple[Callable[[ExperimentConfig, RunRecord], bool], str]] = {
    "eigen": (run_eigen, CliStrings.CMD_EIGEN),
    "speed": (run_speed, CliStrings.CMD_SPEED),
    "rate": (run_rate, CliStrings.CMD_RATE),
    "wulff": (run_wulff, CliStrings.CMD_WULFF),
    "simulate": (run_simulate, CliStrings.CMD_SIMULATE),
    "halfspace": (run_halfspace, CliStrings.CMD_HALFSPACE),
    "shape": (run_shape, CliStrings.CMD_SHAPE),
    "tilted": (run_tilted, CliStrings.CMD_TILTED),
    "fkpp": (run_fkpp, CliStrings.CMD_FKPP),
    "mckean": (run_mckean, CliStrings.CMD_MCKEAN),
    "verify-all": (run_verify_all, CliStrings.CMD_VERIFY_ALL),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=CliStrings.APP_NAME, description=CliStrings.APP_DESCRIPTION)
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sub = subparsers.add_parser(name, help=help_text, description=help_text)
        sub.add_argument("--config", type=Path, default=None, help=CliStrings.HELP_CONFIG)
        sub.add_argument("--seed", type=int, default=None, help=CliStrings.HELP_SEED)
        sub.add_argument("--out", type=str, default=None, help=CliStrings.HELP_OUT)
        sub.add_argument("--threads", type=int, default=None, help=CliStrings.HELP_THREADS)
        sub.add_argument("--dump", action="store_true", help=CliStrings.HELP_DUMP)
        sub.add_argument("--verbose", action="store_true", help=CliStrings.HELP_VERBOSE)
    return parser


def load_experiment(args: argparse.Namespace) -> ConfigManager:
    """
    Load the config file and apply command-line overrides.

    Raises:
        ConfigError: On unreadable files, unknown keys or bad values
    """
    manager = ConfigManager(args.config)
    manager.apply_overrides(seed=args.seed, output_dir=args.out, threads=args.threads, dump=args.dump)
    return manager


def execute(command: str, manager: ConfigManager) -> bool:
    """
    Run one subcommand and write its manifest.

    Returns:
        True when every check the subcommand makes passed
    """
    config = manager.experiment()
    field = config.build_field()
    out_dir = ensure_dir(Path(config.output_dir) / command)
    record = RunRecord(command, out_dir, field, config.seed, manager.config)
    logger.info(
        f"Running {command}: field {field.field_hash[:12]}, seed {config.seed}, "
        f"threads {config.threads}, output {out_dir}"
    )
    handler, _ = COMMANDS[command]
    passed = handler(config, record)
    record.manifest(passed)
    logger.info(CliStrings.RESULT_ARTIFACTS.format(path=out_dir))
    logger.info(f"{command}: {CliStrings.RESULT_PASSED if passed else CliStrings.RESULT_FAILED}")
    return passed
