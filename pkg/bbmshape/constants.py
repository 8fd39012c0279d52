"""
Solver tolerances, defaults and limits
"""


class FieldConstants:
    """Environment validation constants"""

    SUPPORTED_DIMS = (1, 2, 3)
    VALIDATION_GRID = 256  # points per axis for the non-negativity check
    VALIDATION_CHUNK = 16  # first-axis slab size when scanning large grids
    MIN_EXTREMA_GRID = 64
    ZERO_TOL = 1e-14


class SpectralConstants:
    """Fourier-Galerkin eigen solver constants"""

    DEFAULT_TRUNCATION = {1: 16, 2: 12, 3: 4}
    DEFAULT_GRID = {1: 128, 2: 64, 3: 24}
    MIN_TRUNCATION = 4
    UNIT_TOL = 1e-12
    IMAG_TOL = 1e-8
    RESIDUAL_TOL = 1e-6
    PHASE_TOL = 1e-6  # imaginary part of psi left after phase normalization, relative to max
    BOUNDS_TOL = 1e-6  # slack on min g + lambda^2/2 <= gamma <= max g + lambda^2/2, relative to max(1, |gamma|)
    EXTREMA_GRID = {1: 256, 2: 256, 3: 64}
    CONVEXITY_TOL = 0.0
    CACHE_SIZE = 4096


class SpeedConstants:
    """Front speed, rate function and Legendre transform constants"""

    LAMBDA_MIN = 1e-6
    LAMBDA_MAX = 50.0
    RATE_FLOOR = 1e-6  # floor on min g in the initial lambda bracket
    GOLDEN_XTOL = 1e-9
    TANGENCY_TOL = 1e-5
    TANGENCY_STEP = 1e-4  # central difference step for d(gamma)/d(lambda)
    BOUND_TOL = 1e-6
    ETA_MAX = 50.0
    ETA_STEP = 0.5  # initial half-width of the eta bracket
    LEGENDRE_CONVEXITY_TOL = 1e-10
    RATE_CONVEXITY_TOL = 1e-7  # tabulated I_e carries optimizer noise
    ZETA_FINE_BAND = 0.3  # fine zeta spacing within +-30% of c*
    ZETA_FINE_DIVISOR = 200
    ZETA_COARSE_DIVISOR = 50
    ZETA_RANGE = (0.2, 2.5)  # in units of c*
    KAPPA_MAX_POWER = 20
    GROWTH_ALPHAS = (0.25, 0.5, 0.75)


class WulffConstants:
    """Convex geometry constants"""

    MIN_DIRECTIONS_2D = 32
    SUPPORT_GRID_2D = 720  # directions for support-function Hausdorff distances
    SUPPORT_GRID_3D = 2000
    COVER_SAMPLES = 10_000
    THETA_MIN = 1e-10
    NET_CHECK_SAMPLES = 9  # directions sampled per cap in the net re-verification
    CONTAIN_TOL = 1e-12
    CARATHEODORY_TOL = 1e-9
    INTERIOR_SAMPLES = 40  # per-axis interior lattice for point-set distances


class SimulationConstants:
    """g-BBM and path simulation constants"""

    MAX_DT = 0.01
    MIN_CAP = 1_000
    DEFAULT_CAP = 100_000
    SHAPE_MIN_CAP = 20_000
    REPLICA_BLOCK = 256  # replicas per RNG stream block
    BRANCH_ITER_MAX = 64  # repeated branchings resolved inside one Euler step
    MANY_TO_ONE_MAX_T = 3.0
    MIN_TAIL_REPS = 10_000
    MIN_HALFSPACE_REPS = 500
    MIN_HITS = 30
    ERGODIC_MAX_SLOPE = -0.8
    INTERPOLATION_KAPPA = 0.5
    INTERPOLATION_SHARE = 0.99
    INTERPOLATION_OFFSETS = (0.25, 0.5, 0.75, 1.0)
    WINDOW_STEP = 0.5
    WINDOW_MAX = 20.0
    KERNEL_POSITIONS = 5
    GENERATION_MAX = 6
    MEMBER_CAP = 4  # members kept per generation in the survival estimator
    KS_CRITICAL_1PCT = 1.628  # asymptotic sqrt(n) * D critical value at 1%
    HEAVY_TAIL_SHARE = 0.5  # top 1% carrying more than this share of the mean


class TiltedConstants:
    """Tilted diffusion constants"""

    MAX_DT = 0.005
    DRIFT_GRID = {1: 1024, 2: 128, 3: 32}
    JUMP_SIGMAS = 6.0
    CONTINUITY_SHARE = 1e-4  # tolerated share of steps above the jump bound
    CHANGE_OF_MEASURE_MAX_T = 5.0
    MIN_CUMULANT_REPS = 10_000
    MIN_LDP_REPS = 100_000
    CUMULANT_T_RANGE = (20.0, 100.0)
    LDP_MIN_GAP = 0.2  # interval distance from c*, in units of c*
    LLN_SLOPE_RANGE = (-1.3, -0.7)
    LDP_RELATIVE_TOL = 0.4
    LDP_ABSOLUTE_TOL = 0.05
    JACKKNIFE_GROUPS = 50


class FkppConstants:
    """F-KPP solver constants"""

    BOUNDARY_LAYER = 5.0
    MIN_FRAMES = 10
    MIN_R_SQUARED = 0.99
    TAIL_EPSILON = 0.2
    TAIL_THRESHOLD = 0.05
    FRAME_EVERY = 1.0  # time between stored frames
    BOUNDS_TOL = 1e-12
    MONOTONE_TOL = 1e-8
    SIGMOID_WIDTH = 0.5


class AcceptanceConstants:
    """Acceptance suite scale and tolerances"""

    Z_MAX = 3.0
    SPEED_RELATIVE_TOL = 0.02
    HOMOGENEOUS_RATES = (0.5, 1.0, 2.0)
    SHAPE_TIMES = (4.0, 8.0, 12.0)
    SHAPE_HOMOGENEOUS_MAX = 0.25
    SURVIVAL_MIN = 0.2
