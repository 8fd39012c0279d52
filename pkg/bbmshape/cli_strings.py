"""
CLI string constants for bbmshape
Centralizes all user-facing strings for consistency
"""


class CliStrings:
    """Command-line text constants"""

    # Application
    APP_NAME = "bbmshape"
    APP_DESCRIPTION = (
        "Numerical lab for branching Brownian motion in a periodic environment: "
        "eigenvalues, front speeds, Wulff shapes, Monte Carlo and F-KPP checks."
    )

    # Common options
    HELP_CONFIG = "Experiment JSON file (defaults are used for missing keys)"
    HELP_SEED = "Experiment seed (overrides the config)"
    HELP_OUT = "Output directory (overrides the config)"
    HELP_THREADS = "Worker processes for Monte Carlo blocks"
    HELP_DUMP = "Also write particle positions / PDE frames as CSV"
    HELP_VERBOSE = "Debug logging, including the simulation engine"

    # Subcommands
    CMD_EIGEN = "Principal eigenvalue gamma(e, lambda) over a lambda grid"
    CMD_SPEED = "Front speed c*(e) over a direction grid"
    CMD_RATE = "Rate function I_e and the window-growth exponents"
    CMD_WULFF = "Wulff shape, spreading speeds and approximation certificates"
    CMD_SIMULATE = "Run the g-BBM and tabulate counts and extremal projections"
    CMD_HALFSPACE = "Half-space event probabilities and the embedded generation process"
    CMD_SHAPE = "Hausdorff distance of the normalized hull to the Wulff shape"
    CMD_TILTED = "Tilted diffusion: LLN, cumulants, change of measure and tails"
    CMD_FKPP = "F-KPP front speed in both directions (d=1)"
    CMD_MCKEAN = "McKean representation against the F-KPP solution"
    CMD_VERIFY_ALL = "Run the acceptance suite and write acceptance.csv"

    # Results
    RESULT_PASSED = "PASS"
    RESULT_FAILED = "FAIL"
    RESULT_SUMMARY = "{passed}/{total} criteria passed"
    RESULT_ARTIFACTS = "Artifacts written to {path}"

    # Errors
    ERROR_CONFIG = "Configuration error: {message}"
    ERROR_RUN = "{name}: {message}"
    ERROR_UNHANDLED = "Unhandled exception; crash log written to {path}"
    ERROR_DIMENSION = "Subcommand '{command}' needs d in {dims}, field has d={dim}"
