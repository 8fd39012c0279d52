"""
Principal eigenvalue of the tilted periodic operator

    L psi = 1/2 Lap psi + lambda e.grad psi + (lambda^2/2 + g) psi

solved by Fourier-Galerkin truncation on the torus.
"""

import logging
from collections import deque
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from bbmshape.constants import SpectralConstants
from bbmshape.exceptions import BoundsError, ConvexityError, NotPositiveError, SpectralError, TruncationError
from bbmshape.models.field import PeriodicField, field_extrema
from bbmshape.utils import second_differences, unit_vector

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class EigenResult:
    """
    Principal eigenpair (gamma, psi) for one (e, lambda).

    psi is normalized to max 1 on the grid; coefficients hold the matching
    Fourier coefficients on the listed wavevectors so psi can be evaluated
    anywhere.
    """

    direction: tuple[float, ...]
    lam: float
    gamma: float
    psi: np.ndarray
    psi_log_grad: np.ndarray
    wavevectors: np.ndarray
    coefficients: np.ndarray
    truncation: int
    residual: float
    grid_n: int

    @property
    def dim(self) -> int:
        return len(self.direction)

    def psi_at(self, x) -> np.ndarray:
        """Spectral evaluation of psi at points of shape (..., d)."""
        points = np.asarray(x, dtype=float)
        if self.dim == 1 and (points.ndim == 0 or points.shape[-1] != 1):
            points = points[..., None]
        phases = np.exp(2j * np.pi * (points @ self.wavevectors.T))
        return np.real(phases @ self.coefficients)

    def synthesize(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """
        psi and grad psi on the n^d torus grid.

        Args:
            n: Points per axis; must exceed twice the truncation order

        Returns:
            (psi of shape (n,)*d, grad of shape (n,)*d + (d,))
        """
        return _synthesize(self.wavevectors, self.coefficients, n, self.dim)


def _reachable_wavevectors(field: PeriodicField, truncation: int) -> np.ndarray:
    """
    Wavevectors reachable from 0 through the field's modes inside the box.

    The truncated operator only couples k to k +- m for mode wavevectors m,
    so this set spans an invariant subspace that contains every function
    with a nonzero mean, in particular the principal eigenfunction.
    """
    steps = [k for k, c in field.fourier_coefficients().items() if any(k) and c != 0]
    origin = (0,) * field.dim
    seen = {origin}
    queue = deque([origin])
    while queue:
        k = queue.popleft()
        for m in steps:
            nxt = tuple(a + b for a, b in zip(k, m, strict=True))
            if nxt not in seen and max(abs(c) for c in nxt) <= truncation:
                seen.add(nxt)
                queue.append(nxt)
    return np.array(sorted(seen), dtype=int).reshape(-1, field.dim)


def _assemble(field: PeriodicField, e: np.ndarray, lam: float, wavevectors: np.ndarray) -> np.ndarray:
    """Galerkin matrix A with (A c)_k' = coefficient of exp(2 pi i k'.x) in L(sum c_k e_k)."""
    size = wavevectors.shape[0]
    index = {tuple(k): i for i, k in enumerate(wavevectors)}
    k_float = wavevectors.astype(float)
    diag = (
        -2.0 * np.pi**2 * np.sum(k_float**2, axis=1)
        + 2j * np.pi * lam * (k_float @ e)
        + 0.5 * lam**2
    )
    matrix = np.diag(diag.astype(complex))
    for m, g_m in field.fourier_coefficients().items():
        if g_m == 0:
            continue
        for col, k in enumerate(wavevectors):
            row = index.get(tuple(int(a + b) for a, b in zip(k, m, strict=True)))
            if row is not None:
                matrix[row, col] += g_m
    logger.debug(f"Assembled {size}x{size} Galerkin matrix at lambda={lam:.6g}")
    return matrix


def _complex_grid(wavevectors: np.ndarray, coefficients: np.ndarray, n: int, dim: int) -> np.ndarray:
    """sum_k c_k exp(2 pi i k.x) on the n^d grid via one inverse FFT."""
    if n <= 2 * int(np.max(np.abs(wavevectors), initial=0)):
        raise SpectralError(f"Grid n={n} aliases the Fourier basis")
    table = np.zeros((n,) * dim, dtype=complex)
    table[tuple(np.mod(wavevectors[:, i], n) for i in range(dim))] = coefficients
    return np.fft.ifftn(table) * float(n**dim)


def _synthesize(
    wavevectors: np.ndarray, coefficients: np.ndarray, n: int, dim: int
) -> tuple[np.ndarray, np.ndarray]:
    psi = np.real(_complex_grid(wavevectors, coefficients, n, dim))
    grad = np.empty(psi.shape + (dim,), dtype=float)
    for i in range(dim):
        spectral_derivative = 2j * np.pi * wavevectors[:, i] * coefficients
        grad[..., i] = np.real(_complex_grid(wavevectors, spectral_derivative, n, dim))
    return psi, grad


def _residual(
    field: PeriodicField,
    e: np.ndarray,
    lam: float,
    gamma: float,
    wavevectors: np.ndarray,
    coefficients: np.ndarray,
    n: int,
) -> float:
    """Relative L2 grid residual of the eigen-equation, with spectral derivatives."""
    dim = field.dim
    psi, grad = _synthesize(wavevectors, coefficients, n, dim)
    k_sq = np.sum(wavevectors.astype(float) ** 2, axis=1)
    laplace = np.real(_complex_grid(wavevectors, -4.0 * np.pi**2 * k_sq * coefficients, n, dim))
    drift = np.tensordot(grad, e, axes=([dim], [0]))
    g_grid = field.grid_values(n)
    residual = 0.5 * laplace + lam * drift + (0.5 * lam**2 + g_grid - gamma) * psi
    return float(np.linalg.norm(residual) / np.linalg.norm(psi))


def default_truncation(dim: int) -> int:
    return SpectralConstants.DEFAULT_TRUNCATION[dim]


def default_grid(dim: int) -> int:
    return SpectralConstants.DEFAULT_GRID[dim]


def principal_eigen(
    field: PeriodicField,
    e,
    lam: float,
    N: int | None = None,
    grid_n: int | None = None,
) -> EigenResult:
    """
    Principal eigenpair gamma(e, lambda), psi of the tilted periodic operator.

    Assembles the Galerkin matrix on exp(2 pi i k.x), ||k||_inf <= N, takes
    the full spectrum and keeps the eigenvalue of maximal real part. The
    eigenvector is phase-normalized at its point of largest modulus and must
    then be real and strictly positive on the grid.

    Args:
        field: Environment g
        e: Unit direction
        lam: Tilt lambda
        N: Fourier truncation order (default by dimension)
        grid_n: Evaluation grid size (default by dimension)

    Returns:
        EigenResult (shared from a cache; treat as read-only)

    Raises:
        NotPositiveError: If the selected eigenvalue is not real or psi changes sign
        TruncationError: If the grid residual exceeds tolerance
        BoundsError: If gamma falls outside [min g, max g] + lambda^2/2
    """
    direction = unit_vector(e, field.dim, SpectralConstants.UNIT_TOL)
    truncation = default_truncation(field.dim) if N is None else int(N)
    if truncation < SpectralConstants.MIN_TRUNCATION:
        raise SpectralError(f"Truncation N={truncation} below {SpectralConstants.MIN_TRUNCATION}")
    n = default_grid(field.dim) if grid_n is None else int(grid_n)
    return _principal_eigen_cached(field, tuple(direction.tolist()), float(lam), truncation, n)


@lru_cache(maxsize=SpectralConstants.CACHE_SIZE)
def _principal_eigen_cached(
    field: PeriodicField, direction: tuple[float, ...], lam: float, truncation: int, n: int
) -> EigenResult:
    e = np.asarray(direction)
    wavevectors = _reachable_wavevectors(field, truncation)
    matrix = _assemble(field, e, lam, wavevectors)

    eigenvalues, eigenvectors = scipy.linalg.eig(matrix)
    top = int(np.argmax(eigenvalues.real))
    gamma_complex = eigenvalues[top]
    if abs(gamma_complex.imag) > SpectralConstants.IMAG_TOL * max(1.0, abs(gamma_complex.real)):
        raise NotPositiveError(
            f"Principal eigenvalue {gamma_complex} is not real (e={direction}, lambda={lam})"
        )
    gamma = float(gamma_complex.real)
    coefficients = eigenvectors[:, top]

    complex_psi = _complex_grid(wavevectors, coefficients, n, len(direction))
    peak = complex_psi.flat[int(np.argmax(np.abs(complex_psi)))]
    rotation = abs(peak) / peak
    complex_psi = complex_psi * rotation
    scale = float(np.max(complex_psi.real))
    if np.max(np.abs(complex_psi.imag)) > SpectralConstants.PHASE_TOL * scale:
        raise NotPositiveError(
            f"Eigenfunction is not real after phase fix (e={direction}, lambda={lam})"
        )
    coefficients = coefficients * rotation / scale

    psi, grad = _synthesize(wavevectors, coefficients, n, len(direction))
    if float(psi.min()) <= 0.0:
        raise NotPositiveError(
            f"Eigenfunction changes sign (min {psi.min():.3g}); increase N above {truncation}"
        )

    residual = _residual(field, e, lam, gamma, wavevectors, coefficients, n)
    if residual > SpectralConstants.RESIDUAL_TOL:
        raise TruncationError(
            f"Residual {residual:.3g} > {SpectralConstants.RESIDUAL_TOL} at N={truncation}, "
            f"lambda={lam}"
        )

    low, high = _field_bounds(field)
    check_gamma_bounds(gamma, lam, low, high)

    log_grad = grad / psi[..., None]
    for array in (psi, log_grad, coefficients, wavevectors):
        array.flags.writeable = False

    return EigenResult(
        direction=direction,
        lam=lam,
        gamma=gamma,
        psi=psi,
        psi_log_grad=log_grad,
        wavevectors=wavevectors,
        coefficients=coefficients,
        truncation=truncation,
        residual=residual,
        grid_n=n,
    )


@lru_cache(maxsize=64)
def _field_bounds(field: PeriodicField) -> tuple[float, float]:
    return field_extrema(field, SpectralConstants.EXTREMA_GRID[field.dim])


def check_gamma_bounds(gamma: float, lam: float, low: float, high: float) -> None:
    """
    Enforce min g + lambda^2/2 <= gamma <= max g + lambda^2/2.

    Raises:
        BoundsError: If gamma is outside the bounds by more than the tolerance
    """
    shift = 0.5 * lam * lam
    slack = SpectralConstants.BOUNDS_TOL * max(1.0, abs(gamma))
    if not low + shift - slack <= gamma <= high + shift + slack:
        raise BoundsError(
            f"gamma={gamma:.9g} outside [{low + shift:.9g}, {high + shift:.9g}] at lambda={lam}; "
            "the Fourier truncation is too small"
        )


def gamma_value(field: PeriodicField, e, lam: float, N: int | None = None) -> float:
    """Shorthand for principal_eigen(...).gamma."""
    return principal_eigen(field, e, lam, N).gamma


def gamma_curve(
    field: PeriodicField, e, lambda_grid, N: int | None = None
) -> list[tuple[float, float]]:
    """
    gamma(e, .) on a lambda grid with a strict convexity check.

    Raises:
        ConvexityError: If a second divided difference is not positive
    """
    grid = np.asarray(lambda_grid, dtype=float)
    if grid.ndim != 1 or np.any(np.diff(grid) <= 0):
        raise SpectralError("lambda_grid must be strictly increasing")
    values = np.array([principal_eigen(field, e, lam, N).gamma for lam in grid])
    if grid.size >= 3:
        curvature = second_differences(grid, values)
        worst = int(np.argmin(curvature))
        if curvature[worst] <= SpectralConstants.CONVEXITY_TOL:
            raise ConvexityError(
                f"gamma not strictly convex near lambda={grid[worst + 1]:.6g} "
                f"(second difference {curvature[worst]:.3g})"
            )
    return list(zip(grid.tolist(), values.tolist(), strict=True))


def cumulant_limit(
    field: PeriodicField,
    e,
    eta: float,
    lambda_e: float | None = None,
    N: int | None = None,
) -> float:
    """
    Limiting scaled cumulant Lambda(eta) = gamma(e, lambda_e + eta) - gamma(e, lambda_e).

    Args:
        field: Environment
        e: Unit direction
        eta: Tilt increment
        lambda_e: Minimizer of gamma/lambda; computed when omitted
        N: Fourier truncation order

    Returns:
        Lambda(eta)
    """
    if lambda_e is None:
        from bbmshape.solvers.speed import find_lambda_e

        lambda_e = find_lambda_e(field, e, N).lambda_e
    if eta == 0.0:
        return 0.0
    return principal_eigen(field, e, lambda_e + eta, N).gamma - principal_eigen(field, e, lambda_e, N).gamma


def first_axis(dim: int) -> np.ndarray:
    e = np.zeros(dim)
    e[0] = 1.0
    return e


def malthusian_rate(field: PeriodicField, N: int | None = None) -> float:
    """gamma(e, 0), the exponential growth rate of E[#N_t]; independent of e."""
    return principal_eigen(field, first_axis(field.dim), 0.0, N).gamma


def branching_decay_rate(field: PeriodicField, N: int | None = None) -> float:
    """
    Theta = -Gamma, with Gamma the principal eigenvalue of 1/2 Lap phi - g phi.

    Theta is the exponential decay rate of P[no branching by time t].
    """
    return -principal_eigen(field.scaled(-1.0), first_axis(field.dim), 0.0, N).gamma


def fd_principal_eigenvalue(
    field: PeriodicField, e, lam: float, n: int, richardson: bool = False
) -> float:
    """
    Second-order finite-difference estimate of gamma(e, lambda) (d <= 2).

    Uses central differences on the periodic n^d grid and shift-invert
    around an upper bound of the spectrum, so the nearest eigenvalue is the
    principal one.

    Args:
        field: Environment
        e: Unit direction
        lam: Tilt lambda
        n: Grid points per axis
        richardson: Combine n and 2n runs to cancel the O(h^2) term

    Returns:
        Principal eigenvalue estimate
    """
    if richardson:
        coarse = fd_principal_eigenvalue(field, e, lam, n)
        fine = fd_principal_eigenvalue(field, e, lam, 2 * n)
        return (4.0 * fine - coarse) / 3.0

    direction = unit_vector(e, field.dim)
    if field.dim > 2:
        raise SpectralError("Finite-difference oracle supports d <= 2")
    h = 1.0 / n
    eye = scipy.sparse.identity(n, format="csr")
    shift_up = scipy.sparse.diags([1.0, 1.0], [1, -(n - 1)], shape=(n, n), format="csr")
    shift_down = shift_up.T.tocsr()
    second = (shift_up + shift_down - 2.0 * eye) / h**2
    first = (shift_up - shift_down) / (2.0 * h)

    if field.dim == 1:
        laplace = second
        advection = direction[0] * first
    else:
        laplace = scipy.sparse.kron(second, eye) + scipy.sparse.kron(eye, second)
        advection = direction[0] * scipy.sparse.kron(first, eye) + direction[1] * scipy.sparse.kron(
            eye, first
        )
    g_values = field.grid_values(n).ravel()
    operator = (
        0.5 * laplace + lam * advection + scipy.sparse.diags(0.5 * lam**2 + g_values)
    ).tocsc()

    sigma = float(g_values.max()) + 0.5 * lam**2 + 1.0
    value = scipy.sparse.linalg.eigs(operator, k=1, sigma=sigma, which="LM", return_eigenvectors=False)
    return float(np.real(value[0]))
