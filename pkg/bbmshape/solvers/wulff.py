"""
Wulff shape W(c*) = {x : x.e <= c*(e) for all e}, its support function,
finite half-space certificates and Hausdorff distances.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, QhullError, cKDTree

from bbmshape.constants import WulffConstants
from bbmshape.exceptions import (
    CoverFailureError,
    DegenerateShapeError,
    EmptyConeError,
    NetFailureError,
    WulffError,
)
from bbmshape.solvers.speed import SpeedProfile
from bbmshape.utils import direction_angles, direction_grid, parabola_vertex, unit_vector

logger = logging.getLogger(__name__)


def _as_directions(directions, dim: int) -> np.ndarray:
    dirs = np.asarray(directions, dtype=float)
    if dim == 1 and dirs.ndim <= 1:
        dirs = dirs.reshape(-1, 1)
    return dirs.reshape(-1, dim)


def _sort_ccw(points: np.ndarray) -> np.ndarray:
    order = np.argsort(direction_angles(points - points.mean(axis=0)))
    return points[order]


def _polygon_support(vertices: np.ndarray, directions: np.ndarray) -> np.ndarray:
    return np.max(directions @ vertices.T, axis=1)


def _polygon_edges(vertices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return vertices, np.roll(vertices, -1, axis=0)


def _polygon_contains(vertices: np.ndarray, points: np.ndarray, tol: float) -> np.ndarray:
    """Points inside a ccw convex polygon (boundary included up to tol)."""
    starts, ends = _polygon_edges(vertices)
    edges = ends - starts
    rel = points[:, None, :] - starts[None, :, :]
    cross = edges[None, :, 0] * rel[:, :, 1] - edges[None, :, 1] * rel[:, :, 0]
    lengths = np.linalg.norm(edges, axis=1)
    return np.all(cross >= -tol * np.maximum(lengths, 1.0)[None, :], axis=1)


def _polygon_distance(vertices: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Euclidean distance from points to a convex polygon (0 inside)."""
    starts, ends = _polygon_edges(vertices)
    edges = ends - starts
    lengths_sq = np.maximum(np.sum(edges**2, axis=1), 1e-300)
    rel = points[:, None, :] - starts[None, :, :]
    t = np.clip(np.sum(rel * edges[None], axis=2) / lengths_sq[None], 0.0, 1.0)
    nearest = starts[None] + t[..., None] * edges[None]
    dist = np.min(np.linalg.norm(points[:, None, :] - nearest, axis=2), axis=1)
    if vertices.shape[0] < 3:
        return dist
    inside = _polygon_contains(vertices, points, WulffConstants.CONTAIN_TOL)
    return np.where(inside, 0.0, dist)


def _polygon_boundary_samples(vertices: np.ndarray, n: int) -> np.ndarray:
    """n points evenly spaced in arc length along the closed polygon, ccw from vertex 0."""
    closed = np.vstack([vertices, vertices[:1]])
    seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    s = np.linspace(0.0, arc[-1], n, endpoint=False)
    return np.column_stack([np.interp(s, arc, closed[:, 0]), np.interp(s, arc, closed[:, 1])])


class ConvexBody:
    """Common queries for convex bodies given by vertices (d <= 2)"""

    dim: int
    vertices: np.ndarray | None

    def support_at(self, directions) -> np.ndarray:
        dirs = _as_directions(directions, self.dim)
        if self.vertices is None:
            raise WulffError("Body has no vertex representation")
        return _polygon_support(self.vertices, dirs)

    def boundary_samples(self, n: int) -> np.ndarray:
        if self.vertices is None:
            raise WulffError("Boundary sampling needs vertices")
        if self.dim == 1:
            return self.vertices.copy()
        return _polygon_boundary_samples(self.vertices, n)

    def distance(self, points) -> np.ndarray:
        pts = _as_directions(points, self.dim)
        if self.dim == 1:
            lo, hi = float(self.vertices[0, 0]), float(self.vertices[1, 0])
            x = pts[:, 0]
            return np.maximum(np.maximum(lo - x, x - hi), 0.0)
        if self.dim == 2:
            return _polygon_distance(self.vertices, pts)
        raise WulffError("Point distances are implemented for d <= 2")

    def interior_samples(self, per_axis: int = WulffConstants.INTERIOR_SAMPLES) -> np.ndarray:
        """Lattice points of the bounding box that lie inside the body."""
        lower = self.vertices.min(axis=0)
        upper = self.vertices.max(axis=0)
        axes = [np.linspace(lower[i], upper[i], per_axis) for i in range(self.dim)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)
        return mesh[self.distance(mesh) == 0.0]

    @property
    def circumradius(self) -> float:
        return float(np.max(np.linalg.norm(self.vertices, axis=1)))


@dataclass(frozen=True, eq=False)
class WulffShape(ConvexBody):
    """
    Half-space intersection over a direction grid.

    support holds the support function c_hat(e) <= c*(e) on the grid; for d=2
    vertices is the ccw polygon, for d=1 the interval [[lo], [hi]], and for
    d=3 only the support function is kept.
    """

    dim: int
    directions: np.ndarray
    c_star: np.ndarray
    support: np.ndarray
    vertices: np.ndarray | None
    a: float

    @property
    def halfspaces(self) -> list[tuple[tuple[float, ...], float]]:
        return [(tuple(e.tolist()), float(c)) for e, c in zip(self.directions, self.c_star, strict=True)]

    def support_at(self, directions) -> np.ndarray:
        dirs = _as_directions(directions, self.dim)
        if self.vertices is not None:
            return _polygon_support(self.vertices, dirs)
        return np.array([_lp_support(self.directions, self.c_star, e) for e in dirs])

    def contains(self, points, scale: float = 1.0, tol: float = WulffConstants.CONTAIN_TOL) -> np.ndarray:
        """Membership of points in scale * W."""
        pts = _as_directions(points, self.dim)
        return np.all(pts @ self.directions.T <= scale * self.c_star[None, :] + tol, axis=1)

    def to_dict(self) -> dict:
        order = _angle_order(self.directions)
        data = {
            "dim": self.dim,
            "a": self.a,
            "support": [[*self.directions[i].tolist(), float(self.support[i])] for i in order],
            "halfspaces": [[*self.directions[i].tolist(), float(self.c_star[i])] for i in order],
            "vertices": [] if self.vertices is None else self.vertices.tolist(),
        }
        return data


@dataclass(frozen=True, eq=False)
class ConvexHullBody(ConvexBody):
    """Convex hull of a finite point set (particle clouds, random polygons)"""

    dim: int
    vertices: np.ndarray

    @classmethod
    def from_points(cls, points) -> "ConvexHullBody":
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        dim = pts.shape[1]
        if dim == 1:
            return cls(1, np.array([[pts.min()], [pts.max()]]))
        if dim != 2:
            raise WulffError("Point-cloud hulls are implemented for d <= 2")
        try:
            hull = ConvexHull(pts)
            return cls(2, _sort_ccw(pts[hull.vertices]))
        except (QhullError, ValueError):
            # fewer than 3 points or collinear: keep the extreme points of the segment
            centered = pts - pts.mean(axis=0)
            _, _, vt = np.linalg.svd(centered, full_matrices=False)
            proj = centered @ vt[0]
            ends = pts[[int(np.argmin(proj)), int(np.argmax(proj))]]
            return cls(2, ends if not np.allclose(ends[0], ends[1]) else ends[:1])

    def contains(self, points, tol: float = WulffConstants.CONTAIN_TOL) -> np.ndarray:
        pts = _as_directions(points, self.dim)
        return self.distance(pts) <= tol


def _angle_order(directions: np.ndarray) -> np.ndarray:
    if directions.shape[1] == 1:
        return np.argsort(directions[:, 0])
    return np.argsort(direction_angles(directions[:, :2]))


def _lp_support(directions: np.ndarray, offsets: np.ndarray, e: np.ndarray) -> float:
    result = linprog(-e, A_ub=directions, b_ub=offsets, bounds=[(None, None)] * e.size, method="highs")
    if result.status != 0:
        raise DegenerateShapeError(f"Support LP failed in direction {e.tolist()}: {result.message}")
    return float(-result.fun)


def build_wulff_from_support(directions, c_star) -> WulffShape:
    """
    Wulff shape of the half-spaces {x : x.e_i <= c_i}.

    d=2 intersects half-planes through the convex hull of the dual points
    e_i / c_i: each hull edge with outward normal n and offset o < 0 maps to
    the primal vertex -n / o.

    Raises:
        DegenerateShapeError: If the intersection is empty or unbounded
    """
    c = np.asarray(c_star, dtype=float).ravel()
    dim = 1 if np.asarray(directions).ndim <= 1 else np.asarray(directions).shape[1]
    dirs = _as_directions(directions, dim)
    if dirs.shape[0] != c.size:
        raise WulffError("directions and c_star differ in length")
    if np.any(c <= 0.0) or not np.all(np.isfinite(c)):
        raise DegenerateShapeError("Every offset must be positive for 0 to be interior")
    a = float(min(c.min(), 1.0 / c.max()))

    if dim == 1:
        plus = c[dirs[:, 0] > 0]
        minus = c[dirs[:, 0] < 0]
        if plus.size == 0 or minus.size == 0:
            raise DegenerateShapeError("d=1 needs both directions")
        vertices = np.array([[-minus.min()], [plus.min()]])
        support = _polygon_support(vertices, dirs)
        return WulffShape(1, dirs, c, support, vertices, a)

    if dim == 2:
        dual = dirs / c[:, None]
        try:
            hull = ConvexHull(dual)
        except (QhullError, ValueError) as e:
            raise DegenerateShapeError(f"Dual hull failed: {e}") from e
        normals = hull.equations[:, :2]
        offsets = hull.equations[:, 2]
        if np.any(offsets >= -1e-14):
            raise DegenerateShapeError("Half-plane intersection is unbounded")
        vertices = -normals / offsets[:, None]
        vertices = _sort_ccw(_dedupe(vertices))
        support = _polygon_support(vertices, dirs)
        if np.any(support > c + 1e-9 * np.maximum(c, 1.0)):
            raise DegenerateShapeError("Recomputed support exceeds an offset")
        return WulffShape(2, dirs, c, support, vertices, a)

    if dim == 3:
        support = np.array([_lp_support(dirs, c, e) for e in dirs])
        return WulffShape(3, dirs, c, support, None, a)

    raise WulffError(f"Unsupported dimension {dim}")


def _dedupe(points: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    kept: list[np.ndarray] = []
    for p in points:
        if all(np.linalg.norm(p - q) > tol * max(1.0, np.linalg.norm(p)) for q in kept):
            kept.append(p)
    return np.array(kept)


def build_wulff(profile: SpeedProfile) -> WulffShape:
    """Wulff shape of a speed profile; needs >= 32 directions in d=2."""
    if profile.dim == 2 and len(profile.entries) < WulffConstants.MIN_DIRECTIONS_2D:
        raise WulffError(
            f"Need >= {WulffConstants.MIN_DIRECTIONS_2D} directions in d=2, got {len(profile.entries)}"
        )
    shape = build_wulff_from_support(profile.directions, profile.c_star)
    logger.info(
        f"Wulff shape in d={shape.dim}: support in [{shape.support.min():.6f}, "
        f"{shape.support.max():.6f}], a={shape.a:.6f}"
    )
    return shape


def radial_extent(shape: WulffShape, e) -> float:
    """sup{s >= 0 : s e in W}."""
    direction = unit_vector(e, shape.dim)
    if shape.dim == 1:
        return float(shape.vertices[1, 0] if direction[0] > 0 else -shape.vertices[0, 0])
    if shape.dim == 2:
        starts, ends = _polygon_edges(shape.vertices)
        best = 0.0
        for p, q in zip(starts, ends, strict=True):
            edge = q - p
            # s e = p + t edge
            det = direction[0] * (-edge[1]) - direction[1] * (-edge[0])
            if abs(det) < 1e-300:
                continue
            s = (p[0] * (-edge[1]) - p[1] * (-edge[0])) / det
            t = (direction[0] * p[1] - direction[1] * p[0]) / det
            if s > 0 and -1e-12 <= t <= 1.0 + 1e-12:
                best = max(best, s)
        return float(best)
    cosines = shape.directions @ direction
    mask = cosines > 0
    return float(np.min(shape.c_star[mask] / cosines[mask]))


def spreading_speed(shape: WulffShape, e) -> float:
    """
    w(e) = inf over grid e' with e'.e > 0 of c*(e') / (e'.e), refined by a
    parabola in angle (d=2).

    w(e) is the radial function of W in direction e; it is cross-checked
    against the ray/boundary intersection and against w <= c_hat(e) <= c*(e).

    Raises:
        EmptyConeError: If no grid direction has e'.e > 0
    """
    direction = unit_vector(e, shape.dim)
    cosines = shape.directions @ direction
    mask = cosines > 0
    if not np.any(mask):
        raise EmptyConeError(f"No grid direction with positive projection on {direction.tolist()}")
    ratios = np.full(cosines.shape, np.inf)
    ratios[mask] = shape.c_star[mask] / cosines[mask]
    best = int(np.argmin(ratios))
    w = float(ratios[best])

    if shape.dim == 2 and shape.directions.shape[0] >= 3:
        angles = direction_angles(shape.directions)
        order = np.argsort(angles)
        pos = int(np.where(order == best)[0][0])
        neighbours = [order[(pos - 1) % order.size], best, order[(pos + 1) % order.size]]
        if np.all(np.isfinite(ratios[neighbours])):
            theta = np.unwrap(angles[neighbours])
            vertex = parabola_vertex(theta, ratios[neighbours])
            if vertex is not None and theta[0] < vertex[0] < theta[2] and vertex[1] < w:
                w_refined = float(vertex[1])
                logger.debug(f"w refined from {w:.8g} to {w_refined:.8g}")
                w = w_refined

    radial = radial_extent(shape, direction)
    spacing = 2.0 * math.pi / shape.directions.shape[0] if shape.dim == 2 else 0.0
    tolerance = shape.c_star.max() * (1.0 - math.cos(spacing)) + 1e-9
    if abs(w - radial) > tolerance:
        logger.warning(f"w(e)={w:.8g} differs from radial extent {radial:.8g} by more than {tolerance:.3g}")
    support = float(shape.support_at(direction)[0])
    if w > support + tolerance:
        logger.warning(f"w(e)={w:.8g} exceeds support {support:.8g}")
    return w


@dataclass(frozen=True)
class OuterCertificate:
    """Directions R with intersection of {x.r <= c*(r)} inside (1 + eps) W"""

    directions: np.ndarray
    offsets: np.ndarray
    epsilon: float
    samples_checked: int


@dataclass(frozen=True)
class InnerCertificate:
    """
    Directions Q such that a convex K inside B(0, radius) meeting every
    {x.q > offset(q)} contains (1 - eps) W.
    """

    directions: np.ndarray
    offsets: np.ndarray
    epsilon: float
    theta: float
    kappa: float
    radius: float

    def holds_for(self, body: ConvexBody) -> bool:
        """True when body satisfies the certificate's hypotheses."""
        if body.circumradius >= self.radius:
            return False
        reach = body.support_at(self.directions)
        return bool(np.all(reach > self.offsets))


def approx_outer(
    shape: WulffShape, epsilon: float, n_samples: int = WulffConstants.COVER_SAMPLES
) -> OuterCertificate:
    """
    Greedy cover of the boundary of (1 + eps) W by open half-spaces {x.e > c*(e)}.

    Marches the boundary in order; at each uncovered sample it adds the grid
    direction with the largest margin there, then drops redundant directions.
    The intersection of the chosen half-spaces is finally checked to lie in
    (1 + eps) W.

    Raises:
        CoverFailureError: If a boundary sample is covered by no grid direction
    """
    if not 0.0 < epsilon < 1.0:
        raise WulffError(f"epsilon must lie in (0, 1), got {epsilon}")
    if shape.dim == 1:
        chosen = np.array([int(np.argmax(shape.directions[:, 0])), int(np.argmin(shape.directions[:, 0]))])
        return OuterCertificate(shape.directions[chosen], shape.c_star[chosen], epsilon, 2)
    if shape.dim != 2:
        raise WulffError("Half-space certificates are built for d <= 2")

    samples = (1.0 + epsilon) * shape.boundary_samples(n_samples)
    margins = samples @ shape.directions.T - shape.c_star[None, :]
    hits = margins > 0.0
    uncoverable = ~np.any(hits, axis=1)
    if np.any(uncoverable):
        raise CoverFailureError(
            f"{int(uncoverable.sum())} boundary samples of (1+eps)W lie in no half-space; refine the grid"
        )

    chosen: list[int] = []
    covered = np.zeros(samples.shape[0], dtype=bool)
    for j in range(samples.shape[0]):
        if covered[j]:
            continue
        r = int(np.argmax(margins[j]))
        chosen.append(r)
        covered |= hits[:, r]

    for r in list(reversed(chosen)):
        rest = [s for s in chosen if s != r]
        if rest and np.all(np.any(hits[:, rest], axis=1)):
            chosen = rest

    directions = shape.directions[chosen]
    offsets = shape.c_star[chosen]
    if not np.all(np.any(hits[:, chosen], axis=1)):
        raise CoverFailureError("Greedy cover lost coverage after pruning")
    try:
        inner = build_wulff_from_support(directions, offsets)
    except DegenerateShapeError as e:
        raise CoverFailureError(f"Chosen half-spaces do not bound a polygon: {e}") from e
    if not np.all(shape.contains(inner.vertices, scale=1.0 + epsilon, tol=1e-9)):
        raise CoverFailureError("Intersection of chosen half-spaces leaves (1+eps)W")

    logger.info(f"Outer certificate for eps={epsilon}: {len(chosen)} directions")
    return OuterCertificate(directions, offsets, epsilon, samples.shape[0])


def _chord_ends(offset: float, q: np.ndarray, radius: float) -> np.ndarray:
    """Endpoints of the chord {x.q = offset} of the disc B(0, radius)."""
    perp = np.array([-q[1], q[0]])
    half = math.sqrt(max(radius**2 - offset**2, 0.0))
    return np.array([offset * q + half * perp, offset * q - half * perp])


def _net(n: int) -> np.ndarray:
    return direction_grid(2, n)


def _cap_verified(shape: WulffShape, net: np.ndarray, theta: float, epsilon: float, radius: float) -> bool:
    """
    Check {x.q > c_hat(q)} n B inside {x.e' > (1 - eps) c_hat(e')} for sampled e'
    with e'.q >= 1 - theta, at every net direction q.
    """
    half_angle = math.acos(1.0 - theta)
    offsets = np.linspace(-half_angle, half_angle, WulffConstants.NET_CHECK_SAMPLES)
    c_hat_net = shape.support_at(net)
    for q, c_q in zip(net, c_hat_net, strict=True):
        ends = _chord_ends(float(c_q), q, radius)
        base = math.atan2(q[1], q[0])
        probes = np.column_stack([np.cos(base + offsets), np.sin(base + offsets)])
        worst = np.min(probes @ ends.T, axis=1)
        if np.any(worst <= (1.0 - epsilon) * shape.support_at(probes)):
            return False
    return True


def approx_inner(shape: WulffShape, epsilon: float) -> InnerCertificate:
    """
    theta-net Q of directions certifying (1 - eps) W inside any convex K in
    B(0, 2/a) that meets every {x.q > c_hat(q)}.

    kappa solves (1 - eps/4)/(1 - eps/2) > 1 + kappa. theta makes c_hat vary
    by less than a factor kappa on caps {e'.q > 1 - theta} (c_hat is
    Lipschitz with the circumradius as constant) and keeps
    sup |x.(e' - q)| over the cap region below (eps/4) min c_hat. The net is
    re-verified on sampled caps and theta halved on failure.

    Raises:
        NetFailureError: If theta falls below its floor
    """
    if not 0.0 < epsilon < 1.0:
        raise WulffError(f"epsilon must lie in (0, 1), got {epsilon}")
    radius = 2.0 / shape.a
    kappa = 0.5 * ((1.0 - epsilon / 4.0) / (1.0 - epsilon / 2.0) - 1.0)
    if shape.dim == 1:
        q = np.array([[1.0], [-1.0]])
        return InnerCertificate(q, shape.support_at(q), epsilon, 1.0, kappa, radius)
    if shape.dim != 2:
        raise WulffError("Half-space certificates are built for d <= 2")

    c_min = float(shape.support.min())
    theta_continuity = 0.5 * (kappa * c_min / shape.circumradius) ** 2
    theta_ball = 0.5 * ((epsilon / 4.0) * c_min / radius) ** 2
    theta = min(theta_continuity, theta_ball, 0.5)

    while theta >= WulffConstants.THETA_MIN:
        n = int(math.ceil(2.0 * math.pi / math.acos(1.0 - theta))) + 1
        net = _net(n)
        if _cap_verified(shape, net, theta, epsilon, radius):
            logger.info(f"Inner certificate for eps={epsilon}: {n} directions, theta={theta:.3g}")
            return InnerCertificate(net, shape.support_at(net), epsilon, theta, kappa, radius)
        logger.debug(f"Net with theta={theta:.3g} failed verification; halving")
        theta *= 0.5
    raise NetFailureError(f"No theta >= {WulffConstants.THETA_MIN} certifies eps={epsilon}")


@dataclass(frozen=True)
class CertificateTrials:
    trials: int
    contained: int
    rejected: int  # candidates outside the certificate's hypotheses

    @property
    def passed(self) -> bool:
        return self.trials > 0 and self.contained == self.trials


def certificate_trials(
    shape: WulffShape,
    certificate: InnerCertificate,
    n_trials: int = 50,
    seed: int = 0,
    n_points: int = 80,
) -> CertificateTrials:
    """
    Random convex polygons meeting the certificate's hypotheses, each checked
    to contain (1 - eps) W.

    A candidate is the hull of boundary points of W pushed out by factors in
    [1.01, 1.3] and shifted by up to 2% of min c_hat; candidates failing
    holds_for are redrawn, up to 20 draws per trial.
    """
    if shape.vertices is None:
        raise WulffError("Certificate trials need vertices (d <= 2)")
    rng = np.random.default_rng(seed)
    boundary = shape.boundary_samples(8 * n_points)
    n_pick = min(n_points, boundary.shape[0])
    target = (1.0 - certificate.epsilon) * shape.vertices
    shift_scale = 0.02 * float(shape.support.min())
    accepted = contained = rejected = 0
    for _ in range(20 * n_trials):
        if accepted == n_trials:
            break
        picks = boundary[rng.choice(boundary.shape[0], size=n_pick, replace=False)]
        stretch = rng.uniform(1.01, 1.3, size=(n_pick, 1))
        shift = rng.uniform(-1.0, 1.0, size=shape.dim) * shift_scale
        body = ConvexHullBody.from_points(picks * stretch + shift)
        if not certificate.holds_for(body):
            rejected += 1
            continue
        accepted += 1
        if np.all(body.contains(target, tol=1e-9)):
            contained += 1
    result = CertificateTrials(accepted, contained, rejected)
    logger.info(
        f"Certificate trials eps={certificate.epsilon}: {contained}/{accepted} contain (1-eps)W "
        f"({rejected} candidates redrawn)"
    )
    return result


def _support_grid(dim: int) -> np.ndarray:
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        return direction_grid(2, WulffConstants.SUPPORT_GRID_2D)
    return direction_grid(3, WulffConstants.SUPPORT_GRID_3D)


def _point_set_to_body(points: np.ndarray, body: ConvexBody) -> float:
    pts = _as_directions(points, body.dim)
    outward = float(np.max(body.distance(pts)))
    if body.dim == 1:
        probes = np.linspace(body.vertices[0, 0], body.vertices[1, 0], 4 * WulffConstants.INTERIOR_SAMPLES)
        probes = probes.reshape(-1, 1)
    else:
        probes = np.vstack([body.boundary_samples(4 * WulffConstants.INTERIOR_SAMPLES), body.interior_samples()])
    inward, _ = cKDTree(pts).query(probes)
    return max(outward, float(np.max(inward)))


def hausdorff(shape_a, shape_b) -> float:
    """
    Hausdorff distance between convex bodies and/or finite point sets.

    Convex vs convex uses the sup of |h_A - h_B| over a direction grid. A
    point set vs a body takes the larger of the farthest point's distance
    to the body and the farthest body sample's distance to the points.
    """
    a_points = isinstance(shape_a, np.ndarray)
    b_points = isinstance(shape_b, np.ndarray)
    if a_points and b_points:
        pa = np.asarray(shape_a, dtype=float).reshape(len(shape_a), -1)
        pb = np.asarray(shape_b, dtype=float).reshape(len(shape_b), -1)
        d_ab, _ = cKDTree(pb).query(pa)
        d_ba, _ = cKDTree(pa).query(pb)
        return float(max(d_ab.max(), d_ba.max()))
    if a_points:
        return _point_set_to_body(shape_a, shape_b)
    if b_points:
        return _point_set_to_body(shape_b, shape_a)
    if shape_a.dim != shape_b.dim:
        raise WulffError("Bodies live in different dimensions")
    grid = _support_grid(shape_a.dim)
    return float(np.max(np.abs(shape_a.support_at(grid) - shape_b.support_at(grid))))


@dataclass(frozen=True)
class CaratheodoryDecomposition:
    """x as a convex combination of at most d+1 vertices"""

    indices: tuple[int, ...]
    weights: np.ndarray
    points: np.ndarray


def caratheodory(shape: ConvexBody, x) -> CaratheodoryDecomposition:
    """
    Write x in the body as a convex combination of <= d+1 of its vertices.

    d=2 searches the fan triangulation from vertex 0 and solves for
    barycentric weights.

    Raises:
        WulffError: If x lies outside the body
    """
    point = np.atleast_1d(np.asarray(x, dtype=float))
    vertices = shape.vertices
    if vertices is None:
        raise WulffError("Decomposition needs vertices")
    tol = WulffConstants.CARATHEODORY_TOL

    if shape.dim == 1:
        lo, hi = float(vertices[0, 0]), float(vertices[1, 0])
        if not lo - tol <= point[0] <= hi + tol:
            raise WulffError(f"{point.tolist()} lies outside [{lo}, {hi}]")
        weight_hi = 0.0 if hi == lo else (point[0] - lo) / (hi - lo)
        weights = np.clip(np.array([1.0 - weight_hi, weight_hi]), 0.0, 1.0)
        return CaratheodoryDecomposition((0, 1), weights, vertices[[0, 1]])

    for i in range(1, vertices.shape[0] - 1):
        triangle = vertices[[0, i, i + 1]]
        system = np.vstack([triangle.T, np.ones(3)])
        try:
            weights = np.linalg.solve(system, np.append(point, 1.0))
        except np.linalg.LinAlgError:
            continue
        if np.all(weights >= -tol):
            weights = np.clip(weights, 0.0, None)
            weights /= weights.sum()
            error = float(np.linalg.norm(weights @ triangle - point))
            if error > tol:
                raise WulffError(f"Decomposition error {error:.3g} above {tol}")
            return CaratheodoryDecomposition((0, i, i + 1), weights, triangle)
    raise WulffError(f"{point.tolist()} lies outside the body")
