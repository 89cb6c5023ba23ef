"""Conductivity phantoms on the unit disk and convex-hull geometry.

A phantom is a constant-1 background with up to three disjoint inclusions
(ellipses or convex polygons), each carrying its own contrast value.  This
module provides the random samplers for the training and test families,
exact support functions, hull construction from support values by
half-plane intersection, and the symmetric-difference area metric used to
score reconstructed hulls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Sampling constraints shared by both phantom families.
BOUNDARY_MARGIN = 0.1     # min distance inclusion -> unit circle
PAIR_MARGIN = 0.05        # min distance between inclusions
MAX_ATTEMPTS = 10_000     # rejection-sampling cap per phantom
DIRECTION_COUNT = 45      # probing directions for support vectors
HULL_CLIP_RADIUS = 1.5    # half-plane intersections are clipped to this disk

_PROBE_POINTS = 256       # boundary discretization for margin checks
_ELLIPSE_POLY = 720       # ellipse polygonization for hulls and areas


class PhantomSamplingError(RuntimeError):
    """Rejection sampling exhausted its attempt budget (inconsistent config)."""


@dataclass(frozen=True)
class Inclusion:
    """A single inclusion: an ellipse or a convex CCW polygon.

    Ellipses carry (center, semi_major, semi_minor, rotation); polygons
    carry a (k, 2) vertex array with k in {3, 4}.  ``contrast`` is the
    conductivity value inside the inclusion (background is 1).
    """

    contrast: float
    center: np.ndarray | None = None
    semi_major: float = 0.0
    semi_minor: float = 0.0
    rotation: float = 0.0
    vertices: np.ndarray | None = None

    @property
    def kind(self) -> str:
        return "polygon" if self.vertices is not None else "ellipse"

    def boundary_points(self, n: int = _PROBE_POINTS) -> np.ndarray:
        """Points on the inclusion boundary, (n, 2), counterclockwise."""
        if self.vertices is not None:
            verts = self.vertices
            m = len(verts)
            per = max(1, n // m)
            pts = []
            for i in range(m):
                a, b = verts[i], verts[(i + 1) % m]
                t = np.linspace(0.0, 1.0, per, endpoint=False)[:, None]
                pts.append(a + t * (b - a))
            return np.concatenate(pts)
        t = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        ex = np.stack([self.semi_major * np.cos(t), self.semi_minor * np.sin(t)], axis=1)
        rot = np.array([[c, -s], [s, c]])
        return self.center + ex @ rot.T

    def contains(self, pts: np.ndarray) -> np.ndarray:
        """Boolean mask of points inside (or on) the inclusion."""
        pts = np.atleast_2d(pts)
        if self.vertices is not None:
            verts = self.vertices
            inside = np.ones(len(pts), dtype=bool)
            for i in range(len(verts)):
                a, b = verts[i], verts[(i + 1) % len(verts)]
                e = b - a
                inside &= (e[0] * (pts[:, 1] - a[1]) - e[1] * (pts[:, 0] - a[0])) >= 0.0
            return inside
        d = pts - self.center
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        u = d[:, 0] * c + d[:, 1] * s
        v = -d[:, 0] * s + d[:, 1] * c
        return (u / self.semi_major) ** 2 + (v / self.semi_minor) ** 2 <= 1.0

    def support(self, omega: np.ndarray) -> float:
        """Support value sup_{x in inclusion} x . omega for a unit vector omega."""
        if self.vertices is not None:
            return float(np.max(self.vertices @ omega))
        theta = math.atan2(omega[1], omega[0])
        rad = math.hypot(
            self.semi_major * math.cos(theta - self.rotation),
            self.semi_minor * math.sin(theta - self.rotation),
        )
        return float(self.center @ omega) + rad


@dataclass(frozen=True)
class Phantom:
    """Background conductivity 1 plus a tuple of disjoint inclusions."""

    inclusions: tuple[Inclusion, ...]

    def __len__(self) -> int:
        return len(self.inclusions)


@dataclass(frozen=True)
class SamplingConfig:
    """Ranges and margins for phantom sampling."""

    min_inclusions: int = 1
    max_inclusions: int = 3
    semi_major_range: tuple[float, float] = (0.05, 0.3)
    semi_minor_low: float = 0.05
    conductive_range: tuple[float, float] = (2.0, 4.0)
    resistive_range: tuple[float, float] = (0.2, 0.8)
    conductive_prob: float = 0.5
    polygon_radius_range: tuple[float, float] = (0.15, 0.3)
    boundary_margin: float = BOUNDARY_MARGIN
    pair_margin: float = PAIR_MARGIN
    max_attempts: int = MAX_ATTEMPTS


def make_ellipse(center, semi_major, semi_minor, rotation, contrast) -> Inclusion:
    if not semi_major >= semi_minor > 0:
        raise ValueError("ellipse axes must satisfy a >= b > 0")
    return Inclusion(
        contrast=float(contrast),
        center=np.asarray(center, dtype=float),
        semi_major=float(semi_major),
        semi_minor=float(semi_minor),
        rotation=float(rotation),
    )


def make_polygon(vertices, contrast) -> Inclusion:
    verts = np.asarray(vertices, dtype=float)
    if verts.ndim != 2 or verts.shape[1] != 2 or len(verts) not in (3, 4):
        raise ValueError("polygon inclusions need 3 or 4 vertices")
    if polygon_area(verts) <= 0:
        raise ValueError("polygon vertices must be in CCW order")
    for i in range(len(verts)):
        a = verts[i]
        b = verts[(i + 1) % len(verts)]
        c = verts[(i + 2) % len(verts)]
        if np.cross(b - a, c - b) <= 0:
            raise ValueError("polygon must be convex")
    return Inclusion(contrast=float(contrast), vertices=verts)


def translate(phantom: Phantom, t) -> Phantom:
    """Phantom shifted rigidly by the vector ``t``."""
    t = np.asarray(t, dtype=float)
    moved = []
    for inc in phantom.inclusions:
        if inc.vertices is not None:
            moved.append(Inclusion(contrast=inc.contrast, vertices=inc.vertices + t))
        else:
            moved.append(
                Inclusion(
                    contrast=inc.contrast,
                    center=inc.center + t,
                    semi_major=inc.semi_major,
                    semi_minor=inc.semi_minor,
                    rotation=inc.rotation,
                )
            )
    return Phantom(tuple(moved))


def _circumscribing_disk(inc: Inclusion) -> tuple[np.ndarray, float]:
    if inc.vertices is not None:
        center = inc.vertices.mean(axis=0)
        return center, float(np.max(np.hypot(*(inc.vertices - center).T)))
    return inc.center, inc.semi_major


def _inside_margin(inc: Inclusion, margin: float) -> bool:
    center, radius = _circumscribing_disk(inc)
    if np.hypot(center[0], center[1]) + radius <= 1.0 - margin:
        return True  # circumscribing disk already fits
    pts = inc.boundary_points()
    return float(np.max(np.hypot(pts[:, 0], pts[:, 1]))) <= 1.0 - margin


def _pair_ok(a: Inclusion, b: Inclusion, margin: float) -> bool:
    ca, ra = _circumscribing_disk(a)
    cb, rb = _circumscribing_disk(b)
    if np.hypot(*(ca - cb)) - ra - rb >= margin:
        return True  # disjoint circumscribing disks with clearance
    pa, pb = a.boundary_points(), b.boundary_points()
    d2 = ((pa[:, None, :] - pb[None, :, :]) ** 2).sum(axis=2)
    if d2.min() < margin**2:
        return False
    # boundary separation alone misses full containment
    return not (a.contains(pb[:1])[0] or b.contains(pa[:1])[0])


def phantom_is_admissible(phantom: Phantom, cfg: SamplingConfig | None = None) -> bool:
    """Check the margin constraints via boundary-point discretization.

    Each boundary is sampled at 256 points; the inclusion must stay a
    boundary_margin inside the unit circle and pairwise boundaries must be
    at least pair_margin apart, with no inclusion nested in another.
    """
    cfg = cfg or SamplingConfig()
    incs = phantom.inclusions
    if not all(_inside_margin(inc, cfg.boundary_margin) for inc in incs):
        return False
    return all(
        _pair_ok(incs[i], incs[j], cfg.pair_margin)
        for i in range(len(incs))
        for j in range(i + 1, len(incs))
    )


def _sample_center(rng: np.random.Generator) -> np.ndarray:
    r = math.sqrt(rng.uniform())
    ang = rng.uniform(0.0, 2 * np.pi)
    return np.array([r * math.cos(ang), r * math.sin(ang)])


def _sample_contrast(rng: np.random.Generator, cfg: SamplingConfig) -> float:
    if rng.uniform() < cfg.conductive_prob:
        return rng.uniform(*cfg.conductive_range)
    return rng.uniform(*cfg.resistive_range)


def _sample_ellipse(rng: np.random.Generator, cfg: SamplingConfig) -> Inclusion:
    center = _sample_center(rng)
    psi = rng.uniform(0.0, 2 * np.pi)
    a = rng.uniform(*cfg.semi_major_range)
    b = rng.uniform(cfg.semi_minor_low, a)
    return make_ellipse(center, a, b, psi, _sample_contrast(rng, cfg))


def _sample_polygon(rng: np.random.Generator, cfg: SamplingConfig, nverts: int) -> Inclusion | None:
    """Convex polygon with vertices on a circle of radius r; None if the
    vertex-spacing constraint (pairwise distance >= r) cannot be met."""
    center = _sample_center(rng)
    r = rng.uniform(*cfg.polygon_radius_range)
    for _ in range(100):
        ang = np.sort(rng.uniform(0.0, 2 * np.pi, size=nverts))
        verts = center + r * np.stack([np.cos(ang), np.sin(ang)], axis=1)
        d = np.hypot(
            verts[:, 0] - np.roll(verts[:, 0], -1), verts[:, 1] - np.roll(verts[:, 1], -1)
        )
        pairs_ok = d.min() >= r
        if nverts == 4:
            diag = min(
                np.hypot(*(verts[0] - verts[2])), np.hypot(*(verts[1] - verts[3]))
            )
            pairs_ok = pairs_ok and diag >= r
        if pairs_ok:
            return make_polygon(verts, _sample_contrast(rng, cfg))
    return None


def _place_phantom(rng: np.random.Generator, cfg: SamplingConfig, kinds: list[int]) -> Phantom:
    """Place one inclusion per entry of kinds (0 ellipse, 3/4 polygon).

    Shapes are committed before any placement, so constraint rejection
    cannot bias the shape-kind frequencies: each inclusion's parameters
    are redrawn until it fits the disk margin and the already-placed
    inclusions, with the total draw count capped per phantom.  On a
    stuck configuration the partial placement is discarded and placement
    starts over (same kinds).
    """
    attempts = 0
    while attempts < cfg.max_attempts:
        placed: list[Inclusion] = []
        stuck = False
        for kind in kinds:
            local = 0
            while True:
                attempts += 1
                local += 1
                if attempts >= cfg.max_attempts:
                    raise PhantomSamplingError(
                        f"no admissible phantom after {cfg.max_attempts} attempts"
                    )
                inc = _sample_ellipse(rng, cfg) if kind == 0 else _sample_polygon(rng, cfg, kind)
                if (
                    inc is not None
                    and _inside_margin(inc, cfg.boundary_margin)
                    and all(_pair_ok(inc, other, cfg.pair_margin) for other in placed)
                ):
                    placed.append(inc)
                    break
                if local >= 500:
                    stuck = True  # discard the partial placement and start over
                    break
            if stuck:
                break
        if not stuck:
            return Phantom(tuple(placed))
    raise PhantomSamplingError(f"no admissible phantom after {cfg.max_attempts} attempts")


def sample_training_phantom(rng: np.random.Generator, cfg: SamplingConfig | None = None) -> Phantom:
    """Random phantom of 1-3 elliptical inclusions (training family).

    Semi-major axes are uniform on [0.05, 0.3], semi-minor on [0.05, a];
    each inclusion is conductive or resistive with probability 1/2.
    Placement is resampled until the margin constraints hold.
    """
    cfg = cfg or SamplingConfig()
    n = int(rng.integers(cfg.min_inclusions, cfg.max_inclusions + 1))
    return _place_phantom(rng, cfg, [0] * n)


def sample_test_phantom(rng: np.random.Generator, cfg: SamplingConfig | None = None) -> Phantom:
    """Random phantom of 1-3 inclusions, each independently an ellipse,
    triangle, or convex quadrilateral with probability 1/3.

    Triangles and quadrilaterals have their vertices on a circle of radius
    r uniform on [0.15, 0.3] with pairwise vertex distance at least r.
    """
    cfg = cfg or SamplingConfig()
    n = int(rng.integers(cfg.min_inclusions, cfg.max_inclusions + 1))
    kinds = [(0, 3, 4)[int(rng.integers(0, 3))] for _ in range(n)]
    return _place_phantom(rng, cfg, kinds)


def conductivity_at(phantom: Phantom, x) -> float:
    """Conductivity value at a single point (contrast inside an inclusion, else 1)."""
    x = np.asarray(x, dtype=float)
    for inc in phantom.inclusions:
        if inc.contains(x[None, :])[0]:
            return inc.contrast
    return 1.0


def conductivity_field(phantom: Phantom, pts: np.ndarray) -> np.ndarray:
    """Vectorized conductivity lookup for an (n, 2) array of points."""
    out = np.ones(len(pts))
    for inc in phantom.inclusions:
        mask = inc.contains(pts)
        out[mask] = inc.contrast
    return out


def probe_directions(m: int = DIRECTION_COUNT) -> np.ndarray:
    """Unit vectors (m, 2) at angles 2*pi*(i-1)/m, i = 1..m."""
    th = 2 * np.pi * np.arange(m) / m
    return np.stack([np.cos(th), np.sin(th)], axis=1)


def support_function(phantom: Phantom, omega) -> float:
    """Support value of the inclusion set in direction omega (|omega| = 1)."""
    if not phantom.inclusions:
        raise ValueError("support function is undefined for an empty phantom")
    omega = np.asarray(omega, dtype=float)
    return max(inc.support(omega) for inc in phantom.inclusions)


def support_vector(phantom: Phantom) -> np.ndarray:
    """Support values over the 45 standard probing directions."""
    dirs = probe_directions()
    return np.array([support_function(phantom, w) for w in dirs])


# ---------------------------------------------------------------------------
# convex polygon machinery


def polygon_area(poly: np.ndarray) -> float:
    """Signed shoelace area (CCW positive); 0 for degenerate input."""
    if poly is None or len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def clip_halfplane(poly: np.ndarray, normal: np.ndarray, offset: float) -> np.ndarray:
    """Clip a convex CCW polygon to the half-plane {x . normal <= offset}."""
    if len(poly) == 0:
        return poly
    d = poly @ normal - offset
    out: list[np.ndarray] = []
    n = len(poly)
    for i in range(n):
        j = (i + 1) % n
        pi, pj = poly[i], poly[j]
        di, dj = d[i], d[j]
        if di <= 0.0:
            out.append(pi)
        if (di < 0.0) != (dj < 0.0) and di != dj:
            t = di / (di - dj)
            out.append(pi + t * (pj - pi))
    if len(out) < 3:
        return np.zeros((0, 2))
    return np.array(out)


def convex_intersection(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Intersection of two convex CCW polygons (Sutherland-Hodgman)."""
    if len(p) == 0 or len(q) == 0:
        return np.zeros((0, 2))
    result = p
    n = len(q)
    for i in range(n):
        a, b = q[i], q[(i + 1) % n]
        e = b - a
        normal = np.array([e[1], -e[0]])  # outward for CCW clip polygon
        result = clip_halfplane(result, normal, float(normal @ a))
        if len(result) == 0:
            return result
    return result


def point_in_convex(poly: np.ndarray, pts: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Mask of points inside a convex CCW polygon (boundary counts as inside)."""
    pts = np.atleast_2d(pts)
    if len(poly) < 3:
        return np.zeros(len(pts), dtype=bool)
    inside = np.ones(len(pts), dtype=bool)
    n = len(poly)
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        e = b - a
        inside &= (e[0] * (pts[:, 1] - a[1]) - e[1] * (pts[:, 0] - a[0])) >= -tol
    return inside


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Convex hull of a point cloud (monotone chain), CCW without repeats."""
    pts = np.unique(np.asarray(points, dtype=float), axis=0)
    if len(pts) < 3:
        return pts
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def half(seq):
        chain: list[np.ndarray] = []
        for p in seq:
            while len(chain) >= 2 and np.cross(chain[-1] - chain[-2], p - chain[-2]) <= 0:
                chain.pop()
            chain.append(p)
        return chain

    lower = half(pts)
    upper = half(pts[::-1])
    return np.array(lower[:-1] + upper[:-1])


def hull_from_support(sv: np.ndarray) -> np.ndarray:
    """Intersection of the half-planes {x . omega_i <= sv[i]}.

    The result is clipped to the disk of radius 1.5 (polygonized at 720
    points).  An empty array is returned when the intersection is empty,
    which is a legitimate reconstruction ("no inclusion detected").
    """
    sv = np.asarray(sv, dtype=float)
    dirs = probe_directions(len(sv))
    t = np.linspace(0.0, 2 * np.pi, _ELLIPSE_POLY, endpoint=False)
    poly = HULL_CLIP_RADIUS * np.stack([np.cos(t), np.sin(t)], axis=1)
    for w, h in zip(dirs, sv):
        poly = clip_halfplane(poly, w, float(h))
        if len(poly) == 0:
            break
    return poly


def true_hull(phantom: Phantom) -> np.ndarray:
    """Convex hull of the inclusion set (ellipses polygonized to 720 points)."""
    pts = []
    for inc in phantom.inclusions:
        if inc.vertices is not None:
            pts.append(inc.vertices)
        else:
            pts.append(inc.boundary_points(_ELLIPSE_POLY))
    return convex_hull(np.concatenate(pts))


@dataclass(frozen=True)
class HullError:
    """Symmetric-difference error of a reconstructed hull, in percent of the
    unit-disk area, split into false positives and false negatives."""

    total: float
    false_pos: float
    false_neg: float


def relative_error(truth: np.ndarray, recon: np.ndarray) -> HullError:
    """(|C \\ B| + |B \\ C|) / pi * 100 for true hull C and reconstruction B.

    Both polygons are convex (possibly empty), so the set differences
    reduce to areas minus the area of the clipped intersection.
    """
    area_c = polygon_area(truth)
    area_b = polygon_area(recon)
    area_i = polygon_area(convex_intersection(truth, recon))
    false_neg = max(area_c - area_i, 0.0) / np.pi * 100.0
    false_pos = max(area_b - area_i, 0.0) / np.pi * 100.0
    return HullError(false_pos + false_neg, false_pos, false_neg)


# ---------------------------------------------------------------------------
# structured-text phantom records (used in dataset manifests)


def phantom_to_text(phantom: Phantom) -> str:
    """One-line structured-text record of a phantom."""
    parts = []
    for inc in phantom.inclusions:
        if inc.vertices is not None:
            nums = " ".join(repr(float(v)) for v in inc.vertices.ravel())
            parts.append(f"polygon {nums} {inc.contrast!r}")
        else:
            parts.append(
                "ellipse "
                f"{inc.center[0]!r} {inc.center[1]!r} {inc.semi_major!r} "
                f"{inc.semi_minor!r} {inc.rotation!r} {inc.contrast!r}"
            )
    return " ; ".join(parts)


def phantom_from_text(text: str) -> Phantom:
    """Inverse of phantom_to_text."""
    text = text.strip()
    if not text:
        return Phantom(())
    incs = []
    for part in text.split(";"):
        fields = part.split()
        kind, vals = fields[0], [float(v) for v in fields[1:]]
        if kind == "ellipse":
            if len(vals) != 6:
                raise ValueError(f"malformed ellipse record: {part!r}")
            incs.append(make_ellipse(vals[:2], vals[2], vals[3], vals[4], vals[5]))
        elif kind == "polygon":
            verts = np.array(vals[:-1]).reshape(-1, 2)
            incs.append(make_polygon(verts, vals[-1]))
        else:
            raise ValueError(f"unknown inclusion kind: {kind!r}")
    return Phantom(tuple(incs))
