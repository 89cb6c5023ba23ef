"""Phantom sampling, support functions, hulls, and the area error metric."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eithull.geometry import (
    HULL_CLIP_RADIUS,
    Phantom,
    PhantomSamplingError,
    SamplingConfig,
    convex_intersection,
    conductivity_at,
    hull_from_support,
    make_ellipse,
    make_polygon,
    phantom_from_text,
    phantom_is_admissible,
    phantom_to_text,
    point_in_convex,
    polygon_area,
    probe_directions,
    relative_error,
    sample_test_phantom,
    sample_training_phantom,
    support_function,
    support_vector,
    translate,
    true_hull,
)


def disk(cx, cy, r, contrast=2.0):
    return make_ellipse((cx, cy), r, r, 0.0, contrast)


def square(half, center=(0.0, 0.0), contrast=2.0):
    cx, cy = center
    verts = [
        (cx - half, cy - half),
        (cx + half, cy - half),
        (cx + half, cy + half),
        (cx - half, cy + half),
    ]
    return make_polygon(verts, contrast)


# ---------------------------------------------------------------------------
# sampling


def test_forced_single_inclusion_is_admissible():
    # a = b = 0.3 at the origin leaves margin 0.7 >= 0.1 to the boundary
    phantom = Phantom((disk(0.0, 0.0, 0.3),))
    assert phantom_is_admissible(phantom)


def test_training_sampler_respects_documented_ranges():
    rng = np.random.default_rng(7)
    for _ in range(200):
        phantom = sample_training_phantom(rng)
        assert 1 <= len(phantom) <= 3
        for inc in phantom.inclusions:
            assert inc.kind == "ellipse"
            assert 0.05 <= inc.semi_major <= 0.3
            assert 0.05 <= inc.semi_minor <= inc.semi_major
            assert (2.0 <= inc.contrast <= 4.0) or (0.2 <= inc.contrast <= 0.8)


def test_conductive_fraction_is_one_half():
    # Monte-Carlo frequency estimate over 10 000 sampled inclusions
    rng = np.random.default_rng(123)
    conductive = total = 0
    while total < 10_000:
        for inc in sample_training_phantom(rng).inclusions:
            conductive += inc.contrast > 1.0
            total += 1
    assert abs(conductive / total - 0.5) <= 0.02


def test_equilateral_triangle_vertex_spacing():
    # vertices on an r = 0.3 circle, 120 degrees apart: spacing r*sqrt(3) >= r
    r = 0.3
    ang = np.array([0.0, 2 * np.pi / 3, 4 * np.pi / 3])
    verts = r * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    spacing = np.hypot(*(verts[0] - verts[1]))
    assert spacing == pytest.approx(r * math.sqrt(3))
    assert spacing >= r
    make_polygon(verts, 2.0)  # convex CCW accepted


def test_test_sampler_shape_frequencies():
    rng = np.random.default_rng(11)
    counts = {"ellipse": 0, 3: 0, 4: 0}
    total = 0
    while total < 3000:
        for inc in sample_test_phantom(rng).inclusions:
            key = "ellipse" if inc.vertices is None else len(inc.vertices)
            counts[key] += 1
            total += 1
    for key in counts:
        assert abs(counts[key] / total - 1 / 3) <= 0.03


def test_test_sampler_polygon_geometry():
    rng = np.random.default_rng(5)
    seen_polygon = False
    for _ in range(60):
        for inc in sample_test_phantom(rng).inclusions:
            if inc.vertices is None:
                continue
            seen_polygon = True
            center = inc.vertices.mean(axis=0)
            # all vertices on a common circle of radius <= 0.3
            radii = np.hypot(*(inc.vertices - center).T)
            r = radii.mean()
            assert np.allclose(radii, r, atol=1e-9)
            assert 0.15 - 1e-12 <= r <= 0.3 + 1e-12
            assert np.max(radii) <= 0.3 + 1e-9
            # pairwise vertex distance at least r
            v = inc.vertices
            for i in range(len(v)):
                for j in range(i + 1, len(v)):
                    assert np.hypot(*(v[i] - v[j])) >= r - 1e-12
    assert seen_polygon


def test_sampled_phantoms_satisfy_margins_1000_seeds():
    for seed in range(1000):
        rng = np.random.default_rng(seed)
        sampler = sample_training_phantom if seed % 2 == 0 else sample_test_phantom
        assert phantom_is_admissible(sampler(rng))


def test_sampler_rejection_cap_signals():
    # boundary margin 1.0 is unsatisfiable: every inclusion would need to
    # sit outside the disk
    cfg = SamplingConfig(boundary_margin=1.0, max_attempts=50)
    with pytest.raises(PhantomSamplingError):
        sample_training_phantom(np.random.default_rng(0), cfg)


# ---------------------------------------------------------------------------
# conductivity and support functions


def test_conductivity_background_interior_exterior():
    assert conductivity_at(Phantom(()), (0.3, 0.1)) == 1.0
    phantom = Phantom((disk(0.0, 0.0, 0.5, contrast=2.0),))
    assert conductivity_at(phantom, (0.2, 0.0)) == 2.0
    assert conductivity_at(phantom, (0.6, 0.0)) == 1.0


def test_support_function_disks():
    centered = Phantom((disk(0.0, 0.0, 0.5),))
    for theta in np.linspace(0, 2 * np.pi, 17):
        w = np.array([np.cos(theta), np.sin(theta)])
        assert support_function(centered, w) == pytest.approx(0.5, abs=1e-14)
    shifted = Phantom((disk(0.2, 0.0, 0.3),))
    assert support_function(shifted, np.array([1.0, 0.0])) == pytest.approx(0.5, abs=1e-14)


def test_support_function_matches_dense_boundary_oracle():
    # oracle: maximize x . omega over 1e6 points on the exact ellipse boundary
    inc = make_ellipse((0.1, -0.2), 0.3, 0.1, np.pi / 6, 2.0)
    phantom = Phantom((inc,))
    theta = np.pi / 4
    w = np.array([np.cos(theta), np.sin(theta)])
    pts = inc.boundary_points(1_000_000)
    oracle = float(np.max(pts @ w))
    assert support_function(phantom, w) == pytest.approx(oracle, abs=1e-6)


def test_support_function_empty_phantom_is_undefined():
    with pytest.raises(ValueError):
        support_function(Phantom(()), np.array([1.0, 0.0]))


def test_support_vector_centered_disk_constant():
    sv = support_vector(Phantom((disk(0.0, 0.0, 0.5),)))
    assert sv.shape == (45,)
    assert np.allclose(sv, 0.5, atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(
    cx=st.floats(-0.3, 0.3),
    cy=st.floats(-0.3, 0.3),
    a=st.floats(0.05, 0.3),
    ratio=st.floats(0.2, 1.0),
    psi=st.floats(0, 2 * np.pi),
    tx=st.floats(-0.5, 0.5),
    ty=st.floats(-0.5, 0.5),
)
def test_support_vector_translation_covariance(cx, cy, a, ratio, psi, tx, ty):
    phantom = Phantom((make_ellipse((cx, cy), a, max(a * ratio, 1e-3), psi, 2.0),))
    t = np.array([tx, ty])
    base = support_vector(phantom)
    moved = support_vector(translate(phantom, t))
    assert np.allclose(moved, base + probe_directions() @ t, atol=1e-12)


def test_support_vector_union_is_pointwise_max():
    p1 = Phantom((disk(0.3, 0.0, 0.2),))
    p2 = Phantom((disk(-0.2, 0.3, 0.15),))
    union = Phantom(p1.inclusions + p2.inclusions)
    assert np.array_equal(
        support_vector(union), np.maximum(support_vector(p1), support_vector(p2))
    )


# ---------------------------------------------------------------------------
# hulls from support values


def test_hull_from_constant_support_is_circumscribed_45gon():
    hull = hull_from_support(np.full(45, 0.5))
    # oracle: a regular n-gon circumscribing a radius-r circle has area
    # r^2 * n * tan(pi/n)
    oracle_area = 0.25 * 45 * math.tan(np.pi / 45)
    area = polygon_area(hull)
    assert area == pytest.approx(oracle_area, rel=1e-9)
    assert abs(area - np.pi * 0.25) <= 0.003 * np.pi * 0.25


def test_hull_from_exact_square_support():
    sq = square(0.2)
    sv = support_vector(Phantom((sq,)))
    hull = hull_from_support(sv)
    assert polygon_area(hull) >= 0.16 - 1e-12
    # every support plane of a polygon touches it at a corner, so the true
    # corners are recovered as hull vertices
    for corner in sq.vertices:
        d = np.min(np.hypot(hull[:, 0] - corner[0], hull[:, 1] - corner[1]))
        assert d <= 0.01


def test_hull_from_inconsistent_support_is_empty():
    assert hull_from_support(np.full(45, -0.1)).shape == (0, 2)


def test_hull_clipped_to_radius():
    hull = hull_from_support(np.full(45, 10.0))
    radii = np.hypot(hull[:, 0], hull[:, 1])
    assert np.max(radii) <= HULL_CLIP_RADIUS + 1e-9


def test_hull_monotone_in_support_vector():
    rng = np.random.default_rng(3)
    for _ in range(25):
        sv_small = rng.uniform(0.1, 0.4, size=45)
        sv_big = sv_small + rng.uniform(0.0, 0.3, size=45)
        small = hull_from_support(sv_small)
        big = hull_from_support(sv_big)
        if len(small) == 0:
            continue
        # vertices of the smaller hull must lie inside the bigger hull
        assert point_in_convex(big, small, tol=1e-9).all()


def test_round_trip_single_convex_inclusions():
    rng = np.random.default_rng(21)
    for _ in range(20):
        phantom = Phantom((_random_single_inclusion(rng),))
        err = relative_error(true_hull(phantom), hull_from_support(support_vector(phantom)))
        assert err.total <= 0.5


def _random_single_inclusion(rng):
    if rng.uniform() < 0.5:
        a = rng.uniform(0.1, 0.3)
        return make_ellipse(
            (rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4)),
            a,
            rng.uniform(0.05, a),
            rng.uniform(0, np.pi),
            2.0,
        )
    ang = np.sort(rng.uniform(0, 2 * np.pi, size=4))
    while np.min(np.diff(np.concatenate([ang, [ang[0] + 2 * np.pi]]))) < 0.5:
        ang = np.sort(rng.uniform(0, 2 * np.pi, size=4))
    center = np.array([rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3)])
    verts = center + 0.25 * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    return make_polygon(verts, 2.0)


# ---------------------------------------------------------------------------
# relative error


def test_relative_error_identical_is_zero():
    hull = true_hull(Phantom((square(0.2),)))
    err = relative_error(hull, hull)
    assert err.total == 0.0 and err.false_pos == 0.0 and err.false_neg == 0.0


def test_relative_error_empty_reconstruction_is_all_false_negative():
    truth = true_hull(Phantom((square(0.2),)))
    err = relative_error(truth, np.zeros((0, 2)))
    assert err.false_pos == 0.0
    assert err.total == pytest.approx(0.16 / np.pi * 100.0, abs=1e-12)
    assert err.total == pytest.approx(5.092958178940651, abs=1e-9)


def _rasterized_error(truth, recon, n=2000):
    """Pixel-counting oracle for the symmetric-difference area."""
    pts = np.concatenate([p for p in (truth, recon) if len(p)]) if len(truth) or len(recon) else np.zeros((1, 2))
    lo = pts.min(axis=0) - 0.05
    hi = pts.max(axis=0) + 0.05
    xs = np.linspace(lo[0], hi[0], n)
    ys = np.linspace(lo[1], hi[1], n)
    gx, gy = np.meshgrid(xs, ys)
    grid = np.stack([gx.ravel(), gy.ravel()], axis=1)
    in_c = point_in_convex(truth, grid)
    in_b = point_in_convex(recon, grid)
    pixel = (xs[1] - xs[0]) * (ys[1] - ys[0])
    fn = np.count_nonzero(in_c & ~in_b) * pixel
    fp = np.count_nonzero(in_b & ~in_c) * pixel
    return (fn + fp) / np.pi * 100.0


def test_relative_error_matches_rasterization_oracle():
    rng = np.random.default_rng(17)
    for _ in range(8):
        c = np.array([rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2)])
        truth = true_hull(Phantom((square(rng.uniform(0.15, 0.3)),)))
        recon = true_hull(Phantom((square(rng.uniform(0.15, 0.3), center=c),)))
        exact = relative_error(truth, recon).total
        assert abs(exact - _rasterized_error(truth, recon)) <= 0.1


@settings(max_examples=25, deadline=None)
@given(
    h1=st.floats(0.1, 0.3),
    h2=st.floats(0.1, 0.3),
    cx=st.floats(-0.2, 0.2),
    cy=st.floats(-0.2, 0.2),
)
def test_relative_error_symmetry_and_sign(h1, h2, cx, cy):
    a = true_hull(Phantom((square(h1),)))
    b = true_hull(Phantom((square(h2, center=(cx, cy)),)))
    e_ab = relative_error(a, b)
    e_ba = relative_error(b, a)
    assert e_ab.total == pytest.approx(e_ba.total, abs=1e-9)
    assert e_ab.false_pos == pytest.approx(e_ba.false_neg, abs=1e-9)
    assert e_ab.total >= 0.0
    if e_ab.total < 1e-12:
        assert e_ab.false_pos < 1e-12 and e_ab.false_neg < 1e-12


def test_component_errors_sum_to_total():
    truth = true_hull(Phantom((square(0.25),)))
    recon = true_hull(Phantom((square(0.2, center=(0.15, 0.1)),)))
    err = relative_error(truth, recon)
    assert err.total == pytest.approx(err.false_pos + err.false_neg, abs=1e-12)


def test_convex_intersection_against_known_overlap():
    a = true_hull(Phantom((square(0.2),)))
    b = true_hull(Phantom((square(0.2, center=(0.2, 0.0)),)))
    inter = convex_intersection(a, b)
    assert polygon_area(inter) == pytest.approx(0.2 * 0.4, abs=1e-12)


# ---------------------------------------------------------------------------
# text records


def test_phantom_text_round_trip():
    rng = np.random.default_rng(2)
    for _ in range(20):
        phantom = sample_test_phantom(rng)
        restored = phantom_from_text(phantom_to_text(phantom))
        assert len(restored) == len(phantom)
        assert np.array_equal(support_vector(restored), support_vector(phantom))
        for a, b in zip(phantom.inclusions, restored.inclusions):
            assert a.contrast == b.contrast
            assert a.kind == b.kind


def test_phantom_text_rejects_garbage():
    with pytest.raises(ValueError):
        phantom_from_text("blob 1 2 3")
    with pytest.raises(ValueError):
        phantom_from_text("ellipse 1 2 3")
