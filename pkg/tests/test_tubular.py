import math

import numpy as np
import pytest

from lipimm.errors import DimensionMismatchError, InputError, NonTransversalError
from lipimm.immersion import delta, extract_graph_patch
from lipimm.nets import build_net
from lipimm.normals import constants, direction_field
from lipimm.shapes import make_shape
from lipimm.tubular import (
    ChartField,
    chart_direction_field,
    fiber_intersection,
    inclusion_probe,
    injectivity_probe,
    separation_check,
    tube_params,
)


@pytest.fixture(scope="module")
def circle():
    return make_shape("circle", {"radius": 1.0}, 4096)


@pytest.fixture(scope="module")
def pipeline(circle):
    net = build_net(circle, 0.2, 0.25, 5)
    field = direction_field(circle, net)
    cb = constants(1, 0.25, 0.2)
    d3 = delta(3, 0.2, 0.25)
    params = tube_params(d3, 0.25, cb.L_codim1, cb.gamma)
    return net, field, cb, params


# ---------------------------------------------------------------------------
# tube parameters


def test_tube_params_reference_values():
    cb = constants(1, 0.25, 0.2)
    d3 = delta(3, 0.2, 0.25)
    tp = tube_params(d3, 0.25, cb.L_codim1, cb.gamma)
    assert tp.epsilon == pytest.approx(2.238e-7, rel=1e-3)
    assert tp.sigma == pytest.approx(5.510e-8, rel=1e-3)
    assert tp.active_branch == "curvature"
    assert (d3 / 2) * math.cos(cb.gamma) == pytest.approx(1.167e-3, rel=1e-3)


def test_tube_params_limits():
    tp_small = tube_params(1.0, 0.25, 1e9, 0.9)
    assert tp_small.epsilon < 1e-9 and tp_small.sigma < 1e-9
    tp0 = tube_params(1.0, 0.0, 2.0, 0.0)
    assert tp0.epsilon == pytest.approx(0.5)
    assert tp0.sigma == pytest.approx(min(0.5, 1.0 / (2 * 2.0)))


def test_tube_params_gamma_range():
    with pytest.raises(InputError):
        tube_params(1.0, 0.25, 1.0, math.pi / 2)


def test_tube_params_monotonicity():
    base = tube_params(0.01, 0.25, 100.0, 0.9)
    assert tube_params(0.01, 0.30, 100.0, 0.9).sigma <= base.sigma
    assert tube_params(0.01, 0.25, 200.0, 0.9).sigma <= base.sigma
    assert tube_params(0.02, 0.25, 100.0, 0.9).sigma >= base.sigma


# ---------------------------------------------------------------------------
# fiber intersection


def test_fiber_flat_patch_vertical_line():
    shape = make_shape("rounded-rectangle",
                       {"width": 4.0, "height": 3.0, "corner_radius": 0.5}, 4096)
    q = int(round(1.5 / shape.evaluator.period * 4096))
    patch = extract_graph_patch(shape, q, shape.tangent_plane(q), 0.1)
    normal = patch.isometry.rotation[:, 1]
    anchor = shape.positions[q] + 0.05 * normal + 0.02 * patch.isometry.rotation[:, 0]
    hit = fiber_intersection(patch, normal, anchor)
    assert hit is not None
    expected_foot = shape.positions[q] + 0.02 * patch.isometry.rotation[:, 0]
    assert np.linalg.norm(hit.point - expected_foot) < 1e-10
    assert abs(hit.t) == pytest.approx(0.05, abs=1e-10)


def test_fiber_circle_radial_line(circle, pipeline):
    net, field, cb, params = pipeline
    patch = net.patch(0)
    theta = 0.001
    anchor = 1.001 * np.array([np.cos(theta), np.sin(theta)])
    hit = fiber_intersection(patch, anchor / np.linalg.norm(anchor), anchor)
    assert hit is not None
    # analytic intersection: the unit-circle point at the same angle, up to
    # the patch-grid interpolation error
    expected = np.array([np.cos(theta), np.sin(theta)])
    assert np.linalg.norm(hit.point - expected) < 2e-6
    # the hit lies on the line exactly
    offset = hit.point - anchor
    cross = offset[0] * anchor[1] - offset[1] * anchor[0]
    assert abs(cross) < 1e-12


def test_fiber_parallel_line_misses():
    shape = make_shape("rounded-rectangle",
                       {"width": 4.0, "height": 3.0, "corner_radius": 0.5}, 4096)
    q = int(round(1.5 / shape.evaluator.period * 4096))
    patch = extract_graph_patch(shape, q, shape.tangent_plane(q), 0.1)
    tangent = patch.isometry.rotation[:, 0]
    anchor = shape.positions[q] + 0.05 * patch.isometry.rotation[:, 1]
    with pytest.raises(NonTransversalError):
        fiber_intersection(patch, tangent, anchor)


def test_fiber_off_footprint_returns_none(circle, pipeline):
    net, field, cb, params = pipeline
    patch = net.patch(0)
    # a far-away vertical line whose chart footprint misses the patch
    normal = patch.isometry.rotation[:, 1]
    anchor = circle.positions[0] + 0.5 * patch.isometry.rotation[:, 0]
    assert fiber_intersection(patch, normal, anchor) is None


def test_fiber_requires_codimension_one():
    tilted = make_shape("circle3d", {"radius": 1.0, "tilt": 0.2}, 1024)
    patch = extract_graph_patch(tilted, 0, tilted.tangent_plane(0), 0.2)
    with pytest.raises(DimensionMismatchError):
        fiber_intersection(patch, np.array([0.0, 0.0, 1.0]), tilted.positions[0])


# ---------------------------------------------------------------------------
# probes


def test_injectivity_probe_flat_field():
    shape = make_shape("rounded-rectangle",
                       {"width": 4.0, "height": 3.0, "corner_radius": 0.5}, 4096)
    q = int(round(1.5 / shape.evaluator.period * 4096))
    patch = extract_graph_patch(shape, q, shape.tangent_plane(q), 0.1)
    normal = patch.isometry.rotation[:, 1]
    tf = ChartField(np.array([-0.1, 0.1]), np.stack([normal, normal]))
    rep = injectivity_probe(patch, tf, 10.0, 2000)
    assert rep.injective  # parallel fibers never collide


def test_injectivity_probe_pipeline(circle, pipeline):
    net, field, cb, params = pipeline
    patch = net.patch(0)
    tf = chart_direction_field(field, 0)
    rep = injectivity_probe(patch, tf, params.epsilon, 100000,
                            rho=params.rho)
    assert rep.injective
    assert rep.min_separation > 0
    assert rep.trials == 100000


def test_injectivity_probe_inflated_epsilon_collides(circle, pipeline):
    # the circle's fibers are near-radial and meet around the center, at
    # distance ~1/L_measured ~ 1; inflating epsilon past that scale must
    # produce detected crossings
    net, field, cb, params = pipeline
    patch = net.patch(0)
    tf = chart_direction_field(field, 0)
    rep = injectivity_probe(patch, tf, params.epsilon * 1e7, 20000,
                            rho=params.rho)
    assert not rep.injective
    assert rep.min_separation == 0.0


def test_inclusion_probe_pipeline(circle, pipeline):
    net, field, cb, params = pipeline
    patch = net.patch(0)
    tf = chart_direction_field(field, 0)
    rep = inclusion_probe(patch, tf, params, 10000)
    assert rep.all_reached
    assert rep.reached == rep.count == 10000
    assert rep.max_fiber_offset < params.epsilon


def test_inclusion_probe_beyond_sigma_not_asserted(circle, pipeline):
    # points at distance 2 sigma sit outside the guaranteed collar; the
    # report marks them instead of failing
    net, field, cb, params = pipeline
    patch = net.patch(0)
    tf = chart_direction_field(field, 0)
    inflated = tube_params(params.rho, params.lam, params.L / 2, params.gamma)
    assert inflated.sigma == pytest.approx(2 * params.sigma, rel=1e-12)
    rep = inclusion_probe(patch, tf, inflated, 2000)
    assert rep.count == 2000  # may or may not reach all; no exception either way


def test_separation_inequality_pipeline(circle, pipeline):
    net, field, cb, params = pipeline
    worst = math.inf
    for j in (0, 1024, 2048):
        patch = net.patch(j)
        tf = chart_direction_field(field, j)
        rep = separation_check(patch, tf, cb.gamma, 20000, rho=params.rho)
        assert rep.holds
        worst = min(worst, rep.min_ratio)
    assert worst >= math.cos(cb.gamma) - 1e-9


def test_separation_full_radius(circle, pipeline):
    # the inequality also holds over the full patch radius for the pipeline
    net, field, cb, params = pipeline
    patch = net.patch(77)
    tf = chart_direction_field(field, 77)
    rep = separation_check(patch, tf, cb.gamma, 20000, rho=delta(3, 0.2, 0.25))
    assert rep.holds
