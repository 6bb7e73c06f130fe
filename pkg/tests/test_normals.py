import math

import numpy as np
import pytest

from lipimm.errors import (
    CoherenceViolationError,
    InputError,
    RegimeError,
)
from lipimm.grassmann import geodesic_distance, orthonormalize, sphere_angle
from lipimm.immersion import EuclideanIsometry, GraphPatch, extract_graph_patch
from lipimm.karcher import karcher_mean
from lipimm.nets import build_net
from lipimm.normals import (
    NormalMeasureField,
    angle_bound_check,
    averaged_normal_N,
    averaged_vector_S,
    constants,
    cutoff_g,
    direction_field,
    field_lipschitz_check,
    make_cutoff,
    n_lipschitz_check,
    normal_measure,
    normal_sign_alignment,
    normal_space,
    transfer_net,
    unit_normal_patch,
)
from lipimm.shapes import make_shape


@pytest.fixture(scope="module")
def circle():
    return make_shape("circle", {"radius": 1.0}, 4096)


@pytest.fixture(scope="module")
def circle_net(circle):
    return build_net(circle, 0.2, 0.25, 5)


@pytest.fixture(scope="module")
def circle_field(circle, circle_net):
    return direction_field(circle, circle_net)


@pytest.fixture(scope="module")
def tilted():
    return make_shape("circle3d", {"radius": 1.0, "tilt": 0.2}, 2048)


@pytest.fixture(scope="module")
def tilted_net(tilted):
    return build_net(tilted, 0.2, 0.25, 5)


@pytest.fixture(scope="module")
def tilted_field(tilted, tilted_net):
    return NormalMeasureField(tilted, tilted_net)


# ---------------------------------------------------------------------------
# cutoff


def test_cutoff_endpoint_values():
    g = make_cutoff(0.25)
    assert cutoff_g(0.0, g) == 1.0
    assert cutoff_g(2.0, g) == 0.0
    assert np.all(cutoff_g(np.linspace(0, g.inner * 0.999, 100), g) == 1.0)
    assert np.all(cutoff_g(np.linspace(1.0 + 1e-12, 3.0, 100), g) == 0.0)


def test_cutoff_range_and_slope_bound():
    for lam in (0.0, 0.25, 1.0, 4.0):
        g = make_cutoff(lam)
        ts = np.linspace(0.0, 2.0, 100001)
        vals = cutoff_g(ts, g)
        assert np.all((0.0 <= vals) & (vals <= 1.0))
        der = g.derivative(ts)
        assert np.all(der <= 0.0)
        assert np.min(der) >= -2.0 - 1e-9


def test_cutoff_derivative_matches_finite_differences():
    g = make_cutoff(0.25)
    ts = np.linspace(0.01, 1.99, 4001)
    h = 1e-6
    fd = (g.value(ts + h) - g.value(ts - h)) / (2 * h)
    assert np.max(np.abs(fd - g.derivative(ts))) < 5e-5


def test_cutoff_monotone_and_continuous():
    g = make_cutoff(0.25)
    ts = np.linspace(0.0, 1.5, 20001)
    vals = cutoff_g(ts, g)
    assert np.all(np.diff(vals) <= 1e-15)
    assert np.max(np.abs(np.diff(vals))) < 2.5 * (ts[1] - ts[0]) * 2.0


def test_cutoff_rejects_negative_argument():
    with pytest.raises(InputError):
        cutoff_g(-0.1, make_cutoff(0.25))


# ---------------------------------------------------------------------------
# constants


def test_constants_reference_values():
    c = constants(1, 0.25, 0.2)
    assert c.gamma == pytest.approx(0.907888, abs=1e-6)
    assert math.cos(c.gamma) == pytest.approx(0.61543, abs=2e-5)
    assert c.L_codim1 == pytest.approx(2.7497e6, rel=1e-4)
    assert c.epsilon == pytest.approx(2.238e-7, rel=1e-3)
    assert c.sigma == pytest.approx(5.510e-8, rel=1e-3)
    assert c.L_highercodim == pytest.approx(4 ** 18 / 0.2, rel=1e-12)
    assert c.Lambda == pytest.approx(1.2543e6, rel=1e-3)
    assert c.Lambda_sharp == pytest.approx(3.125, abs=1e-12)


def test_constants_degenerate_lambdas():
    c1 = constants(1, 1.0, 0.2)
    assert c1.gamma == pytest.approx(3 * math.pi / 8, abs=1e-12)
    assert math.cos(c1.gamma) == pytest.approx(0.382683, abs=1e-6)
    c0 = constants(1, 0.0, 0.2)
    assert c0.gamma == pytest.approx(math.pi / 4, abs=1e-15)
    assert c0.sigma == pytest.approx(0.5 / (2 * c0.L_codim1), rel=1e-12)


# ---------------------------------------------------------------------------
# unit normals on patches


def test_unit_normal_flat_patch():
    shape = make_shape("rounded-rectangle",
                       {"width": 4.0, "height": 3.0, "corner_radius": 0.5}, 4096)
    q = int(round(1.5 / shape.evaluator.period * 4096))
    patch = extract_graph_patch(shape, q, shape.tangent_plane(q), 0.1)
    field = unit_normal_patch(patch)
    normals = field.at(np.linspace(-0.09, 0.09, 11))
    expected = patch.isometry.rotation[:, 1]
    assert np.max(np.linalg.norm(normals - expected, axis=1)) < 1e-9


def test_unit_normal_circle_is_radial(circle):
    patch = extract_graph_patch(circle, 0, circle.tangent_plane(0), 0.2)
    field = unit_normal_patch(patch)
    members = patch.member_samples[::16]
    normals = field.at_samples(members)
    radial = circle.positions[members]
    dots = np.abs(np.einsum("ij,ij->i", normals, radial))
    assert np.all(dots > 1 - 1e-6)
    # deterministic sign: positive component along the isometry's last axis
    last = patch.isometry.rotation[:, 1]
    assert np.all(normals @ last > 0)


def test_unit_normal_orthogonal_to_tangents(circle):
    patch = extract_graph_patch(circle, 100, circle.tangent_plane(100), 0.2)
    field = unit_normal_patch(patch)
    members = patch.member_samples[::8]
    normals = field.at_samples(members)
    tangents = circle.evaluator.jacobian(circle.params[members])
    tangents /= np.linalg.norm(tangents, axis=1, keepdims=True)
    assert np.max(np.abs(np.einsum("ij,ij->i", normals, tangents))) < 2e-5


def test_unit_normal_requires_codimension_one(tilted):
    patch = extract_graph_patch(tilted, 0, tilted.tangent_plane(0), 0.2)
    from lipimm.errors import DimensionMismatchError
    with pytest.raises(DimensionMismatchError):
        unit_normal_patch(patch)


# ---------------------------------------------------------------------------
# sign alignment


def test_sign_alignment_self_and_adjacent(circle, circle_net):
    assert normal_sign_alignment(circle, circle_net, 0, 0) == 1
    assert normal_sign_alignment(circle, circle_net, 0, 1) == 1


def _flip_patch(patch):
    # the same physical graph written with the rotated-by-pi isometry has the
    # opposite continuous normal
    flipped = GraphPatch(
        patch.base, patch.plane,
        EuclideanIsometry(-patch.isometry.rotation, patch.isometry.translation),
        patch.radius, patch.x_nodes, -patch.u[::-1], patch.lambda_measured,
        patch.member_samples, -patch.member_proj, -patch.member_heights,
        patch.m, patch.k, patch.grid_step)
    flipped._du = patch._du[::-1]
    return flipped


def test_sign_alignment_detects_negated_patch(circle):
    net = build_net(circle, 0.2, 0.25, 5)
    patch = net.patch(1)
    flipped = _flip_patch(patch)
    a = unit_normal_patch(patch).at_samples(patch.member_samples[:5])
    b = unit_normal_patch(flipped).at_samples(patch.member_samples[:5])
    assert np.allclose(a, -b, atol=1e-12)
    # drive the dichotomy through the alignment op itself
    net._patches[1] = flipped
    assert normal_sign_alignment(circle, net, 0, 1) == -1


def test_sign_alignment_mixed_signs_is_coherence_error(circle, monkeypatch):
    # honest graph normals cannot mix signs (their last patch-frame component
    # is pinned positive); corrupt the evaluation to exercise the guard
    net = build_net(circle, 0.2, 0.25, 5)
    import lipimm.normals as normals_mod

    real = normals_mod.unit_normal_patch

    class Corrupted:
        def __init__(self, inner):
            self.inner = inner

        def at_samples(self, ids):
            out = self.inner.at_samples(ids)
            out[::2] = -out[::2]
            return out

    def fake(patch):
        field = real(patch)
        return Corrupted(field) if patch.base == int(net.points[1]) else field

    monkeypatch.setattr(normals_mod, "unit_normal_patch", fake)
    with pytest.raises(CoherenceViolationError):
        normals_mod.normal_sign_alignment(circle, net, 0, 1)


def test_sign_alignment_requires_overlap(circle, circle_net):
    with pytest.raises(InputError):
        normal_sign_alignment(circle, circle_net, 0, 2048)


# ---------------------------------------------------------------------------
# averaged field


def test_averaged_vector_lower_bound_flat():
    flat = make_shape("circle", {"radius": 2.0}, 2048)
    net = build_net(flat, 0.2, 0.25, 5)
    s = averaged_vector_S(flat, net, 100, 100)
    assert np.linalg.norm(s) >= 1.0  # aligned sum with one unit weight


def test_averaged_vector_bound_formula():
    assert 1 / 1.25 == 0.8


def test_direction_field_min_norm_regression(circle_field):
    assert float(np.min(circle_field.S_norm)) >= 0.8
    assert float(np.min(circle_field.S_norm)) == pytest.approx(11.7447, abs=1e-3)


def test_direction_field_overlap_agreement(circle_field):
    assert circle_field.overlap_span_max <= 1e-9


def test_direction_field_requires_level_4(circle):
    net1 = build_net(circle, 0.2, 0.25, 1)
    with pytest.raises(InputError):
        direction_field(circle, net1)


def test_direction_field_on_sphere():
    sphere = make_shape("sphere", {"radius": 1.0}, "48x24")
    net = build_net(sphere, 0.15, 0.25, 5)
    field = direction_field(sphere, net)
    assert field.overlap_span_max <= 1e-9
    assert float(np.min(field.S_norm)) >= 0.8
    # the averaged direction of a sphere is radial
    dots = np.abs(np.einsum("ij,ij->i", field.T, sphere.positions))
    assert np.min(dots) > 0.99


def test_angle_bound_check_self(circle_field, circle):
    report = angle_bound_check(circle_field, circle)
    assert report.precondition_ok
    assert report.worst_hausdorff == 0.0
    assert report.holds
    assert report.worst_angle <= math.atan(0.25) + 1e-9  # self-case margin
    assert report.gamma == pytest.approx(0.907888, abs=1e-6)


def test_angle_bound_check_nearby_circle(circle, circle_net, circle_field):
    other = make_shape("circle", {"radius": 1.01}, 4096)
    report = angle_bound_check(circle_field, other,
                               chart_ids=range(0, 4096, 32))
    assert report.precondition_ok
    assert report.holds
    assert report.worst_angle < report.gamma


def test_field_lipschitz_regression(circle_field):
    worst = 0.0
    for j in range(0, len(circle_field.net), 4):
        rep = field_lipschitz_check(circle_field, j)
        assert rep.holds
        worst = max(worst, rep.empirical)
    assert worst <= 2.7497e6
    assert worst == pytest.approx(1.0, abs=1e-3)  # pinned: unit rotation rate


def test_field_lipschitz_constant_field_is_zero(circle_field):
    # a chart with a single delta_3 sample has empirical constant 0
    rep = field_lipschitz_check(circle_field, 0)
    assert rep.empirical > 0  # degenerate net charts hold ~5 samples
    bound = (3 * 1.25) ** 10 / 0.2
    assert rep.bound == pytest.approx(bound, rel=1e-12)


# ---------------------------------------------------------------------------
# higher codimension


def test_normal_measure_single_atom():
    sparse = make_shape("circle3d", {"radius": 1.0, "tilt": 0.2}, 256)
    net = build_net(sparse, 0.2, 0.25, 5)
    mu = normal_measure(sparse, net, 10)
    assert len(mu.atoms) == 1
    n_q = averaged_normal_N(sparse, net, 10)
    assert n_q.same_subspace(mu.atoms[0])


def test_normal_measure_support_bound(tilted, tilted_field):
    margins = [tilted_field.support_margin(q) for q in range(0, 2048, 64)]
    assert max(margins) < math.pi / 12
    assert max(margins) <= 0.25  # chain of bounds: <= lambda <= 1/4


def test_normal_measure_weight_normalization(tilted, tilted_net):
    mu = normal_measure(tilted, tilted_net, 77)
    assert float(np.sum(mu.weights)) == pytest.approx(1.0, abs=1e-12)
    assert len(mu.atoms) >= 1


def test_regime_error_beyond_quarter(circle):
    net = build_net(circle, 0.2, 0.3, 5, verify_immersion=False)
    with pytest.raises(RegimeError):
        NormalMeasureField(circle, net)


def test_averaged_normal_matches_grid_oracle(tilted, tilted_field):
    q = 123
    mu = tilted_field.measure(q)
    mean = tilted_field.mean(q)
    cvec = tilted.tangent_plane(q).frame[:, 0]
    qq, _ = np.linalg.qr(np.column_stack([cvec, np.eye(3)]))
    e1, e2 = qq[:, 1], qq[:, 2]
    atoms_l = np.stack([a.complement().frame[:, 0] for a in mu.atoms])
    w = mu.weights
    best, best_val = None, np.inf
    for rho in np.arange(0.0, 0.06, 1e-3):
        if rho == 0.0:
            pts = cvec[None, :]
        else:
            n_phi = max(8, int(np.ceil(2 * np.pi * rho / 1e-3)))
            phi = np.linspace(0, 2 * np.pi, n_phi, endpoint=False)
            pts = (np.cos(rho) * cvec[None, :]
                   + np.sin(rho) * (np.cos(phi)[:, None] * e1[None, :]
                                    + np.sin(phi)[:, None] * e2[None, :]))
        d = np.arccos(np.clip(np.abs(pts @ atoms_l.T), 0.0, 1.0))
        vals = d ** 2 @ w
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val, best = float(vals[i]), pts[i]
    oracle = orthonormalize(best[:, None]).complement()
    assert geodesic_distance(mean, oracle) <= 1e-3


def test_averaged_normal_two_symmetric_atoms(tilted):
    # symmetric mixture about nu(q) averages back to nu(q)
    from lipimm.grassmann import exp_map, log_map, random_tangent
    from lipimm.karcher import DiracMixture
    nu_q = normal_space(tilted, 0)
    rng = np.random.default_rng(3)
    v = random_tangent(nu_q, rng, norm=0.2)
    a = exp_map(nu_q, v)
    b = exp_map(nu_q, v.scaled(-1.0))
    mu = DiracMixture((a, b), np.array([0.5, 0.5]))
    mean = karcher_mean(mu, center=nu_q).mean
    assert geodesic_distance(mean, nu_q) < 1e-9


def test_n_lipschitz_and_smoothness_proxy(tilted, tilted_field):
    worst = 0.0
    for j in range(0, 2048, 16):
        rep = n_lipschitz_check(tilted_field, j)
        assert rep.holds
        worst = max(worst, rep.empirical)
    assert worst <= 4 ** 18 / 0.2
    assert worst == pytest.approx(1.0, abs=1e-2)  # pinned: unit rotation rate
    # smoothness proxy: successive differences along the curve neither jump
    # nor oscillate: second differences stay bounded by the first ones
    ids = list(range(300, 340))
    means = [tilted_field.mean(q) for q in ids]
    first = np.array([geodesic_distance(means[i], means[i + 1])
                      for i in range(len(means) - 1)])
    second = np.abs(np.diff(first))
    assert np.all(first > 0)
    assert np.max(second) < 10 * np.median(first)


def test_codim1_normal_measure_consistent_with_direction_field(circle, circle_net, circle_field):
    # in codimension one the normal-space mean must span the same line as S
    nf = NormalMeasureField(circle, circle_net)
    for q in (0, 511, 2047):
        mean = nf.mean(q)
        t_line = orthonormalize(circle_field.T[q][:, None])
        assert geodesic_distance(mean, t_line) < 0.3  # same up to tilt of S
