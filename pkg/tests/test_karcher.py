import math

import numpy as np
import pytest

from lipimm.errors import InadmissibleSupportError
from lipimm.grassmann import (
    Subspace,
    exp_map,
    geodesic_distance,
    log_map,
    orthonormalize,
    random_subspace,
    random_tangent,
)
from lipimm.karcher import (
    DiracMixture,
    admissible_radius,
    energy,
    energy_gradient,
    karcher_mean,
    stability_constant,
    verify_stability,
)


def line(v):
    return orthonormalize(np.asarray(v, dtype=float)[:, None])


def mixture(atoms, weights):
    return DiracMixture(tuple(atoms), np.asarray(weights, dtype=float))


# ---------------------------------------------------------------------------
# energy / gradient


def test_energy_single_atom():
    n = line([1.0, 0.0, 0.0])
    mu = mixture([n], [1.0])
    assert energy(n, mu) == 0.0
    p = exp_map(n, random_tangent(n, np.random.default_rng(0), norm=np.pi / 4))
    assert energy(p, mu) == pytest.approx(np.pi ** 2 / 16, abs=1e-10)


def test_energy_two_equal_atoms():
    rng = np.random.default_rng(1)
    p = random_subspace(4, 2, rng)
    x1 = exp_map(p, random_tangent(p, rng, norm=0.3))
    x2 = exp_map(p, random_tangent(p, rng, norm=0.45))
    mu = mixture([x1, x2], [0.5, 0.5])
    a, b = geodesic_distance(p, x1), geodesic_distance(p, x2)
    assert energy(p, mu) == pytest.approx((a * a + b * b) / 2, abs=1e-12)


def test_gradient_zero_at_single_atom():
    n = line([0.0, 1.0, 0.0])
    g = energy_gradient(n, mixture([n], [1.0]))
    assert g.norm() == pytest.approx(0.0, abs=1e-12)


def test_gradient_zero_at_symmetric_midpoint():
    rng = np.random.default_rng(2)
    base = random_subspace(4, 2, rng)
    v = random_tangent(base, rng, norm=0.25)
    x1 = exp_map(base, v)
    x2 = exp_map(base, v.scaled(-1.0))
    g = energy_gradient(base, mixture([x1, x2], [0.5, 0.5]))
    assert g.norm() < 1e-10


def finite_difference_directional(p, mu, direction, h=1e-5):
    e_plus = energy(exp_map(p, direction.scaled(h)), mu)
    e_minus = energy(exp_map(p, direction.scaled(-h)), mu)
    return (e_plus - e_minus) / (2 * h)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(100):
        n, k = rng.choice([(3, 1), (4, 2)])
        p = random_subspace(n, k, rng)
        atoms = [exp_map(p, random_tangent(p, rng, norm=rng.uniform(0.05, 0.4)))
                 for _ in range(3)]
        w = rng.uniform(0.2, 1.0, size=3)
        mu = mixture(atoms, w / w.sum())
        grad = energy_gradient(p, mu)
        direction = random_tangent(p, rng, norm=1.0)
        fd = finite_difference_directional(p, mu, direction)
        analytic = float(np.sum(grad.delta * direction.delta))
        worst = max(worst, abs(fd - analytic) / max(1.0, abs(fd)))
    assert worst < 1e-6


# ---------------------------------------------------------------------------
# karcher_mean


def test_mean_of_single_atom():
    n = line([1.0, 2.0, 2.0])
    report = karcher_mean(mixture([n], [1.0]))
    assert report.mean.same_subspace(n)
    assert report.iterations <= 1
    assert report.final_gradient_norm <= 1e-10


def test_mean_two_atoms_is_geodesic_midpoint():
    rng = np.random.default_rng(4)
    a = random_subspace(3, 1, rng)
    v = random_tangent(a, rng, norm=0.6)
    b = exp_map(a, v)
    midpoint = exp_map(a, v.scaled(0.5))
    # distance 0.6 exceeds the admissible radius seen from either atom, so the
    # caller supplies the midpoint as ball center
    report = karcher_mean(mixture([a, b], [0.5, 0.5]), center=midpoint)
    assert geodesic_distance(report.mean, midpoint) < 1e-9
    assert report.final_gradient_norm <= 1e-10


def test_mean_atom_order_invariance():
    rng = np.random.default_rng(5)
    c = random_subspace(4, 2, rng)
    atoms = [exp_map(c, random_tangent(c, rng, norm=rng.uniform(0.05, 0.3)))
             for _ in range(4)]
    w = np.array([0.4, 0.3, 0.2, 0.1])
    m1 = karcher_mean(mixture(atoms, w), center=c).mean
    perm = [2, 0, 3, 1]
    m2 = karcher_mean(mixture([atoms[i] for i in perm], w[perm]), center=c).mean
    assert geodesic_distance(m1, m2) < 1e-9


def test_mean_energy_monotone_and_inside_ball():
    rng = np.random.default_rng(6)
    c = random_subspace(4, 2, rng)
    atoms = [exp_map(c, random_tangent(c, rng, norm=rng.uniform(0.1, 0.45)))
             for _ in range(5)]
    w = rng.uniform(0.1, 1.0, 5)
    report = karcher_mean(mixture(atoms, w / w.sum()), center=c)
    trace = np.array(report.energy_trace)
    assert np.all(np.diff(trace) <= 1e-15)
    assert geodesic_distance(report.mean, c) <= report.admissible_ball_radius + 1e-9


def test_mean_equivariance_under_rotation():
    rng = np.random.default_rng(7)
    c = random_subspace(4, 2, rng)
    atoms = [exp_map(c, random_tangent(c, rng, norm=0.3)) for _ in range(3)]
    w = np.array([0.5, 0.3, 0.2])
    m = karcher_mean(mixture(atoms, w), center=c).mean
    q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    rotated = [Subspace(q @ a.frame) for a in atoms]
    m_rot = karcher_mean(mixture(rotated, w), center=Subspace(q @ c.frame)).mean
    assert geodesic_distance(m_rot, Subspace(q @ m.frame)) < 1e-8


def test_mean_inadmissible_support():
    a = line([1.0, 0.0, 0.0])
    b = exp_map(a, random_tangent(a, np.random.default_rng(8), norm=0.7))
    with pytest.raises(InadmissibleSupportError):
        karcher_mean(mixture([a, b], [0.5, 0.5]))  # 0.7 > pi/(4 sqrt 2) from a


def grid_search_oracle(mu, center, radius, step=1e-3):
    """Brute-force minimizer of the energy over a geodesic polar grid on G_{3,1}."""
    c = center.frame[:, 0]
    # orthonormal tangent frame at the center line
    q, _ = np.linalg.qr(np.column_stack([c, np.eye(3)]))
    e1, e2 = q[:, 1], q[:, 2]
    best_val, best_vec = np.inf, c
    atoms = np.column_stack([a.frame[:, 0] for a in mu.atoms])  # (3, A)
    w = mu.weights
    radii = np.arange(0.0, radius + step, step)
    for rho in radii:
        if rho == 0.0:
            pts = c[None, :]
        else:
            n_phi = max(8, int(np.ceil(2 * np.pi * rho / step)))
            phi = np.linspace(0.0, 2 * np.pi, n_phi, endpoint=False)
            pts = (np.cos(rho) * c[None, :]
                   + np.sin(rho) * (np.cos(phi)[:, None] * e1[None, :]
                                    + np.sin(phi)[:, None] * e2[None, :]))
        d = np.arccos(np.clip(np.abs(pts @ atoms), 0.0, 1.0))
        vals = d ** 2 @ w
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val, best_vec = float(vals[i]), pts[i]
    return line(best_vec)


def test_mean_matches_grid_oracle_g31():
    rng = np.random.default_rng(9)
    for _ in range(20):
        c = random_subspace(3, 1, rng)
        atoms = [exp_map(c, random_tangent(c, rng, norm=rng.uniform(0.02, 0.2)))
                 for _ in range(3)]
        w = rng.uniform(0.2, 1.0, 3)
        mu = mixture(atoms, w / w.sum())
        report = karcher_mean(mu, center=c)
        oracle = grid_search_oracle(mu, c, radius=0.25)
        assert geodesic_distance(report.mean, oracle) <= 1e-3


# ---------------------------------------------------------------------------
# stability constant and inequality


def test_stability_constant_reference_value():
    c = stability_constant(2.0, math.pi / 6)
    assert 15.99 < c < 16.00


def test_stability_constant_small_rho_limit():
    # 1 + tan(2x)/x -> 3 as x -> 0
    assert stability_constant(2.0, 1e-8) == pytest.approx(3.0, abs=1e-6)


def test_stability_constant_direct_formula():
    x = math.sqrt(2.0) * 0.2
    expected = 1.0 + math.tan(2 * x) / x
    assert stability_constant(2.0, 0.2) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(3.2447, abs=2e-3)


def test_stability_constant_rho_out_of_range():
    with pytest.raises(InadmissibleSupportError):
        stability_constant(2.0, admissible_radius(2.0) + 1e-6)


def test_verify_stability_identical_measures():
    rng = np.random.default_rng(10)
    c = random_subspace(4, 2, rng)
    atoms = [exp_map(c, random_tangent(c, rng, norm=0.2)) for _ in range(3)]
    mu = mixture(atoms, [0.5, 0.3, 0.2])
    report = verify_stability(mu, mu, 2.0, 0.3, center=c)
    assert report.lhs == pytest.approx(0.0, abs=1e-9)
    assert report.rhs == pytest.approx(0.0, abs=1e-12)
    assert report.holds


def test_verify_stability_single_atom_perturbation():
    rng = np.random.default_rng(11)
    n = random_subspace(4, 2, rng)
    m = exp_map(n, random_tangent(n, rng, norm=0.3))
    mu2 = mixture([n], [1.0])
    mu1 = mixture([n, m], [0.9, 0.1])
    report = verify_stability(mu1, mu2, 2.0, 0.35, center=n)
    assert report.rhs == pytest.approx(report.constant * 0.1 * 0.3, rel=1e-9)
    assert report.holds


def test_verify_stability_random_sweep_g42():
    rng = np.random.default_rng(12)
    rho = 0.35
    for _ in range(200):
        c = random_subspace(4, 2, rng)
        n_atoms = int(rng.integers(1, 4))
        atoms1 = [exp_map(c, random_tangent(c, rng, norm=rng.uniform(0.0, 0.3)))
                  for _ in range(n_atoms)]
        atoms2 = [exp_map(c, random_tangent(c, rng, norm=rng.uniform(0.0, 0.3)))
                  for _ in range(n_atoms)]
        w1 = rng.uniform(0.1, 1.0, n_atoms)
        w2 = rng.uniform(0.1, 1.0, n_atoms)
        report = verify_stability(mixture(atoms1, w1 / w1.sum()),
                                  mixture(atoms2, w2 / w2.sum()),
                                  2.0, rho, center=c)
        assert report.holds
