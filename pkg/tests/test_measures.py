import numpy as np
import pytest

from flagdim import circle
from flagdim.dynamics import stationary_flag_pool
from flagdim.ensemble import SeededSampler, bern2
from flagdim.errors import BandwidthTooSmall, InsufficientMass
from flagdim.measures import (EmpiricalCircleMeasure, ball_mass,
                              default_radius_grid, density_ratio, from_csv,
                              kde_density, kolmogorov_uniform_distance,
                              local_dimension, max_cluster_weight,
                              maximal_function, neighbor_counts,
                              nonatomicity_diagnostic, to_csv,
                              wasserstein_circle)


def uniform_measure(n, rng):
    return EmpiricalCircleMeasure.from_samples(rng.uniform(0, np.pi, n))


def cantor_measure(depth):
    """Left endpoints of the level-``depth`` middle-thirds cells on [0, pi/2).

    Every level-j ball at 0 with radius (pi/2) 3^-j then carries mass
    exactly 2^-j, so the log-log slope is log 2 / log 3 with no noise.
    """
    idx = np.arange(2 ** depth)
    bits = (idx[:, None] >> np.arange(depth)[None, :]) & 1
    pts = (bits * 2.0 / 3.0 ** np.arange(1, depth + 1)).sum(axis=1)
    return EmpiricalCircleMeasure.from_samples(pts * (np.pi / 2))


def test_measure_construction_sorts_and_checks():
    m = EmpiricalCircleMeasure(np.array([2.0, 0.5]), np.array([0.25, 0.75]))
    assert np.array_equal(m.points, [0.5, 2.0])
    assert np.array_equal(m.weights, [0.75, 0.25])
    with pytest.raises(ValueError):
        EmpiricalCircleMeasure(np.array([1.0]), np.array([0.5]))
    with pytest.raises(ValueError):
        EmpiricalCircleMeasure(np.array([1.0, 2.0]), np.array([1.0, -0.0]))


def test_arc_mass_closed_and_wrapping():
    m = EmpiricalCircleMeasure.from_samples(np.array([0.0, 1.0, 3.0]))
    third = 1 / 3
    assert m.arc_mass(0.0, 1.0) == pytest.approx(2 * third, abs=1e-14)
    assert m.arc_mass(2.9, 0.3) == pytest.approx(2 * third, abs=1e-14)
    assert m.arc_mass(0.0, np.pi) == 1.0


def test_ball_mass_trivials(rng):
    m = uniform_measure(500, rng)
    assert ball_mass(m, 1.0, np.pi / 2) == 1.0
    atom = EmpiricalCircleMeasure.from_samples(np.array([0.4, 0.9]))
    # closed balls: an atom at exactly distance r is inside
    assert ball_mass(atom, 0.4, 0.5) == 1.0
    assert ball_mass(atom, 0.4, 0.5 - 1e-12) == 0.5
    assert ball_mass(atom, 0.4, 0.0) == 0.5


def test_ball_mass_wraps():
    m = EmpiricalCircleMeasure.from_samples(np.array([np.pi - 0.02, 0.5]))
    assert ball_mass(m, 0.01, 0.05) == 0.5


def test_ball_mass_monotone_and_binomial(rng):
    m = uniform_measure(100_000, rng)
    radii = np.sort(rng.uniform(0.001, 1.4, 30))
    masses = ball_mass(m, 2.0, radii)
    assert np.all(np.diff(masses) >= 0)
    for r in (0.1, 0.5, 1.0):
        p = 2 * r / np.pi
        sigma = np.sqrt(p * (1 - p) / len(m))
        assert abs(ball_mass(m, 2.0, r) - p) < 5 * sigma


def test_ball_mass_right_continuous(rng):
    m = uniform_measure(1000, rng)
    for r in (0.05, 0.3, 1.0):
        assert ball_mass(m, 1.0, r + 1e-12) - ball_mass(m, 1.0, r) \
            <= 2 / len(m)


def test_cantor_dimension():
    m = cantor_measure(14)
    grid = (np.pi / 2) / 3.0 ** np.arange(1, 11)
    est = local_dimension(m, 0.0, r_grid=grid)
    want = np.log(2) / np.log(3)
    assert est.slope == pytest.approx(want, abs=1e-9)
    assert abs(est.slope - want) < 0.03
    assert est.residual < 1e-9
    # the level masses themselves are exact powers of two
    assert ball_mass(m, 0.0, grid[3]) == pytest.approx(2.0 ** -4, abs=1e-15)


def test_uniform_dimension_near_one(rng):
    m = uniform_measure(40_000, rng)
    est = local_dimension(m, 1.0)
    assert abs(est.slope - 1.0) < 0.05
    assert est.levels_used >= 4


def test_point_mass_dimension_zero():
    m = EmpiricalCircleMeasure.from_samples(np.full(200, 2.2))
    est = local_dimension(m, 2.2)
    assert est.slope == 0.0
    assert est.residual == 0.0


def test_atom_pair_dimension_zero():
    pts = np.concatenate([np.full(400, 0.3), np.full(400, 2.0)])
    est = local_dimension(EmpiricalCircleMeasure.from_samples(pts), 0.3)
    assert abs(est.slope) < 1e-12


def test_local_dimension_refuses_thin_mass(rng):
    m = EmpiricalCircleMeasure.from_samples(rng.uniform(0, np.pi, 30))
    with pytest.raises(InsufficientMass):
        local_dimension(m, 1.0)


def test_local_dimension_rejects_bad_grid(rng):
    m = uniform_measure(1000, rng)
    with pytest.raises(ValueError):
        local_dimension(m, 1.0, r_grid=np.array([0.1, 0.05, 0.03]))
    with pytest.raises(ValueError):
        local_dimension(m, 1.0, r_grid=np.linspace(0.01, 0.2, 12))


def test_default_radius_grid_geometric():
    g = default_radius_grid()
    assert len(g) == 12
    assert g[0] == pytest.approx(np.pi / 8)
    assert np.allclose(g[:-1] / g[1:], 2.0, rtol=1e-12)


def test_max_cluster_weight_uniform_grid():
    n, eps = 10_000, 0.2
    m = EmpiricalCircleMeasure.from_samples(np.arange(n) * np.pi / n)
    got = max_cluster_weight(m, eps)
    assert got == pytest.approx(eps / np.pi, abs=2 / n)
    assert max_cluster_weight(m, np.pi) == 1.0


def test_max_cluster_weight_detects_cluster(rng):
    pts = np.concatenate([rng.uniform(0, np.pi, 500),
                          rng.normal(1.0, 1e-5, 500) % np.pi])
    m = EmpiricalCircleMeasure.from_samples(pts)
    assert max_cluster_weight(m, 1e-3) > 0.45


def test_nonatomicity_uniform_vs_atom(rng):
    sizes = (1000, 10_000, 100_000)
    uni = nonatomicity_diagnostic(
        [uniform_measure(n, rng) for n in sizes])
    assert uni.decreasing
    assert uni.final_weight < 0.01
    atom = nonatomicity_diagnostic(
        [EmpiricalCircleMeasure.from_samples(np.full(n, 1.0))
         for n in sizes])
    assert atom.final_weight == 1.0


def test_nonatomicity_bern2_stationary():
    sizes = (1000, 10_000, 100_000)
    spec = bern2()
    ms = []
    for k, n in enumerate(sizes):
        pool = stationary_flag_pool(spec, n, 300, SeededSampler(90 + k))
        ang = np.mod(np.arctan2(pool[:, 1, 0], pool[:, 0, 0]), np.pi)
        ms.append(EmpiricalCircleMeasure.from_samples(ang))
    rep = nonatomicity_diagnostic(ms)
    assert rep.decreasing
    assert rep.final_weight < 0.01


def test_maximal_function_of_one(rng):
    m = uniform_measure(300, rng)
    f = np.ones(len(m))
    for x in (0.3, 1.5, 3.0):
        assert maximal_function(f, m, x) == pytest.approx(1.0, abs=1e-12)


def test_maximal_function_dominates_f(rng):
    m = uniform_measure(200, rng)
    f = rng.exponential(1.0, len(m))
    got = np.array([maximal_function(f, m, x) for x in m.points])
    assert np.all(got >= f - 1e-12)


def test_weak_type_inequality(rng):
    # t * m{Mf > t} <= 8 * integral of |f| over {|f| > t/2}
    for _ in range(25):
        n = int(rng.integers(20, 201))
        m = EmpiricalCircleMeasure(
            rng.uniform(0, np.pi, n),
            (lambda w: w / w.sum())(rng.uniform(0.2, 1.0, n)))
        f = rng.lognormal(0.0, 1.5, n)
        mf = np.array([maximal_function(f, m, x) for x in m.points])
        for t in np.quantile(mf, [0.1, 0.3, 0.5, 0.7, 0.9, 0.99]):
            lhs = t * float(np.sum(m.weights[mf > t]))
            rhs = 8.0 * float(np.sum((m.weights * f)[f > t / 2]))
            assert lhs <= rhs + 1e-12


def test_kde_density_integrates_to_one(rng):
    m = uniform_measure(2000, rng)
    grid = np.linspace(0, np.pi, 2048, endpoint=False)
    vals = kde_density(m, grid, 0.3)
    assert np.mean(vals) * np.pi == pytest.approx(1.0, abs=1e-3)


def test_kde_gates_on_sparse_neighborhoods():
    m = EmpiricalCircleMeasure.from_samples(
        np.concatenate([np.linspace(0.0, 0.5, 50), [2.5]]))
    with pytest.raises(BandwidthTooSmall):
        kde_density(m, 2.5, 0.01)


def test_neighbor_counts_matches_gate(rng):
    m = uniform_measure(500, rng)
    xs = rng.uniform(0, np.pi, 40)
    counts = neighbor_counts(m, xs, 0.05)
    for x, c in zip(xs, counts):
        d = circle.distance(m.points, x)
        assert c == int(np.count_nonzero(d < 0.05))


def test_density_ratio_of_identical_measure(rng):
    m = uniform_measure(5000, rng)
    ratio = density_ratio(m, m, bandwidth=0.1)
    for x in (0.2, 1.0, 2.8):
        assert ratio(x) == pytest.approx(1.0, abs=1e-12)


def test_density_ratio_uniform_pair(rng):
    r = density_ratio(uniform_measure(20_000, rng),
                      uniform_measure(20_000, rng), bandwidth=0.1)
    for x in np.linspace(0.1, 3.0, 7):
        assert 0.8 < r(x) < 1.25


def test_density_ratio_sees_pushforward_jacobian(rng):
    # push uniform samples through the projective action of diag(2, 1/2);
    # the image density at T(x) is 1/T'(x) times the source density
    theta = rng.uniform(0, np.pi, 40_000)
    image = np.mod(np.arctan2(0.5 * np.sin(theta), 2.0 * np.cos(theta)),
                   np.pi)
    pushed = EmpiricalCircleMeasure.from_samples(image)
    base = uniform_measure(40_000, rng)
    ratio = density_ratio(pushed, base, bandwidth=0.05)
    for x0 in (0.6, 1.2, 2.0):
        deriv = 1.0 / (4 * np.cos(x0) ** 2 + 0.25 * np.sin(x0) ** 2)
        y = float(np.mod(np.arctan2(0.5 * np.sin(x0), 2.0 * np.cos(x0)),
                         np.pi))
        assert ratio(y) == pytest.approx(1.0 / deriv, rel=0.10)


def test_wasserstein_point_masses():
    d1 = EmpiricalCircleMeasure.from_samples(np.array([0.0]))
    d2 = EmpiricalCircleMeasure.from_samples(np.array([0.3]))
    d3 = EmpiricalCircleMeasure.from_samples(np.array([np.pi - 0.2]))
    assert wasserstein_circle(d1, d2) == pytest.approx(0.3, abs=1e-12)
    # optimal transport goes the short way around
    assert wasserstein_circle(d1, d3) == pytest.approx(0.2, abs=1e-12)
    assert wasserstein_circle(d1, d1) == 0.0


def test_wasserstein_symmetry_and_triangle(rng):
    ms = [uniform_measure(300, rng) for _ in range(3)]
    d01 = wasserstein_circle(ms[0], ms[1])
    d10 = wasserstein_circle(ms[1], ms[0])
    assert d01 == pytest.approx(d10, abs=1e-12)
    d02 = wasserstein_circle(ms[0], ms[2])
    d12 = wasserstein_circle(ms[1], ms[2])
    assert d02 <= d01 + d12 + 1e-12


def test_wasserstein_rotation_of_grid():
    n = 500
    grid = np.arange(n) * np.pi / n
    m1 = EmpiricalCircleMeasure.from_samples(grid)
    m2 = EmpiricalCircleMeasure.from_samples(
        np.mod(grid + 5 * np.pi / n, np.pi))
    assert wasserstein_circle(m1, m2) == pytest.approx(0.0, abs=1e-12)


def test_kolmogorov_distance_examples(rng):
    n = 2000
    mid = EmpiricalCircleMeasure.from_samples(
        (np.arange(n) + 0.5) * np.pi / n)
    assert kolmogorov_uniform_distance(mid) < 1.0 / n + 1e-12
    atom = EmpiricalCircleMeasure.from_samples(np.array([0.0]))
    assert kolmogorov_uniform_distance(atom) == pytest.approx(1.0, abs=1e-12)
    half = EmpiricalCircleMeasure.from_samples(
        rng.uniform(0, np.pi / 2, 20_000))
    assert kolmogorov_uniform_distance(half) == pytest.approx(0.5, abs=0.02)


def test_csv_round_trip(rng, tmp_path):
    m = EmpiricalCircleMeasure(
        rng.uniform(0, np.pi, 64),
        (lambda w: w / w.sum())(rng.uniform(0.1, 1.0, 64)))
    path = tmp_path / "measure.csv"
    to_csv(m, path)
    back = from_csv(path)
    assert np.array_equal(back.points, m.points)
    assert np.array_equal(back.weights, m.weights)
    with pytest.raises(ValueError):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b\n1,2\n")
        from_csv(bad)
