import numpy as np
import pytest

from fedsim.errors import DimensionError, ParameterError, UnsupportedError
from fedsim.numeric import RngStream
from fedsim.objectives import (
    Dataset,
    LogisticClient,
    LowerBoundPair,
    QuadraticClient,
    accuracy,
    fit_g2,
    label_entropy,
    load_csv_dataset,
    make_identical_hessian_ensemble,
    make_lower_bound_clients,
    make_quadratic_ensemble,
    make_synthetic_classification,
    measure_bgd,
    measure_bhd,
    quadratic_federation,
    save_csv_dataset,
    similarity_indices,
    split_by_similarity,
)


# -- quadratics ---------------------------------------------------------------


def test_quadratic_symmetrised():
    q = QuadraticClient([[2.0, 1.0], [0.0, 2.0]])
    H = q.hessian()
    assert np.array_equal(H, H.T)


def test_center_form_is_exact():
    A = np.array([[3.0, 1.0], [1.0, 2.0]])
    c = np.array([0.3, -1.7])
    q = QuadraticClient.from_center(A, c, offset=0.25)
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = rng.normal(size=2) * 5
        e = x - c
        assert q.loss(x) - 0.25 == pytest.approx(0.5 * e @ A @ e, abs=1e-12)
        np.testing.assert_allclose(q.gradient(x), A @ e, atol=1e-12)
    np.testing.assert_array_equal(q.center, c)


def test_lower_bound_pair_average_is_mu_over_two_x_squared():
    pair = LowerBoundPair(mu=0.7, G=3.0)
    f1, f2 = pair.clients()
    for x in np.linspace(-2, 2, 9):
        v = np.array([x])
        assert 0.5 * (f1.loss(v) + f2.loss(v)) == pytest.approx(pair.loss(x), abs=1e-12)
    assert f1.gradient(np.array([1.0]))[0] == pytest.approx(2 * 0.7 + 3.0)
    assert f2.gradient(np.array([5.0]))[0] == -3.0


@pytest.mark.parametrize("mu, G", [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0)])
def test_lower_bound_rejects_non_positive(mu, G):
    with pytest.raises(ParameterError):
        make_lower_bound_clients(mu, G)


def _step_by_step_round(mu, G, x, eta, K):
    # Both clients iterate from x; f1' = 2 mu y + G, f2' = -G.
    y1 = y2 = x
    for _ in range(K):
        y1 = y1 - eta * (2 * mu * y1 + G)
        y2 = y2 + eta * G
    return 0.5 * (y1 + y2)


def test_lower_bound_closed_form_round():
    mu, G, eta, K, x0 = 1.0, 1.0, 0.01, 3, 1.0
    q = 1 - 2 * mu * eta
    expected = x0 * (q**3 + 1) / 2 + (eta * G / 2) * sum(1 - q**t for t in range(3))
    assert _step_by_step_round(mu, G, x0, eta, K) == pytest.approx(expected, abs=1e-15)
    assert LowerBoundPair(mu, G).fedavg_round(x0, eta, K) == pytest.approx(expected, abs=1e-15)


def test_ensemble_delta_zero_has_identical_hessians():
    clients = make_quadratic_ensemble(5, 4, 0.0, 1.0, seed=2)
    assert measure_bhd(clients) == 0.0


def test_ensemble_two_clients_scalar():
    c1, c2 = make_quadratic_ensemble(2, 1, 1.0, 10.0, seed=0)
    hs = sorted([c1.hessian()[0, 0], c2.hessian()[0, 0]])
    assert hs == pytest.approx([0.0, 2.0])
    fed = quadratic_federation([c1, c2])
    assert fed.x_star == pytest.approx([0.0], abs=1e-12)
    local, full = measure_bgd([c1, c2], fed.x_star)
    assert local == pytest.approx(100.0, rel=1e-12)
    assert full == pytest.approx(0.0, abs=1e-20)


def test_ensemble_zero_G_shares_optimum():
    clients = make_quadratic_ensemble(4, 3, 0.5, 0.0, seed=1)
    for c in clients:
        np.testing.assert_allclose(c.gradient(np.zeros(3)), 0.0)


@pytest.mark.parametrize("N, d, delta, G", [(2, 10, 1.0, 1.0), (10, 10, 0.5, 3.0), (7, 5, 1.0, 2.0)])
def test_ensemble_hits_targets(N, d, delta, G):
    clients = make_quadratic_ensemble(N, d, delta, G, seed=4)
    assert measure_bhd(clients) == pytest.approx(delta, rel=0.05)
    fed = quadratic_federation(clients)
    local, _ = measure_bgd(clients, fed.x_star)
    assert np.sqrt(local) == pytest.approx(G, rel=0.05)


def test_ensemble_rejects_infeasible_delta():
    with pytest.raises(ParameterError):
        make_quadratic_ensemble(2, 3, 2.5, 1.0, seed=0, beta=1.0)


def test_identical_hessian_ensemble():
    clients = make_identical_hessian_ensemble(6, 4, 2.0, seed=0)
    assert measure_bhd(clients) == 0.0
    fed = quadratic_federation(clients)
    local, _ = measure_bgd(clients, fed.x_star)
    assert local == pytest.approx(4.0, rel=1e-9)
    assert len({tuple(np.round(c.center, 9)) for c in clients}) == 6


def test_quadratic_form_suboptimality_matches_loss_gap():
    fed = quadratic_federation(make_quadratic_ensemble(6, 5, 0.5, 1.0, seed=3))
    rng = np.random.default_rng(0)
    for _ in range(10):
        x = rng.normal(size=5)
        assert fed.suboptimality(x) == pytest.approx(fed.loss(x) - fed.f_star, abs=1e-12)


# -- heterogeneity metrics ----------------------------------------------------


def test_bgd_lower_bound_pair():
    pair = make_lower_bound_clients(1.0, 1.0)
    assert measure_bgd(pair, np.array([0.0])) == pytest.approx((1.0, 0.0))
    # f is the average of the pair, so grad f(1) = mu * 1 = 1; the sum would give 4.
    assert measure_bgd(pair, np.array([1.0])) == pytest.approx((5.0, 1.0))


def test_bgd_identical_clients():
    rng = np.random.default_rng(0)
    M = rng.normal(size=(3, 3))
    q = QuadraticClient(M @ M.T, rng.normal(size=3))
    for _ in range(20):
        local, full = measure_bgd([q, q, q], rng.normal(size=3))
        assert local == pytest.approx(full, rel=1e-12)
    assert fit_g2([q, q], [rng.normal(size=3) for _ in range(5)]) == pytest.approx(0.0, abs=1e-9)


def test_bgd_dimension_mismatch():
    with pytest.raises(DimensionError):
        measure_bgd(make_lower_bound_clients(1.0, 1.0), np.zeros(2))


def test_bhd_scalar():
    assert measure_bhd([QuadraticClient([[2.0]]), QuadraticClient([[0.0]])]) == pytest.approx(1.0)
    q = QuadraticClient(np.eye(2))
    assert measure_bhd([q, q]) == 0.0


def test_bhd_needs_quadratics():
    data = make_synthetic_classification(30, 3, 2, 0)
    with pytest.raises(UnsupportedError):
        measure_bhd([LogisticClient(data), LogisticClient(data)])


# -- logistic regression and data ---------------------------------------------


def test_synthetic_dataset_is_deterministic_and_balanced():
    a = make_synthetic_classification(200, 5, 4, seed=9)
    b = make_synthetic_classification(200, 5, 4, seed=9)
    assert a.features.tobytes() == b.features.tobytes()
    assert a.labels.tobytes() == b.labels.tobytes()
    assert np.bincount(a.labels).tolist() == [50, 50, 50, 50]


def _gradient_descent(client, steps, lr):
    x = np.zeros(client.dim)
    for _ in range(steps):
        x = x - lr * client.gradient(x)
    return x


def test_well_separated_binary_is_learnable():
    data = make_synthetic_classification(400, 5, 2, seed=0, separation=3.0, condition=1.0)
    x = _gradient_descent(LogisticClient(data), 200, 1.0)
    assert accuracy(x, data) > 0.95


def test_full_batch_minibatch_is_exact_gradient():
    data = make_synthetic_classification(50, 3, 3, 0)
    client = LogisticClient(data, l2=0.1, batch_fraction=1.0)
    x = np.random.default_rng(0).normal(size=client.dim)
    np.testing.assert_array_equal(client.sample_gradient(x, RngStream(0)), client.gradient(x))


def test_minibatch_gradient_is_unbiased():
    data = make_synthetic_classification(40, 3, 3, 0)
    client = LogisticClient(data, batch_fraction=0.25)
    x = np.random.default_rng(1).normal(size=client.dim) * 0.3
    draws = np.mean([client.sample_gradient(x, RngStream(0, step=k)) for k in range(4000)], axis=0)
    np.testing.assert_allclose(draws, client.gradient(x), atol=0.02)


def test_csv_round_trip(tmp_path):
    data = make_synthetic_classification(30, 4, 3, 1)
    path = tmp_path / "data.csv"
    save_csv_dataset(data, path)
    back = load_csv_dataset(path)
    np.testing.assert_array_equal(back.features, data.features)
    np.testing.assert_array_equal(back.labels, data.labels)
    assert back.num_classes == 3


def test_csv_missing_file(tmp_path):
    with pytest.raises(OSError):
        load_csv_dataset(tmp_path / "nope.csv")


# -- similarity split ---------------------------------------------------------


def _balanced(n, C, d=3, seed=0):
    return make_synthetic_classification(n, d, C, seed)


def test_split_conserves_examples():
    data = _balanced(1003, 10)
    for s in (0, 10, 50, 100):
        parts = similarity_indices(data.labels, s, 7, seed=3)
        allidx = np.concatenate(parts)
        assert sorted(allidx.tolist()) == list(range(1003))
        sizes = [len(p) for p in parts]
        assert max(sizes) - min(sizes) <= 1


def test_split_zero_similarity_one_label_each():
    data = _balanced(1000, 10)
    clients = split_by_similarity(data, 0, 10, seed=0)
    assert [len(np.unique(c.data.labels)) for c in clients] == [1] * 10


def test_split_full_similarity_matches_global_histogram():
    C, N = 10, 5
    data = _balanced(5000, C)
    p = np.bincount(data.labels, minlength=C) / len(data)
    for c in split_by_similarity(data, 100, N, seed=1):
        n_i = len(c.data)
        counts = np.bincount(c.data.labels, minlength=C)
        # Sampling without replacement has smaller spread than multinomial.
        sd = np.sqrt(n_i * p * (1 - p))
        assert np.all(np.abs(counts - n_i * p) <= 4 * sd)


def test_split_entropy_grows_with_similarity():
    data = _balanced(2000, 10)
    means = []
    for s in (0, 10, 50, 100):
        clients = split_by_similarity(data, s, 20, seed=2)
        means.append(np.mean([label_entropy(c.data.labels, 10) for c in clients]))
    assert all(a < b for a, b in zip(means, means[1:]))


@pytest.mark.parametrize("s, N", [(-1, 2), (101, 2), (10, 0)])
def test_split_rejects_bad_arguments(s, N):
    with pytest.raises(ParameterError):
        similarity_indices(np.zeros(10, int), s, N, 0)


def test_split_needs_enough_examples():
    data = Dataset(np.zeros((3, 2)), np.array([0, 1, 0]), 2)
    with pytest.raises(ParameterError):
        split_by_similarity(data, 0, 4, 0)
