import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fedsim import (
    AlgorithmConfig,
    ClientState,
    LocalRunResult,
    ServerState,
    fedavg_local,
    fedprox_local,
    scaffold_local,
    scaffold_theory_local,
    server_aggregate,
    sgd_local,
    theory_preset,
)
from fedsim.algorithms import control_pass
from fedsim.errors import DivergenceError, ParameterError, ProtocolError
from fedsim.numeric import RngStream
from fedsim.objectives import (
    QuadraticClient,
    make_identical_hessian_ensemble,
    make_lower_bound_clients,
    quadratic_federation,
)

IDENTITY = QuadraticClient([[1.0]])
ONE = np.array([1.0])


def cfg(variant="fedavg", **kw):
    kw.setdefault("local_lr", 0.1)
    return AlgorithmConfig(variant=variant, **kw)


def state(c):
    return ClientState(0, np.array([c], dtype=float))


# -- FedAvg -------------------------------------------------------------------


def test_fedavg_single_step():
    res = fedavg_local(ONE, IDENTITY, cfg(local_steps=1), RngStream(0))
    assert res.delta_y[0] == pytest.approx(-0.1, abs=1e-15)


def test_fedavg_two_steps():
    res = fedavg_local(ONE, IDENTITY, cfg(local_steps=2), RngStream(0))
    assert res.delta_y[0] == pytest.approx(-0.19, abs=1e-15)
    # drift = (0.1^2 + 0.19^2) / 2
    assert res.drift == pytest.approx((0.01 + 0.0361) / 2, abs=1e-15)


@pytest.mark.parametrize("K", [1, 3, 7])
def test_fedavg_linear_client_drifts_at_constant_rate(K):
    _, f2 = make_lower_bound_clients(1.0, 2.5)
    res = fedavg_local(np.array([0.3]), f2, cfg(local_steps=K, local_lr=0.05), RngStream(0))
    assert res.delta_y[0] == pytest.approx(K * 0.05 * 2.5, abs=1e-12)


def test_divergence_carries_indices():
    blowup = QuadraticClient([[-1e200]])
    with pytest.raises(DivergenceError) as info:
        fedavg_local(np.array([1e200]), blowup, cfg(local_steps=3), RngStream(0, round=4, client=2))
    assert info.value.round == 4 and info.value.client == 2


def test_wrong_variant_rejected():
    with pytest.raises(ParameterError):
        fedavg_local(ONE, IDENTITY, cfg("scaffold2"), RngStream(0))


@pytest.mark.parametrize("bad", [dict(local_lr=0.0), dict(local_lr=-1.0), dict(local_steps=0), dict(global_lr=0.0)])
def test_config_validation(bad):
    with pytest.raises(ParameterError):
        cfg(**bad)


# -- SCAFFOLD -----------------------------------------------------------------


def test_scaffold_corrected_step():
    res = scaffold_local(ONE, np.array([0.2]), state(0.5), IDENTITY, cfg("scaffold2"), RngStream(0))
    assert 1 + res.delta_y[0] == pytest.approx(0.93, abs=1e-15)


def test_scaffold_zero_controls_match_fedavg():
    obj = QuadraticClient(np.diag([1.0, 3.0]), [0.5, -1.0], sigma2=0.3)
    x = np.array([1.0, -2.0])
    stream = RngStream(4, 2, 1)
    ref = fedavg_local(x, obj, cfg(local_steps=6), stream)
    for v in ("scaffold1", "scaffold2"):
        res = scaffold_local(x, np.zeros(2), ClientState(1, np.zeros(2)), obj, cfg(v, local_steps=6), stream)
        assert res.delta_y.tobytes() == ref.delta_y.tobytes()


def test_option_two_is_mean_of_local_gradients():
    obj = QuadraticClient(np.diag([2.0, 0.5]), [0.1, 0.2], sigma2=0.5)
    x = np.array([1.0, 1.0])
    c = np.array([0.3, -0.1])
    st_ = ClientState(0, np.array([-0.2, 0.4]))
    res = scaffold_local(x, c, st_, obj, cfg("scaffold2", local_steps=8, local_lr=0.05), RngStream(1))
    np.testing.assert_allclose(st_.control + res.delta_c, res.mean_gradient, atol=1e-12, rtol=0)


def test_option_one_uses_gradient_at_server_model():
    obj = QuadraticClient(np.diag([2.0, 0.5]), [0.1, 0.2])
    x = np.array([1.0, -1.0])
    res = scaffold_local(x, np.zeros(2), ClientState(0, np.zeros(2)), obj, cfg("scaffold1", local_steps=4), RngStream(0))
    np.testing.assert_allclose(res.delta_c, obj.gradient(x), atol=1e-15)
    assert res.grad_evals == 8


def test_frozen_controls_stay_put():
    res = scaffold_local(
        ONE, np.zeros(1), state(0.0), IDENTITY, cfg("scaffold2", local_steps=3, freeze_controls=True), RngStream(0)
    )
    assert res.delta_c.tolist() == [0.0]


def test_control_pass_does_not_reuse_local_draws():
    obj = QuadraticClient(np.eye(1), sigma2=1.0)
    c = cfg("scaffold1", local_steps=1)
    g_local = obj.sample_gradient(ONE, RngStream(0, step=0))
    g_pass = control_pass(ONE, obj, c, RngStream(0))
    assert g_local.tobytes() != g_pass.tobytes()


# -- FedProx ------------------------------------------------------------------


def test_fedprox_two_steps():
    res = fedprox_local(ONE, IDENTITY, cfg("fedprox", local_steps=2, prox_mu=1.0), RngStream(0))
    assert 1 + res.delta_y[0] == pytest.approx(0.82, abs=1e-15)


@pytest.mark.parametrize("K, mu", [(5, 0.0), (1, 3.0)])
def test_fedprox_reduces_to_fedavg(K, mu):
    obj = QuadraticClient(np.diag([1.0, 2.0]), sigma2=0.2)
    x = np.array([0.5, -0.5])
    s = RngStream(2, 1, 0)
    a = fedprox_local(x, obj, cfg("fedprox", local_steps=K, prox_mu=mu), s)
    b = fedavg_local(x, obj, cfg(local_steps=K), s)
    assert a.delta_y.tobytes() == b.delta_y.tobytes()


# -- large-batch SGD ----------------------------------------------------------


def test_sgd_step():
    res = sgd_local(np.array([2.0]), IDENTITY, cfg("sgd", local_lr=0.25, local_steps=5), RngStream(0))
    assert res.delta_y[0] == pytest.approx(-0.5, abs=1e-15)


def test_sgd_matches_fedavg_when_k_is_one():
    obj = QuadraticClient(np.diag([1.0, 4.0]), [1.0, 0.0], sigma2=0.4)
    x = np.array([0.2, 0.7])
    s = RngStream(9, 3, 1)
    a = sgd_local(x, obj, cfg("sgd"), s)
    b = fedavg_local(x, obj, cfg(), s)
    assert a.delta_y.tobytes() == b.delta_y.tobytes()


def test_sgd_lower_bound_server_recursion():
    mu, G, eta = 1.0, 5.0, 0.3
    pair = make_lower_bound_clients(mu, G)
    x = 2.0
    for r in range(5):
        xs = np.array([x])
        results = [sgd_local(xs, f, cfg("sgd", local_lr=eta), RngStream(0, r, i)) for i, f in enumerate(pair)]
        new = server_aggregate(ServerState(xs, np.zeros(1)), results, [0, 1], 2, cfg("sgd", local_lr=eta))
        assert new.x[0] == pytest.approx(x * (1 - eta * mu), abs=1e-12)
        x = new.x[0]


# -- ScaffoldTheory -----------------------------------------------------------


def test_theory_identical_clients_match_fedavg():
    obj = QuadraticClient(np.diag([1.0, 2.0]), [0.3, 0.1])
    x = np.array([1.0, 1.0])
    g = obj.gradient(x)
    global_g = np.mean([g, g], axis=0)
    a = scaffold_theory_local(x, obj, global_g, g, cfg("scaffold_theory", local_steps=4), RngStream(0))
    b = fedavg_local(x, obj, cfg(local_steps=4), RngStream(0))
    assert a.delta_y.tobytes() == b.delta_y.tobytes()
    assert a.grad_evals == 5


def test_theory_scalar_recursion():
    # Two scalar quadratics: A_1 = 3, A_2 = 1, centres 1 and -2.
    clients = [QuadraticClient.from_center([[3.0]], [1.0]), QuadraticClient.from_center([[1.0]], [-2.0])]
    fed = quadratic_federation(clients)
    A, xs = 2.0, fed.x_star[0]
    x, eta, K = 0.7, 0.1, 3
    grads = [c.gradient(np.array([x])) for c in clients]
    g = np.mean(grads, axis=0)
    for i, (Ai, c) in enumerate(zip([3.0, 1.0], clients)):
        y = x
        for _ in range(K):
            y = y - eta * A * (y - xs) - eta * (Ai - A) * (y - x)
        res = scaffold_theory_local(np.array([x]), c, g, grads[i], cfg("scaffold_theory", local_steps=K, local_lr=eta), RngStream(0))
        assert x + res.delta_y[0] == pytest.approx(y, abs=1e-12)


def test_theory_identical_hessians_coincide():
    clients = make_identical_hessian_ensemble(5, 4, 2.0, seed=0)
    x = np.ones(4)
    grads = [c.gradient(x) for c in clients]
    g = np.mean(grads, axis=0)
    c = cfg("scaffold_theory", local_steps=6)
    deltas = [scaffold_theory_local(x, o, g, gi, c, RngStream(0, 1, i)).delta_y for i, (o, gi) in enumerate(zip(clients, grads))]
    for dy in deltas[1:]:
        np.testing.assert_allclose(dy, deltas[0], atol=1e-12, rtol=0)


def test_theory_preset_respects_bounds():
    p = theory_preset(beta=1.0, mu=0.1, K=5, N=10, S=4)
    assert p.global_lr == pytest.approx(2.0)
    assert p.local_lr <= 1 / (81 * 1.0 * 5 * 2.0) + 1e-18
    assert p.local_lr <= 4 / (15 * 0.1 * 10 * 5 * 2.0) + 1e-18


# -- server aggregation -------------------------------------------------------


def _res(dy, dc=0.0):
    return LocalRunResult(np.array([dy]), np.array([dc]), 0.0, 1)


def test_aggregate_single_client():
    server = ServerState(np.array([1.0]), np.zeros(1))
    new = server_aggregate(server, [_res(0.5)], [0], 1, cfg(global_lr=2.0))
    assert new.x[0] == 2.0 and new.round == 1


def test_aggregate_control_scaling():
    server = ServerState(np.zeros(1), np.zeros(1))
    new = server_aggregate(server, [_res(0.0, 2.0)], [0], 2, cfg())
    assert new.control[0] == 1.0
    same = server_aggregate(server, [_res(1.0), _res(3.0)], [0, 1], 2, cfg())
    assert same.control[0] == 0.0 and same.x[0] == 2.0


@pytest.mark.parametrize("ids, n_results", [([1, 1], 2), ([0, 5], 2), ([0], 2)])
def test_aggregate_protocol_errors(ids, n_results):
    server = ServerState(np.zeros(1), np.zeros(1))
    with pytest.raises(ProtocolError):
        server_aggregate(server, [_res(0.0)] * n_results, ids, 3, cfg())
    with pytest.raises(ProtocolError):
        server_aggregate(server, [], [], 3, cfg())


def test_aggregate_order_independent_of_input_order():
    rng = np.random.default_rng(0)
    results = [LocalRunResult(rng.normal(size=3) * 10.0 ** rng.integers(-8, 8), np.zeros(3), 0.0, 1) for _ in range(6)]
    ids = [4, 0, 5, 2, 1, 3]
    server = ServerState(np.zeros(3), np.zeros(3))
    a = server_aggregate(server, results, ids, 6, cfg())
    perm = rng.permutation(6)
    b = server_aggregate(server, [results[j] for j in perm], [ids[j] for j in perm], 6, cfg())
    assert a.x.tobytes() == b.x.tobytes()


@settings(max_examples=25, deadline=None)
@given(
    d=st.integers(1, 5),
    K=st.integers(1, 10),
    lr=st.floats(0.001, 0.3),
    sigma2=st.floats(0.0, 1.0),
    seed=st.integers(0, 10_000),
)
def test_frozen_zero_controls_equal_fedavg_property(d, K, lr, sigma2, seed):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(d, d))
    obj = QuadraticClient(M @ M.T / d + 0.1 * np.eye(d), rng.normal(size=d), sigma2=sigma2)
    x = rng.normal(size=d)
    s = RngStream(seed, 1, 0)
    ref = fedavg_local(x, obj, cfg(local_steps=K, local_lr=lr), s)
    for v in ("scaffold1", "scaffold2"):
        res = scaffold_local(
            x, np.zeros(d), ClientState(0, np.zeros(d)), obj, cfg(v, local_steps=K, local_lr=lr, freeze_controls=True), s
        )
        assert res.delta_y.tobytes() == ref.delta_y.tobytes()
