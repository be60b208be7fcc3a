import numpy as np
import pytest
from scipy.optimize import minimize

from runkm.bandit import bandit_gradient, certified_error, sphere_directions
from runkm.errors import DomainViolation, EmptySetError
from runkm.network import (KAPPA, PRESETS, LinkState, NetworkScenario, NetworkUtility, TrafficState,
                           VariationConfig, build_network, calibrate_scale, feasible_set,
                           optimal_point, preset, sample_timestep, utility_gradient)
from runkm.rng import step_rng
from runkm.tracker import fixed_point_oracle, run_inexact_km


@pytest.fixture(scope="module")
def net():
    return build_network()


@pytest.fixture(scope="module")
def static(net):
    return sample_timestep(net, VariationConfig(), 1)


def batch_solve(net, links, traffic):
    """Reference minimizer from a general-purpose constrained solver."""
    X = feasible_set(net, links, traffic)
    f = NetworkUtility(net, traffic)
    cons = [{"type": "eq", "fun": lambda x: X.A_eq @ x - X.b_eq, "jac": lambda x: X.A_eq},
            {"type": "ineq", "fun": lambda x: X.b_ub - X.A_ub @ x, "jac": lambda x: -X.A_ub}]
    res = minimize(f.value, np.full(net.dim, 0.1), jac=f.gradient, constraints=cons,
                   method="SLSQP", options={"ftol": 1e-14, "maxiter": 1000})
    assert res.success, res.message
    return res.x


class TestTopology:
    def test_shape(self, net):
        assert net.n_nodes == 6 and net.n_links == 8 and net.dim == 18
        assert set(np.unique(net.routing)) <= {-1.0, 0.0, 1.0}

    def test_unit_flow_conservation(self, net):
        r = net.path_rates_to_links([[1.0, 0.0], [0.0]])
        assert np.allclose(net.net_flow(r)[0], [1, 0, -1, 0, 0, 0])

    def test_zero_rates(self, net):
        assert np.allclose(net.net_flow(np.zeros((2, 8))), 0)

    def test_link_loads_by_enumeration(self, net):
        rates = [[0.7, 0.4], [1.1]]
        r = net.path_rates_to_links(rates)
        load = np.zeros(8)
        for s, paths in enumerate(net.paths):
            for path, q in zip(paths, rates[s]):
                for (i, k) in [net.links[j] for j in path]:
                    load[net.links.index((i, k))] += q
        assert np.allclose(net.link_load(r), load)
        # every path walks from the flow's source to its destination
        for s, paths in enumerate(net.paths):
            for path in paths:
                hops = [net.links[j] for j in path]
                assert hops[0][0] == net.flows[s][0] and hops[-1][1] == net.flows[s][1]
                assert all(a[1] == b[0] for a, b in zip(hops[:-1], hops[1:]))


class TestSampling:
    def test_deterministic(self, net):
        cfg = VariationConfig.scaled(0.01, seed=3)
        a, b = sample_timestep(net, cfg, 7), sample_timestep(net, cfg, 7)
        assert np.array_equal(a[0].gain, b[0].gain) and np.array_equal(a[1].cost, b[1].cost)

    def test_static_values(self, static):
        links, traffic = static
        assert np.allclose(links.gain, 2.0) and np.allclose(links.power, 1.0)
        assert np.allclose(links.capacity, np.log2(3.0))
        assert np.allclose(traffic.load, [0.2, 0.3, 0.3, 0.4, 0.5, 0.2, 0.1, 0.4])

    def test_clamped(self, net):
        links, traffic = sample_timestep(net, VariationConfig.scaled(4.0, seed=1), 2)
        assert np.all(links.power >= 0) and np.all(traffic.load >= 0) and np.all(links.capacity >= 0)

    def test_static_has_no_drift(self):
        sc = NetworkScenario(VariationConfig(), 20)
        assert np.all(sc.drift() == 0)

    def test_negative_variance(self):
        with pytest.raises(ValueError):
            VariationConfig(v_c=-1.0)


class TestUtility:
    def test_hand_values(self):
        assert utility_gradient([0.0, 1.0], [1.0, 2.0], np.zeros(8))[:2] == pytest.approx([-1.0, -1.0])

    def test_log_domain(self):
        with pytest.raises(DomainViolation):
            utility_gradient([-1.0, 0.0], [1.0, 1.0], np.zeros(8))

    def test_finite_differences(self, net, static, rng):
        f = NetworkUtility(net, static[1])
        h = 1e-6
        for _ in range(5):
            x = np.abs(rng.standard_normal(net.dim))
            fd = np.array([(f.value(x + h * e) - f.value(x - h * e)) / (2 * h) for e in np.eye(net.dim)])
            assert np.allclose(fd, f.gradient(x), rtol=1e-6, atol=1e-8)


class TestBandit:
    def test_constant_function(self, rng):
        est, _ = bandit_gradient(lambda x: 3.0, np.ones(3), 0.1, 8, rng)
        assert np.array_equal(est, np.zeros(3))

    def test_one_dimensional_square(self):
        est, _ = bandit_gradient(lambda x: float(x[0] ** 2), np.array([1.0]), 0.01, 2,
                                 directions=np.array([[1.0]]))
        assert est[0] == pytest.approx(2.0, abs=1e-12)

    def test_exact_on_quadratics(self, rng):
        Q = np.array([[2.0, 0.5], [0.5, 1.0]])
        f = lambda x: 0.5 * x @ Q @ x
        x = rng.standard_normal(2)
        dirs = sphere_directions(rng, 5, 2)
        est, _ = bandit_gradient(f, x, 1e-3, 10, directions=dirs)
        D = 2 / 5 * dirs.T @ dirs
        assert np.linalg.norm(est - D @ (Q @ x)) < 1e-10

    def test_certificate_decreases_with_evaluations(self, net, static):
        f = NetworkUtility(net, static[1], delta=0.05)
        means = []
        for n in (4, 8, 16, 32, 64):
            vals = [certified_error(sphere_directions(step_rng(s, n), n // 2, 2), 0.05,
                                    f.gradient_bound, f.third_derivative_bound) for s in range(100)]
            means.append(np.mean(vals))
        assert np.all(np.diff(means) < 0)

    def test_certificate_covers_error(self, net, static, rng):
        f = NetworkUtility(net, static[1], delta=0.05)
        for _ in range(50):
            z = 3 * rng.uniform(size=2)
            dirs = sphere_directions(rng, 3, 2)
            est, e_y = bandit_gradient(f.utility, z, 0.05, 6, directions=dirs,
                                       grad_bound=f.gradient_bound, third_bound=f.third_derivative_bound)
            assert np.linalg.norm(est - f.utility_gradient(z)) <= e_y

    def test_infeasible_evaluation(self, rng):
        with pytest.raises(DomainViolation):
            bandit_gradient(lambda z: 0.0, np.array([-0.99]), 0.1, 2, rng, in_domain=lambda v: v[0] > -1)

    @pytest.mark.parametrize("delta,n", [(0.0, 4), (0.1, 1)])
    def test_bad_settings(self, delta, n, rng):
        with pytest.raises(ValueError):
            bandit_gradient(lambda z: 0.0, np.zeros(1), delta, n, rng)


class TestOptimum:
    def test_static_rates(self, net, static):
        x = optimal_point(net, *static)
        z, r = net.split(x)
        assert np.all((z >= 0.5) & (z <= 1.9))
        assert np.allclose(net.net_flow(r)[0], z[0] * net.demand(0))

    def test_closed_form_vs_batch_solver(self, net):
        cfg = VariationConfig.scaled(PRESETS[0.7], seed=2)
        for t in (1, 5, 9):
            state = sample_timestep(net, cfg, t)
            assert np.allclose(optimal_point(net, *state), batch_solve(net, *state), atol=1e-6)

    def test_closed_form_is_fixed_point(self):
        sc = NetworkScenario(preset(0.7, seed=1), 10)
        for t in range(1, 12):
            F = sc.operator(t, exact=True)
            x = sc.fixed_points[t - 1]
            assert np.linalg.norm(F(x) - x) <= 1e-10

    def test_large_capacity_interior_optimum(self, net):
        links = LinkState(np.full(8, 2.0), np.full(8, 100.0))
        traffic = TrafficState(np.zeros(8), np.array([0.3, 0.3, 0.65, 0.63, 0.45, 0.45, 0.5, 0.5]), KAPPA)
        z, _ = net.split(optimal_point(net, links, traffic))
        assert z == pytest.approx([3.2 / 0.6 - 1, 2.6 / 0.9 - 1])
        assert np.allclose(optimal_point(net, links, traffic), batch_solve(net, links, traffic), atol=1e-6)

    def test_batch_iteration_reference(self):
        sc = NetworkScenario(VariationConfig(), 2)
        x = fixed_point_oracle(sc.operator(1, exact=True), np.zeros(18), tol=1e-9, max_iter=200_000)
        assert np.allclose(x, sc.fixed_points[0], atol=1e-6)

    def test_infeasible_link_named(self, net):
        links = LinkState(np.full(8, 2.0), np.full(8, 1.0))
        load = np.array([0.2, 0.3, 0.3, 0.4, 5.0, 0.2, 0.1, 0.4])
        with pytest.raises(EmptySetError, match="4->5"):
            feasible_set(net, links, TrafficState(load, np.ones(8), KAPPA))


class TestScenarioRuns:
    def test_feasibility_along_run(self):
        sc = NetworkScenario(preset(0.7, seed=0, n_evals=8), 50)
        run = run_inexact_km(sc.operators(), sc.fixed_points[0], fixed_points=sc.fixed_points)
        for t in range(1, 51):
            X = sc.feasible_set(t)
            x = run.iterates[t]
            z, r = sc.net.split(x)
            assert np.max(np.abs(X.A_eq @ x - X.b_eq)) <= 1e-8
            links, traffic = sc.states[t - 1]
            assert np.all(r.sum(axis=0) <= links.capacity - traffic.load + 1e-8)
            assert np.all(z >= -1e-12)

    def test_exact_mode_matches_exact_run(self):
        a = NetworkScenario(preset(0.03, seed=4, n_evals=0), 30)
        b = NetworkScenario(preset(0.03, seed=4, n_evals=16), 30)
        ra = run_inexact_km(a.operators(), a.fixed_points[0])
        rb = run_inexact_km(b.operators(exact=True), b.fixed_points[0])
        assert np.array_equal(ra.iterates, rb.iterates)

    def test_step_range(self):
        with pytest.raises(ValueError):
            NetworkScenario(VariationConfig(), 5, nu=1.0)

    def test_presets_reproduce_calibration(self):
        for sigma, scale in PRESETS.items():
            assert calibrate_scale(sigma) == pytest.approx(scale, rel=1e-9)

    def test_unknown_preset(self):
        with pytest.raises(KeyError):
            preset(0.5)
