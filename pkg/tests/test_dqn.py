"""Tests for the unconstrained distributed solver and its baseline."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dqn_mesh.dqn import (
    DivergedError,
    RunConfig,
    SyncNetwork,
    diging_atc_run,
    dqn_run,
    dqn_step,
    init_dqn_states,
    mix,
    safe_step_size,
    track_gradient,
)
from dqn_mesh.problems import LocalObjective, SeparableProblem, qp_family, solve_reference
from dqn_mesh.topology import CommGraph, metropolis_weights, random_connected_graph

TRIANGLE = CommGraph(3, ((0, 1), (1, 2), (0, 2)))
PATH3 = CommGraph(3, ((0, 1), (1, 2)))
SINGLE = CommGraph(1, ())


def make_network(graph, epsilon=0.01):
    return SyncNetwork(graph=graph, w=metropolis_weights(graph, epsilon).w)


def quadratic_problem(n_agents=3, dim=4, seed=0):
    return qp_family(n_agents, dim, (2.0, 10.0), seed)


def single_agent_quadratic(dim, seed):
    # the quadratic generator needs several agents to assemble a positive
    # definite aggregate, so one-agent tests build their local by hand
    rng = np.random.default_rng(seed)
    q_mat, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    p = (q_mat * rng.uniform(0.5, 2.0, size=dim)) @ q_mat.T
    lin = rng.standard_normal(dim)
    loc = LocalObjective(
        dim=dim,
        value=lambda x: float(0.5 * x @ p @ x + lin @ x),
        gradient=lambda x: p @ x + lin,
        smoothness_bound=float(np.linalg.eigvalsh(p)[-1]),
    )
    prob = SeparableProblem(locals=[loc], family="custom")
    prob.reference_solution = np.linalg.solve(p, -lin)
    return prob


# ---------------------------------------------------------------------------
# mixing engine and byte ledger


class TestSyncNetwork:
    def test_mix_applies_weight_matrix(self):
        net = make_network(TRIANGLE)
        rows = np.arange(6.0).reshape(3, 2)
        assert np.allclose(net.mix(rows, account=False), net.w @ rows)

    def test_bytes_per_payload(self):
        net = make_network(PATH3)
        rows = np.zeros((3, 5))
        net.mix(rows)
        # 8 bytes per scalar, 5 scalars, one copy per neighbor
        assert net.sent_bytes.tolist() == [40, 80, 40]
        net.mix(rows, account=False)
        assert net.sent_bytes.tolist() == [40, 80, 40]

    def test_rejects_row_mismatch(self):
        net = make_network(TRIANGLE)
        with pytest.raises(ValueError, match="row count"):
            net.mix(np.zeros((2, 4)))

    def test_rejects_weight_shape_mismatch(self):
        with pytest.raises(ValueError, match="does not match the graph"):
            SyncNetwork(graph=TRIANGLE, w=np.eye(2))

    def test_accepts_mixing_matrix_wrapper(self):
        weights = metropolis_weights(TRIANGLE, 0.01)
        net = SyncNetwork(graph=TRIANGLE, w=weights)
        assert np.array_equal(net.w, weights.w)


class TestMixFunction:
    def test_matches_matrix_product(self):
        w = metropolis_weights(TRIANGLE, 0.01)
        rows = np.arange(12.0).reshape(3, 4)
        assert np.allclose(mix(w, rows), w.w @ rows)

    def test_rejects_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            mix(np.eye(2), np.zeros((3, 4)))


class TestByteLedger:
    def test_quasi_newton_rounds_cost_24_n_deg(self):
        prob = quadratic_problem()
        graph = PATH3
        trace = dqn_run(prob, graph, RunConfig(alpha=0.3, max_iters=12, rse_tol=0.0))
        deg = graph.degrees()
        k = np.arange(trace.rounds + 1)
        expected = 24 * prob.dim * np.outer(k, deg)
        assert np.array_equal(trace.bytes_sent, expected)

    def test_baseline_rounds_cost_16_n_deg(self):
        prob = quadratic_problem()
        graph = TRIANGLE
        trace = diging_atc_run(prob, graph, RunConfig(alpha=0.2, max_iters=9, rse_tol=0.0))
        deg = graph.degrees()
        k = np.arange(trace.rounds + 1)
        expected = 16 * prob.dim * np.outer(k, deg)
        assert np.array_equal(trace.bytes_sent, expected)

    def test_setup_round_is_free(self):
        prob = quadratic_problem()
        trace = dqn_run(prob, TRIANGLE, RunConfig(alpha=0.3, max_iters=3, rse_tol=0.0))
        assert np.array_equal(trace.bytes_sent[0], np.zeros(3))


# ---------------------------------------------------------------------------
# initialization


class TestInit:
    def test_tracker_starts_at_local_gradients(self):
        prob = quadratic_problem()
        net = make_network(TRIANGLE)
        states = init_dqn_states(prob, net, alpha=0.3, seed=5)
        for i, st_ in enumerate(states):
            g = prob.locals[i].gradient(st_.x)
            assert np.allclose(st_.v, g)
            assert np.allclose(st_.last_gradient, g)
            assert np.allclose(st_.c.c, 0.1 * np.eye(prob.dim))
            assert np.allclose(st_.d, -0.1 * g)

    def test_direction_mix_is_unmetered(self):
        prob = quadratic_problem()
        net = make_network(TRIANGLE)
        states = init_dqn_states(prob, net, alpha=0.3)
        d = np.stack([s.d for s in states])
        z = np.stack([s.z for s in states])
        assert np.allclose(z, net.w @ d)
        assert net.sent_bytes.tolist() == [0, 0, 0]

    def test_per_agent_step_sizes(self):
        prob = quadratic_problem()
        net = make_network(TRIANGLE)
        states = init_dqn_states(prob, net, alpha=np.array([0.1, 0.2, 0.3]))
        assert [s.alpha for s in states] == [0.1, 0.2, 0.3]

    def test_rejects_bad_x0(self):
        prob = quadratic_problem()
        net = make_network(TRIANGLE)
        with pytest.raises(ValueError, match="one row per agent"):
            init_dqn_states(prob, net, 0.3, x0=np.zeros((2, prob.dim)))

    def test_x0_override(self):
        prob = quadratic_problem()
        net = make_network(TRIANGLE)
        x0 = np.full((3, prob.dim), 2.0)
        states = init_dqn_states(prob, net, 0.3, x0=x0)
        assert all(np.array_equal(s.x, x0[i]) for i, s in enumerate(states))


# ---------------------------------------------------------------------------
# gradient tracking invariant


class TestTracking:
    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 5_000), rounds=st.integers(1, 30))
    def test_tracker_mean_equals_gradient_mean(self, seed, rounds):
        prob = qp_family(4, 4, (2.0, 8.0), seed)
        graph = random_connected_graph(4, 0.7, seed)
        net = make_network(graph)
        states = init_dqn_states(prob, net, alpha=0.2, seed=seed)
        for _ in range(rounds):
            states = dqn_step(net, states, prob)
        v_bar = np.mean([s.v for s in states], axis=0)
        g_bar = np.mean([s.last_gradient for s in states], axis=0)
        assert np.linalg.norm(v_bar - g_bar) <= 1e-10 * (1.0 + np.linalg.norm(g_bar))

    def test_track_gradient_returns_fresh_gradients(self):
        prob = quadratic_problem()
        net = make_network(TRIANGLE)
        states = init_dqn_states(prob, net, alpha=0.3)
        new_x = np.stack([s.x for s in states]) * 0.5
        new_v, new_g = track_gradient(net, states, new_x, prob)
        for i in range(3):
            assert np.allclose(new_g[i], prob.locals[i].gradient(new_x[i]))
        v = np.stack([s.v for s in states])
        old_g = np.stack([s.last_gradient for s in states])
        assert np.allclose(new_v, net.w @ (v + new_g - old_g))


# ---------------------------------------------------------------------------
# single-agent runs collapse to centralized methods


def centralized_qn_oracle(problem, alpha, c0_scale, scheme, steps, seed):
    # straight-line reimplementation of the one-agent recursion: with a
    # single node every mixing step is the identity and the tracker equals
    # the gradient, so this is a plain curvature-estimating descent loop
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(problem.dim)
    loc = problem.locals[0]
    g = loc.gradient(x)
    c = c0_scale * np.eye(problem.dim)
    z = -(c @ g)
    history = [x.copy()]
    for _ in range(steps):
        x_new = x + alpha * z
        g_new = loc.gradient(x_new)
        s, y = x_new - x, g_new - g
        rho = y @ s
        if rho > 1e-10 * np.linalg.norm(y) * np.linalg.norm(s):
            if scheme == "bfgs":
                cy = c @ y
                c = c - (np.outer(s, cy) + np.outer(cy, s)) / rho
                c = c + (1.0 + (y @ cy) / rho) * np.outer(s, s) / rho
            else:
                cy = c @ y
                c = c + np.outer(s, s) / rho - np.outer(cy, cy) / (y @ cy)
        z = -(c @ g_new)
        x, g = x_new, g_new
        history.append(x.copy())
    return np.stack(history)


class TestSingleAgent:
    @pytest.mark.parametrize("scheme", ["bfgs", "dfp"])
    def test_matches_centralized_quasi_newton(self, scheme):
        prob = single_agent_quadratic(5, 3)
        net = make_network(SINGLE)
        states = init_dqn_states(prob, net, alpha=0.5, c0_scale=0.1, seed=9)
        xs = [states[0].x.copy()]
        for _ in range(50):
            states = dqn_step(net, states, prob, scheme=scheme)
            xs.append(states[0].x.copy())
        oracle = centralized_qn_oracle(prob, 0.5, 0.1, scheme, 50, seed=9)
        assert np.allclose(np.stack(xs), oracle, atol=1e-12, rtol=0.0)

    def test_baseline_is_gradient_descent(self):
        prob = single_agent_quadratic(4, 1)
        trace = diging_atc_run(prob, SINGLE, RunConfig(alpha=0.4, max_iters=30, rse_tol=0.0, seed=2))
        rng = np.random.default_rng(2)
        x = rng.standard_normal(4)
        loc = prob.locals[0]
        x_star = prob.reference_solution
        for k in range(31):
            assert trace.rse[k, 0] == pytest.approx(
                np.linalg.norm(x - x_star) / np.linalg.norm(x_star), abs=1e-12
            )
            x = x - 0.4 * loc.gradient(x)


# ---------------------------------------------------------------------------
# joint-form oracle: all agents stacked into one big vector


def kron_joint_oracle(problem, w, states, alpha, rounds):
    # independent implementation of the same rounds using the Kronecker
    # lift: mixing n-vectors agent-wise equals multiplying the stacked
    # vector by kron(W, I)
    n_agents, dim = w.shape[0], problem.dim
    big_w = np.kron(w, np.eye(dim))
    x = np.concatenate([s.x for s in states])
    v = np.concatenate([s.v for s in states])
    z = np.concatenate([s.z for s in states])
    g = np.concatenate([s.last_gradient for s in states])
    cs = [s.c.c.copy() for s in states]

    def grad_stack(xf):
        return np.concatenate(
            [problem.locals[i].gradient(xf[i * dim : (i + 1) * dim]) for i in range(n_agents)]
        )

    for _ in range(rounds):
        x_new = big_w @ (x + alpha * z)
        g_new = grad_stack(x_new)
        v_new = big_w @ (v + g_new - g)
        d_new = np.empty_like(x)
        for i in range(n_agents):
            sl = slice(i * dim, (i + 1) * dim)
            s_vec, y_vec = x_new[sl] - x[sl], v_new[sl] - v[sl]
            rho = y_vec @ s_vec
            # early transient rounds can produce flat or negative pairs;
            # those rounds keep the previous estimate
            if rho > 1e-10 * np.linalg.norm(y_vec) * np.linalg.norm(s_vec):
                cy = cs[i] @ y_vec
                c = cs[i] - (np.outer(s_vec, cy) + np.outer(cy, s_vec)) / rho
                cs[i] = c + (1.0 + (y_vec @ cy) / rho) * np.outer(s_vec, s_vec) / rho
            d_new[sl] = -(cs[i] @ v_new[sl])
        z = big_w @ d_new
        x, v, g = x_new, v_new, g_new
    return x, v, z


class TestJointFormOracle:
    def test_two_rounds_match_stacked_recursion(self):
        prob = quadratic_problem(n_agents=3, dim=4, seed=6)
        net = make_network(TRIANGLE)
        states = init_dqn_states(prob, net, alpha=0.3, seed=4)
        ox, ov, oz = kron_joint_oracle(prob, net.w, states, 0.3, rounds=2)
        for _ in range(2):
            states = dqn_step(net, states, prob, scheme="bfgs")
        assert np.allclose(np.concatenate([s.x for s in states]), ox, atol=1e-12, rtol=0.0)
        assert np.allclose(np.concatenate([s.v for s in states]), ov, atol=1e-12, rtol=0.0)
        assert np.allclose(np.concatenate([s.z for s in states]), oz, atol=1e-12, rtol=0.0)


# ---------------------------------------------------------------------------
# execution modes and failure handling


class TestRunBehavior:
    def test_serial_and_parallel_agree_bitwise(self):
        prob = qp_family(6, 5, (2.0, 20.0), 8)
        graph = random_connected_graph(6, 0.6, 0)
        serial = dqn_run(prob, graph, RunConfig(alpha=0.3, max_iters=40, rse_tol=0.0))
        threaded = dqn_run(prob, graph, RunConfig(alpha=0.3, max_iters=40, rse_tol=0.0, parallel=True))
        assert np.array_equal(serial.rse, threaded.rse)
        assert np.array_equal(serial.objective, threaded.objective)

    def test_divergence_is_flagged(self):
        prob = quadratic_problem()
        trace = dqn_run(prob, TRIANGLE, RunConfig(alpha=50.0, max_iters=200))
        assert trace.diverged and not trace.converged
        assert trace.rounds < 200
        assert trace.rse.shape[0] == trace.rounds + 1

    def test_baseline_divergence_is_flagged(self):
        prob = quadratic_problem()
        trace = diging_atc_run(prob, TRIANGLE, RunConfig(alpha=1e4, max_iters=200))
        assert trace.diverged and not trace.converged

    def test_diverged_error_carries_round(self):
        prob = quadratic_problem()
        net = make_network(TRIANGLE)
        states = init_dqn_states(prob, net, alpha=1e20)
        with pytest.raises(DivergedError) as err:
            for _ in range(50):
                states = dqn_step(net, states, prob)
        assert err.value.round_index >= 1

    def test_convergence_on_well_conditioned_quadratic(self):
        prob = quadratic_problem(n_agents=4, dim=4, seed=2)
        graph = random_connected_graph(4, 0.9, 1)
        trace = dqn_run(prob, graph, RunConfig(alpha=0.3, max_iters=500, rse_tol=1e-9))
        assert trace.converged
        assert np.max(trace.rse[trace.rounds]) <= 1e-9
        assert trace.x_final.shape == (4, 4)
        final_rse = np.linalg.norm(
            trace.x_final - prob.reference_solution, axis=1
        ) / np.linalg.norm(prob.reference_solution)
        assert np.allclose(final_rse, trace.rse[trace.rounds])

    def test_zero_reference_falls_back_to_absolute_error(self):
        locs = [
            LocalObjective(
                dim=3,
                value=lambda x: float(0.5 * x @ x),
                gradient=lambda x: x.copy(),
                smoothness_bound=1.0,
            )
            for _ in range(3)
        ]
        prob = SeparableProblem(locals=locs, family="custom")
        solve_reference(prob)
        assert np.linalg.norm(prob.reference_solution) == 0.0
        net_seed = 7
        trace = dqn_run(prob, TRIANGLE, RunConfig(alpha=0.5, max_iters=5, rse_tol=0.0, seed=net_seed))
        rng = np.random.default_rng(net_seed)
        x0 = rng.standard_normal((3, 3))
        assert np.allclose(trace.rse[0], np.linalg.norm(x0, axis=1))

    def test_stop_on_tolerance_freezes_ledger(self):
        prob = quadratic_problem(n_agents=4, dim=4, seed=5)
        graph = random_connected_graph(4, 1.0, 0)
        trace = dqn_run(prob, graph, RunConfig(alpha=0.3, max_iters=800, rse_tol=1e-8))
        assert trace.converged
        deg = graph.degrees()
        assert np.array_equal(trace.bytes_sent[trace.rounds], 24 * 4 * trace.rounds * deg)


# ---------------------------------------------------------------------------
# step-size guardrails


class TestSafeStepSize:
    def test_fully_mixing_network_is_unrestricted(self):
        assert safe_step_size(0.0, 1.0, 1e3, 10, 5) == np.inf

    def test_shrinks_with_contraction(self):
        vals = [safe_step_size(c, 1.0, 1e3, 10, 5) for c in (0.1, 0.5, 0.9)]
        assert vals[0] > vals[1] > vals[2] > 0

    def test_formula_value(self):
        # (1 - 0.5) / (2 * 0.125 * 2 * 1000 * sqrt(4))
        expected = 0.5 / (2 * 0.125 * 2.0 * 1e3 * 2.0)
        assert safe_step_size(0.5, 2.0, 1e3, 7, 4) == pytest.approx(expected, rel=1e-12)

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError, match="contraction"):
            safe_step_size(1.0, 1.0, 1e3, 4, 4)
        with pytest.raises(ValueError, match="positive"):
            safe_step_size(0.5, 0.0, 1e3, 4, 4)

    def test_auto_alpha_makes_steady_progress(self):
        # the guaranteed step is very conservative, so check contraction of
        # the error rather than full convergence inside the round budget
        prob = quadratic_problem(n_agents=4, dim=4, seed=0)
        graph = random_connected_graph(4, 1.0, 0)
        trace = dqn_run(prob, graph, RunConfig(alpha="auto", max_iters=2000, rse_tol=1e-8))
        assert 0 < trace.alpha <= 1.0
        assert not trace.diverged
        worst0 = float(np.max(trace.rse[0]))
        worst_end = float(np.max(trace.rse[trace.rounds]))
        assert worst_end <= 0.05 * worst0


class TestRunConfig:
    def test_rejects_unknown_scheme(self):
        with pytest.raises(ValueError, match="unknown quasi-Newton scheme"):
            RunConfig(scheme="sr1")

    def test_rejects_alpha_typo(self):
        with pytest.raises(ValueError, match="'auto'"):
            RunConfig(alpha="fast")

    def test_rejects_nonpositive_alpha_at_resolve(self):
        prob = quadratic_problem()
        with pytest.raises(ValueError, match="alpha must be positive"):
            dqn_run(prob, TRIANGLE, RunConfig(alpha=-0.1, max_iters=1))


# ---------------------------------------------------------------------------
# trace serialization


class TestRunTrace:
    def test_csv_header_and_shape(self, tmp_path):
        prob = quadratic_problem()
        trace = dqn_run(prob, TRIANGLE, RunConfig(alpha=0.3, max_iters=4, rse_tol=0.0))
        path = tmp_path / "trace.csv"
        trace.to_csv(path)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == (
            "round,agent,rse,x_consensus_err,v_consensus_err,"
            "mean_grad_norm,objective,bytes_sent"
        )
        assert len(lines) == 1 + 3 * (trace.rounds + 1)
        first = lines[1].split(",")
        assert first[0] == "0" and first[1] == "0"
        assert first[-1] == "0"

    def test_csv_round_trips_reproducibly(self, tmp_path):
        prob = quadratic_problem()
        cfg = RunConfig(alpha=0.3, max_iters=6, rse_tol=0.0)
        a = dqn_run(prob, TRIANGLE, cfg)
        b = dqn_run(prob, TRIANGLE, cfg)
        pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
        a.to_csv(pa)
        b.to_csv(pb)
        assert pa.read_text() == pb.read_text()

    def test_summary_dict_fields(self):
        prob = quadratic_problem()
        trace = dqn_run(prob, TRIANGLE, RunConfig(alpha=0.3, max_iters=4, rse_tol=0.0))
        d = trace.summary_dict()
        assert d["algo"] == "dqn-bfgs"
        assert d["rounds"] == 4
        assert d["converged"] is False
        assert len(d["tracking_residuals"]) == 5
        assert d["wall_time_ms"] >= 0.0
