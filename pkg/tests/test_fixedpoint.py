import math

import numpy as np
import pytest

from cganlab import (
    ConfigurationError,
    GeneratorPMF,
    JointPMF,
    ObjectiveKind,
    SolveOptions,
    ValidationError,
    grid_oracle,
    project_simplex,
    random_instance,
    solve_generator,
    value_at_optimal_d,
)
from cganlab.fixedpoint import (
    _descend,
    closed_form_conditionals,
    closed_form_feasible,
    simplex_lattice,
)
from conftest import feasible_gancls_pair

LOG4 = math.log(4.0)
K = ObjectiveKind


def test_project_simplex_trivials():
    assert np.allclose(project_simplex([0.2, 0.8]), [0.2, 0.8], atol=1e-15)
    assert np.allclose(project_simplex([2.0, 0.0]), [1.0, 0.0], atol=1e-15)
    assert np.allclose(project_simplex([0.6, 0.6]), [0.5, 0.5], atol=1e-15)


def test_project_simplex_properties():
    rng = np.random.default_rng(1)
    for _ in range(100):
        v = rng.normal(scale=4.0, size=int(rng.integers(2, 10)))
        p = project_simplex(v)
        assert abs(p.sum() - 1.0) <= 1e-9
        assert np.all(p >= 0)
        # Euclidean projection optimality: <v - p, q - p> <= 0 for feasible q
        q = rng.dirichlet(np.ones(v.size))
        assert float((v - p) @ (q - p)) <= 1e-9
        assert np.allclose(project_simplex(p), p, atol=1e-12)
    with pytest.raises(ValidationError):
        project_simplex([np.inf, 0.0])


def test_solve_options_validation():
    with pytest.raises(ValidationError):
        SolveOptions(max_iters=0)
    with pytest.raises(ValidationError):
        SolveOptions(step_size=0.0)
    with pytest.raises(ValidationError):
        SolveOptions(restarts=0)


def test_simplex_lattice_counts():
    pts = simplex_lattice(2, 0.5)
    assert sorted(pts.tolist()) == [[0.0, 1.0], [0.5, 0.5], [1.0, 0.0]]
    assert simplex_lattice(3, 0.25).shape == (15, 3)
    with pytest.raises(ValidationError):
        simplex_lattice(2, 0.3)
    with pytest.raises(ValidationError):
        simplex_lattice(2, 0.0)


def test_grid_oracle_rejects_oversized_grids():
    rng = np.random.default_rng(0)
    p_d, p_mis = random_instance(4, 3, rng)
    with pytest.raises(ConfigurationError):
        grid_oracle(K.MODIFIED_GAN_CLS, p_d, p_mis, 0.01)


def test_grid_oracle_modified_lattice_minimum_near_data():
    rng = np.random.default_rng(3)
    for i in range(3):
        p_d, p_mis = random_instance(3, 1, rng)
        val, argmin = grid_oracle(K.MODIFIED_GAN_CLS, p_d, p_mis, 0.01)
        assert np.max(np.abs(argmin.conditional - p_d.conditionals())) <= 0.01 + 1e-12
        assert abs(val + LOG4) <= 1e-3


def test_grid_oracle_feasible_gancls_matches_formula():
    rng = np.random.default_rng(5)
    p_d, p_mis = feasible_gancls_pair(3, 1, rng)
    val, argmin = grid_oracle(K.GAN_CLS, p_d, p_mis, 0.01)
    target = closed_form_conditionals(K.GAN_CLS, p_d, p_mis)
    assert np.max(np.abs(argmin.conditional - target)) <= 0.01 + 1e-12


def test_grid_oracle_exhausts_small_lattice():
    p_d = JointPMF(np.array([[0.6], [0.4]]))
    p_mis = JointPMF(np.array([[0.4], [0.6]]))
    val, argmin = grid_oracle(K.GAN_CLS, p_d, p_mis, 0.5)
    w = p_d.condition_marginal()
    expected = min(
        value_at_optimal_d(K.GAN_CLS, p_d, p_mis, GeneratorPMF(np.array([[a], [1 - a]]), w))
        for a in (0.0, 0.5, 1.0))
    assert val == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("disjoint", [False, True])
def test_solver_modified_recovers_data(disjoint):
    rng = np.random.default_rng(11)
    for i in range(5):
        p_d, p_mis = random_instance(8, 3, rng, disjoint_mismatch=disjoint)
        report = solve_generator(K.MODIFIED_GAN_CLS, p_d, p_mis,
                                 SolveOptions(restarts=2, seed=i))
        assert abs(report.value + LOG4) <= 1e-6
        assert np.max(np.abs(report.argmin.conditional - p_d.conditionals())) <= 1e-4
        assert report.feasible_closed_form


def test_solver_gancls_collapses_when_mismatch_equals_data():
    rng = np.random.default_rng(13)
    p_d, _ = random_instance(6, 2, rng)
    report = solve_generator(K.GAN_CLS, p_d, p_d, SolveOptions(restarts=2, seed=0))
    assert np.max(np.abs(report.argmin.conditional - p_d.conditionals())) <= 1e-4
    assert report.feasible_closed_form


def test_solver_gancls_feasible_matches_formula():
    rng = np.random.default_rng(17)
    for i in range(5):
        p_d, p_mis = feasible_gancls_pair(6, 2, rng)
        report = solve_generator(K.GAN_CLS, p_d, p_mis, SolveOptions(restarts=2, seed=i))
        target = closed_form_conditionals(K.GAN_CLS, p_d, p_mis)
        assert np.max(np.abs(report.argmin.conditional - target)) <= 1e-4


def test_solver_gancls_infeasible_boundary_case():
    p_d = JointPMF(np.array([[0.8], [0.2]]))
    p_mis = JointPMF(np.array([[0.1], [0.9]]))
    report = solve_generator(K.GAN_CLS, p_d, p_mis, SolveOptions(seed=1))
    assert not report.feasible_closed_form
    assert np.allclose(report.argmin.conditional, [[1.0], [0.0]], atol=1e-6)
    val, argmin = grid_oracle(K.GAN_CLS, p_d, p_mis, 1e-3)
    assert abs(report.value - val) <= 1e-3
    assert np.max(np.abs(report.argmin.conditional - argmin.conditional)) <= 1e-3


def test_closed_form_feasibility_flag():
    p_d = JointPMF(np.array([[0.8], [0.2]]))
    assert not closed_form_feasible(K.GAN_CLS, p_d, JointPMF(np.array([[0.1], [0.9]])))
    assert closed_form_feasible(K.GAN_CLS, p_d, p_d)
    assert closed_form_feasible(K.MODIFIED_GAN_CLS, p_d, JointPMF(np.array([[0.1], [0.9]])))


def test_oracle_dominance():
    rng = np.random.default_rng(19)
    for i in range(5):
        p_d, p_mis = random_instance(3, 2, rng)
        kind = K.MODIFIED_GAN_CLS if i % 2 else K.GAN_CLS
        report = solve_generator(kind, p_d, p_mis, SolveOptions(restarts=2, seed=i))
        grid_val, _ = grid_oracle(kind, p_d, p_mis, 0.02)
        assert report.value <= grid_val + 1e-3


def test_descent_trace_is_monotone():
    rng = np.random.default_rng(23)
    p_d, p_mis = random_instance(6, 2, rng)
    q0 = rng.dirichlet(np.ones(6), size=2).T
    _, _, _, trace = _descend(K.GAN_CLS, p_d.masses, p_mis.masses,
                              p_d.condition_marginal(), q0, SolveOptions())
    assert all(b <= a for a, b in zip(trace, trace[1:]))


def test_solver_determinism():
    rng = np.random.default_rng(29)
    p_d, p_mis = random_instance(5, 2, rng)
    opts = SolveOptions(restarts=3, seed=7)
    r1 = solve_generator(K.MODIFIED_GAN_CLS, p_d, p_mis, opts)
    r2 = solve_generator(K.MODIFIED_GAN_CLS, p_d, p_mis, opts)
    assert np.array_equal(r1.argmin.conditional, r2.argmin.conditional)
    assert r1.value == r2.value
    assert r1.restart_values == r2.restart_values
    assert r1.iterations == r2.iterations


def test_report_value_matches_public_op():
    rng = np.random.default_rng(31)
    p_d, p_mis = random_instance(5, 2, rng)
    report = solve_generator(K.GAN_CLS, p_d, p_mis, SolveOptions(restarts=2, seed=0))
    recomputed = value_at_optimal_d(K.GAN_CLS, p_d, p_mis, report.argmin)
    assert abs(report.value - recomputed) <= 1e-10


def test_nonconvergence_reports_instead_of_raising():
    rng = np.random.default_rng(37)
    p_d, p_mis = random_instance(6, 2, rng)
    report = solve_generator(K.MODIFIED_GAN_CLS, p_d, p_mis,
                             SolveOptions(max_iters=1, restarts=1, seed=0))
    assert report.iterations <= 1
    assert not report.converged


def test_report_serialization():
    rng = np.random.default_rng(41)
    p_d, p_mis = random_instance(4, 2, rng)
    report = solve_generator(K.MODIFIED_GAN_CLS, p_d, p_mis,
                             SolveOptions(restarts=2, seed=0))
    doc = report.to_json_dict()
    assert doc["kind"] == "modified"
    assert set(doc) >= {"kind", "value", "converged", "iterations",
                        "feasible_closed_form", "argmin", "restart_values"}
    assert len(doc["restart_values"]) == 2
    assert np.asarray(doc["argmin"]).shape == (4, 2)


def test_restarts_share_best_value():
    rng = np.random.default_rng(43)
    p_d, p_mis = random_instance(5, 2, rng)
    report = solve_generator(K.MODIFIED_GAN_CLS, p_d, p_mis,
                             SolveOptions(restarts=4, seed=3))
    assert report.value == min(report.restart_values)
