import numpy as np
import pytest

from bqmi.optim import (
    BoundedValue,
    DensityParam,
    MarginalSet,
    OptimizerConfig,
    PptSet,
    PsdSet,
    TraceOneSet,
    dykstra_project,
    entropy_combo,
    finite_diff_check,
    marginal_penalty,
    minimize_penalized,
)
from bqmi.qcore import partial_trace_mat, von_neumann_entropy


def random_herm(d, seed):
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return (m + m.conj().T) / 2


def test_bounded_value_direction_contract():
    with pytest.raises(ValueError, match="direction"):
        BoundedValue(1.0, "sideways", "m")
    bv = BoundedValue(1.0, "upper", "m", {"r": 1e-9}, {"note": "x", "obj": object()})
    d = bv.to_dict()
    assert d["direction"] == "upper"
    assert "obj" not in d["diagnostics"]  # non-serializable entries dropped


def test_penalized_quadratic_matches_lagrangian_oracle():
    # min x'Qx subject to (a'x - 1)^2 penalty; the exact penalized optimum
    # solves (Q + w a a') x = w a, per penalty weight w.
    rng = np.random.default_rng(0)
    q = rng.standard_normal((5, 5))
    q = q @ q.T + np.eye(5)
    a = rng.standard_normal(5)

    def objective(x):
        return float(x @ q @ x), 2 * q @ x

    def constraint(x):
        r = a @ x - 1.0
        return float(r * r), 2 * r * a

    cfg = OptimizerConfig(restarts=2, max_iters=2000, penalty_schedule=(10.0, 1000.0))
    res = minimize_penalized(objective, [("lin", constraint)], 5, cfg)
    w = cfg.penalty_schedule[-1]
    x_star = np.linalg.solve(2 * q + 2 * w * np.outer(a, a), 2 * w * a)
    assert np.linalg.norm(res.argmin - x_star) < 5e-3

    def penalized(x):
        return objective(x)[0] + w * constraint(x)[0]

    # the objective gap to the oracle optimum is quadratic in the distance
    assert penalized(res.argmin) - penalized(x_star) < 1e-4
    assert res.residuals["lin"] < 1e-4


def test_minimize_penalized_deterministic():
    def objective(x):
        return float((x ** 2).sum()), 2 * x

    cfg = OptimizerConfig(restarts=3, max_iters=50)
    a = minimize_penalized(objective, [], 4, cfg)
    b = minimize_penalized(objective, [], 4, cfg)
    assert np.array_equal(a.argmin, b.argmin)
    assert a.restart_index == b.restart_index


def test_finite_diff_check_flags_wrong_gradient():
    def good(x):
        return float((x ** 2).sum()), 2 * x

    def bad(x):
        return float((x ** 2).sum()), 3 * x

    x = np.array([0.3, -1.2, 0.7])
    assert finite_diff_check(good, x) < 1e-7
    assert finite_diff_check(bad, x) > 0.2


def test_psd_projection_clips_eigenvalues():
    h = np.diag([1.0, -2.0]).astype(complex)
    p = PsdSet().project(h)
    assert np.allclose(p, np.diag([1.0, 0.0]))
    assert PsdSet().residual(h) == pytest.approx(2.0)


def test_dykstra_two_sets_matches_simplex_oracle():
    # Projection onto {PSD, unit trace} acts on eigenvalues as projection
    # onto the simplex (clip below a shift chosen so the total is 1).
    h = random_herm(4, 3)
    got = dykstra_project(h, [PsdSet(), TraceOneSet()], tol=1e-12)
    lam, v = np.linalg.eigh(h)

    def simplex(y):
        u = np.sort(y)[::-1]
        css = np.cumsum(u)
        k = np.nonzero(u - (css - 1) / np.arange(1, y.size + 1) > 0)[0][-1]
        theta = (css[k] - 1) / (k + 1)
        return np.clip(y - theta, 0, None)

    oracle = (v * simplex(lam)) @ v.conj().T
    assert np.abs(got - oracle).max() < 1e-8


def test_dykstra_single_negative_eigenvalue_case():
    h = np.diag([0.9, 0.5, -0.2]).astype(complex)
    got = dykstra_project(h, [PsdSet(), TraceOneSet()], tol=1e-12)
    # oracle: clip the negative eigenvalue, then shift the rest to trace one
    assert np.allclose(np.sort(np.linalg.eigvalsh(got)),
                       np.sort([0.7, 0.3, 0.0]), atol=1e-8)


def test_ppt_set_projection_in_transposed_frame():
    m = np.zeros((4, 4), dtype=complex)
    m[0, 3] = m[3, 0] = 0.5
    m += np.eye(4) / 4
    s = PptSet((2, 2), (1,))
    p = s.project(m)
    assert s.residual(p) < 1e-12
    # projecting an already-PPT matrix is the identity
    assert np.allclose(s.project(np.eye(4) / 4), np.eye(4) / 4, atol=1e-14)


def test_marginal_set_projection_fixes_marginal():
    rng = np.random.default_rng(8)
    target = np.diag([0.3, 0.7]).astype(complex)
    h = random_herm(4, 8)
    s = MarginalSet((2, 2), (0,), target)
    p = s.project(h)
    assert np.abs(partial_trace_mat(p, (2, 2), (0,)) - target).max() < 1e-12
    # idempotent and norm-minimal direction: projecting twice changes nothing
    assert np.abs(s.project(p) - p).max() < 1e-12


def test_dykstra_reports_failure_residuals():
    # Empty intersection: trace-one against a marginal of trace 2.
    s = MarginalSet((2,), (0,), 2 * np.eye(2, dtype=complex))
    with pytest.raises(RuntimeError, match="residual"):
        dykstra_project(np.eye(2, dtype=complex), [TraceOneSet(), s],
                        tol=1e-12, max_sweeps=50)


def test_density_param_produces_states_and_gradient():
    par = DensityParam(4)
    rng = np.random.default_rng(4)
    x = rng.standard_normal(par.n_params)
    sig, cache = par.sigma(x)
    assert abs(sig.trace().real - 1.0) < 1e-12
    assert np.linalg.eigvalsh(sig)[0] > 0

    def fun(z):
        s, c = par.sigma(z)
        f, fmat = entropy_combo(s, (2, 2), [(1.0, (0,)), (-1.0, None)])
        return f, par.grad_x(fmat, s, c)

    assert finite_diff_check(fun, x, max_coords=16) < 1e-6


def test_entropy_combo_matches_direct_entropies():
    rng = np.random.default_rng(17)
    g = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    sig = g @ g.conj().T
    sig /= sig.trace().real
    val, _ = entropy_combo(sig, (2, 2), [(1.0, (0,)), (1.0, (1,)), (-1.0, None)])
    want = (von_neumann_entropy(partial_trace_mat(sig, (2, 2), (0,)))
            + von_neumann_entropy(partial_trace_mat(sig, (2, 2), (1,)))
            - von_neumann_entropy(sig))
    assert abs(val - want) < 1e-10


def test_marginal_penalty_zero_iff_matched():
    sig = np.kron(np.diag([0.25, 0.75]), np.eye(2) / 2).astype(complex)
    v, g = marginal_penalty(sig, (2, 2), (0,), np.diag([0.25, 0.75]).astype(complex))
    assert v < 1e-28
    v2, _ = marginal_penalty(sig, (2, 2), (0,), np.eye(2).astype(complex) / 2)
    assert v2 > 0.1
