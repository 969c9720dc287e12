import numpy as np
import pytest

from bqmi.measures import (
    JointDistribution,
    Povm,
    classical_mi_fixed,
    classical_mi_max,
    default_ic_povm,
    measure_statistics,
)
from bqmi.optim import OptimizerConfig
from bqmi.qcore import DensityOperator, ValidationError, bipartite_layout
from bqmi.states import bell_state, cc_state, product_mix_state

CFG = OptimizerConfig(restarts=3, max_iters=150)


def test_povm_validation():
    eye = np.eye(2)
    with pytest.raises(ValidationError, match="identity"):
        Povm((eye / 2, eye / 4))
    with pytest.raises(ValidationError, match="PSD"):
        Povm((np.diag([1.5, 1.0]), np.diag([-0.5, 0.0])))
    p = Povm((eye / 2, eye / 2))
    assert len(p) == 2 and p.dim == 2


def test_sic_effects_and_gram_rank():
    sic = default_ic_povm(2)
    assert len(sic) == 4
    for e in sic.effects:
        assert abs(np.trace(e).real - 0.5) < 1e-12
        # rank-1 effects
        assert np.linalg.matrix_rank(e, tol=1e-10) == 1
    # Gram matrix of a qubit SIC has full rank 4 (informational completeness)
    assert sic.gram_rank() == 4
    # oracle: overlaps Tr[E_i E_j] = (1 + v_i.v_j)/8, i.e. 1/4 on the
    # diagonal and 1/12 off it (tetrahedron angles v_i.v_j = -1/3)
    g = np.array([[np.vdot(a, b).real for b in sic.effects] for a in sic.effects])
    assert np.allclose(np.diag(g), 1 / 4, atol=1e-12)
    off = g[~np.eye(4, dtype=bool)]
    assert np.allclose(off, 1 / 12, atol=1e-12)


@pytest.mark.parametrize("d", [3, 4])
def test_default_ic_povm_higher_dims(d):
    povm = default_ic_povm(d)
    assert len(povm) == d * d
    assert povm.gram_rank() == d * d


def test_measure_statistics_uniform_on_maximally_mixed():
    rho = DensityOperator(bipartite_layout(2, 2), np.eye(4, dtype=complex) / 4)
    sic = default_ic_povm(2)
    dist = measure_statistics(rho, sic, sic)
    assert np.allclose(dist.p, 1 / 16, atol=1e-12)


def test_measure_statistics_dim_mismatch():
    with pytest.raises(ValidationError, match="dims"):
        measure_statistics(bell_state(), default_ic_povm(3), default_ic_povm(2))


def test_classical_mi_fixed_table_oracle():
    # perfectly correlated bits: 1 bit
    assert abs(classical_mi_fixed(JointDistribution(np.diag([0.5, 0.5]))) - 1.0) < 1e-12
    # independent table: 0 bits
    p = np.outer([0.3, 0.7], [0.6, 0.4])
    assert abs(classical_mi_fixed(JointDistribution(p))) < 1e-12


def test_classical_mi_max_cc_state_reaches_shannon_mi():
    # For a CC state the computational-basis measurement is optimal and the
    # value equals the table's classical MI (here 1 bit).
    bv = classical_mi_max(cc_state([[0.5, 0], [0, 0.5]]), 4, CFG)
    assert bv.direction == "lower"
    assert abs(bv.value - 1.0) < 1e-4


def test_classical_mi_max_bell_matches_projective_oracle():
    # Measuring both Bell halves in the same basis yields exactly 1 bit; the
    # optimizer must reach at least that and stay below the quantum MI.
    proj = Povm((np.diag([1.0, 0.0]), np.diag([0.0, 1.0])))
    oracle = classical_mi_fixed(measure_statistics(bell_state(), proj, proj))
    assert abs(oracle - 1.0) < 1e-12
    bv = classical_mi_max(bell_state(), 4, CFG, warm_povms=[(proj, proj)])
    assert oracle - 1e-6 <= bv.value <= 2.0
    assert abs(bv.value - 1.0) < 1e-4


def test_classical_mi_max_product_state_is_zero():
    prod = DensityOperator(bipartite_layout(2, 2),
                           np.kron(np.diag([0.3, 0.7]), np.eye(2) / 2).astype(complex))
    bv = classical_mi_max(prod, 4, CFG)
    assert bv.value < 1e-8


def test_classical_mi_max_uses_analytic_gradient():
    bv = classical_mi_max(bell_state(), 4, CFG)
    assert bv.diagnostics["gradient_check"] < 1e-3
    assert bv.diagnostics["finite_difference_fallback"] is False
    # reported POVMs are valid (Povm construction re-validates)
    assert len(bv.diagnostics["povm_a"]) == 4
