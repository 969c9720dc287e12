import numpy as np
import pytest

from bqmi.broadcast import (
    DimensionCapError,
    apply_local_channels,
    broadcast_mi_symmetric,
    broadcast_mi_upper,
    definetti_upper,
    depolarizing_kraus,
    dim_cap,
    growth_curve,
    marginal_residual,
    twirl_copies,
)
from bqmi.optim import OptimizerConfig
from bqmi.qcore import mutual_information, permute_factors, trace_distance
from bqmi.states import (
    StateSpec,
    bell_state,
    canonical_ensembles,
    cc_state,
    definetti_broadcast,
    product_mix_state,
    random_density,
)

CFG = OptimizerConfig(restarts=3, max_iters=150)


def test_depolarizing_kraus_is_trace_preserving():
    kraus = depolarizing_kraus(0.3)
    total = sum(k.conj().T @ k for k in kraus)
    assert np.allclose(total, np.eye(2), atol=1e-12)
    # full strength sends everything to the maximally mixed state
    rho = bell_state()
    out = apply_local_channels(rho, {"A": depolarizing_kraus(1.0),
                                     "B": depolarizing_kraus(1.0)})
    assert np.allclose(out.mat, np.eye(4) / 4, atol=1e-12)


def test_twirl_copies_is_permutation_invariant_projection():
    ens = canonical_ensembles(StateSpec("product-mix"))
    joint = definetti_broadcast(ens, 2)
    dims = joint.layout.dims
    # de Finetti states are already symmetric under copy swap
    assert np.abs(twirl_copies(joint.mat, dims, 2, 2) - joint.mat).max() < 1e-12
    # a non-symmetric product gets averaged with its swap
    asym = np.kron(bell_state().mat, product_mix_state().mat)
    tw = twirl_copies(asym, dims, 2, 2)
    swapped = permute_factors(asym, dims, (2, 3, 0, 1))
    assert np.abs(tw - (asym + swapped) / 2).max() < 1e-12


def test_broadcast_n1_returns_base_mi():
    rho = random_density(4, 3, seed=2)
    bv = broadcast_mi_upper(rho, 1, CFG)
    assert abs(bv.value - mutual_information(rho)) < 1e-9
    assert bv.direction == "upper"


def test_broadcast_marginals_within_tolerance():
    rho = product_mix_state()
    bv = broadcast_mi_upper(rho, 2, CFG)
    joint = bv.diagnostics["broadcast_state"].joint
    for k in (1, 2):
        assert marginal_residual(joint, rho, k) < 1e-7


def test_broadcast_never_exceeds_factorized_warm_start():
    rho = random_density(4, 4, seed=6)
    bv = broadcast_mi_upper(rho, 2, CFG)
    assert bv.value <= 2 * mutual_information(rho) + 1e-6


def test_broadcast_symmetric_dominates_unrestricted():
    rho = product_mix_state()
    sym = broadcast_mi_symmetric(rho, 2, CFG)
    joint = sym.diagnostics["broadcast_state"].joint
    dims = joint.layout.dims
    # the symmetric optimum is a feasible point of the unrestricted problem,
    # so feeding it as a warm start caps the unrestricted estimate
    un = broadcast_mi_upper(rho, 2, CFG, warm_starts=[joint.mat])
    assert un.value <= sym.value + 1e-6
    assert np.abs(twirl_copies(joint.mat, dims, 2, 2) - joint.mat).max() < 1e-8


def test_definetti_upper_never_exceeds_cap():
    ens = canonical_ensembles(StateSpec("product-mix"))
    rho = ens.average()
    for n in (2, 3):
        mi, cap = definetti_upper(rho, ens, n)
        assert mi <= cap + 1e-9
        # cap = n * 0 + S(1/2,1/2) = 1 for this product ensemble
        assert abs(cap - 1.0) < 1e-12


def test_growth_curve_classifications():
    gc = growth_curve(cc_state([[0.5, 0], [0, 0.5]]), 2, CFG)
    assert gc.classification == "constant"
    gc = growth_curve(bell_state(), 2, CFG)
    assert gc.classification == "linear-certified"
    assert gc.certificate > 1e-4
    ens = canonical_ensembles(StateSpec("product-mix"))
    gc = growth_curve(product_mix_state(), 2, CFG, ensemble=ens)
    assert gc.classification == "bounded"


def test_growth_curve_csv_schema(tmp_path):
    gc = growth_curve(cc_state([[0.5, 0], [0, 0.5]]), 2, CFG)
    path = tmp_path / "c.csv"
    gc.to_csv(path)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "n,upper_bits,lower_bits,residual_max,classification"
    assert len(lines) == 3
    first = lines[1].split(",")
    assert first[0] == "1" and first[4] == "constant"


def test_dimension_cap_enforced(monkeypatch):
    monkeypatch.setenv("BQ_MAX_DIM", "8")
    assert dim_cap() == 8
    with pytest.raises(DimensionCapError, match="cap"):
        broadcast_mi_upper(bell_state(), 2, CFG)


def test_broadcast_accepts_user_warm_start():
    rho = bell_state()
    warm = np.kron(rho.mat, rho.mat)
    bv = broadcast_mi_upper(rho, 2, CFG, warm_starts=[warm])
    assert abs(bv.value - 4.0) < 1e-3
    joint = bv.diagnostics["broadcast_state"].joint
    assert trace_distance(joint.mat, warm) < 1e-6
