"""Broadcast-copy mutual information: feasible-set solvers, de Finetti upper
bounds, growth curves with classification, and structural-property checks.

The central estimator minimizes I(A^n:B^n) over n-copy broadcast states of a
base state rho (every per-copy marginal equal to rho).  Minimization over a
nonconvex parameterization only ever certifies an upper bound; every reported
value is evaluated at a candidate projected onto the exact feasible set.
"""

from __future__ import annotations

import itertools
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .optim import (
    BoundedValue,
    DensityParam,
    MarginalSet,
    OptimizerConfig,
    PsdSet,
    TraceOneSet,
    dykstra_project,
    entropy_combo,
    marginal_penalty,
    minimize_penalized,
)
from .qcore import (
    DensityOperator,
    ValidationError,
    expand_mat,
    mutual_information,
    partial_trace_mat,
    permute_factors,
    shannon_entropy,
    trace_distance,
)
from .states import (
    Ensemble,
    broadcast_layout,
    copy_marginal_mat,
    definetti_broadcast,
    spectral_ensemble,
)

DEFAULT_DIM_CAP = 256


def dim_cap():
    """Hard cap on joint dimension; overridable via BQ_MAX_DIM."""
    return int(os.environ.get("BQ_MAX_DIM", DEFAULT_DIM_CAP))


class DimensionCapError(ValueError):
    """Joint dimension would exceed the configured cap."""


@dataclass
class BroadcastState:
    """A feasible n-copy broadcast candidate with its per-copy residuals."""

    n: int
    base: DensityOperator
    joint: DensityOperator
    marginal_residuals: list


@dataclass
class GrowthCurve:
    per_n: list  # (n, upper BoundedValue, lower BoundedValue)
    classification: str
    certificate: float | None = None

    def to_csv(self, path):
        with open(path, "w") as f:
            f.write("n,upper_bits,lower_bits,residual_max,classification\n")
            for n, up, lo in self.per_n:
                rmax = max(up.residuals.values(), default=0.0)
                f.write(f"{n},{up.value:.12g},{lo.value:.12g},{rmax:.6g},"
                        f"{self.classification}\n")


def marginal_residual(joint: DensityOperator, base: DensityOperator, k: int) -> float:
    """Frobenius deviation of the k-th copy marginal of joint from base."""
    red = copy_marginal_mat(joint.mat, joint.layout, base.layout, k)
    return float(np.linalg.norm(red - base.mat))


def _copy_permutation(base_nf, n, perm):
    """Factor permutation sending copy block k to block perm[k]."""
    out = []
    for k in perm:
        out.extend(range(k * base_nf, (k + 1) * base_nf))
    return out


def twirl_copies(mat, dims, base_nf, n):
    """Average over all permutations of the n copy blocks."""
    acc = np.zeros_like(mat, dtype=complex)
    perms = list(itertools.permutations(range(n)))
    for p in perms:
        acc += permute_factors(mat, dims, _copy_permutation(base_nf, n, p))
    return acc / len(perms)


def _coerce_candidate(ws, expected_dim):
    if isinstance(ws, BroadcastState):
        m = ws.joint.mat
    elif isinstance(ws, DensityOperator):
        m = ws.mat
    else:
        m = np.asarray(ws, dtype=complex)
    if m.shape != (expected_dim, expected_dim):
        raise ValidationError(
            f"warm start has shape {m.shape}, expected {(expected_dim, expected_dim)}")
    return m


def _default_candidates(rho, n):
    """Always-feasible starting joints: factorized copies and the spectral
    de Finetti state."""
    power = rho.mat
    for _ in range(n - 1):
        power = np.kron(power, rho.mat)
    cands = [power]
    if n > 1:
        cands.append(definetti_broadcast(spectral_ensemble(rho), n).mat)
    return cands


def _solve_broadcast(rho, n, cfg, warm_starts, symmetric):
    layout = broadcast_layout(rho.layout, n)
    d = layout.dim
    if d > dim_cap():
        raise DimensionCapError(
            f"joint dimension {d} exceeds cap {dim_cap()} (set BQ_MAX_DIM to raise)")
    dims = layout.dims
    base_nf = len(rho.layout.factors)
    a_idx = layout.indices(layout.side_labels("A"))
    b_idx = layout.indices(layout.side_labels("B"))
    copy_idx = [layout.indices(tuple(f"{lab}{k}" for lab, _ in rho.layout.factors))
                for k in range(1, n + 1)]
    terms = [(1.0, a_idx), (1.0, b_idx), (-1.0, None)]

    def maybe_twirl(m):
        return twirl_copies(m, dims, base_nf, n) if (symmetric and n > 1) else m

    par = DensityParam(d)

    def objective(x):
        s, cache = par.sigma(x)
        st = maybe_twirl(s)
        f, fmat = entropy_combo(st, dims, terms)
        return f, par.grad_x(maybe_twirl(fmat), s, cache)

    constraints = []
    for k, idx in enumerate(copy_idx):
        def con(x, idx=idx):
            s, cache = par.sigma(x)
            st = maybe_twirl(s)
            cv, cg = marginal_penalty(st, dims, idx, rho.mat)
            return cv, par.grad_x(maybe_twirl(cg), s, cache)
        constraints.append((f"marginal_{k + 1}", con))

    candidates = [maybe_twirl(c) for c in _default_candidates(rho, n)]
    for ws in warm_starts or ():
        candidates.append(maybe_twirl(_coerce_candidate(ws, d)))
    inits = [par.init_from_matrix(c) for c in candidates]

    diag = {}
    if n == 1:
        # The only 1-copy broadcast state is rho itself.
        pool = [rho.mat]
        diag["note"] = "n=1: feasible set is the singleton {rho}"
    else:
        opt = minimize_penalized(objective, constraints, par.n_params, cfg,
                                 inits=inits)
        sigma_opt, _ = par.sigma(opt.argmin)
        pool = [maybe_twirl(sigma_opt)] + candidates
        diag = opt.summary()

    projector = _BroadcastProjector(rho, n)
    best = None
    failures = []
    feasible = []
    for cand in pool:
        try:
            proj = projector.project(cand, tol=min(1e-10, cfg.tol_residual))
        except RuntimeError as e:
            failures.append(str(e))
            continue
        proj = maybe_twirl(proj)
        mi_pre = _cut_mi(cand, dims, a_idx, b_idx)
        joint = DensityOperator(layout, proj)
        mi = mutual_information(joint)
        residuals = [marginal_residual(joint, rho, k) for k in range(1, n + 1)]
        if max(residuals) > cfg.tol_residual:
            continue
        feasible.append(joint)
        if best is None or mi < best[0]:
            best = (mi, joint, residuals, mi_pre)
    if best is None:
        raise RuntimeError(
            "no candidate could be projected onto the broadcast feasible set: "
            + "; ".join(failures))
    mi, joint, residuals, mi_pre = best
    diag["pre_projection_value"] = float(mi_pre)
    diag["feasible_joints"] = feasible
    state = BroadcastState(n=n, base=rho, joint=joint, marginal_residuals=residuals)
    bv = BoundedValue(
        value=float(mi),
        direction="upper",
        method=("symmetric-" if symmetric else "") + "penalized-gd+dykstra",
        residuals={"marginal_max": float(max(residuals))},
        diagnostics=diag,
    )
    bv.diagnostics["broadcast_state"] = state
    return bv


class _BroadcastProjector:
    """Dykstra projection onto the n-copy broadcast feasible set of rho.

    Works in the support subspace supp(rho)^(x n): any PSD joint whose copy
    marginals equal rho is supported there, and there the constraints become
    plain marginal constraints with a full-rank target, so the projection
    has a strictly feasible interior point (rho^(x n)) and converges fast.
    """

    SUPPORT_CUTOFF = 1e-9

    def __init__(self, rho: DensityOperator, n: int):
        lam, v = np.linalg.eigh(rho.mat)
        keep = lam > self.SUPPORT_CUTOFF
        self.n = n
        if keep.all():
            self.s = None
            self.w = None
            r = rho.dim
            target = rho.mat
        else:
            self.s = v[:, keep]
            w = self.s
            for _ in range(n - 1):
                w = np.kron(w, self.s)
            self.w = w
            r = self.s.shape[1]
            target = self.s.conj().T @ rho.mat @ self.s
        cdims = (r,) * n
        self.sets = [PsdSet(), TraceOneSet()] + [
            MarginalSet(cdims, (k,), target, name=f"marginal_{k + 1}")
            for k in range(n)]

    def project(self, cand, tol=1e-10):
        if self.w is None:
            x = cand
        else:
            x = self.w.conj().T @ cand @ self.w
        x = dykstra_project(x, self.sets, tol=tol, max_sweeps=5000)
        if self.w is not None:
            x = self.w @ x @ self.w.conj().T
        return x


def _cut_mi(mat, dims, a_idx, b_idx):
    f, _dummy = _entropies_only(mat, dims, a_idx, b_idx)
    return f


def _entropies_only(mat, dims, a_idx, b_idx):
    def ent(m):
        lam = np.clip(np.linalg.eigvalsh(m), 0.0, None)
        lam = lam[lam > 1e-14]
        return float(-(lam * np.log2(lam)).sum())
    sa = ent(partial_trace_mat(mat, dims, a_idx))
    sb = ent(partial_trace_mat(mat, dims, b_idx))
    sab = ent(mat)
    return sa + sb - sab, (sa, sb, sab)


def broadcast_mi_upper(rho: DensityOperator, n: int, cfg: OptimizerConfig,
                       warm_starts=None) -> BoundedValue:
    """Upper bound on the n-copy broadcast MI (I_b)_n of rho.

    Minimizes the cut MI over the broadcast feasible set by multi-start
    penalized gradient descent; the reported value is the MI at the best
    Dykstra-projected feasible candidate.  Factorized copies and the
    spectral de Finetti state are always included as warm starts, so the
    value never exceeds n*I(rho) (+ tolerance); any caller-supplied
    warm starts join the candidate pool the same way.
    """
    return _solve_broadcast(rho, n, cfg, warm_starts, symmetric=False)


def broadcast_mi_symmetric(rho: DensityOperator, n: int, cfg: OptimizerConfig,
                           warm_starts=None) -> BoundedValue:
    """Upper bound on the permutation-invariant-restricted broadcast MI.

    Same protocol as broadcast_mi_upper but every candidate is twirled over
    copy permutations, so the reported joint is exactly permutation
    invariant.
    """
    return _solve_broadcast(rho, n, cfg, warm_starts, symmetric=True)


def definetti_upper(rho: DensityOperator, ens: Ensemble, n: int):
    """De Finetti upper bound on (I_b)_n and its analytic cap.

    Returns (mi_definetti, cap) where cap = n * sum_k p_k I(rho_k) + S({p_k});
    the first never exceeds the second.
    """
    avg = ens.average()
    if trace_distance(avg, rho) > 1e-8 or avg.layout.factors != rho.layout.factors:
        raise ValidationError("ensemble does not average to the given state")
    mi = mutual_information(definetti_broadcast(ens, n))
    probs = ens.probabilities()
    cap = n * sum(p * mutual_information(m) for p, m in ens.members) + shannon_entropy(probs)
    return float(mi), float(cap)


# Classification thresholds (see GrowthCurve): a curve is "constant" when the
# estimate moves less than FLAT_TOL from n=1 to n_max; a positive measured-MI
# certificate above CERT_TOL certifies linear growth.
FLAT_TOL = 5e-3
CERT_TOL = 1e-4


def growth_curve(rho: DensityOperator, n_max: int, cfg: OptimizerConfig,
                 certificate=None, ensemble=None) -> GrowthCurve:
    """Estimate (I_b)_n for n = 1..n_max and classify the growth behavior.

    Upper estimates are warm-started across n by tensoring the previous
    optimal joint with rho.  Lower values are max(I(rho), n * certificate)
    where the certificate is the measured-correlation lower bound (computed
    with default IC POVMs unless supplied).  ensemble, when given, adds de
    Finetti warm starts and sets the boundedness cap; otherwise a cap is
    obtained from the ensemble optimizer.
    """
    if n_max < 2:
        raise ValidationError(f"n_max must be >= 2, got {n_max}")
    base_mi = mutual_information(rho)
    if certificate is None:
        from .entms import eic_lower
        from .measures import default_ic_povm
        da = int(np.prod([d for lab, d in rho.layout.factors
                          if rho.layout.sides[lab] == "A"]))
        db = rho.layout.dim // da
        cert_bv = eic_lower(rho, default_ic_povm(da), default_ic_povm(db), cfg)
        certificate = cert_bv.value
    if ensemble is None:
        from .entms import ecsq_upper
        ecsq = ecsq_upper(rho, None, cfg)
        ensemble = ecsq.diagnostics.get("ensemble")

    per_n = []
    prev_joint = None
    for n in range(1, n_max + 1):
        warm = []
        if prev_joint is not None:
            warm.append(np.kron(prev_joint, rho.mat))
        if ensemble is not None and n > 1:
            warm.append(definetti_broadcast(ensemble, n).mat)
        up = broadcast_mi_upper(rho, n, cfg, warm_starts=warm)
        prev_joint = up.diagnostics["broadcast_state"].joint.mat
        lo = BoundedValue(
            value=float(max(base_mi, n * certificate)),
            direction="lower",
            method="max(I(rho), n*measured-correlation-certificate)",
        )
        per_n.append((n, up, lo))

    est_1 = per_n[0][1].value
    est_top = per_n[-1][1].value
    if est_top - est_1 < FLAT_TOL:
        cls = "constant"
    elif certificate > CERT_TOL:
        cls = "linear-certified"
    else:
        cls = "inconclusive"
        if ensemble is not None:
            _, cap = definetti_upper(rho, ensemble, n_max)
            if est_top <= cap + FLAT_TOL:
                cls = "bounded"
    return GrowthCurve(per_n=per_n, classification=cls, certificate=float(certificate))


def depolarizing_kraus(q, dim=2):
    """Kraus operators of the qubit depolarizing channel with strength q."""
    if dim != 2:
        raise ValidationError("depolarizing_kraus only implemented for qubits")
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    sy = np.array([[0, -1j], [1j, 0]], dtype=complex)
    sz = np.array([[1, 0], [0, -1]], dtype=complex)
    return [
        math.sqrt(1 - 3 * q / 4) * np.eye(2, dtype=complex),
        math.sqrt(q / 4) * sx,
        math.sqrt(q / 4) * sy,
        math.sqrt(q / 4) * sz,
    ]


def apply_channel_to_factor(mat, dims, kraus, idx):
    """Apply a single-factor channel (Kraus list) at factor position idx."""
    out = np.zeros_like(mat, dtype=complex)
    for k in kraus:
        kf = expand_mat(k, dims, (idx,))
        out += kf @ mat @ kf.conj().T
    return out


def apply_local_channels(rho: DensityOperator, kraus_by_label) -> DensityOperator:
    """Apply per-factor channels given as {label: kraus list}."""
    m = rho.mat
    dims = rho.layout.dims
    for lab, kraus in kraus_by_label.items():
        idx = rho.layout.indices((lab,))[0]
        m = apply_channel_to_factor(m, dims, kraus, idx)
    return DensityOperator(rho.layout, m)


def property_checks(rho: DensityOperator, sigma: DensityOperator,
                    channels=None, cfg: OptimizerConfig = None, n=2,
                    weights=(0.5, 0.5), tol=1e-3) -> dict:
    """Warm-start verification of the structural inequalities of the
    broadcast-MI estimate: monotonicity under local channels, the
    convexity-style mixing bound, and subadditivity.

    Each check re-runs the estimator on the transformed state with the
    transformed optimal joint as a warm start and asserts the resulting
    inequality between estimates.
    """
    cfg = cfg or OptimizerConfig()
    if channels is None:
        channels = {lab: depolarizing_kraus(0.3) for lab, _ in rho.layout.factors}
    report = {}

    est_rho = broadcast_mi_upper(rho, n, cfg)
    est_sig = broadcast_mi_upper(sigma, n, cfg)
    joint_rho = est_rho.diagnostics["broadcast_state"].joint
    joint_sig = est_sig.diagnostics["broadcast_state"].joint

    # Monotonicity: push the optimal joint through the per-copy channels.
    tau = apply_local_channels(rho, channels)
    per_copy = {}
    for k in range(1, n + 1):
        for lab, kraus in channels.items():
            per_copy[f"{lab}{k}"] = kraus
    warm = apply_local_channels(joint_rho, per_copy)
    est_tau = broadcast_mi_upper(tau, n, cfg, warm_starts=[warm])
    report["monotonicity"] = {
        "lhs": est_tau.value, "rhs": est_rho.value + tol,
        "holds": est_tau.value <= est_rho.value + tol,
    }

    # Convexity-style bound with Shannon-entropy slack.
    w0, w1 = weights
    mix = DensityOperator(rho.layout, w0 * rho.mat + w1 * sigma.mat)
    warm_mix = w0 * joint_rho.mat + w1 * joint_sig.mat
    est_mix = broadcast_mi_upper(mix, n, cfg, warm_starts=[warm_mix])
    rhs = w0 * est_rho.value + w1 * est_sig.value + shannon_entropy([w0, w1]) + tol
    report["convexity_bound"] = {
        "lhs": est_mix.value, "rhs": rhs, "holds": est_mix.value <= rhs,
    }

    # Subadditivity on the tensor product (copies interleaved per pair).
    prod, warm_prod = _tensor_pair_broadcast(rho, sigma, joint_rho, joint_sig, n)
    est_prod = broadcast_mi_upper(prod, n, cfg, warm_starts=[warm_prod])
    rhs = est_rho.value + est_sig.value + tol
    report["subadditivity"] = {
        "lhs": est_prod.value, "rhs": rhs, "holds": est_prod.value <= rhs,
    }
    return report


def _tensor_pair_broadcast(rho, sigma, joint_rho, joint_sig, n):
    """Build rho (x) sigma with disambiguated labels, plus the warm-start
    joint obtained by interleaving the two optimal joints copy by copy."""
    factors = tuple((f"{lab}", d) for lab, d in rho.layout.factors) + tuple(
        (f"{lab}'", d) for lab, d in sigma.layout.factors)
    sides = {f"{lab}": rho.layout.sides[lab] for lab, _ in rho.layout.factors}
    sides.update({f"{lab}'": sigma.layout.sides[lab] for lab, _ in sigma.layout.factors})
    from .qcore import SubsystemLayout
    prod = DensityOperator(SubsystemLayout(factors, sides),
                           np.kron(rho.mat, sigma.mat))
    # joint_rho (x) joint_sig has copy blocks (rho copies) then (sigma copies);
    # the product's broadcast layout wants them interleaved per copy.
    big = np.kron(joint_rho.mat, joint_sig.mat)
    nf_r = len(rho.layout.factors)
    nf_s = len(sigma.layout.factors)
    dims = tuple(joint_rho.layout.dims) + tuple(joint_sig.layout.dims)
    perm = []
    for k in range(n):
        perm.extend(range(k * nf_r, (k + 1) * nf_r))
        perm.extend(range(n * nf_r + k * nf_s, n * nf_r + (k + 1) * nf_s))
    return prod, permute_factors(big, dims, perm)
