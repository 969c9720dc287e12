"""Local measurement statistics, classical mutual information with
optimization over local POVMs, and default informationally complete POVMs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .optim import BoundedValue, OptimizerConfig, finite_diff_check, minimize_penalized
from .qcore import (
    DensityOperator,
    ValidationError,
    mutual_information,
    partial_trace_mat,
    shannon_entropy,
    tensor,
)

EFFECT_PSD_TOL = 1e-9
COMPLETENESS_TOL = 1e-9


@dataclass(frozen=True)
class Povm:
    """A list of PSD effects on one subsystem summing to the identity."""

    effects: tuple

    def __post_init__(self):
        effs = tuple(np.asarray(e, dtype=complex) for e in self.effects)
        object.__setattr__(self, "effects", effs)
        if not effs:
            raise ValidationError("POVM must have at least one effect")
        d = effs[0].shape[0]
        total = np.zeros((d, d), dtype=complex)
        for i, e in enumerate(effs):
            if e.shape != (d, d):
                raise ValidationError(f"effect {i} has shape {e.shape}, expected ({d},{d})")
            lam = np.linalg.eigvalsh((e + e.conj().T) / 2)
            if lam[0] < -EFFECT_PSD_TOL:
                raise ValidationError(f"effect {i} not PSD (min eigenvalue {lam[0]:.3e})")
            total += e
        if np.abs(total - np.eye(d)).max() > COMPLETENESS_TOL:
            raise ValidationError("effects do not sum to the identity")

    @property
    def dim(self):
        return self.effects[0].shape[0]

    def __len__(self):
        return len(self.effects)

    def gram_rank(self, tol=1e-8):
        """Rank of the Gram matrix Tr[E_i† E_j]; equals dim² iff the POVM is
        informationally complete."""
        g = np.array([[np.vdot(a, b) for b in self.effects] for a in self.effects])
        s = np.linalg.svd(g, compute_uv=False)
        return int((s > tol * s[0]).sum())


@dataclass(frozen=True)
class JointDistribution:
    """Joint outcome probabilities p[i, j] of local measurements."""

    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.min() < -1e-12:
            raise ValidationError(f"negative probability {p.min():.3e}")
        p = np.clip(p, 0.0, None)
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValidationError(f"probabilities sum to {p.sum()!r}")
        object.__setattr__(self, "p", p)


def measure_statistics(rho: DensityOperator, m: Povm, n: Povm) -> JointDistribution:
    """Outcome distribution p_ij = Tr[(M_i x N_j) rho] for local POVMs."""
    da = int(np.prod([d for lab, d in rho.layout.factors if rho.layout.sides[lab] == "A"]))
    db = rho.layout.dim // da
    if m.dim != da or n.dim != db:
        raise ValidationError(
            f"POVM dims ({m.dim},{n.dim}) do not match sides ({da},{db})")
    p = np.empty((len(m), len(n)))
    for i, mi in enumerate(m.effects):
        for j, nj in enumerate(n.effects):
            p[i, j] = np.vdot(tensor(mi, nj), rho.mat).real
    return JointDistribution(p)


def classical_mi_fixed(dist: JointDistribution) -> float:
    """Classical mutual information of a joint distribution, in bits."""
    p = dist.p
    return shannon_entropy(p.sum(1)) + shannon_entropy(p.sum(0)) - shannon_entropy(p)


def _tetrahedral_sic():
    """Qubit SIC: effects (I + v.sigma)/4 for tetrahedron vertices v."""
    verts = [
        (1, 1, 1),
        (1, -1, -1),
        (-1, 1, -1),
        (-1, -1, 1),
    ]
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    sy = np.array([[0, -1j], [1j, 0]], dtype=complex)
    sz = np.array([[1, 0], [0, -1]], dtype=complex)
    effs = []
    for v in verts:
        vv = np.array(v) / np.sqrt(3)
        effs.append((np.eye(2) + vv[0] * sx + vv[1] * sy + vv[2] * sz) / 4)
    return Povm(tuple(effs))


def default_ic_povm(dim: int) -> Povm:
    """An informationally complete POVM with dim² rank-1 effects.

    dim 2 gives the tetrahedral SIC.  Higher dims use the d basis projectors
    plus pairwise real and imaginary superposition projectors, renormalized
    through the inverse square root of their sum; only the Gram-rank
    contract matters, not the particular construction.
    """
    if dim < 2:
        raise ValidationError(f"POVM dimension must be >= 2, got {dim}")
    if dim == 2:
        return _tetrahedral_sic()
    ops = []
    eye = np.eye(dim, dtype=complex)
    for k in range(dim):
        ops.append(np.outer(eye[k], eye[k].conj()))
    for j in range(dim):
        for k in range(j + 1, dim):
            for phase in (1.0, 1j):
                v = (eye[j] + phase * eye[k]) / np.sqrt(2)
                ops.append(np.outer(v, v.conj()))
    total = sum(ops)
    lam, u = np.linalg.eigh(total)
    inv_sqrt = (u / np.sqrt(lam)) @ u.conj().T
    return Povm(tuple(inv_sqrt @ o @ inv_sqrt for o in ops))


class PovmParam:
    """Unconstrained POVM parameterization E_i = S^{-1/2} G_i† G_i S^{-1/2}.

    S = sum_i G_i† G_i (+ small regularizer), so the effects are PSD and
    complete by construction.  The exact gradient chain through S^{-1/2}
    uses the Sylvester-kernel trick in the eigenbasis of S^{1/2}.
    """

    def __init__(self, dim, n_outcomes, reg=1e-12):
        self.dim = int(dim)
        self.k = int(n_outcomes)
        self.reg = float(reg)
        self.n_params = 2 * self.k * self.dim * self.dim

    def unpack(self, x):
        n = self.k * self.dim * self.dim
        g = x[:n] + 1j * x[n:]
        return g.reshape(self.k, self.dim, self.dim)

    def pack(self, g):
        return np.concatenate([g.real.ravel(), g.imag.ravel()])

    def effects(self, x):
        g = self.unpack(x)
        ks = np.einsum("kij,kil->kjl", g.conj(), g)
        s = ks.sum(0) + self.reg * np.eye(self.dim)
        lam, u = np.linalg.eigh(s)
        lam = np.clip(lam, self.reg, None)
        a = (u * lam ** -0.5) @ u.conj().T  # S^{-1/2}
        effs = np.einsum("ab,kbc,cd->kad", a, ks, a)
        cache = (g, ks, a, np.sqrt(lam), u)
        return effs, cache

    def grad_x(self, f_effs, cache):
        """Pull back d f = sum_i Tr[F_i d E_i] to the parameter vector."""
        g, ks, a, beta, u = cache
        # A = S^{-1/2}; collect the dA terms: Q = sum_i (K_i A F_i + F_i A K_i)
        q = np.einsum("kab,bc,kcd->ad", ks, a, f_effs) \
            + np.einsum("kab,bc,kcd->ad", f_effs, a, ks)
        # dA = -A dB A with B = S^{1/2}; dB solves B dB + dB B = dS, which in
        # the eigenbasis of B is elementwise division by beta_i + beta_j.
        y = -a @ q @ a
        yt = u.conj().T @ y @ u
        denom = beta[:, None] + beta[None, :]
        z = u @ (yt / denom) @ u.conj().T
        # Coefficient of dK_i: C_i = A F_i A + Z.
        grads = np.empty_like(g)
        for i in range(self.k):
            c = a @ f_effs[i] @ a + z
            c = (c + c.conj().T) / 2
            grads[i] = 2.0 * g[i] @ c
        return self.pack(grads)

    def init_from_povm(self, povm: Povm):
        gs = []
        for e in povm.effects:
            lam, v = np.linalg.eigh(e)
            lam = np.clip(lam, 0.0, None)
            gs.append((v * np.sqrt(lam)).conj().T)
        g = np.array(gs)
        if g.shape[0] < self.k:
            g = np.concatenate([g, 1e-6 * np.ones((self.k - g.shape[0],
                                                   self.dim, self.dim))])
        return self.pack(g[:self.k])


def _classical_mi_and_grads(rho_mat, dims, a_idx, b_idx, effs_a, effs_b):
    """I(p_ij) plus gradients with respect to each local effect."""
    ka, kb = effs_a.shape[0], effs_b.shape[0]
    # rho reduced against each B effect and vice versa.
    da = effs_a.shape[1]
    db = effs_b.shape[1]
    rt_b = np.empty((kb, da, da), dtype=complex)  # Tr_B[(I x N_j) rho]
    rt_a = np.empty((ka, db, db), dtype=complex)  # Tr_A[(M_i x I) rho]
    for j in range(kb):
        op = np.kron(np.eye(da), effs_b[j])
        rt_b[j] = partial_trace_mat(op @ rho_mat, dims, a_idx)
    for i in range(ka):
        op = np.kron(effs_a[i], np.eye(db))
        rt_a[i] = partial_trace_mat(op @ rho_mat, dims, b_idx)
    p = np.einsum("iab,jba->ij", effs_a, rt_b).real
    p = np.clip(p, 1e-15, None)
    pa = p.sum(1)
    pb = p.sum(0)
    log_ratio = np.log2(p) - np.log2(pa)[:, None] - np.log2(pb)[None, :]
    val = float((p * log_ratio).sum())
    # rt_b[j] and rt_a[i] are Hermitian, so they serve directly as the
    # effect-space gradients d p_ij = Tr[dE_i rt_b[j]] etc.
    grad_a = np.einsum("ij,jab->iab", log_ratio, rt_b)
    grad_b = np.einsum("ij,iab->jab", log_ratio, rt_a)
    return val, grad_a, grad_b


def classical_mi_max(rho: DensityOperator, outcomes_per_side: int,
                     cfg: OptimizerConfig, warm_povms=None) -> BoundedValue:
    """Lower bound on the measured (classical) mutual information I_C.

    Maximizes I(p_ij) over local POVMs by multi-start gradient ascent on the
    unconstrained parameterization; local search can only underestimate the
    true maximum, hence direction 'lower'.
    """
    da = int(np.prod([d for lab, d in rho.layout.factors if rho.layout.sides[lab] == "A"]))
    db = rho.layout.dim // da
    a_idx = rho.layout.indices(rho.layout.side_labels("A"))
    b_idx = rho.layout.indices(rho.layout.side_labels("B"))
    dims = rho.layout.dims
    k = outcomes_per_side
    pa = PovmParam(da, k)
    pb = PovmParam(db, k)

    def split(x):
        return x[:pa.n_params], x[pa.n_params:]

    def neg_fun(x):
        xa, xb = split(x)
        ea, ca = pa.effects(xa)
        eb, cb = pb.effects(xb)
        val, ga, gb = _classical_mi_and_grads(rho.mat, dims, a_idx, b_idx, ea, eb)
        grad = np.concatenate([pa.grad_x(ga, ca), pb.grad_x(gb, cb)])
        return -val, -grad

    inits = []
    if warm_povms:
        for wa, wb in warm_povms:
            inits.append(np.concatenate([pa.init_from_povm(wa), pb.init_from_povm(wb)]))
    inits.append(np.concatenate([pa.init_from_povm(default_ic_povm(da)),
                                 pb.init_from_povm(default_ic_povm(db))]))

    rng_check = np.random.default_rng(cfg.master_seed)
    x_chk = rng_check.standard_normal(pa.n_params + pb.n_params)
    gerr = finite_diff_check(neg_fun, x_chk, 1e-5, max_coords=64, seed=cfg.master_seed)
    use_fd = gerr > 1e-3
    fun = _fd_wrap(neg_fun) if use_fd else neg_fun

    opt = minimize_penalized(fun, [], pa.n_params + pb.n_params, cfg, inits=inits)
    value = -opt.value
    mi_q = mutual_information(rho)
    diag = opt.summary()
    diag["gradient_check"] = float(gerr)
    diag["finite_difference_fallback"] = bool(use_fd)
    xa, xb = split(opt.argmin)
    ea, _ = pa.effects(xa)
    eb, _ = pb.effects(xb)
    bv = BoundedValue(
        value=float(min(value, mi_q)),
        direction="lower",
        method="povm-gradient-ascent",
        residuals={"quantum_mi_slack": float(mi_q - value)},
        diagnostics=diag,
    )
    bv.diagnostics["povm_a"] = Povm(tuple(ea))
    bv.diagnostics["povm_b"] = Povm(tuple(eb))
    return bv


def _fd_wrap(fun, h=1e-6):
    def wrapped(x):
        f, _ = fun(x)
        g = np.empty_like(x)
        for i in range(x.size):
            e = np.zeros_like(x)
            e[i] = h
            g[i] = (fun(x + e)[0] - fun(x - e)[0]) / (2 * h)
        return f, g
    return wrapped
