"""Dense complex linear algebra and quantum-information primitives.

Everything works on plain numpy arrays plus a :class:`SubsystemLayout` that
records how a big matrix factors into labeled subsystems and which side of
the bipartite cut each factor belongs to.  All entropic quantities are in
bits (log base 2).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LOG2E = np.log2(np.e)

# Validation tolerances for density operators.
HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-10
EIG_NEG_TOL = 1e-9
# Eigenvalues below this contribute 0 to entropies (0 log 0 convention).
ENTROPY_CLAMP = 1e-12


class ValidationError(ValueError):
    """Raised when a matrix fails a density-operator or POVM contract."""


@dataclass(frozen=True)
class SubsystemLayout:
    """Ordered labeled tensor factors with an A/B side assignment.

    factors: tuple of (label, dim) pairs, in tensor-product order.
    sides: mapping label -> 'A' or 'B'.
    """

    factors: tuple
    sides: dict = field(compare=False)

    def __post_init__(self):
        labels = [lab for lab, _ in self.factors]
        if len(set(labels)) != len(labels):
            raise ValidationError(f"duplicate labels in layout: {labels}")
        for lab, d in self.factors:
            if d < 1:
                raise ValidationError(f"factor {lab!r} has non-positive dim {d}")
        for lab in labels:
            if self.sides.get(lab) not in ("A", "B"):
                raise ValidationError(f"label {lab!r} not assigned to side A or B")

    @property
    def labels(self):
        return tuple(lab for lab, _ in self.factors)

    @property
    def dims(self):
        return tuple(d for _, d in self.factors)

    @property
    def dim(self):
        return int(np.prod(self.dims))

    def side_labels(self, side):
        return tuple(lab for lab, _ in self.factors if self.sides[lab] == side)

    def indices(self, labels):
        """Positions of the given labels in factor order."""
        pos = {lab: i for i, (lab, _) in enumerate(self.factors)}
        for lab in labels:
            if lab not in pos:
                raise ValidationError(f"unknown label {lab!r}; layout has {self.labels}")
        return tuple(sorted(pos[lab] for lab in labels))

    def sublayout(self, keep_labels):
        keep = set(keep_labels)
        factors = tuple((lab, d) for lab, d in self.factors if lab in keep)
        sides = {lab: self.sides[lab] for lab, _ in factors}
        return SubsystemLayout(factors, sides)


def bipartite_layout(da, db, label_a="A", label_b="B"):
    """Standard two-factor layout A (dim da) tensor B (dim db)."""
    return SubsystemLayout(((label_a, da), (label_b, db)), {label_a: "A", label_b: "B"})


@dataclass(frozen=True)
class DensityOperator:
    """A validated Hermitian PSD unit-trace matrix with a subsystem layout."""

    layout: SubsystemLayout
    mat: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mat, dtype=complex)
        object.__setattr__(self, "mat", m)
        d = self.layout.dim
        if m.shape != (d, d):
            raise ValidationError(f"matrix shape {m.shape} does not match layout dim {d}")
        herm = np.abs(m - m.conj().T).max()
        if herm > HERMITICITY_TOL:
            i, j = np.unravel_index(np.argmax(np.abs(m - m.conj().T)), m.shape)
            raise ValidationError(
                f"matrix not Hermitian: deviation {herm:.3e} at entry ({i},{j})")
        tr = m.trace().real
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValidationError(f"trace is {tr!r}, expected 1")
        lam_min = np.linalg.eigvalsh(m)[0]
        if lam_min < -EIG_NEG_TOL:
            raise ValidationError(f"matrix not PSD: minimum eigenvalue {lam_min:.3e}")

    @property
    def dim(self):
        return self.layout.dim


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues in descending order with matching eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def tensor(a, b):
    """Kronecker product."""
    return np.kron(np.asarray(a), np.asarray(b))


def _as_tensor(mat, dims):
    return np.asarray(mat).reshape(tuple(dims) * 2)


def partial_trace_mat(mat, dims, keep_idx):
    """Partial trace of a square matrix over the factors not in keep_idx.

    dims: per-factor dimensions; keep_idx: sorted positions to keep.
    Returns the reduced matrix on the kept factors in original order.
    """
    m = len(dims)
    keep = list(keep_idx)
    drop = [i for i in range(m) if i not in keep]
    t = _as_tensor(mat, dims)
    perm = keep + drop + [m + i for i in keep] + [m + i for i in drop]
    dk = int(np.prod([dims[i] for i in keep])) if keep else 1
    dd = int(np.prod([dims[i] for i in drop])) if drop else 1
    t = t.transpose(perm).reshape(dk, dd, dk, dd)
    return np.einsum("ijkj->ik", t)


def partial_trace(rho: DensityOperator, keep) -> DensityOperator:
    """Reduced state on the kept labels, in original factor order."""
    keep = tuple(keep)
    if not keep:
        raise ValidationError("keep set must be nonempty")
    idx = rho.layout.indices(keep)
    red = partial_trace_mat(rho.mat, rho.layout.dims, idx)
    sub = rho.layout.sublayout([rho.layout.labels[i] for i in idx])
    return DensityOperator(sub, red)


def expand_mat(mat, dims, keep_idx):
    """Adjoint of the partial trace: place mat on keep_idx, identity elsewhere.

    Returns a full matrix on all factors in original order.
    """
    m = len(dims)
    keep = list(keep_idx)
    drop = [i for i in range(m) if i not in keep]
    dd = int(np.prod([dims[i] for i in drop])) if drop else 1
    big = np.kron(np.asarray(mat), np.eye(dd))
    order = keep + drop
    # big is laid out as keep-factors then drop-factors; permute back.
    inv = np.argsort(order)
    t = big.reshape(tuple(dims[i] for i in order) * 2)
    perm = list(inv) + [m + i for i in inv]
    d = int(np.prod(dims))
    return t.transpose(perm).reshape(d, d)


def permute_factors(mat, dims, perm):
    """Reorder tensor factors: new factor i is old factor perm[i]."""
    m = len(dims)
    t = _as_tensor(mat, dims)
    p = list(perm) + [m + i for i in perm]
    d = int(np.prod(dims))
    return t.transpose(p).reshape(d, d)


def partial_transpose_mat(mat, dims, axes):
    """Transpose the given tensor factors of a square matrix."""
    m = len(dims)
    t = _as_tensor(mat, dims)
    perm = list(range(2 * m))
    for i in axes:
        perm[i], perm[m + i] = perm[m + i], perm[i]
    d = int(np.prod(dims))
    return t.transpose(perm).reshape(d, d)


def partial_transpose(rho: DensityOperator, side="B"):
    """Partial transpose on all factors of the chosen side. Returns a matrix."""
    if side not in ("A", "B"):
        raise ValidationError(f"side must be 'A' or 'B', got {side!r}")
    axes = rho.layout.indices(rho.layout.side_labels(side))
    return partial_transpose_mat(rho.mat, rho.layout.dims, axes)


def hermitian_eig(h) -> Spectrum:
    """Eigendecomposition of a Hermitian matrix, eigenvalues descending."""
    h = np.asarray(h, dtype=complex)
    dev = np.abs(h - h.conj().T).max()
    if dev > 1e-8:
        raise ValidationError(f"matrix not Hermitian: deviation {dev:.3e}")
    lam, v = np.linalg.eigh(h)
    return Spectrum(lam[::-1].copy(), v[:, ::-1].copy())


def _entropy_from_eigs(lam):
    lam = np.asarray(lam, dtype=float)
    bad = lam[lam < -EIG_NEG_TOL]
    if bad.size:
        raise ValidationError(f"eigenvalue {bad.min():.3e} too negative for entropy")
    lam = np.clip(lam, 0.0, None)
    lam = lam[lam > ENTROPY_CLAMP]
    return float(-(lam * np.log2(lam)).sum())


def von_neumann_entropy(rho) -> float:
    """S(rho) = -Tr rho log2 rho, in bits.  Accepts a DensityOperator or matrix."""
    m = rho.mat if isinstance(rho, DensityOperator) else np.asarray(rho)
    return _entropy_from_eigs(np.linalg.eigvalsh(m))


def shannon_entropy(p) -> float:
    """Shannon entropy of a probability vector, in bits."""
    p = np.asarray(p, dtype=float).ravel()
    p = p[p > ENTROPY_CLAMP]
    return float(-(p * np.log2(p)).sum())


def mutual_information(rho: DensityOperator) -> float:
    """I(A:B) = S(A) + S(B) - S(AB) across the layout's bipartition, in bits."""
    a = rho.layout.side_labels("A")
    b = rho.layout.side_labels("B")
    if not a or not b:
        raise ValidationError("layout must have factors on both sides")
    dims = rho.layout.dims
    sa = _entropy_from_eigs(np.linalg.eigvalsh(
        partial_trace_mat(rho.mat, dims, rho.layout.indices(a))))
    sb = _entropy_from_eigs(np.linalg.eigvalsh(
        partial_trace_mat(rho.mat, dims, rho.layout.indices(b))))
    sab = von_neumann_entropy(rho)
    return sa + sb - sab


def kl_divergence(p, q) -> float:
    """Kullback-Leibler distance sum p log2(p/q), in bits.

    Returns inf when p puts weight where q is (numerically) zero.
    """
    p = np.asarray(p, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    if p.shape != q.shape:
        raise ValidationError(f"length mismatch: {p.size} vs {q.size}")
    if p.min() < -1e-12 or q.min() < -1e-12:
        raise ValidationError("distributions must be nonnegative")
    for name, v in (("p", p), ("q", q)):
        if abs(v.sum() - 1.0) > 1e-9:
            raise ValidationError(f"{name} sums to {v.sum()!r}, expected 1")
    mask = p > ENTROPY_CLAMP
    if np.any(q[mask] <= 1e-15):
        return float("inf")
    pm, qm = p[mask], q[mask]
    return float((pm * (np.log2(pm) - np.log2(qm))).sum())


def trace_distance(rho, sigma) -> float:
    """Trace norm ||rho - sigma||_1 of the difference (range [0, 2] for states)."""
    a = rho.mat if isinstance(rho, DensityOperator) else np.asarray(rho)
    b = sigma.mat if isinstance(sigma, DensityOperator) else np.asarray(sigma)
    if a.shape != b.shape:
        raise ValidationError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.abs(np.linalg.eigvalsh(a - b)).sum())


def binary_entropy(x) -> float:
    """h(x) = -x log2 x - (1-x) log2(1-x)."""
    if not 0.0 <= x <= 1.0:
        raise ValidationError(f"binary_entropy argument {x!r} outside [0, 1]")
    out = 0.0
    if x > 0:
        out -= x * np.log2(x)
    if x < 1:
        out -= (1 - x) * np.log2(1 - x)
    return float(out)


def logm2_psd(mat, clamp=1e-14):
    """log2 of a PSD matrix with eigenvalues clamped below for stability."""
    lam, v = np.linalg.eigh(mat)
    lam = np.clip(lam, clamp, None)
    return (v * np.log2(lam)) @ v.conj().T
