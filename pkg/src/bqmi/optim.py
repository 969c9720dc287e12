"""Reusable optimization engines: penalized multi-start gradient descent,
finite-difference gradient validation, and Dykstra alternating projections
onto convex sets of Hermitian matrices."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .qcore import (
    LOG2E,
    expand_mat,
    logm2_psd,
    partial_trace_mat,
    partial_transpose_mat,
)


@dataclass(frozen=True)
class OptimizerConfig:
    max_iters: int = 300
    restarts: int = 8
    master_seed: int = 0
    step_init: float = 0.5
    penalty_schedule: tuple = (10.0, 100.0, 1000.0, 10000.0)
    tol_objective: float = 1e-9
    tol_residual: float = 1e-8

    def __post_init__(self):
        if self.max_iters <= 0 or self.restarts <= 0 or self.step_init <= 0:
            raise ValueError("max_iters, restarts, step_init must be positive")
        sched = tuple(self.penalty_schedule)
        if any(w <= 0 for w in sched) or list(sched) != sorted(sched):
            raise ValueError("penalty_schedule must be positive and non-decreasing")
        object.__setattr__(self, "penalty_schedule", sched)


@dataclass
class OptimResult:
    value: float
    argmin: np.ndarray
    residuals: dict
    converged: bool
    iterations_used: int
    restart_index: int

    def summary(self):
        return {
            "value": self.value,
            "residuals": {k: float(v) for k, v in self.residuals.items()},
            "converged": bool(self.converged),
            "iterations_used": int(self.iterations_used),
            "restart_index": int(self.restart_index),
        }


@dataclass
class BoundedValue:
    """A number plus the direction in which it bounds the true quantity.

    direction 'upper' means the true value is <= value (up to residuals),
    'lower' means the true value is >= value, 'exact' means equality.
    """

    value: float
    direction: str
    method: str
    residuals: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.direction not in ("upper", "lower", "exact"):
            raise ValueError(f"bad bound direction {self.direction!r}")

    def to_dict(self):
        """JSON-safe form; diagnostics entries that are not plain scalars or
        strings (solver objects, matrices) are dropped."""
        diag = {}
        for k, v in self.diagnostics.items():
            if isinstance(v, (bool, str)):
                diag[k] = v
            elif isinstance(v, (int, np.integer)):
                diag[k] = int(v)
            elif isinstance(v, (float, np.floating)):
                diag[k] = float(v)
        return {
            "value": float(self.value),
            "direction": self.direction,
            "method": self.method,
            "residuals": {k: float(v) for k, v in self.residuals.items()},
            "diagnostics": diag,
        }


def _descend(fun, x, max_iters, step_init, tol_objective):
    """Backtracking gradient descent.  fun(x) -> (f, grad).  Returns
    (x, f, iterations, converged); the accepted-objective trace is monotone."""
    f, g = fun(x)
    if not np.isfinite(f):
        raise FloatingPointError("objective not finite at start")
    t = step_init
    it = 0
    for it in range(1, max_iters + 1):
        gnorm2 = float(g @ g)
        if gnorm2 <= 1e-30:
            return x, f, it, True
        moved = False
        for _ in range(40):
            xn = x - t * g
            fn, gn = fun(xn)
            if np.isnan(fn):
                raise FloatingPointError("objective NaN during line search")
            if fn <= f - 1e-4 * t * gnorm2:
                moved = True
                break
            t *= 0.5
        if not moved:
            return x, f, it, True
        df = f - fn
        x, f, g = xn, fn, gn
        t *= 1.3
        if df < tol_objective * max(1.0, abs(f)):
            return x, f, it, True
    return x, f, it, False


def minimize_penalized(objective, constraints, param_dim, cfg: OptimizerConfig,
                       inits=None):
    """Multi-start penalized minimization.

    objective(x) -> (f, grad); constraints is a list of (name, fn) with
    fn(x) -> (value, grad), added as w * value with w ramped over
    cfg.penalty_schedule.  inits seeds the first restarts; the rest start
    from standard-normal points drawn with master_seed + restart_index.
    Returns the best OptimResult (lowest final penalized value, ties broken
    by restart index).
    """
    inits = list(inits) if inits is not None else []
    results = []
    for r in range(cfg.restarts):
        if r < len(inits):
            x = np.asarray(inits[r], dtype=float).copy()
            if x.size != param_dim:
                raise ValueError(f"init {r} has size {x.size}, expected {param_dim}")
        else:
            rng = np.random.default_rng(cfg.master_seed + r)
            x = rng.standard_normal(param_dim)
        try:
            total_iters = 0
            converged = True
            f_pen = np.inf
            for w in cfg.penalty_schedule:
                def fun(z, w=w):
                    f, g = objective(z)
                    for _, c in constraints:
                        cv, cg = c(z)
                        f = f + w * cv
                        g = g + w * cg
                    return f, g
                x, f_pen, it, conv = _descend(
                    fun, x, cfg.max_iters, cfg.step_init, cfg.tol_objective)
                total_iters += it
                converged = converged and conv
        except FloatingPointError:
            continue
        f_obj, _ = objective(x)
        res = {name: c(x)[0] for name, c in constraints}
        results.append((f_pen, r, OptimResult(
            value=float(f_obj), argmin=x, residuals=res,
            converged=converged, iterations_used=total_iters, restart_index=r)))
    if not results:
        raise FloatingPointError("all restarts aborted (NaN objective)")
    results.sort(key=lambda t: (t[0], t[1]))
    return results[0][2]


def finite_diff_check(fun, x, h=1e-5, max_coords=None, seed=0):
    """Max relative error between fun's gradient and central differences.

    Checks every coordinate, or a random subsample of at least 64 for large
    problems when max_coords is given.
    """
    if not 1e-7 <= h <= 1e-3:
        raise ValueError(f"step h={h!r} outside [1e-7, 1e-3]")
    x = np.asarray(x, dtype=float)
    _, g = fun(x)
    coords = np.arange(x.size)
    if max_coords is not None and x.size > max_coords:
        rng = np.random.default_rng(seed)
        coords = rng.choice(x.size, size=min(x.size, max(64, max_coords)),
                            replace=False)
    scale = max(1e-8, float(np.abs(g).max()))
    worst = 0.0
    for i in coords:
        e = np.zeros_like(x)
        e[i] = h
        fp, _ = fun(x + e)
        fm, _ = fun(x - e)
        fd = (fp - fm) / (2 * h)
        worst = max(worst, abs(fd - g[i]) / scale)
    return worst


# ---------------------------------------------------------------------------
# Convex sets for Dykstra projections.


class PsdSet:
    """Positive semidefinite cone; projector clips negative eigenvalues."""

    name = "psd"

    def project(self, x):
        lam, v = np.linalg.eigh(x)
        lam = np.clip(lam, 0.0, None)
        return (v * lam) @ v.conj().T

    def residual(self, x):
        lam = np.linalg.eigvalsh(x)
        return float(max(0.0, -lam[0]))


class PptSet:
    """Matrices whose partial transpose over the given factor axes is PSD."""

    name = "ppt"

    def __init__(self, dims, axes):
        self.dims = tuple(dims)
        self.axes = tuple(axes)

    def project(self, x):
        y = partial_transpose_mat(x, self.dims, self.axes)
        lam, v = np.linalg.eigh(y)
        lam = np.clip(lam, 0.0, None)
        y = (v * lam) @ v.conj().T
        return partial_transpose_mat(y, self.dims, self.axes)

    def residual(self, x):
        lam = np.linalg.eigvalsh(partial_transpose_mat(x, self.dims, self.axes))
        return float(max(0.0, -lam[0]))


class TraceOneSet:
    """Affine set {X : Tr X = 1}."""

    name = "trace-one"

    def project(self, x):
        d = x.shape[0]
        return x - ((x.trace() - 1.0) / d) * np.eye(d)

    def residual(self, x):
        return float(abs(x.trace() - 1.0))


class MarginalSet:
    """Affine set {X : Tr_{others} X = target on the kept factors}."""

    def __init__(self, dims, keep_idx, target, name="marginal"):
        self.dims = tuple(dims)
        self.keep_idx = tuple(keep_idx)
        self.target = np.asarray(target, dtype=complex)
        self.name = name
        self._d_others = int(np.prod(self.dims)) // self.target.shape[0]

    def _deviation(self, x):
        return partial_trace_mat(x, self.dims, self.keep_idx) - self.target

    def project(self, x):
        dev = self._deviation(x)
        return x - expand_mat(dev, self.dims, self.keep_idx) / self._d_others

    def residual(self, x):
        return float(np.linalg.norm(self._deviation(x)))


def dykstra_project(x, sets, tol=1e-10, max_sweeps=2000):
    """Dykstra's alternating projection onto the intersection of convex sets.

    Each set must expose project(X) and residual(X).  Returns a Hermitian
    matrix whose residual against every set is at most tol.  Raises
    RuntimeError with the final residuals on non-convergence.
    """
    x = np.asarray(x, dtype=complex)
    x = (x + x.conj().T) / 2
    corrections = [np.zeros_like(x) for _ in sets]
    for _ in range(max_sweeps):
        for i, s in enumerate(sets):
            y = s.project(x + corrections[i])
            corrections[i] = x + corrections[i] - y
            x = y
        res = {s.name: s.residual(x) for s in sets}
        if max(res.values()) <= tol:
            return (x + x.conj().T) / 2
    raise RuntimeError(f"dykstra_project did not converge; residuals {res}")


def relax_config(cfg: OptimizerConfig, **kw) -> OptimizerConfig:
    """Copy a config with some fields replaced."""
    return replace(cfg, **kw)


# ---------------------------------------------------------------------------
# Factor parameterization of density matrices and entropic objectives.


class DensityParam:
    """Parameterize density matrices as sigma(G) = (G G† + eps I) / Tr(...).

    G is an unconstrained complex dim x rank matrix stored as a flat real
    vector [Re G, Im G].  The eps regularizer keeps sigma full rank so the
    entropy gradient d S(sigma + t Delta)/dt = -Tr[Delta log2 sigma]
    - log2(e) Tr Delta is safe to use.
    """

    def __init__(self, dim, rank=None, eps=1e-9):
        self.dim = int(dim)
        self.rank = int(rank) if rank is not None else self.dim
        self.eps = float(eps)
        self.n_params = 2 * self.dim * self.rank

    def unpack(self, x):
        n = self.dim * self.rank
        g = x[:n] + 1j * x[n:]
        return g.reshape(self.dim, self.rank)

    def pack(self, g):
        return np.concatenate([g.real.ravel(), g.imag.ravel()])

    def sigma(self, x):
        """Return (sigma, cache) where cache is reused by grad_x."""
        g = self.unpack(x)
        h = g @ g.conj().T + self.eps * np.eye(self.dim)
        tau = h.trace().real
        return h / tau, (g, tau)

    def grad_x(self, f_sigma, sigma, cache):
        """Pull a matrix gradient d f = Tr[F d sigma] back to the x vector."""
        g, tau = cache
        f_sigma = (f_sigma + f_sigma.conj().T) / 2
        w = f_sigma / tau - (np.vdot(f_sigma, sigma).real / tau) * np.eye(self.dim)
        wg = 2.0 * (w @ g)
        return np.concatenate([wg.real.ravel(), wg.imag.ravel()])

    def init_from_matrix(self, mat):
        """Pick x so that sigma(x) is (close to) the given density matrix."""
        lam, v = np.linalg.eigh(mat)
        lam = np.clip(lam, 0.0, None)
        g = (v * np.sqrt(lam))[:, -self.rank:] if self.rank < self.dim else v * np.sqrt(lam)
        if g.shape[1] < self.rank:
            g = np.pad(g, ((0, 0), (0, self.rank - g.shape[1])))
        return self.pack(g)


def entropy_combo(sigma, dims, terms):
    """Weighted sum of marginal entropies and its matrix gradient.

    terms: list of (coef, keep_idx) with keep_idx None meaning the full
    state.  Returns (value_bits, F) with d f = Tr[F d sigma].
    """
    d = sigma.shape[0]
    f = 0.0
    fmat = np.zeros((d, d), dtype=complex)
    for coef, keep in terms:
        red = sigma if keep is None else partial_trace_mat(sigma, dims, keep)
        lam = np.linalg.eigvalsh(red)
        lam = np.clip(lam, 1e-14, None)
        f += coef * float(-(lam * np.log2(lam)).sum())
        gred = -(logm2_psd(red) + LOG2E * np.eye(red.shape[0]))
        fmat += coef * (gred if keep is None else expand_mat(gred, dims, keep))
    return f, fmat


def marginal_penalty(sigma, dims, keep_idx, target):
    """Squared Frobenius deviation of a marginal and its matrix gradient."""
    dev = partial_trace_mat(sigma, dims, keep_idx) - target
    val = float(np.linalg.norm(dev) ** 2)
    grad = 2.0 * expand_mat(dev, dims, keep_idx)
    return val, grad
