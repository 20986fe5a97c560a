"""Weighted hinge subproblems with sign constraints, solved in the dual.

Every block update in this package minimizes the same canonical
objective over a coefficient vector ``beta``:

    F(beta) = sum_k c_k * max(0, 1 - y_k * (beta . x_k + d_k))
              + ridge * ||beta||^2

subject to ``beta_j >= 0`` on the coordinates flagged nonnegative and
``beta_j`` free elsewhere.  ``d_k`` is a per-sample additive drift (the
contribution of all parameter blocks held fixed) and ``c_k >= 0`` is a
per-sample cost.

The solver runs coordinate ascent on the dual.  With
``s = sum_k alpha_k y_k x_k`` the primal is recovered in closed form,

    beta_j = max(0, s_j) / (2 * ridge)   (nonnegative coordinate)
    beta_j = s_j / (2 * ridge)           (free coordinate)

and the dual objective is

    G(alpha) = sum_k alpha_k (1 - y_k d_k) - ridge * ||beta(alpha)||^2

maximized over ``0 <= alpha_k <= c_k``.  Each visit to coordinate ``k``
takes the step ``g_k / (||x_k||^2 / (2 * ridge))`` clipped to the box,
where ``g_k = 1 - y_k (beta . x_k + d_k)`` is the dual gradient.  The
positive-part kink keeps the curvature below ``||x_k||^2 / (2 ridge)``,
so the step cannot decrease the dual in exact arithmetic; a halving
backtrack guards the floating-point corner cases anyway.

Optimality is measured by :func:`kkt_residual`, the larger of the
projected dual-gradient violation over samples and the primal
recovery violation over coordinates; iteration stops when it drops to
``tol`` or after ``max_iter`` sweeps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit


@dataclass(frozen=True)
class SubproblemSpec:
    """One canonical subproblem instance.

    ``X`` holds one sample per row; ``nonneg[j]`` flags coordinate ``j``
    as sign-constrained.  ``tol`` bounds the KKT residual at exit and
    ``max_iter`` caps the number of full sweeps.
    """

    X: np.ndarray
    y: np.ndarray
    c: np.ndarray
    d: np.ndarray
    ridge: float
    nonneg: np.ndarray
    tol: float = 1e-4
    max_iter: int = 1000

    def __post_init__(self) -> None:
        X = np.ascontiguousarray(np.asarray(self.X, dtype=np.float64))
        if X.ndim != 2:
            raise ValueError(f"X must be 2-D, got shape {X.shape}")
        n, dim = X.shape
        y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        c = np.asarray(self.c, dtype=np.float64).reshape(-1)
        d = np.asarray(self.d, dtype=np.float64).reshape(-1)
        nonneg = np.asarray(self.nonneg, dtype=np.bool_).reshape(-1)
        if y.shape[0] != n or c.shape[0] != n or d.shape[0] != n:
            raise ValueError("y, c, d must have one entry per sample")
        if nonneg.shape[0] != dim:
            raise ValueError("nonneg must have one flag per coordinate")
        if not np.all(np.isfinite(X)):
            raise ValueError("X contains non-finite values")
        if not np.all(np.isfinite(d)):
            raise ValueError("d contains non-finite values")
        if n and not np.all(np.isin(y, (1.0, -1.0))):
            raise ValueError("labels must be +1 or -1")
        if np.any(c < 0) or not np.all(np.isfinite(c)):
            raise ValueError("costs must be finite and nonnegative")
        if not np.isfinite(self.ridge) or self.ridge <= 0:
            raise ValueError(f"ridge must be positive, got {self.ridge!r}")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "nonneg", nonneg)
        object.__setattr__(self, "ridge", float(self.ridge))
        object.__setattr__(self, "tol", float(self.tol))
        object.__setattr__(self, "max_iter", int(self.max_iter))

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class SubproblemSolution:
    """Solver output: primal point, dual point, and exit diagnostics."""

    beta: np.ndarray
    alpha: np.ndarray
    primal_objective: float
    kkt_residual: float
    sweeps: int
    converged: bool


def primal_objective(spec: SubproblemSpec, beta: np.ndarray) -> float:
    """Exact canonical objective at ``beta`` (no feasibility check)."""
    beta = np.asarray(beta, dtype=np.float64).reshape(-1)
    if beta.shape[0] != spec.dim:
        raise ValueError(f"beta has {beta.shape[0]} coordinates, spec has {spec.dim}")
    margins = spec.X @ beta + spec.d
    hinge = np.maximum(0.0, 1.0 - spec.y * margins)
    return float(spec.c @ hinge + spec.ridge * (beta @ beta))


def _recover_beta(s: np.ndarray, ridge: float, nonneg: np.ndarray) -> np.ndarray:
    beta = s / (2.0 * ridge)
    beta[nonneg] = np.maximum(0.0, beta[nonneg])
    return beta


def _kkt(spec: SubproblemSpec, beta: np.ndarray, alpha: np.ndarray) -> float:
    dual_part = 0.0
    if spec.n_samples:
        g = 1.0 - spec.y * (spec.X @ beta + spec.d)
        viol = np.abs(g)
        lower = alpha <= 0.0
        upper = alpha >= spec.c
        both = lower & upper
        viol = np.where(lower & ~both, np.maximum(g, 0.0), viol)
        viol = np.where(upper & ~both, np.maximum(-g, 0.0), viol)
        viol = np.where(both, 0.0, viol)
        dual_part = float(np.max(viol))
    primal_part = 0.0
    if spec.dim:
        s = (alpha * spec.y) @ spec.X if spec.n_samples else np.zeros(spec.dim)
        p = np.where(spec.nonneg, np.maximum(0.0, s), s)
        primal_part = float(np.max(np.abs(2.0 * spec.ridge * beta - p)))
    return max(dual_part, primal_part)


def kkt_residual(spec: SubproblemSpec, solution: SubproblemSolution) -> float:
    """Joint optimality violation of a primal/dual pair; 0 at an exact optimum.

    Dual part: per-sample projected gradient of the dual, clipped by
    whichever bound of ``alpha_k`` is active (samples with zero cost have
    both bounds active and never violate).  Primal part: per-coordinate
    gap between ``beta`` and the closed-form recovery from
    ``s = sum alpha_k y_k x_k`` under the sign flags.
    """
    beta = np.asarray(solution.beta, dtype=np.float64).reshape(-1)
    alpha = np.asarray(solution.alpha, dtype=np.float64).reshape(-1)
    if beta.shape[0] != spec.dim or alpha.shape[0] != spec.n_samples:
        raise ValueError("solution does not match spec dimensions")
    return _kkt(spec, beta, alpha)


@njit(cache=True, nogil=True)
def _cd_pass(X, y, c, d, ridge, nonneg, alpha, s, xnorm2, order):
    """One cyclic pass of dual coordinate ascent; mutates alpha and s."""
    n, dim = X.shape
    inv2lam = 1.0 / (2.0 * ridge)
    for pos in range(order.shape[0]):
        k = order[pos]
        # Margin at the current primal recovery beta = P(s) / (2 ridge).
        dot = 0.0
        for j in range(dim):
            sj = s[j]
            if nonneg[j]:
                if sj > 0.0:
                    dot += X[k, j] * sj
            else:
                dot += X[k, j] * sj
        g = 1.0 - y[k] * (dot * inv2lam + d[k])
        if xnorm2[k] <= 0.0:
            # Zero feature row: the dual is linear in alpha_k, jump to a bound.
            alpha[k] = c[k] if g > 0.0 else 0.0
            continue
        h = xnorm2[k] * inv2lam
        anew = alpha[k] + g / h
        if anew < 0.0:
            anew = 0.0
        elif anew > c[k]:
            anew = c[k]
        delta = anew - alpha[k]
        if delta == 0.0:
            continue
        lin = 1.0 - y[k] * d[k]
        for _ in range(60):
            # Exact dual change of the candidate step.
            dq = 0.0
            for j in range(dim):
                sj = s[j]
                snew = sj + delta * y[k] * X[k, j]
                if nonneg[j]:
                    po = sj if sj > 0.0 else 0.0
                    pn = snew if snew > 0.0 else 0.0
                else:
                    po = sj
                    pn = snew
                dq += pn * pn - po * po
            dgain = delta * lin - 0.5 * inv2lam * dq
            if dgain >= -1e-12 * (1.0 + abs(delta * lin)):
                break
            delta *= 0.5
            if abs(delta) < 1e-300:
                delta = 0.0
                break
        if delta != 0.0:
            alpha[k] += delta
            for j in range(dim):
                s[j] += delta * y[k] * X[k, j]


@njit(cache=True, nogil=True)
def _cd_run(X, y, c, d, ridge, nonneg, alpha, s, xnorm2, order, max_iter, tol):
    """Cyclic passes until the dual-side residual reaches ``tol``.

    Returns (sweeps, residual, converged).  The residual here is the
    projected dual gradient at the recovered primal, the same quantity
    :func:`kkt_residual` reports on the kept samples.
    """
    n, dim = X.shape
    inv2lam = 1.0 / (2.0 * ridge)
    beta = np.empty(dim, dtype=np.float64)
    sweeps = 0
    residual = np.inf
    for _ in range(max_iter):
        _cd_pass(X, y, c, d, ridge, nonneg, alpha, s, xnorm2, order)
        sweeps += 1
        for j in range(dim):
            bj = s[j] * inv2lam
            if nonneg[j] and bj < 0.0:
                bj = 0.0
            beta[j] = bj
        residual = 0.0
        for k in range(n):
            dot = 0.0
            for j in range(dim):
                dot += X[k, j] * beta[j]
            g = 1.0 - y[k] * (dot + d[k])
            if alpha[k] <= 0.0:
                v = g if g > 0.0 else 0.0
            elif alpha[k] >= c[k]:
                v = -g if -g > 0.0 else 0.0
            else:
                v = abs(g)
            if v > residual:
                residual = v
        if residual <= tol:
            return sweeps, residual, True
    return sweeps, residual, False


def solve_subproblem(
    spec: SubproblemSpec,
    shuffle_seed: int | None = None,
    alpha0: np.ndarray | None = None,
) -> SubproblemSolution:
    """Minimize the canonical objective of ``spec``.

    Samples with zero cost are dropped up front (their dual variables are
    pinned at 0).  Visiting order is fixed cyclic by default, which makes
    the solve a deterministic function of the spec; pass ``shuffle_seed``
    to use an independently seeded random order per sweep instead.

    ``alpha0`` warm-starts the dual at a previous solution (clipped into
    the box).  Repeated solves of a slowly drifting spec then resume the
    ascent instead of restarting from zero, which matters when the ridge
    is small and single solves move the dual only a short distance.
    """
    n, dim = spec.n_samples, spec.dim
    keep = np.nonzero(spec.c > 0.0)[0]
    alpha_full = np.zeros(n, dtype=np.float64)
    if alpha0 is not None:
        alpha0 = np.asarray(alpha0, dtype=np.float64).reshape(-1)
        if alpha0.shape[0] != n:
            raise ValueError("alpha0 must have one entry per sample")
        alpha_full[:] = np.clip(alpha0, 0.0, spec.c)

    if dim == 0 or keep.size == 0:
        beta = np.zeros(dim, dtype=np.float64)
        if dim == 0 and keep.size:
            # No coordinates to move: the optimal dual sits at the bounds.
            g = 1.0 - spec.y[keep] * spec.d[keep]
            alpha_full[keep] = np.where(g > 0.0, spec.c[keep], 0.0)
        return SubproblemSolution(
            beta=beta,
            alpha=alpha_full,
            primal_objective=primal_objective(spec, beta),
            kkt_residual=_kkt(spec, beta, alpha_full),
            sweeps=0,
            converged=True,
        )

    X = np.ascontiguousarray(spec.X[keep])
    y = spec.y[keep]
    c = spec.c[keep]
    d = spec.d[keep]
    xnorm2 = np.einsum("ij,ij->i", X, X)
    alpha = alpha_full[keep].copy()
    s = (alpha * y) @ X if alpha.any() else np.zeros(dim, dtype=np.float64)
    base_order = np.arange(keep.size, dtype=np.int64)

    if shuffle_seed is None:
        sweeps, residual, converged = _cd_run(
            X, y, c, d, spec.ridge, spec.nonneg, alpha, s, xnorm2,
            base_order, spec.max_iter, spec.tol,
        )
    else:
        rng = np.random.default_rng(shuffle_seed)
        sweeps = 0
        residual = np.inf
        converged = False
        for _ in range(spec.max_iter):
            order = rng.permutation(keep.size)
            _cd_pass(X, y, c, d, spec.ridge, spec.nonneg, alpha, s, xnorm2, order)
            sweeps += 1
            beta = _recover_beta(s.copy(), spec.ridge, spec.nonneg)
            g = 1.0 - y * (X @ beta + d)
            viol = np.abs(g)
            lower = alpha <= 0.0
            upper = alpha >= c
            viol = np.where(lower, np.maximum(g, 0.0), viol)
            viol = np.where(upper, np.maximum(-g, 0.0), viol)
            residual = float(np.max(viol)) if viol.size else 0.0
            if residual <= spec.tol:
                converged = True
                break

    beta = _recover_beta(s.copy(), spec.ridge, spec.nonneg)
    alpha_full[keep] = alpha
    final_residual = _kkt(spec, beta, alpha_full)
    return SubproblemSolution(
        beta=beta,
        alpha=alpha_full,
        primal_objective=primal_objective(spec, beta),
        kkt_residual=final_residual,
        sweeps=sweeps,
        converged=converged or final_residual <= spec.tol,
    )
