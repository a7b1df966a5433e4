"""Dense least-squares kernels used by the alternating updates.

Three solvers: plain minimum-norm least squares, a row-stacked weighted
variant for coupled objectives, and nonnegative least squares. All operate
on dense float matrices at desk scale; conditioning is handled by rank
truncation rather than pivot tricks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "LsqResult",
    "NnlsResult",
    "lstsq",
    "stacked_lstsq",
    "nnls",
    "RANK_RCOND",
    "KKT_RTOL",
]

# singular values below RANK_RCOND * s_max are treated as zero
RANK_RCOND = 1e-10

# KKT slack for nnls, relative to max column norm of A times ||b||
KKT_RTOL = 1e-8


@dataclass(frozen=True)
class LsqResult:
    solution: np.ndarray
    rank: int
    rank_deficient: bool


@dataclass(frozen=True)
class NnlsResult:
    solution: np.ndarray
    iterations: int
    cap_exceeded: bool


def lstsq(lhs: np.ndarray, rhs: np.ndarray) -> LsqResult:
    """Minimum-norm solution of min ||lhs @ x - rhs||_F.

    Rank-deficient systems are solved by truncating singular values below
    RANK_RCOND relative to the largest, which picks the minimum-norm
    solution instead of failing.
    """
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    if lhs.ndim != 2:
        raise ValueError("lhs must be a matrix.")
    if rhs.shape[0] != lhs.shape[0]:
        raise ValueError(
            f"row mismatch: lhs has {lhs.shape[0]} rows, rhs has {rhs.shape[0]}."
        )
    x, _, rank, _ = np.linalg.lstsq(lhs, rhs, rcond=RANK_RCOND)
    return LsqResult(solution=x, rank=int(rank), rank_deficient=int(rank) < lhs.shape[1])


def stacked_lstsq(lhs1, rhs1, lhs2, rhs2, lam: float) -> LsqResult:
    """Solve min ||lhs1 @ x - rhs1||^2 + lam * ||lhs2 @ x - rhs2||^2.

    Implemented by row-stacking the second block scaled by sqrt(lam). With
    lam = 0 this degenerates to lstsq on the first block alone (handled
    explicitly so the limit is exact, not just up to roundoff).
    """
    if lam < 0:
        raise ValueError(f"lam must be >= 0, got {lam}.")
    lhs1 = np.asarray(lhs1, dtype=float)
    rhs1 = np.asarray(rhs1, dtype=float)
    lhs2 = np.asarray(lhs2, dtype=float)
    rhs2 = np.asarray(rhs2, dtype=float)
    if lhs1.shape[1] != lhs2.shape[1]:
        raise ValueError(
            f"column mismatch: {lhs1.shape[1]} vs {lhs2.shape[1]}."
        )
    if lam == 0:
        return lstsq(lhs1, rhs1)
    root = np.sqrt(lam)
    lhs = np.vstack([lhs1, root * lhs2])
    rhs1m = rhs1 if rhs1.ndim == 2 else rhs1[:, None]
    rhs2m = rhs2 if rhs2.ndim == 2 else rhs2[:, None]
    rhs = np.vstack([rhs1m, root * rhs2m])
    out = lstsq(lhs, rhs)
    sol = out.solution[:, 0] if rhs1.ndim == 1 else out.solution
    return LsqResult(solution=sol, rank=out.rank, rank_deficient=out.rank_deficient)


def nnls(lhs: np.ndarray, rhs: np.ndarray, max_iter: int | None = None) -> NnlsResult:
    """Nonnegative least squares min ||lhs @ x - rhs|| s.t. x >= 0.

    Active-set method. Starting from x = 0 with every coordinate active,
    repeatedly move the coordinate with the largest positive gradient
    component into the free set, re-solve the unconstrained subproblem on
    the free set, and walk back along the segment to the previous iterate
    whenever the subproblem solution leaves the feasible cone.

    Terminates when every active coordinate has gradient component above
    -KKT_RTOL * scale, where scale = max column norm of lhs times ||rhs||.
    If the iteration cap (default 30 * ncols) is hit, the best feasible
    iterate seen so far is returned with cap_exceeded set.
    """
    a = np.asarray(lhs, dtype=float)
    b = np.asarray(rhs, dtype=float).ravel()
    if a.ndim != 2:
        raise ValueError("lhs must be a matrix.")
    p, q = a.shape
    if b.size != p:
        raise ValueError(f"row mismatch: lhs has {p} rows, rhs has {b.size}.")
    if max_iter is None:
        max_iter = 30 * q
    col_norms = np.linalg.norm(a, axis=0)
    scale = float(col_norms.max(initial=0.0) * np.linalg.norm(b))
    tol = KKT_RTOL * scale

    x = np.zeros(q)
    free = np.zeros(q, dtype=bool)
    best_x = x.copy()
    best_res = float(np.linalg.norm(b))
    iters = 0

    while True:
        grad = a.T @ (b - a @ x)
        candidates = np.flatnonzero(~free & (grad > tol))
        if candidates.size == 0:
            return NnlsResult(solution=x, iterations=iters, cap_exceeded=False)
        free[candidates[np.argmax(grad[candidates])]] = True

        while True:
            iters += 1
            if iters > max_iter:
                return NnlsResult(solution=best_x, iterations=iters - 1, cap_exceeded=True)
            z = np.zeros(q)
            z[free] = np.linalg.lstsq(a[:, free], b, rcond=None)[0]
            if np.all(z[free] > 0):
                x = z
                break
            # walk back until the first free coordinate hits zero
            blocking = np.flatnonzero(free & (z <= 0))
            diff = x[blocking] - z[blocking]
            ratios = np.where(diff > 0, x[blocking] / np.where(diff > 0, diff, 1.0), 0.0)
            alpha = float(ratios.min())
            x = x + alpha * (z - x)
            x[blocking[ratios <= alpha]] = 0.0
            x[x < 0] = 0.0
            # coordinates driven to the boundary leave the free set
            free &= x > 0
        res = float(np.linalg.norm(b - a @ x))
        if res < best_res:
            best_res = res
            best_x = x.copy()
