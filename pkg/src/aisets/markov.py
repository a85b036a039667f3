"""Reversible-chain algebra: stationary vectors, reversibilization,
invariance ratios, and the pi-weighted inner product.

The central object is the reversibilized chain ``Q = (L + P) / 2`` where
``L_ij = pi_j P_ji / pi_i`` is the time reversal of ``P`` at stationarity.
``Q`` is assembled from the symmetric measure matrix

    M = (D P + (D P)^T) / 2,      D = diag(pi),

whose symmetry is exact in floating point.  Row-normalizing ``M`` yields a
chain that satisfies detailed balance *exactly* with respect to the adjusted
weight ``pi_i = sum_j M_ij``; when ``pi`` was stationary for ``P`` the
adjustment is the identity and ``Q`` equals the textbook formula.  This keeps
every chain produced here simultaneously row-stochastic, reversible, and
stationary for its own weight, even when the supplied ``pi`` is only
approximately stationary (e.g. the uniform weight on a sampled transition
matrix of an area-preserving flow).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from numpy.typing import NDArray

from .errors import ConvergenceError, DegeneracyError, DomainError

FloatArray = NDArray[np.float64]

ROW_SUM_TOL = 1e-12


@dataclass(frozen=True)
class StochasticMatrix:
    """Sparse row-stochastic matrix (CSR), validated on construction."""

    data: sparse.csr_matrix = field(repr=False)

    def __post_init__(self):
        m = self.data
        if m.shape[0] != m.shape[1]:
            raise DomainError("transition matrix must be square")
        if m.nnz and m.data.min() < 0:
            raise DomainError("transition matrix has negative entries")
        rows = np.asarray(m.sum(axis=1)).ravel()
        err = np.abs(rows - 1.0).max() if rows.size else 0.0
        if err > ROW_SUM_TOL:
            raise DomainError(f"row sums deviate from 1 by {err:.3e}")

    @classmethod
    def from_dense(cls, arr) -> "StochasticMatrix":
        m = sparse.csr_matrix(np.asarray(arr, dtype=np.float64))
        m.eliminate_zeros()
        return cls(m)

    @classmethod
    def from_sparse(cls, m) -> "StochasticMatrix":
        m = sparse.csr_matrix(m, dtype=np.float64)
        m.eliminate_zeros()
        return cls(m)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def nnz(self) -> int:
        return self.data.nnz

    def toarray(self) -> FloatArray:
        return self.data.toarray()


@dataclass(frozen=True)
class StationaryDistribution:
    """Nonnegative probability vector with the residual it achieved."""

    pi: FloatArray
    tol: float

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=np.float64)
        if pi.ndim != 1:
            raise DomainError("pi must be a vector")
        if pi.min() < 0:
            raise DomainError("pi has negative entries")
        if abs(pi.sum() - 1.0) > 1e-12:
            raise DomainError("pi must sum to 1")
        object.__setattr__(self, "pi", pi)

    @property
    def n(self) -> int:
        return self.pi.size


@dataclass(frozen=True)
class ReversibleChain:
    """Row-stochastic ``q`` in detailed balance with ``pi``.

    ``sym_measure`` caches the symmetric matrix ``M = diag(pi) @ q`` used by
    the spectral solver; its row sums equal ``pi``.
    """

    q: StochasticMatrix
    pi: StationaryDistribution
    sym_measure: sparse.csr_matrix = field(repr=False)

    @property
    def n(self) -> int:
        return self.q.n

    def detailed_balance_residual(self) -> float:
        """max over stored entries of |pi_j q_ji - pi_i q_ij| / max(pi_i, pi_j)."""
        m = sparse.diags(self.pi.pi) @ self.q.data
        d = (m - m.T).tocoo()
        if d.nnz == 0:
            return 0.0
        pi = self.pi.pi
        scale = np.maximum(pi[d.row], pi[d.col])
        scale[scale == 0.0] = 1.0
        return float(np.abs(d.data / scale).max())

    def stationarity_residual(self) -> float:
        """1-norm of ``pi q - pi``."""
        pi = self.pi.pi
        return float(np.abs(pi @ self.q.data - pi).sum())


def stationary(
    p: StochasticMatrix, tol: float = 1e-12, max_iter: int = 1_000_000
) -> StationaryDistribution:
    """Stationary distribution by power iteration from the uniform vector.

    Iterates ``pi <- pi P`` until ``||pi P - pi||_1 <= tol``.  On a chain
    with several closed communicating classes the iteration still converges
    (to a class-weighted stationary vector); genuinely periodic or
    ill-conditioned chains surface as :class:`ConvergenceError` carrying the
    final residual.
    """
    n = p.n
    pi = np.full(n, 1.0 / n)
    mat = p.data
    residual = np.inf
    for _ in range(max_iter):
        nxt = pi @ mat
        s = nxt.sum()
        if s <= 0 or not np.isfinite(s):
            raise ConvergenceError("power iteration produced a degenerate vector", residual=float("inf"))
        nxt /= s
        residual = float(np.abs(nxt - pi).sum())
        pi = nxt
        if residual <= tol:
            # residual measured against the pre-update iterate; confirm at
            # the fixed point itself
            final = float(np.abs(pi @ mat - pi).sum())
            if final <= tol:
                return StationaryDistribution(pi, final)
    raise ConvergenceError(
        f"power iteration did not reach {tol} within {max_iter} iterations "
        f"(residual {residual:.3e}); the chain may be reducible or periodic",
        residual=residual,
    )


def reversibilize(
    p: StochasticMatrix,
    pi: StationaryDistribution,
    stationarity_tol: float = 1e-8,
) -> ReversibleChain:
    """Average ``P`` with its time reversal: ``Q = (L + P) / 2``.

    Parameters
    ----------
    p : StochasticMatrix
    pi : StationaryDistribution
        Positive weight, stationary for ``p`` within ``stationarity_tol``
        (1-norm).  Pass a larger tolerance to reversibilize a sampled chain
        against the uniform weight of an area-preserving system; the output
        weight is then adjusted by at most half that residual so that the
        result is exactly reversible and stochastic.

    Raises
    ------
    DegeneracyError
        If ``pi`` has a zero entry.
    DomainError
        If sizes mismatch or ``pi`` misses the stationarity tolerance.
    """
    if pi.n != p.n:
        raise DomainError("pi length does not match matrix size")
    w = pi.pi
    if w.min() <= 0.0:
        raise DegeneracyError("pi has a zero entry; reversal undefined")
    residual = float(np.abs(w @ p.data - w).sum())
    if residual > stationarity_tol:
        raise DomainError(
            f"pi is not stationary for P: ||pi P - pi||_1 = {residual:.3e} "
            f"> {stationarity_tol:.3e}"
        )
    a = sparse.diags(w) @ p.data
    m = (a + a.T) * 0.5
    m = sparse.csr_matrix(m)
    m.eliminate_zeros()
    r = np.asarray(m.sum(axis=1)).ravel()
    if r.min() <= 0.0:
        raise DegeneracyError("a state carries no measure after reversal")
    q = sparse.diags(1.0 / r) @ m
    pi_adj = r / r.sum()
    return ReversibleChain(
        q=StochasticMatrix.from_sparse(q),
        pi=StationaryDistribution(pi_adj, tol=residual),
        sym_measure=m,
    )


def weighted_inner(x: FloatArray, y: FloatArray, pi: StationaryDistribution) -> float:
    """Weighted Euclidean inner product ``sum_i x_i y_i pi_i``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size != pi.n:
        raise DomainError("weighted_inner requires equal-length vectors matching pi")
    return float(np.sum(x * y * pi.pi))


def _as_index_array(a, n: int, name: str) -> NDArray[np.int64]:
    idx = np.asarray(a, dtype=np.int64).ravel()
    if idx.size == 0:
        raise DomainError(f"{name} must be a nonempty index set")
    if idx.min() < 0 or idx.max() >= n:
        raise DomainError(f"{name} contains out-of-range state indices")
    if np.unique(idx).size != idx.size:
        raise DomainError(f"{name} contains duplicate state indices")
    return idx


def invariance_ratio(a, chain: ReversibleChain) -> float:
    """Probability of staying inside state set ``a`` for one step, weighted
    by the stationary measure:

        rho(A) = sum_{i,j in A} pi_i q_ij / sum_{i in A} pi_i
    """
    idx = _as_index_array(a, chain.n, "A")
    pi = chain.pi.pi
    sub = chain.q.data[idx][:, idx]
    num = float(pi[idx] @ np.asarray(sub.sum(axis=1)).ravel())
    den = float(pi[idx].sum())
    if den <= 0.0:
        raise DegeneracyError("state set carries no stationary mass")
    return num / den


def conditional_transition(ai, aj, chain: ReversibleChain) -> float:
    """Conditional probability of mapping into ``aj`` when in ``ai``:

        w(A_j, A_i) = sum_{i in A_i, j in A_j} pi_i q_ij / sum_{i in A_i} pi_i
    """
    src = _as_index_array(ai, chain.n, "A_i")
    dst = np.asarray(aj, dtype=np.int64).ravel()
    if dst.size and (dst.min() < 0 or dst.max() >= chain.n):
        raise DomainError("A_j contains out-of-range state indices")
    pi = chain.pi.pi
    sub = chain.q.data[src][:, dst]
    num = float(pi[src] @ np.asarray(sub.sum(axis=1)).ravel())
    den = float(pi[src].sum())
    if den <= 0.0:
        raise DegeneracyError("source set carries no stationary mass")
    return num / den
