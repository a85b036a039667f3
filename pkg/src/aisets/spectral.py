"""Dominant eigenpairs of reversible chains and sign-structure partitions.

Detailed balance makes ``S = D^{1/2} Q D^{-1/2}`` (``D = diag(pi)``)
symmetric, so the dominant spectrum is computed with a symmetric solver:
dense below :data:`DENSE_EIGH_LIMIT` states, implicitly restarted Lanczos
above.  Eigenvectors come back as pi-orthonormal right vectors ``X_i`` with
left partners ``U_i = pi * X_i``; the sign structure of ``U_j`` partitions
the state space into ``j`` almost-invariant sets.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse.linalg import eigsh
from numpy.typing import NDArray

from .errors import ConvergenceError, DomainError, NumericsError, PartitionError
from .markov import ReversibleChain, StationaryDistribution, invariance_ratio

FloatArray = NDArray[np.float64]
IntArray = NDArray[np.int64]

#: Largest state count solved with a dense symmetric eigendecomposition.
DENSE_EIGH_LIMIT = 4096

#: Default dead zone for sign-structure extraction, as a fraction of the
#: largest eigenvector magnitude.
DEAD_ZONE_DEFAULT = 1e-3

_PERRON_CLUSTER_TOL = 1e-9


@dataclass(frozen=True)
class SpectralSet:
    """Ordered eigenpairs of a reversible chain.

    Attributes
    ----------
    eigenvalues : (m,) descending real eigenvalues.
    right_vectors : (n, m) pi-orthonormal right eigenvectors ``X_i``.
    left_vectors : (n, m) left eigenvectors ``U_i = pi * X_i``.
    residuals : (m,) two-norms of ``Q X_i - lambda_i X_i``.
    pi : stationary weight the vectors are orthonormal against.
    """

    eigenvalues: FloatArray
    right_vectors: FloatArray = field(repr=False)
    left_vectors: FloatArray = field(repr=False)
    residuals: FloatArray = field(repr=False)
    pi: StationaryDistribution = field(repr=False)

    @property
    def m(self) -> int:
        return self.eigenvalues.size

    @property
    def n(self) -> int:
        return self.right_vectors.shape[0]

    def right(self, i: int) -> FloatArray:
        """Right eigenvector by 1-based pair number (1 = stationary pair)."""
        return self.right_vectors[:, i - 1]

    def left(self, i: int) -> FloatArray:
        """Left eigenvector by 1-based pair number."""
        return self.left_vectors[:, i - 1]


def _apply_sign_convention(vecs: FloatArray) -> None:
    # the entry of largest magnitude is made positive, first index on ties
    for col in range(vecs.shape[1]):
        v = vecs[:, col]
        if v[np.argmax(np.abs(v))] < 0:
            v *= -1.0


def _rotate_perron_cluster(vals: FloatArray, vecs: FloatArray, w: FloatArray) -> None:
    """Rotate a (possibly multi-dimensional) unit-eigenvalue cluster so its
    first vector aligns with the known Perron direction ``w``."""
    cluster = np.flatnonzero(vals > 1.0 - _PERRON_CLUSTER_TOL)
    if cluster.size == 0:
        return
    v = vecs[:, cluster]
    c = v.T @ w
    norm = np.linalg.norm(c)
    if norm < 0.5:
        # w is not (numerically) inside the cluster span; leave untouched
        return
    c /= norm
    if cluster.size == 1:
        vecs[:, cluster[0]] = v[:, 0] * np.sign(c[0])
        return
    basis = np.eye(cluster.size)
    basis[:, 0] = c
    qmat, _ = np.linalg.qr(basis)
    # qr may flip the first column; align it with c
    if qmat[:, 0] @ c < 0:
        qmat[:, 0] *= -1.0
    vecs[:, cluster] = v @ qmat


def dominant_spectrum(
    chain: ReversibleChain, m: int, dense_limit: int = DENSE_EIGH_LIMIT
) -> SpectralSet:
    """Largest ``m`` eigenvalues and pi-orthonormal eigenvectors of ``Q``.

    The unit eigenvalue's eigenspace is rotated so the first vector is the
    all-ones right eigenvector (up to normalization) even when the chain is
    reducible and the eigenvalue is degenerate.  Descending order and a
    deterministic sign convention (largest-magnitude entry positive) make
    repeated solves bit-comparable.

    Raises
    ------
    ConvergenceError
        If the iterative eigensolver fails to converge.
    NumericsError
        If eigenvalues fall outside ``[-1 - 1e-8, 1 + 1e-8]`` or residuals
        exceed 1e-8.
    """
    n = chain.n
    if not 1 <= m <= n:
        raise DomainError(f"m must be in [1, {n}], got {m}")
    r = np.asarray(chain.sym_measure.sum(axis=1)).ravel()
    d = 1.0 / np.sqrt(r)
    s = sparse.diags(d) @ chain.sym_measure @ sparse.diags(d)
    s = (s + s.T) * 0.5

    if n <= dense_limit or m >= n - 1:
        vals, vecs = np.linalg.eigh(s.toarray())
        vals, vecs = vals[::-1][:m].copy(), vecs[:, ::-1][:, :m].copy()
    else:
        v0 = np.sqrt(r / r.sum())
        try:
            vals, vecs = eigsh(s.tocsr(), k=m, which="LA", v0=v0)
        except Exception as exc:  # ArpackNoConvergence and friends
            raise ConvergenceError(
                f"iterative eigensolver failed: {exc}", residual=float("nan")
            ) from exc
        order = np.argsort(vals)[::-1]
        vals, vecs = vals[order], vecs[:, order]

    w = np.sqrt(chain.pi.pi)
    _rotate_perron_cluster(vals, vecs, w / np.linalg.norm(w))

    x = vecs / w[:, None]
    _apply_sign_convention(x)
    u = chain.pi.pi[:, None] * x

    qx = chain.q.data @ x
    residuals = np.linalg.norm(qx - x * vals[None, :], axis=0)

    if vals.max() > 1.0 + 1e-8 or vals.min() < -1.0 - 1e-8:
        raise NumericsError(
            f"eigenvalues outside [-1, 1] tolerance: [{vals.min():.12f}, {vals.max():.12f}]"
        )
    if residuals.max() > 1e-8:
        raise NumericsError(f"eigenpair residual {residuals.max():.3e} exceeds 1e-8")
    return SpectralSet(
        eigenvalues=vals,
        right_vectors=x,
        left_vectors=u,
        residuals=residuals,
        pi=chain.pi,
    )


def truncate_states(spectrum: SpectralSet, n_keep: int) -> SpectralSet:
    """Restrict eigenvectors to the first ``n_keep`` states.

    Used to drop an auxiliary sink entry before sign-structure work on an
    open system: the matrix is diagonalized with the sink included, then
    only the box entries of the eigenvectors are interpreted.  The weight
    is renormalized over the kept states; residuals are inherited.
    """
    if not 1 <= n_keep <= spectrum.n:
        raise DomainError(f"n_keep must be in [1, {spectrum.n}]")
    if n_keep == spectrum.n:
        return spectrum
    pi = spectrum.pi.pi[:n_keep]
    total = pi.sum()
    if total <= 0:
        raise DomainError("kept states carry no stationary mass")
    return SpectralSet(
        eigenvalues=spectrum.eigenvalues,
        right_vectors=spectrum.right_vectors[:n_keep],
        left_vectors=spectrum.left_vectors[:n_keep],
        residuals=spectrum.residuals,
        pi=StationaryDistribution(pi / total, tol=spectrum.pi.tol),
    )


@dataclass(frozen=True)
class LabeledPartition:
    """Assignment of states to almost-invariant sets."""

    labels: IntArray
    sets: list
    ratios: list

    @property
    def n_sets(self) -> int:
        return len(self.sets)


def _components_by_sign(signs: IntArray, adjacency: sparse.csr_matrix):
    comps = []
    for s in (1, -1):
        nodes = np.flatnonzero(signs == s)
        if nodes.size == 0:
            continue
        sub = adjacency[nodes][:, nodes]
        ncomp, labels = csgraph.connected_components(sub, directed=False)
        for c in range(ncomp):
            comps.append((nodes[labels == c], s))
    return comps


def _best_contact(nodes: IntArray, labels: IntArray, adjacency: sparse.csr_matrix,
                  n_sets: int) -> int:
    """Labeled set sharing the most adjacency edges with ``nodes``; -1 if none."""
    neigh = adjacency[nodes].indices
    neigh_labels = labels[neigh]
    counts = np.bincount(neigh_labels[neigh_labels >= 0], minlength=n_sets)
    if counts.sum() == 0:
        return -1
    return int(np.argmax(counts))


def sign_partition(
    chain: ReversibleChain,
    spectrum: SpectralSet,
    j: int,
    adjacency: sparse.csr_matrix,
    dead_zone: float = DEAD_ZONE_DEFAULT,
) -> LabeledPartition:
    """Partition the states into ``j`` sets from the sign structure of the
    ``j``-th left eigenvector.

    Entries with magnitude below ``dead_zone * max|U_j|`` are held back as
    undecided.  Decided states split by sign into connected components of the
    adjacency graph; the ``j`` heaviest components (stationary mass) seed the
    sets, remaining components and undecided states are merged into the
    neighboring set with the largest boundary contact.

    Raises
    ------
    PartitionError
        If fewer than ``j`` sign components exist; carries the achievable
        count.
    """
    if j < 2 or j > spectrum.m:
        raise DomainError(f"j must be in [2, m]={spectrum.m}, got {j}")
    if dead_zone < 0:
        raise DomainError("dead_zone must be >= 0")
    u = spectrum.left(j)
    if adjacency.shape[0] != u.size or chain.n < u.size:
        raise DomainError("adjacency/spectrum/chain sizes are inconsistent")
    pi = chain.pi.pi
    thr = dead_zone * np.abs(u).max()
    signs = np.zeros(u.size, dtype=np.int64)
    signs[u > thr] = 1
    signs[u < -thr] = -1

    comps = _components_by_sign(signs, adjacency)
    if len(comps) < j:
        raise PartitionError(
            f"eigenvector {j} yields only {len(comps)} sign components", achievable=len(comps)
        )
    order = sorted(
        range(len(comps)),
        key=lambda c: (-pi[comps[c][0]].sum(), int(comps[c][0].min())),
    )
    labels = np.full(u.size, -1, dtype=np.int64)
    for set_id, c in enumerate(order[:j]):
        labels[comps[c][0]] = set_id

    pending = [comps[c][0] for c in order[j:]]
    undecided = np.flatnonzero(signs == 0)
    while pending or undecided.size:
        progress = False
        still = []
        for nodes in pending:
            target = _best_contact(nodes, labels, adjacency, j)
            if target >= 0:
                labels[nodes] = target
                progress = True
            else:
                still.append(nodes)
        pending = still
        if undecided.size:
            targets = np.array(
                [_best_contact(np.array([s]), labels, adjacency, j) for s in undecided]
            )
            hit = targets >= 0
            if hit.any():
                labels[undecided[hit]] = targets[hit]
                undecided = undecided[~hit]
                progress = True
        if not progress:
            # isolated remainder (disconnected adjacency); fold into set 0
            for nodes in pending:
                labels[nodes] = 0
            if undecided.size:
                labels[undecided] = 0
            break

    sets = [np.flatnonzero(labels == s) for s in range(j)]
    if any(s.size == 0 for s in sets):
        raise PartitionError("merging produced an empty set", achievable=j)
    ratios = [invariance_ratio(s, chain) for s in sets]
    return LabeledPartition(labels=labels, sets=sets, ratios=ratios)


def localization_score(spectrum: SpectralSet, i: int, region) -> float:
    """Fraction of eigenvector ``i``'s stationary mass inside ``region``.

    ``sum_{s in region} pi_s X_i(s)^2`` for the pi-normalized right
    eigenvector; 1 means entirely supported on the region.
    """
    idx = np.asarray(region, dtype=np.int64).ravel()
    if idx.size == 0:
        raise DomainError("region must be nonempty")
    x = spectrum.right(i)
    pi = spectrum.pi.pi
    total = float(np.sum(pi * x * x))
    return float(np.sum(pi[idx] * x[idx] * x[idx]) / total)


@dataclass(frozen=True)
class MatchResult:
    """Greedy eigenvector correspondence between two spectral sets.

    ``assignment[j]`` is the previous-set index matched to next-set pair
    ``j`` (0-based), or -1 when pair ``j`` starts a new branch;
    ``overlaps[j]`` is the pi-weighted absolute overlap of the match.
    """

    assignment: IntArray
    overlaps: FloatArray

    def pairs(self):
        return [
            (int(p), int(j), float(self.overlaps[j]))
            for j, p in enumerate(self.assignment)
            if p >= 0
        ]


def greedy_match(overlap: FloatArray, dlam: FloatArray) -> MatchResult:
    """Greedy maximum-weight assignment of columns to rows of ``overlap``;
    ties broken by the smaller entry of ``dlam``, then by index order."""
    mp, mn = overlap.shape
    assignment = np.full(mn, -1, dtype=np.int64)
    overlaps = np.zeros(mn)
    free_prev = np.ones(mp, dtype=bool)
    free_next = np.ones(mn, dtype=bool)
    for _ in range(min(mp, mn)):
        masked = np.where(np.outer(free_prev, free_next), overlap, -1.0)
        best = masked.max()
        if best < 0:
            break
        cand = np.argwhere(masked >= best - 1e-15)
        if len(cand) > 1:
            keys = [dlam[i, j] for i, j in cand]
            i, j = cand[int(np.argmin(keys))]
        else:
            i, j = cand[0]
        i, j = int(i), int(j)
        assignment[j] = i
        overlaps[j] = overlap[i, j]
        free_prev[i] = False
        free_next[j] = False
    return MatchResult(assignment=assignment, overlaps=overlaps)


def match_eigenpairs(
    prev: SpectralSet, nxt: SpectralSet, pi: StationaryDistribution
) -> MatchResult:
    """Match eigenpairs of ``nxt`` to branches of ``prev`` by eigenvector
    overlap.

    Greedy maximum-weight assignment on ``|<X_i_prev, X_j_next>_pi|``, ties
    broken by the smaller eigenvalue difference.  Near-degenerate clusters
    whose vectors rotate between steps should be symmetry-adapted first (see
    :func:`symmetry_adapt`); single-vector overlaps are meaningless inside
    such clusters.
    """
    if prev.n != nxt.n:
        raise DomainError("spectral sets live on different state spaces")
    weighted_prev = prev.right_vectors * pi.pi[:, None]
    overlap = np.abs(weighted_prev.T @ nxt.right_vectors)
    dlam = np.abs(prev.eigenvalues[:, None] - nxt.eigenvalues[None, :])
    return greedy_match(overlap, dlam)


def _apply_partial_perm(vecs: FloatArray, perm: IntArray) -> FloatArray:
    """Permute rows of ``vecs``; negative targets (states whose mirror is
    not part of the state space) contribute zero."""
    out = np.zeros_like(vecs)
    valid = perm >= 0
    out[valid] = vecs[perm[valid]]
    return out


def reflection_score(spectrum: SpectralSet, i: int, perm: IntArray) -> float:
    """Overlap of eigenvector ``i`` with its image under a state permutation.

    +1 for a vector even under the reflection, -1 for odd, near 0 when the
    vector has no definite parity (e.g. inside an unresolved degenerate
    cluster).  Entries of ``perm`` may be -1 for states without a mirror
    partner (restricted state spaces); they contribute nothing.
    """
    x = spectrum.right(i)
    pi = spectrum.pi.pi
    xr = _apply_partial_perm(x[:, None], perm)[:, 0]
    num = float(np.sum(pi * xr * x))
    den = float(np.sum(pi * x * x))
    return num / den


def symmetry_adapt(
    chain: ReversibleChain,
    spectrum: SpectralSet,
    perms: list[IntArray],
    deg_tol: float = 2e-3,
) -> SpectralSet:
    """Resolve near-degenerate eigenvector clusters against reflection
    symmetries.

    Within every run of eigenvalues closer than ``deg_tol``, the eigenvector
    basis is rotated to diagonalize the reflection overlap operators in
    ``perms`` (applied in order, refining previous splits).  Eigenvalues are
    replaced by Rayleigh quotients of the rotated vectors and the cluster is
    re-sorted descending.  Outside clusters the spectrum is unchanged.
    """
    vals = spectrum.eigenvalues.copy()
    x = spectrum.right_vectors.copy()
    pi = spectrum.pi.pi

    # the exact unit eigenpair is never mixed into a cluster
    clusters = []
    start = 1
    for i in range(2, vals.size + 1):
        if i == vals.size or abs(vals[i] - vals[i - 1]) > deg_tol:
            if i - start > 1:
                clusters.append(np.arange(start, i))
            start = i

    def scores(vecs, perm):
        ref = _apply_partial_perm(vecs, perm)
        num = np.einsum("ij,ij->j", ref * pi[:, None], vecs)
        den = np.einsum("ij,ij->j", vecs * pi[:, None], vecs)
        return num / den

    for cluster in clusters:
        # leave clusters alone when every member already has definite
        # parity under all reflections; rotation is only for unmixing
        definite = all(
            np.all(np.abs(scores(x[:, cluster], perm)) >= 0.9) for perm in perms
        )
        if definite:
            continue
        groups = [cluster]
        for perm in perms:
            refined = []
            for grp in groups:
                if grp.size == 1:
                    refined.append(grp)
                    continue
                v = x[:, grp]
                o = _apply_partial_perm(v, perm).T @ (pi[:, None] * v)
                o = (o + o.T) * 0.5
                evals, w = np.linalg.eigh(o)
                if evals.max() - evals.min() <= 0.5:
                    # same parity throughout; any rotation would be an
                    # arbitrary basis change, so keep the solver's vectors
                    refined.append(grp)
                    continue
                x[:, grp] = v @ w
                # split the group by reflection parity for the next operator
                sub_start = 0
                for k in range(1, evals.size + 1):
                    if k == evals.size or abs(evals[k] - evals[k - 1]) > 0.5:
                        refined.append(grp[sub_start:k])
                        sub_start = k
            groups = refined
        # Rayleigh quotients for the rotated vectors, then restore descending
        # order inside the cluster
        v = x[:, cluster]
        qv = chain.q.data @ v
        ray = np.einsum("ij,ij->j", v * pi[:, None], qv) / np.einsum(
            "ij,ij->j", v * pi[:, None], v
        )
        order = np.argsort(ray)[::-1]
        vals[cluster] = ray[order]
        x[:, cluster] = v[:, order]

    _apply_sign_convention(x)
    u = pi[:, None] * x
    qx = chain.q.data @ x
    residuals = np.linalg.norm(qx - x * vals[None, :], axis=0)
    return replace(
        spectrum,
        eigenvalues=vals,
        right_vectors=x,
        left_vectors=u,
        residuals=residuals,
    )
