"""Synthetic block-structured Markov chains and morphing families.

Chains are generated from a symmetric nonnegative weight pattern, so every
generated transition matrix is reversible with respect to the pattern's row
sums by construction.  A fixed random "substrate" of pairwise weights is
drawn once per seed; the block structure is imposed by masking cross-block
entries.  Morphing a chain then means moving block boundaries or scaling a
sub-block's couplings on the *same* substrate, which keeps consecutive
snapshots comparable entry by entry.

Three morph kinds reproduce the canonical bifurcation experiments:

``boundary_shrink``
    The middle block shrinks state by state while its neighbors absorb the
    freed states; the smallest dominant eigenvalue decays and the second one
    climbs toward 1.

``interior_split``
    A sub-block inside the middle block decouples progressively (removed
    coupling mass is moved onto the diagonal so row sums, and hence the
    stationary vector, stay fixed); a new eigenvalue rises from the weak
    part of the spectrum and crosses the dominant cluster.

``combined``
    Interior decoupling inside the last block while the first block shrinks:
    a rising branch meets a falling dominant branch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from numpy.typing import NDArray

from .errors import ConfigError, DomainError, NumericsError
from .markov import StochasticMatrix

FloatArray = NDArray[np.float64]
IntArray = NDArray[np.int64]

#: Half-width of the coupling band inserted between adjacent blocks.
_COUPLE_BAND = 2


@dataclass(frozen=True)
class BlockChainSpec:
    """Reducible block chain: sizes, within-block density, and seed."""

    block_sizes: tuple
    intra_density: float = 0.5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "block_sizes", tuple(int(s) for s in self.block_sizes))
        if len(self.block_sizes) < 1 or any(s < 2 for s in self.block_sizes):
            raise ConfigError("block sizes must all be >= 2")
        if not 0.0 < self.intra_density <= 1.0:
            raise ConfigError("intra_density must lie in (0, 1]")

    @property
    def n(self) -> int:
        return int(sum(self.block_sizes))


def _substrate(n: int, density: float, seed: int) -> FloatArray:
    """Symmetric nonnegative weights shared by all snapshots of one seed.

    Density-thinned random weights plus a full nearest-neighbor backbone and
    positive diagonal, so any contiguous index range is connected and
    aperiodic.
    """
    rng = np.random.default_rng([seed, 0x5AB5])
    w = rng.uniform(0.5, 1.5, size=(n, n))
    keep = rng.random((n, n)) < density
    w *= keep
    w = np.triu(w, 1)
    w = w + w.T
    band = np.arange(n - 1)
    backbone = rng.uniform(0.5, 1.5, size=n - 1)
    w[band, band + 1] = np.maximum(w[band, band + 1], backbone)
    w[band + 1, band] = w[band, band + 1]
    w[np.diag_indices(n)] = rng.uniform(0.5, 1.5, size=n)
    return w


def _labels_from_sizes(sizes) -> IntArray:
    return np.repeat(np.arange(len(sizes)), sizes)


def _mask_blocks(w: FloatArray, labels: IntArray) -> FloatArray:
    return np.where(labels[:, None] == labels[None, :], w, 0.0)


def _row_normalize(pattern: FloatArray) -> StochasticMatrix:
    r = pattern.sum(axis=1)
    if r.min() <= 0:
        raise NumericsError("pattern has an isolated state")
    return StochasticMatrix.from_dense(pattern / r[:, None])


def pattern_stationary(pattern: FloatArray) -> FloatArray:
    """Stationary vector of the row-normalized symmetric pattern."""
    r = pattern.sum(axis=1)
    return r / r.sum()


def build_block_chain(spec: BlockChainSpec) -> StochasticMatrix:
    """Exactly reducible block-diagonal chain; one primitive reversible
    block per entry of ``spec.block_sizes``."""
    w = _substrate(spec.n, spec.intra_density, spec.seed)
    pattern = _mask_blocks(w, _labels_from_sizes(spec.block_sizes))
    return _row_normalize(pattern)


def _couple_pattern(
    pattern: FloatArray, labels: IntArray, epsilon: float, seed: int, band: int
) -> FloatArray:
    """Add symmetric epsilon-scale coupling between index-adjacent blocks."""
    rng = np.random.default_rng([seed, 0xC0], )
    out = pattern.copy()
    scale = pattern.sum(axis=1)
    n_blocks = labels.max() + 1
    for b in range(n_blocks - 1):
        left = np.flatnonzero(labels == b)
        right = np.flatnonzero(labels == b + 1)
        li = left[-band:]
        ri = right[:band]
        for i in li:
            for j in ri:
                v = epsilon * rng.uniform(0.5, 1.5) * min(scale[i], scale[j]) / band
                out[i, j] += v
                out[j, i] += v
    return out


def perturb_chain(p: StochasticMatrix, epsilon: float, seed: int = 0) -> StochasticMatrix:
    """Couple the closed communicating classes of ``p`` with small symmetric
    leakage of relative size ``epsilon``, preserving reversibility.

    The classes are recovered from the sparsity pattern, ordered by their
    smallest state index, and index-adjacent classes get a band of positive
    entries scaled by ``epsilon``.  Raises if the result is still reducible
    after widening the band twice.
    """
    if not 0.0 < epsilon <= 0.1:
        raise ConfigError(f"epsilon must lie in (0, 0.1], got {epsilon}")
    ncomp, comp = csgraph.connected_components(p.data, directed=False)
    if ncomp < 2:
        raise ConfigError("chain is already irreducible; nothing to couple")
    # relabel components in order of first appearance so "adjacent" follows
    # the state indexing
    order = {int(c): rank for rank, c in enumerate(dict.fromkeys(comp.tolist()))}
    labels = np.array([order[int(c)] for c in comp], dtype=np.int64)

    # reversible weight pattern of p w.r.t. a blockwise stationary vector
    pi = _blockwise_stationary(p, labels)
    pattern = (pi[:, None] * p.toarray())
    pattern = (pattern + pattern.T) * 0.5

    band = _COUPLE_BAND
    for _ in range(3):
        coupled = _couple_pattern(pattern, labels, epsilon, seed, band)
        ncomp2, _ = csgraph.connected_components(
            sparse.csr_matrix(coupled), directed=False
        )
        if ncomp2 == 1:
            return _row_normalize(coupled)
        band *= 2
    raise NumericsError("could not make the perturbed chain irreducible")


def _blockwise_stationary(p: StochasticMatrix, labels: IntArray) -> FloatArray:
    """Stationary vector of a reducible reversible chain, blockwise, with
    blocks weighted by their state counts."""
    dense = p.toarray()
    pi = np.zeros(p.n)
    for b in range(labels.max() + 1):
        idx = np.flatnonzero(labels == b)
        block = dense[np.ix_(idx, idx)]
        # reversible block: stationary via symmetrized weights
        vals, vecs = np.linalg.eig(block.T)
        k = int(np.argmax(vals.real))
        v = np.abs(vecs[:, k].real)
        pi[idx] = v / v.sum() * (idx.size / p.n)
    return pi


@dataclass(frozen=True)
class MorphFamily:
    """A parameterized sequence of chains undergoing a structural change."""

    kind: str
    base: BlockChainSpec
    steps: int = 8
    strength: float = 0.01

    def __post_init__(self):
        if self.kind not in ("boundary_shrink", "interior_split", "combined"):
            raise ConfigError(f"unknown morph kind {self.kind!r}")
        if self.steps < 2:
            raise ConfigError("steps must be >= 2")
        if not 0.0 < self.strength <= 0.1:
            raise ConfigError("strength must lie in (0, 0.1]")
        if self.kind in ("boundary_shrink", "interior_split") and len(self.base.block_sizes) < 3:
            raise ConfigError(f"{self.kind} needs at least 3 blocks")
        if self.kind == "combined" and len(self.base.block_sizes) < 2:
            raise ConfigError("combined needs at least 2 blocks")


def _shrink_sizes(sizes: tuple, step: int) -> tuple:
    """Move one state per step from each side of the middle block to its
    neighbor, keeping the middle block size >= 2."""
    sizes = list(sizes)
    mid = len(sizes) // 2
    for _ in range(step):
        if sizes[mid] > 3:
            sizes[mid - 1] += 1
            sizes[mid] -= 2
            sizes[mid + 1] += 1
        elif sizes[mid] > 2:
            sizes[mid - 1] += 1
            sizes[mid] -= 1
    return tuple(sizes)


def _split_factor(step: int, steps: int, strength: float) -> float:
    # cross-coupling scale decays linearly from 1 to the leak strength
    t = step / (steps - 1)
    return 1.0 + t * (strength - 1.0)


def _decouple_interior(
    pattern: FloatArray, members: IntArray, sub: IntArray, factor: float
) -> FloatArray:
    """Scale couplings between ``sub`` and the rest of its block by
    ``factor``; removed mass moves to the diagonal so row sums stay put."""
    out = pattern.copy()
    rest = np.setdiff1d(members, sub)
    removed_sub = out[np.ix_(sub, rest)].sum(axis=1) * (1.0 - factor)
    removed_rest = out[np.ix_(rest, sub)].sum(axis=1) * (1.0 - factor)
    out[np.ix_(sub, rest)] *= factor
    out[np.ix_(rest, sub)] *= factor
    out[sub, sub] += removed_sub
    out[rest, rest] += removed_rest
    return out


def morph_snapshot(family: MorphFamily, step: int) -> StochasticMatrix:
    """Chain at morph position ``step`` (0-based; step 0 is the perturbed
    base chain).

    All snapshots share one substrate and one coupling seed, so spectra of
    consecutive steps differ only through the structural change itself.
    """
    if not 0 <= step < family.steps:
        raise DomainError(f"step must be in [0, {family.steps}), got {step}")
    base = family.base
    w = _substrate(base.n, base.intra_density, base.seed)

    if family.kind == "boundary_shrink":
        sizes = _shrink_sizes(base.block_sizes, step)
        labels = _labels_from_sizes(sizes)
        pattern = _mask_blocks(w, labels)
    elif family.kind == "interior_split":
        labels = _labels_from_sizes(base.block_sizes)
        pattern = _mask_blocks(w, labels)
        mid = len(base.block_sizes) // 2
        members = np.flatnonzero(labels == mid)
        third = max(2, members.size // 3)
        sub = members[members.size // 3 : members.size // 3 + third]
        pattern = _decouple_interior(
            pattern, members, sub, _split_factor(step, family.steps, family.strength)
        )
    else:  # combined
        sizes = list(base.block_sizes)
        moved = min(step, sizes[0] - 2)
        sizes[0] -= moved
        sizes[-1] += moved
        labels = _labels_from_sizes(tuple(sizes))
        pattern = _mask_blocks(w, labels)
        members = np.flatnonzero(labels == len(sizes) - 1)
        # decouple a fixed-identity interior range of the last block; use
        # state ids from the unmorphed labeling so the new set grows stably
        base_members = np.flatnonzero(_labels_from_sizes(base.block_sizes) == len(sizes) - 1)
        third = max(2, base_members.size // 3)
        sub = base_members[base_members.size // 3 : base_members.size // 3 + third]
        pattern = _decouple_interior(
            pattern, members, sub, _split_factor(step, family.steps, family.strength)
        )

    coupled = _couple_pattern(pattern, labels, family.strength, base.seed, _COUPLE_BAND)
    return _row_normalize(coupled)
