"""Sparse Ulam transition matrices of a flow map over a box partition.

Each box emits a set of test points; the row of the transition matrix is the
empirical distribution of their images over the boxes.  Points leaving the
domain are collected by an absorbing sink state appended at index ``N``
(:func:`strip_sink` removes it again for spectral work).  An optional
epsilon-ball diffusion shakes every sample once before and once after the
flow, realizing the explicitly diffused transfer operator by Monte Carlo;
with ``epsilon = 0`` the box discretization itself provides the small
implicit diffusion.

Assembly is deterministic: grid sampling is seedless, random sampling and
diffusion draw from per-box streams keyed by ``(seed, box)``, and chunking
only groups boxes without changing any draw.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from numpy.typing import NDArray

from .dynamics import FlowMap
from .errors import AssemblyError, ConfigError
from .markov import StochasticMatrix
from .partition import BoxPartition, SamplePlan

FloatArray = NDArray[np.float64]
IntArray = NDArray[np.int64]

_CHUNK_POINTS = 500_000


@dataclass(frozen=True)
class UlamConfig:
    """Assembly configuration.

    ``epsilon`` is the diffusion radius in domain length units and must stay
    below the box size; ``sink`` chooses whether escaping mass is kept as an
    absorbing state (``"absorb"``) or stripped and renormalized right away
    (``"discard-after"``).
    """

    flow: FlowMap
    partition: BoxPartition
    plan: SamplePlan
    epsilon: float = 0.0
    sink: str = "absorb"

    def __post_init__(self):
        if self.sink not in ("absorb", "discard-after"):
            raise ConfigError(f"unknown sink policy {self.sink!r}")
        if not (math.isfinite(self.epsilon) and self.epsilon >= 0.0):
            raise ConfigError("epsilon must be finite and >= 0")
        if self.epsilon > 0.0:
            dx, dy = self.partition.box_size
            if self.epsilon >= min(dx, dy):
                raise ConfigError(
                    f"epsilon {self.epsilon} must be smaller than the box size {min(dx, dy)}"
                )


@dataclass(frozen=True)
class UlamBuild:
    """Assembled transition matrix plus bookkeeping.

    ``matrix`` has size ``N + 1`` when any sample escaped (``has_sink``),
    otherwise ``N``.  ``escape_fraction[i]`` is the fraction of box ``i``'s
    samples that left the domain; ``failed_samples[i]`` counts samples whose
    integration blew up (excluded from the row's distribution).
    """

    matrix: StochasticMatrix
    partition: BoxPartition = field(repr=False)
    has_sink: bool
    escape_fraction: FloatArray = field(repr=False)
    failed_samples: IntArray = field(repr=False)
    n_samples_per_box: int

    def report(self) -> dict:
        """JSON-ready assembly summary."""
        esc = self.escape_fraction
        return {
            "n_boxes": self.partition.n_boxes,
            "has_sink": self.has_sink,
            "matrix_size": self.matrix.n,
            "nnz": self.matrix.nnz,
            "samples_per_box": self.n_samples_per_box,
            "total_escape_mass": float(esc.sum()),
            "max_escape_fraction": float(esc.max()) if esc.size else 0.0,
            "escaping_rows": int(np.count_nonzero(esc)),
            "failed_samples": int(self.failed_samples.sum()),
        }


def _disk_draws(rng: np.random.Generator, n: int, radius: float) -> FloatArray:
    """Uniform draws from the closed disk of given radius, by rejection."""
    out = np.empty((n, 2))
    got = 0
    while got < n:
        need = n - got
        cand = rng.uniform(-radius, radius, size=(2 * need + 8, 2))
        keep = cand[(cand * cand).sum(axis=1) <= radius * radius]
        take = min(keep.shape[0], need)
        out[got : got + take] = keep[:take]
        got += take
    return out


def build_ulam(config: UlamConfig) -> UlamBuild:
    """Assemble the row-stochastic Ulam matrix of ``config.flow``.

    Raises
    ------
    AssemblyError
        If every sample of some box fails to integrate; the error names the
        box.
    """
    part = config.partition
    plan = config.plan
    n = part.n_boxes
    per_box = plan.per_box
    dx, dy = part.box_size
    size = np.array([dx, dy])
    lowers = part.lower_corners()

    grid_offsets = plan.unit_offsets(0) if plan.scheme == "grid" else None

    boxes_per_chunk = max(1, _CHUNK_POINTS // per_box)
    counts = sparse.csr_matrix((n, n + 1))
    failed = np.zeros(n, dtype=np.int64)

    for c0 in range(0, n, boxes_per_chunk):
        c1 = min(n, c0 + boxes_per_chunk)
        nb = c1 - c0
        if grid_offsets is not None:
            pts = lowers[c0:c1, None, :] + grid_offsets[None, :, :] * size
            pts = pts.reshape(-1, 2)
        else:
            pts = np.concatenate(
                [
                    lowers[b] + plan.unit_offsets(b) * size
                    for b in range(c0, c1)
                ]
            ).reshape(-1, 2)
        if config.epsilon > 0.0:
            pre = np.concatenate(
                [
                    _disk_draws(np.random.default_rng([plan.seed, b, 0]), per_box, config.epsilon)
                    for b in range(c0, c1)
                ]
            )
            post = np.concatenate(
                [
                    _disk_draws(np.random.default_rng([plan.seed, b, 1]), per_box, config.epsilon)
                    for b in range(c0, c1)
                ]
            )
            pts = pts + pre
        else:
            post = None

        ends, ok = config.flow.map_points_masked(pts)
        if post is not None:
            ends = ends + post

        src = np.repeat(np.arange(c0, c1, dtype=np.int64), per_box)
        if not ok.all():
            bad = np.bincount(src[~ok] - c0, minlength=nb)
            failed[c0:c1] += bad
            src = src[ok]
            ends = ends[ok]
        dst = part.locate_many(ends)
        dst[dst < 0] = n
        counts = counts + sparse.coo_matrix(
            (np.ones(src.size), (src, dst)), shape=(n, n + 1)
        ).tocsr()

    row_totals = np.asarray(counts.sum(axis=1)).ravel()
    dead = np.flatnonzero(row_totals == 0)
    if dead.size:
        raise AssemblyError(
            f"every sample of box {int(dead[0])} failed to integrate", box=int(dead[0])
        )
    escape = np.asarray(counts[:, n].todense()).ravel() / row_totals
    has_sink = bool(escape.any())

    # normalize by per-row sample counts with a true division so that the
    # result is bit-identical to a dense count-and-divide oracle
    p = sparse.csr_matrix(counts, copy=True)
    p.data = p.data / np.repeat(row_totals, np.diff(p.indptr))
    if has_sink:
        # absorbing sink row [0 ... 0 1]
        sink_row = sparse.csr_matrix(
            (np.ones(1), (np.zeros(1, dtype=int), np.array([n]))), shape=(1, n + 1)
        )
        p = sparse.vstack([p, sink_row], format="csr")
    else:
        p = sparse.csr_matrix(p[:, :n])
    p.eliminate_zeros()

    build = UlamBuild(
        matrix=StochasticMatrix.from_sparse(p),
        partition=part,
        has_sink=has_sink,
        escape_fraction=escape,
        failed_samples=failed,
        n_samples_per_box=per_box,
    )
    if config.sink == "discard-after" and has_sink:
        stripped = strip_sink(build.matrix, part)
        build = UlamBuild(
            matrix=stripped.matrix,
            partition=part,
            has_sink=False,
            escape_fraction=escape,
            failed_samples=failed,
            n_samples_per_box=per_box,
        )
    return build


@dataclass(frozen=True)
class StrippedChain:
    """Principal block after sink removal, restricted to surviving states.

    ``alive`` lists the boxes that retained any mass, in ascending order;
    ``matrix`` is the renormalized chain over exactly those states (state
    ``a`` of the stripped chain is box ``alive[a]``).  Boxes whose every
    sample escaped are in ``dead`` and carry no state.  ``renormalized`` is
    True when any row lost mass to the sink and was rescaled back to sum 1;
    ``heavy_rows`` lists boxes that lost more than half their mass (their
    renormalized statistics are unreliable).  ``escape_mass`` is indexed by
    box over the full partition.
    """

    matrix: StochasticMatrix
    renormalized: bool
    escape_mass: FloatArray = field(repr=False)
    heavy_rows: IntArray
    alive: IntArray
    dead: IntArray
    full_size: int

    def embed(self, values: FloatArray, fill: float = 0.0) -> FloatArray:
        """Scatter per-state values back onto the full box index space."""
        values = np.asarray(values)
        out = np.full((self.full_size,) + values.shape[1:], fill, dtype=values.dtype)
        out[self.alive] = values
        return out


def strip_sink(matrix: StochasticMatrix, partition: BoxPartition) -> StrippedChain:
    """Drop the sink state and renormalize remaining rows to sum 1.

    Accepts a matrix of size ``N`` (no sink; returned unchanged) or
    ``N + 1``.  Boxes that sent *all* of their mass to the sink cannot be
    renormalized and are removed from the state space altogether (outer
    orbits of an open system can spend almost all their time outside any
    rectangular window, so such boxes are a structural feature, not an
    error); columns pointing at them are dropped before renormalization.
    """
    n = partition.n_boxes
    if matrix.n == n:
        return StrippedChain(
            matrix=matrix,
            renormalized=False,
            escape_mass=np.zeros(n),
            heavy_rows=np.empty(0, dtype=np.int64),
            alive=np.arange(n, dtype=np.int64),
            dead=np.empty(0, dtype=np.int64),
            full_size=n,
        )
    if matrix.n != n + 1:
        raise ConfigError(
            f"matrix size {matrix.n} matches neither N={n} nor N+1"
        )
    block = sparse.csr_matrix(matrix.data[:n, :n])
    kept = np.asarray(block.sum(axis=1)).ravel()
    escape = 1.0 - kept
    escape[escape < 0] = 0.0
    alive = np.flatnonzero(kept > 0.0).astype(np.int64)
    dead = np.flatnonzero(kept <= 0.0).astype(np.int64)
    # removing dead columns discards further mass; iterate until stable
    while True:
        sub = sparse.csr_matrix(block[alive][:, alive])
        kept_sub = np.asarray(sub.sum(axis=1)).ravel()
        newly_dead = kept_sub <= 0.0
        if not newly_dead.any():
            break
        dead = np.sort(np.concatenate([dead, alive[newly_dead]]))
        alive = alive[~newly_dead]
        if alive.size == 0:
            raise AssemblyError("every box lost all mass to the sink", box=None)
    escape_eff = 1.0 - kept_sub
    escape_eff[escape_eff < 0] = 0.0
    renorm = bool(escape_eff.max() > 1e-15 or dead.size)
    if renorm:
        sub = sparse.csr_matrix(sub, copy=True)
        sub.data = sub.data / np.repeat(kept_sub, np.diff(sub.indptr))
    sub.eliminate_zeros()
    full_escape = np.ones(n)
    full_escape[alive] = escape_eff
    heavy = alive[escape_eff > 0.5].astype(np.int64)
    return StrippedChain(
        matrix=StochasticMatrix.from_sparse(sub),
        renormalized=renorm,
        escape_mass=full_escape,
        heavy_rows=heavy,
        alive=alive,
        dead=dead,
        full_size=n,
    )
