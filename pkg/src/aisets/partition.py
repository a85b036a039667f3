"""Uniform box partition of a rectangle, point lookup, and test-point plans.

The rectangle is split into ``2**depth`` congruent boxes.  Depth is
distributed alternately over the axes starting with x, so even depths give a
square grid and odd depths one extra halving in x.  Lookup uses the half-open
convention ``[lo, hi)`` per axis with the top/right domain boundary assigned
to the last box; points outside the closed rectangle map to the sentinel
:data:`SINK`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import ConfigError, DomainError

FloatArray = NDArray[np.float64]
IntArray = NDArray[np.int64]

#: Sentinel index returned by :meth:`BoxPartition.locate_many` for points
#: outside the closed domain.
SINK: int = -1


@dataclass(frozen=True)
class BoxPartition:
    """Uniform rectangular grid over ``[xmin, xmax] x [ymin, ymax]``.

    Box ``i`` occupies grid cell ``(ix, iy) = (i % nx, i // nx)``; indices
    run x-fastest from the lower-left corner.
    """

    xmin: float
    xmax: float
    ymin: float
    ymax: float
    depth: int
    nx: int
    ny: int

    @property
    def n_boxes(self) -> int:
        return self.nx * self.ny

    @property
    def dims(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def box_size(self) -> tuple[float, float]:
        return ((self.xmax - self.xmin) / self.nx, (self.ymax - self.ymin) / self.ny)

    @property
    def domain(self) -> tuple[float, float, float, float]:
        return (self.xmin, self.xmax, self.ymin, self.ymax)

    def centers(self) -> FloatArray:
        """(n_boxes, 2) array of box centers, ordered by box index."""
        dx, dy = self.box_size
        ix = np.arange(self.n_boxes) % self.nx
        iy = np.arange(self.n_boxes) // self.nx
        return np.column_stack(
            [self.xmin + (ix + 0.5) * dx, self.ymin + (iy + 0.5) * dy]
        )

    def lower_corners(self) -> FloatArray:
        dx, dy = self.box_size
        ix = np.arange(self.n_boxes) % self.nx
        iy = np.arange(self.n_boxes) // self.nx
        return np.column_stack([self.xmin + ix * dx, self.ymin + iy * dy])

    def locate_many(self, points: FloatArray) -> IntArray:
        """Box index for each row of ``points``; :data:`SINK` for escapers."""
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise DomainError("points must have shape (n, 2)")
        if not np.isfinite(pts).all():
            raise DomainError("non-finite point in locate")
        x, y = pts[:, 0], pts[:, 1]
        inside = (
            (x >= self.xmin) & (x <= self.xmax) & (y >= self.ymin) & (y <= self.ymax)
        )
        # Scale to grid coordinates; clip keeps the closed top/right boundary
        # in the last box.
        fx = (x - self.xmin) / (self.xmax - self.xmin) * self.nx
        fy = (y - self.ymin) / (self.ymax - self.ymin) * self.ny
        ix = np.clip(np.floor(fx).astype(np.int64), 0, self.nx - 1)
        iy = np.clip(np.floor(fy).astype(np.int64), 0, self.ny - 1)
        idx = iy * self.nx + ix
        idx[~inside] = SINK
        return idx

    def reflect_permutation(self, axis: str) -> IntArray:
        """Box permutation induced by mirroring the domain.

        ``axis="x"`` flips the x coordinate (mirror across the vertical
        center line), ``axis="y"`` flips y.  Valid for any partition; only
        meaningful as a symmetry when the dynamics is equivariant.
        """
        ix = np.arange(self.n_boxes) % self.nx
        iy = np.arange(self.n_boxes) // self.nx
        if axis == "x":
            ix = self.nx - 1 - ix
        elif axis == "y":
            iy = self.ny - 1 - iy
        else:
            raise DomainError("axis must be 'x' or 'y'")
        return iy * self.nx + ix

    def grid_adjacency(self):
        """Sparse symmetric 4-neighborhood adjacency of the box grid."""
        from scipy import sparse

        nx, ny = self.nx, self.ny
        idx = np.arange(self.n_boxes)
        ix, iy = idx % nx, idx // nx
        rows, cols = [], []
        right = ix < nx - 1
        rows.append(idx[right])
        cols.append(idx[right] + 1)
        up = iy < ny - 1
        rows.append(idx[up])
        cols.append(idx[up] + nx)
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        a = sparse.coo_matrix(
            (np.ones(r.size, dtype=np.int8), (r, c)), shape=(self.n_boxes, self.n_boxes)
        )
        a = a + a.T
        return a.tocsr()

    def metadata(self) -> dict:
        """JSON-ready header so eigenvector fields can be re-gridded."""
        return {
            "domain": list(self.domain),
            "depth": self.depth,
            "dims": list(self.dims),
        }


def build_partition(domain: tuple[float, float, float, float], depth: int) -> BoxPartition:
    """Partition ``domain`` into ``2**depth`` congruent boxes.

    Depth splits alternate between the axes starting with x, so
    ``nx = 2**ceil(depth/2)`` and ``ny = 2**floor(depth/2)``.

    Raises
    ------
    ConfigError
        For a degenerate rectangle or depth outside ``[2, 26]``.
    """
    xmin, xmax, ymin, ymax = map(float, domain)
    if not all(map(math.isfinite, (xmin, xmax, ymin, ymax))):
        raise ConfigError("domain bounds must be finite")
    if xmax <= xmin or ymax <= ymin:
        raise ConfigError("degenerate rectangle: need xmax > xmin and ymax > ymin")
    if not 2 <= depth <= 26:
        raise ConfigError(f"depth must be in [2, 26], got {depth}")
    nx = 2 ** ((depth + 1) // 2)
    ny = 2 ** (depth // 2)
    return BoxPartition(xmin, xmax, ymin, ymax, depth, nx, ny)


@dataclass(frozen=True)
class SamplePlan:
    """How to draw test points inside each box.

    ``grid`` lays out the ``ceil(sqrt(per_box))**2`` interior lattice
    (x-fastest) truncated to ``per_box`` points; ``random`` draws uniform
    points from a stream seeded by ``(seed, box_index)`` so each box is
    reproducible in isolation.
    """

    per_box: int
    scheme: str = "grid"
    seed: int = 0

    def __post_init__(self):
        if self.per_box < 1:
            raise ConfigError("per_box must be >= 1")
        if self.scheme not in ("grid", "random"):
            raise ConfigError(f"unknown sampling scheme {self.scheme!r}")

    def unit_offsets(self, box: int) -> FloatArray:
        """Sample positions in box-relative coordinates, strictly inside
        ``(0, 1)^2``."""
        if self.scheme == "grid":
            s = math.isqrt(self.per_box)
            if s * s < self.per_box:
                s += 1
            u = (np.arange(s) + 0.5) / s
            xx, yy = np.meshgrid(u, u, indexing="xy")
            pts = np.column_stack([xx.ravel(), yy.ravel()])
            return pts[: self.per_box]
        rng = np.random.default_rng([self.seed, box])
        return rng.random((self.per_box, 2))


def sample_points(part: BoxPartition, box: int, plan: SamplePlan) -> FloatArray:
    """Test points for one box, in domain coordinates."""
    if not 0 <= box < part.n_boxes:
        raise DomainError(f"box index {box} out of range")
    dx, dy = part.box_size
    lower = part.lower_corners()[box]
    off = plan.unit_offsets(box)
    return lower + off * np.array([dx, dy])
