"""Parameter-dependent 2-D vector fields and a fixed-step RK4 flow map.

Three incompressible model systems are built in:

``single_gyre``
    One rotating vortex on the unit square.  Velocities are the rotated
    gradient of the stream function ``sin(pi x) sin(pi y)``; every orbit is
    a closed curve around the vortex center (0.5, 0.5).

``double_gyre``
    Convex combination of a one-gyre and a two-gyre stream function on the
    unit square, ``psi = p sin(2 pi x) sin(pi y) + (1-p) sin(pi x) sin(pi y)``
    with ``p in [0, 1]``.  ``p = 0`` reduces to ``single_gyre``; ``p = 1``
    gives two counter-rotating vortices.

``duffing``
    Conservative oscillator ``x' = y, y' = p x - x^5``.  A pitchfork at
    ``p = 0`` replaces the elliptic fixed point at the origin with a saddle
    plus two elliptic points at ``(+-p^(1/4), 0)``.

All gyre velocities are derived from the stream function (``u = -dpsi/dy``,
``v = dpsi/dx``), which guarantees zero divergence analytically.

Integration is classical fixed-step RK4 only: point sets map deterministically
and bit-reproducibly, and there is no adaptive error control to couple nearby
trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from .errors import ConfigError, DomainError, IntegrationError

FloatArray = NDArray[np.float64]

#: Default integration domains (xmin, xmax, ymin, ymax) for the built-in
#: fields.  The gyre domains are fixed by their stream functions; the
#: Duffing window is chosen wide enough to contain the homoclinic lobes
#: for p in [-1, 1] and can be overridden per run.
DEFAULT_DOMAINS: dict[str, tuple[float, float, float, float]] = {
    "single_gyre": (0.0, 1.0, 0.0, 1.0),
    "double_gyre": (0.0, 1.0, 0.0, 1.0),
    "duffing": (-1.4, 1.4, -1.4, 1.4),
}

#: Default flow time per built-in field.  The gyre value matches the
#: classical set-oriented setup; the Duffing window is shorter so that the
#: stroboscopic map stays clear of angular resonances of the fast outer
#: orbits (which would otherwise masquerade as near-invariant structure).
DEFAULT_FLOW_TIME: dict[str, float] = {
    "single_gyre": 1.0,
    "double_gyre": 1.0,
    "duffing": 0.5,
}

#: Number of eigenvalue branches conventionally treated as dominant for the
#: built-in systems (the trivial branch at 1 included).
DEFAULT_DOMINANT_COUNT: dict[str, int] = {
    "single_gyre": 4,
    "double_gyre": 3,
    "duffing": 3,
}


@dataclass(frozen=True)
class VectorField:
    """A parameter-dependent autonomous planar velocity field.

    Parameters
    ----------
    id : str
        Field identifier, e.g. ``"double_gyre"``.
    p : float
        Bifurcation parameter value baked into this instance.
    func : callable
        Vectorized right-hand side mapping ``(x, y)`` arrays of equal shape
        to a ``(u, v)`` tuple of arrays of the same shape.
    domain : tuple or None
        Suggested integration domain ``(xmin, xmax, ymin, ymax)``.
    """

    id: str
    p: float
    func: Callable[[FloatArray, FloatArray], tuple[FloatArray, FloatArray]] = field(repr=False)
    domain: tuple[float, float, float, float] | None = None

    def __call__(self, points: FloatArray) -> FloatArray:
        """Evaluate the field at an ``(..., 2)`` array of points."""
        pts = np.asarray(points, dtype=np.float64)
        if pts.shape[-1] != 2:
            raise DomainError("points must have trailing dimension 2")
        if not np.isfinite(pts).all():
            raise DomainError("non-finite point passed to vector field")
        u, v = self.func(pts[..., 0], pts[..., 1])
        return np.stack([u, v], axis=-1)


def _single_gyre(x: FloatArray, y: FloatArray) -> tuple[FloatArray, FloatArray]:
    pix, piy = np.pi * x, np.pi * y
    u = -np.pi * np.sin(pix) * np.cos(piy)
    v = np.pi * np.cos(pix) * np.sin(piy)
    return u, v


def _double_gyre(p: float):
    def rhs(x: FloatArray, y: FloatArray) -> tuple[FloatArray, FloatArray]:
        pix, piy = np.pi * x, np.pi * y
        u = -np.pi * np.cos(piy) * (p * np.sin(2.0 * pix) + (1.0 - p) * np.sin(pix))
        v = np.pi * np.sin(piy) * (2.0 * p * np.cos(2.0 * pix) + (1.0 - p) * np.cos(pix))
        return u, v

    return rhs


def _duffing(p: float):
    def rhs(x: FloatArray, y: FloatArray) -> tuple[FloatArray, FloatArray]:
        return y, p * x - x**5

    return rhs


_REGISTRY: dict[str, Callable[[float], VectorField]] = {}


def register_field(field_id: str, builder: Callable[[float], VectorField]) -> None:
    """Register a custom field constructor under ``field_id``.

    ``builder(p)`` must return a :class:`VectorField`.  Re-registration
    overwrites silently so notebooks can iterate.
    """
    _REGISTRY[field_id] = builder


def make_field(field_id: str, p: float = 0.0) -> VectorField:
    """Instantiate a built-in or registered field at parameter value ``p``."""
    if not math.isfinite(p):
        raise ConfigError("parameter p must be finite")
    if field_id == "single_gyre":
        return VectorField("single_gyre", p, _single_gyre, DEFAULT_DOMAINS["single_gyre"])
    if field_id == "double_gyre":
        if not 0.0 <= p <= 1.0:
            raise ConfigError(f"double_gyre requires p in [0, 1], got {p}")
        return VectorField("double_gyre", p, _double_gyre(p), DEFAULT_DOMAINS["double_gyre"])
    if field_id == "duffing":
        return VectorField("duffing", p, _duffing(p), DEFAULT_DOMAINS["duffing"])
    if field_id in _REGISTRY:
        return _REGISTRY[field_id](p)
    raise ConfigError(f"unknown field id {field_id!r}")


def double_gyre_stream(points: FloatArray, p: float) -> FloatArray:
    """Stream function of the double gyre (``p = 0`` gives the single gyre).

    Constant along trajectories; used as an integration-quality oracle.
    """
    pts = np.asarray(points, dtype=np.float64)
    x, y = pts[..., 0], pts[..., 1]
    return p * np.sin(2.0 * np.pi * x) * np.sin(np.pi * y) + (1.0 - p) * np.sin(
        np.pi * x
    ) * np.sin(np.pi * y)


def duffing_hamiltonian(points: FloatArray, p: float) -> FloatArray:
    """Conserved energy ``y^2/2 - p x^2/2 + x^6/6`` of the Duffing field."""
    pts = np.asarray(points, dtype=np.float64)
    x, y = pts[..., 0], pts[..., 1]
    return 0.5 * y * y - 0.5 * p * x * x + x**6 / 6.0


def divergence(vf: VectorField, points: FloatArray, delta: float = 1e-5) -> FloatArray:
    """Numerical divergence du/dx + dv/dy by central differences.

    Diagnostic for the incompressibility of a (possibly user-supplied)
    field; built-in fields stay below 1e-8 everywhere.
    """
    pts = np.asarray(points, dtype=np.float64)
    ex = np.zeros_like(pts)
    ex[..., 0] = delta
    ey = np.zeros_like(pts)
    ey[..., 1] = delta
    dudx = (vf(pts + ex)[..., 0] - vf(pts - ex)[..., 0]) / (2.0 * delta)
    dvdy = (vf(pts + ey)[..., 1] - vf(pts - ey)[..., 1]) / (2.0 * delta)
    return dudx + dvdy


@dataclass(frozen=True)
class FlowMap:
    """Time-``t_final`` flow of a vector field, evaluated by fixed-step RK4.

    ``t_final / h`` must be a whole number of steps.  ``t_final = 0`` is the
    identity map.
    """

    field: VectorField
    t_final: float
    h: float

    def __post_init__(self):
        if not (math.isfinite(self.t_final) and self.t_final >= 0.0):
            raise ConfigError("t_final must be finite and >= 0")
        if self.t_final > 0.0:
            if not (math.isfinite(self.h) and self.h > 0.0):
                raise ConfigError("h must be finite and > 0")
            ratio = self.t_final / self.h
            if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
                raise ConfigError(
                    f"t_final/h = {ratio} is not a whole number of steps"
                )

    @property
    def n_steps(self) -> int:
        return 0 if self.t_final == 0.0 else int(round(self.t_final / self.h))

    def _rhs(self, y: FloatArray) -> FloatArray:
        # unchecked field evaluation; validation happens on entry
        u, v = self.field.func(y[:, 0], y[:, 1])
        return np.stack([u, v], axis=-1)

    def map_points(self, points: FloatArray) -> FloatArray:
        """Map an ``(n, 2)`` array of initial points to time ``t_final``.

        Raises
        ------
        IntegrationError
            If any coordinate becomes non-finite; the exception carries the
            index of the offending RK4 step.
        """
        y = np.array(points, dtype=np.float64, copy=True)
        if y.ndim != 2 or y.shape[1] != 2:
            raise DomainError("points must have shape (n, 2)")
        if not np.isfinite(y).all():
            raise DomainError("non-finite initial point")
        f = self._rhs
        h = self.h
        for step in range(self.n_steps):
            k1 = f(y)
            k2 = f(y + (0.5 * h) * k1)
            k3 = f(y + (0.5 * h) * k2)
            k4 = f(y + h * k3)
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.isfinite(y).all():
                raise IntegrationError(
                    f"non-finite state after RK4 step {step}", step=step
                )
        return y

    def map_points_masked(self, points: FloatArray) -> tuple[FloatArray, NDArray[np.bool_]]:
        """Like :meth:`map_points`, but tolerate blow-ups of individual
        points.

        Non-finite intermediate values propagate as NaN instead of raising;
        the second return value marks the points that stayed finite.  Meant
        for ensemble assembly where one diverging sample should not abort
        the whole run.
        """
        y = np.array(points, dtype=np.float64, copy=True)
        if y.ndim != 2 or y.shape[1] != 2:
            raise DomainError("points must have shape (n, 2)")
        if not np.isfinite(y).all():
            raise DomainError("non-finite initial point")
        f = self._rhs
        h = self.h
        with np.errstate(invalid="ignore", over="ignore"):
            for _ in range(self.n_steps):
                k1 = f(y)
                k2 = f(y + (0.5 * h) * k1)
                k3 = f(y + (0.5 * h) * k2)
                k4 = f(y + h * k3)
                y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        ok = np.isfinite(y).all(axis=1)
        return y, ok


def eval_field(vf: VectorField, point) -> FloatArray:
    """Velocity at a single point, as a length-2 array."""
    pt = np.asarray(point, dtype=np.float64)
    if pt.shape != (2,):
        raise DomainError("point must be a 2-vector")
    return vf(pt[None, :])[0]


def integrate(flow: FlowMap, point) -> FloatArray:
    """Flow a single point for time ``t_final``; returns a 2-vector."""
    pt = np.asarray(point, dtype=np.float64)
    if pt.shape != (2,):
        raise DomainError("point must be a 2-vector")
    return flow.map_points(pt[None, :])[0]
