"""Parameter sweeps: eigenvalue branch tracking, crossing detection, and
spectral signature classification.

A sweep builds one reversible chain per grid value of the external parameter
``p`` (either through the Ulam pipeline for a velocity field or from a toy
morph family), solves for the ``m`` dominant eigenpairs, and threads
eigenvalue branches from step to step by eigenvector overlap.  The ``k``
top branches at the first step are tagged dominant (the unit eigenvalue
separately as trivial); everything else is weak.

For reflection-equivariant flows the two symmetry-odd weak modes are
identified per step from the parity of the eigenvectors under the grid
reflections: the mode odd in x / even in y (branch ``weak_x``) and the one
even in x / odd in y (``weak_y``).  These are the curves whose rise toward 1
and crossings with the dominant branches signal the splitting of an
almost-invariant pattern; a dominant branch falling while a weak branch
rises, before any crossing, is the early warning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .dynamics import DEFAULT_DOMINANT_COUNT, DEFAULT_FLOW_TIME, FlowMap, make_field
from .errors import ConfigError, DomainError, NumericsError
from .markov import (
    ReversibleChain,
    StationaryDistribution,
    StochasticMatrix,
    reversibilize,
    stationary,
)
from .partition import BoxPartition, SamplePlan, build_partition
from .spectral import (
    SpectralSet,
    dominant_spectrum,
    greedy_match,
    reflection_score,
    symmetry_adapt,
)
from .toychains import MorphFamily, morph_snapshot
from .ulam import UlamConfig, build_ulam, strip_sink

FloatArray = NDArray[np.float64]
IntArray = NDArray[np.int64]

#: Stationarity slack accepted when reversibilizing a sampled Ulam chain
#: against the uniform weight of an area-preserving flow.
UNIFORM_PI_SLACK = 0.25

#: Reflection-overlap magnitude above which a mode has definite parity.
_PARITY_THRESHOLD = 0.5


@dataclass(frozen=True)
class RegionSpec:
    """Axis-aligned square region used to score weak-mode localization.

    The side length is ``side_fraction`` times the domain width; the default
    is the square of side 0.4 * width centered at the origin.
    """

    center: tuple = (0.0, 0.0)
    side_fraction: float = 0.4

    def resolve(self, part: BoxPartition) -> IntArray:
        half = 0.5 * self.side_fraction * (part.xmax - part.xmin)
        c = part.centers()
        inside = (np.abs(c[:, 0] - self.center[0]) <= half) & (
            np.abs(c[:, 1] - self.center[1]) <= half
        )
        idx = np.flatnonzero(inside)
        if idx.size == 0:
            raise ConfigError("localization region contains no boxes")
        return idx


@dataclass(frozen=True)
class UlamSource:
    """Velocity-field side of a sweep: one Ulam build per parameter value.

    ``t_final = None`` defers to the per-field default flow time."""

    field_id: str
    depth: int = 10
    samples: int = 200
    t_final: float | None = None
    h: float = 0.01
    scheme: str = "grid"
    seed: int = 0
    epsilon: float = 0.0
    domain: tuple | None = None


@dataclass(frozen=True)
class SweepConfig:
    """Sweep description.

    ``p_grid`` must be strictly monotone.  For a :class:`MorphFamily` source
    the grid defaults to the snapshot indices.  ``k`` (dominant branch
    count, trivial included) and the weak-mode policy default per system:
    reflection-symmetric fields use the symmetry-identified weak curves,
    everything else threads weak branches by overlap only.
    """

    source: object
    p_grid: FloatArray | None = None
    m: int = 40
    k: int | None = None
    region: RegionSpec | None = None
    weak_modes: str | None = None  # "symmetry" | "threaded"
    deg_tol: float = 5e-3
    loc_preference: float = 0.3
    keep_spectra: bool = False

    def __post_init__(self):
        if self.m < 4:
            raise ConfigError("m must be >= 4")
        if isinstance(self.source, MorphFamily):
            grid = (
                np.arange(self.source.steps, dtype=np.float64)
                if self.p_grid is None
                else np.asarray(self.p_grid, dtype=np.float64)
            )
        else:
            if self.p_grid is None:
                raise ConfigError("p_grid is required for field sweeps")
            grid = np.asarray(self.p_grid, dtype=np.float64)
        if grid.size < 2:
            raise ConfigError("p_grid needs at least 2 points")
        d = np.diff(grid)
        if not (np.all(d > 0) or np.all(d < 0)):
            raise ConfigError("p_grid must be strictly monotone")
        object.__setattr__(self, "p_grid", grid)
        if self.weak_modes is not None and self.weak_modes not in ("symmetry", "threaded"):
            raise ConfigError("weak_modes must be 'symmetry' or 'threaded'")


@dataclass(frozen=True)
class EigenCurve:
    """One eigenvalue branch across the sweep (NaN before the branch is
    born or when the per-step identification found no mode)."""

    branch_id: str
    kind: str  # "trivial" | "dominant" | "weak"
    p: FloatArray
    lam: FloatArray
    residual: FloatArray = field(repr=False)
    overlap: FloatArray = field(repr=False)
    localization: FloatArray = field(repr=False)
    symmetry: tuple = ()


@dataclass(frozen=True)
class CrossingEvent:
    """A weak branch overtaking a dominant branch between two grid points."""

    p_lo: float
    p_hi: float
    rising: str
    falling: str
    p_star: float


@dataclass(frozen=True)
class StepSummary:
    """Per-parameter snapshot of the tracked spectrum."""

    p: float
    eigenvalues: FloatArray
    residuals: FloatArray
    branch_ids: tuple
    overlaps: FloatArray
    localization: FloatArray
    symmetry: tuple
    dominant_values: FloatArray
    weak_values: FloatArray
    dominance_ok: bool
    db_residual: float
    stationarity_residual: float
    escape_total: float


@dataclass(frozen=True)
class SweepResult:
    config: SweepConfig
    p_grid: FloatArray
    curves: list
    steps: list
    partition: BoxPartition | None = None
    spectra: list | None = None

    def curve(self, branch_id: str) -> EigenCurve:
        for c in self.curves:
            if c.branch_id == branch_id:
                return c
        raise KeyError(branch_id)


def uniform_weight(n: int, matrix: StochasticMatrix) -> StationaryDistribution:
    """Uniform weight with its stationarity residual against ``matrix``."""
    pi = np.full(n, 1.0 / n)
    residual = float(np.abs(pi @ matrix.data - pi).sum())
    return StationaryDistribution(pi, tol=residual)


def ulam_reversible_chain(source: UlamSource, p: float, sink_mode: str = "keep"):
    """Build and reversibilize the Ulam chain of ``source`` at parameter
    ``p``.

    Incompressibility makes the uniform weight stationary up to sampling
    noise, so the chain is reversibilized against it directly (the adjusted
    weight absorbs the residual); power iteration is pointless here because
    the nearly reducible ring structure mixes too slowly.

    For open systems the absorbing sink is *kept in the matrix* for the
    spectral work (``sink_mode="keep"``) and only dropped from eigenvector
    entries downstream.  Symmetrizing the absorbing chain turns the sink
    into a mixing hub among all leaky boxes, so poorly sampled outer
    remnants are damped instead of masquerading as metastable structure,
    which is what happens if their rows are renormalized
    (``sink_mode="strip"``).

    Returns ``(chain, partition, info)``; ``info["n_boxes"]`` states how
    many leading states are boxes (the rest, at most one, is the sink) and
    ``info["sink_state"]`` is the sink index or None.
    """
    if sink_mode not in ("keep", "strip"):
        raise ConfigError(f"unknown sink_mode {sink_mode!r}")
    vf = make_field(source.field_id, p)
    domain = source.domain if source.domain is not None else vf.domain
    if domain is None:
        raise ConfigError(f"field {source.field_id!r} needs an explicit domain")
    part = build_partition(domain, source.depth)
    t_final = (
        source.t_final
        if source.t_final is not None
        else DEFAULT_FLOW_TIME.get(source.field_id, 1.0)
    )
    flow = FlowMap(vf, t_final, source.h)
    plan = SamplePlan(source.samples, source.scheme, source.seed)
    build = build_ulam(UlamConfig(flow, part, plan, source.epsilon, "absorb"))
    escape_total = float(build.escape_fraction.sum())
    stripped = None
    if build.has_sink:
        if sink_mode == "keep":
            matrix = build.matrix  # N + 1 states, absorbing sink last
            alive = np.arange(part.n_boxes, dtype=np.int64)
            sink_state = part.n_boxes
        else:
            stripped = strip_sink(build.matrix, part)
            matrix = stripped.matrix
            alive = stripped.alive
            sink_state = None
        slack = 2.0
    else:
        matrix = build.matrix
        alive = np.arange(part.n_boxes, dtype=np.int64)
        sink_state = None
        slack = UNIFORM_PI_SLACK
    matrix, alive, sink_state = _drop_minor_components(matrix, alive, sink_state)
    pi0 = uniform_weight(matrix.n, matrix)
    chain = reversibilize(matrix, pi0, stationarity_tol=slack)
    info = {
        "report": build.report(),
        "escape_total": escape_total,
        "alive": alive,
        "sink_state": sink_state,
        "n_boxes": part.n_boxes,
        "stripped": stripped,
    }
    return chain, part, info


def _drop_minor_components(matrix: StochasticMatrix, alive: IntArray, sink_state):
    """Remove tiny isolated communicating classes (stagnant vortex-core
    boxes whose samples never leave), which would otherwise contribute
    spurious unit eigenvalues.  Components holding at least 1% of the
    states are kept, so genuinely decoupled flow cells survive."""
    from scipy.sparse import csgraph

    ncomp, labels = csgraph.connected_components(matrix.data, directed=False)
    if ncomp <= 1:
        return matrix, alive, sink_state
    sizes = np.bincount(labels)
    keep_components = np.flatnonzero(sizes >= max(2, int(0.01 * matrix.n)))
    if keep_components.size == ncomp:
        return matrix, alive, sink_state
    keep = np.isin(labels, keep_components)
    idx = np.flatnonzero(keep)
    sub = sparse_submatrix(matrix.data, idx)
    has_sink = sink_state is not None and keep[sink_state]
    new_alive = alive[idx[idx < alive.size]] if sink_state is not None else alive[idx]
    new_sink = sub.shape[0] - 1 if has_sink else None
    return StochasticMatrix.from_sparse(sub), new_alive, new_sink


def sparse_submatrix(m, idx):
    return m[idx][:, idx]


def _restricted_perm(full_perm: IntArray, alive: IntArray, n_full: int) -> IntArray:
    """Reflection permutation on a restricted or extended state space.

    States listed in ``alive`` mirror through ``full_perm``; -1 marks states
    whose mirror box is absent.  A trailing sink state (if the chain is one
    state longer than ``alive``) maps to itself.
    """
    pos = np.full(n_full, -1, dtype=np.int64)
    pos[alive] = np.arange(alive.size)
    return pos[full_perm[alive]]


def _chain_perm(full_perm: IntArray, alive: IntArray, n_states: int, n_full: int) -> IntArray:
    perm = _restricted_perm(full_perm, alive, n_full)
    if n_states == alive.size + 1:  # sink state is its own mirror
        perm = np.concatenate([perm, [n_states - 1]])
    return perm


def morph_reversible_chain(family: MorphFamily, step: int) -> ReversibleChain:
    """Reversibilized morph snapshot (stationary vector by power iteration)."""
    p = morph_snapshot(family, step)
    pi = stationary(p, tol=1e-12, max_iter=1_000_000)
    return reversibilize(p, pi)


def _classify_parity(sx: float, sy: float) -> str:
    t = _PARITY_THRESHOLD
    if sx <= -t and sy >= t:
        return "odd_x"
    if sy <= -t and sx >= t:
        return "odd_y"
    if sx <= -t and sy <= -t:
        return "odd_xy"
    if sx >= t and sy >= t:
        return "even"
    return "mixed"


def _pick_by_class(classes, eigenvalues, loc, wanted: str, loc_pref: float) -> int:
    """Mode carrying the weak branch of symmetry class ``wanted``.

    Candidates localized in the scoring region (score >= ``loc_pref``) take
    precedence, so that early in a sweep the central mode wins over
    incidental outer structure of the same parity; once the pattern has
    outgrown the region (no localized candidate left) the class maximum is
    tracked instead.
    """
    cand = [i for i, c in enumerate(classes) if c == wanted]
    if not cand:
        return -1
    preferred = [i for i in cand if np.isfinite(loc[i]) and loc[i] >= loc_pref]
    pool = preferred if preferred else cand
    return max(pool, key=lambda i: eigenvalues[i])


def run_sweep(config: SweepConfig) -> SweepResult:
    """Execute the sweep and thread eigenvalue branches across the grid.

    Returns dominant/trivial branches threaded by eigenvector overlap plus
    weak curves (symmetry-identified or threaded, per config), along with
    per-step summaries carrying reversibility diagnostics and the dominance
    check of the tracked cluster.
    """
    grid = config.p_grid
    is_morph = isinstance(config.source, MorphFamily)
    if is_morph:
        sys_id = "morph"
        default_policy = "threaded"
        k = config.k if config.k is not None else len(config.source.base.block_sizes)
    else:
        sys_id = config.source.field_id
        default_policy = "symmetry" if sys_id == "duffing" else "ranked"
        k = (
            config.k
            if config.k is not None
            else DEFAULT_DOMINANT_COUNT.get(sys_id, 3)
        )
    policy = config.weak_modes if config.weak_modes is not None else default_policy
    if k < 2:
        raise ConfigError("k must be >= 2")

    partition = None

    step_summaries = []
    spectra_kept = [] if config.keep_spectra else None

    branch_kinds = {}
    branch_steps: dict[str, dict[int, tuple]] = {}
    weak_picks = {"weak_x": [], "weak_y": []}
    weak_track: dict[str, FloatArray] = {}
    slots_per_step = []
    slot_overlaps_per_step = []
    prev_slots = []

    prev_emb = None  # (n_full, m) embedded right vectors of the previous step
    prev_vals = None
    prev_ids = None
    n_branches = 0

    for t, p in enumerate(grid):
        region_idx = None
        perms = None
        if is_morph:
            chain = morph_reversible_chain(config.source, int(round(p)))
            escape_total = 0.0
            n_embed = chain.n
            embed_idx = np.arange(chain.n, dtype=np.int64)
        else:
            chain, partition, info = ulam_reversible_chain(config.source, float(p))
            escape_total = info["escape_total"]
            alive = info["alive"]
            n_boxes = info["n_boxes"]
            n_embed = n_boxes + 1  # fixed embedding: all boxes plus a sink slot
            embed_idx = alive
            if chain.n == alive.size + 1:
                embed_idx = np.concatenate([alive, [n_boxes]])
            region = config.region if config.region is not None else RegionSpec()
            try:
                region_boxes = region.resolve(partition)
                pos = np.full(n_boxes, -1, dtype=np.int64)
                pos[alive] = np.arange(alive.size)
                region_idx = pos[region_boxes]
                region_idx = region_idx[region_idx >= 0]
                if region_idx.size == 0:
                    region_idx = None
            except ConfigError:
                region_idx = None
            perms = [
                _chain_perm(partition.reflect_permutation("x"), alive, chain.n, n_boxes),
                _chain_perm(partition.reflect_permutation("y"), alive, chain.n, n_boxes),
            ]

        m = min(config.m, chain.n)
        spectrum = dominant_spectrum(chain, m)
        if perms is not None:
            spectrum = symmetry_adapt(chain, spectrum, perms, deg_tol=config.deg_tol)

        if region_idx is not None:
            x = spectrum.right_vectors
            pi = spectrum.pi.pi
            loc = np.sum(
                pi[region_idx, None] * x[region_idx, :] ** 2, axis=0
            ) / np.sum(pi[:, None] * x**2, axis=0)
        else:
            loc = np.full(spectrum.m, np.nan)

        if perms is not None:
            sx = np.array([reflection_score(spectrum, i + 1, perms[0]) for i in range(spectrum.m)])
            sy = np.array([reflection_score(spectrum, i + 1, perms[1]) for i in range(spectrum.m)])
            classes = tuple(_classify_parity(a, b) for a, b in zip(sx, sy))
        else:
            classes = tuple("n/a" for _ in range(spectrum.m))

        # embed eigenvectors on a fixed state space so branches thread
        # across steps with different survivor/sink structure
        emb = np.zeros((n_embed, spectrum.m))
        emb[embed_idx] = spectrum.right_vectors
        emb_pi = np.zeros(n_embed)
        emb_pi[embed_idx] = spectrum.pi.pi

        if prev_emb is None:
            ids = []
            for i in range(spectrum.m):
                bid = f"b{n_branches:03d}"
                n_branches += 1
                if i == 0:
                    kind = "trivial"
                elif i < k:
                    kind = "dominant"
                else:
                    kind = "weak"
                branch_kinds[bid] = kind
                branch_steps[bid] = {}
                ids.append(bid)
            overlaps = np.ones(spectrum.m)
        else:
            overlap = np.abs((prev_emb * emb_pi[:, None]).T @ emb)
            dlam = np.abs(prev_vals[:, None] - spectrum.eigenvalues[None, :])
            match = greedy_match(overlap, dlam)
            ids = []
            overlaps = match.overlaps
            for j in range(spectrum.m):
                src = match.assignment[j]
                if src >= 0:
                    ids.append(prev_ids[src])
                else:
                    bid = f"b{n_branches:03d}"
                    n_branches += 1
                    branch_kinds[bid] = "weak"
                    branch_steps[bid] = {}
                    ids.append(bid)
        for j, bid in enumerate(ids):
            branch_steps[bid][t] = (
                spectrum.eigenvalues[j],
                spectrum.residuals[j],
                overlaps[j],
                loc[j],
                classes[j],
            )

        # symmetry-identified weak modes: class + localization picks the
        # branch at the first step; afterwards its eigenvector is continued
        # by overlap so the identity survives the pattern outgrowing the
        # scoring region and passing other modes of its symmetry class
        step_picks = []
        if policy == "symmetry":
            for name, wanted in (("weak_x", "odd_x"), ("weak_y", "odd_y")):
                if perms is None:
                    weak_picks[name].append(-1)
                    continue
                pick = -1
                prev_vec = weak_track.get(name)
                if prev_vec is not None:
                    ov = np.abs(prev_vec @ (emb * emb_pi[:, None]))
                    pick = int(np.argmax(ov))
                    if ov[pick] < 0.5:
                        pick = -1
                if pick < 0:
                    pick = _pick_by_class(
                        classes, spectrum.eigenvalues, loc, wanted, config.loc_preference
                    )
                if pick >= 0:
                    weak_track[name] = emb[:, pick].copy()
                    step_picks.append(pick)
                weak_picks[name].append(pick)

        # dominant cluster slots: the k largest eigenvalues outside the
        # identified weak modes (the paper's sorted-eigenvalue curves);
        # under the fully threaded policy dominance follows branch tags
        if policy == "threaded":
            dominant_mask = np.array(
                [branch_kinds[b] in ("trivial", "dominant") for b in ids]
            )
            slot_modes = list(np.flatnonzero(dominant_mask))
        else:
            remainder = [i for i in range(spectrum.m) if i not in step_picks]
            slot_modes = remainder[:k]
            dominant_mask = np.zeros(spectrum.m, dtype=bool)
            dominant_mask[slot_modes] = True
        slots_per_step.append(slot_modes)
        if prev_emb is None or not prev_slots:
            slot_overlaps_per_step.append([1.0] * len(slot_modes))
        else:
            so = []
            for r, mode in enumerate(slot_modes):
                if r < len(prev_slots):
                    prev_vec = prev_emb[:, prev_slots[r]]
                    so.append(float(abs(prev_vec @ (emb_pi * emb[:, mode]))))
                else:
                    so.append(np.nan)
            slot_overlaps_per_step.append(so)
        prev_slots = slot_modes

        dom_vals = spectrum.eigenvalues[dominant_mask]
        weak_vals = spectrum.eigenvalues[~dominant_mask]
        dominance_ok = bool(
            weak_vals.size == 0 or dom_vals.min() > weak_vals.max()
        )
        step_summaries.append(
            StepSummary(
                p=float(p),
                eigenvalues=spectrum.eigenvalues.copy(),
                residuals=spectrum.residuals.copy(),
                branch_ids=tuple(ids),
                overlaps=np.asarray(overlaps, dtype=np.float64),
                localization=loc,
                symmetry=classes,
                dominant_values=dom_vals.copy(),
                weak_values=weak_vals.copy(),
                dominance_ok=dominance_ok,
                db_residual=chain.detailed_balance_residual(),
                stationarity_residual=chain.stationarity_residual(),
                escape_total=escape_total,
            )
        )
        if spectra_kept is not None:
            spectra_kept.append(spectrum)
        prev_emb = emb
        prev_vals = spectrum.eigenvalues
        prev_ids = ids

    curves = _assemble_curves(
        grid, branch_kinds, branch_steps, weak_picks, step_summaries, policy, k,
        slots_per_step, slot_overlaps_per_step,
    )
    return SweepResult(
        config=config,
        p_grid=grid,
        curves=curves,
        steps=step_summaries,
        partition=partition,
        spectra=spectra_kept,
    )


def _assemble_curves(
    grid, branch_kinds, branch_steps, weak_picks, steps, policy, k,
    slots_per_step, slot_overlaps_per_step,
):
    n = grid.size
    curves = []

    def curve_from_branch(bid):
        lam = np.full(n, np.nan)
        res = np.full(n, np.nan)
        ov = np.full(n, np.nan)
        loc = np.full(n, np.nan)
        sym = [""] * n
        for t, (lmb, r, o, lc, cls) in branch_steps[bid].items():
            lam[t], res[t], ov[t], loc[t] = lmb, r, o, lc
            sym[t] = cls
        return EigenCurve(
            branch_id=bid,
            kind=branch_kinds[bid],
            p=grid.copy(),
            lam=lam,
            residual=res,
            overlap=ov,
            localization=loc,
            symmetry=tuple(sym),
        )

    def curve_from_picks(name, picks, overlaps=None):
        lam = np.full(n, np.nan)
        res = np.full(n, np.nan)
        ov = np.full(n, np.nan)
        loc = np.full(n, np.nan)
        sym = [""] * n
        for t, pick in enumerate(picks):
            if pick is None or pick < 0:
                continue
            s = steps[t]
            lam[t] = s.eigenvalues[pick]
            res[t] = s.residuals[pick]
            loc[t] = s.localization[pick]
            ov[t] = overlaps[t] if overlaps is not None else s.overlaps[pick]
            sym[t] = s.symmetry[pick]
        return lam, res, ov, loc, sym

    if policy == "threaded":
        for bid, kind in branch_kinds.items():
            curves.append(curve_from_branch(bid))
        return curves

    # dominant cluster as rank slots (sorted values outside the identified
    # weak modes), matching how sorted-spectrum curves are conventionally
    # plotted; identity-continued weak curves can genuinely cross them
    for r in range(k):
        picks = [
            slots[r] if r < len(slots) else None for slots in slots_per_step
        ]
        ovs = [
            so[r] if r < len(so) else np.nan for so in slot_overlaps_per_step
        ]
        lam, res, ov, loc, sym = curve_from_picks(f"rank{r + 1}", picks, ovs)
        curves.append(
            EigenCurve(
                branch_id=f"rank{r + 1}",
                kind="trivial" if r == 0 else "dominant",
                p=grid.copy(),
                lam=lam,
                residual=res,
                overlap=np.asarray(ovs, dtype=np.float64),
                localization=loc,
                symmetry=tuple(sym),
            )
        )

    if policy == "symmetry":
        for name in ("weak_x", "weak_y"):
            lam, res, ov, loc, sym = curve_from_picks(name, weak_picks[name])
            curves.append(
                EigenCurve(
                    branch_id=name,
                    kind="weak",
                    p=grid.copy(),
                    lam=lam,
                    residual=res,
                    overlap=ov,
                    localization=loc,
                    symmetry=tuple(sym),
                )
            )
    else:  # ranked: weak branches threaded by eigenvector overlap
        for bid, kind in branch_kinds.items():
            if kind == "weak":
                curves.append(curve_from_branch(bid))
    return curves


def detect_crossings(curves: list) -> list:
    """Crossing events: a weak branch rising through a dominant branch.

    For every (weak, dominant) curve pair, an event is emitted at each grid
    interval where the difference ``lambda_weak - lambda_dominant`` changes
    sign from negative to positive while the weak branch increases across
    the interval.  ``p_star`` interpolates the difference linearly; events
    come back sorted by ``p_star``.
    """
    if not curves:
        return []
    grid = curves[0].p
    for c in curves[1:]:
        if c.p.shape != grid.shape or not np.allclose(c.p, grid, rtol=0, atol=0):
            raise DomainError("curves do not share a common p-grid")
    events = []
    weak = [c for c in curves if c.kind == "weak"]
    dominant = [c for c in curves if c.kind == "dominant"]
    for w in weak:
        for d in dominant:
            diff = w.lam - d.lam
            for i in range(grid.size - 1):
                a, b = diff[i], diff[i + 1]
                if not (np.isfinite(a) and np.isfinite(b)):
                    continue
                rising = w.lam[i + 1] > w.lam[i]
                if a < 0.0 < b and rising:
                    frac = -a / (b - a)
                    events.append(
                        CrossingEvent(
                            p_lo=float(grid[i]),
                            p_hi=float(grid[i + 1]),
                            rising=w.branch_id,
                            falling=d.branch_id,
                            p_star=float(grid[i] + frac * (grid[i + 1] - grid[i])),
                        )
                    )
    events.sort(key=lambda e: (e.p_star, e.rising, e.falling))
    return events


#: Trend slope threshold, per unit of the sweep parameter.
TREND_THRESHOLD = 1e-3


def _trend_labels(curve: EigenCurve, window: int, theta: float):
    n = curve.p.size
    labels = ["flat"] * n
    for t in range(n):
        if t < window - 1:
            labels[t] = ""
            continue
        ps = curve.p[t - window + 1 : t + 1]
        ls = curve.lam[t - window + 1 : t + 1]
        ok = np.isfinite(ls)
        if ok.sum() < 2:
            labels[t] = ""
            continue
        slope = np.polyfit(ps[ok], ls[ok], 1)[0]
        if slope > theta:
            labels[t] = "increasing"
        elif slope < -theta:
            labels[t] = "decreasing"
        else:
            labels[t] = "flat"
    return labels


@dataclass(frozen=True)
class SignatureReport:
    """Trend labels per branch and the emitted flags.

    Each flag is a dict with ``type`` (``EARLY_WARNING`` or ``SPLIT``),
    ``p``, and the branches involved.
    """

    trends: dict
    flags: list


def classify_signature(
    curves: list, window: int = 5, theta: float = TREND_THRESHOLD
) -> SignatureReport:
    """Label branch trends and flag early warnings and splits.

    A trailing-window least-squares slope labels each branch increasing /
    decreasing / flat at every step (threshold ``theta`` per unit p).
    ``EARLY_WARNING`` fires at steps, before the first crossing, where some
    dominant branch decreases while some weak branch increases; ``SPLIT``
    marks every detected crossing.
    """
    if window < 3:
        raise ConfigError("window must be >= 3")
    trends = {c.branch_id: _trend_labels(c, window, theta) for c in curves}
    events = detect_crossings(curves)
    first_cross = min((e.p_star for e in events), default=math.inf)

    flags = []
    if curves:
        grid = curves[0].p
        dominant = [c for c in curves if c.kind == "dominant"]
        weak = [c for c in curves if c.kind == "weak"]
        for t in range(grid.size):
            if grid[t] >= first_cross:
                break
            falling = [c.branch_id for c in dominant if trends[c.branch_id][t] == "decreasing"]
            risers = [c.branch_id for c in weak if trends[c.branch_id][t] == "increasing"]
            if falling and risers:
                flags.append(
                    {
                        "type": "EARLY_WARNING",
                        "p": float(grid[t]),
                        "falling": falling,
                        "rising": risers,
                    }
                )
    for e in events:
        flags.append(
            {
                "type": "SPLIT",
                "p": e.p_star,
                "rising": e.rising,
                "falling": e.falling,
                "p_lo": e.p_lo,
                "p_hi": e.p_hi,
            }
        )
    flags.sort(key=lambda f: (f["p"], f["type"]))
    return SignatureReport(trends=trends, flags=flags)


def check_dominance_constraint(step: StepSummary) -> bool:
    """True iff every dominant eigenvalue strictly exceeds every weak one at
    this step (the validity condition of the dominant-cluster expansion)."""
    return step.dominance_ok


def spectrum_dominance(spectrum: SpectralSet, k: int) -> bool:
    """Dominance check for a single spectrum with rank-based tagging."""
    if not 1 <= k < spectrum.m:
        raise DomainError("need 1 <= k < m to compare dominant and weak parts")
    return bool(spectrum.eigenvalues[k - 1] > spectrum.eigenvalues[k])
