"""Command-line entry point: reproducible batch runs of the pipeline.

Three subcommands map onto the main workflows:

``aisets spectrum``
    One chain at a fixed parameter value: eigenvalues, eigenvector fields,
    sign partition with invariance ratios, matrix export.

``aisets sweep``
    Parameter sweep of a velocity field: branch curves, crossing events,
    early-warning flags.

``aisets toy``
    Morphing block-chain families: branch curves and trend labels.

Every run writes the fully resolved configuration next to its outputs; a
run repeated from that file reproduces the outputs byte for byte (no
timestamps or timings are written).  Flags override values from an optional
JSON config file.  Exit codes: 0 success, 1 configuration error, 2 numerical
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np
from scipy.io import mmwrite

from . import __version__
from .bifurcation import (
    RegionSpec,
    SweepConfig,
    UlamSource,
    classify_signature,
    detect_crossings,
    run_sweep,
    ulam_reversible_chain,
)
from .dynamics import DEFAULT_DOMINANT_COUNT
from .errors import ConfigError, NumericsError, ToolkitError
from .markov import reversibilize, stationary
from .spectral import DEAD_ZONE_DEFAULT, dominant_spectrum, sign_partition
from .toychains import BlockChainSpec, MorphFamily, build_block_chain, morph_snapshot, perturb_chain
from .ulam import strip_sink

_EXAMPLE_BLOCKS = (10, 30, 20)


# ---------------------------------------------------------------------------
# config plumbing


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must contain a JSON object")
    return data


def _resolve(args: argparse.Namespace, file_cfg: dict, defaults: dict) -> dict:
    """Merge precedence: explicit flag > config file > default."""
    out = {}
    for key, default in defaults.items():
        flag_val = getattr(args, key, None)
        if flag_val is not None:
            out[key] = flag_val
        elif key in file_cfg:
            out[key] = file_cfg[key]
        else:
            out[key] = default
    unknown = set(file_cfg) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return out


def _parse_domain(value):
    if value is None:
        return None
    if isinstance(value, (list, tuple)):
        vals = [float(v) for v in value]
    else:
        vals = [float(v) for v in str(value).split(",")]
    if len(vals) != 4:
        raise ConfigError("domain must be xmin,xmax,ymin,ymax")
    return tuple(vals)


# ---------------------------------------------------------------------------
# output writing


class _RunWriter:
    """Collects outputs in memory and writes them atomically at the end;
    on failure, everything already written is removed again."""

    def __init__(self, out_dir: str):
        self.dir = Path(out_dir)
        self._texts: dict[str, str] = {}
        self._matrices: dict[str, object] = {}

    def add_json(self, name: str, payload) -> None:
        self._texts[name] = json.dumps(payload, indent=2, sort_keys=True) + "\n"

    def add_csv(self, name: str, header: list, rows) -> None:
        lines = [",".join(header)]
        for row in rows:
            lines.append(",".join(_csv_cell(v) for v in row))
        self._texts[name] = "\n".join(lines) + "\n"

    def add_matrix(self, name: str, matrix) -> None:
        self._matrices[name] = matrix

    def flush(self) -> list[str]:
        self.dir.mkdir(parents=True, exist_ok=True)
        written = []
        try:
            for name, text in sorted(self._texts.items()):
                path = self.dir / name
                path.write_text(text, encoding="utf-8")
                written.append(str(path))
            for name, matrix in sorted(self._matrices.items()):
                path = self.dir / name
                mmwrite(str(path), matrix)
                written.append(str(path))
        except BaseException:
            for p in written:
                Path(p).unlink(missing_ok=True)
            raise
        return written


def _csv_cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (np.floating,)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


# ---------------------------------------------------------------------------
# shared chain construction


def _toy_chain(system: str, epsilon: float, seed: int, density: float):
    """Chain for toy systems (currently ``toy:example31``)."""
    name = system.split(":", 1)[1]
    if name != "example31":
        raise ConfigError(f"unknown toy system {system!r}")
    spec = BlockChainSpec(_EXAMPLE_BLOCKS, intra_density=density, seed=seed)
    p = build_block_chain(spec)
    if epsilon > 0.0:
        p = perturb_chain(p, epsilon, seed=seed)
    pi = stationary(p)
    return reversibilize(p, pi), p


def _eigvec_rows_field(partition, spectrum, j):
    centers = partition.centers()
    u = spectrum.left(j)
    for b in range(partition.n_boxes):
        yield (b, centers[b, 0], centers[b, 1], u[b])


def _eigvec_rows_chain(spectrum, j):
    u = spectrum.left(j)
    for s in range(u.size):
        yield (s, u[s])


# ---------------------------------------------------------------------------
# subcommands


_SPECTRUM_DEFAULTS = {
    "system": "single_gyre",
    "p": 0.0,
    "depth": 11,
    "samples": 400,
    "t": None,
    "h": 0.01,
    "m": 8,
    "k": None,
    "epsilon": 0.0,
    "seed": 0,
    "scheme": "grid",
    "domain": None,
    "density": 0.5,
    "partition_j": 2,
    "dead_zone": DEAD_ZONE_DEFAULT,
    "dump_vectors": None,
    "out": "run_spectrum",
}


def cmd_spectrum(args: argparse.Namespace) -> int:
    cfg = _resolve(args, _load_config_file(args.config), _SPECTRUM_DEFAULTS)
    cfg["domain"] = _parse_domain(cfg["domain"])
    system = cfg["system"]
    m = int(cfg["m"])
    writer = _RunWriter(cfg["out"])

    if system.startswith("toy:"):
        chain, raw = _toy_chain(system, float(cfg["epsilon"]), int(cfg["seed"]), float(cfg["density"]))
        partition = None
        k = int(cfg["k"]) if cfg["k"] is not None else 3
        assembly_report = None
        matrix_for_export = raw.data
    else:
        source = UlamSource(
            field_id=system,
            depth=int(cfg["depth"]),
            samples=int(cfg["samples"]),
            t_final=float(cfg["t"]) if cfg["t"] is not None else None,
            h=float(cfg["h"]),
            scheme=cfg["scheme"],
            seed=int(cfg["seed"]),
            epsilon=float(cfg["epsilon"]),
            domain=cfg["domain"],
        )
        chain, partition, info = ulam_reversible_chain(source, float(cfg["p"]))
        k = int(cfg["k"]) if cfg["k"] is not None else DEFAULT_DOMINANT_COUNT.get(system, 3)
        assembly_report = info["report"]
        matrix_for_export = chain.q.data

    m = min(m, chain.n)
    spectrum = dominant_spectrum(chain, m)

    j = int(cfg["partition_j"])
    if partition is not None:
        adjacency = partition.grid_adjacency()
    else:
        from scipy import sparse

        n = chain.n
        adjacency = sparse.diags([np.ones(n - 1), np.ones(n - 1)], [1, -1]).tocsr()
    labeled = sign_partition(chain, spectrum, j, adjacency, float(cfg["dead_zone"]))

    writer.add_json(
        "eigenvalues.json",
        {
            "eigenvalues": spectrum.eigenvalues.tolist(),
            "residuals": spectrum.residuals.tolist(),
            "k": k,
            "detailed_balance_residual": chain.detailed_balance_residual(),
        },
    )
    n_dump = int(cfg["dump_vectors"]) if cfg["dump_vectors"] is not None else min(k, m)
    for jj in range(1, min(n_dump, m) + 1):
        if partition is not None:
            writer.add_csv(
                f"eigvec_{jj:02d}.csv",
                ["box", "x_center", "y_center", "value"],
                _eigvec_rows_field(partition, spectrum, jj),
            )
        else:
            writer.add_csv(
                f"eigvec_{jj:02d}.csv", ["state", "value"], _eigvec_rows_chain(spectrum, jj)
            )
    if partition is not None:
        centers = partition.centers()
        writer.add_csv(
            "partition.csv",
            ["box", "x_center", "y_center", "set", "set_invariance_ratio"],
            (
                (b, centers[b, 0], centers[b, 1], int(labeled.labels[b]), labeled.ratios[labeled.labels[b]])
                for b in range(partition.n_boxes)
            ),
        )
    else:
        writer.add_csv(
            "partition.csv",
            ["state", "set", "set_invariance_ratio"],
            (
                (s, int(labeled.labels[s]), labeled.ratios[labeled.labels[s]])
                for s in range(chain.n)
            ),
        )
    writer.add_json(
        "sets.json",
        {
            "j": j,
            "sizes": [int(s.size) for s in labeled.sets],
            "invariance_ratios": [float(r) for r in labeled.ratios],
        },
    )
    writer.add_matrix("matrix.mtx", matrix_for_export)
    if assembly_report is not None:
        writer.add_json("assembly_report.json", assembly_report)
    echo = dict(cfg)
    echo["command"] = "spectrum"
    echo["version"] = __version__
    if partition is not None:
        echo["partition"] = partition.metadata()
    writer.add_json("run_config.json", echo)
    writer.flush()
    return 0


_SWEEP_DEFAULTS = {
    "system": "duffing",
    "p_min": -1.0,
    "p_max": 1.0,
    "p_step": 0.05,
    "depth": 10,
    "samples": 200,
    "t": None,
    "h": 0.01,
    "m": 40,
    "k": None,
    "epsilon": 0.0,
    "seed": 0,
    "scheme": "grid",
    "domain": None,
    "region_center": None,
    "region_side_fraction": 0.4,
    "weak_modes": None,
    "window": 5,
    "dump_fields": False,
    "out": "run_sweep",
}


def _curve_rows(curves):
    for c in curves:
        for t in range(c.p.size):
            yield (
                c.branch_id,
                c.kind,
                c.p[t],
                c.lam[t],
                c.overlap[t],
                c.localization[t],
                c.symmetry[t] if c.symmetry else "",
            )


def _events_payload(curves, window):
    events = detect_crossings(curves)
    report = classify_signature(curves, window=window)
    return {
        "crossings": [
            {
                "p_lo": e.p_lo,
                "p_hi": e.p_hi,
                "p_star": e.p_star,
                "rising": e.rising,
                "falling": e.falling,
            }
            for e in events
        ],
        "flags": report.flags,
    }


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _resolve(args, _load_config_file(args.config), _SWEEP_DEFAULTS)
    cfg["domain"] = _parse_domain(cfg["domain"])
    system = cfg["system"]
    if system.startswith("toy:"):
        raise ConfigError("sweep drives velocity fields; use the 'toy' command for morphs")

    p_min, p_max, p_step = float(cfg["p_min"]), float(cfg["p_max"]), float(cfg["p_step"])
    if p_step <= 0 or p_max <= p_min:
        raise ConfigError("need p_max > p_min and p_step > 0")
    n_pts = int(round((p_max - p_min) / p_step)) + 1
    grid = p_min + p_step * np.arange(n_pts)

    region_center = cfg["region_center"]
    if region_center is not None:
        if isinstance(region_center, str):
            region_center = tuple(float(v) for v in region_center.split(","))
        else:
            region_center = tuple(float(v) for v in region_center)
    region = RegionSpec(
        center=region_center if region_center is not None else (0.0, 0.0),
        side_fraction=float(cfg["region_side_fraction"]),
    )

    source = UlamSource(
        field_id=system,
        depth=int(cfg["depth"]),
        samples=int(cfg["samples"]),
        t_final=float(cfg["t"]),
        h=float(cfg["h"]),
        scheme=cfg["scheme"],
        seed=int(cfg["seed"]),
        epsilon=float(cfg["epsilon"]),
        domain=cfg["domain"],
    )
    sweep_cfg = SweepConfig(
        source=source,
        p_grid=grid,
        m=int(cfg["m"]),
        k=int(cfg["k"]) if cfg["k"] is not None else None,
        region=region,
        weak_modes=cfg["weak_modes"],
        keep_spectra=bool(cfg["dump_fields"]),
    )
    result = run_sweep(sweep_cfg)

    writer = _RunWriter(cfg["out"])
    writer.add_csv(
        "curves.csv",
        ["branch", "kind", "p", "lambda", "overlap", "localization", "symmetry"],
        _curve_rows(result.curves),
    )
    writer.add_json("events.json", _events_payload(result.curves, int(cfg["window"])))
    writer.add_csv(
        "steps.csv",
        [
            "p",
            "dominance_ok",
            "db_residual",
            "stationarity_residual",
            "escape_total",
        ],
        (
            (s.p, int(s.dominance_ok), s.db_residual, s.stationarity_residual, s.escape_total)
            for s in result.steps
        ),
    )
    if cfg["dump_fields"] and result.spectra is not None and result.partition is not None:
        centers = result.partition.centers()
        for t, spec in enumerate(result.spectra):
            rows = []
            for jj in range(1, spec.m + 1):
                u = spec.left(jj)
                rows.extend(
                    (jj, b, centers[b, 0], centers[b, 1], u[b])
                    for b in range(centers.shape[0])
                )
            writer.add_csv(
                f"fields_{t:03d}.csv",
                ["eigenvector", "box", "x_center", "y_center", "value"],
                rows,
            )
    echo = dict(cfg)
    echo["command"] = "sweep"
    echo["version"] = __version__
    echo["p_grid"] = grid.tolist()
    if result.partition is not None:
        echo["partition"] = result.partition.metadata()
    writer.add_json("run_config.json", echo)
    writer.flush()
    return 0


_TOY_DEFAULTS = {
    "kind": "boundary_shrink",
    "steps": 8,
    "sizes": None,
    "density": 0.5,
    "strength": 0.01,
    "seed": 0,
    "m": 8,
    "k": None,
    "window": 3,
    "dump_matrices": False,
    "out": "run_toy",
}


def cmd_toy(args: argparse.Namespace) -> int:
    cfg = _resolve(args, _load_config_file(args.config), _TOY_DEFAULTS)
    kind = cfg["kind"]
    sizes = cfg["sizes"]
    if sizes is None:
        sizes = (30, 30) if kind == "combined" else _EXAMPLE_BLOCKS
    elif isinstance(sizes, str):
        sizes = tuple(int(s) for s in sizes.split(","))
    else:
        sizes = tuple(int(s) for s in sizes)

    family = MorphFamily(
        kind=kind,
        base=BlockChainSpec(sizes, intra_density=float(cfg["density"]), seed=int(cfg["seed"])),
        steps=int(cfg["steps"]),
        strength=float(cfg["strength"]),
    )
    sweep_cfg = SweepConfig(
        source=family,
        m=int(cfg["m"]),
        k=int(cfg["k"]) if cfg["k"] is not None else None,
    )
    result = run_sweep(sweep_cfg)
    report = classify_signature(result.curves, window=int(cfg["window"]))

    writer = _RunWriter(cfg["out"])
    writer.add_csv(
        "curves.csv",
        ["branch", "kind", "p", "lambda", "overlap", "localization", "symmetry"],
        _curve_rows(result.curves),
    )
    writer.add_json("events.json", _events_payload(result.curves, int(cfg["window"])))
    writer.add_json(
        "trends.json",
        {bid: labels for bid, labels in report.trends.items()},
    )
    if cfg["dump_matrices"]:
        for step in range(family.steps):
            writer.add_matrix(f"matrix_{step:03d}.mtx", morph_snapshot(family, step).data)
    echo = dict(cfg)
    echo["sizes"] = list(sizes)
    echo["command"] = "toy"
    echo["version"] = __version__
    writer.add_json("run_config.json", echo)
    writer.flush()
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--config", help="JSON config file; flags take precedence")
    sp.add_argument("--out", help="output directory")
    sp.add_argument("--seed", type=int, help="root seed for all randomness")
    sp.add_argument("--threads", type=int, help="BLAS thread cap (default: all cores)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="aisets",
        description="Transfer-operator spectra and bifurcations of almost-invariant sets",
    )
    ap.add_argument("--version", action="version", version=f"aisets {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("spectrum", help="dominant spectrum at one parameter value")
    sp.add_argument("--system", help="single_gyre | double_gyre | duffing | toy:example31")
    sp.add_argument("--p", type=float, help="bifurcation parameter")
    sp.add_argument("--depth", type=int, help="box partition depth (2^depth boxes)")
    sp.add_argument("--samples", type=int, help="test points per box")
    sp.add_argument("--t", type=float, help="flow time")
    sp.add_argument("--h", type=float, help="RK4 step size")
    sp.add_argument("--m", type=int, help="eigenpairs to compute")
    sp.add_argument("--k", type=int, help="dominant branch count")
    sp.add_argument("--epsilon", type=float, help="diffusion radius / toy coupling")
    sp.add_argument("--scheme", choices=["grid", "random"], help="sampling scheme")
    sp.add_argument("--domain", help="xmin,xmax,ymin,ymax")
    sp.add_argument("--density", type=float, help="toy block density")
    sp.add_argument("--partition-j", dest="partition_j", type=int, help="eigenvector for the sign partition")
    sp.add_argument("--dead-zone", dest="dead_zone", type=float, help="sign dead zone fraction")
    sp.add_argument("--dump-vectors", dest="dump_vectors", type=int, help="eigenvector CSVs to write")
    _add_common(sp)
    sp.set_defaults(func=cmd_spectrum)

    sw = sub.add_parser("sweep", help="parameter sweep with branch tracking")
    sw.add_argument("--system", help="single_gyre | double_gyre | duffing")
    sw.add_argument("--p-min", dest="p_min", type=float)
    sw.add_argument("--p-max", dest="p_max", type=float)
    sw.add_argument("--p-step", dest="p_step", type=float)
    sw.add_argument("--depth", type=int)
    sw.add_argument("--samples", type=int)
    sw.add_argument("--t", type=float)
    sw.add_argument("--h", type=float)
    sw.add_argument("--m", type=int)
    sw.add_argument("--k", type=int)
    sw.add_argument("--epsilon", type=float)
    sw.add_argument("--scheme", choices=["grid", "random"])
    sw.add_argument("--domain", help="xmin,xmax,ymin,ymax")
    sw.add_argument("--region-center", dest="region_center", help="cx,cy of the weak-mode region")
    sw.add_argument(
        "--region-side-fraction",
        dest="region_side_fraction",
        type=float,
        help="region side as a fraction of domain width",
    )
    sw.add_argument("--weak-modes", dest="weak_modes", choices=["symmetry", "threaded"])
    sw.add_argument("--window", type=int, help="trend window (grid points)")
    sw.add_argument("--dump-fields", dest="dump_fields", action="store_const", const=True)
    _add_common(sw)
    sw.set_defaults(func=cmd_sweep)

    tp = sub.add_parser("toy", help="morphing block-chain families")
    tp.add_argument("--kind", choices=["boundary_shrink", "interior_split", "combined"])
    tp.add_argument("--steps", type=int)
    tp.add_argument("--sizes", help="comma-separated block sizes")
    tp.add_argument("--density", type=float)
    tp.add_argument("--strength", type=float, help="inter-block coupling strength")
    tp.add_argument("--m", type=int)
    tp.add_argument("--k", type=int)
    tp.add_argument("--window", type=int)
    tp.add_argument("--dump-matrices", dest="dump_matrices", action="store_const", const=True)
    _add_common(tp)
    tp.set_defaults(func=cmd_toy)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    threads = getattr(args, "threads", None)
    try:
        if threads is not None:
            if threads < 1:
                raise ConfigError("threads must be >= 1")
            try:
                from threadpoolctl import threadpool_limits
            except ImportError:
                return args.func(args)
            with threadpool_limits(limits=threads):
                return args.func(args)
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except NumericsError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except ToolkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
