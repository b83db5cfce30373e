"""
Command-line front end.

    chiral-bands run <config.json> [--out DIR] [--threads N] [--preset NAME]
    chiral-bands validate <config.json> [--preset NAME]

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 unconverged topology, 5 output directory not writable.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import shutil
import sys
import tempfile
import time
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .bloch import convergence_certificate
from .config import ConfigError, build, load
from .errors import ChiralBandsError, InvalidInput, InvalidParameter, TopologyUnconverged
from .spectra import BandSet, band_structure
from .symmetry import ClassificationSettings, classify_chirality, find_symmetries, symmetry_residual, time_reversal
from .topology import zak_grid, zak_phase

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_TOPOLOGY, EXIT_UNWRITABLE = 0, 2, 3, 4, 5
THREADS_ENV = "CHIRAL_BANDS_THREADS"
BAND_COLUMNS = ("k", "band_index", "re_energy", "im_energy", "spin", "velocity", "helicity")


def _num(x) -> str:
    """17 significant digits; negative zero printed as zero."""
    return f"{float(x) + 0.0:.17g}"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _dump(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def band_csv(bands: BandSet) -> str:
    vel = bands.velocity()
    hel = bands.helicity()
    lines = [",".join(BAND_COLUMNS)]
    for n in range(bands.n_bands):
        for i, k in enumerate(bands.k):
            e = bands.energies[i, n]
            lines.append(",".join([_num(k), str(n + 1), _num(e.real), _num(e.imag),
                                   _num(bands.spin[i, n]), _num(vel[i, n]), str(int(hel[i, n]))]))
    return "\n".join(lines) + "\n"


def spin_csv(bands: BandSet) -> str:
    head = ["k"] + [f"spin_{n + 1}" for n in range(bands.n_bands)]
    lines = [",".join(head)]
    for i, k in enumerate(bands.k):
        lines.append(",".join([_num(k)] + [_num(s) for s in bands.spin[i]]))
    return "\n".join(lines) + "\n"


def plot_file(bands: BandSet) -> str:
    """gnuplot data: one block per band, blocks separated by two blank lines."""
    out = ["# columns: k re_energy im_energy spin"]
    for n in range(bands.n_bands):
        out.append(f"# band {n + 1}")
        for i, k in enumerate(bands.k):
            e = bands.energies[i, n]
            out.append(" ".join([_num(k), _num(e.real), _num(e.imag), _num(bands.spin[i, n])]))
        out.extend(["", ""])
    return "\n".join(out)


def emit_plotdata(bands_by_mode: Dict[str, BandSet], zak_by_mode: Dict[str, List[dict]], directory) -> List[str]:
    """Write one .dat file per panel plus plot_manifest.json; returns the file names."""
    directory = Path(directory)
    files, panels = [], []
    for mode, bands in bands_by_mode.items():
        name = f"bands_{mode}.dat"
        (directory / name).write_text(plot_file(bands), encoding="utf-8", newline="\n")
        files.append(name)
        panels.append({
            "file": name,
            "mode": mode,
            "columns": ["k", "re_energy", "im_energy", "spin"],
            "series": [{"index": n, "band": n + 1} for n in range(bands.n_bands)],
            "color_by": "spin",
            "spin_range": [-1.0, 1.0],
            "zak": zak_by_mode.get(mode, []),
            "gnuplot": f"plot for [i=0:{bands.n_bands - 1}] '{name}' index i using 1:2:4 with lines palette",
        })
    (directory / "plot_manifest.json").write_text(_dump({"panels": panels}), encoding="utf-8", newline="\n")
    files.append("plot_manifest.json")
    return files


def _topology(setup, mode: str, cfg: dict, threads: int):
    top = cfg["topology"]
    grid = zak_grid(setup.lattice, setup.frame, cfg["grids"]["zak_points"], setup.cutoff, mode, threads)
    if top["manifolds"] is None:
        manifolds = grid.isolated_manifolds(top["gap_floor"])
    else:
        manifolds = [grid.manifold([b - 1 for b in m]) for m in top["manifolds"]]
    results = []
    for m in manifolds:
        entry = zak_phase(m, top["quant_tol"]).to_dict()
        if top["biorthogonal"]:
            entry["biorthogonal"] = zak_phase(m, top["quant_tol"], biorthogonal=True).to_dict()
        results.append(entry)
    return results


def run(cfg: dict, out_dir, threads: int = 1, log=None) -> dict:
    """Compute everything for a resolved config and write outputs into out_dir.

    Raises on failure; the caller handles cleanup and exit codes.
    """
    log = log or (lambda msg: None)
    setup = build(cfg)
    out_dir = Path(out_dir)
    outputs = cfg["outputs"]
    timings = {}
    report = {"version": __version__, "config": cfg, "certificates": {}, "zak": {}, "symmetry": {}}
    bands_by_mode, zak_by_mode = {}, {}
    settings = ClassificationSettings(
        tol=cfg["symmetry"]["tol"], spin_floor=cfg["symmetry"]["spin_floor"],
        noise_floor=cfg["symmetry"]["noise_floor"], grid_size=cfg["grids"]["band_points"],
        k_samples=cfg["symmetry"]["k_samples"], cutoff=setup.cutoff, threads=threads)

    for mode in setup.modes:
        t0 = time.perf_counter()
        cert = convergence_certificate(setup.lattice, setup.frame, mode, setup.cutoff)
        report["certificates"][mode] = cert
        bands = band_structure(setup.lattice, setup.frame, cfg["grids"]["band_points"], setup.cutoff,
                               mode, threads)
        bands_by_mode[mode] = bands
        timings[f"bands_{mode}"] = time.perf_counter() - t0
        t0 = time.perf_counter()
        zak = _topology(setup, mode, cfg, threads)
        for entry in zak:
            entry["final"] = bool(cert["certified"])
        zak_by_mode[mode] = zak
        report["zak"][mode] = zak
        timings[f"topology_{mode}"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    ops = find_symmetries(setup.lattice, setup.frame) + [time_reversal(setup.lattice)]
    table = []
    for op in ops:
        row = op.to_dict()
        row["residual"] = {m: symmetry_residual(op, setup.lattice, setup.frame, settings.k_samples,
                                                setup.cutoff, m) for m in ("hermitian", "full")}
        table.append(row)
    spins = {m: float(np.abs(b.spin).max()) for m, b in bands_by_mode.items()}
    verdict = classify_chirality(setup.lattice, setup.frame, settings, max_spin=spins)
    symmetry = {"operators": table, "verdict": verdict.verdict.value, "classification": verdict.to_dict()}
    report["symmetry"] = symmetry
    timings["symmetry"] = time.perf_counter() - t0
    report["max_abs_spin"] = verdict.max_spin
    for mode, zak in zak_by_mode.items():
        bad = [e for e in zak if not e["converged"]]
        if bad:
            raise TopologyUnconverged(
                f"{mode} mode: Zak phase of bands {bad[0]['bands']} changed by "
                f"{bad[0]['convergence_delta']:.3g} between the full and half grid")

    for mode, bands in bands_by_mode.items():
        if outputs["band_csv"]:
            (out_dir / f"bands_{mode}.csv").write_text(band_csv(bands), encoding="utf-8", newline="\n")
        if outputs["spin_csv"]:
            (out_dir / f"spin_{mode}.csv").write_text(spin_csv(bands), encoding="utf-8", newline="\n")
    if outputs["symmetry_json"]:
        (out_dir / "symmetry.json").write_text(_dump(symmetry), encoding="utf-8", newline="\n")
    if outputs["topology_json"]:
        (out_dir / "topology.json").write_text(_dump(report["zak"]), encoding="utf-8", newline="\n")
    if outputs["plotdata"]:
        emit_plotdata(bands_by_mode, zak_by_mode, out_dir)
    (out_dir / "report.json").write_text(_dump(report), encoding="utf-8", newline="\n")
    for name, secs in timings.items():
        log(f"timing {name}: {secs:.2f} s")
    return report


def _threads(value: Optional[int]) -> int:
    if value is None:
        env = os.environ.get(THREADS_ENV)
        if env is None:
            return 1
        try:
            value = int(env)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    if value < 1:
        raise ConfigError("thread count must be at least 1")
    return value


def _prepare_output(path: Path) -> Path:
    """Create the target directory and a private staging directory inside it."""
    path.mkdir(parents=True, exist_ok=True)
    return Path(tempfile.mkdtemp(prefix=".staging-", dir=path))


def _cmd_run(args) -> int:
    err = lambda msg: print(msg, file=sys.stderr)
    try:
        cfg = load(args.config, args.preset)
        if args.out:
            cfg["output_dir"] = args.out
        threads = _threads(args.threads)
    except ConfigError as exc:
        err(f"error: {exc}")
        return EXIT_CONFIG
    target = Path(cfg["output_dir"])
    try:
        staging = _prepare_output(target)
    except OSError as exc:
        err(f"error: output directory {target} is not writable: {exc}")
        return EXIT_UNWRITABLE
    try:
        report = run(cfg, staging, threads, log=err)
        for item in sorted(staging.iterdir()):
            os.replace(item, target / item.name)
    except TopologyUnconverged as exc:
        err(f"error: topology unconverged: {exc}")
        return EXIT_TOPOLOGY
    except (InvalidParameter, InvalidInput) as exc:
        err(f"error: invalid run parameters: {exc}")
        return EXIT_CONFIG
    except ChiralBandsError as exc:
        err(f"error: numerical failure: {exc}")
        return EXIT_NUMERICAL
    except OSError as exc:
        err(f"error: cannot write outputs to {target}: {exc}")
        return EXIT_UNWRITABLE
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    err(f"verdict: {report['symmetry']['verdict']}; outputs in {target}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    try:
        cfg = load(args.config, args.preset)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    sys.stdout.write(_dump(cfg))
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chiral-bands",
                                     description="Bands, spin textures, symmetries and Zak phases "
                                                 "of dipole-coupled V-type emitter chains.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a configuration and write results")
    p_run.add_argument("config", help="JSON run configuration")
    p_run.add_argument("--out", help="output directory (overrides output_dir)")
    p_run.add_argument("--threads", type=int, help=f"worker threads (fallback: ${THREADS_ENV}, then 1)")
    p_run.add_argument("--preset", help="named preset: fig3, fig4, fig5, fig6_qx, fig6_qy")
    p_run.set_defaults(func=_cmd_run)
    p_val = sub.add_parser("validate", help="check a configuration and print it with defaults resolved")
    p_val.add_argument("config")
    p_val.add_argument("--preset")
    p_val.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
