"""Command-line entry point: ``gapscope run|spectrum|sample|gap|validate|preset``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..evolution import DomainError
from ..hamiltonian import InvalidModelError, build_model, tfim_gap
from ..shadows import SnapshotSet
from ..spectroscopy import EmptySignalError, SpectroscopySettings, write_peaks_json
from ..statevector import CapacityError, eigendecompose
from .config import ConfigError, load_config
from .presets import PRESET_NAMES, preset
from .runner import run_config, sample_circuits, spectrum_from_snapshots

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_CAPACITY = 0, 1, 2, 3


def _load(path: str):
    if path.startswith("preset:"):
        return preset(path.split(":", 1)[1])
    return load_config(path)


def cmd_run(args) -> int:
    cfg = _load(args.config)
    if args.seed is not None:
        cfg = cfg.replace(sampling={"seed": args.seed})
    if args.method:
        cfg = cfg.replace(evolution={"method": args.method})
    out = Path(args.out or cfg.output.directory)
    result = run_config(cfg, out, workers=args.workers)
    rep = result.report
    print(f"wrote {out}/snapshots.jsonl ({rep['records']} records), spectrum.csv, peaks.json, report.json")
    peak = rep["spectrum"]["top_peak"]
    if peak:
        line = f"top peak omega={peak['omega']:.4f} lambda={peak['lambda']:.4g}"
        if rep["spectrum"]["reference_gap"] is not None:
            line += f" (reference gap {rep['spectrum']['reference_gap']:.4f})"
        print(line)
    else:
        print("no spectral peak above the prominence threshold")
    print(f"depth mean {rep['depth']['mean']:.1f} (trotter mean {rep['depth']['trotter_mean']:.1f}); "
          f"wall time {rep['wall_time_s']:.1f}s")
    return EXIT_OK


def cmd_spectrum(args) -> int:
    snaps = SnapshotSet.read_jsonl(args.snapshots)
    q, mode = 3, "all-subsets"
    settings = SpectroscopySettings()
    if args.config:
        cfg = _load(args.config)
        q, mode = cfg.observables.q, cfg.observables.mode
        sp = cfg.spectroscopy
        settings = SpectroscopySettings(sp.keep_fraction, sp.lb_lags, sp.c, sp.zero_pad, sp.dc_exclude_bins,
                                        sp.min_prominence_fraction)
    if args.q is not None:
        q = args.q
    _, data, spectrum = spectrum_from_snapshots(snaps, q, mode, settings)
    out = Path(args.out or Path(args.snapshots).parent)
    out.mkdir(parents=True, exist_ok=True)
    spectrum.write_csv(out / "spectrum.csv")
    write_peaks_json(spectrum.peaks, out / "peaks.json")
    print(f"kept {len(data.rows)} series; {len(spectrum.peaks)} peaks; wrote {out}/spectrum.csv and peaks.json")
    for p in spectrum.peaks[:5]:
        print(f"  omega={p.omega:.4f} lambda={p.lam:.4g}")
    return EXIT_OK


def cmd_sample(args) -> int:
    cfg = _load(args.config)
    points = [int(s) for s in args.time_points.split(",")] if args.time_points else None
    out = Path(args.out or cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    per_s: dict[int, list] = {}
    with open(out / "circuits.jsonl", "w", encoding="utf-8") as fh:
        for row in sample_circuits(cfg, points, with_gates=args.gates):
            fh.write(json.dumps(row) + "\n")
            per_s.setdefault(row["s"], []).append(row)
    summary = {
        str(s): {
            "gamma_abs": abs(rows[0]["gamma"]),
            "negative_fraction": sum(r["gamma"] < 0 for r in rows) / len(rows),
            "gates_mean": sum(r["gates"] for r in rows) / len(rows),
            "depth_mean": sum(r["depth"] for r in rows) / len(rows),
            "depth_max": max(r["depth"] for r in rows),
        }
        for s, rows in sorted(per_s.items())
    }
    (out / "circuit_stats.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    last = summary[max(summary, key=int)]
    print(f"wrote {out}/circuits.jsonl and circuit_stats.json; last time point: |gamma|={last['gamma_abs']:.4g}, "
          f"mean depth {last['depth_mean']:.1f}")
    return EXIT_OK


def _parse_params(text: str | None) -> dict | None:
    if not text:
        return None
    out = {}
    for item in text.split(","):
        key, _, value = item.partition("=")
        out[key.strip()] = float(value)
    return out


def cmd_gap(args) -> int:
    params = _parse_params(args.params)
    h = build_model(args.model, args.n, params)
    if args.model == "tfim":
        p = {"j": 0.1, "d": 2.0, **(params or {})}
        print(f"closed-form tfim gap: {tfim_gap(args.n, p['j'], p['d']):.6f}")
    if args.levels or args.model == "heisenberg" or args.n <= 14:
        levels = args.levels or [0, 1]
        eig = eigendecompose(h)
        e = eig.eigenvalues
        for lvl in levels:
            print(f"E[{lvl}] = {e[lvl]:.6f}")
        for a, b in zip(levels, levels[1:]):
            print(f"gap E[{b}] - E[{a}] = {eig.gap(a, b):.6f}")
    return EXIT_OK


def cmd_validate(args) -> int:
    from .validate import run_checks

    results = run_checks(args.only)
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    print("all checks passed" if not failed else f"failed: {', '.join(failed)}")
    return EXIT_FAILED if failed else EXIT_OK


def cmd_preset(args) -> int:
    cfg = preset(args.name)
    text = cfg.to_json()
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gapscope", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate, analyse and write all artifacts")
    p.add_argument("config", help="TOML/JSON config path, or preset:<name>")
    p.add_argument("--out", help="output directory (default: output.directory)")
    p.add_argument("--workers", type=int, help="worker processes (capped by GAPSCOPE_THREADS)")
    p.add_argument("--seed", type=int, help="override sampling.seed")
    p.add_argument("--method", choices=["tepai", "trotter"], help="override evolution.method")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("spectrum", help="recompute the spectrum from a snapshots file")
    p.add_argument("snapshots")
    p.add_argument("--config", help="take observables/spectroscopy settings from this config")
    p.add_argument("--q", type=int, help="observable locality (default 3)")
    p.add_argument("--out", help="output directory (default: next to the snapshots)")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("sample", help="sample circuits and report gamma/depth statistics only")
    p.add_argument("config")
    p.add_argument("--out")
    p.add_argument("--time-points", help="comma-separated 1-based time indices (default: all)")
    p.add_argument("--gates", action="store_true", help="include full gate lists")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("gap", help="print reference energy gaps")
    p.add_argument("--model", required=True, choices=["heisenberg", "tfim"])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--params", help="e.g. jx=1,jy=1,jz=1 or j=0.1,d=2")
    p.add_argument("--levels", type=int, nargs="+", help="eigenstate indices (ascending energy)")
    p.set_defaults(func=cmd_gap)

    p = sub.add_parser("validate", help="run the oracle checks")
    p.add_argument("--only", nargs="+", help="subset of check names")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("preset", help="print a built-in config as JSON")
    p.add_argument("name", choices=PRESET_NAMES)
    p.add_argument("--out")
    p.set_defaults(func=cmd_preset)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InvalidModelError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DomainError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except EmptySignalError as exc:
        print(f"analysis failed: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
