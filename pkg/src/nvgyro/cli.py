"""Command-line entry points: run experiments, analyze stability, report.

Subcommands
    run        simulate an experiment (or a preset's variant set)
    allan      Allan deviation of a recorded column
    report     compare corrected/uncorrected runs
    estimate   four-point line-center estimates from a CSV of readings
    calibrate  phase-sweep slope and rotation-axis scale factors
    field      dump the field trajectory on a uniform grid

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
Presets live as editable YAML files under ``nvgyro/presets``.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from . import __version__, analysis, config as config_mod, control, estimation
from . import protocol
from .config import ConfigError

PRESETS = ("fig1e", "fig2", "fig3", "fig4")
_OUT_ENV = "NVGYRO_OUT"


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _read_csv(path: Path) -> tuple[list[str], np.ndarray]:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def _deep_merge(base: dict, extra: dict) -> dict:
    merged = copy.deepcopy(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _load_preset_raw(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {PRESETS}")
    text = resources.files("nvgyro.presets").joinpath(f"{name}.yaml").read_text()
    return yaml.safe_load(text)


def _resolve_out(args, label: str) -> Path:
    if args.out:
        root = Path(args.out)
    else:
        root = Path(os.environ.get(_OUT_ENV, "runs")) / label
    root.mkdir(parents=True, exist_ok=True)
    return root


def _manifest(cfg, label, outputs, result=None, extra=None) -> dict:
    manifest = {
        "artifact": {"name": "nvgyro", "version": __version__},
        "label": label,
        "seed": cfg.run.seed,
        "config": config_mod.config_to_dict(cfg),
        "outputs": outputs,
    }
    if result is not None:
        if result.records:
            t_end = (result.records[-1].t_start
                     + cfg.sequence.n_r * cfg.sequence.sequence_length)
        else:
            t_end = 0.0
        manifest["simulated_time"] = [0.0, t_end]
        manifest["n_blocks"] = len(result.records)
        manifest["out_of_band_blocks"] = list(result.out_of_band_blocks)
        manifest["aborted"] = result.aborted
        if result.error:
            manifest["error"] = result.error
        manifest["feedback_log"] = {
            "t_s": [s.t for s in result.feedback_log],
            "estimated_center_hz": [s.estimated_center for s in result.feedback_log],
            "applied_center_hz": [s.applied_center for s in result.feedback_log],
            "mapping_correction_hz": [s.mapping_correction for s in result.feedback_log],
            "nuclear_correction_hz": [s.nuclear_correction for s in result.feedback_log],
            "out_of_band": [s.out_of_band for s in result.feedback_log],
        }
    if extra:
        manifest.update(extra)
    return manifest


def _write_manifest(path: Path, manifest: dict) -> None:
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _records_column(header, data, name: str) -> np.ndarray:
    if name not in header:
        raise ConfigError(f"column {name!r} not in records; available: "
                          f"{', '.join(header)}")
    column = data[:, header.index(name)]
    if np.all(np.isnan(column)):
        usable = [h for i, h in enumerate(header)
                  if not np.all(np.isnan(data[:, i]))]
        raise ConfigError(f"column {name!r} holds no data in this run; "
                          f"populated columns: {', '.join(usable)}")
    return column


def _allan_from_records(path: Path, column: str, taus=None, scale_s=None):
    header, data = _read_csv(path)
    effective = {"esr_center": "esr_center_est_hz"}.get(column, column)
    values = _records_column(header, data, effective)
    times = _records_column(header, data, "t_start_s")
    if np.any(np.isnan(values)):
        raise ConfigError(f"column {column!r} contains gaps (NaN); it cannot "
                          "be analyzed for this run")
    curve = analysis.allan_deviation(times, values, taus=taus)
    if scale_s:
        curve = analysis.rescale_to_rotation(curve, scale_s)
    return curve


def _write_allan_csv(path: Path, curve: analysis.AllanCurve) -> None:
    header = ["tau_s", "sigma", "error_bar", "n_subdivisions"]
    rows = []
    scaled = curve.scale_factor_s is not None
    if scaled:
        header.append("sigma_rotation_deg_per_s")
    for i in range(len(curve.taus)):
        row = [curve.taus[i], curve.sigmas[i], curve.error_bars[i],
               int(curve.n_subdivisions[i])]
        if scaled:
            row.append(curve.sigmas[i] / curve.scale_factor_s)
        rows.append(row)
    _write_csv(path, header, rows)


def _read_allan_csv(path: Path) -> analysis.AllanCurve:
    header, data = _read_csv(path)
    return analysis.AllanCurve(
        taus=data[:, header.index("tau_s")],
        sigmas=data[:, header.index("sigma")],
        error_bars=data[:, header.index("error_bar")],
        n_subdivisions=data[:, header.index("n_subdivisions")].astype(np.int64),
    )


def run_single(cfg: config_mod.ExperimentConfig, out_dir: Path,
               label: str) -> dict:
    """One experiment run: records CSV, Allan CSV, manifest."""
    out_dir.mkdir(parents=True, exist_ok=True)
    trajectory = cfg.make_trajectory()
    controller = (control.Controller(cfg.sensor, cfg.control)
                  if cfg.control.enabled else None)
    result = protocol.run_experiment(cfg.sensor, cfg.sequence, trajectory,
                                     cfg.noise, controller,
                                     duration=cfg.run.duration,
                                     seed=cfg.run.seed)
    records_path = out_dir / "records.csv"
    header, rows = protocol.records_table(result.records,
                                          cfg.sequence.use_mapping)
    _write_csv(records_path, header, rows)

    outputs = {"records_csv": str(records_path)}
    column = cfg.analysis.column
    if column in ("F", "G"):
        column = "F" if cfg.sequence.use_mapping else "G"
    try:
        curve = _allan_from_records(records_path, column,
                                    taus=cfg.analysis.taus,
                                    scale_s=cfg.analysis.scale_s)
        allan_path = out_dir / "allan.csv"
        _write_allan_csv(allan_path, curve)
        outputs["allan_csv"] = str(allan_path)
    except (ValueError, ConfigError) as exc:
        print(f"note: Allan analysis skipped for {label}: {exc}",
              file=sys.stderr)
    manifest = _manifest(cfg, label, outputs, result=result)
    _write_manifest(out_dir / "manifest.json", manifest)
    status = "aborted" if result.aborted else "ok"
    print(f"{label}: {len(result.records)} blocks -> {out_dir} [{status}]")
    if result.aborted:
        raise RuntimeError(f"run {label} aborted: {result.error}")
    return manifest


def _run_calibration(raw: dict, args, out_root: Path) -> int:
    cfg = config_mod.config_from_dict(
        {k: v for k, v in raw.items()
         if k in ("sensor", "sequence", "noise", "run", "analysis")})
    n_points = int((raw.get("calibration") or {}).get("n_points", 73))
    t_r = cfg.sequence.t_ramsey
    rows, results = [], {}
    for label, mapped in (("mapped", True), ("unmapped", False)):
        cal = estimation.slope_calibration(cfg.sensor, t_r, mapped=mapped,
                                           n_points=n_points)
        results[label] = {
            "slope_per_deg_s": cal.slope_per_deg_s,
            "scale_factor_s": cal.scale_factor_s,
            "fringe_amplitude": cal.fringe_amplitude,
        }
        for theta, f_val in zip(cal.thetas, cal.contrast):
            rows.append([theta, f_val, label])
        print(f"{label}: fringe amplitude {cal.fringe_amplitude:.6g}, "
              f"scale s = {cal.scale_factor_s:.6g} (deg/s)^-1")
    sweep_path = out_root / "phase_sweep.csv"
    with open(sweep_path, "w") as fh:
        fh.write("theta_rad,contrast,readout\n")
        for theta, f_val, label in rows:
            fh.write(f"{_fmt(theta)},{_fmt(f_val)},{label}\n")
    manifest = _manifest(cfg, cfg.run.label, {"phase_sweep_csv": str(sweep_path)},
                         extra={"calibration": results})
    _write_manifest(out_root / "manifest.json", manifest)
    return 0


def _run_predictor_study(raw: dict, args, out_root: Path) -> int:
    spec = raw.get("predictor_study") or {}
    seed = int((raw.get("run") or {}).get("seed", 0))
    grid = control.predictor_study(
        perturbation_amplitude=float(spec.get("perturbation_amplitude", 1.0)),
        noise_amplitudes=spec.get("noise_amplitudes", [0.0, 0.1, 1.0, 10.0]),
        degrees=spec.get("degrees", [0, 1, 2, 3, 4, 5]),
        realizations=int(spec.get("realizations", 20)),
        samples_per_period=int(spec.get("samples_per_period", 20)),
        n_periods=int(spec.get("n_periods", 20)),
        seed=seed,
    )
    header = ["noise_amplitude"] + [f"degree_{int(d)}" for d in grid.degrees]
    rows = [[amp, *grid.errors[i]] for i, amp in enumerate(grid.noise_amplitudes)]
    grid_path = out_root / "predictor_error_grid.csv"
    _write_csv(grid_path, header, rows)
    _write_manifest(out_root / "manifest.json", {
        "artifact": {"name": "nvgyro", "version": __version__},
        "label": (raw.get("run") or {}).get("label", "predictor_study"),
        "seed": seed,
        "study": {k: spec.get(k) for k in sorted(spec)},
        "outputs": {"error_grid_csv": str(grid_path)},
    })
    print(f"predictor study -> {grid_path}")
    return 0


def cmd_run(args) -> int:
    if bool(args.config) == bool(args.preset):
        raise ConfigError("provide exactly one of --config or --preset")
    raw = (_load_preset_raw(args.preset) if args.preset
           else config_mod.load_raw(args.config))
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"run.seed={args.seed}")
    raw = config_mod.apply_overrides(raw, overrides)

    label = (raw.get("run") or {}).get("label", args.preset or "run")
    out_root = _resolve_out(args, label)
    kind = raw.get("type", "experiment")
    if kind == "calibration":
        return _run_calibration(raw, args, out_root)
    if kind == "predictor_study":
        return _run_predictor_study(raw, args, out_root)
    if kind != "experiment":
        raise ConfigError(f"unknown run type {kind!r}")

    variants = raw.get("variants") or [{"name": None}]
    for variant in variants:
        v = dict(variant)
        name = v.pop("name", None)
        merged = _deep_merge({k: val for k, val in raw.items()
                              if k not in ("variants", "type")}, v)
        cfg = config_mod.config_from_dict(merged)
        run_dir = out_root / name if name else out_root
        run_label = f"{label}/{name}" if name else label
        run_single(cfg, run_dir, run_label)
    return 0


def cmd_allan(args) -> int:
    taus = None
    if args.taus and args.taus != "auto":
        taus = [float(x) for x in args.taus.split(",")]
    curve = _allan_from_records(Path(args.records), args.column,
                                taus=taus, scale_s=args.scale_s)
    out = Path(args.out) if args.out else Path(args.records).parent / "allan.csv"
    _write_allan_csv(out, curve)
    print(f"allan curve ({len(curve.taus)} points) -> {out}")
    return 0


def cmd_report(args) -> int:
    dirs = [Path(d) for d in args.run_dirs]
    if len(dirs) < 2:
        raise ConfigError("report needs at least two run directories "
                          "(reference first)")
    curves = {}
    for d in dirs:
        path = d / "allan.csv"
        if not path.exists():
            raise ConfigError(f"{d}: no allan.csv (run `nvgyro allan` first)")
        curves[str(d)] = _read_allan_csv(path)
    reference = curves[str(dirs[0])]
    window = tuple(args.white_window) if args.white_window else None
    report = {"reference": str(dirs[0]), "taus_s": reference.taus.tolist(),
              "runs": {}}
    print(f"reference: {dirs[0]}")
    for d in dirs[1:]:
        rep = analysis.stability_report(reference, curves[str(d)],
                                        white_fit_window=window)
        report["runs"][str(d)] = {
            "improvement_ratios": rep.improvement_ratios.tolist(),
            "ratio_at_longest_tau": rep.ratio_at_longest_tau,
            "optimum_tau_s": rep.optimum_tau,
            "optimum_sigma": rep.optimum_sigma,
            "white_slope": rep.white_slope,
            "follows_sqrt_law": rep.follows_sqrt_law,
        }
        print(f"{d}: ratio@longest-tau {rep.ratio_at_longest_tau:.3g}, "
              f"optimum tau {rep.optimum_tau:.4g} s, "
              f"white slope {rep.white_slope:+.3f}")
    report["curves"] = {
        name: {"tau_s": c.taus.tolist(), "sigma": c.sigmas.tolist(),
               "error_bar": c.error_bars.tolist()}
        for name, c in curves.items()}
    out = Path(args.out) if args.out else dirs[0].parent / "report.json"
    with open(out, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"report -> {out}")
    return 0


def cmd_estimate(args) -> int:
    header, data = _read_csv(Path(args.input))
    needed = ["nu_1_hz", "nu_2_hz", "nu_3_hz", "nu_4_hz",
              "esr_1", "esr_2", "esr_3", "esr_4"]
    for name in needed:
        if name not in header:
            raise ConfigError(f"estimate input needs column {name!r}; "
                              f"found {', '.join(header)}")
    idx = [header.index(n) for n in needed]
    threshold = args.threshold
    for row in data:
        freqs = tuple(row[i] for i in idx[:4])
        sigs = tuple(row[i] for i in idx[4:])
        reading = estimation.FourPointReading(freqs, sigs)
        try:
            center = estimation.four_point_estimate(
                reading, min_slope_difference=threshold)
            print(repr(center))
        except estimation.OutOfBandError as exc:
            print(f"out-of-band: {exc}")
    return 0


def cmd_calibrate(args) -> int:
    raw = (_load_preset_raw(args.preset) if args.preset
           else config_mod.load_raw(args.config) if args.config else {})
    if args.set:
        raw = config_mod.apply_overrides(raw, list(args.set))
    label = (raw.get("run") or {}).get("label", "calibration")
    out_root = _resolve_out(args, label)
    return _run_calibration(raw, args, out_root)


def cmd_field(args) -> int:
    cfg = config_mod.load_config(args.config, list(args.set or []))
    trajectory = cfg.make_trajectory()
    ts = np.arange(0.0, args.t_max + args.dt / 2, args.dt)
    fields = trajectory.field_at(ts)
    out = Path(args.out) if args.out else Path("field.csv")
    _write_csv(out, ["t_s", "field_gauss"], list(zip(ts, np.atleast_1d(fields))))
    print(f"field trace ({ts.size} samples) -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nvgyro",
        description="Dual-spin quantum rotation-sensor simulator and "
                    "stability analysis toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="simulate an experiment or preset")
    run_p.add_argument("--config", help="experiment YAML (or manifest JSON)")
    run_p.add_argument("--preset", choices=PRESETS)
    run_p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="dotted-path config override, repeatable")
    run_p.add_argument("--seed", type=int, help="override run.seed")
    run_p.add_argument("--out", help=f"output directory (default "
                                     f"${_OUT_ENV}/<label> or runs/<label>)")
    run_p.set_defaults(func=cmd_run)

    allan_p = sub.add_parser("allan", help="Allan deviation of a records column")
    allan_p.add_argument("--records", required=True)
    allan_p.add_argument("--column", default="F",
                         choices=["F", "G", "esr_center"])
    allan_p.add_argument("--taus", default="auto",
                         help="comma-separated seconds, or 'auto'")
    allan_p.add_argument("--scale-s", type=float, default=None,
                         help="rotation-axis scale factor, (deg/s)^-1")
    allan_p.add_argument("--out")
    allan_p.set_defaults(func=cmd_allan)

    report_p = sub.add_parser("report", help="compare runs (reference first)")
    report_p.add_argument("run_dirs", nargs="+")
    report_p.add_argument("--white-window", type=float, nargs=2,
                          metavar=("LO", "HI"))
    report_p.add_argument("--out")
    report_p.set_defaults(func=cmd_report)

    est_p = sub.add_parser("estimate", help="four-point estimates from CSV")
    est_p.add_argument("--input", required=True)
    est_p.add_argument("--threshold", type=float, default=None,
                       help="minimum secant slope difference")
    est_p.set_defaults(func=cmd_estimate)

    cal_p = sub.add_parser("calibrate", help="phase-sweep slope calibration")
    cal_p.add_argument("--config")
    cal_p.add_argument("--preset", choices=PRESETS)
    cal_p.add_argument("--set", action="append", metavar="KEY=VALUE")
    cal_p.add_argument("--out")
    cal_p.set_defaults(func=cmd_calibrate)

    field_p = sub.add_parser("field", help="dump b(t) on a uniform grid")
    field_p.add_argument("--config", required=True)
    field_p.add_argument("--set", action="append", metavar="KEY=VALUE")
    field_p.add_argument("--t-max", type=float, required=True)
    field_p.add_argument("--dt", type=float, required=True)
    field_p.add_argument("--out")
    field_p.set_defaults(func=cmd_field)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
