"""Command-line front end.

Subcommands: ``polarization`` (bath polarization table), ``spectrum``
(cw spectrum plus peak report from a config file), ``simulate`` (stochastic
pulse sequences), ``fit`` (nonlinear model fits), and ``model-eval``
(closed-form rate models on a temperature grid).

Exit codes: 0 success, 2 usage error, 3 fit non-convergence, 4 I/O error.
Every output file starts with a provenance comment carrying the tool
version, a hash of the physics-relevant configuration, and the seed where
one applies. Execution knobs (worker count, output paths) are excluded from
the hash, so reruns of the same physics are byte-identical.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__, bath_model, datasets, fitkit, pulse_sim, spectra, spin_core


class UsageError(Exception):
    """Bad argument or config content; maps to exit code 2."""


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports its own usage errors
        return int(exc.code or 0)
    try:
        return args.handler(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nvbath",
        description="Pulsed-EPR models for nitrogen spin baths in diamond.",
    )
    parser.add_argument(
        "--outdir",
        default=None,
        help="output directory (default: $NVBATH_OUTPUT_DIR or the cwd)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("polarization", help="bath polarization versus temperature")
    p.add_argument("--frequency-hz", "--freq", type=float, default=240e9)
    p.add_argument(
        "--t-zeeman-k",
        type=float,
        default=None,
        help="override the Zeeman temperature instead of deriving it",
    )
    p.add_argument(
        "--temps",
        default="1.3:300:log:121",
        help="grid 'lo:hi:log[:n]', 'lo:hi:lin[:n]', or comma list",
    )
    p.add_argument("--output", default="polarization.csv")
    p.set_defaults(handler=_cmd_polarization)

    p = sub.add_parser("spectrum", help="cw spectrum and peak report")
    p.add_argument("--config", default=None, help="INI file; defaults used if absent")
    p.add_argument("--output", default="spectrum.csv")
    p.add_argument("--peaks-output", default="peaks.csv")
    p.set_defaults(handler=_cmd_spectrum)

    p = sub.add_parser("simulate", help="stochastic pulse-sequence traces")
    p.add_argument(
        "--sequence",
        type=_sequence_name,
        default=pulse_sim.SEQUENCE_HAHN,
        help=f"'{pulse_sim.SEQUENCE_HAHN}' (or 'hahn') | '{pulse_sim.SEQUENCE_INVERSION}'",
    )
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--output", default="trace.csv")
    p.add_argument("--temperature-k", "--temp", type=float, default=300.0)
    p.add_argument("--t-zeeman-k", type=float, default=11.518)
    p.add_argument("--tau-max-s", type=float, default=25e-6)
    p.add_argument("--tau-points", type=int, default=41)
    p.add_argument("--realizations", type=int, default=2000)
    p.add_argument("--sources", type=int, default=None)
    p.add_argument("--coupling-scale", type=float, default=None)
    p.add_argument("--base-rate", type=float, default=None)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--t1-s", type=float, default=1.2e-3, help="inversion recovery T1")
    p.add_argument("--noise", type=float, default=0.0)
    p.set_defaults(handler=_cmd_simulate)

    p = sub.add_parser("fit", help="fit a registry model to a data file")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument(
        "--fix",
        action="append",
        default=[],
        metavar="NAME=VALUE",
        help="pin a parameter (repeatable)",
    )
    p.add_argument(
        "--free",
        action="append",
        default=[],
        metavar="NAME",
        help="release a parameter the model fixes by default",
    )
    p.add_argument(
        "--init",
        action="append",
        default=[],
        metavar="NAME=VALUE",
        help="override a starting value (repeatable)",
    )
    p.add_argument("--max-iterations", type=int, default=fitkit.DEFAULT_MAX_ITERATIONS)
    p.add_argument("--unweighted", action="store_true")
    p.add_argument("--output-prefix", default="fit")
    p.set_defaults(handler=_cmd_fit)

    p = sub.add_parser("model-eval", help="evaluate a rate model on a grid")
    p.add_argument("--model", required=True, choices=("t1_model", "t2_model"))
    p.add_argument(
        "--params",
        default=None,
        metavar="NAME=VALUE,...",
        help="model constants; defaults to the reference sample values",
    )
    p.add_argument("--temps", default="1.3:300:log:121")
    p.add_argument("--output", default="model_eval.csv")
    p.set_defaults(handler=_cmd_model_eval)

    return parser


# --- helpers ---------------------------------------------------------------


def _sequence_name(text: str) -> str:
    aliases = {
        "hahn": pulse_sim.SEQUENCE_HAHN,
        pulse_sim.SEQUENCE_HAHN: pulse_sim.SEQUENCE_HAHN,
        "inversion": pulse_sim.SEQUENCE_INVERSION,
        pulse_sim.SEQUENCE_INVERSION: pulse_sim.SEQUENCE_INVERSION,
    }
    try:
        return aliases[text]
    except KeyError:
        raise argparse.ArgumentTypeError(
            f"unknown sequence {text!r} (want one of {sorted(set(aliases))})"
        )


def _outdir(args) -> str:
    return args.outdir or os.environ.get("NVBATH_OUTPUT_DIR") or "."


def _resolve(args, name: str) -> str:
    return name if os.path.isabs(name) else os.path.join(_outdir(args), name)


def _provenance(config: dict, seed=None) -> str:
    blob = json.dumps(config, sort_keys=True, default=str)
    digest = hashlib.sha256(blob.encode()).hexdigest()[:12]
    line = f"nvbath {__version__} config_sha256={digest}"
    if seed is not None:
        line += f" seed={seed}"
    return line


def _parse_temps(text: str) -> np.ndarray:
    """'lo:hi:log[:n]' | 'lo:hi:lin[:n]' | 'v1,v2,...'."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) not in (3, 4):
            raise UsageError(
                f"bad temperature range {text!r} (want lo:hi:log[:n] or lo:hi:lin[:n])"
            )
        try:
            lo, hi = float(parts[0]), float(parts[1])
            n = int(parts[3]) if len(parts) == 4 else 101
        except ValueError:
            raise UsageError(f"non-numeric bound in temperature range {text!r}")
        mode = parts[2]
        if mode not in ("log", "lin"):
            raise UsageError(f"range mode must be 'log' or 'lin', got {mode!r}")
        if lo <= 0 or hi <= lo or n < 2:
            raise UsageError(f"bad temperature range {text!r}")
        if mode == "log":
            return np.geomspace(lo, hi, n)
        return np.linspace(lo, hi, n)
    try:
        values = np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError:
        raise UsageError(f"non-numeric temperature in {text!r}")
    if values.size == 0 or np.any(values <= 0):
        raise UsageError(f"temperatures must be positive, got {text!r}")
    return values


def _parse_assignments(pairs, what: str) -> dict[str, float]:
    out: dict[str, float] = {}
    for pair in pairs:
        name, sep, value = pair.partition("=")
        if not sep or not name:
            raise UsageError(f"bad {what} {pair!r} (want NAME=VALUE)")
        try:
            out[name.strip()] = float(value)
        except ValueError:
            raise UsageError(f"non-numeric value in {what} {pair!r}")
    return out


def _write_csv(path: str, provenance: str, header: str, rows) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# {provenance}\n")
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


# --- subcommands ------------------------------------------------------------


def _cmd_polarization(args) -> int:
    if args.frequency_hz <= 0:
        raise UsageError("frequency must be positive")
    t_zeeman = args.t_zeeman_k
    if t_zeeman is None:
        t_zeeman = spin_core.zeeman_temperature(args.frequency_hz)
    temps = _parse_temps(args.temps)
    config = {
        "command": "polarization",
        "frequency_hz": args.frequency_hz,
        "t_zeeman_k": t_zeeman,
        "temps": args.temps,
    }
    rows = []
    for t in temps:
        point = bath_model.polarization(float(t), t_zeeman)
        rows.append(
            (t, point.polarization, bath_model.flip_flop_factor(float(t), t_zeeman))
        )
    path = _resolve(args, args.output)
    _write_csv(path, _provenance(config), "temperature_K,polarization,flip_flop_factor", rows)
    print(f"wrote {path}")
    return 0


_SPECTRUM_DEFAULTS = {
    "frequency_hz": 240e9,
    "temperature_k": 300.0,
    "field_start_t": spectra.DEFAULT_FIELD_START,
    "field_stop_t": spectra.DEFAULT_FIELD_STOP,
    "field_step_t": spectra.DEFAULT_FIELD_STEP,
    "tilt_deg": 0.0,
    "tilt_azimuth_deg": spin_core.DEFAULT_TILT_AZIMUTH_DEG,
}

_CENTER_DEFAULTS = {"n": spin_core.N_DEFAULT, "nv": spin_core.NV_DEFAULT}

_CENTER_FIELDS = (
    "g_parallel",
    "g_perp",
    "zero_field_d",
    "hyperfine_111",
    "hyperfine_other",
    "linewidth_pp",
)


def _load_spectrum_config(path):
    settings = dict(_SPECTRUM_DEFAULTS)
    populations = {"n": 1.0, "nv": 0.0}
    center_params = {k: v for k, v in _CENTER_DEFAULTS.items()}
    if path is None:
        return settings, populations, center_params
    parser = configparser.ConfigParser()
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise UsageError(f"{path}: {exc}")
    for section in parser.sections():
        if section == "spectrum":
            for key, raw in parser.items(section):
                if key not in settings:
                    raise UsageError(f"{path}: unknown [spectrum] key {key!r}")
                settings[key] = _config_float(path, section, key, raw)
        elif section == "populations":
            for key, raw in parser.items(section):
                if key not in populations:
                    raise UsageError(
                        f"{path}: unknown center {key!r} in [populations]"
                    )
                populations[key] = _config_float(path, section, key, raw)
        elif section.startswith("center."):
            label = section.split(".", 1)[1]
            if label not in center_params:
                raise UsageError(f"{path}: unknown center section [{section}]")
            overrides = {}
            for key, raw in parser.items(section):
                if key not in _CENTER_FIELDS:
                    raise UsageError(f"{path}: unknown [{section}] key {key!r}")
                overrides[key] = _config_float(path, section, key, raw)
            center_params[label] = center_params[label].replace(**overrides)
        else:
            raise UsageError(f"{path}: unknown section [{section}]")
    return settings, populations, center_params


def _config_float(path, section, key, raw) -> float:
    try:
        return float(raw)
    except ValueError:
        raise UsageError(f"{path}: [{section}] {key} = {raw!r} is not a number")


def _cmd_spectrum(args) -> int:
    settings, populations, center_params = _load_spectrum_config(args.config)
    centers = [
        (center_params[label], pop) for label, pop in populations.items() if pop > 0
    ]
    if not centers:
        raise UsageError("no center has a positive population")
    try:
        sticks = spectra.build_sticks(
            centers,
            frequency=settings["frequency_hz"],
            temperature=settings["temperature_k"],
            tilt_deg=settings["tilt_deg"],
            tilt_azimuth_deg=settings["tilt_azimuth_deg"],
        )
        spectrum = spectra.convolve(
            sticks,
            field_start=settings["field_start_t"],
            field_stop=settings["field_stop_t"],
            field_step=settings["field_step_t"],
        )
    except ValueError as exc:
        raise UsageError(str(exc))
    report = spectra.analyze_peaks(spectrum)
    config = {
        "command": "spectrum",
        **settings,
        "populations": sorted(populations.items()),
    }
    provenance = _provenance(config)
    spectrum_path = _resolve(args, args.output)
    peaks_path = _resolve(args, args.peaks_output)
    spectra.write_spectrum_csv(spectrum, spectrum_path, header_lines=[provenance])
    spectra.write_peaks_csv(report, peaks_path, header_lines=[provenance])
    print(f"wrote {spectrum_path} and {peaks_path} ({len(report.peaks)} peaks)")
    return 0


def _cmd_simulate(args) -> int:
    if args.tau_points < 2:
        raise UsageError("need at least two delay points")
    if args.tau_max_s <= 0:
        raise UsageError("delay maximum must be positive")
    if args.realizations < 1:
        raise UsageError("realizations must be >= 1")
    if args.threads < 1:
        raise UsageError("threads must be >= 1")
    delays = np.linspace(0.0, args.tau_max_s, args.tau_points)
    if args.sequence == pulse_sim.SEQUENCE_INVERSION:
        if args.t1_s <= 0:
            raise UsageError("T1 must be positive")
        trace = pulse_sim.simulate_inversion_recovery(
            args.t1_s, delays, noise_amplitude=args.noise, seed=args.seed
        )
        config = {
            "command": "simulate",
            "sequence": args.sequence,
            "t1_s": args.t1_s,
            "tau_max_s": args.tau_max_s,
            "tau_points": args.tau_points,
            "noise": args.noise,
            "seed": args.seed,
        }
    else:
        base = pulse_sim.BathNoiseConfig()
        cfg = replace(
            base,
            temperature=args.temperature_k,
            t_zeeman=args.t_zeeman_k,
            seed=args.seed,
            n_sources=args.sources if args.sources is not None else base.n_sources,
            coupling_scale=(
                args.coupling_scale
                if args.coupling_scale is not None
                else base.coupling_scale
            ),
            base_rate=args.base_rate if args.base_rate is not None else base.base_rate,
        )
        trace = pulse_sim.simulate_hahn_echo(
            cfg, delays, args.realizations, threads=args.threads
        )
        config = {
            "command": "simulate",
            "sequence": args.sequence,
            "temperature_k": cfg.temperature,
            "t_zeeman_k": cfg.t_zeeman,
            "tau_max_s": args.tau_max_s,
            "tau_points": args.tau_points,
            "realizations": args.realizations,
            "n_sources": cfg.n_sources,
            "coupling_scale": cfg.coupling_scale,
            "base_rate": cfg.base_rate,
            "seed": args.seed,
        }
    path = _resolve(args, args.output)
    pulse_sim.write_trace_csv(
        trace, path, header_lines=[_provenance(config, seed=args.seed)]
    )
    print(f"wrote {path}")
    return 0


def _cmd_fit(args) -> int:
    try:
        model = fitkit.get_model(args.model)
    except KeyError as exc:
        raise UsageError(str(exc.args[0]))
    fix = _parse_assignments(args.fix, "--fix")
    init = _parse_assignments(args.init, "--init")
    known = set(model.param_names)
    for name in list(fix) + list(init) + list(args.free):
        if name not in known:
            raise UsageError(
                f"model {model.name} has no parameter {name!r}; "
                f"parameters: {', '.join(model.param_names)}"
            )
    fixed = dict(model.default_fixed)
    fixed.update(fix)
    for name in args.free:
        fixed.pop(name, None)

    if model.name in ("echo_decay", "inversion_recovery"):
        try:
            trace = pulse_sim.read_trace_csv(args.data)
        except ValueError as exc:
            raise UsageError(str(exc))
        x = trace.delays
        y = trace.amplitude
        err = trace.std_error
    else:
        try:
            dataset = datasets.load_csv(args.data)
        except datasets.DatasetFormatError as exc:
            raise UsageError(str(exc))
        per_us = model.name == "t2_model"
        x, y, err = (
            np.array(v) for v in datasets.as_rate_data(dataset, per_microsecond=per_us)
        )
    sigma = None
    if not args.unweighted and np.all(np.asarray(err) > 0):
        sigma = err

    options = fitkit.FitOptions(max_iterations=args.max_iterations)
    result = fitkit.fit(
        model, x, y, sigma=sigma, init=init or None, fixed=fixed, options=options
    )

    config = {
        "command": "fit",
        "model": model.name,
        "fixed": sorted(fixed.items()),
        "init": sorted(init.items()),
        "unweighted": bool(sigma is None),
        "max_iterations": args.max_iterations,
    }
    provenance = _provenance(config)
    csv_path = _resolve(args, args.output_prefix + ".csv")
    txt_path = _resolve(args, args.output_prefix + ".txt")
    with open(csv_path, "w", newline="\n") as fh:
        fh.write(f"# {provenance}\n")
        fh.write("parameter,value,stderr,fixed\n")
        for name, value, stderr, is_fixed in zip(
            result.param_names, result.params, result.stderr, result.fixed
        ):
            fh.write(f"{name},{value:.17g},{stderr:.17g},{int(is_fixed)}\n")
    with open(txt_path, "w", newline="\n") as fh:
        fh.write(f"# {provenance}\n")
        fh.write(_format_report(model, result))
    status = "converged" if result.converged else "did not converge"
    print(
        f"{model.name}: {status} after {result.n_iterations} iterations, "
        f"cost {result.cost:.6g}; wrote {csv_path} and {txt_path}"
    )
    return 0 if result.converged else 3


def _format_report(model: fitkit.ModelSpec, result: fitkit.FitResult) -> str:
    lines = [
        f"model: {result.model}",
        f"converged: {result.converged} ({result.message})",
        f"iterations: {result.n_iterations}",
        f"cost: {result.cost:.10g}",
        f"reduced_chisq: {result.reduced_chisq:.10g}",
        "",
    ]
    for name, unit, value, stderr, is_fixed in zip(
        result.param_names, model.param_units, result.params, result.stderr, result.fixed
    ):
        tag = " (fixed)" if is_fixed else f" +- {stderr:.4g}"
        unit_s = f" {unit}" if unit else ""
        lines.append(f"  {name} = {value:.8g}{tag}{unit_s}")
    return "\n".join(lines) + "\n"


def _cmd_model_eval(args) -> int:
    temps = _parse_temps(args.temps)
    params = _parse_assignments(args.params.split(",") if args.params else [], "--params")
    if args.model == "t1_model":
        defaults = {
            "A": bath_model.DEFAULT_T1_PARAMS.a_per_s_k,
            "B": bath_model.DEFAULT_T1_PARAMS.b_per_s_k5,
        }
        unknown = set(params) - set(defaults)
        if unknown:
            raise UsageError(f"t1_model has no parameter(s) {sorted(unknown)}")
        merged = {**defaults, **params}
        model_params = bath_model.T1ModelParams(merged["A"], merged["B"])
        rates = [bath_model.t1_rate(float(t), model_params) for t in temps]
    else:
        defaults = {
            "C": bath_model.DEFAULT_T2_PARAMS.c_per_us,
            "T_Ze": bath_model.DEFAULT_T2_PARAMS.t_zeeman_k,
            "Gamma_res": bath_model.DEFAULT_T2_PARAMS.gamma_res_per_us,
        }
        unknown = set(params) - set(defaults)
        if unknown:
            raise UsageError(f"t2_model has no parameter(s) {sorted(unknown)}")
        merged = {**defaults, **params}
        model_params = bath_model.T2ModelParams(
            merged["C"], merged["T_Ze"], merged["Gamma_res"]
        )
        rates = [bath_model.t2_rate(float(t), model_params) for t in temps]
    # value_time is always seconds; the rate keeps the model's native unit.
    seconds_per_unit = 1e-6 if args.model == "t2_model" else 1.0
    rows = [
        (t, rate, seconds_per_unit / rate) for t, rate in zip(temps, rates)
    ]
    config = {
        "command": "model-eval",
        "model": args.model,
        "params": sorted(merged.items()),
        "temps": args.temps,
    }
    path = _resolve(args, args.output)
    _write_csv(path, _provenance(config), "temperature_K,rate,value_time", rows)
    print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
