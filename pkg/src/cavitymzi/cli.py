"""Command-line entry point: ``cavitymzi <command> --output DIR ...``.

Exit codes: 0 success, 2 invalid input or spec, 3 numerical failure.
Errors are reported on stderr as a single JSON object.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .estimation import EstimationConfig, run_trials
from .exceptions import CavityMZIError, NoPreferredDirectionError, SpecError, TruncationWarning
from .fisher import fisher_report, optimize_phase_beta, qfi, qfi_approx
from .fock import state_from_dict, state_to_dict, truncation_tail_mass
from .interferometer import InterferometerInput, output_distribution, polar_slice
from .lindblad import IntegratorConfig
from .preparation import (ExtractionParams, PreparedState, PrepParams, extraction_series,
                          prepare_ideal, prepare_lossy)
from .sweep import FailFast, load_spec, run, validate
from .wigner import PhaseGrid, default_grid, gradient_direction, wigner

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _emit_error("usage", message)
        sys.exit(EXIT_INVALID)


def _emit_error(kind, message, **extra):
    print(json.dumps({"status": "error", "error": kind, "message": message, **extra}),
          file=sys.stderr)


def _phase(text):
    return text if text == "opt" else float(text)


def _add_prep(p, beam=True):
    g = p.add_argument_group("preparation")
    g.add_argument("--alpha", type=float, default=math.sqrt(10), help="coherent amplitude in the cavity")
    g.add_argument("--U0", type=float, default=1.0, help="dispersive shift")
    g.add_argument("--t", type=float, default=math.pi, help="atom-cavity interaction time")
    g.add_argument("--kappa", type=float, default=0.0, help="cavity loss rate")
    g.add_argument("--cutoff", type=int, default=None, help="Fock cutoff n_max")
    g.add_argument("--step-scale", type=float, default=None)
    g.add_argument("--trace-tolerance", type=float, default=None)
    g.add_argument("--state", type=Path, default=None,
                   help="fockstate-v1 JSON to use instead of preparing one")
    if beam:
        b = p.add_argument_group("reference beam")
        b.add_argument("--beta0", type=float, default=math.sqrt(10))
        b.add_argument("--phi-beta", type=_phase, default=0.0, help="beam phase or 'opt'")
        b.add_argument("--beta-cutoff", type=int, default=None)


def _integrator(args):
    kw = {}
    if args.step_scale is not None:
        kw["step_scale"] = args.step_scale
    if args.trace_tolerance is not None:
        kw["trace_tolerance"] = args.trace_tolerance
    return IntegratorConfig(**kw)


def _prepared(args, force_lossy=False) -> PreparedState:
    if args.state is not None:
        payload = json.loads(args.state.read_text())
        light = state_from_dict(payload)
        return PreparedState(light, float(payload.get("success_probability", math.nan)),
                             {"source": str(args.state)})
    params = PrepParams(args.alpha, args.U0, args.t, args.kappa, args.cutoff)
    if params.kappa > 0 or force_lossy:
        return prepare_lossy(params, _integrator(args))
    return prepare_ideal(params)


def _interferometer(args, light):
    phi = args.phi_beta
    if phi == "opt":
        phi = optimize_phase_beta(light, args.beta0, beta_cutoff=args.beta_cutoff).phi_beta
    beta = args.beta0 * complex(math.cos(phi), math.sin(phi))
    return InterferometerInput(light, beta, args.beta_cutoff), phi


def _write_json(path: Path, payload):
    path.write_text(json.dumps(payload, indent=2, sort_keys=True))


def _write_csv(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _prep_summary(prep):
    return {"success_probability": prep.success_probability,
            "mean_photon_number": prep.light.mean_photon_number(),
            "tail_mass": truncation_tail_mass(prep.light),
            "diagnostics": prep.diagnostics}


def cmd_prepare(args, out):
    prep = _prepared(args)
    _write_json(out / "prepared_state.json",
                state_to_dict(prep.light, success_probability=prep.success_probability))
    summary = _prep_summary(prep)
    _write_json(out / "prepare.json", summary)
    return {"files": ["prepared_state.json", "prepare.json"], **summary}


def cmd_qfi(args, out):
    prep = _prepared(args)
    inp, phi = _interferometer(args, prep.light)
    value = qfi(inp)
    report = {"qfi": value, "snl": inp.shot_noise_limit, "phi_beta": phi,
              "n_alpha": inp.n_alpha, "n_beta": inp.n_beta, **_prep_summary(prep)}
    if args.state is None and args.kappa == 0:
        report["closed_form"] = {f: qfi_approx(f, inp.n_alpha, inp.n_beta, args.U0 * args.t)
                                 for f in ("opt", "phase0")}
    _write_json(out / "qfi.json", report)
    return {"files": ["qfi.json"], "qfi": value, "snl": inp.shot_noise_limit}


def cmd_cfi(args, out):
    prep = _prepared(args)
    inp, phi = _interferometer(args, prep.light)
    rep = fisher_report(inp, args.theta, args.sigma, args.m)
    dist = output_distribution(inp, args.theta, args.sigma)
    _write_json(out / "fisher.json", {**rep.to_dict(), "phi_beta": phi,
                                      "snl": inp.shot_noise_limit})
    _write_csv(out / "distribution.csv", ("theta", "n", "m", "p"), dist.rows())
    return {"files": ["fisher.json", "distribution.csv"], **rep.to_dict()}


def cmd_wigner(args, out):
    prep = _prepared(args)
    if args.extent is None:
        grid = default_grid(prep.light.mean_photon_number(), args.points)
    else:
        grid = PhaseGrid(-args.extent, args.extent, -args.extent, args.extent, args.points)
    wmap = wigner(prep.light, grid)
    try:
        direction = gradient_direction(wmap)
    except NoPreferredDirectionError:
        direction = None
    summary = {"integral": wmap.integral(), "origin": wmap.at_origin(),
               "minimum": float(wmap.values.min()), "gradient_direction": direction,
               "grid": grid.to_dict()}
    _write_csv(out / "wigner.csv", ("re", "im", "w"), wmap.rows())
    _write_json(out / "wigner.json", summary)
    return {"files": ["wigner.csv", "wigner.json"], **summary}


def cmd_slice(args, out):
    prep = _prepared(args)
    inp, _ = _interferometer(args, prep.light)
    thetas = np.linspace(args.theta_min, args.theta_max, args.theta_points)
    table = polar_slice(inp, args.N, thetas)
    _write_csv(out / "slice.csv", ("theta", "delta_n", "p"), table.rows())
    return {"files": ["slice.csv"], "N": args.N, "max_mass": float(table.mass().max())}


def cmd_extract(args, out):
    prep = _prepared(args, force_lossy=args.preparation == "lossy")
    ext = ExtractionParams(args.kappa_T, args.tau, args.kappa_tilde)
    snap = extraction_series(prep, ext, [args.tau], _integrator(args))[0]
    inp, phi = _interferometer(args, snap.state)
    _write_json(out / "extracted_state.json", state_to_dict(snap.state))
    report = {"tau": args.tau, "kappa_T_tau": args.kappa_T * args.tau, "qfi": qfi(inp),
              "snl": prep.light.mean_photon_number() + inp.n_beta, "phi_beta": phi,
              "extracted_photons": snap.state.mean_photon_number(),
              "diagnostics": snap.diagnostics}
    _write_json(out / "extract.json", report)
    return {"files": ["extracted_state.json", "extract.json"], "qfi": report["qfi"]}


def cmd_estimate(args, out):
    prep = _prepared(args)
    inp, _ = _interferometer(args, prep.light)
    config = EstimationConfig(args.theta, args.m, args.trials, args.theta_min, args.theta_max,
                              args.points, args.seed, args.sigma)
    report = run_trials(config, inp)
    _write_json(out / "report.json", report.to_dict(include_estimates=False))
    _write_csv(out / "estimates.csv", ("trial", "estimate"), enumerate(report.estimates))
    return {"files": ["report.json", "estimates.csv"], "ratio": report.ratio}


def cmd_validate(args, out):
    spec = load_spec(args.spec)
    diags = [d.to_dict() for d in validate(spec)]
    _write_json(out / "diagnostics.json", diags)
    if any(d["level"] == "error" for d in diags):
        raise SpecError([_DiagView(d) for d in diags])
    return {"files": ["diagnostics.json"], "diagnostics": diags}


class _DiagView:
    def __init__(self, d):
        self.level, self.message = d["level"], d["message"]
        self._d = d

    def to_dict(self):
        return self._d


def cmd_sweep(args, out):
    spec = load_spec(args.spec)
    result = run(spec, out, workers=args.workers, fail_fast=args.fail_fast)
    return {"files": sorted(result.files.values()), "spec_hash": result.manifest["spec_hash"],
            "n_points": result.manifest["n_points"], "n_failed": result.manifest["n_failed"]}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cavitymzi", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, func, help_text, beam=True, prep=True):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--output", "-o", type=Path, required=True, help="output directory")
        if prep:
            _add_prep(p, beam)
        p.set_defaults(func=func)
        return p

    command("prepare", cmd_prepare, "prepare the cavity state", beam=False)
    command("qfi", cmd_qfi, "quantum Fisher information")
    p = command("cfi", cmd_cfi, "photon-counting Fisher information")
    p.add_argument("--theta", type=float, default=0.0)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--m", type=int, default=1, help="repetitions for the Cramer-Rao bound")
    p = command("wigner", cmd_wigner, "Wigner map of the prepared state", beam=False)
    p.add_argument("--points", type=int, default=201)
    p.add_argument("--extent", type=float, default=None, help="half-width of the square grid")
    p = command("slice", cmd_slice, "fixed-N slice of the counting statistics")
    p.add_argument("--N", type=int, default=20)
    p.add_argument("--theta-min", type=float, default=0.0)
    p.add_argument("--theta-max", type=float, default=2 * math.pi)
    p.add_argument("--theta-points", type=int, default=181)
    p = command("extract", cmd_extract, "transfer the cavity field to a propagating mode")
    p.add_argument("--kappa-T", type=float, required=True)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--kappa-tilde", type=float, default=0.0)
    p.add_argument("--preparation", choices=("lossy", "ideal"), default="lossy")
    p = command("estimate", cmd_estimate, "Monte-Carlo maximum-likelihood estimation")
    p.add_argument("--theta", type=float, default=0.05, help="true phase")
    p.add_argument("--m", type=int, default=1000, help="shots per estimate")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--theta-min", type=float, default=0.0)
    p.add_argument("--theta-max", type=float, default=math.pi / 4)
    p.add_argument("--points", type=int, default=512)
    for name, func, text in (("sweep", cmd_sweep, "run a sweep spec"),
                             ("validate", cmd_validate, "check a sweep spec")):
        p = command(name, func, text, prep=False)
        p.add_argument("spec", type=Path, help="TOML or JSON sweep spec")
        if name == "sweep":
            p.add_argument("--workers", type=int, default=None)
            p.add_argument("--fail-fast", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.output.mkdir(parents=True, exist_ok=True)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", TruncationWarning)
            summary = args.func(args, args.output)
        notes = [str(w.message) for w in caught if issubclass(w.category, TruncationWarning)]
        if notes:
            summary["warnings"] = notes
    except SpecError as exc:
        _emit_error("invalid_spec", str(exc),
                    diagnostics=[d.to_dict() for d in exc.diagnostics if hasattr(d, "to_dict")])
        return EXIT_INVALID
    except FailFast as exc:
        _emit_error("numerical", str(exc), point=exc.point.manifest_entry())
        return EXIT_NUMERICAL
    except CavityMZIError as exc:
        kind = "invalid_input" if isinstance(exc, ValueError) and not _numerical(exc) else "numerical"
        _emit_error(kind, str(exc), type=type(exc).__name__)
        return EXIT_INVALID if kind == "invalid_input" else EXIT_NUMERICAL
    except (ValueError, TypeError, OSError, KeyError) as exc:
        _emit_error("invalid_input", str(exc), type=type(exc).__name__)
        return EXIT_INVALID
    print(json.dumps({"status": "ok", "command": args.command, **summary}, default=str))
    return EXIT_OK


def _numerical(exc) -> bool:
    from .exceptions import (EmptyPostSelectionError, ImpossibleOutcomeError, IntegrationError,
                             NonPhysicalStateError)
    return isinstance(exc, (EmptyPostSelectionError, ImpossibleOutcomeError, IntegrationError,
                            NonPhysicalStateError))


if __name__ == "__main__":
    sys.exit(main())
