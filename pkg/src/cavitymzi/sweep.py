"""Parameter sweeps producing the figure datasets.

A sweep spec names an experiment and its parameters.  Each parameter is a
scalar, a list, or a ``{min, max, points}`` range; the cartesian product over
the experiment's axes gives the grid points, which run independently (in a
process pool when more than one worker is allowed) and are written back in
grid order.  Times are in units of ``1/U0`` unless ``U0`` is set.
"""
from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import math
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import poisson

from . import __version__
from ._validation import MAX_DIMENSION
from .estimation import EstimationConfig, run_trials
from .exceptions import CavityMZIError, SpecError
from .fisher import cfi, optimize_phase_beta, qfi
from .fock import default_cutoff, truncation_tail_mass
from .interferometer import InterferometerInput, polar_slice
from .preparation import (EXTRACTION_MAX_DIMENSION, ExtractionParams, PrepParams,
                          extraction_series, prepare_ideal, prepare_lossy)
from .lindblad import IntegratorConfig
from .wigner import default_grid, PhaseGrid, wigner

__all__ = ["Diagnostic", "SweepSpec", "PointResult", "SweepResult", "EXPERIMENTS",
           "load_spec", "validate", "run", "max_workers", "WORKERS_ENV"]

WORKERS_ENV = "CAVITYMZI_MAX_WORKERS"
TAIL_LIMIT = 1e-10

PARAMETERS = ("alpha", "beta0", "phi_beta", "U0", "t", "kappa", "sigma", "kappa_T",
              "kappa_tilde", "tau", "theta", "N_slice", "cutoff", "seed", "m", "trials",
              "grid_points", "grid_extent", "preparation", "step_scale", "trace_tolerance")
# values allowed to be strings, with their accepted spellings
KEYWORDS = {"phi_beta": {"opt"}, "theta": {"opt"}, "preparation": {"lossy", "ideal"}}


@dataclass(frozen=True)
class Experiment:
    required: tuple
    axes: tuple
    columns: tuple
    defaults: dict = field(default_factory=dict)


_PREP_DEFAULTS = {"U0": 1.0, "kappa": 0.0, "phi_beta": 0.0}

EXPERIMENTS = {
    "qfi_vs_time": Experiment(
        ("alpha", "beta0", "t"), ("kappa", "phi_beta", "t"),
        ("kappa", "phi_beta_label", "phi_beta", "t", "U0t", "qfi", "snl", "success_probability"),
        _PREP_DEFAULTS),
    "fisher_vs_time": Experiment(
        ("alpha", "beta0", "t", "theta"), ("kappa", "phi_beta", "sigma", "theta", "t"),
        ("kappa", "phi_beta", "sigma", "theta_label", "theta", "t", "U0t", "cfi", "qfi", "snl"),
        {**_PREP_DEFAULTS, "sigma": 0.0}),
    "qfi_heatmap_alpha_time": Experiment(
        ("alpha", "t"), ("kappa", "alpha", "t"),
        ("kappa", "alpha", "n_alpha", "t", "U0t", "qfi", "snl"),
        {**_PREP_DEFAULTS, "beta0": None}),
    "photon_distribution": Experiment(
        ("alpha", "t"), ("kappa", "t"),
        ("kappa", "t", "U0t", "n", "p"), _PREP_DEFAULTS),
    "polar_slice": Experiment(
        ("alpha", "beta0", "t", "N_slice", "theta"), ("kappa", "t", "N_slice"),
        ("kappa", "t", "U0t", "N", "theta", "delta_n", "p"), _PREP_DEFAULTS),
    "wigner_gallery": Experiment(
        ("alpha", "t"), ("kappa", "t"),
        ("kappa", "t", "U0t", "re", "im", "w"),
        {**_PREP_DEFAULTS, "grid_points": 201, "grid_extent": None}),
    "detector_noise": Experiment(
        ("alpha", "beta0", "t", "sigma", "theta"), ("phi_beta", "theta", "sigma", "t"),
        ("phi_beta", "theta_label", "theta", "sigma", "t", "U0t", "cfi", "snl"),
        _PREP_DEFAULTS),
    "extraction_heatmap": Experiment(
        ("alpha", "beta0", "t", "kappa_T", "tau"), ("t",),
        ("t", "U0t", "tau", "kappa_T_tau", "qfi", "snl", "extracted_photons"),
        {**_PREP_DEFAULTS, "kappa_tilde": 0.0, "preparation": "lossy"}),
    "estimate": Experiment(
        ("alpha", "beta0", "t", "theta", "m", "trials", "seed"), ("theta", "sigma"),
        ("theta_true", "sigma", "trial", "estimate"),
        {**_PREP_DEFAULTS, "sigma": 0.0, "theta_min": 0.0, "theta_max": math.pi / 4}),
}

# parameters that may hold several values without being an axis (series inside one point)
_SERIES = {"extraction_heatmap": ("tau",), "polar_slice": ("theta",), "fisher_vs_time": (),
           "estimate": ()}
_INTEGER = ("N_slice", "cutoff", "seed", "m", "trials", "grid_points")
_OPT_THETA_POINTS = 64


@dataclass(frozen=True)
class Diagnostic:
    level: str          # "error" or "warning"
    code: str
    message: str
    parameter: str | None = None

    def to_dict(self):
        return {"level": self.level, "code": self.code, "message": self.message,
                "parameter": self.parameter}


@dataclass(frozen=True)
class SweepSpec:
    experiment: str
    parameters: dict
    output_path: str = "."

    @classmethod
    def from_dict(cls, payload: dict) -> "SweepSpec":
        if not isinstance(payload, dict) or "experiment" not in payload:
            raise SpecError([Diagnostic("error", "missing_experiment",
                                        "missing parameter: experiment")])
        params = payload.get("parameters", {})
        if not isinstance(params, dict):
            raise SpecError([Diagnostic("error", "bad_parameters", "parameters must be a table")])
        return cls(str(payload["experiment"]), dict(params), str(payload.get("output_path", ".")))

    def to_dict(self):
        return {"experiment": self.experiment, "parameters": self.parameters,
                "output_path": self.output_path}

    def canonical_json(self) -> str:
        body = {"experiment": self.experiment, "parameters": self.parameters}
        return json.dumps(body, sort_keys=True, separators=(",", ":"))

    def spec_hash(self) -> str:
        """SHA-256 of the canonical experiment and parameters (output path excluded)."""
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def load_spec(path) -> SweepSpec:
    """Read a TOML or JSON spec file."""
    path = Path(path)
    text = path.read_bytes()
    if path.suffix.lower() == ".json":
        payload = json.loads(text)
    else:
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        payload = tomllib.loads(text.decode())
    return SweepSpec.from_dict(payload)


def _is_range(value) -> bool:
    return isinstance(value, dict)


def expand(name, value) -> list:
    """Values of one parameter as a list."""
    if _is_range(value):
        lo, hi, pts = float(value["min"]), float(value["max"]), int(value["points"])
        vals = np.linspace(lo, hi, pts) if pts > 1 else np.array([lo])
        vals = [float(v) for v in vals]
    elif isinstance(value, (list, tuple)):
        vals = list(value)
    else:
        vals = [value]
    if name in _INTEGER:
        vals = [int(round(v)) if isinstance(v, (int, float)) and not isinstance(v, bool)
                and math.isfinite(v) else v for v in vals]
    return vals


def _check_value(name, value, diags):
    if isinstance(value, str):
        if value not in KEYWORDS.get(name, ()):
            diags.append(Diagnostic("error", "bad_value", f"{name}: unexpected string {value!r}",
                                    name))
        return
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        diags.append(Diagnostic("error", "bad_value", f"{name}: expected a finite number", name))


def validate(spec: SweepSpec) -> list:
    """Static checks; returns a list of :class:`Diagnostic` (empty when the spec is clean)."""
    diags = []
    exp = EXPERIMENTS.get(spec.experiment)
    if exp is None:
        return [Diagnostic("error", "unknown_experiment",
                           f"unknown experiment {spec.experiment!r}; expected one of "
                           + ", ".join(sorted(EXPERIMENTS)), "experiment")]
    params = spec.parameters
    for name in sorted(params):
        if name not in PARAMETERS and name not in exp.defaults:
            diags.append(Diagnostic("error", "unknown_parameter", f"unknown parameter {name!r}",
                                    name))
    for name in exp.required:
        if name not in params:
            diags.append(Diagnostic("error", "missing_parameter",
                                    f"missing parameter: {name}", name))
    expanded = {}
    for name, value in params.items():
        if _is_range(value):
            missing = {"min", "max", "points"} - set(value)
            if missing:
                diags.append(Diagnostic("error", "bad_range", f"{name}: range lacks "
                                        + ", ".join(sorted(missing)), name))
                continue
            try:
                lo, hi, pts = float(value["min"]), float(value["max"]), int(value["points"])
            except (TypeError, ValueError):
                diags.append(Diagnostic("error", "bad_range", f"{name}: non-numeric range", name))
                continue
            if pts < 1:
                diags.append(Diagnostic("error", "bad_range", f"{name}: points must be >= 1", name))
                continue
            if lo > hi:
                diags.append(Diagnostic("error", "bad_range", f"{name}: min exceeds max", name))
                continue
        vals = expand(name, value)
        if not vals:
            diags.append(Diagnostic("error", "bad_value", f"{name}: empty value list", name))
        for v in vals:
            _check_value(name, v, diags)
        expanded[name] = vals
    if any(d.level == "error" for d in diags):
        return diags

    def numeric(name):
        return [float(v) for v in expanded.get(name, []) if not isinstance(v, str)]

    for name in ("t", "kappa", "sigma", "tau", "kappa_tilde", "m", "trials", "grid_points"):
        if any(v < 0 for v in numeric(name)):
            diags.append(Diagnostic("error", "bad_value", f"{name} must be >= 0", name))
    for name in ("m", "trials"):
        if any(v < 1 for v in numeric(name)):
            diags.append(Diagnostic("error", "bad_value", f"{name} must be >= 1", name))
    for name, vals in expanded.items():
        if len(vals) > 1 and name not in exp.axes and name not in _SERIES.get(spec.experiment, ()):
            diags.append(Diagnostic("error", "not_an_axis",
                                    f"{name} cannot take several values in {spec.experiment}",
                                    name))

    alphas = [abs(a) for a in numeric("alpha")]
    betas = [abs(b) for b in numeric("beta0")]
    cutoffs = numeric("cutoff")
    if cutoffs and alphas:
        n_max, nbar = int(min(cutoffs)), max(alphas) ** 2
        tail = float(poisson.sf(n_max, nbar))
        if tail >= TAIL_LIMIT:
            diags.append(Diagnostic("warning", "cutoff_tail",
                                    f"predicted tail mass above 1e-10 (cutoff {n_max}, "
                                    f"|alpha|^2 = {nbar:g}, tail {tail:.3g})", "cutoff"))
    if alphas:
        n_a = int(max(cutoffs)) if cutoffs else default_cutoff(max(alphas) ** 2).n_max
        n_b = max([n_a] + [default_cutoff(b ** 2).n_max for b in betas])
        if (n_a + 1) * (n_b + 1) > MAX_DIMENSION:
            diags.append(Diagnostic("error", "dimension",
                                    f"two-mode dimension {(n_a + 1) * (n_b + 1)} exceeds the "
                                    f"guard {MAX_DIMENSION}", "alpha"))
        if spec.experiment == "extraction_heatmap":
            dim = (n_a + 1) * (n_a + 2) // 2
            if dim > EXTRACTION_MAX_DIMENSION:
                diags.append(Diagnostic("error", "dimension",
                                        f"extraction basis dimension {dim} exceeds the guard "
                                        f"{EXTRACTION_MAX_DIMENSION}", "alpha"))
    if spec.experiment == "estimate":
        lo = float(params.get("theta_min", exp.defaults["theta_min"]))
        hi = float(params.get("theta_max", exp.defaults["theta_max"]))
        if any(not lo <= th <= hi for th in numeric("theta")):
            diags.append(Diagnostic("error", "bad_value",
                                    "theta lies outside the estimation window", "theta"))
    return diags


def grid_points(spec: SweepSpec) -> list:
    """Parameter dicts for every grid point, in canonical (row-major over axes) order."""
    exp = EXPERIMENTS[spec.experiment]
    base = {k: v for k, v in exp.defaults.items()}
    values = {name: expand(name, value) for name, value in spec.parameters.items()}
    for name, vals in values.items():
        if name not in exp.axes:
            base[name] = vals if name in _SERIES.get(spec.experiment, ()) else vals[0]
    axes = [(name, values.get(name, [base.get(name)])) for name in exp.axes]
    points = []
    for combo in itertools.product(*(vals for _, vals in axes)):
        p = dict(base)
        p.update({name: v for (name, _), v in zip(axes, combo)})
        points.append(p)
    return points


# ---------------------------------------------------------------- point kernels

def _integrator(p):
    kw = {}
    if p.get("step_scale") is not None:
        kw["step_scale"] = float(p["step_scale"])
    if p.get("trace_tolerance") is not None:
        kw["trace_tolerance"] = float(p["trace_tolerance"])
    return IntegratorConfig(**kw)


def _prepare(p, diag, force_lossy=False):
    params = PrepParams(float(p["alpha"]), float(p["U0"]), float(p["t"]), float(p["kappa"]),
                        p.get("cutoff"))
    lossy = params.kappa > 0 or force_lossy
    prep = prepare_lossy(params, _integrator(p)) if lossy else prepare_ideal(params)
    diag["success_probability"] = prep.success_probability
    diag["tail_mass"] = truncation_tail_mass(prep.light)
    diag["trace_drift"] = prep.diagnostics.get("trace_drift", 0.0)
    return params, prep


def _snl(p, beta0=None):
    """Reference ``n_alpha + n_beta`` from the coherent amplitudes (the gray region boundary)."""
    b = float(p["beta0"]) if beta0 is None else beta0
    return float(p["alpha"]) ** 2 + b ** 2


def _beta(p, phi):
    return float(p["beta0"]) * complex(math.cos(phi), math.sin(phi))


def _phase_rows(port_a, p):
    """``(label, phi)`` for the requested beam phase; ``opt`` runs the grid search."""
    if p["phi_beta"] == "opt":
        best = optimize_phase_beta(port_a, float(p["beta0"]))
        return "opt", best.phi_beta
    return "fixed", float(p["phi_beta"])


def _theta_value(inp, p, sigma):
    if p["theta"] == "opt":
        grid = np.pi * np.arange(_OPT_THETA_POINTS) / _OPT_THETA_POINTS
        vals = [cfi(inp, th, sigma) for th in grid]
        k = int(np.argmax(vals))
        return "opt", float(grid[k]), float(vals[k])
    th = float(p["theta"])
    return "fixed", th, cfi(inp, th, sigma)


def _qfi_vs_time(p, diag):
    params, prep = _prepare(p, diag)
    label, phi = _phase_rows(prep.light, p)
    inp = InterferometerInput(prep.light, _beta(p, phi))
    return [(params.kappa, label, phi, params.t, params.phase, qfi(inp), _snl(p),
             prep.success_probability)]


def _fisher_vs_time(p, diag):
    params, prep = _prepare(p, diag)
    inp = InterferometerInput(prep.light, _beta(p, float(p["phi_beta"])))
    sigma = float(p["sigma"])
    label, th, value = _theta_value(inp, p, sigma)
    return [(params.kappa, float(p["phi_beta"]), sigma, label, th, params.t, params.phase, value,
             qfi(inp), _snl(p))]


def _heatmap(p, diag):
    params, prep = _prepare(p, diag)
    beta0 = p.get("beta0")
    beta0 = float(p["alpha"]) if beta0 is None else float(beta0)
    inp = InterferometerInput(prep.light, beta0 * complex(math.cos(float(p["phi_beta"])),
                                                          math.sin(float(p["phi_beta"]))))
    return [(params.kappa, float(p["alpha"]), params.n_alpha, params.t, params.phase, qfi(inp),
             _snl(p, beta0))]


def _photon_distribution(p, diag):
    params, prep = _prepare(p, diag)
    pn = prep.light.photon_distribution()
    return [(params.kappa, params.t, params.phase, n, float(v)) for n, v in enumerate(pn)]


def _polar_slice(p, diag):
    params, prep = _prepare(p, diag)
    inp = InterferometerInput(prep.light, _beta(p, float(p["phi_beta"])))
    thetas = p["theta"] if isinstance(p["theta"], list) else [p["theta"]]
    table = polar_slice(inp, int(p["N_slice"]), [float(x) for x in thetas])
    return [(params.kappa, params.t, params.phase, table.total, th, dn, pr)
            for th, dn, pr in table.rows()]


def _wigner_gallery(p, diag):
    params, prep = _prepare(p, diag)
    npts = int(p["grid_points"])
    if p.get("grid_extent") is None:
        grid = default_grid(params.n_alpha, npts)
    else:
        e = float(p["grid_extent"])
        grid = PhaseGrid(-e, e, -e, e, npts)
    wmap = wigner(prep.light, grid)
    diag["wigner_integral"] = wmap.integral()
    return [(params.kappa, params.t, params.phase, x, y, w) for x, y, w in wmap.rows()]


def _detector_noise(p, diag):
    params, prep = _prepare(p, diag)
    phi = float(p["phi_beta"])
    inp = InterferometerInput(prep.light, _beta(p, phi))
    sigma = float(p["sigma"])
    label, th, value = _theta_value(inp, p, sigma)
    return [(phi, label, th, sigma, params.t, params.phase, value, _snl(p))]


def _extraction_heatmap(p, diag):
    params, prep = _prepare(p, diag, force_lossy=p["preparation"] == "lossy")
    taus = p["tau"] if isinstance(p["tau"], list) else [p["tau"]]
    taus = sorted(float(x) for x in taus)
    ext = ExtractionParams(float(p["kappa_T"]), 0.0, float(p["kappa_tilde"]))
    snaps = extraction_series(prep, ext, taus, _integrator(p))
    beta = _beta(p, float(p["phi_beta"]))
    rows = []
    for s in snaps:
        inp = InterferometerInput(s.state, beta)
        rows.append((params.t, params.phase, s.tau, ext.kappa_T * s.tau, qfi(inp),
                     _snl(p), s.state.mean_photon_number()))
    diag["trace_drift"] = max(diag["trace_drift"], snaps[-1].diagnostics["trace_drift"])
    return rows


def _estimate(p, diag):
    params, prep = _prepare(p, diag)
    inp = InterferometerInput(prep.light, _beta(p, float(p["phi_beta"])))
    config = EstimationConfig(float(p["theta"]), int(p["m"]), int(p["trials"]),
                              float(p["theta_min"]), float(p["theta_max"]),
                              seed=int(p["seed"]), sigma=float(p["sigma"]))
    report = run_trials(config, inp)
    diag["report"] = report.to_dict(include_estimates=False)
    return [(config.theta_true, config.sigma, k, float(x)) for k, x in enumerate(report.estimates)]


_KERNELS = {
    "qfi_vs_time": _qfi_vs_time,
    "fisher_vs_time": _fisher_vs_time,
    "qfi_heatmap_alpha_time": _heatmap,
    "photon_distribution": _photon_distribution,
    "polar_slice": _polar_slice,
    "wigner_gallery": _wigner_gallery,
    "detector_noise": _detector_noise,
    "extraction_heatmap": _extraction_heatmap,
    "estimate": _estimate,
}


@dataclass
class PointResult:
    index: int
    params: dict
    rows: list
    diagnostics: dict
    error: dict | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def manifest_entry(self):
        entry = {"index": self.index, "params": _jsonable(self.params),
                 "status": "ok" if self.ok else "failed",
                 "diagnostics": _jsonable(self.diagnostics)}
        if self.error:
            entry["error"] = self.error
        return entry


def _run_point(args):
    experiment, index, params = args
    diag = {}
    try:
        rows = _KERNELS[experiment](params, diag)
        return PointResult(index, params, rows, diag)
    except (CavityMZIError, ArithmeticError, ValueError) as exc:
        err = {"type": type(exc).__name__, "message": str(exc),
               "numerical": isinstance(exc, CavityMZIError)}
        return PointResult(index, params, [], diag, err)
    except Exception as exc:  # keep the sweep alive; the trace lands in the manifest
        err = {"type": type(exc).__name__, "message": str(exc),
               "traceback": traceback.format_exc(limit=5), "numerical": False}
        return PointResult(index, params, [], diag, err)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def max_workers(requested: int | None = None) -> int:
    """Worker count: ``requested`` or the CPU count, capped by ``$CAVITYMZI_MAX_WORKERS``."""
    n = requested or os.cpu_count() or 1
    cap = os.environ.get(WORKERS_ENV)
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            pass
    return max(1, n)


def _format(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


@dataclass
class SweepResult:
    spec: SweepSpec
    points: list
    files: dict
    manifest: dict

    @property
    def failures(self) -> list:
        return [p for p in self.points if not p.ok]


class FailFast(CavityMZIError):
    def __init__(self, point: PointResult):
        self.point = point
        super().__init__(f"grid point {point.index} failed: {point.error['type']}: "
                         f"{point.error['message']}")


def run(spec: SweepSpec, output_dir=None, *, workers: int | None = None,
        fail_fast: bool = False) -> SweepResult:
    """Validate, execute and write ``<experiment>.csv`` plus ``manifest.json``.

    Data files depend only on the spec; the manifest additionally carries
    timing.  Raises :class:`SpecError` on invalid specs and, with
    ``fail_fast``, :class:`FailFast` at the first failing point.
    """
    diags = validate(spec)
    if any(d.level == "error" for d in diags):
        raise SpecError(diags)
    out = Path(output_dir if output_dir is not None else spec.output_path)
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    tasks = [(spec.experiment, i, p) for i, p in enumerate(grid_points(spec))]
    n_workers = min(max_workers(workers), len(tasks))
    results = []
    if n_workers <= 1:
        for task in tasks:
            res = _run_point(task)
            results.append(res)
            if fail_fast and not res.ok:
                raise FailFast(res)
    else:
        with ProcessPoolExecutor(n_workers) as pool:
            for res in pool.map(_run_point, tasks):
                results.append(res)
                if fail_fast and not res.ok:
                    pool.shutdown(wait=False, cancel_futures=True)
                    raise FailFast(res)

    exp = EXPERIMENTS[spec.experiment]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(exp.columns)
    for res in results:
        for row in res.rows:
            writer.writerow([_format(v) for v in row])
    data_path = out / f"{spec.experiment}.csv"
    data_path.write_text(buf.getvalue())
    files = {"data": data_path.name}
    if spec.experiment == "estimate":
        reports = [r.diagnostics.get("report") for r in results if r.ok]
        (out / "report.json").write_text(json.dumps(_jsonable(reports), indent=2, sort_keys=True))
        files["report"] = "report.json"

    manifest = {
        "spec_hash": spec.spec_hash(),
        "spec": _jsonable(spec.to_dict()),
        "tool": "cavitymzi",
        "version": __version__,
        "started": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(started)),
        "wall_clock_seconds": time.time() - started,
        "workers": n_workers,
        "warnings": [d.to_dict() for d in diags],
        "files": files,
        "n_points": len(results),
        "n_failed": sum(not r.ok for r in results),
        "points": [r.manifest_entry() for r in results],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    files["manifest"] = "manifest.json"
    return SweepResult(spec, results, files, manifest)
