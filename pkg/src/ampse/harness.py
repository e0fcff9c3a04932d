"""Experiment orchestration: JSON configs, seeded replicate ensembles, reports."""

from __future__ import annotations

import csv
import io
import json
import math
import platform
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .denoisers import Linear, Schedule
from .model import NoiseSpec, Prior, random_instance, sample_symmetric_matrix
from .observables import (DEFAULT_DECOUPLING_FACTORS, decoupling_check, empirical_functional,
                          parse_observable, se_prediction)
from .quadrature import QuadratureConfig, QuadraturePrecisionWarning
from .recursions import (AmpState, DivergedIteration, MP_EDGE_CAP, ResourceLimit, SymmetricState,
                         amp_step, check_edge_cap, default_m1, ist_step, mp_vs_amp_deviation,
                         symmetric_step)
from .state_evolution import SeSpec, se_trajectory, symmetric_trajectory

MODES = ("se", "amp", "ist", "ensemble", "symmetric", "mp-compare", "decouple")
CSV_HEADER = ("t", "observable", "empirical_mean", "empirical_stderr", "se_prediction",
              "abs_err", "z_score")

# finite-size calibration, echoed into every report
Z_SCORE_MAX = 3.0
RELATIVE_FLOOR = 0.02


class ConfigError(ValueError):
    pass


class RunError(RuntimeError):
    pass


# -- config -------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    mode: str
    n: int
    N: int
    sigma2: float = 0.0
    prior: dict = field(default_factory=lambda: {"kind": "three_point", "epsilon": 0.1})
    denoiser: dict = field(default_factory=lambda: {"kind": "soft_threshold", "policy": "se",
                                                    "alpha": 1.5})
    T: int = 10
    R: int = 1
    seed: int = 0
    observables: tuple = ("mse",)
    output_path: str | None = None
    output_format: str = "csv"
    quad_nodes: int = 61
    mc_samples: int = 1_000_000
    mc_seed: int = 0
    workers: int = 1
    algorithm: str = "amp"
    se_tolerance: float = 1e-10
    tau1_2: float = 1.0
    ell: int = 2
    tuples: int = 100_000
    edge_cap: int = MP_EDGE_CAP

    @property
    def delta(self) -> float:
        return self.n / self.N

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "model": {"n": self.n, "N": self.N, "sigma2": self.sigma2},
            "prior": dict(self.prior),
            "denoiser": dict(self.denoiser),
            "T": self.T,
            "R": self.R,
            "seed": self.seed,
            "observables": list(self.observables),
            "output": {"path": self.output_path, "format": self.output_format},
            "quadrature": {"nodes": self.quad_nodes, "mc_samples": self.mc_samples,
                           "mc_seed": self.mc_seed},
            "workers": self.workers,
            "algorithm": self.algorithm,
            "se_tolerance": self.se_tolerance,
            "symmetric": {"tau1_2": self.tau1_2},
            "decouple": {"ell": self.ell, "tuples": self.tuples},
            "mp": {"edge_cap": self.edge_cap},
        }

    def serialize(self) -> bytes:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True).encode()

    def build_prior(self) -> Prior:
        return prior_from_dict(self.prior)

    def build_schedule(self) -> Schedule:
        return schedule_from_dict(self.denoiser, self.build_prior())

    def build_quadrature(self) -> QuadratureConfig:
        return QuadratureConfig(self.quad_nodes, self.mc_samples, self.mc_seed)


# (key, type, required) per section; nested sections are dicts of the same
_NUM = (int, float)
_SCHEMA = {
    "": {"mode": (str, True), "model": (dict, True), "prior": (dict, False),
         "denoiser": (dict, False), "T": (int, False), "R": (int, False), "seed": (int, False),
         "observables": (list, False), "output": (dict, False), "quadrature": (dict, False),
         "workers": (int, False), "algorithm": (str, False), "se_tolerance": (_NUM, False),
         "symmetric": (dict, False), "decouple": (dict, False), "mp": (dict, False)},
    "model": {"n": (int, True), "N": (int, True), "sigma2": (_NUM, False)},
    "prior": {"kind": (str, True), "epsilon": (_NUM, False), "amplitude": (_NUM, False),
              "atoms": (list, False), "variance": (_NUM, False), "k": (int, False)},
    "denoiser": {"kind": (str, True), "policy": (str, False), "values": (list, False),
                 "alpha": (_NUM, False)},
    "output": {"path": ((str, type(None)), False), "format": (str, False)},
    "quadrature": {"nodes": (int, False), "mc_samples": (int, False), "mc_seed": (int, False)},
    "symmetric": {"tau1_2": (_NUM, False)},
    "decouple": {"ell": (int, False), "tuples": (int, False)},
    "mp": {"edge_cap": (int, False)},
}


def _validate(section: str, obj: dict):
    schema = _SCHEMA[section]
    where = f"{section}." if section else ""
    for key in obj:
        if key not in schema:
            raise ConfigError(f"unknown key '{where}{key}'")
    for key, (typ, required) in schema.items():
        if key not in obj:
            if required:
                raise ConfigError(f"missing required field '{where}{key}'")
            continue
        val = obj[key]
        if isinstance(val, bool) or not isinstance(val, typ):
            names = typ.__name__ if isinstance(typ, type) else "/".join(t.__name__ for t in typ)
            raise ConfigError(f"field '{where}{key}' must be {names}, got {type(val).__name__}")
        if isinstance(val, dict) and key in _SCHEMA and not section:
            _validate(key, val)


def parse_config(text) -> ExperimentConfig:
    """Parse and validate a JSON experiment config; defaults are filled in."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    _validate("", raw)
    model = raw["model"]
    out = raw.get("output", {})
    quad = raw.get("quadrature", {})
    kw = dict(mode=raw["mode"], n=model["n"], N=model["N"],
              sigma2=float(model.get("sigma2", 0.0)))
    for key in ("prior", "denoiser"):
        if key in raw:
            kw[key] = raw[key]
    for key in ("T", "R", "seed", "workers", "algorithm"):
        if key in raw:
            kw[key] = raw[key]
    if "observables" in raw:
        kw["observables"] = tuple(raw["observables"])
    if "se_tolerance" in raw:
        kw["se_tolerance"] = float(raw["se_tolerance"])
    if "path" in out:
        kw["output_path"] = out["path"]
    if "format" in out:
        kw["output_format"] = out["format"]
    for src, dst in (("nodes", "quad_nodes"), ("mc_samples", "mc_samples"),
                     ("mc_seed", "mc_seed")):
        if src in quad:
            kw[dst] = quad[src]
    if "tau1_2" in raw.get("symmetric", {}):
        kw["tau1_2"] = float(raw["symmetric"]["tau1_2"])
    kw.update(raw.get("decouple", {}))
    if "edge_cap" in raw.get("mp", {}):
        kw["edge_cap"] = raw["mp"]["edge_cap"]
    return check_config(ExperimentConfig(**kw))


def check_config(cfg: ExperimentConfig) -> ExperimentConfig:
    if cfg.mode not in MODES:
        raise ConfigError(f"field 'mode' must be one of {', '.join(MODES)}; got {cfg.mode!r}")
    for key in ("n", "N", "T", "R", "workers"):
        if getattr(cfg, key) < 1:
            raise ConfigError(f"field '{key}' must be >= 1, got {getattr(cfg, key)}")
    if cfg.sigma2 < 0:
        raise ConfigError("field 'model.sigma2' must be >= 0")
    if cfg.output_format not in ("csv", "json"):
        raise ConfigError(f"field 'output.format' must be csv or json, got {cfg.output_format!r}")
    if cfg.algorithm not in ("amp", "ist"):
        raise ConfigError(f"field 'algorithm' must be amp or ist, got {cfg.algorithm!r}")
    if cfg.ell < 2:
        raise ConfigError("field 'decouple.ell' must be >= 2")
    try:
        for name in cfg.observables:
            parse_observable(name)
        cfg.build_schedule()
        cfg.build_quadrature()
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e)) from None
    if cfg.mode == "symmetric" and cfg.denoiser.get("policy", "se") != "fixed":
        raise ConfigError("symmetric mode needs a time-independent f: denoiser.policy 'fixed'")
    return cfg


def prior_from_dict(d: dict) -> Prior:
    kind = d["kind"]
    k = d.get("k", 2)
    if kind == "three_point":
        return Prior.three_point(d.get("epsilon", 0.1), d.get("amplitude", 1.0), k=k)
    if kind == "discrete":
        return Prior.discrete([tuple(a) for a in d.get("atoms", [])], k=k)
    if kind == "gaussian":
        return Prior.gaussian(d.get("variance", 1.0), k=k)
    if kind == "antipodal":
        return Prior.antipodal(k=k)
    raise ConfigError(f"unknown prior kind {kind!r}")


def schedule_from_dict(d: dict, prior: Prior) -> Schedule:
    return Schedule(d["kind"], d.get("policy", "se"), tuple(d.get("values", ())),
                    float(d.get("alpha", 1.0)), prior)


# -- report -------------------------------------------------------------------

@dataclass(frozen=True)
class ReportRow:
    t: int
    observable: str
    empirical_mean: float
    empirical_stderr: float
    se_prediction: float
    abs_err: float
    z_score: float


@dataclass
class EnsembleReport:
    rows: list
    metadata: dict = field(default_factory=dict)


def make_row(t, name, values, prediction) -> ReportRow:
    """Aggregate per-replicate values; stderr is sample std / sqrt(R), 0 for R=1."""
    vals = np.asarray(values, dtype=float)
    if vals.size == 0:
        m = s = math.nan
    else:
        m = float(np.mean(vals))
        s = float(np.std(vals, ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else 0.0
    err = abs(m - prediction) if not math.isnan(prediction) else math.nan
    z = err / s if s > 0 else math.nan
    return ReportRow(int(t), name, m, s, float(prediction), err, z)


def _fmt(v):
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def emit_report(report: EnsembleReport, fmt: str = "csv") -> bytes:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in report.rows:
            w.writerow([_fmt(getattr(row, k)) for k in CSV_HEADER])
        return buf.getvalue().encode()
    if fmt == "json":
        doc = {"rows": [asdict(r) for r in report.rows], "metadata": report.metadata}
        return json.dumps(doc, indent=2).encode()
    raise ValueError(f"unknown report format {fmt!r}")


def parse_report(data: bytes, fmt: str = "json") -> EnsembleReport:
    if fmt == "json":
        doc = json.loads(data)
        return EnsembleReport([ReportRow(**r) for r in doc["rows"]], doc.get("metadata", {}))
    rows = []
    for rec in csv.DictReader(io.StringIO(data.decode())):
        rows.append(ReportRow(int(rec["t"]), rec["observable"],
                              *(float(rec[k]) for k in CSV_HEADER[2:])))
    return EnsembleReport(rows)


def write_report(report: EnsembleReport, path: str, fmt: str = "csv"):
    data = emit_report(report, fmt)
    try:
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as e:
        raise RunError(f"cannot write report to {path}: {e}") from None
    return data


# -- runs ---------------------------------------------------------------------

def _map_replicates(cfg: ExperimentConfig, fn):
    """Run fn(r) for every replicate, results in replicate order."""
    if cfg.workers == 1:
        return [fn(r) for r in range(cfg.R)]
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        return list(pool.map(fn, range(cfg.R)))


def _se_spec(cfg: ExperimentConfig) -> SeSpec:
    return SeSpec(cfg.build_prior(), cfg.sigma2, cfg.delta, cfg.build_schedule(),
                  cfg.build_quadrature())


def _metadata(cfg: ExperimentConfig, **extra) -> dict:
    meta = {
        "config": cfg.to_dict(),
        "tolerances": {"z_score_max": Z_SCORE_MAX, "relative_floor": RELATIVE_FLOOR,
                       "se_fixed_point_rtol": cfg.se_tolerance},
        "versions": {"ampse": __version__, "numpy": np.__version__,
                     "python": platform.python_version()},
        "replicate_seeds": [[cfg.seed, r] for r in range(cfg.R)],
        "denoiser_schedule": cfg.build_schedule().describe(),
    }
    if cfg.R == 1:
        meta["single_replicate"] = "empirical_stderr is 0 and z_score NaN with R=1"
    meta.update(extra)
    return meta


def _collect(per_rep, cfg, names, predictions, row_t):
    """per_rep[r] = (values[t_index][name], diverged_at or None)."""
    rows, counts = [], {}
    for i, t in enumerate(row_t):
        for name in names:
            vals = [res[i][name] for res, _ in per_rep if i < len(res)]
            counts[f"{t}:{name}"] = len(vals)
            rows.append(make_row(t, name, vals, predictions[i][name]))
    diverged = {str(r): d for r, (_, d) in enumerate(per_rep) if d is not None}
    if len(diverged) == cfg.R:
        raise RunError(f"all {cfg.R} replicates diverged (iterations {sorted(diverged.values())})")
    flagged = [t for t in row_t if any(len(res) < t for res, d in per_rep if d is not None)]
    return rows, {"diverged_replicates": diverged, "rows_missing_replicates": flagged,
                  "row_counts": counts}


def _run_se(cfg):
    spec = _se_spec(cfg)
    traj = se_trajectory(spec, cfg.T, cfg.se_tolerance)
    obs = [parse_observable(o) for o in cfg.observables]
    rows = []
    for t in range(1, cfg.T + 1):
        tau2 = traj.tau2_at(t - 1)
        eta = traj.denoiser(t - 1)
        for o in obs:
            pred = se_prediction(o, math.sqrt(tau2), spec.prior, eta, spec.quad)
            rows.append(ReportRow(t, o.name, math.nan, math.nan, pred, math.nan, math.nan))
    return EnsembleReport(rows, _metadata(cfg, state_evolution=traj.metadata()))


def _run_amp(cfg, step):
    spec = _se_spec(cfg)
    traj = se_trajectory(spec, cfg.T, cfg.se_tolerance)
    obs = [parse_observable(o) for o in cfg.observables]
    prior, noise = spec.prior, NoiseSpec.gaussian(cfg.sigma2)
    preds = [{o.name: se_prediction(o, math.sqrt(traj.tau2_at(t)), prior, traj.denoiser(t),
                                    spec.quad) for o in obs} for t in range(cfg.T)]

    def replicate(r):
        inst = random_instance(cfg.n, cfg.N, prior, noise, cfg.seed, r)
        res = []
        try:
            for state in _iterate(inst, traj.denoiser, cfg.T, step):
                res.append({o.name: empirical_functional(state.x, inst.x0, o) for o in obs})
        except DivergedIteration as e:
            return res, e.t
        return res, None

    per_rep = _map_replicates(cfg, replicate)
    rows, extra = _collect(per_rep, cfg, [o.name for o in obs], preds, range(1, cfg.T + 1))
    return EnsembleReport(rows, _metadata(cfg, state_evolution=traj.metadata(),
                                          algorithm=step.__name__, **extra))


def _iterate(inst, denoiser_at, T, step):
    state = AmpState.initial(inst)
    for t in range(T):
        state = step(state, inst, denoiser_at(t))
        yield state


def _run_symmetric(cfg):
    quad = cfg.build_quadrature()
    f = cfg.build_schedule().at(0)
    traj = symmetric_trajectory(cfg.tau1_2, f, cfg.T, tol=0.0, quad=quad)
    obs = [parse_observable(o) for o in cfg.observables]
    zero = Prior.discrete([(0.0, 1.0)])
    ident = Linear(1.0)
    # h^{t+1} ~ tau_t Z: psi evaluated at (h, 0)
    preds = [{o.name: se_prediction(o, math.sqrt(traj.tau2_at(t)), zero, ident, quad)
              for o in obs} for t in range(1, cfg.T + 1)]

    def replicate(r):
        G = sample_symmetric_matrix(cfg.N, cfg.seed, r)
        state = SymmetricState.initial(G, default_m1(cfg.N, cfg.tau1_2))
        res = []
        try:
            for _ in range(cfg.T):
                state = symmetric_step(state, f)
                res.append({o.name: empirical_functional(state.h, np.zeros(cfg.N), o)
                            for o in obs})
        except DivergedIteration as e:
            return res, e.t
        return res, None

    per_rep = _map_replicates(cfg, replicate)
    rows, extra = _collect(per_rep, cfg, [o.name for o in obs], preds, range(1, cfg.T + 1))
    return EnsembleReport(rows, _metadata(cfg, state_evolution=traj.metadata(),
                                          row_index="t: h^{t+1} against tau_t", **extra))


def _run_mp_compare(cfg):
    try:
        check_edge_cap(cfg.n, cfg.N, cfg.edge_cap)
    except ResourceLimit as e:
        raise RunError(f"mp-compare refused: {e}") from None
    spec = _se_spec(cfg)
    traj = se_trajectory(spec, cfg.T, cfg.se_tolerance)
    noise = NoiseSpec.gaussian(cfg.sigma2)
    name = "mp_amp_max_dev"

    def replicate(r):
        inst = random_instance(cfg.n, cfg.N, spec.prior, noise, cfg.seed, r)
        try:
            devs = mp_vs_amp_deviation(inst, traj.denoiser, cfg.T, cfg.edge_cap)
        except DivergedIteration as e:
            return [], e.t
        return [{name: d} for d in devs], None

    per_rep = _map_replicates(cfg, replicate)
    preds = [{name: 0.0}] * cfg.T
    rows, extra = _collect(per_rep, cfg, [name], preds, range(1, cfg.T + 1))
    return EnsembleReport(rows, _metadata(cfg, state_evolution=traj.metadata(), **extra))


def _run_decouple(cfg):
    spec = _se_spec(cfg)
    traj = se_trajectory(spec, cfg.T, cfg.se_tolerance)
    noise = NoiseSpec.gaussian(cfg.sigma2)
    factors = list(DEFAULT_DECOUPLING_FACTORS)
    factors = [factors[i % len(factors)] for i in range(cfg.ell)]
    preds = []
    for t in range(cfg.T):
        tau = math.sqrt(traj.tau2_at(t))
        p = 1.0
        for fac in factors:
            p *= se_prediction(fac, tau, spec.prior, traj.denoiser(t), spec.quad)
        preds.append({"decoupling_joint": p, "decoupling_residual": 0.0})

    def replicate(r):
        inst = random_instance(cfg.n, cfg.N, spec.prior, noise, cfg.seed, r)
        res = []
        try:
            for t, state in enumerate(_iterate(inst, traj.denoiser, cfg.T, amp_step)):
                d = decoupling_check(state.x, inst.x0, cfg.ell, factors, cfg.tuples,
                                     cfg.seed, r * 1_000_003 + t)
                res.append({"decoupling_joint": d.joint, "decoupling_residual": d.residual})
        except DivergedIteration as e:
            return res, e.t
        return res, None

    per_rep = _map_replicates(cfg, replicate)
    rows, extra = _collect(per_rep, cfg, ["decoupling_joint", "decoupling_residual"], preds,
                           range(1, cfg.T + 1))
    return EnsembleReport(rows, _metadata(cfg, state_evolution=traj.metadata(),
                                          factors=[f.name for f in factors], **extra))


def run_ensemble(cfg: ExperimentConfig) -> EnsembleReport:
    """Dispatch on cfg.mode; every replicate draws from its own (seed, r) streams."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", QuadraturePrecisionWarning)
        if cfg.mode == "se":
            report = _run_se(cfg)
        elif cfg.mode in ("amp", "ist", "ensemble"):
            algo = cfg.algorithm if cfg.mode == "ensemble" else cfg.mode
            report = _run_amp(cfg, amp_step if algo == "amp" else ist_step)
        elif cfg.mode == "symmetric":
            report = _run_symmetric(cfg)
        elif cfg.mode == "mp-compare":
            report = _run_mp_compare(cfg)
        else:
            report = _run_decouple(cfg)
    precision = sorted({str(w.message) for w in caught
                        if issubclass(w.category, QuadraturePrecisionWarning)})
    report.metadata["precision_warnings"] = precision
    return report
