"""Command-line driver: ``kmspc synth|calibrate|optimize|monitor|report``.

Each run reads one JSON config (``--config``); command-line flags override
config fields, and config fields override built-in defaults. Relative data
paths in a config file are resolved against the file's directory. Every
command writes its artifacts plus ``manifest.json`` (resolved config and
package versions; usable again as ``--config``) and ``timings.json`` into
the output directory. Wall-clock timings live only in ``timings.json`` and
the ``wall_ms`` column of ``trace.csv``, so all other outputs are
byte-identical across repeated runs.

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 I/O error.
Set ``KMSPC_LOG_LEVEL`` (DEBUG, INFO, WARNING...) for log verbosity.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .dataset import (FaultKind, MatrixFormat, RawMatrix, Role, Scaler, load_matrix, load_te,
                      onset_index, standardize, synthesize, synthesize_test, write_matrix)
from .decomposition import KpcaModel, PcaModel, dumps_model, kpca_fit, load_model, pca_fit
from .errors import KmspcError, NumericalError, ValidationError
from .kernels import KernelConfig, Mode
from .mspc import (ChartLimits, LimitMethod, build_chart, calibrate_limits, cmr_loss,
                   detection_delay, write_chart_csv)
from .optim import (ClassificationLoss, GaConfig, KfConfig, Method, OptimResult, ParamSpace,
                    Parameterization, ga_optimize, kf_optimize, line_search, nelder_mead)
from .svg import write_chart_svg

log = logging.getLogger("kmspc")

LOG_ENV = "KMSPC_LOG_LEVEL"

DEFAULTS: dict = {
    "normal": None,
    "faulty": None,
    "test": None,
    "format": None,
    "transpose": False,
    "model": "kpca",
    "H": 4,
    "kernel": {"family": "gaussian", "mode": "shared", "sigma": 1.0, "gamma2": 1.0},
    "limit_method": "gaussian",
    "optimizer": {
        "method": "kernel_flows",
        "iterations": 300,
        "sub_iterations": 8,
        "ns": 40,
        "alpha": 0.5,
        "fd_step": 0.01,
        "parameterization": "log_sigma",
        "loss": "rate",
        "temperature": 0.05,
        "grid": [0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0],
        "bounds": [0.01, 100.0],
        "max_evals": 500,
        # initial simplex size in log-parameter units; the rate loss is a step
        # function, so a small simplex never leaves the starting plateau
        "nm_step": 1.0,
        "generations": 50,
        "population": 40,
    },
    "model_path": None,
    "onset": None,
    "fault_after_hours": None,
    "sampling_minutes": 3.0,
    "output_dir": "kmspc_run",
    "seed": None,
    "log_scale": False,
}

PATH_KEYS = ("normal", "test", "model_path", "output_dir")

METHOD_ALIASES = {"kf": "kernel_flows", "kernel_flows": "kernel_flows",
                  "line_search": "line_search", "nelder_mead": "nelder_mead",
                  "nm": "nelder_mead", "ga": "genetic_algorithm",
                  "genetic_algorithm": "genetic_algorithm"}


class StageError(Exception):
    """Wraps a component error with the pipeline stage it came from."""

    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"{stage}: {exc}")
        self.stage = stage
        self.cause = exc


class _Stage:
    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        log.debug("stage %s", self.name)

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, StageError) and isinstance(
                exc, (KmspcError, OSError, ValueError, ArithmeticError)):
            raise StageError(self.name, exc) from exc
        return False


# Configuration -----------------------------------------------------------------------

def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _resolve(value, root: Path):
    if value is None:
        return None
    if isinstance(value, list):
        return [_resolve(v, root) for v in value]
    p = Path(value)
    return str(p if p.is_absolute() else (root / p).resolve())


def load_config(path) -> dict:
    """Read a run config (or a previous run's manifest) and resolve its paths."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: config must be a JSON object")
    if doc.get("format_version") == "kmspc-manifest":
        doc = doc["config"]
    root = path.parent.resolve()
    for key in (*PATH_KEYS, "faulty"):
        if key in doc:
            doc[key] = _resolve(doc[key], root)
    return doc


def _flag_overrides(args: argparse.Namespace) -> dict:
    over: dict = {}
    cwd = Path.cwd()
    for key in ("normal", "test", "output_dir", "model_path"):
        v = getattr(args, key, None)
        if v is not None:
            over[key] = _resolve(v, cwd)
    faulty = getattr(args, "faulty", None)
    if faulty:
        over["faulty"] = _resolve(faulty if len(faulty) > 1 else faulty[0], cwd)
    for key in ("seed", "H", "onset", "fault_after_hours", "sampling_minutes", "model",
                "limit_method", "format"):
        v = getattr(args, key, None)
        if v is not None:
            over[key] = v
    if getattr(args, "transpose", False):
        over["transpose"] = True
    if getattr(args, "log_scale", False):
        over["log_scale"] = True
    kernel = {k: getattr(args, a) for k, a in
              (("family", "kernel"), ("mode", "mode"), ("sigma", "sigma"), ("gamma2", "gamma2"))
              if getattr(args, a, None) is not None}
    if kernel:
        over["kernel"] = kernel
    opt = {k: getattr(args, k) for k in ("method", "iterations", "alpha", "parameterization")
           if getattr(args, k, None) is not None}
    if opt:
        over["optimizer"] = opt
    return over


def resolve_config(args: argparse.Namespace) -> dict:
    """Defaults < config file < command-line flags."""
    cfg = copy.deepcopy(DEFAULTS)
    if getattr(args, "config", None):
        cfg = _merge(cfg, load_config(args.config))
    cfg = _merge(cfg, _flag_overrides(args))
    if cfg["output_dir"] is not None:
        cfg["output_dir"] = _resolve(cfg["output_dir"], Path.cwd())
    method = str(cfg["optimizer"]["method"])
    if method not in METHOD_ALIASES:
        raise ValidationError(f"unknown optimizer method {method!r}")
    cfg["optimizer"]["method"] = METHOD_ALIASES[method]
    return cfg


def _require_file(cfg: dict, key: str) -> str:
    value = cfg.get(key)
    if not value:
        raise ValidationError(f"config field {key!r} is required for this command")
    if not Path(value).is_file():
        raise ValidationError(f"{key} file not found: {value}")
    return value


# Data ------------------------------------------------------------------------------------

def _load_raw(path: str, cfg: dict) -> RawMatrix:
    fmt = cfg.get("format")
    if fmt == "te":
        return load_te(path, transpose=bool(cfg.get("transpose")))
    raw = load_matrix(path, MatrixFormat(fmt) if fmt else None)
    if cfg.get("transpose"):
        raw = RawMatrix(raw.values.T.copy(), source=raw.source)
    return raw


def _faulty_paths(cfg: dict) -> list[str]:
    faulty = cfg.get("faulty")
    if not faulty:
        raise ValidationError("config field 'faulty' is required for this command")
    paths = faulty if isinstance(faulty, list) else [faulty]
    for p in paths:
        if not Path(p).is_file():
            raise ValidationError(f"faulty file not found: {p}")
    return paths


def _onset(cfg: dict, n: int) -> int:
    if cfg.get("onset") is not None:
        onset = int(cfg["onset"])
    elif cfg.get("fault_after_hours") is not None:
        onset = onset_index(float(cfg["sampling_minutes"]), float(cfg["fault_after_hours"]))
    else:
        return n + 1
    if not 1 <= onset <= n + 1:
        raise ValidationError(f"onset {onset} outside 1..{n + 1}")
    return onset


def _kernel_config(cfg: dict, d: int) -> KernelConfig:
    doc = dict(cfg["kernel"])
    if doc.get("mode", "shared") == Mode.PER_VARIABLE.value:
        family = doc.get("family", "gaussian")
        if isinstance(family, list):
            return KernelConfig.from_dict(doc)
        if np.ndim(doc.get("sigma", 1.0)) == 0:
            kc = KernelConfig.per_variable(family, d, doc.get("sigma", 1.0),
                                           doc.get("gamma2", 1.0),
                                           bool(doc.get("optimize_gamma2", False)))
            return kc
    return KernelConfig.from_dict(doc)


# Outputs ----------------------------------------------------------------------------------

def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _versions() -> dict:
    return {"kmspc": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _finish(out: Path, command: str, cfg: dict, outputs: list[str], timings: dict) -> None:
    manifest = {"format_version": "kmspc-manifest", "command": command, "config": cfg,
                "seed": cfg.get("seed"), "versions": _versions(),
                "outputs": sorted(outputs + ["timings.json"])}
    _write_json(out / "manifest.json", manifest)
    _write_json(out / "timings.json", {k: round(v, 6) for k, v in timings.items()})


def _output_dir(cfg: dict) -> Path:
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fit(cfg: dict, normal, kernel: KernelConfig | None = None):
    H = int(cfg["H"])
    if cfg["model"] == "pca":
        return pca_fit(normal, H)
    if cfg["model"] != "kpca":
        raise ValidationError(f"model must be 'pca' or 'kpca', got {cfg['model']!r}")
    return kpca_fit(normal, kernel if kernel is not None else _kernel_config(cfg, normal.d), H)


def _persist_calibration(out: Path, model, cfg: dict, outputs: list[str],
                         title: str) -> ChartLimits:
    method = LimitMethod(cfg["limit_method"])
    limits = calibrate_limits(model, method)
    (out / "model.json").write_text(
        dumps_model(model, {"limits": limits.to_dict(), "limit_method": method.value}),
        encoding="utf-8")
    chart = build_chart(model, model.X_train, limits=limits)
    write_chart_csv(chart, out / "calibration_chart.csv")
    write_chart_svg(chart, out / "calibration_chart.svg", title, bool(cfg["log_scale"]))
    outputs += ["model.json", "calibration_chart.csv", "calibration_chart.svg"]
    return limits


# Commands ---------------------------------------------------------------------------------

def cmd_synth(args: argparse.Namespace) -> int:
    out = Path(args.output_dir or "kmspc_synth").resolve()
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    kind = FaultKind(args.kind)
    normal, faulty = synthesize(args.n_normal, args.n_faulty, args.d, kind, args.seed)
    test = synthesize_test(args.n_before, args.n_after, args.d, kind, args.seed, normal.scaler)
    header = [f"x{j + 1:02d}" for j in range(args.d)]
    for name, ds in (("normal", normal), ("faulty", faulty), ("test", test)):
        write_matrix(normal.scaler.inverse(ds.X), out / f"{name}.csv", header=header)
    run_config = {"normal": "normal.csv", "faulty": "faulty.csv", "test": "test.csv",
                  "onset": test.fault_onset, "seed": args.seed}
    _write_json(out / "run_config.json", run_config)
    cfg = {"kind": kind.value, "d": args.d, "seed": args.seed, "n_normal": args.n_normal,
           "n_faulty": args.n_faulty, "n_before": args.n_before, "n_after": args.n_after,
           "output_dir": str(out)}
    _finish(out, "synth", cfg, ["normal.csv", "faulty.csv", "test.csv", "run_config.json"],
            {"total_s": time.perf_counter() - t0})
    print(f"wrote synthetic {kind.value} data to {out} (test onset {test.fault_onset})")
    return 0


def cmd_calibrate(cfg: dict) -> int:
    t0 = time.perf_counter()
    with _Stage("load"):
        normal = standardize(_load_raw(_require_file(cfg, "normal"), cfg))
    out = _output_dir(cfg)
    outputs: list[str] = []
    with _Stage("fit"):
        model = _fit(cfg, normal)
    with _Stage("limits"):
        _persist_calibration(out, model, cfg, outputs, "calibration")
    _finish(out, "calibrate", cfg, outputs, {"total_s": time.perf_counter() - t0})
    print(f"calibrated {cfg['model']} model (H={model.H}) -> {out / 'model.json'}")
    return 0


def _baseline_result(method: str, cfg: dict, normal, faulty, template: KernelConfig,
                     space: ParamSpace) -> OptimResult:
    opt = cfg["optimizer"]
    loss = ClassificationLoss(normal, faulty, template, int(cfg["H"]), space.parameterization)
    theta0 = space.natural(space.pack(template))
    if method == "line_search":
        if space.size != 1:
            raise ValidationError("line search needs a single (shared sigma) parameter")
        return line_search(lambda s: loss(np.array([s])), opt["grid"])
    if method == "nelder_mead":
        return nelder_mead(loss, theta0, log_space=True, step=float(opt["nm_step"]),
                           max_evals=int(opt["max_evals"]))
    lo, hi = (float(b) for b in opt["bounds"])
    ga = GaConfig(population=int(opt["population"]), generations=int(opt["generations"]),
                  seed=int(cfg["seed"]))
    return ga_optimize(loss, [(lo, hi)] * space.size, ga, log_space=True)


def cmd_optimize(cfg: dict) -> int:
    t0 = time.perf_counter()
    if cfg.get("seed") is None:
        raise ValidationError("optimize runs require a seed")
    if cfg["model"] != "kpca":
        raise ValidationError("optimize needs model 'kpca'")
    with _Stage("load"):
        normal_path = _require_file(cfg, "normal")
        faulty_paths = _faulty_paths(cfg)
        normal = standardize(_load_raw(normal_path, cfg))
        faulty = [standardize(_load_raw(p, cfg), normal.scaler, Role.FAULTY_CALIBRATION)
                  for p in faulty_paths]
        template = _kernel_config(cfg, normal.d)
    opt = cfg["optimizer"]
    method = opt["method"]
    space = ParamSpace(template, Parameterization(opt["parameterization"]))
    out = _output_dir(cfg)
    outputs: list[str] = []
    with _Stage("optimize"):
        if method == "kernel_flows":
            kf = KfConfig(H=int(cfg["H"]), iterations=int(opt["iterations"]),
                          sub_iterations=int(opt["sub_iterations"]), ns=int(opt["ns"]),
                          alpha=float(opt["alpha"]), fd_step=float(opt["fd_step"]),
                          seed=int(cfg["seed"]), parameterization=opt["parameterization"],
                          loss=opt["loss"], temperature=float(opt["temperature"]))
            result = kf_optimize(normal, faulty, template, kf)
        else:
            result = _baseline_result(method, cfg, normal, faulty, template, space)
            result.config = space.unpack(np.log(np.atleast_1d(result.theta_opt)))
    t_opt = time.perf_counter() - t0
    result.save_json(out / "optim_result.json", timing=False)
    names = [f"sigma_{k + 1}" for k in range(space.n_sigma)]
    if space.size > space.n_sigma:
        names += [f"gamma2_{k + 1}" for k in range(space.n_sigma)]
    result.save_trace_csv(out / "trace.csv", names)
    outputs += ["optim_result.json", "trace.csv"]
    with _Stage("fit"):
        model = kpca_fit(normal, result.config, int(cfg["H"]))
    with _Stage("limits"):
        _persist_calibration(out, model, cfg, outputs, f"calibration ({Method(result.method).value})")
    _finish(out, "optimize", cfg, outputs,
            {"optimize_s": t_opt, "total_s": time.perf_counter() - t0})
    print(f"{result.method.value}: final loss {result.final_loss:.4f}, "
          f"theta {np.array2string(np.atleast_1d(result.theta_opt), precision=4)}")
    return 0


def cmd_monitor(cfg: dict) -> int:
    t0 = time.perf_counter()
    with _Stage("load"):
        model_path = _require_file(cfg, "model_path")
        model, doc = load_model(model_path)
        if model.scaler is None:
            raise ValidationError("model has no scaler; cannot standardize test data")
        raw = _load_raw(_require_file(cfg, "test"), cfg)
        test = standardize(raw, model.scaler, Role.TEST)
        onset = _onset(cfg, test.n)
    with _Stage("chart"):
        limits = ChartLimits.from_dict(doc["limits"]) if doc.get("limits") else None
        chart = build_chart(model, test.X, cfg["limit_method"], onset=onset, limits=limits)
        report = cmr_loss(chart, onset, allow_no_fault=True)
    out = _output_dir(cfg)
    write_chart_csv(chart, out / "chart.csv")
    write_chart_svg(chart, out / "chart.svg", "monitoring", bool(cfg["log_scale"]))
    doc_out = {"cmr": report.to_dict(), "n_samples": chart.m, "onset": onset,
               "false_alarm_rate": {}, "alarm_fraction_after_onset": {},
               "detection_delay": {},
               "detection_delay_note": "samples from onset to first alarm; supplementary "
                                       "metric, not part of the CMR loss"}
    for stat in ("t2", "spex", "combined"):
        alarms = chart.alarms(stat)
        doc_out["false_alarm_rate"][stat] = float(np.mean(alarms[:onset - 1]))
        if onset <= chart.m:
            doc_out["alarm_fraction_after_onset"][stat] = float(np.mean(alarms[onset - 1:]))
            doc_out["detection_delay"][stat] = detection_delay(alarms, onset)
        else:
            doc_out["alarm_fraction_after_onset"][stat] = None
            doc_out["detection_delay"][stat] = None
    _write_json(out / "report.json", doc_out)
    _finish(out, "monitor", cfg, ["chart.csv", "chart.svg", "report.json"],
            {"total_s": time.perf_counter() - t0})
    c = report
    print(f"CMR loss  T2 {c.t2.loss:.4f}  SPEx {c.spex.loss:.4f}  combined {c.combined.loss:.4f}"
          + (f"  ({c.note})" if c.note else ""))
    return 0


REPORT_COLUMNS = ["run", "command", "final_loss", "cmr_t2", "cmr_spex", "cmr_combined",
                  "false_alarm_t2", "false_alarm_spex", "delay_t2", "delay_spex",
                  "delay_combined", "runtime_s"]


RUN_ARTIFACTS = ("model.json", "optim_result.json", "report.json", "chart.csv")


def _report_row(run_dir: Path, base: Path) -> dict:
    manifest = json.loads((run_dir / "manifest.json").read_text(encoding="utf-8"))
    row = {k: "" for k in REPORT_COLUMNS}
    row["run"] = str(run_dir.relative_to(base)) if run_dir != base else "."
    row["command"] = manifest.get("command", "")
    if (run_dir / "optim_result.json").is_file():
        res = json.loads((run_dir / "optim_result.json").read_text(encoding="utf-8"))
        row["final_loss"] = f"{res['final_loss']:.4f}"
    if (run_dir / "report.json").is_file():
        rep = json.loads((run_dir / "report.json").read_text(encoding="utf-8"))
        for stat in ("t2", "spex", "combined"):
            row[f"cmr_{stat}"] = f"{rep['cmr'][stat]['loss']:.4f}"
            delay = rep["detection_delay"].get(stat)
            row[f"delay_{stat}"] = "" if delay is None else str(delay)
        for stat in ("t2", "spex"):
            row[f"false_alarm_{stat}"] = f"{rep['false_alarm_rate'][stat]:.4f}"
    if (run_dir / "timings.json").is_file():
        t = json.loads((run_dir / "timings.json").read_text(encoding="utf-8"))
        if "total_s" in t:
            row["runtime_s"] = f"{t['total_s']:.2f}"
    return row


def cmd_report(args: argparse.Namespace) -> int:
    base = Path(args.run_dir).resolve()
    if not base.is_dir():
        raise ValidationError(f"run directory not found: {base}")
    run_dirs = sorted({p.parent for p in base.rglob("manifest.json")})
    rows = [_report_row(d, base) for d in run_dirs]
    # directories holding run artifacts but no manifest are listed, not fatal
    artifact_dirs = {p.parent for name in RUN_ARTIFACTS for p in base.rglob(name)}
    missing = [str(d) for d in sorted(artifact_dirs - set(run_dirs))]
    if not rows and not missing:
        missing = [str(base)]
    out = Path(args.output_dir).resolve() if args.output_dir else base
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "summary.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, REPORT_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    widths = {c: max([len(c)] + [len(r[c]) for r in rows]) for c in REPORT_COLUMNS}
    lines = ["  ".join(c.ljust(widths[c]) for c in REPORT_COLUMNS)]
    lines += ["  ".join(r[c].ljust(widths[c]) for c in REPORT_COLUMNS) for r in rows]
    if missing:
        lines.append("")
        lines += [f"missing manifest: {m}" for m in missing]
    lines.append("")
    lines.append("delay = samples from fault onset to first alarm (supplementary metric)")
    text = "\n".join(lines) + "\n"
    (out / "summary.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


# Argument parsing ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run config (or a previous manifest.json)")
    p.add_argument("--out", dest="output_dir", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--H", type=int, help="number of principal components")
    p.add_argument("--model", choices=["pca", "kpca"])
    p.add_argument("--limit-method", dest="limit_method", choices=[m.value for m in LimitMethod])
    p.add_argument("--format", choices=["csv", "dat", "te"], help="data file format")
    p.add_argument("--transpose", action="store_true", help="data files are variable-major")
    p.add_argument("--log-scale", dest="log_scale", action="store_true",
                   help="plot log10 of the statistics")


def _add_kernel(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kernel", help="kernel family: gaussian, cauchy, matern32, ...")
    p.add_argument("--mode", choices=[m.value for m in Mode])
    p.add_argument("--sigma", type=float)
    p.add_argument("--gamma2", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kmspc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"kmspc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write synthetic normal/faulty/test data")
    p.add_argument("--kind", default="mean_step", choices=[k.value for k in FaultKind])
    p.add_argument("--d", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-normal", dest="n_normal", type=int, default=200)
    p.add_argument("--n-faulty", dest="n_faulty", type=int, default=200)
    p.add_argument("--n-before", dest="n_before", type=int, default=160)
    p.add_argument("--n-after", dest="n_after", type=int, default=320)
    p.add_argument("--out", dest="output_dir")

    p = sub.add_parser("calibrate", help="fit a PCA/KPCA model and its control limits")
    _add_common(p)
    _add_kernel(p)
    p.add_argument("--normal")

    p = sub.add_parser("optimize", help="learn kernel parameters, then calibrate")
    _add_common(p)
    _add_kernel(p)
    p.add_argument("--normal")
    p.add_argument("--faulty", nargs="+")
    p.add_argument("--method", choices=sorted(METHOD_ALIASES))
    p.add_argument("--iterations", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--parameterization", choices=[v.value for v in Parameterization])

    p = sub.add_parser("monitor", help="chart test data against a saved model")
    _add_common(p)
    p.add_argument("--model-path", "--model-file", dest="model_path")
    p.add_argument("--test")
    p.add_argument("--onset", type=int, help="1-based index of the first faulty sample")
    p.add_argument("--fault-after-hours", dest="fault_after_hours", type=float)
    p.add_argument("--sampling-minutes", dest="sampling_minutes", type=float)

    p = sub.add_parser("report", help="summarize run directories")
    p.add_argument("run_dir")
    p.add_argument("--out", dest="output_dir")
    return parser


def _setup_logging() -> None:
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            return cmd_synth(args)
        if args.command == "report":
            return cmd_report(args)
        cfg = resolve_config(args)
        return {"calibrate": cmd_calibrate, "optimize": cmd_optimize,
                "monitor": cmd_monitor}[args.command](cfg)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc.cause)
    except (KmspcError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, NumericalError) or isinstance(exc, ArithmeticError):
        return 3
    if isinstance(exc, OSError):
        return 4
    return 2


if __name__ == "__main__":
    sys.exit(main())
