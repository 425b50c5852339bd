"""Experiment runner: SNR sweep, covariance optimization, Monte-Carlo validation.

Usage::

    mimocap run CONFIG.yaml [--output PATH] [--seed N] [--trials N]
                            [--snr=-5,0,5] [--format csv|json]
                            [--qstar-dir DIR] [--workers N] [--no-timing]
    mimocap example-config

Exit codes: 0 success, 1 convergence failure or failed soft check,
2 configuration error.
"""

import argparse
import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
import json
import logging
import math
from pathlib import Path
import sys
import time

import numpy as np
import yaml

from .canonical import CanonicalSolverError
from .channel import DEFAULT_SPACING, PathAngularSpec, build_channel_stats
from .emi import emi, emi_monte_carlo
from .optimizer import optimize_covariance

log = logging.getLogger("mimocap")

CSV_HEADER = ("snr_db", "emi_identity_mc", "emi_identity_stderr", "emi_opt_mc",
              "emi_opt_stderr", "emi_identity_approx", "emi_opt_approx",
              "iterations", "time_s", "rho_m")
EMI_COLUMNS = ("emi_identity_mc", "emi_identity_stderr", "emi_opt_mc",
               "emi_opt_stderr", "emi_identity_approx", "emi_opt_approx")
OPTIMIZER_KEYS = ("tol_delta", "tol_q", "max_iter", "inner_tol", "stall_window",
                  "max_restarts")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    t: int
    r: int
    paths: list
    snr_db: list
    trials: int = 10_000
    seed: int = 0
    tolerances: dict = field(default_factory=dict)
    output_path: str | None = None
    report_base: str = "bits"
    spacing_wavelengths: float = DEFAULT_SPACING
    carrier_hz: float | None = None

    def __post_init__(self):
        if not self.snr_db:
            raise ConfigError("snr_db must be non-empty")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.t < 1 or self.r < 1:
            raise ConfigError("t and r must be >= 1")
        if self.report_base not in ("nats", "bits"):
            raise ConfigError(f"report_base must be 'nats' or 'bits', got {self.report_base!r}")
        unknown = set(self.tolerances) - set(OPTIMIZER_KEYS)
        if unknown:
            raise ConfigError(f"unknown tolerance keys: {sorted(unknown)}")
        if not self.paths:
            raise ConfigError("at least one path is required")


@dataclass
class ExperimentRow:
    snr_db: float
    emi_identity_mc: float = math.nan
    emi_identity_stderr: float = math.nan
    emi_opt_mc: float = math.nan
    emi_opt_stderr: float = math.nan
    emi_identity_approx: float = math.nan
    emi_opt_approx: float = math.nan
    iterations: int = 0
    time_s: float | None = None
    rho_m: float = math.nan
    stop_reason: str = "failed"
    monotone: bool = True
    error: str | None = None

    @property
    def ok(self):
        return (self.error is None and self.stop_reason == "converged"
                and self.monotone and self.rho_m < 1)


def parse_config(data):
    """Build an :class:`ExperimentConfig` from a mapping (parsed YAML)."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        paths = [PathAngularSpec(**p) for p in data.get("paths", [])]
        cfg = dict(data, paths=paths)
        cfg["snr_db"] = [float(s) for s in data.get("snr_db", [])]
        cfg["tolerances"] = dict(data.get("tolerances") or {})
        return ExperimentConfig(**cfg)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    return parse_config(data)


def example_config_text():
    return resources.files("mimocap").joinpath("data/five_cluster.yaml").read_text()


def _run_point(config, index, snr_db, record_timing, qstar_dir):
    row = ExperimentRow(snr_db=snr_db)
    sigma2 = 10.0 ** (-snr_db / 10.0)
    try:
        stats = build_channel_stats(config.paths, config.t, config.r, sigma2,
                                    config.spacing_wavelengths,
                                    carrier_hz=config.carrier_hz)
        t0 = time.perf_counter()
        result = optimize_covariance(stats, seed=config.seed, **config.tolerances)
        elapsed = time.perf_counter() - t0
        eye = np.eye(config.t, dtype=complex)
        row.emi_identity_approx, _ = emi(stats, eye)
        row.emi_opt_approx = result.emi_star
        # same substream for both covariances: paired comparison
        key = (index,)
        mc_id = emi_monte_carlo(stats, eye, config.trials, config.seed, key=key)
        mc_opt = emi_monte_carlo(stats, result.q_star, config.trials, config.seed, key=key)
        row.emi_identity_mc, row.emi_identity_stderr = mc_id.mean, mc_id.std_error
        row.emi_opt_mc, row.emi_opt_stderr = mc_opt.mean, mc_opt.std_error
        row.iterations = result.iterations
        row.time_s = elapsed if record_timing else None
        row.rho_m = result.rho_M
        row.stop_reason = result.stop_reason
        row.monotone = result.monotone
        if qstar_dir is not None:
            emit_qstar(result, Path(qstar_dir) / f"qstar_{index:03d}_snr{snr_db:g}.json")
    except (CanonicalSolverError, FloatingPointError, np.linalg.LinAlgError) as exc:
        row.error = f"{type(exc).__name__}: {exc}"
        log.error("SNR %g dB failed: %s", snr_db, row.error)
    return row


def run_experiment(config, *, workers=1, record_timing=True, qstar_dir=None):
    """Optimize and validate every SNR point; rows follow config order."""
    jobs = list(enumerate(config.snr_db))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(
                lambda job: _run_point(config, *job, record_timing, qstar_dir), jobs))
    return [_run_point(config, i, s, record_timing, qstar_dir) for i, s in jobs]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def _convert(row, base):
    values = {k: getattr(row, k) for k in CSV_HEADER}
    if base == "bits":
        for k in EMI_COLUMNS:
            values[k] = values[k] / math.log(2)
    return values


def emit_csv(rows, path, report_base="bits"):
    """Write rows with full-precision decimals; EMI columns in ``report_base`` units."""
    if not rows:
        raise ValueError("no rows to write")
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for row in rows:
                values = _convert(row, report_base)
                writer.writerow([_fmt(values[k]) for k in CSV_HEADER])
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def read_csv(path):
    """Parse a file written by :func:`emit_csv` back into dicts of numbers."""
    out = []
    with Path(path).open(newline="") as fh:
        for rec in csv.DictReader(fh):
            parsed = {}
            for k, v in rec.items():
                if v == "":
                    parsed[k] = None
                elif k == "iterations":
                    parsed[k] = int(v)
                else:
                    parsed[k] = float(v)
            out.append(parsed)
    return out


def emit_json(rows, path, report_base="bits"):
    doc = {"report_base": report_base,
           "rows": [dict(asdict(row), **_convert(row, report_base)) for row in rows]}
    try:
        Path(path).write_text(json.dumps(doc, indent=2, allow_nan=True) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc


def emit_qstar(result, path):
    """Dump the optimized covariance and trajectory as JSON (lossless floats)."""
    q = np.asarray(result.q_star)
    doc = {
        "q_star": {"real": q.real.tolist(), "imag": q.imag.tolist()},
        "delta_star": np.asarray(result.delta_star).tolist(),
        "delta_tilde_star": np.asarray(result.delta_tilde_star).tolist(),
        "emi_star": float(result.emi_star),
        "rho_M": float(result.rho_M),
        "trajectory": [p._asdict() for p in result.trajectory],
        "stop_reason": result.stop_reason,
        "restarts": result.restarts,
    }
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(doc, indent=1, allow_nan=True) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write covariance to {path}: {exc}") from exc


def load_qstar(path):
    doc = json.loads(Path(path).read_text())
    doc["q_star"] = np.array(doc["q_star"]["real"]) + 1j * np.array(doc["q_star"]["imag"])
    doc["delta_star"] = np.array(doc["delta_star"])
    doc["delta_tilde_star"] = np.array(doc["delta_tilde_star"])
    return doc


def _snr_list(text):
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad SNR list {text!r}") from None


def build_parser():
    parser = argparse.ArgumentParser(prog="mimocap", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an SNR sweep from a YAML config")
    run.add_argument("config")
    run.add_argument("--output", help="results file (overrides output_path)")
    run.add_argument("--seed", type=int)
    run.add_argument("--trials", type=int)
    run.add_argument("--snr", type=_snr_list, help="comma-separated SNRs in dB; write --snr=-5,0 for negative values")
    run.add_argument("--format", choices=("csv", "json"), default="csv")
    run.add_argument("--qstar-dir", help="write one optimized-covariance JSON per SNR")
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--no-timing", action="store_true",
                     help="leave time_s empty so output bytes depend only on config and seed")
    sub.add_parser("example-config", help="print the bundled five-path scenario")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "example-config":
        sys.stdout.write(example_config_text())
        return 0

    try:
        config = load_config(args.config)
        if args.seed is not None:
            config.seed = args.seed
        if args.trials is not None:
            config.trials = args.trials
        if args.snr is not None:
            config.snr_db = args.snr
        config.__post_init__()
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        output = args.output or config.output_path
        if not output:
            raise ConfigError("no output path (use --output or output_path)")
    except ConfigError as exc:
        print(f"mimocap: config error: {exc}", file=sys.stderr)
        return 2

    rows = run_experiment(config, workers=args.workers,
                          record_timing=not args.no_timing, qstar_dir=args.qstar_dir)
    emit = emit_json if args.format == "json" else emit_csv
    try:
        emit(rows, output, config.report_base)
    except OSError as exc:
        print(f"mimocap: {exc}", file=sys.stderr)
        return 1
    failed = [r.snr_db for r in rows if not r.ok]
    if failed:
        print(f"mimocap: convergence or soft-check failure at SNR {failed}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
