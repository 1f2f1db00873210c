"""
Command-line experiment driver.

    python3 -m torus_resonances --command spectrum --N 8 --eps 0.3 --k 0.01 --out spec.json
    python3 -m torus_resonances --command evolve --N 64 --eps 0.15 --k 0.01 --T 30 --out run.csv

Exit codes: 0 success, 1 configuration error, 2 resource guard refusal,
3 numerical failure.  Nothing is written unless the run succeeds.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from dataclasses import asdict, dataclass

import numpy as np

from .channels import ResourceGuardError, make_propagator
from .classical import build_classical_propagator, classical_leading_spectrum
from .maps import PerturbedCatParams, QuantizationError, lyapunov_exponent, quantize_perturbed_cat
from .observables import (
    autocorrelation_series,
    averaged_series,
    fit_decay_rate,
    fit_slope,
    late_window,
    linear_entropy_series,
    loschmidt_series,
    presaturation_window,
)
from .spectral import (
    DEFAULT_KITER,
    NoOverlapError,
    SpectrumResult,
    chord_truncation_spectrum,
    dense_spectrum,
    match_error,
    quantum_iteration_spectrum,
)
from .torus import coherent_state

EXIT_OK, EXIT_CONFIG, EXIT_GUARD, EXIT_NUMERICAL = 0, 1, 2, 3
COMMANDS = ("spectrum", "classical", "evolve", "echo", "compare")
AVERAGED_STATES = 10
AGREEMENT_COUNT = 5


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    N: int | None = None
    eps: float = 0.1
    k: float = 0.0
    k2: float | None = None
    kiter: int = DEFAULT_KITER
    L: int | None = None
    T: int = 30
    seed: int | None = None
    format: str | None = None
    late_window: tuple | None = None
    early_window: tuple | None = None

    @property
    def output_format(self) -> str:
        if self.format:
            return self.format
        return "csv" if self.command in ("evolve", "echo") else "json"


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="torus_resonances", description=__doc__.split("\n\n")[0])
    p.add_argument("--command", required=True, choices=COMMANDS)
    p.add_argument("--N", type=int, help="Hilbert space dimension")
    p.add_argument("--eps", type=float, default=0.1, help="noise width, fraction of the torus")
    p.add_argument("--k", type=float, default=0.0, help="kick strength")
    p.add_argument("--k2", type=float, help="kick strength of the echo partner map")
    p.add_argument("--kiter", type=int, default=DEFAULT_KITER, help="moment-method truncation size")
    p.add_argument("--L", type=int, help="classical grid side")
    p.add_argument("--T", type=int, default=30, help="number of time steps")
    p.add_argument("--seed", type=int, help="seed for the initial-state centres")
    p.add_argument("--out", required=True, help="output file")
    p.add_argument("--format", choices=("json", "csv"))
    p.add_argument("--late-window", type=int, nargs=2, metavar=("N_MIN", "N_MAX"))
    p.add_argument("--early-window", type=int, nargs=2, metavar=("N_MIN", "N_MAX"))
    return p


def parse_config(argv) -> tuple[ExperimentConfig, str]:
    args = build_parser().parse_args(argv)
    cfg = ExperimentConfig(
        command=args.command, N=args.N, eps=args.eps, k=args.k, k2=args.k2, kiter=args.kiter,
        L=args.L, T=args.T, seed=args.seed, format=args.format,
        late_window=tuple(args.late_window) if args.late_window else None,
        early_window=tuple(args.early_window) if args.early_window else None)
    validate(cfg, args.out)
    return cfg, args.out


def validate(cfg: ExperimentConfig, out: str) -> None:
    quantum = cfg.command != "classical"
    if quantum and cfg.N is None:
        raise ConfigError(f"--N is required for {cfg.command}")
    if cfg.N is not None and cfg.N < 2:
        raise ConfigError(f"--N must be >= 2, got {cfg.N}")
    if not (np.isfinite(cfg.eps) and cfg.eps >= 0):
        raise ConfigError(f"--eps must be >= 0, got {cfg.eps}")
    if not (np.isfinite(cfg.k) and cfg.k >= 0):
        raise ConfigError(f"--k must be >= 0, got {cfg.k}")
    if cfg.command == "echo":
        if cfg.k2 is None:
            raise ConfigError("--k2 is required for echo")
        if not (np.isfinite(cfg.k2) and cfg.k2 >= 0):
            raise ConfigError(f"--k2 must be >= 0, got {cfg.k2}")
    if cfg.kiter < 2:
        raise ConfigError(f"--kiter must be >= 2, got {cfg.kiter}")
    if cfg.T < 1:
        raise ConfigError(f"--T must be >= 1, got {cfg.T}")
    if cfg.command in ("classical", "compare"):
        if cfg.L is None:
            raise ConfigError(f"--L is required for {cfg.command}")
        if cfg.L < 2:
            raise ConfigError(f"--L must be >= 2, got {cfg.L}")
        if cfg.eps <= 0:
            raise ConfigError("the classical kernel needs --eps > 0")
    for name, w in (("late", cfg.late_window), ("early", cfg.early_window)):
        if w is not None and not (0 <= w[0] and w[1] <= cfg.T and w[1] > w[0] + 2):
            raise ConfigError(f"--{name}-window {w[0]} {w[1]} must lie in [0, T] and span more than 3 steps")
    directory = os.path.dirname(os.path.abspath(out))
    if not os.path.isdir(directory) or not os.access(directory, os.W_OK):
        raise ConfigError(f"output directory {directory} is not writable")


def _config_dict(cfg: ExperimentConfig) -> dict:
    d = asdict(cfg)
    d["format"] = cfg.output_format
    for key in ("late_window", "early_window"):
        if d[key] is not None:
            d[key] = list(d[key])
    return d


def _finite(x):
    """JSON-safe float: non-finite values become null."""
    x = float(x)
    return x if np.isfinite(x) else None


def _agreement(results: dict) -> dict:
    names = list(results)
    out = {}
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            # nearest-value pairing: equal-modulus values may come in either order
            va, vb = results[a].eigenvalues, results[b].eigenvalues
            n = min(AGREEMENT_COUNT, len(va), len(vb))
            out[f"{a}_vs_{b}"] = _finite(match_error(va, vb, n)) if n else None
    return out


def _propagator(N: int, eps: float, k: float):
    return make_propagator(quantize_perturbed_cat(N, PerturbedCatParams(k)), eps)


def _seed_state(cfg: ExperimentConfig):
    if cfg.seed is None:
        return None
    q0, p0 = np.random.default_rng(cfg.seed).random(2)
    return coherent_state(cfg.N, q0, p0)


def _spectrum_report(cfg: ExperimentConfig, results: dict, skipped: dict) -> dict:
    # the headline spectrum is the most accurate method that ran
    best = next(m for m in ("dense", "chord_truncation", "iteration") if m in results)
    head = results[best]
    report = {"config": _config_dict(cfg), "meta": head.meta, "method": best}
    report.update({"eigenvalues": head.to_dict()["eigenvalues"]})
    report["methods"] = {name: res.to_dict() for name, res in results.items()}
    pairs = _agreement(results)
    values = [v for v in pairs.values() if v is not None]
    report["method_agreement"] = max(values) if values else None
    report["method_agreement_pairs"] = pairs
    report["skipped"] = skipped
    return report


def run_spectrum(cfg: ExperimentConfig) -> dict:
    prop = _propagator(cfg.N, cfg.eps, cfg.k)
    results, skipped = {}, {}
    if cfg.eps == 0:
        skipped["iteration"] = "no spectral gap in the unitary regime"
    else:
        results["iteration"] = quantum_iteration_spectrum(prop, cfg.kiter, rho0=_seed_state(cfg))
    try:
        results["chord_truncation"] = chord_truncation_spectrum(prop)
    except ResourceGuardError as err:
        skipped["chord_truncation"] = str(err)
    try:
        results["dense"] = dense_spectrum(prop)
    except ResourceGuardError as err:
        skipped["dense"] = str(err)
    if not results:
        raise ResourceGuardError("; ".join(f"{k}: {v}" for k, v in skipped.items()))
    report = _spectrum_report(cfg, results, skipped)
    if cfg.eps == 0:
        report["unitary_regime"] = True
        moduli = np.abs(results[report["method"]].eigenvalues)
        report["max_unimodular_deviation"] = _finite(np.max(np.abs(moduli - 1)))
    return report


def run_classical(cfg: ExperimentConfig) -> dict:
    P = build_classical_propagator(cfg.L, cfg.eps, PerturbedCatParams(cfg.k))
    results, skipped = {}, {}
    results["iteration"] = classical_leading_spectrum(P, cfg.kiter, "moments")
    try:
        results["dense"] = classical_leading_spectrum(P, 2 * cfg.kiter, "dense")
    except ResourceGuardError as err:
        skipped["dense"] = str(err)
    return _spectrum_report(cfg, results, skipped)


def _stable_entries(res: SpectrumResult) -> list:
    return [e for e in res.to_dict()["eigenvalues"] if e["stable"]]


def run_compare(cfg: ExperimentConfig) -> dict:
    quantum = quantum_iteration_spectrum(_propagator(cfg.N, cfg.eps, cfg.k), cfg.kiter,
                                         rho0=_seed_state(cfg))
    P = build_classical_propagator(cfg.L, cfg.eps, PerturbedCatParams(cfg.k))
    classical = classical_leading_spectrum(P, cfg.kiter, "moments")
    q, c = _stable_entries(quantum), _stable_entries(classical)
    diff = [{"rank": i, "modulus_difference": a["modulus"] - b["modulus"],
             "relative": (a["modulus"] - b["modulus"]) / b["modulus"]}
            for i, (a, b) in enumerate(zip(q, c))]
    return {"config": _config_dict(cfg), "quantum_meta": quantum.meta, "classical_meta": classical.meta,
            "quantum": q, "classical": c, "diff": diff}


def _leading_log_modulus(prop, kiter) -> float | None:
    try:
        lam = quantum_iteration_spectrum(prop, kiter).leading_nontrivial()
    except NoOverlapError:
        return None
    return float(np.log(abs(lam)))


def _fit(fn, series, window):
    try:
        return {"slope": fn(series, *window), "window": list(window)}
    except ValueError as err:
        return {"slope": None, "window": list(window), "error": str(err)}


def _window(series, override, chooser, *args):
    if override is not None:
        return tuple(override)
    try:
        return chooser(series, *args)
    except ValueError:
        return None


def run_evolve(cfg: ExperimentConfig) -> tuple[dict, dict]:
    """Averaged time series (columns) and the fitted-slope sidecar."""
    prop = _propagator(cfg.N, cfg.eps, cfg.k)
    seed = 0 if cfg.seed is None else cfg.seed
    T = cfg.T

    def avg(fn):
        return averaged_series(fn, cfg.N, AVERAGED_STATES, seed)

    series = {
        "autocorrelation": avg(lambda r: autocorrelation_series(r, prop, T)),
        "linear_entropy": avg(lambda r: linear_entropy_series(r, prop, T, False)),
        "linear_entropy_subtracted": avg(lambda r: linear_entropy_series(r, prop, T, True)),
    }
    prop2 = None
    if cfg.command == "echo":
        prop2 = _propagator(cfg.N, cfg.eps, cfg.k2)
        series["loschmidt"] = avg(lambda r: loschmidt_series(r, prop, prop2, T))
    columns = {"n": np.arange(T + 1)}
    columns.update({name: s.values for name, s in series.items()})

    fits, windows = {}, {}
    plan = [("autocorrelation", fit_decay_rate, True), ("linear_entropy_subtracted", fit_slope, False)]
    if prop2 is not None:
        plan.append(("loschmidt", fit_decay_rate, True))
    for name, fn, log_scale in plan:
        w = _window(series[name], cfg.late_window, late_window, log_scale)
        windows[name] = list(w) if w else None
        fits[name] = _fit(fn, series[name], w) if w else {"slope": None, "error": "no usable late window"}
    w = _window(series["linear_entropy"], cfg.early_window, presaturation_window, cfg.N)
    windows["linear_entropy_early"] = list(w) if w else None
    fits["linear_entropy_early"] = (_fit(fit_slope, series["linear_entropy"], w) if w else
                                    {"slope": None, "error": "fewer than 4 steps before saturation"})

    ln1 = _leading_log_modulus(prop, cfg.kiter) if cfg.eps > 0 else None
    refs = {"ln_lambda1": ln1, "lyapunov_exponent": lyapunov_exponent()}
    expected = {"autocorrelation": ln1, "linear_entropy_subtracted": None if ln1 is None else -2 * ln1,
                "linear_entropy_early": lyapunov_exponent()}
    if prop2 is not None:
        ln2 = _leading_log_modulus(prop2, cfg.kiter) if cfg.eps > 0 else None
        refs["ln_lambda1_prime"] = ln2
        expected["loschmidt"] = None if ln1 is None or ln2 is None else ln1 + ln2
    sidecar = {"config": _config_dict(cfg), "states": AVERAGED_STATES, "seed": seed,
               "slopes": fits, "expected_slopes": expected, "references": refs, "windows": windows,
               "truncated": any(s.meta.get("truncated", False) for s in series.values())}
    return columns, sidecar


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False, default=_json_default) + "\n"


def _json_default(x):
    if isinstance(x, (np.floating,)):
        return _finite(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _csv_text(columns: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    names = list(columns)
    writer.writerow(names)
    for row in zip(*(columns[n] for n in names)):
        writer.writerow([str(int(v)) if name == "n" else f"{float(v):.17g}" for name, v in zip(names, row)])
    return buf.getvalue()


def _spectrum_csv(report: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["method", "rank", "re", "im", "modulus", "stable"])
    methods = report.get("methods") or {"quantum": {"eigenvalues": report["quantum"]},
                                        "classical": {"eigenvalues": report["classical"]}}
    for name, res in methods.items():
        for i, e in enumerate(res["eigenvalues"]):
            writer.writerow([name, i, f"{e['re']:.17g}", f"{e['im']:.17g}", f"{e['modulus']:.17g}",
                             int(e["stable"])])
    return buf.getvalue()


def sidecar_path(out: str) -> str:
    return out + ".json"


def write_atomic(files: dict) -> None:
    """Write every (path -> text) entry to a temp file, then rename them all."""
    staged = []
    try:
        for path, text in files.items():
            directory = os.path.dirname(os.path.abspath(path))
            fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
            staged.append((tmp, path))
    except BaseException:
        for tmp, _ in staged:
            os.unlink(tmp)
        raise
    for tmp, path in staged:
        os.replace(tmp, path)


def execute(cfg: ExperimentConfig, out: str) -> dict:
    """Run the experiment and return {path: text} without touching disk."""
    fmt = cfg.output_format
    if cfg.command in ("evolve", "echo"):
        columns, sidecar = run_evolve(cfg)
        if fmt == "csv":
            return {out: _csv_text(columns), sidecar_path(out): _json_text(sidecar)}
        sidecar["series"] = {k: v for k, v in columns.items()}
        return {out: _json_text(sidecar)}
    runner = {"spectrum": run_spectrum, "classical": run_classical, "compare": run_compare}[cfg.command]
    report = runner(cfg)
    if fmt == "csv":
        return {out: _spectrum_csv(report), sidecar_path(out): _json_text(report)}
    return {out: _json_text(report)}


def main(argv=None) -> int:
    try:
        cfg, out = parse_config(sys.argv[1:] if argv is None else argv)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        files = execute(cfg, out)
    except ResourceGuardError as err:
        print(f"resource guard: {err}", file=sys.stderr)
        return EXIT_GUARD
    except (NoOverlapError, QuantizationError, ArithmeticError, np.linalg.LinAlgError, ValueError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    write_atomic(files)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
