"""Command-line front end.

Subcommands: qfi, scan, loss, simulate.  Every option can also come from a
``key = value`` config file given with --config; flags win over the file.
Exit codes: 0 success, 2 usage or invalid parameters, 3 I/O, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from . import __version__
from .errors import DomainError, NumericalError
from .gaussian_engine import LossScenario, lossy_advantage, lossy_qfi_closed_form, lossy_qfi_pipeline
from .measurement import crb_monte_carlo, sample_uv
from .qfi_quantum import (
    DEFAULT_THRESHOLD,
    figure2_profile,
    figure3_grid,
    log_classical_matched_qfi,
    log_normalized_qfi,
    mean_energy,
    pulse_duration_sq,
    qfi_quantum,
    regime_report,
)
from .spectral import SpectralParams

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4
MANIFEST_LINES = 8


class UsageError(Exception):
    pass


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in str(text).replace(" ", "").split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


@dataclass(frozen=True)
class Opt:
    name: str
    type: Callable[[str], Any]
    default: Any
    help: str


COMMON = [
    Opt("omega0", float, 1.0, "pump carrier frequency"),
    Opt("bw", float, 0.01, "relative bandwidth sqrt(sigma*epsilon)/omega0"),
    Opt("threads", int, None, "worker threads (default: QDLIDAR_THREADS or 1)"),
]

OPTIONS: dict[str, list[Opt]] = {
    "qfi": [
        Opt("xi", float, 1.0, "squeezing parameter"),
        Opt("K", float, 1.0, "Schmidt number"),
        Opt("mu", float, 1.0, "Doppler parameter"),
        Opt("threshold", float, DEFAULT_THRESHOLD, "regime separation factor"),
        Opt("output", str, None, "write the JSON report here as well as to stdout"),
    ],
    "scan": [
        Opt("out_dir", str, ".", "directory for the CSV files"),
        Opt("fig2_K", _float_list, [10.0, 20.0], "Schmidt numbers for the squeezing profiles"),
        Opt("fig2_points", int, 121, "xi points per profile"),
        Opt("fig2_xi_min", float, 1.0, "smallest xi of the profiles"),
        Opt("fig2_decades_past", float, 3.0, "profiles extend to 10^d * K^1.5"),
        Opt("fig3_points", int, 100, "grid points per axis of the (xi, K) map"),
        Opt("fig3_max", float, 100.0, "largest xi and K of the map"),
        Opt("skip_fig2", int, 0, "1 to skip the profiles"),
        Opt("skip_fig3", int, 0, "1 to skip the map"),
    ],
    "loss": [
        Opt("N0", float, 1e3, "photons in Schmidt mode 0"),
        Opt("N1", float, 1e2, "photons in Schmidt mode 1"),
        Opt("etas", _float_list, [round(0.1 * k, 10) for k in range(11)], "transmissivities"),
        Opt("mu0", float, 1.0, "prior Doppler parameter"),
        Opt("output", str, "loss.csv", "CSV path"),
    ],
    "simulate": [
        Opt("mu", float, 1.0, "true Doppler parameter"),
        Opt("xi", float, 0.05, "squeezing parameter (two-photon regime)"),
        Opt("K", float, 10.0, "Schmidt number"),
        Opt("M", int, 10_000, "detected pairs per replication"),
        Opt("replications", int, 200, "Monte Carlo replications"),
        Opt("seed", int, 12345, "RNG seed"),
        Opt("band_low", float, 0.9, "lower edge of the Var*M*F band"),
        Opt("band_high", float, 1.1, "upper edge of the Var*M*F band"),
        Opt("output", str, None, "write the JSON report here as well as to stdout"),
        Opt("events_csv", str, None, "export the first replication's events"),
    ],
}


def _opts(cmd: str) -> list[Opt]:
    return COMMON + OPTIONS[cmd]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qdlidar", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"qdlidar {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "qfi": "QFI breakdown, classical benchmark, regime and asymptotics for one point",
        "scan": "write squeezing-profile and (xi, K) map CSVs",
        "loss": "lossy QFI sweep over transmissivity",
        "simulate": "Monte Carlo check of the Cramer-Rao bound for photon counting",
    }
    for cmd in OPTIONS:
        p = sub.add_parser(cmd, help=helps[cmd])
        p.add_argument("--config", help="key = value file; flags override it")
        for o in _opts(cmd):
            flag = "--" + o.name.replace("_", "-")
            p.add_argument(flag, dest=o.name, type=o.type, default=argparse.SUPPRESS,
                           help=f"{o.help} (default: {o.default})")
    return parser


def read_config(path: str, cmd: str) -> dict[str, Any]:
    known = {o.name: o for o in _opts(cmd)}
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    out: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (t.strip() for t in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r} for '{cmd}'")
        try:
            out[key] = known[key].type(value)
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return out


def resolve_config(cmd: str, ns: argparse.Namespace) -> dict[str, Any]:
    cfg = {o.name: o.default for o in _opts(cmd)}
    if getattr(ns, "config", None):
        cfg.update(read_config(ns.config, cmd))
    for o in _opts(cmd):
        if hasattr(ns, o.name):
            cfg[o.name] = getattr(ns, o.name)
    return cfg


def _num(x: float) -> str:
    return format(float(x), ".17g")


def _json_safe(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        return _json_safe(obj.item())
    return obj


def _manifest_config(cfg: dict[str, Any]) -> dict[str, Any]:
    # thread count and output paths do not change results
    return {k: v for k, v in sorted(cfg.items()) if k not in ("threads", "output", "out_dir", "events_csv")}


def _manifest(cmd: str, name: str, cfg: dict, columns: list[str], notes: list[str], rows: int) -> list[str]:
    lines = [
        f"# qdlidar {__version__} {cmd}",
        f"# file: {name}",
        "# config: " + json.dumps(_json_safe(_manifest_config(cfg)), sort_keys=True),
        "# columns: " + ",".join(columns),
        f"# rows: {rows}",
    ]
    lines += [f"# {n}" for n in notes]
    if len(lines) > MANIFEST_LINES:
        raise AssertionError("manifest too long")
    lines += ["#"] * (MANIFEST_LINES - len(lines))
    return lines


def write_csv(path: str, header: list[str], columns: list[str], rows: list[list[float]]) -> None:
    buf = io.StringIO()
    for h in header:
        buf.write(h + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_num(x) for x in r])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def _emit_json(report: dict, output: str | None) -> None:
    text = json.dumps(_json_safe(report), indent=2, sort_keys=True)
    print(text)
    if output:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")


def _exp(v: float) -> float:
    return math.exp(v) if v < 709.0 else math.inf


def cmd_qfi(cfg: dict) -> int:
    p = SpectralParams.from_schmidt_number(cfg["K"], cfg["bw"], omega0=cfg["omega0"],
                                           xi=cfg["xi"], mu=cfg["mu"])
    b = qfi_quantum(p)
    report: dict[str, Any] = {
        "config": dict(sorted(cfg.items())),
        "sigma": p.sigma,
        "epsilon": p.epsilon,
        "schmidt_number": p.schmidt_number,
        "log_z_omega": b.log_z_omega,
        "log_z_sigma": b.log_z_sigma,
        "z_omega": b.z_omega,
        "z_sigma": b.z_sigma,
        "log_j_q": b.log_j_q,
        "j_q": b.j_q,
        "bandwidth_share": b.bandwidth_share,
        "n_terms_used": b.n_terms_used,
        "tail_bound": b.tail_bound,
        "log_signal_photon_number": b.log_n_s,
        "signal_photon_number": _exp(b.log_n_s),
        "mean_energy": mean_energy(p),
    }
    if p.xi > 0:
        rep = regime_report(p, cfg["threshold"])
        log_jc = log_classical_matched_qfi(p)
        report.update({
            "pulse_duration_sq": pulse_duration_sq(p),
            "log_j_c": log_jc,
            "j_c": _exp(log_jc),
            "log_ratio": rep.log_exact_ratio,
            "ratio": rep.exact_ratio,
            "regime": rep.regime.value,
            "log_asymptotic_ratio": rep.log_asymptotic_ratio,
            "asymptotic_ratio": rep.asymptotic_ratio,
            "relative_gap": rep.relative_gap,
            "log_normalized_qfi": log_normalized_qfi(p),
            "normalized_qfi": _exp(log_normalized_qfi(p)),
        })
    else:
        report["regime"] = None
    _emit_json(report, cfg["output"])
    return EXIT_OK


def cmd_scan(cfg: dict) -> int:
    out_dir = cfg["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    written = []
    if not cfg["skip_fig2"]:
        for K in cfg["fig2_K"]:
            top = 10.0 ** cfg["fig2_decades_past"] * K ** 1.5
            xi = np.geomspace(cfg["fig2_xi_min"], top, cfg["fig2_points"])
            prof = figure2_profile(K, xi, bandwidth=cfg["bw"], omega0=cfg["omega0"], threads=cfg["threads"])
            name = f"fig2_K{K:g}.csv"
            cols = ["xi", "norm_freq", "norm_bw", "norm_freq_corrected", "norm_bw_corrected"]
            rows = np.column_stack([xi, prof.norm_freq, prof.norm_bw,
                                    prof.norm_freq_corrected, prof.norm_bw_corrected]).tolist()
            header = _manifest("scan", name, cfg, cols, [
                f"K = {K:g}; norm = 8 Z / (4 N_S)^q, q = sqrt((K-1)/(K+1))",
                "corrected columns divide by (4 N_S)^(1+q)",
            ], len(rows))
            path = os.path.join(out_dir, name)
            write_csv(path, header, cols, rows)
            written.append(path)
    if not cfg["skip_fig3"]:
        axis = np.linspace(1.0, cfg["fig3_max"], cfg["fig3_points"])
        grid = figure3_grid(axis, axis, bandwidth=cfg["bw"], omega0=cfg["omega0"], threads=cfg["threads"])
        name = "fig3_grid.csv"
        cols = ["xi", "K", "normalized_qfi"]
        vals = grid.values
        rows = [[x, k, vals[i, j]] for i, x in enumerate(grid.xi) for j, k in enumerate(grid.K)]
        header = _manifest("scan", name, cfg, cols, [
            "normalized_qfi = 2 mu^2 sigma eps / omega0^2 * J_q / N_S^2 (unclipped)",
            "mu = 1",
        ], len(rows))
        path = os.path.join(out_dir, name)
        write_csv(path, header, cols, rows)
        written.append(path)
    for p in written:
        print(p)
    return EXIT_OK


def cmd_loss(cfg: dict) -> int:
    params = SpectralParams.from_schmidt_number(1.0, cfg["bw"], omega0=cfg["omega0"])
    rows = []
    for eta in cfg["etas"]:
        sc = LossScenario(eta, cfg["mu0"], cfg["N0"], cfg["N1"], params)
        adv = lossy_advantage(sc)
        rows.append([
            eta,
            lossy_qfi_closed_form(sc),
            lossy_qfi_pipeline(sc),
            adv.exact,
            math.nan if adv.asymptote is None else adv.asymptote,
        ])
    cols = ["eta", "J_closed", "J_pipeline", "ratio_exact", "ratio_asymptote"]
    header = _manifest("loss", os.path.basename(cfg["output"]), cfg, cols, [
        "classical benchmark attenuated by eta; ratio_asymptote = 1/(1-eta)",
    ], len(rows))
    write_csv(cfg["output"], header, cols, rows)
    print(cfg["output"])
    return EXIT_OK


def cmd_simulate(cfg: dict) -> int:
    if cfg["M"] < 1:
        raise DomainError(f"M must be at least 1, got {cfg['M']}")
    if cfg["replications"] < 2:
        raise DomainError("need at least two replications")
    p = SpectralParams.from_schmidt_number(cfg["K"], cfg["bw"], omega0=cfg["omega0"],
                                           xi=cfg["xi"], mu=cfg["mu"])
    rep = crb_monte_carlo(cfg["mu"], p, cfg["M"], cfg["replications"], cfg["seed"],
                          band=(cfg["band_low"], cfg["band_high"]), threads=cfg["threads"])
    d = rep.to_dict()
    report = {
        "config": dict(sorted(cfg.items())),
        "mu_true": rep.mu_true,
        "mu_hat": rep.mean_mu_hat,
        "M": rep.M,
        "seed": rep.seed,
        "fisher_info": rep.fisher_info,
        "variance": rep.variance,
        "var_M_F": rep.normalized_variance,
        "crb_check": d,
        "passed": rep.passed,
    }
    if cfg["events_csv"]:
        om, omt = sample_uv(cfg["mu"], p, cfg["M"], cfg["seed"], 0)
        with open(cfg["events_csv"], "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["omega", "omega_tilde"])
            for a, b in zip(om, omt):
                w.writerow([_num(a), _num(b)])
    _emit_json(report, cfg["output"])
    return EXIT_OK


COMMANDS = {"qfi": cmd_qfi, "scan": cmd_scan, "loss": cmd_loss, "simulate": cmd_simulate}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        cfg = resolve_config(ns.command, ns)
        return COMMANDS[ns.command](cfg)
    except (UsageError, DomainError) as exc:
        print(f"qdlidar: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"qdlidar: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"qdlidar: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
