"""Command-line entry point.

Subcommands: simulate | verify | moments | hankel | certificate | optimize |
tails.  Every run is driven by a RunConfig (flags, optionally preloaded from
a --config JSON file with identical keys; explicit flags win).  Artifacts
are written atomically, embed {tool version, config echo, seed} and carry no
timestamps, so equal configs give byte-identical outputs; a ``<out>.log``
sidecar records wall-clock info instead.

Exit codes: 0 success / all checks passed, 1 verification failure, 2 usage
or I/O error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import __version__, core, empirics, moments, simulate
from . import certificates as certs

SUBCOMMANDS = ("simulate", "verify", "moments", "hankel", "certificate", "optimize", "tails")

_DEFAULTS: dict[str, dict[str, Any]] = {
    "simulate": {"seed": 0, "format": "qhe", "pascal_q": 0.5, "workers": 1},
    "verify": {"seed": 0, "format": "json", "bins": 40},
    "moments": {"seed": 0, "format": "json", "eta": 0.0, "theta": 0.0, "sigma": 0.0,
                "tau": 0.0, "gamma": 1.0, "t": 1.0},
    "hankel": {"seed": 0, "format": "json"},
    "certificate": {"seed": 0, "format": "json", "mode": "paper"},
    "optimize": {"seed": 0, "format": "json", "budget": 2048, "knobs": "exact-k"},
    "tails": {"seed": 0, "format": "json", "raw": False},
}

_REQUIRED: dict[str, tuple[str, ...]] = {
    "simulate": ("process", "grid", "paths", "out"),
    "verify": ("ensemble", "s", "t"),
    "moments": (),
    "hankel": ("moments",),
    "certificate": ("p",),
    "optimize": ("p",),
    "tails": ("ensemble", "s", "t"),
}


@dataclass
class RunConfig:
    """A fully-resolved invocation: subcommand plus its parameter map."""

    command: str
    params: dict[str, Any] = field(default_factory=dict)
    seed: int = 0
    out: str | None = None
    format: str = "json"

    def to_dict(self) -> dict[str, Any]:
        return {
            "command": self.command,
            "params": dict(self.params),
            "seed": self.seed,
            "out": self.out,
            "format": self.format,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RunConfig":
        return cls(
            command=d["command"],
            params=dict(d["params"]),
            seed=d["seed"],
            out=d["out"],
            format=d["format"],
        )


def _float_list(value) -> list[float]:
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    parts = [p for p in str(value).split(",") if p.strip() != ""]
    if not parts:
        raise ValueError("expected a comma-separated list of numbers")
    return [float(p) for p in parts]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qharness",
        description="Quadratic-harness conditional moments, integrability "
        "certificates and Monte Carlo verification.",
    )
    parser.add_argument("--version", action="version", version=f"qharness {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND")

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", default=None,
                       help="JSON file with the same keys as the flags; explicit flags override")
        p.add_argument("--seed", type=int, default=None, help="seed recorded in every artifact")
        p.add_argument("--out", default=None, help="output path (stdout if omitted)")
        p.add_argument("--format", default=None, help="output format")

    p = sub.add_parser(
        "simulate",
        help="sample a seeded ensemble of a centered Levy martingale "
        "(mean 0, covariance min(s,t), martingale increments)",
    )
    p.add_argument("--process", choices=simulate.KINDS, default=None,
                   help="wiener | poisson | gamma | pascal")
    p.add_argument("--pascal-q", type=float, default=None,
                   help="success probability of the pascal kind (default 0.5)")
    p.add_argument("--grid", default=None, help="comma-separated ascending times")
    p.add_argument("--paths", type=int, default=None, help="number of sample paths")
    p.add_argument("--workers", type=int, default=None,
                   help="worker threads (never changes the sampled values)")
    add_common(p)

    p = sub.add_parser(
        "verify",
        help="check an ensemble against the closed-form conditional moments: "
        "covariance min(s,t), one-sided means, and the quadratic "
        "conditional-variance coefficients",
    )
    p.add_argument("ensemble", help="ensemble container written by simulate")
    p.add_argument("--s", type=float, default=None, help="earlier grid time")
    p.add_argument("--t", type=float, default=None, help="later grid time")
    p.add_argument("--bins", type=int, default=None, help="quantile bins (default 40)")
    add_common(p)

    p = sub.add_parser(
        "moments",
        help="moment-order thresholds, region classification, the closed-form "
        "order-3 Hankel determinant, and the forced two-point law at gamma=-1",
    )
    for flag in ("eta", "theta", "sigma", "tau", "gamma"):
        p.add_argument(f"--{flag}", type=float, default=None)
    p.add_argument("--t", type=float, default=None, help="marginal time (default 1)")
    p.add_argument("--s", type=float, default=None,
                   help="with --t/--u: also report the two-sided variance scale")
    p.add_argument("--u", type=float, default=None)
    add_common(p)

    p = sub.add_parser(
        "hankel",
        help="order-3 Hankel determinant of a moment vector m0..m4; for a "
        "centered vector also the two-point reconstruction it forces when zero",
    )
    p.add_argument("--moments", default=None, help="comma-separated m0,m1,m2,m3,m4")
    add_common(p)

    p = sub.add_parser(
        "certificate",
        help="explicit-constant certificate for the moment-integrability chain "
        "(tail recursion N(Kt) <= (c1/t^2+c2/t+q)N(t) plus the one-order lift)",
    )
    p.add_argument("--p", type=float, default=None, help="moment order to lift past")
    p.add_argument("--mode", choices=("paper", "exact"), default=None,
                   help="paper: the printed constant chain (240); "
                   "exact: sharply evaluated inequalities")
    p.add_argument("--sigma", type=float, default=None,
                   help="with --tau: evaluate the chain at delta=2*sqrt(sigma*tau)")
    p.add_argument("--tau", type=float, default=None)
    add_common(p)

    p = sub.add_parser(
        "optimize",
        help="search the chain's free parameters (rho, split weight, margin "
        "rule) for the smallest certified integrability constant",
    )
    p.add_argument("--p", type=float, default=None, help="moment order to lift past")
    p.add_argument("--knobs", default=None,
                   help="comma-separated subset of exact-k,exact-margin,rho,split")
    p.add_argument("--budget", type=int, default=None, help="candidate evaluation budget")
    add_common(p)

    p = sub.add_parser(
        "tails",
        help="empirical two-variable tail curve N(t)=Pr(|X|>t)+Pr(|Y|>t) and "
        "Hill tail-index estimate",
    )
    p.add_argument("ensemble", help="ensemble container written by simulate")
    p.add_argument("--s", type=float, default=None, help="earlier grid time")
    p.add_argument("--t", type=float, default=None, help="later grid time")
    p.add_argument("--thresholds", default=None,
                   help="comma-separated ascending thresholds (default: data-driven ladder)")
    p.add_argument("--k", type=int, default=None,
                   help="Hill order-statistics count (default n//100)")
    p.add_argument("--raw", action="store_true", default=None,
                   help="skip the X_s/sqrt(s), X_t/sqrt(t) standardization")
    add_common(p)

    return parser


def parse_args(argv: list[str]) -> RunConfig:
    """Parse argv (raises SystemExit(2) on usage errors, ValueError on bad values)."""
    parser = _build_parser()
    ns = parser.parse_args(argv)
    if ns.command is None:
        parser.error("a subcommand is required")

    raw = {k: v for k, v in vars(ns).items() if k not in ("command", "config")}
    merged = dict(_DEFAULTS[ns.command])

    if ns.config is not None:
        with open(ns.config, "r", encoding="utf-8") as fh:
            file_cfg = json.load(fh)
        if not isinstance(file_cfg, dict):
            raise ValueError(f"{ns.config}: config must be a JSON object")
        known = set(raw) | set(_DEFAULTS[ns.command]) | {"out", "format", "seed"}
        unknown = set(file_cfg) - known
        if unknown:
            raise ValueError(f"{ns.config}: unknown keys {sorted(unknown)}")
        merged.update(file_cfg)

    merged.update({k: v for k, v in raw.items() if v is not None})

    missing = [k for k in _REQUIRED[ns.command] if merged.get(k) is None]
    if missing:
        parser.error(f"{ns.command}: missing required flags: {', '.join(missing)}")

    out = merged.pop("out", None)
    fmt = merged.pop("format")
    seed = int(merged.pop("seed"))
    merged["seed"] = seed
    return RunConfig(command=ns.command, params=merged, seed=seed, out=out, format=fmt)


# ---------------------------------------------------------------------------
# artifact emission


def _jsonify(obj):
    if isinstance(obj, dict):
        return {k: _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        if math.isnan(f):
            return "nan"
        return f
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonify(v) for v in obj.tolist()]
    return obj


def _atomic_write(path: str, data: bytes) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".qharness-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(config: RunConfig, results: dict, csv_rows: tuple[list[str], list[list]] | None = None) -> None:
    """Write (or print) the artifact; JSON unless format=csv and rows exist."""
    artifact = {
        "version": __version__,
        "command": config.command,
        "seed": config.seed,
        "config": _jsonify(config.params),
        "results": _jsonify(results),
    }
    if config.format == "csv" and csv_rows is not None:
        header, rows = csv_rows
        lines = [
            f"# version={__version__}",
            f"# command={config.command}",
            f"# seed={config.seed}",
            f"# config={json.dumps(_jsonify(config.params), sort_keys=True)}",
            ",".join(header),
        ]
        for row in rows:
            lines.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in row))
        payload = ("\n".join(lines) + "\n").encode()
    else:
        payload = (json.dumps(artifact, indent=2, sort_keys=True) + "\n").encode()

    if config.out is None:
        sys.stdout.write(payload.decode())
    else:
        _atomic_write(config.out, payload)


def _sidecar(config: RunConfig, started: float) -> None:
    if config.out is None:
        return
    line = (
        f"command={config.command} out={config.out} "
        f"wall_clock={time.strftime('%Y-%m-%dT%H:%M:%S%z')} "
        f"elapsed_s={time.monotonic() - started:.3f}\n"
    )
    with open(config.out + ".log", "a", encoding="utf-8") as fh:
        fh.write(line)


# ---------------------------------------------------------------------------
# subcommand handlers


def _params_from(cfg: dict) -> core.HarnessParams:
    return core.HarnessParams(
        eta=float(cfg["eta"]),
        theta=float(cfg["theta"]),
        sigma=float(cfg["sigma"]),
        tau=float(cfg["tau"]),
        gamma=float(cfg["gamma"]),
    )


def _run_simulate(config: RunConfig) -> int:
    cfg = config.params
    kind = simulate.ProcessKind(
        cfg["process"], float(cfg["pascal_q"]) if cfg["process"] == "pascal" else None
    )
    grid = _float_list(cfg["grid"])
    ens = simulate.sample_ensemble(
        kind, grid, int(cfg["paths"]), config.seed, n_workers=int(cfg["workers"])
    )
    if config.out is None:
        raise ValueError("simulate requires --out")
    if config.format == "qhe":
        writer = simulate.save_ensemble
    elif config.format == "csv":
        writer = simulate.ensemble_to_csv
    else:
        raise ValueError(f"simulate format must be qhe|csv, got {config.format!r}")
    d = os.path.dirname(os.path.abspath(config.out))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".qharness-")
    os.close(fd)
    try:
        writer(ens, tmp)
        os.replace(tmp, config.out)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return 0


def _check(name: str, value: float, expected: float, se: float, max_se: float) -> dict:
    dev = abs(value - expected) / se if se > 0 else (0.0 if value == expected else math.inf)
    return {
        "test": name,
        "value": value,
        "expected": expected,
        "se": se,
        "statistic": dev,
        "tolerance": max_se,
        "pass": bool(dev <= max_se),
    }


def _run_verify(config: RunConfig) -> int:
    cfg = config.params
    ens = simulate.load_ensemble(cfg["ensemble"])
    si = ens.time_index(float(cfg["s"]))
    ti = ens.time_index(float(cfg["t"]))
    if si >= ti:
        raise ValueError("need s < t")
    s, t = float(ens.grid[si]), float(ens.grid[ti])
    p = simulate.known_params(ens.kind)

    checks = []
    for (i, j, label) in ((si, si, f"covariance({s},{s})"),
                          (si, ti, f"covariance({s},{t})"),
                          (ti, ti, f"covariance({t},{t})")):
        val, se = empirics.empirical_covariance(ens, i, j)
        expected = core.covariance(float(ens.grid[i]), float(ens.grid[j]))
        checks.append(_check(label, val, expected, se, 5.0))

    for direction in ("forward", "backward"):
        sl = empirics.conditional_mean_slope(ens, si, ti, direction)
        checks.append(_check(f"mean-slope-{direction}", sl.slope, sl.predicted, sl.se, 3.0))

    binned = empirics.estimate_conditional(ens, si, ti, int(cfg["bins"]), "backward")
    fit = empirics.fit_quadratic(binned)
    pref = s * (t - s) / (t + p.tau)
    preds = (pref, pref * p.theta / t, pref * p.tau / (t * t))
    for coef, se_c, pred, label in zip(
        (fit.c0, fit.c1, fit.c2), fit.se, preds, ("c0", "c1", "c2")
    ):
        checks.append(_check(f"backward-quadratic-{label}", coef, pred, se_c, 3.0))

    lotv = np.array([core.var_backward(p, s, t, float(x)).value for x in ens.paths[:, ti]])
    checks.append(
        _check("law-of-total-variance-backward", float(lotv.mean()), s * (t - s) / t,
               float(lotv.std(ddof=1) / math.sqrt(lotv.size)), 4.0)
    )

    all_pass = all(c["pass"] for c in checks)
    results = {
        "ensemble": {"kind": ens.kind.name, "q": ens.kind.q, "seed": ens.seed,
                     "n_paths": ens.n_paths, "grid": ens.grid.tolist()},
        "s": s,
        "t": t,
        "checks": checks,
        "binned": binned.rows(),
        "fit": {"c0": fit.c0, "c1": fit.c1, "c2": fit.c2, "r_squared": fit.r_squared},
        "pass": all_pass,
    }
    header = ["bin_lo", "bin_hi", "n", "mean", "var", "se_mean", "se_var", "pred_mean", "pred_var"]
    rows = [[r[h] for h in header] for r in binned.rows()]
    _emit(config, results, (header, rows))
    return 0 if all_pass else 1


def _run_moments(config: RunConfig) -> int:
    cfg = config.params
    p = _params_from(cfg)
    warnings = core.validate_params(p)
    region = moments.classify_moment_region(p)
    t = float(cfg["t"])

    results: dict[str, Any] = {
        "params": {"eta": p.eta, "theta": p.theta, "sigma": p.sigma, "tau": p.tau,
                   "gamma": p.gamma},
        "t": t,
        "warnings": warnings,
        "region": {"region": region.region, "bound": region.bound},
        "pmax_certified": moments.pmax_certified(p.sigma, p.tau),
        "pfail_upper": moments.pfail_upper(p.sigma, p.tau),
    }
    try:
        results["hankel3_closed_form"] = moments.hankel3_closed_form(p, t)
    except ValueError as exc:
        results["hankel3_closed_form"] = None
        results["hankel3_closed_form_error"] = str(exc)

    if p.gamma == -1.0:
        law = moments.two_point_from_moments(t, 0.0)
        results["two_point"] = {
            "third_moment_assumed": 0.0,
            "atom_lo": law.atom_lo,
            "atom_hi": law.atom_hi,
            "weight_lo": law.weight_lo,
            "weight_hi": law.weight_hi,
        }

    if cfg.get("s") is not None and cfg.get("u") is not None:
        s, u = float(cfg["s"]), float(cfg["u"])
        results["two_sided"] = {
            "scale": core.double_var_scale(p, s, t, u),
            "brownian_reference": (u - t) * (t - s) / (u - s),
        }

    _emit(config, results)
    return 0


def _run_hankel(config: RunConfig) -> int:
    cfg = config.params
    vals = _float_list(cfg["moments"])
    if len(vals) != 5:
        raise ValueError(f"--moments needs exactly 5 values m0..m4, got {len(vals)}")
    mv = moments.MomentVector(*vals)
    det = moments.hankel3(mv)
    results: dict[str, Any] = {"moments": vals, "determinant": det, "nonneg": bool(det >= -1e-10)}
    if mv.m1 == 0.0 and mv.m2 > 0.0:
        law = moments.two_point_from_moments(mv.m2, mv.m3)
        results["two_point"] = {
            "atom_lo": law.atom_lo,
            "atom_hi": law.atom_hi,
            "weight_lo": law.weight_lo,
            "weight_hi": law.weight_hi,
            "reproduces_m4": bool(abs(law.moment(4) - mv.m4) <= 1e-10 * max(1.0, abs(mv.m4))),
        }
    _emit(config, results)
    return 0


def _run_certificate(config: RunConfig) -> int:
    cfg = config.params
    p = float(cfg["p"])
    mode = cfg["mode"]
    sigma, tau = cfg.get("sigma"), cfg.get("tau")
    results: dict[str, Any] = {}
    if (sigma is None) != (tau is None):
        raise ValueError("--sigma and --tau must be given together")
    if sigma is not None:
        emb = certs.embedding(float(sigma), float(tau), certs.rho_for_order(p))
        cert = certs.make_certificate(p, contraction_rule=mode, delta=emb.delta)
        results["embedding"] = {"s": emb.s, "t": emb.t, "delta": emb.delta,
                                "check_rho": emb.check_rho}
        results["order_condition"] = {
            "lhs": (p + 1.0) * math.sqrt(float(sigma) * float(tau)),
            "rhs": 1.0 / cert.constant,
            "within": (p + 1.0) * math.sqrt(float(sigma) * float(tau)) <= 1.0 / cert.constant,
        }
    else:
        cert = certs.make_certificate(p, contraction_rule=mode)
    results.update(cert.to_json_dict())
    _emit(config, results)
    return 0 if cert.valid else 1


def _run_optimize(config: RunConfig) -> int:
    cfg = config.params
    knobs = [k.strip() for k in str(cfg["knobs"]).split(",") if k.strip()]
    cert = certs.optimize_constant(
        float(cfg["p"]), knobs, budget=int(cfg["budget"]), seed=config.seed
    )
    results = {"knobs": knobs, "budget": int(cfg["budget"])}
    results.update(cert.to_json_dict())
    _emit(config, results)
    return 0 if cert.valid else 1


def _run_tails(config: RunConfig) -> int:
    cfg = config.params
    ens = simulate.load_ensemble(cfg["ensemble"])
    si = ens.time_index(float(cfg["s"]))
    ti = ens.time_index(float(cfg["t"]))
    normalize = not bool(cfg.get("raw"))

    if cfg.get("thresholds") is not None:
        thresholds = np.array(_float_list(cfg["thresholds"]))
    else:
        x = np.abs(ens.paths[:, ti])
        if normalize:
            x = x / math.sqrt(float(ens.grid[ti]))
        lo = max(float(np.quantile(x, 0.5)), 1e-9)
        hi = max(float(np.quantile(x, 0.995)), lo * 2.0)
        thresholds = np.geomspace(lo, hi, 50)

    curve = empirics.tail_curve(ens, si, ti, thresholds, normalize=normalize)
    samples = ens.paths[:, ti]
    k = int(cfg["k"]) if cfg.get("k") is not None else max(1, ens.n_paths // 100)
    hill_info: dict[str, Any]
    try:
        hill = empirics.hill_tail_index(samples, k)
        hill_info = {"alpha": hill.alpha, "ci_low": hill.ci_low, "ci_high": hill.ci_high,
                     "k": hill.k, "n": hill.n}
    except ValueError as exc:
        hill_info = {"error": str(exc)}

    results = {
        "ensemble": {"kind": ens.kind.name, "q": ens.kind.q, "seed": ens.seed,
                     "n_paths": ens.n_paths},
        "s": float(ens.grid[si]),
        "t": float(ens.grid[ti]),
        "normalized": normalize,
        "thresholds": curve.thresholds.tolist(),
        "n_values": curve.n_values.tolist(),
        "n_samples": curve.n_samples,
        "hill": hill_info,
    }
    header = ["threshold", "n_value"]
    rows = [[float(a), float(b)] for a, b in zip(curve.thresholds, curve.n_values)]
    _emit(config, results, (header, rows))
    return 0


_HANDLERS = {
    "simulate": _run_simulate,
    "verify": _run_verify,
    "moments": _run_moments,
    "hankel": _run_hankel,
    "certificate": _run_certificate,
    "optimize": _run_optimize,
    "tails": _run_tails,
}


def run(config: RunConfig) -> int:
    """Dispatch a resolved config; returns the process exit code."""
    started = time.monotonic()
    try:
        code = _HANDLERS[config.command](config)
    except (ValueError, OSError, np.linalg.LinAlgError) as exc:
        print(f"qharness {config.command}: error: {exc}", file=sys.stderr)
        return 2
    _sidecar(config, started)
    return code


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        config = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"qharness: error: {exc}", file=sys.stderr)
        return 2
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
