"""Command-line driver.

Every command reads an optional YAML config and command-line flags; flags win
over the config, the config wins over built-in defaults.  A config file looks
like::

    command: solve
    seed: 0
    workers: 1
    output: results/k.json
    plotdata: results/k.csv
    solve:
      mode: K_Dq
      d: 1
      R: 8
      m: 512

Exit codes: 0 success, 2 invalid configuration, 3 a solver flagged
non-convergence (results are still written), 4 I/O failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import replace
from typing import Any, Callable

import numpy as np
import yaml

from . import kernels, localtimes, scenery, spectral, tails
from .varsolve import (
    RateProblem,
    box_convergence_study,
    sandwich_violations,
    solve_chi,
    solve_K_Dq,
    solve_K_H,
    trial_sequence_chi_zero,
)

EXIT_OK, EXIT_INVALID, EXIT_NONCONVERGED, EXIT_IO = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# field converters


def _int_list(v) -> list[int]:
    if isinstance(v, str):
        v = [s for s in v.split(",") if s.strip()]
    out = [int(x) for x in (v if isinstance(v, (list, tuple)) else [v])]
    if not out:
        raise ConfigError("empty list")
    return out


def _float_list(v) -> list[float]:
    if isinstance(v, str):
        v = [s for s in v.split(",") if s.strip()]
    out = [float(x) for x in (v if isinstance(v, (list, tuple)) else [v])]
    if not out:
        raise ConfigError("empty list")
    return out


def _choice(*opts) -> Callable:
    def conv(v):
        if v not in opts:
            raise ConfigError(f"expected one of {opts}, got {v!r}")
        return v
    return conv


def _b_spec(v):
    """A fixed threshold, ``auto-smalldev:theta`` or ``large:u``."""
    if isinstance(v, (int, float)):
        return float(v)
    s = str(v)
    for prefix in ("auto-smalldev:", "large:"):
        if s.startswith(prefix):
            float(s[len(prefix):])
            return s
    return float(s)


def _scenery_spec(v):
    """``gaussian:sigma=1`` on the command line, a mapping in YAML."""
    if v is None or isinstance(v, dict):
        return v
    fam, _, rest = str(v).partition(":")
    params = {}
    for item in filter(None, rest.split(",")):
        k, _, val = item.partition("=")
        params[k.strip()] = float(val)
    return {"family": fam, "params": params}


def _kernel_spec(v):
    return v


def _matrix(v):
    if v is None:
        return None
    if isinstance(v, str):
        v = [[float(x) for x in row.split()] for row in v.split(";")]
    return [[float(x) for x in row] for row in v]


def _opt_path(v):
    return None if v in (None, "") else str(v)


WALK = {
    "d": (int, 2),
    "kernel": (_kernel_spec, None),
}
SCENERY_DEFAULT = {"family": "gaussian", "params": {"sigma": 1.0}}
SOLVER = {
    "mode": (_choice("chi", "K_Dq", "K_H"), "K_Dq"),
    "d": (int, 1),
    "gamma_matrix": (_matrix, None),
    "D": (float, 0.5),
    "q": (float, 2.0),
    "u": (float, 1.0),
    "scenery": (_scenery_spec, None),
    "R": (float, 8.0),
    "m": (int, 256),
    "bc": (_choice("dirichlet", "periodic"), "dirichlet"),
    "delta": (float, 0.0),
    "restarts": (int, 5),
    "max_iter": (int, 20000),
    "tol": (float, 1e-9),
}

SCHEMAS: dict[str, dict[str, tuple]] = {
    "simulate": {**WALK, "n": (_int_list, [1024]), "replicates": (int, 1000)},
    "tail": {
        **WALK,
        "method": (_choice("naive", "cond-gaussian", "exact"), "cond-gaussian"),
        "n": (int, 1024),
        "b": (_b_spec, "auto-smalldev:0.75"),
        "replicates": (int, 10000),
        "scenery": (_scenery_spec, SCENERY_DEFAULT),
    },
    "rate-table": {
        **WALK,
        "method": (_choice("naive", "cond-gaussian"), "cond-gaussian"),
        "n_list": (_int_list, [4096, 16384, 65536]),
        "b": (_b_spec, "auto-smalldev:0.75"),
        "replicates": (int, 10000),
        "scenery": (_scenery_spec, SCENERY_DEFAULT),
    },
    "solve": {**SOLVER, "export_minimizer": (_opt_path, None)},
    "spectral-check": {
        "kernel": (_kernel_spec, "srw-1d"),
        "potential": (_choice("gaussian-well", "cosine", "constant"), "gaussian-well"),
        "amplitude": (float, 2.0),
        "R": (float, 4.0),
        "alphas": (_float_list, [4.0, 8.0, 16.0]),
        "T": (_float_list, [4.0, 16.0, 64.0]),
        "bc": (_choice("dirichlet", "periodic"), "dirichlet"),
        "m": (int, 2048),
    },
    "trial-sequence": {"d": (int, 5), "p": (float, 2.0), "n": (_int_list, [10, 100, 1000]), "decay": (float, 1.0)},
    "box-study": {**SOLVER, "R_list": (_float_list, [4.0, 8.0, 16.0]), "delta_list": (_float_list, [0.25])},
}
TOP_LEVEL = {"command", "seed", "workers", "output", "plotdata"}

PLOT_COLUMNS = {
    "simulate": ["n", "mean_lambda", "stderr", "mean_lambda_over_nlogn"],
    "tail": ["n", "b", "estimate", "stderr", "rate_normalized", "prediction"],
    "rate-table": ["n", "rate_normalized", "prediction", "stderr"],
    "solve": ["mode", "value", "converged"],
    "spectral-check": ["alpha", "T", "n", "value", "lattice_eig", "continuum_eig"],
    "trial-sequence": ["n", "l2_sq", "l2p_pow", "half_grad_sq", "quad_gap"],
    "box-study": ["R", "delta", "bc", "value"],
}


# ---------------------------------------------------------------------------
# configuration


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    return data


def resolve(command: str | None, file_cfg: dict, overrides: dict, top: dict) -> dict:
    """Merge defaults, file and flags into a validated, fully explicit config."""
    cfg_cmd = file_cfg.get("command")
    command = command or cfg_cmd
    if command not in SCHEMAS:
        raise ConfigError(f"unknown or missing command {command!r}")
    if cfg_cmd is not None and cfg_cmd != command:
        raise ConfigError(f"config is for {cfg_cmd!r}, not {command!r}")
    unknown = set(file_cfg) - TOP_LEVEL - {command}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    section = file_cfg.get(command) or {}
    if not isinstance(section, dict):
        raise ConfigError(f"section {command!r} must be a mapping")
    schema = SCHEMAS[command]
    bad = set(section) - set(schema)
    if bad:
        raise ConfigError(f"unknown keys in {command!r}: {sorted(bad)}")
    params = {}
    for key, (conv, default) in schema.items():
        raw = overrides.get(key)
        if raw is None:
            raw = section.get(key, default)
        try:
            params[key] = conv(raw) if raw is not None else None
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key!r}: {raw!r} ({exc})") from exc
    out = {"command": command}
    for key, default in (("seed", 0), ("workers", 1), ("output", None), ("plotdata", None)):
        v = top.get(key)
        out[key] = v if v is not None else file_cfg.get(key, default)
    try:
        out["seed"] = int(out["seed"])
        out["workers"] = int(out["workers"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"seed and workers must be integers ({exc})") from exc
    if out["workers"] < 1:
        raise ConfigError("workers must be >= 1")
    out["params"] = params
    return out


# ---------------------------------------------------------------------------
# builders (all validation happens here, before anything runs)


def _kernel(params) -> kernels.StepKernel:
    spec = params.get("kernel") or f"srw-{params['d']}d"
    k = kernels.kernel_from_config(spec)
    if "d" in params and params.get("kernel") is None and k.d != params["d"]:
        raise ConfigError("kernel dimension does not match d")
    return k


def _scenery(spec) -> scenery.SceneryModel:
    return scenery.model_from_config(spec)


def _regime(b, d):
    if isinstance(b, str) and b.startswith("auto-smalldev:"):
        if d != 2:
            raise ConfigError("auto-smalldev thresholds are for d = 2")
        return tails.ScaleRegime.small_dev(float(b.split(":", 1)[1]))
    if isinstance(b, str) and b.startswith("large:"):
        u = float(b.split(":", 1)[1])
        if u <= 0:
            raise ConfigError("large:u needs u > 0")
        return tails.ScaleRegime.large(d, u)
    return None


def _rate_problem(params, k: kernels.StepKernel | None = None) -> RateProblem:
    G = params.get("gamma_matrix")
    sc = params.get("scenery")
    return RateProblem(
        d=params["d"], mode=params["mode"], Gamma=None if G is None else np.array(G),
        D=params["D"], q=params["q"], scenery=_scenery(sc) if sc else None, u=params["u"],
        R=params["R"], m=params["m"], bc=params["bc"], delta=params["delta"],
        max_iter=params["max_iter"], tol=params["tol"], n_restarts=params["restarts"],
    )


POTENTIALS = {
    "gaussian-well": lambda A, R: (lambda *x: A * np.exp(-sum(c * c for c in x))),
    "cosine": lambda A, R: (lambda *x: A * np.prod([np.cos(np.pi * c / (2 * R)) for c in x], axis=0)),
    "constant": lambda A, R: (lambda *x: A + 0.0 * x[0]),
}


# ---------------------------------------------------------------------------
# commands; each returns (result, plot rows, flagged)


def _json_float(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def cmd_simulate(p, seed, workers):
    k = _kernel(p)
    ns = sorted(p["n"])
    lam = localtimes.lambda_samples(k, ns, p["replicates"], seed, workers)
    rows = []
    for j, n in enumerate(ns):
        x = lam[:, j].astype(float)
        se = float(x.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else math.nan
        rows.append({"n": n, "mean_lambda": float(x.mean()), "stderr": se,
                     "mean_lambda_over_nlogn": float(x.mean() / (n * math.log(n))) if n > 1 else math.nan})
    return {"rows": rows}, rows, False


def _prediction(regime, k, sc):
    if regime is None:
        return None
    if regime.case == "small-dev":
        return tails.regime_prediction(regime)
    if regime.case == "L" and k.d <= 2:
        u = regime.b(1)
        m = 256 if k.d == 1 else 64
        r = solve_K_H(RateProblem(d=k.d, mode="K_H", Gamma=k.covariance, scenery=sc, u=u, R=8.0, m=m, n_restarts=1))
        return -r.value if r.finite else None
    return None


def cmd_tail(p, seed, workers):
    k = _kernel(p)
    sc = _scenery(p["scenery"])
    regime = _regime(p["b"], k.d)
    n = p["n"]
    b = regime.b(n) if regime is not None else p["b"]
    if p["method"] == "naive":
        est = tails.tail_naive(k, sc, n, b, p["replicates"], seed, workers)
    elif p["method"] == "cond-gaussian":
        est = tails.tail_cond_gaussian(k, sc, n, b, p["replicates"], seed, workers)
    else:
        v = tails.exact_enum(k, sc, n, b)
        est = tails.TailEstimate("exact", n, b, v, 0.0, 0)
    if regime is not None:
        est.normalize(regime, _prediction(regime, k, sc))
    row = {key: _json_float(v) for key, v in est.to_json().items()}
    return row, [row], False


def cmd_rate_table(p, seed, workers):
    k = _kernel(p)
    sc = _scenery(p["scenery"])
    regime = _regime(p["b"], k.d)
    if regime is None:
        raise ConfigError("rate-table needs b = auto-smalldev:theta or large:u")
    n_list = p["n_list"]
    if p["method"] == "cond-gaussian":
        series = {e.n: e for e in tails.cond_gaussian_series(k, sc, n_list, regime.b, p["replicates"], seed, workers)}
        est = lambda n, b: series[n]
    else:
        est = lambda n, b: tails.tail_naive(k, sc, n, b, p["replicates"], seed, workers)
    rows = tails.rate_table(regime, est, n_list, _prediction(regime, k, sc))
    rows = [{key: _json_float(v) for key, v in r.items()} for r in rows]
    return {"rows": rows}, rows, False


def cmd_solve(p, seed, workers):
    prob = replace(_rate_problem(p), seed=seed)
    if prob.mode == "chi":
        r = solve_chi(prob)
        out, psi = r.to_json(), r.psi
    else:
        r = (solve_K_Dq if prob.mode == "K_Dq" else solve_K_H)(prob)
        out, psi = r.to_json(), r.psi
    out["value"] = _json_float(out["value"])
    extra = {}
    if p.get("export_minimizer"):
        grids = psi.mesh()
        cols = [f"x{i + 1}" for i in range(psi.d)] + ["psi"]
        rows = [dict(zip(cols, vals)) for vals in zip(*(g.ravel() for g in grids), psi.values.ravel())]
        extra[p["export_minimizer"]] = emit_plotdata(rows, cols)
    row = {"mode": out["mode"], "value": out["value"], "converged": out["converged"]}
    return out, [row], not out["converged"], extra


def cmd_spectral(p, seed, workers):
    k = _kernel({**p, "d": None})
    fn = POTENTIALS[p["potential"]](p["amplitude"], p["R"])
    rows = spectral.convergence_table(k, fn, p["R"], p["alphas"], p["T"], m=p["m"], bc=p["bc"])
    return {"rows": rows}, rows, False


def cmd_trial(p, seed, workers):
    rows = [trial_sequence_chi_zero(p["d"], p["p"], n, p["decay"]).to_json() for n in p["n"]]
    return {"rows": rows}, rows, False


def cmd_box(p, seed, workers):
    base = replace(_rate_problem(p), seed=seed)
    rows = box_convergence_study(base, p["R_list"], p["delta_list"])
    rows = [{key: _json_float(v) for key, v in r.items()} for r in rows]
    flagged = not all(r["converged"] for r in rows)
    return {"rows": rows, "violations": sandwich_violations(rows)}, rows, flagged


COMMANDS = {
    "simulate": cmd_simulate,
    "tail": cmd_tail,
    "rate-table": cmd_rate_table,
    "solve": cmd_solve,
    "spectral-check": cmd_spectral,
    "trial-sequence": cmd_trial,
    "box-study": cmd_box,
}


# ---------------------------------------------------------------------------
# output


def emit_plotdata(rows: list[dict], columns: list[str]) -> str:
    """Long-format CSV text: header row, comma separated, '.' decimals.

    Floats are written with ``repr`` so they round-trip exactly; an empty
    result set gives a header-only file.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        out = []
        for c in columns:
            v = r.get(c)
            out.append("" if v is None else repr(float(v)) if isinstance(v, (float, np.floating)) else v)
        w.writerow(out)
    return buf.getvalue()


def read_plotdata(text: str) -> list[dict]:
    return list(csv.DictReader(io.StringIO(text)))


def _atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run(cfg: dict, stdout=None) -> int:
    """Execute a resolved config; returns the exit code."""
    stdout = stdout or sys.stdout
    try:
        res = COMMANDS[cfg["command"]](cfg["params"], cfg["seed"], cfg["workers"])
    except (ConfigError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    result, rows, flagged = res[:3]
    extra = res[3] if len(res) > 3 else {}
    doc = {"command": cfg["command"], "seed": cfg["seed"], "config": cfg, "result": result}
    text = json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n"
    try:
        if cfg.get("output"):
            _atomic_write(cfg["output"], text)
        else:
            stdout.write(text)
        if cfg.get("plotdata"):
            _atomic_write(cfg["plotdata"], emit_plotdata(rows, PLOT_COLUMNS[cfg["command"]]))
        for path, body in extra.items():
            _atomic_write(path, body)
    except OSError as exc:
        print(f"error: cannot write results: {exc}", file=sys.stderr)
        return EXIT_IO
    if flagged:
        print("warning: solver did not converge", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment file")
    common.add_argument("--output", help="JSON result path (default: stdout)")
    common.add_argument("--plotdata", help="CSV plot-data path")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int)

    parser = argparse.ArgumentParser(prog="rwrs", description="Random walk in random scenery laboratory.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run the command named in --config")
    for name, schema in SCHEMAS.items():
        sp_ = sub.add_parser(name, parents=[common])
        for key in schema:
            flag = "--" + key.replace("_", "-")
            if key == "D":
                flag = "--D"
            sp_.add_argument(flag, dest=key, default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    ns = vars(args)
    command = None if ns["command"] == "run" else ns["command"]
    try:
        file_cfg = load_config(ns.get("config"))
        schema = SCHEMAS.get(command or file_cfg.get("command"), {})
        overrides = {k: ns[k] for k in schema if ns.get(k) is not None}
        top = {k: ns.get(k) for k in ("seed", "workers", "output", "plotdata")}
        cfg = resolve(command, file_cfg, overrides, top)
        # build everything once up front so bad parameters fail before any output
        _validate(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return run(cfg)


def _validate(cfg: dict) -> None:
    p, c = cfg["params"], cfg["command"]
    try:
        if c in ("simulate", "tail", "rate-table"):
            k = _kernel(p)
            if c != "simulate":
                _scenery(p["scenery"])
                _regime(p["b"], k.d)
            if c == "rate-table" and _regime(p["b"], k.d) is None:
                raise ConfigError("rate-table needs b = auto-smalldev:theta or large:u")
        elif c in ("solve", "box-study"):
            _rate_problem(p)
        elif c == "spectral-check":
            _kernel({**p, "d": None})
        elif c == "trial-sequence":
            q = p["p"] / (p["p"] - 1) if p["p"] > 1 else math.inf
            if p["d"] <= 2 * q:
                raise ConfigError(f"trial-sequence needs d > 2q = {2 * q:g}")
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


if __name__ == "__main__":
    sys.exit(main())
