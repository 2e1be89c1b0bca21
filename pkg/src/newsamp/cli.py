"""Command-line harness: generate, optimize, benchmark, coeffs.

Each subcommand reads one YAML config file; ``--set dotted.key=value`` overrides
individual keys (values are parsed as YAML scalars). Results go to the files
named under ``output``; a one-line JSON summary is printed to stdout. Errors
exit nonzero with a JSON object on stderr.
"""

import argparse
import copy
import csv
import json
import math
import os
import sys

import numpy as np
import yaml

from .baselines import BATCH_METHODS, METHODS, BaselineConfig, reference_minimizer, run_baseline
from .data import SpikedModelSpec, dataset_hash, generate_spiked, load_csv, load_libsvm, standardize, write_csv
from .errors import ConfigError, InvalidInputError, NewSampError, ParseError, ShapeError, TheoryError
from .optimizer import ConvexSet, NewSampConfig, adaptive_step, newsamp_run, plain_subsampled_newton_run
from .problems import make_objective, problem_constants
from .sampling import SampleScheme
from .theory import (
    coefficients_s1,
    coefficients_s2,
    effective_rank,
    sufficient_start_radius,
    suggested_sample_size,
)

NEWSAMP_METHODS = ("newsamp", "plain-subsampled")

DEFAULTS = {
    "seed": 0,
    "data": {
        "path": None,
        "format": "csv",
        "label_column": -1,
        "standardize": False,
        "spiked": {"n": 10000, "p": 50, "r_spikes": 3},
    },
    "problem": {"kind": "logistic", "C": 1.0},
    "method": {"name": "newsamp"},
    "methods": None,
    "set": {"kind": "unconstrained"},
    "eps": 1e-10,
    "max_iters": 100,
    "tol": 1e-6,
    "reference": {"path": None, "cache_dir": None},
    "theta": None,
    "theta0": None,
    "output": {"dir": "."},
}

METHOD_DEFAULTS = {
    "r": 3,
    "scheme": "s1-without-replacement",
    "sample_size": 500,
    "increment": None,
    "step": "adaptive",
    "c_step": 1.0,
    "eta": 1.0,
    "step_grid": None,
    "memory": 10,
    "gamma": 0.1,
    "c": 100.0,
    "delta": 1e-8,
    "line_step": "constant",
    "record_every": None,
}


def _merge(base, extra):
    out = copy.deepcopy(base)
    for k, v in (extra or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def apply_override(cfg, assignment):
    """Set ``a.b.c=value`` in a nested dict; the value is parsed as YAML.

    A mapping value assigned over an existing section is merged into it.
    """
    key, sep, raw = assignment.partition("=")
    if not sep or not key:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    parts = key.split(".")
    node = cfg
    for part in parts[:-1]:
        nxt = node.get(part)
        if nxt is None:
            nxt = node[part] = {}
        elif not isinstance(nxt, dict):
            raise ConfigError(f"cannot set {key!r}: {part!r} is not a section")
        node = nxt
    value = yaml.safe_load(raw)
    old = node.get(parts[-1])
    node[parts[-1]] = _merge(old, value) if isinstance(old, dict) and isinstance(value, dict) else value
    return cfg


def load_config(path=None, overrides=()):
    user = {}
    if path is not None:
        with open(path) as fh:
            user = yaml.safe_load(fh) or {}
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    cfg = _merge(DEFAULTS, user)
    for a in overrides:
        apply_override(cfg, a)
    return cfg


def _spiked_spec(cfg):
    spec = dict(cfg["data"]["spiked"])
    spec.setdefault("seed", cfg["seed"])
    if spec.get("spike_values") is not None:
        spec["spike_values"] = tuple(spec["spike_values"])
    try:
        return SpikedModelSpec(**spec)
    except TypeError as exc:
        raise ConfigError(f"bad spiked spec: {exc}") from None


def load_dataset(cfg):
    d = cfg["data"]
    if d.get("path"):
        path = d["path"]
        if not os.path.exists(path):
            raise FileNotFoundError(f"dataset not found: {path}")
        if d.get("format", "csv") == "libsvm":
            ds = load_libsvm(path, p=d.get("p"))
        elif d.get("format", "csv") == "csv":
            ds = load_csv(path, label_column=d.get("label_column", -1))
        else:
            raise ConfigError(f"unknown data format {d['format']!r}")
    else:
        ds = generate_spiked(_spiked_spec(cfg))
    return standardize(ds) if d.get("standardize") else ds


def make_set(cfg, p):
    s = cfg.get("set") or {"kind": "unconstrained"}
    kind = s.get("kind", "unconstrained")
    if kind == "ball":
        center = s.get("center")
        center = np.zeros(p) if center is None else np.broadcast_to(np.asarray(center, dtype=float), (p,))
        return ConvexSet.ball(center, s.get("radius"))
    if kind == "box":
        lo = np.broadcast_to(np.asarray(s.get("lower"), dtype=float), (p,))
        hi = np.broadcast_to(np.asarray(s.get("upper"), dtype=float), (p,))
        return ConvexSet.box(lo, hi)
    return ConvexSet(kind)


def _method_spec(m, cfg):
    if isinstance(m, str):
        m = {"name": m}
    m = _merge(METHOD_DEFAULTS, m)
    if m.get("name") not in NEWSAMP_METHODS + METHODS:
        raise ConfigError(f"unknown method {m.get('name')!r}; expected one of {NEWSAMP_METHODS + METHODS}")
    m.setdefault("seed", cfg["seed"])
    m.setdefault("eps", cfg["eps"])
    m.setdefault("max_iters", cfg["max_iters"])
    return m


def _theta0(cfg, p):
    th = cfg.get("theta0")
    return None if th is None else np.broadcast_to(np.asarray(th, dtype=float), (p,)).copy()


def run_method(obj, m, cset, theta_star, theta0=None):
    """Run one method spec; returns the trace or raises with ``exc.trace`` attached."""
    name = m["name"]
    if name in NEWSAMP_METHODS:
        scheme = SampleScheme(m["scheme"], int(m["sample_size"]), seed=int(m["seed"]), increment=m.get("increment"))
        step = m["step"] if m["step"] == "adaptive" else float(m["step"])
        ncfg = NewSampConfig(r=int(m["r"]), scheme=scheme, step=step, c_step=float(m["c_step"]),
                             eps=float(m["eps"]), max_iters=int(m["max_iters"]), theta0=theta0)
        run = newsamp_run if name == "newsamp" else plain_subsampled_newton_run
        return run(obj, ncfg, cset, theta_star)
    bcfg = BaselineConfig(
        method=name, eta=float(m["eta"]), eps=float(m["eps"]), max_iters=int(m["max_iters"]), theta0=theta0,
        seed=int(m["seed"]), memory=int(m["memory"]), gamma=float(m["gamma"]), c=float(m["c"]),
        delta=float(m["delta"]), line_step=m["line_step"], record_every=m.get("record_every"),
    )
    return run_baseline(obj, bcfg, cset, theta_star)


def _speed_key(trace, tol):
    """Sort key for step-size selection: reaching ``tol`` first wins, then stopping early, then lower f."""
    hit = trace.iterations_to(tol) if trace.final.dist is not None else None
    if hit is not None:
        return (0, hit, trace.final.f)
    done = trace.terminated_reason == "eps-reached"
    return (1, trace.iterations if done else math.inf, trace.final.f)


def run_with_grid(obj, m, cset, theta_star, tol, theta0=None):
    """Run ``m``; for batch baselines with a ``step_grid``, keep the fastest-converging constant step."""
    grid = m.get("step_grid")
    if not grid or m["name"] not in BATCH_METHODS:
        return run_method(obj, m, cset, theta_star, theta0), None
    best = None
    for eta in grid:
        trial = dict(m, eta=float(eta))
        try:
            tr = run_method(obj, trial, cset, theta_star, theta0)
        except NewSampError:
            continue
        key = _speed_key(tr, tol)
        if best is None or key < best[0]:
            best = (key, float(eta), tr)
    if best is None:
        raise ConfigError(f"{m['name']}: every step size in the grid failed")
    return best[2], best[1]


def reference_theta(obj, ds, cfg):
    """Reference minimizer from a file, or full Newton at 1e-12 cached by dataset hash."""
    ref = cfg.get("reference") or {}
    if ref.get("path"):
        theta = np.asarray(np.load(ref["path"]), dtype=float).reshape(-1)
        if theta.shape[0] != obj.p:
            raise InvalidInputError(f"reference has length {theta.shape[0]}, expected {obj.p}")
        return theta
    cache_dir = ref.get("cache_dir")
    path = None
    if cache_dir:
        os.makedirs(cache_dir, exist_ok=True)
        tag = f"{dataset_hash(ds)[:16]}-{obj.kind}-{obj.C!r}"
        path = os.path.join(cache_dir, f"theta-star-{tag}.npy")
        if os.path.exists(path):
            return np.load(path)
    theta = reference_minimizer(obj, tol=1e-12)
    if path:
        np.save(path, theta)
    return theta


def _out(cfg, key, default):
    o = cfg.get("output") or {}
    name = o.get(key) or default
    return name if os.path.isabs(name) else os.path.join(o.get("dir") or ".", name)


def _num(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


def _summary(trace, extra=None):
    f = trace.final
    out = {
        "method": trace.method,
        "iterations": trace.iterations,
        "final_f": _num(f.f),
        "final_grad_norm": _num(f.grad_norm),
        "elapsed_s": _num(f.elapsed_s),
        "terminated_reason": trace.terminated_reason,
        "error": trace.error,
    }
    if f.dist is not None:
        out["final_dist"] = _num(f.dist)
    out.update(extra or {})
    return out


def _write_json(path, obj):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _problem(cfg):
    ds = load_dataset(cfg)
    pr = cfg["problem"]
    return ds, make_objective(ds, pr["kind"], C=float(pr.get("C", 1.0)))


def cmd_generate(cfg):
    """Write a spiked dataset to CSV and report its leading sample-covariance eigenvalues."""
    spec = _spiked_spec(cfg)
    ds = generate_spiked(spec)
    path = _out(cfg, "dataset", "spiked.csv")
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    write_csv(path, ds)
    cov = np.cov(ds.X, rowvar=False, bias=True).reshape(ds.p, ds.p)
    top = np.linalg.eigvalsh(cov)[::-1][: min(spec.r_spikes + 1, ds.p)]
    return {"path": path, "n": ds.n, "p": ds.p, "top_eigenvalues": [float(v) for v in top]}


def cmd_optimize(cfg):
    """Run one method; write its JSONL trace and a JSON summary."""
    ds, obj = _problem(cfg)
    m = _method_spec(cfg["method"], cfg)
    cset = make_set(cfg, obj.p)
    ref = cfg.get("reference") or {}
    theta_star = reference_theta(obj, ds, cfg) if (ref.get("path") or ref.get("cache_dir")) else None
    trace_path = _out(cfg, "trace", f"{m['name']}.jsonl")
    summary_path = _out(cfg, "summary", f"{m['name']}-summary.json")
    os.makedirs(os.path.dirname(trace_path) or ".", exist_ok=True)
    try:
        trace, eta = run_with_grid(obj, m, cset, theta_star, float(cfg["tol"]), _theta0(cfg, obj.p))
    except NewSampError as exc:
        if exc.trace is not None:
            exc.trace.write_jsonl(trace_path)
            _write_json(summary_path, _summary(exc.trace))
        raise
    trace.write_jsonl(trace_path)
    summary = _summary(trace, {"chosen_eta": eta} if eta is not None else None)
    _write_json(summary_path, summary)
    return summary


def cmd_benchmark(cfg):
    """Run several methods against a shared reference minimizer; write a CSV table and traces."""
    methods = cfg.get("methods") or []
    if len(methods) < 2:
        raise ConfigError(f"benchmark needs at least 2 methods, got {len(methods)}")
    specs = [_method_spec(m, cfg) for m in methods]
    labels = [m.get("label") or m["name"] for m in specs]
    if len(set(labels)) != len(labels):
        raise ConfigError("method labels must be unique; add a 'label' to repeated methods")
    ds, obj = _problem(cfg)
    cset = make_set(cfg, obj.p)
    theta_star = reference_theta(obj, ds, cfg)
    tol = float(cfg["tol"])
    theta0 = _theta0(cfg, obj.p)
    os.makedirs((cfg.get("output") or {}).get("dir") or ".", exist_ok=True)
    rows = []
    for label, m in zip(labels, specs):
        eta = None
        try:
            trace, eta = run_with_grid(obj, m, cset, theta_star, tol, theta0)
        except NewSampError as exc:
            trace = exc.trace
            if trace is None:
                raise
        trace.write_jsonl(_out(cfg, f"trace_{label}", f"{label}.jsonl"))
        rows.append({
            "method": label,
            "iterations_to_tol": trace.iterations_to(tol),
            "iterations": trace.iterations,
            "elapsed_s": trace.final.elapsed_s,
            "final_dist": trace.final.dist,
            "final_f": trace.final.f,
            "terminated_reason": trace.terminated_reason,
            "eta": eta,
        })
    table = _out(cfg, "table", "benchmark.csv")
    os.makedirs(os.path.dirname(table) or ".", exist_ok=True)
    with open(table, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: ("" if v is None else v) for k, v in row.items()})
    return {"table": table, "rows": [{k: (_num(v) if isinstance(v, float) else v) for k, v in r.items()} for r in rows]}


def cmd_coeffs(cfg):
    """Report convergence coefficients and parameter suggestions at a point (default: the minimizer)."""
    ds, obj = _problem(cfg)
    m = _method_spec(cfg["method"], cfg)
    r, s = int(m["r"]), int(m["sample_size"])
    if cfg.get("theta") is not None:
        theta = np.broadcast_to(np.asarray(cfg["theta"], dtype=float), (obj.p,)).copy()
    else:
        theta = reference_theta(obj, ds, cfg)
    if not 1 <= r <= obj.p - 1:
        raise InvalidInputError(f"rank threshold r={r} requires 1 <= r <= p - 1 = {obj.p - 1}")
    H = obj.hessian(theta)
    lam = np.linalg.eigvalsh(H)[::-1]
    lam_p, lam_r1 = float(lam[-1]), float(lam[r])
    eta = adaptive_step(lam_p, lam_r1, obj.p, s, float(m["c_step"]))
    const = problem_constants(obj, sample_size=s, thetas=[theta])
    cset = make_set(cfg, obj.p)
    if m["scheme"].startswith("s2"):
        rep = coefficients_s2(lam_p, lam_r1, eta, const.K, const.M, const.M, obj.p, s, cset.diameter,
                              covered=const.covered)
    else:
        rep = coefficients_s1(lam_p, lam_r1, eta, const.K, const.M, obj.p, s, covered=const.covered)
    out = rep.to_dict()
    note = None
    try:
        radius = sufficient_start_radius(rep.xi1, rep.xi2)
        if math.isinf(radius):
            radius, note = None, "unbounded: every start converges"
    except TheoryError as exc:
        radius, note = None, str(exc)
    out.update({
        "eta_suggested": eta,
        "suggested_sample_size": suggested_sample_size(const.K, lam_p, obj.p) if lam_p > 0 else None,
        "effective_rank": effective_rank(H),
        "start_radius": radius,
        "start_radius_note": note,
        "r": r,
        "sample_size": s,
        "R_x": const.R_x,
    })
    path = _out(cfg, "report", "coeffs.json")
    _write_json(path, out)
    return out


COMMANDS = {
    "generate": cmd_generate,
    "optimize": cmd_optimize,
    "benchmark": cmd_benchmark,
    "coeffs": cmd_coeffs,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="newsamp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sp = sub.add_parser(name, help=fn.__doc__)
        sp.add_argument("config", nargs="?", help="YAML config file")
        sp.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key, e.g. --set method.r=5")
        sp.add_argument("--out", help="output directory (same as --set output.dir=...)")
    return parser


def _error_exit(exc, code):
    payload = {"error": type(exc).__name__, "message": str(exc)}
    trace = getattr(exc, "trace", None)
    if trace is not None:
        payload["iterations"] = trace.iterations
    sys.stderr.write(json.dumps(payload) + "\n")
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides)
        if args.out:
            cfg.setdefault("output", {})["dir"] = args.out
        result = COMMANDS[args.command](cfg)
    except (ConfigError, InvalidInputError, ParseError, ShapeError, FileNotFoundError, yaml.YAMLError) as exc:
        return _error_exit(exc, 2)
    except (NewSampError, OSError, ValueError) as exc:
        return _error_exit(exc, 1)
    sys.stdout.write(json.dumps(result, sort_keys=True) + "\n")
    return 0
