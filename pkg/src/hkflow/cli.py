"""Config-driven command line entry point.

Exit status: 0 when every check passes, 2 when a verification fails and 1 on
configuration or runtime errors.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import logging
import math
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .barriers import barrier_constants, barrier_verify, gradient_bound
from .covering import covering_build, covering_verify
from .domain import (Annulus, Ball, Box, Cone, Cylinder, RoundedStrip, Truncation,
                     classify_nodes)
from .expression import Expression, ExpressionError
from .operators import OperatorParams
from .perron import default_schedule, exhaustion_solve, perron_solve
from .solver import SolveOptions, radial_oracle, solve_on_grid
from .special_functions import (AuxProfile, build_profile, cylinder_family,
                                verify_supersolution, xi)

log = logging.getLogger("hkflow")

TASKS = ("solve", "verify_claim", "verify_barrier", "verify_covering", "radial", "perron",
         "exhaustion", "sweep")


class ConfigError(ValueError):
    pass


class Config:
    """INI-style config that remembers the line of every key."""

    def __init__(self, text: str, source: str = "<config>"):
        self.text = text
        self.source = source
        self.parser = configparser.ConfigParser(interpolation=None)
        try:
            self.parser.read_string(text, source=source)
        except configparser.Error as exc:
            raise ConfigError(f"{source}: {exc}") from None
        self.lines = {}
        section = None
        for no, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if line.startswith("[") and line.endswith("]"):
                section = line[1:-1].strip()
            elif section and ("=" in line or ":" in line) and not line.startswith(("#", ";")):
                key = line.split("=", 1)[0] if "=" in line else line.split(":", 1)[0]
                self.lines[(section, key.strip().lower())] = no

    def where(self, section, key) -> str:
        no = self.lines.get((section, key))
        return f"{self.source}, line {no}" if no else self.source

    def has(self, section, key) -> bool:
        return self.parser.has_option(section, key)

    def get(self, section, key, default=None):
        if self.parser.has_option(section, key):
            return self.parser.get(section, key).strip()
        if default is None:
            raise ConfigError(f"{self.source}: missing [{section}] {key}")
        return default

    def number(self, section, key, default=None, lo=None, hi=None, strict=True, kind=float):
        raw = self.get(section, key, None if default is None else str(default))
        try:
            val = kind(float(raw)) if kind is int else float(raw)
        except ValueError:
            raise ConfigError(f"{self.where(section, key)}: [{section}] {key} = {raw!r} is not a number") from None
        if kind is int and float(raw) != int(float(raw)):
            raise ConfigError(f"{self.where(section, key)}: [{section}] {key} must be an integer")
        bad = (lo is not None and (val <= lo if strict else val < lo)) or (hi is not None and val >= hi)
        if bad or not math.isfinite(val):
            parts = []
            if lo is not None:
                parts.append(f"{'>' if strict else '>='} {lo:g}")
            if hi is not None:
                parts.append(f"< {hi:g}")
            need = " and ".join(parts) or "finite"
            raise ConfigError(f"{self.where(section, key)}: [{section}] {key} = {raw} must be {need}")
        return val

    def vector(self, section, key, default=None):
        raw = self.get(section, key, default)
        try:
            return tuple(float(v) for v in raw.replace(";", ",").split(","))
        except ValueError:
            raise ConfigError(f"{self.where(section, key)}: [{section}] {key} must be a list of numbers") from None

    def numbers(self, section, key, default=None):
        return list(self.vector(section, key, default))

    def expression(self, section, key, dim, default=None) -> Expression:
        raw = self.get(section, key, default)
        try:
            return Expression(raw, dim)
        except ExpressionError as exc:
            raise ConfigError(f"{self.where(section, key)}: [{section}] {key}: {exc}") from None

    def echo(self) -> dict:
        return {s: dict(self.parser.items(s)) for s in self.parser.sections()}


def build_params(cfg: Config) -> OperatorParams:
    n = cfg.number("params", "n", 2, lo=2, strict=False, kind=int)
    alpha = cfg.number("params", "alpha", 1.0, lo=0)
    return OperatorParams(int(n), alpha)


def build_domain(cfg: Config, dim: int):
    shape = cfg.get("domain", "shape")
    if shape == "ball":
        c = cfg.vector("domain", "center", ",".join(["0"] * dim))
        dom = Ball(c, cfg.number("domain", "radius", lo=0))
    elif shape == "box":
        dom = Box(cfg.vector("domain", "lo"), cfg.vector("domain", "hi"))
    elif shape == "annulus":
        c = cfg.vector("domain", "center", ",".join(["0"] * dim))
        dom = Annulus(c, cfg.number("domain", "r_in", lo=0), cfg.number("domain", "r_out", lo=0))
    elif shape == "cylinder":
        dom = Cylinder(cfg.number("domain", "N", 0.0), cfg.number("domain", "M", lo=0), dim)
    elif shape == "cone":
        dom = Cone(cfg.number("domain", "theta", lo=0, hi=math.pi / 2), dim)
    elif shape == "rounded_strip":
        dom = RoundedStrip(cfg.number("domain", "rho", lo=0), cfg.number("domain", "cap", 1.0), dim)
    else:
        raise ConfigError(f"{cfg.where('domain', 'shape')}: unknown shape {shape!r}")
    if cfg.has("domain", "x1_max"):
        dom = Truncation(dom, cfg.number("domain", "x1_max"))
    if dom.dim != dim:
        raise ConfigError(f"{cfg.where('domain', 'shape')}: domain dimension {dom.dim} != n = {dim}")
    return dom


# -- output helpers ---------------------------------------------------------

def _finite(obj):
    """Replace non-finite floats by ``None`` so the output is strict JSON."""
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if isinstance(obj, (float, np.floating)) and not math.isfinite(obj):
        return None
    return obj


def write_json(path: Path, obj) -> None:
    text = json.dumps(_finite(obj), sort_keys=True, indent=2, default=_json_default,
                      allow_nan=False)
    path.write_text(text + "\n", encoding="utf-8")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"not serialisable: {type(o)}")


def write_table(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else f"{float(v):.17g}" for v in row])


def sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# -- tasks -------------------------------------------------------------------

def task_solve(cfg, out, seed):
    params = build_params(cfg)
    dom = build_domain(cfg, params.n)
    phi = cfg.expression("data", "phi", params.n, "0")
    h = cfg.number("grid", "h", 0.05, lo=0)
    mode = cfg.get("task", "mode", "translator")
    opts = SolveOptions(tol=cfg.number("task", "tol", 1e-10, lo=0),
                        max_steps=int(cfg.number("task", "max_steps", 50, lo=0, kind=int)))
    grid = classify_nodes(dom, h)
    u, rep = solve_on_grid(grid, phi, params, mode, opts)
    grid.to_csv(out / "grid.csv")
    u.to_csv(out / "field.csv")
    report = rep.to_dict()
    report.update({"mode": mode, "h": h, "nodes": grid.n_nodes, "pass": rep.converged})
    write_json(out / "report.json", report)
    return rep.converged


def task_verify_claim(cfg, out, seed):
    params = build_params(cfg)
    mu = cfg.number("task", "mu", 0.5, lo=0, hi=1)
    L = cfg.number("task", "L", 1.0, lo=0)
    case = cfg.get("task", "case", "cylinder")
    theta = cfg.number("task", "theta", lo=0, hi=math.pi / 2) if case == "cone" else None
    if cfg.has("task", "Hstar"):
        H = cfg.number("task", "Hstar", lo=1)
        prof = AuxProfile(params.n, params.alpha, mu, L, H, xi(H, params.n) / mu, case, theta)
    else:
        prof = build_profile(params.n, params.alpha, mu, L, case, theta)
    count = int(cfg.number("task", "samples", 10_000, lo=0, kind=int))
    rep = verify_supersolution(prof, samples=np.linspace(prof.L, prof.tau, count + 2)[1:-1],
                               params=params)
    rep.update({"Hstar": prof.Hstar, "d": prof.d, "tau": prof.tau})
    write_json(out / "claim.json", rep)
    return rep["pass"]


def task_verify_barrier(cfg, out, seed):
    params = build_params(cfg)
    dom = build_domain(cfg, params.n)
    phi = cfg.expression("data", "phi", params.n, "0")
    m = cfg.number("task", "m", 1.0, lo=0, strict=False)
    samples = int(cfg.number("task", "samples", 10_000, lo=0, kind=int))
    spec = barrier_constants(dom, phi, params, m, seed=seed)
    rep = barrier_verify(spec, dom, phi, params, samples, seed=seed)
    rep["gradient_bound"] = gradient_bound(spec, phi)
    write_json(out / "barrier.json", rep)
    return rep["pass"]


def _covering_from(cfg, dim):
    case = cfg.get("task", "case", "cylinder")
    K = int(cfg.number("task", "K", 10, lo=0, kind=int))
    if cfg.has("task", "exp_d"):
        d = math.log(cfg.number("task", "exp_d", lo=1))
    else:
        d = cfg.number("task", "d", math.log(2), lo=0)
    if case == "cylinder":
        return covering_build("cylinder", K, d, N=cfg.number("task", "N", 0.0),
                              M=cfg.number("task", "M", 1.0, lo=0),
                              eps=cfg.number("task", "eps", 0.9, lo=0, hi=1), dim=dim)
    delta0 = cfg.number("task", "delta0", lo=1) if cfg.has("task", "delta0") else None
    return covering_build("cone", K, d, b1=cfg.number("task", "b1", 1.0, lo=0),
                          theta=cfg.number("task", "theta", lo=0, hi=math.pi / 2),
                          delta0=delta0, dim=dim)


def task_verify_covering(cfg, out, seed):
    params = build_params(cfg)
    seq = _covering_from(cfg, params.n)
    samples = int(cfg.number("task", "samples", 100_000, lo=0, kind=int))
    rep = covering_verify(seq, samples, seed)
    rep["covering"] = seq.to_dict()
    write_json(out / "covering.json", rep)
    rows = [[m["k"], *m["center"], m["inner_radius"], m["outer_radius"], m["cap"]]
            for m in seq.members()]
    header = ["k"] + [f"center{i + 1}" for i in range(seq.dim)] + ["inner_radius", "outer_radius", "cap"]
    write_table(out / "members.csv", header, rows)
    return rep["pass"]


def task_radial(cfg, out, seed):
    params = build_params(cfg)
    rmax = cfg.number("task", "rmax", 1.0, lo=0)
    step = cfg.number("task", "step", 1e-3, lo=0)
    u0 = cfg.number("task", "u0", 0.0)
    prof = radial_oracle(params, u0, rmax, step)
    write_table(out / "radial.csv", ["r", "u", "u'"], prof.table())
    ends = [radial_oracle(params, u0, rmax, step * 2.0**k).u[-1] for k in (0, 1, 2)]
    e1, e2 = abs(ends[2] - ends[1]), abs(ends[1] - ends[0])
    order = math.log2(e1 / e2) if e1 > 0 and e2 > 0 else float("inf")
    rep = {"rmax": rmax, "step": step, "u_end": ends[0], "u_end_2step": ends[1],
           "u_end_4step": ends[2], "observed_order": order, "pass": bool(order >= 3.5)}
    write_json(out / "radial.json", rep)
    return rep["pass"]


def task_perron(cfg, out, seed):
    params = build_params(cfg)
    dom = build_domain(cfg, params.n)
    phi = cfg.expression("data", "phi", params.n, "0")
    h = cfg.number("grid", "h", 0.0625, lo=0)
    tol = cfg.number("task", "tol", 1e-8, lo=0)
    spacing = cfg.number("task", "spacing", 0.5, lo=0)
    grid = classify_nodes(dom, h)
    sched = default_schedule(dom, spacing)
    v, rep = perron_solve(dom, phi, params, sched, tol=tol, grid=grid)
    u, _ = solve_on_grid(grid, phi, params)
    diff = float(np.max(np.abs(v.values - u.values)))
    v.to_csv(out / "perron_field.csv")
    report = rep.to_dict()
    report.update({"direct_difference": diff, "subdomains": len(sched.subdomains),
                   "pass": bool(diff <= 10 * tol and rep.min_increment >= -1e-8)})
    write_json(out / "perron.json", report)
    return report["pass"]


def task_exhaustion(cfg, out, seed):
    params = build_params(cfg)
    dom = build_domain(cfg, params.n)
    if not isinstance(dom, RoundedStrip):
        raise ConfigError(f"{cfg.where('domain', 'shape')}: exhaustion needs shape = rounded_strip")
    phi = cfg.expression("data", "phi", params.n, "0")
    schedule = cfg.numbers("task", "schedule", "4, 8, 16")
    N = cfg.number("task", "N", 0.0)
    M = cfg.number("task", "M", 1.0, lo=0)
    mu = cfg.number("task", "mu", 0.5, lo=0, hi=1)
    h = cfg.number("grid", "h", 0.0625, lo=0)
    compact = cfg.number("task", "compact_x1", 2.0)
    gap_tol = cfg.number("task", "gap_tol", 1e-3, lo=0)
    # sup of |phi| on the wall portion up to x1, sampled along both walls
    xs = np.linspace(dom.inlet, max(schedule) + 2 * M, 2001)

    def phi_sup(x1):
        sel = xs <= x1
        if not sel.any():
            return 0.0
        pts = np.column_stack([xs[sel], np.full(sel.sum(), dom.rho)] +
                              [np.zeros(sel.sum())] * (params.n - 2))
        pts2 = pts.copy()
        pts2[:, 1] *= -1
        return float(max(np.abs(phi(pts)).max(), np.abs(phi(pts2)).max()))

    fam = cylinder_family(N, M, params, mu, max(schedule) + 0.5, phi_sup)
    res = exhaustion_solve(dom, phi, params, schedule, fam, h=h, compact_x1=compact)
    for R, us, uu in zip(schedule, res.sub, res.sup):
        us.to_csv(out / f"sub_R{R:g}.csv")
        uu.to_csv(out / f"sup_R{R:g}.csv")
    rep = res.to_dict()
    ok = res.nonincreasing() and res.gaps[-1] < gap_tol and max(res.cap_violation) <= 1e-8
    rep.update({"nonincreasing": res.nonincreasing(), "members": fam.K, "pass": bool(ok)})
    write_json(out / "exhaustion.json", rep)
    return ok


def task_sweep(cfg, out, seed):
    ns = [int(v) for v in cfg.numbers("task", "n_values", "2, 3")]
    alphas = cfg.numbers("task", "alpha_values", "0.5, 1, 2")
    mus = cfg.numbers("task", "mu_values", "0.3, 0.5, 0.8")
    L = cfg.number("task", "L", 1.0, lo=0)
    ok = True
    summary = []
    for n in ns:
        for a in alphas:
            for mu in mus:
                sub = out / f"n{n}_alpha{a:g}_mu{mu:g}"
                sub.mkdir(parents=True, exist_ok=True)
                prof = build_profile(n, a, mu, L)
                rep = verify_supersolution(prof, params=OperatorParams(n, a))
                rep.update({"Hstar": prof.Hstar, "d": prof.d, "tau": prof.tau})
                write_json(sub / "claim.json", rep)
                summary.append({"n": n, "alpha": a, "mu": mu, "Hstar": prof.Hstar,
                                "max_residual": rep["max_residual"], "pass": rep["pass"]})
                ok &= rep["pass"]
    write_json(out / "sweep.json", {"runs": summary, "pass": ok})
    return ok


TASK_FUNCS = {
    "solve": task_solve, "verify_claim": task_verify_claim, "verify_barrier": task_verify_barrier,
    "verify_covering": task_verify_covering, "radial": task_radial, "perron": task_perron,
    "exhaustion": task_exhaustion, "sweep": task_sweep,
}


def run(config_path, out_dir=None, seed=None) -> int:
    """Run one configured task; returns the process exit status."""
    t0 = time.perf_counter()
    path = Path(config_path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        log.error("cannot read config: %s", exc)
        return 1
    try:
        cfg = Config(text, str(path))
        task = cfg.get("run", "task")
        if task not in TASKS:
            raise ConfigError(f"{cfg.where('run', 'task')}: unknown task {task!r}")
        if seed is None:
            seed = int(cfg.number("run", "seed", 0, lo=0, strict=False, kind=int))
        out = Path(out_dir if out_dir is not None else cfg.get("run", "out", "out"))
        out.mkdir(parents=True, exist_ok=True)
        passed = TASK_FUNCS[task](cfg, out, seed)
    except Exception as exc:  # every failure maps to exit status 1
        log.error("%s: %s", type(exc).__name__, exc)
        return 1
    files = sorted(p for p in out.rglob("*") if p.is_file() and p.name != "manifest.json")
    manifest = {
        "task": task,
        "config": cfg.echo(),
        "config_text": text,
        "seed": seed,
        "versions": {"hkflow": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "wall_time": time.perf_counter() - t0,
        "files": {str(p.relative_to(out)): sha256(p) for p in files},
        "pass": bool(passed),
    }
    write_json(out / "manifest.json", manifest)
    log.info("task %s %s", task, "passed" if passed else "FAILED")
    return 0 if passed else 2


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="hkflow", description=__doc__.splitlines()[0])
    ap.add_argument("--config", required=True, help="path to the INI config file")
    ap.add_argument("--out", help="output directory (overrides [run] out)")
    ap.add_argument("--seed", type=int, help="random seed (overrides [run] seed)")
    ap.add_argument("--verbose", action="store_true", help="debug logging")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if args.seed is not None and args.seed < 0:
        ap.error("--seed must be non-negative")
    return run(args.config, args.out, args.seed)


if __name__ == "__main__":
    sys.exit(main())
