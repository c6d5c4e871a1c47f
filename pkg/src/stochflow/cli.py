"""Command-line experiment driver.

    stochflow SUBCOMMAND [--config PATH] [--seed U64] [--out DIR] [--workers N] [--format csv|json]

A config file is ``{"experiments": [{...}, ...]}``; each entry overrides the
defaults of the subcommand (see ``defaults``). Without ``--config`` one
experiment with all defaults is run. Every run writes its data file
(``<subcommand>.csv`` or ``.json``) and ``manifest.json`` to ``--out``.
Data files depend only on the config and seed; the timestamp is kept in
the manifest.

Exit codes: 0 success, 2 config error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime
import io
import json
import subprocess
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import defaults, presets
from .errors import NumericalError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


class ConfigError(ValueError):
    pass


class Results:
    """Rows of (experiment, parameter, statistic, value, std_error) plus free-form JSON extras."""

    def __init__(self):
        self.rows = []
        self.extra = {}
        self.summary = {}
        self.files = []

    def add(self, experiment, parameter, statistic, value, std_error=None):
        self.rows.append((str(experiment), str(parameter), str(statistic), float(value),
                          None if std_error is None else float(std_error)))


def _grid(horizon, dt, t_start=0.0):
    from .solver import time_grid_for
    return time_grid_for(horizon, dt, t_start)


def _mean_se(v):
    v = np.asarray(v, dtype=float)
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0


# experiments

def run_simulate(cfg: defaults.SimulateConfig, seed, workers, res: Results, out: Path):
    from .paths import generate
    from .solver import euler_maruyama
    b, sigma = presets.drift(cfg.drift), presets.diffusion(cfg.diffusion)
    noise = generate(seed, cfg.n_paths, b.dim, _grid(cfg.horizon, cfg.dt, cfg.t_start))
    run = euler_maruyama(np.asarray(cfg.x0, dtype=float), b, sigma, noise, record="final", workers=workers)
    X = run.final[~run.flagged]
    for i in range(b.dim):
        m, se = _mean_se(X[:, i])
        c = X[:, i] - X[:, i].mean()
        var = float(np.mean(c**2) * X.shape[0] / (X.shape[0] - 1))
        se_var = float(np.sqrt(max(np.mean(c**4) - var**2, 0.0) / X.shape[0]))
        res.add(cfg.name, f"x[{i}]", "mean", m, se)
        res.add(cfg.name, f"x[{i}]", "variance", var, se_var)
    for fname in cfg.functions:
        m, se = _mean_se(presets.named_function(fname)(X))
        res.add(cfg.name, fname, "mean", m, se)
    res.add(cfg.name, "paths", "flagged", int(run.flagged.sum()))


def run_stability(cfg: defaults.StabilityConfig, seed, workers, res: Results, out: Path):
    from .paths import generate
    from .solver import loglog_slope, stability_experiment
    b, g = presets.drift(cfg.drift), presets.drift(cfg.perturbation)
    sigma = presets.diffusion(cfg.diffusion)
    noise = generate(seed, cfg.n_paths, b.dim, _grid(cfg.horizon, cfg.dt))
    rows = stability_experiment(b, [b + g * e for e in cfg.epsilons], sigma, noise,
                                np.asarray(cfg.x0, dtype=float), cfg.box, cfg.nodes, workers)
    for eps, r in zip(cfg.epsilons, rows):
        res.add(cfg.name, repr(float(eps)), "gap", r.gap, r.std_error)
        res.add(cfg.name, repr(float(eps)), "distance", r.distance)
    slope = loglog_slope(cfg.epsilons, [r.gap for r in rows])
    res.add(cfg.name, "epsilon", "loglog_slope", slope)
    res.summary[cfg.name] = {"loglog_slope": slope}


def run_gradient(cfg: defaults.GradientConfig, seed, workers, res: Results, out: Path):
    from .paths import generate
    from .solver import euler_maruyama
    from .variational import bel_gradient, fd_gradient_mc, jacobian_flow
    if cfg.method not in ("bel", "fd", "both"):
        raise ConfigError(f"experiments.method: {cfg.method!r} is not one of bel, fd, both")
    b, sigma = presets.drift(cfg.drift), presets.diffusion(cfg.diffusion)
    f = presets.named_function(cfg.function)
    x0 = np.asarray(cfg.x0, dtype=float)
    noise = generate(seed, cfg.n_paths, b.dim, _grid(cfg.horizon, cfg.dt))
    out_json = {}
    if cfg.method in ("bel", "both"):
        paths = euler_maruyama(x0, b, sigma, noise, workers=workers)
        est = bel_gradient(paths, jacobian_flow(paths, b, sigma, noise, workers=workers), sigma, f, noise)
        out_json["bel"] = est.to_json()
        for j in range(b.dim):
            res.add(cfg.name, f"d/dx[{j}]", "bel", est.estimate[j], est.std_error[j])
    if cfg.method in ("fd", "both"):
        est = fd_gradient_mc(x0, b, sigma, f, noise, cfg.fd_step)
        out_json["fd"] = est.to_json()
        for j in range(b.dim):
            res.add(cfg.name, f"d/dx[{j}]", "fd", est.estimate[j], est.std_error[j])
    res.extra.setdefault("gradients", []).append({"experiment": cfg.name, **out_json})


def run_jacobian(cfg: defaults.JacobianConfig, seed, workers, res: Results, out: Path):
    from .paths import generate
    from .solver import euler_maruyama
    from .variational import jacobian_flow, jacobian_moment
    b, sigma = presets.drift(cfg.drift), presets.diffusion(cfg.diffusion)
    noise = generate(seed, cfg.n_paths, b.dim, _grid(cfg.horizon, cfg.dt))
    paths = euler_maruyama(np.asarray(cfg.x0, dtype=float), b, sigma, noise, workers=workers)
    jac = jacobian_flow(paths, b, sigma, noise, workers=workers)
    JT = jac.final
    for a in range(b.dim):
        for c in range(b.dim):
            m, se = _mean_se(JT[:, a, c])
            res.add(cfg.name, f"J[{a},{c}]", "mean", m, se)
    for pw in cfg.powers:
        m, se = jacobian_moment(jac, pw)
        res.add(cfg.name, f"power={float(pw)!r}", "E_sup_norm_J", m, se)


def run_zvonkin(cfg: defaults.ZvonkinConfig, seed, workers, res: Results, out: Path):
    from .fields import DiffusionSpec
    from .grids import GridField
    from .paths import TimeGrid, generate
    from .solver import euler_maruyama
    from .zvonkin import bilipschitz_check, drift_removal_check, sample_pairs, solve_corrector, \
        solve_corrector_adaptive
    d = cfg.dim
    if d not in (1, 2):
        raise ConfigError("experiments.dim: the corrector grid supports d = 1 or 2")
    b = presets.gaussian_bump(d, cfg.amplitude, cfg.width)
    sigma = DiffusionSpec.scalar(cfg.sigma, d)
    L = cfg.half_width
    grid = GridField(np.full(d, -L), np.full(d, L), np.zeros((d,) + (cfg.nodes,) * d))
    solve = solve_corrector_adaptive if cfg.adaptive else solve_corrector
    sol = solve(b, sigma, cfg.t0, cfg.s0, grid, cfg.n_times)
    t0, s0 = sol.interval
    lo, hi = bilipschitz_check(sol, sample_pairs(sol, 4000, seed))
    res.add(cfg.name, "interval", "s0", s0)
    res.add(cfg.name, "picard", "iterations", sol.iterations)
    res.add(cfg.name, "picard", "final_gap", sol.gaps[-1])
    res.add(cfg.name, "pde", "residual_sup", sol.residual)
    res.add(cfg.name, "corrector", "lipschitz", sol.lipschitz_u())
    res.add(cfg.name, "bilipschitz", "min_ratio", lo)
    res.add(cfg.name, "bilipschitz", "max_ratio", hi)
    noise = generate(seed, cfg.n_paths, d, TimeGrid(t0, s0, cfg.n_times))
    a, c = cfg.start_region
    x0 = np.random.Generator(np.random.Philox(seed)).uniform(a, c, size=(cfg.n_paths, d))
    paths = euler_maruyama(x0, b, sigma, noise, workers=workers)
    rep = drift_removal_check(sol, paths, noise, region=[cfg.start_region] * d, bins=cfg.bins)
    res.add(cfg.name, "drift_X", "sup_bin", rep.sup_x)
    res.add(cfg.name, "drift_Y", "sup_bin", rep.sup_y, rep.sup_y_se)
    res.add(cfg.name, "drift", "reduction_ratio", rep.reduction)
    res.add(cfg.name, "paths", "excluded", rep.excluded)
    if out is not None:
        path = out / f"{cfg.name}_corrector_t0.sfg"
        sol.corrector(t0).save(path)
        res.files.append(path)


def run_nse(cfg: defaults.NseConfig, seed, workers, res: Results, out: Path):
    from .nse import curl, fixed_point_solve, taylor_green, vorticity_representation
    if cfg.initial != "taylor_green":
        raise ConfigError(f"experiments.initial: unknown initial field {cfg.initial!r}")
    phi = taylor_green(cfg.grid)
    st = fixed_point_solve(phi, cfg.nu, cfg.horizon, cfg.n_paths, cfg.dt, cfg.stride, cfg.tol,
                           cfg.max_iter, seed, workers)
    for m, dist in enumerate(st.distances):
        res.add(cfg.name, f"iteration={m + 1}", "distance", dist)
    for j, t in enumerate(st.velocity.times):
        exact = np.exp(-2 * cfg.nu * abs(t)) * phi.values
        err = np.linalg.norm(st.velocity.values[j] - exact) / np.linalg.norm(exact)
        res.add(cfg.name, f"t={float(t)!r}", "relative_l2_error", err)
    if cfg.vorticity_check:
        w = vorticity_representation(st, level=0, workers=workers)
        c = curl(st.velocity.at(0))
        res.add(cfg.name, "vorticity", "relative_l2_gap",
                np.linalg.norm(w.values - c.values) / np.linalg.norm(c.values))
    res.summary[cfg.name] = {"distances": [float(x) for x in st.distances]}
    if out is not None:
        res.files.extend(st.export(out / f"{cfg.name}_fields"))


def run_kernels(cfg: defaults.KernelTestConfig, seed, workers, res: Results, out: Path):
    from .grids import GridField
    from .nse import biot_savart, biot_savart_free, curl, leray_project
    m = cfg.grid
    g = GridField.periodic_box(2 * np.pi, (m, m), np.zeros((2, m, m)))
    x, y = g.mesh()
    grad = g.with_values(np.stack([np.cos(x) * np.cos(2 * y), -2 * np.sin(x) * np.sin(2 * y)]))
    res.add(cfg.name, "leray", "gradient_residual", np.abs(leray_project(grad).values).max())
    v = g.with_values(np.stack([np.sin(y) + np.cos(x + y), np.sin(x) * np.cos(y)]))
    pv = leray_project(v)
    res.add(cfg.name, "leray", "idempotence_gap", np.abs(leray_project(pv).values - pv.values).max())
    omega = g.with_values((np.sin(x) * np.sin(y) + np.cos(2 * x - y))[None])
    res.add(cfg.name, "biot_savart", "curl_gap", np.abs(curl(biot_savart(omega)).values - omega.values).max())
    L = 8.0
    src = GridField(np.full(2, -L), np.full(2, L), np.zeros((1, m + 1, m + 1)), periodic=False)
    vals = np.zeros((1, m + 1, m + 1))
    vals[0, m // 2, m // 2] = cfg.circulation / src.cell_volume
    src = src.with_values(vals)
    delta = defaults.BLOB_SPACINGS * float(src.spacing.max())
    for rho in cfg.radii_in_delta:
        r = rho * delta
        ang = np.linspace(0, 2 * np.pi, 16, endpoint=False)
        pts = r * np.stack([np.cos(ang), np.sin(ang)], axis=1)
        speed = np.linalg.norm(biot_savart_free(src, pts, delta), axis=1)
        exact = cfg.circulation / (2 * np.pi * r)
        res.add(cfg.name, f"r/delta={float(rho)!r}", "point_vortex_rel_error", np.abs(speed / exact - 1).max())
    res.add(cfg.name, "blob", "delta", delta)


RUNNERS = {
    "simulate": run_simulate,
    "stability": run_stability,
    "gradient": run_gradient,
    "jacobian": run_jacobian,
    "zvonkin": run_zvonkin,
    "nse-solve": run_nse,
    "nse-kernel-test": run_kernels,
}


# plumbing

def git_revision() -> str:
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], cwd=Path(__file__).resolve().parent,
                             capture_output=True, text=True, timeout=10)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def load_config(subcommand: str, path) -> list[dict]:
    if path is None:
        return [{}]
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    validator = jsonschema.Draft7Validator(defaults.schema(subcommand))
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        lines = [f"{'.'.join(map(str, e.absolute_path)) or '<root>'}: {e.message}" for e in errors]
        raise ConfigError("invalid config:\n  " + "\n  ".join(lines))
    return doc["experiments"]


def _fmt(v):
    return "" if v is None else repr(v)


def render_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["experiment", "parameter", "statistic", "value", "std_error"])
    for e, p, s, v, se in rows:
        w.writerow([e, p, s, repr(v), _fmt(se)])
    return buf.getvalue()


def render_json(subcommand, configs, res: Results) -> str:
    doc = {
        "subcommand": subcommand,
        "experiments": configs,
        "rows": [{"experiment": e, "parameter": p, "statistic": s, "value": v, "std_error": se}
                 for e, p, s, v, se in res.rows],
        **res.extra,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def run(subcommand: str, config_path=None, seed: int | None = None, out=".", workers: int = 1,
        fmt: str = "csv") -> int:
    """Run every experiment of a config; returns the process exit code."""
    try:
        entries = load_config(subcommand, config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not entries:
        return EXIT_OK
    config_cls = defaults.CONFIGS[subcommand]
    out = Path(out)
    res = Results()
    resolved = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        for i, entry in enumerate(entries):
            entry = dict(entry)
            exp_seed = int(entry.pop("seed", defaults.SEED if seed is None else seed))
            cfg = config_cls(**entry)
            if "name" not in entry and len(entries) > 1:
                cfg.name = f"{cfg.name}{i}"
            resolved.append({**dataclasses.asdict(cfg), "seed": exp_seed})
            RUNNERS[subcommand](cfg, exp_seed, workers, res, out)
    except NumericalError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc),
                          "payload": exc.payload}, default=repr), file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ValueError, TypeError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    data = out / f"{subcommand}.{fmt}"
    data.write_text(render_csv(res.rows) if fmt == "csv" else render_json(subcommand, resolved, res))
    manifest = {
        "subcommand": subcommand,
        "seed": defaults.SEED if seed is None else seed,
        "git_revision": git_revision(),
        "workers": workers,
        "format": fmt,
        "parameters": resolved,
        "summary": res.summary,
        "files": [str(p.relative_to(out)) for p in [data, *res.files]],
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stochflow", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in RUNNERS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", type=Path, default=Path("."))
        p.add_argument("--workers", type=int, default=defaults.WORKERS)
        p.add_argument("--format", choices=("csv", "json"), default="csv")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("config error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    if args.workers < 1:
        print("config error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    return run(args.subcommand, args.config, args.seed, args.out, args.workers, args.format)


if __name__ == "__main__":
    sys.exit(main())
