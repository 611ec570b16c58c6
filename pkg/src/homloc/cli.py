"""Command-line front end.

    homloc fisher     --config cfg.json [--out fim.csv]
    homloc scan       --config cfg.json --out sweep.csv
    homloc simulate   --config cfg.json --out events.txt [--seed S] [--threads T]
    homloc estimate   --config cfg.json EVENTS [--override-digest]
    homloc experiment --config cfg.json [--out table.csv] [--threads T]
    homloc compare    --config cfg.json [--out table.csv]

Scenario configs are JSON with a versioned schema (see README). Exit
codes: 0 success, 2 config error, 3 numeric non-convergence, 4 I/O or
file-format error. HOMLOC_THREADS is the fallback for --threads.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .errors import (
    ConfigError,
    DataFormatError,
    NumericError,
    ValidationError,
)
from .estimator import SearchConfig, mle_fit, replicate
from .fisher import crb, fi_quadrature, fim_closed_form
from .model import (
    Offset3D,
    PolarizationSetting,
    SourceSpec,
    SpatialWidths,
    Strategy,
    widths_to_bandwidths,
)
from .physics import gamma_coefficient, kappa_coefficient, optimal_tuning, visibility
from .sampler import load_events, sample_batch, save_events, scenario_digest

SCHEMA_VERSION = 1
_DEFAULT_N_PAIRS = 1000
_DEFAULT_GRID_CAP = 1_000_000


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def _get(cfg, path, default=None, required=False):
    node = cfg
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            if required:
                raise ConfigError("missing required field", field=path)
            return default
        node = node[part]
    return node


def _number(cfg, path, default=None, required=False):
    val = _get(cfg, path, default=default, required=required)
    if val is None:
        return None
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"expected a number, got {val!r}", field=path)
    return float(val)


def load_config(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    version = _get(cfg, "schema_version", required=True)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r}, "
                          f"expected {SCHEMA_VERSION}", field="schema_version")
    return cfg


def build_source(cfg) -> SourceSpec:
    src = _get(cfg, "source", required=True)
    if not isinstance(src, dict):
        raise ConfigError("must be an object", field="source")
    has_w = "widths" in src
    has_b = "bandwidths" in src
    if has_w == has_b:
        raise ConfigError("exactly one of 'widths' or 'bandwidths' required",
                          field="source")
    try:
        if has_w:
            w = SpatialWidths(
                sigma_x=_number(cfg, "source.widths.sigma_x", required=True),
                sigma_y=_number(cfg, "source.widths.sigma_y", required=True),
                sigma_t=_number(cfg, "source.widths.sigma_t", required=True))
            return widths_to_bandwidths(w)
        return SourceSpec(
            sigma_kx=_number(cfg, "source.bandwidths.sigma_kx", required=True),
            sigma_ky=_number(cfg, "source.bandwidths.sigma_ky", required=True),
            sigma_omega=_number(cfg, "source.bandwidths.sigma_omega", required=True))
    except ValidationError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc), field="source")


def build_polarization(cfg) -> PolarizationSetting:
    nu = _number(cfg, "polarization.nu", required=True)
    strategy = _get(cfg, "polarization.strategy", required=True)
    if strategy not in ("tuned", "non_tuned"):
        raise ConfigError(f"strategy must be 'tuned' or 'non_tuned', got {strategy!r}",
                          field="polarization.strategy")
    try:
        if strategy == "non_tuned":
            return PolarizationSetting(nu=nu, strategy=Strategy.NON_TUNED)
        optimal = _get(cfg, "polarization.optimal", default=False)
        d_a = _number(cfg, "polarization.d_a")
        if optimal and d_a is not None:
            raise ConfigError("give either 'd_a' or 'optimal', not both",
                              field="polarization")
        if optimal:
            d_a = optimal_tuning(nu)[0]
        elif d_a is None:
            raise ConfigError("tuned strategy needs 'd_a' or 'optimal': true",
                              field="polarization")
        return PolarizationSetting(nu=nu, strategy=Strategy.TUNED, d_a=d_a)
    except ValidationError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc), field="polarization")


def build_offset(cfg) -> Offset3D:
    try:
        return Offset3D(
            dx=_number(cfg, "offset.dx", default=0.0),
            dy=_number(cfg, "offset.dy", default=0.0),
            dt=_number(cfg, "offset.dt", default=0.0))
    except ValidationError as exc:
        raise ConfigError(str(exc), field="offset")


def _n_pairs(cfg, out) -> int:
    n = _get(cfg, "counts.n_pairs")
    if n is None:
        print(f"notice: counts.n_pairs not set, defaulting to {_DEFAULT_N_PAIRS}",
              file=out)
        return _DEFAULT_N_PAIRS
    if not isinstance(n, int) or isinstance(n, bool) or n <= 0:
        raise ConfigError(f"must be a positive integer, got {n!r}",
                          field="counts.n_pairs")
    return n


def _seed(cfg, args) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    seed = _get(cfg, "seed", default=0)
    if not isinstance(seed, int) or isinstance(seed, bool) or not (0 <= seed < 2 ** 64):
        raise ConfigError(f"must be an integer in [0, 2^64), got {seed!r}", field="seed")
    return seed


def _threads(args) -> int:
    if getattr(args, "threads", None) is not None:
        return args.threads
    env = os.environ.get("HOMLOC_THREADS")
    if env is None:
        return 1
    try:
        return int(env)
    except ValueError:
        raise ConfigError(f"HOMLOC_THREADS must be an integer, got {env!r}")


def _out_path(cfg, args, required=False):
    path = getattr(args, "out", None) or _get(cfg, "output.path")
    if path is None and required:
        raise ConfigError("no output path: pass --out or set output.path",
                          field="output.path")
    return path


def _search_config(cfg) -> SearchConfig:
    box = _get(cfg, "estimate.box", default=[[-5.0, 5.0]] * 3)
    try:
        box = tuple(tuple(float(v) for v in pair) for pair in box)
    except (TypeError, ValueError):
        raise ConfigError(f"box must be three [lo, hi] pairs, got {box!r}",
                          field="estimate.box")
    kwargs = {"box": box}
    for name in ("grid_points", "coarse_subsample", "min_events", "max_iter"):
        val = _get(cfg, f"estimate.{name}")
        if val is not None:
            if not isinstance(val, int) or isinstance(val, bool):
                raise ConfigError(f"must be an integer, got {val!r}",
                                  field=f"estimate.{name}")
            kwargs[name] = val
    try:
        return SearchConfig(**kwargs)
    except ValidationError as exc:
        raise ConfigError(str(exc), field="estimate")


def _write_csv(path, header, rows):
    try:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(row) + "\n")
    except OSError:
        raise


def _fim_row(label, fm, report):
    cells = [label]
    cells += [_fmt(fm.m[i, i]) for i in range(3)]
    cells += [_fmt(x) for x in report.as_tuple()]
    cells.append("1" if fm.far_regime_only else "0")
    return cells


def cmd_fisher(cfg, args, out=None) -> int:
    out = sys.stdout if out is None else out
    s = build_source(cfg)
    p = build_polarization(cfg)
    theta = build_offset(cfg)
    n = _n_pairs(cfg, out)

    closed = fim_closed_form(p, s)
    quad = fi_quadrature(p, s, theta)
    crb_closed = crb(closed, n)
    crb_quad = crb(quad, n)

    print(f"strategy={p.strategy.value} nu={_fmt(p.nu)} d_a={_fmt(p.d_a)} "
          f"visibility={_fmt(visibility(p).value)}", file=out)
    print(f"offset dx={_fmt(theta.dx)} dy={_fmt(theta.dy)} dt={_fmt(theta.dt)}",
          file=out)
    print(f"closed_form FI diag: {_fmt(closed.m[0, 0])} {_fmt(closed.m[1, 1])} "
          f"{_fmt(closed.m[2, 2])} (per emitted pair)", file=out)
    if closed.far_regime_only:
        print("note: non-tuned closed form is the far-regime limit "
              "(sigma * offset >> 1 only)", file=out)
    print(f"quadrature  FI diag: {_fmt(quad.m[0, 0])} {_fmt(quad.m[1, 1])} "
          f"{_fmt(quad.m[2, 2])}", file=out)
    print(f"CRB at N={n} (closed form): std_dx={_fmt(crb_closed.std_dx)} "
          f"std_dy={_fmt(crb_closed.std_dy)} std_dt={_fmt(crb_closed.std_dt)}",
          file=out)
    print(f"CRB at N={n} (quadrature):  std_dx={_fmt(crb_quad.std_dx)} "
          f"std_dy={_fmt(crb_quad.std_dy)} std_dt={_fmt(crb_quad.std_dt)}", file=out)

    path = _out_path(cfg, args)
    if path:
        header = ["method", "fi_dx", "fi_dy", "fi_dt",
                  "crb_std_dx", "crb_std_dy", "crb_std_dt", "far_regime_only"]
        _write_csv(path, header, [
            _fim_row("closed_form", closed, crb_closed),
            _fim_row("quadrature", quad, crb_quad),
        ])
        print(f"wrote {path}", file=out)
    return 0


_SWEEP_AXES = ("d_a", "nu", "dx", "dy", "dt")


def _sweep_axis(cfg, spec, idx):
    where = f"sweep.axes[{idx}]"
    if not isinstance(spec, dict):
        raise ConfigError("axis spec must be an object", field=where)
    name = spec.get("name")
    if name not in _SWEEP_AXES:
        raise ConfigError(f"name must be one of {_SWEEP_AXES}, got {name!r}",
                          field=where)
    try:
        start, stop = float(spec["start"]), float(spec["stop"])
        points = int(spec["points"])
    except (KeyError, TypeError, ValueError):
        raise ConfigError("needs numeric 'start', 'stop' and integer 'points'",
                          field=where)
    if points < 1 or not np.isfinite(start) or not np.isfinite(stop):
        raise ConfigError("range must be finite and points >= 1", field=where)
    return name, np.linspace(start, stop, points)


def cmd_scan(cfg, args, out=None) -> int:
    out = sys.stdout if out is None else out
    s = build_source(cfg)
    base_theta = build_offset(cfg)
    axes_spec = _get(cfg, "sweep.axes", required=True)
    if not isinstance(axes_spec, list) or not (1 <= len(axes_spec) <= 2):
        raise ConfigError("sweep.axes must list one or two axes", field="sweep.axes")
    axes = [_sweep_axis(cfg, spec, i) for i, spec in enumerate(axes_spec)]

    cap = _get(cfg, "sweep.max_points", default=_DEFAULT_GRID_CAP)
    total = 1
    for _, values in axes:
        total *= len(values)
    if total > cap:
        raise ConfigError(
            f"sweep grid has {total} points, above the cap {cap}; "
            "reduce 'points' or raise sweep.max_points", field="sweep")

    strategy = _get(cfg, "polarization.strategy", required=True)
    base_nu = _number(cfg, "polarization.nu", required=True)
    optimal = bool(_get(cfg, "polarization.optimal", default=False))
    base_da = _number(cfg, "polarization.d_a")

    names = [name for name, _ in axes]
    header = names + ["fi_dx", "fi_dy", "fi_dt", "method", "strategy", "visibility"]
    rows = []
    grids = np.meshgrid(*[vals for _, vals in axes], indexing="ij")
    flat = [g.ravel() for g in grids]
    for i in range(total):
        point = dict(zip(names, (float(f[i]) for f in flat)))
        nu = point.get("nu", base_nu)
        th = Offset3D(dx=point.get("dx", base_theta.dx),
                      dy=point.get("dy", base_theta.dy),
                      dt=point.get("dt", base_theta.dt))
        try:
            if strategy == "tuned":
                d_a = point.get("d_a", optimal_tuning(nu)[0] if optimal else base_da)
                if d_a is None:
                    raise ConfigError("tuned sweep needs 'd_a' (fixed, swept, or optimal)",
                                      field="polarization")
                p = PolarizationSetting(nu=nu, strategy=Strategy.TUNED, d_a=d_a)
                fm = fim_closed_form(p, s)  # exact at every offset
                method = "closed_form"
            else:
                p = PolarizationSetting(nu=nu, strategy=Strategy.NON_TUNED)
                fm = fi_quadrature(p, s, th)
                method = "quadrature"
        except ValidationError as exc:
            raise ConfigError(str(exc), field="sweep")
        row = [_fmt(point[nm]) for nm in names]
        row += [_fmt(fm.m[0, 0]), _fmt(fm.m[1, 1]), _fmt(fm.m[2, 2]),
                method, strategy, _fmt(visibility(p).value)]
        rows.append(row)

    path = _out_path(cfg, args, required=True)
    _write_csv(path, header, rows)
    print(f"wrote {path} ({total} rows)", file=out)
    return 0


def cmd_simulate(cfg, args, out=None) -> int:
    out = sys.stdout if out is None else out
    s = build_source(cfg)
    p = build_polarization(cfg)
    theta = build_offset(cfg)
    n = _n_pairs(cfg, out)
    seed = _seed(cfg, args)
    batch = sample_batch(seed, n, theta, p, s, n_jobs=_threads(args))
    path = _out_path(cfg, args, required=True)
    save_events(batch, path)
    frac = (float(np.mean(batch.upsilon == -1)) if batch.n_detected else float("nan"))
    print(f"n_emitted={batch.n_emitted} n_detected={batch.n_detected} "
          f"coincidence_fraction={_fmt(frac)}", file=out)
    print(f"wrote {path}", file=out)
    return 0


def cmd_estimate(cfg, args, out=None) -> int:
    out = sys.stdout if out is None else out
    s = build_source(cfg)
    p = build_polarization(cfg)
    theta = build_offset(cfg)
    events_path = getattr(args, "events", None) or _get(cfg, "estimate.events_path")
    if events_path is None:
        raise ConfigError("no event file: pass EVENTS or set estimate.events_path",
                          field="estimate.events_path")
    batch = load_events(events_path)
    expected = scenario_digest(theta, p, s)
    if batch.digest != expected and not getattr(args, "override_digest", False):
        raise ConfigError(
            f"event file digest {batch.digest} does not match the configured "
            f"scenario {expected}; pass --override-digest to fit anyway")

    fit = mle_fit(batch, p, s, _search_config(cfg))
    obs = fit.observed_information
    try:
        cov = np.linalg.inv(obs)
        ses = [float(np.sqrt(max(cov[i, i], 0.0))) for i in range(3)]
    except np.linalg.LinAlgError:
        ses = [float("nan")] * 3

    th = fit.theta_hat
    print(f"n_events={fit.n_events_used} converged={fit.converged}", file=out)
    print(f"theta_hat dx={_fmt(th.dx)} dy={_fmt(th.dy)} dt={_fmt(th.dt)}", file=out)
    print(f"stderr    dx={_fmt(ses[0])} dy={_fmt(ses[1])} dt={_fmt(ses[2])}", file=out)
    print(f"log_likelihood={_fmt(fit.log_likelihood)}", file=out)

    path = _out_path(cfg, args)
    if path:
        header = ["dx_hat", "dy_hat", "dt_hat", "se_dx", "se_dy", "se_dt",
                  "log_likelihood", "converged", "n_events"]
        row = [_fmt(th.dx), _fmt(th.dy), _fmt(th.dt)] + [_fmt(x) for x in ses]
        row += [_fmt(fit.log_likelihood), "1" if fit.converged else "0",
                str(fit.n_events_used)]
        _write_csv(path, header, [row])
        print(f"wrote {path}", file=out)
    if not fit.converged:
        print(f"error: fit did not converge: {fit.trace}", file=sys.stderr)
        return 3
    return 0


def cmd_experiment(cfg, args, out=None) -> int:
    out = sys.stdout if out is None else out
    s = build_source(cfg)
    p = build_polarization(cfg)
    theta = build_offset(cfg)
    r = _get(cfg, "counts.replications", required=True)
    if not isinstance(r, int) or isinstance(r, bool) or r < 2:
        raise ConfigError(f"must be an integer >= 2, got {r!r}",
                          field="counts.replications")
    sizes = _get(cfg, "experiment.sample_sizes", required=True)
    if (not isinstance(sizes, list) or not sizes
            or not all(isinstance(n, int) and not isinstance(n, bool) and n > 0
                       for n in sizes)):
        raise ConfigError("must be a nonempty list of positive integers",
                          field="experiment.sample_sizes")
    seed = _seed(cfg, args)
    search = _search_config(cfg)
    n_jobs = _threads(args)

    header = ["sample_size", "axis", "empirical_std", "crb_std", "ratio",
              "n_excluded"]
    rows = []
    axis_names = ("dx", "dy", "dt")
    for si, n in enumerate(sizes):
        size_seed = int(np.random.SeedSequence(
            entropy=seed, spawn_key=(si,)).generate_state(1, np.uint64)[0])
        summary = replicate(size_seed, r, n, theta, p, s, search, n_jobs=n_jobs)
        for a in range(3):
            emp = float(summary.empirical_std[a])
            ref = float(summary.crb_std[a])
            ratio = emp / ref if ref > 0 else float("inf")
            rows.append([str(n), axis_names[a], _fmt(emp), _fmt(ref), _fmt(ratio),
                         str(summary.n_excluded)])
            print(f"N={n} axis={axis_names[a]} empirical_std={_fmt(emp)} "
                  f"crb={_fmt(ref)} ratio={_fmt(ratio)} "
                  f"excluded={summary.n_excluded}", file=out)

    path = _out_path(cfg, args)
    if path:
        _write_csv(path, header, rows)
        print(f"wrote {path}", file=out)
    return 0


def cmd_compare(cfg, args, out=None) -> int:
    out = sys.stdout if out is None else out
    s = build_source(cfg)
    theta = build_offset(cfg)
    n = _n_pairs(cfg, out)
    nu = _number(cfg, "polarization.nu", required=True)
    optimal = bool(_get(cfg, "polarization.optimal", default=False))
    d_a = _number(cfg, "polarization.d_a")
    if d_a is None or optimal:
        d_a = optimal_tuning(nu)[0]
    try:
        tuned = PolarizationSetting(nu=nu, strategy=Strategy.TUNED, d_a=d_a)
    except ValidationError as exc:
        raise ConfigError(str(exc), field="polarization")
    plain = PolarizationSetting(nu=nu, strategy=Strategy.NON_TUNED)

    header = ["strategy", "visibility", "scale", "fi_dx", "fi_dy", "fi_dt",
              "crb_std_dx", "crb_std_dy", "crb_std_dt", "method"]
    rows = []
    for p, label in ((tuned, "tuned"), (plain, "non_tuned")):
        if label == "tuned":
            fm = fim_closed_form(p, s)
            method = "closed_form"
            scale = gamma_coefficient(nu, d_a)
        else:
            fm = fi_quadrature(p, s, theta)
            method = "quadrature"
            scale = kappa_coefficient(nu)
        report = crb(fm, n)
        rows.append([label, _fmt(visibility(p).value), _fmt(scale),
                     _fmt(fm.m[0, 0]), _fmt(fm.m[1, 1]), _fmt(fm.m[2, 2]),
                     _fmt(report.std_dx), _fmt(report.std_dy), _fmt(report.std_dt),
                     method])
        print(f"{label}: visibility={_fmt(visibility(p).value)} "
              f"FI diag=({_fmt(fm.m[0, 0])}, {_fmt(fm.m[1, 1])}, {_fmt(fm.m[2, 2])}) "
              f"CRB=({_fmt(report.std_dx)}, {_fmt(report.std_dy)}, "
              f"{_fmt(report.std_dt)}) at N={n}", file=out)

    path = _out_path(cfg, args)
    if path:
        _write_csv(path, header, rows)
        print(f"wrote {path}", file=out)
    return 0


_COMMANDS = {
    "fisher": cmd_fisher,
    "scan": cmd_scan,
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "experiment": cmd_experiment,
    "compare": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="homloc",
        description="Photon-pair 3D localization: Fisher information, "
                    "event simulation, and maximum-likelihood estimation")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="scenario JSON path")
        sp.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
        sp.add_argument("--out", default=None, help="output file path")
        sp.add_argument("--threads", type=int, default=None,
                        help="worker count (speed only, never results); "
                             "default HOMLOC_THREADS or 1")
        if name == "estimate":
            sp.add_argument("events", nargs="?", default=None,
                            help="event file from 'simulate'")
            sp.add_argument("--override-digest", action="store_true",
                            help="fit even if the event file scenario digest "
                                 "does not match the config")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        return _COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataFormatError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 4
    except ValidationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
