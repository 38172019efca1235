"""Experiment harness: configs, simulation driver, sweeps, CSV and SVG.

Config files are flat ``key = value`` lines with ``#`` comments.  Recognized
keys mirror ExperimentConfig; unknown keys are rejected.  The ``run``
command produces a CSV time series of the relative l2 error (and the
discrete energy for second-order kinds); the sweep commands produce rate
tables; ``plot`` renders CSVs as a self-contained SVG.

Exit codes: 0 success, 2 configuration error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
import time as _time
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import system as sy
from .assembly import assemble_global
from .linalg import SingularMatrixError
from .mesh import build_base_mesh, refine_uniform


class ConfigError(Exception):
    pass


class SolverError(Exception):
    pass


_KIND_DEFAULTS = {
    "schrodinger": dict(c=1.0, d1=0.0, d2=0.0, k=0.0, t_start=0.0),
    "driftdiffusion": dict(c=0.5, d1=1.5, d2=1.5, k=0.0, t_start=0.2),
    "heat": dict(c=0.5, d1=0.0, d2=0.0, k=0.0, t_start=0.2),
    "wave": dict(c=1.0, d1=0.0, d2=0.0, k=0.0, t_start=0.0),
    "kleingordon": dict(c=1.0, d1=0.0, d2=0.0, k=1.0, t_start=0.0),
}

# desk-scale defaults; the paper-scale values remain legal config
_DEFAULT_T_END = {"schrodinger": 2.0, "driftdiffusion": 5.0, "heat": 5.0,
                  "wave": 30.0, "kleingordon": 30.0}


@dataclass(frozen=True)
class ExperimentConfig:
    equation: str = "schrodinger"
    fe_order: int = 2
    refinements: int = 2
    n_xi: int = 10
    dt: float = 1.0 / 800.0
    t_end: float | None = None
    n_outputs: int = 200
    s0: complex | None = None
    c: float | None = None
    d1: float | None = None
    d2: float | None = None
    k: float | None = None
    half_width: float = 4.0
    corner_chamfer: float = 0.5
    target_edge: float = 2.0
    output: str | None = None

    def resolved(self):
        """Fill kind-dependent defaults and validate ranges."""
        if self.equation not in sy.KINDS:
            raise ConfigError("unknown equation %r" % (self.equation,))
        kd = _KIND_DEFAULTS[self.equation]
        cfg = replace(
            self,
            t_end=self.t_end if self.t_end is not None else _DEFAULT_T_END[self.equation],
            c=self.c if self.c is not None else kd["c"],
            d1=self.d1 if self.d1 is not None else kd["d1"],
            d2=self.d2 if self.d2 is not None else kd["d2"],
            k=self.k if self.k is not None else kd["k"],
        )
        if not 1 <= cfg.fe_order <= 4:
            raise ConfigError("fe_order must be in 1..4")
        if not 0 <= cfg.refinements <= 5:
            raise ConfigError("refinements must be in 0..5")
        if not 1 <= cfg.n_xi <= 51:
            raise ConfigError("n_xi must be in 1..51")
        if cfg.dt <= 0:
            raise ConfigError("dt must be positive")
        if cfg.t_end <= 0:
            raise ConfigError("t_end must be positive")
        if cfg.n_outputs < 2:
            raise ConfigError("n_outputs must be >= 2")
        try:
            sy.ProblemSpec(kind=cfg.equation, c=cfg.c, d=(cfg.d1, cfg.d2),
                           k=cfg.k, s0=cfg.s0)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return cfg

    @property
    def t_start(self):
        return _KIND_DEFAULTS[self.equation]["t_start"]

    def echo_items(self):
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            out.append((f.name, _fmt_value(v)))
        return out


@dataclass
class RunResult:
    times: np.ndarray
    errors: np.ndarray
    energies: np.ndarray | None
    config: ExperimentConfig
    wall_time: float = 0.0

    @property
    def max_error(self):
        finite = self.errors[np.isfinite(self.errors)]
        return float(np.max(finite)) if len(finite) else float("nan")


_CONFIG_PARSERS = {
    "equation": str,
    "fe_order": int,
    "refinements": int,
    "n_xi": int,
    "dt": lambda s: parse_fraction(s),
    "t_end": float,
    "n_outputs": int,
    "s0": complex,
    "c": float,
    "d1": float,
    "d2": float,
    "k": float,
    "half_width": float,
    "corner_chamfer": float,
    "target_edge": float,
    "output": str,
}


def parse_fraction(s):
    """Float or p/q literal like 1/800."""
    s = s.strip()
    if "/" in s:
        p, q = s.split("/", 1)
        return float(p) / float(q)
    return float(s)


def parse_config_text(text):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("line %d: expected key = value" % lineno)
        key, val = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_PARSERS:
            raise ConfigError("line %d: unknown key %r" % (lineno, key))
        if key in values:
            raise ConfigError("line %d: duplicate key %r" % (lineno, key))
        try:
            values[key] = _CONFIG_PARSERS[key](val)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError("line %d: bad value for %s: %s" % (lineno, key, exc)) from None
    return ExperimentConfig(**values).resolved()


def parse_config(path):
    try:
        with open(path) as fh:
            return parse_config_text(fh.read())
    except OSError as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# simulation driver
# ---------------------------------------------------------------------------

def build_system(cfg):
    mesh = build_base_mesh(cfg.half_width, cfg.corner_chamfer, cfg.target_edge)
    for _ in range(cfg.refinements):
        mesh = refine_uniform(mesh)
    spec = sy.ProblemSpec(kind=cfg.equation, c=cfg.c, d=(cfg.d1, cfg.d2),
                          k=cfg.k, s0=cfg.s0)
    gsys = assemble_global(mesh, cfg.fe_order, cfg.n_xi,
                           c=spec.c, d=spec.d, k=spec.k)
    return gsys, spec


def run(cfg, gsys=None, spec=None):
    """Run one experiment; returns the RunResult and writes the CSV if the
    config names an output path."""
    cfg = cfg.resolved()
    t0 = _time.perf_counter()
    if gsys is None:
        gsys, spec = build_system(cfg)
    dm = gsys.dof_map
    bundle = sy.build_semidiscrete(gsys, spec)
    exact = sy.exact_solution_fn(spec)

    span = cfg.t_end - cfg.t_start
    n_steps = max(1, int(round(span / cfg.dt)))
    if abs(n_steps * cfg.dt - span) > 1e-9 * max(1.0, span):
        n_steps = int(np.ceil(span / cfg.dt - 1e-12))
    n_out = min(cfg.n_outputs, n_steps + 1)
    out_steps = np.unique(np.round(np.linspace(0, n_steps, n_out)).astype(int))

    if cfg.equation in ("wave", "kleingordon"):
        u0 = sy.initial_state(dm, _wave_initial, cfg.t_start).values
        series = _run_second_order(cfg, gsys, bundle, u0, n_steps, out_steps)
    else:
        state0 = sy.initial_state(dm, exact, cfg.t_start)
        series = _run_first_order(cfg, gsys, bundle, exact, state0, n_steps, out_steps)

    times, errors, energies = series
    result = RunResult(times=times, errors=errors, energies=energies, config=cfg,
                       wall_time=_time.perf_counter() - t0)
    if cfg.output:
        write_csv(result, cfg.output)
    return result


def _wave_initial(x, y, t):
    return np.exp(-2.0 * x ** 2 - 2.0 * y ** 2)


def _run_first_order(cfg, gsys, bundle, exact, state0, n_steps, out_steps):
    dm = gsys.dof_map
    u = state0.values.copy()
    times, errors = [], []
    out = set(int(s) for s in out_steps)

    def record(step):
        t = cfg.t_start + step * cfg.dt
        st = sy.StateVector(values=u, time=t)
        times.append(t)
        errors.append(sy.relative_l2_error(st, exact, dm))

    if 0 in out:
        record(0)
    try:
        for step in range(1, n_steps + 1):
            if cfg.equation == "schrodinger":
                u = sy.step_trapezoidal_first_order(bundle, u, cfg.dt)
            else:
                u = sy.step_radau5(bundle, u, cfg.dt)
            if not np.all(np.isfinite(u)):
                raise SolverError("solution became non-finite at step %d" % step)
            if step in out:
                record(step)
    except SingularMatrixError as exc:
        raise SolverError("linear solver failed at step %d: %s" % (step, exc)) from None
    return np.array(times), np.array(errors), None


def _run_second_order(cfg, gsys, bundle, u0, n_steps, out_steps):
    h = cfg.dt
    times, errors, energies = [], [], []
    out = set(int(s) for s in out_steps)

    def record(step, u_n, u_nm1):
        times.append(cfg.t_start + step * h)
        errors.append(float("nan"))  # no closed-form reference for wave runs
        energies.append(sy.discrete_energy(gsys, u_n, u_nm1, h, c=cfg.c, k=cfg.k))

    u_prev = u0
    try:
        u_cur = sy.bootstrap_wave_first_step(bundle, u0, h)
        if 0 in out:
            record(0, u_cur, u_prev)  # first meaningful energy needs two levels
        if 1 in out:
            record(1, u_cur, u_prev)
        for step in range(2, n_steps + 1):
            u_next = sy.step_wave(bundle, u_cur, u_prev, h)
            if not np.all(np.isfinite(u_next)):
                raise SolverError("solution became non-finite at step %d" % step)
            u_prev, u_cur = u_cur, u_next
            if step in out:
                record(step, u_cur, u_prev)
    except SingularMatrixError as exc:
        raise SolverError("linear solver failed: %s" % exc) from None
    return np.array(times), np.array(errors), np.array(energies)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def _fmt_value(v):
    if isinstance(v, float):
        return "%.17g" % v
    if isinstance(v, complex):
        return repr(v).strip("()")
    return str(v)


def write_csv(result, path):
    lines = ["# %s=%s" % kv for kv in result.config.echo_items()]
    has_energy = result.energies is not None
    lines.append("t,rel_l2_error" + (",energy" if has_energy else ""))
    for i in range(len(result.times)):
        row = "%.17g,%.17g" % (result.times[i], result.errors[i])
        if has_energy:
            row += ",%.17g" % result.energies[i]
        lines.append(row)
    _atomic_write(path, "\n".join(lines) + "\n")


def read_csv(path):
    """Parse a result CSV back into (config_items, column_names, columns)."""
    echo = {}
    names = None
    rows = []
    with open(path) as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                echo[key.strip()] = val.strip()
                continue
            if not line.strip():
                continue
            if names is None:
                names = [c.strip() for c in line.split(",")]
                continue
            rows.append([float(c) for c in line.split(",")])
    if names is None:
        raise ValueError("%s: no header row" % path)
    cols = np.array(rows).T if rows else np.zeros((len(names), 0))
    return echo, names, cols


def _atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

@dataclass
class SweepTable:
    """Rectangular sweep result: one row per (label, value) with the max
    error and the dyadic rate against the previous row of the same label."""

    columns: tuple
    rows: list = field(default_factory=list)

    def to_csv_text(self):
        lines = [",".join(self.columns)]
        for row in self.rows:
            lines.append(",".join(_fmt_value(v) if v is not None else "" for v in row))
        return "\n".join(lines) + "\n"

    def write(self, path):
        _atomic_write(path, self.to_csv_text())


def _rate(e_prev, e_next):
    if e_prev is None or e_next <= 0 or e_prev <= 0 or e_prev == e_next:
        return 0.0 if e_prev is not None else None
    return float(np.log2(e_prev / e_next))


def sweep_convergence_space(cfg, orders, levels):
    """Max error and observed rate per (fe_order, refinement level)."""
    table = SweepTable(columns=("fe_order", "refinements", "max_error", "rate"))
    for order in orders:
        prev = None
        for lev in levels:
            res = run(replace(cfg, fe_order=order, refinements=lev, output=None))
            rate = _rate(prev, res.max_error)
            table.rows.append((order, lev, res.max_error, rate))
            prev = res.max_error
    return table


def sweep_convergence_time(cfg, dts):
    """Max error and observed rate per time step; the system is assembled
    once and shared across the runs."""
    table = SweepTable(columns=("dt", "max_error", "rate"))
    base = cfg.resolved()
    gsys, spec = build_system(base)
    prev = None
    for dt in dts:
        res = run(replace(base, dt=dt, output=None), gsys=gsys, spec=spec)
        table.rows.append((dt, res.max_error, _rate(prev, res.max_error)))
        prev = res.max_error
    return table


def sweep_nxi(cfg, nxis):
    """Max error per number of ray coefficients."""
    table = SweepTable(columns=("n_xi", "max_error"))
    for n_xi in nxis:
        res = run(replace(cfg, n_xi=n_xi, output=None))
        table.rows.append((n_xi, res.max_error))
    return table


# ---------------------------------------------------------------------------
# SVG plotting
# ---------------------------------------------------------------------------

_SVG_W, _SVG_H = 640, 440
_MARGIN = 60.0
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _axis_transform(lo, hi, pix_lo, pix_hi):
    span = hi - lo if hi > lo else 1.0
    return lambda v: pix_lo + (v - lo) / span * (pix_hi - pix_lo)


def plot(csv_paths, out_path, style="semilogy"):
    """Render CSV series into one self-contained SVG (log-scale ordinate).

    Each CSV contributes one polyline per non-abscissa column; rows with
    non-finite or non-positive ordinates are skipped with a warning.
    """
    if style not in ("semilogy", "loglog"):
        raise ValueError("style must be semilogy or loglog")
    series = []
    xlabel, ylabel = "x", "value"
    for path in csv_paths:
        _, names, cols = read_csv(path)
        if len(names) < 2:
            raise ValueError("%s: need at least two columns" % path)
        xlabel = names[0]
        ylabel = names[1]
        x = cols[0] if cols.size else np.zeros(0)
        for ci in range(1, len(names)):
            y = cols[ci] if cols.size else np.zeros(0)
            keep = np.isfinite(x) & np.isfinite(y) & (y > 0)
            if style == "loglog":
                keep &= x > 0
            if cols.size and not np.all(keep):
                sys.stderr.write("plot: skipping %d unusable rows of %s:%s\n"
                                 % (int(np.sum(~keep)), path, names[ci]))
            label = "%s:%s" % (os.path.basename(path), names[ci])
            series.append((label, x[keep], y[keep]))

    pts = [(x, y) for _, x, y in series if len(x)]
    if pts:
        allx = np.concatenate([p[0] for p in pts])
        ally = np.concatenate([p[1] for p in pts])
        fx = (lambda v: np.log10(v)) if style == "loglog" else (lambda v: v)
        xlo, xhi = float(np.min(fx(allx))), float(np.max(fx(allx)))
        ylo, yhi = float(np.log10(np.min(ally))), float(np.log10(np.max(ally)))
        if xlo == xhi:
            xlo, xhi = xlo - 0.5, xhi + 0.5
        if ylo == yhi:
            ylo, yhi = ylo - 0.5, yhi + 0.5
    else:
        fx = lambda v: v
        xlo, xhi, ylo, yhi = 0.0, 1.0, 0.0, 1.0

    tx = _axis_transform(xlo, xhi, _MARGIN, _SVG_W - 20)
    ty = _axis_transform(ylo, yhi, _SVG_H - _MARGIN, 20)

    el = ['<svg xmlns="http://www.w3.org/2000/svg" width="%d" height="%d">' % (_SVG_W, _SVG_H)]
    el.append('<rect width="100%" height="100%" fill="white"/>')
    el.append('<line x1="%g" y1="%g" x2="%g" y2="%g" stroke="black"/>'
              % (_MARGIN, _SVG_H - _MARGIN, _SVG_W - 20, _SVG_H - _MARGIN))
    el.append('<line x1="%g" y1="%g" x2="%g" y2="%g" stroke="black"/>'
              % (_MARGIN, _SVG_H - _MARGIN, _MARGIN, 20))
    el.append('<text x="%g" y="%g" font-size="13">%s</text>'
              % (_SVG_W / 2 - 20, _SVG_H - 15, _esc(xlabel)))
    el.append('<text x="15" y="%g" font-size="13" transform="rotate(-90 15 %g)">%s</text>'
              % (_SVG_H / 2, _SVG_H / 2, _esc("log10 " + ylabel)))
    for tick in np.linspace(ylo, yhi, 5):
        el.append('<text x="%g" y="%g" font-size="10" text-anchor="end">%.2g</text>'
                  % (_MARGIN - 5, ty(tick) + 3, tick))
    for tick in np.linspace(xlo, xhi, 5):
        el.append('<text x="%g" y="%g" font-size="10" text-anchor="middle">%.3g</text>'
                  % (tx(tick), _SVG_H - _MARGIN + 15, tick))

    for i, (label, x, y) in enumerate(series):
        color = _COLORS[i % len(_COLORS)]
        if len(x):
            coords = " ".join("%.2f,%.2f" % (tx(fx(xv)), ty(np.log10(yv)))
                              for xv, yv in zip(x, y))
            el.append('<polyline points="%s" fill="none" stroke="%s" stroke-width="1.5"/>'
                      % (coords, color))
        el.append('<text x="%g" y="%g" font-size="11" fill="%s">%s</text>'
                  % (_SVG_W - 250, 30 + 14 * i, color, _esc(label)))
    el.append("</svg>")
    _atomic_write(out_path, "\n".join(el) + "\n")


def _esc(s):
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------

def _parse_int_list(s):
    out = []
    for part in s.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def _parse_dt_list(s):
    return [parse_fraction(p) for p in s.split(",")]


def main(argv=None):
    parser = argparse.ArgumentParser(prog="polefem",
                                     description="pole-condition boundary experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment from a config file")
    p_run.add_argument("config")

    p_space = sub.add_parser("sweep-space", help="spatial convergence sweep")
    p_space.add_argument("config")
    p_space.add_argument("--orders", default="1,2,3,4")
    p_space.add_argument("--levels", default="1..3")
    p_space.add_argument("-o", "--output", default=None)

    p_time = sub.add_parser("sweep-time", help="temporal convergence sweep")
    p_time.add_argument("config")
    p_time.add_argument("--dts", required=True)
    p_time.add_argument("-o", "--output", default=None)

    p_nxi = sub.add_parser("sweep-nxi", help="ray-coefficient sweep")
    p_nxi.add_argument("config")
    p_nxi.add_argument("--nxi", required=True)
    p_nxi.add_argument("-o", "--output", default=None)

    p_plot = sub.add_parser("plot", help="render CSVs to SVG")
    p_plot.add_argument("csvs", nargs="+")
    p_plot.add_argument("-o", "--output", required=True)
    p_plot.add_argument("--style", default="semilogy", choices=("semilogy", "loglog"))

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            cfg = parse_config(args.config)
            res = run(cfg)
            print("max rel_l2_error = %.6g  (%d outputs, %.1f s)"
                  % (res.max_error, len(res.times), res.wall_time))
        elif args.command == "sweep-space":
            cfg = parse_config(args.config)
            table = sweep_convergence_space(cfg, _parse_int_list(args.orders),
                                            _parse_int_list(args.levels))
            _emit_table(table, args.output)
        elif args.command == "sweep-time":
            cfg = parse_config(args.config)
            table = sweep_convergence_time(cfg, _parse_dt_list(args.dts))
            _emit_table(table, args.output)
        elif args.command == "sweep-nxi":
            cfg = parse_config(args.config)
            table = sweep_nxi(cfg, _parse_int_list(args.nxi))
            _emit_table(table, args.output)
        elif args.command == "plot":
            plot(args.csvs, args.output, style=args.style)
    except ConfigError as exc:
        sys.stderr.write("config error: %s\n" % exc)
        return 2
    except (SolverError, SingularMatrixError) as exc:
        sys.stderr.write("solver failure: %s\n" % exc)
        return 3
    return 0


def _emit_table(table, output):
    text = table.to_csv_text()
    if output:
        _atomic_write(output, text)
    sys.stdout.write(text)


if __name__ == "__main__":
    sys.exit(main())
