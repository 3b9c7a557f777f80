"""Batch front-end: field generation, fine/coarse solves, convergence studies.

Subcommands
-----------
  gen-field   write a coefficient raster (CSV) plus a metadata sidecar
  solve-fine  reference solve on the fine grid
  solve-ms    coarse solve in the multiscale space for one basis count
  study       basis-count sweep; emits the error table and plot data

Configuration is ``key = value`` lines in a plain-text file (``--config``),
with command-line flags overriding file values.  All randomness flows
through the explicit seed, so identical configurations produce byte
identical outputs.

Exit codes: 0 success, 1 numerical failure (a solve did not converge),
2 usage or configuration error.
"""

import argparse
import os
import sys
from dataclasses import dataclass, fields

import numpy as np

from . import assemble, field as fieldmod, msbasis, pdas, verify
from .grid import build_grids

__all__ = ["ExperimentConfig", "main"]

SOURCES = {
    "sine": assemble.default_source,
    "one": lambda x, y: np.ones_like(x),
    "zero": lambda x, y: np.zeros_like(x),
}


class UsageError(Exception):
    pass


@dataclass
class ExperimentConfig:
    """Validated experiment parameters; defaults mirror the built-in
    16 x 16 coarse grid with 16 x 16 refinement and contrast 1e4."""

    nc: int = 16
    nf: int = 16
    kind: str = "inclusions"     # inclusions | channels | raster
    seed: int = 7
    contrast: float = 1e4
    n_inclusions: int = -1       # -1: generator default (one per coarse cell)
    n_channels: int = -1         # -1: generator default (6 or 8 by kind)
    raster: str = ""
    source: str = "sine"
    l_range: str = "1:5"
    l: int = 5
    c: float = 1.0
    tol: float = 1e-10
    maxiter: int = 12
    outdir: str = "."

    def validate(self):
        if self.nc < 1 or self.nf < 1:
            raise UsageError("nc and nf must be positive integers")
        if self.kind not in ("inclusions", "channels", "raster"):
            raise UsageError("kind must be inclusions, channels, or raster")
        if self.kind == "raster" and not self.raster:
            raise UsageError("kind = raster requires a raster path")
        if self.source not in SOURCES:
            raise UsageError("unknown source %r (choose from %s)"
                             % (self.source, ", ".join(sorted(SOURCES))))
        if self.contrast < 1.0:
            raise UsageError("contrast must be >= 1")
        if self.c <= 0.0 or self.tol <= 0.0 or self.maxiter < 1:
            raise UsageError("c and tol must be positive, maxiter >= 1")
        if self.l < 1:
            raise UsageError("l must be >= 1")
        if not self.parsed_l_range():
            raise UsageError("l_range must be nonempty")

    def parsed_l_range(self):
        """Accepts 'a:b' (inclusive) or a comma list."""
        text = self.l_range.strip()
        try:
            if ":" in text:
                a, b = text.split(":")
                return list(range(int(a), int(b) + 1))
            return [int(tok) for tok in text.split(",") if tok.strip()]
        except ValueError as exc:
            raise UsageError("cannot parse l_range %r" % (text,)) from exc


def _coerce(kind, text):
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    return text


def load_config_file(path, config):
    """Apply ``key = value`` lines onto a config; '#' starts a comment."""
    known = {f.name: f.type for f in fields(ExperimentConfig)}
    typemap = {"int": int, "float": float, "str": str}
    try:
        lines = open(path).read().splitlines()
    except OSError as exc:
        raise UsageError("cannot read config file %s: %s" % (path, exc))
    for ln, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError("%s:%d: expected key = value" % (path, ln))
        key, val = (tok.strip() for tok in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise UsageError("%s:%d: unknown key %r" % (path, ln, key))
        try:
            setattr(config, key, _coerce(typemap.get(known[key], str), val))
        except ValueError as exc:
            raise UsageError("%s:%d: bad value for %s: %s" % (path, ln, key, exc))
    return config


def _config_from_args(args):
    config = ExperimentConfig()
    if getattr(args, "config", None):
        load_config_file(args.config, config)
    for f in fields(ExperimentConfig):
        val = getattr(args, f.name, None)
        if val is not None:
            setattr(config, f.name, val)
    config.validate()
    return config


def _grid_and_field(config):
    g = build_grids(config.nc, config.nf)
    if config.kind == "raster":
        kappa = fieldmod.load_raster(config.raster, g)
    elif config.kind == "inclusions":
        nincl = config.n_inclusions if config.n_inclusions >= 0 else None
        nch = config.n_channels if config.n_channels >= 0 else 6
        kappa = fieldmod.generate_inclusions(g, config.seed, config.contrast,
                                             nincl, nch)
    else:
        nch = config.n_channels if config.n_channels >= 0 else 8
        kappa = fieldmod.generate_channels(g, config.seed, config.contrast, nch)
    return g, kappa


def _write_vector(path, v):
    with open(path, "w") as fh:
        for x in np.asarray(v, dtype=float):
            fh.write("%.17g\n" % x)


def _write_trace(path, sol):
    with open(path, "w") as fh:
        fh.write("k,active,dphi,ncp\n")
        for k, nact, dphi, ncp in sol.trace:
            fh.write("%d,%d,%.17g,%.17g\n" % (k, nact, dphi, ncp))


def _write_report(path, sol, system, extra=()):
    min_bu, min_phi, comp, ncp = verify.complementarity_report(sol, system)
    items = [("converged", int(sol.converged)),
             ("iterations", sol.iterations),
             ("active", sol.active.size),
             ("min_bu", min_bu), ("min_phi", min_phi),
             ("comp", comp), ("ncp", ncp),
             ("stationarity", verify.stationarity_residual(sol, system))]
    items.extend(extra)
    with open(path, "w") as fh:
        for key, val in items:
            if isinstance(val, float):
                fh.write("%s = %.17g\n" % (key, val))
            else:
                fh.write("%s = %s\n" % (key, val))


def cmd_gen_field(config):
    g, kappa = _grid_and_field(config)
    os.makedirs(config.outdir, exist_ok=True)
    path = os.path.join(config.outdir, "kappa.csv")
    fieldmod.save_raster(kappa, g, path)
    with open(os.path.join(config.outdir, "kappa.meta"), "w") as fh:
        fh.write("kind = %s\n" % config.kind)
        fh.write("seed = %d\n" % config.seed)
        fh.write("contrast = %.17g\n" % config.contrast)
        fh.write("nc = %d\n" % config.nc)
        fh.write("nf = %d\n" % config.nf)
        fh.write("descriptor = %s\n" % kappa.descriptor)
    return 0


def cmd_solve(config, scale):
    """Shared driver for solve-fine and solve-ms."""
    g, kappa = _grid_and_field(config)
    os.makedirs(config.outdir, exist_ok=True)
    f = SOURCES[config.source]
    sys_f = assemble.assemble_fine(g, kappa, f)

    if scale == "fine":
        system = pdas.fine_hybrid(sys_f)
        sol = pdas.pdas_solve(system, c=config.c, tol=config.tol,
                              maxiter=config.maxiter)
        _write_vector(os.path.join(config.outdir, "U_fine.csv"), sol.U)
        _write_vector(os.path.join(config.outdir, "Phi_fine.csv"), sol.Phi)
        _write_trace(os.path.join(config.outdir, "trace_fine.csv"), sol)
        _write_report(os.path.join(config.outdir, "report_fine.txt"), sol, system)
    else:
        space = msbasis.build_space(sys_f, g, config.l)
        Mc, Bc, Lc = msbasis.coarse_operators(space, sys_f)
        system = pdas.coarse_hybrid(Mc, Bc, Lc)
        sol = pdas.pdas_solve(system, c=config.c, tol=config.tol,
                              maxiter=config.maxiter)
        _write_vector(os.path.join(config.outdir, "U_ms.csv"), sol.U)
        _write_vector(os.path.join(config.outdir, "Phi_ms.csv"), sol.Phi)
        _write_vector(os.path.join(config.outdir, "u_ms_fine.csv"),
                      space.R_off @ sol.U)
        _write_trace(os.path.join(config.outdir, "trace_ms.csv"), sol)
        _write_report(os.path.join(config.outdir, "report_ms.txt"), sol, system,
                      extra=[("coarse_dof", space.m_off),
                             ("Lambda", space.Lambda),
                             ("Lambda_all", space.Lambda_all)])
    return 0 if sol.converged else 1


def cmd_study(config):
    g, kappa = _grid_and_field(config)
    os.makedirs(config.outdir, exist_ok=True)
    f = SOURCES[config.source]
    result = verify.convergence_study(g, kappa, f, config.parsed_l_range(),
                                      c=config.c, tol=config.tol,
                                      maxiter=config.maxiter)
    with open(os.path.join(config.outdir, "study.csv"), "w") as fh:
        fh.write(verify.study_csv(result.reports))
    with open(os.path.join(config.outdir, "plot_e_l2.dat"), "w") as fh:
        for rep in result.reports:
            fh.write("%d %.17g\n" % (rep.l, rep.e_L2))
    with open(os.path.join(config.outdir, "plot_e_a.dat"), "w") as fh:
        for rep in result.reports:
            fh.write("%d %.17g\n" % (rep.l, rep.e_a))
    ok = result.fine.converged and all(sol.converged for _, _, sol in result.coarse)
    return 0 if ok else 1


def _add_common(parser):
    parser.add_argument("--config", metavar="FILE",
                        help="key = value file; flags override its entries")
    parser.add_argument("--nc", type=int, help="coarse cells per side")
    parser.add_argument("--nf", type=int, help="fine cells per coarse cell")
    parser.add_argument("--kind", choices=("inclusions", "channels", "raster"))
    parser.add_argument("--seed", type=int)
    parser.add_argument("--contrast", type=float)
    parser.add_argument("--n-inclusions", dest="n_inclusions", type=int)
    parser.add_argument("--n-channels", dest="n_channels", type=int)
    parser.add_argument("--raster", help="path of a raster to load (kind=raster)")
    parser.add_argument("--outdir")


def _add_solver(parser):
    parser.add_argument("--source", choices=sorted(SOURCES))
    parser.add_argument("--c", type=float, help="active-set scaling (default 1)")
    parser.add_argument("--tol", type=float)
    parser.add_argument("--maxiter", type=int)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mscontact",
        description="Multiscale solvers for unilateral contact problems "
                    "with high-contrast coefficients.")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("gen-field", help="generate a coefficient raster")
    _add_common(p)

    p = subs.add_parser("solve-fine", help="reference solve on the fine grid")
    _add_common(p)
    _add_solver(p)

    p = subs.add_parser("solve-ms", help="coarse solve in the multiscale space")
    _add_common(p)
    _add_solver(p)
    p.add_argument("--l", type=int, help="basis count per interior node")

    p = subs.add_parser("study", help="basis-count convergence study")
    _add_common(p)
    _add_solver(p)
    p.add_argument("--l-range", dest="l_range",
                   help="'a:b' inclusive or comma list, default 1:5")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _config_from_args(args)
        if args.command == "gen-field":
            code = cmd_gen_field(config)
        elif args.command == "solve-fine":
            code = cmd_solve(config, "fine")
        elif args.command == "solve-ms":
            code = cmd_solve(config, "ms")
        else:
            code = cmd_study(config)
    except UsageError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    return code


if __name__ == "__main__":
    sys.exit(main())
