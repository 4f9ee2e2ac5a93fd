"""Command line front end.

    kclattice [--config FILE] {kernel,solve,solve-sc,fiber,verify,sweep-L} [flags]

Exit codes: 0 success, 1 non-convergence, 2 invalid configuration, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, fields, replace
from dataclasses import field as dc_field
from pathlib import Path

import numpy as np

from .energy import (
    CoercivePotential,
    ConstantPotential,
    Params,
    PeriodicPotential,
    f_eval,
    fiber_coeffs,
    sign_coeffs,
)
from .green import QuadratureError, QuadratureSpec, cached_kernel
from .lattice import BoxDomain, load_field, save_field, split_signs
from .nehari import ProjectionError, project_pair, project_ray
from .solver import (
    InitSpec,
    SolveConfig,
    SolveError,
    boundary_ratio,
    fiber_curve,
    solve_ground,
    solve_sign_changing,
)
from .verify import run_verify

log = logging.getLogger("kclattice")

EXIT_OK, EXIT_NOCONV, EXIT_INVALID, EXIT_IO = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    a: float = 1.0
    b: float = 1.0
    p: float = 3.0
    alpha: float = 2.0
    potential: str = "const:1.0"
    box: int = 9
    origin: list = dc_field(default_factory=lambda: [0, 0, 0])
    quad_n: int = 128
    quad_levels: int = 3
    kernel_radius: int | None = None
    kernel_cache: str | None = None
    kernel_tol: float | None = 1e-3
    tol: float = 1e-6
    tol_nehari: float = 1e-8
    max_iter: int = 2000
    step0: float = 1.0
    seed: int = 0
    init: str | None = None
    init_width: float = 1.5
    init_offset: int = 2
    init_noise: float = 0.0
    field: str | None = None
    sizes: list = dc_field(default_factory=lambda: [5, 7, 9])
    out: str = "out"

    def to_dict(self) -> dict:
        return asdict(self)


_FLAG_FIELDS = {
    "alpha": float, "p": float, "a": float, "b": float, "box": int, "potential": str,
    "quad_n": int, "kernel_cache": str, "tol": float, "max_iter": int, "seed": int,
    "out": str, "kernel_radius": int, "init": str, "field": str, "tol_nehari": float,
    "quad_levels": int, "init_noise": float,
}


def _parse_potential(text: str, dom: BoxDomain):
    kind, _, rest = text.partition(":")
    try:
        if kind == "const":
            return ConstantPotential(float(rest or 1.0))
        if kind == "coercive":
            parts = [s.strip() for s in rest.split(",")] if rest else []
            h0 = float(parts[0]) if parts else 1.0
            slope = float(parts[1]) if len(parts) > 1 else 0.5
            if len(parts) <= 2 or parts[2] == "center":
                center = dom.center()
            else:
                center = tuple(int(c) for c in parts[2:5])
            return CoercivePotential(h0, slope, center)
        if kind == "periodic":
            data = json.loads(Path(rest).read_text())
            return PeriodicPotential(int(data["tau"]), data["cell"], data.get("h0"))
    except OSError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"field 'potential': {exc}") from exc
    raise ConfigError(f"field 'potential': unknown kind {kind!r} (const, periodic, coercive)")


@dataclass
class Resolved:
    cfg: RunConfig
    params: Params
    dom: BoxDomain
    spec: object
    quad: QuadratureSpec
    radius: int
    solve: SolveConfig


def resolve(cfg: RunConfig, command: str) -> Resolved:
    """Validate every field before any computation."""

    def wrap(name, fn):
        try:
            return fn()
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"field '{name}': {exc}") from exc

    params = wrap("a/b/p/alpha", lambda: Params(cfg.a, cfg.b, cfg.p, cfg.alpha))
    if command == "solve-sc" and not cfg.p > 4:
        raise ConfigError(
            f"field 'p': solve-sc requires p > 4 (got {cfg.p}); the sign-changing "
            "projection pair is only known to be unique for p > 4"
        )
    dom = wrap("box", lambda: BoxDomain(cfg.box, tuple(cfg.origin)))
    spec = _parse_potential(cfg.potential, dom)
    quad = wrap("quad_n", lambda: QuadratureSpec(cfg.quad_n, cfg.quad_levels))
    radius = cfg.kernel_radius if cfg.kernel_radius is not None else max(cfg.box - 1, 1)
    if command == "kernel" and cfg.kernel_radius is None:
        radius = 16
    if radius < 1:
        raise ConfigError("field 'kernel_radius': must be >= 1")
    if command not in ("kernel", "verify", "sweep-L") and radius < cfg.box - 1:
        raise ConfigError(f"field 'kernel_radius': {radius} < box - 1 = {cfg.box - 1}")
    if command == "sweep-L":
        if not cfg.sizes or min(cfg.sizes) < 1:
            raise ConfigError("field 'sizes': need positive box sizes")
    default_kind = "odd_bumps" if command == "solve-sc" else "positive_bump"
    kind = cfg.init or default_kind
    init = wrap(
        "init",
        lambda: InitSpec(
            kind="file" if kind.startswith("file:") else kind,
            width=cfg.init_width,
            offset=cfg.init_offset,
            noise=cfg.init_noise,
            sign_pattern="mixed" if command == "solve-sc" else "positive",
            path=kind[5:] if kind.startswith("file:") else None,
        ),
    )
    solve = wrap(
        "tol/max_iter",
        lambda: SolveConfig(
            max_iters=cfg.max_iter, step0=cfg.step0, tol_residual=cfg.tol,
            tol_nehari=cfg.tol_nehari, rng_seed=cfg.seed, init=init,
        ),
    )
    if command == "fiber" and not cfg.field:
        raise ConfigError("field 'field': fiber needs --field PATH")
    return Resolved(cfg, params, dom, spec, quad, radius, solve)


def _kernel(r: Resolved, radius: int | None = None):
    ker, hit = cached_kernel(
        r.params.alpha, radius or r.radius, r.quad, r.cfg.kernel_cache, r.cfg.kernel_tol
    )
    log.info("kernel alpha=%g M=%d %s", ker.alpha, ker.M, "cache hit" if hit else "built")
    return ker, hit


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_trace(path: Path, report) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "J", "residual_rel"])
        for i, (J, res) in enumerate(zip(report.energy_trace, report.residual_trace)):
            w.writerow([i, repr(J), repr(res)])


def cmd_kernel(r: Resolved) -> int:
    ker, hit = _kernel(r)
    M = ker.M
    ex = 3.0 - ker.alpha
    asym = [
        {"n": n, "axis": ker((n, 0, 0)) * n**ex, "diagonal": ker((n, n, n)) * (n * math.sqrt(3)) ** ex}
        for n in range(1, M + 1)
    ]
    summary = {
        "alpha": ker.alpha,
        "K_alpha": ker.K_alpha,
        "M": M,
        "quad_n": ker.quad.n,
        "quad_levels": ker.quad.refinement_levels,
        "R0": ker((0, 0, 0)),
        "est_error": ker.est_error,
        "min_value": ker.min_value(),
        "cache_hit": hit,
        "asymptotic_ratio": asym,
    }
    out = Path(r.cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "kernel_summary.json", summary)
    print(json.dumps({k: v for k, v in summary.items() if k != "asymptotic_ratio"}, sort_keys=True))
    return EXIT_OK


def _report_payload(r: Resolved, report, u, extra=None) -> dict:
    payload = report.to_dict()
    payload["config"] = r.cfg.to_dict()
    payload["boundary_ratio"] = boundary_ratio(u)
    if extra:
        payload.update(extra)
    return payload


def _emit_solution(r: Resolved, u, report, stem: str, extra=None) -> None:
    out = Path(r.cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    save_field(out / f"{stem}.f64", u)
    _write_json(out / f"{stem}_report.json", _report_payload(r, report, u, extra))
    _write_trace(out / f"{stem}_trace.csv", report)


def cmd_solve(r: Resolved) -> int:
    ker, _ = _kernel(r)
    u, report = solve_ground(r.params, r.spec, ker, r.dom, r.solve)
    _emit_solution(r, u, report, "ground")
    print(json.dumps({"energy": report.energy, "residual_rel": report.residual_rel,
                      "iterations": report.iterations, "converged": report.converged}))
    return EXIT_OK if report.converged else EXIT_NOCONV


def cmd_solve_sc(r: Resolved) -> int:
    ker, _ = _kernel(r)
    u, report = solve_sign_changing(r.params, r.spec, ker, r.dom, r.solve)
    _emit_solution(r, u, report, "sign_changing")
    print(json.dumps({"energy": report.energy, "residual_rel": report.residual_rel,
                      "nehari_residuals": report.nehari_residuals, "reseeds": report.reseeds,
                      "iterations": report.iterations, "converged": report.converged}))
    return EXIT_OK if report.converged else EXIT_NOCONV


def cmd_fiber(r: Resolved) -> int:
    try:
        u = load_field(r.cfg.field)
    except ValueError as exc:
        raise OSError(f"{r.cfg.field}: {exc}") from exc
    dom = u.domain
    ker, _ = _kernel(r, max(r.radius, dom.L - 1))
    out = Path(r.cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    c = fiber_coeffs(r.params, r.spec, ker, dom, u)
    s_star = project_ray(c).s_star
    grid = np.linspace(0.0, 2.0 * s_star, 201)
    rows = fiber_curve(r.params, r.spec, ker, dom, u, grid)
    with (out / "fiber.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "J", "pairing"])
        w.writerows([[repr(float(x)) for x in row] for row in rows])
    summary = {"s_star": s_star, "grid_argmax": float(rows[int(np.argmax(rows[:, 1])), 0]),
               "grid_step": float(grid[1] - grid[0])}
    up, um = split_signs(u)
    if np.any(up.values) and np.any(um.values):
        sc = sign_coeffs(r.params, r.spec, ker, dom, u)
        ss = np.logspace(-2, 2, 200)
        F = np.array([[f_eval(sc, s, t) for t in ss] for s in ss])
        with (out / "pair_grid.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "t", "f"])
            for i, s in enumerate(ss):
                for j, t in enumerate(ss):
                    w.writerow([repr(float(s)), repr(float(t)), repr(float(F[i, j]))])
        i, j = np.unravel_index(int(np.argmax(F)), F.shape)
        summary["grid_pair_argmax"] = [float(ss[i]), float(ss[j])]
        try:
            pr = project_pair(sc)
            summary["pair"] = [pr.s_u, pr.t_u]
        except ProjectionError as exc:
            summary["pair_error"] = str(exc)
    _write_json(out / "fiber_summary.json", summary)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_verify(r: Resolved) -> int:
    ker, _ = _kernel(r, max(r.radius, 8))
    rep = run_verify(ker, seed=r.cfg.seed, params=r.params, spec=r.spec)
    payload = rep.to_dict()
    payload["config"] = r.cfg.to_dict()
    out = Path(r.cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "verify_report.json", payload)
    for c in rep.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.value:.3e} ({c.limit})")
    return EXIT_OK if rep.passed else EXIT_NOCONV


def cmd_sweep(r: Resolved) -> int:
    rows = []
    ok = True
    for L in r.cfg.sizes:
        dom = BoxDomain(int(L), tuple(r.cfg.origin))
        spec = _parse_potential(r.cfg.potential, dom)
        ker, _ = _kernel(r, max(int(L) - 1, 1))
        u, rep = solve_ground(r.params, spec, ker, dom, r.solve)
        ok &= rep.converged
        rows.append({"L": int(L), "energy": rep.energy, "residual_rel": rep.residual_rel,
                     "converged": rep.converged, "boundary_ratio": boundary_ratio(u)})
    for prev, cur in zip(rows, rows[1:]):
        cur["energy_change"] = cur["energy"] - prev["energy"]
    out = Path(r.cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "sweep.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["L", "energy", "residual_rel", "converged"])
        for row in rows:
            w.writerow([row["L"], repr(row["energy"]), repr(row["residual_rel"]), row["converged"]])
    _write_json(out / "sweep_report.json", {"rows": rows, "config": r.cfg.to_dict()})
    for row in rows:
        print(json.dumps(row))
    return EXIT_OK if ok else EXIT_NOCONV


COMMANDS = {
    "kernel": cmd_kernel,
    "solve": cmd_solve,
    "solve-sc": cmd_solve_sc,
    "fiber": cmd_fiber,
    "verify": cmd_verify,
    "sweep-L": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="JSON config (or a report embedding one)")
    common.add_argument("--alpha", type=float)
    common.add_argument("--p", type=float)
    common.add_argument("--a", type=float)
    common.add_argument("--b", type=float)
    common.add_argument("--box", type=int, help="box side length L")
    common.add_argument("--potential", help="const:H0 | periodic:PATH | coercive:H0,SLOPE,center")
    common.add_argument("--quad-n", dest="quad_n", type=int)
    common.add_argument("--quad-levels", dest="quad_levels", type=int)
    common.add_argument("--kernel-radius", dest="kernel_radius", type=int)
    common.add_argument("--kernel-cache", dest="kernel_cache", help="cache directory")
    common.add_argument("--tol", type=float)
    common.add_argument("--tol-nehari", dest="tol_nehari", type=float)
    common.add_argument("--max-iter", dest="max_iter", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--init", help="positive_bump | odd_bumps | random | file:PATH")
    common.add_argument("--init-noise", dest="init_noise", type=float)
    common.add_argument("--field", help="field file for `fiber`")
    common.add_argument("--sizes", help="comma separated box sizes for `sweep-L`")
    common.add_argument("--out")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="kclattice", parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def _load_config(path: str) -> dict:
    data = json.loads(Path(path).read_text())
    if "config" in data and isinstance(data["config"], dict):
        data = data["config"]
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    return data


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if getattr(ns, "config", None):
        cfg = replace(cfg, **_load_config(ns.config))
    updates = {}
    for name in _FLAG_FIELDS:
        val = getattr(ns, name, None)
        if val is not None:
            updates[name] = val
    if getattr(ns, "sizes", None):
        try:
            updates["sizes"] = [int(s) for s in ns.sizes.split(",")]
        except ValueError as exc:
            raise ConfigError(f"field 'sizes': {exc}") from exc
    return replace(cfg, **updates)


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(ns, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = config_from_args(ns)
        resolved = resolve(cfg, ns.command)
        return COMMANDS[ns.command](resolved)
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, json.JSONDecodeError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except QuadratureError as exc:
        print(f"kernel quadrature: {exc}", file=sys.stderr)
        return EXIT_NOCONV
    except (SolveError, ProjectionError) as exc:
        print(f"solve failed: {exc}", file=sys.stderr)
        return EXIT_NOCONV


if __name__ == "__main__":
    sys.exit(main())
