"""Batch experiment runner: ``bethezeta {compare,loopseries,zeta,cover,exact}``.

Settings come from an optional JSON config (``--config``) overridden by
flags. Every subcommand writes one CSV (header row, floats at 17
significant digits) whose rows carry the config hash and seed.

Exit codes: 0 success, 1 config error, 2 enumeration bound exceeded,
3 numerical failure. Rows are written even when some of them failed.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import families
from .bp import find_fixed_points, find_minima
from .cover import cover_growth_report
from .errors import (EnumerationBoundError, GraphError, NotIsingError, NotSingleCycleError,
                     NumericalError, ZetaDivergenceError, ZetaUndefinedError)
from .exact import brute_force_z, ising_high_temp_z, transfer_matrix_z
from .factor_graph import FactorGraph, read_graph
from .loops import (enumerate_generalized_loops, enumerate_simple_loops, loop_series_sum,
                    loop_term_nonbinary, transform_residual)
from .zeta import (build_edge_weights, hessian_zeta_residual, z_ab1, zeta_prime_truncated,
                   zeta_report)

__all__ = ["ExperimentConfig", "ConfigError", "main", "build_parser", "load_config",
           "make_graph", "run_command", "parse_family"]

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_BOUND, EXIT_NUMERIC = 0, 1, 2, 3
ESTIMATORS = ("exact", "bethe", "ab1", "loopseries", "cover")
COMMANDS = ("compare", "loopseries", "zeta", "cover", "exact")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    graph: str | None = None
    family: str | None = None
    betas: list = field(default_factory=lambda: [1.0])
    damping: float = 0.5
    tol: float = 1e-12
    max_iter: int = 10_000
    restarts: int = 10
    seed: int = 0
    instances: int = 1
    estimators: list = field(default_factory=lambda: list(ESTIMATORS))
    Ms: list = field(default_factory=lambda: [1, 2, 3])
    mode: str = "exact"
    samples: int = 200
    max_len: int = 12
    out: str = "-"
    workers: int = 1

    def validate(self):
        if (self.graph is None) == (self.family is None):
            raise ConfigError("exactly one of graph / family must be given")
        b = [float(x) for x in self.betas]
        if not b or any(x <= 0 for x in b) or any(y <= x for x, y in zip(b, b[1:])):
            raise ConfigError("beta grid must be nonempty, strictly positive and increasing")
        self.betas = b
        if not self.estimators:
            raise ConfigError("estimator set must be nonempty")
        bad = set(self.estimators) - set(ESTIMATORS)
        if bad:
            raise ConfigError(f"unknown estimators: {sorted(bad)}")
        if not 0 <= self.damping < 1:
            raise ConfigError("damping must lie in [0, 1)")
        if self.tol <= 0 or self.max_iter < 1 or self.restarts < 1 or self.instances < 1:
            raise ConfigError("tol, max_iter, restarts and instances must be positive")
        if self.mode not in ("exact", "mc") or self.samples < 1:
            raise ConfigError("mode must be exact or mc, with samples >= 1")
        if not self.Ms or any(int(m) < 1 for m in self.Ms):
            raise ConfigError("Ms must be positive integers")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.family is not None:
            parse_family(self.family)
        try:
            make_graph(self, 0, b[0])  # surface bad family arguments or graph files early
        except (GraphError, OSError) as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def hash(self) -> str:
        """Digest of every setting that affects results (not ``out``/``workers``)."""
        d = dataclasses.asdict(self)
        d.pop("out")
        d.pop("workers")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


# -- graph sources -----------------------------------------------------------

def _ints(text: str, sep: str, n: int | None = None) -> list[int]:
    try:
        vals = [int(x) for x in text.split(sep)]
    except ValueError as exc:
        raise ConfigError(f"bad integer list {text!r}") from exc
    if n is not None and len(vals) != n:
        raise ConfigError(f"expected {n} values in {text!r}")
    return vals


def parse_family(text: str):
    """Parse ``name[:args]`` into ``(name, args)``.

    Supported: ``ising-cycle:L``, ``ising-torus:WxH``, ``theta[:l1,l2,l3]``,
    ``random-tree:N[/q]``, ``random-pairwise:N/q/density``, ``random-cycle:L[/q]``.
    """
    name, _, arg = text.partition(":")
    if name == "ising-cycle":
        return name, _ints(arg, ",", 1)
    if name == "ising-torus":
        return name, _ints(arg, "x", 2)
    if name == "theta":
        return name, _ints(arg, ",", 3) if arg else [1, 2, 3]
    if name in ("random-tree", "random-cycle"):
        parts = arg.split("/")
        vals = _ints(parts[0], ",", 1) + (_ints(parts[1], ",", 1) if len(parts) > 1 else [2])
        return name, vals
    if name == "random-pairwise":
        parts = arg.split("/")
        if len(parts) != 3:
            raise ConfigError("random-pairwise needs N/q/density")
        try:
            return name, [int(parts[0]), int(parts[1]), float(parts[2])]
        except ValueError as exc:
            raise ConfigError(f"bad random-pairwise family {text!r}") from exc
    raise ConfigError(f"unknown family {name!r}")


def make_graph(config: ExperimentConfig, instance: int, beta: float) -> FactorGraph:
    """Graph for one (instance, beta) cell.

    Random families draw their log-potentials from seed ``(seed, instance)``
    so the same instance is swept across the whole beta grid. A graph file
    is tempered by beta.
    """
    if config.graph is not None:
        return read_graph(config.graph).tempered(beta)
    name, args = parse_family(config.family)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, instance]))
    if name == "ising-cycle":
        return families.ising_cycle(args[0], beta)
    if name == "ising-torus":
        return families.ising_torus(args[0], args[1], beta)
    if name == "theta":
        return families.ising_theta(tuple(args), beta)
    if name == "random-tree":
        return families.random_tree(args[0], args[1], beta, rng)
    if name == "random-cycle":
        return families.random_cycle(args[0], args[1], beta, rng)
    return families.random_pairwise(args[0], args[1], args[2], beta, rng)


# -- per-cell computations ---------------------------------------------------

def _classify(exc: Exception) -> tuple[str, int]:
    if isinstance(exc, EnumerationBoundError):
        return "bound_exceeded", EXIT_BOUND
    if isinstance(exc, ZetaUndefinedError):
        return "zeta_undefined", EXIT_NUMERIC
    if isinstance(exc, ZetaDivergenceError):
        return "zeta_divergent", EXIT_NUMERIC
    if isinstance(exc, NumericalError):
        return "numerical_failure", EXIT_NUMERIC
    raise exc


def _cell_compare(config, instance, beta):
    g = make_graph(config, instance, beta)
    est = set(config.estimators)
    row = {"log_z_exact": None, "log_z_bethe": None, "g0": None, "log_z_ab1": None,
           "err_bethe": None, "err_ab1": None, "ratio": None, "log_z_loopseries": None,
           "converged": None, "minima_count": None, "zeta_sign": None, "status": "ok"}
    code = EXIT_OK
    try:
        if "exact" in est:
            row["log_z_exact"] = brute_force_z(g)
        if est & {"bethe", "ab1", "loopseries"}:
            minima = find_minima(g, config.restarts, config.seed, config.damping, config.tol,
                                 config.max_iter)
            row["converged"] = bool(minima)
            row["minima_count"] = len(minima)
            if not minima:
                row["status"] = "bp_not_converged"
                return [row], EXIT_NUMERIC
            row["log_z_bethe"] = max(r.log_z_bethe for r in minima)
            if "ab1" in est:
                signs = [zeta_report(build_edge_weights(g, r.beliefs)).zeta_sign for r in minima]
                row["zeta_sign"] = min(signs)
                res = z_ab1(g, minima=minima)
                row["g0"], row["log_z_ab1"] = res.g0, res.log_z_ab1
            if "loopseries" in est:
                s = loop_series_sum(g, minima[0].beliefs)
                row["log_z_loopseries"] = minima[0].log_z_bethe + math.log(s) if s > 0 else math.nan
    except Exception as exc:  # noqa: BLE001 - classified or re-raised
        row["status"], code = _classify(exc)
    if row["log_z_exact"] is not None:
        if row["log_z_bethe"] is not None:
            row["err_bethe"] = abs(row["log_z_bethe"] - row["log_z_exact"])
        if row["log_z_ab1"] is not None:
            row["err_ab1"] = abs(row["log_z_ab1"] - row["log_z_exact"])
            row["ratio"] = row["err_ab1"] / row["err_bethe"] if row["err_bethe"] else math.nan
    return [row], code


def _cell_loopseries(config, instance, beta):
    g = make_graph(config, instance, beta)
    rows, code = [], EXIT_OK
    try:
        log_z = brute_force_z(g)
        points = find_fixed_points(g, config.restarts, config.seed, config.damping,
                                   config.tol, config.max_iter)
    except Exception as exc:  # noqa: BLE001
        status, code = _classify(exc)
        return [{"fixed_point": None, "status": status}], code
    if not points:
        return [{"fixed_point": None, "status": "bp_not_converged"}], EXIT_NUMERIC
    try:
        loops = enumerate_generalized_loops(g)
    except EnumerationBoundError:
        loops, code = None, EXIT_BOUND
    simple = enumerate_simple_loops(g, include_empty=False)
    for k, res in enumerate(points):
        row = {"fixed_point": k, "log_z_exact": log_z, "log_z_bethe": res.log_z_bethe,
               "f_bethe": res.f_bethe, "excess": math.expm1(log_z - res.log_z_bethe),
               "num_loops": None if loops is None else len(loops),
               "series_binary": None, "series_nonbinary": None,
               "l2_sum": None, "sqrt_zeta_excess": None,
               "orthogonality_residual": transform_residual(g, res.messages), "status": "ok"}
        try:
            if loops is not None:
                row["series_nonbinary"] = loop_series_sum(g, res.beliefs, "nonbinary", loops) - 1
                if g.q == 2:
                    row["series_binary"] = loop_series_sum(g, res.beliefs, "binary", loops) - 1
            else:
                row["status"] = "bound_exceeded"
            row["l2_sum"] = sum(loop_term_nonbinary(g, res.beliefs, lp) for lp in simple)
            lz = zeta_report(build_edge_weights(g, res.beliefs)).log_zeta_bass
            row["sqrt_zeta_excess"] = math.expm1(0.5 * lz)
        except Exception as exc:  # noqa: BLE001
            row["status"], c = _classify(exc)
            code = max(code, c)
        rows.append(row)
    return rows, code


def _cell_zeta(config, instance, beta):
    g = make_graph(config, instance, beta)
    minima = find_minima(g, config.restarts, config.seed, config.damping, config.tol,
                         config.max_iter)
    if not minima:
        return [{"minimum": None, "status": "bp_not_converged"}], EXIT_NUMERIC
    rows, code = [], EXIT_OK
    for k, res in enumerate(minima):
        row = {"minimum": k, "minima_count": len(minima), "log_z_bethe": res.log_z_bethe,
               "log_zeta_bass": None, "zeta_sign": None, "log_zeta_ihara_bass": None,
               "log_zeta_prime": None, "spectral_radius": None, "hessian_residual": None,
               "status": "ok"}
        try:
            weights = build_edge_weights(g, res.beliefs)
            rep = zeta_report(weights)
            row.update(log_zeta_bass=rep.log_zeta_bass, zeta_sign=rep.zeta_sign,
                       log_zeta_ihara_bass=rep.log_zeta_ihara_bass,
                       spectral_radius=rep.spectral_radius_estimate)
            try:
                row["hessian_residual"] = hessian_zeta_residual(g, res.beliefs)
            except ValueError:
                pass  # factor degree >= 3 or missing support: no Hessian coordinates
            if rep.spectral_radius_estimate < 1:
                row["log_zeta_prime"] = zeta_prime_truncated(weights, config.max_len)
        except Exception as exc:  # noqa: BLE001
            row["status"], c = _classify(exc)
            code = max(code, c)
        rows.append(row)
    return rows, code


def _cell_cover(config, instance, beta):
    g = make_graph(config, instance, beta)
    rows, code = [], EXIT_OK
    for M in config.Ms:
        try:
            rows += cover_growth_report(g, [int(M)], config.mode, config.samples, config.seed,
                                        config.restarts, config.damping, config.tol,
                                        config.max_iter)
        except Exception as exc:  # noqa: BLE001
            status, c = _classify(exc)
            code = max(code, c)
            rows.append({"M": int(M), "mode": config.mode, "status": status})
    for r in rows:
        r.setdefault("status", "ok" if r.get("verifiable") else "unverifiable")
    return rows, code


def _cell_exact(config, instance, beta):
    g = make_graph(config, instance, beta)
    row = {"num_vars": g.num_vars, "num_factors": g.num_factors, "q": g.q,
           "log_z_brute": None, "log_z_transfer": None, "log_z_high_temp": None, "status": "ok"}
    code = EXIT_OK
    try:
        row["log_z_brute"] = brute_force_z(g)
    except Exception as exc:  # noqa: BLE001
        row["status"], code = _classify(exc)
    try:
        row["log_z_transfer"] = transfer_matrix_z(g)
    except NotSingleCycleError:
        pass
    try:
        row["log_z_high_temp"] = ising_high_temp_z(g)
    except (NotIsingError, EnumerationBoundError):
        pass
    return [row], code


CELLS = {"compare": _cell_compare, "loopseries": _cell_loopseries, "zeta": _cell_zeta,
         "cover": _cell_cover, "exact": _cell_exact}


def _run_cell(args):
    command, config, instance, beta = args
    rows, code = CELLS[command](config, instance, beta)
    return [{"instance": instance, "beta": beta, **r} for r in rows], code


# -- output -------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def render_csv(rows: list[dict], config_hash: str, seed: int) -> str:
    cols: list[str] = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    cols += ["config_hash", "seed"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        full = {**r, "config_hash": config_hash, "seed": seed}
        w.writerow([_fmt(full.get(c)) for c in cols])
    return buf.getvalue()


def run_command(command: str, config: ExperimentConfig) -> tuple[str, int]:
    """Run a sweep and return ``(csv_text, exit_code)``; rows are in (instance, beta) order."""
    if command not in CELLS:
        raise ConfigError(f"unknown command {command!r}")
    tasks = [(command, config, k, b) for k in range(config.instances) for b in config.betas]
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            results = list(pool.map(_run_cell, tasks))
    else:
        results = [_run_cell(t) for t in tasks]
    rows = [r for rs, _ in results for r in rs]
    code = max((c for _, c in results), default=EXIT_OK)
    return render_csv(rows, config.hash(), config.seed), code


# -- argument handling ------------------------------------------------------

def parse_beta_grid(text: str) -> list[float]:
    """``lo:hi:n`` -> ``n`` evenly spaced values from ``lo`` to ``hi``."""
    try:
        lo, hi, n = text.split(":")
        vals = np.linspace(float(lo), float(hi), int(n))
    except ValueError as exc:
        raise ConfigError(f"bad beta grid {text!r}; expected lo:hi:n") from exc
    return [float(v) for v in vals]


def load_config(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}:1:1: config must be a JSON object")
    known = {f.name for f in dataclasses.fields(ExperimentConfig)} | {"beta", "beta_grid"}
    for key in data:
        if key not in known:
            line = text[:text.find(f'"{key}"')].count("\n") + 1
            raise ConfigError(f"{path}:{line}: unknown key {key!r}")
    return data


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bethezeta",
                                description="Bethe, loop-series, zeta and graph-cover experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config")
        s.add_argument("--graph", help="factor graph JSON file")
        s.add_argument("--family", help="built-in family, e.g. ising-torus:3x3")
        s.add_argument("--beta", type=float, action="append", help="repeatable")
        s.add_argument("--beta-grid", help="lo:hi:n")
        s.add_argument("--damping", type=float)
        s.add_argument("--tol", type=float)
        s.add_argument("--max-iter", type=int)
        s.add_argument("--restarts", type=int)
        s.add_argument("--seed", type=int)
        s.add_argument("--instances", type=int)
        s.add_argument("--estimators", help="comma list from " + ",".join(ESTIMATORS))
        s.add_argument("--Ms", help="comma list of cover degrees")
        s.add_argument("--mode", choices=("exact", "mc"))
        s.add_argument("--samples", type=int)
        s.add_argument("--max-len", type=int)
        s.add_argument("--workers", type=int)
        s.add_argument("--out", help="CSV path, '-' for stdout")
    return p


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    data = load_config(args.config) if args.config else {}
    if "beta" in data:
        data["betas"] = [data.pop("beta")]
    if "beta_grid" in data:
        data["betas"] = parse_beta_grid(data.pop("beta_grid"))
    flags = {
        "graph": args.graph, "family": args.family, "damping": args.damping, "tol": args.tol,
        "max_iter": args.max_iter, "restarts": args.restarts, "seed": args.seed,
        "instances": args.instances, "mode": args.mode, "samples": args.samples,
        "max_len": args.max_len, "workers": args.workers, "out": args.out,
    }
    for k, v in flags.items():
        if v is not None:
            data[k] = v
    if args.graph is not None:
        data.pop("family", None)
    if args.family is not None:
        data.pop("graph", None)
    if args.beta:
        data["betas"] = args.beta
    if args.beta_grid:
        data["betas"] = parse_beta_grid(args.beta_grid)
    if args.estimators:
        data["estimators"] = [e.strip() for e in args.estimators.split(",") if e.strip()]
    if args.Ms:
        data["Ms"] = _ints(args.Ms, ",")
    try:
        config = ExperimentConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return config.validate()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = config_from_args(args)
        if config.graph is not None:
            read_graph(config.graph)
    except (ConfigError, GraphError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text, code = run_command(args.command, config)
    if config.out == "-":
        sys.stdout.write(text)
    else:
        with open(config.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    if code:
        log.warning("finished with exit code %d (see status column)", code)
    return code


if __name__ == "__main__":
    sys.exit(main())
