"""Command-line interface.

Every run writes a self-describing JSON artifact (config, seed, library version,
results, checksum) and, for tabular commands, a CSV next to it. ``replay``
recomputes an artifact from its embedded config and compares bit for bit.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
import tempfile
from dataclasses import asdict

import numpy as np

from . import __version__, _kernels
from .config import COMMANDS, FORMAT_VERSION, ExperimentConfig
from .errors import ArtifactError, ChisqExtremesError, ParameterError
from .mc import convergence_ladder, decide_convention, exp_power_model, ou_model, sup_exceedance_mc
from .pickands import PickandsParams, estimate_pickands, pickands_table, reduce_to_unit_scale
from .rng import THREADS_ENV
from .scanstat import ScanWindow, pvalue_mc, pvalue_asymptotic, scan_pickands_table
from .tail import GridSpec, grid_tail_approx

log = logging.getLogger("chisq_extremes")

EXIT_OK, EXIT_MISMATCH = 0, 1


def _plain(obj):
    """Convert numpy scalars/arrays and tuples into JSON-native values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def _model(p):
    if p.family == "ou":
        return ou_model(p.n, p.a, p.T)
    return exp_power_model(p.n, p.alpha, p.a, p.T)


def _table_summary(table):
    return {"alpha": table.alpha, "eta": table.eta, "nodes": table.nodes, "values": table.values,
            "errors": table.errors}


def _table_for(p, seed, threads):
    return pickands_table(p.alpha, [p.a], p.eta, p.quadrature_nodes, seed=seed, n_rep=p.pickands_n_rep,
                          S=p.pickands_S, threads=threads)


def execute(config: ExperimentConfig):
    """Run a configured experiment. Returns ``(results, csv_table)`` where
    ``csv_table`` is ``(header, rows)`` or ``None``."""
    p, seed, threads = config.params, config.seed, config.threads
    cmd = config.command
    if cmd == "pickands":
        prm = PickandsParams(alpha=p.alpha, a=p.a, eta=p.eta, S=p.S, inner_step=p.inner_step, n_rep=p.n_rep,
                             method=p.method)
        est = estimate_pickands(prm, seed, threads=threads)
        scale, eta_prime = reduce_to_unit_scale(p.alpha, p.a, p.eta)
        results = {
            "value": est.value, "std_error": est.std_error, "last_point": est.last_point,
            "last_point_error": est.last_point_error, "discretization_band": est.discretization_band,
            "step": prm.step, "ladder": est.ladder, "levels": est.levels,
        }
        rows = [[p.alpha, eta_prime, est.ladder[-1][0], est.value / scale, est.std_error / scale]]
        return results, (["alpha", "eta_prime", "S", "estimate", "std_error"], rows)
    if cmd == "tail":
        model, grid = _model(p), GridSpec(p.eta)
        table = _table_for(p, seed, threads)
        approx = [grid_tail_approx(model, grid, u, table).to_dict() for u in p.u]
        return {"pickands": _table_summary(table), "approximations": approx}, None
    if cmd == "mc":
        est = sup_exceedance_mc(_model(p), GridSpec(p.eta), p.u, p.n_rep, seed, threads=threads,
                                method=p.mc_method)
        return est.to_dict(), None
    if cmd == "compare":
        table = _table_for(p, seed, threads)
        report = convergence_ladder(_model(p), GridSpec(p.eta), p.u_values, p.n_rep, seed, table, threads=threads,
                                    method=p.mc_method)
        header = ["u", "mc", "ci_lo", "ci_hi", "conv_A", "conv_B", "ratio_A", "ratio_B"]
        return {"pickands": _table_summary(table), "report": report.to_dict()}, (header, list(report.rows()))
    if cmd == "scanstat":
        window = ScanWindow(p.t1, p.t2, p.u)
        table = scan_pickands_table(p.t1, p.t2, quadrature_nodes=p.quadrature_nodes, seed=seed,
                                    n_rep=p.pickands_n_rep, threads=threads)
        approx = pvalue_asymptotic(window, table)
        est = pvalue_mc(window, p.n_rep, seed, threads=threads, method=p.mc_method)
        ratios = {c: [v / est.probability] if est.probability > 0 else [math.inf]
                  for c, v in approx.by_convention.items()}
        verdict, _ = decide_convention(ratios)
        results = {
            "window": {"T1": p.t1, "T2": p.t2, "u": p.u}, "formula": approx.by_convention,
            "error_estimate": approx.error_estimate, "time_integral": approx.time_integral,
            "mc": est.to_dict(), "ratio": {c: r[0] for c, r in ratios.items()}, "verdict": verdict,
            "pickands": _table_summary(table),
        }
        return results, None
    raise ParameterError(f"command: unknown {cmd!r}")  # pragma: no cover


def _checksum(body: dict) -> str:
    canon = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def build_artifact(config: ExperimentConfig, results: dict) -> dict:
    body = {
        "library_version": __version__, "backend": _kernels.backend(), "config": config.to_dict(),
        "results": _plain(results),
    }
    return {**body, "checksum": _checksum(body)}


def _atomic_write(path: str, text: str):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format(float(x), ".17g") for x in row))
    return "\n".join(lines) + "\n"


def run(config: ExperimentConfig) -> tuple:
    """Execute ``config`` and write its artifacts. Returns ``(artifact, paths)``."""
    results, table = execute(config)
    artifact = build_artifact(config, results)
    base = os.path.join(config.out_dir, config.command)
    paths = [base + ".json"]
    _atomic_write(paths[0], json.dumps(artifact, indent=2, sort_keys=True) + "\n")
    if table is not None:
        paths.append(base + ".csv")
        _atomic_write(paths[1], _csv_text(*table))
    return artifact, paths


def load_artifact(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            art = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ArtifactError(f"artifact: not valid JSON ({exc})") from None
    required = {"library_version", "backend", "config", "results", "checksum"}
    if not isinstance(art, dict) or required - set(art):
        raise ArtifactError("artifact: missing fields")
    body = {k: art[k] for k in required - {"checksum"}}
    if _checksum(body) != art["checksum"]:
        raise ArtifactError("artifact: checksum mismatch (file was modified)")
    return art


def replay(path, threads: int | None = None) -> tuple:
    """Recompute an artifact. Returns ``(recomputed_artifact, identical)``."""
    art = load_artifact(path)
    cfg = art["config"]
    if cfg.get("version") != FORMAT_VERSION:
        raise ArtifactError(f"artifact: incompatible format version {cfg.get('version')!r}, "
                            f"this build reads {FORMAT_VERSION!r}")
    if art["library_version"] != __version__:
        raise ArtifactError(f"artifact: written by library version {art['library_version']!r}, "
                            f"this is {__version__!r}")
    if art["backend"] != _kernels.backend():
        raise ArtifactError(f"artifact: computed with kernel backend {art['backend']!r}, "
                            f"current backend is {_kernels.backend()!r}")
    config = ExperimentConfig.from_dict(cfg)
    if threads is not None:
        config.threads = int(threads)
    results, _ = execute(config)
    fresh = _plain(results)
    return build_artifact(config, results), fresh == art["results"]


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

_FLAGS = {
    "alpha": float, "a": float, "eta": float, "S": float, "inner_step": float, "n_rep": int, "method": str,
    "family": str, "n": int, "T": float, "pickands_n_rep": int, "pickands_S": float, "quadrature_nodes": int,
    "t1": float, "t2": float, "mc_method": str,
}


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config; flags override its values")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help=f"worker threads (default from ${THREADS_ENV} or 1)")
    common.add_argument("--out-dir", dest="out_dir", default=argparse.SUPPRESS)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="chisq-extremes", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, cls in COMMANDS.items():
        sp = sub.add_parser(name, parents=[common])
        for fname in cls.__dataclass_fields__:
            flag = "--" + fname.replace("_", "-")
            if fname in ("u", "u_values") and fname in cls.__dataclass_fields__:
                nargs = "+" if (name == "tail" or fname == "u_values") else None
                sp.add_argument(flag, dest=fname, type=float, nargs=nargs, default=argparse.SUPPRESS)
            else:
                sp.add_argument(flag, dest=fname, type=_FLAGS[fname], default=argparse.SUPPRESS)
    rp = sub.add_parser("replay", help="recompute an artifact and compare bit for bit")
    rp.add_argument("artifact")
    rp.add_argument("--threads", type=int, default=None)
    rp.add_argument("-v", "--verbose", action="store_true")
    return parser


def config_from_args(ns) -> ExperimentConfig:
    data = {}
    if ns.config:
        with open(ns.config, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ParameterError(f"config: not valid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ParameterError("config: expected an object")
        if data.get("command", ns.command) != ns.command:
            raise ParameterError(f"command: config is for {data['command']!r}, not {ns.command!r}")
    data = dict(data)
    data["command"] = ns.command
    params = dict(data.get("params", {}))
    skip = {"command", "config", "seed", "threads", "out_dir", "verbose"}
    for key, value in vars(ns).items():
        if key not in skip:
            params[key] = value
    data["params"] = params
    for key in ("seed", "threads", "out_dir"):
        if key in vars(ns):
            data[key] = getattr(ns, key)
    return ExperimentConfig.from_dict(data)


def main(argv=None) -> int:
    ns = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if ns.command == "replay":
            fresh, same = replay(ns.artifact, ns.threads)
            print(json.dumps({"artifact": ns.artifact, "identical": same}))
            return EXIT_OK if same else EXIT_MISMATCH
        config = config_from_args(ns)
        artifact, paths = run(config)
        print(json.dumps({"written": paths, "results": artifact["results"]}, indent=2))
        return EXIT_OK
    except ChisqExtremesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


__all__ = ["main", "run", "replay", "execute", "build_artifact", "load_artifact", "config_from_args"]
