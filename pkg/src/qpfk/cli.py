"""Command line driver.

Subcommands mirror the library entry points: ``solve`` one equilibrium,
``lindstedt`` a perturbative expansion, ``continue`` a parameter family,
``bisect`` a breakdown bracket, ``verify`` the structural identities and
a-posteriori numbers at a freshly solved state.

Exit codes: 0 success, 1 invalid configuration or arguments, 2 numerical
failure (a machine-readable failure record is written to the output
directory), 3 I/O failure.

Every output file starts with a provenance header (package version, sha256
of the canonical config) and floats are printed at 17 significant digits,
so identical config + seed + thread count reproduce byte-identical files.
Numerical imports happen inside the command handlers: thread caps from
--threads must be exported before the numerics stack initializes its pools.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
from typing import Optional

from .errors import (
    ConfigError,
    HermitianSymmetryError,
    QpfkError,
    ResolutionError,
)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_IO = 3

_COMMANDS = {
    "solve": "compute one equilibrium hull correction",
    "lindstedt": "expand the branch in the forcing amplitude",
    "continue": "walk a parameter family to larger forcing",
    "bisect": "shrink a breakdown bracket",
    "verify": "solve, then check identities and condition numbers",
}


# ----------------------------------------------------------------------
# deterministic serialization

def _scalar_json(value) -> str:
    if hasattr(value, "item") and not isinstance(value, (str, bytes)):
        value = value.item()
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isfinite(value):
            return f"{value:.17g}"
        return json.dumps(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        return json.dumps(value)
    raise TypeError(f"cannot serialize {type(value).__name__}")


def _json_text(value, indent: int = 0) -> str:
    pad = "  " * indent
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [
            f'{pad}  {json.dumps(str(k))}: {_json_text(v, indent + 1)}'
            for k, v in value.items()
        ]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        items = [f"{pad}  {_json_text(v, indent + 1)}" for v in value]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    return _scalar_json(value)


def _write_json(path, payload: dict):
    with open(path, "w", encoding="ascii") as fh:
        fh.write(_json_text(payload) + "\n")


def _write_jsonl(path, rows, header_lines):
    with open(path, "w", encoding="ascii") as fh:
        for line in header_lines:
            fh.write('{"comment": ' + json.dumps(line) + "}\n")
        for row in rows:
            body = ", ".join(
                f"{json.dumps(str(k))}: {_scalar_json(v)}" for k, v in row.items()
            )
            fh.write("{" + body + "}\n")


# ----------------------------------------------------------------------
# provenance and output paths

def _provenance_lines(cfg) -> list:
    from . import __version__

    return [f"qpfk {__version__}", f"config sha256 {cfg.sha256()}"]


def _provenance_dict(cfg) -> dict:
    from . import __version__

    return {"version": __version__, "config_sha256": cfg.sha256()}


def _out_path(cfg, out_dir, role: str, default_name: str) -> str:
    name = cfg.outputs.get(role, default_name)
    if os.path.isabs(name):
        return name
    return os.path.join(out_dir, name)


def _write_failure(cfg, out_dir, kind: str, message: str, extra: Optional[dict] = None):
    payload = {"provenance": _provenance_dict(cfg), "error": kind, "message": message}
    if extra:
        payload.update(extra)
    _write_json(_out_path(cfg, out_dir, "failure", "failure.json"), payload)


# ----------------------------------------------------------------------
# shared numeric plumbing

def _check_frequency(cfg, freq) -> float:
    """Non-resonance check over the configured lattice radius."""
    from .cohomology import RESONANCE_THRESHOLD
    from .errors import NearResonanceError

    radius = cfg.K_max if cfg.K_max is not None else cfg.N * cfg.d // 2
    nu_hat = freq.diophantine_estimate(radius)
    if nu_hat < RESONANCE_THRESHOLD:
        raise NearResonanceError(
            f"frequency vector is numerically resonant: estimate {nu_hat:.3e} "
            f"below {RESONANCE_THRESHOLD:.1e} over |k|_1 <= {radius}"
        )
    return nu_hat


def _solve_m(cfg, freq) -> int:
    from .solver import default_smoothness

    return cfg.m_list[0] if cfg.m_list else default_smoothness(freq)


def _run_solve(cfg):
    from .fourier import TorusFunction
    from .solver import solve

    freq = cfg.frequency()
    force = cfg.force()
    nu_hat = _check_frequency(cfg, freq)
    h0 = TorusFunction.zero(cfg.d, cfg.N)
    result = solve(
        h0,
        cfg.lambda0,
        force,
        freq,
        tol=cfg.tol,
        max_iter=cfg.max_iter,
        m=_solve_m(cfg, freq),
        validate_frequency=False,
    )
    result.nu_hat = nu_hat
    return freq, force, result


def _state_summary(cfg, freq, result) -> dict:
    state = result.state
    h = state.h_hat
    summary = {
        "converged": result.converged,
        "iterations": result.iterations,
        "failure": result.failure,
        "lambda_star": state.lam,
        "sup_residual": state.residual.sup_norm if state.residual else None,
        "nu_hat": result.nu_hat,
        "decay_rate": h.decay_rate(),
        "sup_h_hat": h.sup_norm(),
    }
    from .solver import default_smoothness

    m_values = cfg.m_list if cfg.m_list else (default_smoothness(freq),)
    summary["h_hat_sobolev"] = {str(m): h.sobolev(m) for m in m_values}
    if state.residual is not None:
        summary["residual_sobolev"] = {
            str(m): state.residual.sobolev(m) for m in m_values
        }
    return summary


def _history_rows(result) -> list:
    return [dict(rec) for rec in result.history]


# ----------------------------------------------------------------------
# command handlers

def cmd_solve(cfg, out_dir) -> int:
    from .fourier import dump_coeffs

    freq, _, result = _run_solve(cfg)
    prov = _provenance_lines(cfg)
    dump_coeffs(
        result.state.h_hat,
        _out_path(cfg, out_dir, "h_hat", "h_hat.txt"),
        header_lines=prov + ["hull correction coefficients"],
    )
    _write_jsonl(
        _out_path(cfg, out_dir, "history", "history.jsonl"),
        _history_rows(result),
        prov,
    )
    summary = {"provenance": _provenance_dict(cfg)}
    summary.update(_state_summary(cfg, freq, result))
    _write_json(_out_path(cfg, out_dir, "summary", "solve_summary.json"), summary)
    if not result.converged:
        _write_failure(
            cfg,
            out_dir,
            "solve-failed",
            result.failure or "did not converge",
            {"iterations": result.iterations,
             "sup_residual": summary["sup_residual"]},
        )
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_lindstedt(cfg, out_dir) -> int:
    from .fourier import dump_coeffs
    from .lindstedt import DEFAULT_ORDER, lindstedt_expand, lindstedt_eval
    from .model import error_functional

    freq = cfg.frequency()
    force = cfg.force()
    _check_frequency(cfg, freq)
    n_max = int(cfg.ramp.get("n_max", DEFAULT_ORDER))
    epsilons = [float(e) for e in cfg.ramp.get("epsilons", ())]
    series = lindstedt_expand(
        force, freq, n_max=n_max, resolution=cfg.N, validate_frequency=False
    )
    prov = _provenance_lines(cfg)
    for n in range(1, n_max + 1):
        dump_coeffs(
            series.h_term(n),
            _out_path(cfg, out_dir, f"order_{n}", f"h_order_{n:02d}.txt"),
            header_lines=prov
            + [f"expansion order {n}, lambda coefficient {series.lambda_term(n):.17g}"],
        )
    evaluations = []
    for eps in epsilons:
        h, lam = lindstedt_eval(series, eps)
        err = error_functional(h, lam, force.scale(eps), freq)
        evaluations.append(
            {
                "epsilon": eps,
                "lambda": lam,
                "sup_h_hat": h.sup_norm(),
                "sup_residual": err.sup_norm,
            }
        )
    summary = {
        "provenance": _provenance_dict(cfg),
        "n_max": n_max,
        "resolution": cfg.N,
        "lambda_terms": list(series.lambda_terms),
        "sup_h_terms": [h.sup_norm() for h in series.h_terms],
        "evaluations": evaluations,
    }
    _write_json(_out_path(cfg, out_dir, "summary", "lindstedt_summary.json"), summary)
    return EXIT_OK


def cmd_continue(cfg, out_dir) -> int:
    from .continuation import (
        continue_family,
        ramp_to_breakdown,
        write_records_csv,
        write_records_jsonl,
    )

    freq = cfg.frequency()
    force = cfg.force()
    _check_frequency(cfg, freq)
    ramp = cfg.ramp
    common = dict(tol=cfg.tol, max_iter=cfg.max_iter, m=_solve_m(cfg, freq))
    estimate = None
    if "grid" in ramp:
        grid = [float(x) for x in ramp["grid"]]
        records = continue_family(grid, force, freq, cfg.N, **common)
    elif "start" in ramp and "step" in ramp:
        kwargs = dict(common)
        if "limit" in ramp:
            kwargs["param_limit"] = float(ramp["limit"])
        if "min_step" in ramp:
            kwargs["min_step"] = float(ramp["min_step"])
        if "max_step" in ramp:
            kwargs["max_step"] = float(ramp["max_step"])
        records, estimate = ramp_to_breakdown(
            force, freq, cfg.N, float(ramp["start"]), float(ramp["step"]), **kwargs
        )
    else:
        raise ConfigError(
            "ramp needs either a 'grid' or 'start' and 'step'", field="ramp"
        )
    header = "\n".join(_provenance_lines(cfg))
    write_records_jsonl(
        records, _out_path(cfg, out_dir, "records_jsonl", "records.jsonl"), header
    )
    write_records_csv(
        records, _out_path(cfg, out_dir, "records_csv", "records.csv"), header
    )
    summary = {
        "provenance": _provenance_dict(cfg),
        "n_points": len(records),
        "n_converged": sum(1 for r in records if r.converged),
        "breakdown": None
        if estimate is None
        else {
            "lower": estimate.lower,
            "upper": estimate.upper,
            "bracket_width": estimate.bracket_width,
        },
    }
    _write_json(
        _out_path(cfg, out_dir, "summary", "continuation_summary.json"), summary
    )
    return EXIT_OK


def cmd_bisect(cfg, out_dir) -> int:
    from .continuation import (
        bisect_breakdown,
        write_records_csv,
        write_records_jsonl,
    )

    freq = cfg.frequency()
    force = cfg.force()
    _check_frequency(cfg, freq)
    ramp = cfg.ramp
    for key in ("lower", "upper"):
        if key not in ramp:
            raise ConfigError(f"bisect needs ramp.{key}", field="ramp")
    lower = float(ramp["lower"])
    upper = float(ramp["upper"])
    if not lower < upper:
        raise ConfigError(
            f"bisect bracket must have lower < upper, got [{lower}, {upper}]",
            field="ramp",
        )
    width_tol = float(ramp.get("width_tol", 1e-3))
    records = []
    estimate = bisect_breakdown(
        lower,
        upper,
        force,
        freq,
        cfg.N,
        width_tol=width_tol,
        tol=cfg.tol,
        max_iter=cfg.max_iter,
        m=_solve_m(cfg, freq),
        on_record=records.append,
    )
    header = "\n".join(_provenance_lines(cfg))
    write_records_jsonl(
        records, _out_path(cfg, out_dir, "records_jsonl", "records.jsonl"), header
    )
    write_records_csv(
        records, _out_path(cfg, out_dir, "records_csv", "records.csv"), header
    )
    _write_json(
        _out_path(cfg, out_dir, "summary", "breakdown.json"),
        {
            "provenance": _provenance_dict(cfg),
            "lower": estimate.lower,
            "upper": estimate.upper,
            "bracket_width": estimate.bracket_width,
            "evaluations": len(records),
        },
    )
    return EXIT_OK


def cmd_verify(cfg, out_dir) -> int:
    from .solver import aposteriori_report, default_smoothness, verify_identities

    freq, force, result = _run_solve(cfg)
    if not result.converged:
        _write_failure(
            cfg,
            out_dir,
            "solve-failed",
            result.failure or "did not converge",
            {"iterations": result.iterations},
        )
        return EXIT_NUMERICAL
    state = result.state
    identities = verify_identities(state.h_hat, state.lam, force, freq)
    m_values = cfg.m_list if cfg.m_list else (default_smoothness(freq),)
    reports = {}
    for m in m_values:
        rep = aposteriori_report(state, force, freq, m=m)
        cond = rep.condition
        reports[str(m)] = {
            "verdict": rep.verdict,
            "decay_rate": rep.decay_rate,
            "n_plus": cond.n_plus,
            "n_minus": cond.n_minus,
            "c_avg": cond.c_avg,
            "min_l": cond.min_l,
            "n_plus_hm": cond.n_plus_hm,
            "nu_hat": cond.nu_hat,
            "epsilon_sup": cond.epsilon_sup,
            "epsilon_hm": cond.epsilon_hm,
        }
    payload = {
        "provenance": _provenance_dict(cfg),
        "solve": _state_summary(cfg, freq, result),
        "identities": {
            "quasi_newton_residual": identities.quasi_newton_residual,
            "geometric_residual": identities.geometric_residual,
            "geometric_scale": identities.geometric_scale,
            "decomposition_residual": identities.decomposition_residual,
            "w_identity_residual": identities.w_identity_residual,
        },
        "aposteriori": reports,
    }
    _write_json(_out_path(cfg, out_dir, "summary", "verify_report.json"), payload)
    return EXIT_OK


_DISPATCH = {
    "solve": cmd_solve,
    "lindstedt": cmd_lindstedt,
    "continue": cmd_continue,
    "bisect": cmd_bisect,
    "verify": cmd_verify,
}


# ----------------------------------------------------------------------
# argument parsing and entry point

def _set_threads(k: Optional[int]):
    if k is None:
        return
    for var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
    ):
        os.environ[var] = str(k)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config", required=True, metavar="PATH", help="JSON run configuration"
    )
    common.add_argument(
        "--out", default=".", metavar="DIR", help="output directory (created)"
    )
    common.add_argument(
        "--threads",
        type=int,
        default=None,
        metavar="K",
        help="cap the numerics thread pools at K threads",
    )
    common.add_argument(
        "--log-level",
        default="warning",
        choices=["debug", "info", "warning", "error"],
        help="logging verbosity",
    )
    parser = argparse.ArgumentParser(
        prog="qpfk",
        description="spectral equilibria of quasi-periodic Frenkel-Kontorova chains",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, help_text in _COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    _set_threads(args.threads)
    logging.basicConfig(
        level=getattr(logging, args.log_level.upper()),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        from .config import load_config

        cfg = load_config(args.config)
    except ConfigError as exc:
        where = f" (field: {exc.field})" if exc.field else ""
        log.error("invalid configuration%s: %s", where, exc)
        return EXIT_CONFIG
    except OSError as exc:
        log.error("cannot read config: %s", exc)
        return EXIT_IO
    try:
        os.makedirs(args.out, exist_ok=True)
    except OSError as exc:
        log.error("cannot create output directory: %s", exc)
        return EXIT_IO
    try:
        return _DISPATCH[args.command](cfg, args.out)
    except ConfigError as exc:
        where = f" (field: {exc.field})" if exc.field else ""
        log.error("invalid configuration%s: %s", where, exc)
        return EXIT_CONFIG
    except (HermitianSymmetryError, ResolutionError) as exc:
        log.error("invalid model data: %s", exc)
        return EXIT_CONFIG
    except QpfkError as exc:
        log.error("numerical failure: %s", exc)
        try:
            _write_failure(cfg, args.out, type(exc).__name__, str(exc))
        except OSError as io_exc:
            log.error("cannot write failure record: %s", io_exc)
            return EXIT_IO
        return EXIT_NUMERICAL
    except OSError as exc:
        log.error("I/O failure: %s", exc)
        return EXIT_IO


if __name__ == "__main__":
    raise SystemExit(main())
