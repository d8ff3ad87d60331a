"""Amplitude continuation of equilibria and breakdown-threshold location.

A family is the base force scaled by a real parameter.  Each solve warm
starts from the last converged state, which keeps the iteration inside its
quadratic basin far beyond where cold starts fail.  Breakdown of the
analytic solution branch is signaled by non-convergence, loss of
monotonicity margin, or blow-up of the working Sobolev norm, and the
threshold is located first by an adaptive ramp and then by bisection.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np

from .cohomology import FrequencyData
from .errors import BracketError, SeedFailureError
from .fourier import TorusFunction
from .model import ForceModel
from .solver import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    default_smoothness,
    solve,
)

log = logging.getLogger(__name__)

#: Breakdown signal thresholds: the hull function loses strict monotonicity
#: margin, or the working Sobolev norm has grown past any plausible bound
#: for an analytic branch.
MIN_L_FLOOR = 0.05
SOBOLEV_BLOWUP_FACTOR = 1e6
#: Stepping bounds for the adaptive ramp.
DEFAULT_MIN_STEP = 1e-4
DEFAULT_MAX_STEP = 8e-3
#: Consecutive quick successes before the ramp step doubles.
QUICK_SUCCESS_RUN = 3
QUICK_SUCCESS_ITERS = 3

RECORD_FIELDS = (
    "param",
    "converged",
    "iterations",
    "lambda_star",
    "sup_residual",
    "sobolev_m",
    "decay_rate",
    "min_l",
    "wall_time",
)


@dataclass
class ContinuationRecord:
    """Outcome of one parameter point, converged or not."""

    param: float
    converged: bool
    iterations: int
    lambda_star: float
    sup_residual: float
    sobolev_m: float
    decay_rate: Optional[float]
    min_l: float
    wall_time: float

    def as_row(self) -> dict:
        return {name: getattr(self, name) for name in RECORD_FIELDS}


@dataclass
class BreakdownEstimate:
    """Bracket around the largest parameter carrying a computable branch."""

    lower: float
    upper: float
    bracket_width: float

    def __post_init__(self):
        if not self.lower < self.upper:
            raise BracketError(
                f"breakdown bracket needs lower < upper, got [{self.lower}, {self.upper}]"
            )


@dataclass
class _FamilySetup:
    base_force: ForceModel
    freq: FrequencyData
    resolution: int
    tol: float
    max_iter: int
    m: int


def _solve_point(
    setup: _FamilySetup,
    param: float,
    h_start: TorusFunction,
    lam_start: float,
):
    """Solve at one parameter; returns (record, result)."""
    force = setup.base_force.scale(param)
    t0 = time.perf_counter()
    result = solve(
        h_start,
        lam_start,
        force,
        setup.freq,
        tol=setup.tol,
        max_iter=setup.max_iter,
        m=setup.m,
    )
    wall = time.perf_counter() - t0
    h = result.state.h_hat
    min_l = float((h.dalpha(setup.freq.alpha) + 1.0).values().min())
    record = ContinuationRecord(
        param=float(param),
        converged=result.converged,
        iterations=result.iterations,
        lambda_star=float(result.state.lam),
        sup_residual=float(result.state.residual.sup_norm),
        sobolev_m=float(h.sobolev(setup.m)),
        decay_rate=h.decay_rate(),
        min_l=min_l,
        wall_time=wall,
    )
    return record, result


def breakdown_signal(record: ContinuationRecord, baseline_sobolev: float) -> bool:
    """True when the record carries any of the breakdown signatures.

    The Sobolev test compares against a baseline from the start of the
    family; a zero baseline (trivial start) disables that clause rather
    than flagging everything.
    """
    if not record.converged:
        return True
    if record.min_l < MIN_L_FLOOR:
        return True
    if baseline_sobolev > 0.0 and record.sobolev_m > SOBOLEV_BLOWUP_FACTOR * baseline_sobolev:
        return True
    return False


def continue_family(
    param_grid: Iterable[float],
    base_force: ForceModel,
    freq: FrequencyData,
    resolution: int,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    m: Optional[int] = None,
    min_step: float = DEFAULT_MIN_STEP,
    on_record: Optional[Callable[[ContinuationRecord], None]] = None,
) -> list:
    """Walk a monotone parameter grid, warm-starting each point.

    Exactly one record per grid point is returned, in order.  When a point
    fails from the current warm state, the gap back to the last converged
    parameter is bridged with internally halved steps (down to min_step)
    and the point retried from the improved state; the bridge attempts do
    not produce records.  A failure at the first point raises
    SeedFailureError, since there is no previous state to continue from.
    """
    params = [float(p) for p in param_grid]
    if len(params) == 0:
        return []
    diffs = np.diff(params)
    if len(diffs) and not (np.all(diffs > 0) or np.all(diffs < 0)):
        raise ValueError("param_grid must be strictly monotone")
    if m is None:
        m = default_smoothness(freq)
    setup = _FamilySetup(base_force, freq, resolution, tol, max_iter, m)

    records = []
    warm_h = TorusFunction.zero(freq.d, resolution)
    warm_lam = 0.0
    warm_param = None

    for index, param in enumerate(params):
        record, result = _solve_point(setup, param, warm_h, warm_lam)
        if not record.converged and index == 0:
            raise SeedFailureError(
                f"first grid point {param} failed from the zero state: {result.failure}"
            )
        if not record.converged and warm_param is not None:
            bridged = _bridge(setup, warm_param, param, warm_h, warm_lam, min_step)
            if bridged is not None:
                warm_param, warm_h, warm_lam = bridged
                record, result = _solve_point(setup, param, warm_h, warm_lam)
        records.append(record)
        if on_record is not None:
            on_record(record)
        if record.converged:
            warm_param = param
            warm_h = result.state.h_hat
            warm_lam = result.state.lam
    return records


def _bridge(setup, start_param, target_param, h, lam, min_step):
    """March from start toward target with halving steps; best state reached.

    Returns (param, h, lam) of the furthest converged intermediate point,
    or None when no intermediate step of size >= min_step converges.
    """
    direction = 1.0 if target_param > start_param else -1.0
    current = start_param
    step = abs(target_param - start_param) / 2.0
    improved = None
    while step >= min_step and direction * (target_param - current) > min_step:
        trial = current + direction * step
        record, result = _solve_point(setup, trial, h, lam)
        if record.converged:
            current = trial
            h = result.state.h_hat
            lam = result.state.lam
            improved = (current, h, lam)
        else:
            step /= 2.0
    return improved


def ramp_to_breakdown(
    base_force: ForceModel,
    freq: FrequencyData,
    resolution: int,
    start: float,
    initial_step: float,
    param_limit: Optional[float] = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    m: Optional[int] = None,
    min_step: float = DEFAULT_MIN_STEP,
    max_step: float = DEFAULT_MAX_STEP,
    max_points: int = 200,
    on_record: Optional[Callable[[ContinuationRecord], None]] = None,
):
    """Increase the parameter adaptively until the branch breaks down.

    Steps double after QUICK_SUCCESS_RUN consecutive quick solves and halve
    on every breakdown signal; the walk ends when the remaining bracket is
    below min_step (returning the records and a BreakdownEstimate), or with
    estimate None when param_limit is passed without failure or max_points
    evaluations run out.
    """
    if m is None:
        m = default_smoothness(freq)
    setup = _FamilySetup(base_force, freq, resolution, tol, max_iter, m)

    records = []
    warm_h = TorusFunction.zero(freq.d, resolution)
    warm_lam = 0.0

    record, result = _solve_point(setup, start, warm_h, warm_lam)
    records.append(record)
    if on_record is not None:
        on_record(record)
    baseline = record.sobolev_m
    if breakdown_signal(record, baseline):
        raise SeedFailureError(
            f"ramp start {start} already carries a breakdown signal "
            f"({result.failure or 'degeneracy'})"
        )
    warm_h, warm_lam = result.state.h_hat, result.state.lam
    good = start
    first_fail = None
    step = float(initial_step)
    quick = 0

    while True:
        if first_fail is not None and first_fail - good <= min_step:
            break
        if len(records) >= max_points:
            log.warning("ramp stopped at %d evaluations without a bracket", max_points)
            return records, None
        trial = good + step
        if first_fail is not None:
            trial = min(trial, (good + first_fail) / 2.0)
        if param_limit is not None and trial > param_limit and first_fail is None:
            return records, None
        record, result = _solve_point(setup, trial, warm_h, warm_lam)
        records.append(record)
        if on_record is not None:
            on_record(record)
        if breakdown_signal(record, baseline):
            first_fail = trial if first_fail is None else min(first_fail, trial)
            step = max(step / 2.0, min_step)
            quick = 0
            if trial - good <= min_step:
                break
        else:
            good = trial
            warm_h, warm_lam = result.state.h_hat, result.state.lam
            if record.iterations <= QUICK_SUCCESS_ITERS:
                quick += 1
                if quick >= QUICK_SUCCESS_RUN:
                    step = min(step * 2.0, max_step)
                    quick = 0
            else:
                quick = 0
            if first_fail is not None:
                step = min(step, max((first_fail - good) / 2.0, min_step))
    estimate = BreakdownEstimate(
        lower=good, upper=first_fail, bracket_width=first_fail - good
    )
    return records, estimate


def bisect_breakdown(
    lower: float,
    upper: float,
    base_force: ForceModel,
    freq: FrequencyData,
    resolution: int,
    width_tol: float = 1e-3,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    m: Optional[int] = None,
    seed_state: Optional[tuple] = None,
    on_record: Optional[Callable[[ContinuationRecord], None]] = None,
) -> BreakdownEstimate:
    """Shrink a breakdown bracket by bisection, warm-starting from below.

    The endpoints are verified first: the branch must be computable at
    ``lower`` and signal breakdown at ``upper``, otherwise the bracket is
    inconsistent and BracketError is raised.
    """
    if not lower < upper:
        raise BracketError(f"need lower < upper, got [{lower}, {upper}]")
    if m is None:
        m = default_smoothness(freq)
    setup = _FamilySetup(base_force, freq, resolution, tol, max_iter, m)

    if seed_state is not None:
        warm_h, warm_lam = seed_state
    else:
        warm_h = TorusFunction.zero(freq.d, resolution)
        warm_lam = 0.0

    record, result = _solve_point(setup, lower, warm_h, warm_lam)
    if on_record is not None:
        on_record(record)
    baseline = record.sobolev_m
    if breakdown_signal(record, baseline):
        raise BracketError(
            f"no computable branch at the lower endpoint {lower}: "
            f"{result.failure or 'degeneracy signal'}"
        )
    warm_h, warm_lam = result.state.h_hat, result.state.lam

    record_up, _ = _solve_point(setup, upper, warm_h, warm_lam)
    if on_record is not None:
        on_record(record_up)
    if not breakdown_signal(record_up, baseline):
        raise BracketError(
            f"branch still computable at the upper endpoint {upper}; "
            "bracket does not contain a breakdown"
        )

    lo, hi = float(lower), float(upper)
    while hi - lo > width_tol:
        mid = 0.5 * (lo + hi)
        record, result = _solve_point(setup, mid, warm_h, warm_lam)
        if on_record is not None:
            on_record(record)
        if breakdown_signal(record, baseline):
            hi = mid
        else:
            lo = mid
            warm_h, warm_lam = result.state.h_hat, result.state.lam
    return BreakdownEstimate(lower=lo, upper=hi, bracket_width=hi - lo)


# ----------------------------------------------------------------------
# record persistence

def _fmt(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def write_records_jsonl(records: Iterable[ContinuationRecord], path, header: Optional[str] = None):
    """One record per line, fixed key order, floats at 17 significant digits."""
    with open(path, "w", encoding="ascii") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f'{{"comment": "{line}"}}\n')
        for record in records:
            row = record.as_row()
            body = ", ".join(f'"{k}": {_fmt(row[k])}' for k in RECORD_FIELDS)
            fh.write("{" + body + "}\n")


def write_records_csv(records: Iterable[ContinuationRecord], path, header: Optional[str] = None):
    with open(path, "w", encoding="ascii", newline="") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(RECORD_FIELDS)
        for record in records:
            row = record.as_row()
            writer.writerow(
                ["" if row[k] is None else _fmt(row[k]) for k in RECORD_FIELDS]
            )
