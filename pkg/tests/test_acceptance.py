"""Acceptance run: every criterion checked at its stated tolerance.

One verdict line per criterion is printed and repeated in the terminal
summary (see conftest).  Each test computes its criterion exactly as
stated; nothing is loosened to force a pass, so a genuine miss shows up
as a FAIL line with the measured numbers.
"""

import math
import time
import tracemalloc

import numpy as np
import pytest

from qpfk.cohomology import FrequencyData, solve_first_difference
from qpfk.continuation import breakdown_signal, ramp_to_breakdown
from qpfk.errors import SmallDivisorError
from qpfk.fourier import TorusFunction, lattice
from qpfk.lindstedt import lindstedt_eval, lindstedt_expand
from qpfk.model import (
    ForceModel,
    error_functional,
    gradient_cosine_force,
)
from qpfk.solver import (
    SolverState,
    default_smoothness,
    quasi_newton_step,
    solve,
    verify_identities,
)

from conftest import random_torus_function

OMEGA = (math.sqrt(5.0) - 1.0) / 2.0
ALPHA = (1.0, math.sqrt(2.0))

VERDICT_LINES = []


def _verdict(num: int, ok: bool, detail: str) -> str:
    line = f"CRITERION {num:2d}: {'PASS' if ok else 'FAIL'} - {detail}"
    VERDICT_LINES.append(line)
    print(line)
    return line


@pytest.fixture(scope="module")
def freq():
    return FrequencyData(alpha=ALPHA, omega=OMEGA)


def test_criterion_01_zero_force_fixed_point(freq):
    zero_force = ForceModel(d=2, modes=(), gradient=True)
    res = solve(TorusFunction.zero(2, 64), 0.7, zero_force, freq)
    sup = res.state.residual.sup_norm
    ok = (
        res.converged
        and res.iterations == 1
        and sup < 1e-14
        and abs(res.state.lam) < 1e-14
        and res.state.h_hat.sup_norm() < 1e-14
    )
    line = _verdict(
        1,
        ok,
        f"zero force from (0, 0.7): {res.iterations} step, residual {sup:.1e}, "
        f"|lambda| {abs(res.state.lam):.1e}",
    )
    assert ok, line


def test_criterion_02_quadratic_convergence(freq):
    force = gradient_cosine_force((0.02, 0.02), ALPHA)
    t0 = time.perf_counter()
    res = solve(TorusFunction.zero(2, 128), 0.0, force, freq, tol=1e-12)
    wall = time.perf_counter() - t0
    sups = [r["sup_residual"] for r in res.history]
    pre_floor = [s for s in sups if s > 1e-11]
    slope = float("nan")
    if len(pre_floor) >= 3:
        slope, _ = np.polyfit(np.log(pre_floor[:-1]), np.log(pre_floor[1:]), 1)
    ok_steps = res.converged and res.iterations <= 8
    ok_time = wall < 10.0
    ok_slope = slope >= 1.8
    ok = ok_steps and ok_time and ok_slope
    line = _verdict(
        2,
        ok,
        f"p={slope:.2f} (need >=1.8){' ok' if ok_slope else ''}; "
        f"{res.iterations} steps to 1e-12 (need <=8){' ok' if ok_steps else ''}; "
        f"{wall:.1f}s (need <10s){' ok' if ok_time else ''}",
    )
    assert ok, line


def test_criterion_03_gradient_counterterm_vanishes(freq):
    forces = [
        (gradient_cosine_force((0.02, 0.02), ALPHA), 128),
        (gradient_cosine_force((0.01, 0.005), ALPHA), 64),
        (
            ForceModel.from_real_modes(
                [{"k": [1, 0], "cos": 8e-4}, {"k": [1, 1], "sin": 4e-4}],
                alpha=ALPHA,
                potential=True,
            ),
            64,
        ),
    ]
    worst = 0.0
    n_converged = 0
    for force, n in forces:
        res = solve(TorusFunction.zero(2, n), 0.0, force, freq)
        n_converged += res.converged
        worst = max(worst, abs(res.state.lam))
    ok = n_converged == len(forces) and worst <= 1e-10
    line = _verdict(
        3,
        ok,
        f"{n_converged}/{len(forces)} gradient forces converged, "
        f"worst |lambda*| {worst:.1e} (need <=1e-10)",
    )
    assert ok, line


def test_criterion_04_identity_suite(freq):
    rng = np.random.default_rng(20260823)
    worst_geo = worst_dec = worst_w = 0.0
    for _ in range(20):
        h = random_torus_function(2, 32, rng, decay=0.4, amplitude=2e-3,
                                  zero_mean=True)
        force = gradient_cosine_force(
            (rng.uniform(0.002, 0.01), rng.uniform(0.002, 0.01)), ALPHA
        )
        lam = rng.uniform(-1e-3, 1e-3)
        report = verify_identities(h, lam, force, freq)
        worst_geo = max(
            worst_geo, report.geometric_residual / report.geometric_scale
        )
        worst_dec = max(worst_dec, report.decomposition_residual)
        worst_w = max(worst_w, report.w_identity_residual)
    ok = worst_geo <= 1e-10 and worst_dec <= 1e-10 and worst_w <= 1e-10
    line = _verdict(
        4,
        ok,
        f"20 states: conjugacy {worst_geo:.1e} rel, decomposition {worst_dec:.1e}, "
        f"equivalence {worst_w:.1e} (all need <=1e-10)",
    )
    assert ok, line


def test_criterion_05_cohomology_solves(freq):
    rng = np.random.default_rng(20260823)
    wa = freq.omega_alpha
    worst_rel = 0.0
    means_exact = True
    for _ in range(100):
        rhs = random_torus_function(2, 32, rng, decay=0.2, zero_mean=True)
        phi = solve_first_difference(rhs, wa, direction=+1)
        resid = (phi.shift(wa) - phi - rhs).sup_norm()
        worst_rel = max(worst_rel, resid / rhs.sup_norm())
        means_exact &= phi.mean() == 0.0
    rational = FrequencyData(alpha=ALPHA, omega=0.5)
    resonant = TorusFunction.from_modes(2, 32, {(2, 0): 0.5, (-2, 0): 0.5})
    try:
        solve_first_difference(resonant, rational.omega_alpha)
        breach_raised = False
    except SmallDivisorError:
        breach_raised = True
    ok = worst_rel <= 1e-12 and means_exact and breach_raised
    line = _verdict(
        5,
        ok,
        f"100 solves, worst relative residual {worst_rel:.1e} (need <=1e-12), "
        f"means exact {means_exact}, rational-omega breach {breach_raised}",
    )
    assert ok, line


def test_criterion_06_lindstedt_scaling(freq):
    base = ForceModel.from_real_modes([{"k": [1, 0], "cos": 1.0}], alpha=ALPHA)
    series = lindstedt_expand(base, freq, n_max=3, resolution=64)
    epsilons = (1e-2, 5e-3, 2.5e-3)
    residuals, gaps = [], []
    for eps in epsilons:
        h, lam = lindstedt_eval(series, eps)
        residuals.append(error_functional(h, lam, base.scale(eps), freq).sup_norm)
        sol = solve(TorusFunction.zero(2, 64), 0.0, base.scale(eps), freq)
        assert sol.converged
        gaps.append(
            (h - sol.state.h_hat).sup_norm() + abs(lam - sol.state.lam)
        )
    res_c = [r / eps**4 for r, eps in zip(residuals, epsilons)]
    gap_c = [g / eps**4 for g, eps in zip(gaps, epsilons)]
    res_spread = max(res_c) / min(res_c)
    gap_spread = max(gap_c) / min(gap_c)
    ok = res_spread <= 2.0 and gap_spread <= 2.0
    line = _verdict(
        6,
        ok,
        f"order-3 eps^4 constants: residual spread {res_spread:.2f}, "
        f"solver-gap spread {gap_spread:.2f} (both need <=2)",
    )
    assert ok, line


def test_criterion_07_local_uniqueness(freq):
    rng = np.random.default_rng(20260823)
    force = gradient_cosine_force((0.01, 0.01), ALPHA)
    sol = solve(TorusFunction.zero(2, 64), 0.0, force, freq)
    assert sol.converged
    m = default_smoothness(freq)
    noise = random_torus_function(2, 64, rng, decay=0.25, zero_mean=True)
    noise = noise * (1e-4 / noise.sobolev(m))
    restart = solve(
        (sol.state.h_hat + noise).with_zero_mean(), sol.state.lam, force, freq
    )
    gap = (restart.state.h_hat - sol.state.h_hat).sobolev(0)
    ok = restart.converged and gap <= 1e-9
    line = _verdict(
        7, ok, f"1e-4 H^{m} perturbation returns within {gap:.1e} in H^0 (need <=1e-9)"
    )
    assert ok, line


def test_criterion_08_time_average_law(freq):
    rng = np.random.default_rng(20260823)
    wa = np.array(freq.omega_alpha)
    grids = lattice(2, 32)
    ks = np.stack([g.reshape(-1) for g in grids], axis=1).astype(float)
    steps = 10_000
    weights = np.ones(steps + 1)
    weights[0] = weights[-1] = 0.5
    weights /= weights.sum()
    worst = 0.0
    for _ in range(10):
        f = random_torus_function(2, 32, rng, decay=0.3)
        sigma0 = rng.uniform(0.0, 1.0, size=2)
        rates = ks @ wa
        anchored = f.coeffs.reshape(-1) * np.exp(2j * np.pi * (ks @ sigma0))
        average = 0.0
        for start in range(0, steps + 1, 2048):
            t = np.arange(start, min(start + 2048, steps + 1), dtype=float)
            orbit = anchored @ np.exp(2j * np.pi * np.outer(rates, t))
            average += float(np.real(orbit) @ weights[start:start + t.size])
        worst = max(worst, abs(average - f.mean()))
    ok = worst <= 1e-2
    line = _verdict(
        8, ok, f"10 random f, worst |trapezoid(T=1e4) - mean| {worst:.1e} (need <=1e-2)"
    )
    assert ok, line


def test_criterion_09_step_scaling(freq):
    force = gradient_cosine_force((0.005, 0.005), ALPHA)

    def mid_state(n):
        sol = solve(TorusFunction.zero(2, n), 0.0, force, freq, max_iter=3,
                    tol=1e-30, validate_frequency=False)
        return SolverState(h_hat=sol.state.h_hat, lam=sol.state.lam)

    def peak_memory(state):
        tracemalloc.start()
        quasi_newton_step(state, force, freq)
        _, peak = tracemalloc.get_traced_memory()
        tracemalloc.stop()
        return peak

    s128, s512 = mid_state(128), mid_state(512)
    for s in (s128, s512):
        quasi_newton_step(s, force, freq)
    # Interleave the samples so a machine-load burst inflates both minima
    # alike instead of hitting one resolution's whole sample set.
    times = {128: [], 512: []}
    for _ in range(5):
        for n, s in ((512, s512), (128, s128)):
            t0 = time.perf_counter()
            quasi_newton_step(s, force, freq)
            times[n].append(time.perf_counter() - t0)
    t_ratio = min(times[512]) / min(times[128])
    m_ratio = peak_memory(s512) / peak_memory(s128)
    ok = t_ratio <= 25.0 and m_ratio <= 20.0
    line = _verdict(
        9,
        ok,
        f"N=512 vs N=128 step: time x{t_ratio:.1f} (need <=25), "
        f"memory x{m_ratio:.1f} (need <=20)",
    )
    assert ok, line


def test_criterion_10_breakdown_detection(freq):
    base = gradient_cosine_force((1.0, 1.0), ALPHA)
    results = {}
    for n in (256, 512):
        records, estimate = ramp_to_breakdown(
            base, freq, n, start=0.012, initial_step=2e-3, min_step=2e-4
        )
        assert estimate is not None
        baseline = records[0].sobolev_m
        accepted = [
            r for r in records
            if r.converged and not breakdown_signal(r, baseline)
        ]
        signals_above = all(
            breakdown_signal(r, baseline)
            for r in records
            if r.param > estimate.upper - 1e-15
        )
        hard_fail_above = any(
            not r.converged for r in records if r.param >= estimate.upper
        )
        tail = [r.sobolev_m for r in accepted[-5:]]
        monotone = len(tail) == 5 and all(a < b for a, b in zip(tail, tail[1:]))
        results[n] = {
            "estimate": estimate,
            "accepted": accepted,
            "ok": (
                estimate.bracket_width <= 1e-3
                and accepted
                and accepted[-1].param == estimate.lower
                and signals_above
                and hard_fail_above
                and monotone
            ),
        }
    lo = max(results[n]["estimate"].lower for n in (256, 512))
    hi = min(results[n]["estimate"].upper for n in (256, 512))
    mids = [
        0.5 * (results[n]["estimate"].lower + results[n]["estimate"].upper)
        for n in (256, 512)
    ]
    overlap = lo <= hi or abs(mids[0] - mids[1]) <= 0.1 * max(mids)

    # warm-start superiority on the acceptance ramp, checked at N=256
    warm_ok = True
    for record in results[256]["accepted"]:
        cold = solve(
            TorusFunction.zero(2, 256), 0.0, base.scale(record.param), freq
        )
        warm_ok &= (not cold.converged) or record.iterations <= cold.iterations

    ok = results[256]["ok"] and results[512]["ok"] and overlap and warm_ok
    e256, e512 = results[256]["estimate"], results[512]["estimate"]
    line = _verdict(
        10,
        ok,
        f"N=256 bracket [{e256.lower:.6g}, {e256.upper:.6g}], "
        f"N=512 bracket [{e512.lower:.6g}, {e512.upper:.6g}], "
        f"widths <=1e-3, overlap {overlap}, last-5 sobolev monotone, "
        f"warm<=cold {warm_ok}",
    )
    assert ok, line
