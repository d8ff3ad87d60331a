"""Order-by-order expansion of the equilibrium in the force amplitude.

Writing the force as eps U and expanding h_hat = sum eps^n h^n,
lambda = sum eps^n lambda^n, order n of the equilibrium equation reads

    L h^n + R_n + lambda^n = 0,

with L the second difference along omega alpha and R_n the eps^(n-1)
Taylor coefficient of U(sigma + alpha sum_m eps^m h^m(sigma)).  Choosing
lambda^n = -<R_n> makes the right side zero mean, and h^n follows from one
mode-wise division by the second-difference divisors.  R_n is assembled by
truncated power-series (jet) arithmetic on the collocation grid: per force
mode the composition is a fixed phase times exp of a jet with no constant
term, so the standard exponential recurrence applies pointwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .cohomology import FrequencyData, solve_second_difference
from .fourier import TorusFunction, collocation_grid
from .model import ForceModel

#: Expansion order used when none is configured; high enough to exhibit
#: the eps^(order+1) truncation scaling at desk resolutions.
DEFAULT_ORDER = 5


@dataclass
class LindstedtSeries:
    """Truncated expansion: h_terms[n-1] is h^n, lambda_terms[n-1] is lambda^n.

    Every stored h^n has zero mean; the zeroth-order terms vanish by the
    normalization and never appear explicitly.
    """

    order: int
    h_terms: list
    lambda_terms: list

    def h_term(self, n: int) -> TorusFunction:
        return self.h_terms[n - 1]

    def lambda_term(self, n: int) -> float:
        return self.lambda_terms[n - 1]


def _auto_resolution(force: ForceModel, n_max: int) -> int:
    """Power-of-two band wide enough for every harmonic through order n_max."""
    k_inf = 0
    for k, _ in force.modes:
        k_inf = max(k_inf, max(abs(int(ki)) for ki in k))
    need = 2 * (n_max * k_inf + 1)
    return max(16, 2 ** int(math.ceil(math.log2(max(need, 2)))))


def lindstedt_expand(
    force: ForceModel,
    freq: FrequencyData,
    n_max: int = DEFAULT_ORDER,
    resolution: Optional[int] = None,
    validate_frequency: bool = True,
) -> LindstedtSeries:
    """Compute the first n_max orders of the expansion for the force U.

    The returned terms live at ``resolution`` (auto-sized to hold all
    harmonics through order n_max when not given).  Small-divisor breaches
    surface exactly as in the difference-equation solver.
    """
    if force.d != freq.d:
        raise ValueError(f"force dimension {force.d} != frequency dimension {freq.d}")
    if n_max < 1:
        raise ValueError(f"n_max must be positive, got {n_max}")
    n = resolution if resolution is not None else _auto_resolution(force, n_max)
    if validate_frequency:
        freq.validate(n)
    d = freq.d
    shape = (n,) * d
    grids = collocation_grid(d, n)

    # Static data per force mode: amplitude times the sigma-phase, and the
    # alpha-projection entering the exp jet.
    phases = []
    k_alphas = []
    for k, amplitude in force.modes:
        k_dot_sigma = sum(ki * g for ki, g in zip(k, grids))
        phases.append(amplitude * np.exp(2j * np.pi * k_dot_sigma))
        k_alphas.append(float(np.dot(k, freq.alpha)))

    # Per-mode jets of exp(2 pi i (k . alpha) H): coefficient arrays by
    # order, extended as the h^m become available.
    jets = [[np.ones(shape, dtype=np.complex128)] for _ in phases]
    c_terms: list = [[] for _ in phases]

    # R_n is supported on the n-fold sumset of the force modes; everything
    # outside is transform round-off, which the divisors would amplify.
    # The sumset is tracked exactly and the complement zeroed.
    reachable = np.zeros(shape, dtype=bool)
    for k, _ in force.modes:
        idx = tuple(int(ki) % n for ki in k)
        reachable[idx] = True

    def dilate(mask):
        grown = np.zeros_like(mask)
        for k, _ in force.modes:
            grown |= np.roll(mask, tuple(int(ki) for ki in k),
                             axis=tuple(range(d)))
        return grown

    h_terms = []
    lambda_terms = []
    for order in range(1, n_max + 1):
        j = order - 1
        if order > 1:
            reachable = dilate(reachable)
        r_values = np.zeros(shape, dtype=np.complex128)
        for phase, jet, cs in zip(phases, jets, c_terms):
            if j > 0:
                e_j = np.zeros(shape, dtype=np.complex128)
                for m in range(1, j + 1):
                    e_j += m * cs[m - 1] * jet[j - m]
                jet.append(e_j / j)
            r_values += phase * jet[j]
        r_raw = TorusFunction.from_values(r_values.real)
        r = TorusFunction(np.where(reachable, r_raw.coeffs, 0.0), check=False)
        lam_n = -r.mean()
        h_n = solve_second_difference(-1.0 * (r + lam_n), freq.omega_alpha)
        h_terms.append(h_n)
        lambda_terms.append(lam_n)
        if order < n_max:
            h_values = h_n.values()
            for cs, k_alpha in zip(c_terms, k_alphas):
                cs.append(2j * np.pi * k_alpha * h_values)
    return LindstedtSeries(order=n_max, h_terms=h_terms, lambda_terms=lambda_terms)


def lindstedt_eval(series: LindstedtSeries, epsilon: float):
    """Truncated sums (sum eps^n h^n, sum eps^n lambda^n)."""
    first = series.h_terms[0]
    h = TorusFunction.zero(first.d, first.resolution)
    lam = 0.0
    power = 1.0
    for h_n, lam_n in zip(series.h_terms, series.lambda_terms):
        power *= epsilon
        h = h + power * h_n
        lam += power * lam_n
    return h, lam
