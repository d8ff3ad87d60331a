"""Constant-coefficient difference equations over an irrational translation.

The translation sigma -> sigma + omega alpha on T^d is minimal when
omega alpha is non-resonant, so phi(sigma + omega alpha) - phi(sigma) = eta
is solvable exactly in the truncated band whenever eta has zero average:
divide mode by mode by exp(+-2 pi i k . omega alpha) - 1.  The divisors are
controlled by how far omega alpha . k stays from the integers, which
:func:`diophantine_estimate` measures over a finite lattice ball.
"""

from __future__ import annotations

import functools
import itertools
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import NearResonanceError, SmallDivisorError, SolvabilityError
from .fourier import TorusFunction, k_dot, lattice_size_1norm

log = logging.getLogger(__name__)

#: Divisor magnitudes below this are treated as exact resonances.
DIVISOR_FLOOR = 1e-13
#: Relative tolerance on the average of the right-hand side.
MEAN_TOL = 1e-10
#: Estimates below this trip NearResonanceError during validation.
RESONANCE_THRESHOLD = 1e-12


def default_tau(d: int) -> float:
    """Diophantine exponent used when none is configured.

    For bounded-type frequency modules on T^d the exponent d + 1 + upsilon
    with upsilon = 1 is a safe choice; keeping it mildly generous only
    loosens the reported estimate, never the solve itself.
    """
    return float(d + 2)


@dataclass(frozen=True)
class FrequencyData:
    """Rotation data: hull frequencies alpha, cell frequency omega, exponent tau.

    alpha spans the frequency module of the substrate together with 1; omega
    is the mean spacing driving the translation sigma -> sigma + omega alpha.
    """

    alpha: tuple
    omega: float
    tau: float

    def __init__(self, alpha, omega: float, tau: Optional[float] = None):
        alpha = tuple(float(a) for a in alpha)
        if len(alpha) < 2:
            raise NearResonanceError(f"need at least 2 hull frequencies, got {len(alpha)}")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "omega", float(omega))
        object.__setattr__(self, "tau", default_tau(len(alpha)) if tau is None else float(tau))

    @property
    def d(self) -> int:
        return len(self.alpha)

    @property
    def omega_alpha(self) -> tuple:
        """The translation vector on T^d."""
        return tuple(self.omega * a for a in self.alpha)

    def diophantine_estimate(self, k_max: int) -> float:
        """min of dist(omega alpha . k, Z) |k|^tau over 0 < |k|_1 <= k_max."""
        return _cached_estimate(self.omega_alpha, self.tau, int(k_max))

    def validate(self, n: int, threshold: float = RESONANCE_THRESHOLD) -> float:
        """Check non-resonance over the sum band of an N^d truncation.

        The widest lattice index reachable by products inside the band has
        |k|_1 = N d / 2, so that is the default search radius.  Returns the
        estimate; raises NearResonanceError when it is below threshold.
        """
        nu_hat = self.diophantine_estimate(n * self.d // 2)
        if nu_hat < threshold:
            raise NearResonanceError(
                f"frequency vector is numerically resonant: estimate {nu_hat:.3e} "
                f"below {threshold:.1e} for omega={self.omega!r}, alpha={self.alpha!r}"
            )
        return nu_hat


@functools.lru_cache(maxsize=64)
def _cached_estimate(omega_alpha: tuple, tau: float, k_max: int) -> float:
    return diophantine_estimate(omega_alpha, tau, k_max)


def diophantine_estimate(omega_alpha, tau: float, k_max: int) -> float:
    """Smallest dist(omega alpha . k, Z) |k|_1^tau over 0 < |k|_1 <= k_max.

    Exhaustive over the lattice ball.  The last two coordinates are swept
    vectorized; any remaining leading coordinates are enumerated with their
    |.|_1 budget, which keeps peak memory flat in d.
    """
    omega_alpha = np.asarray(omega_alpha, dtype=float)
    d = omega_alpha.size
    k_max = int(k_max)
    if k_max < 1:
        raise ValueError(f"k_max must be >= 1, got {k_max}")
    best = np.inf
    axis = np.arange(-k_max, k_max + 1)
    tail = np.meshgrid(axis, axis, indexing="ij")
    tail_sum = np.abs(tail[0]) + np.abs(tail[1])
    tail_dot = omega_alpha[-2] * tail[0] + omega_alpha[-1] * tail[1]
    lead_ranges = (range(-k_max, k_max + 1),) * (d - 2)
    for lead in itertools.product(*lead_ranges):
        lead_size = sum(abs(x) for x in lead)
        if lead_size > k_max:
            continue
        size = lead_size + tail_sum
        mask = (size >= 1) & (size <= k_max)
        x = tail_dot + float(np.dot(omega_alpha[: d - 2], lead))
        frac = np.abs(x - np.round(x))
        weighted = frac[mask] * size[mask].astype(float) ** tau
        if weighted.size:
            best = min(best, float(weighted.min()))
    return best


@functools.lru_cache(maxsize=16)
def _difference_divisor(
    omega_alpha: tuple, direction: int, d: int, n: int, floor: float
):
    """Mode-wise divisor of a difference operator plus its breach masks.

    direction +1/-1 selects the one-sided divisor exp(+-2 pi i k.wa) - 1,
    direction 0 the symmetric one 2(cos(2 pi k.wa) - 1).  The arrays depend
    only on the frequency data and the grid, so they are shared across every
    solve on the same lattice.
    """
    theta = 2.0 * np.pi * k_dot(omega_alpha, d, n)
    if direction == 0:
        divisor = 2.0 * (np.cos(theta) - 1.0)
    else:
        divisor = np.exp(1j * direction * theta) - 1.0
    magnitude = np.abs(divisor)
    nonzero_k = lattice_size_1norm(d, n) > 0
    tiny = nonzero_k & (magnitude < floor)
    safe = nonzero_k & ~tiny
    for arr in (divisor, magnitude, tiny, safe):
        arr.setflags(write=False)
    return divisor, magnitude, tiny, safe


def solve_first_difference(
    rhs: TorusFunction,
    omega_alpha,
    direction: int = +1,
    divisor_floor: float = DIVISOR_FLOOR,
    mean_tol: float = MEAN_TOL,
) -> TorusFunction:
    """Solve phi(. + s omega alpha) - phi = rhs for zero-mean phi, s = direction.

    The average of rhs must vanish for solvability; averages within mean_tol
    (relative to the coefficient scale) are treated as round-off residue and
    subtracted, anything larger raises SolvabilityError.  A divisor smaller
    than divisor_floor with a nonzero coefficient over it raises
    SmallDivisorError; zero coefficients over tiny divisors solve to zero.
    """
    if direction not in (+1, -1):
        raise ValueError(f"direction must be +1 or -1, got {direction}")
    d, n = rhs.d, rhs.resolution
    scale = float(np.abs(rhs.coeffs).max())
    mean = rhs.mean()
    if abs(mean) > mean_tol * max(scale, 1e-300):
        raise SolvabilityError(
            f"right-hand side has nonzero average {mean:.3e} "
            f"(relative {abs(mean) / max(scale, 1e-300):.3e}, tolerance {mean_tol:.1e})"
        )
    if mean != 0.0:
        log.debug("subtracting round-off average %.3e before difference solve", mean)

    key = tuple(float(x) for x in np.asarray(omega_alpha, dtype=float))
    divisor, magnitude, tiny, safe = _difference_divisor(
        key, direction, d, n, divisor_floor
    )
    breach = tiny & (np.abs(rhs.coeffs) > 0)
    if np.any(breach):
        idx = next(zip(*np.nonzero(breach)))
        k_bad = tuple(int(((i + n // 2) % n) - n // 2) for i in idx)
        raise SmallDivisorError(
            f"divisor {magnitude[idx]:.3e} below floor {divisor_floor:.1e} "
            f"at k={k_bad} with coefficient {abs(rhs.coeffs[idx]):.3e}",
            k=k_bad,
        )

    c = np.array(rhs.coeffs)
    c[(0,) * d] = 0.0
    phi = np.zeros_like(c)
    np.divide(c, divisor, out=phi, where=safe)
    return TorusFunction(phi, check=False)


def solve_second_difference(
    rhs: TorusFunction,
    omega_alpha,
    divisor_floor: float = DIVISOR_FLOOR,
    mean_tol: float = MEAN_TOL,
) -> TorusFunction:
    """Solve phi(.+wa) + phi(.-wa) - 2 phi = rhs for zero-mean phi.

    Mode-wise division by 2(cos(2 pi k . omega alpha) - 1); solvability and
    breach handling follow :func:`solve_first_difference`.  The divisor is
    the squared magnitude of the first-difference one, so breaches appear at
    the same modes but with a quadratically smaller margin.
    """
    d, n = rhs.d, rhs.resolution
    scale = float(np.abs(rhs.coeffs).max())
    mean = rhs.mean()
    if abs(mean) > mean_tol * max(scale, 1e-300):
        raise SolvabilityError(
            f"right-hand side has nonzero average {mean:.3e} "
            f"(relative {abs(mean) / max(scale, 1e-300):.3e}, tolerance {mean_tol:.1e})"
        )
    if mean != 0.0:
        log.debug("subtracting round-off average %.3e before difference solve", mean)

    key = tuple(float(x) for x in np.asarray(omega_alpha, dtype=float))
    divisor, magnitude, tiny, safe = _difference_divisor(key, 0, d, n, divisor_floor)
    breach = tiny & (np.abs(rhs.coeffs) > 0)
    if np.any(breach):
        idx = next(zip(*np.nonzero(breach)))
        k_bad = tuple(int(((i + n // 2) % n) - n // 2) for i in idx)
        raise SmallDivisorError(
            f"divisor {magnitude[idx]:.3e} below floor {divisor_floor:.1e} "
            f"at k={k_bad} with coefficient {abs(rhs.coeffs[idx]):.3e}",
            k=k_bad,
        )

    c = np.array(rhs.coeffs)
    c[(0,) * d] = 0.0
    phi = np.zeros_like(c)
    np.divide(c, divisor, out=phi, where=safe)
    return TorusFunction(phi, check=False)
