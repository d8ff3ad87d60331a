"""Frenkel-Kontorova interaction on a quasi-periodic substrate.

The substrate force is a finite trigonometric polynomial U on T^d.  Along a
hull configuration it is evaluated at the phases sigma + alpha u(sigma),
which leaves the torus grid, so composition is done mode by mode:

    U(sigma_j + alpha u_j) = sum_K U_K exp(2 pi i (K . sigma_j + (K . alpha) u_j))

This is exact for the trigonometric polynomial (no interpolation error) and
costs O(M N^d) for M modes.  The equilibrium error of a candidate pair
(h_hat, lambda) is the second difference of h_hat along the translation plus
the composed force plus the constant counterterm.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .cohomology import FrequencyData
from .errors import HermitianSymmetryError, ResolutionError
from .fourier import TorusFunction, collocation_grid


def _normalize_modes(modes: dict, d: Optional[int] = None):
    """Validate a {K: amplitude} map: consistent dimension, Hermitian, sorted."""
    cleaned = {}
    for k, amplitude in modes.items():
        k = tuple(int(x) for x in k)
        if d is None:
            d = len(k)
        elif len(k) != d:
            raise ResolutionError(f"mode index {k} has wrong dimension (d={d})")
        amplitude = complex(amplitude)
        if amplitude != 0:
            cleaned[k] = amplitude
    if d is None:
        raise ResolutionError("cannot infer dimension from an empty mode set")
    for k, amplitude in cleaned.items():
        partner = tuple(-x for x in k)
        expected = np.conj(cleaned.get(partner, 0.0))
        if abs(amplitude - expected) > 1e-12 * max(1.0, abs(amplitude)):
            raise HermitianSymmetryError(
                f"force mode {k} = {amplitude} lacks conjugate partner at {partner}"
            )
    return d, tuple(sorted(cleaned.items()))


@dataclass(frozen=True)
class ForceModel:
    """Finite-mode substrate force U on T^d.

    ``gradient`` records whether the force was derived from a potential by
    the directional derivative along alpha, in which case the average of the
    counterterm vanishes at equilibrium.
    """

    d: int
    modes: tuple
    gradient: bool = False

    @classmethod
    def from_force_modes(cls, modes: dict) -> "ForceModel":
        d, cleaned = _normalize_modes(modes)
        return cls(d=d, modes=cleaned, gradient=False)

    @classmethod
    def from_potential_modes(cls, potential: dict, alpha) -> "ForceModel":
        """Force = directional derivative of the potential along alpha."""
        alpha = tuple(float(a) for a in alpha)
        d, cleaned = _normalize_modes(potential, d=len(alpha))
        force = {}
        for k, v in cleaned:
            force[k] = 2j * np.pi * float(np.dot(k, alpha)) * v
        d, force_modes = _normalize_modes(force, d=d)
        return cls(d=d, modes=force_modes, gradient=True)

    @classmethod
    def from_real_modes(cls, entries: Iterable[dict], alpha=None, potential: bool = False) -> "ForceModel":
        """Build from {"k": [...], "cos": a, "sin": b} entries.

        Each entry contributes a cos(2 pi K.sigma) + b sin(2 pi K.sigma).
        With potential=True the entries describe the potential and the force
        is its directional derivative along alpha.
        """
        modes: dict = {}
        for entry in entries:
            k = tuple(int(x) for x in entry["k"])
            a = float(entry.get("cos", 0.0))
            b = float(entry.get("sin", 0.0))
            minus_k = tuple(-x for x in k)
            modes[k] = modes.get(k, 0.0) + 0.5 * (a - 1j * b)
            if k != minus_k:
                modes[minus_k] = modes.get(minus_k, 0.0) + 0.5 * (a + 1j * b)
        if potential:
            if alpha is None:
                raise ResolutionError("potential entries require alpha")
            return cls.from_potential_modes(modes, alpha)
        return cls.from_force_modes(modes)

    def scale(self, factor: float) -> "ForceModel":
        """Multiply every amplitude; preserves gradient structure."""
        scaled = tuple((k, factor * v) for k, v in self.modes)
        return ForceModel(d=self.d, modes=scaled, gradient=self.gradient)

    def to_torus_function(self, n: int) -> TorusFunction:
        return TorusFunction.from_modes(self.d, n, dict(self.modes))

    def sup_bound(self) -> float:
        """Upper bound sum |U_K| on the sup norm of the force."""
        return float(sum(abs(v) for _, v in self.modes))

    def is_zero(self) -> bool:
        return all(v == 0 for _, v in self.modes)


def gradient_cosine_force(amplitudes, alpha) -> ForceModel:
    """Gradient force sum_i a_i cos(2 pi sigma_i) on T^d.

    Built from the potential sum_i a_i sin(2 pi sigma_i) / (2 pi alpha_i) so
    the gradient structure is recorded and the force amplitudes come out as
    given after the directional derivative.
    """
    alpha = tuple(float(a) for a in alpha)
    d = len(alpha)
    entries = []
    for i, a in enumerate(amplitudes):
        k = [0] * d
        k[i] = 1
        entries.append({"k": k, "sin": float(a) / (2.0 * np.pi * alpha[i])})
    return ForceModel.from_real_modes(entries, alpha=alpha, potential=True)


@functools.lru_cache(maxsize=32)
def _lattice_wave(k: tuple, d: int, n: int) -> np.ndarray:
    """exp(2 pi i K.sigma) on the collocation grid; fixed per mode and grid."""
    grids = collocation_grid(d, n)
    k_dot_sigma = sum(ki * g for ki, g in zip(k, grids))
    wave = np.exp(2j * np.pi * k_dot_sigma)
    wave.setflags(write=False)
    return wave


def _mode_phases(force: ForceModel, h: TorusFunction, alpha):
    h_values = h.values()
    for k, amplitude in force.modes:
        k_dot_alpha = float(np.dot(k, alpha))
        theta = (2.0 * np.pi * k_dot_alpha) * h_values
        swing = np.cos(theta) + 1j * np.sin(theta)
        yield k, amplitude, k_dot_alpha, _lattice_wave(k, h.d, h.resolution) * swing


def eval_force_along(force: ForceModel, h: TorusFunction, alpha) -> np.ndarray:
    """Values of U(sigma + alpha h(sigma)) on the collocation grid."""
    total = np.zeros((h.resolution,) * h.d, dtype=np.complex128)
    for _, amplitude, _, phase in _mode_phases(force, h, alpha):
        total += amplitude * phase
    return total.real


def eval_force_deriv_along(force: ForceModel, h: TorusFunction, alpha) -> np.ndarray:
    """Values of the directional derivative of U along alpha, composed with h."""
    total = np.zeros((h.resolution,) * h.d, dtype=np.complex128)
    for _, amplitude, k_dot_alpha, phase in _mode_phases(force, h, alpha):
        total += amplitude * 2j * np.pi * k_dot_alpha * phase
    return total.real


@dataclass
class EquilibriumError:
    """Residual field of a candidate (h_hat, lambda) pair.

    ``scale`` is the assembly scale: the sum of the sup norms of the terms
    that cancel to produce the residual.  Round-off in the residual's
    coefficients sits at machine epsilon times this scale, not relative to
    the residual itself, which matters once the residual is small.
    """

    residual: TorusFunction
    sup_norm: float
    scale: float = 1.0

    def sobolev(self, r: float) -> float:
        return self.residual.sobolev(r)


def error_functional(
    h_hat: TorusFunction, lam: float, force: ForceModel, freq: FrequencyData
) -> EquilibriumError:
    """Equilibrium error h(.+wa) + h(.-wa) - 2h + U(. + alpha h) + lambda."""
    if force.d != h_hat.d:
        raise ResolutionError(f"force dimension {force.d} != field dimension {h_hat.d}")
    linear = h_hat.second_difference(freq.omega_alpha)
    composed = TorusFunction.from_values(eval_force_along(force, h_hat, freq.alpha))
    residual = linear + composed + float(lam)
    scale = linear.sup_norm() + composed.sup_norm() + abs(float(lam))
    return EquilibriumError(
        residual=residual, sup_norm=residual.sup_norm(), scale=max(scale, 1e-300)
    )
