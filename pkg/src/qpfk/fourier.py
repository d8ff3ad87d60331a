"""Truncated Fourier representation of real functions on the d-torus.

A function is carried by its complex coefficients on the lattice band
[-N/2, N/2)^d (standard FFT layout) together with a lazily cached view of
its values on the uniform N^d collocation grid.  Coefficients of real
functions satisfy the Hermitian symmetry c(-k) = conj(c(k)); every
constructor enforces it exactly and every operation preserves it.

The mode planes at k_i = -N/2 have no Hermitian partner inside the band and
would break real-valuedness under shifts and directional derivatives, so
they are projected out at construction time.  Products are de-aliased by
zero-padding to a 3N/2-per-axis grid, multiplying pointwise and truncating
back, which makes the product of two band-limited functions exact up to
round-off.  Hermitian symmetry lets every grid transform run in rfft
half-spectrum form, so the collocation-grid arrays are real throughout.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .errors import HermitianSymmetryError, ResolutionError

#: Shell maxima below this are treated as round-off noise in the decay fit.
DECAY_FLOOR = 1e-14


@functools.lru_cache(maxsize=32)
def lattice(d: int, n: int):
    """Integer frequency grids for a (N,)*d FFT layout, one array per axis."""
    axis = np.fft.fftfreq(n, d=1.0 / n).astype(np.int64)
    grids = np.meshgrid(*(axis,) * d, indexing="ij")
    for g in grids:
        g.setflags(write=False)
    return tuple(grids)


@functools.lru_cache(maxsize=32)
def collocation_grid(d: int, n: int):
    """Coordinate arrays sigma_i = j_i / N of the uniform grid, one per axis."""
    axis = np.arange(n) / n
    grids = np.meshgrid(*(axis,) * d, indexing="ij")
    for g in grids:
        g.setflags(write=False)
    return tuple(grids)


@functools.lru_cache(maxsize=32)
def lattice_size_1norm(d: int, n: int):
    """|k|_1 on the FFT lattice; the size used in divisor and norm formulas."""
    size = sum(np.abs(g) for g in lattice(d, n))
    size.setflags(write=False)
    return size


@functools.lru_cache(maxsize=32)
def _nyquist_mask(d: int, n: int):
    mask = np.zeros((n,) * d, dtype=bool)
    for ax in range(d):
        index = [slice(None)] * d
        index[ax] = n // 2
        mask[tuple(index)] = True
    mask.setflags(write=False)
    return mask


def _conjugate_reflection(c: np.ndarray) -> np.ndarray:
    """conj(c) sampled at -k, i.e. the Hermitian partner array."""
    out = np.conj(c)
    for ax in range(c.ndim):
        out = np.roll(np.flip(out, axis=ax), 1, axis=ax)
    return out


def k_dot(vector, d: int, n: int) -> np.ndarray:
    """k . vector on the lattice, as a float array."""
    grids = lattice(d, n)
    vec = np.asarray(vector, dtype=float)
    out = np.zeros((n,) * d)
    for ax in range(d):
        out += vec[ax] * grids[ax]
    return out


def _float_key(vector) -> tuple:
    return tuple(float(x) for x in np.asarray(vector, dtype=float))


@functools.lru_cache(maxsize=32)
def _translation_symbol(t: tuple, d: int, n: int) -> np.ndarray:
    """exp(2 pi i k.t), the multiplier of the shift by t."""
    phase = np.exp(2j * np.pi * k_dot(t, d, n))
    phase.setflags(write=False)
    return phase


@functools.lru_cache(maxsize=32)
def _derivative_symbol(alpha: tuple, d: int, n: int) -> np.ndarray:
    """2 pi i k.alpha, the multiplier of the derivative along alpha."""
    factor = 2j * np.pi * k_dot(alpha, d, n)
    factor.setflags(write=False)
    return factor


@functools.lru_cache(maxsize=32)
def _second_difference_symbol(t: tuple, d: int, n: int) -> np.ndarray:
    """2 (cos(2 pi k.t) - 1), the multiplier of f(.+t) + f(.-t) - 2f."""
    divisor = 2.0 * (np.cos(2.0 * np.pi * k_dot(t, d, n)) - 1.0)
    divisor.setflags(write=False)
    return divisor


class TorusFunction:
    """A real function on T^d in truncated Fourier form.

    Instances are immutable; all operations return new objects.  ``coeffs``
    is the complex array in FFT layout normalized so that
    value(sigma_j) = sum_k c_k exp(2 pi i k . sigma_j) at sigma_j = j/N.
    """

    __slots__ = ("d", "resolution", "coeffs", "_values", "_padded")

    def __init__(self, coeffs: np.ndarray, check: bool = True, _values=None):
        coeffs = np.asarray(coeffs, dtype=np.complex128)
        d = coeffs.ndim
        if d < 2:
            raise ResolutionError(f"torus dimension must be >= 2, got {d}")
        n = coeffs.shape[0]
        if any(s != n for s in coeffs.shape):
            raise ResolutionError(f"grid must be square, got shape {coeffs.shape}")
        if n < 4 or (n & (n - 1)) != 0:
            raise ResolutionError(f"resolution must be a power of two >= 4, got {n}")
        if check:
            reflected = _conjugate_reflection(coeffs)
            scale = max(1.0, float(np.abs(coeffs).max()))
            worst = float(np.abs(coeffs - reflected).max())
            if worst > 1e-10 * scale:
                raise HermitianSymmetryError(
                    f"coefficients are not Hermitian-symmetric "
                    f"(max asymmetry {worst:.3e}, scale {scale:.3e})"
                )
            # Exact enforcement: the average of an array with its reflected
            # conjugate is Hermitian to the last bit.
            coeffs = 0.5 * (coeffs + reflected)
        coeffs = np.where(_nyquist_mask(d, n), 0.0, coeffs)
        coeffs.setflags(write=False)
        self.d = d
        self.resolution = n
        self.coeffs = coeffs
        self._values = _values
        self._padded = None

    # ------------------------------------------------------------------
    # constructors

    @classmethod
    def from_values(cls, values: np.ndarray) -> "TorusFunction":
        """Analyze real collocation values on the uniform N^d grid."""
        values = np.asarray(values, dtype=float)
        n = values.shape[0]
        if values.ndim < 2 or any(s != n for s in values.shape):
            raise ResolutionError(f"grid must be square, got shape {values.shape}")
        if n < 4 or (n & (n - 1)) != 0:
            raise ResolutionError(f"resolution must be a power of two >= 4, got {n}")
        half = np.fft.rfftn(values) / values.size
        coeffs = _band_from_half(half, n, n)
        coeffs = 0.5 * (coeffs + _conjugate_reflection(coeffs))
        return cls(coeffs, check=False)

    @classmethod
    def zero(cls, d: int, n: int) -> "TorusFunction":
        return cls(np.zeros((n,) * d, dtype=np.complex128), check=False)

    @classmethod
    def from_modes(cls, d: int, n: int, modes: dict) -> "TorusFunction":
        """Build from a {k-tuple: complex amplitude} map (must be Hermitian)."""
        coeffs = np.zeros((n,) * d, dtype=np.complex128)
        for k, amplitude in modes.items():
            k = tuple(int(x) for x in k)
            if len(k) != d:
                raise ResolutionError(f"mode index {k} has wrong dimension (d={d})")
            if any(not (-n // 2 <= ki < n // 2) for ki in k):
                raise ResolutionError(f"mode index {k} outside band for N={n}")
            coeffs[tuple(ki % n for ki in k)] = amplitude
        return cls(coeffs, check=True)

    # ------------------------------------------------------------------
    # views

    def values(self) -> np.ndarray:
        """Real values on the collocation grid sigma_j = j/N (cached).

        Coefficients are exactly Hermitian, so the non-negative last-axis
        half determines the rest and the synthesis runs as an irfftn.
        """
        if self._values is None:
            n = self.resolution
            half = self.coeffs[..., : n // 2 + 1]
            values = np.fft.irfftn(
                half, s=(n,) * self.d, axes=tuple(range(self.d))
            ) * float(self.coeffs.size)
            values.setflags(write=False)
            self._values = values
        return self._values

    def coeff(self, k: Iterable[int]) -> complex:
        """Coefficient at lattice index k."""
        k = tuple(int(x) for x in k)
        n = self.resolution
        if any(not (-n // 2 <= ki < n // 2) for ki in k):
            return 0.0 + 0.0j
        return complex(self.coeffs[tuple(ki % n for ki in k)])

    def mean(self) -> float:
        """The k = 0 coefficient, equal to the torus average."""
        return float(self.coeffs[(0,) * self.d].real)

    # ------------------------------------------------------------------
    # operators

    def _like(self, coeffs, values=None) -> "TorusFunction":
        return TorusFunction(coeffs, check=False, _values=values)

    def shift(self, t) -> "TorusFunction":
        """Compose with the translation sigma -> sigma + t (exact in-band)."""
        phase = _translation_symbol(_float_key(t), self.d, self.resolution)
        c = self.coeffs * phase
        return self._like(0.5 * (c + _conjugate_reflection(c)))

    def dalpha(self, alpha) -> "TorusFunction":
        """Directional derivative (alpha . grad); output has exact zero mean."""
        factor = _derivative_symbol(_float_key(alpha), self.d, self.resolution)
        c = self.coeffs * factor
        return self._like(0.5 * (c + _conjugate_reflection(c)))

    def second_difference(self, shift_vector) -> "TorusFunction":
        """f(.+t) + f(.-t) - 2 f, via the divisor 2(cos(2 pi k.t) - 1)."""
        divisor = _second_difference_symbol(
            _float_key(shift_vector), self.d, self.resolution
        )
        return self._like(self.coeffs * divisor)

    def multiply(self, other: "TorusFunction") -> "TorusFunction":
        """De-aliased pointwise product (pad to 3N/2 per axis, truncate back).

        3N/2 is exact here, not an approximation: inputs have per-axis
        support <= N/2 - 1 (Nyquist rows are zeroed on construction), so
        every aliased image of the product lands outside the retained band.
        Both factors are real on the grid, so the padded transforms run in
        half-spectrum form and the big grids stay real.
        """
        self._check_compatible(other)
        n = self.resolution
        m = (3 * n) // 2
        big_product = np.fft.rfftn(
            self._padded_values() * other._padded_values()
        ) * float(m**self.d)
        c = _band_from_half(big_product, n, m)
        return self._like(0.5 * (c + _conjugate_reflection(c)))

    def _padded_values(self) -> np.ndarray:
        """Values on the 3N/2 dealiasing grid (cached; shared across products)."""
        if self._padded is None:
            n = self.resolution
            m = (3 * n) // 2
            padded = np.fft.irfftn(
                _pad_half(self.coeffs), s=(m,) * self.d, axes=tuple(range(self.d))
            )
            padded.setflags(write=False)
            self._padded = padded
        return self._padded

    def reciprocal(self) -> "TorusFunction":
        """Pointwise 1/f analyzed on the N-grid; f must be bounded away from 0."""
        vals = self.values()
        if float(np.abs(vals).min()) < 1e-14:
            raise ZeroDivisionError("reciprocal of a function that vanishes on the grid")
        return TorusFunction.from_values(1.0 / vals)

    def with_zero_mean(self) -> "TorusFunction":
        """Copy with the k = 0 coefficient set to exactly zero."""
        c = np.array(self.coeffs)
        c[(0,) * self.d] = 0.0
        return self._like(c)

    def filtered(self, floor: float, relative: bool = True) -> "TorusFunction":
        """Copy with coefficients below a floor zeroed exactly.

        With relative=True the floor is floor * max|c|, otherwise it is an
        absolute level.  Coefficients at the round-off floor carry no
        information but are amplified without bound when divided by
        near-resonant divisors; zeroing them makes the floor explicit and
        keeps those divisions exempt under the zero-numerator rule.
        """
        threshold = floor
        if relative:
            scale = float(np.abs(self.coeffs).max())
            if scale == 0.0:
                return self
            threshold = floor * scale
        c = np.where(np.abs(self.coeffs) < threshold, 0.0, self.coeffs)
        return self._like(c)

    def __add__(self, other):
        if isinstance(other, TorusFunction):
            self._check_compatible(other)
            return self._like(self.coeffs + other.coeffs)
        c = np.array(self.coeffs)
        c[(0,) * self.d] += float(other)
        return self._like(c)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return self._like(-self.coeffs)

    def __mul__(self, other):
        if isinstance(other, TorusFunction):
            return self.multiply(other)
        return self._like(self.coeffs * float(other))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self._like(self.coeffs / float(scalar))

    def _check_compatible(self, other: "TorusFunction"):
        if self.d != other.d or self.resolution != other.resolution:
            raise ResolutionError(
                f"incompatible grids: (d={self.d}, N={self.resolution}) vs "
                f"(d={other.d}, N={other.resolution})"
            )

    # ------------------------------------------------------------------
    # norms and diagnostics

    def sup_norm(self) -> float:
        return float(np.abs(self.values()).max())

    def sobolev(self, r: float) -> float:
        """Sobolev norm: sqrt(sum |c_k|^2 (1 + |k|^2)^r) with |k| the 1-norm."""
        weight = (1.0 + lattice_size_1norm(self.d, self.resolution).astype(float) ** 2) ** r
        return float(np.sqrt(np.sum(np.abs(self.coeffs) ** 2 * weight)))

    def decay_rate(self) -> Optional[float]:
        """Fitted exponential decay rate of shell maxima of |c_k|.

        Fits log(max_{|k|=s} |c_k|) against the shell size s by least squares
        over shells whose maximum exceeds the round-off floor and returns
        -slope/(2 pi).  Returns None when fewer than 3 shells qualify.
        """
        sizes = lattice_size_1norm(self.d, self.resolution)
        magnitudes = np.abs(self.coeffs)
        shell_max = np.zeros(int(sizes.max()) + 1)
        np.maximum.at(shell_max, sizes.ravel(), magnitudes.ravel())
        usable = shell_max > DECAY_FLOOR
        if int(usable.sum()) < 3:
            return None
        s = np.nonzero(usable)[0].astype(float)
        slope = np.polyfit(s, np.log(shell_max[usable]), 1)[0]
        return float(-slope / (2.0 * np.pi))

    def norms(self, r_list: Iterable[float]) -> "NormReport":
        return NormReport(
            sup_norm=self.sup_norm(),
            sobolev={float(r): self.sobolev(r) for r in r_list},
            decay_rate=self.decay_rate(),
        )

    # ------------------------------------------------------------------
    # off-grid evaluation (diagnostics; direct mode sum, not interpolation)

    def eval_at(self, points: np.ndarray):
        """Evaluate the Fourier series at arbitrary points, shape (..., d)."""
        points = np.asarray(points, dtype=float)
        single = points.ndim == 1
        flat_k = np.stack([g.ravel() for g in lattice(self.d, self.resolution)], axis=1)
        flat_c = self.coeffs.ravel()
        live = flat_c != 0
        phases = points.reshape(-1, self.d) @ flat_k[live].T.astype(float)
        out = (np.exp(2j * np.pi * phases) @ flat_c[live]).real
        if single:
            return float(out[0])
        return out.reshape(points.shape[:-1])

    def __repr__(self):
        return f"TorusFunction(d={self.d}, N={self.resolution}, sup={self.sup_norm():.3e})"


@dataclass
class NormReport:
    """Size diagnostics for a torus function."""

    sup_norm: float
    sobolev: dict = field(default_factory=dict)
    decay_rate: Optional[float] = None

    @property
    def non_analytic(self) -> bool:
        """True when no positive exponential decay could be fitted."""
        return self.decay_rate is None or self.decay_rate <= 0.0


# ----------------------------------------------------------------------
# free-function aliases of the transform pair

def analyze(values: np.ndarray) -> TorusFunction:
    """Collocation values -> coefficients (inverse of :func:`synthesize`)."""
    return TorusFunction.from_values(values)


def synthesize(f: TorusFunction) -> np.ndarray:
    """Coefficients -> collocation values on the N^d grid."""
    return f.values()


def _band_freqs(n: int) -> np.ndarray:
    """Frequencies kept on an N-grid with Nyquist rows zeroed."""
    half = n // 2
    return np.r_[0:half, -(half - 1):0]


def _pad_half(c: np.ndarray) -> np.ndarray:
    """Zero-pad FFT-layout coefficients into an rfftn half-spectrum at 3N/2.

    Only frequencies 0..N/2-1 along the last axis are stored; the negative
    ones follow from Hermitian symmetry inside irfftn.  Nyquist rows are
    exactly zero, so skipping them loses nothing.
    """
    n = c.shape[0]
    d = c.ndim
    m = (3 * n) // 2
    half = n // 2
    freqs = _band_freqs(n)
    cols = np.arange(half)
    big = np.zeros((m,) * (d - 1) + (m // 2 + 1,), dtype=np.complex128)
    big[np.ix_(*([freqs % m] * (d - 1) + [cols]))] = c[
        np.ix_(*([freqs % n] * (d - 1) + [cols]))
    ]
    return big


def _band_from_half(half_spec: np.ndarray, n: int, m: int) -> np.ndarray:
    """N-band FFT-layout coefficients from an rfftn half-spectrum on an m-grid.

    Coefficients with a negative last-axis frequency are reconstructed as
    Hermitian partners: c(k1..kd) = conj(c(-k1..-kd)).  With m = n this is
    the analysis step of from_values, with m = 3n/2 the truncation step of
    the de-aliased product.
    """
    d = half_spec.ndim
    half = n // 2
    freqs = _band_freqs(n)
    pos = np.arange(half)
    neg = np.arange(1, half)
    c = np.zeros((n,) * d, dtype=np.complex128)
    target = [freqs % n] * (d - 1)
    c[np.ix_(*(target + [pos]))] = half_spec[
        np.ix_(*([freqs % m] * (d - 1) + [pos]))
    ]
    c[np.ix_(*(target + [n - neg]))] = np.conj(
        half_spec[np.ix_(*([(-freqs) % m] * (d - 1) + [neg]))]
    )
    return c


# ----------------------------------------------------------------------
# coefficient dump format: "k1 ... kd re im", lexicographic in k

def dump_coeffs(f: TorusFunction, path, header_lines: Iterable[str] = ()) -> None:
    """Write coefficients as plain text, one lattice index per line."""
    n = f.resolution
    shifted = np.fft.fftshift(f.coeffs)
    freqs = np.arange(-n // 2, n // 2)
    with open(path, "w") as handle:
        for line in header_lines:
            handle.write(f"# {line}\n")
        for idx in np.ndindex(*shifted.shape):
            k = " ".join(str(freqs[i]) for i in idx)
            value = shifted[idx]
            handle.write(f"{k} {value.real:.17g} {value.imag:.17g}\n")


def load_coeffs(path) -> TorusFunction:
    """Read a coefficient dump produced by :func:`dump_coeffs`."""
    rows = []
    with open(path) as handle:
        for line in handle:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            rows.append(line.split())
    if not rows:
        raise ResolutionError("empty coefficient file")
    d = len(rows[0]) - 2
    ks = np.array([[int(x) for x in row[:d]] for row in rows])
    n = -2 * int(ks.min())
    if len(rows) != n**d:
        raise ResolutionError(
            f"coefficient file has {len(rows)} records, expected {n**d} for N={n}, d={d}"
        )
    coeffs = np.zeros((n,) * d, dtype=np.complex128)
    for row, k in zip(rows, ks):
        coeffs[tuple(int(ki) % n for ki in k)] = float(row[d]) + 1j * float(row[d + 1])
    return TorusFunction(coeffs, check=True)
