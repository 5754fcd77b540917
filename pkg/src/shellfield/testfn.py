"""Test functions on 1+1, 2+1 and 3+1 dimensional Minkowski space.

Conventions used throughout the package:

* coordinates are ``x = (t, x1, ..., x_{d-1})``, natural units ``c = 1``;
* metric signature ``(+, -, ..., -)``, so ``k.x = k0 t - kvec . xvec``;
* Fourier transform ``f~(k) = int f(x) exp(i k.x) d^d x``.

Two families are provided.  :class:`GaussianPacketSum` is a finite sum of
Gaussian wave packets with general covariance; it has a closed-form
spectrum and is closed under the full Poincare group.  :class:`GridBump` is
a uniformly sampled function that vanishes on the boundary of its support
box, so it is genuinely compactly supported.

Either kind may carry a *spectral mask* ``theta(n.k)`` for a timelike unit
vector ``n``.  Positive-frequency (analytic) test functions are those with
``n = (1, 0, ..., 0)``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.special import wofz

__all__ = [
    "DimensionError",
    "ResolutionError",
    "PacketTerm",
    "GaussianPacketSum",
    "GridBump",
    "TestFunction",
    "ClosedFormSpectrum",
    "GridSpectrum",
    "FourierRep",
    "packet",
    "bump",
    "evaluate",
    "fourier",
    "conjugate",
    "translate",
    "boost",
    "parity_reverse",
    "time_reverse",
    "positive_frequency_projection",
    "scale",
    "add",
    "real_part",
    "imag_part",
    "is_real",
    "minkowski",
    "metric",
    "boost_matrix",
    "to_dict",
    "from_dict",
    "dumps",
    "loads",
]

DIMENSIONS = (2, 3, 4)
MIN_GRID_NODES = 17
MIN_ZERO_PADDING = 4


class DimensionError(ValueError):
    pass


class ResolutionError(ValueError):
    pass


def metric(d: int) -> np.ndarray:
    return np.diag([1.0] + [-1.0] * (d - 1))


def minkowski(k: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Minkowski product over the last axis, broadcasting."""
    k = np.asarray(k)
    x = np.asarray(x)
    return k[..., 0] * x[..., 0] - np.sum(k[..., 1:] * x[..., 1:], axis=-1)


def boost_matrix(d: int, rapidity: float, axis: int) -> np.ndarray:
    if not 1 <= axis < d:
        raise IndexError(f"boost axis {axis} out of range for d={d}")
    lam = np.eye(d)
    ch, sh = np.cosh(rapidity), np.sinh(rapidity)
    lam[0, 0] = lam[axis, axis] = ch
    lam[0, axis] = lam[axis, 0] = sh
    return lam


def _check_dim(d: int) -> int:
    if d not in DIMENSIONS:
        raise DimensionError(f"spacetime dimension must be one of {DIMENSIONS}, got {d}")
    return d


def _vec(v: Sequence[float], d: int, what: str) -> np.ndarray:
    arr = np.asarray(v, dtype=float).reshape(-1)
    if arr.shape != (d,):
        raise DimensionError(f"{what} has length {arr.size}, expected {d}")
    return arr


def _canon(arr: np.ndarray) -> bytes:
    # +0.0 folds -0.0 into 0.0 so that equal functions hash equally
    a = np.ascontiguousarray(np.asarray(arr) + 0.0)
    return a.tobytes()


def _half_erfc_factor(log_f: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Return ``exp(log_f) * erfc(z) / 2`` without overflow.

    Uses ``erfc(z) = exp(-z^2) w(iz)`` on the half plane where the Faddeeva
    function is bounded and the reflection ``erfc(z) = 2 - erfc(-z)``
    elsewhere.
    """
    log_f = np.asarray(log_f, dtype=complex)
    z = np.asarray(z, dtype=complex)
    out = np.empty(np.broadcast(log_f, z).shape, dtype=complex)
    log_f, z = np.broadcast_arrays(log_f, z)
    upper = z.real >= 0
    zu = z[upper]
    out[upper] = 0.5 * np.exp(log_f[upper] - zu * zu) * wofz(1j * zu)
    zl = z[~upper]
    lf = log_f[~upper]
    out[~upper] = np.exp(lf) - 0.5 * np.exp(lf - zl * zl) * wofz(-1j * zl)
    return out


# ---------------------------------------------------------------------------
# Gaussian packet sums


@dataclass(frozen=True, eq=False)
class PacketTerm:
    """``A exp(-(x-c)^T S^{-1} (x-c)/2) exp(-i kc.x)``, optionally masked.

    With this sign the spectrum of the term peaks at ``k = carrier``.
    ``mask`` is ``None`` or a timelike unit vector ``n``; a masked term has
    spectrum ``theta(n.k)`` times the unmasked one.
    """

    amplitude: complex
    center: np.ndarray
    covariance: np.ndarray
    carrier: np.ndarray
    mask: np.ndarray | None = None

    @property
    def dimension(self) -> int:
        return self.center.size

    @cached_property
    def precision(self) -> np.ndarray:
        return np.linalg.inv(self.covariance)

    @cached_property
    def _logdet(self) -> float:
        return float(np.linalg.slogdet(self.covariance)[1])

    def log_value(self, x: np.ndarray) -> np.ndarray:
        y = x - self.center
        quad = np.einsum("...i,ij,...j->...", y, self.precision, y)
        return np.log(complex(self.amplitude)) - 0.5 * quad - 1j * minkowski(self.carrier, x)

    def value(self, x: np.ndarray) -> np.ndarray:
        if self.amplitude == 0:
            return np.zeros(x.shape[:-1], dtype=complex)
        log_f = self.log_value(x)
        if self.mask is None:
            return np.exp(log_f)
        # theta(n.k) projection: the masked fraction of the Gaussian integral
        # is erfc(-mean/(sqrt2 sd)) / 2 with a complex mean
        n = self.mask
        mean = minkowski(n, self.carrier) + 1j * ((self.center - x) @ (self.precision @ n))
        sd = np.sqrt(n @ self.precision @ n)
        return _half_erfc_factor(log_f, -mean / (np.sqrt(2.0) * sd))

    def spectrum(self, k: np.ndarray) -> np.ndarray:
        d = self.dimension
        q = k - self.carrier
        jq = q * metric(d).diagonal()
        quad = np.einsum("...i,ij,...j->...", jq, self.covariance, jq)
        log_norm = 0.5 * d * np.log(2 * np.pi) + 0.5 * self._logdet
        out = self.amplitude * np.exp(log_norm - 0.5 * quad + 1j * minkowski(q, self.center))
        if self.mask is not None:
            out = np.where(minkowski(self.mask, k) > 0, out, 0.0)
        return out

    def peak(self) -> float:
        d = self.dimension
        return abs(self.amplitude) * float(np.exp(0.5 * d * np.log(2 * np.pi) + 0.5 * self._logdet))

    def spectral_sd(self) -> np.ndarray:
        """Per-axis standard deviation of the spectral Gaussian."""
        j = metric(self.dimension)
        return np.sqrt(np.diag(j @ self.precision @ j))

    def mapped(self, lin: np.ndarray, shift: np.ndarray | None = None) -> "PacketTerm":
        """Image under ``x -> lin x + shift`` for a metric-preserving ``lin``."""
        center = lin @ self.center
        amp = complex(self.amplitude)
        if shift is not None:
            center = center + shift
            amp *= np.exp(1j * minkowski(lin @ self.carrier, shift))
        mask = None if self.mask is None else lin @ self.mask
        return PacketTerm(amp, center, lin @ self.covariance @ lin.T, lin @ self.carrier, mask)

    def key(self) -> bytes:
        parts = [
            _canon(np.array([self.amplitude], dtype=complex)),
            _canon(self.center),
            _canon(self.covariance),
            _canon(self.carrier),
            b"-" if self.mask is None else _canon(self.mask),
        ]
        return b"|".join(parts)


@dataclass(frozen=True, eq=False)
class GaussianPacketSum:
    terms: tuple[PacketTerm, ...]
    name: str | None = None

    kind = "gaussian_packet_sum"

    def __post_init__(self):
        if not self.terms:
            raise ValueError("a packet sum needs at least one term")
        d = _check_dim(self.terms[0].dimension)
        for term in self.terms:
            if term.dimension != d:
                raise DimensionError("all packet terms must share one dimension")
            if term.covariance.shape != (d, d) or term.carrier.shape != (d,):
                raise DimensionError("packet term shapes do not match its dimension")
            if np.any(np.linalg.eigvalsh(term.covariance) <= 0):
                raise ValueError("packet widths must be strictly positive")

    @property
    def dimension(self) -> int:
        return self.terms[0].dimension

    @property
    def approximate(self) -> bool:
        return False

    @cached_property
    def fingerprint(self) -> str:
        h = hashlib.sha1(b"gps")
        for term in self.terms:
            h.update(term.key())
        return h.hexdigest()

    @property
    def label(self) -> str:
        return self.name or "f" + self.fingerprint[:6]

    def __eq__(self, other):
        return isinstance(other, GaussianPacketSum) and other.fingerprint == self.fingerprint

    @cached_property
    def _hash(self) -> int:
        return hash(self.fingerprint)

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"GaussianPacketSum({self.label!r}, d={self.dimension}, terms={len(self.terms)})"

    def renamed(self, name: str | None) -> "GaussianPacketSum":
        return GaussianPacketSum(self.terms, name)

    def spectral_extent(self) -> np.ndarray:
        """Per spatial axis, the |k_i| beyond which the spectrum is negligible."""
        ext = np.zeros(self.dimension - 1)
        for t in self.terms:
            ext = np.maximum(ext, np.abs(t.carrier[1:]) + 8.5 * t.spectral_sd()[1:])
        return ext

    def spectral_scale(self) -> float:
        return max(t.peak() for t in self.terms)


def packet(
    center: Sequence[float],
    widths: Sequence[float] | None = None,
    carrier: Sequence[float] | None = None,
    amplitude: complex = 1.0,
    covariance: Sequence[Sequence[float]] | None = None,
    name: str | None = None,
) -> GaussianPacketSum:
    """Single-term Gaussian packet with per-axis widths (or a full covariance)."""
    c = np.asarray(center, dtype=float)
    d = _check_dim(c.size)
    if covariance is None:
        w = _vec(widths if widths is not None else np.ones(d), d, "widths")
        if np.any(w <= 0):
            raise ValueError("packet widths must be strictly positive")
        cov = np.diag(w**2)
    else:
        cov = np.asarray(covariance, dtype=float)
    kc = _vec(carrier if carrier is not None else np.zeros(d), d, "carrier")
    return GaussianPacketSum((PacketTerm(complex(amplitude), c, cov, kc),), name)


# ---------------------------------------------------------------------------
# Grid bumps


@dataclass(frozen=True, eq=False)
class GridBump:
    """Uniform samples of a compactly supported function on a box.

    ``values`` has one axis per spacetime coordinate; node ``i`` on axis
    ``mu`` sits at ``lower[mu] + i * spacing[mu]``, the last node at
    ``upper[mu]``.  Samples on the boundary of the box are zero.
    """

    lower: np.ndarray
    upper: np.ndarray
    values: np.ndarray
    mask: np.ndarray | None = None
    approximate: bool = False
    name: str | None = None

    kind = "grid_bump"

    def __post_init__(self):
        d = _check_dim(self.values.ndim)
        if self.lower.shape != (d,) or self.upper.shape != (d,):
            raise DimensionError("support box does not match the sample grid dimension")
        if np.any(self.upper <= self.lower):
            raise ValueError("support box must have positive extent on every axis")
        if min(self.values.shape) < 2:
            raise ResolutionError("grid needs at least two nodes per axis")
        for ax in range(d):
            edge = np.take(self.values, [0, -1], axis=ax)
            if np.any(edge != 0):
                raise ValueError("GridBump samples must vanish on the support boundary")

    @property
    def dimension(self) -> int:
        return self.values.ndim

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def spacing(self) -> np.ndarray:
        return (self.upper - self.lower) / (np.array(self.shape) - 1)

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, n) for lo, hi, n in zip(self.lower, self.upper, self.shape)]

    @cached_property
    def fingerprint(self) -> str:
        h = hashlib.sha1(b"grid")
        for arr in (self.lower, self.upper, self.values.astype(complex)):
            h.update(_canon(arr))
        h.update(repr(self.shape).encode())
        h.update(b"-" if self.mask is None else _canon(self.mask))
        return h.hexdigest()

    @property
    def label(self) -> str:
        return self.name or "b" + self.fingerprint[:6]

    def __eq__(self, other):
        return isinstance(other, GridBump) and other.fingerprint == self.fingerprint

    @cached_property
    def _hash(self) -> int:
        return hash(self.fingerprint)

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"GridBump({self.label!r}, d={self.dimension}, shape={self.shape})"

    def renamed(self, name: str | None) -> "GridBump":
        return GridBump(self.lower, self.upper, self.values, self.mask, self.approximate, name)

    def check_resolution(self) -> None:
        if min(self.shape) < MIN_GRID_NODES:
            raise ResolutionError(
                f"grid resolution {self.shape} below the minimum of {MIN_GRID_NODES} nodes per axis"
            )

    def nyquist(self) -> np.ndarray:
        return np.pi / self.spacing

    def spectral_extent(self) -> np.ndarray:
        # half the Nyquist band: beyond it the sampled spectrum is aliased
        return 0.5 * self.nyquist()[1:]

    def spectral_scale(self) -> float:
        return float(np.sum(np.abs(self.values)) * np.prod(self.spacing))

    def support_points(self) -> np.ndarray:
        idx = np.argwhere(self.values != 0)
        return self.lower + idx * self.spacing

    def _dtft(self, k: np.ndarray) -> np.ndarray:
        # boundary samples are zero, so the trapezoid rule is a plain sum
        k = np.asarray(k, dtype=float)
        flat = k.reshape(-1, self.dimension)
        signs = metric(self.dimension).diagonal()
        acc = self.values.astype(complex)
        axes = self.axes()
        # contract the last axis, then fold the remaining ones point-wise
        e = np.exp(1j * signs[-1] * np.outer(flat[:, -1], axes[-1]))
        acc = acc @ e.T
        for ax in range(self.dimension - 2, -1, -1):
            e = np.exp(1j * signs[ax] * np.outer(flat[:, ax], axes[ax]))
            acc = np.einsum("...jm,mj->...m", acc, e)
        return (acc * np.prod(self.spacing)).reshape(k.shape[:-1])

    def spectrum(self, k: np.ndarray) -> np.ndarray:
        out = self._dtft(k)
        if self.mask is not None:
            out = np.where(minkowski(self.mask, np.asarray(k)) > 0, out, 0.0)
        return out


TestFunction = GaussianPacketSum | GridBump


def bump(
    center: Sequence[float],
    radius: float = 1.0,
    nodes: int = 129,
    amplitude: complex = 1.0,
    name: str | None = None,
) -> GridBump:
    """Standard mollifier ``exp(-1/(1 - |x-c|^2/r^2))`` sampled on its bounding box.

    ``|.|`` is the Euclidean norm over all spacetime axes.  Odd ``nodes``
    keeps the center on the grid.
    """
    c = np.asarray(center, dtype=float)
    d = _check_dim(c.size)
    if radius <= 0:
        raise ValueError("bump radius must be positive")
    lower, upper = c - radius, c + radius
    axes = [np.linspace(lo, hi, nodes) for lo, hi in zip(lower, upper)]
    mesh = np.meshgrid(*axes, indexing="ij")
    r2 = sum((m - ci) ** 2 for m, ci in zip(mesh, c)) / radius**2
    vals = np.zeros(r2.shape)
    inside = r2 < 1
    vals[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    for ax in range(d):
        sl = [slice(None)] * d
        sl[ax] = [0, -1]
        vals[tuple(sl)] = 0.0
    values = vals * amplitude if amplitude != 1.0 else vals
    return GridBump(lower, upper, np.asarray(values), name=name)


# ---------------------------------------------------------------------------
# Fourier representations


@dataclass(frozen=True)
class ClosedFormSpectrum:
    function: GaussianPacketSum

    def __call__(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=float)
        if k.shape[-1] != self.function.dimension:
            raise DimensionError("wave vector dimension mismatch")
        out = np.zeros(k.shape[:-1], dtype=complex)
        for term in self.function.terms:
            out = out + term.spectrum(k)
        return out


@dataclass(frozen=True)
class GridSpectrum:
    """Spectrum of a :class:`GridBump`.

    ``lattice`` holds the zero-padded FFT on the frequency lattice
    ``frequencies`` (per axis, in the package sign convention).  Calling the
    object evaluates the same trigonometric sum exactly at arbitrary wave
    vectors, which is what the shell quadrature uses.
    """

    function: GridBump
    padding: int
    frequencies: tuple[np.ndarray, ...] = field(repr=False)
    lattice: np.ndarray = field(repr=False)

    def __call__(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=float)
        if k.shape[-1] != self.function.dimension:
            raise DimensionError("wave vector dimension mismatch")
        return self.function.spectrum(k)


FourierRep = ClosedFormSpectrum | GridSpectrum


def _grid_lattice(f: GridBump, padding: int) -> tuple[tuple[np.ndarray, ...], np.ndarray]:
    d = f.dimension
    signs = metric(d).diagonal()
    shape = tuple(n * padding for n in f.shape)
    vals = f.values.astype(complex)
    # the package convention is exp(+i k0 t) in time and exp(-i k x) in space;
    # ifft supplies the + sign, fft the - sign
    spec = vals
    freqs = []
    for ax in range(d):
        n = shape[ax]
        h = f.spacing[ax]
        if signs[ax] > 0:
            spec = np.fft.ifft(spec, n=n, axis=ax) * n
        else:
            spec = np.fft.fft(spec, n=n, axis=ax)
        freqs.append(2 * np.pi * np.fft.fftfreq(n, d=h))
    # phase of the grid origin
    mesh = np.meshgrid(*freqs, indexing="ij")
    phase = sum(s * m * lo for s, m, lo in zip(signs, mesh, f.lower))
    spec = spec * np.exp(1j * phase) * np.prod(f.spacing)
    if f.mask is not None:
        kk = np.stack(mesh, axis=-1)
        spec = np.where(minkowski(f.mask, kk) > 0, spec, 0.0)
    return tuple(freqs), spec


def fourier(f: TestFunction, padding: int = MIN_ZERO_PADDING) -> FourierRep:
    if isinstance(f, GaussianPacketSum):
        return ClosedFormSpectrum(f)
    f.check_resolution()
    if padding < MIN_ZERO_PADDING:
        raise ValueError(f"zero-padding factor must be at least {MIN_ZERO_PADDING}")
    freqs, lattice = _grid_lattice(f, padding)
    return GridSpectrum(f, padding, freqs, lattice)


# ---------------------------------------------------------------------------
# Position space


def _grid_masked_values(f: GridBump, padding: int = MIN_ZERO_PADDING):
    """Analytic-signal samples of a masked grid bump on a time-extended grid."""
    e0 = np.zeros(f.dimension)
    e0[0] = 1.0
    if np.allclose(f.mask, e0):
        sign = 1
    elif np.allclose(f.mask, -e0):
        sign = -1
    else:
        raise NotImplementedError("grid bumps support only the k0 > 0 or k0 < 0 masks")
    f.check_resolution()
    n0 = f.shape[0]
    n = n0 * padding
    pad_before = (n - n0) // 2
    vals = np.zeros((n,) + f.shape[1:], dtype=complex)
    vals[pad_before : pad_before + n0] = f.values
    # along t the package transform carries exp(+i k0 t): k0 is the ifft frequency
    spec = np.fft.ifft(vals, axis=0)
    k0 = np.fft.fftfreq(n)
    keep = (k0 * sign > 0).astype(float)
    keep[0] = 0.5  # the k0 = 0 bin is split between the two half-lines
    if n % 2 == 0:
        keep[n // 2] = 0.5
    proj = np.fft.fft(spec * keep.reshape((-1,) + (1,) * (f.dimension - 1)), axis=0)
    h0 = f.spacing[0]
    t_axis = f.lower[0] + (np.arange(n) - pad_before) * h0
    return [t_axis] + f.axes()[1:], proj


def evaluate(f: TestFunction, x) -> np.ndarray | complex:
    """Value of ``f`` at one point or an array of points (last axis = coordinates)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != f.dimension:
        raise DimensionError(f"point has dimension {x.shape[-1]}, function has {f.dimension}")
    if isinstance(f, GaussianPacketSum):
        out = np.zeros(x.shape[:-1], dtype=complex)
        for term in f.terms:
            out = out + term.value(x)
    else:
        if f.mask is None:
            axes, vals = f.axes(), f.values
        else:
            axes, vals = _grid_masked_values(f)
        interp = RegularGridInterpolator(axes, vals, bounds_error=False, fill_value=0.0)
        out = np.asarray(interp(x.reshape(-1, f.dimension)), dtype=complex).reshape(x.shape[:-1])
    return out[()] if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Transformations


def _linear_map(f: TestFunction, lin: np.ndarray) -> TestFunction:
    """Image ``f(lin^{-1} x)`` for a metric-preserving diagonal/boost ``lin``."""
    if isinstance(f, GaussianPacketSum):
        return GaussianPacketSum(tuple(t.mapped(lin) for t in f.terms), f.name)
    raise TypeError("linear maps on grid bumps are handled per operation")


def conjugate(f: TestFunction) -> TestFunction:
    name = None if f.name is None else (f.name[:-1] if f.name.endswith("*") else f.name + "*")
    if isinstance(f, GaussianPacketSum):
        terms = tuple(
            PacketTerm(
                np.conj(complex(t.amplitude)),
                t.center,
                t.covariance,
                -t.carrier,
                None if t.mask is None else -t.mask,
            )
            for t in f.terms
        )
        return GaussianPacketSum(terms, name)
    mask = None if f.mask is None else -f.mask
    vals = np.conj(f.values) if np.iscomplexobj(f.values) else f.values
    return GridBump(f.lower, f.upper, vals, mask, f.approximate, name)


def translate(f: TestFunction, a) -> TestFunction:
    a = _vec(a, f.dimension, "translation")
    if isinstance(f, GaussianPacketSum):
        eye = np.eye(f.dimension)
        return GaussianPacketSum(tuple(t.mapped(eye, a) for t in f.terms), f.name)
    return GridBump(f.lower + a, f.upper + a, f.values, f.mask, f.approximate, f.name)


def _flip_axes(f: GridBump, axes: Sequence[int]) -> GridBump:
    lower, upper = f.lower.copy(), f.upper.copy()
    for ax in axes:
        lower[ax], upper[ax] = -f.upper[ax], -f.lower[ax]
    vals = np.flip(f.values, axis=tuple(axes))
    mask = None
    if f.mask is not None:
        mask = f.mask.copy()
        mask[list(axes)] *= -1
    return GridBump(lower, upper, np.ascontiguousarray(vals), mask, f.approximate, f.name)


def parity_reverse(f: TestFunction) -> TestFunction:
    d = f.dimension
    if isinstance(f, GaussianPacketSum):
        return _linear_map(f, np.diag([1.0] + [-1.0] * (d - 1)))
    return _flip_axes(f, list(range(1, d)))


def time_reverse(f: TestFunction) -> TestFunction:
    d = f.dimension
    if isinstance(f, GaussianPacketSum):
        return _linear_map(f, np.diag([-1.0] + [1.0] * (d - 1)))
    return _flip_axes(f, [0])


def boost(f: TestFunction, rapidity: float, axis: int = 1) -> TestFunction:
    """Proper orthochronous boost in the ``(t, axis)`` plane.

    Exact for packet sums.  Grid bumps are resampled (cubic interpolation)
    onto the bounding box of the boosted support and flagged approximate.
    """
    lam = boost_matrix(f.dimension, rapidity, axis)
    if rapidity == 0:
        return f
    if isinstance(f, GaussianPacketSum):
        return _linear_map(f, lam)
    if f.mask is not None:
        raise NotImplementedError("boosting a frequency-masked grid bump is not supported")
    corners = np.array(np.meshgrid(*zip(f.lower, f.upper), indexing="ij")).reshape(f.dimension, -1).T
    image = corners @ lam.T
    lower, upper = image.min(axis=0), image.max(axis=0)
    axes = [np.linspace(lo, hi, n) for lo, hi, n in zip(lower, upper, f.shape)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    src = pts @ np.linalg.inv(lam).T
    method = "cubic" if min(f.shape) >= 4 else "linear"
    interp = RegularGridInterpolator(f.axes(), f.values, method=method, bounds_error=False, fill_value=0.0)
    vals = interp(src.reshape(-1, f.dimension)).reshape(pts.shape[:-1])
    for ax in range(f.dimension):
        sl = [slice(None)] * f.dimension
        sl[ax] = [0, -1]
        vals[tuple(sl)] = 0.0
    return GridBump(lower, upper, vals, None, True, f.name)


def positive_frequency_projection(f: TestFunction) -> TestFunction:
    """Keep the ``k0 > 0`` half of the spectrum (the analytic test function)."""
    d = f.dimension
    e0 = np.zeros(d)
    e0[0] = 1.0

    def project(mask):
        if mask is None or np.allclose(mask, e0, atol=1e-15, rtol=0):
            return e0, 1.0
        if np.allclose(mask, -e0, atol=1e-15, rtol=0):
            return e0, 0.0
        raise NotImplementedError("cannot compose theta(k0) with a boosted spectral mask")

    if isinstance(f, GaussianPacketSum):
        terms = []
        for t in f.terms:
            mask, factor = project(t.mask)
            terms.append(PacketTerm(complex(t.amplitude) * factor, t.center, t.covariance, t.carrier, mask))
        return GaussianPacketSum(tuple(terms), f.name)
    f.check_resolution()
    mask, factor = project(f.mask)
    return GridBump(f.lower, f.upper, f.values * factor, mask, f.approximate, f.name)


def is_positive_frequency(f: TestFunction) -> bool:
    e0 = np.zeros(f.dimension)
    e0[0] = 1.0
    masks = [t.mask for t in f.terms] if isinstance(f, GaussianPacketSum) else [f.mask]
    return all(m is not None and np.allclose(m, e0) for m in masks)


# ---------------------------------------------------------------------------
# Linear structure


def scale(f: TestFunction, alpha: complex) -> TestFunction:
    if isinstance(f, GaussianPacketSum):
        terms = tuple(
            PacketTerm(complex(t.amplitude) * alpha, t.center, t.covariance, t.carrier, t.mask) for t in f.terms
        )
        return GaussianPacketSum(terms)
    return GridBump(f.lower, f.upper, f.values * alpha, f.mask, f.approximate)


def add(f: TestFunction, g: TestFunction) -> TestFunction:
    if f.dimension != g.dimension:
        raise DimensionError("cannot add test functions of different dimension")
    if isinstance(f, GaussianPacketSum) and isinstance(g, GaussianPacketSum):
        return GaussianPacketSum(f.terms + g.terms)
    if isinstance(f, GridBump) and isinstance(g, GridBump):
        same_grid = (
            f.shape == g.shape and np.array_equal(f.lower, g.lower) and np.array_equal(f.upper, g.upper)
        )
        same_mask = (f.mask is None and g.mask is None) or (
            f.mask is not None and g.mask is not None and np.array_equal(f.mask, g.mask)
        )
        if not (same_grid and same_mask):
            raise ValueError("grid bumps can only be added on a common grid with a common mask")
        return GridBump(f.lower, f.upper, f.values + g.values, f.mask, f.approximate or g.approximate)
    raise TypeError("cannot add a packet sum and a grid bump")


def real_part(f: TestFunction) -> TestFunction:
    return scale(add(f, conjugate(f)), 0.5)


def imag_part(f: TestFunction) -> TestFunction:
    return scale(add(f, scale(conjugate(f), -1.0)), -0.5j)


def is_real(f: TestFunction) -> bool:
    """True when ``f`` equals its conjugate as a representation."""
    if isinstance(f, GridBump):
        return f.mask is None and not np.any(np.imag(f.values))
    g = conjugate(f)
    keys = sorted(t.key() for t in f.terms)
    return keys == sorted(t.key() for t in g.terms)


# ---------------------------------------------------------------------------
# Serialization


def _c(z) -> list[float]:
    z = complex(z)
    return [z.real, z.imag]


def to_dict(f: TestFunction) -> dict[str, Any]:
    if isinstance(f, GaussianPacketSum):
        terms = [
            {
                "amplitude": _c(t.amplitude),
                "center": t.center.tolist(),
                "covariance": t.covariance.tolist(),
                "carrier": t.carrier.tolist(),
                "mask": None if t.mask is None else t.mask.tolist(),
            }
            for t in f.terms
        ]
        out = {"kind": f.kind, "dimension": f.dimension, "terms": terms, "flags": {}}
    else:
        vals = np.asarray(f.values, dtype=complex)
        out = {
            "kind": f.kind,
            "dimension": f.dimension,
            "grid": {
                "lower": f.lower.tolist(),
                "upper": f.upper.tolist(),
                "shape": list(f.shape),
                "real": vals.real.ravel().tolist(),
                "imag": vals.imag.ravel().tolist(),
            },
            "flags": {
                "mask": None if f.mask is None else f.mask.tolist(),
                "approximate": f.approximate,
            },
        }
    if f.name is not None:
        out["name"] = f.name
    return out


def from_dict(data: dict[str, Any]) -> TestFunction:
    """Inverse of :func:`to_dict`.

    Also accepts two recipe forms used in experiment configs:
    ``{"kind": "packet", "center", "widths", "carrier", "amplitude"}`` and
    ``{"kind": "bump", "center", "radius", "nodes", "amplitude"}``.
    """
    kind = data.get("kind")
    name = data.get("name")
    if kind == "packet":
        amp = data.get("amplitude", 1.0)
        amp = complex(*amp) if isinstance(amp, (list, tuple)) else complex(amp)
        return packet(data["center"], data.get("widths"), data.get("carrier"), amp, data.get("covariance"), name)
    if kind == "bump":
        amp = data.get("amplitude", 1.0)
        amp = complex(*amp) if isinstance(amp, (list, tuple)) else amp
        return bump(data["center"], data.get("radius", 1.0), data.get("nodes", 129), amp, name)
    if kind == "gaussian_packet_sum":
        d = data["dimension"]
        terms = []
        for t in data["terms"]:
            if "covariance" in t:
                cov = np.asarray(t["covariance"], dtype=float)
            else:
                cov = np.diag(np.asarray(t["widths"], dtype=float) ** 2)
            mask = t.get("mask")
            terms.append(
                PacketTerm(
                    complex(*t["amplitude"]),
                    _vec(t["center"], d, "center"),
                    cov,
                    _vec(t["carrier"], d, "carrier"),
                    None if mask is None else _vec(mask, d, "mask"),
                )
            )
        return GaussianPacketSum(tuple(terms), name)
    if kind == "grid_bump":
        d = data["dimension"]
        g = data["grid"]
        shape = tuple(g["shape"])
        vals = np.asarray(g["real"], dtype=float) + 1j * np.asarray(g.get("imag", 0.0), dtype=float)
        vals = vals.reshape(shape)
        if not np.any(vals.imag):
            vals = vals.real
        flags = data.get("flags", {})
        mask = flags.get("mask")
        return GridBump(
            _vec(g["lower"], d, "lower"),
            _vec(g["upper"], d, "upper"),
            vals,
            None if mask is None else _vec(mask, d, "mask"),
            bool(flags.get("approximate", False)),
            name,
        )
    raise ValueError(f"unknown test function kind {kind!r}")


def dumps(f: TestFunction, **kw) -> str:
    return json.dumps(to_dict(f), **kw)


def loads(text: str) -> TestFunction:
    return from_dict(json.loads(text))
