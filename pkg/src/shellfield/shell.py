"""Mass-shell pairings of test functions.

The Lorentz-invariant measure ``d^dk/(2pi)^d 2pi delta(k^2 - m^2)`` is
reduced to ``d^{d-1}k / ((2pi)^{d-1} 2 omega_k)`` on each sheet
``k0 = +-omega_k``.  The remaining integral over the spatial wave vector
is done with composite Gauss-Legendre (or trapezoid) panels on ``[-K, K]``
for d = 2.  Panels meet at ``k = 0``, so no node sits on the massless
singularity.  For d = 3 and 4 a spherical product rule is used instead:
the same radial panels on ``[0, K]`` times a trapezoid rule in the azimuth
(and Gauss-Legendre in ``cos theta`` for d = 4).  In those coordinates the
``1/omega`` factor is smooth even for ``m = 0``.

The node set is symmetric under ``k -> -k`` to the last bit, which makes
the classical commutator and the two-sheet identities hold to rounding
error rather than to quadrature error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import roots_legendre

from .testfn import (
    DIMENSIONS,
    DimensionError,
    GaussianPacketSum,
    TestFunction,
    conjugate,
    fourier,
    metric,
)

__all__ = [
    "QuadratureError",
    "KernelKind",
    "ShellConfig",
    "ShellNodes",
    "BivectorTestFunction",
    "shell_nodes",
    "on_shell_spectrum",
    "quantum_ip",
    "classical_ip",
    "pairing",
    "pairing_with_error",
    "em_ip",
    "em_integrand",
    "em_integrand_oracle",
    "commutator_kernel",
]


class QuadratureError(RuntimeError):
    """The shell quadrature cannot be trusted for these inputs."""


class KernelKind(str, Enum):
    QUANTUM = "quantum"
    CLASSICAL = "classical"
    EM_QUANTUM = "em_quantum"


@dataclass(frozen=True)
class ShellConfig:
    """Mass, scale and quadrature controls for the shell pairings.

    ``cutoff`` is the half-width ``K`` of the spatial wave-vector box; when
    ``None`` it is chosen from the spectra of the functions being paired.
    ``nodes`` is the Gauss-Legendre order per panel and ``panel_width`` the
    panel size in wave-number units.  Grid bumps use ``grid_cutoff`` (capped
    at half their Nyquist band).  The tail check fails when the squared
    spectrum on the box boundary exceeds ``tail_tolerance`` times the squared
    spectral peak.  ``angular_nodes`` is the polar order of the spherical
    rule used for d >= 3 (the azimuth gets twice as many); by default it
    grows with the cutoff times the spatial extent of the functions.
    """

    mass: float = 1.0
    hbar: float = 1.0
    dimension: int = 2
    cutoff: float | None = None
    nodes: int = 24
    panel_width: float = 2.0
    rule: str = "gauss-legendre"
    tail_tolerance: float = 1e-9
    grid_cutoff: float = 100.0
    angular_nodes: int | None = None

    def __post_init__(self):
        if not self.mass >= 0:
            raise ValueError("mass must be non-negative")
        if not self.hbar > 0:
            raise ValueError("hbar must be positive")
        if self.dimension not in DIMENSIONS:
            raise ValueError(f"dimension must be one of {DIMENSIONS}")
        if self.nodes < 16:
            raise ValueError("at least 16 quadrature nodes per panel are required")
        if self.rule not in ("gauss-legendre", "trapezoid"):
            raise ValueError(f"unknown quadrature rule {self.rule!r}")
        if self.cutoff is not None and not self.cutoff > 4 * self.mass:
            raise ValueError("cutoff must exceed 4 * mass")
        if not self.panel_width > 0:
            raise ValueError("panel_width must be positive")
        if self.angular_nodes is not None and (self.angular_nodes < 8 or self.angular_nodes % 2):
            raise ValueError("angular_nodes must be an even number >= 8")

    def with_(self, **changes) -> "ShellConfig":
        data = {f: getattr(self, f) for f in self.__dataclass_fields__}
        data.update(changes)
        return ShellConfig(**data)


@lru_cache(maxsize=64)
def _half_axis(cutoff: float, nodes: int, panel_width: float, rule: str) -> tuple[np.ndarray, np.ndarray]:
    panels = max(1, math.ceil(cutoff / panel_width - 1e-9))
    edges = np.linspace(0.0, cutoff, panels + 1)
    if rule == "gauss-legendre":
        x, w = roots_legendre(nodes)
    else:
        # open midpoint-style trapezoid keeps k = 0 off the node set
        x = (np.arange(nodes) + 0.5) / nodes * 2 - 1
        w = np.full(nodes, 2.0 / nodes)
    pts, wts = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        pts.append(0.5 * (b - a) * x + 0.5 * (a + b))
        wts.append(0.5 * (b - a) * w)
    pts = np.concatenate(pts)
    wts = np.concatenate(wts)
    pts.setflags(write=False)
    wts.setflags(write=False)
    return pts, wts


@dataclass(frozen=True)
class ShellNodes:
    """Spatial wave vectors, energies and measure weights on the shell."""

    kvec: np.ndarray = field(repr=False)
    omega: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    cutoff: float
    boundary: np.ndarray = field(repr=False)

    def points(self, sheet: int = 1) -> np.ndarray:
        return np.concatenate([sheet * self.omega[:, None], self.kvec], axis=1)

    def __len__(self):
        return self.omega.size


def _required_extent(funcs: Iterable[TestFunction], cfg: ShellConfig) -> float:
    ext = 4.0 * cfg.mass
    for f in funcs:
        if isinstance(f, GaussianPacketSum):
            ext = max(ext, float(np.max(f.spectral_extent())))
        else:
            ext = max(ext, min(cfg.grid_cutoff, float(np.max(f.spectral_extent()))))
    return ext


def _check_dims(funcs: Sequence[TestFunction], cfg: ShellConfig) -> None:
    for f in funcs:
        if f.dimension != cfg.dimension:
            raise DimensionError(f"test function has d={f.dimension}, config has d={cfg.dimension}")


def shell_nodes(cfg: ShellConfig, funcs: Sequence[TestFunction] = (), nodes: int | None = None) -> ShellNodes:
    """Quadrature nodes for the shell integral.

    With ``cfg.cutoff`` unset the box half-width is taken from the spectral
    extent of ``funcs``; with it set, packet inputs whose spectra reach past
    the box raise :class:`QuadratureError`.
    """
    _check_dims(funcs, cfg)
    need = _required_extent(funcs, cfg)
    if cfg.cutoff is None:
        cutoff = need
        # round up so that nearby function sets share one cached node table
        cutoff = math.ceil(cutoff / cfg.panel_width) * cfg.panel_width
    else:
        cutoff = cfg.cutoff
        packets = [f for f in funcs if isinstance(f, GaussianPacketSum)]
        if packets and cutoff < _required_extent(packets, cfg.with_(mass=0.0)):
            raise QuadratureError(
                f"cutoff {cutoff} is below the packet spectral extent "
                f"{_required_extent(packets, cfg.with_(mass=0.0)):.3g}"
            )
    half, hw = _half_axis(float(cutoff), nodes or cfg.nodes, cfg.panel_width, cfg.rule)
    n_sp = cfg.dimension - 1
    if n_sp == 1:
        kvec = np.concatenate([-half[::-1], half])[:, None]
        w = np.concatenate([hw[::-1], hw])
        edge = np.abs(kvec[:, 0]) >= half[-1]
    else:
        n_ang = cfg.angular_nodes or _auto_angular_nodes(funcs, float(cutoff))
        dirs, dw = _sphere_rule(n_sp, n_ang)
        kvec = (half[:, None, None] * dirs[None, :, :]).reshape(-1, n_sp)
        w = (hw[:, None] * half[:, None] ** (n_sp - 1) * dw[None, :]).ravel()
        edge = np.repeat(half >= half[-1], dirs.shape[0])
    omega = np.sqrt(cfg.mass**2 + np.sum(kvec**2, axis=1))
    weights = w / ((2 * np.pi) ** n_sp * 2 * omega)
    return ShellNodes(kvec, omega, weights, float(cutoff), edge)


def _spatial_radius(f: TestFunction) -> float:
    """Radius of a ball around the spatial origin holding the bulk of ``f``."""
    if isinstance(f, GaussianPacketSum):
        r = 0.0
        for t in f.terms:
            sd = math.sqrt(float(np.linalg.eigvalsh(t.covariance[1:, 1:]).max()))
            r = max(r, float(np.linalg.norm(t.center[1:])) + 4.0 * sd)
        return r
    corners = np.stack([f.lower[1:], f.upper[1:]])
    return float(np.max(np.linalg.norm(corners, axis=1)))


def _auto_angular_nodes(funcs: Sequence[TestFunction], cutoff: float) -> int:
    # the spectrum oscillates in angle at rate ~ |k| * (spatial radius)
    radius = max((_spatial_radius(f) for f in funcs), default=1.0)
    n = max(16, math.ceil(0.25 * cutoff * radius) + 8)
    return n + n % 2


@lru_cache(maxsize=32)
def _sphere_rule(n_sp: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Unit directions and weights on the sphere ``S^{n_sp - 1}``.

    Half of the directions are built explicitly and the rest are their exact
    negatives, so the rule is antipodally symmetric to the last bit.
    """
    n_phi = 2 * n
    if n_sp == 2:
        phi = (np.arange(n_phi // 2) + 0.5) * (2 * np.pi / n_phi)
        half = np.stack([np.cos(phi), np.sin(phi)], axis=1)
        hw = np.full(phi.size, 2 * np.pi / n_phi)
    else:
        x, xw = roots_legendre(n)
        x, xw = x[n // 2 :], xw[n // 2 :]
        phi = np.arange(n_phi) * (2 * np.pi / n_phi)
        st = np.sqrt(1.0 - x**2)
        half = np.stack(
            [
                (st[:, None] * np.cos(phi)[None, :]).ravel(),
                (st[:, None] * np.sin(phi)[None, :]).ravel(),
                np.repeat(x, phi.size),
            ],
            axis=1,
        )
        hw = np.repeat(xw, phi.size) * (2 * np.pi / n_phi)
    dirs = np.concatenate([half, -half])
    w = np.concatenate([hw, hw])
    dirs.setflags(write=False)
    w.setflags(write=False)
    return dirs, w


def on_shell_spectrum(f: TestFunction, nodes: ShellNodes, sheet: int = 1) -> np.ndarray:
    return fourier(f)(nodes.points(sheet))


def _tail_check(f: TestFunction, spec: np.ndarray, nodes: ShellNodes, cfg: ShellConfig) -> None:
    scale = f.spectral_scale()
    if scale == 0:
        return
    tail = float(np.max(np.abs(spec[..., nodes.boundary]))) if np.any(nodes.boundary) else 0.0
    # the integrand is quadratic in the spectrum
    if (tail / scale) ** 2 > cfg.tail_tolerance:
        raise QuadratureError(
            f"spectrum of {f.label} is not negligible at the cutoff K={nodes.cutoff:.4g} "
            f"(tail/scale = {tail / scale:.2e})"
        )


def _spectra(funcs: Sequence[TestFunction], nodes: ShellNodes, cfg: ShellConfig, sheets=(1,)) -> list[np.ndarray]:
    out = []
    for f in funcs:
        spec = np.stack([on_shell_spectrum(f, nodes, s) for s in sheets])
        _tail_check(f, spec, nodes, cfg)
        out.append(spec)
    return out


def _pair(fs: np.ndarray, gs: np.ndarray, nodes: ShellNodes, kind: KernelKind, cfg: ShellConfig) -> complex:
    prod = np.conj(fs) * gs
    if kind is KernelKind.QUANTUM:
        return complex(cfg.hbar * np.sum(nodes.weights * prod[0]))
    if kind is KernelKind.CLASSICAL:
        return complex(0.5 * cfg.hbar * (np.sum(nodes.weights * prod[0]) + np.sum(nodes.weights * prod[1])))
    raise ValueError(f"kernel {kind} does not pair scalar test functions")


def _sheets(kind: KernelKind) -> tuple[int, ...]:
    return (1,) if kind is KernelKind.QUANTUM else (1, -1)


def pairing(
    f: TestFunction,
    g: TestFunction,
    kind: KernelKind,
    cfg: ShellConfig,
    nodes: ShellNodes | None = None,
) -> complex:
    """Scalar pairing ``(f, g)`` under the Quantum or Classical kernel."""
    kind = KernelKind(kind)
    if nodes is None:
        nodes = shell_nodes(cfg, (f, g))
    else:
        _check_dims((f, g), cfg)
    fs, gs = _spectra((f, g), nodes, cfg, _sheets(kind))
    return _pair(fs, gs, nodes, kind, cfg)


def pairing_with_error(
    f: TestFunction, g: TestFunction, kind: KernelKind, cfg: ShellConfig
) -> tuple[complex, float]:
    """Pairing plus an error estimate from halving the per-panel order."""
    value = pairing(f, g, kind, cfg)
    coarse_n = max(8, cfg.nodes // 2)
    nodes = shell_nodes(cfg, (f, g), nodes=coarse_n)
    fs, gs = _spectra((f, g), nodes, cfg, _sheets(KernelKind(kind)))
    coarse = _pair(fs, gs, nodes, KernelKind(kind), cfg)
    return value, abs(value - coarse)


def quantum_ip(f: TestFunction, g: TestFunction, cfg: ShellConfig, nodes: ShellNodes | None = None) -> complex:
    """``hbar int d^{d-1}k / ((2pi)^{d-1} 2w) f~(w,k)^* g~(w,k)`` on the positive sheet."""
    return pairing(f, g, KernelKind.QUANTUM, cfg, nodes)


def classical_ip(f: TestFunction, g: TestFunction, cfg: ShellConfig, nodes: ShellNodes | None = None) -> complex:
    """Half the sum of the positive- and negative-sheet integrals; no theta(k0)."""
    return pairing(f, g, KernelKind.CLASSICAL, cfg, nodes)


def commutator_kernel(
    f: TestFunction,
    g: TestFunction,
    kind: KernelKind,
    cfg: ShellConfig,
    nodes: ShellNodes | None = None,
) -> complex:
    """``ip(g*, f) - ip(f*, g)``: the c-number value of ``[phi_f, phi_g]``."""
    kind = KernelKind(kind)
    if kind is KernelKind.EM_QUANTUM:
        raise ValueError("the field commutator is defined for scalar kernels only")
    fc, gc = conjugate(f), conjugate(g)
    if nodes is None:
        nodes = shell_nodes(cfg, (f, g, fc, gc))
    return pairing(gc, f, kind, cfg, nodes) - pairing(fc, g, kind, cfg, nodes)


# ---------------------------------------------------------------------------
# Electromagnetic (bivector) pairing

Component = tuple[TestFunction, "int | None"]
EM_CHUNK = 65536


@dataclass(frozen=True, eq=False)
class BivectorTestFunction:
    """Antisymmetric array ``f_{mu nu}`` of test functions, indices down.

    Only ``mu < nu`` is stored.  Each stored component is a sum of terms
    ``(h, alpha)`` with spectrum ``k_alpha h~(k)`` (``alpha`` a lower index,
    i.e. the term is ``i d_alpha h``) or plain ``h~(k)`` when ``alpha`` is
    ``None``.
    """

    dimension: int
    components: Mapping[tuple[int, int], tuple[Component, ...]]
    name: str | None = None

    def __post_init__(self):
        d = self.dimension
        for (mu, nu), terms in self.components.items():
            if not 0 <= mu < nu < d:
                raise ValueError(f"component ({mu},{nu}) must satisfy 0 <= mu < nu < {d}")
            for h, alpha in terms:
                if h.dimension != d:
                    raise DimensionError("component dimension mismatch")
                if alpha is not None and not 0 <= alpha < d:
                    raise ValueError("derivative index out of range")

    def functions(self) -> list[TestFunction]:
        return [h for terms in self.components.values() for h, _ in terms]

    def component(self, mu: int, nu: int) -> tuple[float, tuple[Component, ...]]:
        """Sign and stored terms for ``f_{mu nu}`` (antisymmetry is structural)."""
        if mu == nu:
            return 0.0, ()
        if mu < nu:
            return 1.0, tuple(self.components.get((mu, nu), ()))
        return -1.0, tuple(self.components.get((nu, mu), ()))

    def spectrum(self, k: np.ndarray) -> np.ndarray:
        """``f~_{mu nu}(k)`` with shape ``k.shape[:-1] + (d, d)``."""
        k = np.asarray(k, dtype=float)
        d = self.dimension
        k_low = k * metric(d).diagonal()
        out = np.zeros(k.shape[:-1] + (d, d), dtype=complex)
        for (mu, nu), terms in self.components.items():
            val = np.zeros(k.shape[:-1], dtype=complex)
            for h, alpha in terms:
                s = fourier(h)(k)
                val = val + (s if alpha is None else k_low[..., alpha] * s)
            out[..., mu, nu] = val
            out[..., nu, mu] = -val
        return out

    @classmethod
    def electric(cls, functions: Sequence[TestFunction], name: str | None = None) -> "BivectorTestFunction":
        """Bivector with only ``f_{0i}`` components, ``f_{0i} = functions[i-1]``."""
        d = functions[0].dimension
        return cls(d, {(0, i + 1): ((h, None),) for i, h in enumerate(functions)}, name)

    @classmethod
    def pure_gauge(cls, h: TestFunction, a: Sequence[float], name: str | None = None) -> "BivectorTestFunction":
        """``f~_{mu nu}(k) = (k_mu a_nu - k_nu a_mu) h~(k)`` for a constant covector ``a``."""
        from .testfn import scale

        d = h.dimension
        a = np.asarray(a, dtype=float)
        comps: dict[tuple[int, int], tuple[Component, ...]] = {}
        for mu in range(d):
            for nu in range(mu + 1, d):
                terms = []
                if a[nu] != 0:
                    terms.append((scale(h, a[nu]), mu))
                if a[mu] != 0:
                    terms.append((scale(h, -a[mu]), nu))
                if terms:
                    comps[(mu, nu)] = tuple(terms)
        return cls(d, comps, name)


def em_integrand(fk: np.ndarray, gk: np.ndarray, k: np.ndarray) -> np.ndarray:
    """``-f~_{mu b}^* k^mu k^nu g~_nu^b`` at each wave vector (vectorized)."""
    d = k.shape[-1]
    eta = metric(d)
    u = np.einsum("...m,...mb->...b", k, fk)
    v = np.einsum("...n,...nb->...b", k, gk)
    return -np.einsum("...b,bc,...c->...", np.conj(u), eta, v)


def em_integrand_oracle(fk: np.ndarray, gk: np.ndarray, k: np.ndarray) -> complex:
    """Explicit four-index sum at a single wave vector."""
    d = k.shape[-1]
    eta = metric(d)
    total = 0j
    for mu in range(d):
        for beta in range(d):
            for nu in range(d):
                for gamma in range(d):
                    total += np.conj(fk[mu, beta]) * k[mu] * k[nu] * gk[nu, gamma] * eta[gamma, beta]
    return -total


def em_ip(f: BivectorTestFunction, g: BivectorTestFunction, cfg: ShellConfig) -> complex:
    """Pairing of bivector test functions on the positive massless shell (d = 4).

    The contraction ``f~_{mu b}^* k^mu k^nu g~_nu^b`` is negative
    semi-definite on the null shell with the mostly-minus metric, so the
    overall sign is flipped to give a positive pairing.
    """
    if cfg.mass != 0:
        raise ValueError("the electromagnetic pairing requires mass = 0")
    if cfg.dimension != 4 or f.dimension != 4 or g.dimension != 4:
        raise DimensionError("the electromagnetic pairing is defined for d = 4")
    funcs = f.functions() + g.functions()
    nodes = shell_nodes(cfg, funcs)
    pts = nodes.points(1)
    for h in funcs:
        _tail_check(h, fourier(h)(pts), nodes, cfg)
    total = 0j
    # the (d, d) spectra are large; accumulate in chunks
    for lo in range(0, len(nodes), EM_CHUNK):
        sl = slice(lo, lo + EM_CHUNK)
        integrand = em_integrand(f.spectrum(pts[sl]), g.spectrum(pts[sl]), pts[sl])
        total += np.sum(nodes.weights[sl] * integrand)
    return complex(cfg.hbar * total)
