"""Monte Carlo realization of the continuous random field.

Smeared values ``phi_{f_i}`` over a finite mode set are drawn as a joint
Gaussian with covariance ``C_ij = ip(f_i*, f_j)``.  Draws are generated in
fixed-size blocks, each with its own counter-derived PCG64 stream, so the
result is bit-identical for any number of worker threads.
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from . import fock
from ._jsonutil import jsonable
from .shell import KernelKind, ShellConfig, classical_ip, quantum_ip, shell_nodes
from .testfn import TestFunction, conjugate, fourier, imag_part, is_real, positive_frequency_projection, real_part

__all__ = [
    "PSDError",
    "ModeSet",
    "GramMatrix",
    "SampleBatch",
    "MomentEstimate",
    "Report",
    "GENERATOR",
    "BLOCK_SIZE",
    "MAX_EMPIRICAL_ORDER",
    "gram",
    "sample",
    "empirical_moments",
    "compare_to_fock",
]

GENERATOR = "numpy.random.PCG64 seeded by SeedSequence(seed, spawn_key=(block,))"
BLOCK_SIZE = 8192
MAX_EMPIRICAL_ORDER = 8
PSD_TOL = 1e-10
CSV_COLUMNS = ("mode-id", "order", "predicted", "empirical", "stderr", "z")


class PSDError(ValueError):
    """Covariance has a negative eigenvalue beyond numerical noise."""


@dataclass(frozen=True)
class ModeSet:
    ids: tuple[str, ...]
    functions: tuple[TestFunction, ...]

    def __post_init__(self):
        if not self.ids:
            raise ValueError("a mode set needs at least one mode")
        if len(self.ids) != len(self.functions):
            raise ValueError("one identifier per mode is required")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("mode identifiers must be unique")

    @classmethod
    def of(cls, functions: Sequence[TestFunction], ids: Sequence[str] | None = None) -> "ModeSet":
        if ids is None:
            ids = [f.name or f"m{i}" for i, f in enumerate(functions)]
        return cls(tuple(ids), tuple(functions))

    def __len__(self):
        return len(self.ids)

    def all_real(self) -> bool:
        return all(is_real(f) for f in self.functions)


@dataclass(frozen=True)
class GramMatrix:
    """Pairings ``C_ij = ip(f_i*, f_j)`` plus the real covariance used for sampling.

    For real modes ``matrix`` is Hermitian and ``covariance`` is its real
    part.  Complex modes are split into real and imaginary parts, and
    ``covariance`` is the ``2N x 2N`` real covariance of those parts.
    """

    matrix: np.ndarray
    covariance: np.ndarray
    kind: KernelKind
    config: ShellConfig
    ids: tuple[str, ...]
    complex_modes: bool = False

    @property
    def trace(self) -> float:
        return float(np.trace(self.covariance))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.covariance).min())


def _pairing_matrix(left: Sequence[TestFunction], right: Sequence[TestFunction], kind: KernelKind, cfg: ShellConfig):
    """``[ip(left_i, right_j)]`` on one shared node set."""
    nodes = shell_nodes(cfg, list(left) + list(right))
    sheets = (1,) if kind is KernelKind.QUANTUM else (1, -1)
    total = 0
    for s in sheets:
        pts = nodes.points(s)
        a = np.stack([fourier(f)(pts) for f in left])
        b = np.stack([fourier(f)(pts) for f in right])
        total = total + (a.conj() * nodes.weights) @ b.T
    return cfg.hbar * total / len(sheets)


def _check_psd(cov: np.ndarray) -> None:
    lam = np.linalg.eigvalsh(cov)
    scale = max(float(np.trace(cov).real), 0.0)
    if lam.min() < -PSD_TOL * scale:
        raise PSDError(f"minimum eigenvalue {lam.min():.3e} below -{PSD_TOL:g} x trace ({scale:.3e})")


def gram(modes: ModeSet, kind: KernelKind, cfg: ShellConfig) -> GramMatrix:
    kind = KernelKind(kind)
    if kind is KernelKind.EM_QUANTUM:
        raise ValueError("gram matrices are built from scalar kernels")
    funcs = list(modes.functions)
    for f in funcs:
        fock._label_norm(f, kind, cfg)
    mat = _pairing_matrix([conjugate(f) for f in funcs], funcs, kind, cfg)
    if modes.all_real():
        mat = 0.5 * (mat + mat.conj().T)
        cov = mat.real.copy()
        _check_psd(mat)
        return GramMatrix(mat, cov, kind, cfg, modes.ids, False)
    parts = [real_part(f) for f in funcs] + [imag_part(f) for f in funcs]
    # parts are real functions, so ip(p_i*, p_j) = ip(p_i, p_j)
    big = _pairing_matrix(parts, parts, kind, cfg)
    big = 0.5 * (big + big.conj().T)
    cov = big.real.copy()
    _check_psd(cov)
    return GramMatrix(mat, cov, kind, cfg, modes.ids, True)


@dataclass(frozen=True)
class SampleBatch:
    n: int
    seed: int
    draws: np.ndarray = field(repr=False)
    ids: tuple[str, ...]
    metadata: dict[str, Any]

    def column(self, mode: int | str) -> np.ndarray:
        idx = self.ids.index(mode) if isinstance(mode, str) else mode
        return self.draws[:, idx]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow([f"{i}.{part}" for i in self.ids for part in ("re", "im")])
        for row in self.draws:
            w.writerow([repr(float(v)) for z in row for v in (z.real, z.imag)])
        return buf.getvalue()


def _factor(cov: np.ndarray) -> np.ndarray:
    lam, vec = np.linalg.eigh(cov)
    scale = max(float(np.trace(cov)), 0.0)
    if lam.min() < -PSD_TOL * scale:
        raise PSDError(f"covariance is not PSD (min eigenvalue {lam.min():.3e})")
    return vec * np.sqrt(np.clip(lam, 0.0, None))


def _block(seed: int, index: int, size: int, factor: np.ndarray) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))
    z = rng.standard_normal((size, factor.shape[1]))
    return z @ factor.T


def sample(gm: GramMatrix, n: int, seed: int, workers: int = 1) -> SampleBatch:
    """Draw ``n`` mean-zero joint Gaussian vectors with the covariance of ``gm``."""
    if n < 0:
        raise ValueError("sample count must be non-negative")
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    factor = _factor(gm.covariance)
    sizes = [min(BLOCK_SIZE, n - start) for start in range(0, n, BLOCK_SIZE)]
    if workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(lambda b: _block(seed, b, sizes[b], factor), range(len(sizes))))
    else:
        blocks = [_block(seed, b, s, factor) for b, s in enumerate(sizes)]
    real = np.concatenate(blocks) if blocks else np.zeros((0, factor.shape[0]))
    m = len(gm.ids)
    if gm.complex_modes:
        draws = real[:, :m] + 1j * real[:, m:]
    else:
        draws = real.astype(complex)
    meta = {
        "kernel": gm.kind.value,
        "config": _config_dict(gm.config),
        "generator": GENERATOR,
        "block_size": BLOCK_SIZE,
    }
    return SampleBatch(n, seed, draws, gm.ids, meta)


@dataclass(frozen=True)
class MomentEstimate:
    order: int
    value: float | complex
    stderr: float


def _jackknife(values: np.ndarray, groups: int = 200) -> tuple[complex, float]:
    n = values.size
    g = max(2, min(groups, n))
    sums = np.array([chunk.sum() for chunk in np.array_split(values, g)])
    counts = np.array([chunk.size for chunk in np.array_split(values, g)])
    total = sums.sum()
    loo = (total - sums) / (n - counts)
    mean = loo.mean()
    var = (g - 1) / g * np.sum(np.abs(loo - mean) ** 2)
    return total / n, float(np.sqrt(var))


def empirical_moments(
    batch: SampleBatch,
    mode: int | str,
    orders: Sequence[int],
    predicted: Sequence[complex] | None = None,
) -> list[MomentEstimate]:
    """Sample moments ``mean(phi^k)`` with grouped-jackknife standard errors."""
    x = batch.column(mode)
    real = not np.any(x.imag)
    if real:
        x = x.real
    out = []
    for i, k in enumerate(orders):
        if not 1 <= k <= MAX_EMPIRICAL_ORDER:
            raise ValueError(f"moment order {k} outside 1..{MAX_EMPIRICAL_ORDER}")
        if batch.n < 2:
            raise ValueError("at least two samples are needed for a standard error")
        value, se = _jackknife(x**k)
        if predicted is not None and predicted[i] != 0 and se > 0.5 * abs(predicted[i]):
            warnings.warn(
                f"order {k}: standard error {se:.3g} exceeds half the predicted moment; increase n",
                RuntimeWarning,
                stacklevel=2,
            )
        out.append(MomentEstimate(k, float(value.real) if real else complex(value), se))
    return out


@dataclass
class Report:
    rows: list[dict[str, Any]]
    factor_rows: list[dict[str, Any]]
    metadata: dict[str, Any]

    @property
    def passed(self) -> bool:
        return all(r["pass"] for r in self.rows) and all(r["pass"] for r in self.factor_rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow(r)
        return buf.getvalue()

    def to_json(self) -> str:
        payload = {"kind": "rf-compare", "metadata": self.metadata, "rows": self.rows, "factor_rows": self.factor_rows}
        return json.dumps(jsonable(payload), indent=2)


def _config_dict(cfg: ShellConfig) -> dict[str, Any]:
    return {f: getattr(cfg, f) for f in cfg.__dataclass_fields__}


def _moment_rows(modes: ModeSet, batch: SampleBatch, orders, cfg, z_max) -> list[dict[str, Any]]:
    rows = []
    for i, (mid, f) in enumerate(zip(modes.ids, modes.functions)):
        preds = [fock.field_moment(f, k, KernelKind.CLASSICAL, cfg) for k in orders]
        preds = [p.real if abs(p.imag) <= 1e-12 * max(1.0, abs(p)) else p for p in preds]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            est = empirical_moments(batch, i, orders, preds)
        for k, p, e in zip(orders, preds, est):
            z = (e.value - p) / e.stderr if e.stderr > 0 else (0.0 if e.value == p else np.inf)
            z = float(abs(z)) if isinstance(z, complex) else float(z)
            rows.append(
                {
                    "mode-id": mid,
                    "order": k,
                    "predicted": p,
                    "empirical": e.value,
                    "stderr": e.stderr,
                    "z": z,
                    "pass": abs(z) <= z_max,
                }
            )
    return rows


def compare_to_fock(
    modes: ModeSet,
    orders: Sequence[int],
    n: int,
    seed: int,
    cfg: ShellConfig,
    z_max: float = 3.0,
    retry: bool = True,
    factor_tolerance: float = 1e-6,
    workers: int = 1,
) -> Report:
    """Symbolic-engine moments (Classical kernel) against Monte Carlo moments.

    One reseeded rerun (``seed + 1``) is made if any ``|z|`` exceeds
    ``z_max``.  Also tabulates ``quantum_ip / classical_ip`` for the
    positive-frequency projections of every mode pair.
    """
    orders = list(orders)
    meta: dict[str, Any] = {
        "n": n,
        "seed": seed,
        "kernel": KernelKind.CLASSICAL.value,
        "generator": GENERATOR,
        "config": _config_dict(cfg),
        "retried": False,
    }
    rows: list[dict[str, Any]] = []
    if orders:
        gm = gram(modes, KernelKind.CLASSICAL, cfg)
        rows = _moment_rows(modes, sample(gm, n, seed, workers), orders, cfg, z_max)
        if retry and not all(r["pass"] for r in rows):
            meta["retried"] = True
            meta["retry_seed"] = seed + 1
            rows = _moment_rows(modes, sample(gm, n, seed + 1, workers), orders, cfg, z_max)
    factor_rows = []
    projected = [positive_frequency_projection(f) for f in modes.functions]
    for i in range(len(modes)):
        for j in range(i, len(modes)):
            q = quantum_ip(projected[i], projected[j], cfg)
            c = classical_ip(projected[i], projected[j], cfg)
            ratio = q / c if c != 0 else complex("nan")
            factor_rows.append(
                {
                    "f-id": modes.ids[i],
                    "g-id": modes.ids[j],
                    "quantum": q,
                    "classical": c,
                    "ratio": ratio,
                    "residual": abs(q - 2 * c),
                    "pass": abs(q - 2 * c) <= factor_tolerance * abs(q),
                }
            )
    return Report(rows, factor_rows, meta)
