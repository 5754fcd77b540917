"""Creation/annihilation algebra over test-function labels.

Operator words are tuples of :class:`OperatorSymbol`; an
:class:`OperatorExpr` is a finite formal sum of words with complex
coefficients.  The only relations are

    [a_g, a+_f] = ip(f, g),   [a_f, a_g] = [a+_f, a+_g] = 0,

with ``ip`` the Quantum or Classical pairing, so every routine here takes
the kernel as an argument.  Vacuum expectation values come from normal
ordering; :func:`vev_by_pairings` computes the same numbers by summing over
complete pairings and serves as an independent check.
"""

from __future__ import annotations

import math
import threading
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping

import numpy as np

from .shell import KernelKind, ShellConfig, pairing
from .testfn import TestFunction, add, conjugate

__all__ = [
    "Flavor",
    "OperatorSymbol",
    "OperatorExpr",
    "FockState",
    "PairingCache",
    "ZeroNormError",
    "MAX_MOMENT_ORDER",
    "ip",
    "ccr_commutator",
    "symbol_commutator",
    "normal_order",
    "expr_equal",
    "vev",
    "vev_by_pairings",
    "field",
    "field_moment",
    "moment_closed_form",
    "field_commutator",
    "resonance_probability",
    "resonance_moment",
    "resonance_nonlocality_witness",
    "projector_nonlinearity",
]

MAX_MOMENT_ORDER = 12
COEFF_TOL = 1e-12


class ZeroNormError(ValueError):
    """A label or state has no positive norm under the active kernel."""


class Flavor(str, Enum):
    CREATE = "create"
    ANNIHILATE = "annihilate"


@dataclass(frozen=True)
class OperatorSymbol:
    flavor: Flavor
    label: TestFunction

    def __post_init__(self):
        # symbols are hashed constantly while normal ordering
        object.__setattr__(self, "_hash", hash((self.flavor.value, self.label)))

    def __hash__(self):
        return self._hash

    def __str__(self):
        dag = "†" if self.flavor is Flavor.CREATE else ""
        return f"a{dag}[{self.label.label}]"

    def dagger(self) -> "OperatorSymbol":
        other = Flavor.ANNIHILATE if self.flavor is Flavor.CREATE else Flavor.CREATE
        return OperatorSymbol(other, self.label)


Word = tuple[OperatorSymbol, ...]


class PairingCache:
    """Thread-safe memo of ``ip(f, g)`` keyed by content, kernel and config."""

    def __init__(self):
        self._lock = threading.Lock()
        self._data: dict = {}

    def get(self, f: TestFunction, g: TestFunction, kind: KernelKind, cfg: ShellConfig) -> complex:
        key = (f.fingerprint, g.fingerprint, KernelKind(kind), cfg)
        with self._lock:
            hit = self._data.get(key)
        if hit is not None:
            return hit
        value = pairing(f, g, kind, cfg)
        with self._lock:
            self._data[key] = value
            # Hermiticity gives the mirrored entry for free
            self._data.setdefault((key[1], key[0], key[2], cfg), value.conjugate())
        return value

    def clear(self):
        with self._lock:
            self._data.clear()

    def __len__(self):
        return len(self._data)


_CACHE = PairingCache()


def ip(f: TestFunction, g: TestFunction, kind: KernelKind, cfg: ShellConfig) -> complex:
    """Memoized scalar pairing used by the algebra."""
    return _CACHE.get(f, g, kind, cfg)


def ccr_commutator(f: TestFunction, g: TestFunction, kind: KernelKind, cfg: ShellConfig) -> complex:
    """``[a_g, a+_f] = ip(f, g)``."""
    return ip(f, g, kind, cfg)


def symbol_commutator(x: OperatorSymbol, y: OperatorSymbol, kind: KernelKind, cfg: ShellConfig) -> complex:
    """Scalar ``[x, y]`` for two ladder symbols; zero for equal flavors."""
    if x.flavor is y.flavor:
        return 0j
    if x.flavor is Flavor.ANNIHILATE:
        return ip(y.label, x.label, kind, cfg)
    return -ip(x.label, y.label, kind, cfg)


def _sort_key(f: TestFunction) -> str:
    return f.fingerprint


class OperatorExpr:
    """Formal sum ``sum_w c_w w`` over operator words."""

    __slots__ = ("terms",)

    def __init__(self, terms: Mapping[Word, complex] | None = None):
        self.terms: dict[Word, complex] = {}
        for w, c in (terms or {}).items():
            if c != 0:
                self.terms[tuple(w)] = self.terms.get(tuple(w), 0j) + complex(c)

    @classmethod
    def identity(cls, coeff: complex = 1.0) -> "OperatorExpr":
        return cls({(): coeff})

    @classmethod
    def create(cls, f: TestFunction) -> "OperatorExpr":
        return cls({(OperatorSymbol(Flavor.CREATE, f),): 1.0})

    @classmethod
    def annihilate(cls, f: TestFunction) -> "OperatorExpr":
        return cls({(OperatorSymbol(Flavor.ANNIHILATE, f),): 1.0})

    @classmethod
    def word(cls, symbols: Iterable[OperatorSymbol], coeff: complex = 1.0) -> "OperatorExpr":
        return cls({tuple(symbols): coeff})

    def __add__(self, other):
        if not isinstance(other, OperatorExpr):
            other = OperatorExpr.identity(other)
        out = dict(self.terms)
        for w, c in other.terms.items():
            out[w] = out.get(w, 0j) + c
        return OperatorExpr({w: c for w, c in out.items() if c != 0})

    __radd__ = __add__

    def __neg__(self):
        return OperatorExpr({w: -c for w, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, OperatorExpr):
            return OperatorExpr({w: c * other for w, c in self.terms.items()})
        out: dict[Word, complex] = defaultdict(complex)
        for w1, c1 in self.terms.items():
            for w2, c2 in other.terms.items():
                out[w1 + w2] += c1 * c2
        return OperatorExpr(out)

    def __rmul__(self, other):
        return OperatorExpr({w: other * c for w, c in self.terms.items()})

    def __pow__(self, n: int):
        out = OperatorExpr.identity()
        for _ in range(n):
            out = out * self
        return out

    def dagger(self) -> "OperatorExpr":
        return OperatorExpr(
            {tuple(s.dagger() for s in reversed(w)): np.conj(c) for w, c in self.terms.items()}
        )

    def is_normal_ordered(self) -> bool:
        for w in self.terms:
            seen_annihilation = False
            for s in w:
                if s.flavor is Flavor.ANNIHILATE:
                    seen_annihilation = True
                elif seen_annihilation:
                    return False
        return True

    def isclose(self, other: "OperatorExpr", tol: float = COEFF_TOL) -> bool:
        keys = set(self.terms) | set(other.terms)
        return all(abs(self.terms.get(k, 0j) - other.terms.get(k, 0j)) <= tol for k in keys)

    def scalar(self) -> complex:
        return self.terms.get((), 0j)

    def __len__(self):
        return len(self.terms)

    def __str__(self):
        if not self.terms:
            return "0"
        parts = []
        for w, c in sorted(self.terms.items(), key=lambda wc: (len(wc[0]), " ".join(map(str, wc[0])))):
            coeff = f"({c.real:.6g}{c.imag:+.6g}i)"
            if not w:
                parts.append(f"{coeff}·1")
            elif c == 1:
                parts.append(" ".join(map(str, w)))
            else:
                parts.append(f"{coeff}·" + " ".join(map(str, w)))
        return " + ".join(parts)

    def __repr__(self):
        return f"OperatorExpr({self})"


def field(f: TestFunction) -> OperatorExpr:
    """Smeared field ``phi_f = a_f + a+_{f*}``, complex linear in ``f``."""
    return OperatorExpr.annihilate(f) + OperatorExpr.create(conjugate(f))


# ---------------------------------------------------------------------------
# Normal ordering

_Block = tuple[tuple[TestFunction, ...], tuple[TestFunction, ...]]


def _insert(block: tuple[TestFunction, ...], f: TestFunction) -> tuple[TestFunction, ...]:
    return tuple(sorted(block + (f,), key=_sort_key))


def _left_multiply(
    sym: OperatorSymbol, state: Mapping[_Block, complex], kind: KernelKind, cfg: ShellConfig
) -> dict[_Block, complex]:
    """``sym * N`` for a normal-ordered ``N``, re-normal-ordered."""
    out: dict[_Block, complex] = defaultdict(complex)
    if sym.flavor is Flavor.CREATE:
        for (cre, ann), c in state.items():
            out[(_insert(cre, sym.label), ann)] += c
        return out
    g = sym.label
    for (cre, ann), c in state.items():
        out[(cre, _insert(ann, g))] += c
        # a_g a+_{f_1} ... a+_{f_n} = sum_j ip(f_j, g) (word without f_j) + a+... a_g
        for j, fj in enumerate(cre):
            out[(cre[:j] + cre[j + 1 :], ann)] += c * ip(fj, g, kind, cfg)
    return out


def _to_expr(state: Mapping[_Block, complex]) -> OperatorExpr:
    terms = {}
    for (cre, ann), c in state.items():
        if c == 0:
            continue
        w = tuple(OperatorSymbol(Flavor.CREATE, f) for f in cre) + tuple(
            OperatorSymbol(Flavor.ANNIHILATE, f) for f in ann
        )
        terms[w] = terms.get(w, 0j) + c
    return OperatorExpr(terms)


def normal_order(e: OperatorExpr, kind: KernelKind, cfg: ShellConfig) -> OperatorExpr:
    """Canonical normal-ordered form.

    Creations stand left of annihilations, each block sorted by label, and
    every contraction ``ip(f, g)`` is absorbed into the coefficients.
    """
    return _to_expr(_normal_blocks(e, kind, cfg))


def _normal_blocks(e: OperatorExpr, kind: KernelKind, cfg: ShellConfig) -> dict[_Block, complex]:
    total: dict[_Block, complex] = defaultdict(complex)
    for w, coeff in e.terms.items():
        state: dict[_Block, complex] = {((), ()): coeff}
        for sym in reversed(w):
            state = _left_multiply(sym, state, kind, cfg)
        for k, c in state.items():
            total[k] += c
    return total


def expr_equal(a: OperatorExpr, b: OperatorExpr, kind: KernelKind, cfg: ShellConfig, tol: float = COEFF_TOL) -> bool:
    return normal_order(a, kind, cfg).isclose(normal_order(b, kind, cfg), tol)


def vev(e: OperatorExpr, kind: KernelKind, cfg: ShellConfig) -> complex:
    """``<0| e |0>``: the identity coefficient of the normal-ordered form."""
    return complex(_normal_blocks(e, kind, cfg).get(((), ()), 0j))


def _pairing_sum(word: Word, kind: KernelKind, cfg: ShellConfig) -> complex:
    if not word:
        return 1.0 + 0j
    if len(word) % 2:
        return 0j
    first, rest = word[0], word[1:]
    if first.flavor is Flavor.CREATE:
        # <0| a+ ... = 0
        return 0j
    total = 0j
    for j, sym in enumerate(rest):
        if sym.flavor is Flavor.CREATE:
            contraction = ip(sym.label, first.label, kind, cfg)
            total += contraction * _pairing_sum(rest[:j] + rest[j + 1 :], kind, cfg)
    return total


def vev_by_pairings(e: OperatorExpr, kind: KernelKind, cfg: ShellConfig) -> complex:
    """Vacuum expectation by exhaustive enumeration of complete pairings.

    Each pair ``(i < j)`` contributes ``<0| w_i w_j |0>``, which is
    ``ip(label_j, label_i)`` for an annihilation left of a creation and zero
    otherwise.
    """
    return sum((c * _pairing_sum(w, kind, cfg) for w, c in e.terms.items()), 0j)


# ---------------------------------------------------------------------------
# Field observables


def moment_closed_form(variance: complex, n: int) -> complex:
    """Gaussian moments: ``(2k)!/(2^k k!) variance^k`` for ``n = 2k``, else 0."""
    if n % 2:
        return 0j
    k = n // 2
    return math.factorial(2 * k) / (2**k * math.factorial(k)) * complex(variance) ** k


def field_moment(f: TestFunction, n: int, kind: KernelKind, cfg: ShellConfig) -> complex:
    """``<0| phi_f^n |0>`` through the normal-ordering engine."""
    if n < 1 or int(n) != n:
        raise ValueError("moment order must be a positive integer")
    if n > MAX_MOMENT_ORDER:
        raise ValueError(f"moment order {n} exceeds the supported maximum {MAX_MOMENT_ORDER}")
    a = OperatorSymbol(Flavor.ANNIHILATE, f)
    c = OperatorSymbol(Flavor.CREATE, conjugate(f))
    state: dict[_Block, complex] = {((), ()): 1.0 + 0j}
    for _ in range(n):
        left = _left_multiply(a, state, kind, cfg)
        right = _left_multiply(c, state, kind, cfg)
        for k, v in right.items():
            left[k] += v
        state = left
    return state.get(((), ()), 0j)


def field_commutator(f: TestFunction, g: TestFunction, kind: KernelKind, cfg: ShellConfig) -> complex:
    """Scalar ``[phi_f, phi_g] = ip(g*, f) - ip(f*, g)``."""
    pf, pg = field(f), field(g)
    comm = normal_order(pf * pg - pg * pf, kind, cfg)
    residual = {w: c for w, c in comm.terms.items() if w and abs(c) > COEFF_TOL}
    if residual:
        raise ArithmeticError(f"field commutator is not a c-number: {OperatorExpr(residual)}")
    return comm.scalar()


# ---------------------------------------------------------------------------
# States and the resonance detector


class FockState:
    """Finite superposition of creation words applied to the vacuum."""

    __slots__ = ("terms",)

    def __init__(self, terms: Mapping[tuple[TestFunction, ...], complex] | None = None):
        self.terms: dict[tuple[TestFunction, ...], complex] = {}
        for w, c in (terms or {}).items():
            key = tuple(sorted(w, key=_sort_key))
            self.terms[key] = self.terms.get(key, 0j) + complex(c)

    @classmethod
    def vacuum(cls) -> "FockState":
        return cls({(): 1.0})

    @classmethod
    def one_particle(
        cls, g: TestFunction, kind: KernelKind | None = None, cfg: ShellConfig | None = None
    ) -> "FockState":
        """``a+_g |0>``, normalized when a kernel and config are given."""
        coeff = 1.0
        if kind is not None and cfg is not None:
            coeff = 1.0 / math.sqrt(_label_norm(g, kind, cfg))
        return cls({(g,): coeff})

    def __add__(self, other: "FockState") -> "FockState":
        out = dict(self.terms)
        for w, c in other.terms.items():
            out[w] = out.get(w, 0j) + c
        return FockState(out)

    def __rmul__(self, alpha: complex) -> "FockState":
        return FockState({w: alpha * c for w, c in self.terms.items()})

    def as_expr(self) -> OperatorExpr:
        return OperatorExpr({tuple(OperatorSymbol(Flavor.CREATE, f) for f in w): c for w, c in self.terms.items()})

    def max_particles(self) -> int:
        return max((len(w) for w in self.terms), default=0)

    def inner(self, other: "FockState", kind: KernelKind, cfg: ShellConfig) -> complex:
        """``<self|other>`` from vacuum expectations of ``w^dagger v``."""
        return vev(self.as_expr().dagger() * other.as_expr(), kind, cfg)

    def norm2(self, kind: KernelKind, cfg: ShellConfig) -> float:
        return self.inner(self, kind, cfg).real


def _label_norm(f: TestFunction, kind: KernelKind, cfg: ShellConfig) -> float:
    value = ip(f, f, kind, cfg).real
    if not value > 1e-14 * f.spectral_scale() ** 2:
        raise ZeroNormError(f"{f.label} has no positive self-pairing under the {KernelKind(kind).value} kernel")
    return value


def resonance_probability(f: TestFunction, state: FockState, kind: KernelKind, cfg: ShellConfig) -> float:
    """``<psi| X_f |psi> / <psi|psi>`` with ``X_f = a+_f |0><0| a_f / ip(f, f)``.

    For ``|g>`` this is ``|ip(f, g)|^2 / (ip(f, f) ip(g, g))``.
    """
    nf = _label_norm(f, kind, cfg)
    norm2 = state.norm2(kind, cfg)
    if not norm2 > 0:
        raise ZeroNormError("state is not normalizable")
    amp = vev(OperatorExpr.annihilate(f) * state.as_expr(), kind, cfg)
    return float(abs(amp) ** 2 / (nf * norm2))


def _one_particle_gram(labels: list[TestFunction], kind: KernelKind, cfg: ShellConfig) -> np.ndarray:
    # <0| a_{L_i} a+_{L_j} |0> = ip(L_j, L_i)
    n = len(labels)
    gram = np.empty((n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            gram[i, j] = ip(labels[j], labels[i], kind, cfg)
    return 0.5 * (gram + gram.conj().T)


def _orthonormal_coords(gram: np.ndarray) -> np.ndarray:
    """Columns are the one-particle vectors in an orthonormal basis of their span."""
    lam, vec = np.linalg.eigh(gram)
    keep = lam > 1e-12 * max(lam.max(), 0.0)
    return np.sqrt(lam[keep])[:, None] * vec[:, keep].conj().T


def _projector(u: np.ndarray) -> np.ndarray:
    return np.outer(u, u.conj()) / np.vdot(u, u).real


def resonance_moment(f: TestFunction, state: FockState, order: int, kind: KernelKind, cfg: ShellConfig) -> float:
    """``<psi| X_f^order |psi> / <psi|psi>`` on the one-particle restriction.

    States with up to two particles are accepted; the two-particle part is
    orthogonal to the range of ``X_f`` and enters only through the norm.
    """
    if order < 1:
        raise ValueError("order must be positive")
    if state.max_particles() > 2:
        raise ValueError("resonance moments are implemented for states with at most two particles")
    _label_norm(f, kind, cfg)  # rejects zero-norm detectors
    norm2 = state.norm2(kind, cfg)
    if not norm2 > 0:
        raise ZeroNormError("state is not normalizable")
    singles = [w[0] for w in state.terms if len(w) == 1]
    labels = [f] + singles
    coeffs = np.array([0j] + [state.terms[(g,)] for g in singles])
    coords = _orthonormal_coords(_one_particle_gram(labels, kind, cfg))
    psi = coords @ coeffs
    x = _projector(coords[:, 0])
    value = np.vdot(psi, np.linalg.matrix_power(x, order) @ psi).real
    return float(value / norm2)


def resonance_nonlocality_witness(f: TestFunction, g: TestFunction, cfg: ShellConfig) -> float:
    """Operator norm of ``[X_f, X_g]`` on ``span{a+_f|0>, a+_g|0>}`` (Quantum kernel)."""
    kind = KernelKind.QUANTUM
    _label_norm(f, kind, cfg)
    _label_norm(g, kind, cfg)
    coords = _orthonormal_coords(_one_particle_gram([f, g], kind, cfg))
    xf, xg = _projector(coords[:, 0]), _projector(coords[:, 1])
    comm = xf @ xg - xg @ xf
    return float(np.linalg.norm(comm, 2))


def projector_nonlinearity(f: TestFunction, g: TestFunction, kind: KernelKind, cfg: ShellConfig) -> float:
    """Frobenius norm of ``X_{f+g} - X_f - X_g`` on ``span{a+_f|0>, a+_g|0>}``."""
    h = add(f, g)
    for lab in (f, g, h):
        _label_norm(lab, kind, cfg)
    coords = _orthonormal_coords(_one_particle_gram([f, g, h], kind, cfg))
    diff = _projector(coords[:, 2]) - _projector(coords[:, 0]) - _projector(coords[:, 1])
    return float(np.linalg.norm(diff))
