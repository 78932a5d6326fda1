"""Multi-copy operator machinery behind the shadow estimator.

The moments T_k are degree-(k+2) polynomials of the state, expressible as
tr(O^(k+2) rho^(x(k+2))) for an operator O^(k+2) on k+2 copies built from
second-difference binomial coefficients mu_l.  This module materializes
those operators densely (capped at 12 total qubits across copies), their
permutation-symmetrized form, the partial-trace reductions entering the
single-subsample variance bound, and the (I, L) planner that sizes the
estimator for prescribed accuracy (epsilon, delta).

The raw cyclic-layout operator is generally not Hermitian as a matrix --
only its action on symmetric product states is constrained -- but the
symmetrized operator and every partial-trace reduction are, and tests
enforce that.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ResourceLimitError
from .states import DensityMatrix, Observable

MAX_TOTAL_QUBITS = 12
MAX_SYMMETRIZE_COPIES = 6


@dataclass(frozen=True)
class MuTable:
    """Second-difference binomial row: mu_l = C(k,l) - 2C(k,l-1) + C(k,l-2)."""

    k: int
    coefficients: tuple  # ints, length k+3

    def __post_init__(self):
        if len(self.coefficients) != self.k + 3:
            raise ValueError("mu table must have k+3 entries")


@dataclass(frozen=True)
class MultiCopyOperator:
    copies: int
    n_qubits_per_copy: int
    data: np.ndarray

    def __post_init__(self):
        total = self.copies * self.n_qubits_per_copy
        if total > MAX_TOTAL_QUBITS:
            raise ResourceLimitError(
                f"{self.copies} copies of {self.n_qubits_per_copy} qubits exceed "
                f"the {MAX_TOTAL_QUBITS}-qubit multi-copy cap"
            )
        d = 2**total
        data = np.asarray(self.data, dtype=complex)
        if data.shape != (d, d):
            raise ValueError(f"expected a {d}x{d} matrix, got {data.shape}")
        data = np.ascontiguousarray(data)
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def dim_per_copy(self) -> int:
        return 2**self.n_qubits_per_copy


def mu_coefficients(k: int) -> MuTable:
    """All mu_l for l = 0 ... k+2, computed in exact integer arithmetic."""
    if k < 0:
        raise ValueError("k must be nonnegative")

    def comb(n, r):
        return math.comb(n, r) if 0 <= r <= n else 0

    coeffs = tuple(comb(k, l) - 2 * comb(k, l - 1) + comb(k, l - 2) for l in range(k + 3))
    return MuTable(k, coeffs)


def t_polynomial_sequence(rho: DensityMatrix, h: Observable, m: int) -> np.ndarray:
    """T_0 ... T_{m-1} via the polynomial route, sharing one power ladder."""
    if m < 1:
        raise ValueError("need at least one moment")
    top = m + 1  # largest exponent k+2 for k = m-1
    hp = [h.data.copy()]  # hp[j] = H rho^j
    for _ in range(top):
        hp.append(hp[-1] @ rho.data)
    out = np.empty(m)
    for k in range(m):
        mu = mu_coefficients(k).coefficients
        acc = 0.0
        for l in range(k + 3):
            if mu[l] == 0:
                continue
            acc += mu[l] * np.einsum("ij,ji->", hp[l], hp[k - l + 2]).real
        out[k] = acc / 2.0**k
    return out


def t_k_polynomial(rho: DensityMatrix, h: Observable, k: int) -> float:
    """(1/2^k) sum_l mu_l tr(H rho^l H rho^{k-l+2})."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    return float(t_polynomial_sequence(rho, h, k + 1)[k])


# ---------------------------------------------------------------------------
# permutation plumbing on copy slots


def permutation_source_indices(tau, dim: int) -> np.ndarray:
    """Flat source index per flat output index for the copy permutation
    sending the product of factors (psi_1 ... psi_t) to (psi_{tau[0]+1} ...).

    ``tau`` is 0-based: output slot s carries the input factor tau[s].
    """
    t = len(tau)
    digits = np.indices([dim] * t).reshape(t, -1)
    inv = np.argsort(np.asarray(tau))
    flat = np.zeros(dim**t, dtype=np.int64)
    for m in range(t):
        flat = flat * dim + digits[inv[m]]
    return flat


def cyclic_source_indices(copies: int, dim: int) -> np.ndarray:
    """Source indices of the forward cyclic shift (slot s takes factor s+1)."""
    return permutation_source_indices(tuple(range(1, copies)) + (0,), dim)


def build_O(h: Observable, k: int) -> MultiCopyOperator:
    """Dense multi-copy moment operator with tr(O rho^x(k+2)) = T_k.

    Interior layout terms place the two H factors on copies 1 and l+1;
    the two boundary terms of the mu sum merge into H*H on copy 1.  The
    layout is pinned by the trace identity against the polynomial route,
    which the test suite enforces.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    t = k + 2
    n = h.n_qubits
    if n * t > MAX_TOTAL_QUBITS:
        raise ResourceLimitError(f"{t} copies of N={n} exceed the {MAX_TOTAL_QUBITS}-qubit cap")
    d = 2**n
    big = d**t
    perm = cyclic_source_indices(t, d)
    mu = mu_coefficients(k).coefficients
    acc = np.zeros((big, big), dtype=complex)
    # boundary terms: both H factors adjacent on copy 1
    wb = mu[0] + mu[t]
    if wb != 0:
        acc += wb * np.kron(h.data @ h.data, np.eye(d ** (t - 1)))
    for l in range(1, t):
        if mu[l] == 0:
            continue
        layout = np.kron(np.kron(h.data, np.eye(d ** (l - 1))), np.kron(h.data, np.eye(d ** (t - l - 1))))
        acc += mu[l] * layout
    acc = acc[perm, :]  # left-multiply by the cyclic shift
    acc /= 2.0**k
    return MultiCopyOperator(t, n, acc)


def symmetrize_O(op: MultiCopyOperator) -> MultiCopyOperator:
    """Group average over all copy permutations; commutes with every one."""
    t = op.copies
    if t > MAX_SYMMETRIZE_COPIES:
        raise ResourceLimitError(f"symmetrization caps at {MAX_SYMMETRIZE_COPIES} copies, got {t}")
    d = op.dim_per_copy
    acc = np.zeros_like(op.data)
    for tau in itertools.permutations(range(t)):
        perm = permutation_source_indices(tau, d)
        inv = np.argsort(perm)
        acc += op.data[np.ix_(inv, inv)]
    acc /= math.factorial(t)
    return MultiCopyOperator(t, op.n_qubits_per_copy, acc)


def multicopy_trace(op: MultiCopyOperator, rho: DensityMatrix) -> float:
    """tr(O rho^x(copies))."""
    if rho.n_qubits != op.n_qubits_per_copy:
        raise ValueError("state dimension does not match the operator copies")
    product = _kron_power(rho.data, op.copies)
    return float(np.einsum("ij,ji->", op.data, product).real)


def reduced_O_l(o_sym: MultiCopyOperator, rho: DensityMatrix, l: int) -> MultiCopyOperator:
    """Partial trace of O_sym (1^xl  x  rho^x(t-l)) over the last t-l copies."""
    t = o_sym.copies
    if not 1 <= l <= t:
        raise ValueError(f"l must lie in [1, {t}], got {l}")
    if rho.n_qubits != o_sym.n_qubits_per_copy:
        raise ValueError("state dimension does not match the operator copies")
    if l == t:
        return o_sym
    d = rho.dim
    rest = t - l
    da, db = d**l, d**rest
    weighted = o_sym.data @ np.kron(np.eye(da), _kron_power(rho.data, rest))
    out = np.einsum("ajbj->ab", weighted.reshape(da, db, da, db))
    return MultiCopyOperator(l, o_sym.n_qubits_per_copy, out)


def _kron_power(a: np.ndarray, n: int) -> np.ndarray:
    out = np.eye(1, dtype=complex)
    for _ in range(n):
        out = np.kron(out, a)
    return out


# ---------------------------------------------------------------------------
# variance bound and estimator sizing


def variance_bound(rho: DensityMatrix, h: Observable, k: int, big_l: int) -> float:
    """Upper bound on the variance of a single-subsample moment estimate.

    sum_{l=1}^{k+2} (k+2)!^2 2^{lN} tr(O_l^2) / (l! (k-l+2)!^2 (L-l+1)^l).
    """
    t = k + 2
    if big_l < t:
        raise ValueError(f"subsample size L={big_l} cannot resolve a {t}-copy moment")
    o_sym = symmetrize_O(build_O(h, k))
    n = h.n_qubits
    total = 0.0
    fkt2 = math.factorial(t) ** 2
    for l in range(1, t + 1):
        ol = reduced_O_l(o_sym, rho, l).data
        tr2 = np.trace(ol @ ol).real
        total += (
            fkt2
            * 2.0 ** (l * n)
            * tr2
            / (math.factorial(l) * math.factorial(k - l + 2) ** 2 * (big_l - l + 1) ** l)
        )
    return float(total)


def plan_subsample_size(rho: DensityMatrix, h: Observable, n: int, epsilon: float) -> int:
    """Smallest subsample size L meeting the per-moment accuracy epsilon.

    Ceiling of the max over 1 <= l <= k+2 <= 2n+1 of
    [4(k+2)(k+2)!^2 tr(O_l^2) / (l!(k-l+2)!^2 eps^2)]^(1/l) * 2^N + l - 1,
    clamped to at least 2n+1 so the largest moment stays computable.
    """
    if n < 1:
        raise ValueError("order n must be positive")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    nq = h.n_qubits
    best = 0.0
    for k in range(0, 2 * n):
        t = k + 2
        o_sym = symmetrize_O(build_O(h, k))
        fkt2 = math.factorial(t) ** 2
        for l in range(1, t + 1):
            ol = reduced_O_l(o_sym, rho, l).data
            tr2 = max(np.trace(ol @ ol).real, 0.0)
            base = 4.0 * t * fkt2 * tr2 / (math.factorial(l) * math.factorial(k - l + 2) ** 2 * epsilon**2)
            cand = base ** (1.0 / l) * 2.0**nq + l - 1
            best = max(best, cand)
    return max(int(math.ceil(best)), 2 * n + 1)


def plan_repetitions(n: int, delta: float) -> int:
    """Subsample count I = ceil(8 ln(2n/delta)) for the median-of-means step."""
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if n < 1:
        raise ValueError("order n must be positive")
    raw = 8.0 * math.log(2.0 * n / delta)
    if raw < 1.0:
        warnings.warn("requested confidence is met by a single subsample; clamping I to 1")
        return 1
    return int(math.ceil(raw))
