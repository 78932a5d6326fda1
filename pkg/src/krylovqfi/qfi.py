"""Exact QFI, the symmetrized-product superoperator, and Krylov lower bounds.

Operators are plain complex ndarrays in the computational basis unless a
function says otherwise.  Every spectral routine accepts an optional
precomputed ``Spectrum`` so sweeps over a family of states sharing an
eigenbasis do not pay for repeated diagonalization.

The central objects:

* ``apply_R`` / ``apply_R_inverse`` -- X -> (rho X + X rho)/2 and its
  pseudoinverse on the subspace of Hermitian operators that vanish on the
  doubly-null eigenblock of rho.
* moments ``T_k`` = tr(C R^k(C)) with C = i[rho, H]; their Hankel matrix
  is the Gram matrix of the Krylov generators under the rho-weighted inner
  product.
* ``krylov_bound_exact`` -- the order-n lower bound b^T A^{-1} b, which
  increases strictly with n and reaches the QFI at the terminal order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DegenerateCommutatorError, IllConditionedError, SubspaceTerminatedError
from .states import DensityMatrix, Observable, Spectrum, spectrum

DEGENERATE_TOL = 1e-12
DEFAULT_RANK_TOL = 1e-8
DEFAULT_PROPORTIONALITY_TOL = 1e-8


@dataclass(frozen=True)
class MomentSequence:
    """Values T_0 ... T_{m-1}, tagged with how they were obtained."""

    values: np.ndarray
    provenance: str  # "exact" or "estimated"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).reshape(-1)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if self.provenance not in ("exact", "estimated"):
            raise ValueError(f"unknown provenance {self.provenance!r}")

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class HankelSystem:
    """Moment matrix A and right-hand side b of the order-n bound."""

    a: np.ndarray
    b: np.ndarray
    condition_number: float
    clipped: bool = False


@dataclass(frozen=True)
class KrylovData:
    """Generator stack of a Krylov subspace with its detected terminal order."""

    generators: tuple
    n_star: int
    rank_tol: float


def hankel_from_moments(t: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """A[k, l] = T_{k+l+1} and b = (T_0 ... T_{n-1}) from a moment vector."""
    t = np.asarray(t, dtype=float)
    if t.size < 2 * n:
        raise ValueError(f"need {2 * n} moments for order n={n}, got {t.size}")
    idx = np.arange(n)
    a = t[idx[:, None] + idx[None, :] + 1]
    return a, t[:n].copy()


# ---------------------------------------------------------------------------
# spectral plumbing


def _eigenpair(rho: DensityMatrix, h: Observable, spec: Spectrum | None):
    """Eigenvalues of rho and H rotated into the rho eigenbasis."""
    if rho.n_qubits != h.n_qubits:
        raise ValueError("state and observable dimensions do not match")
    if spec is None:
        spec = spectrum(rho)
    v = spec.eigenvectors
    h_tilde = v.conj().T @ h.data @ v
    return spec.eigenvalues, h_tilde, spec


def _moment_weights(p: np.ndarray, h_tilde: np.ndarray):
    """Per-pair mass c2 = (p_a - p_b)^2 |H_ab|^2 and node w = (p_a + p_b)/2."""
    diff = p[:, None] - p[None, :]
    c2 = diff**2 * np.abs(h_tilde) ** 2
    w = 0.5 * (p[:, None] + p[None, :])
    return c2, w


def _moments_from_pair(c2: np.ndarray, w: np.ndarray, m: int) -> np.ndarray:
    out = np.empty(m)
    acc = c2.copy()
    for k in range(m):
        out[k] = acc.sum()
        if k + 1 < m:
            acc *= w
    return out


# ---------------------------------------------------------------------------
# superoperator calculus


def commutator_C(rho: DensityMatrix, h: Observable) -> np.ndarray:
    """i(rho H - H rho), Hermitian; raises if the commutator vanishes."""
    if rho.n_qubits != h.n_qubits:
        raise ValueError("state and observable dimensions do not match")
    c = 1j * (rho.data @ h.data - h.data @ rho.data)
    if np.linalg.norm(c) <= DEGENERATE_TOL:
        raise DegenerateCommutatorError("state and observable commute; F_Q = 0 is trivial")
    return c


def apply_R(rho: DensityMatrix, x: np.ndarray) -> np.ndarray:
    """(rho X + X rho)/2."""
    x = np.asarray(x)
    if x.shape != rho.data.shape:
        raise ValueError("operator dimension does not match the state")
    return 0.5 * (rho.data @ x + x @ rho.data)


def apply_R_inverse(rho: DensityMatrix, x: np.ndarray, spec: Spectrum | None = None) -> np.ndarray:
    """Pseudoinverse of ``apply_R``.

    The input is first projected onto the subspace where the weighted inner
    product is positive-definite, i.e. matrix elements between two null
    eigenvectors of rho are zeroed; finite-precision inputs routinely drift
    out of that subspace.
    """
    x = np.asarray(x)
    if spec is None:
        spec = spectrum(rho)
    if x.shape != (spec.dim, spec.dim):
        raise ValueError("operator dimension does not match the state")
    p = spec.eigenvalues
    v = spec.eigenvectors
    x_tilde = v.conj().T @ x @ v
    w = 0.5 * (p[:, None] + p[None, :])
    y = np.where(w > 0, x_tilde, 0.0) / np.where(w > 0, w, 1.0)
    return v @ y @ v.conj().T


def sld_L(rho: DensityMatrix, h: Observable, spec: Spectrum | None = None) -> np.ndarray:
    """Solution L of (rho L + L rho)/2 = i[rho, H]."""
    return apply_R_inverse(rho, commutator_C(rho, h), spec=spec)


def weighted_inner(rho: DensityMatrix, x: np.ndarray, y: np.ndarray) -> float:
    """tr[rho (XY + YX)/2], the rho-weighted inner product."""
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != rho.data.shape or y.shape != rho.data.shape:
        raise ValueError("operator dimension does not match the state")
    return float(np.trace(rho.data @ (x @ y + y @ x)).real / 2.0)


def qfi_exact(rho: DensityMatrix, h: Observable, spec: Spectrum | None = None) -> float:
    """Quantum Fisher information of rho with respect to the generator H.

    2 sum_{p_a + p_b > 0} (p_a - p_b)^2 / (p_a + p_b) |<a|H|b>|^2.
    Returns 0 for commuting inputs.
    """
    p, h_tilde, _ = _eigenpair(rho, h, spec)
    c2, w = _moment_weights(p, h_tilde)
    mask = w > 0
    return float(np.sum(c2[mask] / w[mask]))


def moments_exact(rho: DensityMatrix, h: Observable, m: int, spec: Spectrum | None = None) -> MomentSequence:
    """T_0 ... T_{m-1} with T_k = tr(C R^k(C)), via the spectral form.

    T_k = sum_{ab} ((p_a + p_b)/2)^k (p_a - p_b)^2 |<a|H|b>|^2.
    """
    if m < 1:
        raise ValueError("need at least one moment")
    p, h_tilde, _ = _eigenpair(rho, h, spec)
    c2, w = _moment_weights(p, h_tilde)
    t0 = c2.sum()
    if t0 <= DEGENERATE_TOL**2:
        raise DegenerateCommutatorError("state and observable commute; moments vanish")
    return MomentSequence(_moments_from_pair(c2, w, m), "exact")


# ---------------------------------------------------------------------------
# Krylov orders and bounds


def n_star(
    rho: DensityMatrix,
    h: Observable,
    rank_tol: float = DEFAULT_RANK_TOL,
    spec: Spectrum | None = None,
) -> int:
    """Terminal Krylov order: the largest n whose generator Gram matrix,
    the n x n Hankel matrix of T_1 ... T_{2n-1}, stays positive-definite
    above ``rank_tol`` relative to T_1."""
    p, h_tilde, _ = _eigenpair(rho, h, spec)
    c2, w = _moment_weights(p, h_tilde)
    if c2.sum() <= DEGENERATE_TOL**2:
        raise DegenerateCommutatorError("state and observable commute")
    # the subspace dimension cannot exceed the number of distinct nodes
    cap = max(1, np.unique(np.round(w[c2 > 0], 14)).size)
    t = _moments_from_pair(c2, w, 2 * cap + 2)
    threshold = rank_tol * t[1]
    n = 1
    while n + 1 <= cap:
        a, _ = hankel_from_moments(t, n + 1)
        if np.linalg.eigvalsh(a)[0] <= threshold:
            break
        n += 1
    return n


def krylov_terminal_order(rho: DensityMatrix, h: Observable, spec: Spectrum | None = None) -> int:
    """Exact dimension of the terminal Krylov subspace.

    The superoperator acts diagonally in the eigenbasis with node values
    (p_a + p_b)/2, so the terminal order equals the number of distinct
    nodes (rounded to 14 decimals) carrying commutator mass.  Unlike
    ``n_star`` this does not depend on Hankel conditioning, but the Hankel
    solve itself is only trustworthy up to ``n_star``; use the projection
    route for orders beyond it.
    """
    p, h_tilde, _ = _eigenpair(rho, h, spec)
    c2, w = _moment_weights(p, h_tilde)
    if c2.sum() <= DEGENERATE_TOL**2:
        raise DegenerateCommutatorError("state and observable commute")
    return max(1, np.unique(np.round(w[c2 > 0], 14)).size)


def krylov_generators(rho: DensityMatrix, h: Observable, n: int, spec: Spectrum | None = None) -> KrylovData:
    """The stack {R^k(C)}_{k<n} in the computational basis, with n* attached."""
    if spec is None:
        spec = spectrum(rho)
    ns = n_star(rho, h, spec=spec)
    c = commutator_C(rho, h)
    gens = [c]
    for _ in range(n - 1):
        gens.append(apply_R(rho, gens[-1]))
    return KrylovData(tuple(gens), ns, DEFAULT_RANK_TOL)


def proportionality_coefficient(rho: DensityMatrix, h: Observable) -> float:
    """Least-squares c minimizing ||[rho^2, H] - c [rho, H]||_F."""
    c1 = rho.data @ h.data - h.data @ rho.data
    rho2 = rho.data @ rho.data
    c2 = rho2 @ h.data - h.data @ rho2
    denom = np.vdot(c1, c1).real
    if denom <= DEGENERATE_TOL**2:
        raise DegenerateCommutatorError("state and observable commute")
    return float(np.vdot(c1, c2).real / denom)


def proportionality_check(rho: DensityMatrix, h: Observable, tol: float = DEFAULT_PROPORTIONALITY_TOL) -> bool:
    """True iff [rho, H] and [rho^2, H] are parallel, the terminal-order-one test."""
    c1 = rho.data @ h.data - h.data @ rho.data
    rho2 = rho.data @ rho.data
    c2 = rho2 @ h.data - h.data @ rho2
    denom = np.vdot(c1, c1).real
    if denom <= DEGENERATE_TOL**2:
        raise DegenerateCommutatorError("state and observable commute")
    coeff = np.vdot(c1, c2).real / denom
    resid = np.linalg.norm(c2 - coeff * c1)
    return bool(resid <= tol * np.linalg.norm(c2))


def hankel_system_exact(
    rho: DensityMatrix, h: Observable, n: int, spec: Spectrum | None = None
) -> HankelSystem:
    """Exact (A, b) for order n, with the condition number of A attached."""
    t = moments_exact(rho, h, 2 * n, spec=spec).values
    a, b = hankel_from_moments(t, n)
    eigs = np.linalg.eigvalsh(a)
    cond = float(eigs[-1] / eigs[0]) if eigs[0] > 0 else float("inf")
    return HankelSystem(a, b, cond, clipped=False)


def _solve_spd(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cholesky solve with one iterative-refinement pass."""
    chol = scipy.linalg.cho_factor(a, lower=True)
    x = scipy.linalg.cho_solve(chol, b)
    x += scipy.linalg.cho_solve(chol, b - a @ x)
    return x


def krylov_bound_exact(
    rho: DensityMatrix,
    h: Observable,
    n: int,
    rank_tol: float = DEFAULT_RANK_TOL,
    spec: Spectrum | None = None,
) -> float:
    """Order-n lower bound on the QFI from exact moments: b^T A^{-1} b.

    Exact A is positive-definite for n up to the terminal order, so the
    solve is a plain Cholesky factorization; a factorization failure is
    reported rather than regularized away.
    """
    if n < 1:
        raise ValueError("order n must be positive")
    if spec is None:
        spec = spectrum(rho)
    ns = n_star(rho, h, rank_tol=rank_tol, spec=spec)
    if n > ns:
        raise SubspaceTerminatedError(n, ns)
    t = moments_exact(rho, h, 2 * n, spec=spec).values
    a, b = hankel_from_moments(t, n)
    try:
        x = _solve_spd(a, b)
    except np.linalg.LinAlgError:
        eigs = np.linalg.eigvalsh(a)
        cond = float(eigs[-1] / abs(eigs[0])) if eigs[0] != 0 else float("inf")
        raise IllConditionedError(
            "exact Hankel matrix failed the positive-definite factorization", cond
        ) from None
    return float(b @ x)


def krylov_hierarchy(
    rho: DensityMatrix,
    h: Observable,
    n_max: int | None = None,
    rank_tol: float = DEFAULT_RANK_TOL,
    spec: Spectrum | None = None,
) -> np.ndarray:
    """B_1 ... B_{min(n_max, n*)} as an array."""
    if spec is None:
        spec = spectrum(rho)
    ns = n_star(rho, h, rank_tol=rank_tol, spec=spec)
    top = ns if n_max is None else min(n_max, ns)
    t = moments_exact(rho, h, 2 * top, spec=spec).values
    out = np.empty(top)
    for n in range(1, top + 1):
        a, b = hankel_from_moments(t, n)
        out[n - 1] = float(b @ _solve_spd(a, b))
    return out


# ---------------------------------------------------------------------------
# independent projection route (weighted Gram-Schmidt), used as an oracle
# against the Hankel solve and for the orthogonality/Pythagoras identities


def krylov_approximation(
    rho: DensityMatrix,
    h: Observable,
    n: int,
    spec: Spectrum | None = None,
) -> tuple[np.ndarray, float]:
    """Best order-n Krylov approximation L_n to the SLD-like operator.

    Orthonormalizes the generators under the rho-weighted inner product
    (modified Gram-Schmidt with a re-orthogonalization pass) and projects
    L onto their span.  Returns (L_n in the computational basis, ||L_n||^2).
    """
    if n < 1:
        raise ValueError("order n must be positive")
    p, h_tilde, spec = _eigenpair(rho, h, spec)
    diff = p[:, None] - p[None, :]
    c_tilde = 1j * diff * h_tilde
    if np.linalg.norm(c_tilde) <= DEGENERATE_TOL:
        raise DegenerateCommutatorError("state and observable commute")
    w = 0.5 * (p[:, None] + p[None, :])

    def inner(x, y):
        return float(np.sum(w * (x.conj() * y)).real)

    basis = []
    g = c_tilde.copy()
    for _ in range(n):
        for q in basis:
            g = g - inner(q, g) * q
        for q in basis:  # second pass keeps orthogonality at high condition
            g = g - inner(q, g) * q
        nrm = np.sqrt(inner(g, g))
        if nrm <= 0:
            raise SubspaceTerminatedError(n, len(basis))
        basis.append(g / nrm)
        g = w * basis[-1]  # next generator direction, R applied in eigenbasis

    l_tilde = np.divide(c_tilde, w, out=np.zeros_like(c_tilde), where=w > 0)
    coeffs = np.array([inner(q, l_tilde) for q in basis])
    ln_tilde = np.tensordot(coeffs, np.array(basis), axes=1)
    v = spec.eigenvectors
    l_n = v @ ln_tilde @ v.conj().T
    return l_n, float(np.sum(coeffs**2))


def krylov_bound_projection(rho: DensityMatrix, h: Observable, n: int, spec: Spectrum | None = None) -> float:
    """Order-n bound via the projection route; agrees with the Hankel solve."""
    return krylov_approximation(rho, h, n, spec=spec)[1]
