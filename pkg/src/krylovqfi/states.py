"""N-qubit states and observables used throughout the experiments.

All values are immutable after construction and safe to share across
threads.  Dense matrices only; the hard cap is N <= 14 qubits for
single-copy operators.  Full positive-semidefiniteness is verified at
construction up to dimension 256 (N <= 8); larger states rely on the
factories, which are PSD by construction, and on ``validate()``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import PAULIS, PAULI_I, PAULI_Z, frozen, hermiticity_defect, kron_all

HERMITICITY_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = 1e-10
NORM_TOL = 1e-12
DEFAULT_ZERO_TOL = 1e-10

MAX_QUBITS = 14
_EAGER_PSD_DIM = 256


def _check_n_qubits(n_qubits: int) -> int:
    n = int(n_qubits)
    if n < 1:
        raise ValueError(f"need at least one qubit, got {n_qubits}")
    if n > MAX_QUBITS:
        raise ValueError(f"N={n} exceeds the dense-representation cap N<={MAX_QUBITS}")
    return n


@dataclass(frozen=True)
class DensityMatrix:
    """Unit-trace, Hermitian, positive-semidefinite state of N qubits."""

    n_qubits: int
    data: np.ndarray

    def __post_init__(self):
        n = _check_n_qubits(self.n_qubits)
        d = 2**n
        data = np.asarray(self.data, dtype=complex)
        if data.shape != (d, d):
            raise ValueError(f"expected a {d}x{d} matrix for N={n}, got {data.shape}")
        if hermiticity_defect(data) > HERMITICITY_TOL:
            raise ValueError("density matrix is not Hermitian within 1e-12")
        if abs(np.trace(data).real - 1.0) > TRACE_TOL or abs(np.trace(data).imag) > TRACE_TOL:
            raise ValueError("density matrix does not have unit trace within 1e-12")
        object.__setattr__(self, "n_qubits", n)
        object.__setattr__(self, "data", frozen(data))
        if d <= _EAGER_PSD_DIM:
            self._check_psd()

    def _check_psd(self):
        lo = float(np.linalg.eigvalsh(self.data)[0])
        if lo < -PSD_TOL:
            raise ValueError(f"density matrix has eigenvalue {lo:.3e} < -1e-10")

    def validate(self) -> None:
        """Re-run all invariants, including PSD, regardless of dimension."""
        self._check_psd()

    @property
    def dim(self) -> int:
        return 2**self.n_qubits


@dataclass(frozen=True)
class PureState:
    """Normalized state vector of N qubits."""

    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        n = _check_n_qubits(self.n_qubits)
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape != (2**n,):
            raise ValueError(f"expected {2 ** n} amplitudes for N={n}, got {amps.shape}")
        if abs(np.vdot(amps, amps).real - 1.0) > NORM_TOL:
            raise ValueError("state vector is not normalized within 1e-12")
        object.__setattr__(self, "n_qubits", n)
        object.__setattr__(self, "amplitudes", frozen(amps))

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    def projector(self) -> DensityMatrix:
        return DensityMatrix(self.n_qubits, np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True)
class Observable:
    """Hermitian generator H.

    ``site_terms`` is an optional structured form: a tuple of
    ``(site, 2x2 matrix)`` pairs whose embedded sum equals ``data``.
    Estimators exploit it to avoid dense 2^N contractions.
    """

    n_qubits: int
    data: np.ndarray
    site_terms: tuple | None = field(default=None)

    def __post_init__(self):
        n = _check_n_qubits(self.n_qubits)
        d = 2**n
        data = np.asarray(self.data, dtype=complex)
        if data.shape != (d, d):
            raise ValueError(f"expected a {d}x{d} matrix for N={n}, got {data.shape}")
        if hermiticity_defect(data) > HERMITICITY_TOL:
            raise ValueError("observable is not Hermitian within 1e-12")
        object.__setattr__(self, "n_qubits", n)
        object.__setattr__(self, "data", frozen(data))
        if self.site_terms is not None:
            terms = tuple((int(s), frozen(np.asarray(g, dtype=complex))) for s, g in self.site_terms)
            for s, g in terms:
                if not (0 <= s < n) or g.shape != (2, 2):
                    raise ValueError("site_terms must be (site, 2x2) pairs within range")
            object.__setattr__(self, "site_terms", terms)

    @property
    def dim(self) -> int:
        return 2**self.n_qubits


@dataclass(frozen=True)
class Spectrum:
    """Eigendecomposition of a state, with tiny eigenvalues snapped to zero.

    Eigenvalues are sorted in descending order; ``eigenvectors`` holds the
    matching eigenvectors as columns.  Values below ``zero_tol`` are set to
    exactly 0 and the rest are renormalized to sum to one, so downstream
    code can test ``p == 0`` instead of carrying a tolerance around.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    zero_tol: float = DEFAULT_ZERO_TOL

    def __post_init__(self):
        p = np.asarray(self.eigenvalues, dtype=float)
        v = np.asarray(self.eigenvectors, dtype=complex)
        if p.ndim != 1 or v.shape != (p.size, p.size):
            raise ValueError("eigenvalues/eigenvectors have inconsistent shapes")
        if abs(p.sum() - 1.0) > 1e-10:
            raise ValueError("eigenvalues do not sum to 1 within 1e-10")
        object.__setattr__(self, "eigenvalues", frozen(p))
        object.__setattr__(self, "eigenvectors", frozen(v))

    @property
    def dim(self) -> int:
        return self.eigenvalues.size

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


def spectrum(rho: DensityMatrix, zero_tol: float = DEFAULT_ZERO_TOL) -> Spectrum:
    """Descending eigendecomposition of ``rho`` with zero snapping."""
    if zero_tol < 0:
        raise ValueError("zero_tol must be nonnegative")
    p, v = np.linalg.eigh(np.asarray(rho.data))
    p = p[::-1].copy()
    v = v[:, ::-1].copy()
    p[p < zero_tol] = 0.0
    s = p.sum()
    if s <= 0:
        raise ValueError("state has no eigenvalue above zero_tol")
    p /= s
    return Spectrum(p, v, zero_tol)


# ---------------------------------------------------------------------------
# factories


def ghz_state(n_qubits: int) -> PureState:
    """(|0...0> + |1...1>)/sqrt(2)."""
    n = _check_n_qubits(n_qubits)
    amps = np.zeros(2**n, dtype=complex)
    amps[0] = amps[-1] = 1.0 / math.sqrt(2.0)
    return PureState(n, amps)


def random_pure_state(n_qubits: int, rng_seed: int) -> PureState:
    """Haar-random state vector, deterministic per seed."""
    n = _check_n_qubits(n_qubits)
    rng = np.random.default_rng(rng_seed)
    g = rng.standard_normal(2**n) + 1j * rng.standard_normal(2**n)
    return PureState(n, g / np.linalg.norm(g))


def pseudo_pure(psi: PureState, p: float) -> DensityMatrix:
    """(1-p)|psi><psi| + p*I/2^N."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"mixing weight p must lie in [0, 1], got {p}")
    d = psi.dim
    rho = (1.0 - p) * np.outer(psi.amplitudes, psi.amplitudes.conj())
    rho[np.diag_indices(d)] += p / d
    return DensityMatrix(psi.n_qubits, rho)


def _paired_basis_states(n_qubits: int, i: int) -> tuple[np.ndarray, np.ndarray]:
    """The two combinations (|i> +/- |comp(i)>)/sqrt(2) as dense vectors."""
    d = 2**n_qubits
    ibar = (d - 1) ^ i
    plus = np.zeros(d, dtype=complex)
    minus = np.zeros(d, dtype=complex)
    plus[i] += 1 / math.sqrt(2)
    plus[ibar] += 1 / math.sqrt(2)
    minus[i] += 1 / math.sqrt(2)
    minus[ibar] -= 1 / math.sqrt(2)
    return plus, minus


def bound_entangled(n_qubits: int, k: int) -> DensityMatrix:
    """Bound entangled state graded by Hamming weight.

    Mixes projectors onto (|i> + |comp(i)>)/sqrt(2) for all bit strings i
    of Hamming weight below k (weight lambda) with both +/- combinations
    at weight exactly k (weight lambda/2 each), where
    lambda = 1/sum_{j<=k} C(N, j).  The sum at weight k is taken literally
    over every such i, so at k = N/2 complementary pairs are visited twice;
    the normalization absorbs the doubling.
    """
    n = _check_n_qubits(n_qubits)
    if n < 2:
        raise ValueError("bound entangled construction needs N >= 2")
    if not 1 <= k <= n // 2:
        raise ValueError(f"k must satisfy 1 <= k <= floor(N/2) = {n // 2}, got {k}")
    d = 2**n
    lam = 1.0 / sum(math.comb(n, j) for j in range(k + 1))
    rho = np.zeros((d, d), dtype=complex)
    for i in range(d):
        w = i.bit_count()
        if w < k:
            plus, _ = _paired_basis_states(n, i)
            rho += lam * np.outer(plus, plus.conj())
        elif w == k:
            plus, minus = _paired_basis_states(n, i)
            rho += (lam / 2.0) * np.outer(plus, plus.conj())
            rho += (lam / 2.0) * np.outer(minus, minus.conj())
    return DensityMatrix(n, rho)


def collective_spin_z(n_qubits: int) -> Observable:
    """Half the sum of Pauli-Z over all qubits, as a structured observable."""
    n = _check_n_qubits(n_qubits)
    d = 2**n
    counts = np.array([s.bit_count() for s in range(d)])
    diag = (n - 2 * counts) / 2.0  # (#0 - #1)/2 per basis state
    data = np.diag(diag.astype(complex))
    terms = tuple((j, 0.5 * PAULI_Z) for j in range(n))
    return Observable(n, data, site_terms=terms)


def pauli_string(labels: str) -> Observable:
    """Tensor product of single-qubit Paulis, e.g. ``pauli_string("XIZ")``."""
    labels = labels.upper()
    if not labels or any(c not in PAULIS for c in labels):
        raise ValueError(f"invalid Pauli labels {labels!r}")
    return Observable(len(labels), kron_all([PAULIS[c] for c in labels]))


def random_pauli_string(n_qubits: int, rng: np.random.Generator) -> Observable:
    """Uniformly random non-identity Pauli string on N qubits."""
    n = _check_n_qubits(n_qubits)
    letters = "IXYZ"
    while True:
        labels = "".join(letters[i] for i in rng.integers(0, 4, size=n))
        if set(labels) != {"I"}:
            return pauli_string(labels)


def random_density_matrix(n_qubits: int, rank: int, rng_seed: int) -> DensityMatrix:
    """Hilbert-Schmidt-induced random state of the given rank.

    Draws G with independent standard complex normal entries and returns
    G G^dag / tr(G G^dag).  Deterministic per seed.
    """
    n = _check_n_qubits(n_qubits)
    d = 2**n
    if not 1 <= rank <= d:
        raise ValueError(f"rank must lie in [1, {d}], got {rank}")
    rng = np.random.default_rng(rng_seed)
    g = (rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))) / math.sqrt(2.0)
    rho = g @ g.conj().T
    rho /= np.trace(rho).real
    return DensityMatrix(n, rho)


def fidelity(rho: DensityMatrix, psi: PureState) -> float:
    """Overlap <psi|rho|psi>."""
    if rho.n_qubits != psi.n_qubits:
        raise ValueError("state dimensions do not match")
    val = np.vdot(psi.amplitudes, rho.data @ psi.amplitudes)
    return float(val.real)


# ---------------------------------------------------------------------------
# analytic spectra for the two experiment families
#
# The sweep harness needs eigendecompositions of large pseudo-pure and
# Hamming-graded states; both are known in closed form, which avoids a dense
# eigh at N = 12.  Cross-checked against ``spectrum`` in the test suite.


def pseudo_pure_spectrum(psi: PureState, p: float) -> Spectrum:
    """Closed-form spectrum of ``pseudo_pure(psi, p)``.

    One eigenvalue (1-p) + p/2^N on |psi>, and p/2^N on any completion of
    |psi> to an orthonormal basis.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"mixing weight p must lie in [0, 1], got {p}")
    d = psi.dim
    # Householder reflection mapping e_0 -> |psi| gives an orthonormal basis
    # whose first column is |psi> (up to phase, which we fix explicitly).
    v = np.eye(d, dtype=complex)
    amps = psi.amplitudes
    w = amps.copy()
    phase = w[0] / abs(w[0]) if abs(w[0]) > 1e-14 else 1.0
    w = w / phase
    w[0] += 1.0
    w /= np.linalg.norm(w)
    v -= 2.0 * np.outer(w, w.conj())
    v *= -phase
    p_vec = np.full(d, p / d)
    p_vec[0] = (1.0 - p) + p / d
    return Spectrum(p_vec, v)


def bound_entangled_spectrum(n_qubits: int, k: int) -> Spectrum:
    """Closed-form spectrum of ``bound_entangled(n_qubits, k)``.

    The +/- combinations over complementary bit-string pairs form a full
    eigenbasis; eigenvalues are lambda, lambda/2 (doubled at k = N/2), or 0
    according to the Hamming weight of the pair.
    """
    n = _check_n_qubits(n_qubits)
    if not 1 <= k <= n // 2:
        raise ValueError(f"k must satisfy 1 <= k <= floor(N/2) = {n // 2}, got {k}")
    d = 2**n
    lam = 1.0 / sum(math.comb(n, j) for j in range(k + 1))
    vecs = np.zeros((d, d), dtype=complex)
    vals = np.zeros(d)
    col = 0
    for i in range(d):
        ibar = (d - 1) ^ i
        if i > ibar:
            continue  # one representative per complementary pair
        w = min(i.bit_count(), ibar.bit_count())
        plus, minus = _paired_basis_states(n, i)
        if w < k:
            pv, mv = lam, 0.0
        elif w == k:
            # at k = N/2 the literal sum visits each pair twice
            mult = 2.0 if 2 * k == n else 1.0
            pv = mv = mult * lam / 2.0
        else:
            pv = mv = 0.0
        vecs[:, col] = plus
        vals[col] = pv
        vecs[:, col + 1] = minus
        vals[col + 1] = mv
        col += 2
    order = np.argsort(-vals, kind="stable")
    return Spectrum(vals[order], vecs[:, order])


# ---------------------------------------------------------------------------
# JSON descriptions (consumed by the CLI config loader)


def state_from_description(desc: dict) -> DensityMatrix:
    """Build a state from a JSON-style description.

    Recognized kinds::

        {"kind": "ghz", "n_qubits": N}
        {"kind": "pseudo_pure", "n_qubits": N, "p": p}          # GHZ core
        {"kind": "bound_entangled", "n_qubits": N, "k": k}
        {"kind": "random", "n_qubits": N, "rank": r, "seed": s}
    """
    kind = desc.get("kind")
    n = desc.get("n_qubits")
    if kind == "ghz":
        return ghz_state(n).projector()
    if kind == "pseudo_pure":
        return pseudo_pure(ghz_state(n), float(desc["p"]))
    if kind == "bound_entangled":
        return bound_entangled(n, int(desc["k"]))
    if kind == "random":
        return random_density_matrix(n, int(desc["rank"]), int(desc["seed"]))
    raise ValueError(f"unknown state kind {kind!r}")
