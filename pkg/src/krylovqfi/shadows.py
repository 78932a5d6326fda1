"""Simulated randomized-measurement data: random local rotations, Born-rule
sampling, and compact snapshot records.

Randomness layout (part of the reproducibility contract): snapshots are
grouped in fixed chunks of 1024; chunk c draws from an independent stream
seeded by ``(master_seed, c)``.  Within a chunk the stream is consumed as
(a) one block of per-qubit unitary ids for all snapshots, then (b) one
outcome uniform per snapshot.  A snapshot's randomness therefore depends
only on ``(master_seed, snapshot_index)``, and batches are bit-identical
for any worker count.

Ensembles: the 24-element single-qubit Clifford group (default; ids are
table indices in the canonical order documented below) and Haar-random
single-qubit unitaries (ids are 63-bit integer keys; the unitary is the
deterministic function ``haar_unitary_from_key``).  The Clifford table is
generated at import by closing {H, S} under multiplication, canonicalizing
the global phase (first nonzero entry made real positive), and sorting the
rounded entry tuples; this fixed order makes snapshot files portable.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InsufficientDataError
from .linalg import kron_all, random_unitary_2x2
from .states import DensityMatrix

CHUNK = 1024
_MAGIC = b"KQSB"
_FORMAT_VERSION = 1


def _clifford_table() -> np.ndarray:
    h = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2.0)
    s = np.array([[1, 0], [0, 1j]], dtype=complex)

    def canonical(u):
        flat = u.reshape(-1)
        pivot = flat[np.argmax(np.abs(flat) > 1e-9)]
        u = u * (abs(pivot) / pivot)
        return np.round(u, 12) + 0.0  # normalize -0.0

    def key(u):
        return tuple((round(z.real, 10), round(z.imag, 10)) for z in u.reshape(-1))

    found = {}
    frontier = [canonical(np.eye(2, dtype=complex))]
    while frontier:
        u = frontier.pop()
        k = key(u)
        if k in found:
            continue
        found[k] = u
        for g in (h, s):
            frontier.append(canonical(g @ u))
    if len(found) != 24:
        raise AssertionError(f"single-qubit Clifford closure produced {len(found)} elements")

    def snap_exact(u):
        # entries are 0, 1, or 1/sqrt(2) in magnitude with phases at pi/4 steps
        mag = np.abs(u)
        mags = np.array([0.0, np.sqrt(0.5), 1.0])
        mag = mags[np.argmin(np.abs(mag[..., None] - mags), axis=-1)]
        phase = np.round(np.angle(u) / (np.pi / 4)) * (np.pi / 4)
        return mag * np.exp(1j * phase)

    ordered = [snap_exact(found[k]) for k in sorted(found)]
    return np.stack(ordered)


CLIFFORD_TABLE = _clifford_table()
CLIFFORD_TABLE.setflags(write=False)

# per-(id, outcome) shadow factor 3 u^dag |s><s| u - 1
_proj = np.stack([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])]).astype(complex)
CLIFFORD_FACTORS = (
    3.0 * np.einsum("uab,sbc,ucd->usad", CLIFFORD_TABLE.conj().transpose(0, 2, 1), _proj, CLIFFORD_TABLE)
    - np.eye(2)
)
CLIFFORD_FACTORS.setflags(write=False)


def haar_unitary_from_key(key: int) -> np.ndarray:
    """Deterministic Haar-distributed 2x2 unitary derived from an id key."""
    return random_unitary_2x2(np.random.default_rng(np.uint64(key)))


class CliffordEnsemble:
    name = "clifford"
    id_dtype = np.uint8
    size = 24

    def sample_ids(self, rng: np.random.Generator, shape) -> np.ndarray:
        return rng.integers(0, self.size, size=shape, dtype=self.id_dtype)

    def unitaries(self, ids: np.ndarray) -> np.ndarray:
        return CLIFFORD_TABLE[np.asarray(ids)]

    def factors(self, ids: np.ndarray, bits: np.ndarray) -> np.ndarray:
        """Shadow factors 3 u^dag |s><s| u - 1, any leading shape."""
        return CLIFFORD_FACTORS[np.asarray(ids), np.asarray(bits)]


class HaarEnsemble:
    name = "haar"
    id_dtype = np.uint64
    size = 2**63

    def sample_ids(self, rng: np.random.Generator, shape) -> np.ndarray:
        return rng.integers(0, self.size, size=shape, dtype=self.id_dtype)

    def unitaries(self, ids: np.ndarray) -> np.ndarray:
        ids = np.asarray(ids)
        out = np.empty(ids.shape + (2, 2), dtype=complex)
        for idx in np.ndindex(ids.shape):
            out[idx] = haar_unitary_from_key(int(ids[idx]))
        return out

    def factors(self, ids: np.ndarray, bits: np.ndarray) -> np.ndarray:
        u = self.unitaries(ids)
        bits = np.asarray(bits)
        proj = _proj[bits]
        return 3.0 * np.einsum("...ba,...bc,...cd->...ad", u.conj(), proj, u) - np.eye(2)


ENSEMBLES = {"clifford": CliffordEnsemble(), "haar": HaarEnsemble()}


def get_ensemble(name):
    if isinstance(name, (CliffordEnsemble, HaarEnsemble)):
        return name
    try:
        return ENSEMBLES[name]
    except KeyError:
        raise ValueError(f"unknown ensemble {name!r}") from None


@dataclass(frozen=True)
class Snapshot:
    """One randomized measurement: per-qubit unitary ids and outcome bits."""

    unitary_ids: np.ndarray
    outcomes: np.ndarray

    def __post_init__(self):
        ids = np.atleast_1d(np.asarray(self.unitary_ids))
        bits = np.atleast_1d(np.asarray(self.outcomes, dtype=np.uint8))
        if ids.shape != bits.shape or ids.ndim != 1:
            raise ValueError("ids and outcomes must be equal-length vectors")
        if np.any(bits > 1):
            raise ValueError("outcomes must be bits")
        ids = ids.copy()
        bits = bits.copy()
        ids.setflags(write=False)
        bits.setflags(write=False)
        object.__setattr__(self, "unitary_ids", ids)
        object.__setattr__(self, "outcomes", bits)

    @property
    def n_qubits(self) -> int:
        return self.unitary_ids.size


def _interleaved_state_tensor(rho: DensityMatrix) -> np.ndarray:
    """The state as an N-axis tensor with row/col qubit indices fused per site."""
    n = rho.n_qubits
    full = rho.data.reshape((2,) * (2 * n))
    order = [axis for j in range(n) for axis in (j, n + j)]
    return np.ascontiguousarray(full.transpose(order).reshape((4,) * n))


def _born_probabilities(rho_tensor: np.ndarray, unitaries: np.ndarray) -> np.ndarray:
    """diag(U rho U^dag) for a batch of local rotations, without forming U rho U^dag.

    p(s) factorizes through per-qubit 2x4 maps M_j[s, (a,b)] = u[s,a] u*[s,b]
    contracted against the fused-index state tensor, qubit by qubit.
    """
    b, n = unitaries.shape[:2]
    m = np.einsum("bjsa,bjsc->bjsac", unitaries, unitaries.conj()).reshape(b, n, 2, 4)
    cur = rho_tensor.reshape(1, 1, 4, 4 ** (n - 1)).astype(complex)
    cur = np.matmul(m[:, 0][:, None], cur)  # (B, 1, 2, R)
    for j in range(1, n):
        p = cur.shape[1] * cur.shape[2]
        cur = cur.reshape(b, p, 4, 4 ** (n - 1 - j))
        cur = np.matmul(m[:, j][:, None], cur)
    return np.maximum(cur.reshape(b, 2**n).real, 0.0)


def outcome_distribution(rho: DensityMatrix, ids: np.ndarray, ensemble="clifford") -> np.ndarray:
    """Born probabilities over all 2^N bit strings after the local rotation."""
    ens = get_ensemble(ensemble)
    u = ens.unitaries(np.asarray(ids).reshape(1, -1))
    return _born_probabilities(_interleaved_state_tensor(rho), u)[0]


def _bits_from_indices(s: np.ndarray, n: int) -> np.ndarray:
    """Outcome bit matrix from flat basis indices; qubit 0 is the MSB."""
    shifts = np.arange(n - 1, -1, -1)
    return ((np.asarray(s)[..., None] >> shifts) & 1).astype(np.uint8)


def sample_snapshot(rho: DensityMatrix, ensemble="clifford", rng: np.random.Generator | None = None) -> Snapshot:
    """Draw one randomized measurement from the given stream."""
    ens = get_ensemble(ensemble)
    if rng is None:
        rng = np.random.default_rng()
    n = rho.n_qubits
    ids = ens.sample_ids(rng, (n,))
    probs = outcome_distribution(rho, ids, ens)
    probs = np.clip(probs, 0.0, None)
    probs /= probs.sum()
    s = int(rng.choice(probs.size, p=probs))
    return Snapshot(ids, _bits_from_indices(np.array(s), n))


def snapshot_to_matrix(snap: Snapshot, ensemble="clifford") -> np.ndarray:
    """Dense 2^N x 2^N shadow matrix: tensor product of per-qubit factors.

    Unit trace and Hermitian, but generally not positive (factor spectrum
    is {2, -1}).
    """
    ens = get_ensemble(ensemble)
    factors = ens.factors(snap.unitary_ids, snap.outcomes)
    return kron_all(list(factors))


@dataclass(frozen=True)
class ShadowBatch:
    """Seeded collection of snapshots in compact (ids, bits) form."""

    n_qubits: int
    ensemble: str
    master_seed: int
    ids: np.ndarray  # (M, N)
    bits: np.ndarray  # (M, N) uint8

    def __post_init__(self):
        ids = np.ascontiguousarray(self.ids)
        bits = np.ascontiguousarray(self.bits, dtype=np.uint8)
        if ids.shape != bits.shape or ids.ndim != 2 or ids.shape[1] != self.n_qubits:
            raise ValueError("ids/bits must be (M, N) arrays")
        ids.setflags(write=False)
        bits.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "bits", bits)

    def __len__(self) -> int:
        return self.ids.shape[0]

    def __getitem__(self, m: int) -> Snapshot:
        return Snapshot(self.ids[m], self.bits[m])

    def snapshots(self):
        return [self[m] for m in range(len(self))]

    # -- serialization: fixed little-endian layout, documented in save() --

    def save(self, path) -> None:
        """Write the batch to ``path`` plus a JSON metadata sidecar.

        Layout: magic 'KQSB', then '<IIIqQI' header fields (format version,
        n_qubits, ensemble code 0=clifford/1=haar, master_seed, M, chunk
        size), then the C-order ids array (u1 for clifford, u8 for haar),
        then the C-order bits array (u1).
        """
        path = Path(path)
        code = 0 if self.ensemble == "clifford" else 1
        header = _MAGIC + struct.pack(
            "<IIIqQI", _FORMAT_VERSION, self.n_qubits, code, self.master_seed, len(self), CHUNK
        )
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(self.ids.tobytes())
            fh.write(self.bits.tobytes())
        meta = {
            "format_version": _FORMAT_VERSION,
            "n_qubits": self.n_qubits,
            "ensemble": self.ensemble,
            "master_seed": self.master_seed,
            "n_snapshots": len(self),
            "chunk_size": CHUNK,
        }
        path.with_suffix(path.suffix + ".meta.json").write_text(json.dumps(meta, indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "ShadowBatch":
        raw = Path(path).read_bytes()
        if raw[:4] != _MAGIC:
            raise ValueError("not a shadow batch file")
        version, n, code, seed, m, _chunk = struct.unpack_from("<IIIqQI", raw, 4)
        if version != _FORMAT_VERSION:
            raise ValueError(f"unsupported format version {version}")
        ensemble = "clifford" if code == 0 else "haar"
        dtype = np.uint8 if code == 0 else np.uint64
        off = 4 + struct.calcsize("<IIIqQI")
        ids = np.frombuffer(raw, dtype=dtype, count=m * n, offset=off).reshape(m, n)
        off += ids.nbytes
        bits = np.frombuffer(raw, dtype=np.uint8, count=m * n, offset=off).reshape(m, n)
        return cls(n, ensemble, seed, ids.copy(), bits.copy())


def _chunk_rng(master_seed: int, chunk_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((master_seed, chunk_index)))


def _generate_chunk(rho_tensor: np.ndarray, n: int, ens, master_seed: int, chunk_index: int, count: int):
    """ids and outcome bits for snapshots [1024*c, 1024*c + count)."""
    rng = _chunk_rng(master_seed, chunk_index)
    d = 2**n
    ids = ens.sample_ids(rng, (count, n))
    uniforms = rng.random(count)
    bits = np.empty((count, n), dtype=np.uint8)
    # sub-batch to bound the (B, 4^N) working set
    step = max(1, min(count, (1 << 23) // (d * d)))
    for lo in range(0, count, step):
        hi = min(lo + step, count)
        u = ens.unitaries(ids[lo:hi])
        probs = _born_probabilities(rho_tensor, u)
        probs /= probs.sum(axis=1, keepdims=True)
        cum = np.cumsum(probs, axis=1)
        outcomes = (uniforms[lo:hi, None] > cum).sum(axis=1)
        np.clip(outcomes, 0, d - 1, out=outcomes)
        bits[lo:hi] = _bits_from_indices(outcomes, n)
    return ids, bits


def generate_batch(
    rho: DensityMatrix,
    m: int,
    ensemble="clifford",
    master_seed: int = 0,
    workers: int = 1,
) -> ShadowBatch:
    """M seeded snapshots; identical output for any ``workers`` value."""
    if m < 1:
        raise InsufficientDataError("need at least one snapshot")
    if master_seed < 0:
        raise ValueError("master_seed must be nonnegative")
    ens = get_ensemble(ensemble)
    n_chunks = (m + CHUNK - 1) // CHUNK
    counts = [min(CHUNK, m - c * CHUNK) for c in range(n_chunks)]
    rho_tensor = _interleaved_state_tensor(rho)
    n = rho.n_qubits
    if workers > 1 and n_chunks > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(
                pool.map(lambda c: _generate_chunk(rho_tensor, n, ens, master_seed, c, counts[c]), range(n_chunks))
            )
    else:
        parts = [_generate_chunk(rho_tensor, n, ens, master_seed, c, counts[c]) for c in range(n_chunks)]
    ids = np.concatenate([p[0] for p in parts], axis=0)
    bits = np.concatenate([p[1] for p in parts], axis=0)
    return ShadowBatch(rho.n_qubits, ens.name, master_seed, ids, bits)


def batch_factors(batch: ShadowBatch, start: int = 0, stop: int | None = None) -> np.ndarray:
    """(L, N, 2, 2) shadow factors for a contiguous snapshot range."""
    stop = len(batch) if stop is None else stop
    ens = get_ensemble(batch.ensemble)
    return ens.factors(batch.ids[start:stop], batch.bits[start:stop])


def batch_mean_matrix(batch: ShadowBatch, start: int = 0, stop: int | None = None) -> np.ndarray:
    """Mean of the dense snapshot matrices over a range (the state estimate)."""
    stop = len(batch) if stop is None else stop
    n = batch.n_qubits
    d = 2**n
    total = np.zeros((d, d), dtype=complex)
    step = max(1, (1 << 22) // (d * d))
    for lo in range(start, stop, step):
        hi = min(lo + step, stop)
        fac = batch_factors(batch, lo, hi)
        dense = fac[:, 0]
        for j in range(1, n):
            dense = np.einsum("bik,bjl->bijkl", dense, fac[:, j]).reshape(
                hi - lo, dense.shape[1] * 2, dense.shape[2] * 2
            )
        total += dense.sum(axis=0)
    return total / (stop - start)
