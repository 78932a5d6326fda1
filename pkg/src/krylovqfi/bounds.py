"""Previously proposed lower bounds on the QFI, used as comparators.

Three polynomial families: the GHZ-fidelity (Legendre-transform) bound,
the commutator-trace (sub-QFI) bound, and the truncated series bounds
that converge to the QFI from below as the truncation order grows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ResourceLimitError
from .states import DensityMatrix, Observable, Spectrum
from .qfi import _eigenpair, _moment_weights

DOUBLED_ROUTE_MAX_QUBITS = 6


@dataclass(frozen=True)
class BoundValue:
    value: float
    family: str  # "Leg", "Sub", "Tay", "Kry"
    n: int | None = None

    def __float__(self) -> float:
        return float(self.value)


def legendre_bound(f_ghz: float, n_qubits: int) -> BoundValue:
    """N^2 (1 - 2 f_GHZ)^2 when the GHZ fidelity exceeds 1/2, else 0."""
    if not 0.0 <= f_ghz <= 1.0:
        raise ValueError(f"fidelity must lie in [0, 1], got {f_ghz}")
    if f_ghz > 0.5:
        val = n_qubits**2 * (1.0 - 2.0 * f_ghz) ** 2
    else:
        val = 0.0
    return BoundValue(float(val), "Leg")


def sub_qfi_bound(rho: DensityMatrix, h: Observable) -> BoundValue:
    """-2 tr([rho, H]^2), always nonnegative."""
    comm = rho.data @ h.data - h.data @ rho.data
    val = -2.0 * np.trace(comm @ comm).real
    return BoundValue(float(max(val, 0.0)), "Sub")


def taylor_bound(
    rho: DensityMatrix,
    h: Observable,
    n: int,
    route: str = "spectral",
    spec: Spectrum | None = None,
) -> BoundValue:
    """Order-n truncated series bound.

    The spectral route evaluates
    2 sum_{kl} (p_k - p_l)^2 [sum_{m<=n} (1 - p_k - p_l)^m] |H_kl|^2;
    the doubled route materializes the same quantity literally on the
    two-copy space and exists as a fidelity check (N <= 6 only).
    """
    if n < 0:
        raise ValueError("truncation order must be nonnegative")
    if route == "spectral":
        p, h_tilde, _ = _eigenpair(rho, h, spec)
        c2, w = _moment_weights(p, h_tilde)
        x = 1.0 - 2.0 * w  # 1 - p_k - p_l
        geom = np.ones_like(x)
        acc = np.ones_like(x)
        for _ in range(n):
            acc *= x
            geom += acc
        val = 2.0 * float(np.sum(c2 * geom))
        return BoundValue(val, "Tay", n)
    if route == "doubled":
        if rho.n_qubits > DOUBLED_ROUTE_MAX_QUBITS:
            raise ResourceLimitError(
                f"doubled route caps at N={DOUBLED_ROUTE_MAX_QUBITS}, got N={rho.n_qubits}"
            )
        d = rho.dim
        eye = np.eye(d)
        r1 = np.kron(rho.data, eye)
        r2 = np.kron(eye, rho.data)
        diff2 = (r1 - r2) @ (r1 - r2)
        shrink = np.eye(d * d) - r1 - r2
        swap = np.eye(d * d).reshape(d, d, d, d).transpose(1, 0, 2, 3).reshape(d * d, d * d)
        target = swap @ np.kron(h.data, h.data)
        acc = target
        total = np.trace(diff2 @ acc)
        for _ in range(n):
            acc = shrink @ acc
            total += np.trace(diff2 @ acc)
        return BoundValue(2.0 * float(total.real), "Tay", n)
    raise ValueError(f"unknown route {route!r}")


def relative_error(bound, f_q: float) -> float:
    """|B - F_Q| / F_Q, the merit figure used in all sweep experiments."""
    if f_q <= 0:
        raise ValueError(f"QFI must be positive, got {f_q}")
    b = float(bound)
    return abs(b - f_q) / f_q
