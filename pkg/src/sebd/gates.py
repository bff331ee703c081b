"""Fixed gate matrices and the single-qubit gate sets used by circuit families."""

from __future__ import annotations

import numpy as np

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
S = np.array([[1, 0], [0, 1j]], dtype=complex)

W = (X + Y) / np.sqrt(2)
V = (X - Y) / np.sqrt(2)

SWAP = np.array(
    [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex
)
CNOT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)
CZ = np.diag([1, 1, 1, -1]).astype(complex)


def fsim(theta: float, phi: float) -> np.ndarray:
    """Fermionic simulation gate in the |00>,|01>,|10>,|11> basis."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array(
        [
            [1, 0, 0, 0],
            [0, c, -1j * s, 0],
            [0, -1j * s, c, 0],
            [0, 0, 0, np.exp(-1j * phi)],
        ],
        dtype=complex,
    )


def iswap() -> np.ndarray:
    """iSWAP with the +i convention (the Clifford one); fsim(pi/2, 0) is its conjugate."""
    return np.array(
        [[1, 0, 0, 0], [0, 0, 1j, 0], [0, 1j, 0, 0], [0, 0, 0, 1]], dtype=complex
    )


def pauli_half_power(p: np.ndarray, sign: int = +1) -> np.ndarray:
    """Principal square root P^(1/2) of an involution, or its inverse for sign=-1."""
    if sign not in (+1, -1):
        raise ValueError("sign must be +1 or -1")
    w = (1 + 1j * sign) / 2
    return w.conjugate() * np.eye(2) + w * p


#: The eight single-qubit gates drawn uniformly by the fsim/iswap circuit families.
ROTATION_SET = tuple(
    pauli_half_power(p, s) for p in (X, Y, W, V) for s in (+1, -1)
)


def _canon_key(m: np.ndarray) -> bytes:
    # canonical form up to global phase, for deduplication; adding 0.0
    # collapses IEEE negative zeros so equal matrices give equal bytes
    idx = np.argmax(np.abs(m) > 1e-6)
    ph = m.flat[idx] / abs(m.flat[idx])
    return (np.round(m / ph, 6) + 0.0).tobytes()


def _enumerate_1q_cliffords() -> tuple[np.ndarray, ...]:
    found: dict[bytes, np.ndarray] = {_canon_key(I2): I2}
    frontier = [I2]
    while frontier:
        nxt = []
        for m in frontier:
            for g in (H, S):
                c = g @ m
                k = _canon_key(c)
                if k not in found:
                    found[k] = c
                    nxt.append(c)
        frontier = nxt
    assert len(found) == 24
    return tuple(found.values())


#: All 24 single-qubit Cliffords (fixed order; index is the sampling label).
CLIFFORD_1Q = _enumerate_1q_cliffords()
