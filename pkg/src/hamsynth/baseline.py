"""Structure-agnostic generic synthesis: the deep exact baseline.

Recursive cosine-sine (quantum Shannon) decomposition peels one qubit per
level: U splits into two multiplexed half-size unitaries around a multiplexed
RY, and each multiplexor demuxes into half-size unitaries around a
multiplexed RZ. Multiplexed rotations walk a Gray code, one CX per step
(Theta(4^n) CX total). The two-qubit base case reuses the minimal-CX
resynthesis; the result is unrouted and gets the naive SWAP router before
transpilation.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.linalg import cossin

from .circuit import Circuit, CouplingMap, Gate, circuit_unitary, gate_stats, undo_layout
from .numerics import is_unitary, process_fidelity
from .transpile import emit_1q, route_naive, synth_2q_minimal, transpile

MAX_QSD_QUBITS = 5


def _gray(i: int) -> int:
    return i ^ (i >> 1)


def _mux_rot_angles(angles: np.ndarray) -> np.ndarray:
    """Map per-control-pattern rotation angles to Gray-walk gate angles.

    Pattern p accumulates sum_i theta_i * (-1)^{popcount(p & gray(i))}."""
    k = len(angles)
    a = np.empty((k, k))
    for p in range(k):
        for i in range(k):
            a[p, i] = (-1) ** bin(p & _gray(i)).count("1")
    return np.linalg.solve(a, angles)


def _emit_mux_rotation(c: Circuit, axis: str, target: int, controls: list[int],
                       angles: np.ndarray) -> None:
    """Multiplexed RZ/RY on `target` controlled by `controls` (Gray walk).

    angles[p] is the rotation for control pattern p (bit i of p = state of
    controls[i]).
    """
    k = len(controls)
    if k == 0:
        _emit_1q_rot(c, axis, target, float(angles[0]))
        return
    theta = _mux_rot_angles(np.asarray(angles, dtype=float))
    m = 2**k
    for i in range(m):
        _emit_1q_rot(c, axis, target, float(theta[i]))
        # CX control is the bit flipped between consecutive Gray codes
        flip = _gray(i) ^ _gray((i + 1) % m)
        ctl = controls[int(math.log2(flip))]
        c.add("CX", (ctl, target))


def _emit_1q_rot(c: Circuit, axis: str, q: int, theta: float) -> None:
    if abs(theta) < 1e-12:
        return
    if axis == "Z":
        c.add("RZ", (q,), (theta,))
    else:  # RY via RZ-conjugated RX
        c.add("RZ", (q,), (-math.pi / 2,))
        c.add("RX", (q,), (theta,))
        c.add("RZ", (q,), (math.pi / 2,))


def _demux(u1: np.ndarray, u2: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split diag(u1, u2) into (v, rz_angles, w): u1 = v d w, u2 = v d† w."""
    prod = u1 @ u2.conj().T
    evals, v = _schur_eig(prod)
    d = np.sqrt(evals.astype(complex))
    w = np.diag(d) @ v.conj().T @ u2
    angles = -2.0 * np.angle(d)
    return v, angles, w


def _schur_eig(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a unitary with guaranteed orthonormal vectors."""
    from scipy.linalg import schur

    t, z = schur(u, output="complex")
    return np.diag(t), z


def qsd_synthesize(u: np.ndarray) -> Circuit:
    """Quantum Shannon decomposition of a dense unitary (unrouted circuit)."""
    d = u.shape[0]
    n = int(round(math.log2(d)))
    if 2**n != d:
        raise ValueError("dimension is not a power of two")
    if n > MAX_QSD_QUBITS:
        raise ValueError(f"generic synthesis limited to n <= {MAX_QSD_QUBITS}")
    if not is_unitary(u, 1e-9):
        raise ValueError("input is not unitary")
    c = Circuit(n, [], CouplingMap.all_to_all(n), unrouted=True)
    _qsd_recurse(c, u, list(range(n)))
    return c


def _qsd_recurse(c: Circuit, u: np.ndarray, qubits: list[int]) -> None:
    n = len(qubits)
    if n == 1:
        c.gates.extend(emit_1q(u, qubits[0]))
        return
    if n == 2:
        synth = synth_2q_minimal(u, (qubits[0], qubits[1]), c.n)
        c.gates.extend(synth.gates)
        return
    half = u.shape[0] // 2
    # split on the top (most significant) qubit of this subspace
    top = qubits[-1]
    rest = qubits[:-1]
    (l0, l1), theta, (r0h, r1h) = cossin(u, p=half, q=half, separate=True)
    # cossin returns U = [L0 0; 0 L1] @ [C -S; S C] @ [R0 0; 0 R1]
    ry_angles_by_pattern = _cs_angles_to_patterns(2.0 * theta)
    for v, w, after in ((r0h, r1h, False), (l0, l1, True)):
        if not after:
            a, angles, b = _demux(v, w)
            _qsd_recurse(c, b, rest)
            _emit_mux_rotation(c, "Z", top, rest, _patterns(angles))
            _qsd_recurse(c, a, rest)
            _emit_mux_rotation(c, "Y", top, rest, ry_angles_by_pattern)
        else:
            a, angles, b = _demux(v, w)
            _qsd_recurse(c, b, rest)
            _emit_mux_rotation(c, "Z", top, rest, _patterns(angles))
            _qsd_recurse(c, a, rest)


def _patterns(angles: np.ndarray) -> np.ndarray:
    return np.asarray(angles, dtype=float)


def _cs_angles_to_patterns(angles: np.ndarray) -> np.ndarray:
    return np.asarray(angles, dtype=float)


def blackbox_compile(u_target: np.ndarray, cmap: CouplingMap,
                     opt_level: int = 3) -> tuple[Circuit, "object"]:
    """Generic路线: Shannon synthesis, naive routing, full transpilation.

    Returns the routed native circuit and its gate stats; the caller can
    verify exactness via undo_layout with the returned final permutation
    stored on the circuit metadata.
    """
    raw = qsd_synthesize(u_target)
    routed, final_perm = route_naive(raw, cmap)
    native = transpile(routed, opt_level)
    native.final_perm = final_perm  # type: ignore[attr-defined]
    return native, gate_stats(native)


def blackbox_fidelity(native: Circuit, u_target: np.ndarray) -> float:
    """Process fidelity of a routed blackbox circuit after layout undo."""
    n = native.n
    perm = getattr(native, "final_perm", list(range(n)))
    u_phys = circuit_unitary(native)
    u_virt = undo_layout(u_phys, list(range(n)), perm)
    return process_fidelity(u_virt, u_target)
