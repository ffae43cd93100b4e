"""Gate-level depolarizing noise via Pauli transfer matrices.

Channels are represented in the normalized Pauli basis (index base-4 per
qubit, qubit 0 least significant): R[E]_ij = (1/d) Tr(P_i E(P_j)). A uniform
depolarizing channel follows every gate on that gate's support. Density
matrices never appear explicitly; everything composes as real PTMs, so the
cost guard is d^2 <= 1024 (n <= 5).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .circuit import Circuit, Gate, gate_matrix
from .numerics import PAULI, process_fidelity

MAX_NOISY_QUBITS = 5
MAX_SAMPLING_QUBITS = 8

_PAULI_1Q = [PAULI["I"], PAULI["X"], PAULI["Y"], PAULI["Z"]]


@dataclass(frozen=True)
class NoiseModel:
    p1q: float = 0.0
    p2q: float = 0.0
    readout_flip: float = 0.0

    def __post_init__(self):
        for p in (self.p1q, self.p2q, self.readout_flip):
            if not 0.0 <= p <= 1.0:
                raise ValueError("noise probabilities must be in [0, 1]")

    def rate_for(self, gate: Gate) -> float:
        return self.p2q if gate.n_qubits == 2 else self.p1q


@dataclass
class ShotHistogram:
    counts: dict[str, int]
    shots: int

    def __post_init__(self):
        if sum(self.counts.values()) != self.shots:
            raise ValueError("counts must sum to total shots")

    def distribution(self, n: int) -> np.ndarray:
        p = np.zeros(2**n)
        for bits, c in self.counts.items():
            p[int(bits, 2)] = c / self.shots
        return p


def _paulis(k: int) -> list[np.ndarray]:
    """All k-qubit Pauli strings, base-4 index with qubit 0 least significant."""
    if k == 1:
        return _PAULI_1Q
    out = []
    for idx in range(4**k):
        m = np.array([[1.0 + 0j]])
        for q in reversed(range(k)):
            m = np.kron(m, _PAULI_1Q[(idx >> (2 * q)) & 3])
        out.append(m)
    return out


@lru_cache(maxsize=256)
def _small_ptm(name: str, params: tuple, k: int) -> np.ndarray:
    """PTM of a 1- or 2-wire gate on its own support (wire order LSB-first)."""
    u = gate_matrix(Gate(name, (0,) if k == 1 else (0, 1), params))
    return _unitary_ptm(u, k)


def _unitary_ptm(u: np.ndarray, k: int) -> np.ndarray:
    d = 2**k
    ps = _paulis(k)
    r = np.empty((4**k, 4**k))
    conj = [u @ p @ u.conj().T for p in ps]
    for i, pi in enumerate(ps):
        for j in range(4**k):
            r[i, j] = np.real(np.trace(pi @ conj[j])) / d
    return r


def ptm_of_gate(g: Gate, n: int) -> np.ndarray:
    """Full d^2 x d^2 PTM of one gate (identity on the other qubits)."""
    _guard(n)
    r = np.eye(4**n)
    return _apply_gate_ptm(r, g, n)


def _apply_small(r_full: np.ndarray, r_small: np.ndarray, qubits: tuple[int, ...],
                 n: int) -> np.ndarray:
    dim = 4**n
    t = r_full.reshape([4] * n + [dim])
    axes = [n - 1 - q for q in qubits]
    k = len(qubits)
    rs = r_small.reshape([4] * (2 * k))
    # rs out-axes are ordered (q_last .. q_first) to mirror the reshape order
    t = np.tensordot(rs, t, axes=(list(range(k, 2 * k)), list(reversed(axes))))
    t = np.moveaxis(t, list(range(k)), list(reversed(axes)))
    return t.reshape(dim, dim)


def _apply_gate_ptm(r: np.ndarray, g: Gate, n: int) -> np.ndarray:
    if g.name == "U2Q":
        small = _unitary_ptm(g.payload, 2)
    else:
        small = _small_ptm(g.name, g.params, g.n_qubits)
    return _apply_small(r, small, g.qubits, n)


def ptm_of_depolarizing(p: float, support: tuple[int, ...], n: int) -> np.ndarray:
    """Diagonal PTM of uniform depolarizing on `support` qubits."""
    _guard(n)
    return np.diag(_depol_diag(p, support, n))


def _depol_diag(p: float, support: tuple[int, ...], n: int) -> np.ndarray:
    """Uniform depolarizing on `support`: every Pauli acting non-trivially
    on the support is damped by the same (1 - p)."""
    identity_on_support = np.ones([4] * n, dtype=bool)
    for q in support:
        idx = [slice(None)] * n
        idx[n - 1 - q] = slice(1, None)
        sel = np.zeros([4] * n, dtype=bool)
        sel[tuple(idx)] = True
        identity_on_support &= ~sel
    diag = np.where(identity_on_support, 1.0, 1.0 - p)
    return diag.reshape(-1)


def _guard(n: int) -> None:
    if n > MAX_NOISY_QUBITS:
        raise ValueError(f"PTM path limited to n <= {MAX_NOISY_QUBITS}")


def circuit_ptm(c: Circuit, nm: NoiseModel | None = None) -> np.ndarray:
    """Compose per-gate PTMs (each followed by its depolarizing channel)."""
    _guard(c.n)
    r = np.eye(4**c.n)
    for g in c.gates:
        r = _apply_gate_ptm(r, g, c.n)
        if nm is not None:
            rate = nm.rate_for(g)
            if rate > 0.0:
                diag = _depol_diag(rate, g.qubits, c.n)
                r = r * diag[:, None]
    return r


def unitary_ptm_full(u: np.ndarray, n: int) -> np.ndarray:
    """PTM of a dense unitary, via the Pauli-basis change of (U ⊗ U*)."""
    _guard(n)
    b = _pauli_basis_matrix(n)
    r = b.conj().T @ np.kron(u.conj(), u) @ b
    return np.real(r)


@lru_cache(maxsize=8)
def _pauli_basis_matrix(n: int) -> np.ndarray:
    d = 2**n
    cols = []
    for p in _paulis(n):
        cols.append(np.asarray(p).reshape(-1, order="F") / np.sqrt(d))
    return np.column_stack(cols)


def noisy_process_fidelity(c: Circuit, u_target: np.ndarray,
                           nm: NoiseModel) -> float:
    """F = Tr(R_target^T R_circuit)/d^2 with noise inserted after each gate."""
    _guard(c.n)
    d = 2**c.n
    r_circ = circuit_ptm(c, nm)
    r_target = unitary_ptm_full(u_target, c.n)
    return float(np.trace(r_target.T @ r_circ) / d**2)


def survival_estimate(cx_count: int, p2q: float) -> float:
    """(1 - p2q)^cx, the two-qubit survival probability estimate."""
    return float((1.0 - p2q) ** cx_count)


# ---------------------------------------------------------------------------
# sampling


def _initial_state(kind: str, n: int) -> np.ndarray:
    d = 2**n
    psi = np.zeros(d, dtype=complex)
    if kind == "zeros":
        psi[0] = 1.0
    elif kind == "neel":
        idx = 0
        for q in range(0, n, 2):
            idx |= 1 << q
        psi[idx] = 1.0
    elif kind == "plus":
        psi[:] = 1.0 / np.sqrt(d)
    else:
        raise ValueError(f"unknown initial state {kind!r}")
    return psi


def _apply_gate_state(psi: np.ndarray, g: Gate, n: int) -> np.ndarray:
    m = gate_matrix(g)
    t = psi.reshape([2] * n)
    if g.n_qubits == 1:
        ax = n - 1 - g.qubits[0]
        t = np.tensordot(m, t, axes=([1], [ax]))
        t = np.moveaxis(t, 0, ax)
    else:
        q0, q1 = g.qubits
        ax0, ax1 = n - 1 - q0, n - 1 - q1
        t = np.tensordot(m.reshape(2, 2, 2, 2), t, axes=([2, 3], [ax1, ax0]))
        t = np.moveaxis(t, [0, 1], [ax1, ax0])
    return t.reshape(-1)


def exact_distribution(c: Circuit, initial_state: str = "zeros") -> np.ndarray:
    psi = _initial_state(initial_state, c.n)
    for g in c.gates:
        psi = _apply_gate_state(psi, g, c.n)
    return np.abs(psi) ** 2


def _noisy_distribution(c: Circuit, initial_state: str, nm: NoiseModel) -> np.ndarray:
    """Density-matrix path: rho through unitaries + depolarizing channels."""
    _guard(c.n)
    n = c.n
    psi = _initial_state(initial_state, n)
    rho = np.outer(psi, psi.conj())

    def apply_u(rho: np.ndarray, g: Gate) -> np.ndarray:
        m = gate_matrix(g)
        rho = _mat_on_axes(rho, m, g.qubits, n, side="left")
        return _mat_on_axes(rho, m.conj(), g.qubits, n, side="right")

    for g in c.gates:
        rho = apply_u(rho, g)
        rate = nm.rate_for(g)
        if rate > 0.0:
            rho = _depolarize_rho(rho, rate, g.qubits, n)
    probs = np.real(np.diag(rho)).copy()
    probs[probs < 0] = 0.0
    probs /= probs.sum()
    if nm.readout_flip > 0.0:
        probs = _apply_readout_flips(probs, nm.readout_flip, n)
    return probs


def _mat_on_axes(rho: np.ndarray, m: np.ndarray, qubits: tuple[int, ...], n: int,
                 side: str) -> np.ndarray:
    d = 2**n
    k = len(qubits)
    if side == "left":
        t = rho.reshape([2] * n + [d])
        axes = [n - 1 - q for q in qubits]
    else:
        t = rho.reshape([d] + [2] * n)
        axes = [1 + n - 1 - q for q in qubits]
        # act on the bra side with the transpose
        m = m.T
    mk = m.reshape([2] * (2 * k))
    t = np.tensordot(mk, t, axes=(list(range(k, 2 * k)), list(reversed(axes))))
    t = np.moveaxis(t, list(range(k)), list(reversed(axes)))
    return t.reshape(d, d)


def _depolarize_rho(rho: np.ndarray, p: float, qubits: tuple[int, ...], n: int) -> np.ndarray:
    k = len(qubits)
    axes_ket = [n - 1 - q for q in qubits]
    t = rho.reshape([2] * n + [2] * n)
    traced = np.trace(t, axis1=axes_ket[0], axis2=n + axes_ket[0])
    if k == 2:
        a1 = axes_ket[1] if axes_ket[1] < axes_ket[0] else axes_ket[1] - 1
        traced = np.trace(traced, axis1=a1, axis2=(n - 1) + a1)
    # traced has shape [2]*(n-k) twice; rebuild identity on the support
    ident = np.eye(2**k) / 2**k
    rest = traced.reshape(2 ** (n - k), 2 ** (n - k))
    full = _embed_identity(rest, ident, qubits, n)
    return (1.0 - p) * rho + p * full


def _embed_identity(rest: np.ndarray, ident: np.ndarray, qubits: tuple[int, ...],
                    n: int) -> np.ndarray:
    """kron the support identity back into the traced-out density matrix."""
    others = [q for q in range(n) if q not in qubits]
    d = 2**n
    out = np.zeros((d, d), dtype=complex)
    k = len(qubits)
    rest_t = rest.reshape([2] * (n - k) + [2] * (n - k))
    ident_t = ident.reshape([2] * k + [2] * k)
    full = np.tensordot(ident_t, rest_t, axes=0)
    # axes: support-kets, support-bras interleaved with rest; rearrange
    # target ket order (MSB..LSB): axis n-1-q
    src = []
    ket_axes = {}
    for i, q in enumerate(reversed(qubits)):
        ket_axes[q] = i
    for i, q in enumerate(reversed(others)):
        ket_axes[q] = 2 * k + i
    bra_axes = {}
    for i, q in enumerate(reversed(qubits)):
        bra_axes[q] = k + i
    for i, q in enumerate(reversed(others)):
        bra_axes[q] = 2 * k + (n - k) + i
    order = [ket_axes[q] for q in reversed(range(n))] + [
        bra_axes[q] for q in reversed(range(n))
    ]
    out = full.transpose(order).reshape(d, d)
    return out


def _apply_readout_flips(probs: np.ndarray, r: float, n: int) -> np.ndarray:
    p = probs.reshape([2] * n)
    for q in range(n):
        ax = n - 1 - q
        flipped = np.flip(p, axis=ax)
        p = (1.0 - r) * p + r * flipped
    return p.reshape(-1)


def sample_counts(c: Circuit, initial_state: str, shots: int,
                  nm: NoiseModel | None = None, seed: int = 0) -> ShotHistogram:
    """Sample measurement outcomes; deterministic for a fixed seed."""
    if nm is None or (nm.p1q == 0 and nm.p2q == 0 and nm.readout_flip == 0):
        if c.n > MAX_SAMPLING_QUBITS:
            raise ValueError(f"noiseless sampling limited to n <= {MAX_SAMPLING_QUBITS}")
        probs = exact_distribution(c, initial_state)
    else:
        probs = _noisy_distribution(c, initial_state, nm)
    rng = np.random.default_rng(seed)
    draws = rng.multinomial(shots, probs / probs.sum())
    counts = {
        format(idx, f"0{c.n}b"): int(v) for idx, v in enumerate(draws) if v > 0
    }
    return ShotHistogram(counts, shots)


def hellinger_fidelity(p: np.ndarray, q: np.ndarray) -> float:
    """(sum_x sqrt(p_x q_x))^2 for two distributions on the same space."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("distributions live on different outcome spaces")
    for name, dist in (("p", p), ("q", q)):
        if abs(dist.sum() - 1.0) > 1e-9:
            raise ValueError(f"distribution {name} is not normalized")
    return float(np.sum(np.sqrt(p * q)) ** 2)


def bootstrap_sigma(h: ShotHistogram, ideal: np.ndarray, resamples: int = 1000,
                    seed: int = 0) -> float:
    """Std of the Hellinger fidelity over multinomial resamples of counts."""
    if h.shots <= 0:
        raise ValueError("histogram has no shots")
    n = int(np.log2(len(ideal)))
    base = h.distribution(n)
    rng = np.random.default_rng(seed)
    fids = []
    for _ in range(resamples):
        resampled = rng.multinomial(h.shots, base) / h.shots
        fids.append(np.sum(np.sqrt(resampled * ideal)) ** 2)
    return float(np.std(fids))
