"""Hardware-native gate IR on a linear coupling map.

Bit-order convention (global): qubit 0 is the least significant bit of the
computational-basis index. Endianness mismatches against other conventions
are handled at comparison boundaries by `reverse_bit_order`, never by dual
conventions internally. Global phase is never tracked.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .constants import UNITARY_ATOL
from .numerics import PAULI, is_unitary

# Native basis is {CX, RZ, SX, X}. H, RX, RZZ, RXX, RYY and payload-carrying
# U2Q gates are legal only pre-transpile.
GATE_NAMES = ("CX", "RZ", "SX", "X", "H", "RX", "RZZ", "RXX", "RYY", "U2Q")
NATIVE_NAMES = ("CX", "RZ", "SX", "X")

_SX = 0.5 * np.array([[1 + 1j, 1 - 1j], [1 - 1j, 1 + 1j]])
_H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)


@dataclass(frozen=True)
class Gate:
    """One gate: name, wire indices, rotation angles, optional 4x4 payload."""

    name: str
    qubits: tuple[int, ...]
    params: tuple[float, ...] = ()
    payload: np.ndarray | None = None

    def __post_init__(self):
        if self.name not in GATE_NAMES:
            raise ValueError(f"unknown gate {self.name!r}")
        if self.name == "CX" and (len(self.qubits) != 2 or self.qubits[0] == self.qubits[1]):
            raise ValueError("CX needs two distinct qubits")
        if self.name in ("RZZ", "RXX", "RYY") and len(self.params) != 1:
            raise ValueError(f"{self.name} carries exactly one angle")
        if self.name == "U2Q":
            if self.payload is None or self.payload.shape != (4, 4):
                raise ValueError("U2Q needs a 4x4 payload")
            if not is_unitary(self.payload, UNITARY_ATOL):
                raise ValueError("U2Q payload is not unitary")

    @property
    def n_qubits(self) -> int:
        return len(self.qubits)


def _rz(theta: float) -> np.ndarray:
    return np.array([[np.exp(-0.5j * theta), 0], [0, np.exp(0.5j * theta)]])


def _rx(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


def _two_body_rot(theta: float, axis: str) -> np.ndarray:
    """exp(-i theta/2 P⊗P) as a 4x4 for P in {X, Y, Z}."""
    pp = np.kron(PAULI[axis], PAULI[axis])
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return c * np.eye(4) - 1j * s * pp

# CX with control = first wire (LSB position of the pair), target = second.
_CX_01 = np.array(
    [[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]], dtype=complex
)


def gate_matrix(g: Gate) -> np.ndarray:
    """2x2 or 4x4 matrix of a gate, on its own wires (first wire = LSB)."""
    if g.name == "RZ":
        return _rz(g.params[0])
    if g.name == "RX":
        return _rx(g.params[0])
    if g.name == "SX":
        return _SX
    if g.name == "X":
        return PAULI["X"]
    if g.name == "H":
        return _H
    if g.name == "CX":
        return _CX_01
    if g.name == "RZZ":
        return _two_body_rot(g.params[0], "Z")
    if g.name == "RXX":
        return _two_body_rot(g.params[0], "X")
    if g.name == "RYY":
        return _two_body_rot(g.params[0], "Y")
    if g.name == "U2Q":
        return g.payload
    raise ValueError(f"unknown gate {g.name!r}")


@dataclass(frozen=True)
class CouplingMap:
    """Undirected coupling graph; edges stored as sorted pairs."""

    n: int
    edges: frozenset[tuple[int, int]]

    @staticmethod
    def linear(n: int) -> "CouplingMap":
        return CouplingMap(n, frozenset((i, i + 1) for i in range(n - 1)))

    @staticmethod
    def all_to_all(n: int) -> "CouplingMap":
        return CouplingMap(n, frozenset((i, j) for i in range(n) for j in range(i + 1, n)))

    def has_edge(self, a: int, b: int) -> bool:
        return (min(a, b), max(a, b)) in self.edges

    def is_connected(self) -> bool:
        if self.n == 1:
            return True
        adj: dict[int, set[int]] = {i: set() for i in range(self.n)}
        for a, b in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        seen, stack = {0}, [0]
        while stack:
            for nb in adj[stack.pop()]:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        return len(seen) == self.n

    def shortest_path(self, a: int, b: int) -> list[int]:
        """BFS path from a to b inclusive."""
        if a == b:
            return [a]
        adj: dict[int, set[int]] = {i: set() for i in range(self.n)}
        for x, y in self.edges:
            adj[x].add(y)
            adj[y].add(x)
        prev = {a: a}
        frontier = [a]
        while frontier:
            nxt = []
            for u in frontier:
                for v in adj[u]:
                    if v not in prev:
                        prev[v] = u
                        if v == b:
                            path = [b]
                            while path[-1] != a:
                                path.append(prev[path[-1]])
                            return path[::-1]
                        nxt.append(v)
            frontier = nxt
        raise ValueError(f"no path between {a} and {b}: disconnected map")


@dataclass
class Circuit:
    """Ordered gate list on n wires. Immutable by convention after build."""

    n: int
    gates: list[Gate] = field(default_factory=list)
    coupling: CouplingMap | None = None
    unrouted: bool = False

    def __post_init__(self):
        if self.coupling is None:
            self.coupling = CouplingMap.linear(self.n)

    def add(self, name: str, qubits: tuple[int, ...], params: tuple[float, ...] = (),
            payload: np.ndarray | None = None) -> None:
        g = Gate(name, qubits, params, payload)
        for q in g.qubits:
            if not 0 <= q < self.n:
                raise ValueError(f"wire {q} out of range for n={self.n}")
        if g.n_qubits == 2 and not self.unrouted and not self.coupling.has_edge(*g.qubits):
            raise ValueError(f"2q gate on non-edge {g.qubits}")
        self.gates.append(g)

    def extend(self, other: "Circuit") -> None:
        if other.n != self.n:
            raise ValueError("qubit count mismatch")
        for g in other.gates:
            self.add(g.name, g.qubits, g.params, g.payload)

    def is_native(self) -> bool:
        return all(g.name in NATIVE_NAMES for g in self.gates)


@dataclass(frozen=True)
class GateStats:
    cx_count: int
    depth: int
    total_gates: int


def apply_gate(u: np.ndarray, g: Gate, n: int) -> np.ndarray:
    """Left-multiply the circuit matrix U by gate g (program order)."""
    d = u.shape[0]
    m = gate_matrix(g)
    # Act on the row (output) index: reshape rows into n qubit axes, LSB first.
    t = u.reshape([2] * n + [d])
    if g.n_qubits == 1:
        ax = n - 1 - g.qubits[0]  # axis 0 is the MSB under C-order reshape
        t = np.tensordot(m, t, axes=([1], [ax]))
        t = np.moveaxis(t, 0, ax)
    else:
        q0, q1 = g.qubits
        ax0, ax1 = n - 1 - q0, n - 1 - q1
        m4 = m.reshape(2, 2, 2, 2)  # indices: out(q1,q0), in(q1,q0)
        t = np.tensordot(m4, t, axes=([2, 3], [ax1, ax0]))
        t = np.moveaxis(t, [0, 1], [ax1, ax0])
    return t.reshape(d, d)


def circuit_unitary(c: Circuit) -> np.ndarray:
    """Dense unitary of the circuit under the qubit-0-is-LSB convention."""
    if c.n > 10:
        raise ValueError("circuit_unitary supports at most 10 qubits")
    u = np.eye(2**c.n, dtype=complex)
    for g in c.gates:
        u = apply_gate(u, g, c.n)
    return u


def gate_stats(c: Circuit) -> GateStats:
    """CX count, wire-dependency depth, and total gate count."""
    cx = sum(1 for g in c.gates if g.name == "CX")
    frontier = [0] * c.n
    for g in c.gates:
        layer = 1 + max(frontier[q] for q in g.qubits)
        for q in g.qubits:
            frontier[q] = layer
    depth = max(frontier) if c.gates else 0
    return GateStats(cx, depth, len(c.gates))


def lift_permutation(perm: list[int] | tuple[int, ...]) -> np.ndarray:
    """Lift a qubit permutation to a d x d matrix.

    perm[q] = wire that logical qubit q is moved to; the returned P satisfies
    P |x_{n-1} ... x_0> = |y_{n-1} ... y_0> with y_{perm[q]} = x_q.
    """
    n = len(perm)
    d = 2**n
    p = np.zeros((d, d), dtype=complex)
    for x in range(d):
        y = 0
        for q in range(n):
            if (x >> q) & 1:
                y |= 1 << perm[q]
        p[y, x] = 1.0
    return p


def reverse_bit_order(u: np.ndarray) -> np.ndarray:
    """Conjugate U by the bit-reversal permutation (q -> n-1-q)."""
    d = u.shape[0]
    n = int(math.log2(d))
    if 2**n != d:
        raise ValueError("dimension is not a power of two")
    p = lift_permutation([n - 1 - q for q in range(n)])
    return p @ u @ p.conj().T


def undo_layout(u_phys: np.ndarray, p_init: list[int], p_final: list[int]) -> np.ndarray:
    """Recover the virtual-qubit unitary from a laid-out physical one.

    Returns P_final^T · P_init^T · U_phys · P_init for qubit-level
    permutations lifted to d x d.
    """
    if len(p_init) != len(p_final):
        raise ValueError("permutation size mismatch")
    pi = lift_permutation(p_init)
    pf = lift_permutation(p_final)
    if pi.shape != u_phys.shape:
        raise ValueError("permutation size does not match unitary")
    return pf.T @ pi.T @ u_phys @ pi


# Serialization: one gate per line `NAME q0[,q1] [angle...]` plus a JSON
# wrapper carrying n, coupling edges and metadata. Angles use repr() so the
# round-trip is bit-exact.

def circuit_to_text(c: Circuit) -> str:
    lines = []
    for g in c.gates:
        if g.name == "U2Q":
            raise ValueError("U2Q payload gates are not serializable")
        parts = [g.name, ",".join(str(q) for q in g.qubits)]
        parts.extend(repr(p) for p in g.params)
        lines.append(" ".join(parts))
    return "\n".join(lines)


def circuit_from_text(text: str, n: int, coupling: CouplingMap | None = None,
                      unrouted: bool = False) -> Circuit:
    c = Circuit(n, [], coupling, unrouted)
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        qubits = tuple(int(q) for q in parts[1].split(","))
        params = tuple(float(p) for p in parts[2:])
        c.add(parts[0], qubits, params)
    return c


def circuit_to_json(c: Circuit, metadata: dict | None = None) -> str:
    payload = {
        "n": c.n,
        "coupling_edges": sorted(list(e) for e in c.coupling.edges),
        "unrouted": c.unrouted,
        "gates": circuit_to_text(c),
        "metadata": metadata or {},
    }
    return json.dumps(payload, indent=2)


def circuit_from_json(text: str) -> Circuit:
    payload = json.loads(text)
    cmap = CouplingMap(payload["n"], frozenset(tuple(e) for e in payload["coupling_edges"]))
    return circuit_from_text(payload["gates"], payload["n"], cmap, payload["unrouted"])
