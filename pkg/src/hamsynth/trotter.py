"""Suzuki-2/4 palindromic block builders and the candidate block library.

A second-order block walks the term list H_M..H_1 and back, with the two
central H_1 half-steps merged into one full-angle rotation. Each two-body
rotation exp(-i c dt' P⊗P) is emitted natively as CX · RZ(2 c dt') · CX with
H (X axes) or RX(π/2) (Y axes) basis changes. Stored rotation angles are the
exponent coefficient theta of exp(-i theta P); conversion to half-angle gate
parameters happens at emission.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .circuit import Circuit, CouplingMap, circuit_unitary
from .model import HamiltonianSpec, PauliTerm, term_matrix
from .numerics import expm_hermitian, process_fidelity

S4_P1 = 1.0 / (4.0 - 4.0 ** (1.0 / 3.0))
S4_P0 = 1.0 - 4.0 * S4_P1

BASE_DT_CANDIDATES = (0.05, 0.1, 0.2)


@dataclass
class TrotterBlock:
    order: str  # S2, S4 or StrangEdge
    dt: float
    circuit: Circuit
    matrix: np.ndarray
    raw_cx: int = 0
    steps: int = 0

    def __post_init__(self):
        if not self.raw_cx:
            self.raw_cx = sum(1 for g in self.circuit.gates if g.name == "CX")


def _emit_rotation(c: Circuit, term: PauliTerm, theta: float) -> None:
    """Append exp(-i theta P) for a 1- or 2-body Pauli string P."""
    support = term.support
    axes = [term.axes[q] for q in support]
    if len(support) == 1:
        (q,) = support
        if axes[0] == "Z":
            c.add("RZ", (q,), (2.0 * theta,))
        elif axes[0] == "X":
            c.add("RX", (q,), (2.0 * theta,))
        else:  # Y field: conjugate into Z with RX(π/2)
            c.add("RX", (q,), (math.pi / 2,))
            c.add("RZ", (q,), (2.0 * theta,))
            c.add("RX", (q,), (-math.pi / 2,))
        return
    qa, qb = support
    axis = axes[0]
    if axes[0] != axes[1]:
        raise ValueError("two-body terms must share an axis")
    if axis == "X":
        c.add("H", (qa,))
        c.add("H", (qb,))
    elif axis == "Y":
        c.add("RX", (qa,), (math.pi / 2,))
        c.add("RX", (qb,), (math.pi / 2,))
    c.add("CX", (qa, qb))
    c.add("RZ", (qb,), (2.0 * theta,))
    c.add("CX", (qa, qb))
    if axis == "X":
        c.add("H", (qa,))
        c.add("H", (qb,))
    elif axis == "Y":
        c.add("RX", (qa,), (-math.pi / 2,))
        c.add("RX", (qb,), (-math.pi / 2,))


def _palindrome_steps(terms: tuple[PauliTerm, ...], dt: float) -> list[tuple[PauliTerm, float]]:
    """(term, angle) sequence H_M..H_1..H_M with the center step merged."""
    down = [(t, 0.5 * t.coefficient * dt) for t in reversed(terms)]
    up = down[:-1][::-1]
    center_term, half = down[-1]
    return down[:-1] + [(center_term, 2.0 * half)] + up


def _steps_to_block(steps: list[tuple[PauliTerm, float]], n: int, order: str,
                    dt: float) -> TrotterBlock:
    c = Circuit(n, [], CouplingMap.linear(n))
    m = np.eye(2**n, dtype=complex)
    for term, theta in steps:
        _emit_rotation(c, term, theta)
        # theta already includes the coefficient; exponentiate the bare string
        bare = term_matrix(PauliTerm(1.0, term.axes))
        m = expm_hermitian(bare, theta) @ m
    return TrotterBlock(order, dt, c, m, steps=len(steps))


def build_s2_block(spec: HamiltonianSpec, dt: float) -> TrotterBlock:
    """Palindromic second-order block: 2M-1 rotation steps."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if not spec.terms:
        raise ValueError("empty term list")
    return _steps_to_block(_palindrome_steps(spec.terms, dt), spec.n, "S2", dt)


def build_s4_block(spec: HamiltonianSpec, dt: float) -> TrotterBlock:
    """Fourth-order block: five S2 sub-blocks at (p1, p1, p0, p1, p1)·dt."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    steps: list[tuple[PauliTerm, float]] = []
    for p in (S4_P1, S4_P1, S4_P0, S4_P1, S4_P1):
        steps.extend(_palindrome_steps(spec.terms, p * dt))
    block = _steps_to_block(steps, spec.n, "S4", dt)
    return block


def build_strang_edge_block(spec: HamiltonianSpec, edge: tuple[int, int],
                            dt: float) -> TrotterBlock:
    """Symmetric splitting of a single edge's coupling terms."""
    edge = (min(edge), max(edge))
    if not spec.coupling_terms():
        raise ValueError("empty term list")
    terms = tuple(t for t in spec.coupling_terms() if t.support == edge)
    if not terms:
        raise ValueError(f"edge {edge} absent from the model")
    return _steps_to_block(_palindrome_steps(terms, dt), spec.n, "StrangEdge", dt)


def trotter_error_estimate(spec: HamiltonianSpec, dt: float) -> float:
    """Diagnostic scalar: sum of pairwise commutator norms times dt^3."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    mats = [term_matrix(t) for t in spec.terms]
    total = 0.0
    for j in range(len(mats)):
        for k in range(j + 1, len(mats)):
            comm = mats[j] @ mats[k] - mats[k] @ mats[j]
            total += float(np.linalg.norm(comm, 2))
    return total * dt**3


@dataclass
class BlockLibrary:
    """Candidate blocks for the greedy oracle, matrices cached at build."""

    blocks: list[TrotterBlock]
    dt_candidates: list[float]

    @staticmethod
    def build(spec: HamiltonianSpec, t: float, mode: str = "expanded",
              dt_candidates: list[float] | None = None,
              include_strang: bool = False) -> "BlockLibrary":
        """Assemble S2 blocks at the candidate time steps.

        Modes: `base` = {0.05, 0.1, 0.2}; `expanded` adds {t/m : m = 3..10};
        `expanded_with_m1m2` adds {t/m : m = 1..10}; `with_strang` is the
        expanded set plus per-edge Strang blocks at the base steps. An explicit
        `dt_candidates` list overrides the mode.
        """
        if dt_candidates is None:
            dts = set(BASE_DT_CANDIDATES)
            if mode == "expanded" or mode == "with_strang":
                dts |= {t / m for m in range(3, 11)}
            elif mode == "expanded_with_m1m2":
                dts |= {t / m for m in range(1, 11)}
            elif mode != "base":
                raise ValueError(f"unknown library mode {mode!r}")
            dt_list = sorted(dts)
        else:
            dt_list = sorted(set(dt_candidates))
        blocks = [build_s2_block(spec, dt) for dt in dt_list]
        if include_strang or mode == "with_strang":
            edges = sorted({t_.support for t_ in spec.coupling_terms()})
            for dt in BASE_DT_CANDIDATES:
                for edge in edges:
                    blocks.append(build_strang_edge_block(spec, edge, dt))
        return BlockLibrary(blocks, dt_list)


def validate_block(block: TrotterBlock) -> float:
    """Fidelity between the block circuit and its cached matrix."""
    return process_fidelity(circuit_unitary(block.circuit), block.matrix)
