"""Pauli-string Hamiltonians on a linear chain and exact target unitaries.

Canonical term ordering: coupling terms first, edge-major left to right with
(XX, YY, ZZ) within each edge, then field terms qubit-major. Random draws
consume the PRNG in that same order, so a fixed seed pins the model exactly.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .numerics import PAULI, EigenSystem, is_hermitian

KINDS = ("Heisenberg", "Ising", "XY", "Random")

_AXES_BY_KIND = {
    "Heisenberg": ("X", "Y", "Z"),
    "XY": ("X", "Y"),
    "Ising": ("Z",),
    "Random": ("X", "Y", "Z"),
}


@dataclass(frozen=True)
class PauliTerm:
    """One weighted Pauli string; axes[q] in 'IXYZ' for each qubit."""

    coefficient: float
    axes: str

    def __post_init__(self):
        if not np.isfinite(self.coefficient):
            raise ValueError("coefficient must be finite")
        if any(a not in "IXYZ" for a in self.axes):
            raise ValueError(f"bad axes string {self.axes!r}")
        if all(a == "I" for a in self.axes):
            raise ValueError("identity term is not allowed in model builders")

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(q for q, a in enumerate(self.axes) if a != "I")


@dataclass(frozen=True)
class HamiltonianSpec:
    n: int
    terms: tuple[PauliTerm, ...]
    kind: str
    seed: int
    j_max: float

    def coupling_terms(self) -> tuple[PauliTerm, ...]:
        return tuple(t for t in self.terms if len(t.support) == 2)

    def field_terms(self) -> tuple[PauliTerm, ...]:
        return tuple(t for t in self.terms if len(t.support) == 1)


def _term(n: int, coeff: float, placed: dict[int, str]) -> PauliTerm:
    axes = "".join(placed.get(q, "I") for q in range(n))
    return PauliTerm(coeff, axes)


def build_hamiltonian(kind: str, n: int, j_max: float, seed: int,
                      fixed_j: float | None = None,
                      include_fields: bool = True) -> HamiltonianSpec:
    """Build one of the four nearest-neighbor chain models.

    Couplings are J ~ U(0, j_max) (shared per edge for Heisenberg/XY/Ising,
    independent per edge and axis for Random); fields are h ~ U(-1, 1).
    `fixed_j` replaces every coupling draw with the given value, for golden
    tests. `include_fields=False` drops field terms (commuting-model checks).
    """
    if kind not in KINDS:
        raise ValueError(f"unknown kind {kind!r}")
    if not 2 <= n <= 10:
        raise ValueError("n must be in [2, 10]")
    if j_max <= 0:
        raise ValueError("j_max must be positive")
    rng = np.random.default_rng(seed)
    terms: list[PauliTerm] = []
    for i in range(n - 1):
        if kind == "Random":
            for axis in _AXES_BY_KIND[kind]:
                j = fixed_j if fixed_j is not None else float(rng.uniform(0.0, j_max))
                terms.append(_term(n, j, {i: axis, i + 1: axis}))
        else:
            j = fixed_j if fixed_j is not None else float(rng.uniform(0.0, j_max))
            for axis in _AXES_BY_KIND[kind]:
                terms.append(_term(n, j, {i: axis, i + 1: axis}))
    if include_fields:
        if kind == "Ising":
            for q in range(n):
                h = float(rng.uniform(-1.0, 1.0))
                terms.append(_term(n, h, {q: "X"}))
        elif kind == "Random":
            for q in range(n):
                h = float(rng.uniform(-1.0, 1.0))
                terms.append(_term(n, h, {q: "Z"}))
    return HamiltonianSpec(n, tuple(terms), kind, seed, j_max)


def term_matrix(term: PauliTerm) -> np.ndarray:
    """Dense matrix of one Pauli string under the qubit-0-is-LSB convention."""
    m = np.array([[1.0 + 0j]])
    # numpy kron(A, B) puts A on the most significant axes, so walk from the
    # highest qubit down to keep qubit 0 least significant.
    for axis in reversed(term.axes):
        m = np.kron(m, PAULI[axis])
    return term.coefficient * m


def to_matrix(spec: HamiltonianSpec) -> np.ndarray:
    """Sum of weighted Pauli strings as a dense Hermitian matrix."""
    d = 2**spec.n
    h = np.zeros((d, d), dtype=complex)
    for term in spec.terms:
        h += term_matrix(term)
    assert is_hermitian(h), "model matrix drifted from Hermitian"
    return h


def target_unitary(spec: HamiltonianSpec, t: float) -> np.ndarray:
    """U_target = e^{-iHt} via the cached eigendecomposition."""
    return EigenSystem(to_matrix(spec)).expm(t)


def spec_to_json(spec: HamiltonianSpec) -> str:
    return json.dumps(
        {
            "kind": spec.kind,
            "n": spec.n,
            "j_max": spec.j_max,
            "seed": spec.seed,
            "terms": [{"coefficient": t.coefficient, "axes": t.axes} for t in spec.terms],
        },
        indent=2,
    )


def spec_from_json(text: str) -> HamiltonianSpec:
    data = json.loads(text)
    terms = tuple(PauliTerm(t["coefficient"], t["axes"]) for t in data["terms"])
    return HamiltonianSpec(data["n"], terms, data["kind"], data["seed"], data["j_max"])
