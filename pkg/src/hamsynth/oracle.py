"""Greedy adaptive block selection.

At each step every candidate block is evaluated at matrix level against the
target; the argmax block is appended if it improves fidelity by at least
`min_gain`. Termination: fidelity target reached, best improvement below the
stall threshold, or block budget exhausted. Ties within 1e-12 in fidelity
prefer fewer raw CX, then larger dt.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .circuit import Circuit, CouplingMap
from .model import HamiltonianSpec, build_hamiltonian, target_unitary
from .numerics import process_fidelity
from .trotter import BlockLibrary, TrotterBlock

TIE_ATOL = 1e-12


@dataclass
class OracleConfig:
    f_target: float = 0.99
    min_gain: float = 1e-6
    max_blocks: int = 30
    library_mode: str = "expanded"

    def __post_init__(self):
        if not 0.0 < self.f_target <= 1.0:
            raise ValueError("f_target must be in (0, 1]")
        if self.min_gain <= 0.0:
            raise ValueError("min_gain must be positive")


@dataclass
class OracleTrace:
    chosen: list[tuple[int, float, float]] = field(default_factory=list)
    f_initial: float = 0.0
    terminated_by: str = "stall"

    def to_json(self) -> str:
        return json.dumps(
            {
                "f_initial": self.f_initial,
                "terminated_by": self.terminated_by,
                "chosen": [
                    {"block": b, "dt": dt, "fidelity_after": f}
                    for b, dt, f in self.chosen
                ],
            },
            indent=2,
        )

    @property
    def f_final(self) -> float:
        return self.chosen[-1][2] if self.chosen else self.f_initial


def greedy_select(u_target: np.ndarray, library: BlockLibrary,
                  cfg: OracleConfig) -> tuple[list[TrotterBlock], OracleTrace]:
    """Core loop over cached block matrices; returns chosen blocks in
    application order."""
    d = u_target.shape[0]
    current = np.eye(d, dtype=complex)
    trace = OracleTrace()
    trace.f_initial = process_fidelity(u_target, current)
    f_now = trace.f_initial
    chosen: list[TrotterBlock] = []
    while len(chosen) < cfg.max_blocks:
        best_idx, best_f = -1, -1.0
        for idx, block in enumerate(library.blocks):
            f = process_fidelity(u_target, block.matrix @ current)
            if f > best_f + TIE_ATOL:
                best_idx, best_f = idx, f
            elif abs(f - best_f) <= TIE_ATOL and best_idx >= 0:
                inc, cur = library.blocks[idx], library.blocks[best_idx]
                if (inc.raw_cx, -inc.dt) < (cur.raw_cx, -cur.dt):
                    best_idx, best_f = idx, f
        if best_idx < 0 or best_f - f_now < cfg.min_gain:
            trace.terminated_by = "stall"
            break
        block = library.blocks[best_idx]
        current = block.matrix @ current
        f_now = best_f
        chosen.append(block)
        trace.chosen.append((best_idx, block.dt, f_now))
        if f_now >= cfg.f_target:
            trace.terminated_by = "target"
            break
    else:
        trace.terminated_by = "budget"
    return chosen, trace


def greedy_compile(spec: HamiltonianSpec, t: float, cfg: OracleConfig,
                   library: BlockLibrary | None = None) -> tuple[Circuit, OracleTrace]:
    """Greedy compile: raw circuit concatenation of the chosen blocks.

    Transpilation is applied separately; candidate evaluation uses each
    block's cached matrix only.
    """
    if library is None:
        library = BlockLibrary.build(spec, t, mode=cfg.library_mode)
    if not library.blocks:
        raise ValueError("block library is empty")
    u_target = target_unitary(spec, t)
    chosen, trace = greedy_select(u_target, library, cfg)
    raw = Circuit(spec.n, [], CouplingMap.linear(spec.n))
    for block in chosen:
        raw.extend(block.circuit)
    return raw, trace


def j_scan(kind: str, n: int, t: float, j_grid: list[float], seed: int,
           cfg: OracleConfig | None = None,
           fixed_j: bool = False) -> list[dict]:
    """Run greedy_compile across a grid of coupling strengths."""
    cfg = cfg or OracleConfig()
    rows = []
    for j in j_grid:
        spec = build_hamiltonian(kind, n, j, seed, fixed_j=j if fixed_j else None)
        _, trace = greedy_compile(spec, t, cfg)
        rows.append(
            {
                "J": j,
                "blocks_selected": len(trace.chosen),
                "F": trace.f_final,
                "terminated_by": trace.terminated_by,
            }
        )
    return rows
