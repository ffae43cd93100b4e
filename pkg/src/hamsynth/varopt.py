"""Trotter-structured variational ansatz and quasi-Newton refinement.

Each layer applies XX, YY, ZZ rotations on every edge (edge-major) followed
by single-qubit Z rotations, L*(4n-3) parameters total. Cost evaluation uses
the closed diagonal-phase form of each cached involutory generator, one
tensor application per rotation. Gradients are scipy's forward differences
inside L-BFGS-B; the plateau probe uses centered differences with its own
epsilon so it is optimizer-independent.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize as scipy_minimize

from .circuit import Circuit, CouplingMap
from .model import HamiltonianSpec, build_hamiltonian, target_unitary
from .numerics import PAULI, process_fidelity
from .oracle import OracleConfig, OracleTrace, greedy_compile
from .transpile import transpile

_PP4 = {ax: np.kron(PAULI[ax], PAULI[ax]) for ax in "XYZ"}
_Z2 = PAULI["Z"]


@dataclass
class OptimizerSettings:
    max_iter: int = 300
    f_tol: float = 1e-15
    g_tol: float = 1e-10
    history: int = 10
    fd_step: float = math.sqrt(np.finfo(float).eps)


@dataclass
class OptResult:
    theta: np.ndarray
    f_final: float
    fidelity: float
    iterations: int
    function_evals: int
    trace: list[float] = field(default_factory=list)
    converged: bool = True


@dataclass
class Ansatz:
    """Layered rotation schedule; params are exponent angles theta of
    exp(-i theta G) per generator."""

    n: int
    layers: int
    params: np.ndarray

    def __post_init__(self):
        expect = self.layers * (4 * self.n - 3)
        if self.params.shape != (expect,):
            raise ValueError(f"need {expect} parameters, got {self.params.shape}")

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [(i, i + 1) for i in range(self.n - 1)]

    def slots_per_layer(self) -> int:
        return 4 * self.n - 3


def build_ansatz(spec: HamiltonianSpec, layers: int, init: str = "trotter_angles",
                 phase1: OracleTrace | None = None,
                 phase1_blocks: list[tuple[float, dict]] | None = None,
                 sigma: float = 0.1, seed: int = 0) -> Ansatz:
    """Initialize the parameter vector.

    `trotter_angles` copies net per-term rotation angles of the Phase-1
    blocks into the first layers (one block per layer) and zero-initializes
    appended layers; `near_zero` draws theta ~ N(0, sigma^2); and
    `random_uniform` draws theta ~ U(-pi, pi).
    """
    if layers < 1:
        raise ValueError("need at least one layer")
    n = spec.n
    per_layer = 4 * n - 3
    theta = np.zeros(layers * per_layer)
    rng = np.random.default_rng(seed)
    if init == "near_zero":
        theta = rng.normal(0.0, sigma, layers * per_layer)
    elif init == "random_uniform":
        theta = rng.uniform(-math.pi, math.pi, layers * per_layer)
    elif init == "trotter_angles":
        coeff = {
            (t.support, t.axes[t.support[0]]): t.coefficient for t in spec.terms
        }
        dts = [dt for _, dt, _ in phase1.chosen] if phase1 is not None else []
        for layer, dt in enumerate(dts[:layers]):
            base = layer * per_layer
            k = 0
            for edge in [(i, i + 1) for i in range(n - 1)]:
                for ax in "XYZ":
                    theta[base + k] = coeff.get((edge, ax), 0.0) * dt
                    k += 1
            for q in range(n):
                zc = coeff.get(((q,), "Z"), 0.0)
                theta[base + k] = zc * dt
                k += 1
    else:
        raise ValueError(f"unknown init {init!r}")
    return Ansatz(n, layers, theta)


def _apply_two_body(v: np.ndarray, axis: str, q: int, n: int, theta: float) -> np.ndarray:
    """Left-multiply by exp(-i theta P_q P_{q+1}) via one 4x4 application."""
    m4 = math.cos(theta) * np.eye(4) - 1j * math.sin(theta) * _PP4[axis]
    d = v.shape[0]
    t = v.reshape([2] * n + [d])
    ax0, ax1 = n - 1 - q, n - 2 - q
    t = np.tensordot(m4.reshape(2, 2, 2, 2), t, axes=([2, 3], [ax1, ax0]))
    t = np.moveaxis(t, [0, 1], [ax1, ax0])
    return t.reshape(d, d)


def _apply_z(v: np.ndarray, q: int, n: int, theta: float) -> np.ndarray:
    m2 = np.array([[np.exp(-1j * theta), 0], [0, np.exp(1j * theta)]])
    d = v.shape[0]
    t = v.reshape([2] * n + [d])
    ax = n - 1 - q
    t = np.tensordot(m2, t, axes=([1], [ax]))
    t = np.moveaxis(t, 0, ax)
    return t.reshape(d, d)


def ansatz_unitary(ansatz: Ansatz, theta: np.ndarray | None = None) -> np.ndarray:
    """Dense unitary of the ansatz at the given parameters."""
    if theta is None:
        theta = ansatz.params
    n = ansatz.n
    if theta.shape != ansatz.params.shape:
        raise ValueError("parameter length mismatch")
    d = 2**n
    v = np.eye(d, dtype=complex)
    k = 0
    for _ in range(ansatz.layers):
        for q in range(n - 1):
            for ax in "XYZ":
                if theta[k] != 0.0:
                    v = _apply_two_body(v, ax, q, n, theta[k])
                k += 1
        for q in range(n):
            if theta[k] != 0.0:
                v = _apply_z(v, q, n, theta[k])
            k += 1
    return v


def ansatz_circuit(ansatz: Ansatz, theta: np.ndarray | None = None) -> Circuit:
    """Raw circuit emission: 6(n-1) two-body rotations per layer plus fields."""
    if theta is None:
        theta = ansatz.params
    c = Circuit(ansatz.n, [], CouplingMap.linear(ansatz.n))
    k = 0
    name = {"X": "RXX", "Y": "RYY", "Z": "RZZ"}
    for _ in range(ansatz.layers):
        for q in range(ansatz.n - 1):
            for ax in "XYZ":
                c.add(name[ax], (q, q + 1), (2.0 * theta[k],))
                k += 1
        for q in range(ansatz.n):
            c.add("RZ", (q,), (2.0 * theta[k],))
            k += 1
    return c


def cost(ansatz: Ansatz, theta: np.ndarray, u_target: np.ndarray) -> float:
    """C(theta) = 1 - F(U_target, V(theta))."""
    return 1.0 - process_fidelity(u_target, ansatz_unitary(ansatz, theta))


def minimize(ansatz: Ansatz, u_target: np.ndarray,
             settings: OptimizerSettings | None = None) -> OptResult:
    """Limited-memory quasi-Newton descent with forward-difference gradients."""
    settings = settings or OptimizerSettings()
    evals = [0]
    trace: list[float] = []

    def fun(theta: np.ndarray) -> float:
        evals[0] += 1
        c = cost(ansatz, theta, u_target)
        if not np.isfinite(c):
            raise FloatingPointError("non-finite cost encountered")
        return c

    res = scipy_minimize(
        fun,
        ansatz.params,
        method="L-BFGS-B",
        jac=None,
        callback=lambda xk: trace.append(cost(ansatz, xk, u_target)),
        options={
            "maxiter": settings.max_iter,
            "ftol": settings.f_tol,
            "gtol": settings.g_tol,
            "maxcor": settings.history,
            "eps": settings.fd_step,
        },
    )
    return OptResult(
        theta=res.x,
        f_final=float(res.fun),
        fidelity=1.0 - float(res.fun),
        iterations=int(res.nit),
        function_evals=evals[0],
        trace=trace,
        converged=bool(res.success) or res.fun < 1e-2,
    )


def gradient_variance_probe(kind: str, j_max: float, n_range: list[int],
                            layers: int = 3, init_mode: str = "random_uniform",
                            seed: int = 0, samples: int = 100,
                            probed_params: int = 10,
                            eps: float = 1e-5) -> list[dict]:
    """Centered-difference gradient statistics versus qubit count.

    For each n, draw `samples` parameter vectors under `init_mode`, probe
    `probed_params` random components each with two-point differences, and
    report the gradient variance and mean absolute value.
    """
    rows = []
    for n in n_range:
        spec = build_hamiltonian(kind, n, j_max, seed + n)
        u_target = target_unitary(spec, 1.0)
        ansatz = build_ansatz(spec, layers, init="near_zero", seed=0)
        rng = np.random.default_rng(seed * 1000 + n)
        n_params = ansatz.params.size
        grads = []
        for _ in range(samples):
            if init_mode == "random_uniform":
                theta = rng.uniform(-math.pi, math.pi, n_params)
            elif init_mode == "trotter":
                theta = rng.normal(0.0, 0.1, n_params)
            else:
                raise ValueError(f"unknown init mode {init_mode!r}")
            for k in rng.integers(0, n_params, probed_params):
                tp = theta.copy()
                tp[k] += eps
                tm = theta.copy()
                tm[k] -= eps
                cp = cost(ansatz, tp, u_target)
                cm = cost(ansatz, tm, u_target)
                grads.append((cp - cm) / (2 * eps))
        grads = np.asarray(grads)
        rows.append(
            {
                "n": n,
                "params": n_params,
                "init": init_mode,
                "grad_variance": float(np.var(grads)),
                "grad_mean_abs": float(np.mean(np.abs(grads))),
            }
        )
    return rows


def refine(spec: HamiltonianSpec, t: float, cfg: OracleConfig | None = None,
           l_schedule: list[int] | None = None, seed: int = 0,
           settings: OptimizerSettings | None = None,
           f_target: float = 0.99) -> tuple[Circuit, OptResult, OracleTrace]:
    """Two-phase compile: greedy Phase 1, then variational refinement.

    The ansatz starts from the Phase-1 angles (all layers near zero when the
    oracle chose nothing); each retry escalates the layer count and
    re-perturbs the initialization with a derived seed. Returns the
    transpiled circuit, the optimizer result and the Phase-1 trace.
    """
    cfg = cfg or OracleConfig()
    l_schedule = l_schedule or [3, 4, 5]
    _, trace = greedy_compile(spec, t, cfg)
    u_target = target_unitary(spec, t)
    best: OptResult | None = None
    best_ansatz: Ansatz | None = None
    for retry, layers in enumerate(l_schedule):
        layers = max(layers, len(trace.chosen))
        ansatz = build_ansatz(spec, layers, init="trotter_angles", phase1=trace)
        if retry > 0:
            rng = np.random.default_rng(seed + retry)
            ansatz.params = ansatz.params + rng.normal(0.0, 0.1, ansatz.params.size)
        result = minimize(ansatz, u_target, settings)
        if best is None or result.fidelity > best.fidelity:
            best, best_ansatz = result, ansatz
        if result.fidelity >= f_target:
            break
    else:
        best.converged = best.fidelity >= f_target
    raw = ansatz_circuit(best_ansatz, best.theta)
    return transpile(raw, 3), best, trace
