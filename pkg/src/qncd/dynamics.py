"""Quantum-walk evolution on a graph under piecewise-constant coupling noise.

A particle starts in a single node and evolves unitarily; the Hamiltonian on
step k is the graph adjacency with every edge weighted by the step's coupling
value. Occupation probabilities (the density-operator diagonal) are recorded
after every step.

Two propagation routes are provided: ``evolve`` works on the d-dimensional
state vector via eigendecomposition of the symmetric adjacency, while
``evolve_vectorized`` exponentiates the d^2 x d^2 Liouvillian acting on the
vectorized density operator. They agree to rounding; the vectorized route is
kept as a cross-check oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import NumericalError, ValidationError


@dataclass(frozen=True)
class GraphTopology:
    """Undirected simple graph on nodes 1..d."""

    d: int
    edges: frozenset[tuple[int, int]]

    def __post_init__(self):
        if self.d < 1:
            raise ValidationError("graph needs at least one node")
        norm = set()
        for edge in self.edges:
            s, l = edge
            if s == l:
                raise ValidationError(f"self-loop on node {s}")
            if not (1 <= s <= self.d and 1 <= l <= self.d):
                raise ValidationError(f"edge {edge} outside 1..{self.d}")
            norm.add((min(s, l), max(s, l)))
        object.__setattr__(self, "edges", frozenset(norm))

    @property
    def n_edges(self) -> int:
        return len(self.edges)


@dataclass(frozen=True)
class QuantumState:
    """Pure state as a complex amplitude vector, unit norm."""

    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=np.complex128)
        object.__setattr__(self, "amplitudes", amp)
        if amp.ndim != 1:
            raise ValidationError("amplitudes must be a vector")
        norm2 = float(np.vdot(amp, amp).real)
        if abs(norm2 - 1.0) > 1e-9:
            raise ValidationError(f"state norm^2 = {norm2}, not 1")

    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    @staticmethod
    def node_delta(d: int, node: int) -> "QuantumState":
        if not 1 <= node <= d:
            raise ValidationError(f"node {node} outside 1..{d}")
        amp = np.zeros(d, dtype=np.complex128)
        amp[node - 1] = 1.0
        return QuantumState(amp)


@dataclass(frozen=True)
class PopulationSequence:
    """(M+1) x d occupation probabilities at equally spaced times t_0..t_M."""

    populations: np.ndarray = field(repr=False)
    times: np.ndarray = field(repr=False)

    def __post_init__(self):
        pops = np.asarray(self.populations, dtype=np.float64)
        times = np.asarray(self.times, dtype=np.float64)
        object.__setattr__(self, "populations", pops)
        object.__setattr__(self, "times", times)
        if pops.ndim != 2 or times.ndim != 1 or pops.shape[0] != times.shape[0]:
            raise ValidationError("populations must be (M+1) x d with matching times")
        if pops.shape[0] < 1:
            raise ValidationError("need at least the initial row")
        if np.any(pops < -1e-12):
            raise ValidationError("negative population below tolerance")
        if np.any(np.abs(pops.sum(axis=1) - 1.0) > 1e-9):
            raise ValidationError("population rows must sum to 1")
        if np.count_nonzero(pops[0] == 1.0) != 1 or np.count_nonzero(pops[0]) != 1:
            raise ValidationError("row 0 must be a Kronecker delta")
        if len(times) > 1:
            deltas = np.diff(times)
            if np.any(np.abs(deltas - deltas[0]) > 1e-12 * max(1.0, abs(times[-1]))):
                raise ValidationError("time grid must be uniform")

    @property
    def steps(self) -> int:
        return self.populations.shape[0] - 1

    @property
    def n_nodes(self) -> int:
        return self.populations.shape[1]


def random_topology(d: int, edge_prob: float, rng: np.random.Generator) -> GraphTopology:
    """Erdos-Renyi G(d, p): each of the d(d-1)/2 edges kept with probability p.

    Consumes exactly one uniform block of length d(d-1)/2 from ``rng``.
    """
    if d < 2:
        raise ValidationError("d must be >= 2")
    if not 0.0 < edge_prob <= 1.0:
        raise ValidationError("edge_prob must lie in (0, 1]")
    rows, cols = np.triu_indices(d, k=1)
    mask = rng.random(rows.shape[0]) < edge_prob
    edges = frozenset((int(s) + 1, int(l) + 1) for s, l in zip(rows[mask], cols[mask]))
    return GraphTopology(d, edges)


def adjacency(topology: GraphTopology, g: float) -> np.ndarray:
    """Symmetric adjacency with every edge coupled at strength g, zero diagonal."""
    if not np.isfinite(g):
        raise ValidationError("coupling must be finite")
    a = np.zeros((topology.d, topology.d), dtype=np.float64)
    for s, l in topology.edges:
        a[s - 1, l - 1] = g
        a[l - 1, s - 1] = g
    return a


def _check_symmetric(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError("matrix must be square")
    scale = max(1.0, float(np.abs(a).max()))
    if np.abs(a - a.T).max() > 1e-12 * scale:
        raise ValidationError("matrix must be symmetric")
    return a


def liouvillian(a: np.ndarray) -> np.ndarray:
    """Generator of the vectorized von Neumann equation, -i(I (x) A - A^T (x) I)."""
    a = _check_symmetric(a)
    d = a.shape[0]
    eye = np.eye(d)
    return -1j * (np.kron(eye, a) - np.kron(a.T, eye))


def step_unitary(state: QuantumState, a: np.ndarray, delta: float) -> QuantumState:
    """Apply exp(-i * delta * A) to the state via symmetric eigendecomposition."""
    if delta <= 0:
        raise ValidationError("delta must be positive")
    a = _check_symmetric(a)
    try:
        w, v = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(
            f"eigendecomposition failed: {exc}; max|A| = {np.abs(a).max():.3e}"
        ) from exc
    phases = np.exp(-1j * delta * w)
    amp = v @ (phases * (v.T @ state.amplitudes))
    return QuantumState(amp)


def evolve(
    topology: GraphTopology,
    couplings,
    initial_node: int,
    delta: float,
) -> PopulationSequence:
    """Evolve a node delta for len(couplings) steps of duration delta.

    Row k+1 holds the populations after the step driven by couplings[k].
    Since every step's Hamiltonian is couplings[k] times the same unit
    adjacency, one eigendecomposition serves all steps.
    """
    if delta <= 0:
        raise ValidationError("delta must be positive")
    g = couplings.array() if hasattr(couplings, "array") else np.asarray(couplings, dtype=np.float64)
    if g.size < 1:
        raise ValidationError("need at least one coupling value")
    base = adjacency(topology, 1.0)
    try:
        w, v = np.linalg.eigh(base)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    psi = QuantumState.node_delta(topology.d, initial_node).amplitudes
    rows = np.empty((g.size + 1, topology.d), dtype=np.float64)
    rows[0] = np.abs(psi) ** 2
    coeff = v.T @ psi
    for k, gk in enumerate(g):
        coeff = np.exp(-1j * delta * gk * w) * coeff
        psi = v @ coeff
        rows[k + 1] = np.abs(psi) ** 2
    times = delta * np.arange(g.size + 1)
    return PopulationSequence(rows, times)


def evolve_vectorized(
    topology: GraphTopology,
    couplings,
    initial_node: int,
    delta: float,
) -> PopulationSequence:
    """Paper-literal route: exponentiate the d^2 x d^2 Liouvillian per step.

    The density operator is column-major vectorized; populations are its
    diagonal entries. Kept as an independent oracle for ``evolve``.
    """
    if delta <= 0:
        raise ValidationError("delta must be positive")
    g = couplings.array() if hasattr(couplings, "array") else np.asarray(couplings, dtype=np.float64)
    if g.size < 1:
        raise ValidationError("need at least one coupling value")
    d = topology.d
    psi = QuantumState.node_delta(d, initial_node).amplitudes
    rho = np.outer(psi, psi.conj())
    lam = rho.flatten(order="F")
    diag_idx = np.arange(d) * (d + 1)
    rows = np.empty((g.size + 1, d), dtype=np.float64)
    rows[0] = lam[diag_idx].real
    for k, gk in enumerate(g):
        propagator = scipy.linalg.expm(liouvillian(adjacency(topology, gk)) * delta)
        lam = propagator @ lam
        rows[k + 1] = lam[diag_idx].real
    rows = np.where((rows < 0) & (rows > -1e-12), 0.0, rows)
    times = delta * np.arange(g.size + 1)
    return PopulationSequence(rows, times)
