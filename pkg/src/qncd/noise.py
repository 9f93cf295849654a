"""Coupling-strength noise processes.

Sequences of coupling values are drawn either i.i.d. from a discrete
distribution or from an order-1 discrete Markov chain with a left-stochastic
transition matrix (columns indexed by the previous value, rows by the next).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonErgodicError, ValidationError

KIND_IID = "iid"
KIND_MARKOV = "markov"

# Coupling support used throughout the synthetic experiments.
COUPLING_SUPPORT = (1.0, 2.0, 3.0, 4.0, 5.0)

# The two published coupling-probability vectors, normalized to sum to 1
# (the printed values sum to 0.99996 and 0.9999 due to rounding).
_SKEWED_RAW = (0.0124, 0.04236, 0.0820, 0.2398, 0.6234)
_NEAR_UNIFORM_RAW = (0.1782, 0.1865, 0.2, 0.2107, 0.2245)
PROB_G_SKEWED = tuple(p / sum(_SKEWED_RAW) for p in _SKEWED_RAW)
PROB_G_NEAR_UNIFORM = tuple(p / sum(_NEAR_UNIFORM_RAW) for p in _NEAR_UNIFORM_RAW)


@dataclass(frozen=True)
class DiscreteDistribution:
    """Discrete law over a finite, strictly increasing real support."""

    support: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        support = tuple(float(v) for v in self.support)
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)
        if len(support) == 0 or len(support) != len(probs):
            raise ValidationError("support and probs must be nonempty and equal-length")
        if not all(np.isfinite(support)):
            raise ValidationError("support values must be finite")
        if any(b <= a for a, b in zip(support, support[1:])):
            raise ValidationError("support values must be strictly increasing")
        if any(p < 0 for p in probs):
            raise ValidationError("probabilities must be nonnegative")
        if abs(sum(probs) - 1.0) > 1e-12:
            raise ValidationError(f"probabilities sum to {sum(probs)!r}, not 1")

    @property
    def size(self) -> int:
        return len(self.support)

    def support_array(self) -> np.ndarray:
        return np.asarray(self.support, dtype=np.float64)

    def probs_array(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=np.float64)

    def mean(self) -> float:
        return float(np.dot(self.support_array(), self.probs_array()))


@dataclass(frozen=True)
class TransitionMatrix:
    """Left-stochastic 1-step transition matrix.

    entries[i][j] = p(next = support[i] | previous = support[j]); every
    column sums to 1.
    """

    entries: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        entries = tuple(tuple(float(v) for v in row) for row in self.entries)
        object.__setattr__(self, "entries", entries)
        d = len(entries)
        if d == 0 or any(len(row) != d for row in entries):
            raise ValidationError("transition matrix must be square and nonempty")
        mat = np.asarray(entries, dtype=np.float64)
        if np.any(mat < 0) or np.any(mat > 1):
            raise ValidationError("transition probabilities must lie in [0, 1]")
        colsums = mat.sum(axis=0)
        if np.any(np.abs(colsums - 1.0) > 1e-12):
            raise ValidationError(f"columns must sum to 1 (got {colsums})")

    @property
    def size(self) -> int:
        return len(self.entries)

    def matrix(self) -> np.ndarray:
        return np.asarray(self.entries, dtype=np.float64)

    @staticmethod
    def from_array(mat: np.ndarray) -> "TransitionMatrix":
        return TransitionMatrix(tuple(tuple(row) for row in np.asarray(mat, dtype=np.float64)))


@dataclass(frozen=True)
class NoiseProcess:
    """A coupling-noise source: i.i.d. draws or an order-1 Markov chain.

    ``stickiness`` records the construction knob when the transition matrix
    came from :func:`metropolis_chain`; it is carried into dataset headers.
    """

    dist: DiscreteDistribution
    transition: TransitionMatrix | None = None
    stickiness: float | None = None

    def __post_init__(self):
        if self.transition is not None and self.transition.size != self.dist.size:
            raise ValidationError(
                f"transition is {self.transition.size}x{self.transition.size} "
                f"but distribution has {self.dist.size} values"
            )
        if self.stickiness is not None and self.transition is None:
            raise ValidationError("stickiness recorded without a transition matrix")

    @property
    def kind(self) -> str:
        return KIND_IID if self.transition is None else KIND_MARKOV


@dataclass(frozen=True)
class CouplingSequence:
    """Piecewise-constant coupling values, one per evolution step."""

    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if len(self.values) == 0:
            raise ValidationError("coupling sequence must be nonempty")

    def __len__(self) -> int:
        return len(self.values)

    def array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)


def _cumulative(probs: np.ndarray) -> np.ndarray:
    cum = np.cumsum(probs)
    cum[-1] = 1.0  # guard against rounding in the last bin
    return cum


def sample_iid(dist: DiscreteDistribution, m: int, rng: np.random.Generator) -> CouplingSequence:
    """Draw m independent values from ``dist``.

    Consumes exactly m uniform variates from ``rng``; sampled values are
    copied from the support, never recomputed.
    """
    if m < 1:
        raise ValidationError("m must be >= 1")
    u = rng.random(m)
    idx = np.searchsorted(_cumulative(dist.probs_array()), u, side="right")
    return CouplingSequence(tuple(dist.support[i] for i in idx))


def sample_markov(process: NoiseProcess, m: int, rng: np.random.Generator) -> CouplingSequence:
    """Draw an m-step path of the chain; the first value comes from process.dist.

    Consumes exactly m uniform variates from ``rng``.
    """
    if process.kind != KIND_MARKOV:
        raise ValidationError("sample_markov requires a Markov process")
    if m < 1:
        raise ValidationError("m must be >= 1")
    u = rng.random(m)
    cum_cols = np.cumsum(process.transition.matrix(), axis=0)
    cum_cols[-1, :] = 1.0
    support = process.dist.support
    idx = int(np.searchsorted(_cumulative(process.dist.probs_array()), u[0], side="right"))
    values = [support[idx]]
    for k in range(1, m):
        idx = int(np.searchsorted(cum_cols[:, idx], u[k], side="right"))
        values.append(support[idx])
    return CouplingSequence(tuple(values))


def sample_process(process: NoiseProcess, m: int, rng: np.random.Generator) -> CouplingSequence:
    """Dispatch to the i.i.d. or Markov sampler based on the process kind."""
    if process.kind == KIND_IID:
        return sample_iid(process.dist, m, rng)
    return sample_markov(process, m, rng)


def _is_primitive(mat: np.ndarray) -> bool:
    # Wielandt: a nonnegative square matrix is primitive iff its boolean
    # adjacency to the power (d-1)^2 + 1 is entrywise positive.
    d = mat.shape[0]
    if d == 1:
        return mat[0, 0] > 0
    reach = mat > 0
    exponent = 1
    target = (d - 1) ** 2 + 1
    while exponent < target:
        reach = reach @ reach
        exponent *= 2
    return bool(reach.all())


def stationary_distribution(t: TransitionMatrix, tol: float = 1e-13, max_iter: int = 100_000) -> np.ndarray:
    """Unique stationary probability vector pi with T pi = pi.

    Raises NonErgodicError when the chain is reducible or periodic (then no
    unique stationary law exists) or when power iteration fails to converge.
    """
    mat = t.matrix()
    if not _is_primitive(mat):
        raise NonErgodicError("transition matrix is not irreducible and aperiodic")
    pi = np.full(t.size, 1.0 / t.size)
    for _ in range(max_iter):
        nxt = mat @ pi
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - pi)) < tol:
            return nxt
        pi = nxt
    raise NonErgodicError(f"power iteration did not converge within {max_iter} iterations")


def metropolis_chain(target: DiscreteDistribution, stickiness: float) -> TransitionMatrix:
    """Correlated chain whose stationary (and per-step) law equals ``target``.

    With probability ``stickiness`` the chain holds its current value;
    otherwise it redraws fresh from ``target`` (an independence sampler,
    always accepted because the proposal equals the target). The lag-1
    autocorrelation of the value process equals ``stickiness`` exactly.
    """
    if not 0.0 <= stickiness < 1.0:
        raise ValidationError("stickiness must lie in [0, 1)")
    if any(p <= 0 for p in target.probs):
        raise ValidationError("metropolis_chain requires strictly positive target probabilities")
    d = target.size
    probs = target.probs
    entries = tuple(
        tuple((stickiness if i == j else 0.0) + (1.0 - stickiness) * probs[i] for j in range(d))
        for i in range(d)
    )
    return TransitionMatrix(entries)


def lag1_autocorrelation(values: np.ndarray) -> float:
    """Sample lag-1 autocorrelation of a sequence."""
    x = np.asarray(values, dtype=np.float64)
    x = x - x.mean()
    denom = np.dot(x, x)
    if denom == 0.0:
        return 0.0
    return float(np.dot(x[:-1], x[1:]) / denom)
