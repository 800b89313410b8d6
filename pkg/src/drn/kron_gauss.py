"""
Tensor normal distribution over order-3 tensors.

vec(X) ~ N(vec(M), S1 kron S2 kron S3), each S_k stored with its lower
Cholesky factor L_k. The d x d product is never formed outside `dense()`:
inverses are applied mode by mode with triangular solves, which costs
O(sum_k d_k^2 * d / d_k) instead of O(d^3).

Internal helpers work on arrays whose last three axes are the tensor modes,
so a stack of n samples of shape (n, d1, d2, d3) goes through the same code
as a single tensor.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import reduce
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import LinAlgError, cholesky, eigh, solve_triangular

from drn.errors import ArgumentError, EstimationError
from drn.tensor_core import Tensor3, fold_array, kronecker, unfold_array

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)
SYMMETRY_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class SpdFactor:
    """Symmetric positive definite matrix with its Cholesky factor."""

    matrix: NDArray[np.float64]
    chol: NDArray[np.float64]
    logdet: float

    @classmethod
    def from_matrix(cls, matrix: ArrayLike, mode: Optional[int] = None) -> SpdFactor:
        m = np.array(matrix, dtype=np.float64, ndmin=2)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ArgumentError(f"covariance factor must be square, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise EstimationError("covariance factor has non-finite entries", mode=mode)
        if np.max(np.abs(m - m.T)) > SYMMETRY_TOL * max(1.0, float(np.max(np.abs(m)))):
            raise ArgumentError("covariance factor is not symmetric")
        m = 0.5 * (m + m.T)
        try:
            chol = cholesky(m, lower=True)
        except LinAlgError as e:
            raise EstimationError(f"matrix is not positive definite ({e})", mode=mode) from e
        diag = np.diag(chol)
        if np.any(diag <= 0.0):
            raise EstimationError("Cholesky factor has a non-positive diagonal", mode=mode)
        m.setflags(write=False)
        chol.setflags(write=False)
        return cls(m, chol, float(2.0 * np.sum(np.log(diag))))

    @classmethod
    def identity(cls, dim: int, scale: float = 1.0) -> SpdFactor:
        return cls.from_matrix(np.eye(dim) * scale)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix))

    def inverse(self) -> NDArray[np.float64]:
        eye = np.eye(self.dim)
        half = solve_triangular(self.chol, eye, lower=True)
        return half.T @ half


def _apply_along(array: NDArray[np.float64], axis: int, fn) -> NDArray[np.float64]:
    return fold_array(fn(unfold_array(array, axis)), axis, array.shape)


def _solve_lower(array, chol, axis, transpose=False):
    trans = "T" if transpose else "N"
    return _apply_along(array, axis, lambda m: solve_triangular(chol, m, lower=True, trans=trans))


@dataclass(frozen=True, eq=False)
class KronCovariance:
    """S1 kron S2 kron S3, kept as its three factors."""

    factors: Tuple[SpdFactor, SpdFactor, SpdFactor]

    def __post_init__(self):
        if len(self.factors) != 3:
            raise ArgumentError(f"expected 3 covariance factors, got {len(self.factors)}")
        object.__setattr__(self, "factors", tuple(self.factors))

    @classmethod
    def identity(cls, dims: Sequence[int]) -> KronCovariance:
        return cls(tuple(SpdFactor.identity(d) for d in dims))

    @classmethod
    def from_matrices(cls, matrices: Sequence[ArrayLike]) -> KronCovariance:
        return cls(tuple(SpdFactor.from_matrix(m, mode=k + 1) for k, m in enumerate(matrices)))

    @property
    def dims(self) -> Tuple[int, int, int]:
        return tuple(f.dim for f in self.factors)

    @property
    def total_dim(self) -> int:
        return reduce(lambda a, b: a * b, self.dims)

    def logdet(self) -> float:
        """log|S1 kron S2 kron S3| = sum_k (d / d_k) log|S_k|."""
        d = self.total_dim
        return sum(d // f.dim * f.logdet for f in self.factors)

    def whiten(
        self,
        array: NDArray[np.float64],
        skip: Sequence[int] = (),
        tally: Optional[Dict[str, int]] = None,
    ) -> NDArray[np.float64]:
        """
        Apply L_k^-1 along every mode not in `skip` (1-based) of the trailing three axes.

        When `tally` is given, tally["triangular_solve"] is increased by the
        multiply-adds of the solves actually performed.
        """
        offset = array.ndim - 3
        for k, factor in enumerate(self.factors):
            if k + 1 not in skip:
                array = _solve_lower(array, factor.chol, offset + k)
                if tally is not None:
                    n = factor.dim
                    tally["triangular_solve"] = tally.get("triangular_solve", 0) + n * (n + 1) // 2 * (array.size // n)
        return array

    def solve_array(self, array: NDArray[np.float64]) -> NDArray[np.float64]:
        offset = array.ndim - 3
        for k, factor in enumerate(self.factors):
            array = _solve_lower(array, factor.chol, offset + k)
            array = _solve_lower(array, factor.chol, offset + k, transpose=True)
        return array

    def solve(self, t: Tensor3) -> Tensor3:
        """(S1 kron S2 kron S3)^-1 vec(t), returned folded back into a tensor."""
        self._check(t.dims)
        return Tensor3(self.solve_array(np.array(t.data)))

    def dense(self) -> NDArray[np.float64]:
        """Materialized product; for tests and diagnostics only."""
        m1, m2, m3 = (f.matrix for f in self.factors)
        return kronecker(m1, kronecker(m2, m3))

    def scaled(self, scale: float) -> KronCovariance:
        """Fold a positive scalar into the first factor."""
        first, *rest = self.factors
        return KronCovariance((SpdFactor.from_matrix(first.matrix * scale), *rest))

    def unit_variance(self) -> KronCovariance:
        """Every factor rescaled to trace equal to its dimension, so the product has mean eigenvalue 1."""
        return KronCovariance(
            tuple(SpdFactor.from_matrix(f.matrix * (f.dim / f.trace), mode=k + 1) for k, f in enumerate(self.factors))
        )

    def _check(self, dims: Sequence[int]) -> None:
        if tuple(dims) != self.dims:
            raise ArgumentError(f"tensor dims {tuple(dims)} do not match covariance dims {self.dims}")


@dataclass(frozen=True, eq=False)
class KronEigenbasis:
    """
    Eigendecomposition S_k = U_k diag(s_k) U_k^T of each factor.

    The inverse eigenvalues of the product are the outer product of the
    factor ones, so (I + w S^-1)^-1 vec(X) costs three rotations and one
    elementwise division.
    """

    bases: Tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]
    precision: NDArray[np.float64]

    @classmethod
    def from_covariance(cls, cov: KronCovariance) -> KronEigenbasis:
        values, bases = zip(*(eigh(f.matrix) for f in cov.factors))
        if any(np.any(v <= 0.0) for v in values):
            raise EstimationError("covariance factor has a non-positive eigenvalue")
        inv = [1.0 / v for v in values]
        precision = inv[0][:, None, None] * inv[1][None, :, None] * inv[2][None, None, :]
        return cls(tuple(bases), precision)

    def max_precision(self) -> float:
        return float(np.max(self.precision))

    def shrink(self, array: NDArray[np.float64], weight: float) -> NDArray[np.float64]:
        """(I + weight * S^-1)^-1 applied to a (d1, d2, d3) array."""
        u1, u2, u3 = self.bases
        rotated = np.einsum("ia,jb,kc,ijk->abc", u1, u2, u3, array, optimize=True)
        rotated /= 1.0 + weight * self.precision
        return np.einsum("ia,jb,kc,abc->ijk", u1, u2, u3, rotated, optimize=True)


@dataclass(frozen=True, eq=False)
class TensorNormal:
    mean: Tensor3
    cov: KronCovariance

    def __post_init__(self):
        self.cov._check(self.mean.dims)

    @classmethod
    def standard(cls, dims: Sequence[int]) -> TensorNormal:
        return cls(Tensor3.zeros(dims), KronCovariance.identity(dims))


def mahalanobis(dist: TensorNormal, x: Tensor3) -> float:
    dist.cov._check(x.dims)
    white = dist.cov.whiten(x.data - dist.mean.data)
    return float(np.sum(white * white))


def log_pdf(dist: TensorNormal, x: Tensor3) -> float:
    d = dist.cov.total_dim
    return -0.5 * d * LOG_2PI - 0.5 * dist.cov.logdet() - 0.5 * mahalanobis(dist, x)


def sample(dist: TensorNormal, rng: np.random.Generator) -> Tensor3:
    """M + Z x1 L1 x2 L2 x3 L3 with Z standard normal."""
    z = rng.standard_normal(dist.mean.dims)
    for k, factor in enumerate(dist.cov.factors):
        z = _apply_along(z, k, lambda m, L=factor.chol: L @ m)
    return Tensor3(dist.mean.data + z)


def _stack(samples: Sequence[Tensor3]) -> NDArray[np.float64]:
    if len(samples) == 0:
        raise ArgumentError("at least one sample is required")
    dims = samples[0].dims
    for s in samples:
        if s.dims != dims:
            raise ArgumentError(f"samples have mixed dims: {dims} vs {s.dims}")
    return np.stack([s.data for s in samples])


def _centered_log_likelihood(centered: NDArray[np.float64], cov: KronCovariance) -> float:
    n = centered.shape[0]
    white = cov.whiten(centered)
    quad = float(np.sum(white * white))
    return -0.5 * n * cov.total_dim * LOG_2PI - 0.5 * n * cov.logdet() - 0.5 * quad


def log_likelihood(samples: Sequence[Tensor3], dist: TensorNormal) -> float:
    """Sum of log_pdf over a sample set."""
    stack = _stack(samples)
    dist.cov._check(stack.shape[1:])
    return _centered_log_likelihood(stack - dist.mean.data, dist.cov)


def mle_mean(samples: Sequence[Tensor3]) -> Tensor3:
    return Tensor3(np.mean(_stack(samples), axis=0))


@dataclass(frozen=True, eq=False)
class FlipFlopResult:
    covariance: KronCovariance
    iterations: int
    log_likelihood: float
    converged: bool
    history: Tuple[float, ...]


def flip_flop_mle(
    samples: Sequence[Tensor3],
    mean: Tensor3,
    init: Optional[KronCovariance] = None,
    tol: float = 1e-8,
    max_iter: int = 200,
) -> FlipFlopResult:
    """
    Maximum likelihood Kronecker covariance for a fixed mean.

    Each sweep updates S1, S2, S3 in order, every update using the most
    recent estimate of the other two:

        S_k = 1 / (n * d / d_k) * sum_i Y_i(k) (others)^-1 Y_i(k)^T

    and stops once the relative change of the total log-likelihood drops
    below `tol`. The likelihood never decreases from one sweep to the next.
    Raises EstimationError naming the mode whose Gram matrix is singular.
    """
    if max_iter < 1:
        raise ArgumentError(f"max_iter must be positive, got {max_iter}")
    stack = _stack(samples)
    dims = stack.shape[1:]
    if tuple(dims) != mean.dims:
        raise ArgumentError(f"mean dims {mean.dims} do not match sample dims {tuple(dims)}")
    cov = init if init is not None else KronCovariance.identity(dims)
    cov._check(dims)

    n = stack.shape[0]
    total = int(np.prod(dims))
    centered = stack - mean.data
    ll = _centered_log_likelihood(centered, cov)
    history = [ll]
    converged = False
    iterations = 0

    for iterations in range(1, max_iter + 1):
        factors: List[SpdFactor] = list(cov.factors)
        for k in range(3):
            white = KronCovariance(tuple(factors)).whiten(centered, skip=(k + 1,))
            unfolded = unfold_array(white, k + 1)
            gram = unfolded @ unfolded.T / (n * (total // dims[k]))
            try:
                factors[k] = SpdFactor.from_matrix(0.5 * (gram + gram.T), mode=k + 1)
            except EstimationError as e:
                raise EstimationError(
                    "singular update, the scatter Gram matrix is not positive definite", mode=k + 1
                ) from e
        cov = KronCovariance(tuple(factors))
        previous, ll = ll, _centered_log_likelihood(centered, cov)
        history.append(ll)
        logger.debug("flip-flop sweep %d: log-likelihood %.12g", iterations, ll)
        if abs(ll - previous) <= tol * max(abs(previous), np.finfo(float).tiny):
            converged = True
            break

    return FlipFlopResult(cov, iterations, ll, converged, tuple(history))


def normalize_identifiable(cov: KronCovariance) -> Tuple[KronCovariance, float]:
    """Rescale every factor to unit trace; scale * (S1' kron S2' kron S3') is the input product."""
    traces = [f.trace for f in cov.factors]
    normalized = KronCovariance(
        tuple(SpdFactor.from_matrix(f.matrix / t) for f, t in zip(cov.factors, traces))
    )
    return normalized, float(np.prod(traces))
