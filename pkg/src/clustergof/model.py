"""Log-linear models over lexicographically ordered contingency-table cells.

A model is a design matrix ``W`` of shape ``(M, M0)`` mapping a parameter
vector ``theta`` to cell probabilities ``p(theta) = exp(W theta) / sum(exp(W theta))``.
Cells are always stored in a flat, lexicographic layout; two-way ``(i, j)``
addressing is a thin convenience on top of it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

RANK_TOL = 1e-10
PROB_SUM_TOL = 1e-12


@dataclass(frozen=True)
class LogLinearModel:
    """Design matrix defining cell probabilities ``softmax(W theta)``.

    The matrix is stored as given; structural requirements (full column
    rank, independence from the all-ones vector, ``M0 < M - 1``) are checked
    by :func:`validate_design`, not at construction, so that defective
    designs can be inspected and reported on.
    """

    design: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.design, dtype=float)
        if w.ndim != 2:
            raise ValueError(f"design matrix must be 2-dimensional, got shape {w.shape}")
        if w.shape[0] < 2 or w.shape[1] < 1:
            raise ValueError(f"design matrix shape {w.shape} is too small")
        if not np.all(np.isfinite(w)):
            raise ValueError("design matrix contains non-finite entries")
        w.setflags(write=False)
        object.__setattr__(self, "design", w)

    @property
    def n_cells(self) -> int:
        """Number of contingency-table cells M."""
        return self.design.shape[0]

    @property
    def n_params(self) -> int:
        """Parameter dimension M0."""
        return self.design.shape[1]

    @property
    def df(self) -> int:
        """Residual degrees of freedom M - M0 - 1 of the fit."""
        return self.n_cells - self.n_params - 1


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of the structural checks on a design matrix."""

    full_rank: bool
    ones_independent: bool
    param_dim_ok: bool
    rank: int
    augmented_rank: int
    messages: tuple[str, ...] = field(default=())

    @property
    def ok(self) -> bool:
        return self.full_rank and self.ones_independent and self.param_dim_ok


def validate_design(model: LogLinearModel, tol: float = RANK_TOL) -> ValidationReport:
    """Check rank and ones-independence of the design; report, do not raise.

    Rank is computed from singular values with absolute tolerance ``tol``
    (designs here are small, integer-valued matrices).
    """
    w = model.design
    m, m0 = w.shape
    rank = int(np.sum(np.linalg.svd(w, compute_uv=False) > tol))
    augmented = np.hstack([np.ones((m, 1)), w])
    aug_rank = int(np.sum(np.linalg.svd(augmented, compute_uv=False) > tol))

    full_rank = rank == m0
    ones_independent = aug_rank == m0 + 1
    param_dim_ok = m0 < m - 1

    messages = []
    if not full_rank:
        messages.append(f"design has column rank {rank}, expected {m0}")
    if not ones_independent:
        messages.append("all-ones vector lies in the column span of the design")
    if not param_dim_ok:
        messages.append(f"parameter dimension {m0} must be < M - 1 = {m - 1}")
    return ValidationReport(
        full_rank=full_rank,
        ones_independent=ones_independent,
        param_dim_ok=param_dim_ok,
        rank=rank,
        augmented_rank=aug_rank,
        messages=tuple(messages),
    )


def as_probability_vector(p, tol: float = PROB_SUM_TOL) -> np.ndarray:
    """Validate and return ``p`` as a probability vector (entries >= 0, sum 1)."""
    vec = np.asarray(p, dtype=float)
    if vec.ndim != 1:
        raise ValueError(f"probability vector must be 1-dimensional, got shape {vec.shape}")
    if not np.all(np.isfinite(vec)):
        raise ValueError("probability vector contains non-finite entries")
    if np.any(vec < 0):
        raise ValueError("probability vector contains negative entries")
    total = float(vec.sum())
    if abs(total - 1.0) > max(tol, tol * vec.size):
        raise ValueError(f"probability vector sums to {total!r}, expected 1")
    return vec


def build_probabilities(model: LogLinearModel, theta) -> np.ndarray:
    """Map a parameter vector to cell probabilities ``softmax(W theta)``.

    The maximum of ``W theta`` is subtracted before exponentiation; the
    normalization makes the result invariant to that shift, so overflow is
    avoided at no cost. Output is strictly positive and sums to 1.
    """
    th = np.asarray(theta, dtype=float)
    if th.shape != (model.n_params,):
        raise ValueError(
            f"parameter vector has shape {th.shape}, expected ({model.n_params},)"
        )
    if not np.all(np.isfinite(th)):
        raise ValueError("parameter vector contains non-finite entries")
    eta = model.design @ th
    eta -= eta.max()
    weights = np.exp(eta)
    return weights / weights.sum()


def sigma_matrix(p) -> np.ndarray:
    """Multinomial covariance kernel ``diag(p) - p p^T`` of a probability vector.

    Symmetric, positive semidefinite, and annihilates the all-ones vector.
    """
    vec = as_probability_vector(p)
    return np.diag(vec) - np.outer(vec, vec)


def cell_index(i: int, j: int, j_levels: int) -> int:
    """0-based flat position of 1-based cell ``(i, j)`` in lexicographic order."""
    if not (1 <= j <= j_levels) or i < 1:
        raise ValueError(f"cell ({i}, {j}) out of range for {j_levels} column levels")
    return (i - 1) * j_levels + (j - 1)


def independence_design(i_levels: int, j_levels: int) -> LogLinearModel:
    """Effects-coded design for independence of two categorical variables.

    Rows are the ``M = I*J`` cells in lexicographic order; columns are the
    ``(I-1) + (J-1)`` main effects, with the last level of each variable
    coded as -1 (so log p_ij = u + a_i + b_j with sum-to-zero effects).
    """
    if i_levels < 2 or j_levels < 2:
        raise ValueError("independence design needs at least 2 levels per variable")
    m = i_levels * j_levels
    m0 = (i_levels - 1) + (j_levels - 1)
    w = np.zeros((m, m0))
    for i in range(1, i_levels + 1):
        for j in range(1, j_levels + 1):
            row = w[cell_index(i, j, j_levels)]
            if i < i_levels:
                row[i - 1] = 1.0
            else:
                row[: i_levels - 1] = -1.0
            if j < j_levels:
                row[i_levels - 1 + j - 1] = 1.0
            else:
                row[i_levels - 1 :] = -1.0
    return LogLinearModel(w)


def load_design_csv(path) -> LogLinearModel:
    """Load a design matrix from CSV: M rows, M0 plain-decimal columns."""
    try:
        w = np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
    except ValueError as exc:
        raise ValueError(f"could not parse design matrix from {path}: {exc}") from exc
    return LogLinearModel(w)
