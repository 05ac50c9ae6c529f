"""Clustered frequency tables and quasi-minimum power-divergence estimation.

A dataset is a collection of per-cluster count vectors organized into groups
of equal cluster size. Collapsing the tables gives the nonparametric cell
probability estimate; ``qmpe`` fits a log-linear model to it by minimizing a
power divergence of chosen order with a damped Newton iteration.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .model import LogLinearModel, build_probabilities

DEFAULT_GRAD_TOL = 1e-10
DEFAULT_STEP_TOL = 1e-12
DEFAULT_MAX_ITER = 500


@dataclass(frozen=True)
class ClusterTable:
    """Counts for one cluster: group label, cluster label, M-cell vector."""

    group: int
    cluster: int
    counts: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.counts)
        if c.ndim != 1:
            raise ValueError(f"cluster counts must be a vector, got shape {c.shape}")
        if not np.issubdtype(c.dtype, np.integer):
            if not np.all(c == np.floor(c)):
                raise ValueError("cluster counts must be integers")
            c = c.astype(np.int64)
        if np.any(c < 0):
            raise ValueError("cluster counts must be nonnegative")
        c = c.astype(np.int64, copy=True)
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def size(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class ClusterDataset:
    """Grouped cluster-level frequency tables.

    ``counts[g]`` is the ``(N_g, M)`` integer matrix of group ``g``'s cluster
    tables, every row of which sums to the group's common cluster size
    ``sizes[g]``; sizes are distinct across groups.
    """

    counts: tuple[np.ndarray, ...]
    sizes: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.counts) == 0:
            raise ValueError("dataset must contain at least one group")
        if len(self.counts) != len(self.sizes):
            raise ValueError("one cluster size per group is required")
        if len(set(self.sizes)) != len(self.sizes):
            raise ValueError(f"group cluster sizes must be distinct, got {self.sizes}")
        mats = []
        n_cells = None
        for g, (mat, n_g) in enumerate(zip(self.counts, self.sizes)):
            arr = np.asarray(mat)
            if arr.ndim != 2 or arr.shape[0] < 1:
                raise ValueError(f"group {g}: expected a (N_g, M) count matrix")
            if n_cells is None:
                n_cells = arr.shape[1]
            elif arr.shape[1] != n_cells:
                raise ValueError(f"group {g}: cell count {arr.shape[1]} != {n_cells}")
            if np.any(arr < 0) or not np.all(arr == np.floor(arr)):
                raise ValueError(f"group {g}: counts must be nonnegative integers")
            if int(n_g) < 1:
                raise ValueError(f"group {g}: cluster size must be >= 1")
            row_sums = arr.sum(axis=1)
            if np.any(row_sums != int(n_g)):
                bad = int(np.argmax(row_sums != int(n_g)))
                raise ValueError(
                    f"group {g}, cluster {bad}: row sum {int(row_sums[bad])} "
                    f"!= group cluster size {int(n_g)}"
                )
            arr = arr.astype(np.int64, copy=True)
            arr.setflags(write=False)
            mats.append(arr)
        object.__setattr__(self, "counts", tuple(mats))
        object.__setattr__(self, "sizes", tuple(int(n) for n in self.sizes))

    @classmethod
    def from_tables(cls, tables) -> "ClusterDataset":
        """Assemble a dataset from :class:`ClusterTable` rows.

        Groups are ordered by group label, clusters by cluster label.
        """
        tables = list(tables)
        if not tables:
            raise ValueError("dataset must contain at least one table")
        by_group: dict[int, list[ClusterTable]] = {}
        for t in tables:
            by_group.setdefault(t.group, []).append(t)
        mats, sizes = [], []
        for label in sorted(by_group):
            rows = sorted(by_group[label], key=lambda t: t.cluster)
            mats.append(np.vstack([t.counts for t in rows]))
            sizes.append(rows[0].size)
        return cls(counts=tuple(mats), sizes=tuple(sizes))

    @property
    def n_groups(self) -> int:
        return len(self.counts)

    @property
    def n_cells(self) -> int:
        return self.counts[0].shape[1]

    @property
    def group_counts(self) -> tuple[int, ...]:
        """Number of clusters N_g per group."""
        return tuple(mat.shape[0] for mat in self.counts)

    @property
    def n_clusters(self) -> int:
        """Total number of clusters N."""
        return sum(self.group_counts)

    @property
    def total_individuals(self) -> int:
        """sum_g n_g N_g, the total individual count."""
        return sum(n * mat.shape[0] for n, mat in zip(self.sizes, self.counts))

    def total_counts(self) -> np.ndarray:
        """Cell totals collapsed over every cluster."""
        return np.sum([mat.sum(axis=0) for mat in self.counts], axis=0)


def collapse(ds: ClusterDataset) -> np.ndarray:
    """Nonparametric cell-probability estimate from the pooled counts.

    Equals the w_g-weighted combination of the per-group estimates, with
    w_g = n_g N_g / sum_h n_h N_h.
    """
    return ds.total_counts() / ds.total_individuals


def group_collapse(ds: ClusterDataset, group: int) -> np.ndarray:
    """Cell-probability estimate from group ``group`` alone (0-based index).

    Divides the group's pooled counts by n_g * N_g, the group's individual
    count — the denominator under which collapse(ds) = sum_g w_g * group
    estimates holds as an exact identity.
    """
    mat = ds.counts[group]
    return mat.sum(axis=0) / (ds.sizes[group] * mat.shape[0])


@dataclass(frozen=True)
class FitOptions:
    """Convergence controls for :func:`qmpe`."""

    grad_tol: float = DEFAULT_GRAD_TOL
    step_tol: float = DEFAULT_STEP_TOL
    max_iter: int = DEFAULT_MAX_ITER
    check_unique: bool = False
    restarts: int = 5
    restart_scale: float = 1.0
    restart_seed: int = 0


@dataclass(frozen=True)
class FitResult:
    """A fitted log-linear model: minimizer of the chosen power divergence."""

    theta: np.ndarray
    fitted: np.ndarray
    lam2: float
    divergence_at_min: float
    iterations: int
    gradient_norm: float
    unique: bool | None = None


class FitError(RuntimeError):
    """Raised when the optimizer fails to converge; carries the best iterate."""

    def __init__(self, message: str, theta: np.ndarray, objective: float,
                 gradient_norm: float, iterations: int):
        super().__init__(message)
        self.theta = theta
        self.objective = objective
        self.gradient_norm = gradient_norm
        self.iterations = iterations


def _objective(lam2: float, p_hat: np.ndarray, model: LogLinearModel,
               theta: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """Divergence d(p_hat, p(theta)), its gradient, and Hessian in theta."""
    w = model.design
    p = build_probabilities(model, theta)
    sigma = np.diag(p) - np.outer(p, p)
    if lam2 == 0.0:
        pos = p_hat > 0
        value = float(np.sum(p_hat[pos] * np.log(p_hat[pos] / p[pos])))
        grad = w.T @ (p - p_hat)
        hess = w.T @ sigma @ w
    elif lam2 == -1.0:
        ell = np.log(p / p_hat)
        value = float(np.sum(p * ell))
        grad = w.T @ (sigma @ ell)
        core = np.diag(ell + 1.0) - (p @ ell) * np.eye(p.size) - np.outer(p, ell)
        hess = w.T @ core @ sigma @ w
    else:
        # u_r = (p_hat_r / p_r)^(lam+1); zero cells of p_hat contribute 0
        u = np.zeros_like(p)
        pos = p_hat > 0
        u[pos] = (p_hat[pos] / p[pos]) ** (lam2 + 1.0)
        a = u * p
        s = float(a.sum())
        value = (s - 1.0) / (lam2 * (lam2 + 1.0))
        grad = -(w.T @ (a - s * p)) / (lam2 + 1.0)
        core = lam2 * (np.diag(u) - np.outer(p, u)) + s * np.eye(p.size)
        hess = (w.T @ core @ sigma @ w) / (lam2 + 1.0)
    hess = 0.5 * (hess + hess.T)
    return value, grad, hess


def qmpe(p_hat, model: LogLinearModel, lam2: float,
         options: FitOptions | None = None) -> FitResult:
    """Fit theta by minimizing the order-``lam2`` divergence to ``p_hat``.

    Damped Newton iteration from theta = 0 with analytic gradient and
    Hessian; when the Hessian is not positive definite the step falls back
    to steepest descent, and every step is safeguarded by a backtracking
    line search. Convergence is declared at gradient norm <= ``grad_tol``
    or step norm <= ``step_tol``; running out of iterations raises
    :class:`FitError` carrying the best iterate. Deterministic for fixed
    inputs and options.

    Parameters
    ----------
    p_hat : array-like
        Collapsed cell-probability estimate (zero cells allowed for
        ``lam2 > -1``; rejected otherwise since the objective is infinite).
    model : LogLinearModel
        Design to fit.
    lam2 : float
        Divergence order of the estimator.
    options : FitOptions, optional
        Convergence controls; defaults match the module constants.
    """
    opts = options or FitOptions()
    q = np.asarray(p_hat, dtype=float)
    if q.shape != (model.n_cells,):
        raise ValueError(f"p_hat has shape {q.shape}, expected ({model.n_cells},)")
    if lam2 <= -1.0 and np.any(q == 0):
        raise ValueError(
            f"lam2 = {lam2} is infeasible: the objective is infinite at zero cells of p_hat"
        )

    theta = np.zeros(model.n_params)
    result = _minimize_from(lam2, q, model, theta, opts)

    if opts.check_unique:
        rng = np.random.default_rng(opts.restart_seed)
        unique = True
        for _ in range(opts.restarts):
            start = rng.normal(scale=opts.restart_scale, size=model.n_params)
            try:
                other = _minimize_from(lam2, q, model, start, opts)
            except FitError:
                continue
            if np.max(np.abs(other.fitted - result.fitted)) > 1e-6:
                unique = False
                break
        if not unique:
            warnings.warn(
                f"qmpe(lam2={lam2}) found distinct minima from random restarts; "
                "the fit is not unique",
                stacklevel=2,
            )
        result = replace(result, unique=unique)
    return result


def _minimize_from(lam2: float, q: np.ndarray, model: LogLinearModel,
                   theta0: np.ndarray, opts: FitOptions) -> FitResult:
    theta = np.asarray(theta0, dtype=float).copy()
    value, grad, hess = _objective(lam2, q, model, theta)
    best = (value, theta.copy(), float(np.linalg.norm(grad)), 0)

    for iteration in range(1, opts.max_iter + 1):
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm <= opts.grad_tol:
            return _finish(lam2, q, model, theta, value, grad_norm, iteration - 1, opts)
        try:
            factor = scipy.linalg.cho_factor(hess)
            direction = -scipy.linalg.cho_solve(factor, grad)
        except scipy.linalg.LinAlgError:
            direction = -grad
        slope = float(grad @ direction)
        if slope >= 0:  # not a descent direction; fall back to the gradient
            direction = -grad
            slope = -grad_norm**2

        step = 1.0
        for _ in range(60):
            candidate = theta + step * direction
            new_value, new_grad, new_hess = _objective(lam2, q, model, candidate)
            if new_value <= value + 1e-4 * step * slope:
                break
            step *= 0.5
        else:  # line search exhausted: the iterate is numerically stationary
            return _finish(lam2, q, model, theta, value, grad_norm, iteration, opts)

        step_norm = float(np.linalg.norm(step * direction))
        theta, value, grad, hess = candidate, new_value, new_grad, new_hess
        if value < best[0]:
            best = (value, theta.copy(), float(np.linalg.norm(grad)), iteration)
        if step_norm <= opts.step_tol:
            return _finish(lam2, q, model, theta, value,
                           float(np.linalg.norm(grad)), iteration, opts)

    raise FitError(
        f"qmpe(lam2={lam2}) did not converge in {opts.max_iter} iterations "
        f"(best objective {best[0]:.6e}, gradient norm {best[2]:.3e})",
        theta=best[1], objective=best[0], gradient_norm=best[2], iterations=best[3],
    )


def _finish(lam2: float, q: np.ndarray, model: LogLinearModel, theta: np.ndarray,
            value: float, grad_norm: float, iterations: int,
            opts: FitOptions) -> FitResult:
    # A step-tolerance exit can leave the gradient above grad_tol while the
    # objective stalls below float noise; in that quadratic regime raw Newton
    # steps judged by gradient norm alone close the gap.
    if grad_norm > opts.grad_tol:
        for _ in range(5):
            value, grad, hess = _objective(lam2, q, model, theta)
            try:
                factor = scipy.linalg.cho_factor(hess)
                direction = -scipy.linalg.cho_solve(factor, grad)
            except scipy.linalg.LinAlgError:
                break
            candidate = theta + direction
            new_value, new_grad, _ = _objective(lam2, q, model, candidate)
            new_norm = float(np.linalg.norm(new_grad))
            if new_norm >= grad_norm:
                break
            theta, value, grad_norm = candidate, new_value, new_norm
            iterations += 1
            if grad_norm <= opts.grad_tol:
                break
    fitted = build_probabilities(model, theta)
    return FitResult(
        theta=theta,
        fitted=fitted,
        lam2=lam2,
        divergence_at_min=max(value, 0.0),
        iterations=iterations,
        gradient_norm=grad_norm,
    )


def independence_mle(p_hat, i_levels: int, j_levels: int) -> np.ndarray:
    """Closed-form independence fit: outer product of the margins of ``p_hat``.

    Test oracle for ``qmpe`` at lam2 = 0 on the two-way independence design;
    a zero margin yields zero fitted cells (boundary case outside the
    log-linear parameter space).
    """
    q = np.asarray(p_hat, dtype=float)
    if q.size != i_levels * j_levels:
        raise ValueError(f"p_hat has {q.size} cells, expected {i_levels * j_levels}")
    table = q.reshape(i_levels, j_levels)
    return np.outer(table.sum(axis=1), table.sum(axis=0)).ravel()
