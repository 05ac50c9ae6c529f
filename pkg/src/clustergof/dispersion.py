"""Design-effect and intracluster-correlation estimation.

The design effect ``vartheta = 1 + (n - 1) rho2`` inflates multinomial
covariances under within-cluster correlation. It is estimated here from the
within-group dispersion of cluster-level frequencies, either semiparametrically
(cell weighting by fitted model probabilities) or nonparametrically in the
style of Brier (cell weighting by group-level empirical probabilities).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .estimation import ClusterDataset, FitResult, group_collapse


@dataclass(frozen=True)
class DispersionEstimate:
    """A design-effect estimate with its intracluster-correlation companion.

    ``vartheta`` is the weighted combination of the per-group components
    recorded in ``per_group`` as ``(group, component, weight)`` triples;
    the weights sum to 1 over the groups that entered the combination.
    ``rho2 = (vartheta - 1) / (effective_size - 1)``.
    """

    vartheta: float
    rho2: float
    method: str
    per_group: tuple[tuple[int, float, float], ...]
    effective_size: float
    lam2: float | None = None

    @property
    def rho2_in_practical_range(self) -> bool:
        """False flags an estimate below the practical bound rho2 >= 0.

        Negative values are reported unclipped; the theoretical lower bound
        is -1/(max cluster size - 1), but practical use assumes rho2 >= 0.
        """
        return self.rho2 >= 0.0


def weights_and_effective_size(ds: ClusterDataset) -> tuple[np.ndarray, float, int]:
    """Group weights w_g = n_g N_g / sum, effective size n*, and sum_g N_g n_g."""
    sizes = np.asarray(ds.sizes, dtype=float)
    group_counts = np.asarray(ds.group_counts, dtype=float)
    mass = sizes * group_counts
    weights = mass / mass.sum()
    n_star = float(weights @ sizes)
    return weights, n_star, int(mass.sum())


def within_group_chisq(ds: ClusterDataset, group: int, p_fit) -> float:
    """Within-group dispersion chi-square of group ``group`` (0-based).

    n_g * sum_r (1 / p_fit_r) * sum_l (phat_r^(l,g) - phat_r^(g))^2, the
    cluster-level scatter around the group mean weighted by the fitted
    cells. Requires a strictly positive ``p_fit`` (an interior fit) and at
    least two clusters in the group.
    """
    p = np.asarray(p_fit, dtype=float)
    if np.any(p <= 0):
        raise ValueError("within_group_chisq requires strictly positive fitted cells")
    mat = ds.counts[group]
    if mat.shape[0] < 2:
        raise ValueError(
            f"group {group} has a single cluster; its dispersion component is undefined"
        )
    n_g = ds.sizes[group]
    cluster_freqs = mat / n_g
    center = group_collapse(ds, group)
    dev2 = ((cluster_freqs - center) ** 2).sum(axis=0)
    return float(n_g * np.sum(dev2 / p))


def _brier_group_chisq(ds: ClusterDataset, group: int) -> float:
    """Within-group chi-square weighted by the group's own cell estimate.

    Cells the group never observed have identically zero deviations, so
    their 0/0 term is 0 by the limit convention (this keeps datasets with
    empty cells computable).
    """
    mat = ds.counts[group]
    n_g = ds.sizes[group]
    cluster_freqs = mat / n_g
    center = group_collapse(ds, group)
    dev2 = ((cluster_freqs - center) ** 2).sum(axis=0)
    pos = center > 0
    return float(n_g * np.sum(dev2[pos] / center[pos]))


def _combine(ds: ClusterDataset, components_by_group: dict[int, float],
             method: str, lam2: float | None) -> DispersionEstimate:
    weights, _, _ = weights_and_effective_size(ds)
    group_counts = ds.group_counts
    m = ds.n_cells

    kept = [g for g in range(ds.n_groups) if group_counts[g] >= 2]
    if not kept:
        raise ValueError("design-effect estimation needs a group with >= 2 clusters")
    dropped = [g for g in range(ds.n_groups) if group_counts[g] < 2]
    if dropped:
        warnings.warn(
            f"groups {dropped} have a single cluster and were excluded from the "
            "design-effect combination; weights renormalized over the rest",
            stacklevel=3,
        )
    w_kept = weights[kept] / weights[kept].sum()
    n_star = float(w_kept @ np.asarray([ds.sizes[g] for g in kept], dtype=float))

    per_group = []
    vartheta = 0.0
    for w_g, g in zip(w_kept, kept):
        component = components_by_group[g] / ((group_counts[g] - 1) * (m - 1))
        vartheta += w_g * component
        per_group.append((g, float(component), float(w_g)))

    rho2 = (vartheta - 1.0) / (n_star - 1.0) if n_star > 1 else float("nan")
    return DispersionEstimate(
        vartheta=float(vartheta),
        rho2=float(rho2),
        method=method,
        per_group=tuple(per_group),
        effective_size=n_star,
        lam2=lam2,
    )


def semiparametric_design_effect(ds: ClusterDataset, fit: FitResult) -> DispersionEstimate:
    """Design effect from within-group dispersion weighted by the fitted cells.

    vartheta = sum_g w_g * X2_g / ((N_g - 1)(M - 1)) with X2_g the
    within-group chi-square of :func:`within_group_chisq` evaluated at the
    pooled fit; for a single group this is exactly the equal-cluster-size
    estimator X2 / ((N - 1)(M - 1)). Groups with one cluster are excluded
    with a warning (their divisor vanishes).
    """
    components = {
        g: within_group_chisq(ds, g, fit.fitted)
        for g in range(ds.n_groups)
        if ds.group_counts[g] >= 2
    }
    return _combine(ds, components, method="semiparametric", lam2=fit.lam2)


def brier_design_effect(ds: ClusterDataset) -> DispersionEstimate:
    """Fully nonparametric design effect, no model fit involved.

    Same combination as the semiparametric estimator but with each group's
    own cell estimate as the chi-square weighting; zero group-level cells
    contribute 0 by the 0/0 -> 0 convention.
    """
    components = {
        g: _brier_group_chisq(ds, g)
        for g in range(ds.n_groups)
        if ds.group_counts[g] >= 2
    }
    return _combine(ds, components, method="brier", lam2=None)
