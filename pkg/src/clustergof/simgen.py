"""Overdispersed multinomial cluster generators and Monte Carlo size studies.

Three generating laws share the moment contract E[Y] = n p and
Var[Y] = (1 + (n-1) rho2) * n * (diag(p) - p p^T):

* ``DM`` — Dirichlet-multinomial: a cell-probability vector is drawn from a
  Dirichlet with parameter p (1 - rho2) / rho2, then a multinomial of size n.
* ``RC`` — random-clumped: one category U ~ p, a clump size
  B ~ Binomial(n, sqrt(rho2)), and B e_U plus a multinomial(n - B, p).
  The clumping probability is the *square root* of rho2: that is what makes
  the pairwise indicator correlation equal rho2. This is the classic trap
  when matching moments.
* ``NI`` — n-inflated: with probability rho2 the whole cluster lands in one
  category U ~ p, otherwise a plain multinomial(n, p).

Reproducibility: all randomness flows through ``numpy.random.Generator``
(PCG64). ``size_study`` derives one child generator per replication from
``SeedSequence((master_seed, distribution_index, rho2_index, replication))``,
so results are bit-identical for a fixed master seed regardless of
evaluation order.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace

import numpy as np

from .dispersion import brier_design_effect, semiparametric_design_effect
from .estimation import ClusterDataset, FitError, qmpe
from .gof import _build_result
from .model import LogLinearModel, as_probability_vector, build_probabilities

KINDS = ("DM", "RC", "NI", "multinomial")

# Below this, the Dirichlet concentration (1 - rho2) / rho2 diverges and the
# DM law is numerically plain multinomial.
DM_MULTINOMIAL_CUTOFF = 1e-12

STUDY_CSV_FIELDS = (
    "distribution", "rho2", "lambda1", "lambda2", "method",
    "estimated_size", "mc_se", "failures",
)


@dataclass(frozen=True)
class GeneratorSpec:
    """One clustered-count generating law: kind, cell probabilities, rho2, n."""

    kind: str
    p: np.ndarray
    rho2: float
    n: int
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}; expected one of {KINDS}")
        p = as_probability_vector(self.p)
        p.setflags(write=False)
        object.__setattr__(self, "p", p)
        if not 0.0 <= self.rho2 <= 1.0:
            raise ValueError(f"rho2 = {self.rho2} outside [0, 1]")
        if self.kind == "DM":
            if self.rho2 >= 1.0:
                raise ValueError("DM requires rho2 < 1 (Dirichlet parameter diverges)")
            if self.rho2 > DM_MULTINOMIAL_CUTOFF and np.any(p == 0):
                raise ValueError("DM requires strictly positive cell probabilities")
        if self.n < 1:
            raise ValueError(f"cluster size must be >= 1, got {self.n}")

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)

    @property
    def design_effect(self) -> float:
        return 1.0 + (self.n - 1) * self.rho2


def _draw_categories(rng: np.random.Generator, p: np.ndarray, size: int) -> np.ndarray:
    # inverse-CDF draw; cheaper and stream-stable vs rng.choice for small M
    edges = np.cumsum(p)
    edges[-1] = 1.0
    return np.searchsorted(edges, rng.random(size), side="right")


def gen_clusters(spec: GeneratorSpec, size: int,
                 rng: np.random.Generator | None = None) -> np.ndarray:
    """Draw ``size`` independent cluster count vectors, shape ``(size, M)``.

    Each row sums to ``spec.n``; mean and covariance follow the moment
    contract in the module docstring. With rho2 = 0 every kind reduces to
    the plain multinomial law.
    """
    if rng is None:
        rng = spec.rng()
    p, n, rho2 = spec.p, spec.n, spec.rho2
    m = p.size

    kind = spec.kind
    if kind == "DM" and rho2 <= DM_MULTINOMIAL_CUTOFF:
        kind = "multinomial"

    if kind == "multinomial":
        return rng.multinomial(n, p, size=size).astype(np.int64)

    if kind == "DM":
        alpha = p * (1.0 - rho2) / rho2
        gammas = rng.standard_gamma(alpha, size=(size, m))
        totals = gammas.sum(axis=1, keepdims=True)
        # underflowed rows (all-zero gammas, tiny alpha) take the c -> 0
        # Dirichlet limit: all mass on one category drawn from p
        dead = totals[:, 0] == 0
        if np.any(dead):
            cats = _draw_categories(rng, p, int(dead.sum()))
            gammas[dead] = 0.0
            gammas[np.nonzero(dead)[0], cats] = 1.0
            totals = gammas.sum(axis=1, keepdims=True)
        q = gammas / totals
        return rng.multinomial(n, q).astype(np.int64)

    if kind == "RC":
        clump_cat = _draw_categories(rng, p, size)
        clump_size = rng.binomial(n, math.sqrt(rho2), size=size)
        counts = rng.multinomial(n - clump_size, p).astype(np.int64)
        counts[np.arange(size), clump_cat] += clump_size
        return counts

    # NI
    inflate_cat = _draw_categories(rng, p, size)
    counts = rng.multinomial(n, p, size=size).astype(np.int64)
    inflated = rng.random(size) < rho2
    counts[inflated] = 0
    counts[np.nonzero(inflated)[0], inflate_cat[inflated]] = n
    return counts


def gen_cluster(spec: GeneratorSpec, rng: np.random.Generator | None = None) -> np.ndarray:
    """Draw one cluster count vector."""
    return gen_clusters(spec, 1, rng)[0]


def gen_dataset(groups, template: GeneratorSpec,
                rng: np.random.Generator | None = None) -> ClusterDataset:
    """Generate a clustered dataset with the given ``(n_g, N_g)`` layout.

    ``template`` fixes the kind, cell probabilities, and rho2; its cluster
    size is overridden per group. Deterministic given the generator state.
    """
    groups = [(int(n_g), int(count)) for n_g, count in groups]
    if not groups:
        raise ValueError("at least one (cluster size, cluster count) group is required")
    if rng is None:
        rng = template.rng()
    mats, sizes = [], []
    for n_g, count in groups:
        spec = replace(template, n=n_g)
        mats.append(gen_clusters(spec, count, rng))
        sizes.append(n_g)
    return ClusterDataset(counts=tuple(mats), sizes=tuple(sizes))


@dataclass(frozen=True)
class StudyConfig:
    """Monte Carlo significance-level study configuration."""

    theta: np.ndarray
    model: LogLinearModel
    groups: tuple[tuple[int, int], ...]
    rho2_grid: tuple[float, ...]
    distributions: tuple[str, ...]
    lambda_pairs: tuple[tuple[float, float], ...]
    replications: int
    nominal_alpha: float = 0.05
    master_seed: int = 0
    methods: tuple[str, ...] = ("semiparametric",)

    def __post_init__(self) -> None:
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not 0.0 < self.nominal_alpha < 1.0:
            raise ValueError("nominal_alpha must lie in (0, 1)")
        for kind in self.distributions:
            if kind not in KINDS:
                raise ValueError(f"unknown distribution {kind!r}")


@dataclass(frozen=True)
class SizeRow:
    """Estimated rejection rate of one test in one simulation cell."""

    distribution: str
    rho2: float
    lambda1: float
    lambda2: float
    method: str
    estimated_size: float
    mc_se: float
    failures: int
    replications_used: int


@dataclass(frozen=True)
class StudyResult:
    config: StudyConfig
    rows: tuple[SizeRow, ...]

    def to_csv(self, header_comment: bool = True) -> str:
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# master_seed={self.config.master_seed} "
                      f"replications={self.config.replications} "
                      f"alpha={self.config.nominal_alpha}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(STUDY_CSV_FIELDS)
        for row in self.rows:
            writer.writerow([
                row.distribution, repr(row.rho2), repr(row.lambda1), repr(row.lambda2),
                row.method, repr(row.estimated_size), repr(row.mc_se), row.failures,
            ])
        return buf.getvalue()


def size_study(cfg: StudyConfig) -> StudyResult:
    """Estimate true test sizes at the nominal level by simulation.

    For every (distribution, rho2) cell, ``cfg.replications`` datasets are
    generated under the true model and each configured (lam1, lam2, method)
    test is run at level ``nominal_alpha``; the estimated size is the
    rejection fraction with Monte Carlo standard error
    sqrt(size (1 - size) / R_used). Replications whose fit fails for a
    given lam2 are counted in ``failures`` and excluded from that test's
    fraction. Bit-reproducible for a fixed master seed.
    """
    p_true = build_probabilities(cfg.model, np.asarray(cfg.theta, dtype=float))
    unique_lam2 = tuple(dict.fromkeys(l2 for _, l2 in cfg.lambda_pairs))
    test_keys = [(l1, l2, method) for (l1, l2) in cfg.lambda_pairs for method in cfg.methods]

    rows: list[SizeRow] = []
    for d_idx, kind in enumerate(cfg.distributions):
        for r_idx, rho2 in enumerate(cfg.rho2_grid):
            template = GeneratorSpec(kind=kind, p=p_true, rho2=float(rho2), n=1)
            rejections = {key: 0 for key in test_keys}
            usable = {key: 0 for key in test_keys}
            failures = {key: 0 for key in test_keys}

            for rep in range(cfg.replications):
                seed = np.random.SeedSequence((cfg.master_seed, d_idx, r_idx, rep))
                rng = np.random.default_rng(seed)
                ds = gen_dataset(cfg.groups, template, rng)
                p_hat = ds.total_counts() / ds.total_individuals
                scale = ds.total_individuals

                fits = {}
                for lam2 in unique_lam2:
                    try:
                        fits[lam2] = qmpe(p_hat, cfg.model, lam2)
                    except (FitError, ValueError):
                        fits[lam2] = None
                varthetas: dict[tuple[float, str], float] = {}
                for (l1, l2, method) in test_keys:
                    fit = fits[l2]
                    if fit is None:
                        failures[(l1, l2, method)] += 1
                        continue
                    vkey = (l2, method)
                    if vkey not in varthetas:
                        try:
                            if method == "semiparametric":
                                varthetas[vkey] = semiparametric_design_effect(ds, fit).vartheta
                            else:
                                varthetas[vkey] = brier_design_effect(ds).vartheta
                        except ValueError:
                            varthetas[vkey] = math.nan
                    vartheta = varthetas[vkey]
                    if math.isnan(vartheta):
                        failures[(l1, l2, method)] += 1
                        continue
                    result = _build_result(l1, l2, method, p_hat, fit.fitted,
                                           vartheta, scale, cfg.model.df)
                    usable[(l1, l2, method)] += 1
                    if result.p_value < cfg.nominal_alpha:
                        rejections[(l1, l2, method)] += 1

            for (l1, l2, method) in test_keys:
                used = usable[(l1, l2, method)]
                size = rejections[(l1, l2, method)] / used if used else math.nan
                se = math.sqrt(size * (1.0 - size) / used) if used else math.nan
                rows.append(SizeRow(
                    distribution=kind,
                    rho2=float(rho2),
                    lambda1=l1,
                    lambda2=l2,
                    method=method,
                    estimated_size=size,
                    mc_se=se,
                    failures=failures[(l1, l2, method)],
                    replications_used=used,
                ))
    return StudyResult(config=cfg, rows=tuple(rows))
