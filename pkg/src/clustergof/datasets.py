"""Bundled example data and regression reference values.

The housing dataset is the classic Brier (1980) housing-satisfaction survey
of households around Montevideo (Minnesota): 20 neighborhoods (clusters) in
two groups, 18 with 5 surveyed households and 2 with 3, each household
cross-classified by satisfaction with the neighborhood and with the home
(3 x 3 levels, cells in lexicographic order). Under independence of the two
satisfaction ratings it is the canonical demonstration case for clustered
overdispersion corrections.

``HOUSING_REFERENCE`` freezes, to the 4 decimals at which they are usually
quoted, the full grid of scaled divergence statistics for this dataset over
``REFERENCE_LAMBDA_GRID`` x ``REFERENCE_LAMBDA_GRID``; the ``reproduce``
CLI command and the regression tests diff fresh computations against it.
A ``None`` p-value entry means the reference only bounds it above by
``P_VALUE_BOUND``.
"""

from __future__ import annotations

import numpy as np

from .estimation import ClusterDataset
from .model import LogLinearModel, independence_design

# One row per cluster: (group label, cluster label, 9 cell counts).
HOUSING_ROWS: tuple[tuple[int, int, tuple[int, ...]], ...] = (
    (1, 1, (1, 0, 0, 2, 2, 0, 0, 0, 0)),
    (1, 2, (1, 0, 0, 2, 2, 0, 0, 0, 0)),
    (1, 3, (0, 2, 0, 0, 2, 0, 0, 1, 0)),
    (1, 4, (0, 1, 0, 2, 1, 0, 1, 0, 0)),
    (1, 5, (0, 0, 0, 0, 4, 0, 0, 1, 0)),
    (1, 6, (1, 0, 0, 3, 1, 0, 0, 0, 0)),
    (1, 7, (3, 0, 0, 0, 1, 0, 0, 1, 0)),
    (1, 8, (1, 0, 0, 1, 3, 0, 0, 0, 0)),
    (1, 9, (3, 0, 0, 0, 0, 0, 1, 0, 1)),
    (1, 10, (0, 1, 0, 0, 3, 1, 0, 0, 0)),
    (1, 11, (1, 1, 0, 0, 2, 0, 1, 0, 0)),
    (1, 12, (0, 1, 0, 4, 0, 0, 0, 0, 0)),
    (1, 13, (0, 0, 0, 4, 1, 0, 0, 0, 0)),
    (1, 14, (0, 0, 0, 1, 2, 0, 0, 0, 2)),
    (1, 15, (2, 0, 0, 2, 1, 0, 0, 0, 0)),
    (1, 16, (0, 0, 0, 1, 1, 1, 0, 2, 0)),
    (1, 17, (2, 0, 0, 2, 1, 0, 0, 0, 0)),
    (1, 18, (2, 0, 0, 2, 0, 0, 1, 0, 0)),
    (2, 1, (1, 0, 0, 1, 1, 0, 0, 0, 0)),
    (2, 2, (0, 0, 0, 1, 0, 1, 0, 0, 1)),
)


def housing_dataset() -> ClusterDataset:
    """The bundled housing-satisfaction survey as a :class:`ClusterDataset`."""
    group1 = np.array([counts for g, _, counts in HOUSING_ROWS if g == 1])
    group2 = np.array([counts for g, _, counts in HOUSING_ROWS if g == 2])
    return ClusterDataset(counts=(group1, group2), sizes=(5, 3))


def housing_model() -> LogLinearModel:
    """Independence model for the two 3-level satisfaction ratings."""
    return independence_design(3, 3)


REFERENCE_LAMBDA_GRID: tuple[float, ...] = (-0.5, 0.0, 2.0 / 3.0, 1.0, 2.0)

# p-values quoted only as "< 1e-4" are stored as None.
P_VALUE_BOUND = 1e-4

HOUSING_REFERENCE: dict[str, dict] = {
    "semiparametric": {
        "statistics": (
            (7.5621, 11.2413, 15.6963, 17.6234, 22.1483),
            (7.7504, 9.7014, 12.2489, 13.4095, 16.2120),
            (10.4138, 10.3330, 11.3428, 11.9922, 13.7789),
            (13.0422, 11.2813, 11.4143, 11.8302, 13.2202),
            (33.6045, 17.5637, 13.0587, 12.5518, 12.6781),
        ),
        "p_values": (
            (0.1090, 0.0240, 0.0035, 0.0015, 0.0002),
            (0.1012, 0.0458, 0.0156, 0.0094, 0.0027),
            (0.0340, 0.0352, 0.0230, 0.0174, 0.0080),
            (0.0111, 0.0236, 0.0223, 0.0187, 0.0102),
            (None, 0.0015, 0.0110, 0.0137, 0.0130),
        ),
        "vartheta": (2.1815, 1.5869, 1.3314, 1.2707, 1.1813),
    },
    "brier": {
        "statistics": (
            (15.4857, 16.7462, 19.6173, 21.0219, 24.5600),
            (15.8714, 14.4521, 15.3087, 15.9953, 17.9773),
            (21.3256, 15.3931, 14.1762, 14.3048, 15.2792),
            (26.7079, 16.8057, 14.2656, 14.1115, 14.6597),
            (68.8157, 26.1646, 16.3207, 14.9723, 14.0586),
        ),
        "p_values": (
            (0.0038, 0.0022, 0.0006, 0.0003, 0.0001),
            (0.0032, 0.0060, 0.0041, 0.0030, 0.0012),
            (0.0003, 0.0040, 0.0068, 0.0064, 0.0042),
            (None, 0.0021, 0.0065, 0.0069, 0.0055),
            (None, None, 0.0026, 0.0048, 0.0071),
        ),
        "vartheta": (1.0653, 1.0653, 1.0653, 1.0653, 1.0653),
    },
}
