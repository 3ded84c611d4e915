"""Small builders shared by the tests."""

import numpy as np

from checkup_sim import fixtures
from checkup_sim.core import ClinicalParameterTable, ClinicalStatus, Gender, Individual


def person(**kw) -> Individual:
    base = dict(alpha=ClinicalStatus.H, tau=0, mu=0.5, rho=1.0, e=50, g=Gender.MALE, s=3, gamma=10_000)
    base.update(kw)
    return Individual(**base)


def table(validate=True, **kw) -> ClinicalParameterTable:
    row = dict(fixtures.DESK_CLINICAL, psi_i=0.0)
    row.update(kw)
    return ClinicalParameterTable.from_rows([row], validate=validate)


class FixedDraws:
    """Stand-in rng whose random() always returns the same value."""

    def __init__(self, value=0.5):
        self.value = value

    def random(self):
        return self.value


def pop_equal(a, b, skip=("onset_at",)):
    return all(np.array_equal(getattr(a, c), getattr(b, c)) for c in a.columns if c not in skip)
