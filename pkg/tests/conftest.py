import os

import pytest
from hypothesis import HealthCheck, settings

from datamarket.pricing import survey_from_pairs

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# Three tiers at eps 1, 2, 3 and six surveyed buyers: the worked pricing example.
WORKED_EPS = (1, 2, 3)
WORKED_PAIRS = [(1, 1), (1, 4), (2, 3), (2, 7), (3, 5), (3, 8)]


@pytest.fixture
def worked_survey():
    return survey_from_pairs(WORKED_PAIRS)
