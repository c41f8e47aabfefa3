import os

import numpy as np
import pandas as pd
import pytest
from hypothesis import HealthCheck, settings

from homecare_ensemble.cohort import (
    AMOUNT_COLUMNS, CSV_COLUMNS, PROVIDER_COLUMNS, validate_frame,
)

settings.register_profile(
    "default", max_examples=60, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def make_row(cid="C1", year=2013, month=4, hours=0.0, **overrides):
    """A valid raw row; hours go to the public provider and day slot."""
    row = {c: 0 for c in CSV_COLUMNS}
    row.update(citizen_id=cid, year=year, month=month, gender="F", age=80, zipcode="2100",
               civil_status="married", living_type="own_residence")
    row["hours_total"] = hours
    row["hours_day"] = hours
    row["hours_weekday"] = hours
    row["prov_public"] = hours
    row.update(overrides)
    return row


def make_frame(rows) -> pd.DataFrame:
    frame = pd.DataFrame(rows, columns=list(CSV_COLUMNS))
    return validate_frame(frame)


def series_frame(hours_by_citizen: dict, start=(2013, 4)) -> pd.DataFrame:
    """Contiguous monthly hour series per citizen starting at ``start``.
    ``None`` entries are skipped (unobserved months)."""
    rows = []
    y0, m0 = start
    for cid, series in hours_by_citizen.items():
        for k, h in enumerate(series):
            if h is None:
                continue
            t = y0 * 12 + m0 - 1 + k
            rows.append(make_row(cid, t // 12, t % 12 + 1, float(h)))
    return make_frame(rows)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_series_frame(n_citizens, n_months, seed, jump_prob=0.15):
    """Citizens with random walks plus occasional >= 6 h jumps."""
    rng = np.random.default_rng(seed)
    series = {}
    for c in range(n_citizens):
        h, out = float(rng.integers(2, 20)), []
        for _ in range(n_months):
            h = h + 8.0 if rng.random() < jump_prob else max(0.0, h + rng.integers(-2, 3))
            out.append(h)
        series[f"C{c:03d}"] = out
    return series_frame(series)


@pytest.fixture(scope="session")
def small_cohort():
    from homecare_ensemble.cohort import aggregate_windows, chunk_map, schema_for_records
    from homecare_ensemble.synthgen import SyntheticConfig, generate_cohort
    cfg = SyntheticConfig(n_citizens=400, start_month=2013 * 12 + 3, end_month=2014 * 12 + 8,
                          seed=7)
    frame = generate_cohort(cfg)
    schema = schema_for_records(frame)
    return frame, schema, chunk_map(aggregate_windows(frame, schema=schema))


# acceptance lines collected by tests/test_acceptance.py, echoed after the run
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
