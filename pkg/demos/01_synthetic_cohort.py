"""
A synthetic home-care cohort
============================

Generate a small cohort, slide 3-month windows over each citizen's monthly
history and look at how the labels come out.
"""

import numpy as np

from homecare_ensemble import SyntheticConfig, aggregate_windows, generate_cohort
from homecare_ensemble.cohort import (
    format_year_month, increase_events, monthly_timeline, positive_rate, schema_for_records,
)

# one row per citizen per observed month
config = SyntheticConfig(n_citizens=300, seed=1)
frame = generate_cohort(config)
print(frame.head())
print(len(frame), "records,", frame["citizen_id"].nunique(), "citizens")

# a single citizen's timeline and the months where hours jumped by >= 6
cid = frame["citizen_id"].iloc[0]
timeline = monthly_timeline(frame, cid)
print([round(r.hours_total, 1) for r in timeline[:12]])
print("large increases in", [format_year_month(m) for m in increase_events(timeline)])

# window instances grouped by the month the window ends
schema = schema_for_records(frame)
chunks = aggregate_windows(frame, schema=schema)
print(len(chunks), "monthly chunks,", schema.dim, "master features")
print("positive rate %.3f" % positive_rate(chunks))

sizes = np.array([c.n_defined for c in chunks])
print("labelled instances per chunk: min %d, max %d" % (sizes.min(), sizes.max()))
