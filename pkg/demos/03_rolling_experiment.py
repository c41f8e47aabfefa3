"""
A rolling experiment end to end
===============================

Write a cohort to CSV, run baselines, a single model and a stacked ensemble
month by month, and read the outputs back.
"""

import tempfile
from pathlib import Path

from homecare_ensemble.cohort import parse_year_month
from homecare_ensemble.learners.logistic import lambda_grid
from homecare_ensemble.runner import ExperimentConfig, inspect_weights, run_experiment
from homecare_ensemble.synthgen import SyntheticConfig, write_cohort

work = Path(tempfile.mkdtemp())
write_cohort(SyntheticConfig(n_citizens=800, seed=3, end_month=parse_year_month("2015-03")), work / "cohort.csv")

config = ExperimentConfig(
    input_csv=str(work / "cohort.csv"),
    output_dir=str(work / "run"),
    info_levels=["IL2b", "IL4"],
    methods=["baseline_3m", "baseline_12m", "LR_all", "LR+LR/from_2"],
    lr_lambdas=[float(l) for l in lambda_grid()[::11]],
    tune_every=6,
)
result = run_experiment(config)
print("%.1fs" % result.wall_clock)
for (method, level), value in result.averages.items():
    print("%-14s %-5s %.3f" % (method, level, value))

# what the run wrote; stacked models get one directory per cell
for path in sorted((work / "run").iterdir()):
    print(path.name)
print(sorted(p.name for p in (work / "run" / "models").iterdir()))

for name, w in inspect_weights(work / "run" / "models" / "LR_all__IL4.json")[:5]:
    print("  %-22s %+.3f" % (name, w))
