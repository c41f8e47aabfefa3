"""
Two learners on one month
=========================

Fit regularised logistic regression and a random forest on one month of
windows, then score the month three months later.
"""

from homecare_ensemble import (
    InformationLevel, SyntheticConfig, aggregate_windows, auc, generate_cohort, grid_search,
    project_matrix, train_forest,
)
from homecare_ensemble.cohort import schema_for_records
from homecare_ensemble.learners.logistic import lambda_grid
from homecare_ensemble.evaluation.cv import LRParams

frame = generate_cohort(SyntheticConfig(n_citizens=1500, seed=2))
schema = schema_for_records(frame)
chunks = [c.labeled() for c in aggregate_windows(frame, schema=schema)]
train, test = chunks[12], chunks[15]

level = InformationLevel.IL4
Xtr = project_matrix(train.features, level, schema)
Xte = project_matrix(test.features, level, schema)

# lambda picked by 3-fold stratified CV on the training month
grid = [LRParams(float(l)) for l in lambda_grid()[::11]]
lr = grid_search(Xtr, train.labels, "LR", grid)
print("lambda", lr.best_params.lam, "test AUC %.3f" % auc(lr.model.predict_proba(Xte), test.labels))

# the largest standardised weights
names = schema.level_names(level)
top = sorted(zip(names, lr.model.weights), key=lambda p: -abs(p[1]))[:5]
for name, w in top:
    print("  %-22s %+.3f" % (name, w))

forest = train_forest(Xtr, train.labels, n_trees=100, feature_fraction=0.3, min_samples=16)
print("forest test AUC %.3f" % auc(forest.predict_proba(Xte), test.labels))
