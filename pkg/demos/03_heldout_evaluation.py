"""Choose K on held-out data and score dynamic link prediction.

The last part of the observation window is kept as a test set.  Each K is
fitted on the training part and scored by test log-likelihood per event;
the winner is then used to rank node pairs by the probability of an event in
short future intervals.
"""
from dchawkes import EvalConfig, FitOptions, Membership, SimConfig, dynamic_link_auc, fit_pipeline, select_K, simulate
from dchawkes import test_loglik_per_event
from dchawkes.experiments import sr_design

z = Membership.equal_blocks(30, 3)
full = simulate(sr_design(3), z, 3000.0, SimConfig(seed=5))
train, test = full.window(0.0, 2400.0), full.window(2400.0, 3000.0, closed_left=False)
print(f"train {len(train)} events, test {len(test)} events")

best, table = select_K(train, test, [1, 2, 3, 4, 5])
for k, v in table.items():
    print(f"K={k}: test log-likelihood per event {v:.4f}")
print(f"selected K = {best}")

fit = fit_pipeline(train, best, FitOptions(refine=True))
print(f"test loglik per event: {test_loglik_per_event(train, test, fit.params, fit.membership):.4f}")
auc = dynamic_link_auc(full, fit.params, fit.membership, EvalConfig(delta=2.0, n_intervals=100), test.start, test.horizon_T)
print(f"dynamic link AUC: {auc.mean:.3f} +- {auc.std:.3f} ({auc.skipped} intervals without contrast skipped)")
