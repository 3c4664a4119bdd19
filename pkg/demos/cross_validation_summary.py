"""
Summarizing cross-validation
============================

Aggregate per-fold results the way a ten-fold table is reported: unweighted
means of WA and UA, plus the mean of the five folds with the best UA.
The numbers below are the published per-fold scores.
"""
import numpy as np

from speechemo.metrics import FoldResult, Metrics, aggregate

published = [(64.1, 60.5), (68.8, 63.8), (70.3, 64.4), (62.0, 62.9), (64.8, 59.8),
             (66.4, 63.6), (68.5, 65.1), (64.3, 60.1), (64.8, 62.2), (51.0, 54.1)]
results = [FoldResult(k + 1, Metrics(wa / 100, ua / 100, np.zeros((4, 4), dtype=np.int64)))
           for k, (wa, ua) in enumerate(published)]

agg = aggregate(results)
print("fold session gender    WA    UA")
for fold, session, gender, wa, ua in agg.table:
    print(f"{fold:4d} {session:7d} {gender:>6} {100 * wa:5.1f} {100 * ua:5.1f}")
summary = agg.rounded()
print(f"mean            {summary['mean_wa']:5.1f} {summary['mean_ua']:5.1f}")
print(f"best 5 by UA    {summary['best5_wa']:5.1f} {summary['best5_ua']:5.1f}")
