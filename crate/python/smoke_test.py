"""Quick check of the Python bindings.

Build the module first (see README), then run:  python3 python/smoke_test.py
"""
import math
import sys

import ordheck

data, spec = ordheck.simulate_dgp("I", rho=0.5, alpha1=0.5, seed=7)
assert data.n == 2000 and spec.n_stages == 4, (data.n, spec)

fiml = ordheck.fit_ordered_heckman(data, spec)
assert fiml.converged, fiml.flags
b = fiml.estimate("y3.black")
assert abs(b - 0.1) < 0.15, b
print("ordered heckman  black =", round(b, 4), "se =", round(fiml.as_dict()["y3.black"][1], 4))

probit = ordheck.fit_ordered_probit(data, spec)
assert probit.converged

sel = [o is not None for o in data.outcome]
y = [o for o in data.outcome if o is not None]
x = [row for row, s in zip(data.x, sel) if s]
ols = ordheck.fit_ols(y, x)
print("ols              black =", round(ols.estimates[1], 4))

coef = ordheck.fit_quantile(y, x, 0.5)
assert len(coef) == 3 and all(math.isfinite(c) for c in coef)

z = [row[2] > 0 for row in data.z]
iv = ordheck.huber_mellace(data.outcome, sel, z, bins=5, draws=199, seed=1)
assert 0.0 <= iv["p_mean"] <= 1.0
print("iv test          T =", round(iv["standardized_difference"], 3), "p =", iv["p_mean"])

shares = ordheck.leave_out_means([1, 2, 2, 1], [0, 0, 0, 0], [2])
assert [round(r[0], 6) for r in shares] == [0.666667, 0.333333, 0.333333, 0.666667], shares

csv, md = ordheck.run_study("II", reps=2, seed=3, cells=[(0.0, 0.0)], n_per_group=200)
assert csv.startswith("study,") and "|" in md

try:
    ordheck.ModelSpec(1, [1], [0])
except ValueError:
    pass
else:
    sys.exit("expected ValueError for a one-stage spec")

print("smoke test passed")
