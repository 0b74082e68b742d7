"""Tune a random forest on synthetic records, then attribute its predictions.

Run with ``python3 demos/02_classify_and_explain.py``.  Takes about a minute.
"""

import numpy as np

from lpbfspatter import dataset as dsm
from lpbfspatter import explain as ex
from lpbfspatter import learners as L
from lpbfspatter import synthgen

data = dsm.drop_spatial(synthgen.gen_dataset(seed=0))  # 488 records, 7 features
train, test = dsm.split(data, 0.7, seed=0)

spec, table = L.grid_search("forest", L.DEFAULT_GRIDS["forest"], train, seed=0, n_jobs=4)
print(f"grid points evaluated: {len(table)}; best: {spec.hyperparameters}")

model = L.fit(spec, train)
for name, part in (("train", train), ("test", test)):
    r = L.evaluate(model, part)
    print(f"{name:>5}: accuracy {r.accuracy:.3f}, F1 {r.f1:.3f}, AUC {r.roc_auc:.3f}")

imp = L.feature_importance(model)
print("impurity importance:",
      ", ".join(f"{n} {v:.3f}" for n, v in sorted(imp.items(),
                                                  key=lambda t: -t[1])))

summary = ex.shap_summary(model, test.subset(np.arange(40)), train)
print("mean |SHAP| ranking:", ", ".join(f"{n} {v:.3f}" for n, v in summary["ranking"]))

curve = ex.pdp(model, train, "p", grid=10)
print("PDP for p:", " ".join(f"{g:.3g}->{m:.2f}" for g, m in
                             zip(curve.grid, curve.mean_probability)))
