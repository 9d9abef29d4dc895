"""Regenerates fixtures/oracle_*.json with scipy/numpy as the reference."""
import json
import pathlib

import numpy as np
from scipy import stats

out = pathlib.Path(__file__).resolve().parents[2] / "fixtures"
rng = np.random.default_rng(20240611)

ttest = []
for i in range(100):
    n = int(rng.integers(3, 13))
    a = np.round(rng.normal(2.0, 0.5, n), 3)
    b = np.round(a - rng.normal(0.2, 0.4, n), 3)
    t, p = stats.ttest_rel(a, b)
    ttest.append({"a": a.tolist(), "b": b.tolist(), "t": float(t), "p": float(p), "df": n - 1})


def icc21(x):
    n, k = x.shape
    g = x.mean()
    ssr = k * ((x.mean(axis=1) - g) ** 2).sum()
    ssc = n * ((x.mean(axis=0) - g) ** 2).sum()
    sst = ((x - g) ** 2).sum()
    sse = sst - ssr - ssc
    msr, msc, mse = ssr / (n - 1), ssc / (k - 1), sse / ((n - 1) * (k - 1))
    return (msr - mse) / (msr + (k - 1) * mse + k * (msc - mse) / n)


icc = []
while len(icc) < 100:
    n = int(rng.integers(3, 9))
    k = int(rng.integers(2, 5))
    x = rng.integers(1, 4, size=(n, k)).astype(float)
    if ((x - x.mean()) ** 2).sum() == 0:
        continue
    icc.append({"matrix": x.tolist(), "icc": float(icc21(x))})

(out / "oracle_ttest.json").write_text(json.dumps(ttest, indent=1) + "\n")
(out / "oracle_icc.json").write_text(json.dumps(icc, indent=1) + "\n")
print(len(ttest), len(icc))
