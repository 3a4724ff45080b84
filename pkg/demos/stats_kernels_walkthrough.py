"""Exercise the hand-rolled statistics kernels on planted-truth data.

Everything here is plain numpy underneath: rank correlation, subset-sampled
representational similarity, logistic regression by damped Newton, PCA,
a subgradient soft-margin SVM, and covariance whitening. Each section plants
a known effect and reads it back.
"""

import numpy as np

from taxqa import stats

rng = np.random.default_rng(0)

# --- rank correlation ------------------------------------------------------
x = np.array([1.0, 2.0, 3.0, 4.0])
y = np.array([1.0, 3.0, 2.0, 4.0])
print(f"spearman with one swapped pair: {stats.spearman(x, y)}")
print(f"spearman under a monotone map:  {stats.spearman(x, np.exp(y))}")

# --- representational similarity over sampled subsets ----------------------
base = rng.normal(size=(80, 10))
reference = stats.pairwise_cosine(base)
print("\nagreement with the reference as noise grows:")
noise = rng.normal(size=(80, 10))
for sigma in (0.0, 0.3, 1.0, 3.0):
    noisy = stats.pairwise_cosine(base + sigma * noise)
    r = stats.rsa(noisy, reference, subsets=100, subset_size=40, seed=1)
    print(f"  sigma={sigma:<4} rsa mean={r.mean:+.3f} sd={r.sd:.3f}")

# --- logistic regression ---------------------------------------------------
n = 400
features = rng.normal(size=n)
p_true = 1.0 / (1.0 + np.exp(-(-0.5 + 1.2 * features)))
labels = (rng.random(n) < p_true).astype(float)
fit = stats.logistic_fit(features[:, None], labels)
print(f"\nlogistic fit on beta_true=(-0.5, 1.2), n={n}:")
print(f"  coefficients: {np.round(fit.coefficients, 3)}")
print(f"  odds ratios:  {np.round(fit.odds_ratios, 3)}")
print(f"  p for slope:  {fit.p_values[1]:.2e} (converged={fit.converged})")

# --- PCA and the margin error ----------------------------------------------
cloud = np.vstack([
    rng.normal(loc=(+2.0, 0.0, 0.0, 0.0), scale=0.5, size=(50, 4)),
    rng.normal(loc=(-2.0, 0.0, 0.0, 0.0), scale=0.5, size=(50, 4)),
])
classes = np.array([1.0] * 50 + [-1.0] * 50)
pcs = stats.pca(cloud, 2)
print(f"\nPCA explained variance: {np.round(pcs.explained_variance, 3)}")
projected = (cloud - pcs.mean) @ pcs.components.T
svm = stats.svm_fit(projected, classes, c=1.0)
print(f"svm on the projection: error={svm.svm_error:.2f} "
      f"objective={svm.objective:.2f}")

# squeeze the clusters together and the margin error climbs
tight = cloud * np.array([0.15, 1.0, 1.0, 1.0])
squeezed = (tight - tight.mean(axis=0)) @ stats.pca(tight, 2).components.T
print(f"same clusters squeezed:  error={stats.svm_fit(squeezed, classes).svm_error:.2f}")

# --- whitening --------------------------------------------------------------
u = rng.normal(size=(200, 8)) @ rng.normal(size=(8, 8))  # correlated columns
cov_before = np.cov(u, rowvar=False, ddof=1)
cov_after = np.cov(stats.whiten(u), rowvar=False, ddof=1)
print(f"\nwhitening: max off-diagonal |cov| "
      f"{np.abs(cov_before - np.diag(np.diag(cov_before))).max():.2f} -> "
      f"{np.abs(cov_after - np.eye(8)).max():.2e}")
