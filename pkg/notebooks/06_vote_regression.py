"""
Predicting vote share from media consumption
============================================

"""

from medialens import MODELS, fit_gbdt, kfold_cv
from medialens.synthetic import nonlinear_votes

# 100 "states"; the vote depends on the sign interaction of two features
X, y = nonlinear_votes(n=100, seed=0)

for name, fit in MODELS.items():
    res = kfold_cv(X, y, fit, k=5, seed=0)
    print(f"{name:7s} mean R2 {res.mean_r2:+.3f}  folds {[round(r, 3) for r in res.fold_r2]}")

# boosting never makes the training fit worse
model = fit_gbdt(X, y, stages=30, depth=3, learning_rate=0.1)
print([round(s, 3) for s in model.train_sse[::5]])
