"""
Source and target groups for a country pair
===========================================

"""

import numpy as np

from medialens import build_groups, predominant_group, transition_report
from medialens.synthetic import planted_pair_population

# users from country A, described by how they read A's media and B's media
users, local, foreign, src, tgt = planted_pair_population(n_per_group=150, stickiness=0.8, seed=1)
groups = build_groups(users, local, foreign, k_sg=2, k_tg=2, seed=0)
report = transition_report(groups.sg, groups.tg, sg_centroids=groups.sg_clustering.centroids,
                           tg_centroids=groups.tg_clustering.centroids)

np.set_printoptions(precision=3, suppress=True)
print("P_i", report.prior)
print("P_ij\n", report.transitions)
print("risk ratio\n", report.risk_ratio)
print(report.risk_ratio_csv())

# every column of r averages to 1 under the source-group prior
print(report.prior @ report.risk_ratio)

# the simpler alternative: label each user by their dominant leaning
print([predominant_group(v, 0.5) for v in local[:5]])
print(predominant_group([0, 0.45, 0.1, 0.05, 0.4, 0, 0], 0.5))
