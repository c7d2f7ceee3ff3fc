"""
Clustering consumption vectors
==============================

"""

import numpy as np

from medialens import kmeans, metric_curve, silhouette_mean, stability
from medialens.synthetic import elbow_fixture, planted_blobs

x, truth = planted_blobs(n=300, d=7, k=3, seed=0)
cl = kmeans(x, 3, seed=0)
print("sizes", cl.sizes, "iterations", cl.iterations_run)
print("distortion per Lloyd step", np.round(cl.history, 3))

# elbow curves; note the silhouette here uses the (x - y) / max(x, y) orientation
for row in metric_curve(x, range(2, 7)):
    print(row)

# the standard orientation is a flag away
print("printed", silhouette_mean(x, cl), "standard", silhouette_mean(x, cl, orientation="standard"))

# many small groups: distortion keeps falling and DB drifts down, with some seed noise
e, _ = elbow_fixture()
for row in metric_curve(e, [2, 4, 6, 8, 10]):
    print(row["k"], round(row["distortion"], 2), round(row["davies_bouldin"], 3))

nationality = np.array(["India", "Nigeria", "South Africa"])[truth]
report = stability(x, 3, seeds=[0, 1, 2, 3, 4], nationality=list(nationality))
for g in report.groups:
    print(g)
