"""Media consumption analysis for tweet streams."""

from .ingest import TweetRecord, Skipped, LimitNotice, ConnectionStart, parse_tweet, parse_lines, iter_lines, estimate_sampling_rate
from .geoparse import Gazetteer, Resolved, Ambiguous, Unknown, build_gazetteer, load_gazetteer, parse_location, corpus_stats
from .registry import MediaOutlet, Registry, load_registry, factuality_category, classify_credibility
from .interactions import (
    InteractionMatrix,
    extract_interactions,
    build_matrix,
    percentile_cutoff,
    threshold_cutoff,
    consumption_vector,
    consumption_vectors,
    info_flow,
)
from .clustering import kmeans, distortion, silhouette_mean, davies_bouldin, metric_curve, stability, profile
from .crosscountry import build_groups, transition_report, predominant_group, ablate_outlet
from .regression import r_squared, fit_ridge, fit_gbdt, fit_random_forest, kfold_cv, MODELS
from .pipeline import scan_file, scan_stream

__version__ = "0.1.0"
