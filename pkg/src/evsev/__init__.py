"""Severity classification toolkit for imbalanced crash records.

Ingests raw crash CSVs, maps severity codes onto three classes, fits a
leakage-safe preprocessing chain, rebalances the training split, ranks
features with tree ensembles, trains state-space sequence classifiers and
an in-context tabular predictor, and writes per-class evaluation reports.
"""

__version__ = "0.1.0"
