"""Median-of-means local averaging regression: estimators, confidence radii and experiment harness."""
