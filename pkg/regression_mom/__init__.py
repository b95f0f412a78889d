"""Package for regression_mom project."""
