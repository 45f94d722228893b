"""Value bonuses from ensembles of random action-value functions, with baselines."""

__version__ = "0.1.0"
