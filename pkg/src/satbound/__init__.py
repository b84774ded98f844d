"""First-moment upper bound on the random 3-SAT threshold over the peeled,
positively unbalanced Poisson configuration model."""

__version__ = "0.1.0"
