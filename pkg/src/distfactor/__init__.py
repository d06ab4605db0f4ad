"""Bayesian factor models for collections of discrete distributions via a
logistic-tree embedding, with SAR spatial priors on the loadings."""

__version__ = "0.1.0"
