"""Contrastive representation learning on synthetic multi-view object videos."""

__version__ = "0.1.0"
