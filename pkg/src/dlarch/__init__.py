"""Toolkit: cell-stacked CNN, Grad-CAM, embedding PCA / k-means, evaluation."""

__version__ = "0.1.0"
