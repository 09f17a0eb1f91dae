"""Pose-guided multi-stage contrastive regression for action quality assessment."""

__version__ = "0.1.0"
