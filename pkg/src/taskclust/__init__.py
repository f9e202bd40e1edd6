"""Robust task clustering by matrix completion.

Pipeline: estimate cross-task transfer scores, filter them into a
partially-observed binary similarity matrix, recover the full low-rank
similarity matrix by nuclear-norm + l1 minimization, partition tasks by
spectral clustering, and reuse the clusters for multi-task and few-shot
learning.
"""

__version__ = "0.1.0"
