"""Shallow depth-of-field synthesis from simulated handheld bursts.

Subpackages: lfcore (light fields and refocusing), scenegen (synthetic
scenes), burst (burst simulation and preprocessing), ndgrad (autodiff
engine), models (blur prediction and multi-scale merging), train (losses
and training loops), evaluate (metrics and baselines), cli (command line).
"""

__version__ = "0.1.0"
