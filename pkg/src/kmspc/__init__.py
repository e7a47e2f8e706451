"""Kernel PCA process monitoring with learned kernel parameters.

Modules: ``dataset`` (loading, scaling, synthetic faults), ``kernels``,
``decomposition`` (PCA / kernel PCA), ``mspc`` (T2, SPEx, limits, CMR),
``optim`` (Kernel-Flows-style learning and baselines), ``svg`` and ``cli``.
"""

__version__ = "0.1.0"
