"""otsforge: DC optimal transmission switching toolkit.

Exact baselines (economic dispatch, DC-OPF, DC-OTS via branch-and-bound or
exhaustive search), a KKT-differentiable DC-OPF layer, and an unsupervised
trainer for a line-switching network whose loss is the dispatched cost.
"""

__version__ = "0.1.0"
