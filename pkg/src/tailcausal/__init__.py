"""Causal structure learning and simulation in the extremes of multivariate distributions.

Subpackages
-----------
graph      directed acyclic graphs, d-separation, CPDAGs, SHD, random DAGs
hr         Huesler-Reiss parameter algebra (variogram <-> precision)
models     parametric extremal families: densities, conditionals, noise laws
scm        extremal and pre-limit structural causal models, exact samplers
inference  margin transforms, empirical variograms, extremal CI tests
learn      extremal PC-algorithm and extremal pruning
cli        command-line entry points
"""

__version__ = "0.1.0"
