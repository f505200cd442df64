"""Simulation of timed quantum circuits under single-qubit collapse noise.

Subpackages:

* :mod:`collapsim.qmath` - dense density-matrix calculus
* :mod:`collapsim.medium` - timed circuits, fault model, circuit generators
* :mod:`collapsim.clustersim` - cluster-factorized Monte Carlo simulator
* :mod:`collapsim.oracle` - exact dense reference evolution
* :mod:`collapsim.phaselab` - matrix-free cluster-dynamics experiments
* :mod:`collapsim.cli` - command-line driver
"""

__version__ = "0.1.0"
