"""Numerical toolkit for reinforced random walks on the two-rail ladder.

Submodules:

: ladder        graph layout, spanning-tree codes, cycle quadratic form
: walk          reinforced and fixed-weight walk simulation
: environment   weight density, spin coordinates, local energies
: mcmc          Metropolis sampler for the spin-chain measure
: certificates  executable checks of the energy lower bounds
: transfer      discretized transfer-operator spectral analysis
: network       effective resistance and escape probabilities
: cli           batch experiment driver
"""

from ladderlab.ladder import build, EdgeWeights, SpanningTreeCode

__version__ = "0.1.0"

__all__ = ["build", "EdgeWeights", "SpanningTreeCode", "__version__"]
