"""How the spatial layers mix farms.

A static hypergraph built from pairwise edges collapses to an ordinary graph
convolution. The dynamic layer instead builds a soft incidence for every
window, so its node-to-node operator is row-stochastic, asymmetric and changes
with the input. Run: ``python demos/01_hypergraph_operators.py``.
"""

import numpy as np

from stdhl.hypergraph import (
    DynamicHypergraphLayer,
    dynamic_incidence,
    incidence_from_hyperedges,
    normalized_laplacian,
    static_hyperconv,
    transfer_matrix,
)

np.set_printoptions(precision=3, suppress=True)

# A path of four farms written as pairwise hyperedges.
path = incidence_from_hyperedges(4, [(0, 1), (1, 2), (2, 3)])
print("incidence of the path (nodes x hyperedges):")
print(path.incidence)
print("\nnormalised Laplacian; for pairwise edges it is half the normalised graph Laplacian:")
print(normalized_laplacian(path))

# One step of static convolution smooths a spike towards its neighbours.
spike = np.array([[0.0], [1.0], [0.0], [0.0]])
print("\nspike at farm 1 after one static convolution:")
print(static_hyperconv(spike, path).data.ravel())

# Group structure: three farms share a hyperedge, one stands alone.
groups = incidence_from_hyperedges(4, [(0, 1, 2), (3,)])
print("\ngrouped hypergraph spreads the spike evenly inside its group:")
print(static_hyperconv(spike, groups).data.ravel())

# The dynamic layer learns hyperedge embeddings and assigns farms softly.
rng = np.random.default_rng(0)
layer = DynamicHypergraphLayer(n_nodes=4, n_channels=2, n_steps=6, n_hyperedges=2, embedding_dim=4, rng=rng)
window = rng.normal(size=(2, 4, 6))
h_e, h_n = dynamic_incidence(layer, window)
print("\nsoft incidence H_n (farm -> hyperedge weights, rows sum to one):")
print(h_n.data)
m = transfer_matrix(layer, window)
print(f"\ntransfer matrix with alpha = {float(layer.alpha.data):.2f}:")
print(m)
print("row sums:", m.sum(axis=1))
print("asymmetry max |M - M^T|:", float(np.abs(m - m.T).max()))

other = rng.normal(size=(2, 4, 6))
print("\na different window gives a different operator; max change:",
      float(np.abs(transfer_matrix(layer, other) - m).max()))
