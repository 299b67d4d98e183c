"""Riemannian bilevel optimization with descent aggregation.

Subpackages
-----------
manifold    geometry of orthonormal-column matrices (points, tangents, QR retraction)
bilevel     the solver: aggregation inner loop, BB/diminishing steps, hypergradient
mvhsc       multi-view hypergraph spectral clustering objectives
clustering  k-means and external cluster-agreement metrics
dataio      dataset loading, synthetic instances, trace/summary serialization
cli         `rblo run|bench|sweep|check`
"""

__version__ = "0.1.0"
