"""Learned canonical embeddings for non-rigid shape matching.

Shapes are point clouds; an encoder maps every point to a k-dimensional
embedding, trained so that each shape's left/right self-symmetry becomes a
linear map in embedding space and so that corresponding points of different
shapes land close together. Matching is then a nearest-neighbour search.
"""

__version__ = "0.1.0"
