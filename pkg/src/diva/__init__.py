"""Variational path-finding and path-reasoning over knowledge graphs.

A path-finder prior walks the graph toward a target entity, a
relation-aware posterior guides training-time exploration, and a
convolutional path reasoner classifies found paths into relations.
The three networks are trained jointly with score-function gradients
and evaluated with beam search on ranking tasks.
"""

__version__ = "0.1.0"
