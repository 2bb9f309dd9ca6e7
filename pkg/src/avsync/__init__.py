"""Desk-scale visual speech recognition with frame-level audio-token supervision.

Subpackages: corpus (synthetic homophene world + dataset), quantizer
(k-means audio tokens), model (transformer encoder + heads), losses
(verified objective stack), train (deterministic loop + ablations),
analysis (metrics and figure-style analytics), cli (entry point).
"""

__version__ = "0.1.0"
