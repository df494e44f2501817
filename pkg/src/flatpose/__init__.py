"""Flat-part pose toolkit.

Converts manufacturing documents of flat sheet-metal parts into 3D meshes,
generates synthetic pose datasets with a software depth rasterizer, scores
pose estimates with symmetry-aware metrics, and serves pose results over a
latency-aware streaming protocol.

All lengths are millimeters unless a name says otherwise.
"""

__version__ = "0.1.0"
