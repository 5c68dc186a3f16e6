"""Layout-to-nanotopography modeling toolkit.

Rasterizes IC copper layouts, generates synthetic post-polish height maps,
and trains a small convolutional encoder-decoder to predict topography from
layout, end to end on a desktop CPU.
"""

__version__ = "0.1.0"
