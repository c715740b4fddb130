"""satstack: multi-mission satellite image time-series toolkit.

Catalog search and download planning, GeoTIFF grids and stacks, map
projections, spectral indices, cloud masks, mean-anomaly gap filling, and
reservoir water-level estimation.
"""

__version__ = "0.1.0"
