"""LIDAR-aided mmWave beam selection: paired scene, LIDAR and multipath
simulation, voxel-histogram features, LOS detection and top-M beam-pair
recommendation."""

__version__ = "0.1.0"
