"""Surface-plasmon distributed-Bragg-reflector cavity design and analysis.

The package covers the full workflow for metal-on-semiconductor plasmonic
cavities: grating design from the surface-plasmon dispersion relation, a 2D
dispersive finite-difference time-domain engine, resonance and quality-factor
extraction, mode-volume and emitter-coupling figures, and sweep orchestration
with a command-line front end.
"""

__version__ = "0.1.0"
