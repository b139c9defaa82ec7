"""
Quasi-periodic solutions of quasi-linear perturbations of mKdV.

Pseudo-spectral toolkit: weak Birkhoff normal form, action-angle embedding,
approximate inverse, reduction of the linearized operator, KAM reducibility,
Nash-Moser iteration, measure estimates and time integration.
"""

__version__ = "0.1.0"
