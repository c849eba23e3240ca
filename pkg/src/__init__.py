"""
Coarsening Lab
Numerical laboratory for the mean-field interval-coarsening model
"""

__version__ = "1.0.0"
