"""
homoglab numerical core
Finite elements, cell problems and spectra of high-contrast periodic media
"""

__version__ = "0.1.0"
