"""fovsim: desk-scale peripheral-vision simulation toolkit.

Submodules import numpy and friends; this package init stays light so the
CLI can configure thread environment variables before the heavy imports.
"""

__version__ = "0.1.0"
