"""Exact computational-algebra laboratory over finite chain rings and their group rings.

The package builds, layer by layer, an exact calculus of exterior-power
biduals over rings Z/p^m and (Z/p^m)[G] (G a finite abelian p-group), a
synthetic Selmer-structure model on a free ambient module, and the three
interlocking system engines (Euler towers, Kolyvagin systems, Stark systems)
whose structure theorems are verified by construction and by brute-force
oracle on desk-scale instances.
"""

from .rings import ChainRing, GroupRing, Matrix, make_ring

__all__ = ["ChainRing", "GroupRing", "Matrix", "make_ring"]

__version__ = "0.1.0"
