"""
PBS engine package
Symmetry-based construction and verification of primary branch solutions
"""
