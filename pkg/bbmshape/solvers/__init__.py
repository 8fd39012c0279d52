"""
Deterministic solvers package
"""
