"""
Monte Carlo package
"""
