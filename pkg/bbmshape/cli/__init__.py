"""
Command-line package
"""
