"""
Test package of hierlap.
"""
