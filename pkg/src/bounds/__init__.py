"""
Dependency neighbourhoods and Chen-Stein bounds for the window counts.
"""
