"""
hierlap: random hierarchical Laplacians on ultrametric trees.
"""
