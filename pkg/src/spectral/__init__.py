"""
Ultrametric trees and hierarchical Laplacians on them.
"""
