"""
Random couplings, the induced field, window counts and the density of states.
"""
