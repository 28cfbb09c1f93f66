"""
Experiment configuration, runners and result comparison.
"""
