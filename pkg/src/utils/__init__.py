"""
Logging, seeding, parallel mapping and filesystem helpers.
"""
