"""
Catalog and solver services used by the routes
"""
