"""
PBS REST service package
"""
