"""
REST routes mirroring the pbs commands
"""
