"""
Reconstruction services
"""
