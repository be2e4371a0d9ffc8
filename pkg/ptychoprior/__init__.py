"""
ptychoprior - Compressive ptychography with generative and image priors
"""
__version__ = '0.1.0'
