"""mKdV breathers, complex solitons and Bäcklund transformations on a spectral grid."""
__version__ = "0.1.0"
