"""Inexact proximal point methods for zeroth-order global optimization."""
