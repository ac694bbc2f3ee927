"""Spectra of random generalised permutation matrices under the Ewens measure."""

__version__ = "0.1.0"
