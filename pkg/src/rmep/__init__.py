"""Rectangular multiparameter eigenvalue problems and their use for
globally optimal ARMA(1,1) and LTI(2) identification."""

__version__ = "0.1.0"
