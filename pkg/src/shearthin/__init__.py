"""Regularized solver and verification harness for shear-thinning film flow with Tresca friction."""
