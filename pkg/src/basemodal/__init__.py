"""Virtual nonlinear modal testing laboratory for base-excited beams.

Simulates phase-resonant (backbone) and constant-level frequency-response
tests on nonlinear Euler-Bernoulli beam models, identifies amplitude-
dependent modal frequency and damping from the virtual measurements, and
validates the results against a harmonic-balance nonlinear-mode reference
and single-mode forced-response predictions.
"""

__version__ = "1.0.0"
