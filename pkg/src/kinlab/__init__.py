"""kinlab: a numerical laboratory for weakly disordered lattice quantum dynamics.

The package simulates a single quantum particle on a periodic cubic lattice
with a weak i.i.d. Gaussian on-site potential, measures phase-space
observables of the evolved state through scaled Wigner transforms, and
compares ensembles of such measurements against the linear Boltzmann
transport equation that governs the weak-coupling limit.  Side laboratories
probe the two ingredients that control the error budget of that limit:
torus resolvent integrals and the combinatorics of pairings in the variance
expansion.

Modules
-------
lattice    dispersion, box geometry, disorder fields, Fourier transforms,
           semiclassical wave-packet construction
dynamics   free/full/dense propagators, iterated-integral expansion of the
           full evolution, remainder bookkeeping
wigner     phase-space test observables and Wigner pairings
boltzmann  particle Monte Carlo for the linear Boltzmann equation
resolvent  torus integrals of resolvent products and scaling fits
graphs     pairing enumeration, classification, and variance bound formulas
harness    experiment orchestration, config files, CSV/manifest output, CLI
"""

from kinlab.lattice import (
    BoxSpec,
    DisorderField,
    TrigPolynomial,
    WaveFunction,
    WkbSpec,
    dispersion,
    group_velocity,
    sample_disorder,
    to_momentum,
    to_position,
    wkb_state,
)

__version__ = "0.1.0"

__all__ = [
    "BoxSpec",
    "DisorderField",
    "TrigPolynomial",
    "WaveFunction",
    "WkbSpec",
    "dispersion",
    "group_velocity",
    "sample_disorder",
    "to_momentum",
    "to_position",
    "wkb_state",
    "__version__",
]
