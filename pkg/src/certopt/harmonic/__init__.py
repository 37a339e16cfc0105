"""Bessel functions, sparse periodic targets and the Bessel frequency sampler."""

from .bessel import bessel_i, bessel_i_array, bessel_i_table
from .sampling import BesselSpectrumDistribution, FrequencySample, truncation_order
from .spectra import (
    ChebPoly,
    KernelMixture,
    NonRealError,
    TrigPoly,
    chebyshev_table,
    lift_cheb_to_trig,
)

__all__ = [
    "BesselSpectrumDistribution",
    "ChebPoly",
    "FrequencySample",
    "KernelMixture",
    "NonRealError",
    "TrigPoly",
    "bessel_i",
    "bessel_i_array",
    "bessel_i_table",
    "chebyshev_table",
    "lift_cheb_to_trig",
    "truncation_order",
]


def eval_trig(f: TrigPoly, z):
    return f.evaluate(z)


def eval_cheb(h: ChebPoly, x):
    return h.evaluate(x)


def sample_frequencies(dist: BesselSpectrumDistribution, count: int, seed) -> FrequencySample:
    return dist.sample(count, seed)
