"""Simulation and verification tools for McKean-Vlasov SDEs driven by
rotationally invariant alpha-stable noise."""

from ._backend import BACKEND
from .drift import (ConstantDrift, ConvolutionDrift, DriftModel, HolderDrift,
                    SaturatedMeanFieldDrift, ZeroDrift, make_drift)
from .functionals import (CompositeFunctional, LinearFunctional, QuadraticFunctional,
                          TestFunctional, builtin_functionals, make_functional)
from .initial import ParetoInit, PointInit, UniformInit, make_init
from .measures import EmpiricalMeasure, GridDensity, KDEConfig, MeasureFlow, dtv_estimate
from .mckean import (PicardConfig, UConfig, apply_generator, decoupled_flow_density,
                     flat_derivative_U_difference, flow_constancy_residual, picard_iterate,
                     picard_solve, semigroup_U_estimate)
from .parametrix import ParametrixConfig, density_truncated
from .particles import NonFiniteStateError, ParticleState, SimConfig, simulate, step
from .reference import RhoParams, beta_fn, beta_product_tail, convolution_inequality_ratio, rho
from .rng import RandomStream
from .stable import StableLaw, sample, stable_density, stable_density_gradient
from .wasserstein import w1_exact_1d, w1_small_exact

__version__ = "0.1.0"
