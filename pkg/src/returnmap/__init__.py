"""Toolkit for discovering sparse polynomial return maps from trajectory data.

Pipeline: integrate a system (`dynamics`), sample a Poincare section
(`section`), regress the next-sample map onto a monomial library
(`features` + `regression`), then analyze the discovered map (`mapmodel`).
`pde` adds a reaction-diffusion front end that discovers maps on dominant
SVD modes, and `cli`/`experiment` tie everything together behind config
files.
"""

from .dynamics import (DivergenceError, OdeSystem, Trajectory, builtin_system,
                       dense_eval, integrate, integrate_batch)
from .features import (FeatureLibrary, build_library, evaluate_library,
                       library_fingerprint, term_name)
from .mapmodel import (FixedPointReport, MapModel, apply, band_histogram,
                       detect_cycle, find_fixed_points, iterate, jacobian,
                       load_model, make_model, save_model, sparsity_sweep,
                       training_error)
from .pde import (Field2D, SnapshotMatrix, SvdResult, lambda_omega_simulate,
                  mode_timeseries, reconstruct_field, snapshot_svd, spiral_field)
from .regression import (CoefficientMatrix, StlsqConfig, least_squares,
                         residual_rms, stlsq)
from .rng import SplitMix64
from .section import (SampleSequence, SectionSpec, build_pairs, crossing_sample,
                      hyperplane_spec, strobe_sample, strobe_spec)

__version__ = "0.1.0"
