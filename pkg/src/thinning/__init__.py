"""Monte Carlo tools for Bernoulli thinning of partitions, sequences and gap configurations."""

from .errors import *  # noqa: F401,F403
from .gaps import GapConfiguration, estimate_drift_velocity, sample_gap_poisson, thin_gaps
from .partitions import (
    CoxKingmanSpec,
    PartitionStructure,
    PoissonKingmanSpec,
    dust_fraction,
    gaps_to_partition,
    partition_to_gaps,
    sample_cox_kingman,
    sample_pd,
    sample_poisson_kingman,
    thin_partition,
)
from .point_process import ExpTilt, LebesgueMarginal, PowerLaw, TiltedLebesgue, sample_ppp_inverse_mass, sample_unit_arrivals, truncation_error_bound
from .seeding import SeedSpec
from .sequences import MarkedSequence, MarkSpace, exchangeability_probe, sample_cox_sequence, thin_sequence
from .stats import TestReport, chi_square_poisson, invariance_suite, ks_two_sample_permutation

__version__ = "0.1.0"
