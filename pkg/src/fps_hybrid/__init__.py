"""Hybrid precoding with fixed phase shifters and a dynamic switch network."""

from .errors import (BDInfeasibleError, BudgetError, ConfigError, DegenerateInputError,
                     DegenerateTargetError, DimensionError, FpsError, NormalizationError)
from .fps_core import (AltMinReport, HybridPrecoder, PhaseBank, altmin, bd_baseband,
                       build_phase_bank, normalize_digital, solve_alpha_switch,
                       surrogate_objective)
from .sysmodel import (ChannelSet, CombinerSet, SystemConfig, TargetPrecoder,
                       design_combiners, fully_digital_precoder, generate_channels)

__version__ = "0.1.0"
