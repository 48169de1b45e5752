"""Attack detection and identification monitors for descriptor systems."""

from .core import (
    AttackScenario,
    DescriptorSystem,
    NoiseSpec,
    Trajectory,
    attack_model,
    check_consistent,
    check_regular,
    invariant_zeros,
    pencil_decomposition,
    simulate,
)
from .numeric import DEFAULT_POLICY, NumericPolicy

__version__ = "0.1.0"
