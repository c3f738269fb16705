"""Monte Carlo wave-function trajectories for composite cavity-QED systems."""

from .errors import (
    ConfigError,
    ConfigSyntaxError,
    ConstructionError,
    DegenerateStateError,
    NumericalError,
    QTrajError,
    StepSizeError,
    StiffnessError,
)
from .statevec import (
    StateVector,
    coherent_state,
    direct_product,
    fock_state,
    momentum_state,
    wave_packet,
)

__version__ = "0.1.0"
