"""Two-qubit open quantum systems under continuous monitoring.

Submodules
----------
qcore         two-qubit linear algebra, bases and matrix literals
entanglement  concurrence of pure, X and general mixed states
model         monitored models, detection operators and the Liouvillian
engine        trajectory integrators, ensembles and the master equation
analytics     concurrence along paths and closed-form reference curves
presets       ready-made models with their reference curves
"""

from .engine import (
    EnsembleEstimate,
    NumericalError,
    TrajectoryRecord,
    ensemble_run,
    evolve_master,
    simulate,
    simulate_physical,
    simulate_reference,
    step_linear_sme,
    step_linear_sse,
)
from .entanglement import chi, concurrence_mixed, concurrence_pure, concurrence_x, is_x_state
from .model import (
    ChannelModel,
    JumpChannel,
    ModelError,
    MonitoredModel,
    apply_liouvillian,
    classify_interaction,
    detection_operators,
    local_coefficients,
    pauli_decompose,
)

__version__ = "0.1.0"
