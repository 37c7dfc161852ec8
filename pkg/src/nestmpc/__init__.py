"""Nested tube-based distributed MPC for dynamically coupled LTI systems."""

from .sets import Box, ConvexSet, contains_point, coupling_disturbance_set, linear_image, minkowski_sum, scale, support
from .solver import FeasibilityReport, QpProblem, Solution, Status, check_feasible, solve_lp, solve_qp
from .model import Horizons, SubsystemModel, discretize_network, discretize_zoh, stack_network
from .rci import (RciDesign, RciWeights, ScalingConstants, SubsystemDesign,
                  design_scalings, rescale_for_summand, selection_control,
                  solve_rci, verify_rci)
from .ocp import (AncillaryInfeasible, AncillarySolution, DisturbanceSequence,
                  MainInfeasible, Prediction, assemble_disturbance,
                  solve_ancillary, solve_main)
from .controller import ControllerState, StepRecord, phase_ancillary, phase_main
from .coordinator import Coordinator, Message, PlantState, Trace, run_simulation
from .config import Config, ConfigError, load_design, parse_config, save_design
from .benchmark import truck_benchmark, truck_benchmark_dict

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
