"""Constraint-adaptive MPC: online reduction of large polytopic state
constraint sets with guaranteed constraint satisfaction."""

from .controller import ControllerState, MpcConfig, MpcController, StepDiagnostics
from .errors import CampcError, ConfigError, ControllerError, EmptySetError, InvariantBreach, StartupError
from .ltimodel import CostWeights, LtiModel, double_integrator
from .polytope import Polytope
from .qpsolver import QpProblem, QpSettings, QpSolution, solve

__version__ = "0.1.0"
