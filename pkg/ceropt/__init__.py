from .__version__ import __version__
from .constants import PLANT_DEFAULTS, SCENARIOS, STATE_LABELS
from .plant import HybridState, ModelInputError, PlantParams, eval_model, total_energy
from .modes import ClutchPattern, ModeSchedule, ScheduleError, extract_schedule
from .simulator import Rollout, SimulationError, rollout
from .transcription import TranscriptionConfig, TranscriptionError, TranscriptionProblem, build_problem
from .solver import SolveReport, SolveStatus, SolverError, solve_homotopy, solve_multistart
from .lqr import (
    GainSchedule,
    Reference,
    RiccatiDivergenceError,
    jump_sensitivity,
    riccati_sweep,
    track,
)
from .config import ConfigError, ExperimentConfig, load_config, resolve_config
from .checks import run_checks
