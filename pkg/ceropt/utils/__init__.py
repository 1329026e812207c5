from .finite_differences import central_jacobian, relative_error
from .plot_data import (
    ee_speed_and_acceleration,
    rollout_frame,
    trajectory_frame,
    controls_frame,
    clutch_torque_frame,
    tracking_frame,
)
