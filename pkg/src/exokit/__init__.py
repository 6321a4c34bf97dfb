"""Toolkit for a wearable hand-exoskeleton capture rig: thumb-coupling
kinematics and its self-motion manifold, anthropometric compatibility
bounds, wiggle-space ellipsoid analysis, and the multi-rate sensor
ingestion / synchronization / retargeting / episode-export pipeline."""

from .anthropometry import (CompatibilityVerdict, SliderParams, check_hand,
                            hand_length_range, slider_bounds)
from .errors import (ConvergenceError, FormatError, JointLimitError,
                     SelfMotionError, SingularConfigurationError, ToolkitError)
from .geometry import Pose
from .hand_model import (CouplingFunction, JointSpec, KinematicChain,
                         PassiveThumbConfig, coupling_theta3,
                         fk_attachment_points, parse_chain, serialize_chain)
from .thumb_coupling import (ConstraintResidual, CouplingGeometry,
                             attachment_in_base, constraint_jacobian,
                             constraint_residual, nullspace_dimension,
                             project_to_manifold, sample_self_motion,
                             solve_passive)
from .wiggle_analysis import (Ellipsoid, PointCloud, coverage_fraction,
                              covariance, ellipsoid_volume, fit_ellipsoid)

__version__ = "0.1.0"
