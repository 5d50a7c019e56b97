"""Slave base station calibration from photodiode board captures."""

import json

from ._lhcalib import (
    LhcalibError,
    Pose6DoF,
    PulseStream,
    StageError,
    angle_to_delta_t,
    compose,
    delta_t_to_angle,
    evaluate,
    inverse,
    load_pulses,
    position_error,
    rotation_error,
    save_pulses,
)
from . import _lhcalib

__all__ = [
    "LhcalibError", "Pose6DoF", "PulseStream", "StageError", "angle_to_delta_t", "calibrate", "compose",
    "delta_t_to_angle", "evaluate", "inverse", "load_pulses", "position_error", "rotation_error", "save_pulses",
    "simulate",
]


def simulate(scenario, seed=0):
    """Returns (master stream, slave stream, ground truth dict).

    scenario is a dict in the scenario file format (lengths in m, angles in deg).
    """
    master, slave, truth = _lhcalib._simulate(json.dumps(scenario), seed)
    return master, slave, json.loads(truth)


def calibrate(master, slave, strategy="full", allow_degenerate_path=False, deterministic=False):
    """Returns (slave pose in the master frame, result dict)."""
    pose, result = _lhcalib._calibrate(master, slave, strategy, allow_degenerate_path, deterministic)
    return pose, json.loads(result)
