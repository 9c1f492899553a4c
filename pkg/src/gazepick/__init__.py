"""Gaze-driven pick-and-place pipeline with a simulated robot backend.

The package turns a stream of normalized iris coordinates into robot
pick/place commands: polynomial calibration maps iris samples to screen
pixels, a constant-velocity Kalman filter smooths the trajectory, a
magnetic cursor snaps onto detected objects, and a dwell state machine
issues commands that a kinematics-free simulated arm executes. A session
layer speaks newline-delimited JSON and replays logged traffic
deterministically, and an experiment harness measures how magnetic
snapping changes fixation-to-selection time for synthetic gaze agents.
"""

__version__ = "0.1.0"
