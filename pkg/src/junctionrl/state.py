"""Agent observation: the last 20 measurement frames, oldest first."""
from __future__ import annotations

from collections import deque

import numpy as np

N_STAGES = 4
N_LANES = 6
N_CROSSINGS = 4
FRAME_WIDTH = N_STAGES + N_LANES + N_CROSSINGS
HISTORY = 20
OBS_DIM = HISTORY * FRAME_WIDTH


def make_frame(stage: int, occupancies, buttons) -> np.ndarray:
    """One 14-wide measurement: stage one-hot, lane occupancies, button bits."""
    frame = np.zeros(FRAME_WIDTH)
    frame[stage - 1] = 1.0
    frame[N_STAGES:N_STAGES + N_LANES] = occupancies
    frame[N_STAGES + N_LANES:] = buttons
    return frame


def frame_from_sensors(stage: int, sensor_frame) -> np.ndarray:
    return make_frame(stage, [s.occupancy for s in sensor_frame.lanes], [float(p.button) for p in sensor_frame.peds])


class HistoryBuffer:
    """Fixed-length ring of measurement frames, zero-padded at episode start."""

    def __init__(self, length: int = HISTORY):
        self.length = length
        self.frames = deque([np.zeros(FRAME_WIDTH) for _ in range(length)], maxlen=length)

    def push(self, frame: np.ndarray):
        if frame.shape != (FRAME_WIDTH,):
            raise ValueError(f"frame must have shape ({FRAME_WIDTH},), got {frame.shape}")
        self.frames.append(frame)

    def encode(self) -> np.ndarray:
        return np.concatenate(self.frames)
