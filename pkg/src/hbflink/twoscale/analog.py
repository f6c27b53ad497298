"""Analog-stage state: phase mapping, quantization, moving average, window."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeError
from ..numerics import unvec, vec

GAMMA_EXPONENT = 0.8


def phases_to_analog(phi, n: int, n_rf: int) -> np.ndarray:
    """``unvec(exp(j phi) / sqrt(n))`` into an ``n x n_rf`` matrix (column-major, batched)."""
    phi = np.asarray(phi, dtype=float)
    if phi.shape[-1] != n * n_rf:
        raise ShapeError(f"phase vector has {phi.shape[-1]} entries, need {n * n_rf}")
    return unvec(np.exp(1j * phi) / np.sqrt(n), n, n_rf)


def analog_to_phases(a) -> np.ndarray:
    return np.angle(vec(np.asarray(a)))


def quantize_phases(phi, q_bits: int) -> np.ndarray:
    """Snap to the grid ``2 pi k / 2^q`` by circular distance; ties go to the lower index."""
    phi = np.asarray(phi, dtype=float)
    if q_bits == 0:
        return phi
    if q_bits < 0:
        raise ValueError("q_bits must be >= 0")
    levels = 2**q_bits
    step = 2 * np.pi / levels
    pos = np.mod(phi, 2 * np.pi) / step  # in [0, levels)
    lo = np.floor(pos)
    # ceil only when strictly closer to the upper grid point
    k = np.where(pos - lo > 0.5, lo + 1, lo)
    return np.mod(k, levels) * step


def gamma(t: int, exponent: float = GAMMA_EXPONENT) -> float:
    """Step size ``t^-a``; with 0.5 < a <= 1 the sum diverges and the sum of squares converges."""
    if t < 1:
        raise ValueError("frame index starts at 1")
    return float(t) ** (-exponent)


@dataclass
class LongTermPhaseState:
    phi_f: np.ndarray
    phi_w: np.ndarray
    t: int = 1
    exponent: float = GAMMA_EXPONENT

    @property
    def gamma(self) -> float:
        return gamma(self.t, self.exponent)


def update_long_term_phases(state: LongTermPhaseState, phi_f_bar, phi_w_bar, step: float | None = None
                            ) -> LongTermPhaseState:
    """``phi <- (1 - g) phi + g phi_bar``, coordinate-wise; advances the frame counter."""
    g = state.gamma if step is None else step
    if not 0.0 <= g <= 1.0:
        raise ValueError(f"step {g} outside [0, 1]")
    phi_f_bar, phi_w_bar = np.asarray(phi_f_bar, float), np.asarray(phi_w_bar, float)
    if not (np.all(np.isfinite(phi_f_bar)) and np.all(np.isfinite(phi_w_bar))):
        raise ValueError("non-finite phases")
    return LongTermPhaseState((1 - g) * state.phi_f + g * phi_f_bar, (1 - g) * state.phi_w + g * phi_w_bar,
                              state.t + 1, state.exponent)


@dataclass
class SlidingWindow:
    """Last ``capacity`` recovered channels (oldest first).

    ``stacked`` always returns ``capacity`` entries: before the buffer fills,
    the oldest stored entry is repeated in the missing leading slots.
    """

    capacity: int
    items: deque = field(default_factory=deque)

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("window capacity must be >= 1")
        self.items = deque(self.items, maxlen=self.capacity)

    def push(self, h_hat: np.ndarray) -> None:
        self.items.append(np.array(h_hat, copy=True))

    def __len__(self) -> int:
        return len(self.items)

    def history(self, extra: int = 0) -> list[np.ndarray]:
        """Entries padded to ``capacity - extra`` slots (replicating the oldest)."""
        need = self.capacity - extra
        if need <= 0:
            return []
        items = list(self.items)[-need:]
        if not items:
            return []
        return [items[0]] * (need - len(items)) + items

    def stacked(self) -> list[np.ndarray]:
        if not self.items:
            raise ValueError("window is empty")
        return self.history()
