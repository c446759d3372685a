"""Piecewise-linear annealing over frame counts."""

from __future__ import annotations

from dataclasses import dataclass

FULL_FRAMES = 4_000_000


@dataclass(frozen=True)
class Schedule:
    """``start`` until ``delay``, linear to ``end`` over ``duration`` frames, then ``end``."""

    start: float
    end: float
    duration: int
    delay: int = 0

    def __post_init__(self):
        if self.duration < 0 or self.delay < 0:
            raise ValueError("schedule duration and delay must be non-negative")

    def __call__(self, frame: int) -> float:
        if frame <= self.delay:
            return self.start
        if frame >= self.delay + self.duration:
            return self.end
        frac = (frame - self.delay) / self.duration
        return self.start + (self.end - self.start) * frac

    def scaled(self, factor: float) -> "Schedule":
        """Same shape stretched to a different frame budget."""
        return Schedule(self.start, self.end, round(self.duration * factor), round(self.delay * factor))

    def to_dict(self) -> dict:
        return {"start": self.start, "end": self.end, "duration": self.duration, "delay": self.delay}


# Full-length (4M frame) presets; scale by ``frames / FULL_FRAMES`` for shorter runs.
ROBUST_WINDOW = dict(duration=3_500_000, delay=500_000)
LAMBDA_PRESETS = {
    # all weight moves from the plain cross-entropy onto the interval loss
    "anneal_to_zero": Schedule(1.0, 0.0, **ROBUST_WINDOW),
    # the interval term's mixing weight only reaches 0.5
    "anneal_to_half": Schedule(1.0, 0.5, **ROBUST_WINDOW),
}


def robust_epsilon_schedule(eps_max: float = 1.0 / 255.0) -> Schedule:
    return Schedule(0.0, eps_max, **ROBUST_WINDOW)
