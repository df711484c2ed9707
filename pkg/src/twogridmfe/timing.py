import time
from collections.abc import Callable, Iterator
from contextlib import contextmanager
from dataclasses import dataclass, field
from types import TracebackType
from typing import Literal

PhaseNames = Literal["coarse", "fine", "assembly", "solve", "total"]


@dataclass
class PhaseTiming:
    wall_seconds: float = 0.0
    cpu_seconds: float = 0.0

    def add(self, wall: float, cpu: float) -> None:
        self.wall_seconds += max(0.0, wall)
        self.cpu_seconds += max(0.0, cpu)


@dataclass
class PhaseTimer:
    """Accumulates wall-clock and process CPU time per named phase."""

    phases: dict[str, PhaseTiming] = field(default_factory=dict)

    @contextmanager
    def phase(self, name: PhaseNames) -> Iterator[None]:
        wall, cpu = time.perf_counter(), time.process_time()
        try:
            yield
        finally:
            self.phases.setdefault(name, PhaseTiming()).add(
                time.perf_counter() - wall, time.process_time() - cpu
            )

    def cpu(self, name: PhaseNames) -> float:
        return self.phases[name].cpu_seconds if name in self.phases else 0.0

    def wall(self, name: PhaseNames) -> float:
        return self.phases[name].wall_seconds if name in self.phases else 0.0

    def as_dict(self) -> dict[str, dict[str, float]]:
        return {name: {"wall": t.wall_seconds, "cpu": t.cpu_seconds} for name, t in self.phases.items()}


class RunGuard:
    """
    Context manager around a run: times the whole block as the "total" phase and calls
    `on_failure_callback` with the exception before letting it propagate.
    """

    def __init__(
        self, timer: PhaseTimer, on_failure_callback: Callable[[BaseException], None] | None = None
    ) -> None:
        self.timer = timer
        self.on_failure_callback = on_failure_callback
        self._start = (0.0, 0.0)

    def __enter__(self) -> "RunGuard":
        self._start = (time.perf_counter(), time.process_time())
        return self

    def __exit__(
        self, exc_type: type[BaseException] | None, exc_val: BaseException | None, tb: TracebackType | None
    ) -> Literal[False]:
        wall, cpu = self._start
        self.timer.phases.setdefault("total", PhaseTiming()).add(
            time.perf_counter() - wall, time.process_time() - cpu
        )
        if exc_val is not None and self.on_failure_callback:
            self.on_failure_callback(exc_val)
        return False  # Propagate the exception
