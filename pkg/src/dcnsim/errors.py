"""Exception types shared across the simulator."""


class ConfigError(ValueError):
    """A shape, size, or option is inconsistent with what the operation needs."""


class InfeasibleScheduleError(RuntimeError):
    """An output tile's working set does not fit in the on-chip buffer.

    Carries the offending output tile so callers can report which row of the
    dependency table broke the capacity requirement.
    """

    def __init__(self, out_tile: int, required: int, capacity: int):
        self.out_tile = out_tile
        self.required = required
        self.capacity = capacity
        super().__init__(
            f"output tile {out_tile} needs {required} input tiles resident "
            f"but the buffer holds only {capacity}"
        )
