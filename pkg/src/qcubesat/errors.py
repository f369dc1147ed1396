"""Exception types shared across the simulator."""


class ModelInputError(ValueError):
    """An input lies outside the validity range of a model."""


class LockLostError(RuntimeError):
    """The beacon tracker could not find the beacon in the frame."""


class ScenarioError(ValueError):
    """A scenario file is malformed or violates a constraint.

    ``key`` names the offending dotted key (``None`` for document-level errors).
    """

    def __init__(self, key, message):
        self.key = key
        self.constraint = message
        where = f"{key}: " if key else ""
        super().__init__(f"{where}{message}")


class OutputError(OSError):
    """A result file or directory could not be written."""
