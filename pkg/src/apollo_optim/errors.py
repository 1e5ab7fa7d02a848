class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class ConfigError(ValueError):
    """Invalid optimizer, projector, task or architecture configuration."""


class NumericalError(ArithmeticError):
    """A numerical routine (e.g. SVD) failed."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite or exploding loss."""

    def __init__(self, step: int, loss: float):
        super().__init__(f"diverged at step {step} (loss={loss!r})")
        self.step = step
        self.loss = loss
