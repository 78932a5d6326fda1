"""Exception types shared across the package."""


class KrylovQfiError(Exception):
    """Base class for all package-specific errors."""


class DegenerateCommutatorError(KrylovQfiError, ValueError):
    """The state and generator commute, so every Krylov quantity is trivial."""


class SubspaceTerminatedError(KrylovQfiError, ValueError):
    """A Krylov order beyond the terminal subspace dimension was requested."""

    def __init__(self, n: int, n_star: int):
        self.n = n
        self.n_star = n_star
        super().__init__(f"order n={n} exceeds the terminal Krylov order n*={n_star}")


class IllConditionedError(KrylovQfiError, RuntimeError):
    """An exact moment matrix could not be factorized as positive-definite."""

    def __init__(self, message: str, condition_number: float):
        self.condition_number = condition_number
        super().__init__(f"{message} (condition number ~ {condition_number:.3e})")


class InsufficientDataError(KrylovQfiError, ValueError):
    """Fewer snapshots were supplied than the estimator needs."""


class ResourceLimitError(KrylovQfiError, ValueError):
    """A dense construction would exceed the documented dimension caps."""
