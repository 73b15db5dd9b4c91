"""Exceptions raised by both kernel backends."""


class KernelError(RuntimeError):
    pass


class StepUnderflowError(KernelError):
    """Step size fell below resolution or the step budget ran out."""


class NonFiniteStateError(KernelError, FloatingPointError):
    """The integrated state became NaN or infinite."""
