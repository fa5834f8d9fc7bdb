class NNCoreError(Exception):
    pass


class ShapeError(NNCoreError, ValueError):
    pass


class StateError(NNCoreError, RuntimeError):
    """Raised when a layer is used out of order (e.g. backward before forward)."""


class NonFiniteError(NNCoreError, FloatingPointError):
    pass
