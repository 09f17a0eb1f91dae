class ContractError(ValueError):
    """A caller violated an operation's precondition (bad shape, bad range)."""


class ShapeError(ContractError):
    pass


class StructureError(ContractError):
    """Malformed graph or partition (skeleton tree, neighbour sets)."""


class FormatError(OSError):
    """A file on disk does not match the expected layout."""


class NoEstimatorError(RuntimeError):
    pass
