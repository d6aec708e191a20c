"""Exception types raised across the package."""


class ScvaeError(Exception):
    """Base class for every error the library raises on purpose."""


class DimensionMismatch(ScvaeError, ValueError):
    """An array does not have the length or width the operation expects."""


class ShapeMismatch(ScvaeError, ValueError):
    """A gradient does not match the shape cached by the forward pass."""


class IsolatedRegion(ScvaeError, ValueError):
    """A region has no neighbours, so its CAR prior is improper."""

    def __init__(self, regions: list[int]):
        self.regions = regions
        shown = ", ".join(str(r) for r in regions[:10])
        more = "" if len(regions) <= 10 else f" (+{len(regions) - 10} more)"
        super().__init__(f"Regions without neighbours: {shown}{more}")


class NotPositiveDefinite(ScvaeError, ValueError):
    """Cholesky factorization of the precision matrix failed."""


class NonFiniteGradient(ScvaeError, RuntimeError):
    """A gradient entry is NaN or infinite."""

    def __init__(self, name: str):
        self.name = name
        super().__init__(f"Non-finite gradient for parameter '{name}'")


class NonFiniteLoss(ScvaeError, RuntimeError):
    """A loss component evaluated to NaN or infinity."""

    def __init__(self, component: str):
        self.component = component
        super().__init__(f"Non-finite loss component '{component}'")


class Diverged(ScvaeError, RuntimeError):
    """Validation loss blew up relative to its starting value."""


class TooFewRegions(ScvaeError, ValueError):
    """Not enough regions to hold some out of training."""


class UnknownRegion(ScvaeError, ValueError):
    """A region index lies outside the spatial graph."""


class UnknownColumn(ScvaeError, KeyError):
    """A covariate name is not a column of the dataset."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class InvalidLevel(ScvaeError, ValueError):
    """A categorical level is not observed in the covariate column."""


class InvalidParameter(ScvaeError, ValueError):
    """An argument is outside its allowed range."""


class SchemaError(ScvaeError, ValueError):
    """An input file does not follow the expected layout."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        prefix = f"row {row}: " if row is not None else ""
        super().__init__(f"{prefix}{message}")


class ConfigError(ScvaeError, ValueError):
    """A config file has a syntax error or an invalid key."""

    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        self.line = line
        self.key = key
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(f"{prefix}{message}")


class SingleClass(ScvaeError, ValueError):
    """AUC needs at least one positive and one negative label."""


class InsufficientSeeds(ScvaeError, ValueError):
    """Too few seeds or variants to summarise a benchmark."""


class CheckpointError(ScvaeError, ValueError):
    """A checkpoint archive is missing entries or is malformed."""
