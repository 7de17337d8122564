"""
Exception hierarchy for partsim.

Every error raised on purpose by the package derives from PartSimError.
ContractError covers violated preconditions and invalid inputs (CLI exit 2),
StorageError covers unreadable, missing or corrupt files (CLI exit 3).
"""


class PartSimError(Exception):
    """Base class for all partsim errors."""
    exit_code = 1


class ContractError(PartSimError):
    """A precondition or input contract was violated."""
    exit_code = 2


class ShapeError(ContractError):
    """Tensor shapes are incompatible for an operation."""

    def __init__(self, op, *shapes):
        self.op = op
        self.shapes = shapes
        rendered = ' vs '.join(str(tuple(s)) for s in shapes)
        super().__init__(f'{op}: incompatible shapes {rendered}')


class DomainError(ContractError):
    """A parameter lies outside the evaluation domain of a surface or curve."""


class DegeneratePartError(ContractError):
    """A part has a zero-extent bounding box."""


class GeometryError(ContractError):
    """A surface, curve or part violates its construction invariants."""


class SpecError(ContractError):
    """A family spec or jittered parameter set produces invalid geometry."""


class SchemaError(ContractError):
    """A product attribute value does not match the attribute schema."""


class FeatureExtractionError(ContractError):
    """Sampling a face or curve failed."""

    def __init__(self, entity_id, reason):
        self.entity_id = entity_id
        super().__init__(f'feature extraction failed for {entity_id}: {reason}')


class RoutingError(ContractError):
    """A face or curve type index has no member in the parameter bank."""


class NumericGuardError(ContractError):
    """A numeric precondition failed (zero-norm embedding, log of non-positive)."""


class NonFiniteLossError(ContractError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, batch_ids, loss_trace):
        self.epoch = epoch
        self.batch_ids = list(batch_ids)
        self.loss_trace = list(loss_trace)
        super().__init__(
            f'non-finite loss at epoch {epoch}; batch={self.batch_ids}; '
            f'recent losses={self.loss_trace[-10:]}'
        )


class BuildError(ContractError):
    """An embedding index cannot be built from the given vectors."""


class QueryError(ContractError):
    """A query is inconsistent with the index it runs against."""


class ConfigError(ContractError):
    """Configuration values are invalid or inconsistent with the data."""


class StorageError(PartSimError):
    """A file could not be read or written."""
    exit_code = 3


class FormatError(StorageError):
    """A file exists but its content is malformed or corrupt."""

    def __init__(self, path, reason, line=None):
        self.path = str(path)
        self.line = line
        where = f'{self.path}:{line}' if line is not None else self.path
        super().__init__(f'{where}: {reason}')
