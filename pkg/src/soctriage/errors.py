"""Exception types shared across the engine.

Everything user-facing derives from TriageError; the CLI maps those to
exit code 2 (data/validation error) and anything else to 3 (internal).
"""


class TriageError(Exception):
    """Base class for all engine errors."""


# -- event wire format -------------------------------------------------------

class MissingField(TriageError):
    """A required record field is absent."""


class BadValue(TriageError):
    """A field has the wrong type, is out of range, or is unknown."""


class OrderViolation(TriageError):
    """Record has t_detect earlier than t_occur."""


# -- criteria DSL ------------------------------------------------------------

class CriteriaSyntaxError(TriageError):
    """Criteria text does not match the grammar; carries the offset."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class TypeMismatch(TriageError):
    """Constraint form or value is illegal for the attribute's type."""


class DuplicateAttribute(TriageError):
    """Two constraints in one criteria target the same attribute."""


class EmptyKey(TriageError):
    """Correlation requested with an empty key attribute list."""


# -- synthetic generator -----------------------------------------------------

class EmptyTemplateSet(TriageError):
    """Chains requested but no chain templates supplied."""


class EmptySteps(TriageError):
    """Chain template declared with no steps."""


# -- experience store --------------------------------------------------------

class StorageFailure(TriageError):
    """Store file unreadable, unwritable, or corrupt before the tail."""


class DuplicateId(TriageError):
    """Explicit experience id does not extend the strictly increasing sequence."""


# -- relaxation / retrieval --------------------------------------------------

class StepOutOfRange(TriageError):
    """Requested generalization step beyond the constraint's chain length."""


class StoreUnavailable(TriageError):
    """Retrieval attempted without a loaded experience store."""


# -- sequence model ----------------------------------------------------------

class ShapeMismatch(TriageError):
    """Parameter/input dimensions are inconsistent."""


class EmptySequence(TriageError):
    """Classifier invoked on a zero-length sequence."""


class EmptyDataset(TriageError):
    """Training invoked on an empty dataset."""


class NonFiniteLoss(TriageError):
    """Training aborted because the loss left the finite range."""


# -- adversarial -------------------------------------------------------------

class NotInitiallyDetected(TriageError):
    """Evasion target is already classified as noise."""


class EmptyPool(TriageError):
    """Surrogate training pool is empty or smaller than the query budget."""


class ZeroBudget(TriageError):
    """Query budget below one."""


class LayoutMismatch(TriageError):
    """Two models do not share a feature layout (vocabulary tables differ)."""


# -- petri -------------------------------------------------------------------

class NotEnabled(TriageError):
    """Transition fired from a marking that does not enable it."""


class UnknownTransition(TriageError):
    """Transition id not declared in the net."""


class DanglingReference(TriageError):
    """Workflow wiring names an undeclared op or pool."""


class NetFormatError(TriageError):
    """Net description file does not match the documented format."""
