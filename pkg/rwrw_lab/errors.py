
from typing import Optional


class ErrKnown(Exception):
    def __init__(self, *args: object) -> None:
        super().__init__(*args)


class ErrUsage(ErrKnown):
    """A precondition of an operation was violated by the caller."""


class ErrDomain(ErrKnown):
    """The request is mathematically impossible (e.g. conditioning on a null event)."""


class ErrResource(ErrKnown):
    def __init__(self, message: str, acceptance_rate: Optional[float] = None) -> None:
        if acceptance_rate is not None:
            message = f"{message} (observed acceptance rate = {acceptance_rate:.3g})"
        super().__init__(message)
        self.acceptance_rate = acceptance_rate


class ErrInvariant(ErrKnown):
    """An internal invariant does not hold; this is a bug, not bad input."""


class ErrConfig(ErrKnown):
    def __init__(self, message: str, key: str = "", line: Optional[int] = None) -> None:
        location = []
        if line is not None:
            location.append(f"line {line}")
        if key:
            location.append(f"key [{key}]")
        if location:
            message = f"{', '.join(location)}: {message}"
        super().__init__(message)
        self.key = key
        self.line = line


class ErrAssertion(ErrKnown):
    def __init__(self, name: str, detail: str = "") -> None:
        super().__init__(f"acceptance assertion failed: {name}" + (f" ({detail})" if detail else ""))
        self.name = name
