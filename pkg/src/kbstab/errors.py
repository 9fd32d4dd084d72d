"""Exception hierarchy shared by every kbstab module."""


class KbStabError(Exception):
    """Base class for all kbstab errors."""


class ValidationError(KbStabError, ValueError):
    """Input parsed fine but violates a data-model invariant."""


class ContractError(KbStabError, ValueError):
    """A function was called with arguments outside its contract."""


class MissingInputError(KbStabError, ValueError):
    """A required auxiliary input (edit log, embedding, ...) was not supplied."""


class ParseError(KbStabError, ValueError):
    """Malformed input line. ``line`` is 1-based, ``None`` when unknown."""

    def __init__(self, message, line=None, path=None):
        self.message = message
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
