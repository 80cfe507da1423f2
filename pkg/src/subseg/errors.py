"""Exception hierarchy shared across the package.

Everything raised on bad data derives from :class:`SubsegError` so the CLI
can map it to the data-error exit status in one place.
"""


class SubsegError(Exception):
    """Base class for data and parameter errors."""


class CorpusDecodeError(SubsegError):
    def __init__(self, offset: int, reason: str = "invalid UTF-8"):
        self.offset = offset
        super().__init__(f"{reason} at byte offset {offset}")


class ParameterError(SubsegError):
    pass


class DictionaryFormatError(SubsegError):
    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class SymbolTableMismatch(SubsegError):
    pass


class CyclicFstError(SubsegError):
    pass


class NoPathError(SubsegError):
    pass


class UnsegmentableWordError(NoPathError):
    """The word has no segmentation over the dictionary."""

    def __init__(self, word: str):
        self.word = word
        super().__init__(f"word {word!r} cannot be segmented with this dictionary")


class ReservedMarkerError(SubsegError):
    pass
