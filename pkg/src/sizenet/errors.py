class SizeNetError(ValueError):
    """Base class for all errors raised on bad input data or configuration."""


class FormatError(SizeNetError):
    """A file could not be parsed; carries the offending line when known."""

    def __init__(self, message, path=None, line_no=None, text=None):
        parts = []
        if path is not None:
            parts.append(str(path))
        if line_no is not None:
            parts.append(f"line {line_no}")
        prefix = ":".join(parts)
        full = f"{prefix}: {message}" if prefix else message
        if text is not None:
            full += f" (got {text!r})"
        super().__init__(full)
        self.path = path
        self.line_no = line_no
        self.text = text


class ConfigError(SizeNetError):
    pass
