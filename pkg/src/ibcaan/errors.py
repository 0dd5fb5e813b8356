class DataError(ValueError):
    """Bad or unreadable input data (dataset, score, checkpoint or config file)."""


class ParseError(DataError):
    def __init__(self, path, line: int | None, message: str):
        self.path = str(path)
        self.line = line
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where}: {message}")
