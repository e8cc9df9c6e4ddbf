import logging

from rich.console import Console
from rich.logging import RichHandler


LOG_FORMAT = "%(name)s: %(message)s"

stderr_console = Console(stderr=True)


def configure_logging(verbose: bool = False) -> None:
    """Route all `radarmat` loggers to a rich handler on stderr."""
    root = logging.getLogger("radarmat")
    root.setLevel(logging.DEBUG if verbose else logging.INFO)
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = RichHandler(
        console=stderr_console,
        show_time=verbose,
        show_path=verbose,
        markup=False,
        rich_tracebacks=verbose,
    )
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    root.propagate = False
