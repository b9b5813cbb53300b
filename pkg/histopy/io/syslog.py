"""Logging of histopy.

Every module logs through the 'histopy' logger. Two formats are available :

    * 'console' : colored level names, info messages printed as is
    * 'json' : one JSON event per line (used by the command line interface)

Structured fields are attached with ``extra={'fields': {...}}``. They are
dropped by the console format and become keys of the JSON events.
"""
import json
import logging
import re
import sys

from inspect import signature
from decorator import decorate

_CSI = "\033[%sm"
_LEVEL_COLORS = dict(DEBUG=32, INFO=37, WARNING=33, ERROR=31, CRITICAL=31)

LOGGING_TYPES = dict(DEBUG=logging.DEBUG, INFO=logging.INFO,
                     WARNING=logging.WARNING, ERROR=logging.ERROR,
                     CRITICAL=logging.CRITICAL)


class _ConsoleFormatter(logging.Formatter):
    """Colored console format.

    Info messages are printed without prefix. Text between stars is
    highlighted in red.
    """

    _stars = re.compile(r'\*(.*?)\*')

    def format(self, record):
        msg = self._stars.sub(
            lambda m: _CSI % '1;31' + m.group(0) + _CSI % '0',
            record.getMessage())
        if record.levelno == logging.INFO:
            out = msg
        else:
            color = _LEVEL_COLORS.get(record.levelname, 37)
            out = (f"{_CSI % f'1;{color}'}{record.levelname}"
                   f"{_CSI % '0'} | {msg}")
        if record.exc_info:
            out += '\n' + self.formatException(record.exc_info)
        return out


class _JsonFormatter(logging.Formatter):
    """One JSON event per line."""

    def format(self, record):
        event = {'time': round(record.created, 3),
                 'level': record.levelname,
                 'logger': record.name,
                 'event': record.getMessage().strip()}
        fields = getattr(record, 'fields', None)
        if isinstance(fields, dict):
            event.update(fields)
        if record.exc_info:
            event['exc'] = self.formatException(record.exc_info)
        return json.dumps(event, sort_keys=True, default=str)


class _PatternFilter(logging.Filter):
    """Only let messages matching a regular expression through."""

    def __init__(self):
        logging.Filter.__init__(self)
        self.pattern = None

    def filter(self, record):
        if self.pattern is None:
            return True
        return re.search(self.pattern, record.getMessage()) is not None


class _StderrHandler(logging.StreamHandler):
    """Handler writing to the current sys.stderr.

    The stream is looked up at every record so that swapped streams (e.g
    pytest capture) receive the logs.
    """

    def emit(self, record):
        self.stream = sys.stderr
        logging.StreamHandler.emit(self, record)


_FORMATTERS = {'console': _ConsoleFormatter(), 'json': _JsonFormatter()}
_filter = _PatternFilter()
_handler = _StderrHandler(sys.stderr)
_handler.setFormatter(_FORMATTERS['console'])
_handler.addFilter(_filter)

logger = logging.getLogger('histopy')
logger.propagate = False
logger.addHandler(_handler)
logger.setLevel(logging.INFO)


def _to_level(verbose):
    """Convert a verbose argument into a logging level."""
    if verbose is None:
        return logging.INFO
    if isinstance(verbose, bool):
        return logging.INFO if verbose else logging.WARNING
    if isinstance(verbose, str):
        if verbose.upper() not in LOGGING_TYPES:
            raise ValueError(f"verbose must be in {', '.join(LOGGING_TYPES)} "
                             f"(got {verbose!r})")
        return LOGGING_TYPES[verbose.upper()]
    return int(verbose)


def set_log_level(verbose=None, match=None, fmt=None):
    """Set the level, filter and format of the histopy logs.

    Parameters
    ----------
    verbose : bool, str, int, or None
        Level of the messages to print. A string can be DEBUG, INFO, WARNING,
        ERROR or CRITICAL, True means INFO and False means WARNING. None
        resets the level to INFO.
    match : string | None
        Only print the messages matching this regular expression. None keeps
        the current pattern and an empty string removes it.
    fmt : {'console', 'json'} | None
        Output format. None keeps the current one.

    Returns
    -------
    old_level : int
        Level in use before the call
    """
    old_level = logger.level
    logger.setLevel(_to_level(verbose))
    if match is not None:
        _filter.pattern = match or None
    if fmt is not None:
        if fmt not in _FORMATTERS:
            raise ValueError(f"fmt must be in {', '.join(_FORMATTERS)} "
                             f"(got {fmt!r})")
        _handler.setFormatter(_FORMATTERS[fmt])
    return old_level


class use_log_level(object):  # noqa
    """Temporarily change the logging level.

    Parameters
    ----------
    level : bool, str, int, or None
        Level to use inside the context
    """

    def __init__(self, level):  # noqa
        self.level = level

    def __enter__(self):  # noqa
        self.old_level = set_log_level(self.level)

    def __exit__(self, *args):  # noqa
        logger.setLevel(self.old_level)


def _call_with_level(function, *args, **kwargs):
    # verbose may arrive positionally depending on the decorator version
    level = signature(function).bind_partial(*args, **kwargs).arguments.get(
        'verbose')
    if level is None:
        return function(*args, **kwargs)
    with use_log_level(level):
        return function(*args, **kwargs)


def verbose(function):
    """Let a function override the logging level for a single call.

    The decorated function has to accept a `verbose` keyword argument. When
    it is given (and not None), the logging level is changed for the
    duration of the call, then restored even if the call raises.

    Parameters
    ----------
    function : callable
        Function to decorate

    Returns
    -------
    dec : callable
        The decorated function, with the signature of `function`
    """
    return decorate(function, _call_with_level)
