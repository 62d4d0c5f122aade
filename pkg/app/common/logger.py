# coding:utf-8
"""
Per-topic loggers of the toolkit.

Every topic writes `<CONFIG_FOLDER>/Log/<topic>.log` at DEBUG level and, unless
disabled, stderr at INFO. `Logger.event` emits one `name key=value ...` line,
the format used for epoch progress and experiment milestones.
"""
import logging
import numbers
import re
import weakref

from .setting import CONFIG_FOLDER, DEBUG


LOG_FOLDER = CONFIG_FOLDER / "Log"
TOPICS = ("data", "training", "counterfactual", "metrics", "experiment", "cli")
_loggers = weakref.WeakValueDictionary()


class NoColorFormatter(logging.Formatter):
    """ drops ANSI escape sequences (progress bars, colored tracebacks) from log files """

    ANSI_ESCAPE = re.compile(r'\x1B(?:[@-Z\\-_]|\[[0-?]*[ -/]*[@-~])')

    def format(self, record):
        record.msg = self.ANSI_ESCAPE.sub('', str(record.msg))
        return super().format(record)


def formatFields(**fields) -> str:
    """ `key=value` pairs in call order, reals with 6 significant digits """
    parts = []
    for key, value in fields.items():
        if isinstance(value, numbers.Real) and not isinstance(value, (bool, numbers.Integral)):
            value = f"{value:.6g}"
        parts.append(f"{key}={value}")
    return " ".join(parts)


def loggerCache(cls):
    """ decorator for caching logger """

    def wrapper(topic, *args, **kwargs):
        if topic not in _loggers:
            instance = cls(topic, *args, **kwargs)
            _loggers[topic] = instance
        else:
            instance = _loggers[topic]

        return instance

    return wrapper


@loggerCache
class Logger:
    """ Logger class """

    def __init__(self, topic: str, printConsole=True):
        """
        Parameters
        ----------
        topic: str
            log topic, also the log file name without `.log` suffix

        printConsole: bool
            echo INFO and above to stderr
        """
        LOG_FOLDER.mkdir(exist_ok=True, parents=True)

        self.topic = topic
        self.logFile = LOG_FOLDER / f"{topic}.log"

        # toolkit records stay out of the host application's root logger
        self.__logger = logging.getLogger(f"vcnet.{topic}")
        self.__logger.propagate = False
        self.__logger.setLevel(logging.DEBUG)

        self.__consoleHandler = logging.StreamHandler()
        self.__consoleHandler.setLevel(logging.DEBUG if DEBUG else logging.INFO)
        self.__consoleHandler.setFormatter(logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s'))

        self.__fileHandler = logging.FileHandler(self.logFile, encoding='utf-8', delay=True)
        self.__fileHandler.setLevel(logging.DEBUG)
        self.__fileHandler.setFormatter(
            NoColorFormatter('%(asctime)s - %(levelname)s - %(message)s', datefmt='%Y-%m-%d %H:%M:%S'))

        if not self.__logger.hasHandlers():
            if printConsole:
                self.__logger.addHandler(self.__consoleHandler)

            self.__logger.addHandler(self.__fileHandler)

    def setConsoleLevel(self, level: int):
        self.__consoleHandler.setLevel(level)

    def event(self, name: str, level: int = logging.INFO, **fields):
        self.__logger.log(level, f"{name} {formatFields(**fields)}" if fields else name)

    def info(self, msg):
        self.__logger.info(msg)

    def error(self, msg, exc_info=False):
        self.__logger.error(msg, exc_info=exc_info)

    def debug(self, msg):
        self.__logger.debug(msg)

    def warning(self, msg):
        self.__logger.warning(msg)


def setConsoleLevel(level: int, topics=TOPICS):
    """ console verbosity of every toolkit topic; log files keep everything """
    for topic in topics:
        Logger(topic).setConsoleLevel(level)
