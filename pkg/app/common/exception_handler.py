# coding:utf-8
from copy import deepcopy
import traceback
from typing import Optional

from .logger import Logger


class VCNetError(Exception):
    """ base class of every error raised on purpose by the toolkit """


class ContractViolation(VCNetError, ValueError):
    """ a precondition of a kernel or service was not met """


class DataError(VCNetError):
    """ dataset ingestion or preprocessing failed """


class CsvParseError(DataError):

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[str] = None):
        self.row = row
        self.column = column
        location = []
        if row is not None:
            location.append(f"row {row}")
        if column is not None:
            location.append(f"column '{column}'")

        super().__init__(f"{message} ({', '.join(location)})" if location else message)


class SchemaError(DataError):
    """ schema declaration is inconsistent with the data or with itself """


class ConfigError(VCNetError):
    """ experiment configuration is invalid """


class ModelFileError(VCNetError):
    """ model file is truncated, from another format version or for another schema """


class StudyCheckFailed(VCNetError):

    def __init__(self, failed):
        self.failed = list(failed)
        super().__init__(f"synthetic study checks failed: {', '.join(self.failed)}")


class DivergenceError(VCNetError):

    def __init__(self, message: str, epoch: Optional[int] = None, batch: Optional[int] = None):
        self.reason = message
        self.epoch = epoch
        self.batch = batch
        if epoch is None and batch is None:
            super().__init__(message)
        else:
            super().__init__(f"{message} (epoch {epoch}, batch {batch})")

    def at(self, epoch: int, batch: int) -> "DivergenceError":
        """ same failure, located in the training loop """
        return DivergenceError(self.reason, epoch, batch)

    def __repr__(self):
        return f"DivergenceError(epoch={self.epoch}, batch={self.batch})"


def exceptionHandler(log: str, *default):
    """ decorator for exception handling

    Parameters
    ----------
    log: str
        log file name without `.log` suffix

    *default:
        the default value returned when an exception occurs
    """

    def outer(func):

        def inner(*args, **kwargs):
            try:
                return func(*args, **kwargs)
            except Exception as e:
                Logger(log).error(f"{e.__class__.__name__}: {traceback.format_exc()}")

                value = deepcopy(default)
                if len(value) == 0:
                    return None
                elif len(value) == 1:
                    return value[0]

                return value

        return inner

    return outer
