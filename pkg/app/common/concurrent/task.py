# coding:utf-8
import functools

from PySide6.QtCore import QRunnable

from .future import Future


class Task(QRunnable):
    """ runs `target(*args, **kwargs)` in the pool and settles its future """

    def __init__(self, _id: int, future: Future, target: functools.partial, args, kwargs):
        super().__init__()
        self._id = _id
        self._future = future
        self._target = target
        self._args = args
        self._kwargs = kwargs

    def run(self) -> None:
        try:
            result = self._target(*self._args, **self._kwargs)
        except Exception as exception:
            self._future.setFailed(exception)
        else:
            self._future.setResult(result)
