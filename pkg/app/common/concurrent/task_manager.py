# coding:utf-8
from typing import Callable, Optional

from PySide6.QtCore import QMutex, QMutexLocker, QThreadPool

from ..utils import workerCount
from .future import Future
from .task import Task


class TaskExecutor:
    """ submits callables to a private `QThreadPool` and hands back a `Future` for each """

    def __init__(self, maxWorkers: Optional[int] = None):
        self.threadPool = QThreadPool()
        # CPU-bound numpy work: one thread per physical core
        self.threadPool.setMaxThreadCount(maxWorkers or workerCount())

        self._mutex = QMutex()
        self.taskCounter = 0

    @property
    def maxWorkers(self) -> int:
        return self.threadPool.maxThreadCount()

    def asyncRun(self, target: Callable, *args, name: str = "", **kwargs) -> Future:
        with QMutexLocker(self._mutex):
            _id = self.taskCounter
            self.taskCounter += 1

        future = Future(name or getattr(target, "__name__", f"task-{_id}"))
        future.setTaskID(_id)
        task = Task(_id, future, target, args, kwargs)
        task.setAutoDelete(True)
        self.threadPool.start(task)
        return future

    def shutdown(self) -> None:
        """ drop queued tasks and wait for the running ones """
        self.threadPool.clear()
        self.threadPool.waitForDone()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.shutdown()
        return False
