# coding:utf-8
from typing import Any, Callable, List, Optional, Sequence, Tuple

from PySide6.QtCore import QMutex, QMutexLocker, QSemaphore


class FutureError(Exception):
    pass


class FutureFailed(FutureError):
    def __init__(self, _exception: Optional[BaseException]):
        super().__init__(str(_exception))
        self.exception = _exception

    def __repr__(self):
        return f"FutureFailed({self.exception!r})"


class GatheredFutureFailed(FutureError):
    def __init__(self, failures: List[Tuple['Future', BaseException]]):
        super().__init__(f"{len(failures)} task(s) failed")
        self.failures = failures

    def __repr__(self):
        return f"GatheredFutureFailed({self.failures})"

    def __iter__(self):
        return iter(self.failures)

    def __len__(self):
        return len(self.failures)


class Future:
    """
    Result slot of a task running in a worker thread.

    The worker calls `setResult` or `setFailed` exactly once, then releases the
    semaphore; `wait` blocks the caller until that happened. No Qt event loop
    is involved, so futures also work from a plain command line process.
    """

    def __init__(self, name: str = ""):
        self.name = name
        self._taskID = None
        self._done = False
        self._result = None
        self._exception: Optional[BaseException] = None
        self._callbacks: List[Callable[['Future'], None]] = []
        self._mutex = QMutex()
        self._semaphore = QSemaphore(0)

    def setTaskID(self, _id: int) -> None:
        self._taskID = _id

    def getTaskID(self) -> int:
        return self._taskID

    def _finish(self, result, exception) -> None:
        with QMutexLocker(self._mutex):
            if self._done:
                raise RuntimeError("Future already done")
            self._result = result
            self._exception = exception
            self._done = True
            callbacks = list(self._callbacks)

        for callback in callbacks:
            callback(self)
        self._semaphore.release(1)

    def setResult(self, result) -> None:
        self._finish(result, None)

    def setFailed(self, exception: BaseException) -> None:
        self._finish(None, exception)

    def then(self, callback: Callable[['Future'], None]) -> 'Future':
        """ run `callback(self)` in the finishing thread, or immediately if already done """
        with QMutexLocker(self._mutex):
            if not self._done:
                self._callbacks.append(callback)
                return self
        callback(self)
        return self

    def wait(self, timeoutMs: int = -1) -> bool:
        """ block until done; the semaphore is handed back so later waits return at once """
        if not self._semaphore.tryAcquire(1, timeoutMs):
            return False
        self._semaphore.release(1)
        return True

    def isDone(self) -> bool:
        return self._done

    def isFailed(self) -> bool:
        return self._done and self._exception is not None

    def getException(self) -> Optional[BaseException]:
        return self._exception

    def getResult(self) -> Any:
        return self._result

    def result(self) -> Any:
        """ wait, then return the value or raise `FutureFailed` """
        self.wait()
        if self._exception is not None:
            raise FutureFailed(self._exception)
        return self._result

    @staticmethod
    def gather(futures: Sequence['Future']) -> List[Any]:
        """
        Wait for every future; results keep the input order.

        Raises `GatheredFutureFailed` listing every failed future once all are done.
        """
        for future in futures:
            future.wait()

        failures = [(f, f.getException()) for f in futures if f.isFailed()]
        if failures:
            raise GatheredFutureFailed(failures)
        return [f.getResult() for f in futures]

    def __repr__(self):
        state = "failed" if self.isFailed() else "done" if self._done else "pending"
        return f"Future({self.name!r}, {state})"
