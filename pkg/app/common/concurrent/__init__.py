from .future import Future, FutureFailed, GatheredFutureFailed
from .task_manager import TaskExecutor
