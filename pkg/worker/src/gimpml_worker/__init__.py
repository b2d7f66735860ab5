"""Reference external inference worker for the GML1 wire protocol.

Speaks the same framed TCP protocol as the engine's stub server and mirrors
its deterministic task definitions, so either endpoint can stand in for the
other.  Real pretrained models can replace individual handlers in
:mod:`gimpml_worker.tasks` without touching the protocol layer.
"""

from .server import WorkerServer, main
from .tasks import HANDLERS, TASK_NAMES, TaskRejected, dispatch
from .wire import FramingError, Request

__version__ = "0.1.0"
