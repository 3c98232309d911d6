from .kernel import FOREVER, PRIORITIES, Kernel
from .sync import MessageQueue, Semaphore

__all__ = ["FOREVER", "PRIORITIES", "Kernel", "MessageQueue", "Semaphore"]
