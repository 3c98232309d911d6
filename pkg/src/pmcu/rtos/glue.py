"""Port layer binding the demo kernel to the machine's common backends."""

from ..core import Machine, SchedulerHooks


def task_create(m: Machine, entry, priority, stack_size, name, args):
    return m.task_create(entry, priority, stack_size, name, args)


def enter_critical(m: Machine):
    m.disable_irq()


def exit_critical(m: Machine):
    m.enable_irq()


def yield_to(m: Machine, tid):
    m.yield_to(tid)


def block(m: Machine, reason):
    m.block(reason)


def wake(m: Machine, tid):
    m.wake(tid)


def preempt_point(m: Machine):
    m.preempt_point()


def hooks(kernel) -> SchedulerHooks:
    return SchedulerHooks(
        on_tick=lambda m: kernel.tick(),               # systick handler
        on_task_exit=lambda m, tid: kernel.select(),
        on_idle=lambda m: kernel.has_timed_waiters(),
        on_start=lambda m: kernel.select(),
        on_block=lambda m, tid: kernel.select(),
        on_wake=lambda m, tid: kernel.make_ready(tid),
        on_preempt=lambda m: kernel.preempt_target(),
    )


def start(kernel, m: Machine):
    return m.start(hooks(kernel))
