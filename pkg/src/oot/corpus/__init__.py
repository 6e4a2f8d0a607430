"""The bundled example programs, loaded as verbatim source text."""

from importlib import resources

COUNTDOWN = "countdown.wast"
TEMP_BROADCAST = "temp_broadcast.wast"
TEMP_MONITOR = "temp_monitor.wast"
TEMP_MONITOR_FIXED = "temp_monitor_fixed.wast"

ALL = (COUNTDOWN, TEMP_BROADCAST, TEMP_MONITOR, TEMP_MONITOR_FIXED)


def load(name: str) -> str:
    return resources.files(__package__).joinpath(name).read_text("utf-8")


def countdown_source(arg: int | None = None) -> str:
    """Countdown program, optionally with the recursion argument patched.

    The stock source calls the recursive function with a constant 2; the
    scaling scenarios swap in other arguments without disturbing any line
    numbering.
    """
    text = load(COUNTDOWN)
    if arg is not None:
        assert text.count("(i64.const 2)") == 1
        text = text.replace("(i64.const 2)", f"(i64.const {arg})")
    return text
