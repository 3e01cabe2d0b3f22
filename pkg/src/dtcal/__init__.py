"""dtcal: parse, execute, explore and verify timed mobile process
specifications."""

__version__ = "0.1.0"
