"""MiniPrisma: a two-tier dApp calculus and its guard-inserting compiler to a state machine."""

__version__ = "0.1.0"
