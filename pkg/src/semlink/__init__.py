"""semlink: link-level simulation of priority-scheduled semantic image transmission."""

__version__ = "0.1.0"
