"""tandem: bidirectional code/GUI synchronization for notebook documents."""

__version__ = "0.1.0"
