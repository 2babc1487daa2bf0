"""Condition monitoring for human-multi-robot teams.

Subpackages:
  model      - timestamps, stream descriptors, stamped messages
  bus        - pub/sub broker, wire protocol, topic matching
  syncfilter - multi-stream time synchronization
  bag        - record/replay file format (.cmbag)
  features   - windowed statistics, baseline deltas, robot features
  sim        - deterministic fleet and physiology generators
  cli        - the `condmon` command line tool
"""

__version__ = "0.1.0"
