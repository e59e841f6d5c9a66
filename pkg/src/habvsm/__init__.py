"""Deterministic desk-scale habitat autonomy stack.

Subsystems: habitat power simulation, publish/subscribe software bus,
time-slotted load scheduler, hierarchical plan executive, limit-test fault
isolation against a dependency matrix, component-graph impact reasoning,
cluster-based anomaly detection, discrete mode estimation, and the
orchestration loop that wires them together.
"""

__version__ = "0.1.0"
